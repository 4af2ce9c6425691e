//! Pauli-string Hamiltonians and the `.ham` text format.
//!
//! Basis-state index `i` has binary expansion `b_{n-1} ... b_1 b_0` where
//! `b_q` is the state of qubit `q`. Bitstrings in metadata list qubit 0
//! leftmost.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PshoError, Result};

/// Terms whose merged coefficient falls below this are dropped.
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Default qubit limit for dense realizations.
pub const DEFAULT_ORACLE_LIMIT: usize = 14;

/// Largest register the bitmask representation supports.
pub const MAX_QUBITS: usize = 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn from_char(c: char) -> Option<Axis> {
        match c {
            'X' => Some(Axis::X),
            'Y' => Some(Axis::Y),
            'Z' => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// Bitmask form of a Pauli string: `P|i> = phase(i) |i ^ x>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct PauliMasks {
    /// Qubits carrying X or Y.
    pub x: u64,
    /// Qubits carrying Z or Y.
    pub z: u64,
    pub y_count: u32,
}

impl PauliMasks {
    pub fn from_factors(factors: &[(usize, Axis)]) -> Self {
        let mut m = PauliMasks::default();
        for &(q, axis) in factors {
            let bit = 1u64 << q;
            match axis {
                Axis::X => m.x |= bit,
                Axis::Y => {
                    m.x |= bit;
                    m.z |= bit;
                    m.y_count += 1;
                }
                Axis::Z => m.z |= bit,
            }
        }
        m
    }

    /// Shift every factor up by `offset` qubits.
    pub fn shifted(self, offset: usize) -> Self {
        PauliMasks { x: self.x << offset, z: self.z << offset, y_count: self.y_count }
    }

    pub fn support(self) -> u64 {
        self.x | self.z
    }

    /// Phase picked up by basis state `i`: `i^{y_count} (-1)^{popcount(i & z)}`.
    #[inline]
    pub fn phase(self, i: usize) -> Complex64 {
        let sign = if ((i as u64) & self.z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        let base = match self.y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        base * sign
    }

    /// Whether the matrix of the string is real (even number of Y factors).
    pub fn is_real(self) -> bool {
        self.y_count.is_multiple_of(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    coefficient: f64,
    /// Sorted by qubit, at most one factor per qubit.
    factors: Vec<(usize, Axis)>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, mut factors: Vec<(usize, Axis)>) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(PshoError::InvalidArgument(format!("non-finite coefficient {coefficient}")));
        }
        factors.sort_unstable();
        if let Some(w) = factors.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(PshoError::InvalidArgument(format!("qubit {} appears twice in a term", w[0].0)));
        }
        if let Some(&(q, _)) = factors.last() {
            if q >= MAX_QUBITS {
                return Err(PshoError::QubitOutOfRange { qubit: q, n_qubits: MAX_QUBITS });
            }
        }
        Ok(PauliTerm { coefficient, factors })
    }

    pub fn identity(coefficient: f64) -> Self {
        PauliTerm { coefficient, factors: Vec::new() }
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn factors(&self) -> &[(usize, Axis)] {
        &self.factors
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn masks(&self) -> PauliMasks {
        PauliMasks::from_factors(&self.factors)
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.factors.last().map(|f| f.0)
    }

    pub fn label(&self) -> String {
        if self.factors.is_empty() {
            return "I".to_string();
        }
        self.factors
            .iter()
            .map(|(q, a)| format!("{}{}", a.as_char(), q))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
    metadata: BTreeMap<String, String>,
}

impl Hamiltonian {
    /// Build a Hamiltonian in canonical form: duplicate factor sets merged,
    /// negligible terms dropped, terms sorted by factor set.
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(PshoError::InvalidArgument(format!("n_qubits must be in 1..={MAX_QUBITS}")));
        }
        for t in &terms {
            if let Some(q) = t.max_qubit() {
                if q >= n_qubits {
                    return Err(PshoError::QubitOutOfRange { qubit: q, n_qubits });
                }
            }
        }
        Ok(Hamiltonian { n_qubits, terms: canonicalize(terms), metadata: BTreeMap::new() })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta(key).and_then(|v| v.trim().parse().ok())
    }

    pub fn hf_bitstring(&self) -> Option<&str> {
        self.meta("hf_bitstring")
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.terms.iter().find(|t| t.is_identity()).map_or(0.0, |t| t.coefficient)
    }

    /// Sum of absolute coefficients, an upper bound on the spectral radius.
    pub fn one_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }

    /// Whether every term has a real matrix, making the Hamiltonian real symmetric.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| t.masks().is_real())
    }

    /// Hash of the canonical terms, used to key spectral caches.
    pub fn digest(&self) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        self.n_qubits.hash(&mut hasher);
        for t in &self.terms {
            t.coefficient.to_bits().hash(&mut hasher);
            t.factors.hash(&mut hasher);
        }
        hasher.finish()
    }

    /// Add `eps` to the identity coefficient, shifting every eigenvalue by `eps`.
    pub fn offset(&self, eps: f64) -> Hamiltonian {
        let mut terms = self.terms.clone();
        terms.push(PauliTerm::identity(eps));
        Hamiltonian { n_qubits: self.n_qubits, terms: canonicalize(terms), metadata: self.metadata.clone() }
    }

    /// `sum_i coeff_i <b|P_i|b>` for a computational basis state.
    pub fn basis_expectation(&self, index: usize) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.masks().x == 0)
            .map(|t| t.coefficient * t.masks().phase(index).re)
            .sum()
    }

    pub fn dense_matrix(&self) -> Result<HermitianMatrix> {
        self.dense_matrix_with_limit(DEFAULT_ORACLE_LIMIT)
    }

    pub fn dense_matrix_with_limit(&self, limit: usize) -> Result<HermitianMatrix> {
        if self.n_qubits > limit {
            return Err(PshoError::OracleLimit { n_qubits: self.n_qubits, limit });
        }
        let dim = self.dim();
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for t in &self.terms {
            let masks = t.masks();
            for col in 0..dim {
                let row = col ^ masks.x as usize;
                m[(row, col)] += masks.phase(col) * t.coefficient;
            }
        }
        HermitianMatrix::new(m)
    }

    /// Render in the `.ham` format. Coefficients carry 17 significant digits so
    /// the text parses back to identical values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# n_qubits={}", self.n_qubits);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        for t in &self.terms {
            let _ = write!(out, "{:.16e}", t.coefficient);
            for (q, a) in &t.factors {
                let _ = write!(out, " {}{}", a.as_char(), q);
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Hamiltonian {
    type Err = PshoError;

    fn from_str(s: &str) -> Result<Self> {
        parse_hamiltonian(s)
    }
}

fn canonicalize(terms: Vec<PauliTerm>) -> Vec<PauliTerm> {
    let mut merged: BTreeMap<Vec<(usize, Axis)>, f64> = BTreeMap::new();
    for t in terms {
        *merged.entry(t.factors).or_insert(0.0) += t.coefficient;
    }
    merged
        .into_iter()
        .filter(|(_, c)| c.abs() >= DROP_TOLERANCE)
        .map(|(factors, coefficient)| PauliTerm { coefficient, factors })
        .collect()
}

/// Parse the `.ham` text format.
pub fn parse_hamiltonian(text: &str) -> Result<Hamiltonian> {
    let mut metadata = BTreeMap::new();
    let mut n_qubits: Option<usize> = None;
    let mut terms: Vec<(usize, PauliTerm)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| PshoError::Parse { line: line_no, message };
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, value)) = rest.split_once('=') else {
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key == "n_qubits" {
                if n_qubits.is_some() {
                    return Err(err("duplicate metadata key n_qubits".into()));
                }
                let n = value.parse::<usize>().map_err(|_| err(format!("bad n_qubits {value:?}")))?;
                n_qubits = Some(n);
            } else if metadata.insert(key.clone(), value).is_some() {
                return Err(err(format!("duplicate metadata key {key}")));
            }
            continue;
        }

        let mut tokens = line.split_whitespace();
        let coeff_tok = tokens.next().expect("non-empty line has a token");
        let coefficient = parse_coefficient(coeff_tok).map_err(err)?;
        let mut factors = Vec::new();
        for tok in tokens {
            let mut chars = tok.chars();
            let axis = chars
                .next()
                .and_then(Axis::from_char)
                .ok_or_else(|| err(format!("malformed Pauli factor {tok:?}")))?;
            let qubit: usize = chars
                .as_str()
                .parse()
                .map_err(|_| err(format!("malformed qubit index in {tok:?}")))?;
            if factors.iter().any(|&(q, _)| q == qubit) {
                return Err(err(format!("qubit {qubit} repeated in term")));
            }
            factors.push((qubit, axis));
        }
        let term = PauliTerm::new(coefficient, factors).map_err(|e| err(e.to_string()))?;
        terms.push((line_no, term));
    }

    let n_qubits = n_qubits.ok_or(PshoError::Parse { line: 0, message: "missing n_qubits metadata".into() })?;
    for (line, t) in &terms {
        if let Some(q) = t.max_qubit() {
            if q >= n_qubits {
                return Err(PshoError::Parse {
                    line: *line,
                    message: format!("qubit index {q} >= n_qubits {n_qubits}"),
                });
            }
        }
    }
    let mut h = Hamiltonian::new(n_qubits, terms.into_iter().map(|(_, t)| t).collect())?;
    h.metadata = metadata;
    Ok(h)
}

fn parse_coefficient(tok: &str) -> std::result::Result<f64, String> {
    if tok.contains(['j', 'i', 'J']) && !tok.eq_ignore_ascii_case("inf") && !tok.eq_ignore_ascii_case("infinity") {
        return Err(format!("non-real coefficient {tok:?}"));
    }
    let v: f64 = tok.parse().map_err(|_| format!("malformed coefficient {tok:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite coefficient {tok:?}"));
    }
    Ok(v)
}

pub fn serialize_hamiltonian(h: &Hamiltonian) -> String {
    h.to_text()
}

pub fn offset_hamiltonian(h: &Hamiltonian, eps: f64) -> Hamiltonian {
    h.offset(eps)
}

/// Dense Hermitian matrix realization of a Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(PshoError::DimensionMismatch { left: m.nrows(), right: m.ncols() });
        }
        let dev = hermitian_deviation(&m);
        if dev > Self::TOLERANCE {
            return Err(PshoError::InvalidArgument(format!("matrix is not Hermitian (deviation {dev:e})")));
        }
        Ok(HermitianMatrix(m))
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Largest elementwise `|m - m^dagger|`.
pub fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}
