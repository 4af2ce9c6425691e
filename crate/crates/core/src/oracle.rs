//! Exact dense reference: eigendecomposition and spectral evaluation of
//! sine filters, moments and energies.
//!
//! Spectra for registers above [`FULL_DIAGONALIZATION_DIM`] amplitudes are
//! computed on the smallest invariant subspace containing the support of the
//! state being evolved, found by walking the nonzero matrix elements of H.
//! For particle-conserving chemistry Hamiltonians and a basis reference this
//! is one symmetry sector of a few dozen states.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{PshoError, Result};
use crate::extended::ExtendedReal;
use crate::hamiltonian::{Hamiltonian, DEFAULT_ORACLE_LIMIT};
use crate::sigma::{MomentTable, NoiseSpec};
use crate::evolution::EvolutionMode;
use crate::statevector::StateVector;

/// Registers up to this many amplitudes are diagonalized in full.
pub const FULL_DIAGONALIZATION_DIM: usize = 256;

/// Amplitudes below this magnitude do not seed the invariant subspace.
const SUPPORT_TOLERANCE: f64 = 1e-14;

/// Matrix elements below this magnitude are treated as structural zeros.
const ELEMENT_TOLERANCE: f64 = 1e-12;

/// Weight outside a subspace tolerated when projecting onto it.
const LEAK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending.
    eigenvalues: Vec<f64>,
    /// Orthonormal columns, in subspace coordinates.
    eigenvectors: DMatrix<Complex64>,
    /// Basis indices spanning the subspace; `None` for the full register.
    basis: Option<Vec<usize>>,
    n_qubits: usize,
    digest: u64,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    pub fn basis(&self) -> Option<&[usize]> {
        self.basis.as_deref()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_full(&self) -> bool {
        self.basis.is_none()
    }

    /// Eigenvector `i` as a register state.
    pub fn eigenstate(&self, i: usize) -> StateVector {
        let col: Vec<Complex64> = self.eigenvectors.column(i).iter().copied().collect();
        StateVector::from_amplitudes(self.n_qubits, self.expand(&col)).expect("dimension is consistent")
    }

    /// Coordinates of `amps` in the subspace basis.
    fn project(&self, amps: &[Complex64]) -> Result<DVector<Complex64>> {
        if amps.len() != 1usize << self.n_qubits {
            return Err(PshoError::DimensionMismatch { left: amps.len(), right: 1 << self.n_qubits });
        }
        match &self.basis {
            None => Ok(DVector::from_column_slice(amps)),
            Some(basis) => {
                let inside: f64 = basis.iter().map(|&i| amps[i].norm_sqr()).sum();
                let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                if total - inside > LEAK_TOLERANCE * total.max(1.0) {
                    return Err(PshoError::OutsideSubspace(total - inside));
                }
                Ok(DVector::from_iterator(basis.len(), basis.iter().map(|&i| amps[i])))
            }
        }
    }

    fn expand(&self, coords: &[Complex64]) -> Vec<Complex64> {
        match &self.basis {
            None => coords.to_vec(),
            Some(basis) => {
                let mut out = vec![Complex64::new(0.0, 0.0); 1 << self.n_qubits];
                for (&i, &a) in basis.iter().zip(coords) {
                    out[i] = a;
                }
                out
            }
        }
    }

    /// Overlaps `c_i = <Psi_i|phi0>`.
    pub fn overlaps(&self, phi0: &StateVector) -> Result<Vec<Complex64>> {
        let v = self.project(phi0.amplitudes())?;
        Ok(self.eigenvectors.ad_mul(&v).iter().copied().collect())
    }

    /// `f(H)` applied to a register amplitude slice in place.
    pub fn apply_function_in_place(&self, amps: &mut [Complex64], f: impl Fn(f64) -> Complex64) -> Result<()> {
        let v = self.project(amps)?;
        let mut coeffs = self.eigenvectors.ad_mul(&v);
        for (c, &e) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= f(e);
        }
        let out = &self.eigenvectors * coeffs;
        match &self.basis {
            None => amps.copy_from_slice(out.as_slice()),
            Some(basis) => {
                for (&i, &a) in basis.iter().zip(out.iter()) {
                    amps[i] = a;
                }
            }
        }
        Ok(())
    }

    pub fn apply_function(&self, state: &StateVector, f: impl Fn(f64) -> Complex64) -> Result<StateVector> {
        let mut out = state.clone();
        self.apply_function_in_place(out.amplitudes_mut(), f)?;
        Ok(out)
    }

    /// Spectral weights of `phi0`: eigenvalues with `|c_i|^2`.
    pub fn weights(&self, phi0: &StateVector) -> Result<SpectralWeights> {
        let c = self.overlaps(phi0)?;
        Ok(SpectralWeights {
            energies: self.eigenvalues.clone(),
            weights: c.iter().map(|x| x.norm_sqr()).collect(),
        })
    }
}

/// A reference state seen through the spectrum: `sum_i w_i delta(E - E_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralWeights {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean_energy(&self) -> f64 {
        self.energies.iter().zip(&self.weights).map(|(e, w)| e * w).sum::<f64>() / self.total()
    }

    /// Pairs with weight above `threshold`.
    pub fn overlapped(&self, threshold: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.energies.iter().zip(&self.weights).filter(move |(_, &w)| w > threshold).map(|(&e, &w)| (e, w))
    }

    pub fn moments(&self, tau: f64, m: usize) -> (f64, f64) {
        let mut c = 0.0;
        let mut h = 0.0;
        for (&e, &w) in self.energies.iter().zip(&self.weights) {
            let cs = (2.0 * e * tau * m as f64).cos();
            c += w * cs;
            h += w * e * cs;
        }
        (c, h)
    }

    /// `<sin^{2n}(H tau)>` in double precision.
    pub fn sin_power(&self, tau: f64, n: usize) -> f64 {
        self.energies.iter().zip(&self.weights).map(|(&e, &w)| w * (e * tau).sin().powi(2 * n as i32)).sum()
    }

    /// `<sin^{2n}(H tau)>` without underflow.
    pub fn sin_power_extended(&self, tau: f64, n: usize) -> ExtendedReal {
        let precision = 128;
        let mut acc = ExtendedReal::zero(precision);
        for (&e, &w) in self.energies.iter().zip(&self.weights) {
            let s2 = ExtendedReal::from_f64((e * tau).sin().powi(2), precision);
            acc = acc.add(&s2.powi(n as u64).mul(&ExtendedReal::from_f64(w, precision)));
        }
        acc
    }

    /// Largest `sin^2(E_i tau)` over states with weight above `threshold`.
    fn max_sin2(&self, tau: f64, threshold: f64) -> f64 {
        self.overlapped(threshold).map(|(e, _)| (e * tau).sin().powi(2)).fold(0.0, f64::max)
    }

    /// Energy of `sin^n(H tau) phi0`, computed from weights rescaled by the
    /// dominant sine so large powers do not underflow.
    pub fn energy_of_power(&self, tau: f64, n: usize) -> Result<f64> {
        let smax = self.max_sin2(tau, 0.0);
        if smax == 0.0 && n > 0 {
            return Err(PshoError::Underflow(0.0));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&e, &w) in self.energies.iter().zip(&self.weights) {
            let r = if n == 0 { 1.0 } else { ((e * tau).sin().powi(2) / smax).powi(n as i32) };
            num += w * r * e;
            den += w * r;
        }
        if den == 0.0 {
            return Err(PshoError::Underflow(0.0));
        }
        Ok(num / den)
    }

    pub fn moment_table(&self, tau: f64, max_m: usize, h0: f64) -> MomentTable {
        let mut c = Vec::with_capacity(max_m + 1);
        let mut h = Vec::with_capacity(max_m + 1);
        c.push(1.0);
        h.push(h0);
        for m in 1..=max_m {
            let (cm, hm) = self.moments(tau, m);
            c.push(cm);
            h.push(hm);
        }
        MomentTable::new(tau, c, h, NoiseSpec::ExactValue, EvolutionMode::Exact)
    }
}

/// Transitions of H grouped by flip mask, so that terms mapping the same pair
/// of basis states are summed before testing for a zero element.
struct FlipGroups {
    groups: Vec<(usize, Vec<(f64, crate::hamiltonian::PauliMasks)>)>,
}

impl FlipGroups {
    fn new(h: &Hamiltonian) -> Self {
        let mut map: BTreeMap<u64, Vec<(f64, crate::hamiltonian::PauliMasks)>> = BTreeMap::new();
        for t in h.terms() {
            let m = t.masks();
            map.entry(m.x).or_default().push((t.coefficient(), m));
        }
        FlipGroups { groups: map.into_iter().map(|(x, v)| (x as usize, v)).collect() }
    }

    /// Nonzero elements `<i ^ x|H|i>` of column `i`.
    fn column(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.groups.iter().filter_map(move |(x, terms)| {
            let v: Complex64 = terms.iter().map(|(c, m)| m.phase(i) * *c).sum();
            (v.norm() > ELEMENT_TOLERANCE || *x == 0).then_some((i ^ x, v))
        })
    }
}

/// Smallest set of basis states closed under H containing `seeds`, sorted.
pub fn invariant_subspace(h: &Hamiltonian, seeds: &[usize]) -> Vec<usize> {
    let groups = FlipGroups::new(h);
    let mut seen: HashSet<usize> = HashSet::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if seen.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        for (j, _) in groups.column(i) {
            if seen.insert(j) {
                queue.push_back(j);
            }
        }
    }
    let mut basis: Vec<usize> = seen.into_iter().collect();
    basis.sort_unstable();
    basis
}

fn restricted_matrix(h: &Hamiltonian, basis: &[usize]) -> DMatrix<Complex64> {
    let groups = FlipGroups::new(h);
    let position: HashMap<usize, usize> = basis.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut m = DMatrix::<Complex64>::zeros(basis.len(), basis.len());
    for (col, &i) in basis.iter().enumerate() {
        for (j, v) in groups.column(i) {
            let row = *position.get(&j).expect("basis is closed under H");
            m[(row, col)] += v;
        }
    }
    m
}

fn eigen(m: DMatrix<Complex64>, real: bool) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = m.nrows();
    let (values, vectors) = if real {
        let re = m.map(|z| z.re);
        let e = SymmetricEigen::new(re);
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors.map(|x| Complex64::new(x, 0.0)))
    } else {
        let e = SymmetricEigen::new(m);
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    (sorted_values, sorted_vectors)
}

/// Full spectrum, ascending. Limited to [`DEFAULT_ORACLE_LIMIT`] qubits.
pub fn diagonalize(h: &Hamiltonian) -> Result<Spectrum> {
    diagonalize_with_limit(h, DEFAULT_ORACLE_LIMIT)
}

pub fn diagonalize_with_limit(h: &Hamiltonian, limit: usize) -> Result<Spectrum> {
    let m = h.dense_matrix_with_limit(limit)?.into_inner();
    let (eigenvalues, eigenvectors) = eigen(m, h.is_real());
    Ok(Spectrum { eigenvalues, eigenvectors, basis: None, n_qubits: h.n_qubits(), digest: h.digest() })
}

/// Spectrum on the invariant subspace generated by `seeds`.
pub fn diagonalize_subspace(h: &Hamiltonian, seeds: &[usize]) -> Result<Spectrum> {
    if let Some(&bad) = seeds.iter().find(|&&s| s >= h.dim()) {
        return Err(PshoError::InvalidArgument(format!("basis index {bad} out of range")));
    }
    let basis = invariant_subspace(h, seeds);
    if basis.len() > 1 << DEFAULT_ORACLE_LIMIT {
        return Err(PshoError::OracleLimit { n_qubits: h.n_qubits(), limit: DEFAULT_ORACLE_LIMIT });
    }
    let m = restricted_matrix(h, &basis);
    let (eigenvalues, eigenvectors) = eigen(m, h.is_real());
    Ok(Spectrum { eigenvalues, eigenvectors, basis: Some(basis), n_qubits: h.n_qubits(), digest: h.digest() })
}

type CacheKey = (u64, u64);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<Spectrum>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<Spectrum>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn cached(key: CacheKey, build: impl FnOnce() -> Result<Spectrum>) -> Result<Arc<Spectrum>> {
    if let Some(s) = cache().read().expect("spectral cache poisoned").get(&key) {
        return Ok(Arc::clone(s));
    }
    let s = Arc::new(build()?);
    let mut w = cache().write().expect("spectral cache poisoned");
    Ok(Arc::clone(w.entry(key).or_insert(s)))
}

/// Cached spectrum able to evolve any state supported on `amps`: the full
/// register when small, otherwise the invariant subspace of the support.
pub fn spectrum_for_amplitudes(h: &Hamiltonian, amps: &[Complex64]) -> Result<Arc<Spectrum>> {
    if amps.len() != h.dim() {
        return Err(PshoError::DimensionMismatch { left: amps.len(), right: h.dim() });
    }
    let digest = h.digest();
    if h.dim() <= FULL_DIAGONALIZATION_DIM {
        return cached((digest, 0), || diagonalize(h));
    }
    let support: Vec<usize> = amps.iter().enumerate().filter(|(_, a)| a.norm() > SUPPORT_TOLERANCE).map(|(i, _)| i).collect();
    let basis = invariant_subspace(h, &support);
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    basis.hash(&mut hasher);
    let key = (digest, hasher.finish() | 1);
    cached(key, || diagonalize_subspace(h, &basis))
}

pub fn spectrum_for_state(h: &Hamiltonian, phi0: &StateVector) -> Result<Arc<Spectrum>> {
    if phi0.n_qubits() != h.n_qubits() {
        return Err(PshoError::DimensionMismatch { left: phi0.n_qubits(), right: h.n_qubits() });
    }
    spectrum_for_amplitudes(h, phi0.amplitudes())
}

pub fn overlaps(phi0: &StateVector, s: &Spectrum) -> Result<Vec<Complex64>> {
    s.overlaps(phi0)
}

pub fn spectral_weights(h: &Hamiltonian, phi0: &StateVector) -> Result<SpectralWeights> {
    spectrum_for_state(h, phi0)?.weights(phi0)
}

/// Normalized `sin^n(H tau)|phi0>` and its squared norm before normalization.
pub fn exact_phi_n(h: &Hamiltonian, phi0: &StateVector, tau: f64, n: usize) -> Result<(StateVector, ExtendedReal)> {
    let s = spectrum_for_state(h, phi0)?;
    let w = s.weights(phi0)?;
    let norm2 = w.sin_power_extended(tau, n);
    if norm2.is_zero() {
        return Err(PshoError::Underflow(0.0));
    }
    // rescale by the dominant overlapped |sin| so amplitudes stay representable
    let smax = w.max_sin2(tau, 0.0).sqrt();
    let mut state = s.apply_function(phi0, |e| {
        let r = if n == 0 { 1.0 } else { ((e * tau).sin() / smax).powi(n as i32) };
        Complex64::new(r, 0.0)
    })?;
    let norm = state.normalize();
    if norm == 0.0 {
        return Err(PshoError::Underflow(0.0));
    }
    Ok((state, norm2))
}

pub fn exact_energy_phi_n(h: &Hamiltonian, phi0: &StateVector, tau: f64, n: usize) -> Result<f64> {
    spectral_weights(h, phi0)?.energy_of_power(tau, n)
}

/// Moments from the spectral forms, with `h_0 = <phi0|H|phi0>`.
pub fn exact_moments(h: &Hamiltonian, phi0: &StateVector, tau: f64, max_m: usize) -> Result<MomentTable> {
    let w = spectral_weights(h, phi0)?;
    let h0 = phi0.expectation(h, 0)?;
    Ok(w.moment_table(tau, max_m, h0))
}

/// `<phi0|sin^{2n}(H tau)|phi0>`.
pub fn direct_success_probability_exact(h: &Hamiltonian, phi0: &StateVector, tau: f64, n: usize) -> Result<f64> {
    Ok(spectral_weights(h, phi0)?.sin_power(tau, n).clamp(0.0, 1.0))
}
