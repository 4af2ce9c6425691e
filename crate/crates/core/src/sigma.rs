//! The single-ancilla Σ-block and the moments
//! `c_m = <cos(2 H tau m)>` and `h_m = <H cos(2 H tau m)>` it measures.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PshoError, Result};
use crate::evolution::{apply_evolution, EvolutionMode};
use crate::hamiltonian::Hamiltonian;
use crate::statevector::{Control, OneQubitGate, StateVector};

/// Ancilla weight in |1> tolerated at the start of a Σ-block.
pub const ANCILLA_LEAK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    ExactValue,
    Shots { count: u64, seed: u64 },
    Quantize { digits: u32 },
    ShotsThenQuantize { count: u64, seed: u64, digits: u32 },
}

impl NoiseSpec {
    pub fn quantize(digits: u32) -> Result<Self> {
        NoiseSpec::Quantize { digits }.validated()
    }

    pub fn shots(count: u64, seed: u64) -> Result<Self> {
        NoiseSpec::Shots { count, seed }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let (count, digits) = match self {
            NoiseSpec::ExactValue => (1, 1),
            NoiseSpec::Shots { count, .. } => (count, 1),
            NoiseSpec::Quantize { digits } => (1, digits),
            NoiseSpec::ShotsThenQuantize { count, digits, .. } => (count, digits),
        };
        if count == 0 {
            return Err(PshoError::InvalidArgument("shot count must be at least 1".into()));
        }
        if digits == 0 || digits > 15 {
            return Err(PshoError::InvalidArgument(format!("quantization digits must be in 1..=15, got {digits}")));
        }
        Ok(self)
    }

    /// Per-moment error scale used in the amplification bound. Shot noise
    /// counts five binomial standard errors of a unit-range observable.
    pub fn delta_max(&self) -> f64 {
        let shots = |count: u64| 5.0 / (count as f64).sqrt();
        let rounding = |digits: u32| 0.5 * 10f64.powi(-(digits as i32));
        match *self {
            NoiseSpec::ExactValue => 4.0 * f64::EPSILON,
            NoiseSpec::Shots { count, .. } => shots(count),
            NoiseSpec::Quantize { digits } => rounding(digits),
            NoiseSpec::ShotsThenQuantize { count, digits, .. } => shots(count) + rounding(digits),
        }
    }

    fn shot_config(&self) -> Option<(u64, u64)> {
        match *self {
            NoiseSpec::Shots { count, seed } | NoiseSpec::ShotsThenQuantize { count, seed, .. } => Some((count, seed)),
            _ => None,
        }
    }

    fn digits(&self) -> Option<u32> {
        match *self {
            NoiseSpec::Quantize { digits } | NoiseSpec::ShotsThenQuantize { digits, .. } => Some(digits),
            _ => None,
        }
    }

    pub fn uses_shots(&self) -> bool {
        self.shot_config().is_some()
    }

    /// Rounding step applied to a finished value.
    pub fn quantize_value(&self, x: f64) -> f64 {
        match self.digits() {
            Some(d) => {
                let scale = 10f64.powi(d as i32);
                (x * scale).round() / scale
            }
            None => x,
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::ExactValue => write!(f, "exact"),
            NoiseSpec::Shots { count, seed } => write!(f, "shots:{count}:{seed}"),
            NoiseSpec::Quantize { digits } => write!(f, "quantize:{digits}"),
            NoiseSpec::ShotsThenQuantize { count, seed, digits } => write!(f, "shots:{count}:{seed}:quantize:{digits}"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = PshoError;

    /// `exact`, `quantize:D`, `shots:N:SEED` or `shots:N:SEED:quantize:D`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || PshoError::InvalidArgument(format!("invalid noise spec {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let int = |p: &str| p.parse::<u64>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            ["exact"] => NoiseSpec::ExactValue,
            ["quantize"] => NoiseSpec::Quantize { digits: 6 },
            ["quantize", d] => NoiseSpec::Quantize { digits: int(d)? as u32 },
            ["shots", n, seed] => NoiseSpec::Shots { count: int(n)?, seed: int(seed)? },
            ["shots", n, seed, "quantize", d] => {
                NoiseSpec::ShotsThenQuantize { count: int(n)?, seed: int(seed)?, digits: int(d)? as u32 }
            }
            _ => return Err(bad()),
        };
        spec.validated()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub tau: f64,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub noise: NoiseSpec,
    pub mode: EvolutionMode,
}

impl MomentTable {
    pub fn new(tau: f64, c: Vec<f64>, h: Vec<f64>, noise: NoiseSpec, mode: EvolutionMode) -> Self {
        assert_eq!(c.len(), h.len(), "moment arrays differ in length");
        assert!(!c.is_empty(), "moment table needs the m = 0 entry");
        MomentTable { tau, c, h, noise, mode }
    }

    pub fn max_m(&self) -> usize {
        self.c.len() - 1
    }

    /// Apply moment-level rounding to a copy; `m = 0` is classical and kept.
    pub fn quantized(&self, digits: u32) -> MomentTable {
        let spec = NoiseSpec::Quantize { digits };
        let mut out = self.clone();
        for m in 1..out.c.len() {
            out.c[m] = spec.quantize_value(out.c[m]);
            out.h[m] = spec.quantize_value(out.h[m]);
        }
        out.noise = spec;
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# tau={:.17e}\n# noise={}\n# mode={}\nm,c_m,h_m\n", self.tau, self.noise, self.mode);
        for (m, (c, h)) in self.c.iter().zip(&self.h).enumerate() {
            out.push_str(&format!("{m},{c:.17e},{h:.17e}\n"));
        }
        out
    }
}

/// Bring the ancilla (top qubit, in |0>) and register `phi0` to
/// `|0> sin(H t)|phi0> + |1> cos(H t)|phi0>` up to a global phase.
pub fn apply_sigma_block(state: &mut StateVector, h: &Hamiltonian, t: f64, mode: EvolutionMode) -> Result<()> {
    if state.n_qubits() != h.n_qubits() + 1 {
        return Err(PshoError::DimensionMismatch { left: state.n_qubits(), right: h.n_qubits() + 1 });
    }
    let anc = h.n_qubits();
    let leak = 1.0 - state.probability_zero(anc)? / state.norm_sqr();
    if leak > ANCILLA_LEAK_TOLERANCE {
        return Err(PshoError::AncillaNotReset(leak));
    }
    let (hd, sd) = (OneQubitGate::hadamard(), OneQubitGate::s_dagger());
    state.apply_one_qubit_gate(anc, &hd)?;
    state.apply_one_qubit_gate(anc, &sd)?;
    apply_evolution(state, h, t, mode, Some(Control::on_zero(anc)))?;
    apply_evolution(state, h, -t, mode, Some(Control::on_one(anc)))?;
    state.apply_one_qubit_gate(anc, &sd)?;
    state.apply_one_qubit_gate(anc, &hd)?;
    state.apply_one_qubit_gate(anc, &sd)?;
    Ok(())
}

/// Mean of `count` draws of +-1 with `P(+1) = (1 + e) / 2`.
pub fn shot_estimate<R: Rng + ?Sized>(e: f64, count: u64, rng: &mut R) -> f64 {
    let p = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
    let plus = Binomial::new(count, p).expect("valid binomial parameters").sample(rng);
    (2.0 * plus as f64 - count as f64) / count as f64
}

fn shot_rng(seed: u64, m: usize, term: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((m as u64) << 32) | term as u64);
    rng
}

/// `(c_m, h_m)` for one `m`. `m = 0` is evaluated classically and noise free.
pub fn moment_pair(
    h: &Hamiltonian,
    phi0: &StateVector,
    tau: f64,
    m: usize,
    mode: EvolutionMode,
    noise: NoiseSpec,
) -> Result<(f64, f64)> {
    if phi0.n_qubits() != h.n_qubits() {
        return Err(PshoError::DimensionMismatch { left: phi0.n_qubits(), right: h.n_qubits() });
    }
    if m == 0 {
        return Ok((1.0, phi0.expectation(h, 0)?));
    }
    let mut state = phi0.with_ancilla();
    apply_sigma_block(&mut state, h, tau * m as f64, mode)?;
    let anc = h.n_qubits();
    let identity = crate::hamiltonian::Hamiltonian::new(h.n_qubits(), vec![crate::hamiltonian::PauliTerm::identity(1.0)])?;
    let c_exact = state.expectation_with_ancilla(&identity, 0, Some(anc))?;
    let (c, hm) = match noise.shot_config() {
        None => (c_exact, state.expectation_with_ancilla(h, 0, Some(anc))?),
        Some((count, seed)) => {
            let c = shot_estimate(c_exact.clamp(-1.0, 1.0), count, &mut shot_rng(seed, m, 0));
            let per_term = state.term_expectations(h, 0, Some(anc))?;
            let hm = h
                .terms()
                .iter()
                .zip(per_term)
                .enumerate()
                .map(|(k, (t, e))| t.coefficient() * shot_estimate(e.clamp(-1.0, 1.0), count, &mut shot_rng(seed, m, k + 1)))
                .sum();
            (c, hm)
        }
    };
    Ok((noise.quantize_value(c), noise.quantize_value(hm)))
}

/// Moments for `m = 0..=max_m`, evaluated in parallel.
pub fn moment_table(
    h: &Hamiltonian,
    phi0: &StateVector,
    tau: f64,
    max_m: usize,
    mode: EvolutionMode,
    noise: NoiseSpec,
) -> Result<MomentTable> {
    if max_m == 0 {
        return Err(PshoError::InvalidArgument("moment table needs max_m >= 1".into()));
    }
    let noise = noise.validated()?;
    let pairs: Vec<(f64, f64)> =
        (0..=max_m).into_par_iter().map(|m| moment_pair(h, phi0, tau, m, mode, noise)).collect::<Result<_>>()?;
    let (c, hs) = pairs.into_iter().unzip();
    Ok(MomentTable::new(tau, c, hs, noise, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::parse_hamiltonian;
    use crate::oracle;
    use crate::statevector::basis_state;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn block_norms(state: &StateVector) -> (f64, f64) {
        (state.top_qubit_block(false).norm_sqr(), state.top_qubit_block(true).norm_sqr())
    }

    #[test]
    fn t_zero_gives_cos_block_only() {
        let h = parse_hamiltonian("# n_qubits=1\n0.3 X0\n0.8 Z0").unwrap();
        let mut s = basis_state("0", 1).unwrap().with_ancilla();
        apply_sigma_block(&mut s, &h, 0.0, EvolutionMode::Exact).unwrap();
        let (s0, s1) = block_norms(&s);
        assert_abs_diff_eq!(s0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn z_eigenstate_quarter_period() {
        let h = parse_hamiltonian("# n_qubits=1\n1 Z0").unwrap();
        let mut s = basis_state("0", 1).unwrap().with_ancilla();
        apply_sigma_block(&mut s, &h, std::f64::consts::FRAC_PI_2, EvolutionMode::Exact).unwrap();
        let (s0, s1) = block_norms(&s);
        assert_abs_diff_eq!(s0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn blocks_are_sine_and_cosine() {
        let h = parse_hamiltonian("# n_qubits=2\n0.4 X0 Y1\n-0.9 Z0\n0.3 Z1\n0.2 X1\n-0.1").unwrap();
        let phi = basis_state("10", 2).unwrap();
        let t = 0.83;
        let mut s = phi.with_ancilla();
        apply_sigma_block(&mut s, &h, t, EvolutionMode::Exact).unwrap();
        let spec = oracle::diagonalize(&h).unwrap();
        let sin = spec.apply_function(&phi, |e| Complex64::new((e * t).sin(), 0.0)).unwrap();
        let cos = spec.apply_function(&phi, |e| Complex64::new((e * t).cos(), 0.0)).unwrap();
        let (b0, b1) = (s.top_qubit_block(false), s.top_qubit_block(true));
        // global phase fixed by the cosine block
        let k = cos.amplitudes().iter().zip(b1.amplitudes()).max_by(|a, b| a.0.norm().total_cmp(&b.0.norm())).unwrap();
        let phase = k.1 / k.0;
        for (x, y) in b0.amplitudes().iter().zip(sin.amplitudes()) {
            assert_abs_diff_eq!((x - y * phase).norm(), 0.0, epsilon = 1e-12);
        }
        for (x, y) in b1.amplitudes().iter().zip(cos.amplitudes()) {
            assert_abs_diff_eq!((x - y * phase).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dirty_ancilla_rejected() {
        let h = parse_hamiltonian("# n_qubits=1\n1 Z0").unwrap();
        let mut s = basis_state("01", 2).unwrap();
        assert!(matches!(apply_sigma_block(&mut s, &h, 0.3, EvolutionMode::Exact), Err(PshoError::AncillaNotReset(_))));
    }

    #[test]
    fn eigenstate_moments() {
        let h = parse_hamiltonian("# n_qubits=1\n1 Z0").unwrap();
        let phi = basis_state("0", 1).unwrap();
        for m in 0..4 {
            let (c, hm) = moment_pair(&h, &phi, 0.3, m, EvolutionMode::Exact, NoiseSpec::ExactValue).unwrap();
            assert_abs_diff_eq!(c, (0.6 * m as f64).cos(), epsilon = 1e-14);
            assert_abs_diff_eq!(hm, (0.6 * m as f64).cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn quantized_table_rounds() {
        let h = parse_hamiltonian("# n_qubits=2\n0.4 X0 X1\n-0.9 Z0\n0.3 Z1").unwrap();
        let phi = basis_state("00", 2).unwrap();
        let exact = moment_table(&h, &phi, 0.4, 6, EvolutionMode::Exact, NoiseSpec::ExactValue).unwrap();
        let q = moment_table(&h, &phi, 0.4, 6, EvolutionMode::Exact, NoiseSpec::Quantize { digits: 6 }).unwrap();
        for m in 0..=6 {
            assert!((exact.c[m] - q.c[m]).abs() <= 5e-7 + 1e-15);
            assert!((exact.h[m] - q.h[m]).abs() <= 5e-7 + 1e-15);
        }
        assert_eq!(q.c[0], 1.0);
    }

    #[test]
    fn shots_deterministic_per_seed() {
        let h = parse_hamiltonian("# n_qubits=2\n0.4 X0 X1\n-0.9 Z0\n0.3 Z1").unwrap();
        let phi = basis_state("00", 2).unwrap();
        let noise = NoiseSpec::shots(1000, 7).unwrap();
        let a = moment_table(&h, &phi, 0.4, 5, EvolutionMode::Exact, noise).unwrap();
        let b = moment_table(&h, &phi, 0.4, 5, EvolutionMode::Exact, noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shot_estimate_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(shot_estimate(1.0, 17, &mut rng), 1.0);
        assert_eq!(shot_estimate(-1.0, 17, &mut rng), -1.0);
    }

    #[test]
    fn noise_spec_parsing() {
        assert_eq!("exact".parse::<NoiseSpec>().unwrap(), NoiseSpec::ExactValue);
        assert_eq!("quantize:6".parse::<NoiseSpec>().unwrap(), NoiseSpec::Quantize { digits: 6 });
        assert_eq!("shots:100:3".parse::<NoiseSpec>().unwrap(), NoiseSpec::Shots { count: 100, seed: 3 });
        assert_eq!(
            "shots:100:3:quantize:4".parse::<NoiseSpec>().unwrap(),
            NoiseSpec::ShotsThenQuantize { count: 100, seed: 3, digits: 4 }
        );
        assert!("shots:0:3".parse::<NoiseSpec>().is_err());
        assert!("quantize:0".parse::<NoiseSpec>().is_err());
        assert!("loud".parse::<NoiseSpec>().is_err());
        for s in ["exact", "quantize:6", "shots:5:1", "shots:5:1:quantize:3"] {
            assert_eq!(s.parse::<NoiseSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn csv_header() {
        let t = MomentTable::new(0.5, vec![1.0, 0.5], vec![-1.0, -0.25], NoiseSpec::ExactValue, EvolutionMode::Exact);
        let csv = t.to_csv();
        assert!(csv.contains("m,c_m,h_m\n0,1.00000000000000000e0,"));
        assert!(csv.contains("# noise=exact"));
    }
}
