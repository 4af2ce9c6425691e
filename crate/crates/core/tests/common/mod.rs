//! Shared helpers: seeded random instances and a dense reference oracle built
//! from Kronecker products, independent of the library's mask arithmetic.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use psho_core::hamiltonian::parse_hamiltonian;
use psho_core::{Axis, Hamiltonian, PauliTerm, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> Hamiltonian {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/").to_string() + name;
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse_hamiltonian(&text).unwrap()
}

/// `terms` random Pauli strings with coefficients in [-1, 1], plus an identity
/// shift in [-2, -0.5].
pub fn random_hamiltonian(n_qubits: usize, terms: usize, rng: &mut ChaCha8Rng) -> Hamiltonian {
    let mut out = vec![PauliTerm::identity(rng.random_range(-2.0..-0.5))];
    while out.len() < terms + 1 {
        let factors: Vec<(usize, Axis)> = (0..n_qubits)
            .filter_map(|q| match rng.random_range(0..4) {
                1 => Some((q, Axis::X)),
                2 => Some((q, Axis::Y)),
                3 => Some((q, Axis::Z)),
                _ => None,
            })
            .collect();
        if factors.is_empty() {
            continue;
        }
        out.push(PauliTerm::new(rng.random_range(-1.0..1.0), factors).unwrap());
    }
    Hamiltonian::new(n_qubits, out).unwrap()
}

pub struct Instance {
    pub seed: u64,
    pub h: Hamiltonian,
    pub phi: StateVector,
    pub oracle: Dense,
}

pub fn instances(count: usize, base_seed: u64) -> Vec<Instance> {
    (0..count as u64)
        .map(|i| {
            let seed = base_seed + i;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hamiltonian(3, 8, &mut rng);
            let phi = StateVector::random(3, &mut rng);
            let oracle = Dense::new(&h, &phi);
            Instance { seed, h, phi, oracle }
        })
        .collect()
}

fn pauli(axis: Option<Axis>) -> DMatrix<Complex64> {
    let (o, l, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    let m = match axis {
        None => [l, o, o, l],
        Some(Axis::X) => [o, l, l, o],
        Some(Axis::Y) => [o, -i, i, o],
        Some(Axis::Z) => [l, o, o, -l],
    };
    DMatrix::from_row_slice(2, 2, &m)
}

/// Dense matrix with qubit 0 as the least significant index bit.
pub fn dense(h: &Hamiltonian) -> DMatrix<Complex64> {
    let n = h.n_qubits();
    let mut total = DMatrix::<Complex64>::zeros(1 << n, 1 << n);
    for t in h.terms() {
        let mut m = DMatrix::<Complex64>::identity(1, 1);
        for q in (0..n).rev() {
            let axis = t.factors().iter().find(|f| f.0 == q).map(|f| f.1);
            m = m.kronecker(&pauli(axis));
        }
        total += m * Complex64::new(t.coefficient(), 0.0);
    }
    total
}

/// Eigenvalues and reference weights from a dense Hermitian eigensolve.
pub struct Dense {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Dense {
    pub fn new(h: &Hamiltonian, phi: &StateVector) -> Dense {
        Self::from_matrix(dense(h), phi.amplitudes())
    }

    pub fn from_matrix(m: DMatrix<Complex64>, amps: &[Complex64]) -> Dense {
        let eig = SymmetricEigen::new(m);
        let mut pairs: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                let ov: Complex64 = v.iter().zip(amps).map(|(a, b)| a.conj() * b).sum();
                (eig.eigenvalues[k], ov.norm_sqr())
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Dense { energies: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    pub fn overlapped(&self, threshold: f64) -> Vec<(f64, f64)> {
        self.energies.iter().zip(&self.weights).filter(|p| *p.1 > threshold).map(|(e, w)| (*e, *w)).collect()
    }

    /// Lowest overlapped eigenvalue.
    pub fn e0(&self) -> f64 {
        self.overlapped(1e-10)[0].0
    }

    /// Largest-magnitude overlapped eigenvalue.
    pub fn e_absmax(&self) -> f64 {
        self.overlapped(1e-10).iter().map(|p| p.0).max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap()
    }

    /// Weights of `sin^n(H tau) phi`, rescaled by the largest sine.
    fn filtered(&self, tau: f64, n: usize) -> Vec<f64> {
        let s: Vec<f64> = self.energies.iter().map(|e| (e * tau).sin().powi(2)).collect();
        let smax = s.iter().zip(&self.weights).filter(|p| *p.1 > 0.0).map(|p| *p.0).fold(0.0, f64::max);
        s.iter().zip(&self.weights).map(|(s, w)| w * (s / smax).powi(n as i32)).collect()
    }

    pub fn energy(&self, tau: f64, n: usize) -> f64 {
        let f = self.filtered(tau, n);
        f.iter().zip(&self.energies).map(|(a, e)| a * e).sum::<f64>() / f.iter().sum::<f64>()
    }

    /// `<sin^{2n}> / <sin^{2(n-1)}>`.
    pub fn norm_ratio(&self, tau: f64, n: usize) -> f64 {
        let s: Vec<f64> = self.energies.iter().map(|e| (e * tau).sin().powi(2)).collect();
        let num: f64 = s.iter().zip(&self.weights).map(|(s, w)| w * s.powi(n as i32)).sum();
        let den: f64 = s.iter().zip(&self.weights).map(|(s, w)| w * s.powi(n as i32 - 1)).sum();
        num / den
    }

    pub fn sin_power(&self, tau: f64, n: usize) -> f64 {
        self.energies.iter().zip(&self.weights).map(|(e, w)| w * (e * tau).sin().powi(2 * n as i32)).sum()
    }
}

/// Dense unitary of a gate sequence, column by column.
pub fn unitary_of(n_qubits: usize, apply: impl Fn(&mut StateVector)) -> DMatrix<Complex64> {
    let dim = 1 << n_qubits;
    let mut u = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..dim {
        let mut s = StateVector::basis_index(n_qubits, j).unwrap();
        apply(&mut s);
        for (i, a) in s.amplitudes().iter().enumerate() {
            u[(i, j)] = *a;
        }
    }
    u
}

pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
