//! Dense statevector simulation with the gate set used by the moment and
//! Trotter circuits.
//!
//! Rotations follow `exp(-i * angle * P)` with no factor of one half.
//! Global phase is not tracked.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PshoError, Result};
use crate::hamiltonian::{Hamiltonian, PauliMasks, MAX_QUBITS};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Residue above which an expectation is rejected as non-Hermitian misuse.
pub const IMAGINARY_RESIDUE_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Control {
    pub qubit: usize,
    /// Gate acts when the control qubit reads this value.
    pub polarity: bool,
}

impl Control {
    pub fn on_zero(qubit: usize) -> Self {
        Control { qubit, polarity: false }
    }

    pub fn on_one(qubit: usize) -> Self {
        Control { qubit, polarity: true }
    }

    #[inline]
    fn selects(self, i: usize) -> bool {
        ((i >> self.qubit) & 1 == 1) == self.polarity
    }
}

/// A 2x2 unitary, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneQubitGate([[Complex64; 2]; 2]);

impl OneQubitGate {
    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self> {
        let g = OneQubitGate(m);
        let p = g.adjoint().mul(&g);
        let dev = (p.0[0][0] - ONE).norm() + p.0[0][1].norm() + p.0[1][0].norm() + (p.0[1][1] - ONE).norm();
        if dev > 1e-12 {
            return Err(PshoError::InvalidArgument(format!("gate is not unitary (deviation {dev:e})")));
        }
        Ok(g)
    }

    pub fn hadamard() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        OneQubitGate([[h, h], [h, -h]])
    }

    /// diag(1, i)
    pub fn s() -> Self {
        OneQubitGate([[ONE, ZERO], [ZERO, I]])
    }

    /// diag(1, -i)
    pub fn s_dagger() -> Self {
        OneQubitGate([[ONE, ZERO], [ZERO, -I]])
    }

    pub fn pauli_x() -> Self {
        OneQubitGate([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        let m = self.0;
        OneQubitGate([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    fn mul(&self, other: &Self) -> Self {
        let (a, b) = (self.0, other.0);
        let mut out = [[ZERO; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        OneQubitGate(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// All qubits in |0>.
    pub fn zero(n_qubits: usize) -> Self {
        assert!(n_qubits <= MAX_QUBITS, "too many qubits");
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        StateVector { n_qubits, amps }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1usize << n_qubits {
            return Err(PshoError::DimensionMismatch { left: amps.len(), right: 1 << n_qubits });
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn basis_index(n_qubits: usize, index: usize) -> Result<Self> {
        if index >= 1usize << n_qubits {
            return Err(PshoError::InvalidArgument(format!("basis index {index} out of range")));
        }
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[index] = ONE;
        Ok(StateVector { n_qubits, amps })
    }

    /// Normalized state with independent Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Self {
        let normal = rand_distr::StandardNormal;
        let amps = (0..1usize << n_qubits)
            .map(|_| Complex64::new(rng.sample::<f64, _>(normal), rng.sample::<f64, _>(normal)))
            .collect();
        let mut s = StateVector { n_qubits, amps };
        s.normalize();
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescale to unit norm; returns the norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
        norm
    }

    /// Append one qubit in |0> above the existing register.
    pub fn with_ancilla(&self) -> StateVector {
        let mut amps = self.amps.clone();
        amps.resize(self.amps.len() * 2, ZERO);
        StateVector { n_qubits: self.n_qubits + 1, amps }
    }

    /// Register amplitudes (qubits below `qubit`... excluded) for which the
    /// top qubit reads `value`. Only valid for the most significant qubit.
    pub fn top_qubit_block(&self, value: bool) -> StateVector {
        let half = self.amps.len() / 2;
        let range = if value { half..self.amps.len() } else { 0..half };
        StateVector { n_qubits: self.n_qubits - 1, amps: self.amps[range].to_vec() }
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(PshoError::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    pub fn apply_one_qubit_gate(&mut self, qubit: usize, gate: &OneQubitGate) -> Result<()> {
        self.apply_one_qubit_gate_controlled(qubit, gate, None)
    }

    pub fn apply_one_qubit_gate_controlled(
        &mut self,
        qubit: usize,
        gate: &OneQubitGate,
        control: Option<Control>,
    ) -> Result<()> {
        self.check_qubit(qubit)?;
        if let Some(c) = control {
            self.check_qubit(c.qubit)?;
            if c.qubit == qubit {
                return Err(PshoError::OverlappingControl(c.qubit));
            }
        }
        let m = gate.0;
        let bit = 1usize << qubit;
        for i in 0..self.amps.len() {
            if i & bit != 0 || control.is_some_and(|c| !c.selects(i)) {
                continue;
            }
            let j = i | bit;
            let (a0, a1) = (self.amps[i], self.amps[j]);
            self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
        }
        Ok(())
    }

    /// Apply `exp(-i * angle * P)` where `P` is given by its bitmasks, on the
    /// subspace selected by `control` (everywhere when `None`).
    pub fn apply_pauli_rotation(&mut self, pauli: PauliMasks, angle: f64, control: Option<Control>) -> Result<()> {
        let support = pauli.support();
        if support >> self.n_qubits != 0 {
            let top = 63 - support.leading_zeros() as usize;
            return Err(PshoError::QubitOutOfRange { qubit: top, n_qubits: self.n_qubits });
        }
        if let Some(c) = control {
            self.check_qubit(c.qubit)?;
            if support & (1u64 << c.qubit) != 0 {
                return Err(PshoError::OverlappingControl(c.qubit));
            }
        }
        let (cos, sin) = (angle.cos(), angle.sin());
        let x = pauli.x as usize;
        if x == 0 {
            // diagonal: exp(-i angle s_i) with s_i = +-1 (identity when z == 0)
            let plus = Complex64::new(cos, -sin);
            let minus = Complex64::new(cos, sin);
            for i in 0..self.amps.len() {
                if control.is_some_and(|c| !c.selects(i)) {
                    continue;
                }
                let s = pauli.phase(i).re;
                self.amps[i] *= if s > 0.0 { plus } else { minus };
            }
            return Ok(());
        }
        let low = x & x.wrapping_neg();
        let minus_i_sin = Complex64::new(0.0, -sin);
        for i in 0..self.amps.len() {
            // visit each pair once, from the member with the lowest flipped bit clear
            if i & low != 0 || control.is_some_and(|c| !c.selects(i)) {
                continue;
            }
            let j = i ^ x;
            // P|i> = p_i |j>, P|j> = p_j |i>
            let (pi, pj) = (pauli.phase(i), pauli.phase(j));
            let (ai, aj) = (self.amps[i], self.amps[j]);
            self.amps[i] = ai * cos + minus_i_sin * pj * aj;
            self.amps[j] = aj * cos + minus_i_sin * pi * ai;
        }
        Ok(())
    }

    /// `sum_i coeff_i <psi|P_i|psi>` with the Hamiltonian placed on qubits
    /// `qubit_offset..qubit_offset + h.n_qubits()`.
    pub fn expectation(&self, h: &Hamiltonian, qubit_offset: usize) -> Result<f64> {
        self.expectation_with_ancilla(h, qubit_offset, None)
    }

    /// As [`expectation`](Self::expectation), optionally multiplied by `-Z`
    /// on the qubit `ancilla_minus_z`.
    pub fn expectation_with_ancilla(
        &self,
        h: &Hamiltonian,
        qubit_offset: usize,
        ancilla_minus_z: Option<usize>,
    ) -> Result<f64> {
        let per_term = self.term_expectations(h, qubit_offset, ancilla_minus_z)?;
        Ok(h.terms().iter().zip(per_term).map(|(t, e)| t.coefficient() * e).sum())
    }

    /// Expectation of each Pauli term (coefficient excluded), in term order.
    pub fn term_expectations(
        &self,
        h: &Hamiltonian,
        qubit_offset: usize,
        ancilla_minus_z: Option<usize>,
    ) -> Result<Vec<f64>> {
        if qubit_offset + h.n_qubits() > self.n_qubits {
            return Err(PshoError::DimensionMismatch { left: qubit_offset + h.n_qubits(), right: self.n_qubits });
        }
        if let Some(a) = ancilla_minus_z {
            self.check_qubit(a)?;
            if a >= qubit_offset && a < qubit_offset + h.n_qubits() {
                return Err(PshoError::OverlappingControl(a));
            }
        }
        let mut out = Vec::with_capacity(h.terms().len());
        for t in h.terms() {
            let mut masks = t.masks().shifted(qubit_offset);
            let mut sign = 1.0;
            if let Some(a) = ancilla_minus_z {
                masks.z |= 1u64 << a;
                sign = -1.0;
            }
            let v = self.pauli_expectation(masks);
            if v.im.abs() > IMAGINARY_RESIDUE_LIMIT {
                return Err(PshoError::ImaginaryResidue(v.im));
            }
            out.push(sign * v.re);
        }
        Ok(out)
    }

    /// `<psi|P|psi>` as a complex number.
    pub fn pauli_expectation(&self, masks: PauliMasks) -> Complex64 {
        let x = masks.x as usize;
        let mut acc = ZERO;
        if x == 0 {
            for (i, a) in self.amps.iter().enumerate() {
                acc += masks.phase(i) * a.norm_sqr();
            }
        } else {
            for (i, a) in self.amps.iter().enumerate() {
                acc += self.amps[i ^ x].conj() * masks.phase(i) * a;
            }
        }
        acc
    }

    /// Probability of reading 0 on `qubit`.
    pub fn probability_zero(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self.amps.iter().enumerate().filter(|(i, _)| i & bit == 0).map(|(_, a)| a.norm_sqr()).sum())
    }

    /// Measure `qubit`, collapse and renormalize. Returns the outcome and the
    /// probability of that branch.
    pub fn measure_qubit(&mut self, qubit: usize, how: Measurement<'_>) -> Result<(bool, f64)> {
        let p0 = self.probability_zero(qubit)?;
        let total = self.norm_sqr();
        let p0 = (p0 / total).clamp(0.0, 1.0);
        let outcome = match how {
            Measurement::Sample(rng) => rng.random::<f64>() >= p0,
            Measurement::Forced(o) => o,
        };
        let prob = if outcome { 1.0 - p0 } else { p0 };
        if prob < 1e-300 {
            return Err(PshoError::ImpossibleOutcome(prob));
        }
        let bit = 1usize << qubit;
        let scale = 1.0 / (prob * total).sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & bit) != 0) == outcome {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
        Ok((outcome, prob))
    }

    /// Little-endian pairs of f64 (re, im), for debugging dumps.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.amps.len() * 16);
        for a in &self.amps {
            out.extend_from_slice(&a.re.to_le_bytes());
            out.extend_from_slice(&a.im.to_le_bytes());
        }
        out
    }
}

pub enum Measurement<'a> {
    Sample(&'a mut dyn rand::RngCore),
    Forced(bool),
}

/// Computational basis state from a bitstring listing qubit 0 first.
pub fn basis_state(bitstring: &str, n_qubits: usize) -> Result<StateVector> {
    StateVector::basis_index(n_qubits, bitstring_index(bitstring, n_qubits)?)
}

pub fn bitstring_index(bitstring: &str, n_qubits: usize) -> Result<usize> {
    if bitstring.chars().count() != n_qubits {
        return Err(PshoError::InvalidBitstring(format!("{bitstring} (expected {n_qubits} characters)")));
    }
    let mut idx = 0usize;
    for (q, ch) in bitstring.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => idx |= 1 << q,
            _ => return Err(PshoError::InvalidBitstring(bitstring.to_string())),
        }
    }
    Ok(idx)
}

pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    if a.n_qubits != b.n_qubits {
        return Err(PshoError::DimensionMismatch { left: a.n_qubits, right: b.n_qubits });
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{parse_hamiltonian, Axis};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_state_ordering() {
        assert_eq!(basis_state("0", 1).unwrap().amplitudes(), &[ONE, ZERO]);
        let s = basis_state("10", 2).unwrap();
        assert_eq!(s.amplitudes()[1], ONE);
        assert_eq!(basis_state("0011", 4).unwrap().amplitudes()[12], ONE);
        assert!(basis_state("01", 3).is_err());
        assert!(basis_state("0a", 2).is_err());
    }

    #[test]
    fn hadamard_then_s() {
        let mut s = StateVector::zero(1);
        s.apply_one_qubit_gate(0, &OneQubitGate::hadamard()).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        s.apply_one_qubit_gate(0, &OneQubitGate::s()).unwrap();
        assert_abs_diff_eq!((s.amplitudes()[1] - c(0.0, FRAC_1_SQRT_2)).norm(), 0.0, epsilon = 1e-15);
        assert!(s.apply_one_qubit_gate(1, &OneQubitGate::s()).is_err());
    }

    #[test]
    fn rejects_non_unitary() {
        assert!(OneQubitGate::new([[ONE, ONE], [ZERO, ONE]]).is_err());
    }

    #[test]
    fn z_rotation_phase() {
        let mut s = StateVector::zero(1);
        let z = PauliMasks::from_factors(&[(0, Axis::Z)]);
        s.apply_pauli_rotation(z, std::f64::consts::FRAC_PI_2, None).unwrap();
        assert_abs_diff_eq!((s.amplitudes()[0] - c(0.0, -1.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn controlled_rotation_on_unselected_branch_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = StateVector::random(2, &mut rng);
        let mut s = psi.with_ancilla();
        let before = s.clone();
        let p = PauliMasks::from_factors(&[(0, Axis::X), (1, Axis::Y)]);
        s.apply_pauli_rotation(p, 0.7, Some(Control::on_one(2))).unwrap();
        assert_eq!(s, before);
        assert_eq!(
            s.apply_pauli_rotation(p, 0.7, Some(Control::on_one(1))),
            Err(PshoError::OverlappingControl(1))
        );
    }

    #[test]
    fn expectation_simple_cases() {
        let hz = parse_hamiltonian("# n_qubits=1\n1 Z0").unwrap();
        assert_eq!(StateVector::zero(1).expectation(&hz, 0).unwrap(), 1.0);
        let hx = parse_hamiltonian("# n_qubits=1\n1 X0").unwrap();
        let mut plus = StateVector::zero(1);
        plus.apply_one_qubit_gate(0, &OneQubitGate::hadamard()).unwrap();
        assert_abs_diff_eq!(plus.expectation(&hx, 0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ancilla_minus_z_flips_sign() {
        let hi = parse_hamiltonian("# n_qubits=1\n1").unwrap();
        let s = StateVector::zero(2);
        assert_eq!(s.expectation_with_ancilla(&hi, 0, Some(1)).unwrap(), -1.0);
        assert!(s.expectation_with_ancilla(&hi, 0, Some(0)).is_err());
    }

    #[test]
    fn measurement_forced_and_sampled() {
        let mut s = StateVector::zero(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.measure_qubit(0, Measurement::Sample(&mut rng)).unwrap(), (false, 1.0));

        let mut plus = StateVector::zero(1);
        plus.apply_one_qubit_gate(0, &OneQubitGate::hadamard()).unwrap();
        let (o, p) = plus.measure_qubit(0, Measurement::Forced(false)).unwrap();
        assert!(!o);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!((plus.amplitudes()[0] - ONE).norm(), 0.0, epsilon = 1e-15);

        let mut zero = StateVector::zero(1);
        assert!(matches!(zero.measure_qubit(0, Measurement::Forced(true)), Err(PshoError::ImpossibleOutcome(_))));
    }

    #[test]
    fn inner_products() {
        let zero = StateVector::zero(1);
        let one = basis_state("1", 1).unwrap();
        assert_eq!(inner_product(&zero, &zero).unwrap(), ONE);
        assert_eq!(inner_product(&zero, &one).unwrap(), ZERO);
        assert!(inner_product(&zero, &StateVector::zero(2)).is_err());
    }

    #[test]
    fn dump_layout() {
        let bytes = basis_state("1", 1).unwrap().to_le_bytes();
        assert_eq!(bytes.len(), 32);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 1.0);
    }
}
