//! Monte-Carlo model of the post-selected filter: apply the Σ-block,
//! measure the ancilla, keep the run only while every outcome is 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PshoError, Result};
use crate::evolution::EvolutionMode;
use crate::hamiltonian::Hamiltonian;
use crate::oracle;
use crate::sigma::apply_sigma_block;
use crate::statevector::{Measurement, StateVector};

/// Predicted success probabilities below this skip the simulation.
pub const UNDERFLOW_LIMIT: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectStats {
    pub n: usize,
    pub tau: f64,
    pub trials: u64,
    pub successes: u64,
    pub empirical_p: f64,
    /// `<phi0|sin^{2n}(H tau)|phi0>`.
    pub predicted_p: f64,
    /// Energy of the register after `n` forced zero outcomes.
    pub conditioned_energy: f64,
    /// Branch probability of each forced round.
    pub step_probabilities: Vec<f64>,
}

impl DirectStats {
    /// Three binomial standard errors around the prediction.
    pub fn band(&self) -> f64 {
        3.0 * (self.predicted_p * (1.0 - self.predicted_p) / self.trials as f64).sqrt()
    }
}

fn round(state: &mut StateVector, h: &Hamiltonian, tau: f64, mode: EvolutionMode, how: Measurement<'_>) -> Result<(bool, f64)> {
    apply_sigma_block(state, h, tau, mode)?;
    state.measure_qubit(h.n_qubits(), how)
}

fn trial(phi: &StateVector, h: &Hamiltonian, tau: f64, n: usize, mode: EvolutionMode, rng: &mut ChaCha8Rng) -> Result<bool> {
    let mut state = phi.with_ancilla();
    for _ in 0..n {
        let (outcome, _) = round(&mut state, h, tau, mode, Measurement::Sample(rng))?;
        if outcome {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn run_direct(
    h: &Hamiltonian,
    phi0: &StateVector,
    tau: f64,
    n: usize,
    trials: u64,
    seed: u64,
    mode: EvolutionMode,
) -> Result<DirectStats> {
    if trials == 0 {
        return Err(PshoError::InvalidArgument("trials must be at least 1".into()));
    }
    if phi0.n_qubits() != h.n_qubits() {
        return Err(PshoError::DimensionMismatch { left: phi0.n_qubits(), right: h.n_qubits() });
    }
    let predicted_p = oracle::direct_success_probability_exact(h, phi0, tau, n)?;
    if predicted_p < UNDERFLOW_LIMIT && n > 0 {
        return Err(PshoError::Underflow(predicted_p));
    }

    let mut state = phi0.with_ancilla();
    let mut step_probabilities = Vec::with_capacity(n);
    for _ in 0..n {
        let (_, p) = round(&mut state, h, tau, mode, Measurement::Forced(false))?;
        step_probabilities.push(p);
    }
    let conditioned_energy = state.top_qubit_block(false).expectation(h, 0)?;

    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            trial(phi0, h, tau, n, mode, &mut rng).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    Ok(DirectStats {
        n,
        tau,
        trials,
        successes,
        empirical_p: successes as f64 / trials as f64,
        predicted_p,
        conditioned_energy,
        step_probabilities,
    })
}

/// `<sin^{2i}> / <sin^{2(i-1)}>`, the chance that round `i` succeeds given
/// that the previous rounds did.
pub fn per_step_success(h: &Hamiltonian, phi0: &StateVector, tau: f64, i: usize) -> Result<f64> {
    if i == 0 {
        return Err(PshoError::InvalidArgument("steps are numbered from 1".into()));
    }
    let w = oracle::spectral_weights(h, phi0)?;
    let prev = w.sin_power_extended(tau, i - 1);
    if prev.is_zero() {
        return Err(PshoError::Underflow(0.0));
    }
    Ok(w.sin_power_extended(tau, i).div(&prev).expect("nonzero").to_f64())
}
