//! Experiment drivers: ground-state τ descent, excited-state τ scan with
//! plateau detection, and Trotter deviation sweeps.

mod excited;
mod ground;
mod plateaus;
mod trotter;

pub use excited::{excited_state_scan, single_excitation_refs, ExcitedPlateau, PlateauReport};
pub use ground::{
    accuracy_profile, ground_state_search, AccuracyProfile, GroundResult, PowerEstimate, ScanPoint,
};
pub use plateaus::{detect_plateaus, Plateau};
pub use trotter::{fit_deviation_scaling, trotter_deviation_sweep, DeltaFactor, DeviationTable, ScalingFit};

use serde::{Deserialize, Serialize};

use crate::error::{PshoError, Result};
use crate::estimator::EstimatorConfig;
use crate::evolution::EvolutionMode;
use crate::hamiltonian::Hamiltonian;
use crate::oracle::SpectralWeights;
use crate::sigma::{moment_table, MomentTable, NoiseSpec};
use crate::statevector::StateVector;
use crate::CHEMICAL_ACCURACY;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauGrid {
    /// `steps` evenly spaced points from `start` to `stop` inclusive.
    Linear { start: f64, stop: f64, steps: usize },
    /// `start, start*factor, ...` while not past `stop`.
    Geometric { start: f64, factor: f64, stop: f64 },
}

impl TauGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        match *self {
            TauGrid::Linear { start, stop, steps } => {
                if steps == 0 || !start.is_finite() || !stop.is_finite() {
                    return Err(PshoError::InvalidArgument("tau grid needs finite bounds and steps >= 1".into()));
                }
                if steps == 1 {
                    return Ok(vec![start]);
                }
                let h = (stop - start) / (steps - 1) as f64;
                Ok((0..steps).map(|i| start + h * i as f64).collect())
            }
            TauGrid::Geometric { start, factor, stop } => {
                if !(start > 0.0 && stop > 0.0 && factor > 0.0 && factor != 1.0 && start.is_finite()) {
                    return Err(PshoError::InvalidArgument("geometric tau grid needs positive values, factor != 1".into()));
                }
                let mut out = Vec::new();
                let mut t = start;
                let past = |t: f64| if factor < 1.0 { t < stop * (1.0 - 1e-12) } else { t > stop * (1.0 + 1e-12) };
                while !past(t) && out.len() < 100_000 {
                    out.push(t);
                    t *= factor;
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// `None` selects the driver's default window.
    pub tau_grid: Option<TauGrid>,
    /// Powers evaluated at each τ, ascending.
    pub powers: Vec<usize>,
    pub noise: NoiseSpec,
    pub mode: EvolutionMode,
    pub offset_eps: f64,
    pub conv_tol: f64,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    /// Multiplicative τ step of the ground-state descent.
    pub descent_factor: f64,
    /// Number of points in the default excited-state window.
    pub excited_points: usize,
    pub estimator: EstimatorConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            tau_grid: None,
            powers: doubling_powers(64),
            noise: NoiseSpec::ExactValue,
            mode: EvolutionMode::Exact,
            offset_eps: 0.0,
            conv_tol: CHEMICAL_ACCURACY,
            plateau_window: 4,
            plateau_tol: 1e-3,
            descent_factor: 0.97,
            excited_points: 120,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.powers.is_empty() || self.powers.contains(&0) {
            return Err(PshoError::InvalidArgument("power schedule must be non-empty and positive".into()));
        }
        if !self.powers.windows(2).all(|w| w[0] < w[1]) {
            return Err(PshoError::InvalidArgument("power schedule must be strictly ascending".into()));
        }
        if !(self.conv_tol > 0.0 && self.plateau_tol > 0.0) {
            return Err(PshoError::InvalidArgument("tolerances must be positive".into()));
        }
        if self.plateau_window == 0 {
            return Err(PshoError::InvalidArgument("plateau window must be at least 1".into()));
        }
        if !self.offset_eps.is_finite() {
            return Err(PshoError::InvalidArgument("offset must be finite".into()));
        }
        self.noise.validated()?;
        Ok(())
    }

    pub fn max_power(&self) -> usize {
        self.powers.iter().copied().max().unwrap_or(1)
    }
}

/// `1, 2, 4, ...` up to and including `max` (appended if not a power of two).
pub fn doubling_powers(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = 1;
    while n < max {
        out.push(n);
        n *= 2;
    }
    out.push(max.max(1));
    out
}

/// Moments for one τ. Exact evolution without shot noise reads them from the
/// spectral weights; otherwise the Σ-block circuit is simulated.
pub fn moments_for(
    h: &Hamiltonian,
    phi0: &StateVector,
    weights: Option<&SpectralWeights>,
    tau: f64,
    max_m: usize,
    mode: EvolutionMode,
    noise: NoiseSpec,
) -> Result<MomentTable> {
    match (mode, weights) {
        (EvolutionMode::Exact, Some(w)) if !noise.uses_shots() => {
            let h0 = phi0.expectation(h, 0)?;
            let mut t = w.moment_table(tau, max_m, h0);
            if let NoiseSpec::Quantize { digits } = noise {
                t = t.quantized(digits);
            }
            Ok(t)
        }
        _ => moment_table(h, phi0, tau, max_m, mode, noise),
    }
}
