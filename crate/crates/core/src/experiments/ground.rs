use rayon::prelude::*;
use serde::Serialize;

use super::{detect_plateaus, moments_for, Plateau, ScanConfig, TauGrid};
use crate::error::{PshoError, Result};
use crate::estimator::{estimate, EstimatorConfig};
use crate::evolution::EvolutionMode;
use crate::hamiltonian::Hamiltonian;
use crate::oracle::{self, SpectralWeights};
use crate::sigma::NoiseSpec;
use crate::statevector::StateVector;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub n: usize,
    pub energy: Option<f64>,
    pub q: Option<f64>,
    pub energy_prime: Option<f64>,
    pub error_bound: f64,
    pub noise_dominated: bool,
    /// Why the estimate is missing, if it is.
    pub failure: Option<String>,
}

impl PowerEstimate {
    fn reliable_energy(&self) -> Option<f64> {
        self.energy.filter(|_| !self.noise_dominated)
    }

    fn reliable_prime(&self) -> Option<f64> {
        self.energy_prime.filter(|_| !self.noise_dominated)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub tau: f64,
    pub estimates: Vec<PowerEstimate>,
    /// `(n, E_n)` at the first schedule pair meeting the stop rule.
    pub converged: Option<(usize, f64)>,
    pub converged_prime: Option<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundResult {
    /// Plateau energy with the offset removed.
    pub energy: Option<f64>,
    pub energy_prime: Option<f64>,
    pub plateau: Option<Plateau>,
    pub plateau_prime: Option<Plateau>,
    pub offset_eps: f64,
    pub reference_energy: f64,
    pub tau_start: f64,
    /// One point per τ, in scan order.
    pub trace: Vec<ScanPoint>,
}

pub(crate) fn power_estimates(
    h: &Hamiltonian,
    phi0: &StateVector,
    weights: Option<&SpectralWeights>,
    tau: f64,
    powers: &[usize],
    mode: EvolutionMode,
    noise: NoiseSpec,
    cfg: &EstimatorConfig,
) -> Result<Vec<PowerEstimate>> {
    let max_m = powers.iter().copied().max().unwrap_or(1);
    let table = moments_for(h, phi0, weights, tau, max_m, mode, noise)?;
    Ok(powers
        .iter()
        .map(|&n| match estimate(&table, n, cfg) {
            Ok(e) => PowerEstimate {
                n,
                energy: Some(e.energy),
                q: Some(e.q),
                energy_prime: e.energy_prime,
                error_bound: e.error_bound,
                noise_dominated: e.noise_dominated,
                failure: None,
            },
            Err(err) => PowerEstimate {
                n,
                energy: None,
                q: None,
                energy_prime: None,
                error_bound: f64::NAN,
                noise_dominated: true,
                failure: Some(err.to_string()),
            },
        })
        .collect())
}

/// First consecutive pair `(n, n')` with both values present and
/// `|E_n' - E_n| <= tol / 2`; returns `(n', E_n')`.
pub(crate) fn stop_rule(estimates: &[PowerEstimate], tol: f64, pick: impl Fn(&PowerEstimate) -> Option<f64>) -> Option<(usize, f64)> {
    estimates.windows(2).find_map(|w| match (pick(&w[0]), pick(&w[1])) {
        (Some(a), Some(b)) if (b - a).abs() <= tol / 2.0 => Some((w[1].n, b)),
        _ => None,
    })
}

fn spectral_weights_if_exact(h: &Hamiltonian, phi0: &StateVector, cfg: &ScanConfig) -> Result<Option<SpectralWeights>> {
    match (cfg.mode, cfg.noise.uses_shots()) {
        (EvolutionMode::Exact, false) => Ok(Some(oracle::spectral_weights(h, phi0)?)),
        _ => Ok(None),
    }
}

fn lowest_plateau(curve: &mut [(f64, f64)], cfg: &ScanConfig) -> Option<Plateau> {
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    detect_plateaus(curve, cfg.plateau_window, cfg.plateau_tol).into_iter().min_by(|a, b| a.energy.total_cmp(&b.energy))
}

/// Descend τ from `|pi / (2 <H>)|`, run both estimators over the power
/// schedule at each τ, and read the ground energy off the lowest plateau of
/// converged values.
pub fn ground_state_search(h: &Hamiltonian, phi0: &StateVector, cfg: &ScanConfig) -> Result<GroundResult> {
    cfg.validate()?;
    let shifted = h.offset(cfg.offset_eps);
    let reference_energy = phi0.expectation(&shifted, 0)?;
    if reference_energy == 0.0 {
        return Err(PshoError::InvalidArgument("reference energy is zero; cannot place the tau window".into()));
    }
    let tau_start = (std::f64::consts::FRAC_PI_2 / reference_energy).abs();
    let grid = cfg.tau_grid.unwrap_or(TauGrid::Geometric {
        start: tau_start,
        factor: cfg.descent_factor,
        stop: 0.5 * tau_start,
    });
    let taus = grid.points()?;
    let weights = spectral_weights_if_exact(&shifted, phi0, cfg)?;

    let trace: Vec<ScanPoint> = taus
        .par_iter()
        .map(|&tau| {
            let estimates =
                power_estimates(&shifted, phi0, weights.as_ref(), tau, &cfg.powers, cfg.mode, cfg.noise, &cfg.estimator)?;
            let converged = stop_rule(&estimates, cfg.conv_tol, PowerEstimate::reliable_energy);
            let converged_prime = stop_rule(&estimates, cfg.conv_tol, PowerEstimate::reliable_prime);
            Ok(ScanPoint { tau, estimates, converged, converged_prime })
        })
        .collect::<Result<_>>()?;

    let mut curve: Vec<(f64, f64)> = trace.iter().map(|p| (p.tau, p.converged.map_or(f64::NAN, |c| c.1))).collect();
    let mut curve_prime: Vec<(f64, f64)> =
        trace.iter().map(|p| (p.tau, p.converged_prime.map_or(f64::NAN, |c| c.1))).collect();
    let plateau = lowest_plateau(&mut curve, cfg);
    let plateau_prime = lowest_plateau(&mut curve_prime, cfg);

    Ok(GroundResult {
        energy: plateau.as_ref().map(|p| p.energy - cfg.offset_eps),
        energy_prime: plateau_prime.as_ref().map(|p| p.energy - cfg.offset_eps),
        plateau,
        plateau_prime,
        offset_eps: cfg.offset_eps,
        reference_energy: reference_energy - cfg.offset_eps,
        tau_start,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyProfile {
    /// `(tau, n_energy, n_prime)` per τ.
    pub per_tau: Vec<(f64, Option<usize>, Option<usize>)>,
    pub min_power_energy: Option<usize>,
    pub min_power_prime: Option<usize>,
}

/// Smallest `n` from which every power up to `n_max` stays within `tol` of
/// `target`, for each τ and each estimator, and the minimum over τ.
pub fn accuracy_profile(
    h: &Hamiltonian,
    phi0: &StateVector,
    taus: &[f64],
    n_max: usize,
    target: f64,
    tol: f64,
    cfg: &ScanConfig,
) -> Result<AccuracyProfile> {
    let shifted = h.offset(cfg.offset_eps);
    let weights = spectral_weights_if_exact(&shifted, phi0, cfg)?;
    let powers: Vec<usize> = (1..=n_max).collect();
    let per_tau: Vec<(f64, Option<usize>, Option<usize>)> = taus
        .par_iter()
        .map(|&tau| {
            let est = power_estimates(&shifted, phi0, weights.as_ref(), tau, &powers, cfg.mode, cfg.noise, &cfg.estimator)?;
            let first_stable = |pick: &dyn Fn(&PowerEstimate) -> Option<f64>| {
                let ok = |e: &PowerEstimate| pick(e).is_some_and(|v| (v - cfg.offset_eps - target).abs() <= tol);
                let tail = est.iter().rev().take_while(|e| ok(e)).count();
                (tail > 0).then(|| n_max + 1 - tail)
            };
            Ok((tau, first_stable(&|e| e.energy), first_stable(&|e| e.energy_prime)))
        })
        .collect::<Result<_>>()?;
    Ok(AccuracyProfile {
        min_power_energy: per_tau.iter().filter_map(|p| p.1).min(),
        min_power_prime: per_tau.iter().filter_map(|p| p.2).min(),
        per_tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::parse_hamiltonian;
    use crate::statevector::basis_state;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigenstate_reference() {
        let h = parse_hamiltonian("# n_qubits=2\n-1.2 Z0\n0.3 Z1").unwrap();
        let phi = basis_state("00", 2).unwrap();
        let r = ground_state_search(&h, &phi, &ScanConfig::default()).unwrap();
        assert_abs_diff_eq!(r.energy.unwrap(), -0.9, epsilon = 1e-12);
        let first = &r.trace[0];
        assert_abs_diff_eq!(first.tau, r.tau_start);
        for e in &first.estimates {
            assert_abs_diff_eq!(e.energy.unwrap(), -0.9, epsilon = 1e-9);
        }
    }

    #[test]
    fn offset_is_removed() {
        let h = parse_hamiltonian("# n_qubits=2\n0.5 X0 X1\n-1 Z0\n-0.5 Z1\n-1").unwrap();
        let phi = basis_state("00", 2).unwrap();
        let e0 = oracle::diagonalize(&h).unwrap().eigenvalues()[0];
        let plain = ground_state_search(&h, &phi, &ScanConfig::default()).unwrap();
        let shifted = ground_state_search(&h, &phi, &ScanConfig { offset_eps: 0.3, ..Default::default() }).unwrap();
        assert!((plain.energy.unwrap() - e0).abs() < 1.6e-3);
        assert!((shifted.energy.unwrap() - e0).abs() < 1.6e-3);
    }

    #[test]
    fn stop_rule_pairs() {
        let mk = |n, e: f64| PowerEstimate {
            n,
            energy: Some(e),
            q: None,
            energy_prime: None,
            error_bound: 0.0,
            noise_dominated: false,
            failure: None,
        };
        let est = vec![mk(1, -1.0), mk(2, -1.1), mk(4, -1.1005), mk(8, -1.1006)];
        assert_eq!(stop_rule(&est, 1.6e-3, |e| e.energy), Some((4, -1.1005)));
        assert_eq!(stop_rule(&est[..2], 1.6e-3, |e| e.energy), None);
    }
}
