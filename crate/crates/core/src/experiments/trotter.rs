use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PshoError, Result};
use crate::evolution::EvolutionMode;
use crate::hamiltonian::Hamiltonian;
use crate::oracle;
use crate::sigma::{moment_pair, NoiseSpec};
use crate::statevector::StateVector;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationTable {
    pub deltas: Vec<f64>,
    pub taus: Vec<f64>,
    /// `c` deviation, indexed `[delta][tau]`.
    pub dc: Vec<Vec<f64>>,
    /// `h` deviation, indexed `[delta][tau]`.
    pub dh: Vec<Vec<f64>>,
}

impl DeviationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,tau,dc,dh\n");
        for (i, d) in self.deltas.iter().enumerate() {
            for (j, t) in self.taus.iter().enumerate() {
                out.push_str(&format!("{d},{t:.12},{:.17e},{:.17e}\n", self.dc[i][j], self.dh[i][j]));
            }
        }
        out
    }
}

/// Trotterized minus exact first moments (`m = 1`) for every `(delta, tau)`.
pub fn trotter_deviation_sweep(h: &Hamiltonian, phi0: &StateVector, deltas: &[f64], taus: &[f64]) -> Result<DeviationTable> {
    let w = oracle::spectral_weights(h, phi0)?;
    for &d in deltas {
        EvolutionMode::trotter(d)?;
    }
    let cells: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| taus.iter().map(move |&t| (d, t)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(delta, tau)| {
            let (c, hm) = moment_pair(h, phi0, tau, 1, EvolutionMode::Trotter { delta }, NoiseSpec::ExactValue)?;
            let (ce, he) = w.moments(tau, 1);
            Ok((c - ce, hm - he))
        })
        .collect::<Result<_>>()?;
    let k = taus.len();
    let dc = (0..deltas.len()).map(|i| cells[i * k..(i + 1) * k].iter().map(|c| c.0).collect()).collect();
    let dh = (0..deltas.len()).map(|i| cells[i * k..(i + 1) * k].iter().map(|c| c.1).collect()).collect();
    Ok(DeviationTable { deltas: deltas.to_vec(), taus: taus.to_vec(), dc, dh })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaFactor {
    pub delta: f64,
    /// Mean absolute envelope slope of the `h` deviation.
    pub factor: f64,
    /// Same for the `c` deviation.
    pub factor_c: f64,
    pub upper_slope: Option<f64>,
    pub lower_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub per_delta: Vec<DeltaFactor>,
    /// `factor ~ a delta^2`, least squares.
    pub a: f64,
    /// Largest absolute residual of the quadratic fit.
    pub residual: f64,
    /// Least-squares slope of `ln factor` against `ln delta`.
    pub loglog_slope: f64,
}

/// Slope of the least-squares line through `points`.
fn line_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Strict three-point local maxima and minima.
fn extrema(xs: &[f64], ys: &[f64]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..ys.len().saturating_sub(1) {
        let (a, b, c) = (ys[i - 1], ys[i], ys[i + 1]);
        if b > a && b > c {
            maxima.push((xs[i], b));
        } else if b < a && b < c {
            minima.push((xs[i], b));
        }
    }
    (maxima, minima)
}

/// Mean absolute slope of the envelopes through the local extrema.
fn envelope_factor(taus: &[f64], ys: &[f64]) -> Result<(f64, Option<f64>, Option<f64>)> {
    let (maxima, minima) = extrema(taus, ys);
    let found = maxima.len() + minima.len();
    if found < 3 {
        return Err(PshoError::TooFewExtrema { found, needed: 3 });
    }
    let (up, low) = (line_slope(&maxima), line_slope(&minima));
    let slopes: Vec<f64> = [up, low].into_iter().flatten().map(f64::abs).collect();
    if slopes.is_empty() {
        return Err(PshoError::TooFewExtrema { found, needed: 3 });
    }
    Ok((slopes.iter().sum::<f64>() / slopes.len() as f64, up, low))
}

pub fn fit_deviation_scaling(table: &DeviationTable) -> Result<ScalingFit> {
    let mut per_delta = Vec::with_capacity(table.deltas.len());
    for (i, &delta) in table.deltas.iter().enumerate() {
        let (factor, upper_slope, lower_slope) = envelope_factor(&table.taus, &table.dh[i])?;
        let (factor_c, _, _) = envelope_factor(&table.taus, &table.dc[i])?;
        per_delta.push(DeltaFactor { delta, factor, factor_c, upper_slope, lower_slope });
    }
    let sx4: f64 = per_delta.iter().map(|d| d.delta.powi(4)).sum();
    let syx2: f64 = per_delta.iter().map(|d| d.factor * d.delta.powi(2)).sum();
    let a = if sx4 > 0.0 { syx2 / sx4 } else { 0.0 };
    let residual = per_delta.iter().map(|d| (d.factor - a * d.delta.powi(2)).abs()).fold(0.0, f64::max);
    let logs: Vec<(f64, f64)> = per_delta
        .iter()
        .filter(|d| d.factor > 0.0)
        .map(|d| (d.delta.ln(), d.factor.ln()))
        .collect();
    let loglog_slope = line_slope(&logs).unwrap_or(f64::NAN);
    Ok(ScalingFit { per_delta, a, residual, loglog_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::parse_hamiltonian;
    use crate::statevector::basis_state;

    #[test]
    fn single_term_has_no_deviation() {
        let h = parse_hamiltonian("# n_qubits=1\n0.7 X0").unwrap();
        let phi = basis_state("0", 1).unwrap();
        let t = trotter_deviation_sweep(&h, &phi, &[0.1, 0.2], &[0.3, 1.0, 2.5]).unwrap();
        for row in t.dc.iter().chain(&t.dh) {
            for v in row {
                assert!(v.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn synthetic_envelope() {
        let taus: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let k = 0.37;
        let ys: Vec<f64> = taus.iter().map(|t| k * t * (3.0 * t).sin()).collect();
        let (f, _, _) = envelope_factor(&taus, &ys).unwrap();
        assert!((f - k).abs() < 0.02 * k, "{f}");
    }

    #[test]
    fn quadratic_fit_of_exact_law() {
        let taus: Vec<f64> = (0..1000).map(|i| i as f64 * 0.02).collect();
        let deltas = [0.01, 0.02, 0.05, 0.1];
        let dh: Vec<Vec<f64>> =
            deltas.iter().map(|d| taus.iter().map(|t| 2.0 * d * d * t * (2.0 * t).cos()).collect()).collect();
        let table = DeviationTable { deltas: deltas.to_vec(), taus: taus.clone(), dc: dh.clone(), dh };
        let fit = fit_deviation_scaling(&table).unwrap();
        assert!((fit.loglog_slope - 2.0).abs() < 1e-3);
        assert!((fit.a - 2.0).abs() < 0.05);
    }

    #[test]
    fn flat_curve_is_rejected() {
        let taus = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(envelope_factor(&taus, &[0.0; 4]), Err(PshoError::TooFewExtrema { .. })));
    }
}
