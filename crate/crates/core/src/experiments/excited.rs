use rayon::prelude::*;
use serde::Serialize;

use super::ground::{power_estimates, PowerEstimate};
use super::{detect_plateaus, ScanConfig, TauGrid};
use crate::error::{PshoError, Result};
use crate::evolution::EvolutionMode;
use crate::oracle;
use crate::hamiltonian::Hamiltonian;
use crate::statevector::basis_state;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcitedPlateau {
    pub energy: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub points: usize,
    /// Reference whose curve gave the longest run at this energy.
    pub reference: String,
    /// Every reference that produced a plateau at this energy.
    pub references: Vec<String>,
    pub n: usize,
    pub matched_index: Option<usize>,
    pub matched_energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceCurve {
    pub reference: String,
    /// `(tau, E_n)`, NaN where the estimate was rejected.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlateauReport {
    pub e0: f64,
    pub n: usize,
    pub half: usize,
    /// Sorted by energy.
    pub plateaus: Vec<ExcitedPlateau>,
    pub curves: Vec<ReferenceCurve>,
    /// Points that failed the convergence or reliability filter.
    pub rejected: usize,
}

impl PlateauReport {
    /// Attach the nearest eigenvalue within `tol` to each plateau.
    pub fn match_eigenvalues(&mut self, eigenvalues: &[f64], tol: f64) {
        for p in &mut self.plateaus {
            let best = eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - p.energy).abs().total_cmp(&(b.1 - p.energy).abs()))
                .filter(|(_, e)| (*e - p.energy).abs() <= tol);
            p.matched_index = best.map(|b| b.0);
            p.matched_energy = best.map(|b| *b.1);
        }
    }
}

/// Every bitstring reached by moving one `1` of `hf` onto a `0`.
pub fn single_excitation_refs(hf: &str) -> Result<Vec<String>> {
    if hf.is_empty() || !hf.chars().all(|c| c == '0' || c == '1') {
        return Err(PshoError::InvalidBitstring(hf.to_string()));
    }
    let bits: Vec<u8> = hf.bytes().collect();
    let mut out = Vec::new();
    for (i, &occ) in bits.iter().enumerate() {
        if occ != b'1' {
            continue;
        }
        for (j, &virt) in bits.iter().enumerate() {
            if virt != b'0' {
                continue;
            }
            let mut b = bits.clone();
            b.swap(i, j);
            out.push(String::from_utf8(b).expect("ascii"));
        }
    }
    Ok(out)
}

/// Scan τ from `|pi/(2 E0)|` to `|5 pi/(4 E0)|` for each reference at the
/// largest scheduled power, keep estimates that agree with the half power,
/// and pool the plateaus of all references.
pub fn excited_state_scan(h: &Hamiltonian, refs: &[String], e0: f64, cfg: &ScanConfig) -> Result<PlateauReport> {
    cfg.validate()?;
    if e0 == 0.0 || !e0.is_finite() {
        return Err(PshoError::InvalidArgument("ground energy must be finite and nonzero".into()));
    }
    let shifted = h.offset(cfg.offset_eps);
    let e0s = e0 + cfg.offset_eps;
    let grid = cfg.tau_grid.unwrap_or(TauGrid::Linear {
        start: (std::f64::consts::FRAC_PI_2 / e0s).abs(),
        stop: (1.25 * std::f64::consts::PI / e0s).abs(),
        steps: cfg.excited_points,
    });
    let taus = grid.points()?;
    let n = cfg.max_power();
    let half = (n / 2).max(1);
    let powers: Vec<usize> = if half < n { vec![half, n] } else { vec![n] };

    let mut curves = Vec::with_capacity(refs.len());
    let mut rejected = 0;
    for r in refs {
        let phi = basis_state(r, h.n_qubits())?;
        let weights = match (cfg.mode, cfg.noise.uses_shots()) {
            (EvolutionMode::Exact, false) => Some(oracle::spectral_weights(&shifted, &phi)?),
            _ => None,
        };
        let points: Vec<(f64, f64)> = taus
            .par_iter()
            .map(|&tau| {
                let est = power_estimates(&shifted, &phi, weights.as_ref(), tau, &powers, cfg.mode, cfg.noise, &cfg.estimator)?;
                Ok((tau, accepted(&est, cfg.conv_tol).map_or(f64::NAN, |e| e - cfg.offset_eps)))
            })
            .collect::<Result<_>>()?;
        rejected += points.iter().filter(|p| p.1.is_nan()).count();
        curves.push(ReferenceCurve { reference: r.clone(), points });
    }

    let mut found: Vec<ExcitedPlateau> = Vec::new();
    for c in &curves {
        for p in detect_plateaus(&c.points, cfg.plateau_window, cfg.plateau_tol) {
            found.push(ExcitedPlateau {
                energy: p.energy,
                tau_start: p.tau_start,
                tau_end: p.tau_end,
                points: p.len(),
                reference: c.reference.clone(),
                references: vec![c.reference.clone()],
                n,
                matched_index: None,
                matched_energy: None,
            });
        }
    }
    Ok(PlateauReport { e0, n, half, plateaus: merge(found, cfg.plateau_tol), curves, rejected })
}

fn accepted(est: &[PowerEstimate], tol: f64) -> Option<f64> {
    let last = est.last()?;
    let first = est.first()?;
    if last.noise_dominated || first.noise_dominated {
        return None;
    }
    match (first.energy, last.energy) {
        (Some(a), Some(b)) if (a - b).abs() <= tol / 2.0 => Some(b),
        _ => None,
    }
}

/// Pool plateaus whose energies lie within `tol`, keeping the longest run.
fn merge(mut found: Vec<ExcitedPlateau>, tol: f64) -> Vec<ExcitedPlateau> {
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let mut out: Vec<ExcitedPlateau> = Vec::new();
    for p in found {
        match out.last_mut() {
            Some(q) if (p.energy - q.energy).abs() <= tol => {
                let mut refs = std::mem::take(&mut q.references);
                for r in &p.references {
                    if !refs.contains(r) {
                        refs.push(r.clone());
                    }
                }
                if p.points > q.points {
                    *q = p;
                }
                q.references = refs;
            }
            _ => out.push(p),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::parse_hamiltonian;

    #[test]
    fn excitations() {
        assert_eq!(single_excitation_refs("10").unwrap(), vec!["01"]);
        assert_eq!(single_excitation_refs("1100").unwrap().len(), 4);
        let h4 = single_excitation_refs("11110000").unwrap();
        assert_eq!(h4.len(), 16);
        assert!(h4.contains(&"11011000".to_string()));
        assert!(h4.contains(&"01111000".to_string()));
        assert!(single_excitation_refs("12").is_err());
        assert!(single_excitation_refs("0000").unwrap().is_empty());
    }

    #[test]
    fn zero_overlap_never_plateaus() {
        // diagonal: the reference |0> overlaps only the -2 level
        let h = parse_hamiltonian("# n_qubits=1\n-1.5\n-0.5 Z0").unwrap();
        let cfg = ScanConfig { powers: vec![20, 40], ..Default::default() };
        let r = excited_state_scan(&h, &["0".to_string()], -2.0, &cfg).unwrap();
        assert!(!r.plateaus.is_empty());
        assert!(r.plateaus.iter().all(|p| (p.energy + 2.0).abs() < 1e-9));
    }

    #[test]
    fn empty_reference_list() {
        let h = parse_hamiltonian("# n_qubits=1\n-1 Z0").unwrap();
        let r = excited_state_scan(&h, &[], -1.0, &ScanConfig::default()).unwrap();
        assert!(r.plateaus.is_empty() && r.curves.is_empty());
    }

    #[test]
    fn merging_keeps_longest() {
        let mk = |e: f64, pts: usize, r: &str| ExcitedPlateau {
            energy: e,
            tau_start: 0.0,
            tau_end: 1.0,
            points: pts,
            reference: r.into(),
            references: vec![r.into()],
            n: 10,
            matched_index: None,
            matched_energy: None,
        };
        let merged = merge(vec![mk(-1.0, 4, "a"), mk(-1.0005, 9, "b"), mk(-0.5, 5, "a")], 1e-3);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].reference, "b");
        assert_eq!(merged[0].references, vec!["b".to_string(), "a".to_string()]);
    }
}
