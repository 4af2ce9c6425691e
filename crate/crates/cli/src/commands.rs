use serde::Serialize;
use serde_json::json;

use psho_core::experiments::{
    doubling_powers, excited_state_scan, fit_deviation_scaling, ground_state_search, single_excitation_refs,
    trotter_deviation_sweep, ScanConfig, TauGrid,
};
use psho_core::hamiltonian::parse_hamiltonian;
use psho_core::statevector::basis_state;
use psho_core::{direct, estimator, oracle, sigma, EvolutionMode, Hamiltonian, NoiseSpec, StateVector};

use crate::config::RunConfig;
use crate::output::{table, Artifact};
use crate::CliError;

pub type Runner = fn(&RunConfig) -> Result<Artifact, CliError>;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn load(cfg: &RunConfig) -> Result<Hamiltonian, CliError> {
    let path = cfg.ham.as_ref().ok_or_else(|| input("--ham is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    parse_hamiltonian(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Explicit references, or the `hf_bitstring` metadata when none are given.
fn references(cfg: &RunConfig, h: &Hamiltonian) -> Result<Vec<String>, CliError> {
    match &cfg.refs {
        Some(list) => {
            let refs: Vec<String> = list.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if refs.is_empty() {
                return Err(input("reference list is empty"));
            }
            Ok(refs)
        }
        None => h
            .hf_bitstring()
            .map(|s| vec![s.to_string()])
            .ok_or_else(|| input("no --ref given and the Hamiltonian has no hf_bitstring")),
    }
}

/// Equal superposition of the reference basis states.
fn reference_state(refs: &[String], n_qubits: usize) -> Result<StateVector, CliError> {
    let mut amps = vec![Default::default(); 1 << n_qubits];
    for r in refs {
        let b = basis_state(r, n_qubits)?;
        for (a, x) in amps.iter_mut().zip(b.amplitudes()) {
            *a += x;
        }
    }
    let mut phi = StateVector::from_amplitudes(n_qubits, amps)?;
    if phi.normalize() == 0.0 {
        return Err(input("references cancel to the zero state"));
    }
    Ok(phi)
}

fn mode(cfg: &RunConfig) -> Result<EvolutionMode, CliError> {
    match cfg.mode.as_deref().unwrap_or("exact") {
        "exact" => Ok(EvolutionMode::Exact),
        "trotter" => {
            let delta = match cfg.delta.as_deref() {
                Some([d]) => *d,
                Some(_) => return Err(input("--mode trotter takes a single --delta")),
                None => return Err(input("--mode trotter needs --delta")),
            };
            Ok(EvolutionMode::trotter(delta)?)
        }
        other => Err(input(format!("unknown mode {other:?}; expected exact or trotter"))),
    }
}

fn noise(cfg: &RunConfig) -> Result<NoiseSpec, CliError> {
    match &cfg.noise {
        Some(s) => s.parse::<NoiseSpec>().map_err(|e| input(format!("--noise: {e}"))),
        None => Ok(NoiseSpec::ExactValue),
    }
}

/// Linear when `--tau-steps` is given, a 0.97 descent from `--tau-start`
/// otherwise, and the driver default when neither is set.
fn tau_grid(cfg: &RunConfig) -> Result<Option<TauGrid>, CliError> {
    match (cfg.tau_start, cfg.tau_stop, cfg.tau_steps) {
        (None, None, None) => Ok(None),
        (Some(start), stop, Some(steps)) => Ok(Some(TauGrid::Linear { start, stop: stop.unwrap_or(start), steps })),
        (Some(start), stop, None) => Ok(Some(TauGrid::Geometric {
            start,
            factor: 0.97,
            stop: stop.unwrap_or(0.5 * start),
        })),
        (None, _, _) => Err(input("--tau-stop and --tau-steps need --tau-start")),
    }
}

fn scan_config(cfg: &RunConfig, default_powers: Vec<usize>) -> Result<ScanConfig, CliError> {
    Ok(ScanConfig {
        tau_grid: tau_grid(cfg)?,
        powers: cfg.powers.clone().unwrap_or(default_powers),
        noise: noise(cfg)?,
        mode: mode(cfg)?,
        offset_eps: cfg.offset.unwrap_or(0.0),
        ..ScanConfig::default()
    })
}

fn single_tau(cfg: &RunConfig) -> Result<f64, CliError> {
    let tau = cfg.tau.or(cfg.tau_start).ok_or_else(|| input("--tau is required"))?;
    if !tau.is_finite() {
        return Err(input("--tau must be finite"));
    }
    Ok(tau)
}

#[derive(Serialize)]
struct TraceRow<'a> {
    tau: f64,
    n: usize,
    energy: Option<f64>,
    q: Option<f64>,
    energy_prime: Option<f64>,
    error_bound: f64,
    noise_dominated: bool,
    failure: Option<&'a str>,
}

pub fn ground(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let h = load(cfg)?;
    let phi = reference_state(&references(cfg, &h)?, h.n_qubits())?;
    let scan = scan_config(cfg, ScanConfig::default().powers)?;
    let r = ground_state_search(&h, &phi, &scan)?;

    let rows: Vec<TraceRow> = r
        .trace
        .iter()
        .flat_map(|p| {
            p.estimates.iter().map(move |e| TraceRow {
                tau: p.tau,
                n: e.n,
                energy: e.energy,
                q: e.q,
                energy_prime: e.energy_prime,
                error_bound: e.error_bound,
                noise_dominated: e.noise_dominated,
                failure: e.failure.as_deref(),
            })
        })
        .collect();
    let mut a = Artifact::new(&r)?
        .with("energy", opt(r.energy))
        .with("energy_prime", opt(r.energy_prime))
        .with("reference_energy", r.reference_energy)
        .with("tau_start", r.tau_start);
    if let Some(p) = &r.plateau {
        a = a.with("plateau_tau", format!("{}..{}", p.tau_start, p.tau_end));
    }
    a.csv = table(&rows)?;
    if r.energy.is_none() {
        a.missing = Some("no converged plateau along the tau descent".into());
    }
    Ok(a)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| v.to_string())
}

#[derive(Serialize)]
struct PlateauRow<'a> {
    energy: f64,
    tau_start: f64,
    tau_end: f64,
    points: usize,
    n: usize,
    reference: &'a str,
    references: String,
}

pub fn excited(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let h = load(cfg)?;
    let refs = match (&cfg.refs, h.hf_bitstring()) {
        (None, Some(hf)) => {
            let mut r = vec![hf.to_string()];
            r.extend(single_excitation_refs(hf)?);
            r
        }
        _ => references(cfg, &h)?,
    };
    let scan = scan_config(cfg, vec![50, 100])?;
    let e0 = match cfg.e0 {
        Some(e) => e,
        None => {
            let phi = reference_state(&refs[..1], h.n_qubits())?;
            let ground_scan = ScanConfig { tau_grid: None, powers: doubling_powers(64), ..scan.clone() };
            ground_state_search(&h, &phi, &ground_scan)?
                .energy
                .ok_or_else(|| CliError::NoResult("ground search found no plateau; pass --e0".into()))?
        }
    };
    let r = excited_state_scan(&h, &refs, e0, &scan)?;

    let rows: Vec<PlateauRow> = r
        .plateaus
        .iter()
        .map(|p| PlateauRow {
            energy: p.energy,
            tau_start: p.tau_start,
            tau_end: p.tau_end,
            points: p.points,
            n: p.n,
            reference: &p.reference,
            references: p.references.join(" "),
        })
        .collect();
    let mut a = Artifact::new(&r)?
        .with("e0", r.e0)
        .with("n", r.n)
        .with("plateaus", r.plateaus.len())
        .with("rejected", r.rejected);
    a.csv = table(&rows)?;
    if r.plateaus.is_empty() {
        a.missing = Some("no plateaus in the tau window".into());
    }
    Ok(a)
}

#[derive(Serialize)]
struct MomentRow {
    m: usize,
    c: f64,
    h: f64,
    energy: Option<f64>,
    q: Option<f64>,
    energy_prime: Option<f64>,
    error_bound: Option<f64>,
    noise_dominated: Option<bool>,
}

pub fn moments(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let h = load(cfg)?.offset(cfg.offset.unwrap_or(0.0));
    let phi = reference_state(&references(cfg, &h)?, h.n_qubits())?;
    let tau = single_tau(cfg)?;
    let max_m = cfg.powers.as_ref().and_then(|p| p.iter().max().copied()).unwrap_or(32);
    if max_m == 0 {
        return Err(input("--powers must contain a positive power"));
    }
    let table_m = sigma::moment_table(&h, &phi, tau, max_m, mode(cfg)?, noise(cfg)?)?;
    let est_cfg = psho_core::EstimatorConfig::default();
    let powers: Vec<usize> = match &cfg.powers {
        Some(p) => p.clone(),
        None => (1..=max_m).collect(),
    };
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for &n in &powers {
        match estimator::estimate(&table_m, n, &est_cfg) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(json!({"n": n, "failure": e.to_string()})),
        }
    }
    let rows: Vec<MomentRow> = (0..=max_m)
        .map(|m| {
            let e = estimates.iter().find(|e| e.n == m);
            MomentRow {
                m,
                c: table_m.c[m],
                h: table_m.h[m],
                energy: e.map(|e| e.energy),
                q: e.map(|e| e.q),
                energy_prime: e.and_then(|e| e.energy_prime),
                error_bound: e.map(|e| e.error_bound),
                noise_dominated: e.map(|e| e.noise_dominated),
            }
        })
        .collect();
    let last = estimates.last();
    let mut a = Artifact::new(json!({"moments": table_m, "estimates": estimates, "failures": failures}))?
        .with("tau", tau)
        .with("energy", opt(last.map(|e| e.energy - cfg.offset.unwrap_or(0.0))))
        .with("n", opt(last.map(|e| e.n as f64)));
    a.csv = table(&rows)?;
    if estimates.is_empty() {
        a.missing = Some("no power produced an estimate".into());
    }
    Ok(a)
}

#[derive(Serialize)]
struct FactorRow {
    delta: f64,
    factor: f64,
    factor_c: f64,
    upper_slope: Option<f64>,
    lower_slope: Option<f64>,
}

pub fn trotter_error(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let h = load(cfg)?;
    let phi = reference_state(&references(cfg, &h)?, h.n_qubits())?;
    let deltas = cfg.delta.clone().unwrap_or_else(|| vec![0.01, 0.02, 0.05, 0.1, 0.2]);
    let grid = tau_grid(cfg)?.unwrap_or(TauGrid::Linear { start: 0.2, stop: 8.0, steps: 40 });
    let taus = grid.points()?;
    let t = trotter_deviation_sweep(&h, &phi, &deltas, &taus)?;
    let fit = fit_deviation_scaling(&t);
    let mut a;
    match fit {
        Ok(f) => {
            let rows: Vec<FactorRow> = f
                .per_delta
                .iter()
                .map(|d| FactorRow {
                    delta: d.delta,
                    factor: d.factor,
                    factor_c: d.factor_c,
                    upper_slope: d.upper_slope,
                    lower_slope: d.lower_slope,
                })
                .collect();
            a = Artifact::new(json!({"table": t, "fit": f}))?
                .with("a", f.a)
                .with("residual", f.residual)
                .with("loglog_slope", f.loglog_slope);
            a.csv = table(&rows)?;
        }
        Err(e) => {
            a = Artifact::new(json!({"table": t, "fit": null, "failure": e.to_string()}))?;
            a.csv = t.to_csv();
            a.missing = Some(format!("scaling fit failed: {e}"));
        }
    }
    Ok(a)
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    probability: f64,
}

pub fn direct(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let h = load(cfg)?;
    let phi = reference_state(&references(cfg, &h)?, h.n_qubits())?;
    let tau = single_tau(cfg)?;
    let n = cfg.n.ok_or_else(|| input("--n is required"))?;
    let s = direct::run_direct(&h, &phi, tau, n, cfg.trials.unwrap_or(10_000), cfg.seed.unwrap_or(0), mode(cfg)?)?;
    let rows: Vec<StepRow> =
        s.step_probabilities.iter().enumerate().map(|(i, &p)| StepRow { step: i + 1, probability: p }).collect();
    let mut a = Artifact::new(&s)?
        .with("empirical_p", s.empirical_p)
        .with("predicted_p", s.predicted_p)
        .with("successes", s.successes)
        .with("conditioned_energy", s.conditioned_energy);
    a.csv = table(&rows)?;
    Ok(a)
}

#[derive(Serialize)]
struct LevelRow {
    index: usize,
    energy: f64,
    weight: Option<f64>,
}

/// Full spectrum without a reference; the invariant subspace of the
/// reference and its weights otherwise.
pub fn spectrum(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let h = load(cfg)?;
    let (energies, weights) = match &cfg.refs {
        None => (oracle::diagonalize(&h)?.eigenvalues().to_vec(), None),
        Some(_) => {
            let phi = reference_state(&references(cfg, &h)?, h.n_qubits())?;
            let w = oracle::spectral_weights(&h, &phi)?;
            (w.energies, Some(w.weights))
        }
    };
    let rows: Vec<LevelRow> = energies
        .iter()
        .enumerate()
        .map(|(i, &e)| LevelRow { index: i, energy: e, weight: weights.as_ref().map(|w| w[i]) })
        .collect();
    let mut a = Artifact::new(json!({"energies": energies, "weights": weights}))?
        .with("levels", energies.len())
        .with("lowest", energies.first().copied().unwrap_or(f64::NAN));
    a.csv = table(&rows)?;
    Ok(a)
}
