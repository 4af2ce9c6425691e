//! Energy estimates from a moment table.
//!
//! With `c_m`, `h_m` the measured moments,
//!
//! ```text
//! B_n = sum_{k<n} (-1)^k 2 C(2n,k) c_{n-k} + (-1)^n C(2n,n)
//! A_n = sum_{k<n} (-1)^k 2 C(2n,k) h_{n-k} + (-1)^n C(2n,n) h_0
//! ```
//!
//! so that `<sin^{2n}(H tau)> = (-1/4)^n B_n` and the filtered energy is
//! `A_n / B_n`. Terms grow like `4^n` while the sum shrinks, hence the
//! extended-precision accumulation.

use num_bigint::{BigInt, BigUint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PshoError, Result};
use crate::extended::ExtendedReal;
use crate::sigma::MomentTable;

/// Clamp window for `Q_n` and the arcsine argument.
pub const RATIO_TOLERANCE: f64 = 1e-9;

pub const GUARD_BITS: u32 = 128;
pub const BASE_PRECISION: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Fixed significand width; `None` selects `max(256, 2n + 128)` per power.
    pub precision_bits: Option<u32>,
    /// Sign used for `E'_n` when `A_n/B_n` is unavailable.
    pub negative_default: bool,
    /// Per-moment error scale; `None` takes it from the table's noise model.
    pub delta_max: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { precision_bits: None, negative_default: true, delta_max: None }
    }
}

impl EstimatorConfig {
    pub fn required_precision(n: usize) -> u32 {
        2 * n as u32 + GUARD_BITS
    }

    pub fn precision_for(&self, n: usize) -> Result<u32> {
        let needed = Self::required_precision(n);
        match self.precision_bits {
            Some(p) if p < needed => Err(PshoError::InsufficientPrecision { power: n, needed, configured: p }),
            Some(p) => Ok(p),
            None => Ok(needed.max(BASE_PRECISION)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PshoEstimate {
    pub n: usize,
    /// `A_n / B_n`.
    pub energy: f64,
    /// `-B_n / (4 B_{n-1})`, unclamped.
    pub q: f64,
    /// Whether `q` lies in `[0, 1]` up to [`RATIO_TOLERANCE`].
    pub q_valid: bool,
    /// `sign * asin(sqrt(q)) / tau`, absent when `q` is invalid.
    pub energy_prime: Option<f64>,
    pub a: ExtendedReal,
    pub b: ExtendedReal,
    /// `delta_max * (4^n - C(2n,n))`.
    pub error_bound: f64,
    /// Whether the error bound reaches `|B_n|`.
    pub noise_dominated: bool,
}

/// Exact `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> Result<BigUint> {
    if k > n {
        return Err(PshoError::InvalidArgument(format!("binomial({n}, {k}) has k > n")));
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    Ok(acc)
}

/// `C(2n, k)` for `k = 0..=n`.
pub fn central_row(n: usize) -> Vec<BigUint> {
    let two_n = 2 * n as u64;
    let mut row = Vec::with_capacity(n + 1);
    let mut c = BigUint::from(1u32);
    row.push(c.clone());
    for k in 0..n as u64 {
        c = c * (two_n - k) / (k + 1);
        row.push(c.clone());
    }
    row
}

fn check_depth(table: &MomentTable, n: usize) -> Result<()> {
    if table.max_m() < n {
        return Err(PshoError::InsufficientDepth { needed: n, available: table.max_m() });
    }
    Ok(())
}

fn alternating_sum(row: &[BigUint], moments: &[f64], tail: f64, n: usize, precision: u32) -> ExtendedReal {
    let mut acc = ExtendedReal::zero(precision);
    for (k, ck) in row.iter().enumerate().take(n) {
        let mut coeff = BigInt::from(ck.clone()) << 1u32;
        if k % 2 == 1 {
            coeff = -coeff;
        }
        acc = acc.add(&ExtendedReal::from_product(&coeff, moments[n - k], precision));
    }
    let mut centre = BigInt::from(row[n].clone());
    if n % 2 == 1 {
        centre = -centre;
    }
    acc.add(&ExtendedReal::from_product(&centre, tail, precision))
}

/// `B_n` alone.
pub fn assemble_b(table: &MomentTable, n: usize, cfg: &EstimatorConfig) -> Result<ExtendedReal> {
    check_depth(table, n)?;
    let precision = cfg.precision_for(n)?;
    Ok(alternating_sum(&central_row(n), &table.c, 1.0, n, precision))
}

/// `(A_n, B_n)`.
pub fn assemble_ab(table: &MomentTable, n: usize, cfg: &EstimatorConfig) -> Result<(ExtendedReal, ExtendedReal)> {
    check_depth(table, n)?;
    let precision = cfg.precision_for(n)?;
    let row = central_row(n);
    let a = alternating_sum(&row, &table.h, table.h[0], n, precision);
    let b = alternating_sum(&row, &table.c, 1.0, n, precision);
    Ok((a, b))
}

fn ratio(a: &ExtendedReal, b: &ExtendedReal, n: usize) -> Result<f64> {
    a.div(b).map(|r| r.to_f64()).ok_or(PshoError::VanishingNormalization { n })
}

/// `E_n = A_n / B_n`.
pub fn energy_of_power(table: &MomentTable, n: usize, cfg: &EstimatorConfig) -> Result<f64> {
    let (a, b) = assemble_ab(table, n, cfg)?;
    ratio(&a, &b, n)
}

/// `Q_n = -B_n / (4 B_{n-1})`, unclamped.
pub fn qn_of_power(table: &MomentTable, n: usize, cfg: &EstimatorConfig) -> Result<f64> {
    if n == 0 {
        return Err(PshoError::InvalidArgument("Q_n needs n >= 1".into()));
    }
    let b = assemble_b(table, n, cfg)?;
    let prev = assemble_b(table, n - 1, cfg)?;
    Ok(-ratio(&b, &prev, n - 1)? / 4.0)
}

/// `sign * asin(sqrt(q)) / tau`.
pub fn energy_from_qn(q: f64, tau: f64, negative: bool) -> Result<f64> {
    if !(-RATIO_TOLERANCE..=1.0 + RATIO_TOLERANCE).contains(&q) || q.is_nan() {
        return Err(PshoError::RatioOutOfRange(q));
    }
    let mag = q.clamp(0.0, 1.0).sqrt().asin() / tau.abs();
    Ok(if negative { -mag } else { mag })
}

/// `delta_max (4^n - C(2n,n))`, infinite when it exceeds the double range.
pub fn error_amplification_bound(n: usize, delta_max: f64) -> f64 {
    error_amplification_bound_extended(n, delta_max).to_f64()
}

pub fn error_amplification_bound_extended(n: usize, delta_max: f64) -> ExtendedReal {
    let precision = EstimatorConfig::required_precision(n).max(BASE_PRECISION);
    let four_n = BigInt::from(1u32) << (2 * n);
    let centre = BigInt::from(central_row(n)[n].clone());
    ExtendedReal::from_product(&(four_n - centre), delta_max, precision)
}

/// Full estimate for one power.
pub fn estimate(table: &MomentTable, n: usize, cfg: &EstimatorConfig) -> Result<PshoEstimate> {
    if n == 0 {
        return Err(PshoError::InvalidArgument("powers start at 1".into()));
    }
    let (a, b) = assemble_ab(table, n, cfg)?;
    let prev = assemble_b(table, n - 1, cfg)?;
    let energy = ratio(&a, &b, n)?;
    let q = -ratio(&b, &prev, n - 1)? / 4.0;
    let q_valid = (-RATIO_TOLERANCE..=1.0 + RATIO_TOLERANCE).contains(&q);
    let negative = if energy.is_finite() { energy < 0.0 } else { cfg.negative_default };
    let energy_prime = if q_valid { energy_from_qn(q, table.tau, negative).ok() } else { None };
    let delta = cfg.delta_max.unwrap_or_else(|| table.noise.delta_max());
    let bound = error_amplification_bound_extended(n, delta);
    let noise_dominated = bound.cmp_abs(&b) != std::cmp::Ordering::Less;
    Ok(PshoEstimate { n, energy, q, q_valid, energy_prime, a, b, error_bound: bound.to_f64(), noise_dominated })
}

/// Estimates for each power, in order.
pub fn estimate_series(table: &MomentTable, powers: &[usize], cfg: &EstimatorConfig) -> Vec<Result<PshoEstimate>> {
    powers.par_iter().map(|&n| estimate(table, n, cfg)).collect()
}

pub fn series_to_csv(series: &[PshoEstimate]) -> String {
    let mut out = String::from("n,E_n,Q_n,E_prime_n,error_bound\n");
    for e in series {
        let ep = e.energy_prime.map_or_else(String::new, |v| format!("{v:.17e}"));
        out.push_str(&format!("{},{:.17e},{:.17e},{},{:e}\n", e.n, e.energy, e.q, ep, e.error_bound));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::EvolutionMode;
    use crate::sigma::NoiseSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eigen_table(e: f64, tau: f64, max_m: usize) -> MomentTable {
        let c: Vec<f64> = (0..=max_m).map(|m| (2.0 * e * tau * m as f64).cos()).collect();
        let h = c.iter().map(|x| e * x).collect();
        MomentTable::new(tau, c, h, NoiseSpec::ExactValue, EvolutionMode::Exact)
    }

    #[test]
    fn small_binomials() {
        assert_eq!(binomial(4, 2).unwrap(), BigUint::from(6u32));
        assert_eq!(binomial(0, 0).unwrap(), BigUint::from(1u32));
        assert!(binomial(2, 3).is_err());
        let row = central_row(3);
        let want: Vec<BigUint> = [1u32, 6, 15, 20].iter().map(|&v| BigUint::from(v)).collect();
        assert_eq!(row, want);
    }

    #[test]
    fn hand_evaluated_b() {
        let t = MomentTable::new(
            std::f64::consts::FRAC_PI_2,
            vec![1.0, -1.0, 1.0],
            vec![1.0, -1.0, 1.0],
            NoiseSpec::ExactValue,
            EvolutionMode::Exact,
        );
        let cfg = EstimatorConfig::default();
        assert_eq!(assemble_b(&t, 1, &cfg).unwrap().to_f64(), -4.0);
        assert_eq!(assemble_b(&t, 2, &cfg).unwrap().to_f64(), 16.0);
        assert_eq!(qn_of_power(&t, 2, &cfg).unwrap(), 1.0);
        assert_eq!(assemble_b(&t, 0, &cfg).unwrap().to_f64(), 1.0);
    }

    #[test]
    fn eigenstate_estimates() {
        let (e, tau) = (-1.3, 0.6);
        let t = eigen_table(e, tau, 20);
        let cfg = EstimatorConfig::default();
        // rounding of the moments is amplified by about sin^{-2n}
        for n in 1..=20 {
            let est = estimate(&t, n, &cfg).unwrap();
            assert_abs_diff_eq!(est.energy, e, epsilon = 1e-9);
            assert_abs_diff_eq!(est.q, (e * tau).sin().powi(2), epsilon = 1e-9);
            assert_abs_diff_eq!(est.energy_prime.unwrap(), e, epsilon = 1e-9);
        }
    }

    #[test]
    fn depth_and_precision_errors() {
        let t = eigen_table(-1.0, 0.5, 4);
        let cfg = EstimatorConfig::default();
        assert_eq!(energy_of_power(&t, 5, &cfg), Err(PshoError::InsufficientDepth { needed: 5, available: 4 }));
        let narrow = EstimatorConfig { precision_bits: Some(129), ..cfg };
        assert!(matches!(energy_of_power(&t, 1, &narrow), Err(PshoError::InsufficientPrecision { .. })));
        let exact = EstimatorConfig { precision_bits: Some(130), ..cfg };
        assert!(energy_of_power(&t, 1, &exact).is_ok());
    }

    #[test]
    fn vanishing_b_is_reported() {
        let t = eigen_table(-1.0, 0.0, 3);
        assert_eq!(
            energy_of_power(&t, 2, &EstimatorConfig::default()),
            Err(PshoError::VanishingNormalization { n: 2 })
        );
    }

    #[test]
    fn asin_inversion() {
        assert_abs_diff_eq!(energy_from_qn(0.5f64.sin().powi(2), 0.5, false).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(energy_from_qn(0.0, 0.5, true).unwrap(), 0.0);
        assert!(energy_from_qn(1.1, 0.5, true).is_err());
        assert!(energy_from_qn(-0.1, 0.5, true).is_err());
        assert_abs_diff_eq!(energy_from_qn(1.0 + 1e-10, 1.0, true).unwrap(), -std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn bound_small_n() {
        assert_eq!(error_amplification_bound(1, 1.0), 2.0);
        assert_eq!(error_amplification_bound(2, 0.5), 5.0);
        assert!(error_amplification_bound(600, 1.0).is_infinite());
    }

    #[test]
    fn csv_columns() {
        let t = eigen_table(-1.0, 0.5, 2);
        let s: Vec<PshoEstimate> =
            estimate_series(&t, &[1, 2], &EstimatorConfig::default()).into_iter().map(|r| r.unwrap()).collect();
        let csv = series_to_csv(&s);
        assert!(csv.starts_with("n,E_n,Q_n,E_prime_n,error_bound\n1,"));
        assert_eq!(csv.lines().count(), 3);
    }

    fn ln_gamma_digits(n: u64) -> u64 {
        // digits of C(2n, n) via Stirling series for ln Gamma
        fn lg(x: f64) -> f64 {
            (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
        }
        let ln = lg(2.0 * n as f64 + 1.0) - 2.0 * lg(n as f64 + 1.0);
        (ln / std::f64::consts::LN_10).floor() as u64 + 1
    }

    #[test]
    fn central_binomial_digit_count() {
        let c = binomial(2000, 1000).unwrap();
        assert_eq!(c.to_string().len() as u64, ln_gamma_digits(1000));
    }

    proptest! {
        #[test]
        fn symmetry(n in 1u64..200, k in 0u64..400) {
            let k = k % (2 * n + 1);
            prop_assert_eq!(binomial(2 * n, k).unwrap(), binomial(2 * n, 2 * n - k).unwrap());
        }

        #[test]
        fn row_matches_binomial(n in 0usize..120) {
            let row = central_row(n);
            for (k, v) in row.iter().enumerate() {
                prop_assert_eq!(v, &binomial(2 * n as u64, k as u64).unwrap());
            }
        }

        #[test]
        fn bound_approaches_four_to_n(n in 1usize..=200) {
            let b = error_amplification_bound_extended(n, 1.0);
            let ratio = (b.log2_abs() - 2.0 * n as f64).exp2();
            // 1 - C(2n,n)/4^n, with C(2n,n)/4^n ~ 1/sqrt(pi n)
            let expected = 1.0 - 1.0 / (std::f64::consts::PI * n as f64).sqrt();
            prop_assert!((ratio - expected).abs() < 0.1 / n as f64 + 1e-9);
        }

        #[test]
        fn doubled_precision_agrees(e in -2.0f64..-0.2, tau in 0.1f64..0.7, n in 1usize..60) {
            let t = eigen_table(e, tau, n);
            let base = energy_of_power(&t, n, &EstimatorConfig::default()).unwrap();
            let wide = EstimatorConfig { precision_bits: Some(2 * (2 * n as u32 + 256)), ..Default::default() };
            prop_assert!((energy_of_power(&t, n, &wide).unwrap() - base).abs() < 1e-10);
        }
    }
}
