use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plateau {
    /// Index range into the curve, inclusive.
    pub first: usize,
    pub last: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Median energy over the run.
    pub energy: f64,
    pub spread: f64,
}

impl Plateau {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Maximal runs of at least `window` consecutive points whose energies stay
/// within `tol` of each other. Non-finite energies break runs.
pub fn detect_plateaus(curve: &[(f64, f64)], window: usize, tol: f64) -> Vec<Plateau> {
    let window = window.max(1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < curve.len() {
        if !curve[i].1.is_finite() {
            i += 1;
            continue;
        }
        let (mut lo, mut hi) = (curve[i].1, curve[i].1);
        let mut j = i + 1;
        while j < curve.len() {
            let e = curve[j].1;
            if !e.is_finite() || hi.max(e) - lo.min(e) > tol {
                break;
            }
            lo = lo.min(e);
            hi = hi.max(e);
            j += 1;
        }
        if j - i >= window {
            let mut energies: Vec<f64> = curve[i..j].iter().map(|p| p.1).collect();
            out.push(Plateau {
                first: i,
                last: j - 1,
                tau_start: curve[i].0,
                tau_end: curve[j - 1].0,
                energy: median(&mut energies),
                spread: hi - lo,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curve() {
        let curve: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -1.0)).collect();
        let p = detect_plateaus(&curve, 4, 1e-3);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].first, p[0].last), (0, 9));
        assert_eq!(p[0].energy, -1.0);
    }

    #[test]
    fn steep_curve_has_none() {
        let curve: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64 * 0.01)).collect();
        assert!(detect_plateaus(&curve, 4, 1e-3).is_empty());
    }

    #[test]
    fn two_steps() {
        let mut curve: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, -2.0 + 1e-4 * i as f64)).collect();
        curve.push((6.0, -1.5));
        curve.extend((7..13).map(|i| (i as f64, -1.0)));
        let p = detect_plateaus(&curve, 4, 1e-3);
        assert_eq!(p.len(), 2);
        assert!((p[0].energy + 2.0).abs() < 1e-3);
        assert_eq!(p[1].energy, -1.0);
        assert_eq!((p[1].tau_start, p[1].tau_end), (7.0, 12.0));
    }

    #[test]
    fn nan_breaks_runs() {
        let mut curve: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, 0.5)).collect();
        curve[4].1 = f64::NAN;
        assert_eq!(detect_plateaus(&curve, 3, 1e-3).len(), 2);
        assert_eq!(detect_plateaus(&curve, 4, 1e-3).len(), 1);
        assert_eq!(detect_plateaus(&curve, 5, 1e-3).len(), 0);
    }
}
