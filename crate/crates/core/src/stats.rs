//! Compensated summation, Monte Carlo moments and log–log rate fits.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Neumaier-compensated running sum; the result depends only on the order
/// in which values are added.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running first and second moments of a family of scalar quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    first: Vec<NeumaierSum>,
    second: Vec<NeumaierSum>,
}

impl MomentAccumulator {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            first: vec![NeumaierSum::new(); len],
            second: vec![NeumaierSum::new(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds one sample of every quantity.
    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.first.len());
        for ((f, s), &v) in self.first.iter_mut().zip(self.second.iter_mut()).zip(values) {
            f.add(v);
            s.add(v * v);
        }
        self.count += 1;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.first[i].value() / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self, i: usize) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return 0.0;
        }
        let m = self.mean(i);
        ((self.second[i].value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self, i: usize) -> f64 {
        (self.variance(i) / self.count as f64).sqrt()
    }
}

pub fn mean(values: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    values.iter().for_each(|&v| s.add(v));
    s.value() / values.len() as f64
}

/// Standard error of the sample mean.
pub fn stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let mut s = NeumaierSum::new();
    values.iter().for_each(|&v| s.add((v - m) * (v - m)));
    (s.value() / (n - 1) as f64 / n as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest standardized deviation `|Ĉ_ij − C_ij| / se(Ĉ_ij)` between the
/// empirical second moments of mean-zero `samples` and `target`.
pub fn covariance_check(samples: &[Vec<f64>], target: &DMatrix<f64>) -> f64 {
    covariance_check_entries(samples, target, |_, _| true)
}

/// As [`covariance_check`], restricted to entries selected by `keep`.
pub fn covariance_check_entries(samples: &[Vec<f64>], target: &DMatrix<f64>, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let n = target.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            if !keep(i, j) {
                continue;
            }
            let prods: Vec<f64> = samples.iter().map(|s| s[i] * s[j]).collect();
            let m = mean(&prods);
            let se = stderr(&prods);
            let dev = (m - target[(i, j)]).abs();
            let z = if se > 0.0 {
                dev / se
            } else if dev <= 1e-14 * target[(i, j)].abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
    }
    worst
}

/// Least-squares fit of `log2(error)` against `log2(resolution)`; `slope`
/// is the observed order (positive when the error decreases with the
/// resolution).
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the fit residuals in `log2` units.
    pub residual: f64,
    pub points_used: usize,
}

/// Floor on the residual threshold used to flag a pre-asymptotic point.
pub const PREASYMPTOTIC_FLOOR: f64 = 0.05;
/// Multiple of the remaining fit's residual beyond which the coarsest point
/// is considered pre-asymptotic.
pub const PREASYMPTOTIC_FACTOR: f64 = 3.0;

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        .sqrt();
    (slope, intercept, res)
}

/// Fits `log2 e = c − p·log2 r` over `(resolution, error)` pairs given in
/// any order, returning `p` as `slope`.
///
/// The resolutions are step sizes (`h` or `k`), so the order `p` is the
/// plain slope of `log2 e` against `log2 r`. When `drop_preasymptotic` is
/// set and at least three points would remain, the coarsest point is
/// dropped if it misses the line through the remaining points by more than
/// `max(3 × their residual, 0.05)`.
pub fn fit_rate(points: &[(f64, f64)], drop_preasymptotic: bool) -> Result<RateFit> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    if pts.iter().any(|&(r, e)| !(r > 0.0) || !(e > 0.0) || !r.is_finite() || !e.is_finite()) {
        return Err(Error::Domain("rate fit needs positive finite resolutions and errors".into()));
    }
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: pts.len(),
        });
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let logs = |p: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { p.iter().map(|&(r, e)| (r.log2(), e.log2())).unzip() };
    if drop_preasymptotic && pts.len() >= 4 {
        let (x, y) = logs(&pts[1..]);
        let (s, c, res) = ols(&x, &y);
        let (x0, y0) = (pts[0].0.log2(), pts[0].1.log2());
        let miss = (y0 - c - s * x0).abs();
        if miss > (PREASYMPTOTIC_FACTOR * res).max(PREASYMPTOTIC_FLOOR) {
            pts.remove(0);
        }
    }
    let (x, y) = logs(&pts);
    let (slope, intercept, residual) = ols(&x, &y);
    Ok(RateFit {
        slope,
        intercept,
        residual,
        points_used: pts.len(),
    })
}

/// Plain least squares `y = c + s·x`, returning `(s, c, residual norm)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: x.len(),
        });
    }
    Ok(ols(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let mut s = NeumaierSum::new();
        for v in [1.0, 1e100, 1.0, -1e100] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn moments_of_known_data() {
        let mut acc = MomentAccumulator::new(1);
        for v in [1.0, 2.0, 3.0, 4.0] {
            acc.push(&[v]);
        }
        assert_eq!(acc.mean(0), 2.5);
        assert!((acc.variance(0) - 5.0 / 3.0).abs() < 1e-15);
        assert!((acc.stderr(0) - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((stderr(&[1.0, 2.0, 3.0, 4.0]) - acc.stderr(0)).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(f64, f64)> = (2..7).map(|e| (2f64.powi(-e), 3.0 * 2f64.powi(-e).powf(1.5))).collect();
        let fit = fit_rate(&pts, true).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.log2()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.points_used, 5);
    }

    #[test]
    fn preasymptotic_point_is_dropped_only_when_off_line() {
        let mut pts: Vec<(f64, f64)> = (2..7).map(|e| (2f64.powi(-e), 2f64.powi(-e))).collect();
        pts[0].1 *= 4.0;
        let fit = fit_rate(&pts, true).unwrap();
        assert_eq!(fit.points_used, 4);
        assert!((fit.slope - 1.0).abs() < 1e-12);
        let kept = fit_rate(&pts, false).unwrap();
        assert_eq!(kept.points_used, 5);
        // never below three points
        let three = fit_rate(&pts[..3], true).unwrap();
        assert_eq!(three.points_used, 3);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&[(0.5, 1.0)], false).is_err());
        assert!(fit_rate(&[(0.5, 0.0), (0.25, 1.0)], false).is_err());
        assert!(linear_fit(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn fitted_slope_is_scale_invariant(p in 0.1f64..3.0, c in 0.01f64..100.0, noise in proptest::collection::vec(-0.01f64..0.01, 5)) {
            let pts: Vec<(f64, f64)> = (0..5).map(|i| {
                let r = 2f64.powi(-(i as i32) - 2);
                (r, c * r.powf(p) * 2f64.powf(noise[i]))
            }).collect();
            let a = fit_rate(&pts, false).unwrap();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(r, e)| (r, 7.0 * e)).collect();
            let b = fit_rate(&scaled, false).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-10);
            prop_assert!((a.slope - p).abs() < 0.05);
        }

        #[test]
        fn compensated_sum_is_order_exact_for_integers(v in proptest::collection::vec(-1_000_000i64..1_000_000, 1..50)) {
            let mut s = NeumaierSum::new();
            for &x in &v { s.add(x as f64); }
            prop_assert_eq!(s.value(), v.iter().sum::<i64>() as f64);
        }
    }
}
