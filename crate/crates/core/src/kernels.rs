//! Covariance kernels.
//!
//! The driving noise has a weight-stationary covariance
//! `q(x, y) = w(x) q_s(x − y) w(y)` where `q_s` is a Matérn kernel. The
//! Sobolev kernel `m_r` reproduces the state space `H^r ⊕ ℝ` through
//! `(x, y) ↦ 1 + m_r(x − y)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::special::{bessel_k, gamma};
use crate::{Error, Result};

pub use crate::special::bessel_k as bessel;

/// Stationary Matérn kernel
/// `ζ 2^{1−ν}/Γ(ν) (√(2ν)|x|/μ)^ν K_ν(√(2ν)|x|/μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatern", into = "RawMatern")]
pub struct MaternParams {
    nu: f64,
    mu: f64,
    zeta: f64,
    // 2^{1-ν}/Γ(ν), cached
    norm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatern {
    nu: f64,
    mu: f64,
    #[serde(default = "one")]
    zeta: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawMatern> for MaternParams {
    type Error = Error;
    fn try_from(r: RawMatern) -> Result<Self> {
        MaternParams::new(r.nu, r.mu, r.zeta)
    }
}

impl From<MaternParams> for RawMatern {
    fn from(m: MaternParams) -> Self {
        RawMatern {
            nu: m.nu,
            mu: m.mu,
            zeta: m.zeta,
        }
    }
}

impl MaternParams {
    pub fn new(nu: f64, mu: f64, zeta: f64) -> Result<Self> {
        for (name, v) in [("nu", nu), ("mu", mu), ("zeta", zeta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        let norm = 2f64.powf(1.0 - nu) / gamma(nu);
        Ok(Self { nu, mu, zeta, norm })
    }

    /// Matérn parameters with smoothness chosen so that `s_W = ν + 1/2`.
    pub fn with_noise_smoothness(s_w: f64, mu: f64, zeta: f64) -> Result<Self> {
        Self::new(s_w - 0.5, mu, zeta)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Noise smoothness `s_W = ν + 1/2`.
    pub fn noise_smoothness(&self) -> f64 {
        self.nu + 0.5
    }

    pub fn eval(&self, lag: f64) -> f64 {
        let z = (2.0 * self.nu).sqrt() * lag.abs() / self.mu;
        if z == 0.0 {
            return self.zeta;
        }
        if self.nu == 0.5 {
            return self.zeta * (-z).exp();
        }
        match bessel_k(self.nu, z) {
            Ok(k) if k.is_finite() => {
                let v = self.zeta * self.norm * z.powf(self.nu) * k;
                if v.is_finite() {
                    v.min(self.zeta)
                } else {
                    self.zeta
                }
            }
            // K_ν overflows only for z far below any grid spacing
            _ => self.zeta,
        }
    }
}

/// Evaluate the Matérn kernel at `lag`.
pub fn matern(params: &MaternParams, lag: f64) -> f64 {
    params.eval(lag)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightFn {
    #[default]
    #[serde(alias = "constant-one")]
    Constant,
    /// `scale·(1 + x²)^{−alpha}`
    Polynomial { alpha: f64, scale: f64 },
    /// `amplitude·exp(1 − 1/(1 − ((x − center)/half_width)²))` inside the
    /// support, zero outside.
    Bump {
        center: f64,
        half_width: f64,
        amplitude: f64,
    },
}


impl WeightFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightFn::Constant => 1.0,
            WeightFn::Polynomial { alpha, scale } => scale * (1.0 + x * x).powf(-alpha),
            WeightFn::Bump {
                center,
                half_width,
                amplitude,
            } => crate::profile::bump(x, center, half_width, amplitude),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightFn::Constant => Ok(()),
            WeightFn::Polynomial { alpha, scale } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::param("scale", format!("must be positive, got {scale}")));
                }
                Ok(())
            }
            WeightFn::Bump {
                half_width,
                amplitude,
                ..
            } => {
                if !(half_width > 0.0) {
                    return Err(Error::param("half_width", "must be positive"));
                }
                if !(amplitude > 0.0) {
                    return Err(Error::param("amplitude", "must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Weight-stationary kernel `q(x,y) = w(x)·q_s(x−y)·w(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub stationary: MaternParams,
    pub weight: WeightFn,
}

impl KernelSpec {
    pub fn new(stationary: MaternParams, weight: WeightFn) -> Result<Self> {
        weight.validate()?;
        Ok(Self { stationary, weight })
    }

    pub fn stationary(stationary: MaternParams) -> Self {
        Self {
            stationary,
            weight: WeightFn::Constant,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.weight.eval(x) * self.weight.eval(y)) * self.stationary.eval(x - y)
    }

    /// Same weight, new stationary part with `s_W = ν + 1/2`.
    pub fn with_noise_smoothness(&self, s_w: f64) -> Result<Self> {
        let m = MaternParams::with_noise_smoothness(s_w, self.stationary.mu(), self.stationary.zeta())?;
        Ok(Self {
            stationary: m,
            weight: self.weight,
        })
    }
}

/// A symmetric positive semidefinite kernel on the half-line.
pub trait CovarianceKernel {
    fn covariance(&self, x: f64, y: f64) -> f64;
}

impl CovarianceKernel for KernelSpec {
    fn covariance(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y)
    }
}

/// The reproducing kernel `1 + m_r(x − y)` of the state space `H^r ⊕ ℝ`.
#[derive(Debug, Clone, Copy)]
pub struct StateSpaceKernel(pub SobolevKernelParams);

impl CovarianceKernel for StateSpaceKernel {
    fn covariance(&self, x: f64, y: f64) -> f64 {
        1.0 + self.0.eval(x - y)
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: f64, y: f64) -> f64 {
    spec.eval(x, y)
}

/// Symmetric matrix `[q(x_i, x_j)]`.
pub fn kernel_matrix(spec: &KernelSpec, points: &[f64]) -> DMatrix<f64> {
    let n = points.len();
    let weights: Vec<f64> = points.iter().map(|&x| spec.weight.eval(x)).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = weights[i] * spec.stationary.eval(points[i] - points[j]) * weights[j];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Sobolev kernel `m_r` of `H^r(ℝ⁺)` in dimension one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SobolevKernelParams {
    r: f64,
}

impl TryFrom<f64> for SobolevKernelParams {
    type Error = Error;
    fn try_from(r: f64) -> Result<Self> {
        Self::new(r)
    }
}

impl From<SobolevKernelParams> for f64 {
    fn from(p: SobolevKernelParams) -> f64 {
        p.r
    }
}

impl SobolevKernelParams {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.5 && r.is_finite()) {
            return Err(Error::Domain(format!("Sobolev smoothness must exceed 1/2, got {r}")));
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `m_r(0) = 2^{−1/2} Γ(r − 1/2)/Γ(r)`.
    pub fn at_origin(&self) -> f64 {
        std::f64::consts::FRAC_1_SQRT_2 * gamma(self.r - 0.5) / gamma(self.r)
    }

    pub fn eval(&self, lag: f64) -> f64 {
        let x = lag.abs();
        if x == 0.0 {
            return self.at_origin();
        }
        let order = self.r - 0.5;
        match bessel_k(order, x) {
            Ok(k) => {
                let v = 2f64.powf(1.0 - self.r) / gamma(self.r) * x.powf(order) * k;
                if v.is_finite() {
                    v
                } else {
                    self.at_origin()
                }
            }
            Err(_) => self.at_origin(),
        }
    }
}

pub fn sobolev_kernel(params: &SobolevKernelParams, lag: f64) -> f64 {
    params.eval(lag)
}

/// Relative threshold below which the `H^r` quadratic form counts as zero.
pub const ETA_DENOMINATOR_TOL: f64 = 1e-12;

/// `‖I* η‖²` for `η = η̃/‖η̃‖` with `η̃ = Σ a_i (1 + m_r(x_i − ·))`:
///
/// `Σ a_i q_B(x_i, x_j) a_j / Σ a_i (1 + m_r(x_i − x_j)) a_j`.
pub fn eta_scaling<K: CovarianceKernel + ?Sized>(
    points: &[f64],
    coeffs: &[f64],
    r: f64,
    q_b: &K,
) -> Result<f64> {
    if points.len() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            actual: coeffs.len(),
        });
    }
    if points.is_empty() || coeffs.iter().all(|&a| a == 0.0) {
        return Err(Error::param("coeffs", "must not be all zero"));
    }
    for i in 0..points.len() {
        for j in 0..i {
            if points[i] == points[j] {
                return Err(Error::param("points", format!("duplicate point {}", points[i])));
            }
        }
    }
    let sobolev = SobolevKernelParams::new(r)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&xi, &ai)) in points.iter().zip(coeffs).enumerate() {
        for (&xj, &aj) in points[..=i].iter().zip(coeffs) {
            let factor = if xi == xj { 1.0 } else { 2.0 };
            num += factor * ai * q_b.covariance(xi, xj) * aj;
            den += factor * ai * (1.0 + sobolev.eval(xi - xj)) * aj;
        }
    }
    let scale: f64 = coeffs.iter().map(|a| a * a).sum::<f64>() * (1.0 + sobolev.at_origin());
    if den <= ETA_DENOMINATOR_TOL * scale {
        return Err(Error::DegenerateForm(den / scale));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn example_weight() -> WeightFn {
        WeightFn::Polynomial {
            alpha: 0.75,
            scale: 10f64.powf(-0.5),
        }
    }

    fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
        m.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matern_exponential_case() {
        let p = MaternParams::new(0.5, 1.0, 1.0).unwrap();
        assert!((matern(&p, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        let p = MaternParams::new(0.5, 0.7, 2.5).unwrap();
        for i in 0..=200 {
            let x = i as f64 * 0.1;
            let want = 2.5 * (-x / 0.7).exp();
            let got = p.eval(x);
            assert!(((got - want) / want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn matern_value_at_zero_is_variance() {
        for &(nu, mu, zeta) in &[(0.05, 1.0, 1.0), (0.1, 0.1, 1.0), (2.0, 0.5, 1.3), (4.5, 3.0, 0.2)] {
            let p = MaternParams::new(nu, mu, zeta).unwrap();
            assert_eq!(p.eval(0.0), zeta);
            // continuity from the right
            // the approach to ζ is like lag^{2ν}, so probe far below the scale
            assert!((p.eval(1e-60) - zeta).abs() < 0.05 * zeta);
        }
    }

    #[test]
    fn matern_frozen_oracle() {
        // mpmath: 1.3 · 2^{-1}/Γ(2) · z² K_2(z), z = 2·0.7/0.5
        let p = MaternParams::new(2.0, 0.5, 1.3).unwrap();
        let want = 0.409_356_803_757_612_24;
        assert!(((p.eval(0.7) - want) / want).abs() < 1e-10);
        assert_eq!(p.eval(-0.7), p.eval(0.7));
    }

    #[test]
    fn matern_rejects_bad_parameters() {
        assert!(MaternParams::new(0.0, 1.0, 1.0).is_err());
        assert!(MaternParams::new(1.0, -1.0, 1.0).is_err());
        assert!(MaternParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn kernel_eval_reduces_to_stationary_and_weighted_origin() {
        let m = MaternParams::new(0.5, 1.0, 1.0).unwrap();
        let k = KernelSpec::stationary(m);
        assert!((kernel_eval(&k, 0.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        let zeta = 1.7;
        let k = KernelSpec::new(MaternParams::new(0.1, 0.1, zeta).unwrap(), example_weight()).unwrap();
        assert!((kernel_eval(&k, 0.0, 0.0) - zeta / 10.0).abs() < 1e-15);
    }

    #[test]
    fn bump_weight_is_compact() {
        let w = WeightFn::Bump {
            center: 1.0,
            half_width: 2.0,
            amplitude: 1.0,
        };
        assert_eq!(w.eval(3.5), 0.0);
        assert!((w.eval(1.0) - 1.0).abs() < 1e-15);
        assert!(w.eval(0.0) > 0.0);
        assert!(WeightFn::Bump {
            center: 0.0,
            half_width: 0.0,
            amplitude: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sobolev_kernel_values() {
        let p = SobolevKernelParams::new(1.0).unwrap();
        assert!((p.eval(0.0) - (PI.sqrt() / 2f64.sqrt())).abs() < 1e-14);
        // m_1(1) = K_{1/2}(1) = √(π/2) e^{-1}
        let want = 0.461_068_504_447_894_56;
        assert!(((p.eval(1.0) - want) / want).abs() < 1e-12);
        let p = SobolevKernelParams::new(1.1).unwrap();
        let want = 0.832_188_019_914_455_8;
        assert!(((p.eval(0.37) - want) / want).abs() < 1e-10);
        assert!(SobolevKernelParams::new(0.5).is_err());
    }

    #[test]
    fn sobolev_origin_limits() {
        // mpmath values of 2^{-1/2} Γ(r − 1/2)/Γ(r)
        let cases = [
            (0.75, 2.092_099_240_106_203_3),
            (1.0, 1.253_314_137_315_500_3),
            (1.1, 1.106_866_122_338_179),
            (2.0, 0.626_657_068_657_750_1),
        ];
        for (r, want) in cases {
            let p = SobolevKernelParams::new(r).unwrap();
            assert!(((p.eval(0.0) - want) / want).abs() < 1e-13, "r={r}");
            assert!(((p.eval(1e-7) - want) / want).abs() < 1e-2, "r={r}");
        }
    }

    #[test]
    fn eta_scaling_single_point_and_identity_kernel() {
        let qb = KernelSpec::new(MaternParams::new(1.5, 1.0, 1.0).unwrap(), example_weight()).unwrap();
        let s = SobolevKernelParams::new(1.1).unwrap();
        let got = eta_scaling(&[0.3], &[2.0], 1.1, &qb).unwrap();
        assert!((got - qb.eval(0.3, 0.3) / (1.0 + s.at_origin())).abs() < 1e-15);
    }

    #[test]
    fn eta_scaling_frozen_oracle() {
        // mpmath double sum, q_B = polynomial example weight with Matérn(ν=1.5, μ=1, ζ=1)
        let qb = KernelSpec::new(MaternParams::new(1.5, 1.0, 1.0).unwrap(), example_weight()).unwrap();
        let got = eta_scaling(&[0.0, 1.0], &[1.0, -1.0], 1.1, &qb).unwrap();
        let want = 0.061_184_531_574_641_8;
        assert!(((got - want) / want).abs() < 1e-10);
    }

    #[test]
    fn eta_scaling_rejects_degenerate_input() {
        let qb = KernelSpec::stationary(MaternParams::new(1.5, 1.0, 1.0).unwrap());
        assert!(eta_scaling(&[0.0, 1.0], &[0.0, 0.0], 1.1, &qb).is_err());
        assert!(eta_scaling(&[0.0, 1.0], &[1.0], 1.1, &qb).is_err());
        assert!(eta_scaling(&[0.0, 1.0], &[1.0, 1.0], 0.4, &qb).is_err());
        // nearly coincident points with opposite coefficients cancel
        let err = eta_scaling(&[0.0, 1e-12], &[1.0, -1.0], 2.0, &qb).unwrap_err();
        assert!(matches!(err, Error::DegenerateForm(_)));
    }

    #[test]
    fn kernel_matrix_small_cases() {
        let m = MaternParams::new(0.5, 1.0, 1.0).unwrap();
        let k = KernelSpec::stationary(m);
        let one = kernel_matrix(&k, &[0.25]);
        assert_eq!(one.shape(), (1, 1));
        assert_eq!(one[(0, 0)], 1.0);
        let pts: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        let mat = kernel_matrix(&k, &pts);
        for i in 1..5 {
            for j in 1..5 {
                assert_eq!(mat[(i, j)], mat[(i - 1, j - 1)], "Toeplitz");
            }
        }
        // exponential kernel on a uniform grid: eigenvalues (1−ρ²)/(1−2ρcosθ+ρ²) > 0
        assert!(min_eigenvalue(&mat) > 0.0);
    }

    proptest! {
        #[test]
        fn kernel_matrix_symmetric_psd(
            nu in 0.05f64..3.0,
            mu in 0.05f64..2.0,
            alpha in 0.1f64..2.0,
            pts in proptest::collection::vec(0.0f64..5.0, 1..32),
        ) {
            let k = KernelSpec::new(
                MaternParams::new(nu, mu, 1.0).unwrap(),
                WeightFn::Polynomial { alpha, scale: 0.5 },
            ).unwrap();
            let m = kernel_matrix(&k, &pts);
            let max_diag = (0..pts.len()).map(|i| m[(i, i)]).fold(0.0, f64::max);
            prop_assert!(m.clone().transpose() == m);
            prop_assert!(min_eigenvalue(&m) >= -1e-8 * max_diag);
        }

        #[test]
        fn kernel_symmetry_and_cauchy_schwarz(
            nu in 0.05f64..4.0, x in 0.0f64..10.0, y in 0.0f64..10.0,
        ) {
            let k = KernelSpec::new(
                MaternParams::new(nu, 0.8, 1.3).unwrap(),
                WeightFn::Polynomial { alpha: 0.75, scale: 0.3 },
            ).unwrap();
            prop_assert_eq!(k.eval(x, y), k.eval(y, x));
            prop_assert!(k.eval(x, x) >= 0.0);
            let q = k.eval(x, y);
            prop_assert!(q * q <= k.eval(x, x) * k.eval(y, y) * (1.0 + 1e-12));
        }

        #[test]
        fn sobolev_kernel_is_even(r in 0.51f64..4.0, x in -20.0f64..20.0) {
            let p = SobolevKernelParams::new(r).unwrap();
            prop_assert_eq!(p.eval(x), p.eval(-x));
        }

        #[test]
        fn eta_scaling_invariant_under_coefficient_rescaling(
            a in proptest::collection::vec(-2.0f64..2.0, 3),
            c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
            let qb = KernelSpec::stationary(MaternParams::new(1.5, 1.0, 1.0).unwrap());
            let pts = [0.0, 0.7, 2.1];
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            let base = eta_scaling(&pts, &a, 1.1, &qb).unwrap();
            let got = eta_scaling(&pts, &scaled, 1.1, &qb).unwrap();
            prop_assert!(((got - base) / base).abs() < 1e-10);
        }
    }

    #[test]
    fn eta_scaling_equals_one_for_state_space_kernel() {
        let r = 1.5;
        let q_b = StateSpaceKernel(SobolevKernelParams::new(r).unwrap());
        let got = eta_scaling(&[0.0, 0.4, 1.3], &[0.7, -1.2, 0.4], r, &q_b).unwrap();
        assert!((got - 1.0).abs() < 1e-14);
        let got = eta_scaling(&[2.0], &[1.0], r, &q_b).unwrap();
        assert!((got - 1.0).abs() < 1e-14);
    }
}
