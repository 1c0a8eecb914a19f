//! Reference evaluators for the heat semigroup on an interval (sine series)
//! and on the half-line (reflection of the Gaussian kernel), together with
//! the localization bound used to size the truncated domain.

use std::f64::consts::PI;

use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Default bound on the neglected tail of the sine series.
pub const SPECTRAL_TAIL_TOL: f64 = 1e-12;

/// Composite Gauss–Legendre rule: `cells` equal cells with `points` nodes each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub cells: usize,
    pub points: usize,
    /// Half-width of the integration window around `x`, in units of the
    /// kernel standard deviation `√(2at)` (reflection evaluator only).
    pub width_sigmas: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            cells: 256,
            points: 8,
            width_sigmas: 12.0,
        }
    }
}

/// Number of sine modes and the tail estimate `e^{−λ_J t_min}·‖v‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralTruncation {
    pub modes: usize,
    pub tail_bound: f64,
}

/// Dirichlet eigenvalue `λ_{D,j} = aπ²j²/D²`.
pub fn eigenvalue(d: f64, a: f64, j: usize) -> f64 {
    a * PI * PI * (j * j) as f64 / (d * d)
}

/// Normalized eigenfunction `√(2/D)·sin(jπx/D)`.
pub fn eigenfunction(d: f64, j: usize, x: f64) -> f64 {
    (2.0 / d).sqrt() * (j as f64 * PI * x / d).sin()
}

impl SpectralTruncation {
    /// Smallest `J` with `e^{−λ_{D,J} t_min}·‖v‖ ≤ tol`.
    pub fn adaptive(d: f64, a: f64, t_min: f64, v_norm: f64, tol: f64) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::param("t", format!("time must be positive, got {t_min}")));
        }
        if v_norm <= tol {
            return Ok(Self {
                modes: 1,
                tail_bound: v_norm,
            });
        }
        let need = (v_norm / tol).ln() / t_min;
        let j = ((need / a).sqrt() * d / PI).ceil().max(1.0);
        if j > 1e7 {
            return Err(Error::Truncation(format!("t = {t_min} needs more than 10^7 sine modes")));
        }
        let modes = j as usize;
        Ok(Self {
            modes,
            tail_bound: (-eigenvalue(d, a, modes) * t_min).exp() * v_norm,
        })
    }
}

/// Sine-series representation of `S_D(t)v` with precomputed coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReference {
    length: f64,
    diffusivity: f64,
    coeffs: Vec<f64>,
    sup_norm: f64,
}

impl SpectralReference {
    /// Projects `v` onto the first `modes` eigenfunctions.
    pub fn new(v: impl Fn(f64) -> f64, d: f64, a: f64, modes: usize, quad: QuadSpec) -> Result<Self> {
        if !(d > 0.0 && a > 0.0) {
            return Err(Error::param("D", "domain length and diffusivity must be positive"));
        }
        if modes == 0 {
            return Err(Error::param("J", "need at least one mode"));
        }
        // resolve the highest mode with at least two cells per half-wave
        let cells = quad.cells.max(2 * modes);
        let gl = GaussLegendre::new(quad.points);
        let step = d / cells as f64;
        let mut coeffs = vec![0.0; modes];
        let mut sup_norm: f64 = 0.0;
        for c in 0..cells {
            for (y, w) in gl.mapped(c as f64 * step, (c + 1) as f64 * step) {
                let vy = v(y);
                sup_norm = sup_norm.max(vy.abs());
                let wv = w * vy * (2.0 / d).sqrt();
                // sin(jθ) by the Chebyshev recurrence
                let theta = PI * y / d;
                let two_cos = 2.0 * theta.cos();
                let (mut s_prev, mut s) = (0.0, theta.sin());
                for coeff in coeffs.iter_mut() {
                    *coeff += wv * s;
                    let next = two_cos * s - s_prev;
                    s_prev = s;
                    s = next;
                }
            }
        }
        Ok(Self {
            length: d,
            diffusivity: a,
            coeffs,
            sup_norm,
        })
    }

    /// Chooses the number of modes adaptively for times `t ≥ t_min`.
    pub fn adaptive(v: impl Fn(f64) -> f64, d: f64, a: f64, t_min: f64, quad: QuadSpec) -> Result<Self> {
        let probe = Self::new(&v, d, a, 1, quad)?;
        let trunc = SpectralTruncation::adaptive(d, a, t_min, probe.sup_norm.max(f64::MIN_POSITIVE), SPECTRAL_TAIL_TOL)?;
        Self::new(v, d, a, trunc.modes, quad)
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Tail estimate `e^{−λ_{D,J} t}·sup|v|` for the neglected modes.
    pub fn tail_bound(&self, t: f64) -> f64 {
        (-eigenvalue(self.length, self.diffusivity, self.modes()) * t).exp() * self.sup_norm
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::param("t", format!("time must be positive, got {t}")));
        }
        let d = self.length;
        let theta = PI * x / d;
        let two_cos = 2.0 * theta.cos();
        let (mut s_prev, mut s) = (0.0, theta.sin());
        let mut sum = 0.0;
        for (j, c) in self.coeffs.iter().enumerate() {
            sum += (-eigenvalue(d, self.diffusivity, j + 1) * t).exp() * c * s;
            let next = two_cos * s - s_prev;
            s_prev = s;
            s = next;
        }
        Ok(sum * (2.0 / d).sqrt())
    }
}

/// `(S_D(t)v)(x)` on `(0, D)` with `J` sine modes, or adaptively chosen
/// modes when `modes` is `None`.
pub fn spectral_semigroup(
    v: impl Fn(f64) -> f64,
    t: f64,
    x: f64,
    d: f64,
    a: f64,
    modes: Option<usize>,
) -> Result<f64> {
    let quad = QuadSpec::default();
    let reference = match modes {
        Some(j) => {
            let r = SpectralReference::new(v, d, a, j, quad)?;
            if r.tail_bound(t) > SPECTRAL_TAIL_TOL {
                return Err(Error::Truncation(format!(
                    "{j} modes leave a tail of {:e} at t = {t}",
                    r.tail_bound(t)
                )));
            }
            r
        }
        None => SpectralReference::adaptive(v, d, a, t, quad)?,
    };
    reference.eval(t, x)
}

/// Boundary condition at `x = 0` for the reflected kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Odd reflection, `Φ(x−y) − Φ(x+y)`.
    Dirichlet,
    /// Even reflection, `Φ(x−y) + Φ(x+y)`.
    Neumann,
}

/// Mass of the window-truncated kernel above which a warning is issued.
pub const WINDOW_MASS_TOL: f64 = 1e-12;

/// Gaussian heat kernel `Φ(x, t) = e^{−x²/4at}/√(4πat)`.
pub fn heat_kernel(x: f64, t: f64, a: f64) -> f64 {
    (-x * x / (4.0 * a * t)).exp() / (4.0 * PI * a * t).sqrt()
}

/// `∫₀^∞ (Φ(x−y,t) ∓ Φ(x+y,t)) v(y) dy` on the half-line.
///
/// The integral is restricted to `|y − x| ≤ width_sigmas·√(2at)`; a warning
/// is logged when the kernel mass outside that window exceeds `1e-12`.
pub fn reflection_semigroup(
    v: impl Fn(f64) -> f64,
    t: f64,
    x: f64,
    a: f64,
    boundary: Boundary,
    quad: QuadSpec,
) -> Result<f64> {
    if !(t > 0.0) || !(a > 0.0) {
        return Err(Error::param("t", "time and diffusivity must be positive"));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x = {x} is not on the half-line")));
    }
    let sigma = (2.0 * a * t).sqrt();
    let half = quad.width_sigmas * sigma;
    let outside = statrs::function::erf::erfc(quad.width_sigmas / 2f64.sqrt());
    if outside > WINDOW_MASS_TOL {
        log::warn!("reflection quadrature window drops kernel mass {outside:e}");
    }
    let lo = (x - half).max(0.0);
    let hi = x + half;
    let sign = match boundary {
        Boundary::Dirichlet => -1.0,
        Boundary::Neumann => 1.0,
    };
    let gl = GaussLegendre::new(quad.points);
    Ok(gl.composite(lo, hi, quad.cells, |y| {
        (heat_kernel(x - y, t, a) + sign * heat_kernel(x + y, t, a)) * v(y)
    }))
}

/// Structural factor `exp(−(D − x)²/(8aT))` of the localization error.
pub fn localization_bound(d: f64, x: f64, a: f64, horizon: f64) -> f64 {
    let gap = (d - x).max(0.0);
    (-gap * gap / (8.0 * a * horizon)).exp()
}

/// Smallest domain `D ≥ max(2T − k, x_max)`, a multiple of the mesh width
/// `h`, whose localization bound at `x_max` is at most `target`.
pub fn choose_domain(horizon: f64, k: f64, a: f64, x_max: f64, target: f64, h: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::param("target", format!("must lie in (0, 1], got {target}")));
    }
    if !(h > 0.0) {
        return Err(Error::param("h", "mesh width must be positive"));
    }
    let floor = (2.0 * horizon - k).max(x_max);
    let needed = x_max + (8.0 * a * horizon * (1.0 / target).ln()).sqrt();
    let d = floor.max(needed);
    let cells = (d / h * (1.0 - 1e-12)).ceil();
    Ok(cells * h)
}
