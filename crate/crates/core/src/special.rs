//! Modified Bessel function of the second kind for real order.
//!
//! Half-integer orders use the terminating closed form. Other orders are
//! reduced to `μ = ν − round(ν)` in `[-1/2, 1/2]`, evaluated with Temme's
//! series for `x < 2` or Steed's continued fraction for `x ≥ 2`, and then
//! raised by forward recurrence, which is stable for `K`.

use std::f64::consts::PI;

use crate::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const SERIES_CROSSOVER: f64 = 2.0;

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `K_ν(x)` for `ν > 0`, `x > 0`.
///
/// Underflows to `0.0` once `e^{-x}` does.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("bessel_k order must be positive, got {nu}")));
    }
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Domain(format!("bessel_k argument must be positive, got {x}")));
    }
    if x > 745.0 {
        return Ok(0.0);
    }
    let shifted = nu - 0.5;
    if shifted.fract() == 0.0 && shifted < 64.0 {
        return Ok(half_integer(shifted as usize, x));
    }
    Ok(real_order(nu, x))
}

/// `K_{n+1/2}(x)` from `√(π/2x) e^{-x} Σ_k (n+k)! / (k!(n−k)!) (2x)^{-k}`.
fn half_integer(n: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        // ratio of consecutive coefficients (n+k+1)(n-k) / (k+1) over 2x
        term *= ((n + k + 1) * (n - k)) as f64 / ((k + 1) as f64 * 2.0 * x);
        sum += term;
    }
    (PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}

fn real_order(nu: f64, x: f64) -> f64 {
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (mut k_mu, mut k_mu1) = if x < SERIES_CROSSOVER {
        temme_series(mu, x)
    } else {
        steed_fraction(mu, x)
    };

    for i in 1..=nl {
        let next = (mu + i as f64) * xi2 * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

/// `1/Γ(1+z)` expansion coefficients (Wrench), `1/Γ(z) = Σ c_k z^k`.
const RECIP_GAMMA: [f64; 12] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
];

/// `(Γ₁(μ), Γ₂(μ), 1/Γ(1+μ), 1/Γ(1−μ))` for `|μ| ≤ 1/2`, where
/// `Γ₁ = (1/Γ(1−μ) − 1/Γ(1+μ)) / 2μ` and `Γ₂ = (1/Γ(1−μ) + 1/Γ(1+μ)) / 2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    if mu.abs() < 0.1 {
        // 1/Γ(1+z) = Σ_k c_{k+1} z^k; split into even and odd parts.
        let m2 = mu * mu;
        let mut odd = 0.0;
        let mut even = 0.0;
        let mut p = 1.0;
        for k in 0..RECIP_GAMMA.len() / 2 {
            even += RECIP_GAMMA[2 * k] * p;
            odd += RECIP_GAMMA[2 * k + 1] * p;
            p *= m2;
        }
        let gam1 = -odd;
        let gam2 = even;
        (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
    } else {
        let gampl = 1.0 / gamma(1.0 + mu);
        let gammi = 1.0 / gamma(1.0 - mu);
        ((gammi - gampl) / (2.0 * mu), (gammi + gampl) / 2.0, gampl, gammi)
    }
}

/// Returns `(K_μ(x), K_{μ+1}(x))` for `|μ| ≤ 1/2`, `0 < x < 2`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Returns `(K_μ(x), K_{μ+1}(x))` for `|μ| ≤ 1/2`, `x ≥ 2`.
fn steed_fraction(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut c = a1;
    let mut q = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}
