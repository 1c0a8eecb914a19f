//! Fully discrete price scheme on the equal-step lattice `(t_i, x_j) =
//! (ik, jk)`.
//!
//! The drift is a pure shift along characteristics, so with equal steps in
//! time and space it is integrated exactly:
//! `X[i+1][j] = X[i][j+1] + s·Ŷ(t_i, x_j)·Δβ̃_i`, with `s` the constant
//! scaling norm and `Ŷ` the piecewise-linear volatility approximation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::heat_fem::{interpolate, YPath};
use crate::profile::Profile;
use crate::stats::MomentAccumulator;
use crate::{Error, Result};

/// Initial forward curve `f̃ + b`: a smooth part on the half-line plus a
/// constant level.
#[derive(Debug, Clone)]
pub struct InitialCurve {
    smooth: Profile,
    level: f64,
    range: f64,
}

impl InitialCurve {
    pub fn new(smooth: Profile, level: f64) -> Self {
        Self {
            smooth,
            level,
            range: f64::INFINITY,
        }
    }

    /// Restricts the points at which the smooth part may be evaluated to
    /// `[0, range]`.
    pub fn with_range(mut self, range: f64) -> Self {
        self.range = range;
        self
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// `(S(t)f)(x) = f̃(x + t) + b`.
    pub fn shift_eval(&self, t: f64, x: f64) -> Result<f64> {
        let s = x + t;
        if !(s >= 0.0) || s > self.range * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("x + t = {s} outside the curve range [0, {}]", self.range)));
        }
        Ok(self.smooth.eval(s) + self.level)
    }
}

/// Lattice `t_i = ik`, `x_j = jk`, `i, j = 0..=N_k`, with `N_k = T/k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceGrid {
    horizon: f64,
    step: f64,
    steps: usize,
}

impl PriceGrid {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && step > 0.0) {
            return Err(Error::param("k", "horizon and step must be positive"));
        }
        let steps = crate::heat_fem::step_count(horizon, step)?;
        Ok(Self { horizon, step, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    /// Smallest admissible volatility domain, `2T − k`.
    pub fn min_domain(&self) -> f64 {
        2.0 * self.horizon - self.step
    }
}

/// Volatility approximation `Ŷ(t_i, x)` as seen by the price scheme.
pub trait VolatilityField {
    fn domain_length(&self) -> f64;
    fn time_step(&self) -> f64;
    /// Number of available time levels.
    fn levels(&self) -> usize;
    /// Value at time level `i` and location `x ∈ [0, D]`.
    fn value(&self, i: usize, x: f64) -> f64;
}

impl VolatilityField for YPath {
    fn domain_length(&self) -> f64 {
        self.grid().length()
    }

    fn time_step(&self) -> f64 {
        YPath::time_step(self)
    }

    fn levels(&self) -> usize {
        self.rows()
    }

    fn value(&self, i: usize, x: f64) -> f64 {
        interpolate(self.row(i), self.grid().h(), x)
    }
}

/// A volatility field given by a closure, for synthetic experiments.
pub struct FnField<F: Fn(usize, f64) -> f64> {
    pub f: F,
    pub domain: f64,
    pub step: f64,
    pub levels: usize,
}

impl<F: Fn(usize, f64) -> f64> VolatilityField for FnField<F> {
    fn domain_length(&self) -> f64 {
        self.domain
    }

    fn time_step(&self) -> f64 {
        self.step
    }

    fn levels(&self) -> usize {
        self.levels
    }

    fn value(&self, i: usize, x: f64) -> f64 {
        (self.f)(i, x)
    }
}

/// `N_k` iid `N(0, k)` increments of the scalar driver `β̃`.
pub fn beta_increments<R: Rng + ?Sized>(rng: &mut R, steps: usize, k: f64) -> Vec<f64> {
    let sk = k.sqrt();
    (0..steps).map(|_| sk * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Price values `X[n][j]` on the `(N_k + 1)²` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct XPath {
    grid: PriceGrid,
    scaling: f64,
    values: Vec<f64>,
}

impl XPath {
    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.grid.steps + 1;
        &self.values[n * w..(n + 1) * w]
    }

    pub fn value(&self, n: usize, j: usize) -> f64 {
        self.row(n)[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(t, x, value)` for every lattice point, time-major.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let w = self.grid.steps + 1;
        self.values
            .iter()
            .enumerate()
            .map(move |(idx, &v)| (self.grid.t(idx / w), self.grid.x(idx % w), v))
    }
}

fn check_inputs(grid: &PriceGrid, field: &dyn VolatilityField, beta: &[f64]) -> Result<()> {
    let need = grid.min_domain();
    if field.domain_length() < need * (1.0 - 1e-12) {
        return Err(Error::DomainTooSmall {
            domain: field.domain_length(),
            required: need,
        });
    }
    if ((field.time_step() - grid.step) / grid.step).abs() > 1e-9 {
        return Err(Error::param(
            "k",
            format!("volatility step {} differs from lattice step {}", field.time_step(), grid.step),
        ));
    }
    if field.levels() < grid.steps {
        return Err(Error::DimensionMismatch {
            expected: grid.steps,
            actual: field.levels(),
        });
    }
    if beta.len() != grid.steps {
        return Err(Error::DimensionMismatch {
            expected: grid.steps,
            actual: beta.len(),
        });
    }
    Ok(())
}

/// Streaming form of the recursion. The state holds the extended row
/// `X[i][j]`, `j = 0..=2N_k − i`, so that no value outside the lattice is
/// ever needed beyond the exact initial shift.
#[derive(Debug, Clone)]
pub struct PriceStepper {
    grid: PriceGrid,
    scaling: f64,
    row: Vec<f64>,
    level: usize,
}

impl PriceStepper {
    pub fn new(grid: PriceGrid, curve: &InitialCurve, scaling: f64) -> Result<Self> {
        let n = grid.steps;
        let row = (0..=2 * n).map(|j| curve.shift_eval(0.0, grid.x(j))).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            scaling,
            row,
            level: 0,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Lattice part `X[i][0..=N_k]` of the current row.
    pub fn current(&self) -> &[f64] {
        &self.row[..=self.grid.steps]
    }

    /// Advances from `t_i` to `t_{i+1}` with volatility `vol(x) = Ŷ(t_i, x)`.
    pub fn advance(&mut self, vol: impl Fn(f64) -> f64, dbeta: f64) -> Result<()> {
        if self.level >= self.grid.steps {
            return Err(Error::param("i", "price recursion already reached the horizon"));
        }
        let len = self.row.len() - 1;
        let s = self.scaling * dbeta;
        for j in 0..len {
            self.row[j] = self.row[j + 1] + s * vol(self.grid.x(j));
        }
        self.row.truncate(len);
        self.level += 1;
        Ok(())
    }
}

/// Runs the recursion over the full lattice.
pub fn solve_x(
    grid: &PriceGrid,
    curve: &InitialCurve,
    scaling: f64,
    field: &dyn VolatilityField,
    beta: &[f64],
) -> Result<XPath> {
    check_inputs(grid, field, beta)?;
    let w = grid.steps + 1;
    let mut values = Vec::with_capacity(w * w);
    let mut stepper = PriceStepper::new(*grid, curve, scaling)?;
    values.extend_from_slice(stepper.current());
    for (i, &db) in beta.iter().enumerate() {
        stepper.advance(|x| field.value(i, x), db)?;
        values.extend_from_slice(stepper.current());
    }
    Ok(XPath {
        grid: *grid,
        scaling,
        values,
    })
}

/// Evaluates `X[n][j] = f̃(x_j + t_n) + b + s·Σ_{i<n} Ŷ(t_i, x_j + t_n − t_{i+1})·Δβ̃_i`
/// term by term.
pub fn closed_form_x(
    grid: &PriceGrid,
    curve: &InitialCurve,
    scaling: f64,
    field: &dyn VolatilityField,
    beta: &[f64],
) -> Result<XPath> {
    check_inputs(grid, field, beta)?;
    let w = grid.steps + 1;
    let mut values = Vec::with_capacity(w * w);
    for n in 0..w {
        for j in 0..w {
            let mut v = curve.shift_eval(grid.t(n), grid.x(j))?;
            for (i, &db) in beta.iter().enumerate().take(n) {
                v += scaling * field.value(i, grid.x(j + n - i - 1)) * db;
            }
            values.push(v);
        }
    }
    Ok(XPath {
        grid: *grid,
        scaling,
        values,
    })
}

/// A volatility field defined at all times `r`, standing in for the exact
/// solution `Y(r, x)`.
pub trait ExactField {
    fn value(&self, r: f64, x: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> ExactField for F {
    fn value(&self, r: f64, x: f64) -> f64 {
        self(r, x)
    }
}

/// Fine-grid surrogate for `Y` compatible with the fine-lattice price
/// scheme: on `[τ_l, τ_{l+1})` it returns `Y_f(τ_l, z + r − τ_{l+1})`, so
/// that the integrand along a characteristic `z = T* − r` is the value the
/// fine scheme actually uses.
pub struct FineSurrogate<'a> {
    path: &'a YPath,
}

impl<'a> FineSurrogate<'a> {
    pub fn new(path: &'a YPath) -> Self {
        Self { path }
    }
}

impl ExactField for FineSurrogate<'_> {
    fn value(&self, r: f64, z: f64) -> f64 {
        let kf = self.path.time_step();
        let l = ((r / kf).floor().max(0.0) as usize).min(self.path.rows().saturating_sub(2));
        let x = z + r - (l + 1) as f64 * kf;
        interpolate(self.path.row(l), self.path.grid().h(), x)
    }
}

/// Pathwise integrand of the decomposition for one sample:
/// `s²·Σ_{i<n} ∫_{t_i}^{t_{i+1}} |Y(r, t_n + x_j − r) − Ŷ(t_i, t_n + x_j − t_{i+1})|² dr`
/// for all lattice points, with the midpoint rule on `substeps` subintervals.
pub fn decomposition_integrand(
    exact: &dyn ExactField,
    approx: &dyn VolatilityField,
    grid: &PriceGrid,
    scaling: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::param("substeps", "need at least one midpoint per step"));
    }
    let n_k = grid.steps;
    let k = grid.step;
    let kf = k / substeps as f64;
    let w = n_k + 1;
    let mut out = vec![0.0; w * w];
    for n in 1..w {
        for j in 0..w {
            let maturity = grid.t(n) + grid.x(j);
            let mut acc = 0.0;
            for i in 0..n {
                let coarse = approx.value(i, grid.x(j + n - i - 1));
                for p in 0..substeps {
                    let r = grid.t(i) + (p as f64 + 0.5) * kf;
                    let d = exact.value(r, maturity - r) - coarse;
                    acc += d * d;
                }
            }
            out[n * w + j] = scaling * scaling * kf * acc;
        }
    }
    Ok(out)
}

/// Monte Carlo mean and standard error per lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionEstimate {
    pub steps: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl DecompositionEstimate {
    pub fn from_samples(steps: usize, samples: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let w = steps + 1;
        let mut acc = MomentAccumulator::new(w * w);
        for s in samples {
            if s.len() != w * w {
                return Err(Error::DimensionMismatch {
                    expected: w * w,
                    actual: s.len(),
                });
            }
            acc.push(&s);
        }
        if acc.count() == 0 {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        Ok(Self {
            steps,
            mean: (0..w * w).map(|i| acc.mean(i)).collect(),
            stderr: (0..w * w).map(|i| acc.stderr(i)).collect(),
        })
    }

    pub fn mean_at(&self, n: usize, j: usize) -> f64 {
        self.mean[n * (self.steps + 1) + j]
    }

    pub fn stderr_at(&self, n: usize, j: usize) -> f64 {
        self.stderr[n * (self.steps + 1) + j]
    }
}

/// MC estimate of the right-hand side of the error decomposition over
/// matched `(exact, approximate)` sample pairs.
pub fn error_decomposition_rhs(
    pairs: &[(&dyn ExactField, &dyn VolatilityField)],
    grid: &PriceGrid,
    scaling: f64,
    substeps: usize,
) -> Result<DecompositionEstimate> {
    let samples = pairs
        .iter()
        .map(|(e, a)| decomposition_integrand(*e, *a, grid, scaling, substeps))
        .collect::<Result<Vec<_>>>()?;
    DecompositionEstimate::from_samples(grid.steps, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{Lane, NoiseGrid, SeedPolicy};
    use crate::profile::ProfileSpec;

    fn bump_curve() -> InitialCurve {
        InitialCurve::new(
            ProfileSpec::Bump {
                center: 1.0,
                half_width: 0.6,
                amplitude: 2.0,
            }
            .into(),
            0.5,
        )
    }

    fn random_field(grid: &PriceGrid, seed: u64) -> YPath {
        let d = 2.0 * grid.horizon();
        let ng = NoiseGrid::new(d, 24).unwrap();
        let mut rng = SeedPolicy::new(seed).rng(0, 0, Lane::Noise);
        let rows = grid.steps() + 1;
        let vals: Vec<f64> = (0..rows * 25)
            .map(|idx| if idx % 25 == 0 || idx % 25 == 24 { 0.0 } else { rng.sample::<f64, _>(StandardNormal) })
            .collect();
        YPath::from_rows(ng, grid.step(), vals).unwrap()
    }

    #[test]
    fn shift_eval_properties() {
        let flat = InitialCurve::new(Profile::default(), 3.0);
        assert_eq!(flat.shift_eval(0.4, 1.7).unwrap(), 3.0);
        let c = bump_curve();
        assert_eq!(c.shift_eval(0.3, 0.7).unwrap(), 2.5);
        let g = PriceGrid::new(1.0, 0.125).unwrap();
        for n in 0..=8 {
            for j in 0..=8 {
                assert_eq!(c.shift_eval(g.t(n), g.x(j)).unwrap(), c.shift_eval(0.0, g.x(j + n)).unwrap());
            }
        }
        assert!(c.clone().with_range(1.0).shift_eval(0.5, 0.6).is_err());
    }

    #[test]
    fn beta_increments_law_and_reproducibility() {
        let p = SeedPolicy::new(9);
        let a = beta_increments(&mut p.rng(0, 0, Lane::Beta), 20_000, 0.01);
        let b = beta_increments(&mut p.rng(0, 0, Lane::Beta), 20_000, 0.01);
        assert_eq!(a, b);
        let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
        let m = crate::stats::mean(&sq);
        assert!((m - 0.01).abs() < 5.0 * crate::stats::stderr(&sq));
    }

    #[test]
    fn zero_volatility_is_pure_drift() {
        let g = PriceGrid::new(1.0, 0.125).unwrap();
        let y = YPath::from_rows(NoiseGrid::new(2.0, 16).unwrap(), 0.125, vec![0.0; 9 * 17]).unwrap();
        let beta = beta_increments(&mut SeedPolicy::new(1).rng(0, 0, Lane::Beta), 8, 0.125);
        let c = bump_curve();
        for scaling in [1.0, 0.0] {
            let x = solve_x(&g, &c, scaling, &y, &beta).unwrap();
            for n in 0..=8 {
                for j in 0..=8 {
                    assert_eq!(x.value(n, j), c.shift_eval(g.t(n), g.x(j)).unwrap());
                }
            }
        }
        let y = random_field(&g, 2);
        let x = solve_x(&g, &c, 0.0, &y, &beta).unwrap();
        assert_eq!(x.value(8, 3), c.shift_eval(1.0, g.x(3)).unwrap());
    }

    #[test]
    fn single_step_by_hand() {
        // N_k = 1 on [0, 1]: X[1][0] = X[0][1] + s·Y(0, 0)·Δβ, X[1][1] = X[0][2] + s·Y(0, 1)·Δβ
        let g = PriceGrid::new(1.0, 1.0).unwrap();
        let y = YPath::from_rows(NoiseGrid::new(1.0, 2).unwrap(), 1.0, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let field = FnField {
            f: |_, x: f64| if x == 1.0 { 3.0 } else { 0.0 },
            domain: 1.0,
            step: 1.0,
            levels: 1,
        };
        let c = InitialCurve::new(ProfileSpec::Constant { value: 0.0 }.into(), 1.0);
        let x = solve_x(&g, &c, 2.0, &field, &[0.5]).unwrap();
        assert_eq!(x.row(0), &[1.0, 1.0]);
        assert_eq!(x.row(1), &[1.0, 1.0 + 2.0 * 3.0 * 0.5]);
        assert!(solve_x(&g, &c, 2.0, &y, &[0.5]).is_ok());
    }

    #[test]
    fn recursion_matches_closed_form() {
        let g = PriceGrid::new(1.0, 1.0 / 12.0).unwrap();
        let c = bump_curve();
        for seed in 0..5 {
            let y = random_field(&g, seed);
            let beta = beta_increments(&mut SeedPolicy::new(seed).rng(0, 0, Lane::Beta), 12, g.step());
            let a = solve_x(&g, &c, 1.3, &y, &beta).unwrap();
            let b = closed_form_x(&g, &c, 1.3, &y, &beta).unwrap();
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() < 1e-12);
            }
            assert_eq!(a.row(0), b.row(0));
        }
    }

    #[test]
    fn unit_volatility_telescopes() {
        let g = PriceGrid::new(1.0, 0.25).unwrap();
        let one = FnField {
            f: |_, _| 1.0,
            domain: 2.0,
            step: 0.25,
            levels: 5,
        };
        let beta = [0.1, -0.3, 0.2, 0.05];
        let c = bump_curve();
        let x = closed_form_x(&g, &c, 1.0, &one, &beta).unwrap();
        let mut b = 0.0;
        for n in 0..=4 {
            for j in 0..=4 {
                let want = c.shift_eval(g.t(n), g.x(j)).unwrap() + b;
                assert!((x.value(n, j) - want).abs() < 1e-15);
            }
            b += beta.get(n).copied().unwrap_or(0.0);
        }
    }

    #[test]
    fn domain_check() {
        let g = PriceGrid::new(1.0, 0.25).unwrap();
        let short = YPath::from_rows(NoiseGrid::new(1.5, 6).unwrap(), 0.25, vec![0.0; 5 * 7]).unwrap();
        let err = solve_x(&g, &bump_curve(), 1.0, &short, &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::DomainTooSmall { .. }));
        let exact = YPath::from_rows(NoiseGrid::new(1.75, 7).unwrap(), 0.25, vec![0.0; 5 * 8]).unwrap();
        assert!(solve_x(&g, &bump_curve(), 1.0, &exact, &[0.0; 4]).is_ok());
        assert!(solve_x(&g, &bump_curve(), 1.0, &exact, &[0.0; 3]).is_err());
    }

    #[test]
    fn scaling_is_linear() {
        let g = PriceGrid::new(1.0, 0.125).unwrap();
        let y = random_field(&g, 4);
        let c = bump_curve();
        let beta = beta_increments(&mut SeedPolicy::new(4).rng(0, 0, Lane::Beta), 8, g.step());
        let a = solve_x(&g, &c, 1.0, &y, &beta).unwrap();
        let b = solve_x(&g, &c, 2.0, &y, &beta).unwrap();
        for ((u, v), (t, x, _)) in a.values().iter().zip(b.values()).zip(a.points()) {
            let drift = c.shift_eval(t, x).unwrap();
            assert!((2.0 * (u - drift) - (v - drift)).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_of_identical_fields_vanishes() {
        let g = PriceGrid::new(1.0, 0.25).unwrap();
        let y = random_field(&g, 1);
        let surrogate = FineSurrogate::new(&y);
        let est = error_decomposition_rhs(&[(&surrogate, &y)], &g, 1.0, 1).unwrap();
        assert!(est.mean.iter().all(|v| v.abs() < 1e-28));
    }

    #[test]
    fn decomposition_synthetic_polynomial() {
        let g = PriceGrid::new(1.0, 0.25).unwrap();
        let exact = |r: f64, _x: f64| r;
        let approx = FnField {
            f: |i, _| i as f64 * 0.25,
            domain: 2.0,
            step: 0.25,
            levels: 5,
        };
        let m = 64;
        let est = error_decomposition_rhs(&[(&exact, &approx)], &g, 1.0, m).unwrap();
        let (k, kf) = (0.25f64, 0.25 / m as f64);
        for n in 0..=4 {
            // midpoint rule on (r − t_i)²: k³/3 − k·kf²/12 per step
            let want = n as f64 * (k.powi(3) / 3.0 - k * kf * kf / 12.0);
            assert!((est.mean_at(n, 2) - want).abs() < 1e-15);
            assert!((est.mean_at(n, 2) - n as f64 * k.powi(3) / 3.0).abs() < 1e-5);
        }
    }
}
