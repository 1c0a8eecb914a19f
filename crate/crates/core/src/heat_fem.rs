//! Piecewise-linear finite elements in space and backward Euler in time for
//! the stochastic heat equation `dY = a ∂²ₓY dt + dW` on `[0, D]` with zero
//! Dirichlet boundary values.
//!
//! One step solves `(M + kK) y' = M y + b` with the interior mass matrix
//! `M = (h/6)·tridiag(1, 4, 1)`, stiffness `K = (a/h)·tridiag(−1, 2, −1)` and
//! load `b = M_full·(I_h ΔW)`, where the full mass stencil also sees the
//! noise at the two boundary nodes.

use nalgebra::DMatrix;
use rand::Rng;

use crate::noise::{IncrementSampler, NoiseGrid, StationaryStream};
use crate::profile::Profile;
use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Prefactored symmetric tridiagonal Toeplitz matrix `tridiag(e, d, e)`.
#[derive(Debug, Clone, PartialEq)]
struct Thomas {
    off: f64,
    cprime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl Thomas {
    fn new(n: usize, diag: f64, off: f64) -> Result<Self> {
        let mut cprime = Vec::with_capacity(n);
        let mut inv_denom = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            let denom = diag - off * prev;
            if !(denom.abs() > 0.0) || !denom.is_finite() {
                return Err(Error::Factorization);
            }
            let c = off / denom;
            cprime.push(c);
            inv_denom.push(1.0 / denom);
            prev = c;
        }
        Ok(Self { off, cprime, inv_denom })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.cprime[i] * rhs[i + 1];
        }
    }
}

/// Assembled and factored fully discrete heat operator on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSystem {
    grid: NoiseGrid,
    diffusivity: f64,
    step: f64,
    step_factor: Thomas,
    mass_factor: Thomas,
}

impl FemSystem {
    pub fn assemble(grid: NoiseGrid, diffusivity: f64, step: f64) -> Result<Self> {
        if !(diffusivity > 0.0 && diffusivity.is_finite()) {
            return Err(Error::param("a", format!("diffusivity must be positive, got {diffusivity}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("k", format!("time step must be positive, got {step}")));
        }
        let h = grid.h();
        let n = grid.intervals() - 1;
        let m_d = 4.0 * h / 6.0;
        let m_o = h / 6.0;
        let k_d = 2.0 * diffusivity / h;
        let k_o = -diffusivity / h;
        Ok(Self {
            grid,
            diffusivity,
            step,
            step_factor: Thomas::new(n, m_d + step * k_d, m_o + step * k_o)?,
            mass_factor: Thomas::new(n, m_d, m_o)?,
        })
    }

    pub fn grid(&self) -> &NoiseGrid {
        &self.grid
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn time_step(&self) -> f64 {
        self.step
    }

    pub fn interior_len(&self) -> usize {
        self.grid.intervals() - 1
    }

    /// Dense interior mass matrix.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let h = self.grid.h();
        tridiag(self.interior_len(), 4.0 * h / 6.0, h / 6.0)
    }

    /// Dense interior stiffness matrix.
    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        let r = self.diffusivity / self.grid.h();
        tridiag(self.interior_len(), 2.0 * r, -r)
    }

    /// Eigenvalues of `M⁻¹K` in closed form, ascending.
    pub fn discrete_eigenvalues(&self) -> Vec<f64> {
        let n = self.grid.intervals();
        let h = self.grid.h();
        (1..n)
            .map(|j| {
                let c = (j as f64 * std::f64::consts::PI / n as f64).cos();
                6.0 * self.diffusivity * (2.0 - 2.0 * c) / (h * h * (4.0 + 2.0 * c))
            })
            .collect()
    }

    /// Load `b_j = (h/6)(w_{j−1} + 4w_j + w_{j+1})` for interior nodes from
    /// the nodal noise at all `N + 1` nodes.
    pub fn load_vector(&self, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_nodal(noise)?;
        let h6 = self.grid.h() / 6.0;
        Ok((1..self.grid.intervals())
            .map(|j| h6 * (noise[j - 1] + 4.0 * noise[j] + noise[j + 1]))
            .collect())
    }

    /// One backward Euler step on the interior coefficients `y`, in place.
    pub fn step_in_place(&self, y: &mut [f64], noise: &[f64], scratch: &mut Vec<f64>) -> Result<()> {
        if y.len() != self.interior_len() {
            return Err(Error::DimensionMismatch {
                expected: self.interior_len(),
                actual: y.len(),
            });
        }
        self.check_nodal(noise)?;
        let n = y.len();
        let h6 = self.grid.h() / 6.0;
        scratch.clear();
        // M y + M_full w = (h/6)·stencil applied to (y + w) with y = 0 on the boundary
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { y[i - 1] } + noise[i];
            let right = if i + 1 == n { 0.0 } else { y[i + 1] } + noise[i + 2];
            let mid = y[i] + noise[i + 1];
            scratch.push(h6 * (left + 4.0 * mid + right));
        }
        self.step_factor.solve(scratch);
        y.copy_from_slice(scratch);
        Ok(())
    }

    pub fn step(&self, y: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        let mut scratch = Vec::with_capacity(y.len());
        self.step_in_place(&mut out, noise, &mut scratch)?;
        Ok(out)
    }

    /// `L²` projection of `y0` onto the interior finite element space, with
    /// four-point Gauss–Legendre quadrature per cell.
    pub fn project_initial(&self, y0: &Profile) -> Vec<f64> {
        let n = self.interior_len();
        if y0.is_zero() || n == 0 {
            return vec![0.0; n];
        }
        let h = self.grid.h();
        let gl = GaussLegendre::new(4);
        let mut rhs = vec![0.0; n];
        for cell in 0..self.grid.intervals() {
            let x0 = self.grid.node(cell);
            let x1 = self.grid.node(cell + 1);
            let (left, right) = gl.mapped(x0, x1).fold((0.0, 0.0), |(l, r), (x, w)| {
                let v = w * y0.eval(x);
                let s = (x - x0) / h;
                (l + v * (1.0 - s), r + v * s)
            });
            if cell >= 1 {
                rhs[cell - 1] += left;
            }
            if cell < n {
                rhs[cell] += right;
            }
        }
        self.mass_factor.solve(&mut rhs);
        rhs
    }

    /// Full nodal vector with zero boundary values.
    pub fn to_nodal(&self, interior: &[f64], out: &mut [f64]) {
        let n = self.grid.intervals();
        out[0] = 0.0;
        out[n] = 0.0;
        out[1..n].copy_from_slice(interior);
    }

    fn check_nodal(&self, noise: &[f64]) -> Result<()> {
        if noise.len() != self.grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.node_count(),
                actual: noise.len(),
            });
        }
        Ok(())
    }
}

fn tridiag(n: usize, d: f64, e: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => d,
        1 => e,
        _ => 0.0,
    })
}

/// Source of nodal noise increments, one vector of length `N + 1` per step.
pub trait NoiseSource {
    fn next_increment(&mut self, out: &mut [f64]) -> Result<()>;
}

/// No forcing.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn next_increment(&mut self, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

/// Replays stored increments in order.
#[derive(Debug, Clone)]
pub struct RecordedNoise {
    increments: Vec<Vec<f64>>,
    pos: usize,
}

impl RecordedNoise {
    pub fn new(increments: Vec<Vec<f64>>) -> Self {
        Self { increments, pos: 0 }
    }
}

impl NoiseSource for RecordedNoise {
    fn next_increment(&mut self, out: &mut [f64]) -> Result<()> {
        let inc = self
            .increments
            .get(self.pos)
            .ok_or_else(|| Error::param("noise", "recorded noise exhausted"))?;
        if inc.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                actual: inc.len(),
            });
        }
        out.copy_from_slice(inc);
        self.pos += 1;
        Ok(())
    }
}

/// Fresh increments from a circulant-embedding sampler.
pub struct SampledNoise<'a, R: Rng> {
    sampler: &'a IncrementSampler,
    stream: StationaryStream<'a>,
    rng: R,
    step: f64,
}

impl<'a, R: Rng> SampledNoise<'a, R> {
    pub fn new(sampler: &'a IncrementSampler, rng: R, step: f64) -> Self {
        Self {
            sampler,
            stream: sampler.stream(),
            rng,
            step,
        }
    }

    pub fn stream(&self) -> &StationaryStream<'a> {
        &self.stream
    }
}

impl<R: Rng> NoiseSource for SampledNoise<'_, R> {
    fn next_increment(&mut self, out: &mut [f64]) -> Result<()> {
        self.sampler.sample_into(&mut self.stream, &mut self.rng, self.step, out);
        Ok(())
    }
}

/// Nodal values `Y(t_i, x_j)` for `i = 0..=steps`, `j = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct YPath {
    grid: NoiseGrid,
    time_step: f64,
    values: Vec<f64>,
}

impl YPath {
    pub fn from_rows(grid: NoiseGrid, time_step: f64, values: Vec<f64>) -> Result<Self> {
        let n = grid.node_count();
        if values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: values.len(),
            });
        }
        Ok(Self {
            grid,
            time_step,
            values,
        })
    }

    pub fn grid(&self) -> &NoiseGrid {
        &self.grid
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    /// Number of stored time levels (`steps + 1`).
    pub fn rows(&self) -> usize {
        self.values.len() / self.grid.node_count()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.row(i)[j]
    }

    /// Piecewise-linear interpolant at time level `i`, `x ∈ [0, D]`.
    pub fn eval_pointwise(&self, i: usize, x: f64) -> Result<f64> {
        if i >= self.rows() {
            return Err(Error::param("i", format!("time level {i} beyond {} stored rows", self.rows())));
        }
        let d = self.grid.length();
        if !(x >= -1e-12 * d && x <= d * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("x = {x} outside [0, {d}]")));
        }
        Ok(interpolate(self.row(i), self.grid.h(), x))
    }
}

/// Linear interpolation of nodal values at spacing `h`, clamped to the grid.
pub fn interpolate(row: &[f64], h: f64, x: f64) -> f64 {
    let last = row.len() - 1;
    let s = (x / h).clamp(0.0, last as f64);
    let j = (s.floor() as usize).min(last.saturating_sub(1));
    if last == 0 {
        return row[0];
    }
    let t = s - j as f64;
    row[j] * (1.0 - t) + row[j + 1] * t
}

/// Streaming solver state; advances one step per noise increment.
#[derive(Debug, Clone)]
pub struct HeatStepper<'a> {
    system: &'a FemSystem,
    state: Vec<f64>,
    scratch: Vec<f64>,
    level: usize,
}

impl<'a> HeatStepper<'a> {
    pub fn new(system: &'a FemSystem, y0: &Profile) -> Self {
        Self::from_interior(system, system.project_initial(y0))
    }

    pub fn from_interior(system: &'a FemSystem, state: Vec<f64>) -> Self {
        let n = state.len();
        Self {
            system,
            state,
            scratch: Vec::with_capacity(n),
            level: 0,
        }
    }

    pub fn advance(&mut self, noise: &[f64]) -> Result<()> {
        self.system.step_in_place(&mut self.state, noise, &mut self.scratch)?;
        self.level += 1;
        Ok(())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn interior(&self) -> &[f64] {
        &self.state
    }

    pub fn nodal_into(&self, out: &mut [f64]) {
        self.system.to_nodal(&self.state, out);
    }

    pub fn nodal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.system.grid.node_count()];
        self.nodal_into(&mut out);
        out
    }
}

/// Runs `steps` backward Euler steps and stores every time level.
pub fn solve_path(system: &FemSystem, y0: &Profile, noise: &mut dyn NoiseSource, steps: usize) -> Result<YPath> {
    let n = system.grid.node_count();
    let mut values = Vec::with_capacity((steps + 1) * n);
    let mut stepper = HeatStepper::new(system, y0);
    let mut row = vec![0.0; n];
    let mut inc = vec![0.0; n];
    stepper.nodal_into(&mut row);
    values.extend_from_slice(&row);
    for _ in 0..steps {
        noise.next_increment(&mut inc)?;
        stepper.advance(&inc)?;
        stepper.nodal_into(&mut row);
        values.extend_from_slice(&row);
    }
    YPath::from_rows(system.grid, system.step, values)
}

/// Number of steps `T/k`, which must be an integer up to rounding.
pub fn step_count(horizon: f64, step: f64) -> Result<usize> {
    let n = (horizon / step).round();
    if !(n >= 1.0) || ((n * step - horizon) / horizon).abs() > 1e-9 {
        return Err(Error::param("k", format!("T = {horizon} is not an integer multiple of k = {step}")));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::ProfileSpec;
    use std::f64::consts::PI;

    fn sine(d: f64) -> Profile {
        ProfileSpec::Sine {
            mode: 1,
            amplitude: 1.0,
            length: d,
        }
        .into()
    }

    #[test]
    fn thomas_matches_dense_solve() {
        let n = 7;
        let t = Thomas::new(n, 3.0, -1.2).unwrap();
        let a = tridiag(n, 3.0, -1.2);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.5).collect();
        let mut x = b.clone();
        t.solve(&mut x);
        let r = &a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.amax() < 1e-13);
    }

    #[test]
    fn matrices_are_symmetric_positive_definite() {
        let sys = FemSystem::assemble(NoiseGrid::new(1.0, 9).unwrap(), 0.3, 0.01).unwrap();
        let m = sys.mass_matrix();
        let k = sys.stiffness_matrix();
        assert_eq!(m, m.transpose());
        assert_eq!(k, k.transpose());
        assert!(m.clone().cholesky().is_some());
        assert!(k.clone().cholesky().is_some());
    }

    #[test]
    fn discrete_eigenvalues_match_dense_and_bound() {
        let d = 2.0;
        let a = 0.3;
        let sys = FemSystem::assemble(NoiseGrid::new(d, 10).unwrap(), a, 0.01).unwrap();
        let m = sys.mass_matrix();
        let l = m.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let sym = &li * sys.stiffness_matrix() * li.transpose();
        let mut dense: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(|x, y| x.total_cmp(y));
        let closed = sys.discrete_eigenvalues();
        for (x, y) in dense.iter().zip(&closed) {
            assert!((x - y).abs() < 1e-10 * y);
        }
        assert!(closed[0] >= a * PI * PI / (d * d));
    }

    #[test]
    fn zero_noise_zero_initial_stays_zero() {
        let sys = FemSystem::assemble(NoiseGrid::new(1.0, 8).unwrap(), 0.1, 0.1).unwrap();
        let path = solve_path(&sys, &Profile::default(), &mut ZeroNoise, 5).unwrap();
        assert!(path.values().iter().all(|&v| v == 0.0));
        assert_eq!(path.rows(), 6);
    }

    #[test]
    fn single_interval_has_no_unknowns() {
        let sys = FemSystem::assemble(NoiseGrid::new(1.0, 1).unwrap(), 0.1, 0.1).unwrap();
        let path = solve_path(&sys, &sine(1.0), &mut RecordedNoise::new(vec![vec![1.0, 1.0]]), 1).unwrap();
        assert!(path.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eigenmode_decays_by_discrete_factor() {
        // sin(πx/D) is an exact discrete eigenvector on a uniform grid
        let (d, a, k, n) = (1.0, 0.2, 0.05, 16);
        let sys = FemSystem::assemble(NoiseGrid::new(d, n).unwrap(), a, k).unwrap();
        let theta = PI / n as f64;
        let proj = 2.0 * (1.0 - theta.cos()) / (theta * theta) * 6.0 / (4.0 + 2.0 * theta.cos());
        let lam = sys.discrete_eigenvalues()[0];
        let path = solve_path(&sys, &sine(d), &mut ZeroNoise, 4).unwrap();
        for i in 0..=4 {
            let factor = proj * (1.0 + k * lam).powi(-(i as i32));
            for j in 0..=n {
                let want = factor * (PI * j as f64 / n as f64).sin();
                assert!((path.value(i, j) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn load_vector_uses_boundary_noise() {
        let sys = FemSystem::assemble(NoiseGrid::new(1.0, 3).unwrap(), 0.1, 0.1).unwrap();
        let b = sys.load_vector(&[6.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((b[0] - 6.0 / 3.0 / 6.0).abs() < 1e-15);
        assert_eq!(b[1], 0.0);
        assert!(sys.load_vector(&[1.0; 3]).is_err());
    }

    #[test]
    fn step_solves_the_linear_system() {
        let sys = FemSystem::assemble(NoiseGrid::new(1.5, 6).unwrap(), 0.4, 0.02).unwrap();
        let y: Vec<f64> = (0..5).map(|i| (i as f64 * 0.7).cos()).collect();
        let w: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).sin()).collect();
        let next = sys.step(&y, &w).unwrap();
        let lhs = (sys.mass_matrix() + sys.stiffness_matrix() * sys.time_step()) * nalgebra::DVector::from_vec(next);
        let rhs = sys.mass_matrix() * nalgebra::DVector::from_vec(y) + nalgebra::DVector::from_vec(sys.load_vector(&w).unwrap());
        assert!((lhs - rhs).amax() < 1e-13);
    }

    #[test]
    fn interpolation_and_range() {
        let grid = NoiseGrid::new(1.0, 2).unwrap();
        let p = YPath::from_rows(grid, 0.1, vec![0.0, 1.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(p.eval_pointwise(1, 0.25).unwrap(), 1.0);
        assert_eq!(p.eval_pointwise(0, 0.5).unwrap(), 1.0);
        assert_eq!(p.eval_pointwise(0, 1.0).unwrap(), 0.0);
        assert!(p.eval_pointwise(0, 1.1).is_err());
        assert!(p.eval_pointwise(2, 0.5).is_err());
    }

    #[test]
    fn step_count_divisibility() {
        assert_eq!(step_count(1.0, 0.125).unwrap(), 8);
        assert!(step_count(1.0, 0.3).is_err());
    }
}
