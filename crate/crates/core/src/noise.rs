//! Pointwise sampling of the Wiener increments `I_h ΔW` on uniform grids.
//!
//! Stationary Gaussian vectors are drawn by circulant embedding in
//! `O(M log M)`; the weight of a weight-stationary kernel is applied
//! afterwards node by node. A dense Cholesky sampler serves as oracle and
//! fallback.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::kernels::{kernel_matrix, KernelSpec, MaternParams};
use crate::{Error, Result};

/// Uniform grid `x_j = j·h`, `j = 0..=N`, on `[0, D]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseGrid {
    length: f64,
    intervals: usize,
}

impl NoiseGrid {
    pub fn new(length: f64, intervals: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param("D", format!("domain length must be positive, got {length}")));
        }
        if intervals == 0 {
            return Err(Error::param("N", "grid needs at least one interval"));
        }
        Ok(Self { length, intervals })
    }

    /// Grid with mesh width `h`; `D/h` must be an integer up to rounding.
    pub fn with_step(length: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::param("h", format!("mesh width must be positive, got {h}")));
        }
        let n = (length / h).round();
        if n < 1.0 || ((n * h - length) / length).abs() > 1e-9 {
            return Err(Error::param("h", format!("D = {length} is not an integer multiple of h = {h}")));
        }
        Self::new(length, n as usize)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    pub fn h(&self) -> f64 {
        self.length / self.intervals as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.intervals {
            self.length
        } else {
            j as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|j| self.node(j)).collect()
    }

    /// The grid with every `ratio`-th node.
    pub fn coarsen(&self, ratio: usize) -> Result<Self> {
        if ratio == 0 || !self.intervals.is_multiple_of(ratio) {
            return Err(Error::Divisibility {
                what: format!("{} intervals", self.intervals),
                ratio,
            });
        }
        Self::new(self.length, self.intervals / ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirculantConfig {
    pub max_doublings: u32,
    /// Admissible clipped negative spectral mass relative to `Σ|λ|`.
    pub clip_tol: f64,
}

impl Default for CirculantConfig {
    fn default() -> Self {
        Self {
            max_doublings: 8,
            clip_tol: 1e-8,
        }
    }
}

/// Spectral state for drawing stationary Gaussian vectors on `N + 1` nodes.
pub struct CirculantSampler {
    nodes: usize,
    size: usize,
    spectrum: Vec<f64>,
    amplitude: Vec<f64>,
    clip_mass: f64,
    abs_mass: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("nodes", &self.nodes)
            .field("size", &self.size)
            .field("clip_mass", &self.clip_mass)
            .finish()
    }
}

/// Circulant embedding of a Matérn covariance sampled at lags `j·h`.
pub fn build_circulant(
    stationary: &MaternParams,
    h: f64,
    intervals: usize,
    max_doublings: u32,
    tol: f64,
) -> Result<CirculantSampler> {
    CirculantSampler::build(
        |lag| stationary.eval(lag),
        h,
        intervals,
        CirculantConfig {
            max_doublings,
            clip_tol: tol,
        },
    )
}

impl CirculantSampler {
    /// Embeds the Toeplitz matrix `[cov((i − j)h)]` of size `N + 1` into a
    /// circulant of size `M`, the smallest power of two `≥ 2N`, doubling `M`
    /// while the clipped negative mass exceeds `cfg.clip_tol`.
    pub fn build(cov: impl Fn(f64) -> f64, h: f64, intervals: usize, cfg: CirculantConfig) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::param("N", "grid needs at least one interval"));
        }
        if !(h > 0.0) {
            return Err(Error::param("h", "mesh width must be positive"));
        }
        let mut planner = FftPlanner::<f64>::new();
        let mut size = (2 * intervals).next_power_of_two().max(2);
        let mut doublings = 0;
        loop {
            let fft = planner.plan_fft_forward(size);
            let half = size / 2;
            let mut row: Vec<Complex64> = (0..size)
                .map(|j| {
                    let lag = if j <= half { j } else { size - j };
                    Complex64::new(cov(lag as f64 * h), 0.0)
                })
                .collect();
            fft.process(&mut row);
            let mut spectrum: Vec<f64> = row.iter().map(|c| c.re).collect();
            let abs_mass: f64 = spectrum.iter().map(|v| v.abs()).sum();
            let clip_mass: f64 = spectrum.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
            let relative = if abs_mass > 0.0 { clip_mass / abs_mass } else { 0.0 };
            if relative <= cfg.clip_tol {
                for v in spectrum.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let m = size as f64;
                let amplitude = spectrum.iter().map(|&l| (l / m).sqrt()).collect();
                return Ok(Self {
                    nodes: intervals + 1,
                    size,
                    spectrum,
                    amplitude,
                    clip_mass,
                    abs_mass,
                    fft,
                });
            }
            if doublings >= cfg.max_doublings {
                return Err(Error::EmbeddingFailed {
                    relative,
                    doublings,
                    size,
                });
            }
            doublings += 1;
            size *= 2;
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn embedding_size(&self) -> usize {
        self.size
    }

    /// Eigenvalues of the embedded circulant after clipping.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn clip_mass(&self) -> f64 {
        self.clip_mass
    }

    pub fn relative_clip_mass(&self) -> f64 {
        if self.abs_mass > 0.0 {
            self.clip_mass / self.abs_mass
        } else {
            0.0
        }
    }

    /// Covariance at lags `0..=N` of the law actually sampled, i.e. the first
    /// row of the circulant rebuilt from the clipped spectrum.
    pub fn induced_covariance(&self) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self.spectrum.iter().map(|&l| Complex64::new(l, 0.0)).collect();
        // the spectrum is real and even, so a forward transform equals the inverse up to 1/M
        self.fft.process(&mut buf);
        let m = self.size as f64;
        buf[..self.nodes].iter().map(|c| c.re / m).collect()
    }

    pub fn stream(&self) -> StationaryStream<'_> {
        StationaryStream::new(self)
    }
}

/// Per-path sampling state. One complex transform yields two independent
/// real fields; the second is kept for the next call.
pub struct StationaryStream<'a> {
    sampler: &'a CirculantSampler,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    spare: bool,
    fft_time: Duration,
    transforms: u64,
}

impl<'a> StationaryStream<'a> {
    fn new(sampler: &'a CirculantSampler) -> Self {
        Self {
            sampler,
            buf: vec![Complex64::default(); sampler.size],
            scratch: vec![Complex64::default(); sampler.fft.get_inplace_scratch_len()],
            spare: false,
            fft_time: Duration::ZERO,
            transforms: 0,
        }
    }

    /// Draws one mean-zero vector with covariance `cov((i − j)h)`.
    pub fn sample_into<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        let n = self.sampler.nodes;
        assert_eq!(out.len(), n, "output length must equal node count");
        if self.spare {
            for (o, c) in out.iter_mut().zip(&self.buf) {
                *o = c.im;
            }
            self.spare = false;
            return;
        }
        for (b, &a) in self.buf.iter_mut().zip(&self.sampler.amplitude) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *b = Complex64::new(a * re, a * im);
        }
        let start = Instant::now();
        self.sampler.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.fft_time += start.elapsed();
        self.transforms += 1;
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.re;
        }
        self.spare = true;
    }

    pub fn fft_time(&self) -> Duration {
        self.fft_time
    }

    pub fn transforms(&self) -> u64 {
        self.transforms
    }
}

/// Draws one stationary field from `stream`.
pub fn sample_stationary<R: Rng + ?Sized>(stream: &mut StationaryStream<'_>, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; stream.sampler.nodes];
    stream.sample_into(rng, &mut out);
    out
}

/// Sampler for nodal increments `I_h ΔW` of a weight-stationary kernel:
/// `√k · w(x_j) · (stationary draw)_j`.
#[derive(Debug)]
pub struct IncrementSampler {
    grid: NoiseGrid,
    kernel: KernelSpec,
    weights: Vec<f64>,
    circulant: CirculantSampler,
}

impl IncrementSampler {
    pub fn new(kernel: &KernelSpec, grid: NoiseGrid, cfg: CirculantConfig) -> Result<Self> {
        let circulant = CirculantSampler::build(|lag| kernel.stationary.eval(lag), grid.h(), grid.intervals(), cfg)?;
        let weights = grid.nodes().iter().map(|&x| kernel.weight.eval(x)).collect();
        Ok(Self {
            grid,
            kernel: *kernel,
            weights,
            circulant,
        })
    }

    pub fn grid(&self) -> &NoiseGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn circulant(&self) -> &CirculantSampler {
        &self.circulant
    }

    pub fn stream(&self) -> StationaryStream<'_> {
        self.circulant.stream()
    }

    /// Fills `out` with one increment over a time step `k`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        stream: &mut StationaryStream<'_>,
        rng: &mut R,
        k: f64,
        out: &mut [f64],
    ) {
        stream.sample_into(rng, out);
        let sk = k.sqrt();
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o *= sk * w;
        }
    }

    /// Covariance matrix `k·[w(x_i) c_{|i−j|} w(x_j)]` of the sampled law.
    pub fn induced_covariance_matrix(&self, k: f64) -> DMatrix<f64> {
        let c = self.circulant.induced_covariance();
        let n = self.grid.node_count();
        DMatrix::from_fn(n, n, |i, j| k * self.weights[i] * c[i.abs_diff(j)] * self.weights[j])
    }
}

/// One increment `I_h ΔW` over a step `k`.
pub fn sample_increment<R: Rng + ?Sized>(
    sampler: &IncrementSampler,
    stream: &mut StationaryStream<'_>,
    k: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(k > 0.0) {
        return Err(Error::param("k", format!("time step must be positive, got {k}")));
    }
    let mut out = vec![0.0; sampler.grid.node_count()];
    sampler.sample_into(stream, rng, k, &mut out);
    Ok(out)
}

/// Relative ridge added to the diagonal when the plain factorization fails.
pub const CHOLESKY_RIDGE: f64 = 1e-12;

/// Exact-covariance sampler through a dense Cholesky factor.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    factor: DMatrix<f64>,
    ridged: bool,
}

impl CholeskySampler {
    pub fn new(kernel: &KernelSpec, grid: &NoiseGrid) -> Result<Self> {
        Self::from_matrix(kernel_matrix(kernel, &grid.nodes()))
    }

    pub fn from_matrix(cov: DMatrix<f64>) -> Result<Self> {
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(Self {
                factor: ch.l(),
                ridged: false,
            });
        }
        let max_diag = cov.diagonal().iter().cloned().fold(0.0, f64::max);
        let mut ridged = cov;
        for i in 0..ridged.nrows() {
            ridged[(i, i)] += CHOLESKY_RIDGE * max_diag.max(f64::MIN_POSITIVE);
        }
        match ridged.cholesky() {
            Some(ch) => Ok(Self {
                factor: ch.l(),
                ridged: true,
            }),
            None => Err(Error::Factorization),
        }
    }

    pub fn used_ridge(&self) -> bool {
        self.ridged
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: f64) -> Vec<f64> {
        let n = self.factor.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.factor * z;
        let sk = k.sqrt();
        y.iter().map(|v| v * sk).collect()
    }
}

/// Exact-covariance increment through a dense factorization, `O(N³)` setup.
pub fn cholesky_sample<R: Rng + ?Sized>(kernel: &KernelSpec, grid: &NoiseGrid, k: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(k > 0.0) {
        return Err(Error::param("k", format!("time step must be positive, got {k}")));
    }
    Ok(CholeskySampler::new(kernel, grid)?.sample(rng, k))
}

/// Every `ratio`-th nodal value. Pointwise noise on a coarse grid is exactly
/// the sub-vector of the fine nodal noise.
pub fn restrict_to_coarse(values: &[f64], ratio: usize) -> Result<Vec<f64>> {
    if ratio == 0 || values.is_empty() || !(values.len() - 1).is_multiple_of(ratio) {
        return Err(Error::Divisibility {
            what: format!("{} fine intervals", values.len().saturating_sub(1)),
            ratio,
        });
    }
    Ok(values.iter().step_by(ratio).copied().collect())
}

/// Sums consecutive blocks of `ratio` fine-step increments.
pub fn aggregate_time(increments: &[Vec<f64>], ratio: usize) -> Result<Vec<Vec<f64>>> {
    if ratio == 0 || !increments.len().is_multiple_of(ratio) {
        return Err(Error::Divisibility {
            what: format!("{} fine steps", increments.len()),
            ratio,
        });
    }
    Ok(increments
        .chunks(ratio)
        .map(|block| {
            let mut acc = vec![0.0; block[0].len()];
            for inc in block {
                for (a, v) in acc.iter_mut().zip(inc) {
                    *a += v;
                }
            }
            acc
        })
        .collect())
}

/// Independent random streams within one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Driving noise `W` of the volatility.
    Noise,
    /// Scalar Wiener process `β̃` of the price.
    Beta,
    /// Independent noise for the `level`-th coarse resolution when coupling
    /// is switched off.
    Uncoupled(u8),
}

impl Lane {
    fn id(self) -> u64 {
        match self {
            Lane::Noise => 0,
            Lane::Beta => 1,
            Lane::Uncoupled(l) => 2 + l as u64,
        }
    }
}

/// Derives a generator from `(master seed, parameter index, sample index,
/// lane)`, independent of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn rng(&self, param: u32, sample: u64, lane: Lane) -> ChaCha8Rng {
        debug_assert!(sample < 1 << 32);
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(((param as u64) << 40) | (sample << 8) | lane.id());
        rng
    }
}
