//! Coupled Monte Carlo convergence studies.
//!
//! Every study draws its noise on the finest grid of a sweep and derives the
//! coarser noise by restriction in space and aggregation in time, so that
//! all resolutions see the same Wiener path. Samples are processed in
//! batches on a worker pool and reduced in sample order with compensated
//! sums, which makes every table a pure function of the configuration.

mod engine;
mod heat;
mod price;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::kernels::KernelSpec;
use crate::noise::CirculantConfig;
use crate::profile::ProfileSpec;
use crate::stats::{fit_rate, linear_fit};
use crate::{Error, Result};

pub use engine::{mc_map, pointwise_error, PointwiseError};
pub use heat::{
    coupled_heat_errors, deterministic_orders, holder_study, localization_study, spatial_study, temporal_study,
    DeterministicOrders, HeatLevel,
};
pub use price::{decomposition_check, price_grid_study, timing_study, DecompositionCheck, TimingRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    SpatialY,
    TemporalY,
    PriceGrid,
    Holder,
    Localization,
    Timing,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::SpatialY => "spatial-y",
            StudyKind::TemporalY => "temporal-y",
            StudyKind::PriceGrid => "price-grid",
            StudyKind::Holder => "holder",
            StudyKind::Localization => "localization",
            StudyKind::Timing => "timing",
        }
    }
}

/// How the finite element mesh width follows the lattice step in the price
/// studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridRule {
    /// `h = k`
    HEqK,
    /// `h = √k`
    HSqrtK,
}

impl GridRule {
    pub fn name(self) -> &'static str {
        match self {
            GridRule::HEqK => "h-eq-k",
            GridRule::HSqrtK => "h-sqrt-k",
        }
    }

    /// Mesh-width exponent for a lattice step `2^{−e}`.
    pub fn h_exponent(self, k_exp: i32) -> Result<i32> {
        match self {
            GridRule::HEqK => Ok(k_exp),
            GridRule::HSqrtK if k_exp % 2 == 0 => Ok(k_exp / 2),
            GridRule::HSqrtK => Err(Error::Config(format!(
                "h = sqrt(k) needs even step exponents so that h stays dyadic, got k = 2^-{k_exp}"
            ))),
        }
    }
}

/// Physical model shared by all studies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Diffusivity `a` of the volatility equation.
    pub diffusivity: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Length `D` of the truncated volatility domain.
    pub domain: f64,
    /// Constant scaling norm of the price volatility.
    pub scaling: f64,
    /// Initial volatility `Y(0)`.
    pub y0: ProfileSpec,
    /// Smooth part of the initial forward curve.
    pub x0_smooth: ProfileSpec,
    /// Constant level of the initial forward curve.
    pub x0_level: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            diffusivity: 0.05,
            horizon: 1.0,
            domain: 1.0,
            scaling: 1.0,
            y0: ProfileSpec::Zero,
            x0_smooth: ProfileSpec::Zero,
            x0_level: 0.0,
        }
    }
}

/// Full description of one study run.
///
/// Resolutions are dyadic and given by exponents: `e` stands for `2^{−e}`.
/// The meaning of `ladder`, `reference` and `fixed` depends on the kind:
///
/// | kind         | ladder       | reference        | fixed |
/// |--------------|--------------|------------------|-------|
/// | spatial-y    | h            | h                | k     |
/// | temporal-y   | k            | k                | h     |
/// | price-grid   | k            | k                | reference h |
/// | holder       | separation δ | k                | h     |
/// | localization | (unused)     | k                | h     |
/// | timing       | k            | (unused)         | (unused) |
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub model: ModelParams,
    /// Base kernel; its Matérn smoothness is replaced per entry of `s_w`.
    pub kernel: KernelSpec,
    pub s_w: Vec<f64>,
    pub ladder: Vec<i32>,
    pub reference: i32,
    pub fixed: i32,
    pub grid_rules: Vec<GridRule>,
    /// Probe locations (holder, localization).
    pub probes: Vec<f64>,
    /// Truncated domain lengths (localization).
    pub domains: Vec<f64>,
    /// Domain standing in for the half-line (localization).
    pub reference_domain: f64,
    /// Errors below this value are treated as round-off (localization).
    pub noise_floor: f64,
    pub coupled: bool,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub circulant: CirculantConfig,
    /// Fill the `wall_s` column; off by default so tables are reproducible.
    pub record_wall_time: bool,
    /// Repetitions per timing configuration.
    pub reps: usize,
    /// Drop a pre-asymptotic coarsest point from rate fits.
    pub drop_preasymptotic: bool,
}

impl StudyConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: StudyKind, kernel: KernelSpec) -> Self {
        let mut cfg = Self {
            kind,
            model: ModelParams::default(),
            kernel,
            s_w: vec![0.55, 1.0],
            ladder: vec![3, 4, 5, 6],
            reference: 8,
            fixed: 10,
            grid_rules: vec![GridRule::HEqK, GridRule::HSqrtK],
            probes: vec![0.25, 0.5, 0.75],
            domains: vec![1.0, 1.25, 1.5, 1.75, 2.0],
            reference_domain: 3.0,
            noise_floor: 1e-13,
            coupled: true,
            samples: 100,
            seed: 1,
            workers: 1,
            circulant: CirculantConfig::default(),
            record_wall_time: false,
            reps: 5,
            drop_preasymptotic: true,
        };
        match kind {
            StudyKind::SpatialY => {}
            StudyKind::TemporalY => {
                cfg.ladder = vec![4, 5, 6, 7, 8];
                cfg.reference = 12;
                cfg.fixed = 7;
            }
            StudyKind::PriceGrid => {
                cfg.model.domain = 2.0;
                cfg.grid_rules = vec![GridRule::HEqK];
                cfg.ladder = vec![3, 4, 5, 6, 7];
                cfg.reference = 10;
                cfg.fixed = 10;
            }
            StudyKind::Holder => {
                cfg.s_w = vec![0.55];
                cfg.ladder = vec![10, 9, 8, 7, 6, 5];
                cfg.reference = 12;
                cfg.fixed = 8;
                cfg.drop_preasymptotic = false;
            }
            StudyKind::Localization => {
                cfg.s_w = vec![1.0];
                cfg.probes = vec![0.5];
                cfg.reference = 8;
                cfg.fixed = 5;
            }
            StudyKind::Timing => {
                cfg.model.domain = 2.0;
                cfg.s_w = vec![1.0];
                cfg.ladder = vec![4, 6, 8, 10];
            }
        }
        cfg
    }

    /// Checks coupling divisibility and basic ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples < 2 && self.kind != StudyKind::Timing {
            return bad(format!("samples must be at least 2, got {}", self.samples));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.s_w.is_empty() || self.s_w.iter().any(|&s| !(s > 0.5)) {
            return bad("every s_w must exceed 1/2".into());
        }
        let m = &self.model;
        for (name, v) in [("a", m.diffusivity), ("T", m.horizon), ("D", m.domain)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        match self.kind {
            StudyKind::SpatialY | StudyKind::TemporalY | StudyKind::PriceGrid => {
                if self.ladder.len() < 3 {
                    return bad("a rate fit needs at least 3 ladder levels".into());
                }
                if let Some(&e) = self.ladder.iter().find(|&&e| e > self.reference) {
                    return bad(format!(
                        "ladder level 2^-{e} does not divide the reference resolution 2^-{}",
                        self.reference
                    ));
                }
                if self.kind == StudyKind::PriceGrid {
                    for rule in &self.grid_rules {
                        for &e in &self.ladder {
                            if rule.h_exponent(e)? > self.fixed {
                                return bad(format!(
                                    "mesh width of level k = 2^-{e} under {} is finer than the reference h = 2^-{}",
                                    rule.name(),
                                    self.fixed
                                ));
                            }
                        }
                    }
                    if m.domain < 2.0 * m.horizon - 2f64.powi(-self.reference) {
                        return Err(Error::DomainTooSmall {
                            domain: m.domain,
                            required: 2.0 * m.horizon - 2f64.powi(-self.reference),
                        });
                    }
                }
            }
            StudyKind::Holder => {
                if self.ladder.len() < 3 {
                    return bad("a rate fit needs at least 3 separations".into());
                }
                if let Some(&e) = self.ladder.iter().find(|&&e| e > self.reference) {
                    return bad(format!("separation 2^-{e} is below the time step 2^-{}", self.reference));
                }
            }
            StudyKind::Localization => {
                if self.domains.len() < 3 {
                    return bad("localization needs at least 3 domains".into());
                }
                if self.domains.iter().any(|&d| d > self.reference_domain) {
                    return bad("every domain must fit inside the reference domain".into());
                }
            }
            StudyKind::Timing => {
                if self.reps == 0 {
                    return bad("reps must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    pub(crate) fn kernel_for(&self, s_w: f64) -> Result<KernelSpec> {
        self.kernel.with_noise_smoothness(s_w)
    }
}

/// One row of `errors.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub study: String,
    pub param: f64,
    pub resolution: f64,
    pub error: f64,
    pub stderr: f64,
    pub wall_s: f64,
}

/// One row of `rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub study: String,
    pub param: f64,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points_used: usize,
}

/// Errors of one study.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// Rows of one sweep, in ladder order.
    pub fn sweep<'a>(&'a self, study: &'a str, param: f64) -> impl Iterator<Item = &'a ErrorRow> + 'a {
        self.rows.iter().filter(move |r| r.study == study && r.param == param)
    }
}

/// Result of a study: error table, fitted slopes and human-readable notes
/// (dropped points, excluded values).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyOutput {
    pub errors: ErrorTable,
    pub rates: Vec<RateRow>,
    pub timings: Vec<TimingRow>,
    pub notes: Vec<String>,
}

impl StudyOutput {
    pub fn rate(&self, study: &str, param: f64) -> Option<&RateRow> {
        self.rates.iter().find(|r| r.study == study && r.param == param)
    }

    /// Fits `log2 error` against `log2 resolution` for one sweep.
    pub(crate) fn fit_sweep(&mut self, study: &str, param: f64, drop_preasymptotic: bool) -> Result<()> {
        let pts: Vec<(f64, f64)> = self
            .errors
            .sweep(study, param)
            .filter(|r| r.error > 0.0)
            .map(|r| (r.resolution, r.error))
            .collect();
        let n = pts.len();
        let fit = fit_rate(&pts, drop_preasymptotic)?;
        if fit.points_used < n {
            self.notes.push(format!(
                "{study} param={param}: coarsest point dropped as pre-asymptotic"
            ));
        }
        self.rates.push(RateRow {
            study: study.to_string(),
            param,
            slope: fit.slope,
            intercept: fit.intercept,
            residual: fit.residual,
            points_used: fit.points_used,
        });
        Ok(())
    }

    /// Fits `ln error` against `(D − x)²` for a localization sweep, skipping
    /// errors below `floor`.
    pub(crate) fn fit_localization(&mut self, study: &str, param: f64, floor: f64) -> Result<()> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in self.errors.sweep(study, param) {
            if r.error > floor {
                x.push((r.resolution - param).powi(2));
                y.push(r.error.ln());
            } else {
                self.notes.push(format!(
                    "{study} x={param}: D={} excluded, error {:e} below noise floor",
                    r.resolution, r.error
                ));
            }
        }
        let (slope, intercept, residual) = linear_fit(&x, &y)?;
        self.rates.push(RateRow {
            study: study.to_string(),
            param,
            slope,
            intercept,
            residual,
            points_used: x.len(),
        });
        Ok(())
    }
}

pub(crate) fn exp2(e: i32) -> f64 {
    2f64.powi(-e)
}

/// Wall-clock timer that reports zero unless wall times are requested.
pub(crate) struct SweepTimer {
    start: Instant,
    enabled: bool,
}

impl SweepTimer {
    pub(crate) fn new(enabled: bool) -> Self {
        Self {
            start: Instant::now(),
            enabled,
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

/// Runs the study selected by `cfg.kind`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    match cfg.kind {
        StudyKind::SpatialY => spatial_study(cfg),
        StudyKind::TemporalY => temporal_study(cfg),
        StudyKind::PriceGrid => price_grid_study(cfg),
        StudyKind::Holder => holder_study(cfg),
        StudyKind::Localization => localization_study(cfg),
        StudyKind::Timing => timing_study(cfg),
    }
}

/// Monte Carlo estimate for a single coarse resolution (exponent `level`)
/// of the study in `cfg`, for the first entry of `s_w`.
pub fn mc_pointwise_error(cfg: &StudyConfig, level: i32) -> Result<(f64, f64)> {
    let mut one = cfg.clone();
    one.s_w.truncate(1);
    one.ladder = vec![level];
    one.grid_rules.truncate(1);
    let out = match cfg.kind {
        StudyKind::SpatialY => heat::spatial_rows(&one)?,
        StudyKind::TemporalY => heat::temporal_rows(&one)?,
        StudyKind::PriceGrid => price::price_rows(&one)?,
        other => {
            return Err(Error::Config(format!(
                "{} has no single-resolution error",
                other.name()
            )))
        }
    };
    let row = out
        .rows
        .first()
        .ok_or_else(|| Error::Config("empty sweep".into()))?;
    Ok((row.error, row.stderr))
}
