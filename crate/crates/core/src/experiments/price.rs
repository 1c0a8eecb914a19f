//! Price studies: coupled lattice convergence, wall-clock timing and the
//! error-decomposition check.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::heat_fem::{interpolate, solve_path, step_count, FemSystem, HeatStepper, NoiseSource, RecordedNoise, SampledNoise};
use crate::noise::{aggregate_time, restrict_to_coarse, IncrementSampler, Lane, NoiseGrid, SeedPolicy};
use crate::price_fd::{
    decomposition_integrand, solve_x, DecompositionEstimate, FineSurrogate, InitialCurve, PriceGrid, PriceStepper,
};
use crate::profile::Profile;
use crate::stats::{median, MomentAccumulator};
use crate::{Error, Result};

use super::engine::{mc_map, pointwise_error};
use super::{exp2, ErrorRow, ErrorTable, GridRule, StudyConfig, StudyOutput, SweepTimer};

/// One row of `timing.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub rule: String,
    pub k: f64,
    pub h: f64,
    /// Median wall time of one joint volatility and price path.
    pub wall_s: f64,
    /// Median time spent in Fourier transforms within that path.
    pub fft_s: f64,
}

/// Volatility solver and price lattice at one resolution.
struct PriceLevel {
    system: FemSystem,
    grid: PriceGrid,
    space_ratio: usize,
    time_ratio: usize,
}

fn price_level(cfg: &StudyConfig, k_exp: i32, h_exp: i32, reference: Option<&PriceLevel>) -> Result<PriceLevel> {
    let m = &cfg.model;
    let k = exp2(k_exp);
    let system = FemSystem::assemble(NoiseGrid::with_step(m.domain, exp2(h_exp))?, m.diffusivity, k)?;
    let grid = PriceGrid::new(m.horizon, k)?;
    let (space_ratio, time_ratio) = match reference {
        Some(r) => (
            r.system.grid().intervals() / system.grid().intervals(),
            r.grid.steps() / grid.steps(),
        ),
        None => (1, 1),
    };
    Ok(PriceLevel {
        system,
        grid,
        space_ratio,
        time_ratio,
    })
}

/// Squared differences `|X_ref − X_ℓ|²` at coarse lattice points with
/// `n ≥ 1`, time-major, for one sample.
fn coupled_price_errors(
    cfg: &StudyConfig,
    reference: &PriceLevel,
    levels: &[PriceLevel],
    noise: &mut dyn NoiseSource,
    beta_rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    let y0: Profile = cfg.model.y0.clone().into();
    let curve = InitialCurve::new(cfg.model.x0_smooth.clone().into(), cfg.model.x0_level);
    let s = cfg.model.scaling;
    let sk = reference.grid.step().sqrt();

    let mut y_ref = HeatStepper::new(&reference.system, &y0);
    let mut x_ref = PriceStepper::new(reference.grid, &curve, s)?;
    let mut ref_row = y_ref.nodal();
    let h_ref = reference.system.grid().h();

    let mut ys: Vec<HeatStepper<'_>> = levels.iter().map(|l| HeatStepper::new(&l.system, &y0)).collect();
    let mut xs: Vec<PriceStepper> = levels
        .iter()
        .map(|l| PriceStepper::new(l.grid, &curve, s))
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<f64>> = ys.iter().map(|y| y.nodal()).collect();
    let mut w_acc: Vec<Vec<f64>> = levels.iter().map(|l| vec![0.0; l.system.grid().node_count()]).collect();
    let mut b_acc = vec![0.0; levels.len()];
    let mut out: Vec<Vec<f64>> = levels
        .iter()
        .map(|l| Vec::with_capacity(l.grid.steps() * (l.grid.steps() + 1)))
        .collect();
    let mut inc = vec![0.0; reference.system.grid().node_count()];

    for i in 1..=reference.grid.steps() {
        let db = sk * beta_rng.sample::<f64, _>(StandardNormal);
        x_ref.advance(|x| interpolate(&ref_row, h_ref, x), db)?;
        noise.next_increment(&mut inc)?;
        y_ref.advance(&inc)?;
        y_ref.nodal_into(&mut ref_row);
        for (l, level) in levels.iter().enumerate() {
            for (a, v) in w_acc[l].iter_mut().zip(inc.iter().step_by(level.space_ratio)) {
                *a += v;
            }
            b_acc[l] += db;
            if i % level.time_ratio != 0 {
                continue;
            }
            let h = level.system.grid().h();
            let row = &rows[l];
            xs[l].advance(|x| interpolate(row, h, x), b_acc[l])?;
            ys[l].advance(&w_acc[l])?;
            ys[l].nodal_into(&mut rows[l]);
            w_acc[l].fill(0.0);
            b_acc[l] = 0.0;
            let fine = x_ref.current();
            for (j, &v) in xs[l].current().iter().enumerate() {
                let d = fine[j * level.time_ratio] - v;
                out[l].push(d * d);
            }
        }
    }
    Ok(out)
}

pub(crate) fn price_rows(cfg: &StudyConfig) -> Result<ErrorTable> {
    let reference = price_level(cfg, cfg.reference, cfg.fixed, None)?;
    let policy = SeedPolicy::new(cfg.seed);
    let mut table = ErrorTable::default();
    for (p, &s_w) in cfg.s_w.iter().enumerate() {
        let sampler = IncrementSampler::new(&cfg.kernel_for(s_w)?, *reference.system.grid(), cfg.circulant)?;
        for &rule in &cfg.grid_rules {
            let timer = SweepTimer::new(cfg.record_wall_time);
            let levels: Vec<PriceLevel> = cfg
                .ladder
                .iter()
                .map(|&e| price_level(cfg, e, rule.h_exponent(e)?, Some(&reference)))
                .collect::<Result<_>>()?;
            for l in &levels {
                if l.space_ratio * l.system.grid().intervals() != reference.system.grid().intervals() {
                    return Err(Error::Divisibility {
                        what: format!("{} reference intervals", reference.system.grid().intervals()),
                        ratio: l.space_ratio,
                    });
                }
            }
            let mut accs: Vec<MomentAccumulator> = levels
                .iter()
                .map(|l| MomentAccumulator::new(l.grid.steps() * (l.grid.steps() + 1)))
                .collect();
            mc_map(
                cfg.samples,
                cfg.workers,
                |s| {
                    let rng = policy.rng(p as u32, s as u64, Lane::Noise);
                    let mut noise = SampledNoise::new(&sampler, rng, reference.grid.step());
                    let mut beta = policy.rng(p as u32, s as u64, Lane::Beta);
                    coupled_price_errors(cfg, &reference, &levels, &mut noise, &mut beta)
                },
                |_, sq| {
                    for (acc, v) in accs.iter_mut().zip(&sq) {
                        acc.push(v);
                    }
                    Ok(())
                },
            )?;
            let wall = timer.seconds();
            let study = study_name(rule);
            for (acc, &e) in accs.iter().zip(&cfg.ladder) {
                let pe = pointwise_error(acc);
                table.rows.push(ErrorRow {
                    study: study.clone(),
                    param: s_w,
                    resolution: exp2(e),
                    error: pe.error,
                    stderr: pe.stderr,
                    wall_s: wall,
                });
            }
        }
    }
    Ok(table)
}

fn study_name(rule: GridRule) -> String {
    format!("price-grid:{}", rule.name())
}

/// Pointwise price errors over the lattice-step ladder, for every grid rule
/// and every `s_W`.
pub fn price_grid_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let mut out = StudyOutput {
        errors: price_rows(cfg)?,
        ..Default::default()
    };
    for &s_w in &cfg.s_w {
        for &rule in &cfg.grid_rules {
            out.fit_sweep(&study_name(rule), s_w, cfg.drop_preasymptotic)?;
        }
    }
    Ok(out)
}

/// Median wall time of simulating one volatility path and one price path,
/// for each lattice step in `cfg.ladder` and each grid rule.
pub fn timing_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let policy = SeedPolicy::new(cfg.seed);
    let kernel = cfg.kernel_for(cfg.s_w[0])?;
    let mut out = StudyOutput::default();
    for &rule in &cfg.grid_rules {
        for &e in &cfg.ladder {
            let level = price_level(cfg, e, rule.h_exponent(e)?, None)?;
            let sampler = IncrementSampler::new(&kernel, *level.system.grid(), cfg.circulant)?;
            let mut walls = Vec::with_capacity(cfg.reps);
            let mut ffts = Vec::with_capacity(cfg.reps);
            for rep in 0..cfg.reps {
                let start = Instant::now();
                let mut noise = SampledNoise::new(&sampler, policy.rng(0, rep as u64, Lane::Noise), level.grid.step());
                let mut beta = policy.rng(0, rep as u64, Lane::Beta);
                simulate_joint(cfg, &level, &mut noise, &mut beta)?;
                walls.push(start.elapsed().as_secs_f64());
                ffts.push(noise.stream().fft_time().as_secs_f64());
            }
            out.timings.push(TimingRow {
                rule: rule.name().to_string(),
                k: level.grid.step(),
                h: level.system.grid().h(),
                wall_s: median(&walls),
                fft_s: median(&ffts),
            });
        }
    }
    Ok(out)
}

fn simulate_joint(
    cfg: &StudyConfig,
    level: &PriceLevel,
    noise: &mut dyn NoiseSource,
    beta_rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let y0: Profile = cfg.model.y0.clone().into();
    let curve = InitialCurve::new(cfg.model.x0_smooth.clone().into(), cfg.model.x0_level);
    let mut y = HeatStepper::new(&level.system, &y0);
    let mut x = PriceStepper::new(level.grid, &curve, cfg.model.scaling)?;
    let mut row = y.nodal();
    let mut inc = vec![0.0; row.len()];
    let h = level.system.grid().h();
    let sk = level.grid.step().sqrt();
    for _ in 0..level.grid.steps() {
        let db = sk * beta_rng.sample::<f64, _>(StandardNormal);
        x.advance(|s| interpolate(&row, h, s), db)?;
        noise.next_increment(&mut inc)?;
        y.advance(&inc)?;
        y.nodal_into(&mut row);
    }
    Ok(x.current().to_vec())
}

/// Direct and decomposed estimates of the mean-square price error of a
/// coarse lattice against a finer one driven by the same noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCheck {
    /// `E|X_fine − X_coarse|²` on the coarse lattice.
    pub direct: DecompositionEstimate,
    /// `s²·E∫|Y − Ŷ|² dr` along characteristics.
    pub decomposed: DecompositionEstimate,
    /// Per-sample difference of the two, whose mean should vanish.
    pub difference: DecompositionEstimate,
}

impl DecompositionCheck {
    /// Largest `|mean difference| / stderr` over points with `n ≥ 1`.
    pub fn max_z(&self) -> f64 {
        let w = self.direct.steps + 1;
        (w..w * w)
            .map(|i| {
                let (m, se) = (self.difference.mean[i], self.difference.stderr[i]);
                if se > 0.0 {
                    m.abs() / se
                } else if m == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|direct − decomposed| / √(se_direct² + se_decomposed²)` over
    /// points with `n ≥ 1`.
    pub fn max_combined_z(&self) -> f64 {
        let w = self.direct.steps + 1;
        (w..w * w)
            .map(|i| {
                let gap = (self.direct.mean[i] - self.decomposed.mean[i]).abs();
                let se = self.direct.stderr[i].hypot(self.decomposed.stderr[i]);
                if se > 0.0 {
                    gap / se
                } else if gap == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|direct − decomposed| / direct` over points with `n ≥ 1`.
    pub fn max_relative_gap(&self) -> f64 {
        let w = self.direct.steps + 1;
        (w..w * w)
            .filter(|&i| self.direct.mean[i] > 0.0)
            .map(|i| (self.direct.mean[i] - self.decomposed.mean[i]).abs() / self.direct.mean[i])
            .fold(0.0, f64::max)
    }
}

/// Compares the coarse scheme with step `2^{−coarse_exp}` (mesh width equal
/// to the step) against a fine scheme with `substeps` times smaller steps,
/// using the first entry of `cfg.s_w`.
pub fn decomposition_check(cfg: &StudyConfig, coarse_exp: i32, substeps: usize) -> Result<DecompositionCheck> {
    if !substeps.is_power_of_two() || substeps < 2 {
        return Err(Error::param("substeps", "must be a power of two of at least 2"));
    }
    let m = &cfg.model;
    let fine_exp = coarse_exp + substeps.trailing_zeros() as i32;
    let fine = price_level(cfg, fine_exp, fine_exp, None)?;
    let coarse = price_level(cfg, coarse_exp, coarse_exp, Some(&fine))?;
    let sampler = IncrementSampler::new(&cfg.kernel_for(cfg.s_w[0])?, *fine.system.grid(), cfg.circulant)?;
    let y0: Profile = m.y0.clone().into();
    let curve = InitialCurve::new(m.x0_smooth.clone().into(), m.x0_level);
    let policy = SeedPolicy::new(cfg.seed);
    let n_f = step_count(m.horizon, fine.grid.step())?;
    let w = coarse.grid.steps() + 1;
    let mut direct = Vec::with_capacity(cfg.samples);
    let mut decomposed = Vec::with_capacity(cfg.samples);
    let mut difference = Vec::with_capacity(cfg.samples);
    mc_map(
        cfg.samples,
        cfg.workers,
        |s| {
            let mut rng = policy.rng(0, s as u64, Lane::Noise);
            let mut stream = sampler.stream();
            let incs: Vec<Vec<f64>> = (0..n_f)
                .map(|_| {
                    let mut v = vec![0.0; fine.system.grid().node_count()];
                    sampler.sample_into(&mut stream, &mut rng, fine.grid.step(), &mut v);
                    v
                })
                .collect();
            let coarse_incs = aggregate_time(
                &incs
                    .iter()
                    .map(|v| restrict_to_coarse(v, coarse.space_ratio))
                    .collect::<Result<Vec<_>>>()?,
                substeps,
            )?;
            let y_f = solve_path(&fine.system, &y0, &mut RecordedNoise::new(incs), n_f)?;
            let y_c = solve_path(&coarse.system, &y0, &mut RecordedNoise::new(coarse_incs), coarse.grid.steps())?;
            let mut brng = policy.rng(0, s as u64, Lane::Beta);
            let sk = fine.grid.step().sqrt();
            let b_f: Vec<f64> = (0..n_f).map(|_| sk * brng.sample::<f64, _>(StandardNormal)).collect();
            let b_c: Vec<f64> = b_f.chunks(substeps).map(|c| c.iter().sum()).collect();
            let x_f = solve_x(&fine.grid, &curve, m.scaling, &y_f, &b_f)?;
            let x_c = solve_x(&coarse.grid, &curve, m.scaling, &y_c, &b_c)?;
            let lhs: Vec<f64> = (0..w * w)
                .map(|idx| {
                    let (n, j) = (idx / w, idx % w);
                    (x_f.value(n * substeps, j * substeps) - x_c.value(n, j)).powi(2)
                })
                .collect();
            let rhs = decomposition_integrand(&FineSurrogate::new(&y_f), &y_c, &coarse.grid, m.scaling, substeps)?;
            Ok((lhs, rhs))
        },
        |_, (lhs, rhs)| {
            difference.push(lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect());
            direct.push(lhs);
            decomposed.push(rhs);
            Ok(())
        },
    )?;
    let steps = coarse.grid.steps();
    Ok(DecompositionCheck {
        direct: DecompositionEstimate::from_samples(steps, direct)?,
        decomposed: DecompositionEstimate::from_samples(steps, decomposed)?,
        difference: DecompositionEstimate::from_samples(steps, difference)?,
    })
}
