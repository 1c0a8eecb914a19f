//! Volatility studies: spatial and temporal rates, temporal Hölder
//! regularity, localization, and deterministic orders.

use crate::heat_fem::{interpolate, step_count, FemSystem, HeatStepper, NoiseSource, SampledNoise, ZeroNoise};
use crate::heat_reference::{QuadSpec, SpectralReference};
use crate::noise::{IncrementSampler, Lane, NoiseGrid, SeedPolicy};
use crate::profile::{Profile, ProfileSpec};
use crate::stats::{fit_rate, MomentAccumulator, RateFit};
use crate::{Error, Result};

use super::engine::{mc_map, pointwise_error};
use super::{exp2, ErrorRow, ErrorTable, StudyConfig, StudyOutput, SweepTimer};

/// A coarse resolution compared against the reference solver: its own
/// assembled system plus the spatial and temporal coupling ratios.
#[derive(Debug, Clone)]
pub struct HeatLevel {
    pub system: FemSystem,
    pub space_ratio: usize,
    pub time_ratio: usize,
}

impl HeatLevel {
    pub fn new(reference: &FemSystem, system: FemSystem) -> Result<Self> {
        let space = reference.grid().intervals() / system.grid().intervals();
        let time = (system.time_step() / reference.time_step()).round() as usize;
        if space == 0 || space * system.grid().intervals() != reference.grid().intervals() {
            return Err(Error::Divisibility {
                what: format!("{} reference intervals", reference.grid().intervals()),
                ratio: space,
            });
        }
        if time == 0 || ((time as f64 * reference.time_step() - system.time_step()) / system.time_step()).abs() > 1e-9 {
            return Err(Error::Divisibility {
                what: "reference time step".into(),
                ratio: time,
            });
        }
        Ok(Self {
            system,
            space_ratio: space,
            time_ratio: time,
        })
    }

    fn points(&self, ref_steps: usize) -> usize {
        ref_steps / self.time_ratio * self.system.grid().node_count()
    }
}

/// Pathwise squared differences `|Y_ref(t_n, x_j) − Y_ℓ(t_n, x_j)|²` at the
/// coarse times `n ≥ 1` and coarse nodes of every level, time-major.
///
/// The reference is driven by `noise`; a level with an entry in
/// `independent` draws its own increments at its own resolution instead of
/// restricting and aggregating the reference noise.
pub fn coupled_heat_errors(
    reference: &FemSystem,
    levels: &[HeatLevel],
    y0: &Profile,
    steps: usize,
    noise: &mut dyn NoiseSource,
    independent: &mut [Option<Box<dyn NoiseSource + '_>>],
) -> Result<Vec<Vec<f64>>> {
    for l in levels {
        if !steps.is_multiple_of(l.time_ratio) {
            return Err(Error::Divisibility {
                what: format!("{steps} reference steps"),
                ratio: l.time_ratio,
            });
        }
    }
    let n_ref = reference.grid().node_count();
    let mut ref_stepper = HeatStepper::new(reference, y0);
    let mut states: Vec<HeatStepper<'_>> = levels.iter().map(|l| HeatStepper::new(&l.system, y0)).collect();
    let mut accum: Vec<Vec<f64>> = levels.iter().map(|l| vec![0.0; l.system.grid().node_count()]).collect();
    let mut out: Vec<Vec<f64>> = levels.iter().map(|l| Vec::with_capacity(l.points(steps))).collect();
    let mut inc = vec![0.0; n_ref];
    let mut ref_row = vec![0.0; n_ref];
    let mut lvl_row: Vec<f64> = Vec::new();
    for i in 1..=steps {
        noise.next_increment(&mut inc)?;
        ref_stepper.advance(&inc)?;
        let mut row_ready = false;
        for (l, level) in levels.iter().enumerate() {
            let own = independent.get_mut(l).and_then(|o| o.as_mut());
            if own.is_none() {
                for (a, v) in accum[l].iter_mut().zip(inc.iter().step_by(level.space_ratio)) {
                    *a += v;
                }
            }
            if i % level.time_ratio != 0 {
                continue;
            }
            if let Some(src) = own {
                src.next_increment(&mut accum[l])?;
            }
            states[l].advance(&accum[l])?;
            accum[l].iter_mut().for_each(|a| *a = 0.0);
            if !row_ready {
                ref_stepper.nodal_into(&mut ref_row);
                row_ready = true;
            }
            lvl_row.resize(level.system.grid().node_count(), 0.0);
            states[l].nodal_into(&mut lvl_row);
            for (c, &v) in lvl_row.iter().enumerate() {
                let d = ref_row[c * level.space_ratio] - v;
                out[l].push(d * d);
            }
        }
    }
    Ok(out)
}

struct Ladder {
    reference: FemSystem,
    levels: Vec<HeatLevel>,
    resolutions: Vec<f64>,
    steps: usize,
}

fn spatial_ladder(cfg: &StudyConfig) -> Result<Ladder> {
    let m = &cfg.model;
    let k = exp2(cfg.fixed);
    let reference = FemSystem::assemble(NoiseGrid::with_step(m.domain, exp2(cfg.reference))?, m.diffusivity, k)?;
    let mut levels = Vec::new();
    for &e in &cfg.ladder {
        let sys = FemSystem::assemble(NoiseGrid::with_step(m.domain, exp2(e))?, m.diffusivity, k)?;
        levels.push(HeatLevel::new(&reference, sys)?);
    }
    Ok(Ladder {
        reference,
        levels,
        resolutions: cfg.ladder.iter().map(|&e| exp2(e)).collect(),
        steps: step_count(m.horizon, k)?,
    })
}

fn temporal_ladder(cfg: &StudyConfig) -> Result<Ladder> {
    let m = &cfg.model;
    let grid = NoiseGrid::with_step(m.domain, exp2(cfg.fixed))?;
    let k_ref = exp2(cfg.reference);
    let reference = FemSystem::assemble(grid, m.diffusivity, k_ref)?;
    let mut levels = Vec::new();
    for &e in &cfg.ladder {
        let sys = FemSystem::assemble(grid, m.diffusivity, exp2(e))?;
        levels.push(HeatLevel::new(&reference, sys)?);
    }
    Ok(Ladder {
        reference,
        levels,
        resolutions: cfg.ladder.iter().map(|&e| exp2(e)).collect(),
        steps: step_count(m.horizon, k_ref)?,
    })
}

fn ladder_rows(cfg: &StudyConfig, study: &str, build: fn(&StudyConfig) -> Result<Ladder>) -> Result<ErrorTable> {
    let ladder = build(cfg)?;
    let y0: Profile = cfg.model.y0.clone().into();
    let policy = SeedPolicy::new(cfg.seed);
    let mut table = ErrorTable::default();
    for (p, &s_w) in cfg.s_w.iter().enumerate() {
        let timer = SweepTimer::new(cfg.record_wall_time);
        let kernel = cfg.kernel_for(s_w)?;
        let sampler = IncrementSampler::new(&kernel, *ladder.reference.grid(), cfg.circulant)?;
        let own_samplers: Vec<IncrementSampler> = if cfg.coupled {
            Vec::new()
        } else {
            ladder
                .levels
                .iter()
                .map(|l| IncrementSampler::new(&kernel, *l.system.grid(), cfg.circulant))
                .collect::<Result<_>>()?
        };
        let mut accs: Vec<MomentAccumulator> = ladder
            .levels
            .iter()
            .map(|l| MomentAccumulator::new(l.points(ladder.steps)))
            .collect();
        mc_map(
            cfg.samples,
            cfg.workers,
            |s| {
                let rng = policy.rng(p as u32, s as u64, Lane::Noise);
                let mut noise = SampledNoise::new(&sampler, rng, ladder.reference.time_step());
                let mut own: Vec<Option<Box<dyn NoiseSource + '_>>> = own_samplers
                    .iter()
                    .zip(&ladder.levels)
                    .enumerate()
                    .map(|(l, (smp, lvl))| {
                        let rng = policy.rng(p as u32, s as u64, Lane::Uncoupled(l as u8));
                        Some(Box::new(SampledNoise::new(smp, rng, lvl.system.time_step())) as Box<dyn NoiseSource>)
                    })
                    .collect();
                coupled_heat_errors(&ladder.reference, &ladder.levels, &y0, ladder.steps, &mut noise, &mut own)
            },
            |_, sq| {
                for (acc, v) in accs.iter_mut().zip(&sq) {
                    acc.push(v);
                }
                Ok(())
            },
        )?;
        let wall = timer.seconds();
        for (acc, &res) in accs.iter().zip(&ladder.resolutions) {
            let e = pointwise_error(acc);
            table.rows.push(ErrorRow {
                study: study.to_string(),
                param: s_w,
                resolution: res,
                error: e.error,
                stderr: e.stderr,
                wall_s: wall,
            });
        }
    }
    Ok(table)
}

pub(crate) fn spatial_rows(cfg: &StudyConfig) -> Result<ErrorTable> {
    ladder_rows(cfg, "spatial-y", spatial_ladder)
}

pub(crate) fn temporal_rows(cfg: &StudyConfig) -> Result<ErrorTable> {
    ladder_rows(cfg, "temporal-y", temporal_ladder)
}

fn with_fits(cfg: &StudyConfig, study: &str, errors: ErrorTable) -> Result<StudyOutput> {
    let mut out = StudyOutput {
        errors,
        ..Default::default()
    };
    for &s_w in &cfg.s_w {
        out.fit_sweep(study, s_w, cfg.drop_preasymptotic)?;
    }
    Ok(out)
}

/// Spatial rates of the volatility at fixed time step, one sweep per `s_W`.
pub fn spatial_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    with_fits(cfg, "spatial-y", spatial_rows(cfg)?)
}

/// Temporal rates of the volatility at fixed mesh width, one sweep per `s_W`.
pub fn temporal_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    with_fits(cfg, "temporal-y", temporal_rows(cfg)?)
}

/// Mean-square temporal increments `E|Y(t + δ, x) − Y(t, x)|²` at a fine
/// resolution, averaged over anchors `t ∈ [T/2, T − δ_max]` spaced by
/// `δ_max`; the fitted exponent of the mean square against `δ` is reported.
pub fn holder_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let m = &cfg.model;
    let k = exp2(cfg.reference);
    let system = FemSystem::assemble(NoiseGrid::with_step(m.domain, exp2(cfg.fixed))?, m.diffusivity, k)?;
    let steps = step_count(m.horizon, k)?;
    let seps: Vec<usize> = cfg.ladder.iter().map(|&e| 1usize << (cfg.reference - e)).collect();
    let stride = *seps.iter().max().ok_or_else(|| Error::Config("no separations".into()))?;
    let first = steps / 2;
    let anchors: Vec<usize> = (0..).map(|a| first + a * stride).take_while(|&a| a + stride <= steps).collect();
    if anchors.is_empty() {
        return Err(Error::Config("largest separation exceeds T/2".into()));
    }
    let probes = &cfg.probes;
    if probes.is_empty() || probes.iter().any(|&x| !(x > 0.0 && x < m.domain)) {
        return Err(Error::Config("holder probes must lie inside (0, D)".into()));
    }
    let y0: Profile = m.y0.clone().into();
    let policy = SeedPolicy::new(cfg.seed);
    let h = system.grid().h();
    let mut out = StudyOutput::default();
    for (p, &s_w) in cfg.s_w.iter().enumerate() {
        let timer = SweepTimer::new(cfg.record_wall_time);
        let sampler = IncrementSampler::new(&cfg.kernel_for(s_w)?, *system.grid(), cfg.circulant)?;
        let width = probes.len() + 1;
        let mut accs: Vec<MomentAccumulator> = seps.iter().map(|_| MomentAccumulator::new(width)).collect();
        mc_map(
            cfg.samples,
            cfg.workers,
            |s| {
                let rng = policy.rng(p as u32, s as u64, Lane::Noise);
                let mut noise = SampledNoise::new(&sampler, rng, k);
                let mut stepper = HeatStepper::new(&system, &y0);
                let mut inc = vec![0.0; system.grid().node_count()];
                let mut row = vec![0.0; system.grid().node_count()];
                // probe values for time levels first..=steps
                let mut trace = Vec::with_capacity((steps - first + 1) * probes.len());
                for i in 1..=steps {
                    noise.next_increment(&mut inc)?;
                    stepper.advance(&inc)?;
                    if i >= first {
                        stepper.nodal_into(&mut row);
                        trace.extend(probes.iter().map(|&x| interpolate(&row, h, x)));
                    }
                }
                if first == 0 {
                    unreachable!("at least one step before T/2");
                }
                let at = |i: usize, q: usize| trace[(i - first) * probes.len() + q];
                Ok(seps
                    .iter()
                    .map(|&d| {
                        let mut v = vec![0.0; width];
                        for &a in &anchors {
                            for (q, acc) in v.iter_mut().take(probes.len()).enumerate() {
                                let diff = at(a + d, q) - at(a, q);
                                *acc += diff * diff / anchors.len() as f64;
                            }
                        }
                        v[probes.len()] = v[..probes.len()].iter().sum::<f64>() / probes.len() as f64;
                        v
                    })
                    .collect::<Vec<_>>())
            },
            |_, vals| {
                for (acc, v) in accs.iter_mut().zip(&vals) {
                    acc.push(v);
                }
                Ok(())
            },
        )?;
        let wall = timer.seconds();
        let probe_study = format!("holder@s_w={s_w}");
        for (acc, &e) in accs.iter().zip(&cfg.ladder) {
            let delta = exp2(e);
            out.errors.rows.push(ErrorRow {
                study: "holder".into(),
                param: s_w,
                resolution: delta,
                error: acc.mean(probes.len()),
                stderr: acc.stderr(probes.len()),
                wall_s: wall,
            });
            for (q, &x) in probes.iter().enumerate() {
                out.errors.rows.push(ErrorRow {
                    study: probe_study.clone(),
                    param: x,
                    resolution: delta,
                    error: acc.mean(q),
                    stderr: acc.stderr(q),
                    wall_s: wall,
                });
            }
        }
        out.fit_sweep("holder", s_w, false)?;
        for &x in probes {
            out.fit_sweep(&probe_study, x, false)?;
        }
    }
    Ok(out)
}

/// Matched-noise comparison of truncated domains `(0, D)` against a large
/// reference domain standing in for the half-line. Errors are
/// `max_t E[|Y_ref(t, x) − Y_D(t, x)|²]^{1/2}` at each probe `x`; the fit is
/// of `ln(error)` against `(D − x)²`.
pub fn localization_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let m = &cfg.model;
    let h = exp2(cfg.fixed);
    let k = exp2(cfg.reference);
    let reference = FemSystem::assemble(NoiseGrid::with_step(cfg.reference_domain, h)?, m.diffusivity, k)?;
    let systems: Vec<FemSystem> = cfg
        .domains
        .iter()
        .map(|&d| FemSystem::assemble(NoiseGrid::with_step(d, h)?, m.diffusivity, k))
        .collect::<Result<_>>()?;
    for &x in &cfg.probes {
        if cfg.domains.iter().any(|&d| x > d) || x < 0.0 {
            return Err(Error::Config(format!("probe {x} lies outside a truncated domain")));
        }
    }
    let steps = step_count(m.horizon, k)?;
    let y0: Profile = m.y0.clone().into();
    let policy = SeedPolicy::new(cfg.seed);
    let probes = &cfg.probes;
    let mut out = StudyOutput::default();
    for (p, &s_w) in cfg.s_w.iter().enumerate() {
        let timer = SweepTimer::new(cfg.record_wall_time);
        let sampler = IncrementSampler::new(&cfg.kernel_for(s_w)?, *reference.grid(), cfg.circulant)?;
        let mut accs: Vec<MomentAccumulator> = systems.iter().map(|_| MomentAccumulator::new(steps * probes.len())).collect();
        mc_map(
            cfg.samples,
            cfg.workers,
            |s| {
                let rng = policy.rng(p as u32, s as u64, Lane::Noise);
                let mut noise = SampledNoise::new(&sampler, rng, k);
                let mut ref_stepper = HeatStepper::new(&reference, &y0);
                let mut steppers: Vec<HeatStepper<'_>> = systems.iter().map(|s| HeatStepper::new(s, &y0)).collect();
                let mut inc = vec![0.0; reference.grid().node_count()];
                let mut ref_row = vec![0.0; reference.grid().node_count()];
                let mut row = Vec::new();
                let mut sq: Vec<Vec<f64>> = systems.iter().map(|_| Vec::with_capacity(steps * probes.len())).collect();
                for _ in 0..steps {
                    noise.next_increment(&mut inc)?;
                    ref_stepper.advance(&inc)?;
                    ref_stepper.nodal_into(&mut ref_row);
                    for (l, st) in steppers.iter_mut().enumerate() {
                        let n = systems[l].grid().node_count();
                        st.advance(&inc[..n])?;
                        row.resize(n, 0.0);
                        st.nodal_into(&mut row);
                        for &x in probes {
                            let d = interpolate(&ref_row, h, x) - interpolate(&row, h, x);
                            sq[l].push(d * d);
                        }
                    }
                }
                Ok(sq)
            },
            |_, sq| {
                for (acc, v) in accs.iter_mut().zip(&sq) {
                    acc.push(v);
                }
                Ok(())
            },
        )?;
        let wall = timer.seconds();
        for (q, &x) in probes.iter().enumerate() {
            for (acc, &d) in accs.iter().zip(&cfg.domains) {
                // restrict the statistic to this probe's entries
                let mut best = (0.0, 0.0);
                for t in 0..steps {
                    let idx = t * probes.len() + q;
                    let mse = acc.mean(idx);
                    if mse > best.0 {
                        best = (mse, acc.stderr(idx));
                    }
                }
                let error = best.0.sqrt();
                out.errors.rows.push(ErrorRow {
                    study: "localization".into(),
                    param: x,
                    resolution: d,
                    error,
                    stderr: if error > 0.0 { best.1 / (2.0 * error) } else { 0.0 },
                    wall_s: wall,
                });
            }
            if cfg.s_w.len() == 1 || p == 0 {
                out.fit_localization("localization", x, cfg.noise_floor)?;
            }
        }
    }
    Ok(out)
}

/// Observed orders of the deterministic solver against the sine-series
/// reference for an eigenmode initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicOrders {
    /// `(k, max error)` with fine `h`.
    pub temporal_errors: Vec<(f64, f64)>,
    /// `(h, max error)` with fine `k`.
    pub spatial_errors: Vec<(f64, f64)>,
    pub temporal: RateFit,
    pub spatial: RateFit,
}

/// Pointwise max-norm errors of the noise-free solver started from
/// `sin(πx/D)`, compared at the nodes and at times that are multiples of
/// `compare_every`.
#[allow(clippy::too_many_arguments)]
pub fn deterministic_orders(
    diffusivity: f64,
    domain: f64,
    horizon: f64,
    k_sweep: &[i32],
    fine_h: i32,
    h_sweep: &[i32],
    fine_k: i32,
    compare_every: f64,
) -> Result<DeterministicOrders> {
    let spec = ProfileSpec::Sine {
        mode: 1,
        amplitude: 1.0,
        length: domain,
    };
    let y0: Profile = spec.clone().into();
    let t_min = compare_every;
    let reference = SpectralReference::adaptive(|x| spec.eval(x), domain, diffusivity, t_min, QuadSpec::default())?;
    let max_error = |h: f64, k: f64| -> Result<f64> {
        let sys = FemSystem::assemble(NoiseGrid::with_step(domain, h)?, diffusivity, k)?;
        let steps = step_count(horizon, k)?;
        let every = step_count(compare_every, k)?;
        let mut stepper = HeatStepper::new(&sys, &y0);
        let mut zero = vec![0.0; sys.grid().node_count()];
        let mut row = vec![0.0; sys.grid().node_count()];
        let mut worst: f64 = 0.0;
        for i in 1..=steps {
            ZeroNoise.next_increment(&mut zero)?;
            stepper.advance(&zero)?;
            if i % every == 0 {
                stepper.nodal_into(&mut row);
                let t = i as f64 * k;
                for (j, &v) in row.iter().enumerate() {
                    worst = worst.max((v - reference.eval(t, sys.grid().node(j))?).abs());
                }
            }
        }
        Ok(worst)
    };
    let temporal_errors = k_sweep
        .iter()
        .map(|&e| Ok((exp2(e), max_error(exp2(fine_h), exp2(e))?)))
        .collect::<Result<Vec<_>>>()?;
    let spatial_errors = h_sweep
        .iter()
        .map(|&e| Ok((exp2(e), max_error(exp2(e), exp2(fine_k))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeterministicOrders {
        temporal: fit_rate(&temporal_errors, false)?,
        spatial: fit_rate(&spatial_errors, false)?,
        temporal_errors,
        spatial_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::StudyKind;
    use crate::heat_fem::RecordedNoise;
    use crate::kernels::{KernelSpec, MaternParams, WeightFn};

    fn small_cfg(kind: StudyKind) -> StudyConfig {
        let kernel = KernelSpec::new(MaternParams::new(0.5, 1.0, 1.0).unwrap(), WeightFn::Constant).unwrap();
        let mut cfg = StudyConfig::defaults(kind, kernel);
        cfg.samples = 8;
        cfg
    }

    #[test]
    fn level_equal_to_reference_has_zero_error() {
        let mut cfg = small_cfg(StudyKind::SpatialY);
        cfg.ladder = vec![cfg.reference];
        cfg.fixed = 6;
        let t = spatial_rows(&cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.error == 0.0));
    }

    #[test]
    fn hand_computed_two_level_toy() {
        // D = 1, reference h = 1/4 (3 interior nodes), coarse h = 1/2
        // (1 interior node); one step of size k = 1 with noise e_2.
        let a = 1.0;
        let fine = FemSystem::assemble(NoiseGrid::new(1.0, 4).unwrap(), a, 1.0).unwrap();
        let coarse = FemSystem::assemble(NoiseGrid::new(1.0, 2).unwrap(), a, 1.0).unwrap();
        let level = HeatLevel::new(&fine, coarse.clone()).unwrap();
        let w = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        let mut noise = RecordedNoise::new(vec![w.clone(), w.clone()]);
        let sq = coupled_heat_errors(&fine, &[level], &Profile::default(), 2, &mut noise, &mut []).unwrap();
        // coarse: (h/6·4 + 2a/h)·y = h/6·4·w → y1 = (1/3)/(1/3 + 4) = 1/13, then y2 = (1/3)(y1 + 1)/(13/3)
        let y1c = 1.0 / 13.0;
        let y2c = (y1c + 1.0) / 13.0;
        let f = fine.step(&[0.0; 3], &w).unwrap();
        let f2 = fine.step(&f, &w).unwrap();
        let want = vec![0.0, (f[1] - y1c).powi(2), 0.0, 0.0, (f2[1] - y2c).powi(2), 0.0];
        assert_eq!(sq[0].len(), 6);
        for (g, w) in sq[0].iter().zip(&want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn temporal_coupling_uses_aggregated_noise() {
        let sys_f = FemSystem::assemble(NoiseGrid::new(1.0, 4).unwrap(), 0.3, 0.5).unwrap();
        let sys_c = FemSystem::assemble(NoiseGrid::new(1.0, 4).unwrap(), 0.3, 1.0).unwrap();
        let level = HeatLevel::new(&sys_f, sys_c.clone()).unwrap();
        assert_eq!(level.time_ratio, 2);
        let w1 = vec![0.0, 1.0, 2.0, 0.5, 0.0];
        let w2 = vec![0.0, -1.0, 0.5, 0.5, 0.0];
        let mut noise = RecordedNoise::new(vec![w1.clone(), w2.clone()]);
        let sq = coupled_heat_errors(&sys_f, &[level], &Profile::default(), 2, &mut noise, &mut []).unwrap();
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let c = sys_c.step(&[0.0; 3], &sum).unwrap();
        let f = sys_f.step(&sys_f.step(&[0.0; 3], &w1).unwrap(), &w2).unwrap();
        for j in 0..3 {
            assert!((sq[0][j + 1] - (f[j] - c[j]).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn spatial_errors_are_deterministic_and_positive() {
        let mut cfg = small_cfg(StudyKind::SpatialY);
        cfg.reference = 6;
        cfg.ladder = vec![2, 3, 4];
        cfg.fixed = 6;
        let a = spatial_rows(&cfg).unwrap();
        cfg.workers = 3;
        let b = spatial_rows(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| r.error > 0.0 && r.stderr.is_finite()));
    }

    #[test]
    fn deterministic_orders_small() {
        let o = deterministic_orders(0.5, 1.0, 1.0, &[4, 5, 6, 7], 9, &[2, 3, 4, 5], 16, 1.0 / 16.0).unwrap();
        assert!(o.temporal.slope >= 0.9, "{:?}", o.temporal_errors);
        assert!(o.spatial.slope >= 1.9, "{:?}", o.spatial_errors);
    }
}
