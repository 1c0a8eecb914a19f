//! TOML run configuration.
//!
//! Every section is optional; omitted fields take the defaults of the study
//! kind. Unknown keys are rejected and `schema_version` must equal
//! [`SCHEMA_VERSION`].
//!
//! ```toml
//! schema_version = 1
//!
//! [model]
//! a = 0.05            # diffusivity
//! horizon = 1.0       # T
//! domain = 1.0        # D
//! scaling = 1.0       # constant scaling norm of the price volatility
//! y0 = { kind = "zero" }
//! x0 = { kind = "bump", center = 1.0, half_width = 0.5, amplitude = 1.0 }
//! x0_level = 0.0
//!
//! [kernel]
//! matern = { nu = 0.5, mu = 1.0, zeta = 1.0 }
//! weight = { kind = "polynomial", alpha = 0.75, scale = 0.31622776601683794 }
//!
//! [noise]
//! max_doublings = 8
//! clip_tol = 1e-8
//!
//! [grid]              # sample-y / sample-x
//! h = 0.0078125
//! k = 0.0078125
//!
//! [study]
//! kind = "spatial-y"
//! s_w = [0.55, 1.0]
//! ladder = [3, 4, 5, 6]
//! reference = 8
//! fixed = 10
//!
//! [run]
//! seed = 1
//! samples = 100
//! workers = 1
//!
//! [[thresholds.rate]]
//! study = "spatial-y"
//! param = 1.0
//! min = 0.85
//! max = 1.15
//! ```

use serde::{Deserialize, Serialize};

use crate::experiments::{GridRule, StudyConfig, StudyKind, StudyOutput};
use crate::kernels::{KernelSpec, MaternParams, WeightFn};
use crate::noise::CirculantConfig;
use crate::profile::ProfileSpec;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: Option<f64>,
    pub horizon: Option<f64>,
    pub domain: Option<f64>,
    pub scaling: Option<f64>,
    pub y0: Option<ProfileSpec>,
    pub x0: Option<ProfileSpec>,
    pub x0_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub matern: MaternParams,
    #[serde(default)]
    pub weight: WeightFn,
}

impl KernelSection {
    pub fn spec(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.matern, self.weight)
    }
}

impl From<KernelSpec> for KernelSection {
    fn from(k: KernelSpec) -> Self {
        Self {
            matern: k.stationary,
            weight: k.weight,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub max_doublings: Option<u32>,
    pub clip_tol: Option<f64>,
}

/// Resolution of single-path simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: f64,
    pub k: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            h: 2f64.powi(-7),
            k: 2f64.powi(-7),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub kind: Option<StudyKind>,
    pub s_w: Option<Vec<f64>>,
    pub ladder: Option<Vec<i32>>,
    pub reference: Option<i32>,
    pub fixed: Option<i32>,
    pub grid_rules: Option<Vec<GridRule>>,
    pub probes: Option<Vec<f64>>,
    pub domains: Option<Vec<f64>>,
    pub reference_domain: Option<f64>,
    pub noise_floor: Option<f64>,
    pub coupled: Option<bool>,
    pub reps: Option<usize>,
    pub drop_preasymptotic: Option<bool>,
    pub record_wall_time: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub workers: Option<usize>,
}

/// Bounds on a fitted slope, checked in strict mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateThreshold {
    pub study: String,
    pub param: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default)]
    pub rate: Vec<RateThreshold>,
    /// Number of finest lattice steps at which `h = √k` must be faster than
    /// `h = k`.
    pub timing_finest_levels: Option<usize>,
}

impl Thresholds {
    /// Human-readable descriptions of every violated threshold.
    pub fn violations(&self, out: &StudyOutput) -> Vec<String> {
        let mut v = Vec::new();
        for t in &self.rate {
            match out.rate(&t.study, t.param) {
                Some(r) if t.min.is_some_and(|m| r.slope < m) || t.max.is_some_and(|m| r.slope > m) => {
                    {
                        v.push(format!(
                            "{} param={}: slope {:.4} outside [{}, {}]",
                            t.study,
                            t.param,
                            r.slope,
                            t.min.map_or("-inf".into(), |m| m.to_string()),
                            t.max.map_or("inf".into(), |m| m.to_string()),
                        ));
                    }
                }
                _ => {}
            }
        }
        if let Some(levels) = self.timing_finest_levels {
            let pick = |rule: GridRule| {
                let mut rows: Vec<_> = out.timings.iter().filter(|r| r.rule == rule.name()).collect();
                rows.sort_by(|a, b| a.k.total_cmp(&b.k));
                rows
            };
            let (eq, sqrt) = (pick(GridRule::HEqK), pick(GridRule::HSqrtK));
            if !eq.is_empty() || !sqrt.is_empty() {
                for i in 0..levels {
                    match (eq.get(i), sqrt.get(i)) {
                        (Some(a), Some(b)) if a.k == b.k && b.wall_s < a.wall_s => {}
                        (Some(a), Some(b)) if a.k == b.k => v.push(format!(
                            "timing k={}: h=sqrt(k) took {:.3e}s, h=k took {:.3e}s",
                            a.k, b.wall_s, a.wall_s
                        )),
                        _ => v.push(format!("timing: no matching rows for finest level {i}")),
                    }
                }
            }
        }
        v
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelSection,
    pub kernel: Option<KernelSection>,
    #[serde(default)]
    pub noise: NoiseSection,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_kernel() -> KernelSpec {
    KernelSpec::stationary(MaternParams::new(0.5, 1.0, 1.0).expect("valid default Matérn parameters"))
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    if let Some(g) = cfg.grid {
        if !(g.h > 0.0 && g.k > 0.0) {
            return Err(Error::Config("grid.h and grid.k must be positive".into()));
        }
    }
    cfg.study_config(None)?.validate()?;
    Ok(cfg)
}

impl ConfigFile {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        match &self.kernel {
            Some(k) => k.spec(),
            None => Ok(default_kernel()),
        }
    }

    pub fn grid(&self) -> GridSection {
        self.grid.unwrap_or_default()
    }

    pub fn circulant(&self) -> CirculantConfig {
        let d = CirculantConfig::default();
        CirculantConfig {
            max_doublings: self.noise.max_doublings.unwrap_or(d.max_doublings),
            clip_tol: self.noise.clip_tol.unwrap_or(d.clip_tol),
        }
    }

    /// Study configuration for `kind` (or the kind named in the file), with
    /// the kind's defaults under every field the file leaves out.
    pub fn study_config(&self, kind: Option<StudyKind>) -> Result<StudyConfig> {
        let kind = kind.or(self.study.kind).unwrap_or(StudyKind::SpatialY);
        let mut c = StudyConfig::defaults(kind, self.kernel()?);
        let m = &self.model;
        c.model.diffusivity = m.a.unwrap_or(c.model.diffusivity);
        c.model.horizon = m.horizon.unwrap_or(c.model.horizon);
        c.model.domain = m.domain.unwrap_or(c.model.domain);
        c.model.scaling = m.scaling.unwrap_or(c.model.scaling);
        c.model.y0 = m.y0.clone().unwrap_or(c.model.y0);
        c.model.x0_smooth = m.x0.clone().unwrap_or(c.model.x0_smooth);
        c.model.x0_level = m.x0_level.unwrap_or(c.model.x0_level);
        let s = &self.study;
        macro_rules! take {
            ($($f:ident),*) => {$( if let Some(v) = &s.$f { c.$f = v.clone(); } )*};
        }
        take!(
            s_w,
            ladder,
            reference,
            fixed,
            grid_rules,
            probes,
            domains,
            reference_domain,
            noise_floor,
            coupled,
            reps,
            drop_preasymptotic,
            record_wall_time
        );
        c.circulant = self.circulant();
        c.seed = self.run.seed.unwrap_or(c.seed);
        c.samples = self.run.samples.unwrap_or(c.samples);
        c.workers = self.run.workers.unwrap_or(c.workers);
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ErrorRow;

    const EXAMPLE: &str = r#"
schema_version = 1

[model]
a = 0.05
horizon = 2.0
domain = 4.0

[kernel]
matern = { nu = 0.1, mu = 0.1 }
weight = { kind = "polynomial", alpha = 0.75, scale = 0.31622776601683794 }
"#;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let cfg = parse_config("schema_version = 1\n[model]\nhorizon = 1.0\n").unwrap();
        let s = cfg.study_config(None).unwrap();
        assert_eq!(s, StudyConfig::defaults(StudyKind::SpatialY, default_kernel()));
        let p = cfg.study_config(Some(StudyKind::PriceGrid)).unwrap();
        assert_eq!(p.model.domain, 2.0);
        assert_eq!(p.reference, 10);
    }

    #[test]
    fn example_block_gives_the_weighted_kernel_and_round_trips() {
        let cfg = parse_config(EXAMPLE).unwrap();
        let want = KernelSpec::new(
            MaternParams::new(0.1, 0.1, 1.0).unwrap(),
            WeightFn::Polynomial {
                alpha: 0.75,
                scale: 10f64.powf(-0.5),
            },
        )
        .unwrap();
        assert_eq!(cfg.kernel().unwrap(), want);
        assert!((cfg.kernel().unwrap().eval(0.0, 0.0) - 0.1).abs() < 1e-16);
        let again = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.kernel().unwrap(), want);
        let s = cfg.study_config(None).unwrap();
        assert_eq!((s.model.diffusivity, s.model.horizon), (0.05, 2.0));
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let e = parse_config("schema_version = 1\n[model]\nalpha = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("alpha"), "{e}");
        assert!(e.to_string().contains("line"), "{e}");
        assert!(parse_config("schema_version = 2\n").is_err());
        assert!(parse_config("[model]\na = 1.0\n").is_err());
        assert!(parse_config("schema_version = 1\n[kernel]\nmatern = { nu = -1.0, mu = 1.0 }\n").is_err());
    }

    #[test]
    fn ladder_not_dividing_reference_is_a_validation_error() {
        let text = "schema_version = 1\n[study]\nkind = \"spatial-y\"\nladder = [3, 4, 9]\nreference = 8\n";
        let e = parse_config(text).unwrap_err();
        assert!(e.to_string().contains("ladder"), "{e}");
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
schema_version = 1
[study]
kind = "price-grid"
grid_rules = ["h-sqrt-k"]
ladder = [2, 4, 6, 8]
reference = 12
fixed = 8
[run]
seed = 9
samples = 10
[noise]
clip_tol = 1e-6
"#;
        let cfg = parse_config(text).unwrap();
        let s = cfg.study_config(None).unwrap();
        assert_eq!(s.kind, StudyKind::PriceGrid);
        assert_eq!(s.grid_rules, vec![GridRule::HSqrtK]);
        assert_eq!((s.seed, s.samples, s.reference), (9, 10, 12));
        assert_eq!(s.circulant.clip_tol, 1e-6);
    }

    #[test]
    fn thresholds_report_violations() {
        let text = r#"
schema_version = 1
[[thresholds.rate]]
study = "spatial-y"
param = 1.0
min = 0.85
max = 1.15
"#;
        let cfg = parse_config(text).unwrap();
        let mut out = StudyOutput::default();
        for (e, err) in [(3, 0.1), (4, 0.05), (5, 0.025)] {
            out.errors.rows.push(ErrorRow {
                study: "spatial-y".into(),
                param: 1.0,
                resolution: 2f64.powi(-e),
                error: err,
                stderr: 0.0,
                wall_s: 0.0,
            });
        }
        out.fit_sweep("spatial-y", 1.0, false).unwrap();
        assert!(cfg.thresholds.violations(&out).is_empty());
        out.rates[0].slope = 0.5;
        assert_eq!(cfg.thresholds.violations(&out).len(), 1);
    }
}
