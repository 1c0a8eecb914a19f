//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ConfigFile, SCHEMA_VERSION};
use crate::experiments::{run_study, StudyConfig, StudyKind, StudyOutput};
use crate::heat_fem::{solve_path, step_count, FemSystem, NoiseSource, SampledNoise, YPath};
use crate::io::{self, DumpKind};
use crate::noise::{IncrementSampler, Lane, NoiseGrid, SeedPolicy};
use crate::price_fd::{beta_increments, solve_x, InitialCurve, PriceGrid, XPath};
use crate::profile::Profile;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_THRESHOLD: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "heidih", version, about = "Forward-price simulation with heat-modulated volatility")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `run.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo sample count (overrides `run.samples`).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Worker threads (overrides `run.workers`).
    #[arg(long, global = true, env = "HEIDIH_WORKERS")]
    pub workers: Option<usize>,
    /// Output file (samplers, kernel table) or directory (studies).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Exit with status 2 when a configured threshold is violated.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one volatility path and write it as (t, x, value) CSV.
    SampleY {
        /// Also write the path as a binary dump.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Also write the noise increments as a binary dump.
        #[arg(long)]
        noise_dump: Option<PathBuf>,
    },
    /// Simulate one price lattice and write it as (t, x, value) CSV.
    SampleX,
    /// Run a coupled convergence study.
    Convergence {
        #[arg(long, value_enum)]
        study: StudyArg,
    },
    /// Tabulate the noise kernel on the grid nodes.
    KernelTable,
    /// Run the localization study.
    Localization,
    /// Run the timing study.
    Timing,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum StudyArg {
    SpatialY,
    TemporalY,
    PriceGrid,
    Holder,
    Localization,
    Timing,
}

impl From<StudyArg> for StudyKind {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::SpatialY => StudyKind::SpatialY,
            StudyArg::TemporalY => StudyKind::TemporalY,
            StudyArg::PriceGrid => StudyKind::PriceGrid,
            StudyArg::Holder => StudyKind::Holder,
            StudyArg::Localization => StudyKind::Localization,
            StudyArg::Timing => StudyKind::Timing,
        }
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load(cli: &Cli) -> Result<ConfigFile> {
    match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(ConfigFile {
            schema_version: SCHEMA_VERSION,
            ..Default::default()
        }),
    }
}

fn study_config(cli: &Cli, file: &ConfigFile, kind: StudyKind) -> Result<StudyConfig> {
    let mut cfg = file.study_config(Some(kind))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.samples = n;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32> {
    let file = load(cli)?;
    match &cli.command {
        Command::SampleY { dump, noise_dump } => {
            let sim = simulate(cli, &file)?;
            let out = cli.out.clone().unwrap_or_else(|| "ypath.csv".into());
            io::write_ypath_csv(io::create(&out)?, &sim.y)?;
            if let Some(p) = dump {
                io::write_dump(io::create(p)?, DumpKind::Volatility, sim.y.grid().intervals(), sim.y.values())?;
            }
            if let Some(p) = noise_dump {
                io::write_dump(io::create(p)?, DumpKind::Noise, sim.y.grid().intervals(), &sim.noise)?;
            }
            println!("sample-y: {} time levels x {} nodes -> {}", sim.y.rows(), sim.y.grid().node_count(), out.display());
            Ok(EXIT_OK)
        }
        Command::SampleX => {
            let sim = simulate(cli, &file)?;
            let x = price_path(&file, &sim)?;
            let out = cli.out.clone().unwrap_or_else(|| "xpath.csv".into());
            io::write_xpath_csv(io::create(&out)?, &x)?;
            println!("sample-x: {0} x {0} lattice -> {1}", x.grid().steps() + 1, out.display());
            Ok(EXIT_OK)
        }
        Command::KernelTable => {
            let kernel = file.kernel()?;
            let m = file.study_config(None)?.model;
            let grid = NoiseGrid::with_step(m.domain, file.grid().h)?;
            let out = cli.out.clone().unwrap_or_else(|| "kernel.csv".into());
            let nodes = grid.nodes();
            io::write_surface(
                io::create(&out)?,
                nodes
                    .iter()
                    .flat_map(|&x| nodes.iter().map(move |&y| (x, y, kernel.eval(x, y)))),
            )?;
            println!("kernel-table: {0} x {0} nodes -> {1}", nodes.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Convergence { study } => run_and_write(cli, &file, (*study).into()),
        Command::Localization => run_and_write(cli, &file, StudyKind::Localization),
        Command::Timing => run_and_write(cli, &file, StudyKind::Timing),
    }
}

struct Simulation {
    y: YPath,
    noise: Vec<f64>,
    seed: u64,
}

/// Records every increment it passes through.
struct Recording<'a, S: NoiseSource> {
    inner: S,
    log: &'a mut Vec<f64>,
}

impl<S: NoiseSource> NoiseSource for Recording<'_, S> {
    fn next_increment(&mut self, out: &mut [f64]) -> Result<()> {
        self.inner.next_increment(out)?;
        self.log.extend_from_slice(out);
        Ok(())
    }
}

fn simulate(cli: &Cli, file: &ConfigFile) -> Result<Simulation> {
    let m = file.study_config(None)?.model;
    let g = file.grid();
    let seed = cli.seed.or(file.run.seed).unwrap_or(1);
    let system = FemSystem::assemble(NoiseGrid::with_step(m.domain, g.h)?, m.diffusivity, g.k)?;
    let sampler = IncrementSampler::new(&file.kernel()?, *system.grid(), file.circulant())?;
    let steps = step_count(m.horizon, g.k)?;
    let mut log = Vec::new();
    let mut noise = Recording {
        inner: SampledNoise::new(&sampler, SeedPolicy::new(seed).rng(0, 0, Lane::Noise), g.k),
        log: &mut log,
    };
    let y0: Profile = m.y0.clone().into();
    let y = solve_path(&system, &y0, &mut noise, steps)?;
    Ok(Simulation { y, noise: log, seed })
}

fn price_path(file: &ConfigFile, sim: &Simulation) -> Result<XPath> {
    let m = file.study_config(None)?.model;
    let grid = PriceGrid::new(m.horizon, file.grid().k)?;
    let beta = beta_increments(&mut SeedPolicy::new(sim.seed).rng(0, 0, Lane::Beta), grid.steps(), grid.step());
    let curve = InitialCurve::new(m.x0_smooth.into(), m.x0_level);
    solve_x(&grid, &curve, m.scaling, &sim.y, &beta)
}

fn run_and_write(cli: &Cli, file: &ConfigFile, kind: StudyKind) -> Result<i32> {
    let cfg = study_config(cli, file, kind)?;
    let out = run_study(&cfg)?;
    let dir = cli.out.clone().unwrap_or_else(|| "out".into());
    write_outputs(&dir, &out)?;
    summarize(&out);
    let violations = file.thresholds.violations(&out);
    for v in &violations {
        eprintln!("threshold violated: {v}");
    }
    Ok(if cli.strict && !violations.is_empty() {
        EXIT_THRESHOLD
    } else {
        EXIT_OK
    })
}

/// Writes `errors.csv`, `rates.csv` and, for timing runs, `timing.csv`.
pub fn write_outputs(dir: &Path, out: &StudyOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_errors(io::create(&dir.join("errors.csv"))?, &out.errors.rows)?;
    io::write_rates(io::create(&dir.join("rates.csv"))?, &out.rates)?;
    if !out.timings.is_empty() {
        io::write_timings(io::create(&dir.join("timing.csv"))?, &out.timings)?;
    }
    Ok(())
}

fn summarize(out: &StudyOutput) {
    for r in &out.rates {
        println!(
            "{} param={}: slope {:.4} (residual {:.3e}, {} points)",
            r.study, r.param, r.slope, r.residual, r.points_used
        );
    }
    for t in &out.timings {
        println!("timing {} k={:e} h={:e}: {:.4e} s (fft {:.4e} s)", t.rule, t.k, t.h, t.wall_s, t.fft_s);
    }
    for n in &out.notes {
        eprintln!("note: {n}");
    }
}
