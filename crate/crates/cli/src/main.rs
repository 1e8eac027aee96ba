//! `gasmix`: steady states, transient simulations, spectra and interface
//! sweeps from scenario files, written as CSV plus a run manifest.

mod cache;
mod grid;
mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gasmix_core::analysis::interface::outlet_spectrum;
use gasmix_core::analysis::{
    chaotic_interface, monotonic_interface, periodic_interface, write_curves, Grid, PointCache, SweepConfig,
    SweepOptions, SweepOutcome,
};
use gasmix_core::scenario::{Scenario, SolverKind};
use gasmix_core::sim::{select_columns, simulate, steady, Quantity};
use gasmix_core::timeint::fmt_num;

use cache::{digest, FileCache, CACHE_ENV};
use grid::parse_grid;
use manifest::RunManifest;

const EXIT_NUMERICAL: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "gasmix", version, about = "Transient hydrogen/natural gas mixture flow on pipeline networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady state at t = 0 for every node.
    Steady(Common),
    /// Time series of nodal quantities over the scenario horizon.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Node ids to keep (default: all).
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<String>,
        /// Quantities to keep (default: all).
        #[arg(long, value_delimiter = ',')]
        quantities: Vec<Quantity>,
    },
    /// Normalized spectrum of a node's pressure over the second half of the horizon.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        node: String,
    },
    /// Interface sweep over forcing frequency and amplitude for a single pipe.
    Interface {
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
        /// Worker threads (0 lets the pool decide).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Power threshold (pi) or relative crossing tolerance (mi).
        #[arg(long)]
        threshold: Option<f64>,
        /// Grid override, e.g. `omega=0.5,1;kappa=0:1:21`.
        #[arg(long)]
        grid: Option<String>,
        /// Skip the per-point result cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Repeat the run recorded in a manifest into a new output directory.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    solver: Option<SolverArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Fv,
    Spectral,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Fv => SolverKind::Fv,
            SolverArg::Spectral => SolverKind::Spectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Mi,
    Pi,
    Ci,
}

/// Wraps failures caused by the user's input rather than by a solve.
#[derive(Debug)]
struct InputError(anyhow::Error);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for InputError {}

fn input(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(InputError(e.into()))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InputError>() {
            return EXIT_INPUT;
        }
        if let Some(core) = cause.downcast_ref::<gasmix_core::Error>() {
            return if core.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL };
        }
    }
    EXIT_NUMERICAL
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Replay { manifest, out } => {
            let m = RunManifest::read(&manifest).map_err(input)?;
            let mut args = vec!["gasmix".to_string()];
            args.extend(m.args.iter().cloned());
            args.push("--out".into());
            args.push(out.to_string_lossy().into_owned());
            let cli = Cli::try_parse_from(&args).map_err(input)?;
            if matches!(cli.command, Command::Replay { .. }) {
                return Err(input(anyhow::anyhow!("a manifest cannot record a replay")));
            }
            run(cli, &args[1..])
        }
        command => {
            let started = Instant::now();
            let (out, mut manifest) = execute(command)?;
            manifest.args = without_out(argv);
            manifest.wall_time_s = started.elapsed().as_secs_f64();
            manifest.write(&out)
        }
    }
}

/// Drops `--out DIR` / `--out=DIR` so that a manifest can be replayed
/// elsewhere.
fn without_out(argv: &[String]) -> Vec<String> {
    let mut kept = Vec::new();
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(input)
}

fn load_scenario(c: &Common) -> Result<Scenario> {
    let text = read_text(&c.scenario)?;
    let s = Scenario::parse(&text).with_context(|| format!("{}", c.scenario.display())).map_err(input)?;
    match c.solver {
        None => Ok(s),
        Some(k) => s.with_spec(|spec| spec.simulation.solver = k.into()).map_err(input),
    }
}

fn prepare_out(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(input)?;
    Ok(dir.to_path_buf())
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<String> {
    let path = dir.join(name);
    let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    Ok(name.to_string())
}

fn manifest_for(command: &str, scenario_hash: String, solver: serde_json::Value) -> RunManifest {
    RunManifest {
        command: command.into(),
        args: Vec::new(),
        scenario_hash,
        solver,
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: 0.0,
        outputs: Vec::new(),
        metrics: BTreeMap::new(),
    }
}

fn scenario_manifest(command: &str, s: &Scenario) -> Result<RunManifest> {
    Ok(manifest_for(command, digest(s.to_toml().as_bytes()), serde_json::to_value(s.simulation())?))
}

fn execute(command: Command) -> Result<(PathBuf, RunManifest)> {
    match command {
        Command::Steady(c) => {
            let s = load_scenario(&c)?;
            let out = prepare_out(&c.out)?;
            let values = steady(&s)?;
            let mut m = scenario_manifest("steady", &s)?;
            m.outputs.push(write_file(&out, "steady.csv", |w| {
                writeln!(w, "node,p_mpa,rho,rho1,rho2,eta2")?;
                for (id, v) in &values {
                    let cols = [v.p_mpa, v.rho, v.rho1, v.rho2, v.eta2].map(fmt_num);
                    writeln!(w, "{id},{}", cols.join(","))?;
                }
                Ok(())
            })?);
            Ok((out, m))
        }
        Command::Simulate { common, nodes, quantities } => {
            let s = load_scenario(&common)?;
            let nodes = if nodes.is_empty() { s.graph().nodes().iter().map(|n| n.id.clone()).collect() } else { nodes };
            if let Some(bad) = nodes.iter().find(|n| !s.graph().nodes().iter().any(|m| &m.id == *n)) {
                return Err(input(gasmix_core::Error::UnknownNode(bad.clone())));
            }
            let quantities = if quantities.is_empty() { Quantity::ALL.to_vec() } else { quantities };
            let out = prepare_out(&common.out)?;
            let sim = simulate(&s)?;
            let series = select_columns(&sim.series, &nodes, &quantities)?;
            let mut m = scenario_manifest("simulate", &s)?;
            m.outputs.push(write_file(&out, "series.csv", |w| series.write_csv(w))?);
            m.metrics.insert("steps".into(), sim.stats.steps as f64);
            if let Some(j) = sim.max_density_jump {
                m.metrics.insert("max_density_jump".into(), j);
            }
            Ok((out, m))
        }
        Command::Spectrum { common, node } => {
            let s = load_scenario(&common)?;
            if !s.graph().nodes().iter().any(|n| n.id == node) {
                return Err(input(gasmix_core::Error::UnknownNode(node)));
            }
            let out = prepare_out(&common.out)?;
            let sim = simulate(&s)?;
            let (spectrum, power) = outlet_spectrum(&sim.series, &node)?;
            let mut m = scenario_manifest("spectrum", &s)?;
            m.outputs.push(write_file(&out, "spectrum.csv", |w| spectrum.write_csv(w))?);
            m.metrics.insert("power".into(), power);
            Ok((out, m))
        }
        Command::Interface { kind, common, workers, threshold, grid, no_cache } => {
            let cfg = load_sweep(&common, kind, threshold, grid.as_deref())?;
            let out = prepare_out(&common.out)?;
            let hash = sweep_hash(&cfg)?;
            let file_cache = if no_cache {
                None
            } else {
                let root = std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| out.join("cache"));
                Some(FileCache::new(&root, &hash).with_context(|| format!("creating cache under {}", root.display()))?)
            };
            let opts = SweepOptions { workers, cache: file_cache.as_ref().map(|c| c as &dyn PointCache) };
            let outcome = match kind {
                SweepKind::Mi => monotonic_interface(&cfg, opts),
                SweepKind::Pi => periodic_interface(&cfg, opts),
                SweepKind::Ci => chaotic_interface(&cfg, opts),
            }?;
            let name = format!("{kind:?}").to_lowercase();
            let mut m = manifest_for(&format!("interface {name}"), hash, serde_json::to_value(&cfg.pipe.simulation)?);
            m.outputs.push(write_file(&out, &format!("{name}_interface.csv"), |w| write_curves(&outcome.curves, w))?);
            m.outputs.push(write_file(&out, &format!("{name}_points.csv"), |w| outcome.write_points_csv(w))?);
            let failed = failed_points(&outcome);
            m.metrics.insert("points".into(), outcome.points.len() as f64);
            m.metrics.insert("failed_points".into(), failed as f64);
            if failed > 0 {
                m.write(&out)?;
                bail!("{failed} of {} sweep points failed; see {name}_points.csv", outcome.points.len());
            }
            Ok((out, m))
        }
        Command::Replay { .. } => unreachable!("handled by run"),
    }
}

fn failed_points(o: &SweepOutcome) -> usize {
    o.points.iter().filter(|p| p.result.is_err()).count()
}

fn load_sweep(c: &Common, kind: SweepKind, threshold: Option<f64>, grid: Option<&str>) -> Result<SweepConfig> {
    let text = read_text(&c.scenario)?;
    let mut cfg = SweepConfig::parse(&text).with_context(|| format!("{}", c.scenario.display())).map_err(input)?;
    if let Some(k) = c.solver {
        cfg.pipe.simulation.solver = k.into();
    }
    if let Some(spec) = grid {
        let g = parse_grid(spec).map_err(input)?;
        cfg.omega = g.omega.unwrap_or(cfg.omega);
        cfg.kappa = g.kappa.unwrap_or(cfg.kappa);
    }
    match (kind, threshold) {
        (_, None) => {}
        (SweepKind::Pi, Some(t)) => cfg.periodic.threshold = t,
        (SweepKind::Mi, Some(t)) => cfg.monotonic.tol_rel = t,
        (SweepKind::Ci, Some(_)) => return Err(input(anyhow::anyhow!("--threshold applies to mi and pi sweeps only"))),
    }
    cfg.validate().map_err(input)?;
    Ok(cfg)
}

/// Hash of everything that determines a point's metrics. The grids are
/// left out since points are keyed by their own coordinates, so refining or
/// extending a grid reuses earlier points.
fn sweep_hash(cfg: &SweepConfig) -> Result<String> {
    let mut keyed = cfg.clone();
    keyed.omega = Grid::Values(vec![0.0]);
    keyed.kappa = Grid::Values(vec![0.0]);
    let text = format!("{}\n{}", env!("CARGO_PKG_VERSION"), keyed.to_toml()?);
    Ok(digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flag_is_dropped_from_recorded_args() {
        let argv: Vec<String> = ["steady", "--scenario", "a.toml", "--out", "x", "--out=y", "--solver", "fv"]
            .map(String::from)
            .to_vec();
        assert_eq!(without_out(&argv), ["steady", "--scenario", "a.toml", "--solver", "fv"]);
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&input(anyhow::anyhow!("bad"))), EXIT_INPUT);
        assert_eq!(exit_code(&anyhow::Error::new(gasmix_core::Error::NoSlackNode)), EXIT_INPUT);
        let e = anyhow::Error::new(gasmix_core::Error::StepCollapse { t_hr: 1.0 }).context("simulating");
        assert_eq!(exit_code(&e), EXIT_NUMERICAL);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), EXIT_NUMERICAL);
    }
}
