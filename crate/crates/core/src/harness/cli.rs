//! `spf` command line.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::filters::{build_measurement_map, FilterConfig, FilterKind, PreviousState, SpfVariant, StepContext};
use crate::polyalg::PolynomialMap;
use crate::scenarios::{by_name, ScenarioSpec, NAMES};

use super::{emit_results, parse_filters, run_campaign, run_single, with_workers, CampaignSpec, Format, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "spf", version, about = "Scout particle filter benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List builtin scenarios and filters.
    List,
    /// Single run with a per-step report.
    Run(RunArgs),
    /// Monte Carlo campaign.
    Mc(McArgs),
    /// Build and invert a scenario's measurement map at the prior mean.
    InvertDemo(InvertArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Builtin scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario file (TOML); may name a builtin with `base = "..."`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Truncation order of the polynomial maps.
    #[arg(long)]
    order: Option<u32>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated filters, `spf` (see --variant) or `all`.
    #[arg(long, default_value = "spf")]
    filter: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Prediction and update particle count.
    #[arg(long)]
    particles: Option<usize>,
    /// Scout particle count.
    #[arg(long)]
    scouts: Option<usize>,
    /// Importance density used for `spf`: gaussian or uniform-box.
    #[arg(long, default_value = "gaussian")]
    variant: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: FilterArgs,
    /// Replays this run of a campaign with the same seed.
    #[arg(long, default_value_t = 0)]
    run_id: usize,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    common: FilterArgs,
    #[arg(long, default_value_t = 100)]
    n_mc: usize,
    /// Worker threads; defaults to SPF_WORKERS or the core count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct InvertArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Write the dump here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioSpec, HarnessError> {
    let mut spec = match (&args.config, &args.scenario) {
        (Some(path), _) => ScenarioSpec::load(path)?,
        (None, Some(name)) => by_name(name)?,
        (None, None) => {
            return Err(HarnessError::Invalid(format!(
                "give --scenario ({}) or --config",
                NAMES.join(", ")
            )))
        }
    };
    if let Some(order) = args.order {
        spec.filter.order = order;
    }
    spec.validate()?;
    Ok(spec)
}

fn filter_configs(args: &FilterArgs, spec: &ScenarioSpec) -> Result<Vec<FilterConfig>, HarnessError> {
    let variant: SpfVariant = args.variant.parse()?;
    let list = args
        .filter
        .split(',')
        .map(|s| if s.trim() == "spf" { FilterKind::from_variant(variant).name() } else { s })
        .collect::<Vec<_>>()
        .join(",");
    let mut settings = spec.filter.clone();
    if let Some(n) = args.particles {
        settings = settings.with_particles(n);
    }
    if let Some(n) = args.scouts {
        settings.n_scout = n;
    }
    settings.validate()?;
    Ok(parse_filters(&list)?
        .into_iter()
        .map(|k| FilterConfig::new(k, settings.clone()))
        .collect())
}

fn list(out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "scenarios:")?;
    for name in NAMES {
        let spec = by_name(name).expect("builtin");
        writeln!(out, "  {name:<16} {}", spec.description)?;
    }
    writeln!(out, "filters:")?;
    for k in FilterKind::ALL {
        writeln!(out, "  {}", k.name())?;
    }
    Ok(())
}

fn run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), HarnessError> {
    let spec = load_scenario(&args.common.scenario)?.resolved()?;
    let configs = filter_configs(&args.common, &spec)?;
    let io = |e: std::io::Error| HarnessError::Io {
        path: "stdout".into(),
        message: e.to_string(),
    };
    for cfg in &configs {
        let rec = run_single(&spec, cfg, args.run_id, args.common.seed)?;
        writeln!(out, "# {} on {} (run {}, seed {})", rec.filter, spec.name, rec.run_id, rec.seed).map_err(io)?;
        writeln!(out, "{:>5} {:>12} {:>8} {:>10} {:>12}  estimate", "step", "time", "update", "psi", "|error|")
            .map_err(io)?;
        for s in &rec.steps {
            let e = s.error.iter().map(|v| v * v).sum::<f64>().sqrt();
            let est = s.estimate.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ");
            writeln!(out, "{:>5} {:>12.3} {:>8} {:>10.4} {:>12.6e}  {est}", s.step, s.time, s.update_kind, s.psi, e)
                .map_err(io)?;
            if let Some(f) = &s.fallback {
                writeln!(err, "step {}: {f}", s.step).map_err(io)?;
            }
        }
        if let super::RunStatus::Failed { step, message } = &rec.status {
            writeln!(out, "failed at step {step}: {message}").map_err(io)?;
        }
    }
    if let Some(dir) = &args.common.out {
        let campaign = CampaignSpec {
            scenario: spec.clone(),
            filters: configs,
            n_mc: 1,
            base_seed: args.common.seed,
            keep_runs: true,
        };
        let result = run_campaign(&campaign)?;
        emit_results(&result, args.common.format.parse()?, dir)?;
    }
    Ok(())
}

fn mc(args: &McArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), HarnessError> {
    let format: Format = args.common.format.parse()?;
    let spec = load_scenario(&args.common.scenario)?;
    let campaign = CampaignSpec {
        filters: filter_configs(&args.common, &spec)?,
        scenario: spec,
        n_mc: args.n_mc,
        base_seed: args.common.seed,
        keep_runs: true,
    };
    let start = Instant::now();
    let result = with_workers(args.threads, || run_campaign(&campaign))??;
    let io = |e: std::io::Error| HarnessError::Io {
        path: "stdout".into(),
        message: e.to_string(),
    };
    writeln!(err, "elapsed {:.3} s", start.elapsed().as_secs_f64()).map_err(io)?;
    match &args.common.out {
        Some(dir) => {
            for path in emit_results(&result, format, dir)? {
                writeln!(err, "wrote {}", path.display()).map_err(io)?;
            }
        }
        None => {
            writeln!(out, "{:<8} {:>6} {:>9} {:>14} {:>10}", "filter", "runs", "failures", "rmse", "psi%")
                .map_err(io)?;
            for f in &result.filters {
                let s = &f.summary;
                let fmt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$e}"));
                writeln!(
                    out,
                    "{:<8} {:>6} {:>9} {:>14} {:>10}",
                    s.filter,
                    s.runs,
                    s.failures,
                    fmt(s.rmse, 6),
                    fmt(s.mean_psi, 3)
                )
                .map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Inverts the (square) measurement map at the prior mean and reports the
/// composition residual against the identity.
pub fn invert_demo(spec: &ScenarioSpec) -> Result<(String, f64), HarnessError> {
    let prior = spec.prior()?;
    let mm = build_measurement_map(
        prior.mean(),
        prior.cov(),
        &spec.measurement,
        &spec.filter.augmentation,
        spec.filter.order,
        Some(&PreviousState {
            dynamics: &spec.dynamics,
            ctx: StepContext {
                k: 0,
                t0: spec.t0,
                t1: spec.t0,
            },
            mean: prior.mean(),
            cov: prior.cov(),
            meas_cov: &crate::scenarios::matrix(&spec.measurement_noise),
        }),
    )
    .map_err(HarnessError::from)?;
    let map = &mm.square.map;
    let poly = |e: crate::polyalg::PolyError| HarnessError::from(crate::filters::FilterError::from(e));
    let inverse = map.invert().map_err(poly)?;
    let composed = PolynomialMap::compose(map, &inverse).map_err(poly)?;
    let identity = PolynomialMap::identity(map.space(), map.center_out().to_vec()).map_err(poly)?;
    let residual = composed.max_coeff_diff(&identity);
    let mut text = String::new();
    text.push_str(&format!(
        "# scenario {} order {} rows {:?} augmented {}\n",
        spec.name,
        spec.filter.order,
        mm.square.rows,
        mm.square.fictitious.is_some()
    ));
    text.push_str("## measurement map\n");
    text.push_str(&map.dump());
    text.push_str("## inverse\n");
    text.push_str(&inverse.dump());
    text.push_str(&format!("# compose residual {residual:e}\n"));
    Ok((text, residual))
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io {
        path: "stdout".into(),
        message: e.to_string(),
    };
    match cli.command {
        Command::List => list(out).map_err(io),
        Command::Run(args) => run(&args, out, err),
        Command::Mc(args) => mc(&args, out, err),
        Command::InvertDemo(args) => {
            let spec = load_scenario(&args.scenario)?;
            let (text, residual) = invert_demo(&spec)?;
            match &args.out {
                Some(path) => std::fs::write(path, &text).map_err(|e| HarnessError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?,
                None => out.write_all(text.as_bytes()).map_err(io)?,
            }
            writeln!(err, "compose residual {residual:e}").map_err(io)
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
