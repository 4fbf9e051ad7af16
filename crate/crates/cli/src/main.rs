//! `qlsfi` command-line driver. Every run subcommand writes one QLS1
//! container named after the subcommand into `--output`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use qlsfi_core::config::{ConfigSources, RunConfig, Tier};
use qlsfi_core::container::Container;
use qlsfi_core::converge::Axis;
use qlsfi_core::metrics::Metric;
use qlsfi_core::{pipeline, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "qlsfi", version, about = "Strong-field ionization by quantized light")]
struct Cli {
    /// TOML run configuration; unset fields come from the tier preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for result containers.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    output: PathBuf,

    /// Worker threads (falls back to QLS_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N", env = "QLS_THREADS")]
    threads: Option<usize>,

    /// Dotted-path override, e.g. `--set grid.nx=1025`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Preset: ci-small, desk or paper.
    #[arg(long, global = true, value_name = "NAME")]
    tier: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground state and bound levels of the model atom.
    GroundState,
    /// Full-quantum joint electron-photon propagation.
    RunFull,
    /// Incoherent coherent-state ensemble.
    RunQrep,
    /// Coherent ensemble reconstruction.
    RunRrep,
    /// Photoelectron spectrum under the equivalent classical drive.
    Spectrum,
    /// Input photon statistics, exact and Husimi-smeared.
    PhotonDist,
    /// Distance between one array of two containers.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        array: String,
        #[arg(long, default_value = "l1")]
        metric: String,
    },
    /// Build the alpha-plane rule and run the resolution-of-identity check.
    QuadratureCheck,
    /// Refinement sweep along one numerical axis.
    Converge {
        #[arg(long)]
        axis: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut sources = ConfigSources {
        tier: cli.tier.as_deref().map(str::parse::<Tier>).transpose()?,
        file: None,
        overrides: cli.overrides.clone(),
    };
    if let Some(path) = &cli.config {
        sources = sources.with_file(path)?;
    }
    sources.resolve()
}

fn write(dir: &Path, name: &str, c: &Container) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.qls"));
    c.write(&path)?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    if let Command::Compare { a, b, array, metric } = &cli.command {
        let metric: Metric = metric.parse()?;
        let value = pipeline::compare(&Container::read(a)?, &Container::read(b)?, array, metric)?;
        return Ok(json!({ "array": array, "metric": metric, "value": value }));
    }
    let cfg = resolve_config(cli)?;
    let (name, c) = match &cli.command {
        Command::GroundState => ("ground-state".to_string(), pipeline::ground_state_op(&cfg)?),
        Command::RunFull => ("run-full".into(), pipeline::run_full(&cfg)?),
        Command::RunQrep => ("run-qrep".into(), pipeline::run_qrep(&cfg)?),
        Command::RunRrep => ("run-rrep".into(), pipeline::run_rrep(&cfg)?),
        Command::Spectrum => ("spectrum".into(), pipeline::spectrum(&cfg)?),
        Command::PhotonDist => ("photon-dist".into(), pipeline::photon_dist(&cfg)?),
        Command::QuadratureCheck => ("quadrature-check".into(), pipeline::quadrature_check(&cfg)?),
        Command::Converge { axis, levels } => {
            let axis: Axis = axis.parse()?;
            (format!("converge-{}", axis.name()), pipeline::converge_op(&cfg, axis, *levels)?)
        }
        Command::Compare { .. } => unreachable!(),
    };
    for w in c.diagnostics["warnings"].as_array().into_iter().flatten() {
        log::warn!("{}", w.as_str().unwrap_or_default());
    }
    let path = write(&cli.output, &name, &c)?;
    Ok(json!({ "output": path, "kind": c.kind, "arrays": c.names() }))
}

fn error_record(e: &Error) -> serde_json::Value {
    let mut rec = json!({ "error": e.kind(), "exit_code": e.exit_code(), "message": e.to_string() });
    let extra = match e {
        Error::QuadratureInsufficient { m, n, error, tolerance } => {
            json!({ "m": m, "n": n, "identity_error": error, "tolerance": tolerance })
        }
        Error::BandTooSmall { required_n_max, .. } => json!({ "required_n_max": required_n_max }),
        Error::BandOverflow {
            step,
            suggested_n_min,
            suggested_n_max,
            ..
        } => json!({ "step": step, "suggested_n_min": suggested_n_min, "suggested_n_max": suggested_n_max }),
        Error::EnsembleFailed { failed, .. } => json!({ "failed_nodes": failed }),
        _ => json!({}),
    };
    if let (Some(r), serde_json::Value::Object(x)) = (rec.as_object_mut(), extra) {
        r.extend(x);
    }
    rec
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let built = if n == 0 {
            Err(Error::Config("--threads must be >= 1".into()))
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))
        };
        if let Err(e) = built {
            eprintln!("{}", error_record(&e));
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
