use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pwfwi::prox::RegularizerKind;
use pwfwi::workbench::run::{write_model, PreparedRun};
use pwfwi::workbench::{self, Preset, Raster, SynthKind, SynthParams};
use pwfwi::FwiError;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "pwfwi", version, about = "Wavefield reconstruction inversion workbench")]
struct Cli {
    /// Worker threads for per-source solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic velocity model.
    Synth(SynthArgs),
    /// Simulate receiver data for the true model of a run config.
    Simulate(ConfigArgs),
    /// Run the configured inversion.
    Invert(ConfigArgs),
    /// Rank regularizers on the configured problem.
    Compare(ConfigArgs),
    /// Relative squared-slowness error of a model raster against a reference.
    Error { model: PathBuf, truth: PathBuf },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "piecewise-smooth")]
    kind: SynthKind,
    #[arg(long, default_value_t = 300)]
    nx: usize,
    #[arg(long, default_value_t = 1)]
    nz: usize,
    /// Cell size in metres.
    #[arg(long, default_value_t = 10.0)]
    h: f64,
    #[arg(long, default_value_t = 1500.0)]
    vmin: f64,
    #[arg(long, default_value_t = 4500.0)]
    vmax: f64,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long)]
    inclusion_velocity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Benchmark geometry; overrides --nx/--nz/--h and writes a ready config.toml.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn out_dir(run: &PreparedRun, args: &ConfigArgs) -> PathBuf {
    args.out_dir.clone().unwrap_or_else(|| run.config.output.dir.clone())
}

fn synth(args: &SynthArgs) -> pwfwi::Result<()> {
    let mut params = SynthParams {
        kind: args.kind,
        nx: args.nx,
        nz: args.nz,
        h: args.h,
        vmin: args.vmin,
        vmax: args.vmax,
        layers: args.layers,
        inclusion_velocity: args.inclusion_velocity,
        seed: args.seed,
    };
    if let Some(p) = args.preset {
        let g = p.geometry();
        params.nx = g.cells();
        params.nz = 1;
        params.h = g.spacing_m;
    }
    let model = workbench::synth_model(&params)?;
    let stem = if args.preset.is_some() { "true" } else { "model" };
    let (v, s) = write_model(&model, &args.out_dir, stem)?;
    println!("wrote {} and {}", v.display(), s.display());
    if let Some(p) = args.preset {
        let cfg = p.run_config("true_slowness.bin".into(), "data.csv".into(), RegularizerKind::Tt);
        let path = args.out_dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn error(model: &Path, truth: &Path) -> pwfwi::Result<()> {
    let read = |p: &Path| Raster::read(p).map_err(|e| FwiError::Config(format!("{}: {e}", p.display())));
    let e = workbench::model_error(&read(model)?.slowness(), &read(truth)?.slowness())?;
    println!("{e}");
    Ok(())
}

fn run(cli: Cli) -> pwfwi::Result<()> {
    match cli.command {
        Command::Synth(args) => synth(&args),
        Command::Simulate(args) => {
            let run = PreparedRun::from_file(&args.config)?;
            let data = workbench::simulate(&run)?;
            println!(
                "wrote {} ({} frequencies x {} sources x {} receivers)",
                run.config.acquisition.data.display(),
                data.sets.len(),
                run.survey.acquisition.num_sources(),
                run.survey.acquisition.receivers.len()
            );
            Ok(())
        }
        Command::Invert(args) => {
            let run = PreparedRun::from_file(&args.config)?;
            let dir = out_dir(&run, &args);
            let outcome = workbench::invert(&run, &dir)?;
            let last = outcome.result.history.last().expect("at least one iteration");
            println!(
                "{} iterations, data residual {:.3e}, wave residual {:.3e}",
                last.total, last.data_residual, last.wave_residual
            );
            if let (Some(e0), Some(e)) = (outcome.initial_error, outcome.final_error) {
                println!("model error {e0:.6} -> {e:.6}");
            }
            println!("outputs in {}", dir.display());
            Ok(())
        }
        Command::Compare(args) => {
            let run = PreparedRun::from_file(&args.config)?;
            let dir = out_dir(&run, &args);
            let rows = workbench::compare_regularizers(&run, &dir)?;
            println!("{:<10} {:>6} {:>12} {:>10}", "kind", "alpha", "error", "normalized");
            for r in rows {
                let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_else(|| "-".into());
                println!("{:<10} {:>6} {:>12.6} {:>10.4}", r.kind.name(), alpha, r.error, r.normalized);
            }
            Ok(())
        }
        Command::Error { model, truth } => error(&model, &truth),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PWFWI_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_CONFIG)
            }
        }
    }
}
