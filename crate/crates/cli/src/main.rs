use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use binpose::pipeline::TranslationKind;
use binpose::select_refine::SortMethod;
use binpose::stages::{RunConfig, Runner, Stage};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "binpose", version, about = "Synthetic bin-picking pose estimation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(clap::Args, Debug)]
struct Opts {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of scenes
    #[arg(long, global = true)]
    scenes: Option<u32>,
    /// Instances per scene
    #[arg(long, global = true)]
    instances: Option<usize>,
    #[arg(long, global = true)]
    codebook_size: Option<usize>,
    /// Estimates kept per image
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Restrict selection and evaluation to one sort method
    #[arg(long, global = true, value_enum)]
    sort: Option<SortArg>,
    /// Translation from box scale (rgb) or center depth (depth)
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Zero pixels outside the detection mask before embedding
    #[arg(long, global = true)]
    mask_only: bool,
    /// Refine estimates with ICP before selection
    #[arg(long, global = true)]
    icp: bool,
    /// Output directory (default: config, then $BINPOSE_OUT, then ./binpose-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate synthetic scenes with ground truth
    Genscenes,
    /// Build the rotation codebook
    Codebook,
    /// Derive detections from the ground-truth instance maps
    DetectGt,
    /// Estimate one pose per detection
    Estimate,
    /// Refine estimates with ICP
    Refine,
    /// Score estimates by depth error and pick the top k per sort method
    Select,
    /// Compute average recall and detection metrics
    Eval,
    /// Write text, CSV and SVG reports
    Report,
    /// Run every stage in order
    Run,
    /// Print the effective configuration as TOML
    Config,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SortArg {
    Score,
    Cosine,
    Depth,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Rgb,
    Depth,
}

fn effective_config(o: &Opts) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.scenes {
        cfg.scenes = v;
    }
    if let Some(v) = o.instances {
        cfg.scene.instance_count = v;
    }
    if let Some(v) = o.codebook_size {
        cfg.codebook.size = v;
    }
    if let Some(v) = o.k {
        cfg.k = v;
    }
    if let Some(s) = o.sort {
        cfg.methods = vec![match s {
            SortArg::Score => SortMethod::DetectorScore,
            SortArg::Cosine => SortMethod::Cosine,
            SortArg::Depth => SortMethod::DepthError,
        }];
    }
    if let Some(m) = o.mode {
        cfg.translation.kind = match m {
            ModeArg::Rgb => TranslationKind::RgbScale,
            ModeArg::Depth => TranslationKind::DepthCenter,
        };
    }
    cfg.crop.mask_only |= o.mask_only;
    cfg.use_icp |= o.icp;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli.opts)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let out = cli.opts.out.clone().unwrap_or_else(|| cfg.resolve_out());
    let runner = Runner::new(cfg, &out)?;
    let stage = match cli.command {
        Command::Genscenes => Stage::Genscenes,
        Command::Codebook => Stage::Codebook,
        Command::DetectGt => Stage::DetectGt,
        Command::Estimate => Stage::Estimate,
        Command::Refine => Stage::Refine,
        Command::Select => Stage::Select,
        Command::Eval => Stage::Eval,
        Command::Report => Stage::Report,
        Command::Run => {
            runner.run_all()?;
            println!("{}", runner.report_dir().join("report.txt").display());
            return Ok(());
        }
        Command::Config => unreachable!(),
    };
    runner.run(stage).with_context(|| format!("stage {} failed", stage.name()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
