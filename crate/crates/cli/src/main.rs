use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labelassign::{cmd_assign, cmd_evaluate, cmd_simulate, RunConfig, StrategyChoice};

#[derive(Parser)]
#[command(name = "labelassign", version, about = "Compare static and prediction-guided label assignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign labels per scene and write JSON (and optionally SVG) comparisons.
    Assign(Common),
    /// Track positive counts along a simulated training trajectory.
    Simulate(Common),
    /// Compute AP for a COCO result list.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detections: PathBuf,
        /// Also report AP for small, medium and large objects.
        #[arg(long)]
        area_bands: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// COCO-style ground truth.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Generate scenes instead of reading annotations.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyChoice>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

impl Common {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.annotations {
            cfg.annotations = Some(p);
            cfg.synthetic = false;
        }
        if self.synthetic {
            cfg.synthetic = true;
            cfg.annotations = None;
        }
        if let Some(seed) = self.seed {
            cfg.scene.seed = seed;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(sigma) = self.sigma {
            cfg.matching.sigma = sigma;
        }
        if let Some(out) = self.out {
            cfg.out = out;
        }
        cfg.svg |= self.svg;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (mut stdout, mut stderr) = (io::stdout().lock(), io::stderr());
    match cli.command {
        Command::Assign(common) => {
            cmd_assign(&common.resolve()?, &mut stderr)?;
        }
        Command::Simulate(common) => {
            cmd_simulate(&common.resolve()?, &mut stdout, &mut stderr)?;
        }
        Command::Evaluate { common, detections, area_bands } => {
            let mut cfg = common.resolve()?;
            cfg.eval.area_bands |= area_bands;
            cmd_evaluate(&cfg, &detections, &mut stdout, &mut stderr)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
