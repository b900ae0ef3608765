use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dyn4d::io::{parse_kv, write_file};
use dyn4d::pipeline::{
    ablation_sweep, eval_dir, fuse_dir, mine_dir, pose_dir, run_dir_config, run_pipeline, simulate_dir, PipelineConfig,
    PipelineError, ReportFormat, Variant,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dyn4d",
    version,
    about = "Two-pass pose/geometry decoupling on synthetic dynamic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render ground truth, observations and both depth passes into --out
    Simulate(Common),
    /// Unmasked pose, saliency mining and threshold for the run in --out
    Mine(Common),
    /// Mask-weighted pose for the run in --out
    Pose(Common),
    /// Depth composition per variant for the run in --out
    Fuse(Common),
    /// Metrics and report for the fused depth in --out
    Eval(Common),
    /// All stages in one go
    Run {
        #[command(flatten)]
        common: Common,
        /// Read passes, masks and trajectories from this run directory
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Per-seed runs of every variant, aggregated to median and IQR
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        num_seeds: u64,
    },
}

#[derive(Args)]
struct Common {
    /// key=value config file with dotted keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to one variant, e.g. hard_replace or pass2_only@unmasked
    #[arg(long)]
    variant: Option<String>,
    /// Use the ground-truth dynamic mask for pose and fusion
    #[arg(long)]
    gt_mask: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

enum Failure {
    Config(String),
    Stage(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Stage(e.to_string()),
        }
    }
}

fn read_config_file(path: &Path) -> Result<PipelineConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let kv = parse_kv(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    PipelineConfig::from_kv(&kv).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

impl Common {
    fn out_dir(&self) -> Result<&Path, Failure> {
        self.out
            .as_deref()
            .ok_or_else(|| Failure::Config("--out <dir> is required".into()))
    }

    fn apply(&self, mut c: PipelineConfig) -> Result<PipelineConfig, Failure> {
        if let Some(seed) = self.seed {
            c.seed = seed;
            c.scene.seed = seed;
        }
        if let Some(v) = &self.variant {
            let v = Variant::parse(v).ok_or_else(|| Failure::Config(format!("unknown variant {v:?}")))?;
            c.variants = vec![v];
        }
        c.use_gt_mask |= self.gt_mask;
        c.validate().map_err(Failure::Config)?;
        Ok(c)
    }

    /// `--config` or defaults, with flag overrides.
    fn fresh_config(&self) -> Result<PipelineConfig, Failure> {
        let base = match &self.config {
            Some(p) => read_config_file(p)?,
            None => PipelineConfig::default(),
        };
        self.apply(base)
    }

    /// `--config`, or the `scene.cfg` echo of the run in `--out`.
    fn run_config(&self) -> Result<PipelineConfig, Failure> {
        let base = match &self.config {
            Some(p) => read_config_file(p)?,
            None => run_dir_config(self.out_dir()?)?,
        };
        self.apply(base)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => {
            let c = a.fresh_config()?;
            let sim = simulate_dir(&c, a.out_dir()?)?;
            println!(
                "simulated {} frames, {} points, seed {}",
                sim.truth.num_frames(),
                sim.truth.num_points(),
                c.seed
            );
        }
        Command::Mine(a) => {
            let c = a.run_config()?;
            let (cues, auc) = mine_dir(&c, a.out_dir()?)?;
            println!("tau={}", cues.tau);
            println!("saliency_auc={}", auc.map_or("na".into(), |v| v.to_string()));
            println!("attention_mass_before={}", cues.attention.mean_before);
            println!("attention_mass_after={}", cues.attention.mean_after);
        }
        Command::Pose(a) => {
            let c = a.run_config()?;
            let traj = pose_dir(&c, a.out_dir()?)?;
            println!("estimated {} poses", traj.len());
        }
        Command::Fuse(a) => {
            let c = a.run_config()?;
            for (v, lines) in fuse_dir(&c, a.out_dir()?)? {
                println!("{}: {} frames", v.name(), lines.len());
            }
        }
        Command::Eval(a) => {
            let c = a.run_config()?;
            let report = eval_dir(&c, a.out_dir()?, a.format.into())?;
            print!("{}", report.render(a.format.into()));
        }
        Command::Run { common: a, input } => {
            let mut c = a.fresh_config()?;
            c.out_dir = a.out.clone();
            c.input_dir = input.or(c.input_dir);
            let report = run_pipeline(&c, a.format.into())?;
            for line in report.timing_lines() {
                eprintln!("{line}");
            }
            print!("{}", report.render(a.format.into()));
        }
        Command::Ablate { common: a, num_seeds } => {
            if num_seeds == 0 {
                return Err(Failure::Config("--num-seeds must be >= 1".into()));
            }
            let c = a.fresh_config()?;
            let seeds: Vec<u64> = (c.seed..c.seed + num_seeds).collect();
            let report = ablation_sweep(&c, &seeds)?;
            let text = report.render(a.format.into());
            if let Some(dir) = &a.out {
                let name = match a.format {
                    Format::Text => "ablation.txt",
                    Format::Csv => "ablation.csv",
                };
                write_file(&dir.join(name), text.as_bytes()).map_err(|e| Failure::Stage(e.to_string()))?;
            }
            print!("{text}");
            if !report.failures.is_empty() {
                return Err(Failure::Stage(format!(
                    "{} of {} seeds failed",
                    report.failures.len(),
                    seeds.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
