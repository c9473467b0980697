mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kdpinn::experiments::{cross_pde_recipes, Scale, Variant};
use kdpinn::jets::Activation;
use kdpinn::perf::{HardwareParams, LatencyPlan};

use commands::{BenchModels, Log};
use config::{preset_names, OverrideArgs, RecipeArgs};
use failure::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "kdpinn",
    version,
    about = "Train, distill and benchmark physics-informed networks"
)]
struct Cli {
    /// More progress output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Results only, no progress output.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Baseline,
    KdPinnPlus,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::KdPinnPlus => Variant::KdPinnPlus,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(clap::Args, Debug)]
struct HardwareArgs {
    /// Non-parallelizable fraction of inference time.
    #[arg(long, default_value_t = HardwareParams::default().f)]
    f: f64,
    /// Teacher arithmetic intensity, FLOPs/byte.
    #[arg(long, default_value_t = HardwareParams::default().ai_teacher)]
    ai_teacher: f64,
    /// Student arithmetic intensity, FLOPs/byte.
    #[arg(long, default_value_t = HardwareParams::default().ai_student)]
    ai_student: f64,
    /// Memory bandwidth, GB/s.
    #[arg(long, default_value_t = HardwareParams::default().bw)]
    bw: f64,
    /// Peak compute, GFLOP/s.
    #[arg(long, default_value_t = HardwareParams::default().p_peak)]
    p_peak: f64,
}

impl HardwareArgs {
    fn params(&self) -> HardwareParams {
        HardwareParams {
            f: self.f,
            ai_teacher: self.ai_teacher,
            ai_student: self.ai_student,
            bw: self.bw,
            p_peak: self.p_peak,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain the teacher; prints the checkpoint path.
    TrainTeacher {
        #[command(flatten)]
        recipe: RecipeArgs,
    },
    /// Distill a student from a teacher checkpoint; prints the checkpoint path.
    Distill {
        #[command(flatten)]
        recipe: RecipeArgs,
        #[arg(long, value_name = "CKPT")]
        teacher: PathBuf,
        #[arg(long, value_enum, default_value = "kd-pinn-plus")]
        variant: VariantArg,
    },
    /// Accuracy of one checkpoint on the recipe's evaluation grid.
    Evaluate {
        #[command(flatten)]
        recipe: RecipeArgs,
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
    },
    /// Teacher, student, evaluation and latency in one run (Black–Scholes).
    InDomain {
        #[command(flatten)]
        recipe: RecipeArgs,
    },
    /// Baseline and mitigated students on the out-of-domain regions.
    Ood {
        #[command(flatten)]
        recipe: RecipeArgs,
        /// Teacher checkpoint; trained from the recipe when omitted.
        #[arg(long, value_name = "CKPT")]
        teacher: Option<PathBuf>,
        /// Student seeds, comma separated (default: the recipe seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Median inference latency of a teacher/student pair as JSON.
    Bench {
        /// Random-init networks from this recipe when no checkpoints are given.
        #[command(flatten)]
        recipe: RecipeArgs,
        #[arg(long, value_name = "CKPT", requires = "student")]
        teacher: Option<PathBuf>,
        #[arg(long, value_name = "CKPT", requires = "teacher")]
        student: Option<PathBuf>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        hardware: HardwareArgs,
    },
    /// Speedup bounds from a FLOP ratio or a pair of layer sizes, as JSON.
    Bounds {
        /// Teacher/student FLOP ratio.
        #[arg(long, conflicts_with_all = ["teacher_sizes", "student_sizes"], required_unless_present = "teacher_sizes")]
        r_flops: Option<f64>,
        /// Teacher layer sizes, e.g. 2,50,50,50,1.
        #[arg(long, requires = "student_sizes")]
        teacher_sizes: Option<String>,
        #[arg(long, requires = "teacher_sizes")]
        student_sizes: Option<String>,
        #[command(flatten)]
        hardware: HardwareArgs,
    },
    /// Teacher/student pairs on Burgers, Allen–Cahn and Navier–Stokes.
    CrossPde {
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        /// Recipe names to run, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[command(flatten)]
        set: OverrideArgs,
    },
    /// Equal-architecture students with and without distillation.
    Ablation {
        #[command(flatten)]
        recipe: RecipeArgs,
        #[arg(long, value_name = "CKPT")]
        teacher: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// List the built-in recipes.
    Presets,
    /// Print a resolved recipe as JSON.
    Recipe {
        #[command(flatten)]
        recipe: RecipeArgs,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let log = Log {
        level: if cli.quiet { 0 } else { 1 + cli.verbose },
    };
    match cli.command {
        Command::TrainTeacher { recipe } => commands::train_teacher_cmd(&recipe.resolve()?, log),
        Command::Distill {
            recipe,
            teacher,
            variant,
        } => commands::distill_cmd(&recipe.resolve()?, &teacher, variant.into(), log),
        Command::Evaluate { recipe, checkpoint } => {
            commands::evaluate_cmd(&recipe.resolve()?, &checkpoint, log)
        }
        Command::InDomain { recipe } => commands::in_domain_cmd(&recipe.resolve()?, log),
        Command::Ood {
            recipe,
            teacher,
            seeds,
        } => commands::ood_cmd(&recipe.resolve()?, teacher.as_deref(), &seeds, log),
        Command::Bench {
            recipe,
            teacher,
            student,
            batch,
            warmup,
            runs,
            hardware,
        } => {
            let cfg = if recipe.given() {
                Some(recipe.resolve()?)
            } else {
                None
            };
            let mut plan = cfg
                .as_ref()
                .and_then(|c| c.recipe.latency)
                .unwrap_or_default();
            plan = LatencyPlan {
                batch: batch.unwrap_or(plan.batch),
                warmup: warmup.unwrap_or(plan.warmup),
                runs: runs.unwrap_or(plan.runs),
                ..plan
            };
            let models = match (&teacher, &student, &cfg) {
                (Some(t), Some(s), _) => BenchModels::Checkpoints {
                    teacher: t,
                    student: s,
                },
                (None, None, Some(c)) => BenchModels::Recipe(c),
                _ => {
                    return Err(Failure::config(
                        "bench needs --teacher and --student checkpoints, or --recipe/--preset",
                    ))
                }
            };
            commands::bench_cmd(
                models,
                plan,
                &hardware.params(),
                recipe.set.out.as_deref(),
                log,
            )
        }
        Command::Bounds {
            r_flops,
            teacher_sizes,
            student_sizes,
            hardware,
        } => {
            let r = match (r_flops, teacher_sizes, student_sizes) {
                (Some(r), _, _) => r,
                (None, Some(t), Some(s)) => {
                    let t = commands::parse_sizes(&t, Activation::Tanh)?;
                    let s = commands::parse_sizes(&s, Activation::Tanh)?;
                    t.mac_count() as f64 / s.mac_count() as f64
                }
                _ => {
                    return Err(Failure::config(
                        "bounds needs --r-flops or both layer size lists",
                    ))
                }
            };
            commands::bounds_cmd(r, &hardware.params())
        }
        Command::CrossPde { scale, only, set } => {
            let scale = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Full => Scale::Full,
            };
            let all = cross_pde_recipes(scale);
            for name in &only {
                if !all.iter().any(|r| &r.name == name) {
                    let names: Vec<_> = all.iter().map(|r| r.name.as_str()).collect();
                    return Err(Failure::config(format!(
                        "unknown recipe {name:?}; available: {}",
                        names.join(", ")
                    )));
                }
            }
            let recipes = all
                .iter()
                .filter(|r| only.is_empty() || only.contains(&r.name))
                .map(|r| set.apply(r))
                .collect::<Result<Vec<_>, _>>()?;
            commands::cross_pde_cmd(&recipes, log)
        }
        Command::Ablation {
            recipe,
            teacher,
            seeds,
        } => commands::ablation_cmd(&recipe.resolve()?, teacher.as_deref(), &seeds, log),
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Recipe { recipe } => {
            println!("{}", recipe.resolve()?.recipe.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
