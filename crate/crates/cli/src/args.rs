use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tvae", version, about = "Ball trajectory prediction with a trajectory VAE")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// `key = value` file; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a noisy simulated dataset with a train/test split.
    Simulate(SimulateArgs),
    /// Train a model and write it with its loss history.
    Train(TrainArgs),
    /// Predict full trajectories from observed prefixes.
    Predict(PredictArgs),
    /// Error curves of a model, or of the physics baseline, on the test split.
    Evaluate(EvaluateArgs),
    /// Train a CI and a full-decoder model and compare their error curves.
    Ablate(AblateArgs),
    /// Grid search over latent and hidden sizes by validation loss.
    Search(SearchArgs),
    /// Time ensemble predictions.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct PhysicsArgs {
    /// Quadratic drag coefficient, 1/m.
    #[arg(long)]
    pub drag_coeff: Option<f64>,
    #[arg(long)]
    pub gravity: Option<f64>,
    #[arg(long)]
    pub restitution_z: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Total trajectories, split 10 : 1 into train and test.
    #[arg(long)]
    pub count: Option<usize>,
    /// Sensor noise std per coordinate, meters.
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub physics: PhysicsArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Latent size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Decoder sees only the latent code.
    #[arg(long, overrides_with = "no_ci")]
    pub ci: bool,
    #[arg(long, overrides_with = "ci")]
    pub no_ci: bool,
}

impl ModelArgs {
    pub fn ci(&self) -> Option<bool> {
        match (self.ci, self.no_ci) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Probability of dropping an observation during training.
    #[arg(long)]
    pub p_miss: Option<f64>,
    /// Probability of replacing an observation with an outlier during training.
    #[arg(long)]
    pub p_outlier: Option<f64>,
    /// Do not pass the KL gradient into the full-trajectory encoding.
    #[arg(long)]
    pub kl_stop_gradient: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model file; the history goes next to it as `<out>.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Latent draws per example.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file whose trajectories are the observed prefixes.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ensemble size.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Write the ensemble mean and per-step covariance instead of the samples.
    #[arg(long)]
    pub moments: bool,
    /// Decode the latent mean only (debugging).
    #[arg(long)]
    pub zero_sigma: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Future,
    Whole,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model to evaluate; the physics baseline when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Error per future step for this many given observations, instead of
    /// error against the number given.
    #[arg(long)]
    pub given: Option<usize>,
    /// Steps that count toward the error-vs-given curve.
    #[arg(long, value_enum)]
    pub scope: Option<Scope>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Curve CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub physics: PhysicsArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Prefix for `<out>.ci.csv` and `<out>.full.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Ensemble size for evaluation.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Best model; the table goes to `<out>.search.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Comma-separated latent sizes.
    #[arg(long, value_delimiter = ',')]
    pub latents: Option<Vec<usize>>,
    /// Comma-separated hidden sizes.
    #[arg(long, value_delimiter = ',')]
    pub hiddens: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model to time; a randomly initialised one of size `--k`/`--hidden` when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub model_size: ModelArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Observations in the timed prefix.
    #[arg(long)]
    pub given: Option<usize>,
}
