use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use missauditor_core::corpus::InputFormat;
use missauditor_core::pipeline::{KeywordChoice, Settings, WeightMode};
use missauditor_core::regressor::{KernelKind, Solver};

/// Review-driven audit of apps that can be misused against their users.
///
/// Settings come from built-in defaults, then the TOML config file, then
/// command-line flags; later sources win. Without --config, the tool reads
/// `missauditor.toml` in the data directory when present.
#[derive(Debug, Parser)]
#[command(name = "missauditor", version)]
pub struct Cli {
    /// Working directory holding the corpus and every derived artifact.
    #[arg(long, global = true, default_value = ".", env = "MISSAUDITOR_DATA_DIR")]
    pub data_dir: PathBuf,

    /// TOML settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice (sampling, fold assignment, solver order).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeywordArg {
    Seed,
    Extended,
}

impl From<KeywordArg> for KeywordChoice {
    fn from(k: KeywordArg) -> Self {
        match k {
            KeywordArg::Seed => KeywordChoice::Seed,
            KeywordArg::Extended => KeywordChoice::Extended,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => InputFormat::Jsonl,
            FormatArg::Csv => InputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Svr,
    KernelRidge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    Empirical,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Population {
    All,
    Matching,
    Nonmatching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    /// Apps whose description mentions a keyword.
    Description,
    /// Apps where more than --percent of reviews mention a keyword.
    ReviewPercent,
}

/// Regressor overrides shared by train, cv and predict.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Box constraint (inverse ridge penalty for kernel ridge).
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    /// Width of the insensitive tube.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// RBF width; the median heuristic is used when omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
}

impl ModelArgs {
    pub fn apply(&self, s: &mut Settings) {
        if let Some(k) = self.kernel {
            s.regressor.kernel = match k {
                KernelArg::Rbf => KernelKind::Rbf,
                KernelArg::Linear => KernelKind::Linear,
            };
        }
        if let Some(c) = self.c {
            s.regressor.c = c;
        }
        if let Some(e) = self.epsilon {
            s.regressor.epsilon = e;
        }
        if self.gamma.is_some() {
            s.regressor.gamma = self.gamma;
        }
        if let Some(solver) = self.solver {
            s.regressor.solver = match solver {
                SolverArg::Svr => Solver::Svr,
                SolverArg::KernelRidge => Solver::KernelRidge,
            };
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load app and review files into the working directory.
    Ingest {
        #[arg(long, required = true, num_args = 1..)]
        apps: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        reviews: Vec<PathBuf>,
        /// Force a file format instead of inferring it from extensions.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Drop reviews whose body duplicates an earlier review.
    Dedupe,
    /// Draw a uniform random sample of review ids.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "all")]
        population: Population,
        #[arg(long, value_enum, default_value = "seed")]
        keywords: KeywordArg,
        /// Defaults to sample.json in the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select the annotation pool: keyword matches plus a random remainder.
    Pool {
        #[arg(long, value_enum, default_value = "seed")]
        keywords: KeywordArg,
        #[arg(long)]
        matching: usize,
        #[arg(long)]
        nonmatching: usize,
    },
    /// Write the training CSV from merged annotations.
    AnnotateExport,
    /// Add annotation records from a JSONL file.
    AnnotateImport { file: PathBuf },
    /// Inter-rater reliability of two annotators.
    Agreement {
        #[arg(long)]
        rater_a: Option<String>,
        #[arg(long)]
        rater_b: Option<String>,
    },
    /// Embed every review into the cache.
    Embed,
    /// Fit the alarmingness regressor on the training CSV.
    Train {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// k-fold cross-validation of the regressor.
    Cv {
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Predict convincingness and severity for every review.
    Predict {
        /// Accept a model trained with a different embedding provider.
        #[arg(long)]
        allow_provider_mismatch: bool,
    },
    /// Aggregate review predictions into ranked app scores.
    Score {
        #[arg(long, value_enum)]
        weights: Option<WeightsArg>,
    },
    /// Print the ranking.
    Rank {
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Precision, recall and F1 over a grid of score thresholds.
    Sweep {
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        step: Option<f64>,
        /// Labels to copy into the data directory before sweeping.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Evaluate a keyword baseline against the ground truth.
    Baseline {
        #[arg(long, value_enum, default_value = "description")]
        method: BaselineMethod,
        #[arg(long, default_value_t = 5.0)]
        percent: f64,
        #[arg(long, value_enum, default_value = "seed")]
        keywords: KeywordArg,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Valence, arousal and dominance of adjectives per reviewer group.
    Affect {
        /// TSV of word, valence, arousal, dominance.
        #[arg(long)]
        lexicon: PathBuf,
        /// Adjective list replacing the bundled one.
        #[arg(long)]
        adjectives: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "seed")]
        keywords: KeywordArg,
        /// Defaults to affect.json in the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Candidate apps recommended alongside confirmed ones.
    Snowball {
        /// Similar-apps JSONL; defaults to similar.jsonl in the data directory.
        #[arg(long)]
        similar: Option<PathBuf>,
    },
    /// Score newly collected reviews of previously flagged apps.
    Recheck {
        /// New reviews (JSONL or CSV).
        #[arg(long, required = true, num_args = 1..)]
        reviews: Vec<PathBuf>,
        /// Apps to recheck; defaults to apps with a confirmed verdict.
        #[arg(long = "app")]
        apps: Vec<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "AUDIT_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Directory of static UI files.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Register annotator ids before serving.
        #[arg(long = "annotator")]
        annotators: Vec<String>,
    },
    /// Per-app audit dossiers: scores, top alarming reviews, verdicts.
    Report {
        #[arg(long = "app")]
        apps: Vec<String>,
        /// Write labeling checklists for every app instead.
        #[arg(long)]
        checklists: bool,
        /// Defaults to report.json (or checklists.json) in the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Dedupe => "dedupe",
            Command::Sample { .. } => "sample",
            Command::Pool { .. } => "pool",
            Command::AnnotateExport => "annotate-export",
            Command::AnnotateImport { .. } => "annotate-import",
            Command::Agreement { .. } => "agreement",
            Command::Embed => "embed",
            Command::Train { .. } => "train",
            Command::Cv { .. } => "cv",
            Command::Predict { .. } => "predict",
            Command::Score { .. } => "score",
            Command::Rank { .. } => "rank",
            Command::Sweep { .. } => "sweep",
            Command::Baseline { .. } => "baseline",
            Command::Affect { .. } => "affect",
            Command::Snowball { .. } => "snowball",
            Command::Recheck { .. } => "recheck",
            Command::Serve { .. } => "serve",
            Command::Report { .. } => "report",
        }
    }

    /// Applies flags that override settings.
    pub fn apply(&self, s: &mut Settings) {
        match self {
            Command::Train { model } => model.apply(s),
            Command::Cv { folds, model } => {
                model.apply(s);
                if let Some(k) = folds {
                    s.folds = *k;
                }
            }
            Command::Predict { allow_provider_mismatch: true } => s.allow_provider_mismatch = true,
            Command::Score { weights: Some(w) } => {
                s.weights = match w {
                    WeightsArg::Empirical => WeightMode::Empirical,
                    WeightsArg::Table => WeightMode::Table,
                }
            }
            Command::Sweep { from, to, step, .. } => {
                if let Some(v) = from {
                    s.sweep.from = *v;
                }
                if let Some(v) = to {
                    s.sweep.to = *v;
                }
                if let Some(v) = step {
                    s.sweep.step = *v;
                }
            }
            _ => {}
        }
    }
}
