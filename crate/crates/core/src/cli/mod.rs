//! The `stratgrad` command line.
//!
//! Every subcommand writes its CSV/SVG outputs and a `key=value` run manifest into
//! `--out-dir`. Outputs depend only on the seed, the flags and the input data.

pub mod experiments;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataio::{
    default_data_dir, fmt_f64, load_idx_pair, subsample, write_svg_lineplot, Csv, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, TraceSet, TraceSummary};
use crate::mlp::{init_params, Activation, MlpShape};
use crate::population::{PopulationRound, Trend};
use crate::trainer::{
    baseline_train, fullgrad_train, grid_search, mssg_train, reports_csv, Algorithm, BaselineKind,
    TrainConfig, TrainOutcome, UpdateScale,
};

use experiments::{
    gradmatrix_experiment, random_oracle_cases, synthetic_experiment, variance_oracle,
    GradmatrixConfig, OracleStratum,
};
pub use manifest::RunManifest;

/// Smallest replication count accepted by `variance-oracle`.
pub const MIN_ORACLE_REPLICATIONS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(
    name = "stratgrad",
    version,
    about = "Memory-type stratified gradient estimators: synthetic traces, variance oracle, gradient-matrix and training experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace the four estimators over synthetic 40x10 populations.
    Synthetic(SyntheticArgs),
    /// Compare the predicted minimal variance with Monte-Carlo variance.
    VarianceOracle(OracleArgs),
    /// Record a per-sample gradient matrix under full-gradient training and replay the estimators over it.
    Gradmatrix(GradmatrixArgs),
    /// Train a classifier and report accuracy at checkpoints.
    Train(TrainArgs),
    /// Grid search over step size and weight decay.
    Gridsearch(GridArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory for CSV, SVG and manifest outputs (created if missing).
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Run seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest path [default: <out-dir>/<subcommand>-manifest.txt].
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SyntheticArgs {
    #[command(flatten)]
    pub common: Common,
    /// Population family, or `all`: uniform-dec, uniform-inc, normal-random, normal-mean-dec,
    /// normal-mean-inc, normal-var-dec, normal-var-inc.
    #[arg(long, default_value = "all")]
    pub family: String,
    /// Independent seeds (populations and draws) per family.
    #[arg(long, default_value_t = 1000)]
    pub seeds: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// One stratum `E_prev,V_prev,E_curr,V_curr[,weight]`; repeat for more strata of the same case.
    #[arg(long = "stratum", allow_hyphen_values = true)]
    pub strata: Vec<OracleStratum>,
    /// Additional randomly drawn cases (1 to 4 strata each).
    #[arg(long, default_value_t = 0)]
    pub random_cases: usize,
    /// Monte-Carlo replications per case (at least 10000).
    #[arg(long, default_value_t = 100_000)]
    pub replications: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// 2,000 stratified samples, [784,50,50,20,10], 10 iterations.
    Desk,
    /// Every sample, [784,500,500,200,10], 60 iterations.
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory with IDX files [default: $MNIST_DIR].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn dir(&self) -> Result<PathBuf> {
        self.data_dir.clone().or_else(default_data_dir).ok_or_else(|| {
            Error::InvalidArgument("no data directory: pass --data-dir or set MNIST_DIR".into())
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct GradmatrixArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Experiment size preset.
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// File prefix of the training pair (`<prefix>-images-idx3-ubyte[.gz]`).
    #[arg(long, default_value = "train")]
    pub train_prefix: String,
    /// Samples per class at desk scale.
    #[arg(long, default_value_t = 200)]
    pub desk_per_class: usize,
    /// Full-gradient iterations [default: 10 desk, 60 full].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Estimator replays over the matrix.
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    /// Full-gradient step size.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Weight decay.
    #[arg(long, default_value_t = 0.001)]
    pub lambda: f64,
    /// Hidden-unit activation: sigmoid, tanh or relu.
    #[arg(long, default_value = "sigmoid")]
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// [784,50,50,20,10], 200 training and 50 test samples per class.
    Desk,
    /// [784,500,500,200,10], every sample.
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct SetupArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// mssg, sgd, batch, gst or fullgrad.
    #[arg(long)]
    pub algorithm: Algorithm,
    /// Model and data-size preset; explicit flags below override it.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Layer sizes, e.g. `784,50,50,20,10` [default: from preset].
    #[arg(long)]
    pub shape: Option<MlpShape>,
    /// Hidden-unit activation: sigmoid, tanh or relu.
    #[arg(long, default_value = "sigmoid")]
    pub activation: Activation,
    /// File prefix of the training pair.
    #[arg(long, default_value = "train")]
    pub train_prefix: String,
    /// File prefix of the test pair.
    #[arg(long, default_value = "t10k")]
    pub test_prefix: String,
    /// Training samples per class, 0 for all [default: from preset].
    #[arg(long)]
    pub train_per_class: Option<usize>,
    /// Test samples per class, 0 for all [default: from preset].
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Counted iterations.
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// Pooled batch size of the batch trainer.
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    /// Pilot samples per class for MSSG statistics.
    #[arg(long, default_value_t = 8)]
    pub pilot_size: usize,
    /// MSSG update scaling: algorithm-verbatim (h/C) or eq2-weights (h).
    #[arg(long, default_value = "algorithm-verbatim")]
    pub update_scale: UpdateScale,
    /// Accuracy checkpoint interval in iterations.
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: usize,
    /// Single-sample SGD steps per counted iteration.
    #[arg(long, default_value_t = 1)]
    pub sgd_multiplier: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Step size h.
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    /// Weight decay.
    #[arg(long, default_value_t = 0.001)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Step sizes to try.
    #[arg(long, value_delimiter = ',', default_value = "0.01,1,0.001")]
    pub alphas: Vec<f64>,
    /// Weight decays to try.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.0001")]
    pub lambdas: Vec<f64>,
}

/// Parses arguments, runs the command and maps failures to a nonzero exit code.
pub fn main_from_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(m) => {
            for p in &m.outputs {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<RunManifest> {
    match cli.command {
        Command::Synthetic(a) => cmd_synthetic(&a),
        Command::VarianceOracle(a) => cmd_variance_oracle(&a),
        Command::Gradmatrix(a) => cmd_gradmatrix(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Gridsearch(a) => cmd_gridsearch(&a),
    }
}

struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
    manifest_path: PathBuf,
}

impl Outputs {
    fn new(common: &Common, subcommand: &str) -> Result<Self> {
        std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::io(&common.out_dir, e))?;
        let manifest_path = common
            .manifest_out
            .clone()
            .unwrap_or_else(|| common.out_dir.join(format!("{subcommand}-manifest.txt")));
        Ok(Self {
            dir: common.out_dir.clone(),
            manifest: RunManifest::start(subcommand, common.seed),
            manifest_path,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        let p = self.path(name);
        csv.write(&p)?;
        self.manifest.output(&p);
        Ok(())
    }

    fn svg(&mut self, name: &str, title: &str, series: &[(String, Vec<f64>)]) -> Result<()> {
        let p = self.path(name);
        write_svg_lineplot(&p, title, series)?;
        self.manifest.output(&p);
        Ok(())
    }

    fn finish(self) -> Result<RunManifest> {
        self.manifest.finish(&self.manifest_path)
    }
}

pub fn traces_csv(sets: &[TraceSet]) -> Csv {
    let mut csv = Csv::new(["estimator", "seed", "round", "estimate", "truth", "sq_dev"]);
    for set in sets {
        for (kind, traces) in &set.traces {
            for t in traces {
                csv.push(vec![
                    kind.name().to_string(),
                    set.seed.to_string(),
                    t.iteration.to_string(),
                    fmt_f64(t.estimate),
                    fmt_f64(t.truth),
                    fmt_f64(t.sq_dev),
                ]);
            }
        }
    }
    csv
}

pub fn summary_csv(summary: &[TraceSummary]) -> Csv {
    let mut csv = Csv::new(["estimator", "mean_sq_dev", "std_sq_dev", "n_rounds", "n_seeds"]);
    for s in summary {
        csv.push(vec![
            s.kind.name().to_string(),
            fmt_f64(s.mean_sq_dev),
            fmt_f64(s.std_sq_dev),
            s.n_rounds.to_string(),
            s.n_seeds.to_string(),
        ]);
    }
    csv
}

pub fn population_csv(rounds: &PopulationRound) -> Csv {
    let mut csv = Csv::new(["round", "stratum", "value"]);
    for (k, j, v) in rounds.rows() {
        csv.push(vec![k.to_string(), j.to_string(), fmt_f64(v)]);
    }
    csv
}

/// Mean squared deviation per round for every estimator, across seeds.
fn error_curves(sets: &[TraceSet]) -> Vec<(String, Vec<f64>)> {
    EstimatorKind::ALL
        .iter()
        .map(|&kind| {
            let n_rounds = sets.first().map_or(0, |s| s.get(kind).len());
            let curve = (0..n_rounds)
                .map(|k| sets.iter().map(|s| s.get(kind)[k].sq_dev).sum::<f64>() / sets.len() as f64)
                .collect();
            (kind.name().to_string(), curve)
        })
        .collect()
}

fn families(arg: &str) -> Result<Vec<Trend>> {
    if arg == "all" {
        Ok(Trend::ALL.to_vec())
    } else {
        Ok(vec![arg.parse()?])
    }
}

fn cmd_synthetic(a: &SyntheticArgs) -> Result<RunManifest> {
    let families = families(&a.family)?;
    let mut out = Outputs::new(&a.common, "synthetic")?;
    out.manifest.set("family", &a.family);
    out.manifest.set("seeds", a.seeds);
    out.manifest.set("batch_size", experiments::SYNTHETIC_BATCH);
    let runs = families
        .into_iter()
        .map(|f| synthetic_experiment(f, a.seeds, a.common.seed))
        .collect::<Result<Vec<_>>>()?;
    for run in runs {
        let name = run.family.name();
        out.csv(&format!("synthetic-{name}-traces.csv"), &traces_csv(&run.sets))?;
        out.csv(&format!("synthetic-{name}-summary.csv"), &summary_csv(&run.summary))?;
        out.csv(&format!("synthetic-{name}-population.csv"), &population_csv(&run.population))?;
        out.svg(
            &format!("synthetic-{name}-errors.svg"),
            &format!("{name}: mean squared deviation per round"),
            &error_curves(&run.sets),
        )?;
        let fallbacks: u64 = run.sets.iter().map(|s| s.counts.fallbacks()).sum();
        out.manifest.set(&format!("{name}.coefficient_fallbacks"), fallbacks);
    }
    out.finish()
}

fn cmd_variance_oracle(a: &OracleArgs) -> Result<RunManifest> {
    if a.replications < MIN_ORACLE_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "replications must be at least {MIN_ORACLE_REPLICATIONS}, got {}",
            a.replications
        )));
    }
    let mut cases = Vec::new();
    if !a.strata.is_empty() {
        cases.push(a.strata.clone());
    }
    cases.extend(random_oracle_cases(a.random_cases, a.common.seed));
    if cases.is_empty() {
        cases.push(vec!["2,1,1,1".parse()?]);
    }
    let mut out = Outputs::new(&a.common, "variance-oracle")?;
    let rows = variance_oracle(&cases, a.replications, a.common.seed)?;
    out.manifest.set("replications", a.replications);
    out.manifest.set("random_cases", a.random_cases);
    for (c, strata) in cases.iter().enumerate() {
        let desc: Vec<String> = strata
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{}",
                    s.prev.mean, s.prev.variance, s.curr.mean, s.curr.variance, s.weight
                )
            })
            .collect();
        out.manifest.set(&format!("case{c}"), desc.join(";"));
    }
    let mut csv = Csv::new(["case", "stratum", "predicted", "empirical", "std_error", "z"]);
    for r in &rows {
        csv.push(vec![
            r.case.to_string(),
            r.stratum.map_or("total".to_string(), |j| j.to_string()),
            fmt_f64(r.predicted),
            fmt_f64(r.empirical),
            fmt_f64(r.std_error),
            fmt_f64(r.z),
        ]);
    }
    out.csv("variance-oracle.csv", &csv)?;
    let max_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    out.manifest.set("max_abs_z", max_z);
    out.finish()
}

fn load(dir: &Path, prefix: &str, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let data = load_idx_pair(dir, prefix)?;
    if per_class == 0 {
        Ok(data)
    } else {
        subsample(&data, per_class, seed)
    }
}

fn cmd_gradmatrix(a: &GradmatrixArgs) -> Result<RunManifest> {
    let mut out = Outputs::new(&a.common, "gradmatrix")?;
    let dir = a.data.dir()?;
    let mut config = match a.scale {
        Scale::Desk => GradmatrixConfig::desk(a.common.seed),
        Scale::Full => GradmatrixConfig::full(a.common.seed),
    };
    if let Some(it) = a.iterations {
        config.iterations = it;
    }
    config.replications = a.replications;
    config.alpha = a.alpha;
    config.lambda = a.lambda;
    config.activation = a.activation;
    let per_class = if a.scale == Scale::Desk { a.desk_per_class } else { 0 };
    let train = load(&dir, &a.train_prefix, per_class, a.common.seed)?;
    let run = gradmatrix_experiment(&train, &config)?;

    out.manifest.set("data_dir", dir.display());
    out.manifest.set("scale", format!("{:?}", a.scale).to_lowercase());
    out.manifest.set("samples", train.len());
    out.manifest.set("shape", &config.shape);
    out.manifest.set("activation", config.activation);
    out.manifest.set("iterations", config.iterations);
    out.manifest.set("replications", config.replications);
    out.manifest.set("alpha", config.alpha);
    out.manifest.set("lambda", config.lambda);
    out.manifest.set(
        "tracked_weight",
        format!("layer={},out={},in={}", run.tracked.layer, run.tracked.out, run.tracked.input),
    );
    out.manifest.set("initial_loss", fmt_f64(run.losses[0]));
    out.manifest.set("final_loss", fmt_f64(*run.losses.last().expect("non-empty")));

    let mut m = Csv::new(["sample", "iteration", "grad"]);
    for r in run.matrix.records() {
        m.push(vec![r.sample_index.to_string(), r.iteration.to_string(), fmt_f64(r.grad_value)]);
    }
    out.csv("gradmatrix.csv", &m)?;
    out.csv("gradmatrix-traces.csv", &traces_csv(&run.sets))?;
    out.csv("gradmatrix-summary.csv", &summary_csv(&run.summary))?;
    let truth = run.matrix.column_means();
    for kind in EstimatorKind::ALL {
        let est: Vec<f64> = run.sets[0].get(kind).iter().map(|t| t.estimate).collect();
        out.svg(
            &format!("gradmatrix-{}.svg", kind.name()),
            &format!("{} vs population gradient", kind.name()),
            &[("pop".to_string(), truth.clone()), (kind.name().to_string(), est)],
        )?;
    }
    out.svg("gradmatrix-errors.svg", "squared deviation per iteration", &error_curves(&run.sets))?;
    out.finish()
}

struct Prepared {
    train: LabeledDataset,
    test: LabeledDataset,
    shape: MlpShape,
    dir: PathBuf,
}

fn prepare(s: &SetupArgs) -> Result<Prepared> {
    let (shape, train_pc, test_pc) = match s.preset {
        Preset::Desk => (MlpShape::new(MlpShape::DESK.to_vec())?, 200, 50),
        Preset::Full => (MlpShape::new(MlpShape::REFERENCE.to_vec())?, 0, 0),
    };
    let shape = s.shape.clone().unwrap_or(shape);
    let dir = s.data.dir()?;
    let train = load(&dir, &s.train_prefix, s.train_per_class.unwrap_or(train_pc), s.common.seed)?;
    let test = load(&dir, &s.test_prefix, s.test_per_class.unwrap_or(test_pc), s.common.seed)?;
    Ok(Prepared { train, test, shape, dir })
}

fn train_config(s: &SetupArgs, h: f64, lambda: f64) -> TrainConfig {
    TrainConfig {
        h,
        batch_size: s.batch_size,
        pilot_size: s.pilot_size,
        iterations: s.iterations,
        lambda,
        seed: s.common.seed,
        update_scale: s.update_scale,
        checkpoint_every: s.checkpoint_every,
        sgd_multiplier: s.sgd_multiplier,
    }
}

/// Trains `algorithm` from the seed's initial parameters.
pub fn train_algorithm(
    algorithm: Algorithm,
    shape: &MlpShape,
    activation: Activation,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let params = init_params(shape, activation, config.seed);
    match algorithm {
        Algorithm::Mssg => mssg_train(params, train, test, config),
        Algorithm::Sgd => baseline_train(params, train, test, config, BaselineKind::Sgd),
        Algorithm::Batch => baseline_train(params, train, test, config, BaselineKind::Batch),
        Algorithm::Gst => baseline_train(params, train, test, config, BaselineKind::StratifiedSt),
        Algorithm::FullGrad => fullgrad_train(params, train, test, config),
    }
}

fn describe_setup(m: &mut RunManifest, s: &SetupArgs, p: &Prepared) {
    m.set("algorithm", s.algorithm);
    m.set("data_dir", p.dir.display());
    m.set("train_prefix", &s.train_prefix);
    m.set("test_prefix", &s.test_prefix);
    m.set("train_samples", p.train.len());
    m.set("test_samples", p.test.len());
    m.set("shape", &p.shape);
    m.set("activation", s.activation);
    m.set("iterations", s.iterations);
    m.set("batch_size", s.batch_size);
    m.set("pilot_size", s.pilot_size);
    m.set("update_scale", s.update_scale);
    m.set("checkpoint_every", s.checkpoint_every);
    m.set("sgd_multiplier", s.sgd_multiplier);
}

fn cmd_train(a: &TrainArgs) -> Result<RunManifest> {
    let s = &a.setup;
    let mut out = Outputs::new(&s.common, "train")?;
    let p = prepare(s)?;
    let config = train_config(s, a.h, a.lambda);
    let outcome = train_algorithm(s.algorithm, &p.shape, s.activation, &p.train, &p.test, &config)?;
    describe_setup(&mut out.manifest, s, &p);
    out.manifest.set("h", a.h);
    out.manifest.set("lambda", a.lambda);
    let c = outcome.counts;
    out.manifest.set("fallback.zero_over_zero", c.zero_over_zero);
    out.manifest.set("fallback.guarded_denominator", c.guarded_denominator);
    out.manifest.set("fallback.zero_previous_mean", c.zero_previous_mean);
    out.manifest.set("fallback.p_magnitude", c.p_magnitude);
    out.csv(&format!("train-{}.csv", s.algorithm), &reports_csv(&outcome.reports, s.common.seed))?;
    out.finish()
}

fn cmd_gridsearch(a: &GridArgs) -> Result<RunManifest> {
    let s = &a.setup;
    let mut out = Outputs::new(&s.common, "gridsearch")?;
    let p = prepare(s)?;
    let result = grid_search(&a.alphas, &a.lambdas, |h, lambda| {
        let config = train_config(s, h, lambda);
        let outcome = train_algorithm(s.algorithm, &p.shape, s.activation, &p.train, &p.test, &config)?;
        Ok(outcome.reports.last().cloned().expect("at least one checkpoint"))
    })?;
    describe_setup(&mut out.manifest, s, &p);
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    out.manifest.set("alphas", join(&a.alphas));
    out.manifest.set("lambdas", join(&a.lambdas));
    let best = result.best_cell();
    out.manifest.set("best.h", best.h);
    out.manifest.set("best.lambda", best.lambda);
    let mut csv = Csv::new(["h", "lambda", "iterations_k", "test_accu", "train_accu", "seed", "best"]);
    for (i, c) in result.cells.iter().enumerate() {
        csv.push(vec![
            c.h.to_string(),
            c.lambda.to_string(),
            (c.report.iterations as f64 / 1000.0).to_string(),
            format!("{:.6}", c.report.test_accuracy),
            format!("{:.6}", c.report.train_accuracy),
            s.common.seed.to_string(),
            u8::from(i == result.best).to_string(),
        ]);
    }
    out.csv(&format!("gridsearch-{}.csv", s.algorithm), &csv)?;
    out.finish()
}
