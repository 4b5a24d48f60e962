use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use terraclass::cloudio::{self, CloudFormat};
use terraclass::core::ensemble::{ModelKind, TrainConfig};
use terraclass::core::{geom, pyramid, Class, FeatureSet, PointCloud};
use terraclass::pipeline::{self, PipelineConfig};
use terraclass::synth::{self, Recipe, TownSpec};
use terraclass::{featfile, modelfile, Error, Result};

/// Per-point semantic classification of colored 3D point clouds.
#[derive(Parser, Debug)]
#[command(name = "terraclass", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic scene from a recipe.
    Synth(SynthArgs),
    /// Split a labeled cloud into two halves along the best vertical plane.
    Split(SplitArgs),
    /// Compute per-point features and write them to a feature file.
    Extract(ExtractArgs),
    /// Train a classifier on one or more labeled clouds.
    Train(TrainArgs),
    /// Label every point of a cloud with a trained model.
    Predict(PredictArgs),
    /// Score a trained model on a labeled cloud.
    Evaluate(EvaluateArgs),
    /// Train and score every combination of feature sets and classifiers.
    Ablate(AblateArgs),
}

#[derive(Args, Debug, Clone)]
struct FeatureOpts {
    /// Ground sampling distance of the input in meters; the finest voxel
    /// size is four times this.
    #[arg(long, default_value_t = pyramid::DEFAULT_GSD)]
    gsd: f64,
    /// Neighbors per point at each scale.
    #[arg(long, default_value_t = geom::DEFAULT_K)]
    k: usize,
    /// Number of scales, each twice as coarse as the previous.
    #[arg(long, default_value_t = pyramid::DEFAULT_LEVELS)]
    levels: usize,
    /// Color neighborhood radii in meters that `all` expands to.
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.6,0.9")]
    radii: Vec<f64>,
    /// Worker threads [default: all logical cores].
    #[arg(long, env = "TERRACLASS_THREADS")]
    threads: Option<usize>,
    /// Points per feature batch during prediction.
    #[arg(long, default_value_t = pipeline::DEFAULT_BATCH)]
    batch: usize,
}

#[derive(Args, Debug, Clone)]
struct ModelOpts {
    /// Classifier: rf (random forest) or gbt (gradient boosted trees).
    #[arg(long, default_value = "gbt")]
    classifier: ModelKind,
    /// Forest size or boosting iterations.
    #[arg(long, default_value_t = TrainConfig::default().n_trees)]
    trees: usize,
    /// Training points drawn per class from each training cloud.
    #[arg(long, default_value_t = terraclass::core::evaluate::DEFAULT_PER_CLASS)]
    per_class: usize,
    #[arg(long, default_value_t = TrainConfig::default().rf_max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = TrainConfig::default().gbt_max_leaves)]
    max_leaves: usize,
    #[arg(long, default_value_t = TrainConfig::default().gbt_learning_rate)]
    learning_rate: f64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene recipe (TOML). Without one, a town is generated.
    #[arg(long)]
    recipe: Option<PathBuf>,
    /// Side length in meters of the generated town.
    #[arg(long, default_value_t = 60.0, conflicts_with = "recipe")]
    size: f64,
    /// Points per square meter of the generated town.
    #[arg(long, default_value_t = 40.0, conflicts_with = "recipe")]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cloud (.ply for binary PLY, anything else for text).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    input: PathBuf,
    #[arg(long, default_value_t = terraclass::core::evaluate::DEFAULT_ANGLES)]
    angles: usize,
    #[arg(long, default_value_t = terraclass::core::evaluate::DEFAULT_OFFSETS)]
    offsets: usize,
    /// Outputs for the positive and the negative side.
    #[arg(short, long, num_args = 2, value_names = ["POSITIVE", "NEGATIVE"], required = true)]
    output: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    input: PathBuf,
    /// Feature set: g, cp, cn:R, all, or a `+`-joined combination.
    #[arg(long, default_value = "all")]
    features: String,
    #[command(flatten)]
    opts: FeatureOpts,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labeled training clouds.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Feature set: g, cp, cn:R, all, or a `+`-joined combination.
    #[arg(long, default_value = "all")]
    features: String,
    #[command(flatten)]
    opts: FeatureOpts,
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    model: PathBuf,
    input: PathBuf,
    #[command(flatten)]
    opts: FeatureOpts,
    /// Write class colors instead of the input colors.
    #[arg(long)]
    colorize: bool,
    /// Also write per-point class probabilities (tab-separated text).
    #[arg(long)]
    probabilities: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    model: PathBuf,
    /// Labeled test cloud.
    input: PathBuf,
    #[command(flatten)]
    opts: FeatureOpts,
    /// Report file; printed to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Labeled training clouds.
    #[arg(long, required = true, num_args = 1..)]
    train: Vec<PathBuf>,
    /// Labeled test cloud.
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated feature sets to compare.
    #[arg(long, value_delimiter = ',', default_value = "g,g+cn:0.6,all")]
    sets: Vec<String>,
    /// Comma-separated classifiers to compare.
    #[arg(long, value_delimiter = ',', default_value = "rf,gbt")]
    classifiers: Vec<ModelKind>,
    #[command(flatten)]
    opts: FeatureOpts,
    #[command(flatten)]
    model: ModelOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file; printed to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn config(opts: &FeatureOpts, features: FeatureSet, model: Option<&ModelOpts>, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        gsd: opts.gsd,
        k: opts.k,
        n_levels: opts.levels,
        radii: opts.radii.clone(),
        features,
        threads: opts.threads,
        seed,
        batch_size: opts.batch,
        ..PipelineConfig::default()
    };
    if let Some(m) = model {
        cfg.classifier = m.classifier;
        cfg.per_class = m.per_class;
        cfg.train = TrainConfig {
            n_trees: m.trees,
            rf_max_depth: m.max_depth,
            gbt_max_leaves: m.max_leaves,
            gbt_learning_rate: m.learning_rate,
            ..TrainConfig::default()
        };
    }
    cfg
}

fn read(path: &Path) -> Result<PointCloud> {
    let c = cloudio::read_cloud_auto(path)?;
    info!("read {} points from {}", c.len(), path.display());
    Ok(c)
}

fn write(cloud: &PointCloud, path: &Path) -> Result<()> {
    cloudio::write_cloud(cloud, path, CloudFormat::for_output(path))?;
    info!("wrote {} points to {}", cloud.len(), path.display());
    Ok(())
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => {
            let recipe = match &a.recipe {
                Some(p) => Recipe::load(p)?,
                None => Recipe {
                    name: "town".into(),
                    cull_covered: true,
                    town: Some(TownSpec::new(a.size, a.density)),
                    primitives: Vec::new(),
                },
            };
            match &a.recipe {
                Some(p) => info!("config: recipe={} seed={}", p.display(), a.seed),
                None => info!("config: town size={} density={} seed={}", a.size, a.density, a.seed),
            }
            let cloud = synth::synth_scene(&recipe, a.seed)?;
            write(&cloud, &a.output)
        }
        Command::Split(a) => {
            let cfg = PipelineConfig {
                split_angles: a.angles,
                split_offsets: a.offsets,
                ..PipelineConfig::default()
            };
            info!("config: angles={} offsets={}", a.angles, a.offsets);
            let cloud = read(&a.input)?;
            let (r, pos, neg) = pipeline::split_cloud(&cloud, &cfg)?;
            info!(
                "plane theta={} offset={} objective={}",
                r.plane.theta, r.plane.offset, r.objective
            );
            write(&pos, &a.output[0])?;
            write(&neg, &a.output[1])
        }
        Command::Extract(a) => {
            let cfg = config(&a.opts, pipeline::parse_feature_set(&a.features, &a.opts.radii)?, None, 0);
            info!("config: {cfg}");
            let cloud = read(&a.input)?;
            let (m, timing) = pipeline::extract_features(&cloud, &cfg)?;
            featfile::write_features(&m, &a.output)?;
            info!("wrote {} x {} features to {} ({timing})", m.n_rows(), m.n_cols(), a.output.display());
            Ok(())
        }
        Command::Train(a) => {
            let cfg = config(
                &a.opts,
                pipeline::parse_feature_set(&a.features, &a.opts.radii)?,
                Some(&a.model),
                a.seed,
            );
            info!("config: {cfg}");
            let clouds = a.inputs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
            let (model, timing) = pipeline::run_train(&clouds, &cfg)?;
            modelfile::save_model(&model, &a.output)?;
            info!("saved model to {} ({timing})", a.output.display());
            Ok(())
        }
        Command::Predict(a) => {
            let model = modelfile::load_model(&a.model)?;
            let cfg = config(&a.opts, pipeline::infer_feature_set(model.feature_names())?, None, 0);
            info!("config: {cfg}");
            let cloud = read(&a.input)?;
            let out = pipeline::run_predict(&model, &cloud, &cfg, a.probabilities.is_some())?;
            info!("predicted ({})", out.timing);
            if let (Some(path), Some(p)) = (&a.probabilities, &out.probabilities) {
                write_probabilities(path, p)?;
            }
            let labeled = if a.colorize {
                cloudio::colorize(&out.cloud)?
            } else {
                out.cloud
            };
            write(&labeled, &a.output)
        }
        Command::Evaluate(a) => {
            let model = modelfile::load_model(&a.model)?;
            let cfg = config(&a.opts, pipeline::infer_feature_set(model.feature_names())?, None, 0);
            info!("config: {cfg}");
            let cloud = read(&a.input)?;
            let (cm, out) = pipeline::evaluate(&model, &cloud, &cfg)?;
            info!("overall error {:.4} ({})", cm.overall_error(), out.timing);
            let report = pipeline::evaluation_report(
                &a.model.display().to_string(),
                &a.input.display().to_string(),
                &model,
                &cfg,
                &cm,
                &out.timing,
            );
            emit(&report.to_string(), a.output.as_deref())
        }
        Command::Ablate(a) => {
            let sets = a
                .sets
                .iter()
                .map(|s| pipeline::parse_feature_set(s, &a.opts.radii))
                .collect::<Result<Vec<_>>>()?;
            let union = sets.iter().skip(1).fold(sets[0].clone(), |u, s| u.union(s));
            let cfg = config(&a.opts, union, Some(&a.model), a.seed);
            let kinds: Vec<String> = a.classifiers.iter().map(ModelKind::to_string).collect();
            info!("config: {cfg} sets={} classifiers={}", a.sets.join(","), kinds.join(","));
            let start = Instant::now();
            let train = a.train.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
            let test = read(&a.test)?;
            let rows = pipeline::ablation_run(&train, &test, &sets, &a.classifiers, &cfg)?;
            let report = pipeline::ablation_report(
                &names(&a.train),
                &a.test.display().to_string(),
                &rows,
                start.elapsed().as_secs_f64(),
            );
            emit(&report.to_string(), a.output.as_deref())
        }
    }
}

fn write_probabilities(path: &Path, p: &[f64]) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    let head: Vec<&str> = Class::ALL.iter().map(|c| c.name()).collect();
    writeln!(w, "{}", head.join("\t")).map_err(io)?;
    for row in p.chunks(Class::COUNT) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", cells.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
