//! End-to-end flows: cloud -> features -> train / predict / evaluate.

use std::fmt;
use std::time::Instant;

use log::{info, warn};
use terraclass_core::color::DEFAULT_RADII;
use terraclass_core::ensemble::{self, Dataset, Ensemble, ModelKind, TrainConfig};
use terraclass_core::evaluate::{self, ConfusionMatrix, SplitResult};
use terraclass_core::features::{FeatureParams, FeatureSet, Featurizer};
use terraclass_core::{geom, pyramid, spatial, Class, FeatureMatrix, PointCloud};

use crate::error::{Error, Result};
use crate::report::Report;

pub const DEFAULT_BATCH: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub gsd: f64,
    pub k: usize,
    pub n_levels: usize,
    /// Radii that `all` expands to.
    pub radii: Vec<f64>,
    pub features: FeatureSet,
    pub classifier: ModelKind,
    pub train: TrainConfig,
    /// Worker threads; `None` uses every logical core.
    pub threads: Option<usize>,
    pub seed: u64,
    /// Training points drawn per class and cloud.
    pub per_class: usize,
    /// Points per prediction batch.
    pub batch_size: usize,
    pub split_angles: usize,
    pub split_offsets: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gsd: pyramid::DEFAULT_GSD,
            k: geom::DEFAULT_K,
            n_levels: pyramid::DEFAULT_LEVELS,
            radii: DEFAULT_RADII.to_vec(),
            features: FeatureSet::all(),
            classifier: ModelKind::GradientBoosting,
            train: TrainConfig::default(),
            threads: None,
            seed: 0,
            per_class: evaluate::DEFAULT_PER_CLASS,
            batch_size: DEFAULT_BATCH,
            split_angles: evaluate::DEFAULT_ANGLES,
            split_offsets: evaluate::DEFAULT_OFFSETS,
        }
    }
}

/// Parses a feature set expression, expanding `all` to geometry, point
/// color and neighborhood color at each of `radii`.
pub fn parse_feature_set(spec: &str, radii: &[f64]) -> Result<FeatureSet> {
    let mut set: Option<FeatureSet> = None;
    for part in spec.split('+') {
        let s = if part.trim().eq_ignore_ascii_case("all") {
            FeatureSet {
                geometric: true,
                point_color: true,
                radii: radii.to_vec(),
            }
        } else {
            FeatureSet::parse(part).map_err(Error::Config)?
        };
        set = Some(match set {
            None => s,
            Some(a) => a.union(&s),
        });
    }
    set.ok_or_else(|| Error::Config("empty feature set".into()))
}

/// Smallest feature set whose columns include every name in `names`.
pub fn infer_feature_set(names: &[String]) -> Result<FeatureSet> {
    let mut set = FeatureSet {
        geometric: false,
        point_color: false,
        radii: Vec::new(),
    };
    for n in names {
        match n.split_once('@') {
            None if matches!(n.as_str(), "h" | "s" | "v") => set.point_color = true,
            Some((_, scale)) if scale.starts_with('s') => set.geometric = true,
            Some((_, radius)) if radius.starts_with('r') => {
                let r: f64 = radius[1..]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad radius in column `{n}`")))?;
                if !set.radii.contains(&r) {
                    set.radii.push(r);
                }
            }
            _ => return Err(Error::Config(format!("unrecognized feature column `{n}`"))),
        }
    }
    set.radii.sort_by(f64::total_cmp);
    set.point_color |= !set.radii.is_empty();
    Ok(set)
}

impl PipelineConfig {
    pub fn feature_params(&self) -> FeatureParams {
        self.feature_params_for(&self.features)
    }

    pub fn feature_params_for(&self, set: &FeatureSet) -> FeatureParams {
        FeatureParams {
            gsd: self.gsd,
            k: self.k,
            n_levels: self.n_levels,
            set: set.clone(),
        }
    }

    /// Training parameters with the pipeline seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_params().validate()?;
        self.train_config().validate()?;
        if self.batch_size == 0 || self.per_class == 0 {
            return Err(Error::Config("batch size and per-class sample size must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        Ok(())
    }

    /// Runs `f` on a pool with the configured number of threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.train;
        let radii: Vec<String> = self.radii.iter().map(f64::to_string).collect();
        write!(
            f,
            "gsd={} k={} levels={} radii={} features={} classifier={} trees={} rf_max_depth={} \
             rf_feature_fraction={} rf_bootstrap={} gbt_max_leaves={} gbt_learning_rate={} \
             gbt_bagging_fraction={} gbt_feature_fraction={} gbt_lambda={} min_samples_leaf={} \
             seed={} threads={} per_class={} batch={} angles={} offsets={}",
            self.gsd,
            self.k,
            self.n_levels,
            radii.join(","),
            self.features,
            self.classifier,
            t.n_trees,
            t.rf_max_depth,
            t.rf_feature_fraction,
            t.rf_bootstrap,
            t.gbt_max_leaves,
            t.gbt_learning_rate,
            t.gbt_bagging_fraction,
            t.gbt_feature_fraction,
            t.gbt_lambda,
            t.min_samples_leaf,
            self.seed,
            self.threads.map_or("auto".to_string(), |n| n.to_string()),
            self.per_class,
            self.batch_size,
            self.split_angles,
            self.split_offsets,
        )
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingReport {
    pub features_s: f64,
    pub train_s: f64,
    pub predict_s: f64,
    pub points: usize,
    pub rows: usize,
    pub threads: usize,
}

impl TimingReport {
    pub fn total(&self) -> f64 {
        self.features_s + self.train_s + self.predict_s
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "features {:.3}s, train {:.3}s, predict {:.3}s, total {:.3}s ({} points, {} rows, {} threads)",
            self.features_s,
            self.train_s,
            self.predict_s,
            self.total(),
            self.points,
            self.rows,
            self.threads
        )
    }
}

fn threads_used(cfg: &PipelineConfig) -> usize {
    cfg.install(rayon::current_num_threads).unwrap_or(1)
}

/// Feature rows of every point of `cloud`.
pub fn extract_features(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<(FeatureMatrix, TimingReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let m = cfg.install(|| Featurizer::new(cloud, cfg.feature_params())?.extract_all())??;
    let timing = TimingReport {
        features_s: start.elapsed().as_secs_f64(),
        points: cloud.len(),
        rows: m.n_rows(),
        threads: threads_used(cfg),
        ..TimingReport::default()
    };
    Ok((m, timing))
}

/// Balanced sample of every training cloud, featurized with `set`, with
/// class ids as labels.
pub fn training_data(clouds: &[PointCloud], set: &FeatureSet, cfg: &PipelineConfig) -> Result<(FeatureMatrix, Vec<u8>)> {
    let params = cfg.feature_params_for(set);
    params.validate()?;
    let mut parts = Vec::with_capacity(clouds.len());
    let mut labels = Vec::new();
    for (i, cloud) in clouds.iter().enumerate() {
        if !cloud.has_labels() {
            return Err(terraclass_core::Error::MissingLabels.into());
        }
        let sample = evaluate::balanced_sample(cloud, cfg.per_class, cfg.seed.wrapping_add(i as u64))?;
        for (class, n) in &sample.short {
            warn!("training cloud {i}: class {class} has only {n} points (wanted {})", cfg.per_class);
        }
        let featurizer = cfg.install(|| Featurizer::new(cloud, params.clone()))??;
        parts.push(cfg.install(|| featurizer.extract(&sample.indices))??);
        labels.extend(sample.indices.iter().map(|&j| cloud.points()[j].label.expect("sampled points are labeled").id()));
    }
    Ok((FeatureMatrix::concat_rows(&parts)?, labels))
}

pub fn run_train(clouds: &[PointCloud], cfg: &PipelineConfig) -> Result<(Ensemble, TimingReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let (x, y) = training_data(clouds, &cfg.features, cfg)?;
    let features_s = start.elapsed().as_secs_f64();
    info!("training on {} rows x {} columns", x.n_rows(), x.n_cols());
    let start = Instant::now();
    let data = Dataset {
        features: &x,
        labels: &y,
        n_classes: Class::COUNT,
    };
    let model = cfg.install(|| ensemble::train(cfg.classifier, data, &cfg.train_config()))??;
    let timing = TimingReport {
        features_s,
        train_s: start.elapsed().as_secs_f64(),
        points: clouds.iter().map(PointCloud::len).sum(),
        rows: x.n_rows(),
        threads: threads_used(cfg),
        ..TimingReport::default()
    };
    Ok((model, timing))
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    /// The input cloud with every point labeled by its argmax class.
    pub cloud: PointCloud,
    /// Row-major class probabilities, when requested.
    pub probabilities: Option<Vec<f64>>,
    pub timing: TimingReport,
}

/// Labels every point of `cloud`. Features are computed in batches of
/// `cfg.batch_size` points; the model's columns are looked up by name
/// among those of `cfg`'s feature set.
pub fn run_predict(model: &Ensemble, cloud: &PointCloud, cfg: &PipelineConfig, keep_probabilities: bool) -> Result<PredictOutput> {
    let mut probs = keep_probabilities.then(Vec::new);
    let mut labels = vec![Class::Ground; cloud.len()];
    let timing = predict_batched(&[model], cloud, cfg, |_, ids, batch| {
        if let Some(p) = probs.as_mut() {
            let k = model.n_classes();
            p.resize(cloud.len() * k, 0.0);
            for (j, &id) in ids.iter().enumerate() {
                p[id * k..(id + 1) * k].copy_from_slice(batch.row(j));
            }
        }
        for (&id, &l) in ids.iter().zip(&batch.labels) {
            labels[id] = Class::ALL[l as usize];
        }
    })?;
    let out = cloud.clone().with_labels(&labels)?;
    Ok(PredictOutput {
        cloud: out,
        probabilities: probs,
        timing,
    })
}

/// Streams `cloud` through every model batch by batch, computing each
/// batch's features once for all of them.
fn predict_batched<F>(models: &[&Ensemble], cloud: &PointCloud, cfg: &PipelineConfig, mut sink: F) -> Result<TimingReport>
where
    F: FnMut(usize, &[usize], ensemble::Prediction),
{
    cfg.validate()?;
    let available = cfg.feature_params().column_names();
    for m in models {
        let missing: Vec<String> = m.feature_names().iter().filter(|n| !available.contains(n)).cloned().collect();
        if !missing.is_empty() {
            return Err(terraclass_core::Error::ColumnMismatch {
                missing,
                unexpected: Vec::new(),
            }
            .into());
        }
    }
    let mut timing = TimingReport {
        points: cloud.len(),
        rows: cloud.len(),
        threads: threads_used(cfg),
        ..TimingReport::default()
    };
    let start = Instant::now();
    let featurizer = cfg.install(|| Featurizer::new(cloud, cfg.feature_params()))??;
    timing.features_s += start.elapsed().as_secs_f64();
    // spatially coherent batches; results are scattered back by id
    let ids = spatial::morton_order(&cloud.positions());
    for chunk in ids.chunks(cfg.batch_size) {
        let start = Instant::now();
        let x = cfg.install(|| featurizer.extract(chunk))??;
        timing.features_s += start.elapsed().as_secs_f64();
        let start = Instant::now();
        for (i, m) in models.iter().enumerate() {
            let cols = x.select_columns(m.feature_names())?;
            sink(i, chunk, cfg.install(|| m.predict(&cols))??);
        }
        timing.predict_s += start.elapsed().as_secs_f64();
    }
    Ok(timing)
}

fn confusion_of(truth: &PointCloud, labels: impl Iterator<Item = Class>) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(
        truth
            .points()
            .iter()
            .zip(labels)
            .filter_map(|(p, pred)| p.label.map(|t| (t, pred))),
    )
}

/// Predicts a labeled cloud and compares against its labels; unlabeled
/// points are predicted but not scored.
pub fn evaluate(model: &Ensemble, cloud: &PointCloud, cfg: &PipelineConfig) -> Result<(ConfusionMatrix, PredictOutput)> {
    if !cloud.has_labels() {
        return Err(terraclass_core::Error::MissingLabels.into());
    }
    let out = run_predict(model, cloud, cfg, false)?;
    let cm = confusion_of(cloud, out.cloud.points().iter().map(|p| p.label.expect("predicted")));
    Ok((cm, out))
}

/// Splits a labeled cloud along the best vertical plane; returns the
/// plane and the positive and negative sides.
pub fn split_cloud(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<(SplitResult, PointCloud, PointCloud)> {
    let r = cfg.install(|| evaluate::find_split_plane(cloud, cfg.split_angles, cfg.split_offsets))??;
    let (pos, neg) = evaluate::split_indices(cloud, &r.plane);
    Ok((r, cloud.select(&pos), cloud.select(&neg)))
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub features: FeatureSet,
    pub classifier: ModelKind,
    pub confusion: ConfusionMatrix,
    pub train_s: f64,
}

/// Trains one model per (feature set, classifier) pair on the pooled
/// training clouds and scores each on `test`. Features are computed once
/// for the union of all sets and sliced by column name.
pub fn ablation_run(
    train: &[PointCloud],
    test: &PointCloud,
    sets: &[FeatureSet],
    classifiers: &[ModelKind],
    cfg: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    if sets.is_empty() || classifiers.is_empty() {
        return Err(Error::Config("ablation needs at least one feature set and one classifier".into()));
    }
    if !test.has_labels() {
        return Err(terraclass_core::Error::MissingLabels.into());
    }
    let union = sets.iter().skip(1).fold(sets[0].clone(), |a, s| a.union(s));
    let ucfg = PipelineConfig {
        features: union.clone(),
        ..cfg.clone()
    };
    ucfg.validate()?;
    let (x, y) = training_data(train, &union, &ucfg)?;
    let mut models = Vec::new();
    let mut rows = Vec::new();
    for set in sets {
        let names = set.column_names(cfg.n_levels);
        let xs = x.select_columns(&names)?;
        for &kind in classifiers {
            let start = Instant::now();
            let data = Dataset {
                features: &xs,
                labels: &y,
                n_classes: Class::COUNT,
            };
            let model = ucfg.install(|| ensemble::train(kind, data, &ucfg.train_config()))??;
            let train_s = start.elapsed().as_secs_f64();
            info!("trained {kind} on {set} in {train_s:.2}s");
            models.push(model);
            rows.push(AblationRow {
                features: set.clone(),
                classifier: kind,
                confusion: ConfusionMatrix::default(),
                train_s,
            });
        }
    }
    let refs: Vec<&Ensemble> = models.iter().collect();
    let truth = test.points();
    predict_batched(&refs, test, &ucfg, |i, ids, batch| {
        for (&id, &l) in ids.iter().zip(&batch.labels) {
            if let Some(t) = truth[id].label {
                rows[i].confusion.counts[t.index()][l as usize] += 1;
            }
        }
    })?;
    Ok(rows)
}

/// Report of an ablation: one row per (feature set, classifier).
pub fn ablation_report(train_sets: &[String], test_set: &str, rows: &[AblationRow], wall_time_s: f64) -> Report {
    let mut r = Report::default();
    r.set("train_sets", train_sets.join(", "));
    r.set("test_set", test_set);
    r.set("wall_time_s", wall_time_s);
    r.columns = ["feature_set", "classifier", "overall_error", "train_s"]
        .into_iter()
        .map(String::from)
        .chain(Class::ALL.iter().map(|c| format!("error_{}", c.name())))
        .collect();
    for row in rows {
        let mut cells = vec![
            row.features.to_string(),
            row.classifier.to_string(),
            row.confusion.overall_error().to_string(),
            format!("{:.3}", row.train_s),
        ];
        cells.extend(Class::ALL.iter().map(|&c| row.confusion.class_error(c).to_string()));
        r.push_row(cells);
    }
    r
}

/// Report of one evaluation run.
pub fn evaluation_report(
    model_path: &str,
    test_set: &str,
    model: &Ensemble,
    cfg: &PipelineConfig,
    cm: &ConfusionMatrix,
    timing: &TimingReport,
) -> Report {
    let mut r = Report::confusion(cm);
    let mut head = vec![
        ("model".to_string(), model_path.to_string()),
        ("test_set".to_string(), test_set.to_string()),
        ("feature_set".to_string(), cfg.features.to_string()),
        ("classifier".to_string(), model.kind().to_string()),
    ];
    head.append(&mut r.header);
    r.header = head;
    r.set("wall_time_s", timing.total());
    r
}
