//! Direct and indirect net-load forecasting pipelines.
//!
//! Both pipelines share the same preparation: derive wind, solar and net load
//! from the dataset, split 80/10/10 chronologically, z-score the five input
//! features with training-partition statistics and cut sliding windows inside
//! each partition. The direct pipeline trains one network on the net load; the
//! indirect pipeline trains three (per-unit demand, fleet wind power, fleet solar
//! power) and recombines their test predictions.

use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{s, Array2, Array3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    compute_stats, make_windows, normalize, split_dataset, DataError, FeatureStats, SplitIndices, SplitRatios,
    YearDataset,
};
use crate::metrics::{compute_metrics, HistogramBin, MetricsError, MetricsOptions, MetricsReport};
use crate::netload::{compose_net_load, derive_series, DerivedSeries, NetLoadError, PlantCounts};
use crate::nn::{self, AdamConfig, Hyper, LstmModel, ModelShape, NnError, SampleSet, TrainConfig, TrainRecord};
use crate::solar::{AirProperties, PvArraySpec};
use crate::wind::TurbineSpec;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    NetLoad(#[from] NetLoadError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("reports were computed on different test partitions")]
    PartitionMismatch,
    #[error("non-finite prediction in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Direct,
    Indirect,
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Indirect => "indirect",
        })
    }
}

impl std::str::FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Self::Direct),
            "indirect" => Ok(Self::Indirect),
            other => Err(format!("unknown approach {other:?} (expected direct or indirect)")),
        }
    }
}

/// Physical plant: turbine, PV module and air models plus unit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant<T> {
    pub turbine: TurbineSpec<T>,
    pub pv: PvArraySpec<T>,
    pub air: AirProperties<T>,
    pub counts: PlantCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub approach: Approach,
    pub window: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Root seed; initialization, shuffling and dropout streams derive from it.
    pub seed: u64,
    /// Early-stopping patience of the direct model (`None`: all epochs).
    pub direct_patience: Option<usize>,
    /// Early-stopping patience of each indirect sub-model.
    pub indirect_patience: Option<usize>,
    pub split: SplitRatios,
    pub model: ModelShape,
    pub hyper: Hyper,
    pub adam: AdamConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            approach: Approach::Direct,
            window: 24,
            horizon: 1,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            direct_patience: None,
            indirect_patience: Some(10),
            split: SplitRatios::default(),
            model: ModelShape::default(),
            hyper: Hyper::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.window == 0 {
            return Err(ForecastError::Config("window must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(ForecastError::Config("horizon must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ForecastError::Config("batch_size must be at least 1".into()));
        }
        if self.model.n_features != crate::data::N_FEATURES {
            return Err(ForecastError::Config(format!(
                "model.n_features must be {} (the input feature count)",
                crate::data::N_FEATURES
            )));
        }
        self.model.validate()?;
        self.hyper.validate()?;
        self.adam.validate()?;
        Ok(())
    }
}

/// Independent random streams derived from the root seed.
pub mod seed_stream {
    pub const DIRECT_INIT: u64 = 1;
    pub const DIRECT_TRAIN: u64 = 2;
    pub const DEMAND_INIT: u64 = 3;
    pub const DEMAND_TRAIN: u64 = 4;
    pub const WIND_INIT: u64 = 5;
    pub const WIND_TRAIN: u64 = 6;
    pub const SOLAR_INIT: u64 = 7;
    pub const SOLAR_TRAIN: u64 = 8;
}

/// Seed for stream `purpose` of the generator rooted at `root`.
pub fn sub_seed(root: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(purpose);
    rng.next_u64()
}

/// One trained network and the statistics that map its output back to physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster<T> {
    pub model: LstmModel<T>,
    pub label_stats: FeatureStats<T>,
}

impl<T: Scalar> Forecaster<T> {
    /// Predictions in physical units for normalized windows.
    pub fn predict(&self, inputs: ndarray::ArrayView3<'_, T>) -> Result<Vec<T>, NnError> {
        Ok(nn::predict(&self.model, inputs)?
            .into_iter()
            .map(|z| self.label_stats.denormalize_value(0, z))
            .collect())
    }
}

/// Trained direct pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectModel<T> {
    pub feature_stats: FeatureStats<T>,
    pub window: usize,
    pub horizon: usize,
    pub net_load: Forecaster<T>,
}

/// Trained indirect pipeline: three forecasters over the same inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct IndirectBundle<T> {
    pub feature_stats: FeatureStats<T>,
    pub window: usize,
    pub horizon: usize,
    pub counts: PlantCounts,
    /// Per-unit demand, kW.
    pub demand: Forecaster<T>,
    /// Fleet wind power, W.
    pub wind: Forecaster<T>,
    /// Fleet solar power, W.
    pub solar: Forecaster<T>,
}

/// Either trained pipeline, as stored in a snapshot.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // one value per process; boxing buys nothing
pub enum TrainedPipeline<T> {
    Direct(DirectModel<T>),
    Indirect(IndirectBundle<T>),
}

/// Predictions over every full window of an input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePrediction<T> {
    /// Input row each prediction targets (`i + window + horizon − 1`).
    pub rows: Vec<usize>,
    pub timestamps: Vec<(u16, u8)>,
    pub net_load_kw: Vec<T>,
    /// `(demand per unit kW, wind W, solar W)` for the indirect pipeline.
    pub components: Option<(Vec<T>, Vec<T>, Vec<T>)>,
}

impl<T: Scalar> TrainedPipeline<T> {
    pub fn approach(&self) -> Approach {
        match self {
            Self::Direct(_) => Approach::Direct,
            Self::Indirect(_) => Approach::Indirect,
        }
    }

    fn geometry(&self) -> (&FeatureStats<T>, usize, usize) {
        match self {
            Self::Direct(d) => (&d.feature_stats, d.window, d.horizon),
            Self::Indirect(b) => (&b.feature_stats, b.window, b.horizon),
        }
    }

    /// Forecasts the net load for every window of `dataset`, normalizing with
    /// the stored training statistics.
    pub fn predict(&self, dataset: &YearDataset<T>) -> Result<PipelinePrediction<T>, ForecastError> {
        let (stats, window, horizon) = self.geometry();
        let features = normalize(dataset.feature_matrix().view(), stats)?;
        let dummy = vec![T::zero(); dataset.len()];
        let w = make_windows(features.view(), &dummy, window, horizon)?;
        let ts = dataset.timestamps();
        let timestamps = w.label_rows.iter().map(|&r| ts[r]).collect();
        let (net_load_kw, components) = match self {
            Self::Direct(d) => (d.net_load.predict(w.inputs.view())?, None),
            Self::Indirect(b) => {
                let demand = b.demand.predict(w.inputs.view())?;
                let wind = b.wind.predict(w.inputs.view())?;
                let solar = b.solar.predict(w.inputs.view())?;
                let net = compose_net_load(&demand, &wind, &solar, &b.counts)?;
                (net, Some((demand, wind, solar)))
            }
        };
        Ok(PipelinePrediction {
            rows: w.label_rows,
            timestamps,
            net_load_kw,
            components,
        })
    }
}

/// Shared preparation of both pipelines.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub split: SplitIndices,
    pub feature_stats: FeatureStats<T>,
    /// Normalized `n × 5` feature matrix.
    pub features: Array2<T>,
    pub derived: DerivedSeries<T>,
}

pub fn prepare<T: Scalar>(
    dataset: &YearDataset<T>,
    plant: &Plant<T>,
    config: &PipelineConfig,
) -> Result<Prepared<T>, ForecastError> {
    config.validate()?;
    let derived = derive_series(dataset, &plant.turbine, &plant.pv, &plant.air, &plant.counts)?;
    let split = split_dataset(dataset.len(), config.split)?;
    let raw = dataset.feature_matrix();
    let feature_stats = compute_stats(raw.view(), split.train.clone())?;
    let features = normalize(raw.view(), &feature_stats)?;
    Ok(Prepared {
        split,
        feature_stats,
        features,
        derived,
    })
}

/// Windows of one partition with absolute label rows.
struct PartitionWindows<T> {
    inputs: Array3<T>,
    labels: Vec<T>,
    rows: Vec<usize>,
}

fn partition_windows<T: Scalar>(
    features: &Array2<T>,
    labels_z: &[T],
    range: Range<usize>,
    config: &PipelineConfig,
) -> Result<PartitionWindows<T>, ForecastError> {
    let w = make_windows(
        features.slice(s![range.clone(), ..]),
        &labels_z[range.clone()],
        config.window,
        config.horizon,
    )?;
    Ok(PartitionWindows {
        inputs: w.inputs,
        labels: w.labels,
        rows: w.label_rows.into_iter().map(|r| r + range.start).collect(),
    })
}

/// Callback receiving `(component name, epoch record)` during training.
pub type Progress<'a> = &'a (dyn Fn(&str, &TrainRecord) + Sync);

/// Result of training one forecaster on one label series.
#[derive(Debug, Clone)]
struct Trained<T> {
    forecaster: Forecaster<T>,
    records: Vec<TrainRecord>,
    /// Test-partition predictions in physical units.
    test_pred: Vec<T>,
    test_rows: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn train_component<T: Scalar>(
    name: &str,
    prep: &Prepared<T>,
    labels: &[T],
    config: &PipelineConfig,
    init_seed: u64,
    train_seed: u64,
    patience: Option<usize>,
    progress: Progress<'_>,
) -> Result<Trained<T>, ForecastError> {
    let label_stats = FeatureStats::of_series(&labels[prep.split.train.clone()]);
    let z: Vec<T> = labels.iter().map(|&y| label_stats.normalize_value(0, y)).collect();
    let train = partition_windows(&prep.features, &z, prep.split.train.clone(), config)?;
    let val = partition_windows(&prep.features, &z, prep.split.validation.clone(), config)?;
    let test = partition_windows(&prep.features, &z, prep.split.test.clone(), config)?;

    let mut model = LstmModel::new(config.model, config.hyper, &mut ChaCha8Rng::seed_from_u64(init_seed));
    let train_cfg = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: train_seed,
        early_stop_patience: patience,
        adam: config.adam,
    };
    let records = nn::train_epochs_with(
        &mut model,
        SampleSet::new(train.inputs.view(), &train.labels)?,
        SampleSet::new(val.inputs.view(), &val.labels)?,
        &train_cfg,
        |r| progress(name, r),
    )?;
    let forecaster = Forecaster { model, label_stats };
    let test_pred = forecaster.predict(test.inputs.view())?;
    if test_pred.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite(name.to_string()));
    }
    Ok(Trained {
        forecaster,
        records,
        test_pred,
        test_rows: test.rows,
    })
}

/// Training history and test accuracy of one forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ComponentReport<T> {
    pub name: String,
    pub unit: String,
    pub label_stats: FeatureStats<T>,
    pub loss_curve: Vec<TrainRecord>,
    pub actual: Vec<T>,
    pub predicted: Vec<T>,
    pub metrics: MetricsReport<T>,
}

/// Test-partition evaluation of one pipeline. Contains no timing information,
/// so identical inputs and seed give identical serialized reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ForecastReport<T> {
    pub approach: Approach,
    pub seed: u64,
    pub window: usize,
    pub horizon: usize,
    pub epochs: usize,
    /// Train / validation / test partition sizes in rows.
    pub split_sizes: [usize; 3],
    pub feature_stats: FeatureStats<T>,
    /// Dataset rows of the test labels.
    pub test_rows: Vec<usize>,
    pub timestamps: Vec<(u16, u8)>,
    /// Net load, kW.
    pub actual: Vec<T>,
    pub predicted: Vec<T>,
    pub metrics: MetricsReport<T>,
    /// Direct: the net-load model. Indirect: demand, wind and solar models.
    pub components: Vec<ComponentReport<T>>,
}

fn component_report<T: Scalar>(
    name: &str,
    unit: &str,
    trained: &Trained<T>,
    labels: &[T],
    metrics: &MetricsOptions,
) -> Result<ComponentReport<T>, ForecastError> {
    let actual: Vec<T> = trained.test_rows.iter().map(|&r| labels[r]).collect();
    Ok(ComponentReport {
        name: name.to_string(),
        unit: unit.to_string(),
        label_stats: trained.forecaster.label_stats.clone(),
        loss_curve: trained.records.clone(),
        metrics: compute_metrics(&trained.test_pred, &actual, metrics)?,
        actual,
        predicted: trained.test_pred.clone(),
    })
}

fn base_report<T: Scalar>(
    approach: Approach,
    prep: &Prepared<T>,
    config: &PipelineConfig,
    test_rows: Vec<usize>,
    predicted: Vec<T>,
    metrics: &MetricsOptions,
    components: Vec<ComponentReport<T>>,
) -> Result<ForecastReport<T>, ForecastError> {
    let actual: Vec<T> = test_rows.iter().map(|&r| prep.derived.net_load_kw[r]).collect();
    let timestamps = test_rows.iter().map(|&r| prep.derived.timestamps[r]).collect();
    Ok(ForecastReport {
        approach,
        seed: config.seed,
        window: config.window,
        horizon: config.horizon,
        epochs: config.epochs,
        split_sizes: prep.split.sizes(),
        feature_stats: prep.feature_stats.clone(),
        metrics: compute_metrics(&predicted, &actual, metrics)?,
        test_rows,
        timestamps,
        actual,
        predicted,
        components,
    })
}

/// Trains one network on the derived net load and evaluates it on the test partition.
pub fn run_direct<T: Scalar>(
    dataset: &YearDataset<T>,
    plant: &Plant<T>,
    config: &PipelineConfig,
    metrics: &MetricsOptions,
) -> Result<(DirectModel<T>, ForecastReport<T>), ForecastError> {
    run_direct_with(dataset, plant, config, metrics, &|_, _| {})
}

pub fn run_direct_with<T: Scalar>(
    dataset: &YearDataset<T>,
    plant: &Plant<T>,
    config: &PipelineConfig,
    metrics: &MetricsOptions,
    progress: Progress<'_>,
) -> Result<(DirectModel<T>, ForecastReport<T>), ForecastError> {
    metrics.validate()?;
    let prep = prepare(dataset, plant, config)?;
    let labels = &prep.derived.net_load_kw;
    let trained = train_component(
        "net_load",
        &prep,
        labels,
        config,
        sub_seed(config.seed, seed_stream::DIRECT_INIT),
        sub_seed(config.seed, seed_stream::DIRECT_TRAIN),
        config.direct_patience,
        progress,
    )?;
    let component = component_report("net_load", "kW", &trained, labels, metrics)?;
    let report = base_report(
        Approach::Direct,
        &prep,
        config,
        trained.test_rows.clone(),
        trained.test_pred.clone(),
        metrics,
        vec![component],
    )?;
    let model = DirectModel {
        feature_stats: prep.feature_stats,
        window: config.window,
        horizon: config.horizon,
        net_load: trained.forecaster,
    };
    Ok((model, report))
}

/// Trains demand, wind and solar networks (concurrently) and recombines their
/// test predictions into a net-load forecast.
pub fn run_indirect<T: Scalar>(
    dataset: &YearDataset<T>,
    plant: &Plant<T>,
    config: &PipelineConfig,
    metrics: &MetricsOptions,
) -> Result<(IndirectBundle<T>, ForecastReport<T>), ForecastError> {
    run_indirect_with(dataset, plant, config, metrics, &|_, _| {})
}

pub fn run_indirect_with<T: Scalar>(
    dataset: &YearDataset<T>,
    plant: &Plant<T>,
    config: &PipelineConfig,
    metrics: &MetricsOptions,
    progress: Progress<'_>,
) -> Result<(IndirectBundle<T>, ForecastReport<T>), ForecastError> {
    metrics.validate()?;
    let prep = prepare(dataset, plant, config)?;
    let d = &prep.derived;
    let root = config.seed;
    let patience = config.indirect_patience;
    let job = |name: &str, labels: &[T], init: u64, train: u64| {
        train_component(
            name,
            &prep,
            labels,
            config,
            sub_seed(root, init),
            sub_seed(root, train),
            patience,
            progress,
        )
    };
    let (demand, (wind, solar)) = rayon::join(
        || job("demand", &d.demand_unit_kw, seed_stream::DEMAND_INIT, seed_stream::DEMAND_TRAIN),
        || {
            rayon::join(
                || job("wind", &d.wind_w, seed_stream::WIND_INIT, seed_stream::WIND_TRAIN),
                || job("solar", &d.solar_w, seed_stream::SOLAR_INIT, seed_stream::SOLAR_TRAIN),
            )
        },
    );
    let (demand, wind, solar) = (demand?, wind?, solar?);
    let predicted = compose_net_load(&demand.test_pred, &wind.test_pred, &solar.test_pred, &plant.counts)?;
    let components = vec![
        component_report("demand", "kW per unit", &demand, &d.demand_unit_kw, metrics)?,
        component_report("wind", "W", &wind, &d.wind_w, metrics)?,
        component_report("solar", "W", &solar, &d.solar_w, metrics)?,
    ];
    let report = base_report(
        Approach::Indirect,
        &prep,
        config,
        demand.test_rows.clone(),
        predicted,
        metrics,
        components,
    )?;
    let bundle = IndirectBundle {
        feature_stats: prep.feature_stats,
        window: config.window,
        horizon: config.horizon,
        counts: plant.counts,
        demand: demand.forecaster,
        wind: wind.forecaster,
        solar: solar.forecaster,
    };
    Ok((bundle, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    Direct,
    Indirect,
    Tie,
}

/// Lower value wins.
pub fn winner_lower(direct: f64, indirect: f64) -> Winner {
    if direct < indirect {
        Winner::Direct
    } else if indirect < direct {
        Winner::Indirect
    } else {
        Winner::Tie
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub direct: Option<f64>,
    pub indirect: Option<f64>,
    /// `indirect − direct`.
    pub delta: Option<f64>,
    pub winner: Option<Winner>,
}

/// A column of the published comparison table, kept as printed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub approach: String,
    pub mae: String,
    pub mse: String,
    pub rmse: String,
    pub nrmse: String,
    /// Share of predictions within 20% error.
    pub within_20pct: String,
}

/// Published direct/indirect results on the original (unbundled) data, for context.
pub fn paper_reference() -> Vec<ReferenceRow> {
    vec![
        ReferenceRow {
            approach: "direct".into(),
            mae: "9.48166".into(),
            mse: "153.59356".into(),
            rmse: "12.39329".into(),
            nrmse: "0.09642".into(),
            within_20pct: "0.50".into(),
        },
        ReferenceRow {
            approach: "indirect".into(),
            mae: "9.41341".into(),
            mse: "147.63212".into(),
            rmse: "12.15040".into(),
            nrmse: "0.09453".into(),
            within_20pct: "0.75".into(),
        },
    ]
}

/// Side-by-side test metrics of the two approaches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub n_test: usize,
    pub normalizer: f64,
    pub pct_floor: f64,
    pub rows: Vec<ComparisonRow>,
    pub tolerance_pct: f64,
    pub direct_histogram: Vec<HistogramBin>,
    pub indirect_histogram: Vec<HistogramBin>,
    pub reference_source: String,
    pub reference: Vec<ReferenceRow>,
}

fn row(metric: &str, direct: Option<f64>, indirect: Option<f64>, lower_is_better: bool) -> ComparisonRow {
    let (delta, winner) = match (direct, indirect) {
        (Some(d), Some(i)) => {
            let w = if lower_is_better { winner_lower(d, i) } else { winner_lower(-d, -i) };
            (Some(i - d), Some(w))
        }
        _ => (None, None),
    };
    ComparisonRow {
        metric: metric.to_string(),
        direct,
        indirect,
        delta,
        winner,
    }
}

pub fn compare_approaches<T: Scalar>(
    direct: &ForecastReport<T>,
    indirect: &ForecastReport<T>,
) -> Result<ComparisonTable, ForecastError> {
    if direct.test_rows != indirect.test_rows || direct.actual != indirect.actual {
        return Err(ForecastError::PartitionMismatch);
    }
    let (d, i) = (&direct.metrics, &indirect.metrics);
    let f = |x: T| x.as_f64();
    let rows = vec![
        row("mae", Some(f(d.mae)), Some(f(i.mae)), true),
        row("mse", Some(f(d.mse)), Some(f(i.mse)), true),
        row("rmse", Some(f(d.rmse)), Some(f(i.rmse)), true),
        row("nrmse", d.nrmse.map(f), i.nrmse.map(f), true),
        row(
            "tolerance_fraction",
            Some(f(d.tolerance_fraction)),
            Some(f(i.tolerance_fraction)),
            false,
        ),
    ];
    Ok(ComparisonTable {
        n_test: d.n,
        normalizer: f(d.normalizer),
        pct_floor: f(d.pct_floor),
        rows,
        tolerance_pct: d.tolerance_pct,
        direct_histogram: d.histogram.clone(),
        indirect_histogram: i.histogram.clone(),
        reference_source: "published results of the original study (external datasets)".into(),
        reference: paper_reference(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    /// `metric,direct,indirect,delta,winner` followed by the reference rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,direct,indirect,delta,winner\n");
        for r in &self.rows {
            let winner = match r.winner {
                Some(Winner::Direct) => "direct",
                Some(Winner::Indirect) => "indirect",
                Some(Winner::Tie) => "tie",
                None => "",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.metric,
                fmt_opt(r.direct),
                fmt_opt(r.indirect),
                fmt_opt(r.delta),
                winner
            );
        }
        let d = &self.reference[0];
        let i = &self.reference[1];
        for (name, a, b) in [
            ("reference_mae", &d.mae, &i.mae),
            ("reference_mse", &d.mse, &i.mse),
            ("reference_rmse", &d.rmse, &i.rmse),
            ("reference_nrmse", &d.nrmse, &i.nrmse),
            ("reference_within_20pct", &d.within_20pct, &i.within_20pct),
        ] {
            let _ = writeln!(out, "{name},{a},{b},,");
        }
        out
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "test samples: {}   nRMSE normalizer: {:.5} kW   tolerance: {}%\n",
            self.n_test, self.normalizer, self.tolerance_pct
        );
        let _ = writeln!(out, "{:<20}{:>14}{:>14}{:>14}  winner", "metric", "direct", "indirect", "delta");
        for r in &self.rows {
            let cell = |v: Option<f64>| v.map(|x| format!("{x:.5}")).unwrap_or_else(|| "n/a".into());
            let winner = match r.winner {
                Some(Winner::Direct) => "direct",
                Some(Winner::Indirect) => "indirect",
                Some(Winner::Tie) => "tie",
                None => "-",
            };
            let _ = writeln!(
                out,
                "{:<20}{:>14}{:>14}{:>14}  {winner}",
                r.metric,
                cell(r.direct),
                cell(r.indirect),
                cell(r.delta)
            );
        }
        let _ = writeln!(out, "reference, {}:", self.reference_source);
        for r in &self.reference {
            let _ = writeln!(
                out,
                "  {:<9} MAE {}  MSE {}  RMSE {}  nRMSE {}  within 20%: {}",
                r.approach, r.mae, r.mse, r.rmse, r.nrmse, r.within_20pct
            );
        }
        out
    }
}

/// `day,hour,actual_kW,predicted_kW` for the test partition.
pub fn predictions_csv<T: Scalar>(report: &ForecastReport<T>) -> String {
    let mut out = String::from("day,hour,actual_kW,predicted_kW\n");
    for ((&(day, hour), a), p) in report.timestamps.iter().zip(&report.actual).zip(&report.predicted) {
        let _ = writeln!(out, "{day},{hour},{a},{p}");
    }
    out
}

/// `day,hour,actual,predicted` for one component in its own unit.
pub fn component_predictions_csv<T: Scalar>(report: &ForecastReport<T>, component: &ComponentReport<T>) -> String {
    let mut out = String::from("day,hour,actual,predicted\n");
    for ((&(day, hour), a), p) in report.timestamps.iter().zip(&component.actual).zip(&component.predicted) {
        let _ = writeln!(out, "{day},{hour},{a},{p}");
    }
    out
}

/// `epoch,train_loss,val_loss`, one row per epoch.
pub fn loss_curve_csv(records: &[TrainRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_year, SynthParams, WeatherRecord};
    use rand::Rng;

    pub(crate) fn plant() -> Plant<f64> {
        Plant {
            turbine: TurbineSpec::new(5.6, 0.35, 1.225, 3.0, 11.0, 25.0).unwrap(),
            pv: PvArraySpec {
                rated_power: 430.0,
                ref_irradiance: 1000.0,
                ref_cell_temp: 298.15,
                gamma_ref: 0.0035,
                surface_area: 2.0,
                absorptivity: 0.9,
                emissivity_cell: 0.9,
                emissivity_ambient: 0.9,
                characteristic_length: 1.0,
            },
            air: AirProperties::standard(),
            counts: PlantCounts::default(),
        }
    }

    fn quick() -> PipelineConfig {
        PipelineConfig {
            window: 6,
            epochs: 1,
            batch_size: 64,
            model: ModelShape {
                n_features: 5,
                lstm_hidden: [4, 4, 4],
                dense_hidden: 3,
            },
            ..PipelineConfig::default()
        }
    }

    /// First `days` days of a synthetic year.
    fn short_year(days: u16, seed: u64) -> YearDataset<f64> {
        let full = generate_synthetic_year::<f64>(seed, &SynthParams::default());
        let recs: Vec<WeatherRecord<f64>> = full.into_records().into_iter().filter(|r| r.day <= days).collect();
        YearDataset::from_contiguous(recs, false).unwrap()
    }

    #[test]
    fn sub_seeds_differ_and_repeat() {
        assert_eq!(sub_seed(0, 1), sub_seed(0, 1));
        assert_ne!(sub_seed(0, 1), sub_seed(0, 2));
        assert_ne!(sub_seed(0, 1), sub_seed(1, 1));
    }

    #[test]
    fn zero_epoch_direct_report() {
        let ds = short_year(20, 0);
        let cfg = PipelineConfig { epochs: 0, ..quick() };
        let (_, report) = run_direct(&ds, &plant(), &cfg, &MetricsOptions::default()).unwrap();
        assert_eq!(report.split_sizes, [384, 48, 48]);
        assert_eq!(report.actual.len(), 48 - 6);
        assert!(report.predicted.iter().all(|p| p.is_finite()));
        assert!(report.components[0].loss_curve.is_empty());
        assert_eq!(report.test_rows[0], 384 + 48 + 6);
    }

    #[test]
    fn direct_labels_equal_composed_indirect_labels() {
        let ds = short_year(10, 1);
        let prep = prepare(&ds, &plant(), &quick()).unwrap();
        let d = &prep.derived;
        let composed = compose_net_load(&d.demand_unit_kw, &d.wind_w, &d.solar_w, &plant().counts).unwrap();
        assert_eq!(composed, d.net_load_kw);
    }

    #[test]
    fn runs_are_deterministic() {
        let ds = short_year(15, 2);
        let cfg = PipelineConfig { epochs: 2, ..quick() };
        let m = MetricsOptions::default();
        let (b1, r1) = run_indirect(&ds, &plant(), &cfg, &m).unwrap();
        let (b2, r2) = run_indirect(&ds, &plant(), &cfg, &m).unwrap();
        assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
        assert_eq!(b1.wind.model.params(), b2.wind.model.params());
    }

    #[test]
    fn test_partition_does_not_leak_into_training() {
        let ds = short_year(20, 3);
        let split = split_dataset(ds.len(), SplitRatios::default()).unwrap();
        let mut noisy = ds.clone().into_records();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for r in &mut noisy[split.test.clone()] {
            r.temp_ambient = rng.random_range(250.0..320.0);
            r.wind_speed = rng.random_range(0.0..30.0);
            r.irradiance_collector = rng.random_range(0.0..1200.0);
            r.demand_unit = rng.random_range(0.0..5.0);
        }
        let noisy = YearDataset::from_contiguous(noisy, false).unwrap();
        let cfg = PipelineConfig { epochs: 2, ..quick() };
        let m = MetricsOptions::default();
        let (a, _) = run_direct(&ds, &plant(), &cfg, &m).unwrap();
        let (b, _) = run_direct(&noisy, &plant(), &cfg, &m).unwrap();
        assert_eq!(a.net_load.model.params(), b.net_load.model.params());
        assert_eq!(a.net_load.model.running_var(), b.net_load.model.running_var());
        assert_eq!(a.feature_stats, b.feature_stats);
        assert_eq!(a.net_load.label_stats, b.net_load.label_stats);
    }

    #[test]
    fn no_renewables_means_scaled_demand() {
        let ds = short_year(15, 4);
        let recs: Vec<_> = ds
            .into_records()
            .into_iter()
            .map(|mut r| {
                r.wind_speed = 0.0;
                r.irradiance_collector = 0.0;
                r
            })
            .collect();
        let ds = YearDataset::from_contiguous(recs, false).unwrap();
        let (bundle, report) = run_indirect(&ds, &plant(), &quick(), &MetricsOptions::default()).unwrap();
        let demand = &report.components[0].predicted;
        for (net, d) in report.predicted.iter().zip(demand) {
            assert_eq!(*net, 60.0 * d);
        }
        assert!(report.components[1].predicted.iter().all(|&w| w == 0.0));
        assert_eq!(bundle.counts, PlantCounts::default());
    }

    #[test]
    fn pipeline_predict_matches_report() {
        let ds = short_year(15, 5);
        let cfg = PipelineConfig { epochs: 1, ..quick() };
        let (model, report) = run_direct(&ds, &plant(), &cfg, &MetricsOptions::default()).unwrap();
        let p = TrainedPipeline::Direct(model).predict(&ds).unwrap();
        assert_eq!(p.rows.len(), ds.len() - 6);
        assert_eq!(p.rows[0], 6);
        for (k, &row) in report.test_rows.iter().enumerate() {
            assert_eq!(p.net_load_kw[row - 6], report.predicted[k]);
        }
    }

    #[test]
    fn comparison_winners_and_deltas() {
        let ds = short_year(15, 6);
        let m = MetricsOptions::default();
        let (_, d) = run_direct(&ds, &plant(), &quick(), &m).unwrap();
        let (_, i) = run_indirect(&ds, &plant(), &quick(), &m).unwrap();
        let same = compare_approaches(&d, &d).unwrap();
        assert!(same.rows.iter().all(|r| r.delta == Some(0.0) && r.winner == Some(Winner::Tie)));

        let t = compare_approaches(&d, &i).unwrap();
        // recomputed from the raw prediction vectors
        let mse = |p: &[f64], a: &[f64]| p.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
        let mae = |p: &[f64], a: &[f64]| p.iter().zip(a).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        let (md, mi) = (mse(&d.predicted, &d.actual), mse(&i.predicted, &i.actual));
        assert_eq!(t.rows[1].winner, Some(winner_lower(md, mi)));
        assert_eq!(t.rows[2].winner, Some(winner_lower(md.sqrt(), mi.sqrt())));
        let (ad, ai) = (mae(&d.predicted, &d.actual), mae(&i.predicted, &i.actual));
        assert_eq!(t.rows[0].winner, Some(winner_lower(ad, ai)));
        assert!(t.to_csv().contains("reference_nrmse,0.09642,0.09453,,"));
        assert!(t.to_text().contains("MSE 147.63212"));

        let mut other = i.clone();
        other.test_rows[0] += 1;
        assert!(matches!(compare_approaches(&d, &other), Err(ForecastError::PartitionMismatch)));
    }

    #[test]
    fn csv_side_files() {
        let recs = vec![
            TrainRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
            },
            TrainRecord {
                epoch: 2,
                train_loss: 0.125,
                val_loss: 0.0625,
            },
        ];
        assert_eq!(loss_curve_csv(&recs), "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.0625\n");
    }

    #[test]
    fn config_validation() {
        let bad = PipelineConfig { window: 0, ..quick() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            model: ModelShape {
                n_features: 3,
                ..ModelShape::default()
            },
            ..quick()
        };
        assert!(bad.validate().is_err());
        assert_eq!("indirect".parse::<Approach>().unwrap(), Approach::Indirect);
        assert!("both".parse::<Approach>().is_err());
    }
}
