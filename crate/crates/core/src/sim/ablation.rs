//! The ablation benchmark.
//!
//! Per seed: generate a corpus, train the basic model, pick target poses, run
//! pilot explorations with the basic model and no post-processing, estimate
//! landmark jitter with both estimators, retrain the two augmented variants,
//! and evaluate every configuration on the same simulated trials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corpus::{corpus_angles, generate_corpus, CorpusConfig};
use super::hand::HandPoseParams;
use super::jitter::JitterModel;
use super::metrics::{compute_upa_usa, distance_series, hold_variance, Stream, DEFAULT_LAST_K};
use super::pilot::{augmented_pairs, reference_poses, run_pilot, sample_target_poses};
use super::trial::{simulate_trial, StartPose, SyntheticUser, TrialRecord, TrialSpec};
use crate::augment::{
    collect_proximity, estimate_std_avgstdaug, estimate_std_stdaug, retrain_augmented, AugmentConfig, AugmentVariant,
    LandmarkStd,
};
use crate::error::{Error, Result};
use crate::filters::{OneEuroParams, RegimeSwitch};
use crate::pipeline::PipelineConfig;
use crate::vae::{train, ModelCheckpoint, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub targets: usize,
    pub pilot_explorations: usize,
    pub trials_per_config: usize,
    pub hold_trials: usize,
    pub last_k: usize,
    pub std_window: usize,
    pub user: SyntheticUser,
    pub jitter: JitterModel,
    /// Relative UPA and USA reduction required from the stabilizer.
    pub stable_reduction: f64,
}

/// Desk scale: an 8,000-frame corpus and 60 epochs, sized for ten seeds in a
/// few minutes on one core.
impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::with_total(8_000),
            train: TrainConfig {
                epochs: 60,
                ..TrainConfig::default()
            },
            augment: AugmentConfig::default(),
            targets: 10,
            pilot_explorations: 200,
            trials_per_config: 200,
            hold_trials: 50,
            last_k: DEFAULT_LAST_K,
            std_window: 10,
            user: SyntheticUser::default(),
            jitter: JitterModel::default(),
            stable_reduction: 0.4,
        }
    }
}

impl BenchmarkConfig {
    /// The full 50,000-frame corpus and 200 training epochs.
    pub fn paper_scale() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets == 0 || self.pilot_explorations == 0 || self.trials_per_config == 0 || self.hold_trials == 0 {
            return Err(Error::Config("benchmark counts must be >= 1".into()));
        }
        if self.last_k < 2 || self.std_window < 2 {
            return Err(Error::Config("last_k and std_window must be >= 2".into()));
        }
        self.user.validate()?;
        self.jitter.validate()
    }
}

/// One evaluated configuration: model variant, post-processing and filter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub variant: ModelVariant,
    pub stable: bool,
    pub smooth: bool,
    pub regimes: RegimeSwitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Basic,
    StdAug,
    AvgStdAug,
}

impl ModelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::StdAug => "std_aug",
            Self::AvgStdAug => "avg_std_aug",
        }
    }
}

impl EvalConfig {
    const fn new(variant: ModelVariant, stable: bool, smooth: bool) -> Self {
        Self {
            variant,
            stable,
            smooth,
            regimes: PAPER_REGIMES,
        }
    }

    pub fn label(&self) -> String {
        let post = match (self.stable, self.smooth) {
            (false, false) => "none",
            (true, false) => "stable",
            (false, true) => "smooth",
            (true, true) => "stable+smooth",
        };
        let f = &self.regimes;
        format!(
            "{}/{}/({:.3},{:.2})-({:.3},{:.2})",
            self.variant.name(),
            post,
            f.fast.cutoff,
            f.fast.slope,
            f.slow.cutoff,
            f.slow.slope
        )
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            regimes: self.regimes,
            ..PipelineConfig::with_stages(self.stable, self.smooth)
        }
    }
}

const PAPER_REGIMES: RegimeSwitch = RegimeSwitch {
    fast: OneEuroParams::new(0.040, 0.85),
    slow: OneEuroParams::new(0.005, 0.75),
    distance_threshold: 0.015,
};

const ALTERNATE_REGIMES: RegimeSwitch = RegimeSwitch {
    fast: OneEuroParams::new(0.010, 0.80),
    slow: OneEuroParams::new(0.004, 0.70),
    distance_threshold: 0.015,
};

/// Model comparison rows.
pub const TABLE_ONE: [EvalConfig; 6] = [
    EvalConfig::new(ModelVariant::Basic, false, false),
    EvalConfig::new(ModelVariant::StdAug, false, false),
    EvalConfig::new(ModelVariant::AvgStdAug, false, false),
    EvalConfig::new(ModelVariant::AvgStdAug, true, false),
    EvalConfig::new(ModelVariant::AvgStdAug, false, true),
    EvalConfig::new(ModelVariant::AvgStdAug, true, true),
];

/// Filter trade-off rows.
pub const TABLE_TWO: [EvalConfig; 4] = [
    EvalConfig::new(ModelVariant::AvgStdAug, true, false),
    EvalConfig::new(ModelVariant::AvgStdAug, false, true),
    EvalConfig {
        regimes: ALTERNATE_REGIMES,
        ..EvalConfig::new(ModelVariant::AvgStdAug, true, true)
    },
    EvalConfig::new(ModelVariant::AvgStdAug, true, true),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub label: String,
    pub config: EvalConfig,
    pub upa: f64,
    pub usa: f64,
    pub mean_settle_time_s: f64,
    pub mean_completion_time_s: f64,
    pub mean_final_distance: f64,
    /// Smooth-pointer distance to the target per 0.1 s, one series per trial.
    pub distance_series: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldVariance {
    pub raw: f64,
    pub stable: f64,
    pub smooth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orderings {
    /// UPA(AvgStdAug) < UPA(Basic), no post-processing.
    pub augmentation_reduces_upa: bool,
    /// The stabilizer cuts UPA and USA by at least the configured fraction.
    pub stabilizer_reduces_uncertainty: bool,
    pub stabilizer_upa_reduction: f64,
    pub stabilizer_usa_reduction: f64,
    /// smooth < stable < raw hold-phase variance on hold-only trials.
    pub hold_variance_ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub std_aug_std: LandmarkStd,
    pub avg_std_aug_std: LandmarkStd,
    pub table_one: Vec<ConfigResult>,
    pub table_two: Vec<ConfigResult>,
    /// Hold-only trials, full pipeline.
    pub hold_variance: HoldVariance,
    /// Hold phase of the reach trials, full pipeline.
    pub reach_hold_variance: HoldVariance,
    pub orderings: Orderings,
    pub final_losses: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub upa: f64,
    pub usa: f64,
    pub mean_settle_time_s: f64,
    pub mean_final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCounts {
    pub seeds: usize,
    pub augmentation_reduces_upa: usize,
    pub stabilizer_reduces_uncertainty: usize,
    pub hold_variance_ordered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Uncertainty statistic: principal-component variances of the last frames.
    pub statistic: String,
    pub config: BenchmarkConfig,
    pub seeds: Vec<SeedReport>,
    pub table_one: Vec<SummaryRow>,
    pub table_two: Vec<SummaryRow>,
    pub ordering_counts: OrderingCounts,
    pub partial: bool,
    pub failure: Option<String>,
}

/// Independent sub-stream seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_CORPUS: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_TARGETS: u64 = 3;
const STREAM_PILOT: u64 = 4;
const STREAM_AUGMENT: u64 = 5;
const STREAM_TRIALS: u64 = 6;
const STREAM_HOLD: u64 = 7;

struct Models {
    basic: ModelCheckpoint,
    std_aug: ModelCheckpoint,
    avg_std_aug: ModelCheckpoint,
}

impl Models {
    fn get(&self, v: ModelVariant) -> &ModelCheckpoint {
        match v {
            ModelVariant::Basic => &self.basic,
            ModelVariant::StdAug => &self.std_aug,
            ModelVariant::AvgStdAug => &self.avg_std_aug,
        }
    }
}

fn trial_spec<'a>(
    cfg: &BenchmarkConfig,
    model: &'a ModelCheckpoint,
    eval: &EvalConfig,
    target: &HandPoseParams,
    start: StartPose,
) -> TrialSpec<'a> {
    TrialSpec {
        model,
        variant: eval.variant.name().into(),
        pipeline: eval.pipeline(),
        guidance: false,
        target_pose: *target,
        user: cfg.user,
        jitter: cfg.jitter,
        start,
    }
}

fn evaluate(
    cfg: &BenchmarkConfig,
    models: &Models,
    targets: &[HandPoseParams],
    eval: &EvalConfig,
    seed: u64,
) -> Result<(ConfigResult, Vec<TrialRecord>)> {
    let model = models.get(eval.variant);
    let mut records = Vec::with_capacity(cfg.trials_per_config);
    for j in 0..cfg.trials_per_config {
        let target = &targets[j % targets.len()];
        let spec = trial_spec(cfg, model, eval, target, StartPose::Random);
        records.push(simulate_trial(&spec, sub_seed(sub_seed(seed, STREAM_TRIALS), j as u64))?);
    }
    let u = compute_upa_usa(&records, cfg.last_k)?;
    let n = records.len() as f64;
    let result = ConfigResult {
        label: eval.label(),
        config: *eval,
        upa: u.upa,
        usa: u.usa,
        mean_settle_time_s: records.iter().map(|r| r.settle_time_s).sum::<f64>() / n,
        mean_completion_time_s: records.iter().map(|r| r.completion_time_s).sum::<f64>() / n,
        mean_final_distance: records.iter().map(|r| r.final_distance).sum::<f64>() / n,
        distance_series: records.iter().map(distance_series).collect(),
    };
    Ok((result, records))
}

fn mean_hold_variance(records: &[TrialRecord]) -> HoldVariance {
    let n = records.len() as f64;
    let mean = |s: Stream| records.iter().map(|r| hold_variance(r, s)).sum::<f64>() / n;
    HoldVariance {
        raw: mean(Stream::Raw),
        stable: mean(Stream::Stable),
        smooth: mean(Stream::Smooth),
    }
}

/// Trains all variants for one seed.
fn prepare(cfg: &BenchmarkConfig, seed: u64) -> Result<(Models, Vec<HandPoseParams>, LandmarkStd, LandmarkStd)> {
    let corpus = generate_corpus(&cfg.corpus, sub_seed(seed, STREAM_CORPUS));
    let angles = corpus_angles(&corpus)?;
    let train_cfg = TrainConfig {
        seed: sub_seed(seed, STREAM_TRAIN),
        ..cfg.train.clone()
    };
    let basic = train(&angles, &train_cfg)?;
    let targets = sample_target_poses(&corpus, cfg.targets, sub_seed(seed, STREAM_TARGETS));
    let reference = reference_poses(&corpus, &basic)?;
    let explorations = run_pilot(
        &basic,
        &targets,
        cfg.pilot_explorations,
        cfg.user,
        cfg.jitter,
        sub_seed(seed, STREAM_PILOT),
    )?;
    let sets = collect_proximity(&explorations, &reference, cfg.augment.proximity_count)?;
    let std_std = estimate_std_stdaug(&sets)?;
    let std_avg = estimate_std_avgstdaug(&explorations, cfg.std_window)?;

    let retrain = |variant: AugmentVariant, std: &LandmarkStd| -> Result<ModelCheckpoint> {
        let pairs = augmented_pairs(&sets, std, cfg.augment.samples_per_target, sub_seed(seed, STREAM_AUGMENT))?;
        let mut m = retrain_augmented(&angles, &pairs, &train_cfg, &cfg.augment)?;
        m.metadata.variant = Some(variant.name().into());
        Ok(m)
    };
    let std_aug = retrain(AugmentVariant::Std, &std_std)?;
    let avg_std_aug = retrain(AugmentVariant::AvgStd, &std_avg)?;
    Ok((
        Models {
            basic,
            std_aug,
            avg_std_aug,
        },
        targets,
        std_std,
        std_avg,
    ))
}

pub fn run_seed(cfg: &BenchmarkConfig, seed: u64) -> Result<SeedReport> {
    cfg.validate()?;
    let (models, targets, std_std, std_avg) = prepare(cfg, seed)?;

    let mut cache: Vec<(EvalConfig, ConfigResult, Vec<TrialRecord>)> = Vec::new();
    let mut run = |eval: &EvalConfig| -> Result<ConfigResult> {
        if let Some((_, r, _)) = cache.iter().find(|(c, _, _)| c == eval) {
            return Ok(r.clone());
        }
        let (r, recs) = evaluate(cfg, &models, &targets, eval, seed)?;
        cache.push((*eval, r.clone(), recs));
        Ok(r)
    };
    let table_one = TABLE_ONE.iter().map(&mut run).collect::<Result<Vec<_>>>()?;
    let table_two = TABLE_TWO.iter().map(&mut run).collect::<Result<Vec<_>>>()?;

    let full = EvalConfig::new(ModelVariant::AvgStdAug, true, true);
    let reach_records = &cache.iter().find(|(c, _, _)| *c == full).expect("evaluated").2;
    let reach_hold_variance = mean_hold_variance(reach_records);

    let mut hold_records = Vec::with_capacity(cfg.hold_trials);
    for j in 0..cfg.hold_trials {
        let target = &targets[j % targets.len()];
        let spec = trial_spec(cfg, &models.avg_std_aug, &full, target, StartPose::AtTarget);
        hold_records.push(simulate_trial(&spec, sub_seed(sub_seed(seed, STREAM_HOLD), j as u64))?);
    }
    let hold = mean_hold_variance(&hold_records);

    let (basic, avg, avg_stable) = (&table_one[0], &table_one[2], &table_one[3]);
    let reduction = |before: f64, after: f64| if before > 0.0 { 1.0 - after / before } else { 0.0 };
    let upa_red = reduction(avg.upa, avg_stable.upa);
    let usa_red = reduction(avg.usa, avg_stable.usa);
    let orderings = Orderings {
        augmentation_reduces_upa: avg.upa < basic.upa,
        stabilizer_reduces_uncertainty: upa_red >= cfg.stable_reduction && usa_red >= cfg.stable_reduction,
        stabilizer_upa_reduction: upa_red,
        stabilizer_usa_reduction: usa_red,
        hold_variance_ordered: hold.smooth < hold.stable && hold.stable < hold.raw,
    };
    let final_losses = [
        (ModelVariant::Basic, &models.basic),
        (ModelVariant::StdAug, &models.std_aug),
        (ModelVariant::AvgStdAug, &models.avg_std_aug),
    ]
    .iter()
    .map(|(v, m)| (v.name().to_string(), m.metadata.final_loss))
    .collect();

    Ok(SeedReport {
        seed,
        std_aug_std: std_std,
        avg_std_aug_std: std_avg,
        table_one,
        table_two,
        hold_variance: hold,
        reach_hold_variance,
        orderings,
        final_losses,
    })
}

fn summarize(seeds: &[SeedReport], pick: impl Fn(&SeedReport) -> &Vec<ConfigResult>) -> Vec<SummaryRow> {
    let Some(first) = seeds.first() else {
        return Vec::new();
    };
    let n = seeds.len() as f64;
    (0..pick(first).len())
        .map(|i| {
            let mean = |f: &dyn Fn(&ConfigResult) -> f64| seeds.iter().map(|s| f(&pick(s)[i])).sum::<f64>() / n;
            SummaryRow {
                label: pick(first)[i].label.clone(),
                upa: mean(&|r| r.upa),
                usa: mean(&|r| r.usa),
                mean_settle_time_s: mean(&|r| r.mean_settle_time_s),
                mean_final_distance: mean(&|r| r.mean_final_distance),
            }
        })
        .collect()
}

/// Runs every seed in order. A failing seed stops the run; the report then
/// holds the completed seeds and is flagged partial.
pub fn run_ablation(cfg: &BenchmarkConfig, seeds: &[u64]) -> Result<AblationReport> {
    cfg.validate()?;
    let mut done = Vec::with_capacity(seeds.len());
    let mut failure = None;
    for &seed in seeds {
        log::info!("ablation seed {seed}");
        match run_seed(cfg, seed) {
            Ok(r) => done.push(r),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                failure = Some(format!("seed {seed}: {e}"));
                break;
            }
        }
    }
    let count = |f: fn(&Orderings) -> bool| done.iter().filter(|s| f(&s.orderings)).count();
    Ok(AblationReport {
        statistic: "variance".into(),
        config: cfg.clone(),
        table_one: summarize(&done, |s| &s.table_one),
        table_two: summarize(&done, |s| &s.table_two),
        ordering_counts: OrderingCounts {
            seeds: done.len(),
            augmentation_reduces_upa: count(|o| o.augmentation_reduces_upa),
            stabilizer_reduces_uncertainty: count(|o| o.stabilizer_reduces_uncertainty),
            hold_variance_ordered: count(|o| o.hold_variance_ordered),
        },
        partial: failure.is_some(),
        failure,
        seeds: done,
    })
}
