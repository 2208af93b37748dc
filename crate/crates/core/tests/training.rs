use std::sync::OnceLock;

use hpeis::pose::AngleVector;
use hpeis::sim::corpus::{corpus_angles, generate_corpus, CorpusConfig};
use hpeis::sim::jitter::JitterModel;
use hpeis::sim::metrics::{count_large_steps, hold_variance, Stream};
use hpeis::sim::pilot::sample_target_poses;
use hpeis::sim::trial::{simulate_trial, StartPose, SyntheticUser, TrialRecord, TrialSpec};
use hpeis::pipeline::PipelineConfig;
use hpeis::vae::{train, ModelCheckpoint, TrainConfig};

struct Fixture {
    corpus: Vec<hpeis::sim::corpus::SyntheticFrame>,
    angles: Vec<AngleVector>,
    cfg: TrainConfig,
    model: ModelCheckpoint,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = generate_corpus(&CorpusConfig::with_total(2000), 11);
        let angles = corpus_angles(&corpus).unwrap();
        let cfg = TrainConfig {
            epochs: 15,
            seed: 5,
            ..TrainConfig::default()
        };
        let model = train(&angles, &cfg).unwrap();
        Fixture { corpus, angles, cfg, model }
    })
}

#[test]
fn training_embeddings_span_the_unit_square() {
    let f = fixture();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for a in &f.angles {
        let e = f.model.embed_unclamped(a);
        for d in 0..2 {
            lo[d] = lo[d].min(e[d]);
            hi[d] = hi[d].max(e[d]);
        }
    }
    for d in 0..2 {
        assert!(lo[d].abs() < 1e-9, "axis {d} min {}", lo[d]);
        assert!((hi[d] - 1.0).abs() < 1e-9, "axis {d} max {}", hi[d]);
    }
}

#[test]
fn same_seed_same_checkpoint() {
    let f = fixture();
    let again = train(&f.angles, &f.cfg).unwrap();
    assert_eq!(again.content_hash().unwrap(), f.model.content_hash().unwrap());
    let other = train(&f.angles, &TrainConfig { seed: 6, ..f.cfg.clone() }).unwrap();
    assert_ne!(other.content_hash().unwrap(), f.model.content_hash().unwrap());
}

#[test]
fn saved_checkpoint_loads_bit_exact() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    f.model.save(&path).unwrap();
    let loaded = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(loaded, f.model);
    for a in f.angles.iter().take(50) {
        assert_eq!(loaded.embed(a), f.model.embed(a));
    }
}

fn trials(start: StartPose, jitter: JitterModel, pipeline: PipelineConfig, n: usize) -> Vec<TrialRecord> {
    let f = fixture();
    let targets = sample_target_poses(&f.corpus, n, 21);
    targets
        .iter()
        .enumerate()
        .map(|(j, pose)| {
            let spec = TrialSpec {
                model: &f.model,
                variant: "basic".into(),
                pipeline,
                guidance: false,
                target_pose: *pose,
                user: SyntheticUser::default(),
                jitter,
                start,
            };
            simulate_trial(&spec, 100 + j as u64).unwrap()
        })
        .collect()
}

#[test]
fn hold_variance_shrinks_through_the_pipeline() {
    let records = trials(StartPose::AtTarget, JitterModel::default(), PipelineConfig::default(), 30);
    let mean = |s: Stream| records.iter().map(|r| hold_variance(r, s)).sum::<f64>() / records.len() as f64;
    let (raw, stable, smooth) = (mean(Stream::Raw), mean(Stream::Stable), mean(Stream::Smooth));
    assert!(stable / raw < 0.9, "stable {stable} raw {raw}");
    assert!(smooth / stable < 0.9, "smooth {smooth} stable {stable}");
}

fn spiky_trials(stable: bool) -> Vec<TrialRecord> {
    let jitter = JitterModel {
        spike_probability: 0.05,
        ..JitterModel::default()
    };
    trials(StartPose::Random, jitter, PipelineConfig::with_stages(stable, true), 20)
}

fn smooth_large_steps(records: &[TrialRecord]) -> usize {
    records.iter().map(|r| count_large_steps(r, Stream::Smooth, 0.1)).sum()
}

#[test]
fn stabilizer_cuts_large_smooth_steps() {
    let off = spiky_trials(false);
    let on = spiky_trials(true);
    let raw: usize = on.iter().map(|r| count_large_steps(r, Stream::Raw, 0.1)).sum();
    assert!(raw > 0, "no raw jumps were injected");
    assert!(smooth_large_steps(&on) * 2 < smooth_large_steps(&off));
}

#[test]
fn stable_steps_stay_below_threshold_without_spikes() {
    let records = trials(StartPose::Random, JitterModel::default().without_spikes(), PipelineConfig::default(), 20);
    assert_eq!(records.iter().map(|r| count_large_steps(r, Stream::Stable, 0.1)).sum::<usize>(), 0);
    assert_eq!(smooth_large_steps(&records), 0);
}

/// Halving only bounds a step by 0.1 when the raw gap is at most 0.2;
/// detector bursts produce larger gaps, so this does not hold.
#[test]
#[ignore = "unattainable: halving leaves steps above 0.1 for raw gaps above 0.2"]
fn stabilized_smooth_stream_has_no_large_steps() {
    assert_eq!(smooth_large_steps(&spiky_trials(true)), 0);
}
