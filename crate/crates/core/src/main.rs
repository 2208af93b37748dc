use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hpeis::augment::{
    collect_proximity, estimate_std_avgstdaug, estimate_std_stdaug, retrain_augmented, AugmentVariant, ReferencePose,
};
use hpeis::guidance::build_guidance;
use hpeis::io::{
    read_explorations, read_landmark_csv, replay, write_explorations, write_json_line, write_landmark_csv,
    write_pairs_csv, write_trace_csv,
};
use hpeis::media::MediaSpace;
use hpeis::pipeline::PipelineConfig;
use hpeis::pose::{frame_to_angles, AngleVector};
use hpeis::service::{sample_targets, Server, ServiceContext, SessionConfig, TrialLog};
use hpeis::sim::ablation::{run_ablation, sub_seed, AblationReport, BenchmarkConfig, SummaryRow};
use hpeis::sim::corpus::{corpus_angles, generate_corpus, SyntheticFrame};
use hpeis::sim::pilot::{augmented_pairs, reference_poses, run_pilot, sample_target_poses};
use hpeis::vae::{to_precise_json, train, LatentCoord, ModelCheckpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "hpeis", version, about = "Hand-pose embedding interaction system")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Benchmark configuration as JSON; absent fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Full corpus size and training budget instead of desk scale.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic landmark corpus.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the basic model.
    Train {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run simulated pilot explorations against a checkpoint.
    Simulate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of explorations; defaults to the configured pilot count.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one trial record per line here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Estimate jitter from explorations and retrain with augmented pairs.
    Augment {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        explorations: PathBuf,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write the sampled pairs as CSV.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Run a recorded landmark CSV through the pipeline.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_stable: bool,
        #[arg(long)]
        no_smooth: bool,
    },
    /// Run the ablation benchmark over consecutive seeds.
    Ablate {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve sessions over TCP (NDJSON) and WebSocket.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Media space as imported JSON or raw CSV.
        #[arg(long)]
        media: Option<PathBuf>,
        /// Append closed trials here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        guidance_every: usize,
        #[arg(long, default_value_t = 3)]
        media_k: usize,
    },
    /// Normalize a media CSV (id,x,y,attributes…) into a media space.
    MediaImport {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the guidance set at one point of the plane.
    GuidanceDump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArg {
    /// Landmark CSV to train on; without it the synthetic corpus is regenerated from the seed.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Std,
    Avgstd,
}

const STREAM_CORPUS: u64 = 1;
const STREAM_TARGETS: u64 = 3;
const STREAM_PILOT: u64 = 4;
const STREAM_AUGMENT: u64 = 5;

fn load_config(cli: &Cli) -> Result<BenchmarkConfig> {
    let cfg = match &cli.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None if cli.paper_scale => BenchmarkConfig::paper_scale(),
        None => BenchmarkConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn synthetic_corpus(cfg: &BenchmarkConfig, seed: u64) -> Vec<SyntheticFrame> {
    generate_corpus(&cfg.corpus, sub_seed(seed, STREAM_CORPUS))
}

/// Training angles and, with a checkpoint, reference poses from either a CSV or the synthetic corpus.
fn corpus_data(arg: &CorpusArg, cfg: &BenchmarkConfig, seed: u64, model: Option<&ModelCheckpoint>) -> Result<(Vec<AngleVector>, Vec<ReferencePose>)> {
    match &arg.corpus {
        Some(path) => {
            let frames = read_landmark_csv(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
                .with_context(|| format!("reading {}", path.display()))?;
            let mut angles = Vec::with_capacity(frames.len());
            let mut kept = Vec::with_capacity(frames.len());
            for f in &frames {
                match frame_to_angles(f) {
                    Ok(a) => {
                        angles.push(a);
                        kept.push(f);
                    }
                    Err(e) => log::warn!("skipping frame at {} ms: {e}", f.timestamp_ms),
                }
            }
            if angles.is_empty() {
                bail!("{} holds no usable frames", path.display());
            }
            let reference = match model {
                Some(m) => kept
                    .iter()
                    .zip(m.embed_batch(&angles))
                    .map(|(f, embedding)| {
                        Ok(ReferencePose {
                            landmarks: f.interaction_landmarks()?,
                            embedding,
                        })
                    })
                    .collect::<hpeis::Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            Ok((angles, reference))
        }
        None => {
            let corpus = synthetic_corpus(cfg, seed);
            let angles = corpus_angles(&corpus)?;
            let reference = match model {
                Some(m) => reference_poses(&corpus, m)?,
                None => Vec::new(),
            };
            Ok((angles, reference))
        }
    }
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["config", "upa", "usa", "settle_time_s", "final_distance"])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.upa.to_string(),
            r.usa.to_string(),
            r.mean_settle_time_s.to_string(),
            r.mean_final_distance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_ablation(dir: &Path, report: &AblationReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut f = create(&dir.join("report.json"))?;
    f.write_all(&to_precise_json(report)?)?;
    f.flush()?;
    write_summary_csv(&dir.join("table_one.csv"), &report.table_one)?;
    write_summary_csv(&dir.join("table_two.csv"), &report.table_two)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("orderings.csv"))?);
    w.write_record([
        "seed",
        "augmentation_reduces_upa",
        "stabilizer_upa_reduction",
        "stabilizer_usa_reduction",
        "stabilizer_reduces_uncertainty",
        "hold_variance_ordered",
    ])?;
    for s in &report.seeds {
        let o = &s.orderings;
        w.write_record([
            s.seed.to_string(),
            o.augmentation_reduces_upa.to_string(),
            o.stabilizer_upa_reduction.to_string(),
            o.stabilizer_usa_reduction.to_string(),
            o.stabilizer_reduces_uncertainty.to_string(),
            o.hold_variance_ordered.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn load_media(path: &Path) -> Result<MediaSpace> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let space = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        MediaSpace::from_csv(file)?
    } else {
        serde_json::from_reader(BufReader::new(file))?
    };
    Ok(space)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let seed = cli.seed;
    match cli.command {
        Command::GenCorpus { out } => {
            let corpus = synthetic_corpus(&cfg, seed);
            let frames: Vec<_> = corpus.into_iter().map(|s| s.frame).collect();
            write_landmark_csv(create(&out)?, &frames)?;
        }
        Command::Train { corpus, out } => {
            let (angles, _) = corpus_data(&corpus, &cfg, seed, None)?;
            let model = train(&angles, &TrainConfig { seed, ..cfg.train.clone() })?;
            model.save(&out)?;
            println!("{}", model.content_hash()?);
        }
        Command::Simulate {
            checkpoint,
            trials,
            out,
            log,
        } => {
            let model = load_checkpoint(&checkpoint)?;
            let corpus = synthetic_corpus(&cfg, seed);
            let targets = sample_target_poses(&corpus, cfg.targets, sub_seed(seed, STREAM_TARGETS));
            let count = trials.unwrap_or(cfg.pilot_explorations);
            let explorations = run_pilot(&model, &targets, count, cfg.user, cfg.jitter, sub_seed(seed, STREAM_PILOT))?;
            write_explorations(create(&out)?, &explorations)?;
            if let Some(path) = log {
                let mut w = create(&path)?;
                let rate = cfg.user.frame_rate_hz;
                for e in &explorations {
                    let outputs = replay(&e.frames.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>(), &model, PipelineConfig::with_stages(false, false))?;
                    let marked = outputs[e.marked_index].smooth;
                    let record = hpeis::sim::trial::TrialRecord::close(
                        e.target_point,
                        outputs,
                        marked,
                        e.marked_index + 1,
                        hpeis::sim::trial::TrialConditions {
                            stable: false,
                            smooth: false,
                            guidance: false,
                            variant: model.metadata.variant.clone().unwrap_or_else(|| "basic".into()),
                        },
                        rate,
                    );
                    write_json_line(&mut w, &record)?;
                }
                w.flush()?;
            }
        }
        Command::Augment {
            checkpoint,
            explorations,
            variant,
            corpus,
            out,
            pairs,
        } => {
            let base = load_checkpoint(&checkpoint)?;
            let explorations = read_explorations(BufReader::new(
                File::open(&explorations).with_context(|| format!("opening {}", explorations.display()))?,
            ))?;
            let (angles, reference) = corpus_data(&corpus, &cfg, seed, Some(&base))?;
            let sets = collect_proximity(&explorations, &reference, cfg.augment.proximity_count)?;
            let (variant, std) = match variant {
                VariantArg::Std => (AugmentVariant::Std, estimate_std_stdaug(&sets)?),
                VariantArg::Avgstd => (AugmentVariant::AvgStd, estimate_std_avgstdaug(&explorations, cfg.std_window)?),
            };
            let sampled = augmented_pairs(&sets, &std, cfg.augment.samples_per_target, sub_seed(seed, STREAM_AUGMENT))?;
            if let Some(path) = pairs {
                write_pairs_csv(create(&path)?, &sampled)?;
            }
            let mut model = retrain_augmented(&angles, &sampled, &TrainConfig { seed, ..cfg.train.clone() }, &cfg.augment)?;
            model.metadata.variant = Some(variant.name().into());
            model.save(&out)?;
            println!("{}", model.content_hash()?);
        }
        Command::Replay {
            checkpoint,
            input,
            out,
            no_stable,
            no_smooth,
        } => {
            let model = load_checkpoint(&checkpoint)?;
            let frames = read_landmark_csv(BufReader::new(File::open(&input).with_context(|| format!("opening {}", input.display()))?))
                .with_context(|| format!("reading {}", input.display()))?;
            let outputs = replay(&frames, &model, PipelineConfig::with_stages(!no_stable, !no_smooth))?;
            write_trace_csv(create(&out)?, &outputs)?;
        }
        Command::Ablate { seeds, out } => {
            let list: Vec<u64> = (0..seeds).map(|k| seed + k).collect();
            let report = run_ablation(&cfg, &list)?;
            write_ablation(&out, &report)?;
            let c = &report.ordering_counts;
            println!(
                "seeds {} | augmentation reduces UPA {}/{} | stabilizer reduces UPA and USA {}/{} | hold variance ordered {}/{}",
                c.seeds, c.augmentation_reduces_upa, c.seeds, c.stabilizer_reduces_uncertainty, c.seeds, c.hold_variance_ordered, c.seeds
            );
            if let Some(f) = &report.failure {
                bail!("benchmark stopped early: {f}");
            }
        }
        Command::Serve {
            checkpoint,
            addr,
            media,
            log,
            guidance_every,
            media_k,
        } => {
            let model = load_checkpoint(&checkpoint)?;
            let corpus = synthetic_corpus(&cfg, seed);
            let embeddings = model.embed_batch(&corpus_angles(&corpus)?);
            let targets = sample_targets(&embeddings, hpeis::service::session::DEFAULT_TARGET_COUNT, sub_seed(seed, STREAM_TARGETS))?;
            let media = media.as_deref().map(load_media).transpose()?;
            let log = match log {
                Some(p) => {
                    let f = fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&p)
                        .with_context(|| format!("opening {}", p.display()))?;
                    Some(TrialLog::new(Box::new(f)))
                }
                None => None,
            };
            let ctx = Arc::new(ServiceContext::new(model, targets, media, log)?);
            let session_cfg = SessionConfig {
                guidance_every,
                media_k,
                seed,
                ..SessionConfig::default()
            };
            let server = Server::bind(&addr, ctx, session_cfg)?;
            println!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Command::MediaImport { input, out } => {
            let space = MediaSpace::from_csv(File::open(&input).with_context(|| format!("opening {}", input.display()))?)?;
            let mut w = create(&out)?;
            w.write_all(&to_precise_json(&space)?)?;
            w.flush()?;
            println!("{} items", space.len());
        }
        Command::GuidanceDump { checkpoint, x, y, out } => {
            let model = load_checkpoint(&checkpoint)?;
            let point = LatentCoord::new(x, y);
            if !point.in_unit_box() {
                bail!("({x}, {y}) is outside the unit square");
            }
            let posterior = model.encode(&model.decode(&point));
            let set = build_guidance(&posterior, &model, seed);
            let mut w = create(&out)?;
            w.write_all(&to_precise_json(&set)?)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
