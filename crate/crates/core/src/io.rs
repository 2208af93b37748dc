//! File formats: landmark CSV, output traces, augmented pairs and the
//! JSON-lines trial log.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentedPair, Exploration};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, PipelineOutput, PipelineState};
use crate::pose::{AngleVector, HandFrame, Landmark, ANGLE_COUNT, LANDMARK_COUNT};
use crate::sim::trial::TrialRecord;
use crate::vae::{to_precise_json, LatentCoord, ModelCheckpoint};

/// `timestamp_ms, x0, y0, z0, …, x20, y20, z20`.
pub fn landmark_header() -> Vec<String> {
    let mut h = vec!["timestamp_ms".to_string()];
    for i in 0..LANDMARK_COUNT {
        for axis in ["x", "y", "z"] {
            h.push(format!("{axis}{i}"));
        }
    }
    h
}

/// Reads a landmark CSV. The header is required and timestamps must increase strictly.
pub fn read_landmark_csv<R: Read>(reader: R) -> Result<Vec<HandFrame>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let expected = landmark_header();
    let header = rdr.headers()?.clone();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Input(format!(
            "landmark CSV header must be timestamp_ms,x0,y0,z0,…,z20 ({} columns); got {} columns starting {:?}",
            expected.len(),
            header.len(),
            header.get(0).unwrap_or("")
        )));
    }
    let mut frames: Vec<HandFrame> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != expected.len() {
            return Err(Error::Input(format!("line {line}: expected {} fields, got {}", expected.len(), row.len())));
        }
        let timestamp_ms: i64 = row[0]
            .parse()
            .map_err(|_| Error::Input(format!("line {line}: bad timestamp {:?}", &row[0])))?;
        let mut coords = [0.0; 3 * LANDMARK_COUNT];
        for (c, v) in coords.iter_mut().enumerate() {
            *v = row[c + 1]
                .parse()
                .map_err(|_| Error::Input(format!("line {line}: bad coordinate {:?}", &row[c + 1])))?;
        }
        if let Some(prev) = frames.last() {
            if timestamp_ms <= prev.timestamp_ms {
                return Err(Error::Input(format!(
                    "line {line}: timestamp {timestamp_ms} does not follow {}",
                    prev.timestamp_ms
                )));
            }
        }
        let landmarks = coords.chunks(3).map(|c| Landmark::new(c[0], c[1], c[2])).collect();
        let frame = HandFrame::new(timestamp_ms, landmarks).map_err(|e| Error::Input(format!("line {line}: {e}")))?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_landmark_csv<W: Write>(writer: W, frames: &[HandFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(landmark_header())?;
    for f in frames {
        f.validate()?;
        let mut row = Vec::with_capacity(1 + 3 * LANDMARK_COUNT);
        row.push(f.timestamp_ms.to_string());
        for p in &f.landmarks {
            row.extend([p.x.to_string(), p.y.to_string(), p.z.to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const TRACE_HEADER: [&str; 8] = [
    "timestamp_ms",
    "raw_x",
    "raw_y",
    "stable_x",
    "stable_y",
    "smooth_x",
    "smooth_y",
    "regime",
];

pub fn write_trace_csv<W: Write>(writer: W, outputs: &[PipelineOutput]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for o in outputs {
        w.write_record([
            o.timestamp_ms.to_string(),
            o.raw.x.to_string(),
            o.raw.y.to_string(),
            o.stable.x.to_string(),
            o.stable.y.to_string(),
            o.smooth.x.to_string(),
            o.smooth.y.to_string(),
            o.regime.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs a recorded stream through a fresh pipeline, one output per frame.
pub fn replay(frames: &[HandFrame], model: &ModelCheckpoint, config: PipelineConfig) -> Result<Vec<PipelineOutput>> {
    let mut state = PipelineState::new(config);
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| state.step(f, model).map_err(|e| Error::Input(format!("frame {i} ({} ms): {e}", f.timestamp_ms))))
        .collect()
}

fn pair_header() -> Vec<String> {
    let mut h: Vec<String> = (0..ANGLE_COUNT).map(|i| format!("target_{i}")).collect();
    h.extend((0..ANGLE_COUNT).map(|i| format!("augmented_{i}")));
    h.extend(["target_id".to_string(), "sample_id".to_string()]);
    h
}

pub fn write_pairs_csv<W: Write>(writer: W, pairs: &[AugmentedPair]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(pair_header())?;
    for p in pairs {
        let mut row: Vec<String> = p.target_angles.0.iter().map(|v| v.to_string()).collect();
        row.extend(p.augmented_angles.0.iter().map(|v| v.to_string()));
        row.extend([p.target_id.to_string(), p.sample_id.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(reader: R) -> Result<Vec<AugmentedPair>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(pair_header().iter().map(String::as_str)) {
        return Err(Error::Input("augmented pair CSV has an unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Input(format!("line {}: bad {what}", i + 2));
        let mut vals = [0.0; 2 * ANGLE_COUNT];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = row.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| bad("angle"))?;
        }
        let target_id = row.get(16).and_then(|s| s.parse().ok()).ok_or_else(|| bad("target id"))?;
        let sample_id = row.get(17).and_then(|s| s.parse().ok()).ok_or_else(|| bad("sample id"))?;
        out.push(AugmentedPair {
            target_angles: AngleVector(vals[..ANGLE_COUNT].try_into().expect("8 values")),
            augmented_angles: AngleVector(vals[ANGLE_COUNT..].try_into().expect("8 values")),
            target_id,
            sample_id,
        });
    }
    Ok(out)
}

/// One JSON document per line, floats at full precision.
pub fn write_json_line<W: Write, T: Serialize>(writer: &mut W, value: &T) -> Result<()> {
    let mut line = to_precise_json(value)?;
    line.push(b'\n');
    writer.write_all(&line)?;
    Ok(())
}

pub fn read_json_lines<R: BufRead, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Input(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn read_trial_log<R: BufRead>(reader: R) -> Result<Vec<TrialRecord>> {
    read_json_lines(reader)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationFrame {
    pub t_ms: i64,
    pub landmarks: Vec<[f64; 3]>,
    pub latent: LatentCoord,
}

/// On-disk form of an [`Exploration`], one per line of an explorations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRecord {
    pub target_point: LatentCoord,
    pub marked_index: usize,
    pub frames: Vec<ExplorationFrame>,
}

impl From<&Exploration> for ExplorationRecord {
    fn from(e: &Exploration) -> Self {
        Self {
            target_point: e.target_point,
            marked_index: e.marked_index,
            frames: e
                .frames
                .iter()
                .map(|(f, latent)| ExplorationFrame {
                    t_ms: f.timestamp_ms,
                    landmarks: f.landmarks.iter().map(|p| [p.x, p.y, p.z]).collect(),
                    latent: *latent,
                })
                .collect(),
        }
    }
}

impl TryFrom<ExplorationRecord> for Exploration {
    type Error = Error;

    fn try_from(r: ExplorationRecord) -> Result<Self> {
        let frames = r
            .frames
            .into_iter()
            .map(|f| {
                let landmarks = f.landmarks.iter().map(|p| Landmark::new(p[0], p[1], p[2])).collect();
                Ok((HandFrame::new(f.t_ms, landmarks)?, f.latent))
            })
            .collect::<Result<Vec<_>>>()?;
        let e = Exploration {
            target_point: r.target_point,
            frames,
            marked_index: r.marked_index,
        };
        e.validate()?;
        Ok(e)
    }
}

pub fn write_explorations<W: Write>(mut writer: W, explorations: &[Exploration]) -> Result<()> {
    for e in explorations {
        write_json_line(&mut writer, &ExplorationRecord::from(e))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_explorations<R: BufRead>(reader: R) -> Result<Vec<Exploration>> {
    read_json_lines::<_, ExplorationRecord>(reader)?
        .into_iter()
        .map(Exploration::try_from)
        .collect()
}
