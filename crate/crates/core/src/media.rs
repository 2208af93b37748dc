//! A secondary embedding space of media items, rescaled onto the unit square
//! so the hand-pose pointer can browse it.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vae::LatentCoord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaItem {
    pub id: String,
    /// Coordinate in the source space.
    pub source: [f64; 2],
    /// Coordinate on the unit square.
    pub coord: LatentCoord,
    /// One value per entry of [`MediaSpace::attribute_names`].
    pub attributes: Vec<f64>,
}

/// Per-axis `(offset, scale)` taking the source extent onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Extent {
    /// Maps onto `[0, 1]`; an axis without spread maps to 0.5.
    pub fn normalize(&self, p: [f64; 2]) -> LatentCoord {
        let axis = |d: usize| {
            let span = self.max[d] - self.min[d];
            if span > 0.0 {
                ((p[d] - self.min[d]) / span).clamp(0.0, 1.0)
            } else {
                0.5
            }
        };
        LatentCoord::new(axis(0), axis(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaSpace {
    pub attribute_names: Vec<String>,
    pub extent: Extent,
    pub items: Vec<MediaItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaHit {
    pub id: String,
    pub coord: LatentCoord,
    pub distance: f64,
    pub attributes: Vec<f64>,
}

impl MediaSpace {
    /// Builds a space from raw coordinates; ids must be unique.
    pub fn new(attribute_names: Vec<String>, raw: Vec<(String, [f64; 2], Vec<f64>)>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyMediaSpace);
        }
        let mut seen = HashSet::new();
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for (id, p, attrs) in &raw {
            if !seen.insert(id.as_str()) {
                return Err(Error::Input(format!("duplicate media id {id:?}")));
            }
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Input(format!("media item {id:?} has a non-finite coordinate")));
            }
            if attrs.len() != attribute_names.len() {
                return Err(Error::Input(format!(
                    "media item {id:?} has {} attributes, expected {}",
                    attrs.len(),
                    attribute_names.len()
                )));
            }
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let extent = Extent { min, max };
        let items = raw
            .into_iter()
            .map(|(id, source, attributes)| MediaItem {
                coord: extent.normalize(source),
                id,
                source,
                attributes,
            })
            .collect();
        Ok(Self {
            attribute_names,
            extent,
            items,
        })
    }

    /// Reads `id,x,y[,attr…]` with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "x" || &header[2] != "y" {
            return Err(Error::Input("media CSV header must start with id,x,y".into()));
        }
        let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
        let mut raw = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let num = |k: usize| -> Result<f64> {
                row.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Input(format!("line {line}: bad number in column {}", k + 1)))
            };
            if row.len() != header.len() {
                return Err(Error::Input(format!("line {line}: expected {} fields", header.len())));
            }
            let attrs = (3..row.len()).map(num).collect::<Result<Vec<_>>>()?;
            raw.push((row[0].to_string(), [num(1)?, num(2)?], attrs));
        }
        Self::new(names, raw)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The `k` items nearest `point`, closest first; equal distances order by id.
pub fn map_media(space: &MediaSpace, point: &LatentCoord, k: usize) -> Result<Vec<MediaHit>> {
    if space.items.is_empty() {
        return Err(Error::EmptyMediaSpace);
    }
    let mut ranked: Vec<(f64, &MediaItem)> = space.items.iter().map(|it| (it.coord.distance(point), it)).collect();
    let by_rank = |a: &(f64, &MediaItem), b: &(f64, &MediaItem)| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id));
    let k = k.min(ranked.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, by_rank);
        ranked.truncate(k);
    }
    ranked.sort_by(by_rank);
    Ok(ranked
        .into_iter()
        .map(|(distance, it)| MediaHit {
            id: it.id.clone(),
            coord: it.coord,
            distance,
            attributes: it.attributes.clone(),
        })
        .collect())
}
