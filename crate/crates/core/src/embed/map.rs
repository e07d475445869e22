use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::JaccardVariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MapLabel {
    Dataset,
    Generator(usize),
}

impl fmt::Display for MapLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapLabel::Dataset => f.write_str("dataset"),
            MapLabel::Generator(g) => write!(f, "generator@{g}"),
        }
    }
}

impl FromStr for MapLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "dataset" {
            return Ok(MapLabel::Dataset);
        }
        s.strip_prefix("generator@")
            .and_then(|g| g.parse().ok())
            .map(MapLabel::Generator)
            .ok_or_else(|| format!("bad map label {s:?}"))
    }
}

impl Serialize for MapLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MapLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Joint 2-D map in the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<MapLabel>,
    pub provenance: String,
}

impl EmbeddingMap {
    pub fn subset(&self, label: MapLabel) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn indices(&self, label: MapLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Joint per-axis min-max rescale into `[0,1]²`.
pub fn normalize_map(points: &[[f64; 2]], labels: Vec<MapLabel>, provenance: impl Into<String>) -> Result<EmbeddingMap> {
    if points.len() != labels.len() {
        return Err(Error::invalid(format!("{} points but {} labels", points.len(), labels.len())));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::NonFinite("embedding coordinates".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if points.len() < 2 || (0..2).any(|a| hi[a] <= lo[a]) {
        return Err(Error::Degenerate("embedding collapses along an axis".into()));
    }
    let points = points
        .iter()
        .map(|p| {
            let mut q = [0.0; 2];
            for a in 0..2 {
                q[a] = ((p[a] - lo[a]) / (hi[a] - lo[a])).clamp(0.0, 1.0);
            }
            q
        })
        .collect();
    Ok(EmbeddingMap {
        points,
        labels,
        provenance: provenance.into(),
    })
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `D[i][j]` is the Euclidean distance between `mg[i]` and `md[j]`.
pub fn map_distances(mg: &[[f64; 2]], md: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(mg.len(), md.len(), |i, j| dist(&mg[i], &md[j]))
}

fn row_minima(d: &DMatrix<f64>) -> Vec<f64> {
    d.row_iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect()
}

fn col_minima(d: &DMatrix<f64>) -> Vec<f64> {
    d.column_iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub tau: f64,
    /// Pooled per-generated-point minimum distances.
    pub minima: Vec<f64>,
    /// `tau == 0`, unusable as a threshold.
    pub degenerate: bool,
}

/// Median of each generated point's nearest-dataset distance, pooled over maps.
pub fn threshold_tau(maps: &[(Vec<[f64; 2]>, Vec<[f64; 2]>)]) -> Result<Tau> {
    let mut minima = Vec::new();
    for (mg, md) in maps {
        if mg.is_empty() || md.is_empty() {
            return Err(Error::invalid("threshold maps must be non-empty"));
        }
        minima.extend(row_minima(&map_distances(mg, md)));
    }
    let tau = median(&minima).ok_or_else(|| Error::invalid("no maps to derive a threshold from"))?;
    Ok(Tau {
        tau,
        degenerate: tau <= 0.0,
        minima,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jaccard {
    pub j: f64,
    pub matched_g: usize,
    pub matched_d: usize,
}

pub fn jaccard_index(mg: &[[f64; 2]], md: &[[f64; 2]], tau: f64, variant: JaccardVariant) -> Result<Jaccard> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("threshold must be positive, got {tau}")));
    }
    if mg.is_empty() || md.is_empty() {
        return Err(Error::invalid("jaccard maps must be non-empty"));
    }
    let d = map_distances(mg, md);
    let matched_g = row_minima(&d).iter().filter(|&&m| m < tau).count();
    let matched_d = col_minima(&d).iter().filter(|&&m| m < tau).count();
    let total = (mg.len() + md.len()) as f64;
    let j = match variant {
        JaccardVariant::Symmetric => (matched_g + matched_d) as f64 / total,
        JaccardVariant::Literal => matched_g as f64 / total,
        JaccardVariant::UnionMinusIntersection => {
            // Several generated points may match one dataset point, so the
            // intersection is capped at the smaller set to keep J within [0,1].
            let inter = matched_g.min(mg.len().min(md.len())) as f64;
            inter / (total - inter)
        }
    };
    Ok(Jaccard { j, matched_g, matched_d })
}
