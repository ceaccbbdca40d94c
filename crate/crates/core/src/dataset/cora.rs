use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Result, SeaError};
use crate::knn::FeatureMatrix;
use crate::sparse::WeightedGraph;

/// What the citation pass kept and dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadStats {
    pub raw_citations: usize,
    pub self_citations: usize,
    /// Repeated or reciprocal citations merged into an existing edge.
    pub merged_citations: usize,
    pub unknown_citations: usize,
    pub edges: usize,
}

pub fn load_cora(content_path: &Path, cites_path: &Path) -> Result<Dataset> {
    load_cora_with_stats(content_path, cites_path).map(|(d, _)| d)
}

/// Parses `<id> <features...> <label>` rows and `<cited> <citing>` rows,
/// separated by tabs or spaces. Nodes keep file order; labels are indices
/// into the sorted class names. The returned split is empty.
pub fn load_cora_with_stats(content_path: &Path, cites_path: &Path) -> Result<(Dataset, LoadStats)> {
    let content = fs::read_to_string(content_path).map_err(|e| SeaError::io(content_path, e))?;
    let malformed =
        |path: &Path, line: usize, reason: String| SeaError::MalformedRow { path: path.to_path_buf(), line, reason };

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut d: Option<usize> = None;
    for (lineno, line) in content.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(malformed(
                content_path,
                lineno,
                format!("expected id, features, label; got {} fields", fields.len()),
            ));
        }
        let width = fields.len() - 2;
        match d {
            None => d = Some(width),
            Some(expected) if expected != width => {
                return Err(malformed(content_path, lineno, format!("{width} features, expected {expected}")));
            }
            _ => {}
        }
        let id = fields[0].to_string();
        if ids.contains_key(&id) {
            return Err(malformed(content_path, lineno, format!("duplicate paper id {id}")));
        }
        ids.insert(id, raw_labels.len());
        for (col, token) in fields[1..=width].iter().enumerate() {
            let v: f64 = token
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| malformed(content_path, lineno, format!("feature {col} is {token:?}")))?;
            values.push(v);
        }
        raw_labels.push(fields[width + 1].to_string());
    }
    let n = raw_labels.len();
    let d = d.ok_or_else(|| malformed(content_path, 0, "no rows".into()))?;

    let names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|s| index[s.as_str()]).collect();

    let cites = fs::read_to_string(cites_path).map_err(|e| SeaError::io(cites_path, e))?;
    let mut stats = LoadStats::default();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (lineno, line) in cites.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(malformed(cites_path, lineno, format!("expected 2 ids, got {} fields", fields.len())));
        }
        stats.raw_citations += 1;
        let (Some(&a), Some(&b)) = (ids.get(fields[0]), ids.get(fields[1])) else {
            stats.unknown_citations += 1;
            continue;
        };
        if a == b {
            stats.self_citations += 1;
        } else if !pairs.insert((a.min(b), a.max(b))) {
            stats.merged_citations += 1;
        }
    }
    if stats.unknown_citations > 0 {
        warn!("{}: dropped {} citations naming unknown papers", cites_path.display(), stats.unknown_citations);
    }
    stats.edges = pairs.len();

    let graph = WeightedGraph::unweighted(n, pairs)?;
    let features = FeatureMatrix::new(
        Array2::from_shape_vec((n, d), values).map_err(|e| SeaError::InvalidFeatures(e.to_string()))?,
    )?;
    let classes = names.len();
    let data = Dataset::new("cora", graph, features, labels, classes, Split::empty(n), names)?;
    Ok((data, stats))
}
