//! k-nearest-neighbour label purity of CBN parameter vectors.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dump::CbnDump;
use crate::{AnalysisError, Result};

pub const DEFAULT_K: usize = 10;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Per-point fraction of the `k` nearest neighbours (Euclidean, the point
/// itself excluded, equal distances broken by lower index) sharing its label.
pub fn neighbor_agreement<L: PartialEq + Sync>(vectors: &[Vec<f64>], labels: &[L], k: usize) -> Result<Vec<f64>> {
    assert_eq!(vectors.len(), labels.len(), "one label per vector");
    let n = vectors.len();
    if k == 0 || n < k + 1 {
        return Err(AnalysisError::TooFew { needed: k.max(1) + 1, got: n });
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(AnalysisError::Degenerate("fewer than two distinct labels".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (vectors[i].iter().zip(&vectors[j]).map(|(a, b)| (a - b) * (a - b)).sum(), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            d.select_nth_unstable_by(k - 1, cmp);
            d[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count() as f64 / k as f64
        })
        .collect())
}

/// Mean neighbour agreement over all points, in `[0, 1]`.
pub fn label_purity<L: PartialEq + Sync>(vectors: &[Vec<f64>], labels: &[L], k: usize) -> Result<f64> {
    let a = neighbor_agreement(vectors, labels, k)?;
    Ok(a.iter().sum::<f64>() / a.len() as f64)
}

/// Purity expected from labels alone: `sum_l p_l^2`.
pub fn label_baseline<L: Ord>(labels: &[L]) -> f64 {
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    counts.values().map(|&c| (c as f64 / n).powi(2)).sum()
}

/// 95% percentile bootstrap interval of the mean of `values`.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

/// Attribute a terminal function works on, e.g. `query_color` -> `color`.
pub fn attribute_label(function: &str) -> Option<String> {
    let (head, attr) = function.split_once('_')?;
    matches!(head, "query" | "equal").then(|| attr.to_string()).filter(|a| a != "integer")
}

/// High-level operation of a terminal function.
pub fn function_label(function: &str) -> String {
    match function {
        "count" | "exist" => function.to_string(),
        "equal_integer" | "less_than" | "greater_than" => "compare_integer".into(),
        f if f.starts_with("query_") => "query".into(),
        f if f.starts_with("equal_") => "equal".into(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurityEntry {
    pub layer: usize,
    /// `attribute` or `function`
    pub labeling: String,
    pub points: usize,
    pub purity: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub label_baseline: f64,
    /// Set when every vector is identical, so neighbours are chosen by index only.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip)]
    agreement: Vec<(usize, f64)>,
}

/// Attribute-minus-function purity of one layer with a paired bootstrap
/// interval over the questions labelled under both schemes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contrast {
    pub layer: usize,
    pub points: usize,
    pub difference: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingReport {
    pub k: usize,
    pub entries: Vec<PurityEntry>,
    /// First and last CBN layer. Expected direction: positive in the first
    /// layer, negative in the last. Reported, not asserted.
    pub contrasts: Vec<Contrast>,
}

fn entry(dump: &CbnDump, layer: usize, labeling: &str, k: usize, seed: u64) -> PurityEntry {
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for r in dump.layer(layer) {
        let label = if labeling == "attribute" { attribute_label(&r.function) } else { Some(function_label(&r.function)) };
        if let Some(l) = label {
            ids.push(r.sample_id);
            vectors.push(r.vector());
            labels.push(l);
        }
    }
    let degenerate = vectors.windows(2).all(|w| w[0] == w[1]);
    let baseline = if labels.is_empty() { f64::NAN } else { label_baseline(&labels) };
    let mut e = PurityEntry {
        layer,
        labeling: labeling.into(),
        points: vectors.len(),
        purity: None,
        ci95: None,
        label_baseline: baseline,
        degenerate,
        note: degenerate.then(|| "all vectors identical; purity reflects the index tie rule only".to_string()),
        agreement: Vec::new(),
    };
    match neighbor_agreement(&vectors, &labels, k) {
        Ok(a) => {
            e.purity = Some(a.iter().sum::<f64>() / a.len() as f64);
            e.ci95 = Some(bootstrap_mean_ci(&a, BOOTSTRAP_RESAMPLES, seed ^ layer as u64));
            e.agreement = ids.into_iter().zip(a).collect();
        }
        Err(err) => e.note = Some(err.to_string()),
    }
    e
}

fn contrast(attr: &PurityEntry, func: &PurityEntry, seed: u64) -> Option<Contrast> {
    let f: BTreeMap<usize, f64> = func.agreement.iter().copied().collect();
    let diffs: Vec<f64> = attr.agreement.iter().filter_map(|(id, a)| f.get(id).map(|b| a - b)).collect();
    if diffs.is_empty() {
        return None;
    }
    Some(Contrast {
        layer: attr.layer,
        points: diffs.len(),
        difference: diffs.iter().sum::<f64>() / diffs.len() as f64,
        ci95: bootstrap_mean_ci(&diffs, BOOTSTRAP_RESAMPLES, seed.wrapping_add(7)),
    })
}

/// Purity of every layer under the attribute and the function labelling.
pub fn function_grouping_report(dump: &CbnDump, k: usize, seed: u64) -> GroupingReport {
    let mut entries = Vec::new();
    for layer in 0..dump.n_layers {
        for labeling in ["attribute", "function"] {
            entries.push(entry(dump, layer, labeling, k, seed));
        }
    }
    let mut layers = vec![0];
    if dump.n_layers > 1 {
        layers.push(dump.n_layers - 1);
    }
    let contrasts = layers
        .into_iter()
        .filter_map(|l| {
            let find = |lab: &str| entries.iter().find(|e| e.layer == l && e.labeling == lab);
            contrast(find("attribute")?, find("function")?, seed)
        })
        .collect();
    GroupingReport { k, entries, contrasts }
}
