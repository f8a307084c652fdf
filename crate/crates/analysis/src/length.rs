//! Error rate by program length.

use std::collections::BTreeMap;

use miniclevr::SplitData;
use serde::Serialize;

/// Programs of at most this many steps count as short.
pub const SHORT_MAX: usize = 10;
/// Programs of at least this many steps count as long.
pub const LONG_MIN: usize = 17;
/// Published error rates of the full-scale model on short and long programs.
pub const PAPER_SHORT_ERROR: f64 = 0.015;
pub const PAPER_LONG_ERROR: f64 = 0.055;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBucket {
    pub length: usize,
    pub total: usize,
    pub errors: usize,
    /// `None` for an empty bucket.
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeError {
    pub total: usize,
    pub errors: usize,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthTable {
    /// Every length from the shortest to the longest observed program.
    pub buckets: Vec<LengthBucket>,
    pub short: RangeError,
    pub long: RangeError,
    pub paper_short_error: f64,
    pub paper_long_error: f64,
}

fn rate(errors: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| errors as f64 / total as f64)
}

pub fn error_by_length(data: &SplitData, predictions: &[usize]) -> LengthTable {
    let mut by: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (q, &p) in data.questions.iter().zip(predictions) {
        let e = by.entry(q.program_length).or_default();
        e.0 += 1;
        e.1 += (p != q.answer) as usize;
    }
    let range = |keep: &dyn Fn(usize) -> bool| {
        let (t, e) = by.iter().filter(|(l, _)| keep(**l)).fold((0, 0), |acc, (_, v)| (acc.0 + v.0, acc.1 + v.1));
        RangeError { total: t, errors: e, error_rate: rate(e, t) }
    };
    let buckets = match (by.keys().next(), by.keys().next_back()) {
        (Some(&lo), Some(&hi)) => (lo..=hi)
            .map(|length| {
                let (total, errors) = by.get(&length).copied().unwrap_or_default();
                LengthBucket { length, total, errors, error_rate: rate(errors, total) }
            })
            .collect(),
        _ => Vec::new(),
    };
    LengthTable {
        buckets,
        short: range(&|l| l <= SHORT_MAX),
        long: range(&|l| l >= LONG_MIN),
        paper_short_error: PAPER_SHORT_ERROR,
        paper_long_error: PAPER_LONG_ERROR,
    }
}

impl LengthTable {
    /// `program_length,total,errors,error_rate`; empty buckets leave the rate blank.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("program_length,total,errors,error_rate\n");
        for b in &self.buckets {
            let r = b.error_rate.map(|r| format!("{r:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{},{},{r}\n", b.length, b.total, b.errors));
        }
        s
    }
}
