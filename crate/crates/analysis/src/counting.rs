//! How far off are wrong answers to count questions?

use std::collections::BTreeMap;

use miniclevr::{Answer, Family, SplitData};
use serde::Serialize;

/// Published share of the full-scale model's counting mistakes that are off by one.
pub const PAPER_OFF_BY_ONE_SHARE: f64 = 0.94;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingProfile {
    pub count_questions: usize,
    pub mistakes: usize,
    /// Wrong answers that are not numbers at all.
    pub non_numeric_mistakes: usize,
    /// `|predicted - true|` to number of numeric mistakes.
    pub histogram: BTreeMap<usize, usize>,
    /// `None` when there are no numeric mistakes.
    pub off_by_one_share: Option<f64>,
    pub paper_off_by_one_share: f64,
}

impl CountingProfile {
    pub fn numeric_mistakes(&self) -> usize {
        self.histogram.values().sum()
    }

    pub fn shares(&self) -> BTreeMap<usize, f64> {
        let n = self.numeric_mistakes() as f64;
        self.histogram.iter().map(|(&d, &c)| (d, c as f64 / n)).collect()
    }
}

/// Tabulates count-question mistakes of `predictions` (answer ids aligned with `data`).
pub fn counting_error_profile(data: &SplitData, predictions: &[usize]) -> CountingProfile {
    let mut p = CountingProfile {
        count_questions: 0,
        mistakes: 0,
        non_numeric_mistakes: 0,
        histogram: BTreeMap::new(),
        off_by_one_share: None,
        paper_off_by_one_share: PAPER_OFF_BY_ONE_SHARE,
    };
    for (q, &pred) in data.questions.iter().zip(predictions) {
        if q.family != Family::Count {
            continue;
        }
        p.count_questions += 1;
        if pred == q.answer {
            continue;
        }
        p.mistakes += 1;
        let truth = Answer::from_index(q.answer).and_then(Answer::as_count).expect("count questions have numeric answers");
        match Answer::from_index(pred).and_then(Answer::as_count) {
            Some(n) => *p.histogram.entry(n.abs_diff(truth)).or_default() += 1,
            None => p.non_numeric_mistakes += 1,
        }
    }
    let numeric = p.numeric_mistakes();
    if numeric > 0 {
        p.off_by_one_share = Some(p.histogram.get(&1).copied().unwrap_or(0) as f64 / numeric as f64);
    }
    p
}
