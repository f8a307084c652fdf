//! Answerers (model, oracle and baselines) and per-family / per-length reports.

use std::collections::BTreeMap;

use cbnr_tensor::Scalar;
use miniclevr::{answer_list, execute, Family, SplitData, NUM_ANSWERS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::Batch;

/// Samples per evaluation shard.
pub const EVAL_CHUNK: usize = 256;

/// Anything that maps dataset questions to answer ids.
pub trait Answerer: Sync {
    fn answer(&self, data: &SplitData, indices: &[usize]) -> Result<Vec<usize>>;
}

/// Eval-mode predictions of a model.
pub struct ModelAnswerer<'a, T> {
    pub model: &'a Model<T>,
}

impl<'a, T> ModelAnswerer<'a, T> {
    pub fn new(model: &'a Model<T>) -> Self {
        ModelAnswerer { model }
    }
}

impl<T: Scalar> Answerer for ModelAnswerer<'_, T> {
    fn answer(&self, data: &SplitData, indices: &[usize]) -> Result<Vec<usize>> {
        let batch = Batch::<T>::gather(data, indices);
        self.model.predict(&batch.images, &batch.tokens)
    }
}

/// Answers by executing the stored program on the stored scene.
pub struct OracleAnswerer;

impl Answerer for OracleAnswerer {
    fn answer(&self, data: &SplitData, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| {
                let q = &data.questions[i];
                let a = execute(&q.program, &data.scenes[q.image_index])
                    .map_err(|e| Error::Contract(format!("question {i}: {e}")))?;
                a.index().ok_or_else(|| Error::Contract(format!("question {i}: answer {a} outside the answer list")))
            })
            .collect()
    }
}

/// Uniformly random answers; the answer for question `i` depends only on `(seed, i)`.
pub struct RandomAnswerer {
    pub seed: u64,
}

impl Answerer for RandomAnswerer {
    fn answer(&self, _data: &SplitData, indices: &[usize]) -> Result<Vec<usize>> {
        Ok(indices
            .iter()
            .map(|&i| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(i as u64);
                rng.gen_range(0..NUM_ANSWERS)
            })
            .collect())
    }
}

/// The most frequent training answer of each question family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPrior {
    pub answers: BTreeMap<Family, usize>,
}

impl FamilyPrior {
    /// Ties go to the lower answer id.
    pub fn fit(train: &SplitData) -> Self {
        let mut counts: BTreeMap<Family, [usize; NUM_ANSWERS]> = BTreeMap::new();
        for q in &train.questions {
            counts.entry(q.family).or_insert([0; NUM_ANSWERS])[q.answer] += 1;
        }
        let answers = counts.into_iter().map(|(f, c)| (f, crate::model::argmax(&c))).collect();
        FamilyPrior { answers }
    }
}

impl Answerer for FamilyPrior {
    fn answer(&self, data: &SplitData, indices: &[usize]) -> Result<Vec<usize>> {
        Ok(indices.iter().map(|&i| self.answers.get(&data.questions[i].family).copied().unwrap_or(0)).collect())
    }
}

/// Answers every question of `data`, sharded across the rayon pool and
/// merged in index order.
pub fn predict_all(answerer: &dyn Answerer, data: &SplitData) -> Result<Vec<usize>> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let shards: Vec<Result<Vec<usize>>> = indices.par_chunks(EVAL_CHUNK).map(|c| answerer.answer(data, c)).collect();
    let mut out = Vec::with_capacity(data.len());
    for s in shards {
        out.extend(s?);
    }
    Ok(out)
}

pub fn accuracy(answerer: &dyn Answerer, data: &SplitData) -> Result<f64> {
    let pred = predict_all(answerer, data)?;
    let correct = pred.iter().zip(&data.questions).filter(|(p, q)| **p == q.answer).count();
    Ok(correct as f64 / data.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Tally {
    fn new(total: usize, correct: usize) -> Self {
        Tally { total, correct, accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    pub total: usize,
    pub errors: usize,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub total: usize,
    pub correct: usize,
    pub overall: f64,
    /// Keyed by family name; families absent from the split are omitted.
    pub families: BTreeMap<String, Tally>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub by_length: Option<Vec<LengthRow>>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub answers: Vec<String>,
}

/// Scores `predictions` against the stored answers.
pub fn report(data: &SplitData, predictions: &[usize], by_length: bool) -> EvalReport {
    let mut fam: BTreeMap<Family, (usize, usize)> = BTreeMap::new();
    let mut len: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut confusion = vec![vec![0; NUM_ANSWERS]; NUM_ANSWERS];
    let mut correct = 0;
    for (q, &p) in data.questions.iter().zip(predictions) {
        let ok = p == q.answer;
        correct += ok as usize;
        let f = fam.entry(q.family).or_default();
        f.0 += 1;
        f.1 += ok as usize;
        let l = len.entry(q.program_length).or_default();
        l.0 += 1;
        l.1 += !ok as usize;
        if p < NUM_ANSWERS {
            confusion[q.answer][p] += 1;
        }
    }
    let total = data.len();
    EvalReport {
        split: data.split.name().to_string(),
        total,
        correct,
        overall: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        families: fam.into_iter().map(|(f, (t, c))| (f.name().to_string(), Tally::new(t, c))).collect(),
        by_length: by_length.then(|| {
            len.into_iter()
                .map(|(length, (t, e))| LengthRow { length, total: t, errors: e, error_rate: e as f64 / t as f64 })
                .collect()
        }),
        confusion,
        answers: answer_list().into_iter().map(String::from).collect(),
    }
}

pub fn evaluate(answerer: &dyn Answerer, data: &SplitData, by_length: bool) -> Result<EvalReport> {
    let pred = predict_all(answerer, data)?;
    Ok(report(data, &pred, by_length))
}

impl EvalReport {
    pub fn families_csv(&self) -> String {
        let mut s = String::from("family,total,correct,accuracy\n");
        for (f, t) in &self.families {
            s.push_str(&format!("{f},{},{},{:.6}\n", t.total, t.correct, t.accuracy));
        }
        s.push_str(&format!("overall,{},{},{:.6}\n", self.total, self.correct, self.overall));
        s
    }

    pub fn length_csv(&self) -> Option<String> {
        let rows = self.by_length.as_ref()?;
        let mut s = String::from("program_length,total,errors,error_rate\n");
        for r in rows {
            s.push_str(&format!("{},{},{},{:.6}\n", r.length, r.total, r.errors, r.error_rate));
        }
        Some(s)
    }
}
