//! CBN parameter vectors per question.

use cbnr::{Mode, Model};
use cbnr_tensor::{Scalar, Tape};
use miniclevr::{Answer, SplitData};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::Result;

/// One CBN layer's `(gamma_hat, beta)` for one question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbnRow {
    pub sample_id: usize,
    /// Network order: block 0 layer 1, block 0 layer 2, block 1 layer 1, ...
    pub layer: usize,
    pub family: String,
    /// Label of the program's terminal node, e.g. `query_color`.
    pub function: String,
    pub answer: String,
    /// `1 + delta_gamma`
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl CbnRow {
    /// `[gamma, beta]` concatenated.
    pub fn vector(&self) -> Vec<f64> {
        let mut v = self.gamma.clone();
        v.extend_from_slice(&self.beta);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbnDump {
    pub n_layers: usize,
    pub channels: usize,
    pub rows: Vec<CbnRow>,
}

impl CbnDump {
    pub fn layer(&self, layer: usize) -> impl Iterator<Item = &CbnRow> {
        self.rows.iter().filter(move |r| r.layer == layer)
    }

    pub fn to_csv(&self) -> String {
        let c = self.channels;
        let mut s = String::from("sample_id,layer,family,function,answer");
        for i in 0..c {
            s.push_str(&format!(",gamma{i}"));
        }
        for i in 0..c {
            s.push_str(&format!(",beta{i}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}", r.sample_id, r.layer, r.family, r.function, r.answer));
            for v in r.gamma.iter().chain(&r.beta) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Sorted indices of `n` questions drawn without replacement (all of them
/// when `n >= len`).
pub fn select_samples(len: usize, n: usize, seed: u64) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, len, n).into_vec();
    idx.sort_unstable();
    idx
}

/// CBN parameters of `n` random questions of `data`. Only the question
/// encoder and the projections run; images are never read.
pub fn dump_cbn_params<T: Scalar>(model: &Model<T>, data: &SplitData, n: usize, seed: u64) -> Result<CbnDump> {
    let indices = select_samples(data.len(), n, seed);
    let c = model.config.block_channels;
    let n_layers = 2 * model.config.n_blocks;
    let mut rows = Vec::with_capacity(indices.len() * n_layers);
    for chunk in indices.chunks(cbnr::eval::EVAL_CHUNK) {
        let tokens: Vec<Vec<u32>> = chunk.iter().map(|&i| data.questions[i].tokens.clone()).collect();
        let mut tape = Tape::new();
        let e_q = model.encode_question(&mut tape, &tokens, Mode::Eval)?;
        let params = model.cbn_params(&mut tape, e_q, Mode::Eval)?;
        for (k, &i) in chunk.iter().enumerate() {
            let q = &data.questions[i];
            let function = q.program.terminal().map(|f| f.label()).unwrap_or_default();
            let answer = Answer::from_index(q.answer).map_or("?", Answer::name).to_string();
            for (layer, (dg, beta)) in params.iter().enumerate() {
                let row = |v| tape.value(v)[k * c..(k + 1) * c].iter().map(|x: &T| x.as_f64()).collect::<Vec<f64>>();
                rows.push(CbnRow {
                    sample_id: i,
                    layer,
                    family: q.family.name().to_string(),
                    function: function.clone(),
                    answer: answer.clone(),
                    gamma: row(*dg).into_iter().map(|d| 1.0 + d).collect(),
                    beta: row(*beta),
                });
            }
        }
    }
    Ok(CbnDump { n_layers, channels: c, rows })
}
