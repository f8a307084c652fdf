//! Adam with coupled L2 decay, the epoch loop and early stopping.

use std::time::Instant;

use cbnr_tensor::{Gradients, Scalar, Tape, Tensor};
use miniclevr::SplitData;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{accuracy, ModelAnswerer};
use crate::model::{argmax, Model};
use crate::nn::{Mode, Module, Param};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Stop after the epoch during which this many seconds have elapsed.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            weight_decay: 1e-5,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            max_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("learning_rate", self.learning_rate), ("adam_eps", self.adam_eps)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("{name} must be a non-negative number")));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, max_epochs and patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, aligned with [`Module::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<M: Module<T>>(module: &M) -> Self {
        let zeros = || module.params().iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Adam { step: 0, m: zeros(), v: zeros() }
    }

    /// One update of every parameter. Fails without touching anything when
    /// a gradient contains a non-finite value. Parameters without a gradient
    /// see a zero gradient (plus decay).
    pub fn update(&mut self, params: Vec<&mut Param<T>>, grads: &mut Gradients<T>, cfg: &TrainConfig) -> Result<()> {
        let mut gs: Vec<Option<Vec<T>>> = Vec::with_capacity(params.len());
        for p in &params {
            let g = grads.take_named(&p.name);
            if let Some(g) = &g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { tensor: p.name.clone(), step: self.step + 1 });
                }
            }
            gs.push(g);
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (b1, b2, lr, eps) = (T::from_f64(b1), T::from_f64(b2), T::from_f64(cfg.learning_rate), T::from_f64(cfg.adam_eps));
        let (c1, c2) = (T::from_f64(c1), T::from_f64(c2));
        let one = T::one();
        for (k, (p, g)) in params.into_iter().zip(gs).enumerate() {
            let decay = if p.decay { T::from_f64(cfg.weight_decay) } else { T::zero() };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let theta = p.value.data_mut();
            for i in 0..theta.len() {
                let gi = g.as_ref().map_or(T::zero(), |g| g[i]) + decay * theta[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Images, questions and answers of one minibatch.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub tokens: Vec<Vec<u32>>,
    pub answers: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn gather(data: &SplitData, indices: &[usize]) -> Batch<T> {
        let n = data.image_len();
        let mut images = Vec::with_capacity(indices.len() * n);
        let mut tokens = Vec::with_capacity(indices.len());
        let mut answers = Vec::with_capacity(indices.len());
        for &i in indices {
            let q = &data.questions[i];
            images.extend(data.image(q.image_index).iter().map(|&v| T::from_f64(v as f64)));
            tokens.push(q.tokens.clone());
            answers.push(q.answer);
        }
        let s = data.image_size;
        Batch { images: Tensor::new(vec![indices.len(), 3, s, s], images).expect("image extents"), tokens, answers }
    }
}

/// Loss and correct-prediction count of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
}

/// Forward, backward and one Adam update on `batch`; running statistics are
/// updated from the batch moments.
pub fn train_step<T: Scalar>(model: &mut Model<T>, opt: &mut Adam<T>, batch: &Batch<T>, cfg: &TrainConfig) -> Result<StepStats> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch.images, &batch.tokens, Mode::Train)?;
    let loss = tape.softmax_cross_entropy(out.logits, &batch.answers)?;
    let loss_value = tape.value(loss)[0].as_f64();
    if !loss_value.is_finite() {
        return Err(Error::NonFiniteLoss { step: opt.step + 1 });
    }
    let k = model.config.n_answers;
    let correct = tape
        .value(out.logits)
        .chunks_exact(k)
        .zip(&batch.answers)
        .filter(|(row, &a)| argmax(row) == a)
        .count();
    model.absorb_stats(&tape, &out.trace)?;
    let mut grads = tape.backward(loss)?;
    opt.update(model.params_mut(), &mut grads, cfg)?;
    Ok(StepStats { loss: loss_value, correct })
}

/// Patience-based stopping on a score where larger is better. Ties keep the
/// earlier epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<(usize, f64)>,
    pub bad_epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, bad_epochs: 0 }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = self.best.is_none_or(|(_, b)| score > b);
        if improved {
            self.best = Some((epoch, score));
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        StopDecision { improved, stop: self.bad_epochs >= self.patience }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub seconds: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_acc,lr,seconds";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{},{:.3}",
            self.epoch, self.train_loss, self.train_acc, self.val_acc, self.lr, self.seconds
        )
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Called at the end of every epoch before the best model is replaced.
/// An error aborts training.
pub trait TrainObserver<T> {
    fn epoch_end(&mut self, _record: &EpochRecord, _model: &Model<T>, _opt: &Adam<T>, _improved: bool) -> Result<()> {
        Ok(())
    }
}

impl<T> TrainObserver<T> for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best: Model<T>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub last: Model<T>,
    pub optimizer: Adam<T>,
    pub history: Vec<EpochRecord>,
}

/// Shuffled order of `n` samples for `epoch`, a pure function of the seed.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains with early stopping on validation accuracy. `opt` continues a
/// previous run when given; epochs are then numbered from `start_epoch + 1`.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    opt: Option<Adam<T>>,
    start_epoch: usize,
    train_data: &SplitData,
    val_data: &SplitData,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::Contract("training and validation splits must be non-empty".into()));
    }
    let mut opt = opt.unwrap_or_else(|| Adam::new(&model));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let start = Instant::now();
    for epoch in start_epoch + 1..=start_epoch + cfg.max_epochs {
        let order = epoch_order(train_data.len(), cfg.seed, epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            // a trailing batch of one sample cannot be batch-normalized
            if chunk.len() < 2 {
                continue;
            }
            let batch = Batch::<T>::gather(train_data, chunk);
            let s = train_step(&mut model, &mut opt, &batch, cfg)?;
            loss_sum += s.loss * chunk.len() as f64;
            correct += s.correct;
            seen += chunk.len();
        }
        let val_acc = accuracy(&ModelAnswerer::new(&model), val_data)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: correct as f64 / seen.max(1) as f64,
            val_acc,
            lr: cfg.learning_rate,
            seconds: start.elapsed().as_secs_f64(),
        };
        let decision = stopper.observe(epoch, val_acc);
        observer.epoch_end(&record, &model, &opt, decision.improved)?;
        if decision.improved {
            best = model.clone();
        }
        history.push(record);
        let out_of_time = cfg.max_seconds.is_some_and(|limit| start.elapsed().as_secs_f64() >= limit);
        if decision.stop || out_of_time {
            break;
        }
    }
    let (best_epoch, best_val_acc) = stopper.best.expect("at least one epoch ran");
    Ok(TrainOutcome { best, best_epoch, best_val_acc, last: model, optimizer: opt, history })
}
