//! The full network: question encoder, CBN-modulated visual pipeline and classifier.

use cbnr_tensor::{Scalar, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{
    with_coords, BatchNorm, CbnOutput, Conv2d, Embedding, Gru, Linear, Mode, Module, Param, ResidualBlock,
    RunningStats, StatTrace,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub embedding: Embedding<T>,
    pub gru: Gru<T>,
    pub stem1: Conv2d<T>,
    pub stem1_bn: BatchNorm<T>,
    pub stem2: Conv2d<T>,
    pub stem2_bn: BatchNorm<T>,
    pub entry: Conv2d<T>,
    pub entry_bn: BatchNorm<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub classifier: Conv2d<T>,
    pub classifier_bn: BatchNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

/// Nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub e_q: Var,
    /// CBN layers in network order (block 0 layer 1, block 0 layer 2, ...).
    pub cbn: Vec<CbnOutput>,
    pub trace: StatTrace,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Model<T> {
    /// Initializes every parameter from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let rng = &mut rng;
        let embedding = Embedding::new("embed", c.vocab_size, c.embed_dim, rng);
        let gru = Gru::new("gru", c.embed_dim, c.gru_hidden, rng);
        let stem1 = Conv2d::new("stem1", 3, c.stem_channels, 3, 2, false, rng);
        let stem2 = Conv2d::new("stem2", c.stem_channels, c.stem_channels, 3, 2, false, rng);
        let entry = Conv2d::new("entry", c.stem_channels + 2, c.block_channels, 3, 1, false, rng);
        let blocks = (0..c.n_blocks)
            .map(|i| ResidualBlock::new(&format!("block{i}"), c.block_channels, c.block_channels, c.gru_hidden, c.eps, rng))
            .collect();
        let classifier = Conv2d::new("classifier", c.block_channels + 2, c.classifier_channels, 1, 1, false, rng);
        let fc1 = Linear::new("fc1", c.classifier_channels, c.mlp_hidden, rng);
        let fc2 = Linear::new("fc2", c.mlp_hidden, c.n_answers, rng);
        Ok(Model {
            stem1_bn: BatchNorm::new("stem1_bn", c.stem_channels, c.eps),
            stem2_bn: BatchNorm::new("stem2_bn", c.stem_channels, c.eps),
            entry_bn: BatchNorm::new("entry_bn", c.block_channels, c.eps),
            classifier_bn: BatchNorm::new("classifier_bn", c.classifier_channels, c.eps),
            config,
            embedding,
            gru,
            stem1,
            stem2,
            entry,
            blocks,
            classifier,
            fc1,
            fc2,
        })
    }

    pub fn with_seed(mut config: ModelConfig, seed: u64) -> Result<Self> {
        config.seed = seed;
        Self::new(config)
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn find_param(&self, name: &str) -> Option<&Param<T>> {
        self.params().into_iter().find(|p| p.name == name)
    }

    /// Final GRU state `[N, gru_hidden]` for a batch of token sequences.
    pub fn encode_question(&self, tape: &mut Tape<T>, tokens: &[Vec<u32>], mode: Mode) -> Result<Var> {
        self.gru.encode(tape, &self.embedding, tokens, mode)
    }

    /// `(delta_gamma, beta)` of every CBN layer, computed from the question alone.
    pub fn cbn_params(&self, tape: &mut Tape<T>, e_q: Var, mode: Mode) -> Result<Vec<(Var, Var)>> {
        self.blocks.iter().flat_map(|b| b.cbn_layers()).map(|l| l.proj.predict(tape, e_q, mode)).collect()
    }

    /// Full forward pass with `images` `[N,3,S,S]` bound as a constant.
    pub fn forward(&self, tape: &mut Tape<T>, images: &Tensor<T>, tokens: &[Vec<u32>], mode: Mode) -> Result<ForwardOutput> {
        let x = tape.constant(images.clone());
        self.forward_var(tape, x, tokens, mode)
    }

    pub fn forward_var(&self, tape: &mut Tape<T>, images: Var, tokens: &[Vec<u32>], mode: Mode) -> Result<ForwardOutput> {
        let s = tape.shape(images).to_vec();
        let size = self.config.image_size;
        if s != [tokens.len(), 3, size, size] {
            return Err(Error::Contract(format!(
                "images {s:?} do not match {} questions of {size}x{size} pixels",
                tokens.len()
            )));
        }
        let mut trace = StatTrace::new();
        let e_q = self.encode_question(tape, tokens, mode)?;

        let mut x = images;
        for (conv, bn) in [(&self.stem1, &self.stem1_bn), (&self.stem2, &self.stem2_bn)] {
            x = conv.forward(tape, x, mode)?;
            x = bn.forward(tape, x, mode, &mut trace)?;
            x = tape.relu(x);
        }
        x = with_coords(tape, x)?;
        x = self.entry.forward(tape, x, mode)?;
        x = self.entry_bn.forward(tape, x, mode, &mut trace)?;
        x = tape.relu(x);

        let mut cbn = Vec::with_capacity(2 * self.blocks.len());
        for block in &self.blocks {
            let out = block.forward(tape, x, e_q, mode, &mut trace)?;
            cbn.extend(out.cbn);
            x = out.out;
        }

        x = with_coords(tape, x)?;
        x = self.classifier.forward(tape, x, mode)?;
        x = self.classifier_bn.forward(tape, x, mode, &mut trace)?;
        x = tape.relu(x);
        let pooled = tape.global_max_pool(x)?;
        let h = self.fc1.forward(tape, pooled, mode)?;
        let h = tape.relu(h);
        let logits = self.fc2.forward(tape, h, mode)?;
        Ok(ForwardOutput { logits, e_q, cbn, trace })
    }

    /// Folds the batch moments of a training pass into the running statistics.
    pub fn absorb_stats(&mut self, tape: &Tape<T>, trace: &StatTrace) -> Result<()> {
        let momentum = self.config.momentum;
        let mut stats = self.stats_mut();
        for (name, var) in trace {
            let (mean, var) = tape
                .batch_moments(*var)
                .ok_or_else(|| Error::Contract(format!("{name}: traced node is not a batch normalization")))?;
            let s = stats
                .iter_mut()
                .find(|s| s.name == *name)
                .ok_or_else(|| Error::Contract(format!("no running statistics named {name}")))?;
            s.update(mean, var, momentum);
        }
        Ok(())
    }

    /// Eval-mode logits `[N, n_answers]`.
    pub fn logits(&self, images: &Tensor<T>, tokens: &[Vec<u32>]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, images, tokens, Mode::Eval)?;
        Ok(tape.tensor(out.logits))
    }

    /// Eval-mode answer ids.
    pub fn predict(&self, images: &Tensor<T>, tokens: &[Vec<u32>]) -> Result<Vec<usize>> {
        let logits = self.logits(images, tokens)?;
        Ok(logits.data().chunks_exact(self.config.n_answers).map(argmax).collect())
    }

    /// Zeroes every CBN projection so no question information reaches the image pipeline.
    pub fn zero_cbn_projections(&mut self) {
        for b in &mut self.blocks {
            b.cbn1.proj.zero();
            b.cbn2.proj.zero();
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut out = Model::<U>::new(self.config.clone()).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.cast::<U>().with_grad();
        }
        for (dst, src) in out.stats_mut().into_iter().zip(self.stats()) {
            dst.mean = src.mean.iter().map(|v| U::from_f64(v.as_f64())).collect();
            dst.var = src.var.iter().map(|v| U::from_f64(v.as_f64())).collect();
        }
        out
    }
}

impl<T> Module<T> for Model<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.embedding.params();
        v.extend(self.gru.params());
        v.extend(self.stem1.params());
        v.extend(self.stem1_bn.params());
        v.extend(self.stem2.params());
        v.extend(self.stem2_bn.params());
        v.extend(self.entry.params());
        v.extend(self.entry_bn.params());
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.classifier.params());
        v.extend(self.classifier_bn.params());
        v.extend(self.fc1.params());
        v.extend(self.fc2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.embedding.params_mut();
        v.extend(self.gru.params_mut());
        v.extend(self.stem1.params_mut());
        v.extend(self.stem1_bn.params_mut());
        v.extend(self.stem2.params_mut());
        v.extend(self.stem2_bn.params_mut());
        v.extend(self.entry.params_mut());
        v.extend(self.entry_bn.params_mut());
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.classifier.params_mut());
        v.extend(self.classifier_bn.params_mut());
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }

    fn stats(&self) -> Vec<&RunningStats<T>> {
        let mut v = vec![&self.stem1_bn.stats, &self.stem2_bn.stats, &self.entry_bn.stats];
        for b in &self.blocks {
            v.extend(b.stats());
        }
        v.push(&self.classifier_bn.stats);
        v
    }

    fn stats_mut(&mut self) -> Vec<&mut RunningStats<T>> {
        let mut v = vec![&mut self.stem1_bn.stats, &mut self.stem2_bn.stats, &mut self.entry_bn.stats];
        for b in &mut self.blocks {
            v.extend(b.stats_mut());
        }
        v.push(&mut self.classifier_bn.stats);
        v
    }
}
