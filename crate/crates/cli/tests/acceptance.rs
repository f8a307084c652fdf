//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! The generalization run trains the desk model on 20k samples for up to two
//! hours, so it only runs when `CBNR_ACCEPTANCE_FULL=1`; otherwise it is
//! reported as SKIP. Positional arguments filter criteria by name.

#[path = "../../miniclevr/tests/common/mod.rs"]
mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use cbnr::checkpoint::Checkpoint;
use cbnr::eval::{accuracy, predict_all};
use cbnr::gradcheck::check_params;
use cbnr::nn::*;
use cbnr::train::{train_step, Batch, EpochRecord};
use cbnr::{train, Adam, FamilyPrior, Model, ModelAnswerer, ModelConfig, Module, OracleAnswerer, TrainConfig};
use cbnr_analysis::consistency::{build_audit, consistency_audit};
use cbnr_analysis::purity::label_purity;
use cbnr_analysis::{dump_cbn_params, PAPER_TSNE_POINTS};
use cbnr_tensor::gradcheck::check_gradients;
use cbnr_tensor::{Tape, Tensor};
use miniclevr::dataset::DEFAULT_IMAGE_SIZE;
use miniclevr::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fail<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn random(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| r.gen_range(-1.0..1.0))
}

fn tensor_err(e: cbnr::Error) -> cbnr_tensor::TensorError {
    match e {
        cbnr::Error::Tensor(e) => e,
        other => cbnr_tensor::TensorError::Contract(other.to_string()),
    }
}

/// Shared small dataset: 64 training samples for the overfit run and a
/// 2000-sample validation split for the analysis pipeline.
fn shared_spec() -> DatasetSpec {
    DatasetSpec { n_train: 64, n_val: 2000, n_test: 200, seed: 11, image_size: DEFAULT_IMAGE_SIZE }
}

fn shared_dataset() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().expect("temp dir");
        build_dataset(&shared_spec(), dir.path(), true).expect("dataset");
        dir
    })
    .path()
}

// ---- criteria -------------------------------------------------------------

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let x = random(&[3, 4], &mut r);
    let mut lin = Linear::<f64>::new("l", 4, 2, &mut r);
    lin.bias.value = random(&[2], &mut r).with_grad();
    let rep = check_params(&mut lin, |m: &Linear<f64>, t: &mut Tape<f64>| {
        let v = t.constant(x.clone());
        m.forward(t, v, Mode::Train)
    }, H).map_err(fail)?;
    worst.push(("linear", rep.max_rel_error));

    let img = random(&[2, 3, 5, 5], &mut r);
    let mut conv = Conv2d::<f64>::new("c", 3, 2, 3, 2, true, &mut r);
    let rep = check_params(&mut conv, |m: &Conv2d<f64>, t: &mut Tape<f64>| {
        let v = t.constant(img.clone());
        m.forward(t, v, Mode::Train)
    }, H).map_err(fail)?;
    worst.push(("conv", rep.max_rel_error));
    let rep = check_gradients(&[img], |t, v| conv.forward(t, v[0], Mode::Train).map_err(tensor_err), H).map_err(fail)?;
    worst.push(("conv input", rep.max_rel_error));

    let mut bn = BatchNorm::<f64>::new("bn", 3, 1e-5);
    bn.gamma.value = random(&[3], &mut r).with_grad();
    bn.beta.value = random(&[3], &mut r).with_grad();
    let x = random(&[4, 3, 2, 2], &mut r);
    let rep = check_params(&mut bn, |m: &BatchNorm<f64>, t: &mut Tape<f64>| {
        let v = t.constant(x.clone());
        m.forward(t, v, Mode::Train, &mut Vec::new())
    }, H).map_err(fail)?;
    worst.push(("bn", rep.max_rel_error));
    let rep = check_gradients(&[x], |t, v| bn.forward(t, v[0], Mode::Train, &mut Vec::new()).map_err(tensor_err), H).map_err(fail)?;
    worst.push(("bn input", rep.max_rel_error));

    let mut cbn = CbnLayer::<f64>::new("cbn", 3, 2, 1e-5, &mut r);
    cbn.proj.bias.value = random(&[4], &mut r).with_grad();
    let (x, e) = (random(&[3, 2, 2, 2], &mut r), random(&[3, 3], &mut r));
    let rep = check_params(&mut cbn, |m: &CbnLayer<f64>, t: &mut Tape<f64>| {
        let (xv, ev) = (t.constant(x.clone()), t.constant(e.clone()));
        Ok(m.forward(t, xv, ev, Mode::Train, &mut Vec::new())?.out)
    }, H).map_err(fail)?;
    worst.push(("cbn", rep.max_rel_error));
    let rep = check_gradients(&[x, e], |t, v| Ok(cbn.forward(t, v[0], v[1], Mode::Train, &mut Vec::new()).map_err(tensor_err)?.out), H)
        .map_err(fail)?;
    worst.push(("cbn inputs", rep.max_rel_error));

    let gru = Gru::<f64>::new("g", 3, 4, &mut r);
    let rep = check_gradients(&[random(&[2, 3], &mut r), random(&[2, 4], &mut r)], |t, v| {
        let g = gru.bind(t, Mode::Train);
        Gru::step(t, &g, v[0], v[1]).map_err(tensor_err)
    }, H).map_err(fail)?;
    worst.push(("gru step", rep.max_rel_error));

    let mut block = ResidualBlock::<f64>::new("b", 2, 3, 4, 1e-5, &mut r);
    let (x, e) = (random(&[3, 2, 4, 4], &mut r), random(&[3, 4], &mut r));
    let rep = check_params(&mut block, |m: &ResidualBlock<f64>, t: &mut Tape<f64>| {
        let (xv, ev) = (t.constant(x.clone()), t.constant(e.clone()));
        Ok(m.forward(t, xv, ev, Mode::Train, &mut Vec::new())?.out)
    }, H).map_err(fail)?;
    worst.push(("residual block", rep.max_rel_error));

    let rep = check_gradients(&[random(&[2, 2, 3, 3], &mut r)], |t, v| with_coords(t, v[0]).map_err(tensor_err), H).map_err(fail)?;
    worst.push(("coord maps", rep.max_rel_error));

    // whole network: 1 block, 4 channels, 8x8 images, 3-word questions;
    // this covers the embedding and the full GRU encoder as well
    let mut cfg = ModelConfig::tiny(7, 3);
    cfg.seed = 2;
    let mut model = Model::<f64>::new(cfg).map_err(fail)?;
    for p in model.params_mut() {
        if p.name.ends_with("bias") || p.name.ends_with("gamma") || p.name.ends_with("beta") {
            p.value.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.3..0.3));
        }
    }
    let imgs = Tensor::from_fn(vec![3, 3, 8, 8], |_| r.gen_range(0.0..1.0));
    let qs = vec![vec![1, 2, 3], vec![4, 5, 6], vec![6, 1, 2]];
    let rep = check_params(&mut model, |m: &Model<f64>, t: &mut Tape<f64>| {
        let out = m.forward(t, &imgs, &qs, Mode::Train)?;
        Ok(t.softmax_cross_entropy(out.logits, &[0, 2, 1])?)
    }, H).map_err(fail)?;
    ensure!(rep.checked == model.num_params(), "checked {} of {} parameters", rep.checked, model.num_params());
    worst.push(("model params", rep.max_rel_error));
    let rep = check_gradients(&[imgs.clone()], |t, v| model.forward_var(t, v[0], &qs, Mode::Train).map(|o| o.logits).map_err(tensor_err), H)
        .map_err(fail)?;
    worst.push(("model images", rep.max_rel_error));

    let secs = start.elapsed().as_secs_f64();
    let (name, max) = worst.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    ensure!(max < 1e-4, "max relative error {max:.2e} in {name}");
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{} checks, max rel err {max:.1e} ({name}), {secs:.1} s", worst.len()))
}

fn cbn_algebra() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for n in [2, 5, 9] {
        let x = random(&[n, 4, 3, 3], &mut r);
        let mut t = Tape::new();
        let xv = t.constant(x);
        let zeros = t.constant(Tensor::zeros(vec![n, 4]));
        let cbn = cbn_apply(&mut t, xv, zeros, zeros, 1e-5).map_err(fail)?;
        let gamma = t.constant(Tensor::from_fn(vec![4], |_| 1.0));
        let beta = t.constant(Tensor::zeros(vec![4]));
        let bn = batch_norm_train(&mut t, xv, gamma, beta, 1e-5).map_err(fail)?;
        let same = t.value(cbn).iter().zip(t.value(bn)).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same, "CBN with zero offsets differs from BN at batch size {n}");
    }

    let vocab = Vocabulary::default().len();
    let mut model = Model::<f64>::new(ModelConfig { seed: 3, ..ModelConfig::desk(vocab, NUM_ANSWERS) }).map_err(fail)?;
    for p in model.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.05..0.05));
    }
    model.zero_cbn_projections();
    let mut t = Tape::new();
    let e = t.constant(random(&[4, model.config.gru_hidden], &mut r));
    for (dg, b) in model.cbn_params(&mut t, e, Mode::Eval).map_err(fail)? {
        ensure!(t.value(dg).iter().all(|&v| 1.0 + v == 1.0), "zero projections give a scale other than 1");
        ensure!(t.value(b).iter().all(|&v| v == 0.0), "zero projections give a nonzero shift");
    }
    let size = model.config.image_size;
    let img = Tensor::from_fn(vec![1, 3, size, size], |_| r.gen_range(0.0..1.0));
    let a = model.logits(&img, &[vec![3, 9, 4, 1]]).map_err(fail)?;
    let b = model.logits(&img, &[vec![7, 2]]).map_err(fail)?;
    ensure!(a.data() == b.data(), "logits depend on the question with zeroed projections");
    Ok("zero offsets bitwise equal BN; zeroed projections give unit scale and question-independent logits".into())
}

fn bn_moments() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for trial in 0..50 {
        let (n, c, hw) = (8 + trial % 9, 1 + trial % 5, 1 + trial % 4);
        // input variance stays well above eps, where the unit-variance bound is meaningful
        let scale = 10f64.powf(r.gen_range(-0.5..2.0));
        let shift = r.gen_range(-50.0..50.0);
        let x = Tensor::from_fn(vec![n, c, hw, hw], |_| shift + scale * r.gen_range(-1.0..1.0));
        let mut t = Tape::new();
        let xv = t.constant(x);
        let gamma = t.constant(Tensor::from_fn(vec![c], |_| 1.0));
        let beta = t.constant(Tensor::zeros(vec![c]));
        let y = batch_norm_train(&mut t, xv, gamma, beta, 1e-5).map_err(fail)?;
        let y = t.value(y);
        let plane = hw * hw;
        for ch in 0..c {
            let vals: Vec<f64> = (0..n).flat_map(|i| y[(i * c + ch) * plane..(i * c + ch + 1) * plane].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            worst_mean = worst_mean.max(m.abs());
            worst_var = worst_var.max((v - 1.0).abs());
        }
    }
    ensure!(worst_mean < 1e-5, "|mean| reached {worst_mean:.2e}");
    ensure!(worst_var < 1e-3, "|var - 1| reached {worst_var:.2e}");
    Ok(format!("50 batches, max |mean| {worst_mean:.1e}, max |var-1| {worst_var:.1e}"))
}

fn oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pairs = 0;
    while pairs < 1000 {
        let scene = Scene::from_seed(900_000 + pairs as u64, DEFAULT_IMAGE_SIZE);
        let family = *Family::ALL.choose(&mut rng).unwrap();
        let Ok(program) = sample_program(&mut rng, &scene, family) else { continue };
        let ours = execute(&program, &scene).ok();
        let reference = common::brute_force(&program, &scene);
        ensure!(ours.is_some() && ours == reference, "disagreement on {program}: {ours:?} vs {reference:?}");
        pairs += 1;
    }
    let audit = build_audit(500, 5, 32, &Vocabulary::default());
    let report = consistency_audit(&OracleAnswerer, &audit).map_err(fail)?;
    ensure!(report.scenes == 500, "audited {} scenes", report.scenes);
    ensure!(report.inconsistent == 0 && report.rate == 0.0, "oracle inconsistent on {} scenes", report.inconsistent);
    Ok("1000/1000 programs agree with brute force; oracle audit rate 0 over 500 scenes".into())
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn dataset_determinism() -> Outcome {
    let again = tempfile::tempdir().map_err(fail)?;
    build_dataset(&shared_spec(), again.path(), true).map_err(fail)?;
    let (a, b) = (tree(shared_dataset()), tree(again.path()));
    ensure!(!a.is_empty() && a == b, "rebuilt dataset differs");
    let ds = Dataset::open(shared_dataset()).map_err(fail)?;
    let mut checked = 0;
    for split in Split::ALL {
        let data = ds.load(split).map_err(fail)?;
        let report = ds.verify(&data);
        ensure!(report.is_clean(), "{split}: {report:?}");
        checked += data.len();
    }
    Ok(format!("{} files byte-identical; {checked} stored answers re-verified, 0 mismatches", a.len()))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let ds = Dataset::open(shared_dataset()).map_err(fail)?;
    let data = ds.load(Split::Train).map_err(fail)?;
    let cfg = ModelConfig { seed: 6, ..ModelConfig::desk(ds.vocabulary.len(), NUM_ANSWERS) };
    let mut model = Model::<f32>::new(cfg).map_err(fail)?;
    let mut opt = Adam::new(&model);
    let tcfg = TrainConfig::default();
    let batch = Batch::<f32>::gather(&data, &(0..data.len()).collect::<Vec<_>>());
    let mut acc = 0.0;
    for epoch in 1..=500 {
        train_step(&mut model, &mut opt, &batch, &tcfg).map_err(fail)?;
        if epoch % 10 == 0 {
            acc = accuracy(&ModelAnswerer::new(&model), &data).map_err(fail)?;
            if acc == 1.0 {
                let secs = start.elapsed().as_secs_f64();
                ensure!(secs < 300.0, "reached 100% but took {secs:.0} s");
                return Ok(format!("100% eval-mode train accuracy on 64 samples after {epoch} epochs, {secs:.0} s"));
            }
        }
    }
    Err(format!("train accuracy {acc:.4} after 500 epochs"))
}

struct Progress;

impl cbnr::train::TrainObserver<f32> for Progress {
    fn epoch_end(&mut self, r: &EpochRecord, _: &Model<f32>, _: &Adam<f32>, improved: bool) -> cbnr::Result<()> {
        eprintln!("  generalization epoch {}: {}{}", r.epoch, r.csv_row(), if improved { " *" } else { "" });
        Ok(())
    }
}

fn generalization() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(fail)?;
    build_dataset(&DatasetSpec::default(), dir.path(), true).map_err(fail)?;
    let ds = Dataset::open(dir.path()).map_err(fail)?;
    let (tr, va, te) = (ds.load(Split::Train).map_err(fail)?, ds.load(Split::Val).map_err(fail)?, ds.load(Split::Test).map_err(fail)?);
    let prior = accuracy(&FamilyPrior::fit(&tr), &te).map_err(fail)?;
    let cfg = ModelConfig::desk(ds.vocabulary.len(), NUM_ANSWERS);
    let tcfg = TrainConfig { max_seconds: Some(7000.0), ..TrainConfig::default() };
    let model = Model::<f32>::new(cfg).map_err(fail)?;
    let out = train(model, None, 0, &tr, &va, &tcfg, &mut Progress).map_err(fail)?;
    let acc = accuracy(&ModelAnswerer::new(&out.best), &te).map_err(fail)?;
    let hours = start.elapsed().as_secs_f64() / 3600.0;
    let detail = format!(
        "test accuracy {:.2}% (floor 85%, target 90%), family prior {:.2}%, margin {:+.1} points, best epoch {}, {hours:.2} h",
        100.0 * acc,
        100.0 * prior,
        100.0 * (acc - prior),
        out.best_epoch
    );
    ensure!(acc >= 0.85 && acc - prior >= 0.30, "{detail}");
    Ok(detail)
}

fn checkpoint_round_trip() -> Outcome {
    let spec = DatasetSpec { n_train: 40, n_val: 12, n_test: 1, seed: 7, image_size: 32 };
    let (tr, va) = (generate_split(&spec, Split::Train), generate_split(&spec, Split::Val));
    let mut cfg = ModelConfig::tiny(Vocabulary::default().len(), NUM_ANSWERS);
    cfg.image_size = 32;
    let tcfg = TrainConfig { batch_size: 16, max_epochs: 3, seed: 8, ..TrainConfig::default() };
    let run = || train(Model::<f32>::new(cfg.clone()).unwrap(), None, 0, &tr, &va, &tcfg, &mut ());
    let (a, b) = (run().map_err(fail)?, run().map_err(fail)?);
    let strip = |h: &[EpochRecord]| h.iter().map(|r| EpochRecord { seconds: 0.0, ..r.clone() }).collect::<Vec<_>>();
    ensure!(strip(&a.history) == strip(&b.history), "histories differ for identical seeds");

    let ckpt = Checkpoint { model: a.last.clone(), optimizer: Some(a.optimizer.clone()), epoch: a.history.len() };
    let dir = tempfile::tempdir().map_err(fail)?;
    let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    ckpt.save(&p1).map_err(fail)?;
    let loaded = Checkpoint::<f32>::load(&p1).map_err(fail)?;
    loaded.save(&p2).map_err(fail)?;
    ensure!(fs::read(&p1).map_err(fail)? == fs::read(&p2).map_err(fail)?, "save, load, save changed the bytes");
    let batch = Batch::<f32>::gather(&va, &(0..va.len()).collect::<Vec<_>>());
    let before = ckpt.model.logits(&batch.images, &batch.tokens).map_err(fail)?;
    let after = loaded.model.logits(&batch.images, &batch.tokens).map_err(fail)?;
    let exact = before.data().iter().zip(after.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    ensure!(exact, "eval logits changed across the round trip");
    Ok(format!("byte-identical re-save, logits bit-exact, {}-epoch history reproduced", a.history.len()))
}

fn analysis_pipeline() -> Outcome {
    // label purity on well-separated synthetic clusters
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let (mut points, mut labels) = (Vec::new(), Vec::new());
    for label in 0..4usize {
        for _ in 0..50 {
            points.push((0..6).map(|d| if d == label { 100.0 } else { 0.0 } + r.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            labels.push(label);
        }
    }
    let synthetic = label_purity(&points, &labels, 10).map_err(fail)?;
    ensure!(synthetic == 1.0, "purity {synthetic} on separated clusters");

    let ds = Dataset::open(shared_dataset()).map_err(fail)?;
    let data = ds.load(Split::Val).map_err(fail)?;
    let mut model = Model::<f32>::new(ModelConfig { seed: 10, ..ModelConfig::desk(ds.vocabulary.len(), NUM_ANSWERS) }).map_err(fail)?;
    let mut opt = Adam::new(&model);
    let train_data = ds.load(Split::Train).map_err(fail)?;
    let batch = Batch::<f32>::gather(&train_data, &(0..train_data.len()).collect::<Vec<_>>());
    for _ in 0..5 {
        train_step(&mut model, &mut opt, &batch, &TrainConfig::default()).map_err(fail)?;
    }

    // identical questions must produce identical rows
    let dump = dump_cbn_params(&model, &data, PAPER_TSNE_POINTS, 0).map_err(fail)?;
    let layers = dump.n_layers;
    ensure!(dump.rows.len() == PAPER_TSNE_POINTS * layers, "{} rows for {layers} layers", dump.rows.len());
    let mut duplicates = 0;
    for layer in 0..layers {
        let rows: Vec<_> = dump.layer(layer).collect();
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                if data.questions[a.sample_id].tokens == data.questions[b.sample_id].tokens {
                    ensure!(a.vector() == b.vector(), "samples {} and {} share a question but not CBN parameters", a.sample_id, b.sample_id);
                    duplicates += 1;
                }
            }
        }
    }
    ensure!(duplicates > 0, "no repeated questions among {} samples", PAPER_TSNE_POINTS);

    let out = tempfile::tempdir().map_err(fail)?;
    let ckpt = out.path().join("model.ckpt");
    Checkpoint { model, optimizer: None, epoch: 0 }.save(&ckpt).map_err(fail)?;
    let cli = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_cbnr")).args(args).output().map_err(fail)?;
        ensure!(o.status.success(), "cbnr {args:?}: {}", String::from_utf8_lossy(&o.stderr));
        Ok(())
    };
    let (d, c, o) = (shared_dataset().to_str().unwrap(), ckpt.to_str().unwrap(), out.path().to_str().unwrap());
    cli(&["analyze", "cbn-dump", "--ckpt", c, "--data", d, "--out", o])?;
    cli(&["analyze", "purity", "--dump", &format!("{o}/cbn_dump.csv"), "--out", o])?;
    cli(&["analyze", "count-errors", "--ckpt", c, "--data", d, "--out", o])?;
    cli(&["analyze", "length", "--ckpt", c, "--data", d, "--out", o])?;

    let csv = fs::read_to_string(out.path().join("cbn_dump.csv")).map_err(fail)?;
    ensure!(csv.lines().count() == 1 + PAPER_TSNE_POINTS * layers, "cbn_dump.csv has {} lines", csv.lines().count());
    let json = |name: &str| -> Result<serde_json::Value, String> {
        serde_json::from_str(&fs::read_to_string(out.path().join(name)).map_err(fail)?).map_err(fail)
    };
    let purity = json("purity.json")?;
    let entries = purity["entries"].as_array().ok_or("purity.json has no entries")?;
    ensure!(!entries.is_empty(), "no purity entries");
    for e in entries {
        let ok = e["degenerate"] == true || e["purity"].as_f64().is_some_and(|p| (0.0..=1.0).contains(&p));
        ensure!(ok, "bad purity entry {e}");
    }
    for f in ["count_errors.csv", "length_error.csv"] {
        ensure!(fs::read_to_string(out.path().join(f)).map_err(fail)?.lines().count() >= 1, "{f} is empty");
    }
    ensure!(json("count_errors.json")?["paper_off_by_one_share"] == 0.94, "missing off-by-one annotation");
    let length = json("length_error.json")?;
    ensure!(length["paper_short_error"] == 0.015 && length["paper_long_error"] == 0.055, "missing length annotations");

    let preds = predict_all(&ModelAnswerer::new(&Checkpoint::<f32>::load(&ckpt).map_err(fail)?.model), &data).map_err(fail)?;
    ensure!(preds.len() == data.len(), "prediction count");
    let first = entries[0]["purity"].as_f64().unwrap_or(f64::NAN);
    Ok(format!(
        "{} points x {layers} layers, {duplicates} repeated-question pairs identical, first purity {first:.3}, synthetic purity 1.0, CSVs annotated",
        PAPER_TSNE_POINTS
    ))
}

// ---- runner ---------------------------------------------------------------

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient_suite", gradients),
        ("cbn_algebra", cbn_algebra),
        ("bn_moments", bn_moments),
        ("oracle_equivalence", oracle),
        ("dataset_determinism", dataset_determinism),
        ("overfit", overfit),
        ("generalization", generalization),
        ("checkpoint_round_trip", checkpoint_round_trip),
        ("analysis_pipeline", analysis_pipeline),
    ];
    if args.iter().any(|a| a == "--list") {
        for (name, _) in criteria {
            println!("{name}: test");
        }
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let full = std::env::var("CBNR_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if name == "generalization" && !full {
            println!("SKIP {name}: two-hour training run, set CBNR_ACCEPTANCE_FULL=1");
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1} s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1} s]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
