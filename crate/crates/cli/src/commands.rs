use std::fs;
use std::path::Path;

use cbnr::checkpoint::Checkpoint;
use cbnr::eval::{predict_all, ModelAnswerer};
use cbnr::train::{history_csv, EpochRecord, TrainObserver, HISTORY_HEADER};
use cbnr::{Adam, Model};
use cbnr_analysis::{CbnDump, CbnRow};
use miniclevr::{build_dataset, Dataset, DatasetSpec, Split, SplitData};
use serde::Serialize;

use crate::config::{parse_override, read_file, resolve};
use crate::{AnalyzeCommand, CliError, EvalArgs, GenerateArgs, ModelArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    write(path, s)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn parse_split(name: &str) -> Result<Split> {
    Split::from_name(name).ok_or_else(|| CliError::usage(format!("unknown split {name:?} (expected train, val or test)")))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = DatasetSpec { n_train: a.num_train, n_val: a.num_val, n_test: a.num_test, seed: a.seed, image_size: a.image_size };
    let manifest = build_dataset(&spec, &a.out, a.force)?;
    println!(
        "wrote {} train / {} val / {} test samples to {}",
        manifest.spec().n_train,
        manifest.spec().n_val,
        manifest.spec().n_test,
        a.out.display()
    );
    Ok(())
}

/// Checks that a checkpoint's model fits the dataset it is applied to.
fn check_compatible(model: &Model<f32>, ds: &Dataset) -> Result<()> {
    let (c, m) = (&model.config, &ds.manifest);
    let pairs = [
        ("vocabulary size", c.vocab_size, m.vocabulary.len()),
        ("answer count", c.n_answers, m.answers.len()),
        ("image size", c.image_size, m.image_size),
    ];
    for (what, model_value, data_value) in pairs {
        if model_value != data_value {
            return Err(CliError::mismatch(format!("{what}: checkpoint has {model_value}, dataset has {data_value}")));
        }
    }
    Ok(())
}

struct Artifacts<'a> {
    out: &'a Path,
    history: Vec<EpochRecord>,
    verbose: bool,
}

impl Artifacts<'_> {
    fn save(&self, name: &str, model: &Model<f32>, opt: &Adam<f32>, epoch: usize) -> cbnr::Result<()> {
        let ckpt = Checkpoint { model: model.clone(), optimizer: Some(opt.clone()), epoch };
        ckpt.save(&self.out.join(name))?;
        Ok(())
    }
}

impl TrainObserver<f32> for Artifacts<'_> {
    fn epoch_end(&mut self, r: &EpochRecord, model: &Model<f32>, opt: &Adam<f32>, improved: bool) -> cbnr::Result<()> {
        self.history.push(r.clone());
        let path = self.out.join("history.csv");
        fs::write(&path, history_csv(&self.history)).map_err(|source| cbnr::Error::Io { path, source })?;
        self.save("last.ckpt", model, opt, r.epoch)?;
        if improved {
            self.save("best.ckpt", model, opt, r.epoch)?;
        }
        if self.verbose {
            println!("{}{}", r.csv_row(), if improved { " *" } else { "" });
        }
        Ok(())
    }
}

/// Rows of an existing history file up to and including `last_epoch`.
fn previous_history(path: &Path, last_epoch: usize) -> Result<Vec<EpochRecord>> {
    let Ok(text) = fs::read_to_string(path) else { return Ok(Vec::new()) };
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty() && *l != HISTORY_HEADER) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::mismatch(format!("{}: malformed history row {line:?}", path.display()));
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        let epoch: usize = f[0].parse().map_err(|_| bad())?;
        if epoch <= last_epoch {
            out.push(EpochRecord {
                epoch,
                train_loss: num(1)?,
                train_acc: num(2)?,
                val_acc: num(3)?,
                lr: num(4)?,
                seconds: num(5)?,
            });
        }
    }
    Ok(out)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let ds = Dataset::open(&a.data.data)?;
    let file = match &a.config {
        Some(p) => read_file(p)?,
        None => Default::default(),
    };
    let mut overrides = Vec::new();
    if let Some(p) = &a.preset {
        overrides.push(("preset".to_string(), p.clone().into()));
    }
    if let Some(s) = a.seed {
        overrides.push(("seed".to_string(), s.into()));
    }
    for o in &a.overrides {
        overrides.push(parse_override(o)?);
    }
    let m = &ds.manifest;
    let cfg = resolve(file, &overrides, m.vocabulary.len(), m.answers.len(), m.image_size)?;

    create_dir(&a.out)?;
    write(&a.out.join("effective_config.json"), cfg.to_flat_json())?;

    let (model, opt, start_epoch) = match &a.from_checkpoint {
        Some(p) => {
            let ckpt = Checkpoint::<f32>::load(p)?;
            let mut expected = cfg.model.clone();
            expected.seed = ckpt.model.config.seed;
            if ckpt.model.config != expected {
                return Err(cbnr::CheckpointError::ConfigMismatch(format!(
                    "{} was trained with a different model configuration",
                    p.display()
                ))
                .into());
            }
            (ckpt.model, ckpt.optimizer, ckpt.epoch)
        }
        None => (Model::<f32>::new(cfg.model.clone())?, None, 0),
    };
    check_compatible(&model, &ds)?;

    let mut train_data = ds.load(Split::Train)?;
    if let Some(n) = a.limit_train {
        train_data.truncate(n);
    }
    let val_data = ds.load(Split::Val)?;
    let history =
        if start_epoch > 0 { previous_history(&a.out.join("history.csv"), start_epoch)? } else { Vec::new() };
    let mut artifacts = Artifacts { out: &a.out, history, verbose: a.verbose };
    let outcome = cbnr::train(model, opt, start_epoch, &train_data, &val_data, &cfg.train, &mut artifacts)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "best val accuracy {:.4} at epoch {}; last epoch {} val accuracy {:.4}; {} optimizer steps",
        outcome.best_val_acc, outcome.best_epoch, last.epoch, last.val_acc, outcome.optimizer.step
    );
    Ok(())
}

fn load_model(args: &ModelArgs) -> Result<(Model<f32>, SplitData)> {
    let ckpt = Checkpoint::<f32>::load(&args.ckpt)?;
    let ds = Dataset::open(&args.data.data)?;
    check_compatible(&ckpt.model, &ds)?;
    let data = ds.load(parse_split(&args.split)?)?;
    Ok((ckpt.model, data))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (model, data) = load_model(&a.model)?;
    let report = cbnr::evaluate(&ModelAnswerer::new(&model), &data, a.by_length)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("report.json"), &report)?;
        write(&out.join("families.csv"), report.families_csv())?;
        if let Some(csv) = report.length_csv() {
            write(&out.join("length.csv"), csv)?;
        }
    }
    Ok(())
}

fn read_dump(path: &Path) -> Result<CbnDump> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::usage(format!("{}: {other:?}", path.display())),
    })?;
    let bad = |m: String| CliError::usage(format!("{}: {m}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column {name:?}; expected a cbn_dump.csv")))
    };
    let (sid, layer, family, function, answer) = (col("sample_id")?, col("layer")?, col("family")?, col("function")?, col("answer")?);
    let gammas: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with("gamma")).collect();
    let betas: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with("beta")).collect();
    if gammas.is_empty() || gammas.len() != betas.len() {
        return Err(bad("expected matching gamma*/beta* value columns".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("row {}: bad number {:?}", line + 1, &rec[i])));
        if rec[function].is_empty() {
            return Err(bad(format!("row {}: missing function label", line + 1)));
        }
        rows.push(CbnRow {
            sample_id: rec[sid].parse().map_err(|_| bad(format!("row {}: bad sample_id", line + 1)))?,
            layer: rec[layer].parse().map_err(|_| bad(format!("row {}: bad layer", line + 1)))?,
            family: rec[family].to_string(),
            function: rec[function].to_string(),
            answer: rec[answer].to_string(),
            gamma: gammas.iter().map(|&i| num(i)).collect::<Result<_>>()?,
            beta: betas.iter().map(|&i| num(i)).collect::<Result<_>>()?,
        });
    }
    let n_layers = rows.iter().map(|r| r.layer + 1).max().unwrap_or(0);
    Ok(CbnDump { n_layers, channels: gammas.len(), rows })
}

pub fn analyze(cmd: &AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::CbnDump { model, n, seed, out } => {
            let (m, data) = load_model(model)?;
            let dump = cbnr_analysis::dump_cbn_params(&m, &data, *n, *seed)?;
            create_dir(out)?;
            write(&out.join("cbn_dump.csv"), dump.to_csv())?;
            println!("{} rows ({} questions x {} layers)", dump.rows.len(), dump.rows.len() / dump.n_layers.max(1), dump.n_layers);
        }
        AnalyzeCommand::Purity { dump, k, seed, out } => {
            let d = read_dump(dump)?;
            let report = cbnr_analysis::function_grouping_report(&d, *k, *seed);
            if report.entries.iter().all(|e| e.purity.is_none()) {
                let why = report.entries.iter().find_map(|e| e.note.clone()).unwrap_or_else(|| "no rows".into());
                return Err(CliError::usage(format!("no purity could be computed: {why}")));
            }
            create_dir(out)?;
            write_json(&out.join("purity.json"), &report)?;
            for e in &report.entries {
                let p = e.purity.map_or("-".to_string(), |p| format!("{p:.4}"));
                println!("layer {} {:<9} purity {p} (label baseline {:.4}, n={})", e.layer, e.labeling, e.label_baseline, e.points);
            }
        }
        AnalyzeCommand::CountErrors { model, out } => {
            let (m, data) = load_model(model)?;
            let preds = predict_all(&ModelAnswerer::new(&m), &data)?;
            let p = cbnr_analysis::counting_error_profile(&data, &preds);
            create_dir(out)?;
            write_json(&out.join("count_errors.json"), &p)?;
            let mut csv = String::from("difference,mistakes,share\n");
            for (d, share) in p.shares() {
                csv.push_str(&format!("{d},{},{share:.6}\n", p.histogram[&d]));
            }
            write(&out.join("count_errors.csv"), csv)?;
            match p.off_by_one_share {
                Some(s) => println!(
                    "{} counting mistakes of {}; off-by-one share {s:.4} (published: {})",
                    p.mistakes, p.count_questions, p.paper_off_by_one_share
                ),
                None => println!("no numeric counting mistakes among {} count questions", p.count_questions),
            }
        }
        AnalyzeCommand::Length { model, out } => {
            let (m, data) = load_model(model)?;
            let preds = predict_all(&ModelAnswerer::new(&m), &data)?;
            let t = cbnr_analysis::error_by_length(&data, &preds);
            create_dir(out)?;
            write(&out.join("length_error.csv"), t.to_csv())?;
            write_json(&out.join("length_error.json"), &t)?;
            let show = |r: Option<f64>| r.map_or("-".to_string(), |r| format!("{:.2}%", 100.0 * r));
            println!(
                "error rate: <=10 steps {} (published {:.1}%), >=17 steps {} (published {:.1}%)",
                show(t.short.error_rate),
                100.0 * t.paper_short_error,
                show(t.long.error_rate),
                100.0 * t.paper_long_error
            );
        }
        AnalyzeCommand::Consistency { ckpt, scenes, seed, out } => {
            let model = Checkpoint::<f32>::load(ckpt)?.model;
            let vocab = miniclevr::Vocabulary::default();
            if model.config.vocab_size != vocab.len() {
                return Err(CliError::mismatch("checkpoint vocabulary differs from the question templates"));
            }
            let audit = cbnr_analysis::build_audit(*scenes, *seed, model.config.image_size, &vocab);
            let report = cbnr_analysis::consistency_audit(&ModelAnswerer::new(&model), &audit)?;
            create_dir(out)?;
            write_json(&out.join("consistency.json"), &report)?;
            println!("{} of {} scenes inconsistent (rate {:.4})", report.inconsistent, report.scenes, report.rate);
        }
    }
    Ok(())
}
