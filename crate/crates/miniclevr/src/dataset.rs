//! Dataset generation, on-disk layout and reloading.
//!
//! Layout under the output directory:
//! `manifest.json` plus one directory per split holding `images.bin`,
//! `questions.jsonl` and `scenes.jsonl`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answers::{answer_list, Answer, Family, NUM_ANSWERS};
use crate::error::{DatasetError, GenError};
use crate::executor::execute;
use crate::generator::sample_program_with;
use crate::language::{verbalize, Vocabulary};
use crate::program::Program;
use crate::render::{render_into, MIN_IMAGE_SIZE};
use crate::scene::Scene;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_IMAGE_SIZE: usize = 48;
/// Scene seeds of consecutive samples are this far apart; retries use the gap.
const SEED_STRIDE: u64 = 64;
const SPLIT_OFFSET: u64 = 1 << 40;
/// Samples per family before the answer cap starts rejecting.
const BALANCE_WARMUP: usize = 20;
/// No answer may exceed this multiple of its uniform share within a family.
const BALANCE_FACTOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|s| s.name() == name)
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    pub image_size: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec { n_train: 20_000, n_val: 2_000, n_test: 2_000, seed: 0, image_size: DEFAULT_IMAGE_SIZE }
    }
}

impl DatasetSpec {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if Split::ALL.iter().any(|&s| self.count(s) == 0) {
            return Err(DatasetError::Invalid("every split needs at least one sample".into()));
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(DatasetError::Invalid(format!("image size must be at least {MIN_IMAGE_SIZE}")));
        }
        if Split::ALL.iter().any(|&s| self.count(s) as u64 >= SPLIT_OFFSET / SEED_STRIDE) {
            return Err(DatasetError::Invalid("split too large for the seed layout".into()));
        }
        Ok(())
    }

    /// Scene seed for attempt `attempt` of sample `index`. Splits occupy
    /// disjoint seed ranges.
    pub fn scene_seed(&self, split: Split, index: usize, attempt: u64) -> u64 {
        debug_assert!(attempt < SEED_STRIDE);
        self.seed
            .wrapping_add(split.index() * SPLIT_OFFSET)
            .wrapping_add(index as u64 * SEED_STRIDE + attempt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub image_size: usize,
    pub counts: BTreeMap<Split, usize>,
    pub answers: Vec<String>,
    pub vocabulary: Vec<String>,
    pub families: Vec<String>,
    pub max_question_length: usize,
}

impl Manifest {
    pub fn spec(&self) -> DatasetSpec {
        let n = |s| self.counts.get(&s).copied().unwrap_or(0);
        DatasetSpec {
            n_train: n(Split::Train),
            n_val: n(Split::Val),
            n_test: n(Split::Test),
            seed: self.seed,
            image_size: self.image_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub tokens: Vec<u32>,
    pub answer: usize,
    pub family: Family,
    pub program: Program,
    pub program_length: usize,
    pub image_index: usize,
}

/// One split held in memory. Images are stored back to back as 3×S×S.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub split: Split,
    pub image_size: usize,
    pub scenes: Vec<Scene>,
    pub questions: Vec<QuestionRecord>,
    pub images: Vec<f32>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn image_len(&self) -> usize {
        3 * self.image_size * self.image_size
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[index * n..(index + 1) * n]
    }

    /// Keeps the first `n` questions and the images they reference.
    pub fn truncate(&mut self, n: usize) {
        self.questions.truncate(n);
        let images = self.questions.iter().map(|q| q.image_index + 1).max().unwrap_or(0);
        self.scenes.truncate(images);
        self.images.truncate(images * self.image_len());
    }
}

/// Per-family answer histogram used by the rejection cap.
struct Balancer {
    counts: Vec<[usize; NUM_ANSWERS]>,
    totals: Vec<usize>,
}

impl Balancer {
    fn new() -> Self {
        Balancer { counts: vec![[0; NUM_ANSWERS]; Family::ALL.len()], totals: vec![0; Family::ALL.len()] }
    }

    fn admits(&self, family: Family, answer: Answer) -> bool {
        let f = family as usize;
        let Some(a) = answer.index() else { return false };
        let total = self.totals[f];
        total < BALANCE_WARMUP || (self.counts[f][a] + 1) * family.answer_space() <= BALANCE_FACTOR * (total + 1)
    }

    fn record(&mut self, family: Family, answer: Answer) {
        let f = family as usize;
        self.counts[f][answer.index().expect("answer in list")] += 1;
        self.totals[f] += 1;
    }
}

/// Generates the symbolic part of a split (scenes and questions) in index order.
pub fn generate_questions(spec: &DatasetSpec, split: Split, vocab: &Vocabulary) -> (Vec<Scene>, Vec<QuestionRecord>) {
    let n = spec.count(split);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(split.index() + 1);
    let mut balancer = Balancer::new();
    let mut scenes = Vec::with_capacity(n);
    let mut questions = Vec::with_capacity(n);
    for i in 0..n {
        let family = Family::ALL[rng.gen_range(0..Family::ALL.len())];
        let mut attempt = 0;
        let (scene, program, answer) = loop {
            let scene = Scene::from_seed(spec.scene_seed(split, i, attempt), spec.image_size);
            // The last attempt drops the cap so generation always terminates.
            let capped = attempt + 1 < SEED_STRIDE;
            let result = sample_program_with(&mut rng, &scene, family, |_, a| !capped || balancer.admits(family, a));
            match result {
                Ok(program) => {
                    let answer = execute(&program, &scene).expect("generator returns executable programs");
                    break (scene, program, answer);
                }
                Err(GenError::Exhausted { .. }) if capped => attempt += 1,
                Err(e) => panic!("sample {i} of {split}: {e}"),
            }
        };
        balancer.record(family, answer);
        let words = verbalize(&program, &mut rng).expect("generated programs verbalize");
        let tokens = vocab.tokenize(&words).expect("templates use the closed vocabulary");
        questions.push(QuestionRecord {
            tokens,
            answer: answer.index().expect("answer in list"),
            family,
            program_length: program.len(),
            program,
            image_index: i,
        });
        scenes.push(scene);
    }
    (scenes, questions)
}

pub fn render_all(scenes: &[Scene], image_size: usize) -> Vec<f32> {
    let n = 3 * image_size * image_size;
    let mut images = vec![0f32; scenes.len() * n];
    images.par_chunks_mut(n).zip(scenes.par_iter()).for_each(|(img, scene)| render_into(scene, image_size, img));
    images
}

pub fn generate_split(spec: &DatasetSpec, split: Split) -> SplitData {
    let vocab = Vocabulary::default();
    let (scenes, questions) = generate_questions(spec, split, &vocab);
    let images = render_all(&scenes, spec.image_size);
    SplitData { split, image_size: spec.image_size, scenes, questions, images }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path).map_err(DatasetError::io(path))?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(DatasetError::json(path))?;
        w.write_all(b"\n").map_err(DatasetError::io(path))?;
    }
    w.flush().map_err(DatasetError::io(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let r = BufReader::new(File::open(path).map_err(DatasetError::io(path))?);
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line.map_err(DatasetError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(DatasetError::json(path))?);
    }
    Ok(rows)
}

fn write_images(path: &Path, images: &[f32], count: usize) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path).map_err(DatasetError::io(path))?);
    let mut buf = Vec::with_capacity(4 + images.len() * 4);
    buf.extend_from_slice(&(count as u32).to_le_bytes());
    for v in images {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(DatasetError::io(path))?;
    w.flush().map_err(DatasetError::io(path))
}

fn read_images(path: &Path, image_size: usize) -> Result<(usize, Vec<f32>), DatasetError> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(DatasetError::io(path))?;
    if bytes.len() < 4 {
        return Err(DatasetError::Malformed(format!("{}: missing header", path.display())));
    }
    let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let expected = 4 + count * 3 * image_size * image_size * 4;
    if bytes.len() != expected {
        return Err(DatasetError::Malformed(format!(
            "{}: {} bytes, expected {expected} for {count} images",
            path.display(),
            bytes.len()
        )));
    }
    let images = bytes[4..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((count, images))
}

fn write_split(dir: &Path, data: &SplitData) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(DatasetError::io(dir))?;
    write_images(&dir.join("images.bin"), &data.images, data.scenes.len())?;
    write_jsonl(&dir.join("questions.jsonl"), &data.questions)?;
    write_jsonl(&dir.join("scenes.jsonl"), &data.scenes)
}

/// Generates all three splits and writes them under `out_dir`. An existing
/// non-empty directory is refused unless `force` is set.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path, force: bool) -> Result<Manifest, DatasetError> {
    spec.validate()?;
    if !force && out_dir.is_dir() {
        let mut entries = fs::read_dir(out_dir).map_err(DatasetError::io(out_dir))?;
        if entries.next().is_some() {
            return Err(DatasetError::Exists(out_dir.to_path_buf()));
        }
    }
    fs::create_dir_all(out_dir).map_err(DatasetError::io(out_dir))?;
    let vocab = Vocabulary::default();
    let mut max_len = 0;
    for split in Split::ALL {
        let data = generate_split(spec, split);
        max_len = data.questions.iter().map(|q| q.tokens.len()).max().unwrap_or(0).max(max_len);
        write_split(&out_dir.join(split.name()), &data)?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed: spec.seed,
        image_size: spec.image_size,
        counts: Split::ALL.iter().map(|&s| (s, spec.count(s))).collect(),
        answers: answer_list().into_iter().map(String::from).collect(),
        vocabulary: vocab.words().to_vec(),
        families: Family::ALL.iter().map(|f| f.name().to_string()).collect(),
        max_question_length: max_len,
    };
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(DatasetError::json(&path))?;
    text.push('\n');
    fs::write(&path, text).map_err(DatasetError::io(&path))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub checked: usize,
    pub answer_mismatches: usize,
    pub scene_mismatches: usize,
    pub family_mismatches: usize,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.answer_mismatches == 0 && self.scene_mismatches == 0 && self.family_mismatches == 0
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub vocabulary: Vocabulary,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Dataset, DatasetError> {
        let root = root.into();
        let path = root.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(DatasetError::io(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(DatasetError::json(&path))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(DatasetError::Malformed(format!("unsupported format version {}", manifest.format_version)));
        }
        if manifest.answers.iter().map(String::as_str).ne(answer_list()) {
            return Err(DatasetError::Malformed("answer list differs from this build".into()));
        }
        let vocabulary = Vocabulary::from_words(manifest.vocabulary.clone());
        Ok(Dataset { root, manifest, vocabulary })
    }

    pub fn load(&self, split: Split) -> Result<SplitData, DatasetError> {
        let dir = self.root.join(split.name());
        let size = self.manifest.image_size;
        let (count, images) = read_images(&dir.join("images.bin"), size)?;
        let questions: Vec<QuestionRecord> = read_jsonl(&dir.join("questions.jsonl"))?;
        let scenes: Vec<Scene> = read_jsonl(&dir.join("scenes.jsonl"))?;
        if scenes.len() != count {
            return Err(DatasetError::Malformed(format!("{split}: {} scenes for {count} images", scenes.len())));
        }
        if let Some(q) = questions.iter().find(|q| q.image_index >= count || q.answer >= NUM_ANSWERS) {
            return Err(DatasetError::Malformed(format!("{split}: question references image {} of {count}", q.image_index)));
        }
        Ok(SplitData { split, image_size: size, scenes, questions, images })
    }

    /// Re-executes every stored program and regenerates every scene from its seed.
    pub fn verify(&self, data: &SplitData) -> VerifyReport {
        let mut report = VerifyReport { checked: data.len(), ..Default::default() };
        for scene in &data.scenes {
            if Scene::from_seed(scene.seed, scene.image_size) != *scene {
                report.scene_mismatches += 1;
            }
        }
        for q in &data.questions {
            let scene = &data.scenes[q.image_index];
            match execute(&q.program, scene) {
                Ok(a) if a.index() == Some(q.answer) => {}
                _ => report.answer_mismatches += 1,
            }
            if Family::of(&q.program) != Some(q.family) {
                report.family_mismatches += 1;
            }
        }
        report
    }
}
