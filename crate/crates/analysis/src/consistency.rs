//! Logical consistency of count comparisons.
//!
//! Every audited scene gets five questions over one pair of attribute
//! values A and B: how many A, how many B, same number, more, fewer.
//! Exactly one of the last three should be answered "yes".

use miniclevr::dataset::render_all;
use miniclevr::{
    comparison_quintet, execute, verbalize, Answer, AttrValue, Attribute, Family, QuestionRecord, Scene, Split, SplitData,
    Vocabulary,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cbnr::eval::{predict_all, Answerer};

use crate::Result;

/// Worked examples kept in a report.
pub const MAX_EXAMPLES: usize = 5;

/// Scenes and question quintets for an audit; questions `5i..5i+5` belong to scene `i`.
#[derive(Debug, Clone)]
pub struct Audit {
    pub data: SplitData,
    pub pairs: Vec<(AttrValue, AttrValue)>,
    pub texts: Vec<String>,
}

pub fn build_audit(n_scenes: usize, seed: u64, image_size: usize, vocab: &Vocabulary) -> Audit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(n_scenes);
    let mut questions = Vec::with_capacity(5 * n_scenes);
    let mut pairs = Vec::with_capacity(n_scenes);
    let mut texts = Vec::with_capacity(5 * n_scenes);
    for i in 0..n_scenes {
        let scene = Scene::from_seed(rng.gen(), image_size);
        let attribute = *Attribute::ALL.choose(&mut rng).expect("attributes exist");
        let values = AttrValue::all_of(attribute);
        let mut pick = values.choose_multiple(&mut rng, 2);
        let (a, b) = (*pick.next().expect("two values"), *pick.next().expect("two values"));
        for program in comparison_quintet(a, b) {
            let answer = execute(&program, &scene).expect("comparison programs always execute");
            let words = verbalize(&program, &mut rng).expect("comparison programs verbalize");
            texts.push(words.join(" "));
            questions.push(QuestionRecord {
                tokens: vocab.tokenize(&words).expect("templates use the closed vocabulary"),
                answer: answer.index().expect("counts stay within the answer list"),
                family: Family::of(&program).expect("terminal node has a family"),
                program_length: program.len(),
                program,
                image_index: i,
            });
        }
        pairs.push((a, b));
        scenes.push(scene);
    }
    let images = render_all(&scenes, image_size);
    Audit { data: SplitData { split: Split::Val, image_size, scenes, questions, images }, pairs, texts }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub question: String,
    pub predicted: String,
    pub truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedTriple {
    pub scene: usize,
    pub pair: (String, String),
    /// Answers to (same number, more, fewer).
    pub answers: [String; 3],
    pub predicted_counts: (String, String),
    pub true_counts: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub scenes: usize,
    pub inconsistent: usize,
    pub rate: f64,
    /// Flagged triples where both counts were answered correctly.
    pub inconsistent_with_correct_counts: usize,
    pub flagged: Vec<FlaggedTriple>,
    /// Up to [`MAX_EXAMPLES`] flagged scenes, five rows each.
    pub examples: Vec<Vec<AuditRow>>,
}

fn name(i: usize) -> String {
    Answer::from_index(i).map_or("?", Answer::name).to_string()
}

pub fn consistency_audit(answerer: &dyn Answerer, audit: &Audit) -> Result<ConsistencyReport> {
    let preds = predict_all(answerer, &audit.data)?;
    let yes = Answer::Bool(true).index().expect("yes is an answer");
    let qs = &audit.data.questions;
    let mut flagged = Vec::new();
    let mut examples = Vec::new();
    let mut with_correct_counts = 0;
    for (s, (p, q)) in preds.chunks_exact(5).zip(qs.chunks_exact(5)).enumerate() {
        if p[2..].iter().filter(|&&a| a == yes).count() == 1 {
            continue;
        }
        if p[0] == q[0].answer && p[1] == q[1].answer {
            with_correct_counts += 1;
        }
        let (a, b) = audit.pairs[s];
        flagged.push(FlaggedTriple {
            scene: s,
            pair: (a.name().to_string(), b.name().to_string()),
            answers: [name(p[2]), name(p[3]), name(p[4])],
            predicted_counts: (name(p[0]), name(p[1])),
            true_counts: (name(q[0].answer), name(q[1].answer)),
        });
        if examples.len() < MAX_EXAMPLES {
            examples.push(
                (0..5)
                    .map(|k| AuditRow {
                        question: audit.texts[5 * s + k].clone(),
                        predicted: name(p[k]),
                        truth: name(q[k].answer),
                    })
                    .collect(),
            );
        }
    }
    let scenes = audit.pairs.len();
    Ok(ConsistencyReport {
        scenes,
        inconsistent: flagged.len(),
        rate: if scenes == 0 { 0.0 } else { flagged.len() as f64 / scenes as f64 },
        inconsistent_with_correct_counts: with_correct_counts,
        flagged,
        examples,
    })
}
