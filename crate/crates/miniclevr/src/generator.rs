//! Template-driven program sampling with validity rejection.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::answers::Family;
use crate::attrs::{AttrValue, Attribute};
use crate::error::GenError;
use crate::program::{Program, Relation};
use crate::question::{Chain, Comparison, Filters, Question};
use crate::scene::Scene;

pub const MAX_DRAWS: usize = 200;
/// Probability that a chain goes through one relate hop.
const RELATE_PROB: f64 = 0.3;
/// Probability that filter values are copied from an object in the scene
/// rather than drawn uniformly, which keeps counts away from zero.
const GUIDED_PROB: f64 = 0.65;

/// Smallest attribute subset (searched in random order) whose filters pick
/// out exactly `target` among `candidates`.
fn identify<R: Rng + ?Sized>(
    rng: &mut R,
    scene: &Scene,
    candidates: &[usize],
    target: usize,
    exclude: Option<Attribute>,
    allow_empty: bool,
) -> Option<Filters> {
    if allow_empty && candidates == [target] {
        return Some(Filters::default());
    }
    let mut attrs: Vec<Attribute> = Attribute::ALL.into_iter().filter(|&a| Some(a) != exclude).collect();
    attrs.shuffle(rng);
    let obj = &scene.objects[target];
    let n = attrs.len();
    for k in 1..=n.min(3) {
        let mut subsets: Vec<Vec<Attribute>> = (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| attrs[i]).collect())
            .collect();
        subsets.shuffle(rng);
        for subset in subsets {
            let f = Filters::from_object(obj, &subset);
            let hits: Vec<usize> = candidates.iter().copied().filter(|&j| f.matches(&scene.objects[j])).collect();
            if hits == [target] {
                return Some(f);
            }
        }
    }
    None
}

/// Uniquely describes `target`, sometimes through a relation to another object.
fn unique_chain<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, target: usize, exclude: Option<Attribute>) -> Option<Chain> {
    let all: Vec<usize> = (0..scene.len()).collect();
    if rng.gen_bool(RELATE_PROB) {
        let others: Vec<usize> = all.iter().copied().filter(|&j| j != target).collect();
        let anchor = *others.choose(rng)?;
        let rels: Vec<Relation> = Relation::ALL
            .into_iter()
            .filter(|&r| crate::executor::related(r, &scene.objects[target], &scene.objects[anchor]))
            .collect();
        let rel = *rels.choose(rng)?;
        let referent = Chain::of(identify(rng, scene, &all, anchor, None, false)?);
        let related = Chain::related(Filters::default(), rel, referent.clone()).select(scene)?;
        let filters = identify(rng, scene, &related, target, exclude, true)?;
        return Some(Chain::related(filters, rel, referent));
    }
    Some(Chain::of(identify(rng, scene, &all, target, exclude, false)?))
}

fn random_filters<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, pool: &[usize], k: usize) -> Filters {
    let mut attrs = Attribute::ALL.to_vec();
    attrs.shuffle(rng);
    attrs.truncate(k);
    match pool.choose(rng) {
        Some(&j) if rng.gen_bool(GUIDED_PROB) => Filters::from_object(&scene.objects[j], &attrs),
        _ => {
            let mut f = Filters::default();
            for a in attrs {
                f.insert(*AttrValue::all_of(a).choose(rng).expect("attribute has values"));
            }
            f
        }
    }
}

/// A set-valued chain with 1-3 filters, or a relate hop followed by 0-2.
fn set_chain<R: Rng + ?Sized>(rng: &mut R, scene: &Scene) -> Option<Chain> {
    if rng.gen_bool(RELATE_PROB) {
        let anchor = rng.gen_range(0..scene.len());
        let all: Vec<usize> = (0..scene.len()).collect();
        let referent = Chain::of(identify(rng, scene, &all, anchor, None, false)?);
        let rel = *Relation::ALL.choose(rng)?;
        let pool = Chain::related(Filters::default(), rel, referent.clone()).select(scene)?;
        let k = rng.gen_range(0..=2);
        return Some(Chain::related(random_filters(rng, scene, &pool, k), rel, referent));
    }
    let all: Vec<usize> = (0..scene.len()).collect();
    let k = rng.gen_range(1..=3);
    Some(Chain::of(random_filters(rng, scene, &all, k)))
}

fn draw<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, family: Family) -> Option<Question> {
    match family {
        Family::Count => Some(Question::Count(set_chain(rng, scene)?)),
        Family::Exist => Some(Question::Exist(set_chain(rng, scene)?)),
        Family::CompareInteger => {
            let a = set_chain(rng, scene)?;
            let b = set_chain(rng, scene)?;
            if a == b {
                return None;
            }
            Some(Question::CompareCounts(*Comparison::ALL.choose(rng)?, a, b))
        }
        Family::QueryAttribute => {
            let attr = *Attribute::ALL.choose(rng)?;
            let target = rng.gen_range(0..scene.len());
            Some(Question::Query(attr, unique_chain(rng, scene, target, Some(attr))?))
        }
        Family::CompareAttribute => {
            let attr = *Attribute::ALL.choose(rng)?;
            let a = rng.gen_range(0..scene.len());
            let others: Vec<usize> = (0..scene.len()).filter(|&j| j != a).collect();
            let same: Vec<usize> =
                others.iter().copied().filter(|&j| scene.objects[j].get(attr) == scene.objects[a].get(attr)).collect();
            let b = match same.choose(rng) {
                Some(&j) if rng.gen_bool(0.5) => j,
                _ => *others.choose(rng)?,
            };
            let ca = unique_chain(rng, scene, a, Some(attr))?;
            let cb = unique_chain(rng, scene, b, Some(attr))?;
            Some(Question::SameAttribute(attr, ca, cb))
        }
    }
}

/// Samples a valid program of `family` for `scene`, accepting only answers
/// for which `accept` holds. Gives up after [`MAX_DRAWS`] draws.
pub fn sample_program_with<R, F>(rng: &mut R, scene: &Scene, family: Family, mut accept: F) -> Result<Program, GenError>
where
    R: Rng + ?Sized,
    F: FnMut(&Program, crate::answers::Answer) -> bool,
{
    for _ in 0..MAX_DRAWS {
        let Some(q) = draw(rng, scene, family) else { continue };
        let program = q.to_program();
        match crate::executor::execute(&program, scene) {
            Ok(answer) if answer.index().is_some() && accept(&program, answer) => return Ok(program),
            _ => continue,
        }
    }
    Err(GenError::Exhausted { family: family.name(), draws: MAX_DRAWS })
}

pub fn sample_program<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, family: Family) -> Result<Program, GenError> {
    sample_program_with(rng, scene, family, |_, _| true)
}

/// Count and comparison questions over two attribute filters of the same
/// kind, in the order: count A, count B, same number, more, fewer.
pub fn comparison_quintet(a: AttrValue, b: AttrValue) -> [Program; 5] {
    let chain = |v: AttrValue| {
        let mut f = Filters::default();
        f.insert(v);
        Chain::of(f)
    };
    let (ca, cb) = (chain(a), chain(b));
    [
        Question::Count(ca.clone()).to_program(),
        Question::Count(cb.clone()).to_program(),
        Question::CompareCounts(Comparison::Equal, ca.clone(), cb.clone()).to_program(),
        Question::CompareCounts(Comparison::Greater, ca.clone(), cb.clone()).to_program(),
        Question::CompareCounts(Comparison::Less, ca, cb).to_program(),
    ]
}
