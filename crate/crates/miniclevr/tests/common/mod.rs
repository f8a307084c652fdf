#![allow(dead_code)]

use miniclevr::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Reference interpreter: evaluates every node by enumerating objects into
/// plain index lists.
#[derive(Debug, Clone, PartialEq)]
enum V {
    Set(Vec<usize>),
    Obj(usize),
    Int(usize),
    Bool(bool),
    Attr(AttrValue),
}

pub fn brute_force(program: &Program, scene: &Scene) -> Option<Answer> {
    let objs = &scene.objects;
    let mut vals: Vec<V> = Vec::new();
    for node in &program.nodes {
        let get = |k: usize| vals[node.inputs[k]].clone();
        let v = match node.function {
            Function::Scene => V::Set((0..objs.len()).collect()),
            Function::Filter(val) => {
                let V::Set(s) = get(0) else { return None };
                let keep = |i: &usize| match val {
                    AttrValue::Shape(x) => objs[*i].shape == x,
                    AttrValue::Color(x) => objs[*i].color == x,
                    AttrValue::Size(x) => objs[*i].size == x,
                    AttrValue::Material(x) => objs[*i].material == x,
                };
                V::Set(s.into_iter().filter(keep).collect())
            }
            Function::Relate(rel) => {
                let V::Obj(r) = get(0) else { return None };
                let (rx, ry) = objs[r].center;
                let mut out = Vec::new();
                for (i, o) in objs.iter().enumerate() {
                    let (x, y) = o.center;
                    let ok = match rel {
                        Relation::Left => x < rx,
                        Relation::Right => x > rx,
                        Relation::Above => y < ry,
                        Relation::Below => y > ry,
                    };
                    if ok && i != r {
                        out.push(i);
                    }
                }
                V::Set(out)
            }
            Function::Unique => {
                let V::Set(s) = get(0) else { return None };
                if s.len() != 1 {
                    return None;
                }
                V::Obj(s[0])
            }
            Function::Count => {
                let V::Set(s) = get(0) else { return None };
                V::Int(s.len())
            }
            Function::Exist => {
                let V::Set(s) = get(0) else { return None };
                V::Bool(!s.is_empty())
            }
            Function::Query(a) => {
                let V::Obj(o) = get(0) else { return None };
                let ob = &objs[o];
                V::Attr(match a {
                    Attribute::Shape => AttrValue::Shape(ob.shape),
                    Attribute::Color => AttrValue::Color(ob.color),
                    Attribute::Size => AttrValue::Size(ob.size),
                    Attribute::Material => AttrValue::Material(ob.material),
                })
            }
            Function::Equal(_) => V::Bool(get(0) == get(1)),
            Function::EqualInteger | Function::LessThan | Function::GreaterThan => {
                let (V::Int(a), V::Int(b)) = (get(0), get(1)) else { return None };
                V::Bool(match node.function {
                    Function::EqualInteger => a == b,
                    Function::LessThan => a < b,
                    _ => a > b,
                })
            }
        };
        vals.push(v);
    }
    match vals.pop()? {
        V::Int(k) => Some(Answer::Count(k)),
        V::Bool(b) => Some(Answer::Bool(b)),
        V::Attr(a) => Some(Answer::Attr(a)),
        _ => None,
    }
}

pub fn random_filters<R: Rng>(rng: &mut R) -> Filters {
    let mut f = Filters::default();
    for a in Attribute::ALL {
        if rng.gen_bool(0.4) {
            f.insert(*AttrValue::all_of(a).choose(rng).unwrap());
        }
    }
    f
}

/// An arbitrary chain; its referents need not be unique.
pub fn random_chain<R: Rng>(rng: &mut R, depth: usize) -> Chain {
    let filters = random_filters(rng);
    if depth > 0 && rng.gen_bool(0.4) {
        let rel = *Relation::ALL.choose(rng).unwrap();
        let mut referent = random_chain(rng, depth - 1);
        if referent.filters.is_empty() && referent.relate.is_none() {
            referent.filters.insert(AttrValue::Shape(Shape::Circle));
        }
        Chain::related(filters, rel, referent)
    } else {
        let mut f = filters;
        if f.is_empty() {
            f.insert(AttrValue::Color(*Color::ALL.choose(rng).unwrap()));
        }
        Chain::of(f)
    }
}

pub fn random_question<R: Rng>(rng: &mut R) -> Question {
    let attr = *Attribute::ALL.choose(rng).unwrap();
    match rng.gen_range(0..5) {
        0 => Question::Count(random_chain(rng, 2)),
        1 => Question::Exist(random_chain(rng, 2)),
        2 => Question::CompareCounts(*Comparison::ALL.choose(rng).unwrap(), random_chain(rng, 1), random_chain(rng, 1)),
        3 => Question::Query(attr, random_chain(rng, 1)),
        _ => Question::SameAttribute(attr, random_chain(rng, 1), random_chain(rng, 1)),
    }
}

pub fn object(shape: Shape, color: Color, size: Size, material: Material, px: usize, py: usize, s: usize) -> SceneObject {
    SceneObject {
        shape,
        color,
        size,
        material,
        center: ((px as f64 + 0.5) / s as f64, (py as f64 + 0.5) / s as f64),
        radius: miniclevr::scene::radius_for(size, s),
    }
}
