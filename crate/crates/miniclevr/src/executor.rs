//! Exact set-semantics evaluation of programs against scenes.

use crate::answers::Answer;
use crate::attrs::AttrValue;
use crate::error::ExecError;
use crate::program::{Function, Program, Relation};
use crate::scene::{Scene, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    /// Bitmask over scene object indices.
    Set(u64),
    Object(usize),
    Int(usize),
    Bool(bool),
    Attr(AttrValue),
}

/// `true` when `a` stands in `relation` to the referent `b`.
pub fn related(relation: Relation, a: &SceneObject, b: &SceneObject) -> bool {
    match relation {
        Relation::Left => a.center.0 < b.center.0,
        Relation::Right => a.center.0 > b.center.0,
        Relation::Above => a.center.1 < b.center.1,
        Relation::Below => a.center.1 > b.center.1,
    }
}

/// Runs `program` on `scene` and returns its answer.
pub fn execute(program: &Program, scene: &Scene) -> Result<Answer, ExecError> {
    program.check()?;
    let n = scene.objects.len();
    if n > 64 {
        return Err(ExecError::SceneTooLarge(n));
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut values: Vec<Value> = Vec::with_capacity(program.len());
    for (i, node) in program.nodes.iter().enumerate() {
        let arg = |k: usize| values[node.inputs[k]];
        let v = match node.function {
            Function::Scene => Value::Set(all),
            Function::Filter(attr) => {
                let Value::Set(s) = arg(0) else { unreachable!("type-checked") };
                let keep = scene.objects.iter().enumerate().filter(|(_, o)| o.has(attr));
                Value::Set(keep.fold(0, |m, (j, _)| m | (1 << j)) & s)
            }
            Function::Relate(rel) => {
                let Value::Object(r) = arg(0) else { unreachable!("type-checked") };
                let referent = &scene.objects[r];
                let keep = scene.objects.iter().enumerate().filter(|&(j, o)| j != r && related(rel, o, referent));
                Value::Set(keep.fold(0, |m, (j, _)| m | (1 << j)))
            }
            Function::Unique => {
                let Value::Set(s) = arg(0) else { unreachable!("type-checked") };
                if s.count_ones() != 1 {
                    return Err(ExecError::NotUnique { node: i, size: s.count_ones() as usize });
                }
                Value::Object(s.trailing_zeros() as usize)
            }
            Function::Count => {
                let Value::Set(s) = arg(0) else { unreachable!("type-checked") };
                Value::Int(s.count_ones() as usize)
            }
            Function::Exist => {
                let Value::Set(s) = arg(0) else { unreachable!("type-checked") };
                Value::Bool(s != 0)
            }
            Function::Query(attr) => {
                let Value::Object(o) = arg(0) else { unreachable!("type-checked") };
                Value::Attr(scene.objects[o].get(attr))
            }
            Function::Equal(_) => Value::Bool(arg(0) == arg(1)),
            Function::EqualInteger | Function::LessThan | Function::GreaterThan => {
                let (Value::Int(a), Value::Int(b)) = (arg(0), arg(1)) else { unreachable!("type-checked") };
                Value::Bool(match node.function {
                    Function::EqualInteger => a == b,
                    Function::LessThan => a < b,
                    _ => a > b,
                })
            }
        };
        values.push(v);
    }
    Ok(match values.last().copied() {
        Some(Value::Int(k)) => Answer::Count(k),
        Some(Value::Bool(b)) => Answer::Bool(b),
        Some(Value::Attr(a)) => Answer::Attr(a),
        _ => unreachable!("check() guarantees an answer-typed terminal"),
    })
}
