//! Structured view of the programs the templates can express.
//!
//! A [`Question`] compiles to a [`Program`] in one canonical node order and
//! can be recovered from any program of that shape, which is what lets the
//! verbalizer and the parser meet in the middle.

use crate::attrs::{AttrValue, Attribute, Color, Material, Shape, Size};
use crate::error::ProgramError;
use crate::program::{Function, Node, Program, Relation};
use crate::scene::{Scene, SceneObject};

/// Filters applied in canonical order: size, color, material, shape.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Filters {
    pub size: Option<Size>,
    pub color: Option<Color>,
    pub material: Option<Material>,
    pub shape: Option<Shape>,
}

impl Filters {
    pub fn values(&self) -> Vec<AttrValue> {
        let mut out = Vec::with_capacity(4);
        out.extend(self.size.map(AttrValue::Size));
        out.extend(self.color.map(AttrValue::Color));
        out.extend(self.material.map(AttrValue::Material));
        out.extend(self.shape.map(AttrValue::Shape));
        out
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, attribute: Attribute) -> Option<AttrValue> {
        self.values().into_iter().find(|v| v.attribute() == attribute)
    }

    /// Sets a filter; returns `false` if that attribute was already filtered.
    pub fn insert(&mut self, value: AttrValue) -> bool {
        match value {
            AttrValue::Size(v) => self.size.replace(v).is_none(),
            AttrValue::Color(v) => self.color.replace(v).is_none(),
            AttrValue::Material(v) => self.material.replace(v).is_none(),
            AttrValue::Shape(v) => self.shape.replace(v).is_none(),
        }
    }

    /// Filters copying `attributes` from `object`.
    pub fn from_object(object: &SceneObject, attributes: &[Attribute]) -> Filters {
        let mut f = Filters::default();
        for &a in attributes {
            f.insert(object.get(a));
        }
        f
    }

    pub fn matches(&self, object: &SceneObject) -> bool {
        self.values().into_iter().all(|v| object.has(v))
    }
}

/// A set-valued sub-program: filters over either the whole scene or the
/// objects related to a uniquely described referent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chain {
    pub filters: Filters,
    pub relate: Option<(Relation, Box<Chain>)>,
}

impl Chain {
    pub fn of(filters: Filters) -> Chain {
        Chain { filters, relate: None }
    }

    pub fn related(filters: Filters, relation: Relation, referent: Chain) -> Chain {
        Chain { filters, relate: Some((relation, Box::new(referent))) }
    }

    fn emit(&self, nodes: &mut Vec<Node>) -> usize {
        let mut last = match &self.relate {
            None => {
                nodes.push(Node { function: Function::Scene, inputs: vec![] });
                nodes.len() - 1
            }
            Some((rel, referent)) => {
                let set = referent.emit(nodes);
                nodes.push(Node { function: Function::Unique, inputs: vec![set] });
                nodes.push(Node { function: Function::Relate(*rel), inputs: vec![nodes.len() - 1] });
                nodes.len() - 1
            }
        };
        for v in self.filters.values() {
            nodes.push(Node { function: Function::Filter(v), inputs: vec![last] });
            last = nodes.len() - 1;
        }
        last
    }

    fn decompile(program: &Program, mut at: usize) -> Option<Chain> {
        let mut filters = Vec::new();
        loop {
            let node = program.nodes.get(at)?;
            match node.function {
                Function::Filter(v) => {
                    filters.push(v);
                    at = *node.inputs.first()?;
                }
                Function::Scene => {
                    return Some(Chain::of(collect_filters(filters)?));
                }
                Function::Relate(rel) => {
                    let unique = program.nodes.get(*node.inputs.first()?)?;
                    if unique.function != Function::Unique {
                        return None;
                    }
                    let referent = Chain::decompile(program, *unique.inputs.first()?)?;
                    return Some(Chain::related(collect_filters(filters)?, rel, referent));
                }
                _ => return None,
            }
        }
    }

    /// Indices of scene objects selected by this chain, or `None` when a
    /// referent is not unique.
    pub fn select(&self, scene: &Scene) -> Option<Vec<usize>> {
        let base: Vec<usize> = match &self.relate {
            None => (0..scene.objects.len()).collect(),
            Some((rel, referent)) => {
                let r = referent.select(scene)?;
                if r.len() != 1 {
                    return None;
                }
                let anchor = &scene.objects[r[0]];
                (0..scene.objects.len())
                    .filter(|&j| j != r[0] && crate::executor::related(*rel, &scene.objects[j], anchor))
                    .collect()
            }
        };
        Some(base.into_iter().filter(|&j| self.filters.matches(&scene.objects[j])).collect())
    }

    pub fn depth(&self) -> usize {
        self.relate.as_ref().map_or(0, |(_, r)| 1 + r.depth())
    }
}

fn collect_filters(values: Vec<AttrValue>) -> Option<Filters> {
    let mut f = Filters::default();
    for v in values {
        if !f.insert(v) {
            return None;
        }
    }
    Some(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    Equal,
    Less,
    Greater,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [Comparison::Equal, Comparison::Less, Comparison::Greater];

    fn function(self) -> Function {
        match self {
            Comparison::Equal => Function::EqualInteger,
            Comparison::Less => Function::LessThan,
            Comparison::Greater => Function::GreaterThan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Question {
    Count(Chain),
    Exist(Chain),
    CompareCounts(Comparison, Chain, Chain),
    Query(Attribute, Chain),
    SameAttribute(Attribute, Chain, Chain),
}

impl Question {
    pub fn to_program(&self) -> Program {
        let mut nodes = Vec::new();
        let unique = |nodes: &mut Vec<Node>, chain: &Chain| {
            let s = chain.emit(nodes);
            nodes.push(Node { function: Function::Unique, inputs: vec![s] });
            nodes.len() - 1
        };
        match self {
            Question::Count(c) | Question::Exist(c) => {
                let s = c.emit(&mut nodes);
                let f = if matches!(self, Question::Count(_)) { Function::Count } else { Function::Exist };
                nodes.push(Node { function: f, inputs: vec![s] });
            }
            Question::CompareCounts(cmp, a, b) => {
                let count = |nodes: &mut Vec<Node>, c: &Chain| {
                    let s = c.emit(nodes);
                    nodes.push(Node { function: Function::Count, inputs: vec![s] });
                    nodes.len() - 1
                };
                let x = count(&mut nodes, a);
                let y = count(&mut nodes, b);
                nodes.push(Node { function: cmp.function(), inputs: vec![x, y] });
            }
            Question::Query(attr, c) => {
                let o = unique(&mut nodes, c);
                nodes.push(Node { function: Function::Query(*attr), inputs: vec![o] });
            }
            Question::SameAttribute(attr, a, b) => {
                let x = unique(&mut nodes, a);
                nodes.push(Node { function: Function::Query(*attr), inputs: vec![x] });
                let qx = nodes.len() - 1;
                let y = unique(&mut nodes, b);
                nodes.push(Node { function: Function::Query(*attr), inputs: vec![y] });
                let qy = nodes.len() - 1;
                nodes.push(Node { function: Function::Equal(*attr), inputs: vec![qx, qy] });
            }
        }
        Program { nodes }
    }

    /// Recovers the question structure of a template-shaped program.
    pub fn from_program(program: &Program) -> Result<Question, ProgramError> {
        program.check()?;
        let untemplated = || ProgramError::Untemplated(program.to_string());
        let last = program.len() - 1;
        let term = &program.nodes[last];
        let input = |k: usize| term.inputs[k];
        let node = |i: usize| &program.nodes[i];
        let chain = |i: usize| Chain::decompile(program, i).ok_or_else(untemplated);
        let unique_chain = |i: usize| {
            let n = node(i);
            if n.function != Function::Unique {
                return Err(untemplated());
            }
            chain(n.inputs[0])
        };
        let q = match term.function {
            Function::Count => Question::Count(chain(input(0))?),
            Function::Exist => Question::Exist(chain(input(0))?),
            Function::EqualInteger | Function::LessThan | Function::GreaterThan => {
                let cmp = Comparison::ALL.into_iter().find(|c| c.function() == term.function).expect("listed");
                let count_chain = |i: usize| {
                    let n = node(i);
                    if n.function != Function::Count {
                        return Err(untemplated());
                    }
                    chain(n.inputs[0])
                };
                Question::CompareCounts(cmp, count_chain(input(0))?, count_chain(input(1))?)
            }
            Function::Query(attr) => Question::Query(attr, unique_chain(input(0))?),
            Function::Equal(attr) => {
                let query_chain = |i: usize| {
                    let n = node(i);
                    if n.function != Function::Query(attr) {
                        return Err(untemplated());
                    }
                    unique_chain(n.inputs[0])
                };
                Question::SameAttribute(attr, query_chain(input(0))?, query_chain(input(1))?)
            }
            _ => return Err(untemplated()),
        };
        if q.to_program() != *program {
            return Err(untemplated());
        }
        Ok(q)
    }
}
