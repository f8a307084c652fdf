//! Functional question programs.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::attrs::{AttrValue, Attribute};
use crate::error::ProgramError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Left,
    Right,
    Above,
    Below,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Left, Relation::Right, Relation::Above, Relation::Below];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }

    pub fn from_name(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    Scene,
    Filter(AttrValue),
    Relate(Relation),
    Unique,
    Count,
    Exist,
    Query(Attribute),
    Equal(Attribute),
    EqualInteger,
    LessThan,
    GreaterThan,
}

/// Static type of a program value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    Set,
    Object,
    Int,
    Bool,
    Attr(Attribute),
}

impl Function {
    /// Function name as written in program listings, e.g. `filter_color`.
    pub fn label(self) -> String {
        match self {
            Function::Scene => "scene".into(),
            Function::Filter(v) => format!("filter_{}", v.attribute().name()),
            Function::Relate(_) => "relate".into(),
            Function::Unique => "unique".into(),
            Function::Count => "count".into(),
            Function::Exist => "exist".into(),
            Function::Query(a) => format!("query_{}", a.name()),
            Function::Equal(a) => format!("equal_{}", a.name()),
            Function::EqualInteger => "equal_integer".into(),
            Function::LessThan => "less_than".into(),
            Function::GreaterThan => "greater_than".into(),
        }
    }

    pub fn value_label(self) -> Option<&'static str> {
        match self {
            Function::Filter(v) => Some(v.name()),
            Function::Relate(r) => Some(r.name()),
            _ => None,
        }
    }

    pub fn parse(label: &str, value: Option<&str>) -> Option<Function> {
        let plain = match label {
            "scene" => Some(Function::Scene),
            "unique" => Some(Function::Unique),
            "count" => Some(Function::Count),
            "exist" => Some(Function::Exist),
            "equal_integer" => Some(Function::EqualInteger),
            "less_than" => Some(Function::LessThan),
            "greater_than" => Some(Function::GreaterThan),
            _ => None,
        };
        if plain.is_some() {
            return if value.is_none() { plain } else { None };
        }
        if label == "relate" {
            return Relation::from_name(value?).map(Function::Relate);
        }
        if let Some(attr) = label.strip_prefix("filter_") {
            return AttrValue::parse(Attribute::from_name(attr)?, value?).map(Function::Filter);
        }
        if value.is_some() {
            return None;
        }
        if let Some(attr) = label.strip_prefix("query_") {
            return Attribute::from_name(attr).map(Function::Query);
        }
        if let Some(attr) = label.strip_prefix("equal_") {
            return Attribute::from_name(attr).map(Function::Equal);
        }
        None
    }

    fn signature(self) -> (&'static [ArgKind], ValueType) {
        use ArgKind::*;
        match self {
            Function::Scene => (&[], ValueType::Set),
            Function::Filter(_) => (&[Set], ValueType::Set),
            Function::Relate(_) => (&[Object], ValueType::Set),
            Function::Unique => (&[Set], ValueType::Object),
            Function::Count => (&[Set], ValueType::Int),
            Function::Exist => (&[Set], ValueType::Bool),
            Function::Query(a) => (&[Object], ValueType::Attr(a)),
            Function::Equal(_) => (&[SameAttr, SameAttr], ValueType::Bool),
            Function::EqualInteger | Function::LessThan | Function::GreaterThan => (&[Int, Int], ValueType::Bool),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArgKind {
    Set,
    Object,
    Int,
    /// The comparison's own attribute type.
    SameAttr,
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value_label() {
            Some(v) => write!(f, "{}[{}]", self.label(), v),
            None => f.write_str(&self.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub function: Function,
    /// Indices of earlier nodes.
    pub inputs: Vec<usize>,
}

/// Program nodes in dependency order; the last node produces the answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub nodes: Vec<Node>,
}

impl Program {
    /// Node count, the program length used for length-bucketed analysis.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn terminal(&self) -> Option<Function> {
        self.nodes.last().map(|n| n.function)
    }

    /// Type-checks every node and returns the answer type.
    pub fn check(&self) -> Result<ValueType, ProgramError> {
        let mut types: Vec<ValueType> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let (args, out) = node.function.signature();
            if node.inputs.len() != args.len() {
                return Err(ProgramError::Arity { node: i, expected: args.len(), found: node.inputs.len() });
            }
            for (&input, &kind) in node.inputs.iter().zip(args) {
                if input >= i {
                    return Err(ProgramError::ForwardReference { node: i, input });
                }
                let ok = match (kind, types[input], out) {
                    (ArgKind::Set, ValueType::Set, _) => true,
                    (ArgKind::Object, ValueType::Object, _) => true,
                    (ArgKind::Int, ValueType::Int, _) => true,
                    (ArgKind::SameAttr, ValueType::Attr(a), _) => node.function == Function::Equal(a),
                    _ => false,
                };
                if !ok {
                    return Err(ProgramError::Type { node: i, function: node.function.label() });
                }
            }
            types.push(out);
        }
        match types.last() {
            None => Err(ProgramError::Empty),
            Some(t @ (ValueType::Int | ValueType::Bool | ValueType::Attr(_))) => Ok(*t),
            Some(_) => Err(ProgramError::NotAnswer),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", n.function)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    function: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
    inputs: Vec<usize>,
}

impl Serialize for Node {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        NodeRecord {
            function: self.function.label(),
            value: self.function.value_label().map(str::to_string),
            inputs: self.inputs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = NodeRecord::deserialize(d)?;
        let function = Function::parse(&rec.function, rec.value.as_deref()).ok_or_else(|| {
            serde::de::Error::custom(format!("unknown function {}[{:?}]", rec.function, rec.value))
        })?;
        Ok(Node { function, inputs: rec.inputs })
    }
}

impl Serialize for Program {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.nodes.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Program { nodes: Vec::deserialize(d)? })
    }
}
