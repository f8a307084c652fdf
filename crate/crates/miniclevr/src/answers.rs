//! The closed answer list and question families.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attrs::{AttrValue, Attribute};
use crate::program::{Function, Program};

pub const MAX_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Answer {
    Bool(bool),
    Count(usize),
    Attr(AttrValue),
}

fn all_answers() -> Vec<Answer> {
    let mut out = vec![Answer::Bool(true), Answer::Bool(false)];
    out.extend((0..=MAX_COUNT).map(Answer::Count));
    for attr in [Attribute::Color, Attribute::Shape, Attribute::Size, Attribute::Material] {
        out.extend(AttrValue::all_of(attr).into_iter().map(Answer::Attr));
    }
    out
}

/// Number of entries in [`answer_list`].
pub const NUM_ANSWERS: usize = 22;

/// Fixed answer vocabulary: yes, no, 0-6, colors, shapes, sizes, materials.
pub fn answer_list() -> Vec<&'static str> {
    all_answers().into_iter().map(Answer::name).collect()
}

impl Answer {
    pub fn name(self) -> &'static str {
        const COUNTS: [&str; MAX_COUNT + 1] = ["0", "1", "2", "3", "4", "5", "6"];
        match self {
            Answer::Bool(true) => "yes",
            Answer::Bool(false) => "no",
            Answer::Count(n) => COUNTS.get(n).copied().unwrap_or("?"),
            Answer::Attr(v) => v.name(),
        }
    }

    /// Position in the fixed answer list; `None` for counts above the cap.
    pub fn index(self) -> Option<usize> {
        all_answers().iter().position(|&a| a == self)
    }

    pub fn from_index(index: usize) -> Option<Answer> {
        all_answers().get(index).copied()
    }

    pub fn as_count(self) -> Option<usize> {
        match self {
            Answer::Count(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Question family, determined by the program's terminal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Count,
    Exist,
    CompareInteger,
    QueryAttribute,
    CompareAttribute,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::Count, Family::Exist, Family::CompareInteger, Family::QueryAttribute, Family::CompareAttribute];

    pub fn name(self) -> &'static str {
        match self {
            Family::Count => "count",
            Family::Exist => "exist",
            Family::CompareInteger => "compare_integer",
            Family::QueryAttribute => "query_attribute",
            Family::CompareAttribute => "compare_attribute",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn of_function(function: Function) -> Option<Family> {
        match function {
            Function::Count => Some(Family::Count),
            Function::Exist => Some(Family::Exist),
            Function::EqualInteger | Function::LessThan | Function::GreaterThan => Some(Family::CompareInteger),
            Function::Query(_) => Some(Family::QueryAttribute),
            Function::Equal(_) => Some(Family::CompareAttribute),
            _ => None,
        }
    }

    pub fn of(program: &Program) -> Option<Family> {
        program.terminal().and_then(Family::of_function)
    }

    /// Answers a program of this family can produce.
    pub fn answer_space(self) -> usize {
        match self {
            Family::Count => MAX_COUNT + 1,
            Family::Exist | Family::CompareInteger | Family::CompareAttribute => 2,
            Family::QueryAttribute => Attribute::ALL.iter().map(|a| a.cardinality()).sum(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
