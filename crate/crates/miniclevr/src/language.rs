//! Template verbalization, its inverse parser, and the closed vocabulary.

use std::collections::HashMap;

use rand::Rng;

use crate::attrs::{Attribute, Color, Material, Shape, Size};
use crate::error::{ParseError, ProgramError, VocabError};
use crate::program::{Program, Relation};
use crate::question::{Chain, Comparison, Filters, Question};

pub const PAD: &str = "<pad>";

/// Every word the templates can emit, in a fixed order. Index 0 is padding.
pub const VOCABULARY: &[&str] = &[
    PAD, "how", "many", "are", "there", "any", "the", "same", "number", "of", "and", "fewer", "more",
    "than", "what", "is", "does", "have", "as", "color", "shape", "size", "material", "left", "right",
    "above", "below", "thing", "things", "object", "objects", "circle", "circles", "square", "squares",
    "triangle", "triangles", "red", "green", "blue", "yellow", "cyan", "purple", "small", "tiny",
    "large", "big", "matte", "rubber", "shiny", "metal",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_words(VOCABULARY.iter().map(|w| w.to_string()).collect())
    }
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Self {
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Vocabulary { words, ids }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn tokenize<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<u32>, VocabError> {
        words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                match self.ids.get(w) {
                    Some(0) | None => Err(VocabError::UnknownWord(w.to_string())),
                    Some(&id) => Ok(id),
                }
            })
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<Vec<String>, VocabError> {
        ids.iter()
            .map(|&id| match self.words.get(id as usize) {
                Some(w) if id != 0 => Ok(w.clone()),
                _ => Err(VocabError::UnknownId(id)),
            })
            .collect()
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, options: &[&'static str]) -> &'static str {
    options[rng.gen_range(0..options.len())]
}

fn shape_noun(shape: Option<Shape>, plural: bool) -> Option<&'static str> {
    shape.map(|s| match (s, plural) {
        (Shape::Circle, false) => "circle",
        (Shape::Circle, true) => "circles",
        (Shape::Square, false) => "square",
        (Shape::Square, true) => "squares",
        (Shape::Triangle, false) => "triangle",
        (Shape::Triangle, true) => "triangles",
    })
}

fn noun_phrase<R: Rng + ?Sized>(chain: &Chain, plural: bool, rng: &mut R, out: &mut Vec<&'static str>) {
    let f = &chain.filters;
    if let Some(size) = f.size {
        out.push(match size {
            Size::Small => pick(rng, &["small", "tiny"]),
            Size::Large => pick(rng, &["large", "big"]),
        });
    }
    if let Some(color) = f.color {
        out.push(color.name());
    }
    if let Some(material) = f.material {
        out.push(match material {
            Material::Matte => pick(rng, &["matte", "rubber"]),
            Material::Shiny => pick(rng, &["shiny", "metal"]),
        });
    }
    out.push(match shape_noun(f.shape, plural) {
        Some(noun) => noun,
        None if plural => pick(rng, &["things", "objects"]),
        None => pick(rng, &["thing", "object"]),
    });
    if let Some((rel, referent)) = &chain.relate {
        match rel {
            Relation::Left => out.extend(["left", "of"]),
            Relation::Right => out.extend(["right", "of"]),
            Relation::Above => out.push("above"),
            Relation::Below => out.push("below"),
        }
        out.push("the");
        noun_phrase(referent, false, rng, out);
    }
}

/// Renders `program` as a question, drawing synonyms from `rng`.
pub fn verbalize<R: Rng + ?Sized>(program: &Program, rng: &mut R) -> Result<Vec<&'static str>, ProgramError> {
    let q = Question::from_program(program)?;
    let mut w: Vec<&'static str> = Vec::with_capacity(24);
    match &q {
        Question::Count(c) => {
            w.extend(["how", "many"]);
            noun_phrase(c, true, rng, &mut w);
            w.extend(["are", "there"]);
        }
        Question::Exist(c) => {
            w.extend(["are", "there", "any"]);
            noun_phrase(c, true, rng, &mut w);
        }
        Question::CompareCounts(cmp, a, b) => {
            match cmp {
                Comparison::Equal => w.extend(["are", "there", "the", "same", "number", "of"]),
                Comparison::Less => w.extend(["are", "there", "fewer"]),
                Comparison::Greater => w.extend(["are", "there", "more"]),
            }
            noun_phrase(a, true, rng, &mut w);
            w.push(if *cmp == Comparison::Equal { "and" } else { "than" });
            noun_phrase(b, true, rng, &mut w);
        }
        Question::Query(attr, c) => {
            w.extend(["what", attr.name(), "is", "the"]);
            noun_phrase(c, false, rng, &mut w);
        }
        Question::SameAttribute(attr, a, b) => {
            w.extend(["does", "the"]);
            noun_phrase(a, false, rng, &mut w);
            w.extend(["have", "the", "same", attr.name(), "as", "the"]);
            noun_phrase(b, false, rng, &mut w);
        }
    }
    Ok(w)
}

struct Parser<'a, S> {
    words: &'a [S],
    pos: usize,
}

impl<'a, S: AsRef<str>> Parser<'a, S> {
    fn peek(&self) -> Option<&str> {
        self.words.get(self.pos).map(AsRef::as_ref)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { position: self.pos, msg: msg.into() })
    }

    fn expect(&mut self, word: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(w) if w == word => {
                self.pos += 1;
                Ok(())
            }
            other => self.fail(format!("expected {word:?}, found {other:?}")),
        }
    }

    fn expect_all(&mut self, words: &[&str]) -> Result<(), ParseError> {
        words.iter().try_for_each(|w| self.expect(w))
    }

    fn accept(&mut self, word: &str) -> bool {
        if self.peek() == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn take_if<T>(&mut self, f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let v = self.peek().and_then(f)?;
        self.pos += 1;
        Some(v)
    }

    fn noun_phrase(&mut self, plural: bool) -> Result<Chain, ParseError> {
        let mut f = Filters::default();
        f.size = self.take_if(|w| match w {
            "small" | "tiny" => Some(Size::Small),
            "large" | "big" => Some(Size::Large),
            _ => None,
        });
        f.color = self.take_if(Color::from_name);
        f.material = self.take_if(|w| match w {
            "matte" | "rubber" => Some(Material::Matte),
            "shiny" | "metal" => Some(Material::Shiny),
            _ => None,
        });
        let generic = if plural { ["things", "objects"] } else { ["thing", "object"] };
        if self.take_if(|w| generic.contains(&w).then_some(())).is_none() {
            let shape = self.take_if(|w| Shape::ALL.iter().copied().find(|&s| shape_noun(Some(s), plural) == Some(w)));
            match shape {
                Some(s) => f.shape = Some(s),
                None => return self.fail("expected a noun"),
            }
        }
        let rel = match self.peek() {
            Some("left") => Some((Relation::Left, true)),
            Some("right") => Some((Relation::Right, true)),
            Some("above") => Some((Relation::Above, false)),
            Some("below") => Some((Relation::Below, false)),
            _ => None,
        };
        match rel {
            None => Ok(Chain::of(f)),
            Some((rel, with_of)) => {
                self.pos += 1;
                if with_of {
                    self.expect("of")?;
                }
                self.expect("the")?;
                let referent = self.noun_phrase(false)?;
                Ok(Chain::related(f, rel, referent))
            }
        }
    }

    fn attribute(&mut self) -> Result<Attribute, ParseError> {
        match self.take_if(Attribute::from_name) {
            Some(a) => Ok(a),
            None => self.fail("expected an attribute name"),
        }
    }

    fn question(&mut self) -> Result<Question, ParseError> {
        let q = if self.accept("how") {
            self.expect("many")?;
            let c = self.noun_phrase(true)?;
            self.expect_all(&["are", "there"])?;
            Question::Count(c)
        } else if self.accept("what") {
            let attr = self.attribute()?;
            self.expect_all(&["is", "the"])?;
            Question::Query(attr, self.noun_phrase(false)?)
        } else if self.accept("does") {
            self.expect("the")?;
            let a = self.noun_phrase(false)?;
            self.expect_all(&["have", "the", "same"])?;
            let attr = self.attribute()?;
            self.expect_all(&["as", "the"])?;
            Question::SameAttribute(attr, a, self.noun_phrase(false)?)
        } else {
            self.expect_all(&["are", "there"])?;
            if self.accept("any") {
                Question::Exist(self.noun_phrase(true)?)
            } else {
                let cmp = if self.accept("fewer") {
                    Comparison::Less
                } else if self.accept("more") {
                    Comparison::Greater
                } else {
                    self.expect_all(&["the", "same", "number", "of"])?;
                    Comparison::Equal
                };
                let a = self.noun_phrase(true)?;
                self.expect(if cmp == Comparison::Equal { "and" } else { "than" })?;
                Question::CompareCounts(cmp, a, self.noun_phrase(true)?)
            }
        };
        if self.pos != self.words.len() {
            return self.fail("trailing words");
        }
        Ok(q)
    }
}

/// Inverse of [`verbalize`]: recovers the program of a templated question.
pub fn parse_question<S: AsRef<str>>(words: &[S]) -> Result<Program, ParseError> {
    Ok(Parser { words, pos: 0 }.question()?.to_program())
}
