use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProgramError {
    #[error("empty program")]
    Empty,
    #[error("node {node}: expected {expected} inputs, found {found}")]
    Arity { node: usize, expected: usize, found: usize },
    #[error("node {node}: input {input} does not precede it")]
    ForwardReference { node: usize, input: usize },
    #[error("node {node}: {function} applied to an argument of the wrong type")]
    Type { node: usize, function: String },
    #[error("program does not end in an answer-typed node")]
    NotAnswer,
    #[error("program has no question template: {0}")]
    Untemplated(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("node {node}: unique applied to a set of {size} objects")]
    NotUnique { node: usize, size: usize },
    #[error("scene has {0} objects; at most 64 are supported")]
    SceneTooLarge(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("token id {0} is not in the vocabulary")]
    UnknownId(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse question at word {position}: {msg}")]
pub struct ParseError {
    pub position: usize,
    pub msg: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    /// No valid program was found for this scene; draw a new scene.
    #[error("no valid {family} program after {draws} draws")]
    Exhausted { family: &'static str, draws: usize },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("output directory {0} already contains a dataset (use force to overwrite)")]
    Exists(PathBuf),
    #[error("invalid dataset parameters: {0}")]
    Invalid(String),
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DatasetError {
        let path = path.into();
        move |source| DatasetError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> DatasetError {
        let path = path.into();
        move |source| DatasetError::Json { path, source }
    }
}
