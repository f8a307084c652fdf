//! A small procedural visual question answering world: 2-D scenes of simple
//! shapes, functional programs over them, templated questions and an exact
//! executor used as the answer oracle.

pub mod answers;
pub mod attrs;
pub mod dataset;
pub mod error;
pub mod executor;
pub mod generator;
pub mod language;
pub mod program;
pub mod question;
pub mod render;
pub mod scene;

pub use answers::{answer_list, Answer, Family, MAX_COUNT, NUM_ANSWERS};
pub use attrs::{AttrValue, Attribute, Color, Material, Shape, Size};
pub use dataset::{build_dataset, generate_split, Dataset, DatasetSpec, Manifest, QuestionRecord, Split, SplitData};
pub use error::{DatasetError, ExecError, GenError, ParseError, ProgramError, VocabError};
pub use executor::execute;
pub use generator::{comparison_quintet, sample_program};
pub use language::{parse_question, verbalize, Vocabulary};
pub use program::{Function, Node, Program, Relation};
pub use question::{Chain, Comparison, Filters, Question};
pub use render::render;
pub use scene::{sample_scene, Scene, SceneObject};
