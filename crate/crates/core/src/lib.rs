//! Knowledge-guided counterfactual probing of visual question answering models.
//!
//! The pipeline: load a dataset ([`dataset`]), rewrite each question with one
//! knowledge-base-driven edit ([`perturb`], backed by [`wordnet`] and
//! [`color`]), ask a black-box model both versions ([`model`]), score the
//! answers ([`eval`]) and mine the answer changes into rules ([`explain`]).

pub mod color;
pub mod dataset;
pub mod eval;
pub mod explain;
pub mod kind;
pub mod lingproc;
pub mod model;
pub mod perturb;
pub mod wordnet;

pub use kind::PerturbationKind;
