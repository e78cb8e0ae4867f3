//! Explaining robot plans from execution experiences.
//!
//! Experiences are reduced to plan properties and grounded in a time-indexed
//! triple store ([`kstore`]). Empirical highest-density intervals label
//! values typical or atypical ([`typicality`]); pairwise comparisons and the
//! typical-plan rule add derived knowledge ([`inference`]). Contrastive
//! narratives are read out of the store at three levels of detail
//! ([`narrative`]), rewritten into explanations ([`refine`]) and scored
//! ([`evalmetrics`], [`stats`]). [`pipeline`] strings the stages together
//! over a run directory.

pub mod api;
pub mod error;
pub mod evalmetrics;
pub mod experiences;
pub mod inference;
pub mod kstore;
pub mod narrative;
pub mod pipeline;
pub mod refine;
pub mod stats;
pub mod typicality;
pub mod vocab;

pub use error::{Error, Result};
pub use kstore::{KnowledgeBase, Literal, Object, Pattern, Term, TimeInterval, Triple};
pub use narrative::{Narrative, NarrativeRecord, Specificity};
