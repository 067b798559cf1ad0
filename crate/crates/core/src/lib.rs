//! Multilingual RST discourse parsing toolkit.
//!
//! The crate covers the full pipeline:
//!
//! * [`ingest`] — read `dis` / `lisp` / `rs3` treebank files and CoNLL-U
//!   token layers into raw n-ary trees and documents;
//! * [`harmonize`] — normalize relation labels to 18 shared classes and
//!   binarize into [`tree::RstTree`] values;
//! * [`transition`] — shift-reduce transition system and static oracle;
//! * [`features`] — symbolic feature templates over parser configurations;
//! * [`model`] — feed-forward action scorer trained with averaged SGD;
//! * [`decode`] — action-synchronous beam search;
//! * [`evaluate`] — micro-averaged Span/Nuclearity/Relation scores, the
//!   most-frequent-structure baseline, and corpus splitting;
//! * [`crosslingual`] — bilingual dictionaries and word embeddings for
//!   training parsers across languages.

pub mod corpus;
pub mod crosslingual;
pub mod decode;
pub mod doc;
pub mod evaluate;
pub mod features;
pub mod harmonize;
pub mod ingest;
pub mod model;
pub mod synth;
pub mod transition;
pub mod tree;

pub use doc::{Document, Edu, Token, TokenHead};
pub use tree::{NucPattern, Nuclearity, RelationClass, RstNode, RstTree, Span};
