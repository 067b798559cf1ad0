//! Treebank ingestion: reading `dis` / `lisp` / `rs3` tree files and CoNLL-U
//! token layers into raw n-ary trees and aligned documents.
//!
//! The raw trees keep the source annotation style: relations sit on daughter
//! nodes. [`derive_nuclearity`] resolves rs3 roles from the header relation
//! table, and [`lift_relations`] moves relations onto parents where a single
//! parent label is well defined; harmonization then binarizes and maps
//! labels.

pub mod align;
pub mod bracketed;
pub mod conllu;
pub mod rs3;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub use align::align_edus;
pub use bracketed::{parse_dis, parse_lisp};
pub use conllu::load_conllu;
pub use rs3::{parse_rs3, Rs3Options};

/// Role of a raw node under its parent, as found in the source file.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RawRole {
    Nucleus,
    Satellite,
    /// rs3 `span` link: the nucleus child of a span group.
    Span,
    /// Not yet resolved (rs3 relation-carrying children before
    /// [`derive_nuclearity`]; also the root, whose role is never used).
    Unset,
}

/// Terminal unit of a raw tree.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RawLeaf {
    /// Unit id as spelled in the source file.
    pub source_id: String,
    /// Document-order key from the source (dis leaf number, rs3 segment
    /// position).
    pub order: usize,
    /// Final 0-based EDU index; assigned by [`normalize_raw`].
    pub edu: usize,
    pub text: String,
}

/// Node of a raw (possibly n-ary) discourse tree.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RawNode {
    pub role: RawRole,
    /// Relation annotated on this node, pointing toward its parent/sibling.
    pub relation: Option<String>,
    /// Single lifted relation for the subtree rooted here, when well defined
    /// (set by [`lift_relations`]).
    pub label: Option<String>,
    pub children: Vec<RawNode>,
    /// `Some` exactly for leaves.
    pub leaf: Option<RawLeaf>,
}

impl RawNode {
    pub fn leaf(role: RawRole, relation: Option<String>, leaf: RawLeaf) -> Self {
        RawNode {
            role,
            relation,
            label: None,
            children: Vec::new(),
            leaf: Some(leaf),
        }
    }

    pub fn internal(role: RawRole, relation: Option<String>, children: Vec<RawNode>) -> Self {
        RawNode {
            role,
            relation,
            label: None,
            children,
            leaf: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf.is_some()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(RawNode::leaf_count).sum()
        }
    }

    /// Leaves in in-order traversal order.
    pub fn leaves(&self) -> Vec<&RawLeaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a RawLeaf>) {
        if let Some(leaf) = &self.leaf {
            out.push(leaf);
        }
        for child in &self.children {
            child.collect_leaves(out);
        }
    }

    /// Smallest source-order key under this node.
    fn min_order(&self) -> usize {
        match &self.leaf {
            Some(leaf) => leaf.order,
            None => self
                .children
                .iter()
                .map(RawNode::min_order)
                .min()
                .unwrap_or(usize::MAX),
        }
    }
}

/// Whether an rs3 relation takes one nucleus plus satellite, or nuclei only.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NucKind {
    MonoNuclear,
    MultiNuclear,
}

/// Relation-type table from an rs3 header (`<rel name=... type=.../>`).
#[derive(Clone, Default, Debug)]
pub struct RelationTypeTable {
    kinds: HashMap<String, NucKind>,
}

impl RelationTypeTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a relation; `type` is `rst` (mono-nuclear) or `multinuc`.
    pub fn insert(&mut self, name: &str, rel_type: &str) -> Result<(), IngestError> {
        let kind = match rel_type {
            "rst" => NucKind::MonoNuclear,
            "multinuc" => NucKind::MultiNuclear,
            other => {
                return Err(IngestError::BadRelationType {
                    name: name.to_string(),
                    rel_type: other.to_string(),
                })
            }
        };
        self.kinds.insert(name.to_lowercase(), kind);
        Ok(())
    }

    pub fn kind(&self, name: &str) -> Option<NucKind> {
        self.kinds.get(&name.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

/// Resolve rs3 child roles from the relation-type table: `span` children are
/// nuclei, children with a multi-nuclear relation are nuclei, children with a
/// mono-nuclear relation are satellites.
pub fn derive_nuclearity(node: &mut RawNode, table: &RelationTypeTable) -> Result<(), IngestError> {
    for child in &mut node.children {
        match child.role {
            RawRole::Span => child.role = RawRole::Nucleus,
            RawRole::Unset => {
                let relation = child.relation.as_deref().ok_or_else(|| {
                    IngestError::MissingRelation {
                        unit: describe(child),
                    }
                })?;
                match table.kind(relation) {
                    Some(NucKind::MonoNuclear) => child.role = RawRole::Satellite,
                    Some(NucKind::MultiNuclear) => child.role = RawRole::Nucleus,
                    None => {
                        return Err(IngestError::UnknownRelationName {
                            name: relation.to_string(),
                        })
                    }
                }
            }
            RawRole::Nucleus | RawRole::Satellite => {}
        }
    }
    for child in &mut node.children {
        derive_nuclearity(child, table)?;
    }
    Ok(())
}

/// Move relations from daughters onto parents where a single parent label is
/// well defined: all-nuclei nodes sharing one relation, or nodes with exactly
/// one satellite. Nodes with several satellites (one nucleus shared by
/// multiple modifiers) keep their per-child relations; binarization
/// distributes those onto the nodes it creates.
pub fn lift_relations(node: &mut RawNode) -> Result<(), IngestError> {
    for child in &mut node.children {
        lift_relations(child)?;
    }
    if node.is_leaf() {
        return Ok(());
    }
    let n_sats = node
        .children
        .iter()
        .filter(|c| c.role == RawRole::Satellite)
        .count();
    if n_sats == 1 {
        let nuclei_bare = node
            .children
            .iter()
            .all(|c| c.role == RawRole::Satellite || c.relation.is_none());
        if nuclei_bare {
            let relation = node
                .children
                .iter_mut()
                .find(|c| c.role == RawRole::Satellite)
                .and_then(|c| c.relation.take())
                .ok_or_else(|| IngestError::MissingRelation {
                    unit: describe(node),
                })?;
            node.label = Some(relation);
        }
    } else if n_sats == 0 {
        let mut relations: Vec<&str> = node
            .children
            .iter()
            .filter_map(|c| c.relation.as_deref())
            .collect();
        relations.sort_unstable();
        relations.dedup();
        match relations.as_slice() {
            [] => {
                return Err(IngestError::MissingRelation {
                    unit: describe(node),
                })
            }
            [only] => {
                node.label = Some(only.to_string());
                for child in &mut node.children {
                    child.relation = None;
                }
            }
            // Nuclei disagree; keep per-child annotations and let
            // binarization decide whether they can be reconciled.
            _ => {}
        }
    }
    Ok(())
}

/// Put a parsed raw tree into canonical form: sort every sibling list by the
/// source order of the leftmost covered unit, require the resulting in-order
/// traversal to follow document order (non-adjacent spans are irreparable
/// otherwise), and assign final 0-based EDU indices.
pub fn normalize_raw(mut root: RawNode) -> Result<RawNode, IngestError> {
    if root.leaf_count() == 0 {
        return Err(IngestError::NoUnits);
    }
    sort_children(&mut root);
    let orders: Vec<usize> = root.leaves().iter().map(|l| l.order).collect();
    for pair in orders.windows(2) {
        if pair[0] >= pair[1] {
            return Err(IngestError::NonAdjacentSpan {
                detail: format!(
                    "in-order unit {} precedes unit {} after sibling reordering",
                    pair[1], pair[0]
                ),
            });
        }
    }
    let mut next = 0;
    assign_edu_indices(&mut root, &mut next);
    normalize_texts(&mut root);
    Ok(root)
}

fn sort_children(node: &mut RawNode) {
    for child in &mut node.children {
        sort_children(child);
    }
    node.children.sort_by_key(RawNode::min_order);
}

fn assign_edu_indices(node: &mut RawNode, next: &mut usize) {
    if let Some(leaf) = &mut node.leaf {
        leaf.edu = *next;
        *next += 1;
    }
    for child in &mut node.children {
        assign_edu_indices(child, next);
    }
}

fn normalize_texts(node: &mut RawNode) {
    if let Some(leaf) = &mut node.leaf {
        leaf.text = leaf.text.nfc().collect::<String>().trim().to_string();
    }
    for child in &mut node.children {
        normalize_texts(child);
    }
}

fn describe(node: &RawNode) -> String {
    match &node.leaf {
        Some(leaf) => format!("unit {}", leaf.source_id),
        None => {
            let leaves = node.leaves();
            match (leaves.first(), leaves.last()) {
                (Some(a), Some(b)) => format!("group covering units {}..{}", a.source_id, b.source_id),
                _ => "empty group".to_string(),
            }
        }
    }
}

/// Tree file formats understood by the ingestion layer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TreeFormat {
    Dis,
    Lisp,
    Rs3,
}

impl TreeFormat {
    /// Guess the format from a file name extension.
    pub fn from_extension(path: &str) -> Option<TreeFormat> {
        let ext = path.rsplit('.').next()?.to_lowercase();
        match ext.as_str() {
            "dis" => Some(TreeFormat::Dis),
            "lisp" | "rst" => Some(TreeFormat::Lisp),
            "rs3" => Some(TreeFormat::Rs3),
            _ => None,
        }
    }
}

impl fmt::Display for TreeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeFormat::Dis => "dis",
            TreeFormat::Lisp => "lisp",
            TreeFormat::Rs3 => "rs3",
        })
    }
}

/// Result of parsing one rs3 file.
#[derive(Clone, Debug)]
pub struct Rs3Parse {
    pub root: RawNode,
    pub table: RelationTypeTable,
    /// Repairs applied while reading (removed units, dropped title).
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("syntax error at {at}: {msg}")]
    Syntax { at: String, msg: String },
    #[error("relation `{name}` has unsupported type `{rel_type}` (expected rst or multinuc)")]
    BadRelationType { name: String, rel_type: String },
    #[error("relation `{name}` is not declared in the header relation table")]
    UnknownRelationName { name: String },
    #[error("{unit} carries no relation")]
    MissingRelation { unit: String },
    #[error("document has several roots after cleanup: {}", ids.join(", "))]
    MultipleRoots { ids: Vec<String> },
    #[error("unit `{id}` points at unknown parent `{parent}`")]
    DanglingParent { id: String, parent: String },
    #[error("non-adjacent span: {detail}")]
    NonAdjacentSpan { detail: String },
    #[error("document tree has no units")]
    NoUnits,
    #[error("group `{id}` has no structural children")]
    EmptyGroup { id: String },
    #[error("span group `{id}` has {count} span children (expected exactly 1)")]
    SpanChildren { id: String, count: usize },
    #[error("segment `{id}` is empty but linked into the tree")]
    EmptyLinkedSegment { id: String },
    #[error("first segment `{id}` was marked as title but other units link to it")]
    TitleLinked { id: String },
    #[error("CoNLL-U line {line}: {msg}")]
    Conllu { line: usize, msg: String },
    #[error(transparent)]
    Align(#[from] align::AlignError),
}
