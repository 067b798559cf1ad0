//! Harmonization of raw source trees into binary trees over the 18 coarse
//! relation classes: n-ary nodes are binarized right-branching (with one
//! exception for satellite tails) and every relation name is looked up in a
//! shared mapping table.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

use crate::ingest::{RawNode, RawRole};
use crate::tree::{NucPattern, Nuclearity, RelationClass, RstNode, RstTree, Violation};

/// Mapping from annotated relation names to coarse relation classes.
#[derive(Clone, Debug)]
pub struct LabelMapping {
    map: HashMap<String, RelationClass>,
}

static BUILTIN: OnceLock<LabelMapping> = OnceLock::new();

impl LabelMapping {
    /// The table shipped with the crate, covering the relation inventories
    /// of the supported treebanks.
    pub fn builtin() -> &'static LabelMapping {
        BUILTIN.get_or_init(|| {
            LabelMapping::from_tsv(include_str!("../data/label_map.tsv"))
                .expect("embedded label table is well-formed")
        })
    }

    /// Parse a mapping from TSV text: `name<TAB>class` per line, `#` starts
    /// a comment.
    pub fn from_tsv(text: &str) -> Result<LabelMapping, HarmonizeError> {
        let mut map = HashMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, class) = line.split_once('\t').ok_or_else(|| {
                HarmonizeError::BadMappingLine {
                    line: idx + 1,
                    content: line.to_string(),
                }
            })?;
            let class: RelationClass =
                class.trim().parse().map_err(|_| HarmonizeError::BadMappingLine {
                    line: idx + 1,
                    content: line.to_string(),
                })?;
            map.insert(normalize_label(name), class);
        }
        if map.is_empty() {
            return Err(HarmonizeError::EmptyMapping);
        }
        Ok(LabelMapping { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Look up a relation name: exact normalized match first, then with one
    /// of the suffixes `-e` / `-s` / `-mn` removed.
    pub fn map(&self, name: &str) -> Result<RelationClass, HarmonizeError> {
        let normalized = normalize_label(name);
        if let Some(class) = self.map.get(&normalized) {
            return Ok(*class);
        }
        for suffix in ["-mn", "-e", "-s"] {
            if let Some(base) = normalized.strip_suffix(suffix) {
                if let Some(class) = self.map.get(base) {
                    return Ok(*class);
                }
                break; // only one suffix may be removed
            }
        }
        Err(HarmonizeError::UnmappedRelation {
            name: name.to_string(),
            normalized,
        })
    }
}

/// Canonical lookup form of a relation name: lowercased, with separator
/// variants folded to `-`.
pub fn normalize_label(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .replace([' ', '_'], "-")
}

/// Map one relation name through a table (convenience over
/// [`LabelMapping::map`]).
pub fn map_label(name: &str, mapping: &LabelMapping) -> Result<RelationClass, HarmonizeError> {
    mapping.map(name)
}

/// A subtree plus the sibling-level annotations needed to combine it: its
/// role under the parent and the relation it carries toward its sibling.
struct Unit {
    node: RstNode<String>,
    role: Nuclearity,
    relation: Option<String>,
}

/// Expand an n-ary raw tree into a binary tree with string labels.
///
/// Sibling lists fold right-branching, except that a tail of two or more
/// satellites (sharing the preceding nucleus) folds left from the nucleus,
/// so that no created node pairs two satellites. Relations lifted to parent
/// labels are redistributed onto the created nodes.
pub fn binarize(raw: &RawNode) -> Result<RstNode<String>, HarmonizeError> {
    Ok(subtree(raw)?.0)
}

/// Binarize `raw`, returning the node plus the relation this subtree
/// carries as a sibling.
fn subtree(raw: &RawNode) -> Result<(RstNode<String>, Option<String>), HarmonizeError> {
    if let Some(leaf) = &raw.leaf {
        return Ok((RstNode::leaf(leaf.edu), raw.relation.clone()));
    }
    let mut units = Vec::with_capacity(raw.children.len());
    for child in &raw.children {
        let (node, own_relation) = subtree(child)?;
        let role = role_of(child)?;
        units.push(Unit {
            node,
            role,
            relation: effective_relation(raw, role, own_relation),
        });
    }
    let folded = fold(units, raw)?;
    Ok((folded.node, raw.relation.clone()))
}

fn role_of(child: &RawNode) -> Result<Nuclearity, HarmonizeError> {
    match child.role {
        RawRole::Nucleus => Ok(Nuclearity::Nucleus),
        RawRole::Satellite => Ok(Nuclearity::Satellite),
        RawRole::Span | RawRole::Unset => Err(HarmonizeError::UnresolvedNuclearity {
            at: describe(child),
        }),
    }
}

/// Relation a child contributes when its siblings combine: its own
/// annotation, or the parent's lifted label when that label belongs to it
/// (satellites under a lifted node; every child of an all-nuclei node).
fn effective_relation(
    parent: &RawNode,
    role: Nuclearity,
    own: Option<String>,
) -> Option<String> {
    if own.is_some() {
        return own;
    }
    let label = parent.label.as_ref()?;
    let has_satellites = parent
        .children
        .iter()
        .any(|c| c.role == RawRole::Satellite);
    if role == Nuclearity::Satellite || !has_satellites {
        Some(label.clone())
    } else {
        None
    }
}

fn fold(mut units: Vec<Unit>, raw: &RawNode) -> Result<Unit, HarmonizeError> {
    debug_assert!(!units.is_empty(), "internal nodes have children");
    if units.len() == 1 {
        return Ok(units.pop().expect("one unit"));
    }
    // Satellite tail: under right-branching the two final satellites would
    // combine with each other, so fold them onto their nucleus first.
    let len = units.len();
    if len >= 3
        && units[len - 1].role == Nuclearity::Satellite
        && units[len - 2].role == Nuclearity::Satellite
    {
        let nucleus_at = units
            .iter()
            .rposition(|u| u.role == Nuclearity::Nucleus)
            .ok_or_else(|| HarmonizeError::NoNucleus { at: describe(raw) })?;
        let tail: Vec<Unit> = units.split_off(nucleus_at);
        let mut tail = tail.into_iter();
        let mut acc = tail.next().expect("nucleus unit");
        for sat in tail {
            acc = combine(acc, sat, raw)?;
        }
        units.push(acc);
    }
    let mut result = units.pop().expect("at least one unit");
    while let Some(unit) = units.pop() {
        result = combine(unit, result, raw)?;
    }
    Ok(result)
}

/// Combine two adjacent units into one binary node.
fn combine(left: Unit, right: Unit, raw: &RawNode) -> Result<Unit, HarmonizeError> {
    let pattern = NucPattern::from_children(left.role, right.role);
    let relation = match pattern {
        NucPattern::NS => right
            .relation
            .clone()
            .ok_or_else(|| HarmonizeError::MissingRelation { at: describe(raw) })?,
        NucPattern::SN => left
            .relation
            .clone()
            .ok_or_else(|| HarmonizeError::MissingRelation { at: describe(raw) })?,
        NucPattern::NN => match (&left.relation, &right.relation) {
            (Some(a), Some(b)) if a == b => a.clone(),
            (Some(a), None) => a.clone(),
            (None, Some(b)) => b.clone(),
            (None, None) => {
                return Err(HarmonizeError::MissingRelation { at: describe(raw) })
            }
            (Some(a), Some(b)) => {
                return Err(HarmonizeError::ConflictingRelations {
                    at: describe(raw),
                    first: a.clone(),
                    second: b.clone(),
                })
            }
        },
        NucPattern::SS => {
            return Err(HarmonizeError::TwoSatellites { at: describe(raw) })
        }
    };
    // The hull acts as its nucleus side: same role, same outward relation.
    let (role, outward) = match pattern {
        NucPattern::SN => (Nuclearity::Nucleus, right.relation),
        NucPattern::NS => (Nuclearity::Nucleus, left.relation),
        NucPattern::NN => (Nuclearity::Nucleus, Some(relation.clone())),
        NucPattern::SS => unreachable!("rejected above"),
    };
    Ok(Unit {
        node: RstNode::internal(left.node, right.node, pattern, relation),
        role,
        relation: outward,
    })
}

fn describe(raw: &RawNode) -> String {
    let leaves = raw.leaves();
    match (leaves.first(), leaves.last()) {
        (Some(a), Some(b)) if a.source_id != b.source_id => {
            format!("node covering units {}..{}", a.source_id, b.source_id)
        }
        (Some(a), _) => format!("node at unit {}", a.source_id),
        _ => "empty node".to_string(),
    }
}

/// Binarize a raw tree and map its labels, producing a validated tree.
pub fn harmonize_document(
    raw: &RawNode,
    mapping: &LabelMapping,
) -> Result<RstTree, HarmonizeError> {
    let labeled = binarize(raw)?;
    let root = labeled.map_relation(&mut |name: &String| mapping.map(name))?;
    let tree = RstTree::new(root);
    let violations = tree.validate();
    if !violations.is_empty() {
        return Err(HarmonizeError::InvalidTree { violations });
    }
    Ok(tree)
}

/// Corpus-level statistics accumulated while harmonizing documents.
#[derive(Clone, Default, Debug)]
pub struct CorpusStats {
    pub trees: usize,
    pub edus: usize,
    pub cdus: usize,
    pub min_edus: usize,
    pub max_edus: usize,
    /// Documents that failed harmonization: (document id, reason).
    pub skipped: Vec<(String, String)>,
}

impl CorpusStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tree(&mut self, tree: &RstTree) {
        let n = tree.n_edus();
        self.trees += 1;
        self.edus += n;
        self.cdus += tree.root.internal_count();
        self.min_edus = if self.trees == 1 {
            n
        } else {
            self.min_edus.min(n)
        };
        self.max_edus = self.max_edus.max(n);
    }

    pub fn add_skipped(&mut self, id: impl Into<String>, reason: impl Into<String>) {
        self.skipped.push((id.into(), reason.into()));
    }

    /// Documents seen, usable or not.
    pub fn docs(&self) -> usize {
        self.trees + self.skipped.len()
    }

    pub fn avg_edus(&self) -> f64 {
        if self.trees == 0 {
            0.0
        } else {
            self.edus as f64 / self.trees as f64
        }
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>6} {:>7} {:>8} {:>8} {:>5} {:>5} {:>7}",
            "#Docs", "#Trees", "#EDU", "#CDU", "min", "max", "avg"
        )?;
        write!(
            f,
            "{:>6} {:>7} {:>8} {:>8} {:>5} {:>5} {:>7.2}",
            self.docs(),
            self.trees,
            self.edus,
            self.cdus,
            self.min_edus,
            self.max_edus,
            self.avg_edus()
        )?;
        for (id, reason) in &self.skipped {
            write!(f, "\nskipped {id}: {reason}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarmonizeError {
    #[error("mapping line {line} is malformed: `{content}`")]
    BadMappingLine { line: usize, content: String },
    #[error("mapping table has no entries")]
    EmptyMapping,
    #[error("relation `{name}` (normalized `{normalized}`) is not in the mapping table")]
    UnmappedRelation { name: String, normalized: String },
    #[error("{at}: child nuclearity is unresolved")]
    UnresolvedNuclearity { at: String },
    #[error("{at}: no relation available for the created node")]
    MissingRelation { at: String },
    #[error("{at}: children carry conflicting relations `{first}` and `{second}`")]
    ConflictingRelations {
        at: String,
        first: String,
        second: String,
    },
    #[error("{at}: combining two satellites is not well-formed")]
    TwoSatellites { at: String },
    #[error("{at}: children include no nucleus")]
    NoNucleus { at: String },
    #[error("harmonized tree is invalid: {violations:?}")]
    InvalidTree { violations: Vec<Violation> },
}
