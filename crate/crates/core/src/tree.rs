//! Binary discourse trees over elementary discourse units (EDUs).
//!
//! A tree covers EDUs `0..n` with leaves in document order; every internal
//! node carries a nuclearity pattern and a relation label. Internally all
//! spans are half-open 0-based intervals; the bracketed text format at the
//! serialization boundary uses 1-based EDU numbers.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Half-open interval `[start, end)` of EDU indices covered by a node.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // External convention: 1-based inclusive.
        write!(f, "[{},{}]", self.start + 1, self.end)
    }
}

/// Role of one child under a discourse node.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Nuclearity {
    Nucleus,
    Satellite,
}

/// Nuclearity pattern of a binary node: (left child role, right child role).
///
/// `SS` is representable so that ill-formed input can be diagnosed, but it is
/// rejected by [`RstNode::validate`] and is never produced by harmonization
/// of well-formed trees, nor constructible as a parser action.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum NucPattern {
    NN,
    NS,
    SN,
    SS,
}

impl NucPattern {
    pub fn from_children(left: Nuclearity, right: Nuclearity) -> Self {
        use Nuclearity::*;
        match (left, right) {
            (Nucleus, Nucleus) => NucPattern::NN,
            (Nucleus, Satellite) => NucPattern::NS,
            (Satellite, Nucleus) => NucPattern::SN,
            (Satellite, Satellite) => NucPattern::SS,
        }
    }

    pub fn left(&self) -> Nuclearity {
        match self {
            NucPattern::NN | NucPattern::NS => Nuclearity::Nucleus,
            NucPattern::SN | NucPattern::SS => Nuclearity::Satellite,
        }
    }

    pub fn right(&self) -> Nuclearity {
        match self {
            NucPattern::NN | NucPattern::SN => Nuclearity::Nucleus,
            NucPattern::NS | NucPattern::SS => Nuclearity::Satellite,
        }
    }

    /// A pattern is well formed when at least one side is a nucleus.
    pub fn is_well_formed(&self) -> bool {
        !matches!(self, NucPattern::SS)
    }

    pub fn name(&self) -> &'static str {
        match self {
            NucPattern::NN => "NN",
            NucPattern::NS => "NS",
            NucPattern::SN => "SN",
            NucPattern::SS => "SS",
        }
    }
}

impl fmt::Display for NucPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NucPattern {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, TreeError> {
        match s {
            "NN" => Ok(NucPattern::NN),
            "NS" => Ok(NucPattern::NS),
            "SN" => Ok(NucPattern::SN),
            "SS" => Ok(NucPattern::SS),
            _ => Err(TreeError::UnknownPattern(s.to_string())),
        }
    }
}

/// The 18 coarse relation classes shared by all harmonized treebanks.
///
/// Declaration order matches the lexicographic order of the class names, so
/// the derived `Ord` can be used wherever deterministic label ordering is
/// required (tie-breaking, vocabulary layout).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum RelationClass {
    Attribution,
    Background,
    Cause,
    Comparison,
    Condition,
    Contrast,
    Elaboration,
    Enablement,
    Evaluation,
    Explanation,
    Joint,
    MannerMeans,
    SameUnit,
    Summary,
    Temporal,
    TextualOrganization,
    TopicChange,
    TopicComment,
}

impl RelationClass {
    pub const ALL: [RelationClass; 18] = [
        RelationClass::Attribution,
        RelationClass::Background,
        RelationClass::Cause,
        RelationClass::Comparison,
        RelationClass::Condition,
        RelationClass::Contrast,
        RelationClass::Elaboration,
        RelationClass::Enablement,
        RelationClass::Evaluation,
        RelationClass::Explanation,
        RelationClass::Joint,
        RelationClass::MannerMeans,
        RelationClass::SameUnit,
        RelationClass::Summary,
        RelationClass::Temporal,
        RelationClass::TextualOrganization,
        RelationClass::TopicChange,
        RelationClass::TopicComment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RelationClass::Attribution => "Attribution",
            RelationClass::Background => "Background",
            RelationClass::Cause => "Cause",
            RelationClass::Comparison => "Comparison",
            RelationClass::Condition => "Condition",
            RelationClass::Contrast => "Contrast",
            RelationClass::Elaboration => "Elaboration",
            RelationClass::Enablement => "Enablement",
            RelationClass::Evaluation => "Evaluation",
            RelationClass::Explanation => "Explanation",
            RelationClass::Joint => "Joint",
            RelationClass::MannerMeans => "Manner-Means",
            RelationClass::SameUnit => "Same-unit",
            RelationClass::Summary => "Summary",
            RelationClass::Temporal => "Temporal",
            RelationClass::TextualOrganization => "Textual-organization",
            RelationClass::TopicChange => "Topic-Change",
            RelationClass::TopicComment => "Topic-Comment",
        }
    }
}

impl fmt::Display for RelationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationClass {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, TreeError> {
        RelationClass::ALL
            .iter()
            .find(|c| c.name() == s)
            .copied()
            .ok_or_else(|| TreeError::UnknownRelation(s.to_string()))
    }
}

/// Node of a binary discourse tree. The relation label type is generic so
/// that harmonization can carry raw treebank labels (`RstNode<String>`)
/// through binarization before mapping them to [`RelationClass`].
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RstNode<R = RelationClass> {
    Leaf {
        edu: usize,
    },
    Internal {
        left: Box<RstNode<R>>,
        right: Box<RstNode<R>>,
        pattern: NucPattern,
        relation: R,
    },
}

impl<R> RstNode<R> {
    pub fn leaf(edu: usize) -> Self {
        RstNode::Leaf { edu }
    }

    pub fn internal(left: RstNode<R>, right: RstNode<R>, pattern: NucPattern, relation: R) -> Self {
        RstNode::Internal {
            left: Box::new(left),
            right: Box::new(right),
            pattern,
            relation,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, RstNode::Leaf { .. })
    }

    /// EDU interval covered by this node (the hull of its leaves).
    pub fn span(&self) -> Span {
        match self {
            RstNode::Leaf { edu } => Span::new(*edu, *edu + 1),
            RstNode::Internal { left, right, .. } => {
                Span::new(left.span().start, right.span().end)
            }
        }
    }

    /// Head EDU under the leftmost-nucleus convention: a leaf heads itself;
    /// an internal node is headed by its nucleus child (the left one for NN).
    pub fn head_edu(&self) -> usize {
        match self {
            RstNode::Leaf { edu } => *edu,
            RstNode::Internal {
                left,
                right,
                pattern,
                ..
            } => match pattern.left() {
                Nuclearity::Nucleus => left.head_edu(),
                Nuclearity::Satellite => right.head_edu(),
            },
        }
    }

    /// Leaf EDU indices in in-order traversal order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            RstNode::Leaf { edu } => out.push(*edu),
            RstNode::Internal { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Number of internal (binary) nodes; equals `n - 1` for a valid tree
    /// over `n` EDUs.
    pub fn internal_count(&self) -> usize {
        match self {
            RstNode::Leaf { .. } => 0,
            RstNode::Internal { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    /// Check this node as a complete tree over EDUs `0..n_edus`. Returns all
    /// violations found; an empty list means the tree is valid.
    pub fn validate(&self, n_edus: usize) -> Vec<Violation> {
        let mut violations = Vec::new();
        let leaves = self.leaves();
        for (expected, &found) in leaves.iter().enumerate() {
            if found != expected {
                violations.push(Violation::LeafOutOfOrder { expected, found });
                break; // one positional mismatch makes later ones uninformative
            }
        }
        self.check_nodes(&mut violations);
        let span = self.span();
        if span.start != 0 || span.end != n_edus || leaves.len() != n_edus {
            violations.push(Violation::Coverage {
                root: span,
                leaves: leaves.len(),
                n_edus,
            });
        }
        violations
    }

    fn check_nodes(&self, violations: &mut Vec<Violation>) {
        if let RstNode::Internal {
            left,
            right,
            pattern,
            ..
        } = self
        {
            if !pattern.is_well_formed() {
                violations.push(Violation::TwoSatellites { at: self.span() });
            }
            if left.span().end != right.span().start {
                violations.push(Violation::NonContiguous {
                    at: self.span(),
                    left: left.span(),
                    right: right.span(),
                });
            }
            left.check_nodes(violations);
            right.check_nodes(violations);
        }
    }

    /// Rebuild the tree with every relation label transformed by `f`.
    pub fn map_relation<T, E>(
        &self,
        f: &mut impl FnMut(&R) -> Result<T, E>,
    ) -> Result<RstNode<T>, E> {
        Ok(match self {
            RstNode::Leaf { edu } => RstNode::Leaf { edu: *edu },
            RstNode::Internal {
                left,
                right,
                pattern,
                relation,
            } => RstNode::Internal {
                left: Box::new(left.map_relation(f)?),
                right: Box::new(right.map_relation(f)?),
                pattern: *pattern,
                relation: f(relation)?,
            },
        })
    }
}

/// Well-formedness violation reported by [`RstNode::validate`].
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Violation {
    /// In-order leaf sequence departs from `0, 1, 2, ...`.
    LeafOutOfOrder { expected: usize, found: usize },
    /// Children of an internal node do not meet (non-adjacent spans).
    NonContiguous { at: Span, left: Span, right: Span },
    /// Internal node with two satellites.
    TwoSatellites { at: Span },
    /// Root does not cover exactly `0..n_edus`.
    Coverage {
        root: Span,
        leaves: usize,
        n_edus: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LeafOutOfOrder { expected, found } => {
                write!(f, "leaf out of order: expected EDU {expected}, found EDU {found}")
            }
            Violation::NonContiguous { at, left, right } => {
                write!(f, "non-contiguous children at {at}: {left} then {right}")
            }
            Violation::TwoSatellites { at } => write!(f, "two satellites at {at}"),
            Violation::Coverage { root, leaves, n_edus } => write!(
                f,
                "tree covers {root} with {leaves} leaves but the document has {n_edus} EDUs"
            ),
        }
    }
}

/// A complete discourse tree for one document.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RstTree {
    pub root: RstNode,
}

impl RstTree {
    pub fn new(root: RstNode) -> Self {
        RstTree { root }
    }

    /// Number of EDUs covered (meaningful for valid trees).
    pub fn n_edus(&self) -> usize {
        self.root.span().end
    }

    pub fn validate(&self) -> Vec<Violation> {
        self.root.validate(self.n_edus())
    }

    /// Serialize to the single-line bracketed format, e.g.
    /// `(NS-Attribution (NN-Comparison (EDU 1) (EDU 2)) (EDU 3))`.
    /// EDU numbers are 1-based in this format.
    pub fn to_bracketed(&self) -> String {
        let mut out = String::new();
        write_node(&self.root, &mut out);
        out
    }

    /// Parse the bracketed format produced by [`RstTree::to_bracketed`].
    pub fn from_bracketed(text: &str) -> Result<Self, TreeError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let root = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(TreeError::Syntax {
                pos,
                msg: "trailing input after complete tree".into(),
            });
        }
        Ok(RstTree::new(root))
    }
}

fn write_node(node: &RstNode, out: &mut String) {
    match node {
        RstNode::Leaf { edu } => {
            out.push_str("(EDU ");
            out.push_str(&(edu + 1).to_string());
            out.push(')');
        }
        RstNode::Internal {
            left,
            right,
            pattern,
            relation,
        } => {
            out.push('(');
            out.push_str(pattern.name());
            out.push('-');
            out.push_str(relation.name());
            out.push(' ');
            write_node(left, out);
            out.push(' ');
            write_node(right, out);
            out.push(')');
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Vec<Tok> {
    let mut tokens = Vec::new();
    let mut atom = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !atom.is_empty() {
                    tokens.push(Tok::Atom(std::mem::take(&mut atom)));
                }
                tokens.push(if c == '(' { Tok::Open } else { Tok::Close });
            }
            c if c.is_whitespace() => {
                if !atom.is_empty() {
                    tokens.push(Tok::Atom(std::mem::take(&mut atom)));
                }
            }
            c => atom.push(c),
        }
    }
    if !atom.is_empty() {
        tokens.push(Tok::Atom(atom));
    }
    tokens
}

fn parse_node(tokens: &[Tok], pos: &mut usize) -> Result<RstNode, TreeError> {
    expect(tokens, pos, &Tok::Open)?;
    let head = match tokens.get(*pos) {
        Some(Tok::Atom(a)) => a.clone(),
        _ => {
            return Err(TreeError::Syntax {
                pos: *pos,
                msg: "expected node label".into(),
            })
        }
    };
    *pos += 1;
    if head == "EDU" {
        let num = match tokens.get(*pos) {
            Some(Tok::Atom(a)) => a.parse::<usize>().map_err(|_| TreeError::Syntax {
                pos: *pos,
                msg: format!("invalid EDU number `{a}`"),
            })?,
            _ => {
                return Err(TreeError::Syntax {
                    pos: *pos,
                    msg: "expected EDU number".into(),
                })
            }
        };
        *pos += 1;
        if num == 0 {
            return Err(TreeError::Syntax {
                pos: *pos,
                msg: "EDU numbers are 1-based".into(),
            });
        }
        expect(tokens, pos, &Tok::Close)?;
        return Ok(RstNode::leaf(num - 1));
    }
    let (pattern_str, relation_str) = head.split_once('-').ok_or_else(|| TreeError::Syntax {
        pos: *pos,
        msg: format!("node label `{head}` is not of the form PATTERN-Relation"),
    })?;
    let pattern: NucPattern = pattern_str.parse()?;
    let relation: RelationClass = relation_str.parse()?;
    let left = parse_node(tokens, pos)?;
    let right = parse_node(tokens, pos)?;
    expect(tokens, pos, &Tok::Close)?;
    Ok(RstNode::internal(left, right, pattern, relation))
}

fn expect(tokens: &[Tok], pos: &mut usize, tok: &Tok) -> Result<(), TreeError> {
    if tokens.get(*pos) == Some(tok) {
        *pos += 1;
        Ok(())
    } else {
        Err(TreeError::Syntax {
            pos: *pos,
            msg: format!("expected {tok:?}"),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("unknown relation class `{0}`")]
    UnknownRelation(String),
    #[error("unknown nuclearity pattern `{0}`")]
    UnknownPattern(String),
    #[error("bracketed tree syntax error at token {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The 3-EDU example tree used throughout the unit tests:
    /// comparison of EDUs 1-2, attributed by EDU 3.
    pub(crate) fn example_tree() -> RstTree {
        RstTree::new(RstNode::internal(
            RstNode::internal(
                RstNode::leaf(0),
                RstNode::leaf(1),
                NucPattern::NN,
                RelationClass::Comparison,
            ),
            RstNode::leaf(2),
            NucPattern::NS,
            RelationClass::Attribution,
        ))
    }

    #[test]
    fn spans_are_leaf_hulls() {
        let t = example_tree();
        assert_eq!(t.root.span(), Span::new(0, 3));
        assert_eq!(RstNode::<RelationClass>::leaf(4).span(), Span::new(4, 5));
        if let RstNode::Internal { left, .. } = &t.root {
            assert_eq!(left.span(), Span::new(0, 2));
        }
    }

    #[test]
    fn head_follows_leftmost_nucleus() {
        let t = example_tree();
        // Root is NS: head comes from the left (nucleus) side, whose NN node
        // is headed by its left child.
        assert_eq!(t.root.head_edu(), 0);
        let sn = RstNode::internal(
            RstNode::leaf(0),
            RstNode::leaf(1),
            NucPattern::SN,
            RelationClass::Condition,
        );
        assert_eq!(sn.head_edu(), 1);
    }

    #[test]
    fn valid_tree_has_no_violations() {
        assert!(example_tree().validate().is_empty());
        assert!(RstNode::<RelationClass>::leaf(0).validate(1).is_empty());
    }

    #[test]
    fn validate_reports_two_satellites() {
        let bad = RstNode::internal(
            RstNode::leaf(0),
            RstNode::leaf(1),
            NucPattern::SS,
            RelationClass::Joint,
        );
        let violations = bad.validate(2);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::TwoSatellites { .. })));
    }

    #[test]
    fn validate_reports_leaf_order_and_coverage() {
        let swapped = RstNode::internal(
            RstNode::leaf(1),
            RstNode::leaf(0),
            NucPattern::NN,
            RelationClass::Joint,
        );
        let violations = swapped.validate(2);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::LeafOutOfOrder { .. })));

        let short = RstNode::internal(
            RstNode::leaf(0),
            RstNode::leaf(1),
            NucPattern::NN,
            RelationClass::Joint,
        );
        let violations = short.validate(3);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::Coverage { .. })));
    }

    #[test]
    fn validate_reports_gap_between_children() {
        let gapped = RstNode::internal(
            RstNode::leaf(0),
            RstNode::leaf(2),
            NucPattern::NN,
            RelationClass::Joint,
        );
        let violations = gapped.validate(3);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::NonContiguous { .. })));
    }

    #[test]
    fn bracketed_output_is_one_based() {
        assert_eq!(
            example_tree().to_bracketed(),
            "(NS-Attribution (NN-Comparison (EDU 1) (EDU 2)) (EDU 3))"
        );
    }

    #[test]
    fn bracketed_round_trip() {
        let t = example_tree();
        assert_eq!(RstTree::from_bracketed(&t.to_bracketed()).unwrap(), t);
        let single = RstTree::new(RstNode::leaf(0));
        assert_eq!(single.to_bracketed(), "(EDU 1)");
        assert_eq!(RstTree::from_bracketed("(EDU 1)").unwrap(), single);
    }

    #[test]
    fn bracketed_parse_rejects_bad_input() {
        assert!(matches!(
            RstTree::from_bracketed("(NS-Nonsense (EDU 1) (EDU 2))"),
            Err(TreeError::UnknownRelation(_))
        ));
        assert!(matches!(
            RstTree::from_bracketed("(XX-Joint (EDU 1) (EDU 2))"),
            Err(TreeError::UnknownPattern(_))
        ));
        assert!(RstTree::from_bracketed("(EDU 0)").is_err());
        assert!(RstTree::from_bracketed("(EDU 1) junk").is_err());
        assert!(RstTree::from_bracketed("(NS-Joint (EDU 1)").is_err());
    }

    #[test]
    fn relation_order_matches_name_order() {
        let mut by_name = RelationClass::ALL;
        by_name.sort_by_key(|c| c.name());
        assert_eq!(by_name, RelationClass::ALL);
        // Round trip through the display names.
        for c in RelationClass::ALL {
            assert_eq!(c.name().parse::<RelationClass>().unwrap(), c);
        }
        assert!("elaboration".parse::<RelationClass>().is_err());
    }
}
