//! Seeded generators for random trees and toy documents. Used by property
//! tests and the acceptance suite; also handy for quick demos.

use rand::Rng;

use crate::doc::{Document, Token, TokenHead};
use crate::ingest::{RawLeaf, RawNode, RawRole};
use crate::tree::{NucPattern, RelationClass, RstNode, RstTree};

/// The three patterns a binary node may legally carry.
pub const WELL_FORMED_PATTERNS: [NucPattern; 3] =
    [NucPattern::NN, NucPattern::NS, NucPattern::SN];

/// Uniformly random well-formed labeled tree over `n_edus` EDUs.
pub fn random_tree(rng: &mut impl Rng, n_edus: usize) -> RstTree {
    assert!(n_edus >= 1, "trees need at least one EDU");
    RstTree::new(build(rng, 0, n_edus, None))
}

/// Random tree shape with labels drawn from the given set.
pub fn random_tree_with_labels(
    rng: &mut impl Rng,
    n_edus: usize,
    labels: &[(NucPattern, RelationClass)],
) -> RstTree {
    assert!(n_edus >= 1, "trees need at least one EDU");
    assert!(!labels.is_empty(), "label set must be non-empty");
    RstTree::new(build(rng, 0, n_edus, Some(labels)))
}

fn build(
    rng: &mut impl Rng,
    lo: usize,
    hi: usize,
    labels: Option<&[(NucPattern, RelationClass)]>,
) -> RstNode {
    if hi - lo == 1 {
        return RstNode::leaf(lo);
    }
    let split = rng.random_range(lo + 1..hi);
    let (pattern, relation) = match labels {
        Some(labels) => labels[rng.random_range(0..labels.len())],
        None => (
            WELL_FORMED_PATTERNS[rng.random_range(0..3)],
            RelationClass::ALL[rng.random_range(0..RelationClass::ALL.len())],
        ),
    };
    RstNode::internal(
        build(rng, lo, split, labels),
        build(rng, split, hi, labels),
        pattern,
        relation,
    )
}

/// Relation names (all present in the built-in mapping table) for random
/// raw trees: one pool per nuclearity so generated nodes stay realistic.
const MONO_RELATIONS: [&str; 6] = [
    "elaboration",
    "attribution",
    "cause",
    "background",
    "condition",
    "evaluation",
];
const MULTI_RELATIONS: [&str; 4] = ["list", "sequence", "contrast", "joint"];

/// Uniformly random n-ary raw tree over `n_edus` EDUs, with source-style
/// annotation (relations on children) and arity up to 6. EDU indices and
/// orders are document order, so the result is already normalized.
pub fn random_raw_tree(rng: &mut impl Rng, n_edus: usize) -> RawNode {
    assert!(n_edus >= 1, "trees need at least one EDU");
    let mut root = build_raw(rng, 0, n_edus);
    root.role = RawRole::Unset;
    root.relation = None;
    root
}

fn build_raw(rng: &mut impl Rng, lo: usize, hi: usize) -> RawNode {
    let len = hi - lo;
    if len == 1 {
        return RawNode::leaf(
            RawRole::Nucleus,
            None,
            RawLeaf {
                source_id: (lo + 1).to_string(),
                order: lo + 1,
                edu: lo,
                text: format!("unit {}", lo + 1),
            },
        );
    }
    let arity = rng.random_range(2..=len.min(6));
    // Random contiguous partition of [lo, hi) into `arity` non-empty parts.
    let mut cuts: Vec<usize> = Vec::with_capacity(arity + 1);
    cuts.push(lo);
    while cuts.len() < arity {
        let cut = rng.random_range(lo + 1..hi);
        if !cuts.contains(&cut) {
            cuts.push(cut);
        }
    }
    cuts.push(hi);
    cuts.sort_unstable();

    let mut children: Vec<RawNode> = cuts
        .windows(2)
        .map(|w| build_raw(rng, w[0], w[1]))
        .collect();

    if rng.random_bool(0.5) {
        // Multi-nuclear node: all children share one relation; optionally a
        // trailing satellite with a private relation joins the group.
        let relation = MULTI_RELATIONS[rng.random_range(0..MULTI_RELATIONS.len())];
        for child in &mut children {
            child.role = RawRole::Nucleus;
            child.relation = Some(relation.to_string());
        }
        if arity >= 3 && rng.random_bool(0.25) {
            let sat = children.last_mut().expect("arity >= 3");
            sat.role = RawRole::Satellite;
            sat.relation =
                Some(MONO_RELATIONS[rng.random_range(0..MONO_RELATIONS.len())].to_string());
        }
    } else {
        // Mono-nuclear node: one nucleus, the rest satellites with their
        // own relations.
        let nucleus = rng.random_range(0..arity);
        for (i, child) in children.iter_mut().enumerate() {
            if i == nucleus {
                child.role = RawRole::Nucleus;
                child.relation = None;
            } else {
                child.role = RawRole::Satellite;
                child.relation =
                    Some(MONO_RELATIONS[rng.random_range(0..MONO_RELATIONS.len())].to_string());
            }
        }
    }
    RawNode::internal(RawRole::Nucleus, None, children)
}

const TOY_WORDS: [&str; 24] = [
    "markets", "rose", "sharply", "after", "the", "report", "analysts", "said", "growth",
    "slowed", "during", "winter", "exports", "fell", "because", "demand", "weakened", "prices",
    "climbed", "again", "officials", "expect", "recovery", "soon",
];
const TOY_POS: [&str; 6] = ["NOUN", "VERB", "ADV", "ADP", "DET", "ADJ"];

/// Small synthetic document with a token layer and a random gold tree.
/// Each EDU is its own sentence of 3-6 toy tokens.
pub fn toy_document(id: &str, n_edus: usize, rng: &mut impl Rng) -> Document {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut texts = Vec::new();
    for edu in 0..n_edus {
        let start = tokens.len();
        let len = rng.random_range(3..=6);
        for k in 0..len {
            let form = TOY_WORDS[rng.random_range(0..TOY_WORDS.len())].to_string();
            let head = if k == 0 {
                TokenHead::Root
            } else {
                TokenHead::Index(start)
            };
            tokens.push(Token {
                lemma: form.clone(),
                pos: TOY_POS[rng.random_range(0..TOY_POS.len())].to_string(),
                form,
                head,
                sentence: edu,
            });
        }
        spans.push(start..tokens.len());
        texts.push(
            tokens[start..]
                .iter()
                .map(|t| t.form.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        );
    }
    let gold = random_tree(rng, n_edus);
    Document::new(id, "en", texts, tokens, spans, Some(gold))
        .expect("toy documents satisfy the document invariants")
}

/// A corpus of toy documents, `n_edus` EDUs each.
pub fn toy_corpus(rng: &mut impl Rng, n_docs: usize, n_edus: usize) -> Vec<Document> {
    (0..n_docs)
        .map(|i| toy_document(&format!("toy-{i:03}"), n_edus, rng))
        .collect()
}
