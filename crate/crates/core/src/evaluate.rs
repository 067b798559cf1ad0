//! Scoring of predicted trees against gold: micro-averaged Span, Nuclearity
//! and Relation F1 over labeled constituents, the right-branching
//! most-frequent-label baseline, and seeded corpus splits.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::doc::Document;
use crate::tree::{NucPattern, RelationClass, RstNode, RstTree};

/// One scored constituent: EDU interval, nuclearity pattern, relation.
pub type Constituent = (crate::tree::Span, NucPattern, RelationClass);

/// The labeled constituents of a tree: one triple per internal node, root
/// included, leaves excluded. For a binary tree over `n` EDUs there are
/// exactly `n - 1` of them, and spans cannot repeat because child spans are
/// strict sub-intervals of their parent's.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConstituentSet {
    triples: HashSet<Constituent>,
}

impl ConstituentSet {
    pub fn from_tree(tree: &RstTree) -> ConstituentSet {
        let mut triples = HashSet::new();
        collect(&tree.root, &mut triples);
        ConstituentSet { triples }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &HashSet<Constituent> {
        &self.triples
    }
}

fn collect(node: &RstNode, out: &mut HashSet<Constituent>) {
    if let RstNode::Internal {
        left,
        right,
        pattern,
        relation,
    } = node
    {
        out.insert((node.span(), *pattern, *relation));
        collect(left, out);
        collect(right, out);
    }
}

/// Micro-averaged F1 percentages at the three agreement levels. A span
/// counts for Nuclearity only with the right pattern, and for Relation only
/// with the right pattern and relation, so `rel ≤ nuc ≤ span` always.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Scores {
    pub span: f64,
    pub nuc: f64,
    pub rel: f64,
}

impl fmt::Display for Scores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "span={:.2}, nuc={:.2}, rel={:.2}",
            self.span, self.nuc, self.rel
        )
    }
}

/// 2PR/(P+R) as a percentage; empty-vs-empty counts as perfect agreement.
fn f1(hits: usize, pred_total: usize, gold_total: usize) -> f64 {
    if pred_total == 0 && gold_total == 0 {
        return 100.0;
    }
    if hits == 0 {
        return 0.0;
    }
    let p = hits as f64 / pred_total as f64;
    let r = hits as f64 / gold_total as f64;
    100.0 * 2.0 * p * r / (p + r)
}

/// Score predictions against gold trees, micro-averaged over the corpus.
/// Both lists are parallel per document. With binary trees on both sides
/// precision equals recall, so each F1 is the constituent match rate.
pub fn score(pred: &[RstTree], gold: &[RstTree]) -> Result<Scores, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::DocumentCount {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let mut span_hits = 0;
    let mut nuc_hits = 0;
    let mut rel_hits = 0;
    let mut pred_total = 0;
    let mut gold_total = 0;
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.n_edus() != g.n_edus() {
            return Err(EvalError::EduCount {
                doc: i,
                pred: p.n_edus(),
                gold: g.n_edus(),
            });
        }
        let gold_set = ConstituentSet::from_tree(g);
        let gold_spans: HashSet<_> = gold_set.triples().iter().map(|t| t.0).collect();
        let gold_nucs: HashSet<_> = gold_set.triples().iter().map(|t| (t.0, t.1)).collect();
        let pred_set = ConstituentSet::from_tree(p);
        for &(span, pattern, relation) in pred_set.triples() {
            span_hits += gold_spans.contains(&span) as usize;
            nuc_hits += gold_nucs.contains(&(span, pattern)) as usize;
            rel_hits += gold_set.triples().contains(&(span, pattern, relation)) as usize;
        }
        pred_total += pred_set.len();
        gold_total += gold_set.len();
    }
    Ok(Scores {
        span: f1(span_hits, pred_total, gold_total),
        nuc: f1(nuc_hits, pred_total, gold_total),
        rel: f1(rel_hits, pred_total, gold_total),
    })
}

/// Pure right-branching tree over `n_edus` leaves with every internal node
/// labeled the same way.
pub fn right_branching(n_edus: usize, pattern: NucPattern, relation: RelationClass) -> RstTree {
    assert!(n_edus >= 1, "a tree needs at least one EDU");
    let mut node = RstNode::leaf(n_edus - 1);
    for edu in (0..n_edus - 1).rev() {
        node = RstNode::internal(RstNode::leaf(edu), node, pattern, relation);
    }
    RstTree::new(node)
}

/// The most-frequent-label baseline: right-branching structure, one label
/// everywhere.
pub fn mfs_baseline(doc: &Document, pattern: NucPattern, relation: RelationClass) -> RstTree {
    right_branching(doc.n_edus(), pattern, relation)
}

/// Baseline label observed per treebank language: `NN-Joint` for German and
/// Spanish, `NS-Elaboration` for the others.
pub fn default_mfs_label(language: &str) -> (NucPattern, RelationClass) {
    match language {
        "de" | "es" => (NucPattern::NN, RelationClass::Joint),
        _ => (NucPattern::NS, RelationClass::Elaboration),
    }
}

/// Modal (pattern, relation) pair over all internal nodes of the corpus;
/// count ties are broken by lexicographic label order.
pub fn most_frequent_label(
    trees: &[RstTree],
) -> Result<(NucPattern, RelationClass), EvalError> {
    let mut counts: HashMap<(NucPattern, RelationClass), usize> = HashMap::new();
    for tree in trees {
        for &(_, pattern, relation) in ConstituentSet::from_tree(tree).triples() {
            *counts.entry((pattern, relation)).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by_key(|&(label, count)| (std::cmp::Reverse(count), label));
    ranked
        .first()
        .map(|&(label, _)| label)
        .ok_or(EvalError::NoInternalNodes)
}

/// Index split of a corpus into training, development and test parts.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Test documents drawn per corpus.
pub const TEST_DOCS: usize = 38;
/// Development documents drawn when enough remain for a training set.
pub const DEV_DOCS: usize = 25;
/// Minimum remainder (after the test draw) for the train+dev regime; smaller
/// corpora put everything that is not test into development.
pub const SMALL_CORPUS_LIMIT: usize = 100;

/// Seeded random split: 38 test documents, then 25 development documents
/// when at least 100 remain, otherwise all remaining documents become the
/// development set and the training set is empty. Indices are drawn after
/// sorting by document id, so the split depends only on ids and seed, and
/// each part comes back in ascending index order.
pub fn split_corpus(docs: &[Document], seed: u64) -> Result<Split, EvalError> {
    if docs.len() <= TEST_DOCS {
        return Err(EvalError::CorpusTooSmall {
            docs: docs.len(),
            needed: TEST_DOCS + 1,
        });
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| docs[a].id.cmp(&docs[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut test: Vec<usize> = order[..TEST_DOCS].to_vec();
    let rest = &order[TEST_DOCS..];
    let dev_len = if rest.len() >= SMALL_CORPUS_LIMIT {
        DEV_DOCS
    } else {
        rest.len()
    };
    let mut dev: Vec<usize> = rest[..dev_len].to_vec();
    let mut train: Vec<usize> = rest[dev_len..].to_vec();
    train.sort_unstable();
    dev.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, dev, test })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("{pred} predicted trees scored against {gold} gold trees")]
    DocumentCount { pred: usize, gold: usize },
    #[error("document {doc}: prediction covers {pred} EDUs, gold covers {gold}")]
    EduCount { doc: usize, pred: usize, gold: usize },
    #[error("no internal nodes in the corpus")]
    NoInternalNodes,
    #[error("cannot split {docs} documents; at least {needed} needed")]
    CorpusTooSmall { docs: usize, needed: usize },
}
