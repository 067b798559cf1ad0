//! Shift-reduce transition system over EDU sequences.
//!
//! A configuration holds a stack of partial trees and the index of the first
//! EDU still in the queue. SHIFT moves the next EDU onto the stack as a leaf;
//! REDUCE pops the two topmost items and combines them into one binary node.
//! A complete derivation for an `n`-EDU document is exactly `2n - 1` actions
//! (`n` shifts, `n - 1` reduces); the static oracle reads actions off a gold
//! tree in post-order.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tree::{NucPattern, RelationClass, RstNode, RstTree};

/// Direction of a reduce: which side of the new node holds the nucleus.
/// Redundant with the pattern (`NS`/`NN` are left, `SN` is right) but kept in
/// the textual action format.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::Left => "L",
            Direction::Right => "R",
        }
    }
}

/// Label of a reduce action: a well-formed nuclearity pattern plus relation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ReduceLabel {
    pattern: NucPattern,
    relation: RelationClass,
}

impl ReduceLabel {
    /// Rejects the ill-formed `SS` pattern.
    pub fn new(pattern: NucPattern, relation: RelationClass) -> Result<Self, TransitionError> {
        if !pattern.is_well_formed() {
            return Err(TransitionError::IllFormedPattern);
        }
        Ok(ReduceLabel { pattern, relation })
    }

    pub fn pattern(&self) -> NucPattern {
        self.pattern
    }

    pub fn relation(&self) -> RelationClass {
        self.relation
    }

    pub fn direction(&self) -> Direction {
        match self.pattern {
            NucPattern::NS | NucPattern::NN => Direction::Left,
            _ => Direction::Right,
        }
    }
}

/// Parser action.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Action {
    Shift,
    Reduce(ReduceLabel),
}

impl Action {
    pub fn reduce(pattern: NucPattern, relation: RelationClass) -> Result<Self, TransitionError> {
        Ok(Action::Reduce(ReduceLabel::new(pattern, relation)?))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Shift => f.write_str("SHIFT"),
            Action::Reduce(label) => write!(
                f,
                "REDUCE-{}-{}-{}",
                label.direction().name(),
                label.pattern(),
                label.relation()
            ),
        }
    }
}

impl FromStr for Action {
    type Err = TransitionError;

    fn from_str(s: &str) -> Result<Self, TransitionError> {
        if s == "SHIFT" {
            return Ok(Action::Shift);
        }
        let bad = || TransitionError::BadAction(s.to_string());
        let mut parts = s.splitn(4, '-');
        if parts.next() != Some("REDUCE") {
            return Err(bad());
        }
        let dir = parts.next().ok_or_else(bad)?;
        let pattern: NucPattern = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let relation: RelationClass = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let label = ReduceLabel::new(pattern, relation).map_err(|_| bad())?;
        if label.direction().name() != dir {
            return Err(bad());
        }
        Ok(Action::Reduce(label))
    }
}

/// Which action kinds are legal in a configuration.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct LegalActions {
    pub shift: bool,
    pub reduce: bool,
}

/// Parser state. Immutable: [`Configuration::apply`] returns a new value, so
/// beam search can keep several configurations sharing a history.
#[derive(Clone, PartialEq, Debug)]
pub struct Configuration {
    stack: Vec<RstNode>,
    queue_front: usize,
    n_edus: usize,
}

impl Configuration {
    /// Empty stack, all EDUs queued. Documents must have at least one EDU.
    pub fn initial(n_edus: usize) -> Result<Self, TransitionError> {
        if n_edus == 0 {
            return Err(TransitionError::EmptyDocument);
        }
        Ok(Configuration {
            stack: Vec::new(),
            queue_front: 0,
            n_edus,
        })
    }

    pub fn stack(&self) -> &[RstNode] {
        &self.stack
    }

    /// Index of the next queued EDU, or `None` when the queue is exhausted.
    pub fn queue_front(&self) -> Option<usize> {
        (self.queue_front < self.n_edus).then_some(self.queue_front)
    }

    pub fn queue_len(&self) -> usize {
        self.n_edus - self.queue_front
    }

    pub fn n_edus(&self) -> usize {
        self.n_edus
    }

    pub fn is_terminal(&self) -> bool {
        self.stack.len() == 1 && self.queue_front == self.n_edus
    }

    pub fn legal_actions(&self) -> LegalActions {
        LegalActions {
            shift: self.queue_front < self.n_edus,
            reduce: self.stack.len() >= 2,
        }
    }

    pub fn is_legal(&self, action: &Action) -> bool {
        let legal = self.legal_actions();
        match action {
            Action::Shift => legal.shift,
            Action::Reduce(_) => legal.reduce,
        }
    }

    /// Apply one action, returning the successor configuration.
    pub fn apply(&self, action: &Action) -> Result<Configuration, TransitionError> {
        match action {
            Action::Shift => {
                if self.queue_front >= self.n_edus {
                    return Err(TransitionError::IllegalShift);
                }
                let mut stack = self.stack.clone();
                stack.push(RstNode::leaf(self.queue_front));
                Ok(Configuration {
                    stack,
                    queue_front: self.queue_front + 1,
                    n_edus: self.n_edus,
                })
            }
            Action::Reduce(label) => {
                if self.stack.len() < 2 {
                    return Err(TransitionError::IllegalReduce {
                        stack: self.stack.len(),
                    });
                }
                let mut stack = self.stack.clone();
                let right = stack.pop().expect("stack len checked");
                let left = stack.pop().expect("stack len checked");
                stack.push(RstNode::internal(
                    left,
                    right,
                    label.pattern(),
                    label.relation(),
                ));
                Ok(Configuration {
                    stack,
                    queue_front: self.queue_front,
                    n_edus: self.n_edus,
                })
            }
        }
    }

    /// Extract the finished tree from a terminal configuration.
    pub fn into_tree(mut self) -> Result<RstTree, TransitionError> {
        if !self.is_terminal() {
            return Err(TransitionError::NotTerminal {
                stack: self.stack.len(),
                queued: self.n_edus - self.queue_front,
            });
        }
        Ok(RstTree::new(self.stack.pop().expect("terminal stack")))
    }
}

/// Gold action sequence for a tree: post-order traversal, leaves as shifts.
pub fn oracle(tree: &RstTree) -> Result<Vec<Action>, TransitionError> {
    let mut actions = Vec::with_capacity(2 * tree.n_edus().max(1) - 1);
    walk(&tree.root, &mut actions)?;
    Ok(actions)
}

fn walk(node: &RstNode, actions: &mut Vec<Action>) -> Result<(), TransitionError> {
    match node {
        RstNode::Leaf { .. } => actions.push(Action::Shift),
        RstNode::Internal {
            left,
            right,
            pattern,
            relation,
        } => {
            walk(left, actions)?;
            walk(right, actions)?;
            actions.push(Action::reduce(*pattern, *relation)?);
        }
    }
    Ok(())
}

/// Run an action sequence from the initial configuration to a finished tree.
pub fn replay(actions: &[Action], n_edus: usize) -> Result<RstTree, TransitionError> {
    let mut config = Configuration::initial(n_edus)?;
    for action in actions {
        config = config.apply(action)?;
    }
    config.into_tree()
}

/// Enumerate the (configuration, gold action) pairs of a gold derivation.
pub fn oracle_states(tree: &RstTree) -> Result<Vec<(Configuration, Action)>, TransitionError> {
    let actions = oracle(tree)?;
    let mut config = Configuration::initial(tree.n_edus())?;
    let mut states = Vec::with_capacity(actions.len());
    for action in actions {
        states.push((config.clone(), action));
        config = config.apply(&action)?;
    }
    Ok(states)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransitionError {
    #[error("cannot parse an empty document")]
    EmptyDocument,
    #[error("reduce labels must have at least one nucleus")]
    IllFormedPattern,
    #[error("cannot shift: queue is empty")]
    IllegalShift,
    #[error("cannot reduce: stack has {stack} item(s)")]
    IllegalReduce { stack: usize },
    #[error("derivation incomplete: {stack} stack item(s), {queued} EDU(s) queued")]
    NotTerminal { stack: usize, queued: usize },
    #[error("malformed action `{0}`")]
    BadAction(String),
}
