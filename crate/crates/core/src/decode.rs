//! Beam-search inference: finds the highest-scoring action sequence for a
//! segmented document under a trained model and returns its tree.

use thiserror::Error;

use crate::doc::Document;
use crate::features::{FeatureExtractor, IdentityMapper, WordMapper};
use crate::model::ModelParams;
use crate::transition::{Action, Configuration, TransitionError};
use crate::tree::RstTree;

/// Best derivation found for one document.
#[derive(Clone, Debug)]
pub struct ParseResult {
    pub tree: RstTree,
    /// Sum of the chosen actions' log-probabilities.
    pub log_prob: f64,
    pub actions: Vec<Action>,
}

/// One hypothesis during search.
struct BeamItem {
    config: Configuration,
    log_prob: f64,
    actions: Vec<Action>,
}

/// Parse with beam search under the model's averaged parameters.
pub fn parse(doc: &Document, model: &ModelParams, beam: usize) -> Result<ParseResult, DecodeError> {
    search(doc, model, beam, &IdentityMapper, None)
}

/// Like [`parse`], with word features rewritten by `mapper` (the mapper the
/// model was trained with).
pub fn parse_mapped(
    doc: &Document,
    model: &ModelParams,
    beam: usize,
    mapper: &dyn WordMapper,
) -> Result<ParseResult, DecodeError> {
    search(doc, model, beam, mapper, None)
}

/// Like [`parse_mapped`], also appending one line per surviving hypothesis
/// per step to `trace`.
pub fn parse_traced(
    doc: &Document,
    model: &ModelParams,
    beam: usize,
    mapper: &dyn WordMapper,
    trace: &mut Vec<String>,
) -> Result<ParseResult, DecodeError> {
    search(doc, model, beam, mapper, Some(trace))
}

fn search(
    doc: &Document,
    model: &ModelParams,
    beam: usize,
    mapper: &dyn WordMapper,
    mut trace: Option<&mut Vec<String>>,
) -> Result<ParseResult, DecodeError> {
    if beam == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    let n = doc.edus.len();
    let extractor = FeatureExtractor::for_language(&doc.language);
    let mut items = vec![BeamItem {
        config: Configuration::initial(n)?,
        log_prob: 0.0,
        actions: Vec::new(),
    }];

    // Every action consumes one step, so all hypotheses stay synchronized
    // and every complete derivation has the same length; raw log-probability
    // sums are therefore comparable without length normalization.
    let steps = 2 * n - 1;
    for step in 0..steps {
        // (score, action index, insertion order, parent, action)
        let mut candidates: Vec<(f64, usize, usize, usize, Action)> = Vec::new();
        for (parent, item) in items.iter().enumerate() {
            let symbols = extractor.config_symbols_mapped(&item.config, doc, mapper);
            let probs = model.forward(&symbols);
            let legal = item.config.legal_actions();
            for (index, action) in model.actions().iter().enumerate() {
                let ok = match action {
                    Action::Shift => legal.shift,
                    Action::Reduce(_) => legal.reduce,
                };
                if ok {
                    let seq = candidates.len();
                    let score = item.log_prob + probs[index].ln();
                    candidates.push((score, index, seq, parent, *action));
                }
            }
        }
        if candidates.is_empty() {
            return Err(DecodeError::NoLegalAction { step });
        }
        // Keep the top `beam` by score; ties broken by action index, then
        // by insertion order, so pruning is deterministic.
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(beam);

        let mut next = Vec::with_capacity(candidates.len());
        for &(score, _, _, parent, action) in &candidates {
            let item = &items[parent];
            let config = item.config.apply(&action)?;
            let mut actions = item.actions.clone();
            actions.push(action);
            next.push(BeamItem {
                config,
                log_prob: score,
                actions,
            });
        }
        items = next;

        if let Some(trace) = trace.as_deref_mut() {
            for (rank, item) in items.iter().enumerate() {
                let last = item.actions.last().unwrap();
                trace.push(format!(
                    "step {:>3}  #{rank}  score {:.6}  {last}",
                    step + 1,
                    item.log_prob
                ));
            }
        }
    }

    // The beam is sorted by the final pruning pass, so the best hypothesis
    // is the first; after 2n-1 synchronized steps it must be terminal.
    let best = items.into_iter().next().unwrap();
    debug_assert!(best.config.is_terminal());
    Ok(ParseResult {
        tree: best.config.into_tree()?,
        log_prob: best.log_prob,
        actions: best.actions,
    })
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error("no action in the model's vocabulary is legal at step {step}")]
    NoLegalAction { step: usize },
    #[error(transparent)]
    Transition(#[from] TransitionError),
}
