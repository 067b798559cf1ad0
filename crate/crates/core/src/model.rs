//! Feed-forward scorer over parser actions: per-kind embedding lookup, two
//! ReLU layers of width 128 and a softmax over the action vocabulary,
//! trained with averaged stochastic gradient descent on oracle examples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use ndarray::{aview1, Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crosslingual::EmbeddingTable;
use crate::doc::Document;
use crate::features::{
    template, FeatureExtractor, IdentityMapper, SymbolKind, SymbolSequence, WordMapper,
    SLOT_COUNT, TEMPLATE_VERSION,
};
use crate::transition::{oracle_states, Action, TransitionError};

/// Width of both hidden layers.
pub const HIDDEN_WIDTH: usize = 128;

/// Magnitude bound of the uniform embedding initialization; matches the
/// coordinate scale of typical pretrained word vectors so both lexical
/// modes start in the same operating regime.
pub const INIT_RANGE: f64 = 0.1;

/// Magnitude bound of a dense layer's uniform initialization. Scaling by
/// fan-in keeps the signal magnitude steady across the ReLU stack; a flat
/// small bound attenuates it so strongly that gradient descent never gets
/// past the class priors.
pub fn dense_init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Embedding width of each symbol kind.
pub fn embedding_width(kind: SymbolKind) -> usize {
    match kind {
        SymbolKind::Word => 50,
        SymbolKind::Pos => 16,
        SymbolKind::RelationLabel => 50,
        SymbolKind::PositionBucket => 6,
        SymbolKind::LengthBucket => 4,
        SymbolKind::BooleanFlag => 2,
    }
}

/// Width of the concatenated embedding layer: the sum of the slot widths of
/// the feature template.
pub fn input_width() -> usize {
    template().iter().map(|&(_, k)| embedding_width(k)).sum()
}

/// Position of a kind in [`SymbolKind::ALL`]; embedding tables, vocabularies
/// and row stamps are indexed this way.
fn kind_index(kind: SymbolKind) -> usize {
    SymbolKind::ALL.iter().position(|&k| k == kind).unwrap()
}

/// Per-slot (kind index, offset into the input vector, embedding width).
fn slot_layout() -> &'static [(usize, usize, usize)] {
    static LAYOUT: OnceLock<Vec<(usize, usize, usize)>> = OnceLock::new();
    LAYOUT.get_or_init(|| {
        let mut layout = Vec::with_capacity(SLOT_COUNT);
        let mut offset = 0;
        for &(_, kind) in template() {
            let width = embedding_width(kind);
            layout.push((kind_index(kind), offset, width));
            offset += width;
        }
        layout
    })
}

/// Symbol-value vocabulary for one kind. Row 0 is the NONE row (absent
/// value, pinned to a zero embedding), row 1 the trainable UNK row for
/// values unseen in training; real values start at row 2.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const NONE: usize = 0;
    pub const UNK: usize = 1;
    const RESERVED: usize = 2;

    /// Build from any value collection; values are deduplicated and sorted
    /// so the vocabulary depends only on the value set.
    pub fn build(values: impl IntoIterator<Item = String>) -> Vocab {
        let sorted: BTreeSet<String> = values.into_iter().collect();
        let items: Vec<String> = sorted.into_iter().collect();
        let index = items
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        Vocab { items, index }
    }

    /// Number of embedding rows: reserved rows plus the real values.
    pub fn len(&self) -> usize {
        Vocab::RESERVED + self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row of a symbol value: NONE for absent, UNK for unseen.
    pub fn id(&self, value: Option<&str>) -> usize {
        match value {
            None => Vocab::NONE,
            Some(v) => self
                .index
                .get(v)
                .map(|i| i + Vocab::RESERVED)
                .unwrap_or(Vocab::UNK),
        }
    }

    /// The real values, in row order starting at row 2.
    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Training hyperparameters. The grid constants below are the search space
/// used by [`grid_search`](crate::model::grid_search).
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub decay: f64,
    pub epochs: usize,
    pub beam: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.02,
            decay: 0.0,
            epochs: 20,
            beam: 1,
            seed: 0,
        }
    }
}

pub const LEARNING_RATE_GRID: [f64; 3] = [0.01, 0.02, 0.03];
pub const DECAY_GRID: [f64; 4] = [1e-5, 1e-6, 1e-7, 0.0];
pub const MAX_EPOCHS: usize = 20;
pub const BEAM_GRID: [usize; 6] = [1, 2, 4, 8, 16, 32];

/// Step-dependent learning rate `η₀ / (1 + decay·t)`, `t` counted from 0.
pub fn learning_rate_at(hp: &Hyperparams, step: u64) -> f64 {
    hp.learning_rate / (1.0 + hp.decay * step as f64)
}

/// One oracle decision: the configuration's feature symbols and the action
/// the oracle took.
#[derive(Clone, Debug)]
pub struct Example {
    pub symbols: SymbolSequence,
    pub action: Action,
}

/// Oracle examples of every document, word features unchanged.
pub fn oracle_examples(docs: &[Document]) -> Result<Vec<Example>, ModelError> {
    oracle_examples_mapped(docs, &IdentityMapper)
}

/// Oracle examples of every document, word features rewritten by `mapper`.
pub fn oracle_examples_mapped(
    docs: &[Document],
    mapper: &dyn WordMapper,
) -> Result<Vec<Example>, ModelError> {
    let mut extractors: HashMap<&str, FeatureExtractor> = HashMap::new();
    let mut examples = Vec::new();
    for doc in docs {
        let gold = doc.gold.as_ref().ok_or_else(|| ModelError::MissingGold {
            doc: doc.id.clone(),
        })?;
        let extractor = extractors
            .entry(doc.language.as_str())
            .or_insert_with(|| FeatureExtractor::for_language(&doc.language));
        for (config, action) in oracle_states(gold)? {
            examples.push(Example {
                symbols: extractor.config_symbols_mapped(&config, doc, mapper),
                action,
            });
        }
    }
    Ok(examples)
}

/// Where word-slot embeddings come from.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LexicalMode {
    /// The word table is trained like every other table.
    Trained,
    /// The word table is a fixed pretrained matrix; it receives no updates.
    Pretrained,
}

/// All parameter blocks of one network.
#[derive(Clone, PartialEq, Debug)]
struct Blocks {
    /// Per kind (in [`SymbolKind::ALL`] order): `vocab.len() × width`.
    embeddings: Vec<Array2<f64>>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

/// Intermediate activations of one forward pass.
struct Forward {
    x: Array1<f64>,
    z1: Array1<f64>,
    h1: Array1<f64>,
    z2: Array1<f64>,
    h2: Array1<f64>,
    probs: Array1<f64>,
}

/// Full gradient of a batch, embeddings kept per touched row.
struct Gradient {
    embeddings: BTreeMap<(usize, usize), Array1<f64>>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

/// Trained (or in-training) model: vocabularies, action inventory, the
/// current parameters and their running average. The averaged parameters
/// are the inference parameters.
#[derive(Clone, Debug)]
pub struct ModelParams {
    template_version: String,
    hp: Hyperparams,
    lexical: LexicalMode,
    vocabs: Vec<Vocab>,
    actions: Vec<Action>,
    action_index: HashMap<Action, usize>,
    current: Blocks,
    averaged: Blocks,
    /// Number of SGD updates applied.
    step: u64,
    /// Per kind, per row: the step through which the averaged row is
    /// up to date (embedding rows fold lazily).
    stamps: Vec<Vec<u64>>,
}

impl ModelParams {
    /// Fresh model over the given vocabularies and actions: weights and
    /// embeddings uniform in ±[`INIT_RANGE`], biases zero, NONE rows zero.
    pub fn init(
        vocabs: Vec<Vocab>,
        actions: Vec<Action>,
        hp: Hyperparams,
    ) -> Result<ModelParams, ModelError> {
        ModelParams::init_with_lexicon(vocabs, actions, hp, None)
    }

    /// Like [`ModelParams::init`], with the word table taken from a fixed
    /// pretrained embedding table: unknown words (and the UNK row) get the
    /// table's average vector, and the block is excluded from training.
    pub fn init_with_lexicon(
        vocabs: Vec<Vocab>,
        actions: Vec<Action>,
        hp: Hyperparams,
        pretrained: Option<&EmbeddingTable>,
    ) -> Result<ModelParams, ModelError> {
        assert_eq!(vocabs.len(), SymbolKind::ALL.len());
        assert!(!actions.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut uniform = |rows: usize, cols: usize, bound: f64| -> Array2<f64> {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };

        let mut embeddings = Vec::with_capacity(vocabs.len());
        for (k, kind) in SymbolKind::ALL.into_iter().enumerate() {
            let mut table = uniform(vocabs[k].len(), embedding_width(kind), INIT_RANGE);
            table.row_mut(Vocab::NONE).fill(0.0);
            embeddings.push(table);
        }
        let mut lexical = LexicalMode::Trained;
        if let Some(table) = pretrained {
            let word = kind_index(SymbolKind::Word);
            embeddings[word] = pretrained_word_table(&vocabs[word], table)?;
            lexical = LexicalMode::Pretrained;
        }

        let w1 = uniform(HIDDEN_WIDTH, input_width(), dense_init_bound(input_width()));
        let w2 = uniform(HIDDEN_WIDTH, HIDDEN_WIDTH, dense_init_bound(HIDDEN_WIDTH));
        let w3 = uniform(actions.len(), HIDDEN_WIDTH, dense_init_bound(HIDDEN_WIDTH));
        let current = Blocks {
            embeddings,
            w1,
            b1: Array1::zeros(HIDDEN_WIDTH),
            w2,
            b2: Array1::zeros(HIDDEN_WIDTH),
            w3,
            b3: Array1::zeros(actions.len()),
        };
        let stamps = vocabs.iter().map(|v| vec![0; v.len()]).collect();
        let action_index = actions.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        Ok(ModelParams {
            template_version: TEMPLATE_VERSION.to_string(),
            hp,
            lexical,
            vocabs,
            actions,
            action_index,
            averaged: current.clone(),
            current,
            step: 0,
            stamps,
        })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_id(&self, action: &Action) -> Option<usize> {
        self.action_index.get(action).copied()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    pub fn lexical_mode(&self) -> LexicalMode {
        self.lexical
    }

    pub fn vocab(&self, kind: SymbolKind) -> &Vocab {
        &self.vocabs[kind_index(kind)]
    }

    /// Number of SGD updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Embedding rows of the symbols, template order.
    fn ids(&self, symbols: &SymbolSequence) -> Vec<usize> {
        assert_eq!(
            symbols.len(),
            SLOT_COUNT,
            "symbol sequence does not match the template"
        );
        symbols
            .slots()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                assert_eq!(s.kind, template()[i].1, "slot {i} has the wrong kind");
                self.vocabs[kind_index(s.kind)].id(s.value.as_deref())
            })
            .collect()
    }

    fn forward_on(&self, blocks: &Blocks, ids: &[usize]) -> Forward {
        let mut x = Array1::zeros(input_width());
        for (slot, &id) in ids.iter().enumerate() {
            let (kind, offset, width) = slot_layout()[slot];
            // NONE stays a zero block regardless of table contents.
            if id != Vocab::NONE {
                let row = blocks.embeddings[kind].row(id);
                x.slice_mut(ndarray::s![offset..offset + width]).assign(&row);
            }
        }
        let z1 = blocks.w1.dot(&x) + &blocks.b1;
        let h1 = z1.mapv(|v| v.max(0.0));
        let z2 = blocks.w2.dot(&h1) + &blocks.b2;
        let h2 = z2.mapv(|v| v.max(0.0));
        let logits = blocks.w3.dot(&h2) + &blocks.b3;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = logits.mapv(|v| (v - max).exp());
        let total = probs.sum();
        probs /= total;
        Forward {
            x,
            z1,
            h1,
            z2,
            h2,
            probs,
        }
    }

    /// Probability distribution over [`ModelParams::actions`] under the
    /// averaged (inference) parameters. Unknown symbol values fall back to
    /// the UNK row — never an error.
    pub fn forward(&self, symbols: &SymbolSequence) -> Vec<f64> {
        let ids = self.ids(symbols);
        self.forward_on(&self.averaged, &ids).probs.to_vec()
    }

    /// Mean negative log-likelihood of the gold actions under the current
    /// (training) parameters.
    pub fn loss(&self, batch: &[Example]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut total = 0.0;
        for example in batch {
            let gold = self.gold_id(example)?;
            let ids = self.ids(&example.symbols);
            let forward = self.forward_on(&self.current, &ids);
            total -= forward.probs[gold].ln();
        }
        Ok(total / batch.len() as f64)
    }

    fn gold_id(&self, example: &Example) -> Result<usize, ModelError> {
        self.action_id(&example.action)
            .ok_or_else(|| ModelError::UnknownAction {
                action: example.action.to_string(),
            })
    }

    /// Batch loss together with every ReLU gate state; the finite-difference
    /// oracle uses the gates to detect probes that straddle a kink.
    fn loss_and_gates(&self, batch: &[Example]) -> Result<(f64, Vec<bool>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut total = 0.0;
        let mut gates = Vec::with_capacity(batch.len() * 2 * HIDDEN_WIDTH);
        for example in batch {
            let gold = self.gold_id(example)?;
            let ids = self.ids(&example.symbols);
            let forward = self.forward_on(&self.current, &ids);
            total -= forward.probs[gold].ln();
            gates.extend(forward.z1.iter().map(|&z| z > 0.0));
            gates.extend(forward.z2.iter().map(|&z| z > 0.0));
        }
        Ok((total / batch.len() as f64, gates))
    }

    /// Backpropagated deltas of one example's NLL; shared by the SGD step
    /// and the materialized batch gradient.
    fn deltas(
        &self,
        blocks: &Blocks,
        forward: &Forward,
        gold: usize,
    ) -> (f64, Array1<f64>, Array1<f64>, Array1<f64>) {
        let loss = -forward.probs[gold].ln();
        let mut delta3 = forward.probs.clone();
        delta3[gold] -= 1.0;
        let gate2 = forward.z2.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let delta2 = blocks.w3.t().dot(&delta3) * &gate2;
        let gate1 = forward.z1.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let delta1 = blocks.w2.t().dot(&delta2) * &gate1;
        (loss, delta1, delta2, delta3)
    }

    /// Embedding-row gradients of one example: slot gradients accumulated
    /// per (kind, row), NONE rows and fixed pretrained words excluded.
    fn embedding_gradients(
        &self,
        ids: &[usize],
        dx: &Array1<f64>,
        into: &mut BTreeMap<(usize, usize), Array1<f64>>,
    ) {
        let word = kind_index(SymbolKind::Word);
        for (slot, &id) in ids.iter().enumerate() {
            let (kind, offset, width) = slot_layout()[slot];
            if id == Vocab::NONE || (kind == word && self.lexical == LexicalMode::Pretrained) {
                continue;
            }
            let chunk = dx.slice(ndarray::s![offset..offset + width]);
            into.entry((kind, id))
                .and_modify(|g| *g += &chunk)
                .or_insert_with(|| chunk.to_owned());
        }
    }

    /// One SGD update with learning rate `eta`; returns the example's loss
    /// at the pre-update parameters and folds the running average.
    fn sgd_step(&mut self, example: &Example, eta: f64) -> Result<f64, ModelError> {
        let gold = self.gold_id(example)?;
        let ids = self.ids(&example.symbols);
        let forward = self.forward_on(&self.current, &ids);
        let (loss, delta1, delta2, delta3) = self.deltas(&self.current, &forward, gold);
        let dx = self.current.w1.t().dot(&delta1);

        self.step += 1;
        let t = self.step;

        // Dense blocks: fused rank-1 updates, then an eager fold of the
        // running mean, A_t = A_{t-1} + (θ_t − A_{t-1})/t.
        let cur = &mut self.current;
        cur.b3.scaled_add(-eta, &delta3);
        for (i, &d) in delta3.iter().enumerate() {
            cur.w3.row_mut(i).scaled_add(-eta * d, &forward.h2);
        }
        cur.b2.scaled_add(-eta, &delta2);
        for (i, &d) in delta2.iter().enumerate() {
            cur.w2.row_mut(i).scaled_add(-eta * d, &forward.h1);
        }
        cur.b1.scaled_add(-eta, &delta1);
        for (i, &d) in delta1.iter().enumerate() {
            cur.w1.row_mut(i).scaled_add(-eta * d, &forward.x);
        }
        let fold = 1.0 / t as f64;
        for (avg, cur) in [
            (&mut self.averaged.w1, &self.current.w1),
            (&mut self.averaged.w2, &self.current.w2),
            (&mut self.averaged.w3, &self.current.w3),
        ] {
            Zip::from(avg).and(cur).for_each(|a, &c| *a += (c - *a) * fold);
        }
        for (avg, cur) in [
            (&mut self.averaged.b1, &self.current.b1),
            (&mut self.averaged.b2, &self.current.b2),
            (&mut self.averaged.b3, &self.current.b3),
        ] {
            Zip::from(avg).and(cur).for_each(|a, &c| *a += (c - *a) * fold);
        }

        // Embedding rows: bring each touched row's average up to t−1 (its
        // value was constant since its stamp), update, then fold step t.
        let mut grads: BTreeMap<(usize, usize), Array1<f64>> = BTreeMap::new();
        self.embedding_gradients(&ids, &dx, &mut grads);
        for (&(kind, row), grad) in &grads {
            self.fold_embedding_row(kind, row, t - 1);
            self.current.embeddings[kind]
                .row_mut(row)
                .scaled_add(-eta, grad);
            self.fold_embedding_row(kind, row, t);
        }
        Ok(loss)
    }

    /// Fold one embedding row's running mean forward to `through` updates,
    /// valid while the current row has not changed since its stamp.
    fn fold_embedding_row(&mut self, kind: usize, row: usize, through: u64) {
        let k0 = self.stamps[kind][row];
        if k0 == through {
            return;
        }
        self.stamps[kind][row] = through;
        let cur = self.current.embeddings[kind].row(row);
        let mut avg = self.averaged.embeddings[kind].row_mut(row);
        if k0 == 0 {
            avg.assign(&cur);
            return;
        }
        let scale = (through - k0) as f64 / through as f64;
        Zip::from(&mut avg).and(&cur).for_each(|a, &c| *a += (c - *a) * scale);
    }

    /// Complete all lazily folded embedding rows so the averaged block is
    /// the exact mean over every update.
    pub fn finalize_average(&mut self) {
        let through = self.step;
        for kind in 0..self.vocabs.len() {
            for row in 0..self.vocabs[kind].len() {
                if self.stamps[kind][row] != through {
                    self.fold_embedding_row(kind, row, through);
                }
            }
        }
    }

    /// Mean loss and full gradient of a batch under the current parameters;
    /// the dense blocks are materialized (used by the gradient check).
    fn batch_gradient(&self, batch: &[Example]) -> Result<(f64, Gradient), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut grad = Gradient {
            embeddings: BTreeMap::new(),
            w1: Array2::zeros(self.current.w1.dim()),
            b1: Array1::zeros(self.current.b1.len()),
            w2: Array2::zeros(self.current.w2.dim()),
            b2: Array1::zeros(self.current.b2.len()),
            w3: Array2::zeros(self.current.w3.dim()),
            b3: Array1::zeros(self.current.b3.len()),
        };
        let mut total = 0.0;
        for example in batch {
            let gold = self.gold_id(example)?;
            let ids = self.ids(&example.symbols);
            let forward = self.forward_on(&self.current, &ids);
            let (loss, delta1, delta2, delta3) = self.deltas(&self.current, &forward, gold);
            total += loss;
            let dx = self.current.w1.t().dot(&delta1);
            grad.b3 += &delta3;
            for (i, &d) in delta3.iter().enumerate() {
                grad.w3.row_mut(i).scaled_add(d, &forward.h2);
            }
            grad.b2 += &delta2;
            for (i, &d) in delta2.iter().enumerate() {
                grad.w2.row_mut(i).scaled_add(d, &forward.h1);
            }
            grad.b1 += &delta1;
            for (i, &d) in delta1.iter().enumerate() {
                grad.w1.row_mut(i).scaled_add(d, &forward.x);
            }
            self.embedding_gradients(&ids, &dx, &mut grad.embeddings);
        }
        let scale = 1.0 / batch.len() as f64;
        for block in [&mut grad.w1, &mut grad.w2, &mut grad.w3] {
            *block *= scale;
        }
        for block in [&mut grad.b1, &mut grad.b2, &mut grad.b3] {
            *block *= scale;
        }
        for g in grad.embeddings.values_mut() {
            *g *= scale;
        }
        Ok((total * scale, grad))
    }
}

/// Word table rows taken from a fixed pretrained embedding table: NONE is
/// zero, UNK and out-of-table words get the average vector.
fn pretrained_word_table(
    vocab: &Vocab,
    table: &EmbeddingTable,
) -> Result<Array2<f64>, ModelError> {
    let width = embedding_width(SymbolKind::Word);
    if table.dim() != width {
        return Err(ModelError::PretrainedDim {
            expected: width,
            got: table.dim(),
        });
    }
    let mut rows = Array2::zeros((vocab.len(), width));
    rows.row_mut(Vocab::UNK).assign(&aview1(table.average()));
    for (i, word) in vocab.items().iter().enumerate() {
        rows.row_mut(Vocab::RESERVED + i)
            .assign(&aview1(table.embed(word)));
    }
    Ok(rows)
}

/// Sequential trainer: shuffles the examples each epoch and applies plain
/// per-example SGD with the decaying learning rate, maintaining the running
/// parameter average. Training is deterministic given (examples order,
/// hyperparameters).
pub struct Trainer {
    model: ModelParams,
    hp: Hyperparams,
    examples: Vec<Example>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(examples: Vec<Example>, hp: Hyperparams) -> Result<Trainer, ModelError> {
        Trainer::with_lexicon(examples, hp, None)
    }

    /// Build vocabularies and the action inventory from the examples and
    /// initialize a model; `pretrained` switches the word table to the
    /// fixed pretrained mode.
    pub fn with_lexicon(
        examples: Vec<Example>,
        hp: Hyperparams,
        pretrained: Option<&EmbeddingTable>,
    ) -> Result<Trainer, ModelError> {
        if examples.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let mut values: Vec<BTreeSet<String>> = vec![BTreeSet::new(); SymbolKind::ALL.len()];
        let mut actions: BTreeSet<Action> = BTreeSet::new();
        actions.insert(Action::Shift);
        for example in &examples {
            actions.insert(example.action);
            for symbol in example.symbols.slots() {
                if let Some(v) = &symbol.value {
                    values[kind_index(symbol.kind)].insert(v.clone());
                }
            }
        }
        let vocabs: Vec<Vocab> = values.into_iter().map(Vocab::build).collect();
        // BTreeSet order puts SHIFT first, then reduces sorted by label.
        let actions: Vec<Action> = actions.into_iter().collect();
        let model = ModelParams::init_with_lexicon(vocabs, actions, hp, pretrained)?;
        let order = (0..examples.len()).collect();
        Ok(Trainer {
            model,
            hp,
            examples,
            order,
            rng: ChaCha8Rng::seed_from_u64(hp.seed),
            epoch: 0,
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One pass over the shuffled examples; returns the mean loss at the
    /// pre-update parameters.
    pub fn run_epoch(&mut self) -> Result<f64, ModelError> {
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for i in 0..self.order.len() {
            let example = self.order[i];
            let eta = learning_rate_at(&self.hp, self.model.step);
            total += self.model.sgd_step(&self.examples[example], eta)?;
        }
        self.epoch += 1;
        Ok(total / self.examples.len() as f64)
    }

    /// Copy of the model with a completed average, usable for inference
    /// while training continues.
    pub fn snapshot(&self) -> ModelParams {
        let mut model = self.model.clone();
        model.finalize_average();
        model
    }

    pub fn into_model(mut self) -> ModelParams {
        self.model.finalize_average();
        self.model
    }
}

/// Train for `hp.epochs` epochs over the oracle examples and return the
/// averaged model.
pub fn train(examples: Vec<Example>, hp: Hyperparams) -> Result<ModelParams, ModelError> {
    let mut trainer = Trainer::new(examples, hp)?;
    for _ in 0..hp.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_model())
}

/// Hyperparameter search space. Epochs are checkpointed: the epoch values
/// share one training run per (learning rate, decay) pair, with the model
/// snapshotted and evaluated after every epoch.
#[derive(Clone, PartialEq, Debug)]
pub struct Grids {
    pub learning_rates: Vec<f64>,
    pub decays: Vec<f64>,
    pub max_epochs: usize,
    pub beams: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            learning_rates: LEARNING_RATE_GRID.to_vec(),
            decays: DECAY_GRID.to_vec(),
            max_epochs: MAX_EPOCHS,
            beams: BEAM_GRID.to_vec(),
        }
    }
}

impl Grids {
    /// Number of hyperparameter combinations covered.
    pub fn combinations(&self) -> usize {
        self.learning_rates.len() * self.decays.len() * self.max_epochs * self.beams.len()
    }

    /// A degenerate grid holding exactly one point.
    pub fn fixed(hp: &Hyperparams) -> Grids {
        Grids {
            learning_rates: vec![hp.learning_rate],
            decays: vec![hp.decay],
            max_epochs: hp.epochs,
            beams: vec![hp.beam],
        }
    }
}

/// One epoch of one grid point, as reported to the progress callback.
#[derive(Clone, Debug)]
pub struct EpochReport<'a> {
    pub learning_rate: f64,
    pub decay: f64,
    /// 1-based epoch within this (learning rate, decay) run.
    pub epoch: usize,
    /// Mean training loss of the epoch.
    pub loss: f64,
    /// Development scores per beam width, in grid order.
    pub dev: &'a [(usize, crate::evaluate::Scores)],
}

/// Winner of a hyperparameter search.
#[derive(Clone, Debug)]
pub struct GridSearchResult {
    pub hp: Hyperparams,
    pub model: ModelParams,
    pub dev_scores: crate::evaluate::Scores,
}

/// Train over every (learning rate, decay) pair with per-epoch snapshots,
/// score each snapshot on the development documents at every beam width,
/// and keep the point with the best Relation score (ties: higher
/// Nuclearity, higher Span, smaller beam, then earliest grid point).
pub fn grid_search(
    examples: &[Example],
    dev: &[Document],
    grids: &Grids,
    seed: u64,
    mapper: &dyn WordMapper,
    pretrained: Option<&EmbeddingTable>,
    mut progress: impl FnMut(&EpochReport),
) -> Result<GridSearchResult, ModelError> {
    assert!(
        !grids.learning_rates.is_empty()
            && !grids.decays.is_empty()
            && grids.max_epochs > 0
            && !grids.beams.is_empty(),
        "empty hyperparameter grid"
    );
    if dev.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let gold: Vec<crate::tree::RstTree> = dev
        .iter()
        .map(|d| {
            d.gold.clone().ok_or_else(|| ModelError::MissingGold {
                doc: d.id.clone(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut best: Option<GridSearchResult> = None;
    for &learning_rate in &grids.learning_rates {
        for &decay in &grids.decays {
            let hp = Hyperparams {
                learning_rate,
                decay,
                epochs: grids.max_epochs,
                beam: grids.beams[0],
                seed,
            };
            let mut trainer = Trainer::with_lexicon(examples.to_vec(), hp, pretrained)?;
            for epoch in 1..=grids.max_epochs {
                let loss = trainer.run_epoch()?;
                let snapshot = trainer.snapshot();
                let mut scored = Vec::with_capacity(grids.beams.len());
                for &beam in &grids.beams {
                    let mut predicted = Vec::with_capacity(dev.len());
                    for doc in dev {
                        predicted.push(
                            crate::decode::parse_mapped(doc, &snapshot, beam, mapper)?.tree,
                        );
                    }
                    scored.push((beam, crate::evaluate::score(&predicted, &gold)?));
                }
                progress(&EpochReport {
                    learning_rate,
                    decay,
                    epoch,
                    loss,
                    dev: &scored,
                });
                for &(beam, scores) in &scored {
                    let candidate_key = (scores.rel, scores.nuc, scores.span);
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            let best_key = (b.dev_scores.rel, b.dev_scores.nuc, b.dev_scores.span);
                            match candidate_key
                                .0
                                .total_cmp(&best_key.0)
                                .then(candidate_key.1.total_cmp(&best_key.1))
                                .then(candidate_key.2.total_cmp(&best_key.2))
                            {
                                std::cmp::Ordering::Greater => true,
                                std::cmp::Ordering::Less => false,
                                // Equal scores: a smaller beam wins; the
                                // earliest grid point wins otherwise.
                                std::cmp::Ordering::Equal => beam < b.hp.beam,
                            }
                        }
                    };
                    if better {
                        best = Some(GridSearchResult {
                            hp: Hyperparams {
                                learning_rate,
                                decay,
                                epochs: epoch,
                                beam,
                                seed,
                            },
                            model: snapshot.clone(),
                            dev_scores: scores,
                        });
                    }
                }
            }
        }
    }
    Ok(best.unwrap())
}

/// Fraction of examples whose gold action gets the highest inference
/// probability (ties to the lower action id).
pub fn training_accuracy(model: &ModelParams, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let mut hits = 0;
    for example in examples {
        let probs = model.forward(&example.symbols);
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if model.action_id(&example.action) == Some(best) {
            hits += 1;
        }
    }
    hits as f64 / examples.len() as f64
}

/// Identifies one scalar parameter for the finite-difference probe.
#[derive(Clone, Copy, Debug)]
enum Coord {
    Embedding { kind: usize, row: usize, col: usize },
    W1(usize),
    B1(usize),
    W2(usize),
    B2(usize),
    W3(usize),
    B3(usize),
}

/// One parameter block the finite-difference check probes.
#[derive(Clone, Copy)]
enum BlockProbe {
    Embedding(usize),
    W1,
    B1,
    W2,
    B2,
    W3,
    B3,
}

/// Compare the analytic batch gradient against central finite differences
/// on `probes_per_block` sampled coordinates of every parameter block, and
/// return the largest relative error seen. Embedding probes are drawn from
/// rows the batch actually touches; the fixed pretrained word table is
/// skipped. Probes whose interval straddles a ReLU kink (a gate flips
/// between the two evaluations) are invalid for a derivative comparison
/// and are redrawn.
pub fn gradient_check(
    model: &mut ModelParams,
    batch: &[Example],
    eps: f64,
    probes_per_block: usize,
    seed: u64,
) -> Result<f64, ModelError> {
    let (_, grad) = model.batch_gradient(batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut touched: Vec<Vec<usize>> = vec![Vec::new(); SymbolKind::ALL.len()];
    for &(kind, row) in grad.embeddings.keys() {
        touched[kind].push(row);
    }
    let mut blocks: Vec<BlockProbe> = (0..touched.len())
        .filter(|&k| !touched[k].is_empty())
        .map(BlockProbe::Embedding)
        .collect();
    blocks.extend([
        BlockProbe::W1,
        BlockProbe::B1,
        BlockProbe::W2,
        BlockProbe::B2,
        BlockProbe::W3,
        BlockProbe::B3,
    ]);

    fn slot(m: &mut ModelParams, coord: Coord) -> &mut f64 {
        match coord {
            Coord::Embedding { kind, row, col } => &mut m.current.embeddings[kind][[row, col]],
            Coord::W1(i) => &mut m.current.w1.as_slice_mut().unwrap()[i],
            Coord::B1(i) => &mut m.current.b1[i],
            Coord::W2(i) => &mut m.current.w2.as_slice_mut().unwrap()[i],
            Coord::B2(i) => &mut m.current.b2[i],
            Coord::W3(i) => &mut m.current.w3.as_slice_mut().unwrap()[i],
            Coord::B3(i) => &mut m.current.b3[i],
        }
    }

    let mut worst: f64 = 0.0;
    for block in blocks {
        let mut scored = 0;
        let mut attempts = 0;
        while scored < probes_per_block && attempts < 100 * probes_per_block {
            attempts += 1;
            let coord = match block {
                BlockProbe::Embedding(kind) => {
                    let rows = &touched[kind];
                    Coord::Embedding {
                        kind,
                        row: rows[rng.random_range(0..rows.len())],
                        col: rng.random_range(0..embedding_width(SymbolKind::ALL[kind])),
                    }
                }
                BlockProbe::W1 => Coord::W1(rng.random_range(0..model.current.w1.len())),
                BlockProbe::B1 => Coord::B1(rng.random_range(0..model.current.b1.len())),
                BlockProbe::W2 => Coord::W2(rng.random_range(0..model.current.w2.len())),
                BlockProbe::B2 => Coord::B2(rng.random_range(0..model.current.b2.len())),
                BlockProbe::W3 => Coord::W3(rng.random_range(0..model.current.w3.len())),
                BlockProbe::B3 => Coord::B3(rng.random_range(0..model.current.b3.len())),
            };
            let analytic = match coord {
                Coord::Embedding { kind, row, col } => grad.embeddings[&(kind, row)][col],
                Coord::W1(i) => grad.w1.as_slice().unwrap()[i],
                Coord::B1(i) => grad.b1[i],
                Coord::W2(i) => grad.w2.as_slice().unwrap()[i],
                Coord::B2(i) => grad.b2[i],
                Coord::W3(i) => grad.w3.as_slice().unwrap()[i],
                Coord::B3(i) => grad.b3[i],
            };
            let saved = *slot(model, coord);
            *slot(model, coord) = saved + eps;
            let (plus, gates_plus) = model.loss_and_gates(batch)?;
            *slot(model, coord) = saved - eps;
            let (minus, gates_minus) = model.loss_and_gates(batch)?;
            *slot(model, coord) = saved;
            if gates_plus != gates_minus {
                continue;
            }
            scored += 1;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            if rel > 1e-4 {
                eprintln!(
                    "coord {coord:?}: analytic {analytic:e}, numeric {numeric:e}, rel {rel:e}"
                );
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Serialization: self-describing binary container with a SHA-256 trailer.

const MAGIC: &[u8; 8] = b"RSTMODEL";
const FORMAT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn matrix(&mut self, m: &Array2<f64>) {
        let (rows, cols) = m.dim();
        self.u64(rows as u64);
        self.u64(cols as u64);
        for &v in m.iter() {
            self.f64(v);
        }
    }

    fn vector(&mut self, v: &Array1<f64>) {
        self.u64(v.len() as u64);
        for &x in v.iter() {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Corrupt {
                msg: "unexpected end of model data".to_string(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, ModelError> {
        let n = self.u64()?;
        usize::try_from(n).map_err(|_| ModelError::Corrupt {
            msg: format!("length {n} too large"),
        })
    }

    fn str(&mut self) -> Result<String, ModelError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ModelError::Corrupt {
            msg: "non-UTF-8 string".to_string(),
        })
    }

    fn matrix(&mut self) -> Result<Array2<f64>, ModelError> {
        let rows = self.len()?;
        let cols = self.len()?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| ModelError::Corrupt {
            msg: e.to_string(),
        })
    }

    fn vector(&mut self) -> Result<Array1<f64>, ModelError> {
        let n = self.len()?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        Ok(Array1::from_vec(data))
    }
}

impl ModelParams {
    /// Serialize with a completed average. The layout: magic, format
    /// version, template version, lexical mode, hyperparameters,
    /// vocabularies, actions, step count, current and averaged parameter
    /// blocks, SHA-256 checksum of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut model = self.clone();
        model.finalize_average();
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.str(&model.template_version);
        w.buf.push(match model.lexical {
            LexicalMode::Trained => 0,
            LexicalMode::Pretrained => 1,
        });
        w.f64(model.hp.learning_rate);
        w.f64(model.hp.decay);
        w.u64(model.hp.epochs as u64);
        w.u64(model.hp.beam as u64);
        w.u64(model.hp.seed);
        for vocab in &model.vocabs {
            w.u64(vocab.items().len() as u64);
            for item in vocab.items() {
                w.str(item);
            }
        }
        w.u64(model.actions.len() as u64);
        for action in &model.actions {
            w.str(&action.to_string());
        }
        w.u64(model.step);
        for blocks in [&model.current, &model.averaged] {
            for table in &blocks.embeddings {
                w.matrix(table);
            }
            w.matrix(&blocks.w1);
            w.vector(&blocks.b1);
            w.matrix(&blocks.w2);
            w.vector(&blocks.b2);
            w.matrix(&blocks.w3);
            w.vector(&blocks.b3);
        }
        let digest = Sha256::digest(&w.buf);
        w.buf.extend_from_slice(&digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, ModelError> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(ModelError::ChecksumMismatch);
        }
        let (content, trailer) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(content);
        if digest.as_slice() != trailer {
            return Err(ModelError::ChecksumMismatch);
        }
        let mut r = Reader {
            bytes: content,
            pos: 0,
        };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion { version });
        }
        let template_version = r.str()?;
        if template_version != TEMPLATE_VERSION {
            return Err(ModelError::TemplateMismatch {
                file: template_version,
                expected: TEMPLATE_VERSION.to_string(),
            });
        }
        let lexical = match r.take(1)?[0] {
            0 => LexicalMode::Trained,
            1 => LexicalMode::Pretrained,
            other => {
                return Err(ModelError::Corrupt {
                    msg: format!("unknown lexical mode {other}"),
                })
            }
        };
        let hp = Hyperparams {
            learning_rate: r.f64()?,
            decay: r.f64()?,
            epochs: r.u64()? as usize,
            beam: r.u64()? as usize,
            seed: r.u64()?,
        };
        let mut vocabs = Vec::with_capacity(SymbolKind::ALL.len());
        for _ in SymbolKind::ALL {
            let n = r.len()?;
            let mut items = Vec::with_capacity(n);
            for _ in 0..n {
                items.push(r.str()?);
            }
            vocabs.push(Vocab::build(items));
        }
        let n_actions = r.len()?;
        let mut actions = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let text = r.str()?;
            actions.push(text.parse::<Action>().map_err(|e| ModelError::Corrupt {
                msg: format!("bad action {text:?}: {e}"),
            })?);
        }
        let step = r.u64()?;
        let mut read_blocks = || -> Result<Blocks, ModelError> {
            let mut embeddings = Vec::with_capacity(SymbolKind::ALL.len());
            for (k, kind) in SymbolKind::ALL.into_iter().enumerate() {
                let table = r.matrix()?;
                if table.dim() != (vocabs[k].len(), embedding_width(kind)) {
                    return Err(ModelError::Corrupt {
                        msg: format!("{} table has shape {:?}", kind.name(), table.dim()),
                    });
                }
                embeddings.push(table);
            }
            let blocks = Blocks {
                embeddings,
                w1: r.matrix()?,
                b1: r.vector()?,
                w2: r.matrix()?,
                b2: r.vector()?,
                w3: r.matrix()?,
                b3: r.vector()?,
            };
            if blocks.w1.dim() != (HIDDEN_WIDTH, input_width())
                || blocks.b1.len() != HIDDEN_WIDTH
                || blocks.w2.dim() != (HIDDEN_WIDTH, HIDDEN_WIDTH)
                || blocks.b2.len() != HIDDEN_WIDTH
                || blocks.w3.dim() != (n_actions, HIDDEN_WIDTH)
                || blocks.b3.len() != n_actions
            {
                return Err(ModelError::Corrupt {
                    msg: "dense block shapes do not match the template".to_string(),
                });
            }
            Ok(blocks)
        };
        let current = read_blocks()?;
        let averaged = read_blocks()?;
        if r.pos != content.len() {
            return Err(ModelError::Corrupt {
                msg: format!("{} trailing bytes", content.len() - r.pos),
            });
        }
        let action_index = actions.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let stamps = vocabs.iter().map(|v| vec![step; v.len()]).collect();
        Ok(ModelParams {
            template_version,
            hp,
            lexical,
            vocabs,
            actions,
            action_index,
            current,
            averaged,
            step,
            stamps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelParams, ModelError> {
        let bytes = std::fs::read(path)?;
        ModelParams::from_bytes(&bytes)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training examples")]
    EmptyCorpus,
    #[error("document {doc} has no gold tree")]
    MissingGold { doc: String },
    #[error("action {action} is outside the model's vocabulary")]
    UnknownAction { action: String },
    #[error("pretrained vectors have {got} dimensions, the word slots need {expected}")]
    PretrainedDim { expected: usize, got: usize },
    #[error("model file was built for template {file}, this build uses {expected}")]
    TemplateMismatch { file: String, expected: String },
    #[error("model file checksum does not match its contents")]
    ChecksumMismatch,
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {version}")]
    UnsupportedVersion { version: u32 },
    #[error("corrupt model file: {msg}")]
    Corrupt { msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Decode(#[from] crate::decode::DecodeError),
    #[error(transparent)]
    Eval(#[from] crate::evaluate::EvalError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use crate::tree::{NucPattern, RelationClass};

    fn toy_examples(n_docs: usize, n_edus: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = synth::toy_corpus(&mut rng, n_docs, n_edus);
        oracle_examples(&docs).unwrap()
    }

    fn small_model(seed: u64) -> (ModelParams, Vec<Example>) {
        let examples = toy_examples(2, 3, seed);
        let trainer = Trainer::new(examples.clone(), Hyperparams { seed, ..Default::default() })
            .unwrap();
        (trainer.model().clone(), examples)
    }

    fn zeroed(model: &mut ModelParams) {
        for blocks in [&mut model.current, &mut model.averaged] {
            for table in &mut blocks.embeddings {
                table.fill(0.0);
            }
            blocks.w1.fill(0.0);
            blocks.w2.fill(0.0);
            blocks.w3.fill(0.0);
            blocks.b1.fill(0.0);
            blocks.b2.fill(0.0);
            blocks.b3.fill(0.0);
        }
    }

    #[test]
    fn input_concatenates_slot_embeddings() {
        assert_eq!(input_width(), 3166);
        // 7 EDU groups of 7·50 + 4·16 + 4 + 6 + 7·2 dims, plus two 50-dim
        // relation labels.
        assert_eq!(7 * (7 * 50 + 4 * 16 + 4 + 6 + 7 * 2) + 2 * 50, 3166);
        assert_eq!(embedding_width(SymbolKind::Word), 50);
        assert_eq!(embedding_width(SymbolKind::Pos), 16);
        assert_eq!(embedding_width(SymbolKind::RelationLabel), 50);
        assert_eq!(embedding_width(SymbolKind::PositionBucket), 6);
        assert_eq!(embedding_width(SymbolKind::LengthBucket), 4);
        assert_eq!(embedding_width(SymbolKind::BooleanFlag), 2);
    }

    #[test]
    fn action_vocabulary_is_shift_then_sorted_reduces() {
        let (model, _) = small_model(4);
        let actions = model.actions();
        assert_eq!(actions[0], Action::Shift);
        for pair in actions[1..].windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert_eq!(model.action_id(&Action::Shift), Some(0));
    }

    #[test]
    fn forward_is_a_probability_distribution() {
        let (model, examples) = small_model(7);
        for example in &examples {
            let probs = model.forward(&example.symbols);
            assert_eq!(probs.len(), model.n_actions());
            assert!(probs.iter().all(|&p| p >= 0.0));
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "sum {total}");
        }
    }

    #[test]
    fn zero_parameters_give_the_uniform_distribution() {
        let (mut model, examples) = small_model(8);
        zeroed(&mut model);
        let n = model.n_actions() as f64;
        let probs = model.forward(&examples[0].symbols);
        for p in probs {
            assert!((p - 1.0 / n).abs() < 1e-15);
        }
        // Uniform probabilities make every example cost ln |A|.
        let loss = model.loss(&examples).unwrap();
        assert!((loss - n.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn a_certain_model_has_zero_loss() {
        let (mut model, examples) = small_model(9);
        zeroed(&mut model);
        let example = examples[0].clone();
        let gold = model.action_id(&example.action).unwrap();
        model.current.b3[gold] = 60.0;
        let loss = model.loss(&[example]).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn none_slots_ignore_their_embedding_row() {
        let (mut model, _) = small_model(10);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let docs = synth::toy_corpus(&mut rng, 1, 3);
        // The initial configuration has every stack group at NONE.
        let extractor = FeatureExtractor::for_language("en");
        let config = crate::transition::Configuration::initial(3).unwrap();
        let symbols = extractor.config_symbols(&config, &docs[0]);
        assert!(symbols[0].value.is_none());

        let before = model.forward(&symbols);
        for blocks in [&mut model.current, &mut model.averaged] {
            for table in &mut blocks.embeddings {
                table.row_mut(Vocab::NONE).fill(123.0);
            }
        }
        assert_eq!(model.forward(&symbols), before);
    }

    #[test]
    fn unseen_values_share_the_unk_row() {
        let (model, examples) = small_model(11);
        let mut a = examples[0].clone();
        let mut b = examples[0].clone();
        let slot = a
            .symbols
            .slots()
            .iter()
            .position(|s| s.kind == SymbolKind::Word && s.value.is_some())
            .unwrap();
        let rewrite = |e: &mut Example, value: &str| {
            let mut slots = e.symbols.slots().to_vec();
            slots[slot].value = Some(value.to_string());
            e.symbols = SymbolSequence::from_slots(slots);
        };
        rewrite(&mut a, "zzz-unseen-1");
        rewrite(&mut b, "zzz-unseen-2");
        assert_eq!(model.forward(&a.symbols), model.forward(&b.symbols));
    }

    #[test]
    fn initialization_is_small_uniform_with_zero_none_rows() {
        let (model, _) = small_model(12);
        for blocks in [&model.current, &model.averaged] {
            for table in &blocks.embeddings {
                assert!(table.iter().all(|v| v.abs() <= INIT_RANGE));
                assert!(table.row(Vocab::NONE).iter().all(|&v| v == 0.0));
                // The UNK row is a real trainable row.
                assert!(table.row(Vocab::UNK).iter().any(|&v| v != 0.0));
            }
            for (w, fan_in) in [
                (&blocks.w1, input_width()),
                (&blocks.w2, HIDDEN_WIDTH),
                (&blocks.w3, HIDDEN_WIDTH),
            ] {
                let bound = dense_init_bound(fan_in);
                assert!(w.iter().all(|v| v.abs() <= bound));
                assert!(w.iter().any(|&v| v != 0.0));
            }
            for b in [&blocks.b1, &blocks.b2, &blocks.b3] {
                assert!(b.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let examples = toy_examples(2, 3, 13);
        let hp = Hyperparams {
            learning_rate: 0.0,
            decay: 0.0,
            epochs: 1,
            ..Default::default()
        };
        let mut trainer = Trainer::new(examples, hp).unwrap();
        let before = trainer.model().clone();
        trainer.run_epoch().unwrap();
        let after = trainer.into_model();
        assert_eq!(after.current, before.current);
        assert_eq!(after.averaged, before.current);
    }

    #[test]
    fn learning_rate_decays_harmonically() {
        let hp = Hyperparams {
            learning_rate: 0.03,
            decay: 1e-5,
            ..Default::default()
        };
        assert_eq!(learning_rate_at(&hp, 0), 0.03);
        assert_eq!(learning_rate_at(&hp, 100_000), 0.015);
        let flat = Hyperparams {
            decay: 0.0,
            ..hp
        };
        assert_eq!(learning_rate_at(&flat, 1_000_000), flat.learning_rate);
    }

    #[test]
    fn averaged_parameters_equal_the_mean_of_snapshots() {
        let examples = toy_examples(2, 3, 14);
        let hp = Hyperparams {
            learning_rate: 0.03,
            decay: 1e-6,
            epochs: 2,
            seed: 14,
            ..Default::default()
        };
        let mut trainer = Trainer::new(examples.clone(), hp).unwrap();
        // Shadow the training loop: replay the same updates and collect the
        // post-update snapshots.
        let mut shadow: Vec<Blocks> = Vec::new();
        for _ in 0..hp.epochs {
            trainer.run_epoch().unwrap();
        }
        let steps = trainer.model().step;
        let mut replay = Trainer::new(examples, hp).unwrap();
        for _ in 0..hp.epochs {
            let order = {
                let mut order = replay.order.clone();
                order.shuffle(&mut replay.rng.clone());
                order
            };
            // Advance the real rng exactly like run_epoch does.
            replay.order.shuffle(&mut replay.rng);
            assert_eq!(order, replay.order);
            for i in 0..replay.order.len() {
                let idx = replay.order[i];
                let eta = learning_rate_at(&hp, replay.model.step);
                let example = replay.examples[idx].clone();
                replay.model.sgd_step(&example, eta).unwrap();
                shadow.push(replay.model.current.clone());
            }
        }
        assert_eq!(shadow.len() as u64, steps);

        let averaged = trainer.into_model();
        let scale = 1.0 / shadow.len() as f64;
        let close = |got: &Array2<f64>, want: &Array2<f64>| {
            got.iter()
                .zip(want.iter())
                .all(|(a, b)| (a - b).abs() < 1e-12)
        };
        for k in 0..SymbolKind::ALL.len() {
            let mut mean = Array2::zeros(shadow[0].embeddings[k].dim());
            for s in &shadow {
                mean.scaled_add(scale, &s.embeddings[k]);
            }
            assert!(close(&averaged.averaged.embeddings[k], &mean), "kind {k}");
        }
        let mut mean_w1 = Array2::zeros(shadow[0].w1.dim());
        for s in &shadow {
            mean_w1.scaled_add(scale, &s.w1);
        }
        assert!(close(&averaged.averaged.w1, &mean_w1));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut model, examples) = small_model(15);
        let batch: Vec<Example> = examples.into_iter().take(5).collect();
        let worst = gradient_check(&mut model, &batch, 1e-5, 4, 99).unwrap();
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn training_overfits_a_toy_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let docs = synth::toy_corpus(&mut rng, 5, 4);
        let examples = oracle_examples(&docs).unwrap();
        let hp = Hyperparams {
            learning_rate: 0.02,
            decay: 0.0,
            epochs: 20,
            seed: 16,
            ..Default::default()
        };
        let model = train(examples.clone(), hp).unwrap();
        let accuracy = training_accuracy(&model, &examples);
        assert!(accuracy >= 0.99, "accuracy {accuracy}");
    }

    #[test]
    fn training_is_deterministic() {
        let examples = toy_examples(2, 4, 17);
        let hp = Hyperparams {
            epochs: 2,
            seed: 17,
            ..Default::default()
        };
        let a = train(examples.clone(), hp).unwrap();
        let b = train(examples, hp).unwrap();
        assert_eq!(a.current, b.current);
        assert_eq!(a.averaged, b.averaged);
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn empty_corpora_are_rejected() {
        assert!(matches!(
            Trainer::new(Vec::new(), Hyperparams::default()),
            Err(ModelError::EmptyCorpus)
        ));
        let (model, _) = small_model(18);
        assert!(matches!(model.loss(&[]), Err(ModelError::EmptyCorpus)));
    }

    #[test]
    fn loss_rejects_actions_outside_the_vocabulary() {
        let (model, examples) = small_model(19);
        let mut example = examples[0].clone();
        let missing = Action::reduce(NucPattern::SN, RelationClass::TopicChange).unwrap();
        assert!(model.action_id(&missing).is_none());
        example.action = missing;
        assert!(matches!(
            model.loss(&[example]),
            Err(ModelError::UnknownAction { .. })
        ));
    }

    #[test]
    fn model_files_round_trip_bit_exactly() {
        let examples = toy_examples(2, 3, 20);
        let hp = Hyperparams {
            epochs: 1,
            seed: 20,
            ..Default::default()
        };
        let model = train(examples.clone(), hp).unwrap();
        let bytes = model.to_bytes();
        let reloaded = ModelParams::from_bytes(&bytes).unwrap();
        assert_eq!(reloaded.to_bytes(), bytes);
        for example in &examples {
            let a = model.forward(&example.symbols);
            let b = reloaded.forward(&example.symbols);
            assert_eq!(a, b);
        }
        assert_eq!(reloaded.steps(), model.steps());
        assert_eq!(reloaded.hyperparams(), model.hyperparams());
    }

    #[test]
    fn damaged_model_files_fail_the_checksum() {
        let (model, _) = small_model(21);
        let bytes = model.to_bytes();

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0xff;
        assert!(matches!(
            ModelParams::from_bytes(&flipped),
            Err(ModelError::ChecksumMismatch)
        ));

        let truncated = &bytes[..bytes.len() - 100];
        assert!(matches!(
            ModelParams::from_bytes(truncated),
            Err(ModelError::ChecksumMismatch)
        ));

        assert!(matches!(
            ModelParams::from_bytes(&[]),
            Err(ModelError::ChecksumMismatch)
        ));
    }

    #[test]
    fn template_mismatch_names_both_versions() {
        let (mut model, _) = small_model(22);
        model.template_version = "symbols-999-test".to_string();
        let bytes = model.to_bytes();
        match ModelParams::from_bytes(&bytes) {
            Err(ModelError::TemplateMismatch { file, expected }) => {
                assert_eq!(file, "symbols-999-test");
                assert_eq!(expected, TEMPLATE_VERSION);
            }
            other => panic!("expected a template mismatch, got {other:?}"),
        }
    }

    #[test]
    fn default_grid_covers_the_full_search_space() {
        let grids = Grids::default();
        assert_eq!(grids.learning_rates, vec![0.01, 0.02, 0.03]);
        assert_eq!(grids.decays, vec![1e-5, 1e-6, 1e-7, 0.0]);
        assert_eq!(grids.max_epochs, 20);
        assert_eq!(grids.beams, vec![1, 2, 4, 8, 16, 32]);
        assert_eq!(grids.combinations(), 1440);
    }

    #[test]
    fn one_point_grids_return_that_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let docs = synth::toy_corpus(&mut rng, 3, 3);
        let examples = oracle_examples(&docs).unwrap();
        let hp = Hyperparams {
            learning_rate: 0.03,
            decay: 1e-6,
            epochs: 1,
            beam: 2,
            seed: 30,
        };
        let grids = Grids::fixed(&hp);
        assert_eq!(grids.combinations(), 1);
        let mut reports = 0;
        let result = grid_search(
            &examples,
            &docs,
            &grids,
            hp.seed,
            &IdentityMapper,
            None,
            |report| {
                assert_eq!(report.epoch, 1);
                assert_eq!(report.dev.len(), 1);
                reports += 1;
            },
        )
        .unwrap();
        assert_eq!(reports, 1);
        assert_eq!(result.hp, hp);
    }

    #[test]
    fn equal_scores_prefer_the_smaller_beam() {
        // Overfit a tiny corpus and use it as its own dev set: every beam
        // parses every document to gold, so all beams tie and the smallest
        // must win.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let docs = synth::toy_corpus(&mut rng, 4, 3);
        let examples = oracle_examples(&docs).unwrap();
        let grids = Grids {
            learning_rates: vec![0.02],
            decays: vec![0.0],
            max_epochs: 30,
            beams: vec![4, 2, 1],
        };
        let result = grid_search(
            &examples,
            &docs,
            &grids,
            31,
            &IdentityMapper,
            None,
            |_| {},
        )
        .unwrap();
        assert_eq!(result.dev_scores.rel, 100.0);
        assert_eq!(result.hp.beam, 1);
    }

    #[test]
    fn pretrained_word_vectors_stay_fixed() {
        let examples = toy_examples(2, 3, 23);
        // A table covering one real word of the corpus plus strangers.
        let some_word = examples
            .iter()
            .flat_map(|e| e.symbols.slots())
            .find(|s| s.kind == SymbolKind::Word && s.value.is_some())
            .and_then(|s| s.value.clone())
            .unwrap();
        let mut text = format!("2 50\n{some_word}");
        for i in 0..50 {
            text.push_str(&format!(" {}", i as f64 / 100.0));
        }
        text.push_str("\nstranger");
        for _ in 0..50 {
            text.push_str(" 1");
        }
        text.push('\n');
        let table = EmbeddingTable::load(&text).unwrap();

        let hp = Hyperparams {
            epochs: 2,
            seed: 23,
            ..Default::default()
        };
        let mut trainer = Trainer::with_lexicon(examples.clone(), hp, Some(&table)).unwrap();
        let model = trainer.model();
        assert_eq!(model.lexical_mode(), LexicalMode::Pretrained);
        let word_kind = kind_index(SymbolKind::Word);
        let before = model.current.embeddings[word_kind].clone();
        // Known word: its table row. Unknown vocab words and UNK: average.
        let vocab = model.vocab(SymbolKind::Word);
        let row = vocab.id(Some(&some_word));
        assert_eq!(
            before.row(row).to_vec(),
            table.vector(&some_word).unwrap().to_vec()
        );
        assert_eq!(before.row(Vocab::UNK).to_vec(), table.average().to_vec());

        for _ in 0..hp.epochs {
            trainer.run_epoch().unwrap();
        }
        let trained = trainer.into_model();
        assert_eq!(trained.current.embeddings[word_kind], before);
        assert_eq!(trained.averaged.embeddings[word_kind], before);
        // Everything else still trains.
        let pos_kind = kind_index(SymbolKind::Pos);
        let fresh = ModelParams::init_with_lexicon(
            trained.vocabs.clone(),
            trained.actions.clone(),
            hp,
            Some(&table),
        )
        .unwrap();
        assert_ne!(trained.current.embeddings[pos_kind], fresh.current.embeddings[pos_kind]);

        // Dimension mismatches are rejected.
        let narrow = EmbeddingTable::load("1 3\nw 1 2 3\n").unwrap();
        assert!(matches!(
            Trainer::with_lexicon(examples, hp, Some(&narrow)),
            Err(ModelError::PretrainedDim {
                expected: 50,
                got: 3
            })
        ));
    }
}
