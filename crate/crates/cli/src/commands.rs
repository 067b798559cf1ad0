//! The subcommands as library functions, so integration tests can drive
//! them directly and inspect their results (including the file-access log).

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use rstkit_core::corpus::{
    load_harmonized_corpus, load_raw_corpus, write_harmonized_corpus, AccessLog, CorpusError,
};
use rstkit_core::crosslingual::{
    coverage_report, BilingualDictionary, CrossError, EmbeddingTable, TranslatingMapper,
};
use rstkit_core::decode::{parse_mapped, parse_traced, DecodeError};
use rstkit_core::doc::Document;
use rstkit_core::evaluate::{
    default_mfs_label, mfs_baseline, most_frequent_label, score, split_corpus, EvalError, Scores,
};
use rstkit_core::features::{IdentityMapper, WordMapper};
use rstkit_core::harmonize::{CorpusStats, LabelMapping};
use rstkit_core::model::{
    grid_search, oracle_examples_mapped, Hyperparams, ModelError, ModelParams, Trainer,
};
use rstkit_core::transition::{oracle, replay, TransitionError};
use rstkit_core::tree::{RstTree, TreeError};

use crate::config::{Mode, RunConfig, Search};

/// Command failure, carrying its exit-code class.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or configuration (exit code 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, missing, or unusable data (exit code 2).
    #[error("{0}")]
    Data(String),
    /// A violated internal invariant (exit code 3).
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            // The transition system or decoder rejecting its own plumbing is
            // a broken invariant, not a data problem.
            ModelError::Transition(_) | ModelError::Decode(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CrossError> for CliError {
    fn from(e: CrossError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<TransitionError> for CliError {
    fn from(e: TransitionError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(format!("i/o error: {e}"))
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| data_err(path, e))
}

/// File name stub for a document id; rejects ids that would escape the
/// output directory.
fn id_stem(id: &str) -> Result<&str, CliError> {
    if id.is_empty() || id.contains(['/', '\\']) {
        return Err(CliError::Data(format!(
            "document id `{id}` cannot name output files"
        )));
    }
    Ok(id)
}

/// Merge dictionary files (earlier files win colliding entries, matching
/// the first-sense-wins rule within one file).
fn load_merged_dictionary(
    paths: &[PathBuf],
    log: &mut AccessLog,
) -> Result<Option<BilingualDictionary>, CliError> {
    if paths.is_empty() {
        return Ok(None);
    }
    let mut text = String::new();
    for path in paths {
        text.push_str(&log.read(path)?);
        if !text.ends_with('\n') {
            text.push('\n');
        }
    }
    Ok(Some(BilingualDictionary::from_tsv(&text)?))
}

/// Convert a raw treebank into the harmonized corpus layout and report
/// corpus statistics.
pub fn harmonize(
    manifest: &Path,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<CorpusStats, CliError> {
    let mut log = AccessLog::new();
    let outcome = load_raw_corpus(manifest, LabelMapping::builtin(), &mut log)?;
    let path = write_harmonized_corpus(dir, &outcome.documents)?;
    for note in &outcome.warnings {
        writeln!(out, "note {note}")?;
    }
    writeln!(out, "{}", outcome.stats)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(outcome.stats)
}

/// What [`train`] produced, for callers that want more than the exit code.
#[derive(Debug)]
pub struct TrainOutcome {
    /// The selected (or fixed) hyperparameter point.
    pub hp: Hyperparams,
    /// Development scores of the final model, when a dev set existed.
    pub dev: Option<Scores>,
    /// Every file the run read.
    pub access: AccessLog,
}

/// Train a parser according to the run configuration and save the model.
pub fn train(config: &RunConfig, out: &mut dyn Write) -> Result<TrainOutcome, CliError> {
    let mut log = AccessLog::new();
    let (train_docs, dev_docs) = assemble_pools(config, &mut log)?;
    writeln!(
        out,
        "mode {}  target {}  seed {}",
        config.mode, config.target, config.seed
    )?;
    writeln!(
        out,
        "training documents {}  development documents {}",
        train_docs.len(),
        dev_docs.len()
    )?;

    let dict_paths: Vec<PathBuf> = config.dictionaries.values().cloned().collect();
    let dict = if config.mode == Mode::Mono {
        None
    } else {
        load_merged_dictionary(&dict_paths, &mut log)?
    };
    let mapper: Box<dyn WordMapper> = match &dict {
        Some(d) => Box::new(TranslatingMapper::new(d)),
        None => Box::new(IdentityMapper),
    };
    let pretrained = match &config.embeddings {
        Some(path) => Some(EmbeddingTable::load(&log.read(path)?)?),
        None => None,
    };

    let examples = oracle_examples_mapped(&train_docs, mapper.as_ref())?;
    writeln!(out, "oracle examples {}", examples.len())?;

    let mut table = String::from("lr\tdecay\tepoch\tbeam\tspan\tnuc\trel\n");
    let (model, hp, dev_scores) = match &config.search {
        Search::Grid(grids) => {
            let result = grid_search(
                &examples,
                &dev_docs,
                grids,
                config.seed,
                mapper.as_ref(),
                pretrained.as_ref(),
                |report| {
                    let mut line = format!(
                        "lr {}  decay {}  epoch {:>2}  loss {:.4}",
                        report.learning_rate, report.decay, report.epoch, report.loss
                    );
                    for &(beam, scores) in report.dev {
                        let _ = write!(line, "  beam {beam}: {scores}");
                        let _ = writeln!(
                            table,
                            "{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
                            report.learning_rate,
                            report.decay,
                            report.epoch,
                            beam,
                            scores.span,
                            scores.nuc,
                            scores.rel
                        );
                    }
                    let _ = writeln!(out, "{line}");
                },
            )?;
            (result.model, result.hp, Some(result.dev_scores))
        }
        Search::Fixed(hp) => {
            let mut trainer = Trainer::with_lexicon(examples, *hp, pretrained.as_ref())?;
            for epoch in 1..=hp.epochs {
                let loss = trainer.run_epoch()?;
                writeln!(out, "epoch {epoch:>2}  loss {loss:.4}")?;
            }
            let model = trainer.into_model();
            let dev_scores = if dev_docs.is_empty() {
                None
            } else {
                let scores = score_documents(&dev_docs, &model, hp.beam, mapper.as_ref())?;
                let _ = writeln!(
                    table,
                    "{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
                    hp.learning_rate,
                    hp.decay,
                    hp.epochs,
                    hp.beam,
                    scores.span,
                    scores.nuc,
                    scores.rel
                );
                Some(scores)
            };
            (model, *hp, dev_scores)
        }
    };

    if let Some(parent) = config.model.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| data_err(parent, e))?;
        }
    }
    model.save(&config.model)?;

    writeln!(
        out,
        "selected lr {}  decay {}  epochs {}  beam {}",
        hp.learning_rate, hp.decay, hp.epochs, hp.beam
    )?;
    if let Some(scores) = &dev_scores {
        writeln!(out, "dev {scores}")?;
    }
    writeln!(
        out,
        "model {} sha256 {}",
        config.model.display(),
        file_checksum_hex(&config.model)?
    )?;

    if let Some(dir) = &config.output {
        fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
        write_text(&dir.join("dev_scores.tsv"), &table)?;
    }
    Ok(TrainOutcome {
        hp,
        dev: dev_scores,
        access: log,
    })
}

/// Parse every dev document and score the predictions against gold.
fn score_documents(
    docs: &[Document],
    model: &ModelParams,
    beam: usize,
    mapper: &dyn WordMapper,
) -> Result<Scores, CliError> {
    let mut predicted = Vec::with_capacity(docs.len());
    let mut gold = Vec::with_capacity(docs.len());
    for doc in docs {
        gold.push(doc.gold.clone().ok_or_else(|| {
            CliError::Data(format!("document `{}` has no gold tree", doc.id))
        })?);
        predicted.push(parse_mapped(doc, model, beam, mapper)?.tree);
    }
    Ok(score(&predicted, &gold)?)
}

/// Load the training and development documents for a run.
///
/// * mono: the target corpus's train and dev splits;
/// * cross-source-only: each source corpus contributes its train split to
///   the pool (or, when too small to have one, its dev split), and the dev
///   splits of the remaining sources drive selection — target files are
///   never read;
/// * cross-plus-dev: every source corpus contributes all its documents,
///   the target corpus its train split; the target dev split drives
///   selection.
fn assemble_pools(
    config: &RunConfig,
    log: &mut AccessLog,
) -> Result<(Vec<Document>, Vec<Document>), CliError> {
    let load = |lang: &str, log: &mut AccessLog| -> Result<Vec<Document>, CliError> {
        let path = config
            .manifests
            .get(lang)
            .expect("configuration is validated before commands run");
        Ok(load_harmonized_corpus(path, log)?.documents)
    };
    let pick = |docs: &[Document], idx: &[usize]| -> Vec<Document> {
        idx.iter().map(|&i| docs[i].clone()).collect()
    };

    match config.mode {
        Mode::Mono => {
            let docs = load(&config.target, log)?;
            let split = split_corpus(&docs, config.seed)?;
            if split.train.is_empty() {
                return Err(CliError::Data(format!(
                    "empty training set in mono mode: {} documents leave nothing \
                     beyond the test and development splits",
                    docs.len()
                )));
            }
            Ok((pick(&docs, &split.train), pick(&docs, &split.dev)))
        }
        Mode::CrossSourceOnly => {
            let mut pool = Vec::new();
            let mut dev = Vec::new();
            for lang in &config.sources {
                let docs = load(lang, log)?;
                let split = split_corpus(&docs, config.seed)?;
                if split.train.is_empty() {
                    // A small corpus trains with everything outside its
                    // test split and contributes nothing to selection.
                    pool.extend(pick(&docs, &split.dev));
                } else {
                    pool.extend(pick(&docs, &split.train));
                    dev.extend(pick(&docs, &split.dev));
                }
            }
            if dev.is_empty() && matches!(config.search, Search::Grid(_)) {
                return Err(CliError::Data(
                    "no source corpus is large enough to provide a development \
                     split for grid selection"
                        .into(),
                ));
            }
            Ok((pool, dev))
        }
        Mode::CrossPlusDev => {
            let mut pool = Vec::new();
            for lang in &config.sources {
                pool.extend(load(lang, log)?);
            }
            let target_docs = load(&config.target, log)?;
            let split = split_corpus(&target_docs, config.seed)?;
            pool.extend(pick(&target_docs, &split.train));
            Ok((pool, pick(&target_docs, &split.dev)))
        }
    }
}

/// Hex of a model file's trailing SHA-256 checksum.
fn file_checksum_hex(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| data_err(path, e))?;
    let tail = &bytes[bytes.len().saturating_sub(32)..];
    Ok(tail.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Parse a harmonized corpus with a trained model, writing one `.brackets`
/// file per document (and a `.trace` file when asked).
pub fn parse(
    model_path: &Path,
    manifest: &Path,
    dir: &Path,
    beam: Option<usize>,
    dictionaries: &[PathBuf],
    trace: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let model = ModelParams::load(model_path)?;
    let mut log = AccessLog::new();
    let corpus = load_harmonized_corpus(manifest, &mut log)?;
    let dict = load_merged_dictionary(dictionaries, &mut log)?;
    let mapper: Box<dyn WordMapper> = match &dict {
        Some(d) => Box::new(TranslatingMapper::new(d)),
        None => Box::new(IdentityMapper),
    };
    let beam = beam.unwrap_or_else(|| model.hyperparams().beam);
    fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;

    for doc in &corpus.documents {
        let stem = id_stem(&doc.id)?;
        let result = if trace {
            let mut lines = Vec::new();
            let result = parse_traced(doc, &model, beam, mapper.as_ref(), &mut lines)?;
            let mut text = lines.join("\n");
            text.push('\n');
            write_text(&dir.join(format!("{stem}.trace")), &text)?;
            result
        } else {
            parse_mapped(doc, &model, beam, mapper.as_ref())?
        };
        write_text(
            &dir.join(format!("{stem}.brackets")),
            &format!("{}\n", result.tree.to_bracketed()),
        )?;
    }
    writeln!(
        out,
        "parsed {} documents with beam {beam} into {}",
        corpus.documents.len(),
        dir.display()
    )?;
    Ok(())
}

/// Score a directory of predicted trees against a directory of gold trees,
/// matched by file name.
pub fn eval(pred: &Path, gold: &Path, out: &mut dyn Write) -> Result<Scores, CliError> {
    let gold_files = list_brackets(gold)?;
    if gold_files.is_empty() {
        return Err(CliError::Data(format!(
            "no .brackets files in `{}`",
            gold.display()
        )));
    }
    let mut predicted = Vec::with_capacity(gold_files.len());
    let mut golds = Vec::with_capacity(gold_files.len());
    for gold_file in &gold_files {
        let name = gold_file.file_name().expect("listing returned files");
        let pred_file = pred.join(name);
        if !pred_file.is_file() {
            return Err(CliError::Data(format!(
                "no prediction for `{}` in `{}`",
                name.to_string_lossy(),
                pred.display()
            )));
        }
        golds.push(read_tree(gold_file)?);
        predicted.push(read_tree(&pred_file)?);
    }
    let scores = score(&predicted, &golds)?;
    writeln!(out, "{} documents", gold_files.len())?;
    writeln!(out, "{scores}")?;
    Ok(scores)
}

fn list_brackets(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| data_err(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| data_err(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "brackets") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn read_tree(path: &Path) -> Result<RstTree, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    RstTree::from_bracketed(text.trim()).map_err(|e: TreeError| data_err(path, e))
}

/// Most-frequent-structure baseline: right-branching trees labeled with the
/// modal (nuclearity, relation) of the train split, scored on the test
/// split.
pub fn baseline(
    manifest: &Path,
    seed: u64,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Scores, CliError> {
    let mut log = AccessLog::new();
    let docs = load_harmonized_corpus(manifest, &mut log)?.documents;
    let split = split_corpus(&docs, seed)?;

    let train_trees: Vec<RstTree> = split
        .train
        .iter()
        .filter_map(|&i| docs[i].gold.clone())
        .collect();
    let (pattern, relation) = if train_trees.is_empty() {
        // No training material: fall back to the per-language default.
        default_mfs_label(&docs[split.test[0]].language)
    } else {
        most_frequent_label(&train_trees)?
    };
    writeln!(out, "label {}-{}", pattern.name(), relation.name())?;

    let mut predicted = Vec::with_capacity(split.test.len());
    let mut golds = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let doc = &docs[i];
        golds.push(doc.gold.clone().ok_or_else(|| {
            CliError::Data(format!("document `{}` has no gold tree", doc.id))
        })?);
        predicted.push(mfs_baseline(doc, pattern, relation));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
        for (&i, tree) in split.test.iter().zip(&predicted) {
            let stem = id_stem(&docs[i].id)?;
            write_text(
                &dir.join(format!("{stem}.brackets")),
                &format!("{}\n", tree.to_bracketed()),
            )?;
        }
    }
    let scores = score(&predicted, &golds)?;
    writeln!(out, "test documents {}", split.test.len())?;
    writeln!(out, "{scores}")?;
    Ok(scores)
}

/// Verify that every gold tree's oracle action sequence replays back into
/// the identical tree. A failure is a broken invariant (exit code 3).
pub fn oracle_check(manifest: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let mut log = AccessLog::new();
    let docs = load_harmonized_corpus(manifest, &mut log)?.documents;
    let mut passed = 0usize;
    let mut total = 0usize;
    for doc in &docs {
        let Some(gold) = &doc.gold else {
            writeln!(out, "{}: skipped (no gold tree)", doc.id)?;
            continue;
        };
        total += 1;
        let n = doc.n_edus();
        let ok = match oracle(gold) {
            Ok(actions) => {
                actions.len() == 2 * n - 1
                    && replay(&actions, n).map(|t| t == *gold).unwrap_or(false)
            }
            Err(_) => false,
        };
        writeln!(out, "{}: {}", doc.id, if ok { "ok" } else { "FAIL" })?;
        passed += usize::from(ok);
    }
    writeln!(out, "{passed}/{total} round-trips pass")?;
    if passed == total {
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "{} oracle round-trips failed",
            total - passed
        )))
    }
}

/// Report how much of the corpus vocabulary a bilingual dictionary covers.
pub fn coverage(
    manifest: &Path,
    dictionaries: &[PathBuf],
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut log = AccessLog::new();
    let docs = load_harmonized_corpus(manifest, &mut log)?.documents;
    let dict = load_merged_dictionary(dictionaries, &mut log)?
        .ok_or_else(|| CliError::Usage("coverage needs at least one --dictionary".into()))?;
    let report = coverage_report(&docs, &dict);
    writeln!(out, "{report}")?;
    Ok(())
}
