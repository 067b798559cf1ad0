//! Corpus manifests: batch-loading raw treebanks into documents and
//! reading/writing the harmonized on-disk corpus layout.
//!
//! A *raw* manifest is a TSV file with one document per line:
//!
//! ```text
//! id<TAB>tree-file<TAB>conllu-file<TAB>language
//! ```
//!
//! A *harmonized* manifest (written by [`write_harmonized_corpus`]) adds an
//! EDU-text column and allows `-` as the tree file for unannotated input:
//!
//! ```text
//! id<TAB>tree-file-or-dash<TAB>edus-file<TAB>conllu-file<TAB>language
//! ```
//!
//! Paths are resolved relative to the manifest's directory; blank lines and
//! `#` comments are skipped. Every file read goes through an [`AccessLog`],
//! so callers can prove which files an experiment touched.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::doc::Document;
use crate::doc::Token;
use crate::doc::TokenHead;
use crate::harmonize::{harmonize_document, CorpusStats, HarmonizeError, LabelMapping};
use crate::ingest::{
    align_edus, derive_nuclearity, lift_relations, load_conllu, normalize_raw, parse_dis,
    parse_lisp, parse_rs3, IngestError, RawNode, Rs3Options, TreeFormat,
};
use crate::tree::RstTree;

/// Record of every file read while loading corpora.
#[derive(Clone, Default, Debug)]
pub struct AccessLog {
    paths: Vec<PathBuf>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Paths in the order they were read (repeats included).
    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    /// Read a file to a string, recording the access.
    pub fn read(&mut self, path: &Path) -> Result<String, CorpusError> {
        self.paths.push(path.to_path_buf());
        fs::read_to_string(path).map_err(|source| CorpusError::Unreadable {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// One line of a raw-corpus manifest.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ManifestEntry {
    pub id: String,
    pub tree: PathBuf,
    pub conllu: PathBuf,
    pub language: String,
}

/// One line of a harmonized-corpus manifest. `tree` is `None` for documents
/// listed with `-` (input to parse, nothing to score against).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HarmonizedEntry {
    pub id: String,
    pub tree: Option<PathBuf>,
    pub edus: PathBuf,
    pub conllu: PathBuf,
    pub language: String,
}

/// Result of loading a corpus: the usable documents plus per-corpus counts
/// (skipped documents are listed in the stats, repairs in `warnings`).
#[derive(Clone, Debug)]
pub struct LoadOutcome {
    pub documents: Vec<Document>,
    pub stats: CorpusStats,
    /// Non-fatal repair notes, formatted `id: note`.
    pub warnings: Vec<String>,
}

/// Read a raw-corpus manifest (4 tab-separated columns).
pub fn read_manifest(path: &Path, log: &mut AccessLog) -> Result<Vec<ManifestEntry>, CorpusError> {
    let rows = read_rows(path, log, 4)?;
    Ok(rows
        .into_iter()
        .map(|(fields, base)| ManifestEntry {
            id: fields[0].clone(),
            tree: base.join(&fields[1]),
            conllu: base.join(&fields[2]),
            language: fields[3].clone(),
        })
        .collect())
}

/// Read a harmonized-corpus manifest (5 tab-separated columns, `-` = no tree).
pub fn read_harmonized_manifest(
    path: &Path,
    log: &mut AccessLog,
) -> Result<Vec<HarmonizedEntry>, CorpusError> {
    let rows = read_rows(path, log, 5)?;
    Ok(rows
        .into_iter()
        .map(|(fields, base)| HarmonizedEntry {
            id: fields[0].clone(),
            tree: (fields[1] != "-").then(|| base.join(&fields[1])),
            edus: base.join(&fields[2]),
            conllu: base.join(&fields[3]),
            language: fields[4].clone(),
        })
        .collect())
}

/// Shared manifest scanner: returns the fields of each data line together
/// with the base directory for resolving relative paths.
fn read_rows(
    path: &Path,
    log: &mut AccessLog,
    columns: usize,
) -> Result<Vec<(Vec<String>, PathBuf)>, CorpusError> {
    let content = log.read(path)?;
    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw_line) in content.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(|f| f.trim().to_string()).collect();
        let err = |msg: String| CorpusError::BadManifestLine {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        if fields.len() != columns {
            return Err(err(format!(
                "expected {columns} tab-separated fields, found {}",
                fields.len()
            )));
        }
        if let Some(empty) = fields.iter().position(String::is_empty) {
            return Err(err(format!("field {} is empty", empty + 1)));
        }
        if !seen.insert(fields[0].clone()) {
            return Err(err(format!("duplicate document id `{}`", fields[0])));
        }
        rows.push((fields, base.clone()));
    }
    if rows.is_empty() {
        return Err(CorpusError::EmptyManifest {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

/// Load every document of a raw manifest: parse the tree file, harmonize it,
/// load the token layer, and align EDUs to tokens.
///
/// Documents whose *content* is unusable (malformed tree, unmapped relation,
/// misaligned tokens) are skipped and listed in the returned stats; missing
/// or unreadable files abort the whole load, as does a corpus in which no
/// document survives.
pub fn load_raw_corpus(
    manifest: &Path,
    mapping: &LabelMapping,
    log: &mut AccessLog,
) -> Result<LoadOutcome, CorpusError> {
    let entries = read_manifest(manifest, log)?;
    let mut documents = Vec::new();
    let mut stats = CorpusStats::new();
    let mut warnings = Vec::new();
    for entry in &entries {
        let tree_path = entry.tree.to_string_lossy();
        let format =
            TreeFormat::from_extension(&tree_path).ok_or_else(|| CorpusError::UnknownFormat {
                path: entry.tree.clone(),
            })?;
        let tree_text = log.read(&entry.tree)?;
        let conllu_text = log.read(&entry.conllu)?;
        match build_document(entry, format, &tree_text, &conllu_text, mapping) {
            Ok((doc, notes)) => {
                // Raw loading always produces a gold tree.
                stats.add_tree(doc.gold.as_ref().expect("raw documents carry gold"));
                warnings.extend(notes.into_iter().map(|n| format!("{}: {n}", entry.id)));
                documents.push(doc);
            }
            Err(reason) => stats.add_skipped(&entry.id, reason.to_string()),
        }
    }
    if documents.is_empty() {
        return Err(CorpusError::NoUsableDocuments {
            path: manifest.to_path_buf(),
            skipped: stats.skipped,
        });
    }
    Ok(LoadOutcome {
        documents,
        stats,
        warnings,
    })
}

/// Per-document failure while building from raw files; callers skip the
/// document and keep the message.
#[derive(Debug, Error)]
enum BuildError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Harmonize(#[from] HarmonizeError),
    #[error(transparent)]
    Doc(#[from] crate::doc::DocError),
}

fn build_document(
    entry: &ManifestEntry,
    format: TreeFormat,
    tree_text: &str,
    conllu_text: &str,
    mapping: &LabelMapping,
) -> Result<(Document, Vec<String>), BuildError> {
    let mut notes = Vec::new();
    let root = match format {
        TreeFormat::Dis => finish_raw(parse_dis(tree_text)?)?,
        TreeFormat::Lisp => finish_raw(parse_lisp(tree_text)?)?,
        TreeFormat::Rs3 => {
            // German corpora store the document title in the first segment,
            // outside the tree proper; drop it on the way in.
            let options = Rs3Options {
                drop_first_segment: entry.language == "de",
            };
            let parse = parse_rs3(tree_text, options)?;
            notes = parse.warnings;
            let mut root = parse.root;
            derive_nuclearity(&mut root, &parse.table)?;
            finish_raw(root)?
        }
    };
    let gold = harmonize_document(&root, mapping)?;
    let edu_texts: Vec<String> = root.leaves().iter().map(|l| l.text.clone()).collect();
    let tokens = load_conllu(conllu_text)?;
    let edus = align_edus(&edu_texts, &tokens).map_err(IngestError::from)?;
    let spans = edus.iter().map(|e| e.token_span.clone()).collect();
    let doc = Document::new(&entry.id, &entry.language, edu_texts, tokens, spans, Some(gold))?;
    Ok((doc, notes))
}

fn finish_raw(mut root: RawNode) -> Result<RawNode, IngestError> {
    lift_relations(&mut root)?;
    normalize_raw(root)
}

/// Write documents as a harmonized corpus under `dir`: per document a
/// `.brackets` tree (omitted when there is no gold), a `.edus` text file
/// (one EDU per line; internal line breaks become spaces), and a `.conllu`
/// token layer — plus a `manifest.tsv` tying them together.
///
/// Returns the manifest path.
pub fn write_harmonized_corpus(dir: &Path, documents: &[Document]) -> Result<PathBuf, CorpusError> {
    let write = |path: PathBuf, content: &str| -> Result<(), CorpusError> {
        fs::write(&path, content).map_err(|source| CorpusError::Unwritable { path, source })
    };
    fs::create_dir_all(dir).map_err(|source| CorpusError::Unwritable {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = String::from("# id\ttree\tedus\tconllu\tlanguage\n");
    for doc in documents {
        let id = &doc.id;
        if id.is_empty() || id.contains(['/', '\\', '\t', '\n']) {
            return Err(CorpusError::BadDocumentId { id: id.clone() });
        }
        let tree_field = match &doc.gold {
            Some(gold) => {
                let name = format!("{id}.brackets");
                write(dir.join(&name), &format!("{}\n", gold.to_bracketed()))?;
                name
            }
            None => "-".to_string(),
        };
        let edus: String = doc
            .edus
            .iter()
            .map(|e| format!("{}\n", e.text.replace(['\n', '\r', '\t'], " ")))
            .collect();
        write(dir.join(format!("{id}.edus")), &edus)?;
        write(dir.join(format!("{id}.conllu")), &write_conllu(&doc.tokens))?;
        manifest.push_str(&format!(
            "{id}\t{tree_field}\t{id}.edus\t{id}.conllu\t{}\n",
            doc.language
        ));
    }
    let path = dir.join("manifest.tsv");
    write(path.clone(), &manifest)?;
    Ok(path)
}

/// Serialize tokens as CoNLL-U, one sentence per block, heads rebased to
/// sentence-local ids. Inverse of [`load_conllu`] for validated documents
/// (heads never cross sentences).
pub fn write_conllu(tokens: &[Token]) -> String {
    let mut out = String::new();
    let mut start = 0; // absolute index of the current sentence's first token
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && tok.sentence != tokens[i - 1].sentence {
            out.push('\n');
            start = i;
        }
        let head = match tok.head {
            TokenHead::Root => 0,
            TokenHead::Index(h) => {
                assert!(h >= start, "token {i} has a head before its sentence");
                h - start + 1
            }
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t_\t_\t{head}\t_\t_\t_\n",
            i - start + 1,
            tok.form,
            tok.lemma,
            tok.pos
        ));
    }
    out
}

/// Load a harmonized corpus. Unlike raw loading, any damage here is a hard
/// error: these files were machine-written, so a bad one means the pipeline
/// is broken, not that an annotator was sloppy.
pub fn load_harmonized_corpus(
    manifest: &Path,
    log: &mut AccessLog,
) -> Result<LoadOutcome, CorpusError> {
    let entries = read_harmonized_manifest(manifest, log)?;
    let mut documents = Vec::new();
    let mut stats = CorpusStats::new();
    for entry in &entries {
        let damaged = |msg: String| CorpusError::Damaged {
            id: entry.id.clone(),
            msg,
        };
        let gold = match &entry.tree {
            Some(path) => {
                let text = log.read(path)?;
                Some(RstTree::from_bracketed(text.trim()).map_err(|e| damaged(e.to_string()))?)
            }
            None => None,
        };
        let edu_texts: Vec<String> = log.read(&entry.edus)?.lines().map(str::to_string).collect();
        let tokens =
            load_conllu(&log.read(&entry.conllu)?).map_err(|e| damaged(e.to_string()))?;
        let edus = align_edus(&edu_texts, &tokens).map_err(|e| damaged(e.to_string()))?;
        let spans = edus.iter().map(|e| e.token_span.clone()).collect();
        let doc = Document::new(&entry.id, &entry.language, edu_texts, tokens, spans, gold)
            .map_err(|e| damaged(e.to_string()))?;
        if let Some(gold) = &doc.gold {
            stats.add_tree(gold);
        }
        documents.push(doc);
    }
    Ok(LoadOutcome {
        documents,
        stats,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read `{}`: {source}", path.display())]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write `{}`: {source}", path.display())]
    Unwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    BadManifestLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("manifest `{}` lists no documents", path.display())]
    EmptyManifest { path: PathBuf },
    #[error("`{}` has no recognized tree-file extension", path.display())]
    UnknownFormat { path: PathBuf },
    #[error("none of the {} documents in `{}` survived ingestion", skipped.len(), path.display())]
    NoUsableDocuments {
        path: PathBuf,
        skipped: Vec<(String, String)>,
    },
    #[error("document id `{id}` cannot name corpus files")]
    BadDocumentId { id: String },
    #[error("harmonized document `{id}` is damaged: {msg}")]
    Damaged { id: String, msg: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::tests::tok;
    use tempfile::TempDir;

    const GOOD_DIS: &str = r#"
( Root (span 1 3)
  ( Nucleus (span 1 2) (rel2par span)
    ( Nucleus (leaf 1) (rel2par Comparison) (text _!The dollar rose,!_) )
    ( Nucleus (leaf 2) (rel2par Comparison) (text _!while the yen fell.!_) )
  )
  ( Satellite (leaf 3) (rel2par attribution-e) (text _!traders said.!_) )
)
"#;

    const GOOD_CONLLU: &str = "\
1\tThe\tthe\tDET\t_\t_\t2\t_\t_\t_
2\tdollar\tdollar\tNOUN\t_\t_\t3\t_\t_\t_
3\trose\trise\tVERB\t_\t_\t0\t_\t_\t_
4\t,\t,\tPUNCT\t_\t_\t3\t_\t_\t_

1\twhile\twhile\tSCONJ\t_\t_\t4\t_\t_\t_
2\tthe\tthe\tDET\t_\t_\t3\t_\t_\t_
3\tyen\tyen\tNOUN\t_\t_\t4\t_\t_\t_
4\tfell\tfall\tVERB\t_\t_\t0\t_\t_\t_
5\t.\t.\tPUNCT\t_\t_\t4\t_\t_\t_

1\ttraders\ttrader\tNOUN\t_\t_\t2\t_\t_\t_
2\tsaid\tsay\tVERB\t_\t_\t0\t_\t_\t_
3\t.\t.\tPUNCT\t_\t_\t2\t_\t_\t_
";

    /// First segment is linked into the tree, so the title rule must reject
    /// the document when it applies.
    const LINKED_FIRST_RS3: &str = r#"<rst>
  <header><relations><rel name="cause" type="rst"/></relations></header>
  <body>
    <segment id="1">It broke</segment>
    <segment id="2" parent="1" relname="cause">because it fell.</segment>
  </body>
</rst>
"#;

    const LINKED_FIRST_CONLLU: &str = "\
1\tIt\tit\tPRON\t_\t_\t2\t_\t_\t_
2\tbroke\tbreak\tVERB\t_\t_\t0\t_\t_\t_

1\tbecause\tbecause\tSCONJ\t_\t_\t3\t_\t_\t_
2\tit\tit\tPRON\t_\t_\t3\t_\t_\t_
3\tfell\tfall\tVERB\t_\t_\t0\t_\t_\t_
4\t.\t.\tPUNCT\t_\t_\t3\t_\t_\t_
";

    fn write(dir: &TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, content).unwrap();
        path
    }

    fn dis_corpus() -> (TempDir, PathBuf) {
        let dir = TempDir::new().unwrap();
        write(&dir, "doc1.dis", GOOD_DIS);
        write(&dir, "doc1.conllu", GOOD_CONLLU);
        let manifest = write(
            &dir,
            "manifest.tsv",
            "# three-EDU fixture\ndoc1\tdoc1.dis\tdoc1.conllu\ten\n",
        );
        (dir, manifest)
    }

    #[test]
    fn a_dis_corpus_loads_end_to_end() {
        let (_dir, manifest) = dis_corpus();
        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();

        assert_eq!(outcome.documents.len(), 1);
        assert!(outcome.warnings.is_empty());
        let doc = &outcome.documents[0];
        assert_eq!(doc.id, "doc1");
        assert_eq!(doc.language, "en");
        assert_eq!(doc.n_edus(), 3);
        assert_eq!(
            doc.gold.as_ref().unwrap().to_bracketed(),
            "(NS-Attribution (NN-Comparison (EDU 1) (EDU 2)) (EDU 3))"
        );
        // Tokens landed on the right EDUs.
        assert_eq!(doc.edu_tokens(0).len(), 4);
        assert_eq!(doc.edu_tokens(2)[0].form, "traders");

        assert_eq!(outcome.stats.trees, 1);
        assert_eq!(outcome.stats.edus, 3);
        assert_eq!(outcome.stats.cdus, 2);
        assert!(outcome.stats.skipped.is_empty());
    }

    #[test]
    fn rs3_corpora_resolve_nuclearity_on_the_way_in() {
        let dir = TempDir::new().unwrap();
        write(
            &dir,
            "d.rs3",
            r#"<rst>
  <header>
    <relations>
      <rel name="motivation" type="rst" />
      <rel name="list" type="multinuc" />
    </relations>
  </header>
  <body>
    <segment id="t">Der Titel</segment>
    <segment id="1" parent="500" relname="list">Eins,</segment>
    <segment id="2" parent="500" relname="list">zwei.</segment>
    <segment id="3" parent="500" relname="motivation">Darum.</segment>
    <group id="500" type="multinuc" parent="1000" relname="span" />
    <group id="1000" type="span" />
  </body>
</rst>
"#,
        );
        write(
            &dir,
            "d.conllu",
            "1\tEins\teins\tNUM\t_\t_\t0\t_\t_\t_\n\
             2\t,\t,\tPUNCT\t_\t_\t1\t_\t_\t_\n\n\
             1\tzwei\tzwei\tNUM\t_\t_\t0\t_\t_\t_\n\
             2\t.\t.\tPUNCT\t_\t_\t1\t_\t_\t_\n\n\
             1\tDarum\tdarum\tADV\t_\t_\t0\t_\t_\t_\n\
             2\t.\t.\tPUNCT\t_\t_\t1\t_\t_\t_\n",
        );
        let manifest = write(&dir, "manifest.tsv", "d\td.rs3\td.conllu\tde\n");

        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
        let doc = &outcome.documents[0];
        assert_eq!(
            doc.gold.as_ref().unwrap().to_bracketed(),
            "(NS-Explanation (NN-Joint (EDU 1) (EDU 2)) (EDU 3))"
        );
        assert_eq!(doc.edus[1].text, "zwei.");
        // The dropped title shows up as a repair note, not a skip.
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].starts_with("d: "));
        assert!(outcome.warnings[0].contains("title"));
    }

    #[test]
    fn the_title_rule_applies_only_to_german() {
        let dir = TempDir::new().unwrap();
        write(&dir, "x.rs3", LINKED_FIRST_RS3);
        write(&dir, "x.conllu", LINKED_FIRST_CONLLU);
        let manifest = write(
            &dir,
            "manifest.tsv",
            "a\tx.rs3\tx.conllu\ten\nb\tx.rs3\tx.conllu\tde\n",
        );

        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
        // English keeps the document; German tries to drop the first segment
        // as a title, finds it linked, and skips the document.
        assert_eq!(outcome.documents.len(), 1);
        assert_eq!(outcome.documents[0].id, "a");
        assert_eq!(outcome.stats.skipped.len(), 1);
        assert_eq!(outcome.stats.skipped[0].0, "b");
        assert!(outcome.stats.skipped[0].1.contains("title"));
    }

    #[test]
    fn broken_documents_are_skipped_and_listed() {
        let (dir, _) = dis_corpus();
        write(
            &dir,
            "doc2.dis",
            "( Root ( Nucleus (leaf 1) (rel2par FooBar) (text _!x!_) ) \
             ( Satellite (leaf 2) (rel2par FooBar) (text _!y!_) ) )",
        );
        write(
            &dir,
            "doc2.conllu",
            "1\tx\tx\tX\t_\t_\t0\t_\t_\t_\n\n1\ty\ty\tX\t_\t_\t0\t_\t_\t_\n",
        );
        let manifest = write(
            &dir,
            "both.tsv",
            "doc1\tdoc1.dis\tdoc1.conllu\ten\ndoc2\tdoc2.dis\tdoc2.conllu\ten\n",
        );

        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
        assert_eq!(outcome.documents.len(), 1);
        assert_eq!(outcome.stats.docs(), 2);
        assert_eq!(outcome.stats.skipped.len(), 1);
        let (id, reason) = &outcome.stats.skipped[0];
        assert_eq!(id, "doc2");
        assert!(reason.contains("FooBar"), "reason was: {reason}");
    }

    #[test]
    fn a_corpus_where_every_document_fails_is_an_error() {
        let dir = TempDir::new().unwrap();
        write(&dir, "bad.dis", "( Root ( Nucleus (leaf 1) (rel2par NoSuchRel) (text _!x!_) ) ( Satellite (leaf 2) (rel2par NoSuchRel) (text _!y!_) ) )");
        write(
            &dir,
            "bad.conllu",
            "1\tx\tx\tX\t_\t_\t0\t_\t_\t_\n\n1\ty\ty\tX\t_\t_\t0\t_\t_\t_\n",
        );
        let manifest = write(&dir, "manifest.tsv", "bad\tbad.dis\tbad.conllu\ten\n");

        let mut log = AccessLog::new();
        match load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log) {
            Err(CorpusError::NoUsableDocuments { skipped, .. }) => {
                assert_eq!(skipped.len(), 1);
                assert_eq!(skipped[0].0, "bad");
            }
            other => panic!("expected NoUsableDocuments, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_files_stop_the_load() {
        let dir = TempDir::new().unwrap();
        write(&dir, "doc1.conllu", GOOD_CONLLU);
        let manifest = write(&dir, "manifest.tsv", "doc1\tmissing.dis\tdoc1.conllu\ten\n");

        let mut log = AccessLog::new();
        match load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log) {
            Err(CorpusError::Unreadable { path, .. }) => {
                assert!(path.ends_with("missing.dis"));
            }
            other => panic!("expected Unreadable, got {other:?}"),
        }
    }

    #[test]
    fn an_empty_manifest_is_an_error() {
        let dir = TempDir::new().unwrap();
        let manifest = write(&dir, "manifest.tsv", "# only comments\n\n");
        let mut log = AccessLog::new();
        assert!(matches!(
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log),
            Err(CorpusError::EmptyManifest { .. })
        ));
    }

    #[test]
    fn malformed_manifest_rows_are_rejected() {
        let dir = TempDir::new().unwrap();
        let mut log = AccessLog::new();

        let short = write(&dir, "short.tsv", "doc1\tonly\tthree\n");
        match read_manifest(&short, &mut log) {
            Err(CorpusError::BadManifestLine { line: 1, msg, .. }) => {
                assert!(msg.contains("found 3"), "msg was: {msg}");
            }
            other => panic!("expected BadManifestLine, got {other:?}"),
        }

        let dup = write(
            &dir,
            "dup.tsv",
            "doc1\ta.dis\ta.conllu\ten\ndoc1\tb.dis\tb.conllu\ten\n",
        );
        match read_manifest(&dup, &mut log) {
            Err(CorpusError::BadManifestLine { line: 2, msg, .. }) => {
                assert!(msg.contains("duplicate"), "msg was: {msg}");
            }
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_paths_resolve_relative_to_the_manifest() {
        let dir = TempDir::new().unwrap();
        fs::create_dir(dir.path().join("trees")).unwrap();
        fs::create_dir(dir.path().join("meta")).unwrap();
        write(&dir, "trees/doc1.dis", GOOD_DIS);
        write(&dir, "trees/doc1.conllu", GOOD_CONLLU);
        let manifest = write(
            &dir,
            "meta/manifest.tsv",
            "doc1\t../trees/doc1.dis\t../trees/doc1.conllu\ten\n",
        );

        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
        assert_eq!(outcome.documents.len(), 1);
    }

    #[test]
    fn every_file_read_lands_in_the_access_log() {
        let (dir, manifest) = dis_corpus();
        let mut log = AccessLog::new();
        load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
        let expected = vec![
            manifest.clone(),
            dir.path().join("doc1.dis"),
            dir.path().join("doc1.conllu"),
        ];
        assert_eq!(log.paths(), expected.as_slice());
    }

    #[test]
    fn written_conllu_reloads_identically() {
        let tokens = vec![
            tok("He", "PRON", TokenHead::Index(1), 0),
            tok("left", "VERB", TokenHead::Root, 0),
            tok(".", "PUNCT", TokenHead::Index(1), 0),
            tok("It", "PRON", TokenHead::Index(4), 1),
            tok("rained", "VERB", TokenHead::Root, 1),
        ];
        let text = write_conllu(&tokens);
        assert_eq!(load_conllu(&text).unwrap(), tokens);
    }

    #[test]
    fn harmonized_corpora_round_trip() {
        let (_dir, manifest) = dis_corpus();
        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();

        let out = TempDir::new().unwrap();
        let harmonized = write_harmonized_corpus(out.path(), &outcome.documents).unwrap();
        assert_eq!(harmonized, out.path().join("manifest.tsv"));

        let reloaded = load_harmonized_corpus(&harmonized, &mut log).unwrap();
        assert_eq!(reloaded.documents, outcome.documents);
        assert_eq!(reloaded.stats.trees, 1);
    }

    #[test]
    fn documents_without_gold_write_a_dash_and_reload() {
        let doc = Document::new(
            "raw-input",
            "en",
            vec!["He left".into()],
            vec![
                tok("He", "PRON", TokenHead::Index(1), 0),
                tok("left", "VERB", TokenHead::Root, 0),
            ],
            vec![0..2],
            None,
        )
        .unwrap();

        let out = TempDir::new().unwrap();
        let manifest = write_harmonized_corpus(out.path(), std::slice::from_ref(&doc)).unwrap();
        let text = fs::read_to_string(&manifest).unwrap();
        assert!(text.contains("raw-input\t-\t"), "manifest was: {text}");

        let mut log = AccessLog::new();
        let reloaded = load_harmonized_corpus(&manifest, &mut log).unwrap();
        assert_eq!(reloaded.documents, vec![doc]);
        assert_eq!(reloaded.stats.trees, 0);
    }

    #[test]
    fn damaged_harmonized_corpora_fail_loudly() {
        let (_dir, manifest) = dis_corpus();
        let mut log = AccessLog::new();
        let outcome =
            load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
        let out = TempDir::new().unwrap();
        let harmonized = write_harmonized_corpus(out.path(), &outcome.documents).unwrap();

        fs::write(out.path().join("doc1.brackets"), "(EDU 1").unwrap();
        match load_harmonized_corpus(&harmonized, &mut log) {
            Err(CorpusError::Damaged { id, .. }) => assert_eq!(id, "doc1"),
            other => panic!("expected Damaged, got {other:?}"),
        }
    }
}
