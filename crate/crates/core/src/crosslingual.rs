//! Lexical transfer for training across languages: bilingual-dictionary
//! translation of word features into English, and cross-lingual word-embedding
//! lookup with an average vector for unknown words.

use std::collections::HashMap;
use std::fmt;

use rust_stemmers::{Algorithm, Stemmer};
use thiserror::Error;

use crate::doc::{Document, Token};
use crate::features::{Symbol, SymbolKind, WordMapper};

/// Word-for-word dictionary from one source language into English. No sense
/// disambiguation: when a source word is listed several times, the first
/// entry in file order wins.
#[derive(Debug)]
pub struct BilingualDictionary {
    /// Exact-case entries, consulted first.
    exact: HashMap<String, String>,
    /// Lowercased entries (also first-wins in file order), the fallback pass.
    lower: HashMap<String, String>,
}

impl BilingualDictionary {
    /// Parse tab-separated `source<TAB>english` lines. Empty lines are
    /// skipped.
    pub fn from_tsv(text: &str) -> Result<BilingualDictionary, CrossError> {
        let mut exact = HashMap::new();
        let mut lower = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (source, english) = line
                .split_once('\t')
                .ok_or(CrossError::BadDictionaryLine { line: i + 1 })?;
            let source = source.trim();
            let english = english.trim();
            if source.is_empty() || english.is_empty() {
                return Err(CrossError::BadDictionaryLine { line: i + 1 });
            }
            exact
                .entry(source.to_string())
                .or_insert_with(|| english.to_string());
            lower
                .entry(source.to_lowercase())
                .or_insert_with(|| english.to_string());
        }
        Ok(BilingualDictionary { exact, lower })
    }

    /// Number of distinct source words.
    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    /// Translation of one word: exact-case entry first, lowercased entry as
    /// fallback.
    pub fn lookup(&self, word: &str) -> Option<&str> {
        self.exact
            .get(word)
            .or_else(|| self.lower.get(&word.to_lowercase()))
            .map(String::as_str)
    }

    /// Backoff chain `token → lemma → stem`; the first hit wins and the
    /// original token is kept when nothing is found.
    pub fn translate(&self, token: &str, lemma: &str, stem: Option<&str>) -> String {
        self.lookup(token)
            .or_else(|| self.lookup(lemma))
            .or_else(|| stem.and_then(|s| self.lookup(s)))
            .unwrap_or(token)
            .to_string()
    }

    /// Like [`BilingualDictionary::translate`] but reporting a miss instead
    /// of falling back, for coverage counting.
    fn translate_opt(&self, token: &str, lemma: &str, stem: Option<&str>) -> Option<&str> {
        self.lookup(token)
            .or_else(|| self.lookup(lemma))
            .or_else(|| stem.and_then(|s| self.lookup(s)))
    }
}

/// Snowball stemmer for the languages that have one; Basque does not.
pub fn stemmer_for(language: &str) -> Option<Stemmer> {
    let algorithm = match language {
        "en" => Algorithm::English,
        "pt" => Algorithm::Portuguese,
        "es" => Algorithm::Spanish,
        "de" => Algorithm::German,
        "nl" => Algorithm::Dutch,
        _ => return None,
    };
    Some(Stemmer::create(algorithm))
}

/// Word mapper that rewrites word features into English through a bilingual
/// dictionary, stemming with the document language's stemmer when one exists.
pub struct TranslatingMapper<'a> {
    dict: &'a BilingualDictionary,
    stemmers: HashMap<&'static str, Stemmer>,
}

impl<'a> TranslatingMapper<'a> {
    pub fn new(dict: &'a BilingualDictionary) -> TranslatingMapper<'a> {
        let mut stemmers = HashMap::new();
        for language in ["en", "pt", "es", "de", "nl"] {
            stemmers.insert(language, stemmer_for(language).unwrap());
        }
        TranslatingMapper { dict, stemmers }
    }
}

impl WordMapper for TranslatingMapper<'_> {
    fn map(&self, token: &Token, language: &str) -> String {
        let stem = self
            .stemmers
            .get(language)
            .map(|s| s.stem(&token.form.to_lowercase()).into_owned());
        self.dict.translate(&token.form, &token.lemma, stem.as_deref())
    }
}

/// Fixed word-embedding table plus the average of all its vectors, used for
/// out-of-vocabulary words.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// Row-major `words.len() × dim`.
    vectors: Vec<f64>,
    average: Vec<f64>,
}

impl EmbeddingTable {
    /// Vectors are truncated to this many leading dimensions by
    /// [`EmbeddingTable::load`].
    pub const DEFAULT_DIM: usize = 50;

    /// Parse the text format (`<vocab_size> <dim>` header, then one
    /// `word v1 … v_dim` line per word), keeping [`Self::DEFAULT_DIM`]
    /// leading dimensions.
    pub fn load(text: &str) -> Result<EmbeddingTable, CrossError> {
        EmbeddingTable::from_text(text, EmbeddingTable::DEFAULT_DIM)
    }

    /// Parse the text format keeping at most `max_dim` leading dimensions.
    pub fn from_text(text: &str, max_dim: usize) -> Result<EmbeddingTable, CrossError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(CrossError::BadEmbeddingHeader)?;
        let mut parts = header.split_whitespace();
        let declared: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or(CrossError::BadEmbeddingHeader)?;
        let source_dim: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or(CrossError::BadEmbeddingHeader)?;
        if parts.next().is_some() || source_dim == 0 || max_dim == 0 {
            return Err(CrossError::BadEmbeddingHeader);
        }
        let dim = source_dim.min(max_dim);

        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut vectors = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap();
            let mut row = Vec::with_capacity(source_dim);
            for field in fields {
                let v: f64 = field.parse().map_err(|_| CrossError::BadEmbeddingLine {
                    line: i + 1,
                    msg: format!("bad float {field:?}"),
                })?;
                row.push(v);
            }
            if row.len() != source_dim {
                return Err(CrossError::BadEmbeddingLine {
                    line: i + 1,
                    msg: format!("expected {} components, found {}", source_dim, row.len()),
                });
            }
            // Duplicate words keep their first vector, like the dictionary.
            if index.contains_key(word) {
                continue;
            }
            row.truncate(dim);
            index.insert(word.to_string(), words.len());
            words.push(word.to_string());
            vectors.extend_from_slice(&row);
        }
        if words.is_empty() {
            return Err(CrossError::EmptyEmbedding);
        }
        if words.len() != declared {
            return Err(CrossError::EmbeddingCount {
                declared,
                actual: words.len(),
            });
        }

        let mut average = vec![0.0; dim];
        for row in vectors.chunks_exact(dim) {
            for (a, v) in average.iter_mut().zip(row) {
                *a += v;
            }
        }
        for a in &mut average {
            *a /= words.len() as f64;
        }

        Ok(EmbeddingTable {
            dim,
            words,
            index,
            vectors,
            average,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of words in the table.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// The word's row, if present.
    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// The word's row, or the average vector for unknown words.
    pub fn embed(&self, word: &str) -> &[f64] {
        self.vector(word).unwrap_or(&self.average)
    }

    /// Arithmetic mean of all rows.
    pub fn average(&self) -> &[f64] {
        &self.average
    }

    /// Serialize back to the text format. Floats are written in shortest
    /// round-trip notation, so load→save→load is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.words.len(), self.dim));
        for (i, word) in self.words.iter().enumerate() {
            out.push_str(word);
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Concatenation of the vectors for an EDU's word slots, in slot order; NONE
/// slots contribute zero vectors. With the 7 word slots per EDU and 50-dim
/// vectors the result has 350 dimensions.
pub fn edu_word_vector(slots: &[Symbol], table: &EmbeddingTable) -> Vec<f64> {
    let mut out = Vec::new();
    for symbol in slots {
        if symbol.kind != SymbolKind::Word {
            continue;
        }
        match &symbol.value {
            Some(word) => out.extend_from_slice(table.embed(word)),
            None => out.extend(std::iter::repeat(0.0).take(table.dim())),
        }
    }
    out
}

/// Dictionary coverage over a corpus: distinct token forms and how many of
/// them stay untranslated after the full token → lemma → stem backoff.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct CoverageReport {
    pub dict_size: usize,
    pub word_types: usize,
    pub unknown_types: usize,
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10}  {:>8}  {:>12}", "Size dict.", "# words", "# unk. words")?;
        write!(
            f,
            "{:>10}  {:>8}  {:>12}",
            self.dict_size, self.word_types, self.unknown_types
        )
    }
}

/// Count distinct token forms in `docs` and how many of them the dictionary
/// cannot translate through any occurrence's backoff chain.
pub fn coverage_report(docs: &[Document], dict: &BilingualDictionary) -> CoverageReport {
    let mut translated: HashMap<&str, bool> = HashMap::new();
    let mut stemmers: HashMap<&str, Option<Stemmer>> = HashMap::new();
    for doc in docs {
        let stemmer = stemmers
            .entry(doc.language.as_str())
            .or_insert_with(|| stemmer_for(&doc.language));
        for token in &doc.tokens {
            let entry = translated.entry(token.form.as_str()).or_insert(false);
            if *entry {
                continue;
            }
            let stem = stemmer
                .as_ref()
                .map(|s| s.stem(&token.form.to_lowercase()).into_owned());
            *entry = dict
                .translate_opt(&token.form, &token.lemma, stem.as_deref())
                .is_some();
        }
    }
    let word_types = translated.len();
    let unknown_types = translated.values().filter(|&&found| !found).count();
    CoverageReport {
        dict_size: dict.len(),
        word_types,
        unknown_types,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CrossError {
    #[error("dictionary line {line} is not source<TAB>english")]
    BadDictionaryLine { line: usize },
    #[error("embedding file has no `<vocab_size> <dim>` header")]
    BadEmbeddingHeader,
    #[error("embedding line {line}: {msg}")]
    BadEmbeddingLine { line: usize, msg: String },
    #[error("embedding header declares {declared} words, file has {actual}")]
    EmbeddingCount { declared: usize, actual: usize },
    #[error("embedding file has no vectors")]
    EmptyEmbedding,
}
