//! Feature extraction: every parser configuration is described by a fixed
//! sequence of typed symbols read off the top of the stack and the queue.
//!
//! Seven EDU groups are described (head EDUs of the top two stack items and
//! of their left/right children, plus the queue front), each by 20 symbols:
//! 7 words (first three, last, up to three head-set words), their 4 POS
//! tags, a length bucket, a position bucket and 7 boolean indicators. Two
//! further slots carry the structural labels of the top two stack items,
//! giving 142 slots in total.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::doc::{Document, Token, TokenHead};
use crate::transition::Configuration;
use crate::tree::RstNode;

/// Version tag for the slot layout below; stored in model files so a model
/// is never fed symbols from a different template.
pub const TEMPLATE_VERSION: &str = "symbols-142-v1";

/// Number of slots in a [`SymbolSequence`].
pub const SLOT_COUNT: usize = 142;

const EDU_GROUPS: [&str; 7] = ["s0", "s1", "q0", "s0.left", "s0.right", "s1.left", "s1.right"];
const WORD_SLOTS: [&str; 7] = ["w1", "w2", "w3", "wlast", "h1", "h2", "h3"];
const POS_SLOTS: [&str; 4] = ["p1", "p2", "p3", "plast"];
const FLAG_SLOTS: [&str; 7] = [
    "first",
    "last",
    "head-inside",
    "date",
    "number",
    "money",
    "percent",
];

/// The kind of value a slot holds; each kind has its own embedding table.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum SymbolKind {
    Word,
    Pos,
    RelationLabel,
    PositionBucket,
    LengthBucket,
    BooleanFlag,
}

impl SymbolKind {
    pub const ALL: [SymbolKind; 6] = [
        SymbolKind::Word,
        SymbolKind::Pos,
        SymbolKind::RelationLabel,
        SymbolKind::PositionBucket,
        SymbolKind::LengthBucket,
        SymbolKind::BooleanFlag,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SymbolKind::Word => "word",
            SymbolKind::Pos => "pos",
            SymbolKind::RelationLabel => "relation_label",
            SymbolKind::PositionBucket => "position_bucket",
            SymbolKind::LengthBucket => "length_bucket",
            SymbolKind::BooleanFlag => "boolean_flag",
        }
    }
}

/// One typed feature value; `None` is the distinguished absent value (empty
/// stack slot, missing word position).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub value: Option<String>,
}

impl Symbol {
    fn none(kind: SymbolKind) -> Self {
        Symbol { kind, value: None }
    }

    fn some(kind: SymbolKind, value: impl Into<String>) -> Self {
        Symbol {
            kind,
            value: Some(value.into()),
        }
    }

    fn flag(value: bool) -> Self {
        Symbol::some(SymbolKind::BooleanFlag, if value { "true" } else { "false" })
    }
}

/// Fixed-length symbol list for one configuration (see [`template`] for the
/// slot layout).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SymbolSequence(Vec<Symbol>);

impl SymbolSequence {
    pub fn from_slots(slots: Vec<Symbol>) -> SymbolSequence {
        SymbolSequence(slots)
    }

    pub fn slots(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for SymbolSequence {
    type Output = Symbol;
    fn index(&self, i: usize) -> &Symbol {
        &self.0[i]
    }
}

/// Name and kind of every slot, in sequence order.
pub fn template() -> &'static [(String, SymbolKind)] {
    static TEMPLATE: OnceLock<Vec<(String, SymbolKind)>> = OnceLock::new();
    TEMPLATE.get_or_init(|| {
        let mut slots = Vec::with_capacity(SLOT_COUNT);
        for group in EDU_GROUPS {
            for w in WORD_SLOTS {
                slots.push((format!("{group}.{w}"), SymbolKind::Word));
            }
            for p in POS_SLOTS {
                slots.push((format!("{group}.{p}"), SymbolKind::Pos));
            }
            slots.push((format!("{group}.len"), SymbolKind::LengthBucket));
            slots.push((format!("{group}.pos"), SymbolKind::PositionBucket));
            for f in FLAG_SLOTS {
                slots.push((format!("{group}.{f}"), SymbolKind::BooleanFlag));
            }
        }
        slots.push(("s0.label".to_string(), SymbolKind::RelationLabel));
        slots.push(("s1.label".to_string(), SymbolKind::RelationLabel));
        debug_assert_eq!(slots.len(), SLOT_COUNT);
        slots
    })
}

/// Replacement applied to word features before lexicalization; lets the
/// cross-lingual layer translate words into the model's language.
pub trait WordMapper {
    fn map(&self, token: &Token, language: &str) -> String;
}

/// Uses each word form unchanged.
pub struct IdentityMapper;

impl WordMapper for IdentityMapper {
    fn map(&self, token: &Token, _language: &str) -> String {
        token.form.clone()
    }
}

/// EDU length bucket (token count).
pub fn bucket_length(l: usize) -> &'static str {
    if l > 25 {
        "very-long"
    } else if l > 15 {
        "long"
    } else if l > 5 {
        "short"
    } else {
        "very-short"
    }
}

/// Quarter bucket of the EDU's position plus first/last indicators.
pub fn bucket_position(index: usize, n: usize) -> (&'static str, bool, bool) {
    debug_assert!(index < n, "EDU index within document");
    let s = index as f64 / n as f64;
    let bucket = if s < 0.25 {
        "beginning"
    } else if s < 0.5 {
        "first-middle"
    } else if s < 0.75 {
        "second-middle"
    } else {
        "end"
    };
    (bucket, index == 0, index + 1 == n)
}

/// Tokens of the EDU whose governor lies outside it (or is the sentence
/// root), in document order, truncated to three.
pub fn head_set(doc: &Document, edu: usize) -> Vec<usize> {
    let span = &doc.edus[edu].token_span;
    let mut out = Vec::new();
    for i in span.clone() {
        let outside = match doc.tokens[i].head {
            TokenHead::Root => true,
            TokenHead::Index(h) => !span.contains(&h),
        };
        if outside {
            out.push(i);
            if out.len() == 3 {
                break;
            }
        }
    }
    out
}

/// Compiled indicator patterns for one language.
pub struct PatternSet {
    number: Regex,
    date: Regex,
    money: Option<Regex>,
    percent: Regex,
}

impl PatternSet {
    /// Build from word lists: months, percent words, currency words,
    /// currency symbols.
    fn build(
        months: &[String],
        percent_words: &[String],
        currency_words: &[String],
        currency_symbols: &[String],
    ) -> PatternSet {
        let word_alt = |words: &[String]| -> Option<String> {
            if words.is_empty() {
                None
            } else {
                let parts: Vec<String> = words.iter().map(|w| regex::escape(w)).collect();
                Some(format!("(?:{})", parts.join("|")))
            }
        };

        let number = Regex::new(r"\d").expect("static pattern");

        let mut date_parts = vec![r"\d{1,2}[./-]\d{1,2}[./-]\d{2,4}".to_string()];
        if let Some(months) = word_alt(months) {
            date_parts.push(format!(r"(?i)\b{months}\b"));
        }
        let date = Regex::new(&date_parts.join("|")).expect("alternation of valid patterns");

        // A number adjacent to a percent sign or percent word (either side:
        // some languages put the word first, as in "ehuneko 5").
        let mut percent_parts = vec![r"\d[\d.,]*\s*%".to_string()];
        if let Some(words) = word_alt(percent_words) {
            percent_parts.push(format!(r"(?i)\d[\d.,]*\s*\b{words}\b"));
            percent_parts.push(format!(r"(?i)\b{words}\b\s*\d"));
        }
        let percent = Regex::new(&percent_parts.join("|")).expect("alternation of valid patterns");

        // A currency symbol or currency word adjacent to a number.
        let mut money_parts = Vec::new();
        if let Some(symbols) = word_alt(currency_symbols) {
            money_parts.push(format!(r"{symbols}\s*\d"));
            money_parts.push(format!(r"\d[\d.,]*\s*{symbols}"));
        }
        if let Some(words) = word_alt(currency_words) {
            money_parts.push(format!(r"(?i)\d[\d.,]*\s*\b{words}\b"));
            money_parts.push(format!(r"(?i)\b{words}\b\s*\d"));
        }
        let money = if money_parts.is_empty() {
            None
        } else {
            Some(Regex::new(&money_parts.join("|")).expect("alternation of valid patterns"))
        };

        PatternSet {
            number,
            date,
            money,
            percent,
        }
    }

    pub fn has_date(&self, text: &str) -> bool {
        self.date.is_match(text)
    }

    pub fn has_number(&self, text: &str) -> bool {
        self.number.is_match(text)
    }

    pub fn has_money(&self, text: &str) -> bool {
        self.money.as_ref().is_some_and(|re| re.is_match(text))
    }

    pub fn has_percent(&self, text: &str) -> bool {
        self.percent.is_match(text)
    }
}

/// Rows of a pattern file grouped per language.
fn parse_pattern_rows(
    text: &str,
) -> Result<HashMap<String, Vec<(String, String)>>, FeatureError> {
    let mut rows: HashMap<String, Vec<(String, String)>> = HashMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(lang), Some(kind), Some(value)) =
            (fields.next(), fields.next(), fields.next())
        else {
            return Err(FeatureError::BadPatternLine {
                line: idx + 1,
                content: line.to_string(),
            });
        };
        match kind {
            "month" | "percent" | "currency" | "symbol" => {}
            other => {
                return Err(FeatureError::BadPatternKind {
                    line: idx + 1,
                    kind: other.to_string(),
                })
            }
        }
        rows.entry(lang.to_string())
            .or_default()
            .push((kind.to_string(), value.to_string()));
    }
    Ok(rows)
}

fn pattern_set_from_rows(
    rows: &HashMap<String, Vec<(String, String)>>,
    language: &str,
) -> PatternSet {
    let mut months = Vec::new();
    let mut percent_words = Vec::new();
    let mut currency_words = Vec::new();
    let mut symbols = Vec::new();
    for lang in [language, "*"] {
        for (kind, value) in rows.get(lang).into_iter().flatten() {
            match kind.as_str() {
                "month" => months.push(value.clone()),
                "percent" => percent_words.push(value.clone()),
                "currency" => currency_words.push(value.clone()),
                "symbol" => symbols.push(value.clone()),
                _ => unreachable!("kinds validated at parse time"),
            }
        }
    }
    PatternSet::build(&months, &percent_words, &currency_words, &symbols)
}

/// Feature extractor for one language (compiled indicator patterns).
pub struct FeatureExtractor {
    patterns: PatternSet,
}

impl FeatureExtractor {
    /// Extractor using the pattern lists shipped with the crate. Languages
    /// without entries fall back to the digit patterns and shared symbols.
    pub fn for_language(language: &str) -> FeatureExtractor {
        static ROWS: OnceLock<HashMap<String, Vec<(String, String)>>> = OnceLock::new();
        let rows = ROWS.get_or_init(|| {
            parse_pattern_rows(include_str!("../data/patterns.tsv"))
                .expect("embedded pattern file is well-formed")
        });
        FeatureExtractor {
            patterns: pattern_set_from_rows(rows, language),
        }
    }

    /// Extractor from a user-supplied pattern file.
    pub fn from_pattern_file(text: &str, language: &str) -> Result<FeatureExtractor, FeatureError> {
        let rows = parse_pattern_rows(text)?;
        Ok(FeatureExtractor {
            patterns: pattern_set_from_rows(&rows, language),
        })
    }

    pub fn patterns(&self) -> &PatternSet {
        &self.patterns
    }

    /// The 20 symbols describing one EDU.
    pub fn edu_symbols(&self, doc: &Document, edu: usize) -> Vec<Symbol> {
        self.edu_symbols_mapped(doc, edu, &IdentityMapper)
    }

    /// The 20 symbols describing one EDU, with word features rewritten by
    /// `mapper`.
    pub fn edu_symbols_mapped(
        &self,
        doc: &Document,
        edu: usize,
        mapper: &dyn WordMapper,
    ) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(20);
        let span = doc.edus[edu].token_span.clone();
        let tokens = doc.edu_tokens(edu);
        let word = |i: usize| mapper.map(&doc.tokens[i], &doc.language);

        // First three words, left to right, then the last word; the last
        // slot repeats a first-word token in short EDUs.
        for k in 0..3 {
            out.push(match span.clone().nth(k) {
                Some(i) if span.len() > k => Symbol::some(SymbolKind::Word, word(i)),
                _ => Symbol::none(SymbolKind::Word),
            });
        }
        out.push(match span.clone().last() {
            Some(i) => Symbol::some(SymbolKind::Word, word(i)),
            None => Symbol::none(SymbolKind::Word),
        });
        let heads = head_set(doc, edu);
        for k in 0..3 {
            out.push(match heads.get(k) {
                Some(&i) => Symbol::some(SymbolKind::Word, word(i)),
                None => Symbol::none(SymbolKind::Word),
            });
        }

        for k in 0..3 {
            out.push(match tokens.get(k) {
                Some(t) => Symbol::some(SymbolKind::Pos, t.pos.clone()),
                None => Symbol::none(SymbolKind::Pos),
            });
        }
        out.push(match tokens.last() {
            Some(t) => Symbol::some(SymbolKind::Pos, t.pos.clone()),
            None => Symbol::none(SymbolKind::Pos),
        });

        out.push(Symbol::some(
            SymbolKind::LengthBucket,
            bucket_length(tokens.len()),
        ));
        let (bucket, is_first, is_last) = bucket_position(edu, doc.n_edus());
        out.push(Symbol::some(SymbolKind::PositionBucket, bucket));
        out.push(Symbol::flag(is_first));
        out.push(Symbol::flag(is_last));

        // Sentence head inside this EDU?
        let head_inside = tokens.iter().any(|t| t.head == TokenHead::Root);
        out.push(Symbol::flag(head_inside));

        let text = &doc.edus[edu].text;
        out.push(Symbol::flag(self.patterns.has_date(text)));
        out.push(Symbol::flag(self.patterns.has_number(text)));
        out.push(Symbol::flag(self.patterns.has_money(text)));
        out.push(Symbol::flag(self.patterns.has_percent(text)));
        out
    }

    /// The full 142-slot sequence for a configuration.
    pub fn config_symbols(&self, config: &Configuration, doc: &Document) -> SymbolSequence {
        self.config_symbols_mapped(config, doc, &IdentityMapper)
    }

    pub fn config_symbols_mapped(
        &self,
        config: &Configuration,
        doc: &Document,
        mapper: &dyn WordMapper,
    ) -> SymbolSequence {
        let stack = config.stack();
        let s0 = stack.last();
        let s1 = stack.len().checked_sub(2).map(|i| &stack[i]);
        fn child(node: Option<&RstNode>, left: bool) -> Option<&RstNode> {
            match node {
                Some(RstNode::Internal { left: l, right: r, .. }) => {
                    Some(if left { l } else { r })
                }
                _ => None,
            }
        }

        let groups: [Option<&RstNode>; 7] = [
            s0,
            s1,
            None, // queue front handled separately
            child(s0, true),
            child(s0, false),
            child(s1, true),
            child(s1, false),
        ];

        let mut slots = Vec::with_capacity(SLOT_COUNT);
        for (g, node) in groups.iter().enumerate() {
            let edu = if g == 2 {
                config.queue_front()
            } else {
                node.map(RstNode::head_edu)
            };
            match edu {
                Some(edu) => slots.extend(self.edu_symbols_mapped(doc, edu, mapper)),
                None => slots.extend(empty_edu_group()),
            }
        }
        for node in [s0, s1] {
            slots.push(match node {
                Some(RstNode::Internal {
                    pattern, relation, ..
                }) => Symbol::some(
                    SymbolKind::RelationLabel,
                    format!("{}-{}", pattern.name(), relation.name()),
                ),
                _ => Symbol::none(SymbolKind::RelationLabel),
            });
        }
        debug_assert_eq!(slots.len(), SLOT_COUNT);
        SymbolSequence(slots)
    }
}

/// The 20 NONE symbols of an absent EDU group.
fn empty_edu_group() -> Vec<Symbol> {
    let mut out = Vec::with_capacity(20);
    for _ in 0..7 {
        out.push(Symbol::none(SymbolKind::Word));
    }
    for _ in 0..4 {
        out.push(Symbol::none(SymbolKind::Pos));
    }
    out.push(Symbol::none(SymbolKind::LengthBucket));
    out.push(Symbol::none(SymbolKind::PositionBucket));
    for _ in 0..7 {
        out.push(Symbol::none(SymbolKind::BooleanFlag));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("pattern line {line} is malformed: `{content}`")]
    BadPatternLine { line: usize, content: String },
    #[error("pattern line {line} has unknown kind `{kind}`")]
    BadPatternKind { line: usize, kind: String },
}
