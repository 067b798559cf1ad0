//! Documents: EDU segmentation plus an optional token layer with
//! part-of-speech tags and dependency heads.

use std::ops::Range;

use thiserror::Error;

use crate::tree::RstTree;

/// Dependency head of a token.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TokenHead {
    /// Sentence root.
    Root,
    /// Absolute index into [`Document::tokens`]; always within the same
    /// sentence as the dependent.
    Index(usize),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Token {
    pub form: String,
    pub lemma: String,
    /// Universal part-of-speech tag.
    pub pos: String,
    pub head: TokenHead,
    /// 0-based sentence number within the document.
    pub sentence: usize,
}

/// Elementary discourse unit: a text span and the tokens it covers.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Edu {
    pub index: usize,
    pub text: String,
    /// Token indices covered by this EDU. Empty only in documents without a
    /// token layer.
    pub token_span: Range<usize>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Document {
    pub id: String,
    /// Lowercase language code, e.g. `en`, `pt`, `eu`.
    pub language: String,
    pub edus: Vec<Edu>,
    pub tokens: Vec<Token>,
    pub gold: Option<RstTree>,
}

impl Document {
    /// Build a document with a token layer. `token_spans[i]` gives the token
    /// range of EDU `i`; the spans must tile `0..tokens.len()` in order.
    pub fn new(
        id: impl Into<String>,
        language: impl Into<String>,
        edu_texts: Vec<String>,
        tokens: Vec<Token>,
        token_spans: Vec<Range<usize>>,
        gold: Option<RstTree>,
    ) -> Result<Self, DocError> {
        let id = id.into();
        if edu_texts.is_empty() {
            return Err(DocError::NoEdus { doc: id });
        }
        if edu_texts.len() != token_spans.len() {
            return Err(DocError::SpanCount {
                doc: id,
                edus: edu_texts.len(),
                spans: token_spans.len(),
            });
        }
        let mut expected_start = 0;
        for (i, span) in token_spans.iter().enumerate() {
            if span.start != expected_start || span.end <= span.start || span.end > tokens.len() {
                return Err(DocError::BadTokenSpan {
                    doc: id,
                    edu: i,
                    span: span.clone(),
                });
            }
            expected_start = span.end;
        }
        if expected_start != tokens.len() {
            return Err(DocError::UncoveredTokens {
                doc: id,
                covered: expected_start,
                total: tokens.len(),
            });
        }
        for (i, tok) in tokens.iter().enumerate() {
            if let TokenHead::Index(h) = tok.head {
                if h >= tokens.len() || tokens[h].sentence != tok.sentence || h == i {
                    return Err(DocError::BadHead { doc: id, token: i });
                }
            }
        }
        let doc = Document {
            id,
            language: language.into(),
            edus: make_edus(edu_texts, Some(token_spans)),
            tokens,
            gold,
        };
        doc.check_gold()?;
        Ok(doc)
    }

    /// Build a document without a token layer (enough for harmonization and
    /// evaluation; training and parsing require tokens).
    pub fn without_tokens(
        id: impl Into<String>,
        language: impl Into<String>,
        edu_texts: Vec<String>,
        gold: Option<RstTree>,
    ) -> Result<Self, DocError> {
        let id = id.into();
        if edu_texts.is_empty() {
            return Err(DocError::NoEdus { doc: id });
        }
        let doc = Document {
            id,
            language: language.into(),
            edus: make_edus(edu_texts, None),
            tokens: Vec::new(),
            gold,
        };
        doc.check_gold()?;
        Ok(doc)
    }

    fn check_gold(&self) -> Result<(), DocError> {
        if let Some(gold) = &self.gold {
            let violations = gold.root.validate(self.edus.len());
            if !violations.is_empty() {
                return Err(DocError::InvalidGold {
                    doc: self.id.clone(),
                    first: violations[0].to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn n_edus(&self) -> usize {
        self.edus.len()
    }

    pub fn has_tokens(&self) -> bool {
        !self.tokens.is_empty()
    }

    /// Tokens covered by EDU `index`.
    pub fn edu_tokens(&self, index: usize) -> &[Token] {
        let span = &self.edus[index].token_span;
        &self.tokens[span.clone()]
    }
}

fn make_edus(texts: Vec<String>, spans: Option<Vec<Range<usize>>>) -> Vec<Edu> {
    match spans {
        Some(spans) => texts
            .into_iter()
            .zip(spans)
            .enumerate()
            .map(|(index, (text, token_span))| Edu {
                index,
                text,
                token_span,
            })
            .collect(),
        None => texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| Edu {
                index,
                text,
                token_span: 0..0,
            })
            .collect(),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocError {
    #[error("document `{doc}` has no EDUs")]
    NoEdus { doc: String },
    #[error("document `{doc}` has {edus} EDUs but {spans} token spans")]
    SpanCount { doc: String, edus: usize, spans: usize },
    #[error("document `{doc}`: EDU {edu} has invalid token span {span:?}")]
    BadTokenSpan {
        doc: String,
        edu: usize,
        span: Range<usize>,
    },
    #[error("document `{doc}`: token spans cover {covered} of {total} tokens")]
    UncoveredTokens {
        doc: String,
        covered: usize,
        total: usize,
    },
    #[error("document `{doc}`: token {token} has a head outside its sentence")]
    BadHead { doc: String, token: usize },
    #[error("document `{doc}`: gold tree is invalid: {first}")]
    InvalidGold { doc: String, first: String },
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::tree::{NucPattern, RelationClass, RstNode};

    pub(crate) fn tok(form: &str, pos: &str, head: TokenHead, sentence: usize) -> Token {
        Token {
            form: form.to_string(),
            lemma: form.to_lowercase(),
            pos: pos.to_string(),
            head,
            sentence,
        }
    }

    /// Two-EDU document: "He left | because he was tired ."
    pub(crate) fn tiny_doc() -> Document {
        let tokens = vec![
            tok("He", "PRON", TokenHead::Index(1), 0),
            tok("left", "VERB", TokenHead::Root, 0),
            tok("because", "SCONJ", TokenHead::Index(5), 0),
            tok("he", "PRON", TokenHead::Index(5), 0),
            tok("was", "AUX", TokenHead::Index(5), 0),
            tok("tired", "ADJ", TokenHead::Index(1), 0),
            tok(".", "PUNCT", TokenHead::Index(1), 0),
        ];
        let gold = RstTree::new(RstNode::internal(
            RstNode::leaf(0),
            RstNode::leaf(1),
            NucPattern::NS,
            RelationClass::Explanation,
        ));
        Document::new(
            "tiny",
            "en",
            vec!["He left".into(), "because he was tired .".into()],
            tokens,
            vec![0..2, 2..7],
            Some(gold),
        )
        .unwrap()
    }

    #[test]
    fn constructs_and_indexes_edus() {
        let doc = tiny_doc();
        assert_eq!(doc.n_edus(), 2);
        assert_eq!(doc.edus[1].index, 1);
        assert_eq!(doc.edu_tokens(0).len(), 2);
        assert_eq!(doc.edu_tokens(1)[0].form, "because");
    }

    #[test]
    fn rejects_non_tiling_spans() {
        let tokens = vec![tok("a", "X", TokenHead::Root, 0), tok("b", "X", TokenHead::Index(0), 0)];
        let err = Document::new(
            "d",
            "en",
            vec!["a".into(), "b".into()],
            tokens,
            vec![0..1, 0..1],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DocError::BadTokenSpan { edu: 1, .. }));
    }

    #[test]
    fn rejects_empty_edu_span() {
        let tokens = vec![tok("a", "X", TokenHead::Root, 0)];
        let err = Document::new(
            "d",
            "en",
            vec!["a".into(), "".into()],
            tokens,
            vec![0..1, 1..1],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DocError::BadTokenSpan { .. }));
    }

    #[test]
    fn rejects_cross_sentence_head() {
        let tokens = vec![
            tok("a", "X", TokenHead::Root, 0),
            tok("b", "X", TokenHead::Index(0), 1),
        ];
        let err = Document::new(
            "d",
            "en",
            vec!["a b".into()],
            tokens,
            vec![0..2],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DocError::BadHead { token: 1, .. }));
    }

    #[test]
    fn rejects_gold_tree_with_wrong_edu_count() {
        let err = Document::without_tokens(
            "d",
            "en",
            vec!["a".into()],
            Some(RstTree::new(RstNode::internal(
                RstNode::leaf(0),
                RstNode::leaf(1),
                NucPattern::NN,
                RelationClass::Joint,
            ))),
        )
        .unwrap_err();
        assert!(matches!(err, DocError::InvalidGold { .. }));
    }
}
