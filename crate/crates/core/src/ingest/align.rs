//! Alignment of EDU texts (from tree files) with tokens (from CoNLL-U).
//!
//! The two layers come from different exports of the same text and disagree
//! on whitespace, so alignment works on the whitespace-free character
//! streams: both sides must spell the same characters in the same order. A
//! token straddling an EDU boundary goes to the EDU holding the majority of
//! its characters (ties to the earlier EDU).

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::doc::{Edu, Token};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignError {
    #[error("token {index} `{form}` does not match EDU text (expected `{expected}` near EDU {edu})")]
    CharMismatch {
        index: usize,
        form: String,
        expected: String,
        edu: usize,
    },
    #[error("tokens continue past the end of the EDU text (token {index} `{form}`)")]
    TokensPastEnd { index: usize, form: String },
    #[error("EDU {edu} has text left over after the last token")]
    TextPastEnd { edu: usize },
    #[error("EDU {edu} received no tokens")]
    EmptyEdu { edu: usize },
    #[error("document has no tokens")]
    NoTokens,
}

/// Assign every token to an EDU, producing one [`Edu`] per input text with
/// its contiguous token range.
pub fn align_edus(edu_texts: &[String], tokens: &[Token]) -> Result<Vec<Edu>, AlignError> {
    if tokens.is_empty() {
        return Err(AlignError::NoTokens);
    }
    // Character stream of all EDU texts, tagged with the owning EDU.
    let mut stream: Vec<(char, usize)> = Vec::new();
    for (edu, text) in edu_texts.iter().enumerate() {
        stream.extend(
            text.nfc()
                .filter(|c| !c.is_whitespace())
                .map(|c| (c, edu)),
        );
    }

    let mut pos = 0usize;
    let mut assignment: Vec<usize> = Vec::with_capacity(tokens.len());
    for (index, token) in tokens.iter().enumerate() {
        let form: Vec<char> = token
            .form
            .nfc()
            .filter(|c| !c.is_whitespace())
            .collect();
        if pos + form.len() > stream.len() {
            return Err(AlignError::TokensPastEnd {
                index,
                form: token.form.clone(),
            });
        }
        let window = &stream[pos..pos + form.len()];
        if window.iter().map(|(c, _)| *c).ne(form.iter().copied()) {
            let expected: String = window.iter().map(|(c, _)| *c).collect();
            return Err(AlignError::CharMismatch {
                index,
                form: token.form.clone(),
                expected,
                edu: window.first().map(|(_, e)| *e).unwrap_or(0),
            });
        }
        assignment.push(majority_edu(window));
        pos += form.len();
    }
    if pos < stream.len() {
        return Err(AlignError::TextPastEnd {
            edu: stream[pos].1,
        });
    }

    let mut edus: Vec<Edu> = Vec::with_capacity(edu_texts.len());
    let mut cursor = 0usize;
    for (edu, text) in edu_texts.iter().enumerate() {
        let start = cursor;
        while cursor < assignment.len() && assignment[cursor] == edu {
            cursor += 1;
        }
        if cursor == start {
            return Err(AlignError::EmptyEdu { edu });
        }
        edus.push(Edu {
            index: edu,
            text: text.clone(),
            token_span: start..cursor,
        });
    }
    Ok(edus)
}

/// EDU owning most characters of the window; ties go to the earlier EDU.
fn majority_edu(window: &[(char, usize)]) -> usize {
    debug_assert!(!window.is_empty(), "tokens have at least one character");
    let mut best = window[0].1;
    let mut best_count = 0usize;
    let mut i = 0;
    while i < window.len() {
        let edu = window[i].1;
        let mut count = 0;
        while i < window.len() && window[i].1 == edu {
            count += 1;
            i += 1;
        }
        if count > best_count {
            best = edu;
            best_count = count;
        }
    }
    best
}
