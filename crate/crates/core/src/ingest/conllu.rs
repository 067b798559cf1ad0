//! CoNLL-U reader for the token layer (forms, lemmas, UPOS, heads).

use unicode_normalization::UnicodeNormalization;

use super::IngestError;
use crate::doc::{Token, TokenHead};

/// Load all sentences of a CoNLL-U file into one flat token sequence.
///
/// Multiword-token ranges (`1-2`) and empty nodes (`1.1`) are skipped; head
/// indices are rebased from sentence-local ids to absolute positions in the
/// returned vector. Forms and lemmas are NFC-normalized.
pub fn load_conllu(input: &str) -> Result<Vec<Token>, IngestError> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut sentence = 0usize;
    // (line number, sentence-local id, form, lemma, pos, head id)
    let mut pending: Vec<(usize, usize, String, String, String, usize)> = Vec::new();

    let err = |line: usize, msg: String| IngestError::Conllu { line, msg };

    let flush = |pending: &mut Vec<(usize, usize, String, String, String, usize)>,
                     tokens: &mut Vec<Token>,
                     sentence: &mut usize|
     -> Result<(), IngestError> {
        if pending.is_empty() {
            return Ok(());
        }
        let base = tokens.len();
        let count = pending.len();
        for (i, (line, id, form, lemma, pos, head)) in pending.drain(..).enumerate() {
            if id != i + 1 {
                return Err(err(line, format!("token id {id} out of sequence (expected {})", i + 1)));
            }
            if head > count {
                return Err(err(
                    line,
                    format!("head {head} points outside its {count}-token sentence"),
                ));
            }
            if head == id {
                return Err(err(line, format!("token {id} is its own head")));
            }
            let head = if head == 0 {
                TokenHead::Root
            } else {
                TokenHead::Index(base + head - 1)
            };
            tokens.push(Token {
                form,
                lemma,
                pos,
                head,
                sentence: *sentence,
            });
        }
        *sentence += 1;
        Ok(())
    };

    for (idx, raw_line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut pending, &mut tokens, &mut sentence)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 8 {
            return Err(err(
                line_no,
                format!("expected 10 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id_field = fields[0];
        if id_field.contains('-') || id_field.contains('.') {
            // Multiword-token range or empty node: not a syntactic word.
            continue;
        }
        let id: usize = id_field
            .parse()
            .map_err(|_| err(line_no, format!("bad token id `{id_field}`")))?;
        let head: usize = fields[6]
            .parse()
            .map_err(|_| err(line_no, format!("bad head `{}`", fields[6])))?;
        let form: String = fields[1].nfc().collect();
        let lemma: String = fields[2].nfc().collect();
        pending.push((line_no, id, form, lemma, fields[3].to_string(), head));
    }
    flush(&mut pending, &mut tokens, &mut sentence)?;
    Ok(tokens)
}
