//! Parser for bracketed tree files (`dis` and `lisp`).
//!
//! Both formats share one grammar: a node is `( ROLE item* )` where the
//! items are `(span A B)`, `(leaf K)`, `(rel2par NAME)`, `(text _!...!_)`
//! annotations or child nodes. The `lisp` dialect differs only in lexing
//! tolerance: abbreviated role atoms (`N`, `S`, `R`) are accepted and
//! embedded-relation suffixes are kept for the label mapper to resolve,
//! while `dis` strips a trailing `-e` at parse time.

use super::{IngestError, RawLeaf, RawNode, RawRole};

#[derive(Clone, Copy)]
struct Dialect {
    abbrev_roles: bool,
    strip_embedded_suffix: bool,
}

const DIS: Dialect = Dialect {
    abbrev_roles: false,
    strip_embedded_suffix: true,
};

const LISP: Dialect = Dialect {
    abbrev_roles: true,
    strip_embedded_suffix: false,
};

/// Parse a `dis` file into a raw tree (no sibling reordering or EDU
/// numbering; run [`super::normalize_raw`] afterwards).
pub fn parse_dis(input: &str) -> Result<RawNode, IngestError> {
    parse(input, DIS)
}

/// Parse a `lisp` file into a raw tree.
pub fn parse_lisp(input: &str) -> Result<RawNode, IngestError> {
    parse(input, LISP)
}

#[derive(Clone, PartialEq, Debug)]
enum Token {
    Open,
    Close,
    Atom(String),
    /// `_!...!_` text payload, delimiters removed.
    Text(String),
}

struct Lexer<'a> {
    chars: std::str::Chars<'a>,
    line: usize,
    peeked: Option<char>,
}

impl<'a> Lexer<'a> {
    fn new(input: &'a str) -> Self {
        Lexer {
            chars: input.chars(),
            line: 1,
            peeked: None,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peeked.take().or_else(|| self.chars.next());
        if c == Some('\n') {
            self.line += 1;
        }
        c
    }

    fn peek(&mut self) -> Option<char> {
        if self.peeked.is_none() {
            self.peeked = self.chars.next();
        }
        self.peeked
    }

    fn err(&self, msg: impl Into<String>) -> IngestError {
        IngestError::Syntax {
            at: format!("line {}", self.line),
            msg: msg.into(),
        }
    }

    fn next_token(&mut self) -> Result<Option<(Token, usize)>, IngestError> {
        loop {
            match self.peek() {
                None => return Ok(None),
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('(') => {
                    let line = self.line;
                    self.bump();
                    return Ok(Some((Token::Open, line)));
                }
                Some(')') => {
                    let line = self.line;
                    self.bump();
                    return Ok(Some((Token::Close, line)));
                }
                Some('_') => {
                    let line = self.line;
                    return Ok(Some((self.lex_text_or_atom()?, line)));
                }
                Some(_) => {
                    let line = self.line;
                    return Ok(Some((self.lex_atom(), line)));
                }
            }
        }
    }

    /// `_!` opens a text payload that may contain parentheses, whitespace
    /// and newlines; it runs until the matching `!_`.
    fn lex_text_or_atom(&mut self) -> Result<Token, IngestError> {
        self.bump(); // '_'
        if self.peek() != Some('!') {
            let mut atom = String::from("_");
            atom.push_str(&self.lex_atom_body());
            return Ok(Token::Atom(atom));
        }
        self.bump(); // '!'
        let mut text = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err("unterminated _!...!_ text")),
                Some('!') if self.peek() == Some('_') => {
                    self.bump();
                    return Ok(Token::Text(text));
                }
                Some(c) => text.push(c),
            }
        }
    }

    fn lex_atom(&mut self) -> Token {
        Token::Atom(self.lex_atom_body())
    }

    fn lex_atom_body(&mut self) -> String {
        let mut atom = String::new();
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            atom.push(c);
            self.bump();
        }
        atom
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: Vec<(Token, usize)>,
    dialect: Dialect,
}

impl<'a> Parser<'a> {
    fn peek_nth(&mut self, n: usize) -> Result<Option<&(Token, usize)>, IngestError> {
        while self.lookahead.len() <= n {
            match self.lexer.next_token()? {
                Some(tok) => self.lookahead.push(tok),
                None => return Ok(None),
            }
        }
        Ok(self.lookahead.get(n))
    }

    fn next(&mut self) -> Result<Option<(Token, usize)>, IngestError> {
        if self.lookahead.is_empty() {
            self.lexer.next_token()
        } else {
            Ok(Some(self.lookahead.remove(0)))
        }
    }

    fn err_at(&self, line: usize, msg: impl Into<String>) -> IngestError {
        IngestError::Syntax {
            at: format!("line {line}"),
            msg: msg.into(),
        }
    }

    fn expect_open(&mut self) -> Result<usize, IngestError> {
        match self.next()? {
            Some((Token::Open, line)) => Ok(line),
            Some((tok, line)) => Err(self.err_at(line, format!("expected `(`, found {tok:?}"))),
            None => Err(self.err_at(self.lexer.line, "expected `(`, found end of input")),
        }
    }

    fn expect_atom(&mut self) -> Result<(String, usize), IngestError> {
        match self.next()? {
            Some((Token::Atom(a), line)) => Ok((a, line)),
            Some((tok, line)) => Err(self.err_at(line, format!("expected atom, found {tok:?}"))),
            None => Err(self.err_at(self.lexer.line, "expected atom, found end of input")),
        }
    }

    fn role_of(&self, atom: &str) -> Option<RawRole> {
        let role = match atom.to_ascii_lowercase().as_str() {
            "root" => RawRole::Unset,
            "nucleus" => RawRole::Nucleus,
            "satellite" => RawRole::Satellite,
            "n" if self.dialect.abbrev_roles => RawRole::Nucleus,
            "s" if self.dialect.abbrev_roles => RawRole::Satellite,
            "r" if self.dialect.abbrev_roles => RawRole::Unset,
            _ => return None,
        };
        Some(role)
    }

    fn parse_node(&mut self) -> Result<RawNode, IngestError> {
        let open_line = self.expect_open()?;
        let (role_atom, role_line) = self.expect_atom()?;
        let role = self
            .role_of(&role_atom)
            .ok_or_else(|| self.err_at(role_line, format!("unknown role `{role_atom}`")))?;

        let mut relation: Option<String> = None;
        let mut leaf_id: Option<(usize, usize)> = None;
        let mut text: Option<String> = None;
        let mut children: Vec<RawNode> = Vec::new();

        loop {
            match self.peek_nth(0)? {
                None => return Err(self.err_at(self.lexer.line, "unbalanced `(`")),
                Some((Token::Close, _)) => {
                    self.next()?;
                    break;
                }
                Some((Token::Open, line)) => {
                    let line = *line;
                    let keyword = match self.peek_nth(1)? {
                        Some((Token::Atom(a), _)) => a.to_ascii_lowercase(),
                        _ => String::new(),
                    };
                    match keyword.as_str() {
                        "span" => self.parse_span_annotation()?,
                        "leaf" => {
                            let id = self.parse_leaf_annotation()?;
                            leaf_id = Some((id, line));
                        }
                        "rel2par" => {
                            let name = self.parse_rel2par()?;
                            relation = self.interpret_relation(name);
                        }
                        "text" => text = Some(self.parse_text()?),
                        _ => children.push(self.parse_node()?),
                    }
                }
                Some((tok, line)) => {
                    let (line, tok) = (*line, tok.clone());
                    return Err(self.err_at(line, format!("unexpected {tok:?} inside node")));
                }
            }
        }

        match (leaf_id, children.is_empty()) {
            (Some((id, line)), true) => {
                let text = text
                    .ok_or_else(|| self.err_at(line, format!("leaf {id} has no text")))?;
                Ok(RawNode::leaf(
                    role,
                    relation,
                    RawLeaf {
                        source_id: id.to_string(),
                        order: id,
                        edu: usize::MAX,
                        text,
                    },
                ))
            }
            (Some((id, line)), false) => {
                Err(self.err_at(line, format!("leaf {id} also has child nodes")))
            }
            (None, true) => Err(self.err_at(open_line, "node has neither leaf nor children")),
            (None, false) => Ok(RawNode::internal(role, relation, children)),
        }
    }

    fn interpret_relation(&self, name: String) -> Option<String> {
        // `span` marks the plain nucleus of a mono-nuclear parent: no
        // relation of its own.
        if name.eq_ignore_ascii_case("span") {
            return None;
        }
        if self.dialect.strip_embedded_suffix {
            if let Some(stripped) = name
                .strip_suffix("-e")
                .or_else(|| name.strip_suffix("-E"))
            {
                return Some(stripped.to_string());
            }
        }
        Some(name)
    }

    fn parse_span_annotation(&mut self) -> Result<(), IngestError> {
        // `(span A B)`: covered-unit bounds. Redundant with the structure,
        // which is authoritative; accepted and ignored.
        self.next()?; // (
        self.next()?; // span
        loop {
            match self.next()? {
                Some((Token::Close, _)) => return Ok(()),
                Some((Token::Atom(_), _)) => {}
                Some((tok, line)) => {
                    return Err(self.err_at(line, format!("unexpected {tok:?} in span")))
                }
                None => return Err(self.err_at(self.lexer.line, "unterminated span annotation")),
            }
        }
    }

    fn parse_leaf_annotation(&mut self) -> Result<usize, IngestError> {
        self.next()?; // (
        self.next()?; // leaf
        let (atom, line) = self.expect_atom()?;
        let id: usize = atom
            .parse()
            .map_err(|_| self.err_at(line, format!("bad leaf number `{atom}`")))?;
        match self.next()? {
            Some((Token::Close, _)) => Ok(id),
            _ => Err(self.err_at(line, "expected `)` after leaf number")),
        }
    }

    fn parse_rel2par(&mut self) -> Result<String, IngestError> {
        self.next()?; // (
        self.next()?; // rel2par
        let (name, line) = self.expect_atom()?;
        match self.next()? {
            Some((Token::Close, _)) => Ok(name),
            _ => Err(self.err_at(line, "expected `)` after relation name")),
        }
    }

    fn parse_text(&mut self) -> Result<String, IngestError> {
        self.next()?; // (
        self.next()?; // text
        let mut parts: Vec<String> = Vec::new();
        loop {
            match self.next()? {
                Some((Token::Close, _)) => return Ok(parts.join(" ")),
                Some((Token::Text(t), _)) => parts.push(t),
                Some((Token::Atom(a), _)) => parts.push(a),
                Some((Token::Open, line)) => {
                    return Err(self.err_at(line, "unexpected `(` inside text"))
                }
                None => return Err(self.err_at(self.lexer.line, "unterminated text annotation")),
            }
        }
    }
}

/// Serialize a raw tree in `dis` syntax. Intended for inspection and
/// round-trip tests: roles must be resolved (no `Span`/`Unset` below the
/// root), relation lifting must not have run yet, and leaf text must not
/// contain the `!_` delimiter.
pub fn write_dis(root: &RawNode) -> String {
    let mut out = String::new();
    write_node(root, true, 0, &mut out);
    out.push('\n');
    out
}

fn write_node(node: &RawNode, is_root: bool, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    let role = if is_root {
        "Root"
    } else {
        match node.role {
            RawRole::Satellite => "Satellite",
            _ => "Nucleus",
        }
    };
    out.push_str(&indent);
    out.push('(');
    out.push_str(role);
    match &node.leaf {
        Some(leaf) => {
            out.push_str(&format!(" (leaf {})", leaf.order));
            push_rel2par(node, is_root, out);
            out.push_str(&format!(" (text _!{}!_) )", leaf.text));
        }
        None => {
            let leaves = node.leaves();
            let (lo, hi) = (
                leaves.first().map_or(0, |l| l.order),
                leaves.last().map_or(0, |l| l.order),
            );
            out.push_str(&format!(" (span {lo} {hi})"));
            push_rel2par(node, is_root, out);
            for child in &node.children {
                out.push('\n');
                write_node(child, false, depth + 1, out);
            }
            out.push('\n');
            out.push_str(&indent);
            out.push(')');
        }
    }
}

fn push_rel2par(node: &RawNode, is_root: bool, out: &mut String) {
    if is_root {
        return;
    }
    let name = node.relation.as_deref().unwrap_or("span");
    out.push_str(&format!(" (rel2par {name})"));
}

fn parse(input: &str, dialect: Dialect) -> Result<RawNode, IngestError> {
    let mut parser = Parser {
        lexer: Lexer::new(input),
        lookahead: Vec::new(),
        dialect,
    };
    let root = parser.parse_node()?;
    if let Some((tok, line)) = parser.next()? {
        return Err(parser.err_at(line, format!("trailing input after tree: {tok:?}")));
    }
    Ok(root)
}
