//! Tree file format: a small s-expression grammar.
//!
//! ```text
//! node := '(' kind attr* node* ')'
//! kind := selector | sequence | parallel | action | condition | decorator | proxy
//! attr := key '=' value          value := number | identifier | "quoted string"
//! ```
//!
//! Recognized attrs: `id` (every kind), `name` (template or proxy target),
//! `k` (parallel success threshold), `order` (`det` | `shuffle`), plus
//! template parameters by name on actions, conditions, and decorators.
//! `;` starts a line comment; whitespace is insignificant. A leading
//! `; name: <tree>` comment carries the tree's name. Files written by
//! [`serialize`] always carry explicit ids so structure survives a
//! parse/serialize round trip bit for bit; hand-written files may omit ids,
//! which are then assigned in pre-order from the smallest unused values.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::tree::{BehaviorTree, NodeId, NodeKind, OrderPolicy, TreeNode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unknown kind `{word}`")]
    UnknownKind { line: usize, col: usize, word: String },
    #[error("{line}:{col}: unknown attribute `{attr}` for {kind}")]
    UnknownAttr { line: usize, col: usize, kind: &'static str, attr: String },
    #[error("{line}:{col}: {kind} arity: {children} children")]
    Arity { line: usize, col: usize, kind: &'static str, children: usize },
    #[error("{line}:{col}: parallel threshold k={k} with {children} children")]
    ParallelThreshold { line: usize, col: usize, k: usize, children: usize },
    #[error("{line}:{col}: duplicate node id {id}")]
    DuplicateId { line: usize, col: usize, id: u32 },
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

fn is_bare(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

fn write_value(out: &mut String, v: &str) {
    if is_bare(v) {
        out.push_str(v);
    } else {
        out.push('"');
        out.push_str(v);
        out.push('"');
    }
}

fn write_node(out: &mut String, node: &TreeNode, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
    out.push('(');
    out.push_str(node.kind.keyword());
    let _ = write!(out, " id={}", node.id.0);
    match &node.kind {
        NodeKind::Selector { order } | NodeKind::Sequence { order } => {
            if *order == OrderPolicy::Shuffled {
                out.push_str(" order=shuffle");
            }
        }
        NodeKind::Parallel { k } => {
            let _ = write!(out, " k={k}");
        }
        NodeKind::Action { template }
        | NodeKind::Condition { template }
        | NodeKind::Decorator { template } => {
            out.push_str(" name=");
            write_value(out, template);
        }
        NodeKind::Proxy { tree } => {
            out.push_str(" name=");
            write_value(out, tree);
        }
    }
    for (key, value) in &node.params {
        let _ = write!(out, " {key}={value}");
    }
    if node.children.is_empty() {
        out.push(')');
    } else {
        for c in &node.children {
            out.push('\n');
            write_node(out, c, indent + 1);
        }
        out.push(')');
    }
}

/// Renders a tree in the file grammar, name carried in a leading comment.
pub fn serialize(tree: &BehaviorTree) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "; name: {}", tree.name);
    write_node(&mut out, &tree.root, 0);
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    /// Body of the first `; name: ...` comment, if any.
    name_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Word(String),
    Attr { key: String, value: String },
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Scanner<'a> {
        Scanner { src: src.as_bytes(), pos: 0, line: 1, col: 1, name_hint: None }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.bump();
            } else if b == b';' {
                let mut comment = String::new();
                self.bump();
                while let Some(c) = self.peek() {
                    if c == b'\n' {
                        break;
                    }
                    comment.push(char::from(c));
                    self.bump();
                }
                if self.name_hint.is_none() {
                    if let Some(rest) = comment.trim_start().strip_prefix("name:") {
                        self.name_hint = Some(rest.trim().to_owned());
                    }
                }
            } else {
                break;
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col: self.col, message: message.into() }
    }

    /// Next token plus its start position, or None at end of input.
    fn next_token(&mut self) -> Result<Option<(Token, usize, usize)>, ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(b) = self.peek() else { return Ok(None) };
        if b == b'(' {
            self.bump();
            return Ok(Some((Token::Open, line, col)));
        }
        if b == b')' {
            self.bump();
            return Ok(Some((Token::Close, line, col)));
        }
        // A word or key=value atom.
        let mut key = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b';' || c == b'=' {
                break;
            }
            key.push(char::from(c));
            self.bump();
        }
        if key.is_empty() {
            return Err(self.err(format!("unexpected character `{}`", char::from(b))));
        }
        if self.peek() != Some(b'=') {
            return Ok(Some((Token::Word(key), line, col)));
        }
        self.bump(); // consume '='
        let mut value = String::new();
        if self.peek() == Some(b'"') {
            self.bump();
            loop {
                match self.bump() {
                    Some(b'"') => break,
                    Some(c) => value.push(char::from(c)),
                    None => return Err(self.err("unterminated string")),
                }
            }
        } else {
            while let Some(c) = self.peek() {
                if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b';' {
                    break;
                }
                value.push(char::from(c));
                self.bump();
            }
            if value.is_empty() {
                return Err(self.err(format!("attribute `{key}` has no value")));
            }
        }
        Ok(Some((Token::Attr { key, value }, line, col)))
    }
}

/// Node as parsed, before id assignment.
struct RawNode {
    kind: NodeKind,
    id: Option<u32>,
    params: std::collections::BTreeMap<String, f64>,
    children: Vec<RawNode>,
    line: usize,
    col: usize,
}

fn parse_number(value: &str, line: usize, col: usize, attr: &str) -> Result<f64, ParseError> {
    value.parse::<f64>().map_err(|_| ParseError::Syntax {
        line,
        col,
        message: format!("attribute `{attr}` expects a number, got `{value}`"),
    })
}

fn parse_node(sc: &mut Scanner<'_>) -> Result<RawNode, ParseError> {
    let (tok, line, col) = sc
        .next_token()?
        .ok_or_else(|| sc.err("expected `(`, found end of input"))?;
    if tok != Token::Open {
        return Err(ParseError::Syntax { line, col, message: "expected `(`".into() });
    }
    let (kind_tok, kline, kcol) = sc
        .next_token()?
        .ok_or_else(|| sc.err("expected node kind, found end of input"))?;
    let Token::Word(word) = kind_tok else {
        return Err(ParseError::Syntax { line: kline, col: kcol, message: "expected node kind".into() });
    };

    // Kind payloads are filled in as attrs arrive and finalized at `)`.
    let keyword: &'static str = match word.as_str() {
        "selector" => "selector",
        "sequence" => "sequence",
        "parallel" => "parallel",
        "action" => "action",
        "condition" => "condition",
        "decorator" => "decorator",
        "proxy" => "proxy",
        _ => return Err(ParseError::UnknownKind { line: kline, col: kcol, word }),
    };

    let mut id: Option<u32> = None;
    let mut order = OrderPolicy::Deterministic;
    let mut k: Option<usize> = None;
    let mut name: Option<String> = None;
    let mut params = std::collections::BTreeMap::new();
    let mut children = Vec::new();

    loop {
        // Peek by scanning; Open pushes a child, Close ends the node.
        let before = (sc.pos, sc.line, sc.col);
        let (tok, tline, tcol) = sc
            .next_token()?
            .ok_or_else(|| sc.err("unclosed `(`"))?;
        match tok {
            Token::Close => break,
            Token::Open => {
                // Rewind so parse_node sees the `(` again.
                sc.pos = before.0;
                sc.line = before.1;
                sc.col = before.2;
                children.push(parse_node(sc)?);
            }
            Token::Word(w) => {
                return Err(ParseError::Syntax {
                    line: tline,
                    col: tcol,
                    message: format!("unexpected bare word `{w}`"),
                });
            }
            Token::Attr { key, value } => match key.as_str() {
                "id" => {
                    let n = value.parse::<u32>().map_err(|_| ParseError::Syntax {
                        line: tline,
                        col: tcol,
                        message: format!("attribute `id` expects an integer, got `{value}`"),
                    })?;
                    if id.is_some() {
                        return Err(ParseError::Syntax {
                            line: tline,
                            col: tcol,
                            message: "duplicate `id` attribute".into(),
                        });
                    }
                    id = Some(n);
                }
                "order" if matches!(keyword, "selector" | "sequence") => {
                    order = match value.as_str() {
                        "det" => OrderPolicy::Deterministic,
                        "shuffle" => OrderPolicy::Shuffled,
                        _ => {
                            return Err(ParseError::Syntax {
                                line: tline,
                                col: tcol,
                                message: format!("`order` expects det|shuffle, got `{value}`"),
                            })
                        }
                    };
                }
                "k" if keyword == "parallel" => {
                    let n = value.parse::<usize>().map_err(|_| ParseError::Syntax {
                        line: tline,
                        col: tcol,
                        message: format!("attribute `k` expects an integer, got `{value}`"),
                    })?;
                    k = Some(n);
                }
                "name" if matches!(keyword, "action" | "condition" | "decorator" | "proxy") => {
                    name = Some(value);
                }
                other if matches!(keyword, "action" | "condition" | "decorator") => {
                    let v = parse_number(&value, tline, tcol, other)?;
                    if params.insert(other.to_owned(), v).is_some() {
                        return Err(ParseError::Syntax {
                            line: tline,
                            col: tcol,
                            message: format!("duplicate attribute `{other}`"),
                        });
                    }
                }
                other => {
                    return Err(ParseError::UnknownAttr {
                        line: tline,
                        col: tcol,
                        kind: keyword,
                        attr: other.to_owned(),
                    });
                }
            },
        }
    }

    // Arity and payload checks, anchored to the node's opening position.
    let n = children.len();
    let arity = |kind: &'static str| ParseError::Arity { line, col, kind, children: n };
    let kind = match keyword {
        "selector" => {
            if n == 0 {
                return Err(arity("selector"));
            }
            NodeKind::Selector { order }
        }
        "sequence" => {
            if n == 0 {
                return Err(arity("sequence"));
            }
            NodeKind::Sequence { order }
        }
        "parallel" => {
            if n == 0 {
                return Err(arity("parallel"));
            }
            let k = k.ok_or_else(|| ParseError::Syntax {
                line,
                col,
                message: "parallel requires `k`".into(),
            })?;
            if k < 1 || k > n {
                return Err(ParseError::ParallelThreshold { line, col, k, children: n });
            }
            NodeKind::Parallel { k }
        }
        "action" => {
            if n != 0 {
                return Err(arity("action"));
            }
            NodeKind::Action {
                template: name.ok_or_else(|| ParseError::Syntax {
                    line,
                    col,
                    message: "action requires `name`".into(),
                })?,
            }
        }
        "condition" => {
            if n > 1 {
                return Err(arity("condition"));
            }
            NodeKind::Condition {
                template: name.ok_or_else(|| ParseError::Syntax {
                    line,
                    col,
                    message: "condition requires `name`".into(),
                })?,
            }
        }
        "decorator" => {
            if n != 1 {
                return Err(arity("decorator"));
            }
            NodeKind::Decorator {
                template: name.ok_or_else(|| ParseError::Syntax {
                    line,
                    col,
                    message: "decorator requires `name`".into(),
                })?,
            }
        }
        "proxy" => {
            if n != 0 {
                return Err(arity("proxy"));
            }
            if !params.is_empty() {
                let attr = params.keys().next().cloned().unwrap_or_default();
                return Err(ParseError::UnknownAttr { line, col, kind: "proxy", attr });
            }
            NodeKind::Proxy {
                tree: name.ok_or_else(|| ParseError::Syntax {
                    line,
                    col,
                    message: "proxy requires `name`".into(),
                })?,
            }
        }
        _ => unreachable!(),
    };
    Ok(RawNode { kind, id, params, children, line, col })
}

fn assign_ids(raw: RawNode) -> Result<TreeNode, ParseError> {
    // Explicit ids first (duplicates are an error), then fill gaps in
    // pre-order with the smallest unused values.
    fn collect(raw: &RawNode, used: &mut BTreeSet<u32>) -> Result<(), ParseError> {
        if let Some(id) = raw.id {
            if !used.insert(id) {
                return Err(ParseError::DuplicateId { line: raw.line, col: raw.col, id });
            }
        }
        for c in &raw.children {
            collect(c, used)?;
        }
        Ok(())
    }
    let mut used = BTreeSet::new();
    collect(&raw, &mut used)?;

    fn build(raw: RawNode, used: &mut BTreeSet<u32>, next: &mut u32) -> TreeNode {
        let id = match raw.id {
            Some(id) => id,
            None => {
                while used.contains(next) {
                    *next += 1;
                }
                let id = *next;
                used.insert(id);
                id
            }
        };
        TreeNode {
            id: NodeId(id),
            kind: raw.kind,
            params: raw.params,
            children: raw.children.into_iter().map(|c| build(c, used, next)).collect(),
        }
    }
    let mut next = 0u32;
    Ok(build(raw, &mut used, &mut next))
}

/// Parses one tree from the file grammar.
pub fn parse(src: &str) -> Result<BehaviorTree, ParseError> {
    let mut sc = Scanner::new(src);
    let raw = parse_node(&mut sc)?;
    // Only trivia may follow the root node.
    if let Some((_, line, col)) = sc.next_token()? {
        return Err(ParseError::Syntax { line, col, message: "trailing input after root node".into() });
    }
    let root = assign_ids(raw)?;
    let name = sc.name_hint.unwrap_or_else(|| "unnamed".to_owned());
    Ok(BehaviorTree::new(&name, root))
}
