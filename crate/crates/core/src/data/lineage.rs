//! Expression trees recording how a feature was derived.

use std::fmt;

use thiserror::Error;

/// Derivation tree of a feature. Leaves are original column names, internal
/// vertices are transform operators applied to their arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lineage {
    Original(String),
    Derived { op: String, args: Vec<Lineage> },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LineageParseError {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character {found:?} at offset {offset}")]
    Unexpected { found: char, offset: usize },
    #[error("unterminated argument list")]
    Unterminated,
    #[error("trailing input at offset {0}")]
    Trailing(usize),
}

impl Lineage {
    pub fn original(name: impl Into<String>) -> Self {
        Lineage::Original(name.into())
    }

    pub fn derived(op: impl Into<String>, args: Vec<Lineage>) -> Self {
        Lineage::Derived {
            op: op.into(),
            args,
        }
    }

    pub fn is_original(&self) -> bool {
        matches!(self, Lineage::Original(_))
    }

    /// Longest chain of composed transforms; 0 for an original feature.
    pub fn depth(&self) -> usize {
        match self {
            Lineage::Original(_) => 0,
            Lineage::Derived { args, .. } => 1 + args.iter().map(Lineage::depth).max().unwrap_or(0),
        }
    }

    /// Canonical string form, e.g. `log(square(x3))` or `groupmean(v|key)`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Lineage::Original(name) => out.push_str(name),
            Lineage::Derived { op, args } => {
                out.push_str(op);
                out.push('(');
                let sep = if uses_group_separator(op) { '|' } else { ',' };
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(sep);
                    }
                    arg.render_into(out);
                }
                out.push(')');
            }
        }
    }

    /// Original column names this feature depends on, in first-seen order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut acc = Vec::new();
        self.collect_leaves(&mut acc);
        acc
    }

    fn collect_leaves<'a>(&'a self, acc: &mut Vec<&'a str>) {
        match self {
            Lineage::Original(name) => {
                if !acc.contains(&name.as_str()) {
                    acc.push(name);
                }
            }
            Lineage::Derived { args, .. } => args.iter().for_each(|a| a.collect_leaves(acc)),
        }
    }

    pub fn parse(text: &str) -> Result<Lineage, LineageParseError> {
        let mut parser = Parser {
            chars: text.char_indices().collect(),
            pos: 0,
        };
        let lineage = parser.expr()?;
        if parser.pos < parser.chars.len() {
            return Err(LineageParseError::Trailing(parser.chars[parser.pos].0));
        }
        Ok(lineage)
    }
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn uses_group_separator(op: &str) -> bool {
    op.starts_with("group")
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn token(&mut self) -> String {
        let mut tok = String::new();
        while let Some(c) = self.peek() {
            if matches!(c, '(' | ')' | ',' | '|') {
                break;
            }
            tok.push(c);
            self.pos += 1;
        }
        tok
    }

    fn expr(&mut self) -> Result<Lineage, LineageParseError> {
        let name = self.token();
        if name.is_empty() {
            return match self.peek() {
                None => Err(LineageParseError::Empty),
                Some(c) => Err(LineageParseError::Unexpected {
                    found: c,
                    offset: self.chars[self.pos].0,
                }),
            };
        }
        if self.peek() != Some('(') {
            return Ok(Lineage::Original(name));
        }
        self.pos += 1;
        let mut args = vec![self.expr()?];
        loop {
            match self.peek() {
                Some(',') | Some('|') => {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                Some(')') => {
                    self.pos += 1;
                    return Ok(Lineage::Derived { op: name, args });
                }
                Some(c) => {
                    return Err(LineageParseError::Unexpected {
                        found: c,
                        offset: self.chars[self.pos].0,
                    })
                }
                None => return Err(LineageParseError::Unterminated),
            }
        }
    }
}
