use std::fmt;

use crate::error::{Error, Result};

/// An n-ary labeled constituency tree over word leaves.
///
/// A leaf is a pre-terminal: it carries its part-of-speech label and the
/// surface token, and has no children. Internal nodes carry a phrase label
/// and at least one child.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParseTree {
    label: String,
    children: Vec<ParseTree>,
    token: Option<String>,
}

impl ParseTree {
    pub fn leaf(label: impl Into<String>, token: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            children: Vec::new(),
            token: Some(token.into()),
        }
    }

    /// Panics if `children` is empty; use [`ParseTree::try_node`] for
    /// untrusted input.
    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        Self::try_node(label, children).expect("internal node needs at least one child")
    }

    pub fn try_node(label: impl Into<String>, children: Vec<ParseTree>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Parse {
                offset: 0,
                message: "empty label".into(),
            });
        }
        if children.is_empty() {
            return Err(Error::Parse {
                offset: 0,
                message: format!("internal node {label} has no children"),
            });
        }
        Ok(Self {
            label,
            children,
            token: None,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[ParseTree] {
        &self.children
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn is_leaf(&self) -> bool {
        self.token.is_some()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(ParseTree::leaf_count).sum()
        }
    }

    /// Surface tokens in left-to-right order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.leaf_count());
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_tokens(out)),
        }
    }

    /// Nodes in depth-first pre-order (parents before children, children
    /// left to right).
    pub fn preorder(&self) -> Vec<&ParseTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.token {
            Some(t) => write!(f, "({} {})", self.label, t),
            None => {
                write!(f, "({}", self.label)?;
                for child in &self.children {
                    write!(f, " {child}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl std::str::FromStr for ParseTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_bracketed(s)
    }
}

/// Parses one Penn-Treebank style bracketing, e.g. `(NP (DT the) (NN man))`.
///
/// An unlabeled outer wrapper with a single child, as emitted by many
/// parsers (`( (S ...) )`), is removed. Error offsets are 1-based byte
/// positions; running off the end of the input reports `len + 1`.
pub fn parse_bracketed(text: &str) -> Result<ParseTree> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    parser.skip_ws();
    let tree = parser.tree(true)?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("trailing input after tree"));
    }
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn atom(&mut self) -> &str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        // only ASCII delimiters were skipped, so the slice is valid UTF-8
        std::str::from_utf8(&self.src[start..self.pos]).expect("utf-8 input")
    }

    fn expect_close(&mut self) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(b')') => {
                self.pos += 1;
                Ok(())
            }
            None => Err(self.error("unbalanced parentheses: missing ')'")),
            Some(_) => Err(self.error("expected ')'")),
        }
    }

    fn tree(&mut self, outermost: bool) -> Result<ParseTree> {
        match self.peek() {
            Some(b'(') => self.pos += 1,
            None => return Err(self.error("unexpected end of input")),
            Some(b')') => return Err(self.error("unbalanced parentheses: unexpected ')'")),
            Some(_) => return Err(self.error("expected '('")),
        }
        self.skip_ws();
        let label_start = self.pos;
        let label = self.atom().to_string();
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unbalanced parentheses: missing ')'")),
            Some(b')') if label.is_empty() => Err(self.error("empty bracket")),
            Some(b')') => Err(self.error(format!("leaf {label} has no token"))),
            Some(b'(') => {
                let mut children = Vec::new();
                while self.peek() == Some(b'(') {
                    children.push(self.tree(false)?);
                    self.skip_ws();
                }
                if self.peek().is_some() && self.peek() != Some(b')') {
                    return Err(self.error("bare token among child constituents"));
                }
                self.expect_close()?;
                if label.is_empty() {
                    if outermost && children.len() == 1 {
                        return Ok(children.pop().expect("one child"));
                    }
                    return Err(Error::Parse {
                        offset: label_start + 1,
                        message: "empty label".into(),
                    });
                }
                Ok(ParseTree {
                    label,
                    children,
                    token: None,
                })
            }
            Some(_) => {
                if label.is_empty() {
                    return Err(Error::Parse {
                        offset: label_start + 1,
                        message: "empty label".into(),
                    });
                }
                let token = self.atom().to_string();
                self.expect_close()?;
                Ok(ParseTree::leaf(label, token))
            }
        }
    }
}
