//! Tokenizer and S-expression reader with source positions.

use super::{ParseError, ParseErrorKind, SourceSpan};

#[derive(Debug, Clone)]
pub enum SExpr {
    Sym(String, SourceSpan),
    List(Vec<SExpr>, SourceSpan),
}

impl SExpr {
    pub fn span(&self) -> &SourceSpan {
        match self {
            SExpr::Sym(_, s) | SExpr::List(_, s) => s,
        }
    }

    pub fn sym(&self) -> Option<&str> {
        match self {
            SExpr::Sym(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(l, _) => Some(l),
            _ => None,
        }
    }

    /// Lowercased head symbol of a list.
    pub fn head(&self) -> Option<String> {
        self.list().and_then(|l| l.first()).and_then(|h| h.sym()).map(|s| s.to_ascii_lowercase())
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn span(&self, start: usize) -> SourceSpan {
        SourceSpan { file: None, line: self.line, column: self.col, start, end: start }
    }

    fn bump(&mut self, c: char) {
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else if c != '\r' {
            self.col += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }
}

/// Reads all top-level expressions. Unclosed lists at the end of the input
/// are closed implicitly and reported through the second return value, so a
/// caller can prefer a more precise error found while interpreting the tree.
pub fn read(text: &str) -> Result<(Vec<SExpr>, Option<ParseError>), ParseError> {
    let mut cur = Cursor { text, pos: 0, line: 1, col: 1 };
    let mut stack: Vec<(Vec<SExpr>, SourceSpan)> = Vec::new();
    let mut top = Vec::new();
    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump(c);
            continue;
        }
        if c == ';' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump(c);
            }
            continue;
        }
        let start = cur.pos;
        let span = cur.span(start);
        if c == '(' {
            cur.bump(c);
            stack.push((Vec::new(), span));
            continue;
        }
        if c == ')' {
            cur.bump(c);
            let (items, mut open) = match stack.pop() {
                Some(x) => x,
                None => {
                    return Err(ParseError::new(ParseErrorKind::Syntax, "unbalanced `)`", span));
                }
            };
            open.end = cur.pos;
            let e = SExpr::List(items, open);
            match stack.last_mut() {
                Some((items, _)) => items.push(e),
                None => top.push(e),
            }
            continue;
        }
        while let Some(c) = cur.peek() {
            if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                break;
            }
            cur.bump(c);
        }
        let mut span = span;
        span.end = cur.pos;
        let e = SExpr::Sym(text[start..cur.pos].to_string(), span);
        match stack.last_mut() {
            Some((items, _)) => items.push(e),
            None => top.push(e),
        }
    }
    let mut pending = None;
    if let Some((_, open)) = stack.last() {
        pending = Some(
            ParseError::new(ParseErrorKind::Syntax, "unclosed `(`", open.clone()).expected("`)` before end of input"),
        );
    }
    while let Some((items, mut open)) = stack.pop() {
        open.end = text.len();
        let e = SExpr::List(items, open);
        match stack.last_mut() {
            Some((items, _)) => items.push(e),
            None => top.push(e),
        }
    }
    Ok((top, pending))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_with_positions() {
        let (t, pending) = read("; c\n(a (b c)\r\n d)").unwrap();
        assert!(pending.is_none());
        assert_eq!(t.len(), 1);
        let l = t[0].list().unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l[2].span().line, 3);
        assert_eq!(l[2].span().column, 2);
    }

    #[test]
    fn unclosed_is_reported_not_fatal() {
        let (t, pending) = read("(a (b").unwrap();
        assert_eq!(t.len(), 1);
        assert!(pending.is_some());
        assert!(read(")").is_err());
    }
}
