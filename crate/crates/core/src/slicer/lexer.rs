use super::SliceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Str,
    Punct,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    /// Position of the last character (inclusive).
    pub end_line: u32,
    pub end_col: u32,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is(&self, s: &str) -> bool {
        self.text == s
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokKind::Ident
    }
}

const OPERATORS: [&str; 28] = [
    ">>>=", "<<=", ">>=", ">>>", "==", "!=", "<=", ">=", "=>", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "|=", "&=", "^=", "<<", ">>", "**", "->", ":=", "=:", "..",
];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SliceError> {
    let mut cur = Cursor {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    // Position of the last consumed character, for inclusive end columns.
    let mut last = (1u32, 1u32);

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.rest().starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.rest().starts_with("/*") {
            let (line, col) = (cur.line, cur.col);
            cur.bump();
            cur.bump();
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(SliceError::ParseFailure {
                        line,
                        column: col,
                        reason: "unterminated block comment".into(),
                    });
                }
            }
            continue;
        }

        let (line, col, start) = (cur.line, cur.col, cur.pos);
        let kind = if is_ident_start(c) {
            while cur.peek().is_some_and(is_ident_char) {
                last = (cur.line, cur.col);
                cur.bump();
            }
            TokKind::Ident
        } else if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            while cur
                .peek()
                .is_some_and(|d| d.is_ascii_alphanumeric() || d == '_' || d == '.')
            {
                last = (cur.line, cur.col);
                cur.bump();
            }
            TokKind::Number
        } else if c == '"' || c == '\'' {
            let quote = c;
            cur.bump();
            loop {
                match cur.peek() {
                    None | Some('\n') => {
                        return Err(SliceError::ParseFailure {
                            line,
                            column: col,
                            reason: "unterminated string literal".into(),
                        })
                    }
                    Some('\\') => {
                        cur.bump();
                        cur.bump();
                    }
                    Some(q) if q == quote => {
                        last = (cur.line, cur.col);
                        cur.bump();
                        break;
                    }
                    Some(_) => {
                        cur.bump();
                    }
                }
            }
            TokKind::Str
        } else {
            let op = OPERATORS.iter().find(|op| cur.rest().starts_with(**op));
            let n = op.map_or(1, |op| op.chars().count());
            for _ in 0..n {
                last = (cur.line, cur.col);
                cur.bump();
            }
            TokKind::Punct
        };
        out.push(Token {
            kind,
            text: src[start..cur.pos].to_string(),
            line,
            col,
            end_line: last.0,
            end_col: last.1,
            start,
            end: cur.pos,
        });
    }
    Ok(out)
}
