//! Structural Solidity parser: definitions, statements and identifier sets
//! with source spans. Expressions are kept as token runs.

use std::collections::BTreeSet;

use super::lexer::{tokenize, TokKind, Token};
use super::{AstNode, NodeKind, SliceError, Span};

/// Words that never name a user declaration.
pub const RESERVED: &[&str] = &[
    "abstract",
    "address",
    "after",
    "alias",
    "anonymous",
    "apply",
    "as",
    "assembly",
    "auto",
    "bool",
    "break",
    "byte",
    "bytes",
    "calldata",
    "case",
    "catch",
    "constant",
    "constructor",
    "continue",
    "contract",
    "copyof",
    "days",
    "default",
    "define",
    "delete",
    "do",
    "else",
    "emit",
    "enum",
    "ether",
    "event",
    "external",
    "fallback",
    "false",
    "final",
    "finney",
    "fixed",
    "for",
    "function",
    "gwei",
    "hex",
    "hours",
    "if",
    "immutable",
    "implements",
    "import",
    "in",
    "indexed",
    "inline",
    "int",
    "interface",
    "internal",
    "is",
    "let",
    "library",
    "macro",
    "mapping",
    "match",
    "memory",
    "minutes",
    "modifier",
    "mutable",
    "new",
    "null",
    "of",
    "override",
    "partial",
    "payable",
    "pragma",
    "private",
    "promise",
    "public",
    "pure",
    "receive",
    "reference",
    "relocatable",
    "return",
    "returns",
    "sealed",
    "seconds",
    "sizeof",
    "static",
    "storage",
    "string",
    "struct",
    "super",
    "supports",
    "switch",
    "szabo",
    "this",
    "throw",
    "true",
    "try",
    "type",
    "typedef",
    "typeof",
    "ufixed",
    "uint",
    "unchecked",
    "using",
    "var",
    "view",
    "virtual",
    "weeks",
    "wei",
    "while",
    "years",
];

pub fn is_reserved(word: &str) -> bool {
    if RESERVED.contains(&word) {
        return true;
    }
    // Sized elementary types: uint8..uint256, int.., bytes1..bytes32, fixedMxN.
    for prefix in ["uint", "int", "bytes", "ufixed", "fixed"] {
        if let Some(rest) = word.strip_prefix(prefix) {
            if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit() || c == 'x') {
                return true;
            }
        }
    }
    false
}

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>=", ">>>=",
];

const DATA_LOCATIONS: &[&str] = &["memory", "storage", "calldata"];

/// Statement-leading keywords that rule out a declaration reading.
const STATEMENT_KEYWORDS: &[&str] = &[
    "return", "emit", "delete", "throw", "break", "continue", "revert", "new", "_",
];

pub fn parse(source: &str) -> Result<AstNode, SliceError> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks: &toks, pos: 0 };
    let children = p.source_unit()?;
    let (end_line, end_col) = end_of_source(source);
    Ok(AstNode {
        kind: NodeKind::Statement,
        span: Span {
            start_line: 1,
            start_col: 1,
            end_line,
            end_col,
        },
        range: 0..source.len(),
        identifiers: children.iter().flat_map(|c| c.identifiers.iter().cloned()).collect(),
        children,
        name: None,
        declares: Vec::new(),
        assigns: Vec::new(),
        params: Vec::new(),
        header: None,
    })
}

fn end_of_source(source: &str) -> (u32, u32) {
    let trimmed = source.strip_suffix('\n').unwrap_or(source);
    let trimmed = trimmed.strip_suffix('\r').unwrap_or(trimmed);
    let line = trimmed.matches('\n').count() as u32 + 1;
    let last = trimmed.rsplit('\n').next().unwrap_or("");
    (line, (last.chars().count() as u32).max(1))
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

fn word_list(words: &BTreeSet<String>) -> Vec<String> {
    words.iter().cloned().collect()
}

/// Identifier names (and member-access chains) in a token run.
fn collect_identifiers(toks: &[Token]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < toks.len() {
        if !toks[i].is_ident() {
            i += 1;
            continue;
        }
        let mut parts = vec![toks[i].text.as_str()];
        let mut j = i;
        while j + 2 < toks.len() && toks[j + 1].is(".") && toks[j + 2].is_ident() {
            parts.push(toks[j + 2].text.as_str());
            j += 2;
        }
        for part in &parts {
            if !is_reserved(part) {
                out.insert(part.to_string());
            }
        }
        for n in 2..=parts.len() {
            if !is_reserved(parts[0]) {
                out.insert(parts[..n].join("."));
            }
        }
        i = j + 1;
    }
    out
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_is(&self, s: &str) -> bool {
        self.peek().is_some_and(|t| t.is(s))
    }

    fn fail_here(&self, reason: impl Into<String>) -> SliceError {
        let (line, column) = match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        };
        SliceError::ParseFailure {
            line,
            column,
            reason: reason.into(),
        }
    }

    fn span(&self, a: usize, b: usize) -> Span {
        let (s, e) = (&self.toks[a], &self.toks[b]);
        Span {
            start_line: s.line,
            start_col: s.col,
            end_line: e.end_line,
            end_col: e.end_col,
        }
    }

    fn node(&self, kind: NodeKind, a: usize, b: usize) -> AstNode {
        AstNode {
            kind,
            span: self.span(a, b),
            range: self.toks[a].start..self.toks[b].end,
            identifiers: collect_identifiers(&self.toks[a..=b]),
            children: Vec::new(),
            name: None,
            declares: Vec::new(),
            assigns: Vec::new(),
            params: Vec::new(),
            header: None,
        }
    }

    fn identifier_leaves(&self, a: usize, b: usize) -> Vec<AstNode> {
        (a..=b)
            .filter(|&i| self.toks[i].is_ident() && !is_reserved(&self.toks[i].text))
            .map(|i| {
                let mut leaf = self.node(NodeKind::Identifier, i, i);
                leaf.name = Some(self.toks[i].text.clone());
                leaf
            })
            .collect()
    }

    /// Advances past the next `;` at bracket depth zero; returns its index.
    fn until_semicolon(&mut self) -> Result<usize, SliceError> {
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(self.fail_here("expected `;`"));
                    }
                }
                ";" if depth == 0 => {
                    let at = self.pos;
                    self.pos += 1;
                    return Ok(at);
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.fail_here("unexpected end of input, expected `;`"))
    }

    /// Advances to the next `{` or `;` at paren depth zero without consuming it.
    fn until_body(&mut self) -> Result<usize, SliceError> {
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            match t.text.as_str() {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "{" | ";" if depth == 0 => return Ok(self.pos),
                "}" => return Err(self.fail_here("unexpected `}`")),
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.fail_here("unexpected end of input"))
    }

    /// Consumes a balanced `(...)` group starting at the current `(`;
    /// returns the index of the closing paren.
    fn paren_group(&mut self) -> Result<usize, SliceError> {
        if !self.peek_is("(") {
            return Err(self.fail_here("expected `(`"));
        }
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            match t.text.as_str() {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        let at = self.pos;
                        self.pos += 1;
                        return Ok(at);
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.fail_here("unbalanced `(`"))
    }

    /// Consumes a balanced `{...}` group without structure (assembly).
    fn brace_group(&mut self) -> Result<usize, SliceError> {
        if !self.peek_is("{") {
            return Err(self.fail_here("expected `{`"));
        }
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            match t.text.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth == 0 {
                        let at = self.pos;
                        self.pos += 1;
                        return Ok(at);
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.fail_here("unbalanced `{`"))
    }

    fn source_unit(&mut self) -> Result<Vec<AstNode>, SliceError> {
        let mut out = Vec::new();
        while let Some(t) = self.peek() {
            let start = self.pos;
            match t.text.as_str() {
                ";" => {
                    self.pos += 1;
                }
                "}" => return Err(self.fail_here("unexpected `}` at top level")),
                "pragma" => {
                    let end = self.until_semicolon()?;
                    out.push(self.node(NodeKind::Pragma, start, end));
                }
                "import" | "using" => {
                    let end = self.until_semicolon()?;
                    out.push(self.node(NodeKind::Statement, start, end));
                }
                "abstract" | "contract" | "interface" | "library" => out.push(self.contract()?),
                "struct" => out.push(self.struct_def()?),
                "enum" => out.push(self.enum_def()?),
                "function" => out.push(self.callable(NodeKind::FunctionDef)?),
                "event" | "error" => out.push(self.event_def()?),
                _ => out.push(self.var_decl()?),
            }
        }
        Ok(out)
    }

    fn contract(&mut self) -> Result<AstNode, SliceError> {
        let start = self.pos;
        if self.peek_is("abstract") {
            self.pos += 1;
        }
        match self.peek() {
            Some(t) if matches!(t.text.as_str(), "contract" | "interface" | "library") => self.pos += 1,
            _ => return Err(self.fail_here("expected `contract`")),
        }
        let name = match self.peek() {
            Some(t) if t.is_ident() && !is_reserved(&t.text) => t.text.clone(),
            _ => return Err(self.fail_here("expected contract name")),
        };
        self.pos += 1;
        let open = self.until_body()?;
        if !self.peek_is("{") {
            return Err(self.fail_here("expected `{` after contract header"));
        }
        self.pos += 1;
        let mut members = Vec::new();
        loop {
            let Some(t) = self.peek() else {
                return Err(self.fail_here("unexpected end of input inside contract"));
            };
            let at = self.pos;
            match t.text.as_str() {
                "}" => break,
                ";" => self.pos += 1,
                "function" | "constructor" | "fallback" | "receive" => {
                    members.push(self.callable(NodeKind::FunctionDef)?)
                }
                "modifier" => members.push(self.callable(NodeKind::ModifierDef)?),
                "event" | "error" => members.push(self.event_def()?),
                "struct" => members.push(self.struct_def()?),
                "enum" => members.push(self.enum_def()?),
                "using" => {
                    let end = self.until_semicolon()?;
                    members.push(self.node(NodeKind::Statement, at, end));
                }
                _ => members.push(self.var_decl()?),
            }
        }
        let close = self.pos;
        self.pos += 1;
        let mut node = self.node(NodeKind::ContractDef, start, close);
        node.name = Some(name);
        node.header = Some(self.span(start, open));
        node.children = members;
        Ok(node)
    }

    fn struct_def(&mut self) -> Result<AstNode, SliceError> {
        let start = self.pos;
        self.pos += 1;
        let name = match self.peek() {
            Some(t) if t.is_ident() => t.text.clone(),
            _ => return Err(self.fail_here("expected struct name")),
        };
        self.pos += 1;
        if !self.peek_is("{") {
            return Err(self.fail_here("expected `{` after struct name"));
        }
        let open = self.pos;
        self.pos += 1;
        let mut fields = Vec::new();
        while !self.peek_is("}") {
            if self.peek().is_none() {
                return Err(self.fail_here("unexpected end of input inside struct"));
            }
            fields.push(self.var_decl()?);
        }
        let close = self.pos;
        self.pos += 1;
        let mut node = self.node(NodeKind::StructDef, start, close);
        node.name = Some(name);
        node.header = Some(self.span(start, open));
        node.children = fields;
        Ok(node)
    }

    fn enum_def(&mut self) -> Result<AstNode, SliceError> {
        let start = self.pos;
        self.pos += 1;
        let name = match self.peek() {
            Some(t) if t.is_ident() => t.text.clone(),
            _ => return Err(self.fail_here("expected enum name")),
        };
        self.pos += 1;
        let open = self.pos;
        let close = self.brace_group()?;
        let mut node = self.node(NodeKind::StructDef, start, close);
        node.name = Some(name);
        node.header = Some(self.span(start, open));
        Ok(node)
    }

    fn event_def(&mut self) -> Result<AstNode, SliceError> {
        let start = self.pos;
        let end = self.until_semicolon()?;
        let mut node = self.node(NodeKind::EventDef, start, end);
        node.name = self
            .toks
            .get(start + 1)
            .filter(|t| t.is_ident())
            .map(|t| t.text.clone());
        Ok(node)
    }

    /// State variables, struct fields and file-level constants.
    fn var_decl(&mut self) -> Result<AstNode, SliceError> {
        let start = self.pos;
        let end = self.until_semicolon()?;
        let mut node = self.node(NodeKind::StateVarDecl, start, end);
        let body = &self.toks[start..end];
        let mut depth = 0i32;
        let mut name = None;
        for t in body {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                "=" if depth == 0 => break,
                _ if depth == 0 && t.is_ident() && !is_reserved(&t.text) => name = Some(t.text.clone()),
                _ => {}
            }
        }
        if body.len() < 2 {
            return Err(SliceError::ParseFailure {
                line: self.toks[start].line,
                column: self.toks[start].col,
                reason: "expected a declaration".into(),
            });
        }
        node.name = name;
        node.children = self.identifier_leaves(start, end);
        Ok(node)
    }

    /// Functions, constructors, fallback/receive and modifiers.
    fn callable(&mut self, kind: NodeKind) -> Result<AstNode, SliceError> {
        let start = self.pos;
        let keyword = self.toks[start].text.clone();
        self.pos += 1;
        let name = match self.peek() {
            Some(t) if keyword == "function" || keyword == "modifier" => {
                if t.is_ident() && !is_reserved(&t.text) {
                    t.text.clone()
                } else if t.is_ident() {
                    // `function receive()` and friends in old sources
                    t.text.clone()
                } else {
                    keyword.clone()
                }
            }
            _ => keyword.clone(),
        };
        let header_end = self.until_body()?;
        let params = self.parameter_names(start, header_end);
        let mut children = Vec::new();
        let end = if self.peek_is(";") {
            self.pos += 1;
            header_end
        } else {
            self.pos += 1;
            while !self.peek_is("}") {
                if self.peek().is_none() {
                    return Err(self.fail_here("unexpected end of input inside function body"));
                }
                if let Some(stmt) = self.statement()? {
                    children.push(stmt);
                }
            }
            let close = self.pos;
            self.pos += 1;
            close
        };
        let mut node = self.node(kind, start, end);
        node.name = Some(name);
        node.params = params;
        node.header = Some(self.span(start, header_end));
        node.children = children;
        Ok(node)
    }

    /// Names in a parameter list: identifiers directly followed by `,` or `)`.
    fn parameter_names(&self, a: usize, b: usize) -> Vec<String> {
        let mut names = BTreeSet::new();
        let mut depth = 0;
        for i in a..b {
            let t = &self.toks[i];
            match t.text.as_str() {
                "(" => depth += 1,
                ")" => depth -= 1,
                _ => {}
            }
            if depth < 1 || !t.is_ident() || is_reserved(&t.text) || DATA_LOCATIONS.contains(&t.text.as_str()) {
                continue;
            }
            let next = self.toks.get(i + 1).map(|t| t.text.as_str());
            let prev = i.checked_sub(1).map(|p| &self.toks[p]);
            let typed = prev.is_some_and(|p| p.is_ident() || p.is("]") || p.is(")"));
            if matches!(next, Some(",") | Some(")")) && typed {
                names.insert(t.text.clone());
            }
        }
        word_list(&names)
    }

    fn compound(&self, start: usize, end: usize, header_end: usize, children: Vec<AstNode>) -> AstNode {
        let mut node = self.node(NodeKind::Statement, start, end);
        node.header = Some(self.span(start, header_end));
        node.children = children;
        node
    }

    fn expression(&self, a: usize, b: usize) -> Option<AstNode> {
        if a > b {
            return None;
        }
        let mut node = self.node(NodeKind::Expression, a, b);
        node.children = self.identifier_leaves(a, b);
        Some(node)
    }

    fn body_statement(&mut self) -> Result<AstNode, SliceError> {
        let at = self.pos;
        match self.statement()? {
            Some(s) => Ok(s),
            // A lone `;` body: keep a node so spans stay contiguous.
            None => Ok(self.node(NodeKind::Statement, at, at)),
        }
    }

    fn statement(&mut self) -> Result<Option<AstNode>, SliceError> {
        let Some(t) = self.peek() else {
            return Err(self.fail_here("unexpected end of input"));
        };
        let start = self.pos;
        let stmt = match t.text.as_str() {
            ";" => {
                self.pos += 1;
                return Ok(None);
            }
            "{" => {
                self.pos += 1;
                let mut children = Vec::new();
                while !self.peek_is("}") {
                    if self.peek().is_none() {
                        return Err(self.fail_here("unterminated block"));
                    }
                    if let Some(s) = self.statement()? {
                        children.push(s);
                    }
                }
                let close = self.pos;
                self.pos += 1;
                let mut node = self.node(NodeKind::Statement, start, close);
                node.header = Some(self.span(start, start));
                node.children = children;
                node
            }
            "if" | "while" => {
                self.pos += 1;
                let open = self.pos;
                let close = self.paren_group()?;
                let mut children: Vec<AstNode> = self.expression(open + 1, close - 1).into_iter().collect();
                children.push(self.body_statement()?);
                if t.is("if") && self.peek_is("else") {
                    self.pos += 1;
                    children.push(self.body_statement()?);
                }
                let end = self.pos - 1;
                self.compound(start, end, close, children)
            }
            "for" => {
                self.pos += 1;
                let open = self.pos;
                let close = self.paren_group()?;
                let mut children: Vec<AstNode> = self.expression(open + 1, close - 1).into_iter().collect();
                children.push(self.body_statement()?);
                let end = self.pos - 1;
                let mut node = self.compound(start, end, close, children);
                // `for (uint i = 0; ...)` declares `i`.
                let init_end = (open + 1..close).find(|&i| self.toks[i].is(";")).unwrap_or(close);
                let (declares, _) = self.classify_simple(open + 1, init_end);
                node.declares = declares;
                node
            }
            "do" => {
                self.pos += 1;
                let body = self.body_statement()?;
                if !self.peek_is("while") {
                    return Err(self.fail_here("expected `while` after do-block"));
                }
                self.pos += 1;
                let open = self.pos;
                let close = self.paren_group()?;
                let mut children = vec![body];
                children.extend(self.expression(open + 1, close - 1));
                let end = if self.peek_is(";") {
                    self.pos += 1;
                    self.pos - 1
                } else {
                    close
                };
                self.compound(start, end, start, children)
            }
            "unchecked" => {
                self.pos += 1;
                let block = self.body_statement()?;
                let end = self.pos - 1;
                self.compound(start, end, start, vec![block])
            }
            "assembly" => {
                self.pos += 1;
                if self.peek().is_some_and(|t| t.kind == TokKind::Str) {
                    self.pos += 1;
                }
                if self.peek_is("(") {
                    self.paren_group()?;
                }
                let end = self.brace_group()?;
                let mut node = self.node(NodeKind::Statement, start, end);
                node.children = self.identifier_leaves(start, end);
                node
            }
            "try" => {
                self.pos += 1;
                let header_end = self.until_body()?;
                let mut children: Vec<AstNode> = self.expression(start + 1, header_end - 1).into_iter().collect();
                children.push(self.body_statement()?);
                while self.peek_is("catch") {
                    let catch_start = self.pos;
                    self.pos += 1;
                    let catch_header = self.until_body()?;
                    let block = self.body_statement()?;
                    let end = self.pos - 1;
                    children.push(self.compound(catch_start, end, catch_header, vec![block]));
                }
                let end = self.pos - 1;
                self.compound(start, end, header_end, children)
            }
            _ => {
                let end = self.until_semicolon()?;
                let mut node = self.node(NodeKind::Statement, start, end);
                let (declares, assigns) = self.classify_simple(start, end);
                node.declares = declares;
                node.assigns = assigns;
                node.children = self.identifier_leaves(start, end);
                node
            }
        };
        Ok(Some(stmt))
    }

    /// Splits a simple statement `[a, b)` into declared names and
    /// assignment targets.
    fn classify_simple(&self, a: usize, b: usize) -> (Vec<String>, Vec<String>) {
        let toks = &self.toks[a..b];
        if toks.is_empty() {
            return (Vec::new(), Vec::new());
        }
        let mut depth = 0i32;
        let mut assign_at = None;
        for (i, t) in toks.iter().enumerate() {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                op if depth == 0 && ASSIGN_OPS.contains(&op) => {
                    assign_at = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let lhs = &toks[..assign_at.unwrap_or(toks.len())];
        if lhs.is_empty() || STATEMENT_KEYWORDS.contains(&lhs[0].text.as_str()) {
            return (Vec::new(), Vec::new());
        }

        if lhs[0].is("(") {
            // Tuple forms: `(bool ok, bytes memory data) = ...` or `(a, b) = ...`.
            let mut declared = Vec::new();
            let mut targets = Vec::new();
            for i in 1..lhs.len() {
                let t = &lhs[i];
                if !t.is_ident() || is_reserved(&t.text) {
                    continue;
                }
                let next = lhs.get(i + 1).map(|n| n.text.as_str());
                if !matches!(next, Some(",") | Some(")")) {
                    continue;
                }
                let prev = &lhs[i - 1];
                if prev.is_ident() || prev.is("]") {
                    declared.push(t.text.clone());
                } else {
                    targets.push(t.text.clone());
                }
            }
            if assign_at.is_none() {
                return (Vec::new(), Vec::new());
            }
            return if declared.is_empty() {
                (Vec::new(), targets)
            } else {
                (declared, Vec::new())
            };
        }

        let last = &lhs[lhs.len() - 1];
        if lhs.len() >= 2 && last.is_ident() && !is_reserved(&last.text) {
            let prev = &lhs[lhs.len() - 2];
            let typed = prev.is_ident() || prev.is("]") || prev.is(")");
            if typed && !has_member_access_at_end(lhs) {
                return (vec![last.text.clone()], Vec::new());
            }
        }
        if assign_at.is_some() && lhs[0].is_ident() {
            let mut targets = vec![lhs[0].text.clone()];
            let chain = member_chain(lhs);
            if chain.contains('.') {
                targets.push(chain);
            }
            return (Vec::new(), targets);
        }
        (Vec::new(), Vec::new())
    }
}

/// `a.b` on the left: the final identifier is a member, not a new name.
fn has_member_access_at_end(lhs: &[Token]) -> bool {
    lhs.len() >= 2 && lhs[lhs.len() - 2].is(".")
}

fn member_chain(toks: &[Token]) -> String {
    let mut parts = vec![toks[0].text.as_str()];
    let mut j = 0;
    while j + 2 < toks.len() && toks[j + 1].is(".") && toks[j + 2].is_ident() {
        parts.push(toks[j + 2].text.as_str());
        j += 2;
    }
    parts.join(".")
}
