use super::{validate, ColRef, DiagCode, Diagnostic, Kv, Op, Pos, Program, Stmt};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Arrow,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("'{s}'"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Arrow => "`<=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(DiagCode::SyntaxError, pos, msg)
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, chars: &[char]| {
        if chars[*i] == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, &chars);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, &chars);
            advance(&mut i, &mut line, &mut col, &chars);
            loop {
                if i >= chars.len() {
                    return Err(syntax(pos, "unterminated comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, &chars);
                    advance(&mut i, &mut line, &mut col, &chars);
                    break;
                }
                advance(&mut i, &mut line, &mut col, &chars);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                advance(&mut i, &mut line, &mut col, &chars);
            }
            toks.push((Tok::Ident(s), pos));
            continue;
        }
        if c == '\'' {
            advance(&mut i, &mut line, &mut col, &chars);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax(pos, "unterminated string")),
                    Some('\'') => {
                        advance(&mut i, &mut line, &mut col, &chars);
                        break;
                    }
                    Some('\\') if matches!(chars.get(i + 1), Some('\'') | Some('\\')) => {
                        advance(&mut i, &mut line, &mut col, &chars);
                        s.push(chars[i]);
                        advance(&mut i, &mut line, &mut col, &chars);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, &chars);
                    }
                }
            }
            toks.push((Tok::Str(s), pos));
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '<' if chars.get(i + 1) == Some(&'=') => {
                advance(&mut i, &mut line, &mut col, &chars);
                Tok::Arrow
            }
            _ => return Err(syntax(pos, format!("unexpected character `{c}`"))),
        };
        advance(&mut i, &mut line, &mut col, &chars);
        toks.push((tok, pos));
    }
    toks.push((Tok::Eof, Pos { line, col }));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), Diagnostic> {
        let (t, pos) = self.next();
        if t == want {
            Ok(())
        } else {
            Err(syntax(
                pos,
                format!("expected {}, found {}", want.describe(), t.describe()),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), Diagnostic> {
        match self.next() {
            (Tok::Ident(s), pos) => Ok((s, pos)),
            (t, pos) => Err(syntax(
                pos,
                format!("expected a name, found {}", t.describe()),
            )),
        }
    }

    fn string(&mut self) -> Result<String, Diagnostic> {
        match self.next() {
            (Tok::Str(s), _) => Ok(s),
            (t, pos) => Err(syntax(
                pos,
                format!("expected a quoted string, found {}", t.describe()),
            )),
        }
    }

    fn names(&mut self) -> Result<Vec<String>, Diagnostic> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RParen {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(self.ident()?.0);
            match self.next() {
                (Tok::Comma, _) => continue,
                (Tok::RParen, _) => return Ok(out),
                (t, pos) => {
                    return Err(syntax(
                        pos,
                        format!("expected `,` or `)`, found {}", t.describe()),
                    ))
                }
            }
        }
    }

    fn colref(&mut self) -> Result<ColRef, Diagnostic> {
        let (list, _) = self.ident()?;
        Ok(ColRef {
            list,
            cols: self.names()?,
        })
    }

    fn comma(&mut self) -> Result<(), Diagnostic> {
        self.expect(Tok::Comma)
    }

    /// A `[...]` list of pairs; a bare `''` is accepted as an empty list.
    fn kv(&mut self) -> Result<Kv, Diagnostic> {
        if let Tok::Str(s) = self.peek() {
            if s.is_empty() {
                self.next();
                return Ok(Kv::default());
            }
        }
        self.expect(Tok::LBracket)?;
        let mut kv = Kv::default();
        if *self.peek() == Tok::RBracket {
            self.next();
            return Ok(kv);
        }
        loop {
            self.expect(Tok::LParen)?;
            let k = self.string()?;
            self.comma()?;
            let v = self.string()?;
            self.expect(Tok::RParen)?;
            kv.0.push((k, v));
            match self.next() {
                (Tok::Comma, _) => continue,
                (Tok::RBracket, _) => return Ok(kv),
                (t, pos) => {
                    return Err(syntax(
                        pos,
                        format!("expected `,` or `]`, found {}", t.describe()),
                    ))
                }
            }
        }
    }

    fn stmt(&mut self) -> Result<Stmt, Diagnostic> {
        let (out, pos) = self.ident()?;
        let cols = self.names()?;
        self.expect(Tok::Arrow)?;
        let (kind, kpos) = self.ident()?;
        self.expect(Tok::LParen)?;
        let op = match kind.as_str() {
            "APPLY" => {
                let input = self.colref()?;
                self.comma()?;
                let copy = self.colref()?;
                self.comma()?;
                let comp = self.string()?;
                self.comma()?;
                let stage = self.string()?;
                self.comma()?;
                Op::Apply {
                    input,
                    copy,
                    comp,
                    stage,
                    kv: self.kv()?,
                }
            }
            "FILTER" | "HASH" => {
                let input = self.colref()?;
                self.comma()?;
                let copy = self.colref()?;
                self.comma()?;
                let comp = self.string()?;
                self.comma()?;
                let kv = self.kv()?;
                if kind == "FILTER" {
                    Op::Filter {
                        input,
                        copy,
                        comp,
                        kv,
                    }
                } else {
                    Op::Hash {
                        input,
                        copy,
                        comp,
                        kv,
                    }
                }
            }
            "JOIN" => {
                let left_hash = self.colref()?;
                self.comma()?;
                let left_copy = self.colref()?;
                self.comma()?;
                let right_hash = self.colref()?;
                self.comma()?;
                let right_copy = self.colref()?;
                self.comma()?;
                let comp = self.string()?;
                self.comma()?;
                Op::Join {
                    left_hash,
                    left_copy,
                    right_hash,
                    right_copy,
                    comp,
                    kv: self.kv()?,
                }
            }
            "AGGREGATE" => {
                let key = self.colref()?;
                self.comma()?;
                let value = self.colref()?;
                self.comma()?;
                let comp = self.string()?;
                self.comma()?;
                Op::Aggregate {
                    key,
                    value,
                    comp,
                    kv: self.kv()?,
                }
            }
            "OUTPUT" => {
                let input = self.colref()?;
                self.comma()?;
                let db = self.string()?;
                self.comma()?;
                let set = self.string()?;
                self.comma()?;
                let comp = self.string()?;
                self.comma()?;
                Op::Output {
                    input,
                    db,
                    set,
                    comp,
                    kv: self.kv()?,
                }
            }
            other => return Err(syntax(kpos, format!("unknown operation `{other}`"))),
        };
        self.expect(Tok::RParen)?;
        self.expect(Tok::Semi)?;
        Ok(Stmt { out, cols, op, pos })
    }
}

/// Parses program text without semantic checks.
pub fn parse_unchecked(text: &str) -> Result<Program, Diagnostic> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
    };
    let mut stmts = Vec::new();
    while *p.peek() != Tok::Eof {
        stmts.push(p.stmt()?);
    }
    Ok(Program { stmts })
}

/// Parses program text and rejects undefined inputs and duplicate outputs.
pub fn parse(text: &str) -> Result<Program, Diagnostic> {
    let program = parse_unchecked(text)?;
    let first = validate(&program)
        .into_iter()
        .find(|d| matches!(d.code, DiagCode::UndefinedInput | DiagCode::DuplicateOutput));
    match first {
        Some(d) => Err(d),
        None => Ok(program),
    }
}
