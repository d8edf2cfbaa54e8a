//! Expression grammar for Decision conditions, While conditions and Calculations.
//!
//! ```text
//! expr    := or
//! or      := and ( "||" and )*
//! and     := cmp ( "&&" cmp )*
//! cmp     := add ( ("==" | "!=" | "<" | "<=" | ">" | ">=") add )*
//! add     := mul ( ("+" | "-") mul )*
//! mul     := unary ( ("*" | "/" | "%") unary )*
//! unary   := ("!" | "-") unary | postfix
//! postfix := primary ( "[" expr "]" )*
//! primary := number | string | "true" | "false" | "null" | "${" name "}" | "(" expr ")"
//! ```
//!
//! Strings are single- or double-quoted with backslash escapes. Indexing reads
//! a list element or a table row field, e.g. `${row}['Salary']`.

use std::collections::BTreeSet;
use std::fmt;

use super::vars::is_variable_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "||",
            BinaryOp::And => "&&",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Str(String),
    Bool(bool),
    Null,
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) | Expr::Index(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Number(_) | Expr::Str(_) | Expr::Bool(_) | Expr::Null => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => write!(f, "{n}"),
            Expr::Str(s) => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Null => f.write_str("null"),
            Expr::Var(v) => write!(f, "${{{v}}}"),
            Expr::Unary(UnaryOp::Not, e) => write!(f, "!{e}"),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "-{e}"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Index(a, b) => write!(f, "{a}[{b}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expression error at offset {offset}: {message}")]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError { offset, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Var(String),
    True,
    False,
    Null,
    Op(BinaryOp),
    Not,
    LParen,
    RParen,
    LBracket,
    RBracket,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let peek = |i: usize| chars.get(i).map(|&(_, c)| c);
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while matches!(peek(i), Some('0'..='9' | '.')) {
                    i += 1;
                }
                if matches!(peek(i), Some('e' | 'E')) {
                    let save = i;
                    i += 1;
                    if matches!(peek(i), Some('+' | '-')) {
                        i += 1;
                    }
                    if matches!(peek(i), Some('0'..='9')) {
                        while matches!(peek(i), Some('0'..='9')) {
                            i += 1;
                        }
                    } else {
                        i = save;
                    }
                }
                let end = chars.get(i).map_or(src.len(), |&(p, _)| p);
                let text = &src[chars[start].0..end];
                let n: f64 = text.parse().map_err(|_| err(pos, format!("invalid number `{text}`")))?;
                toks.push((pos, Tok::Num(n)));
            }
            '\'' | '"' => {
                let quote = c;
                i += 1;
                let mut s = String::new();
                loop {
                    match peek(i) {
                        None => return Err(err(pos, "unterminated string literal")),
                        Some('\\') => {
                            match peek(i + 1) {
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(other) => s.push(other),
                                None => return Err(err(pos, "unterminated string literal")),
                            }
                            i += 2;
                        }
                        Some(ch) if ch == quote => {
                            i += 1;
                            break;
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push((pos, Tok::Str(s)));
            }
            '$' => {
                if peek(i + 1) != Some('{') {
                    return Err(err(pos, "expected `{` after `$`"));
                }
                let start = i + 2;
                let mut j = start;
                while let Some(ch) = peek(j) {
                    if ch == '}' {
                        break;
                    }
                    j += 1;
                }
                if peek(j) != Some('}') {
                    return Err(err(pos, "unterminated `${`"));
                }
                let name: String = chars[start..j].iter().map(|&(_, c)| c).collect();
                if !is_variable_name(&name) {
                    return Err(err(pos, format!("invalid variable name `{name}`")));
                }
                toks.push((pos, Tok::Var(name)));
                i = j + 1;
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while matches!(peek(i), Some(ch) if ch.is_ascii_alphanumeric() || ch == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                let tok = match word.as_str() {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "null" => Tok::Null,
                    _ => {
                        return Err(err(pos, format!("bare identifier `{word}`; variables are written `${{{word}}}`")))
                    }
                };
                toks.push((pos, tok));
            }
            _ => {
                let two = (c, peek(i + 1));
                let (tok, len) = match two {
                    ('|', Some('|')) => (Tok::Op(BinaryOp::Or), 2),
                    ('&', Some('&')) => (Tok::Op(BinaryOp::And), 2),
                    ('=', Some('=')) => (Tok::Op(BinaryOp::Eq), 2),
                    ('!', Some('=')) => (Tok::Op(BinaryOp::Ne), 2),
                    ('<', Some('=')) => (Tok::Op(BinaryOp::Le), 2),
                    ('>', Some('=')) => (Tok::Op(BinaryOp::Ge), 2),
                    ('<', _) => (Tok::Op(BinaryOp::Lt), 1),
                    ('>', _) => (Tok::Op(BinaryOp::Gt), 1),
                    ('+', _) => (Tok::Op(BinaryOp::Add), 1),
                    ('-', _) => (Tok::Op(BinaryOp::Sub), 1),
                    ('*', _) => (Tok::Op(BinaryOp::Mul), 1),
                    ('/', _) => (Tok::Op(BinaryOp::Div), 1),
                    ('%', _) => (Tok::Op(BinaryOp::Rem), 1),
                    ('!', _) => (Tok::Not, 1),
                    ('(', _) => (Tok::LParen, 1),
                    (')', _) => (Tok::RParen, 1),
                    ('[', _) => (Tok::LBracket, 1),
                    (']', _) => (Tok::RBracket, 1),
                    _ => return Err(err(pos, format!("unexpected character `{c}`"))),
                };
                toks.push((pos, tok));
                i += len;
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(err(self.offset(), format!("expected {what}")))
        }
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)))
            }
            Some(Tok::Op(BinaryOp::Sub)) => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.primary()?;
        while self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            let idx = self.expr(0)?;
            self.expect(Tok::RBracket, "`]`")?;
            e = Expr::Index(Box::new(e), Box::new(idx));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Some(Tok::Num(n)) => Ok(Expr::Number(n)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::Var(v)) => Ok(Expr::Var(v)),
            Some(Tok::True) => Ok(Expr::Bool(true)),
            Some(Tok::False) => Ok(Expr::Bool(false)),
            Some(Tok::Null) => Ok(Expr::Null),
            Some(Tok::LParen) => {
                let e = self.expr(0)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(_) => Err(err(offset, "expected an operand")),
            None => Err(err(offset, "unexpected end of expression")),
        }
    }
}

pub fn parse_expression(src: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(err(0, "empty expression"));
    }
    let mut p = Parser { toks, pos: 0, end: src.len() };
    let e = p.expr(0)?;
    if p.pos < p.toks.len() {
        return Err(err(p.offset(), "unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn show(src: &str) -> String {
        parse_expression(src).unwrap().to_string()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(show("1 + 2 * 3"), "(1 + (2 * 3))");
        assert_eq!(show("1 - 2 - 3"), "((1 - 2) - 3)");
        assert_eq!(show("${a} < 3 && ${b} || !${c}"), "(((${a} < 3) && ${b}) || !${c})");
        assert_eq!(show("${salary} * ${bonus_pct} / 100"), "((${salary} * ${bonus_pct}) / 100)");
        assert_eq!(show("-(1 + 2) % 4"), "(-(1 + 2) % 4)");
    }

    #[test]
    fn indexing_and_strings() {
        let e = parse_expression("${row}['Bonus percentage'] >= 10").unwrap();
        assert_eq!(e.variables().into_iter().collect::<Vec<_>>(), vec!["row".to_string()]);
        assert_eq!(e.to_string(), "(${row}['Bonus percentage'] >= 10)");
        assert_eq!(show(r#""it\'s""#), r"'it\'s'");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "1 +", "(1", "salary > 10", "${x", "${1a}", "1 ? 2", "$x", "[1]", "1 2"] {
            assert!(parse_expression(bad).is_err(), "{bad}");
        }
    }
}
