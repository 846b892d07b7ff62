//! Lexer and recursive-descent parser for the knowledge DSL.
//!
//! ```text
//! program   := label_def+
//! label_def := IDENT ":=" expr ";"
//! expr      := or ("implies" expr)?
//! or        := and ("or" and)*
//! and       := unary ("and" unary)*
//! unary     := "not" unary | pred | cmp
//! cmp       := arith (("==" | "!=") arith)?
//! arith     := term ("+" term)*
//! term      := INT | IDENT | "(" expr ")"
//! pred      := ("same" | "all_diff" | "pair") "(" IDENT ("," IDENT)* ")"
//! ```
//!
//! `implies` is right-associative; `and`/`or` are left-associative. The
//! final `;` may be omitted. `#` starts a comment running to end of line.

use std::collections::HashSet;

use super::expr::{Expr, KnowledgeExpr, LabelDef, Predicate, Ty};
use super::schema::ConceptSchema;
use super::KnowledgeError;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Define,
    Semi,
    Plus,
    EqEq,
    NotEq,
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Not,
    Implies,
    Pred(Predicate),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Define => "`:=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Plus => "`+`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::And => "`and`".into(),
            Tok::Or => "`or`".into(),
            Tok::Not => "`not`".into(),
            Tok::Implies => "`implies`".into(),
            Tok::Pred(p) => format!("`{}`", p.keyword()),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, KnowledgeError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let (tok, len) = match two.as_str() {
            ":=" => (Tok::Define, 2),
            "==" => (Tok::EqEq, 2),
            "!=" => (Tok::NotEq, 2),
            _ => match c {
                ';' => (Tok::Semi, 1),
                '+' => (Tok::Plus, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                d if d.is_ascii_digit() => {
                    let mut j = i;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    let text: String = chars[i..j].iter().collect();
                    let v = text.parse::<i64>().map_err(|_| KnowledgeError::Syntax {
                        line: tl,
                        col: tc,
                        msg: format!("integer literal `{text}` out of range"),
                    })?;
                    (Tok::Int(v), j - i)
                }
                a if a.is_ascii_alphabetic() || a == '_' => {
                    let mut j = i;
                    while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                        j += 1;
                    }
                    let word: String = chars[i..j].iter().collect();
                    let tok = match word.as_str() {
                        "and" => Tok::And,
                        "or" => Tok::Or,
                        "not" => Tok::Not,
                        "implies" => Tok::Implies,
                        "same" => Tok::Pred(Predicate::Same),
                        "all_diff" => Tok::Pred(Predicate::AllDiff),
                        "pair" => Tok::Pred(Predicate::Pair),
                        _ => Tok::Ident(word),
                    };
                    (tok, j - i)
                }
                other => {
                    return Err(KnowledgeError::Syntax {
                        line: tl,
                        col: tc,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            },
        };
        out.push(Spanned {
            tok,
            line: tl,
            col: tc,
        });
        i += len;
        col += len;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    schema: &'a ConceptSchema,
}

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, at: &Spanned, expected: &str) -> KnowledgeError {
        let msg = if at.tok == Tok::Eof {
            format!("unexpected end of input, expected {expected}")
        } else {
            format!("unexpected {}, expected {expected}", at.tok.describe())
        };
        KnowledgeError::Syntax {
            line: at.line,
            col: at.col,
            msg,
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Spanned, KnowledgeError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&self.peek().clone(), what))
        }
    }

    fn resolve(&self, name: &str, at: &Spanned) -> Result<usize, KnowledgeError> {
        self.schema
            .index_of(name)
            .ok_or_else(|| KnowledgeError::UnknownVariable {
                name: name.to_string(),
                line: at.line,
                col: at.col,
            })
    }

    fn program(&mut self) -> Result<Vec<(LabelDef, Spanned)>, KnowledgeError> {
        let mut defs = Vec::new();
        loop {
            let head = self.peek().clone();
            let name = match &head.tok {
                Tok::Ident(n) => n.clone(),
                Tok::Eof if !defs.is_empty() => break,
                _ => return Err(self.error(&head, "a label definition")),
            };
            self.bump();
            self.expect(Tok::Define, "`:=`")?;
            let expr = self.expr()?;
            match self.peek().tok {
                Tok::Semi => {
                    self.bump();
                }
                Tok::Eof => {}
                _ => return Err(self.error(&self.peek().clone(), "`;`")),
            }
            defs.push((
                LabelDef {
                    name,
                    expr,
                    ty: Ty::Bool,
                },
                head,
            ));
        }
        Ok(defs)
    }

    fn expr(&mut self) -> Result<Expr, KnowledgeError> {
        let lhs = self.or()?;
        if self.peek().tok == Tok::Implies {
            self.bump();
            let rhs = self.expr()?;
            return Ok(Expr::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, KnowledgeError> {
        let mut lhs = self.and()?;
        while self.peek().tok == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, KnowledgeError> {
        let mut lhs = self.unary()?;
        while self.peek().tok == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, KnowledgeError> {
        match self.peek().tok.clone() {
            Tok::Not => {
                self.bump();
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Tok::Pred(p) => {
                let at = self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let mut vars = Vec::new();
                loop {
                    let t = self.bump();
                    match &t.tok {
                        Tok::Ident(n) => vars.push(self.resolve(n, &t)?),
                        _ => return Err(self.error(&t, "a variable name")),
                    }
                    match self.peek().tok {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::RParen => {
                            self.bump();
                            break;
                        }
                        _ => return Err(self.error(&self.peek().clone(), "`,` or `)`")),
                    }
                }
                if vars.len() < p.min_args() {
                    return Err(KnowledgeError::Syntax {
                        line: at.line,
                        col: at.col,
                        msg: format!(
                            "`{}` takes at least {} arguments, got {}",
                            p.keyword(),
                            p.min_args(),
                            vars.len()
                        ),
                    });
                }
                Ok(Expr::Pred(p, vars))
            }
            _ => self.cmp(),
        }
    }

    fn cmp(&mut self) -> Result<Expr, KnowledgeError> {
        let lhs = self.arith()?;
        match self.peek().tok {
            Tok::EqEq => {
                self.bump();
                Ok(Expr::Eq(Box::new(lhs), Box::new(self.arith()?)))
            }
            Tok::NotEq => {
                self.bump();
                Ok(Expr::Ne(Box::new(lhs), Box::new(self.arith()?)))
            }
            _ => Ok(lhs),
        }
    }

    fn arith(&mut self) -> Result<Expr, KnowledgeError> {
        let first = self.term()?;
        if self.peek().tok != Tok::Plus {
            return Ok(first);
        }
        let mut terms = Vec::new();
        push_flat(&mut terms, first);
        while self.peek().tok == Tok::Plus {
            self.bump();
            let t = self.term()?;
            push_flat(&mut terms, t);
        }
        Ok(Expr::Add(terms))
    }

    fn term(&mut self) -> Result<Expr, KnowledgeError> {
        let t = self.bump();
        match &t.tok {
            Tok::Int(v) => Ok(Expr::Int(*v)),
            Tok::Ident(n) => Ok(Expr::Var(self.resolve(n, &t)?)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.error(&t, "an integer, variable or `(`")),
        }
    }
}

fn push_flat(terms: &mut Vec<Expr>, e: Expr) {
    match e {
        Expr::Add(inner) => terms.extend(inner),
        other => terms.push(other),
    }
}

/// Parses DSL source against a schema.
pub fn parse_knowledge(source: &str, schema: &ConceptSchema) -> Result<KnowledgeExpr, KnowledgeError> {
    let toks = lex(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        schema,
    };
    let defs = p.program()?;
    let sizes = schema.sizes();
    let mut names = HashSet::new();
    let mut labels = Vec::with_capacity(defs.len());
    for (mut def, at) in defs {
        if !names.insert(def.name.clone()) {
            return Err(KnowledgeError::Syntax {
                line: at.line,
                col: at.col,
                msg: format!("label `{}` defined twice", def.name),
            });
        }
        def.ty = def.expr.ty(&sizes).map_err(|msg| KnowledgeError::NonTotal {
            label: def.name.clone(),
            msg,
        })?;
        labels.push(def);
    }
    Ok(KnowledgeExpr::new(schema.clone(), labels))
}
