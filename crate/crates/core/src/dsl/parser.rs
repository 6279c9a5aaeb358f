//! Recursive-descent parser for the `.csp` grammar.

use std::collections::HashSet;
use std::sync::Arc;

use super::ast::*;
use super::lexer::{tokenize, Keyword, Tok, Token};
use super::Diagnostic;

const MAX_NESTING: usize = 200;

type PResult<T> = Result<T, Diagnostic>;

/// Parses a whole program. Syntax errors stop at the first one; duplicate
/// function names are all reported.
pub fn parse(text: &str, file_name: &str) -> Result<Program, Vec<Diagnostic>> {
    let file: Arc<str> = Arc::from(file_name);
    let tokens = tokenize(text, &file).map_err(|d| vec![d])?;
    let mut p = Parser { tokens, pos: 0, depth: 0 };
    let functions = p.program().map_err(|d| vec![d])?;

    let mut seen = HashSet::new();
    let dups: Vec<Diagnostic> = functions
        .iter()
        .filter(|f| !seen.insert(f.name.clone()))
        .map(|f| Diagnostic::new(f.loc.clone(), format!("duplicate function `{}`", f.name)))
        .collect();
    if !dups.is_empty() {
        return Err(dups);
    }
    Ok(Program { file, functions })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn loc(&self) -> SourceLoc {
        self.tokens[self.pos].loc.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(Diagnostic::new(
            self.loc(),
            format!("expected {expected}, found {}", self.peek().describe()),
        ))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<SourceLoc> {
        if *self.peek() == tok {
            Ok(self.bump().loc)
        } else {
            self.error(what)
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> PResult<SourceLoc> {
        self.expect(Tok::Kw(kw), &format!("`{}`", kw.as_str()))
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            _ => self.error("identifier"),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(Diagnostic::new(self.loc(), "nesting too deep".to_string()));
        }
        Ok(())
    }

    fn program(&mut self) -> PResult<Vec<FuncDecl>> {
        let mut funcs = Vec::new();
        while *self.peek() != Tok::Eof {
            funcs.push(self.funcdef()?);
        }
        if funcs.is_empty() {
            return self.error("`func`");
        }
        Ok(funcs)
    }

    fn funcdef(&mut self) -> PResult<FuncDecl> {
        let loc = self.expect_kw(Keyword::Func)?;
        let name = self.ident()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.param()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        let (body, end_loc) = self.block()?;
        Ok(FuncDecl { name, params, body, loc, end_loc })
    }

    fn param(&mut self) -> PResult<Param> {
        let loc = self.loc();
        let name = self.ident()?;
        self.expect(Tok::Colon, "`:`")?;
        let kind = match self.peek() {
            Tok::Kw(Keyword::Int) => VarKind::Int,
            Tok::Kw(Keyword::Chan) => VarKind::Chan,
            Tok::Kw(Keyword::Mutex) => VarKind::Mutex,
            Tok::Kw(Keyword::Wg) => VarKind::Wg,
            Tok::Kw(Keyword::Cond) => VarKind::Cond,
            _ => return self.error("parameter kind (int, chan, mutex, wg, cond)"),
        };
        self.bump();
        Ok(Param { name, kind, loc })
    }

    /// Returns the statements and the location of the closing brace.
    fn block(&mut self) -> PResult<(Vec<Stmt>, SourceLoc)> {
        self.enter()?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.error("`}`");
            }
            stmts.push(self.stmt()?);
        }
        let end = self.bump().loc;
        self.depth -= 1;
        Ok((stmts, end))
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        let kind = match self.peek().clone() {
            Tok::Kw(Keyword::Var) => {
                self.bump();
                let target = self.ident()?;
                self.expect(Tok::Assign, "`=`")?;
                StmtKind::Assign { target, value: self.expr()?, declared: true }
            }
            Tok::Ident(target) => {
                self.bump();
                self.expect(Tok::Assign, "`=`")?;
                self.assignment_rhs(target)?
            }
            Tok::Kw(Keyword::Go) => {
                self.bump();
                let func = self.ident()?;
                self.expect(Tok::LParen, "`(`")?;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.expr()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::Go { func, args }
            }
            Tok::Kw(Keyword::Send) => {
                self.bump();
                let chan = self.ident()?;
                StmtKind::Send { chan, value: self.expr()? }
            }
            Tok::Kw(Keyword::Recv) => {
                self.bump();
                StmtKind::Recv { chan: self.ident()?, target: None }
            }
            Tok::Kw(Keyword::Add) => {
                self.bump();
                let wg = self.ident()?;
                StmtKind::WgAdd { wg, delta: self.expr()? }
            }
            Tok::Kw(kw @ (Keyword::Close
            | Keyword::Lock
            | Keyword::Unlock
            | Keyword::Done
            | Keyword::Wait
            | Keyword::Cwait
            | Keyword::Signal
            | Keyword::Broadcast)) => {
                self.bump();
                let name = self.ident()?;
                match kw {
                    Keyword::Close => StmtKind::Close { chan: name },
                    Keyword::Lock => StmtKind::Lock { mutex: name },
                    Keyword::Unlock => StmtKind::Unlock { mutex: name },
                    Keyword::Done => StmtKind::WgDone { wg: name },
                    Keyword::Wait => StmtKind::WgWait { wg: name },
                    Keyword::Cwait => StmtKind::CvWait { cond: name },
                    Keyword::Signal => StmtKind::CvSignal { cond: name },
                    _ => StmtKind::CvBroadcast { cond: name },
                }
            }
            Tok::Kw(Keyword::Select) => {
                self.bump();
                self.select()?
            }
            Tok::Kw(Keyword::If) => {
                self.bump();
                let cond = self.expr()?;
                let (then_body, _) = self.block()?;
                let else_body = if *self.peek() == Tok::Kw(Keyword::Else) {
                    self.bump();
                    Some(self.block()?.0)
                } else {
                    None
                };
                StmtKind::If { cond, then_body, else_body }
            }
            Tok::Kw(Keyword::For) => {
                self.bump();
                let var = self.ident()?;
                self.expect_kw(Keyword::In)?;
                let lo = self.expr()?;
                self.expect(Tok::DotDot, "`..`")?;
                let hi = self.expr()?;
                let (body, _) = self.block()?;
                StmtKind::ForRange { var, lo, hi, body }
            }
            Tok::Kw(Keyword::Loop) => {
                self.bump();
                StmtKind::Loop { body: self.block()?.0 }
            }
            Tok::Kw(Keyword::Yield) => {
                self.bump();
                StmtKind::Yield
            }
            Tok::Kw(Keyword::Return) => {
                self.bump();
                StmtKind::Return
            }
            Tok::Kw(Keyword::Skip) => {
                self.bump();
                StmtKind::Skip
            }
            _ => return self.error("statement"),
        };
        Ok(Stmt { kind, loc })
    }

    fn assignment_rhs(&mut self, target: String) -> PResult<StmtKind> {
        Ok(match self.peek() {
            Tok::Kw(Keyword::Make) => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                self.expect_kw(Keyword::Chan)?;
                let capacity = if *self.peek() == Tok::Comma {
                    self.bump();
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::MakeChan { target, capacity }
            }
            Tok::Kw(Keyword::Mutex) => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::MakeMutex { target }
            }
            Tok::Kw(Keyword::Wg) => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::MakeWg { target }
            }
            Tok::Kw(Keyword::Cond) => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let mutex = self.ident()?;
                self.expect(Tok::RParen, "`)`")?;
                StmtKind::MakeCond { target, mutex }
            }
            Tok::Kw(Keyword::Recv) => {
                self.bump();
                StmtKind::Recv { chan: self.ident()?, target: Some(target) }
            }
            _ => StmtKind::Assign { target, value: self.expr()?, declared: false },
        })
    }

    fn select(&mut self) -> PResult<StmtKind> {
        self.enter()?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut cases = Vec::new();
        while *self.peek() == Tok::Kw(Keyword::Case) {
            let loc = self.bump().loc;
            let case = match self.peek().clone() {
                Tok::Kw(Keyword::Send) => {
                    self.bump();
                    let chan = self.ident()?;
                    let value = self.expr()?;
                    let (body, _) = self.block()?;
                    SelectCase { dir: Direction::Send, chan, value: Some(value), target: None, body, loc }
                }
                Tok::Kw(Keyword::Recv) => {
                    self.bump();
                    let chan = self.ident()?;
                    let (body, _) = self.block()?;
                    SelectCase { dir: Direction::Recv, chan, value: None, target: None, body, loc }
                }
                Tok::Ident(target) if *self.peek_at(1) == Tok::Assign => {
                    self.bump();
                    self.bump();
                    self.expect_kw(Keyword::Recv)?;
                    let chan = self.ident()?;
                    let (body, _) = self.block()?;
                    SelectCase { dir: Direction::Recv, chan, value: None, target: Some(target), body, loc }
                }
                _ => return self.error("`send` or `recv` in select case"),
            };
            cases.push(case);
        }
        if cases.is_empty() {
            return self.error("`case`");
        }
        let default = if *self.peek() == Tok::Kw(Keyword::Default) {
            self.bump();
            Some(self.block()?.0)
        } else {
            None
        };
        self.expect(Tok::RBrace, "`}`")?;
        self.depth -= 1;
        Ok(StmtKind::Select { cases, default })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            let loc = lhs.loc.clone();
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                self.enter()?;
                let inner = self.unary()?;
                self.depth -= 1;
                // Fold negative literals so printing and re-parsing agree.
                if let ExprKind::Int(n) = inner.kind {
                    return Ok(Expr { kind: ExprKind::Int(n.wrapping_neg()), loc });
                }
                Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)), loc })
            }
            Tok::Bang => {
                self.bump();
                self.enter()?;
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(inner)), loc })
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Int(n), loc })
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Var(name), loc })
            }
            Tok::LParen => {
                self.bump();
                self.enter()?;
                let e = self.expr()?;
                self.depth -= 1;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => self.error("expression"),
        }
    }
}
