//! Canonical pretty-printer. Re-parsing the output yields the same tree
//! up to source locations.

use std::fmt::Write;

use super::ast::*;

pub fn pretty(program: &Program) -> String {
    let mut out = String::new();
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
        let _ = write!(out, "func {}({}) ", f.name, params.join(", "));
        block(&mut out, &f.body, 0);
        out.push('\n');
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    out.push_str("{\n");
    for s in stmts {
        indent(out, depth + 1);
        stmt(out, s, depth + 1);
        out.push('\n');
    }
    indent(out, depth);
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Assign { target, value, declared } => {
            let kw = if *declared { "var " } else { "" };
            let _ = write!(out, "{kw}{target} = {}", expr(value));
        }
        StmtKind::MakeChan { target, capacity } => match capacity {
            Some(c) => {
                let _ = write!(out, "{target} = make(chan, {})", expr(c));
            }
            None => {
                let _ = write!(out, "{target} = make(chan)");
            }
        },
        StmtKind::MakeMutex { target } => {
            let _ = write!(out, "{target} = mutex()");
        }
        StmtKind::MakeWg { target } => {
            let _ = write!(out, "{target} = wg()");
        }
        StmtKind::MakeCond { target, mutex } => {
            let _ = write!(out, "{target} = cond({mutex})");
        }
        StmtKind::Go { func, args } => {
            let args: Vec<String> = args.iter().map(expr).collect();
            let _ = write!(out, "go {func}({})", args.join(", "));
        }
        StmtKind::Send { chan, value } => {
            let _ = write!(out, "send {chan} {}", expr(value));
        }
        StmtKind::Recv { chan, target } => match target {
            Some(t) => {
                let _ = write!(out, "{t} = recv {chan}");
            }
            None => {
                let _ = write!(out, "recv {chan}");
            }
        },
        StmtKind::Close { chan } => {
            let _ = write!(out, "close {chan}");
        }
        StmtKind::Lock { mutex } => {
            let _ = write!(out, "lock {mutex}");
        }
        StmtKind::Unlock { mutex } => {
            let _ = write!(out, "unlock {mutex}");
        }
        StmtKind::WgAdd { wg, delta } => {
            let _ = write!(out, "add {wg} {}", expr(delta));
        }
        StmtKind::WgDone { wg } => {
            let _ = write!(out, "done {wg}");
        }
        StmtKind::WgWait { wg } => {
            let _ = write!(out, "wait {wg}");
        }
        StmtKind::CvWait { cond } => {
            let _ = write!(out, "cwait {cond}");
        }
        StmtKind::CvSignal { cond } => {
            let _ = write!(out, "signal {cond}");
        }
        StmtKind::CvBroadcast { cond } => {
            let _ = write!(out, "broadcast {cond}");
        }
        StmtKind::Select { cases, default } => {
            out.push_str("select {\n");
            for c in cases {
                indent(out, depth + 1);
                match (c.dir, &c.target) {
                    (Direction::Send, _) => {
                        let v = c.value.as_ref().map(expr).unwrap_or_default();
                        let _ = write!(out, "case send {} {v} ", c.chan);
                    }
                    (Direction::Recv, Some(t)) => {
                        let _ = write!(out, "case {t} = recv {} ", c.chan);
                    }
                    (Direction::Recv, None) => {
                        let _ = write!(out, "case recv {} ", c.chan);
                    }
                }
                block(out, &c.body, depth + 1);
                out.push('\n');
            }
            if let Some(d) = default {
                indent(out, depth + 1);
                out.push_str("default ");
                block(out, d, depth + 1);
                out.push('\n');
            }
            indent(out, depth);
            out.push('}');
        }
        StmtKind::If { cond, then_body, else_body } => {
            let _ = write!(out, "if {} ", expr(cond));
            block(out, then_body, depth);
            if let Some(e) = else_body {
                out.push_str(" else ");
                block(out, e, depth);
            }
        }
        StmtKind::ForRange { var, lo, hi, body } => {
            let _ = write!(out, "for {var} in {}..{} ", expr(lo), expr(hi));
            block(out, body, depth);
        }
        StmtKind::Loop { body } => {
            out.push_str("loop ");
            block(out, body, depth);
        }
        StmtKind::Yield => out.push_str("yield"),
        StmtKind::Return => out.push_str("return"),
        StmtKind::Skip => out.push_str("skip"),
    }
}

/// Renders an expression with the minimum parentheses needed to keep its shape.
pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(n) => n.to_string(),
        ExprKind::Var(v) => v.clone(),
        ExprKind::Unary(op, inner) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            match inner.kind {
                ExprKind::Binary(..) | ExprKind::Int(_) => format!("{sym}({})", expr(inner)),
                _ => format!("{sym}{}", expr(inner)),
            }
        }
        ExprKind::Binary(op, l, r) => {
            let prec = op.precedence();
            let left = match l.kind {
                ExprKind::Binary(lop, ..) if lop.precedence() < prec => format!("({})", expr(l)),
                _ => expr(l),
            };
            let right = match r.kind {
                ExprKind::Binary(rop, ..) if rop.precedence() <= prec => format!("({})", expr(r)),
                _ => expr(r),
            };
            format!("{left} {} {right}", op.symbol())
        }
    }
}
