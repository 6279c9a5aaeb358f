//! Static checks: name resolution, definite assignment and resource kinds.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::Diagnostic;

/// A program that passed [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedProgram(Program);

impl CheckedProgram {
    pub fn program(&self) -> &Program {
        &self.0
    }

    pub fn into_inner(self) -> Program {
        self.0
    }

    pub fn file(&self) -> &str {
        &self.0.file
    }
}

impl std::ops::Deref for CheckedProgram {
    type Target = Program;
    fn deref(&self) -> &Program {
        &self.0
    }
}

pub fn validate(program: Program) -> Result<CheckedProgram, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let signatures: HashMap<&str, Vec<VarKind>> = program
        .functions
        .iter()
        .map(|f| (f.name.as_str(), f.params.iter().map(|p| p.kind).collect()))
        .collect();

    match program.main() {
        None => diags.push(Diagnostic::new(
            SourceLoc::new(program.file.clone(), 1, 1),
            "missing function `main`".to_string(),
        )),
        Some(main) if !main.params.is_empty() => {
            diags.push(Diagnostic::new(main.loc.clone(), "main must take no parameters".to_string()))
        }
        Some(_) => {}
    }

    for func in &program.functions {
        let mut cx = FuncCheck { signatures: &signatures, kinds: HashMap::new(), diags: &mut diags };
        let mut assigned = HashSet::new();
        let mut seen_params = HashSet::new();
        for p in &func.params {
            if !seen_params.insert(p.name.as_str()) {
                cx.diags.push(Diagnostic::new(p.loc.clone(), format!("duplicate parameter `{}`", p.name)));
            }
            cx.kinds.insert(p.name.clone(), p.kind);
            assigned.insert(p.name.clone());
        }
        if func.name == "main" {
            cx.kinds.insert(reserved::ARG0.to_string(), VarKind::Int);
            assigned.insert(reserved::ARG0.to_string());
        }
        cx.block(&func.body, &mut assigned, func.name == "main");
    }

    if diags.is_empty() {
        Ok(CheckedProgram(program))
    } else {
        Err(diags)
    }
}

struct FuncCheck<'a> {
    signatures: &'a HashMap<&'a str, Vec<VarKind>>,
    /// Kind of each local, fixed by its first occurrence in text order.
    kinds: HashMap<String, VarKind>,
    diags: &'a mut Vec<Diagnostic>,
}

impl FuncCheck<'_> {
    fn err(&mut self, loc: &SourceLoc, msg: String) {
        self.diags.push(Diagnostic::new(loc.clone(), msg));
    }

    fn block(&mut self, stmts: &[Stmt], assigned: &mut HashSet<String>, in_main: bool) {
        for s in stmts {
            self.stmt(s, assigned, in_main);
        }
    }

    /// Checks a use of `name` as a resource of kind `want`.
    fn use_resource(&mut self, name: &str, want: VarKind, loc: &SourceLoc, assigned: &HashSet<String>) {
        if !assigned.contains(name) {
            self.err(loc, format!("variable {name} used before assignment"));
            return;
        }
        if let Some(&have) = self.kinds.get(name) {
            if have != want {
                self.err(loc, format!("kind mismatch: `{name}` is {have}, expected {want}"));
            }
        }
    }

    fn define(&mut self, name: &str, kind: VarKind, loc: &SourceLoc, assigned: &mut HashSet<String>, in_main: bool) {
        if in_main && name == reserved::ARG0 {
            self.err(loc, format!("cannot assign to reserved variable {}", reserved::ARG0));
            return;
        }
        match self.kinds.get(name) {
            Some(&have) if have != kind => {
                self.err(loc, format!("kind mismatch: `{name}` is {have}, assigned a {kind}"));
            }
            Some(_) => {}
            None => {
                self.kinds.insert(name.to_string(), kind);
            }
        }
        assigned.insert(name.to_string());
    }

    /// Checks an integer-valued expression.
    fn int_expr(&mut self, e: &Expr, assigned: &HashSet<String>) {
        match &e.kind {
            ExprKind::Int(_) => {}
            ExprKind::Var(name) => self.use_resource(name, VarKind::Int, &e.loc, assigned),
            ExprKind::Unary(_, inner) => self.int_expr(inner, assigned),
            ExprKind::Binary(op, l, r) => {
                self.int_expr(l, assigned);
                self.int_expr(r, assigned);
                if matches!(op, BinOp::Div | BinOp::Rem) && matches!(r.kind, ExprKind::Int(0)) {
                    self.err(&r.loc, "division by literal zero".to_string());
                }
            }
        }
    }

    /// Kind of the right-hand side of `x = e`: a bare resource variable aliases
    /// the handle, anything else is an integer.
    fn rhs_kind(&mut self, e: &Expr, assigned: &HashSet<String>) -> VarKind {
        if let Some(name) = e.as_var() {
            if !assigned.contains(name) {
                self.err(&e.loc, format!("variable {name} used before assignment"));
                return self.kinds.get(name).copied().unwrap_or(VarKind::Int);
            }
            return self.kinds.get(name).copied().unwrap_or(VarKind::Int);
        }
        self.int_expr(e, assigned);
        VarKind::Int
    }

    fn stmt(&mut self, s: &Stmt, assigned: &mut HashSet<String>, in_main: bool) {
        let loc = &s.loc;
        match &s.kind {
            StmtKind::Assign { target, value, .. } => {
                let kind = self.rhs_kind(value, assigned);
                self.define(target, kind, loc, assigned, in_main);
            }
            StmtKind::MakeChan { target, capacity } => {
                if let Some(c) = capacity {
                    self.int_expr(c, assigned);
                }
                self.define(target, VarKind::Chan, loc, assigned, in_main);
            }
            StmtKind::MakeMutex { target } => self.define(target, VarKind::Mutex, loc, assigned, in_main),
            StmtKind::MakeWg { target } => self.define(target, VarKind::Wg, loc, assigned, in_main),
            StmtKind::MakeCond { target, mutex } => {
                self.use_resource(mutex, VarKind::Mutex, loc, assigned);
                self.define(target, VarKind::Cond, loc, assigned, in_main);
            }
            StmtKind::Go { func, args } => self.go(func, args, loc, assigned),
            StmtKind::Send { chan, value } => {
                self.use_resource(chan, VarKind::Chan, loc, assigned);
                self.int_expr(value, assigned);
            }
            StmtKind::Recv { chan, target } => {
                self.use_resource(chan, VarKind::Chan, loc, assigned);
                if let Some(t) = target {
                    self.define(t, VarKind::Int, loc, assigned, in_main);
                }
            }
            StmtKind::Close { chan } => self.use_resource(chan, VarKind::Chan, loc, assigned),
            StmtKind::Lock { mutex } | StmtKind::Unlock { mutex } => {
                self.use_resource(mutex, VarKind::Mutex, loc, assigned)
            }
            StmtKind::WgAdd { wg, delta } => {
                self.use_resource(wg, VarKind::Wg, loc, assigned);
                self.int_expr(delta, assigned);
            }
            StmtKind::WgDone { wg } | StmtKind::WgWait { wg } => {
                self.use_resource(wg, VarKind::Wg, loc, assigned)
            }
            StmtKind::CvWait { cond } | StmtKind::CvSignal { cond } | StmtKind::CvBroadcast { cond } => {
                self.use_resource(cond, VarKind::Cond, loc, assigned)
            }
            StmtKind::Select { cases, default } => {
                let mut outcomes: Vec<HashSet<String>> = Vec::new();
                for case in cases {
                    self.use_resource(&case.chan, VarKind::Chan, &case.loc, assigned);
                    let mut branch = assigned.clone();
                    if let Some(v) = &case.value {
                        self.int_expr(v, assigned);
                    }
                    if let Some(t) = &case.target {
                        self.define(t, VarKind::Int, &case.loc, &mut branch, in_main);
                    }
                    self.block(&case.body, &mut branch, in_main);
                    outcomes.push(branch);
                }
                if let Some(d) = default {
                    let mut branch = assigned.clone();
                    self.block(d, &mut branch, in_main);
                    outcomes.push(branch);
                }
                *assigned = intersect(outcomes);
            }
            StmtKind::If { cond, then_body, else_body } => {
                self.int_expr(cond, assigned);
                let mut a = assigned.clone();
                self.block(then_body, &mut a, in_main);
                let mut b = assigned.clone();
                if let Some(e) = else_body {
                    self.block(e, &mut b, in_main);
                }
                *assigned = intersect(vec![a, b]);
            }
            StmtKind::ForRange { var, lo, hi, body } => {
                self.int_expr(lo, assigned);
                self.int_expr(hi, assigned);
                let mut inner = assigned.clone();
                self.define(var, VarKind::Int, loc, &mut inner, in_main);
                self.block(body, &mut inner, in_main);
            }
            StmtKind::Loop { body } => {
                let mut inner = assigned.clone();
                self.block(body, &mut inner, in_main);
            }
            StmtKind::Yield | StmtKind::Return | StmtKind::Skip => {}
        }
    }

    fn go(&mut self, func: &str, args: &[Expr], loc: &SourceLoc, assigned: &HashSet<String>) {
        let Some(params) = self.signatures.get(func).cloned() else {
            self.err(loc, format!("unknown function `{func}`"));
            return;
        };
        if params.len() != args.len() {
            self.err(loc, format!("`{func}` expects {} arguments, got {}", params.len(), args.len()));
            return;
        }
        for (arg, want) in args.iter().zip(params) {
            if want == VarKind::Int {
                self.int_expr(arg, assigned);
            } else {
                match arg.as_var() {
                    Some(name) => self.use_resource(name, want, &arg.loc, assigned),
                    None => self.err(&arg.loc, format!("kind mismatch: expected a {want} variable")),
                }
            }
        }
    }
}

fn intersect(sets: Vec<HashSet<String>>) -> HashSet<String> {
    let mut iter = sets.into_iter();
    let first = iter.next().unwrap_or_default();
    iter.fold(first, |acc, s| acc.intersection(&s).cloned().collect())
}
