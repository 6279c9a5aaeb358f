//! Syntax tree for `.csp` programs.

use std::fmt;
use std::sync::Arc;

/// A position in a source file. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceLoc {
    pub file: Arc<str>,
    pub line: u32,
    pub col: u32,
}

impl SourceLoc {
    pub fn new(file: Arc<str>, line: u32, col: u32) -> Self {
        debug_assert!(line >= 1 && col >= 1);
        SourceLoc { file, line, col }
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

/// Kind of a variable or parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Int,
    Chan,
    Mutex,
    Wg,
    Cond,
}

impl VarKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarKind::Int => "int",
            VarKind::Chan => "chan",
            VarKind::Mutex => "mutex",
            VarKind::Wg => "wg",
            VarKind::Cond => "cond",
        }
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub file: Arc<str>,
    pub functions: Vec<FuncDecl>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FuncDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn main(&self) -> Option<&FuncDecl> {
        self.function("main")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: VarKind,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub loc: SourceLoc,
    /// Location of the closing brace; falling off the end returns here.
    pub end_loc: SourceLoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Send,
    Recv,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Send => "SEND",
            Direction::Recv => "RECV",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectCase {
    pub dir: Direction,
    pub chan: String,
    /// Value sent (send cases only).
    pub value: Option<Expr>,
    /// Receive target (recv cases only, optional).
    pub target: Option<String>,
    pub body: Vec<Stmt>,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    /// `var x = e` (declared = true) or `x = e`.
    Assign { target: String, value: Expr, declared: bool },
    MakeChan { target: String, capacity: Option<Expr> },
    MakeMutex { target: String },
    MakeWg { target: String },
    MakeCond { target: String, mutex: String },
    Go { func: String, args: Vec<Expr> },
    Send { chan: String, value: Expr },
    Recv { chan: String, target: Option<String> },
    Close { chan: String },
    Lock { mutex: String },
    Unlock { mutex: String },
    WgAdd { wg: String, delta: Expr },
    WgDone { wg: String },
    WgWait { wg: String },
    CvWait { cond: String },
    CvSignal { cond: String },
    CvBroadcast { cond: String },
    Select { cases: Vec<SelectCase>, default: Option<Vec<Stmt>> },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    ForRange { var: String, lo: Expr, hi: Expr, body: Vec<Stmt> },
    Loop { body: Vec<Stmt> },
    Yield,
    Return,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// The variable name if this expression is a bare variable reference.
    pub fn as_var(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Var(name) => Some(name),
            _ => None,
        }
    }
}

/// Names the interpreter treats specially.
pub mod reserved {
    /// Integer argument supplied on the command line, readable in `main`.
    pub const ARG0: &str = "ARG0";
    /// Receiving into this variable in `main` appends to the run's outputs.
    pub const OUT: &str = "OUT";
}

impl Program {
    /// Copy of the program with every location replaced by a fixed placeholder,
    /// for structural comparisons that ignore positions.
    pub fn without_locs(&self) -> Program {
        let blank = SourceLoc::new(Arc::from(""), 1, 1);
        let mut p = self.clone();
        p.file = Arc::from("");
        for f in &mut p.functions {
            f.loc = blank.clone();
            f.end_loc = blank.clone();
            for param in &mut f.params {
                param.loc = blank.clone();
            }
            strip_block(&mut f.body, &blank);
        }
        p
    }
}

fn strip_block(stmts: &mut [Stmt], blank: &SourceLoc) {
    for s in stmts {
        s.loc = blank.clone();
        match &mut s.kind {
            StmtKind::Assign { value, .. } => strip_expr(value, blank),
            StmtKind::MakeChan { capacity: Some(c), .. } => strip_expr(c, blank),
            StmtKind::Go { args, .. } => args.iter_mut().for_each(|a| strip_expr(a, blank)),
            StmtKind::Send { value, .. } => strip_expr(value, blank),
            StmtKind::WgAdd { delta, .. } => strip_expr(delta, blank),
            StmtKind::Select { cases, default } => {
                for c in cases {
                    c.loc = blank.clone();
                    if let Some(v) = &mut c.value {
                        strip_expr(v, blank);
                    }
                    strip_block(&mut c.body, blank);
                }
                if let Some(d) = default {
                    strip_block(d, blank);
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                strip_expr(cond, blank);
                strip_block(then_body, blank);
                if let Some(e) = else_body {
                    strip_block(e, blank);
                }
            }
            StmtKind::ForRange { lo, hi, body, .. } => {
                strip_expr(lo, blank);
                strip_expr(hi, blank);
                strip_block(body, blank);
            }
            StmtKind::Loop { body } => strip_block(body, blank),
            _ => {}
        }
    }
}

fn strip_expr(e: &mut Expr, blank: &SourceLoc) {
    e.loc = blank.clone();
    match &mut e.kind {
        ExprKind::Unary(_, inner) => strip_expr(inner, blank),
        ExprKind::Binary(_, l, r) => {
            strip_expr(l, blank);
            strip_expr(r, blank);
        }
        _ => {}
    }
}
