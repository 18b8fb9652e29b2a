use std::fmt;

use thiserror::Error;

pub type Input = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("division by zero")]
pub struct DivisionByZero;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl Op {
    pub const ALL: [Op; 5] = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow];
    /// Operators whose right operand is an arbitrary subtree.
    pub const ARITH: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];
    pub const EXPONENTS: [i64; 2] = [2, 3];

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Pow => "^",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> Result<f64, DivisionByZero> {
        Ok(match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => {
                if b == 0.0 {
                    return Err(DivisionByZero);
                }
                a / b
            }
            Op::Pow => a.powi(b as i32),
        })
    }
}

/// Expression over the four inputs `x1..x4`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Variable index in `1..=4`.
    Var(u8),
    Const(i64),
    Bin(Op, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: u8) -> Self {
        assert!((1..=4).contains(&i), "variables are x1..x4");
        Expr::Var(i)
    }

    pub fn bin(op: Op, left: Expr, right: Expr) -> Self {
        Expr::Bin(op, Box::new(left), Box::new(right))
    }

    pub fn add(self, rhs: Expr) -> Self {
        Self::bin(Op::Add, self, rhs)
    }

    pub fn sub(self, rhs: Expr) -> Self {
        Self::bin(Op::Sub, self, rhs)
    }

    pub fn mul(self, rhs: Expr) -> Self {
        Self::bin(Op::Mul, self, rhs)
    }

    pub fn div(self, rhs: Expr) -> Self {
        Self::bin(Op::Div, self, rhs)
    }

    pub fn pow(self, exponent: i64) -> Self {
        Self::bin(Op::Pow, self, Expr::Const(exponent))
    }

    pub fn eval(&self, x: &Input) -> Result<f64, DivisionByZero> {
        match self {
            Expr::Var(i) => Ok(x[usize::from(*i) - 1]),
            Expr::Const(c) => Ok(*c as f64),
            Expr::Bin(op, l, r) => op.apply(l.eval(x)?, r.eval(x)?),
        }
    }

    /// Leaves have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 0,
            Expr::Bin(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Bitmask of referenced variables (bit `i-1` for `xi`).
    pub fn var_mask(&self) -> u8 {
        match self {
            Expr::Var(i) => 1 << (i - 1),
            Expr::Const(_) => 0,
            Expr::Bin(_, l, r) => l.var_mask() | r.var_mask(),
        }
    }

    pub fn distinct_vars(&self) -> u32 {
        self.var_mask().count_ones()
    }

    /// Grammar membership: constants in 1..=5, exponents in {2, 3}.
    pub fn in_grammar(&self) -> bool {
        match self {
            Expr::Var(i) => (1..=4).contains(i),
            Expr::Const(c) => (1..=5).contains(c),
            Expr::Bin(Op::Pow, l, r) => {
                matches!(**r, Expr::Const(e) if Op::EXPONENTS.contains(&e)) && l.in_grammar()
            }
            Expr::Bin(_, l, r) => l.in_grammar() && r.in_grammar(),
        }
    }
}

/// Evaluates `f` at `x`.
pub fn eval_expr(f: &Expr, x: &Input) -> Result<f64, DivisionByZero> {
    f.eval(x)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match e {
                Expr::Bin(..) => write!(f, "({e})"),
                _ => write!(f, "{e}"),
            }
        }
        match self {
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Bin(Op::Pow, l, r) => {
                operand(l, f)?;
                write!(f, "^{r}")
            }
            Expr::Bin(op, l, r) => {
                operand(l, f)?;
                write!(f, " {} ", op.symbol())?;
                operand(r, f)
            }
        }
    }
}
