//! Function-Gym: infer a hidden four-variable arithmetic function by probing
//! it, then submit its value on a hidden test input.

mod expr;
mod hypotheses;

use rand::Rng as _;
use thiserror::Error;

pub use expr::{eval_expr, DivisionByZero, Expr, Input, Op};
pub use hypotheses::{agrees, enumerate_hypotheses, for_each_hypothesis, HypothesisSpace, Probe, MAX_DEPTH3_RESULTS, TOLERANCE};

use crate::mdp::{ActionKind, ActionRecord, Environment, StepOutcome};
use crate::rng::rng_from_seed;

pub const BUDGET: usize = 15;
pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const INPUT_RANGE: std::ops::RangeInclusive<i64> = -9..=9;
const MAX_ATTEMPTS: usize = 10_000;

pub const PROBED_TEST_INPUT: &str = "test input may not be probed";
pub const CORRECT: &str = "correct";
pub const INCORRECT: &str = "incorrect";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no valid function context after {attempts} rejection samples (max_depth {max_depth})")]
pub struct GenerationExhausted {
    pub attempts: usize,
    pub max_depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionContext {
    pub f: Expr,
    pub test_input: [i64; 4],
}

impl FunctionContext {
    pub fn test_point(&self) -> Input {
        self.test_input.map(|v| v as f64)
    }

    pub fn answer(&self) -> f64 {
        self.f.eval(&self.test_point()).expect("generator guarantees a finite test value")
    }
}

/// The canonical probe set: all ones, each unit probe (one variable at 2),
/// then each pair of variables at 2.
pub fn canonical_probes() -> Vec<[i64; 4]> {
    let mut out = vec![[1; 4]];
    for i in 0..4 {
        let mut p = [1; 4];
        p[i] = 2;
        out.push(p);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let mut p = [1; 4];
            p[i] = 2;
            p[j] = 2;
            out.push(p);
        }
    }
    out
}

fn random_leaf(rng: &mut impl rand::Rng) -> Expr {
    if rng.gen_bool(0.7) {
        Expr::Var(rng.gen_range(1..=4))
    } else {
        Expr::Const(rng.gen_range(1..=5))
    }
}

fn random_tree(rng: &mut impl rand::Rng, depth_left: usize, root: bool) -> Expr {
    if depth_left == 0 || (!root && rng.gen_bool(0.3)) {
        return random_leaf(rng);
    }
    let op = Op::ALL[rng.gen_range(0..Op::ALL.len())];
    let left = random_tree(rng, depth_left - 1, false);
    match op {
        Op::Pow => left.pow(Op::EXPONENTS[rng.gen_range(0..2)]),
        _ => Expr::bin(op, left, random_tree(rng, depth_left - 1, false)),
    }
}

/// Rejection-samples a context: a grammar tree referencing at least two
/// variables and an integer test input on which it evaluates.
pub fn generate_function(seed: u64, max_depth: usize) -> Result<FunctionContext, GenerationExhausted> {
    let exhausted = GenerationExhausted { attempts: MAX_ATTEMPTS, max_depth };
    if !(1..=3).contains(&max_depth) {
        return Err(GenerationExhausted { attempts: 0, max_depth });
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_ATTEMPTS {
        let f = random_tree(&mut rng, max_depth, true);
        if f.distinct_vars() < 2 {
            continue;
        }
        let test_input: [i64; 4] = std::array::from_fn(|_| rng.gen_range(INPUT_RANGE));
        match f.eval(&test_input.map(|v| v as f64)) {
            Ok(v) if v.is_finite() => return Ok(FunctionContext { f, test_input }),
            _ => continue,
        }
    }
    Err(exhausted)
}

pub fn format_value(v: f64) -> String {
    format!("{v:.6}")
}

pub fn format_input(x: &[i64; 4]) -> String {
    format!("{} {} {} {}", x[0], x[1], x[2], x[3])
}

pub fn parse_query(content: &str) -> Option<Input> {
    let nums: Vec<f64> = content.split_whitespace().map(str::parse).collect::<Result<_, _>>().ok()?;
    let arr: Input = nums.try_into().ok()?;
    arr.iter().all(|v| v.is_finite()).then_some(arr)
}

pub fn parse_answer(content: &str) -> Option<f64> {
    content.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub struct FunctionGym {
    task_id: String,
    ctx: FunctionContext,
}

impl FunctionGym {
    pub fn new(task_id: impl Into<String>, ctx: FunctionContext) -> Self {
        Self { task_id: task_id.into(), ctx }
    }

    pub fn from_seed(seed: u64, max_depth: usize) -> Result<Self, GenerationExhausted> {
        Ok(Self::new(format!("function:{seed}"), generate_function(seed, max_depth)?))
    }

    pub fn context(&self) -> &FunctionContext {
        &self.ctx
    }
}

impl Environment for FunctionGym {
    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn context_fingerprint(&self) -> String {
        format!("function|{}|{}", self.ctx.f, format_input(&self.ctx.test_input))
    }

    fn default_budget(&self) -> usize {
        BUDGET
    }

    fn intro(&self) -> String {
        "Infer the hidden function f(x1, x2, x3, x4). `action`: four numbers, returns f at that input. \
         `search`: reveals the test input. `answer`: f at the test input."
            .into()
    }

    fn step(&mut self, action: &ActionRecord) -> StepOutcome {
        match action.kind {
            ActionKind::Query => {
                let Some(x) = parse_query(&action.content) else {
                    return StepOutcome::neutral("parse error: expected four whitespace-separated numbers");
                };
                if x == self.ctx.test_point() {
                    return StepOutcome::neutral(PROBED_TEST_INPUT);
                }
                match self.ctx.f.eval(&x) {
                    Ok(v) => StepOutcome::neutral(format_value(v)),
                    Err(DivisionByZero) => StepOutcome::neutral("error: division by zero"),
                }
            }
            ActionKind::Search => StepOutcome::neutral(format!("test input: {}", format_input(&self.ctx.test_input))),
            ActionKind::Answer => {
                let Some(answer) = parse_answer(&action.content) else {
                    return StepOutcome::neutral("parse error: expected one number");
                };
                if agrees(answer, self.ctx.answer()) {
                    StepOutcome { observation: CORRECT.into(), reward: 1.0, success: true }
                } else {
                    StepOutcome::neutral(INCORRECT)
                }
            }
        }
    }
}
