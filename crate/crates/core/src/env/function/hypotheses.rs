//! Brute-force hypothesis enumeration over the generator grammar.
//!
//! Depth ≤ 2 is enumerated exactly through a compact id space: ids below
//! `LEVEL1` index depth-≤1 trees, the rest encode `(op, left, right)` over
//! that table. Depth 3 is reached meet-in-the-middle: depth-≤2 trees are
//! grouped by their output vector on the probes, and for each left class the
//! right class that reproduces the observed outputs is looked up directly.

use std::collections::HashMap;
use std::ops::ControlFlow;

use rustc_hash::FxHashMap;

use super::expr::{Expr, Input, Op};

/// Relative agreement tolerance between a hypothesis and an observed output.
pub const TOLERANCE: f64 = 1e-6;

/// Cap on materialized depth-3 hypotheses in [`enumerate_hypotheses`].
pub const MAX_DEPTH3_RESULTS: usize = 1_000_000;

pub fn agrees(predicted: f64, observed: f64) -> bool {
    (predicted - observed).abs() <= TOLERANCE * observed.abs().max(1.0)
}

/// One observed probe; `output` is `None` when the environment reported an
/// evaluation error at `input`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub input: Input,
    pub output: Option<f64>,
}

impl Probe {
    pub fn new(input: Input, output: f64) -> Self {
        Self { input, output: Some(output) }
    }

    pub fn error(input: Input) -> Self {
        Self { input, output: None }
    }

    pub fn matches(&self, value: Option<f64>) -> bool {
        match (self.output, value) {
            (Some(o), Some(v)) => agrees(v, o),
            (None, None) => true,
            _ => false,
        }
    }
}

const LEAVES: usize = 9;
const LEVEL1: usize = LEAVES + 4 * LEAVES * LEAVES + 2 * LEAVES;
const LEVEL2: usize = LEVEL1 + 4 * LEVEL1 * LEVEL1 + 2 * LEVEL1;

fn leaf(i: usize) -> Expr {
    if i < 4 {
        Expr::Var(i as u8 + 1)
    } else {
        Expr::Const(i as i64 - 3)
    }
}

/// Shared depth-≤1 table in canonical order.
struct Level1 {
    exprs: Vec<Expr>,
    masks: Vec<u8>,
}

impl Level1 {
    fn build() -> Self {
        let mut exprs: Vec<Expr> = (0..LEAVES).map(leaf).collect();
        for op in Op::ARITH {
            for l in 0..LEAVES {
                for r in 0..LEAVES {
                    exprs.push(Expr::bin(op, leaf(l), leaf(r)));
                }
            }
        }
        for l in 0..LEAVES {
            for e in Op::EXPONENTS {
                exprs.push(leaf(l).pow(e));
            }
        }
        debug_assert_eq!(exprs.len(), LEVEL1);
        let masks = exprs.iter().map(Expr::var_mask).collect();
        Self { exprs, masks }
    }

    fn values(&self, x: &Input) -> Vec<Option<f64>> {
        self.exprs.iter().map(|e| e.eval(x).ok()).collect()
    }
}

fn level1() -> &'static Level1 {
    static TABLE: std::sync::OnceLock<Level1> = std::sync::OnceLock::new();
    TABLE.get_or_init(Level1::build)
}

/// Decoded depth-≤2 id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Node {
    Small(usize),
    Bin(Op, usize, usize),
    Pow(usize, i64),
}

fn decode(id: u32) -> Node {
    let id = id as usize;
    if id < LEVEL1 {
        return Node::Small(id);
    }
    let rest = id - LEVEL1;
    let block = LEVEL1 * LEVEL1;
    if rest < 4 * block {
        let op = Op::ARITH[rest / block];
        let within = rest % block;
        Node::Bin(op, within / LEVEL1, within % LEVEL1)
    } else {
        let within = rest - 4 * block;
        Node::Pow(within / 2, Op::EXPONENTS[within % 2])
    }
}

fn id_limit(max_depth: usize) -> usize {
    match max_depth {
        0 => LEAVES,
        1 => LEVEL1,
        _ => LEVEL2,
    }
}

fn node_value(node: Node, l1: &[Option<f64>]) -> Option<f64> {
    match node {
        Node::Small(i) => l1[i],
        Node::Bin(op, l, r) => op.apply(l1[l]?, l1[r]?).ok(),
        Node::Pow(l, e) => Op::Pow.apply(l1[l]?, e as f64).ok(),
    }
}

fn node_mask(node: Node, table: &Level1) -> u8 {
    match node {
        Node::Small(i) => table.masks[i],
        Node::Bin(_, l, r) => table.masks[l] | table.masks[r],
        Node::Pow(l, _) => table.masks[l],
    }
}

fn node_expr(node: Node, table: &Level1) -> Expr {
    match node {
        Node::Small(i) => table.exprs[i].clone(),
        Node::Bin(op, l, r) => Expr::bin(op, table.exprs[l].clone(), table.exprs[r].clone()),
        Node::Pow(l, e) => table.exprs[l].clone().pow(e),
    }
}

/// Visits every id below `id_limit(max_depth)` that uses at least two
/// distinct variables, ascending, with its value given the depth-1 values.
fn for_each_admissible(max_depth: usize, l1: &[Option<f64>], mut visit: impl FnMut(u32, Option<f64>)) {
    let masks = &level1().masks;
    let limit = id_limit(max_depth);
    let small = limit.min(LEVEL1);
    for i in 0..small {
        if masks[i].count_ones() >= 2 {
            visit(i as u32, l1[i]);
        }
    }
    if limit <= LEVEL1 {
        return;
    }
    let mut id = LEVEL1 as u32;
    for op in Op::ARITH {
        for l in 0..LEVEL1 {
            let (lv, lm) = (l1[l], masks[l]);
            for r in 0..LEVEL1 {
                if (lm | masks[r]).count_ones() >= 2 {
                    let v = match (lv, l1[r]) {
                        (Some(a), Some(b)) => op.apply(a, b).ok(),
                        _ => None,
                    };
                    visit(id, v);
                }
                id += 1;
            }
        }
    }
    for l in 0..LEVEL1 {
        for e in Op::EXPONENTS {
            if masks[l].count_ones() >= 2 {
                visit(id, l1[l].and_then(|a| Op::Pow.apply(a, e as f64).ok()));
            }
            id += 1;
        }
    }
}

/// Every admissible id sorted by its value at one input, so the first probe
/// at a recurring input is a range lookup instead of a full scan.
struct ValueIndex {
    values: Vec<(f64, u32)>,
    undefined: Vec<u32>,
}

impl ValueIndex {
    fn build(max_depth: usize, x: &Input) -> Self {
        let l1 = level1().values(x);
        let mut values = Vec::new();
        let mut undefined = Vec::new();
        for_each_admissible(max_depth, &l1, |id, v| match v {
            None => undefined.push(id),
            Some(v) if v.is_finite() => values.push((v, id)),
            Some(_) => {}
        });
        values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self { values, undefined }
    }

    /// Ids consistent with `probe`, ascending.
    fn matching(&self, probe: &Probe) -> Vec<u32> {
        let Some(o) = probe.output else {
            return self.undefined.clone();
        };
        // Widened bounds; `agrees` decides membership exactly.
        let slack = 2.0 * TOLERANCE * o.abs().max(1.0);
        let lo = self.values.partition_point(|&(v, _)| v < o - slack);
        let hi = self.values.partition_point(|&(v, _)| v <= o + slack);
        let mut ids: Vec<u32> = self.values[lo..hi].iter().filter(|&&(v, _)| agrees(v, o)).map(|&(_, id)| id).collect();
        ids.sort_unstable();
        ids
    }
}

enum IndexSlot {
    Seen,
    Ready(std::sync::Arc<ValueIndex>),
}

const MAX_INDEXED_INPUTS: usize = 8;
const MAX_TRACKED_INPUTS: usize = 4096;

/// Shared index for `x`, built the second time `x` is requested.
fn value_index(max_depth: usize, x: &Input) -> Option<std::sync::Arc<ValueIndex>> {
    use std::sync::{Arc, Mutex, OnceLock};
    type Key = (usize, [u64; 4]);
    static CACHE: OnceLock<Mutex<HashMap<Key, IndexSlot>>> = OnceLock::new();
    let key = (max_depth, x.map(f64::to_bits));
    let cache = CACHE.get_or_init(Default::default);
    {
        let mut slots = cache.lock().unwrap_or_else(|e| e.into_inner());
        match slots.get(&key) {
            Some(IndexSlot::Ready(index)) => return Some(index.clone()),
            Some(IndexSlot::Seen) => {}
            None => {
                if slots.len() >= MAX_TRACKED_INPUTS {
                    slots.retain(|_, s| matches!(s, IndexSlot::Ready(_)));
                }
                slots.insert(key, IndexSlot::Seen);
                return None;
            }
        }
        let ready = slots.values().filter(|s| matches!(s, IndexSlot::Ready(_))).count();
        if ready >= MAX_INDEXED_INPUTS {
            return None;
        }
    }
    let index = Arc::new(ValueIndex::build(max_depth, x));
    let mut slots = cache.lock().unwrap_or_else(|e| e.into_inner());
    slots.insert(key, IndexSlot::Ready(index.clone()));
    Some(index)
}

/// Incrementally filtered set of depth-≤2 hypotheses (at least two distinct
/// variables, as the generator requires). Cheap to refine one probe at a time.
#[derive(Clone, Debug)]
pub struct HypothesisSpace {
    max_depth: usize,
    alive: Option<Vec<u32>>,
    probes: Vec<Probe>,
}

impl HypothesisSpace {
    /// `max_depth` is clamped to 2; use [`enumerate_hypotheses`] for depth 3.
    pub fn new(max_depth: usize) -> Self {
        Self { max_depth: max_depth.min(2), alive: None, probes: Vec::new() }
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn observe(&mut self, probe: Probe) {
        let table = level1();
        let l1 = table.values(&probe.input);
        let keep = |id: u32| {
            let node = decode(id);
            probe.matches(node_value(node, &l1))
        };
        let alive = match self.alive.take() {
            Some(ids) => ids.into_iter().filter(|&id| keep(id)).collect(),
            None => match value_index(self.max_depth, &probe.input) {
                Some(index) => index.matching(&probe),
                None => {
                    let mut ids = Vec::new();
                    for_each_admissible(self.max_depth, &l1, |id, v| {
                        if probe.matches(v) {
                            ids.push(id);
                        }
                    });
                    ids
                }
            },
        };
        self.alive = Some(alive);
        self.probes.push(probe);
    }

    /// Rebuilds from the recorded probes (used after contradictory feedback).
    pub fn rebuild(&mut self) {
        let probes = std::mem::take(&mut self.probes);
        self.alive = None;
        for p in probes {
            self.observe(p);
        }
    }

    /// Ids of consistent hypotheses. Panics before the first probe.
    pub fn ids(&self) -> &[u32] {
        self.alive.as_deref().expect("observe at least one probe first")
    }

    pub fn len(&self) -> usize {
        self.alive.as_ref().map_or(id_limit(self.max_depth), Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn expr(&self, id: u32) -> Expr {
        node_expr(decode(id), level1())
    }

    pub fn exprs(&self) -> Vec<Expr> {
        self.ids().iter().map(|&id| self.expr(id)).collect()
    }

    /// Values of every consistent hypothesis at `x` (`None` on evaluation error).
    pub fn predictions(&self, x: &Input) -> Vec<Option<f64>> {
        let l1 = level1().values(x);
        self.ids().iter().map(|&id| node_value(decode(id), &l1)).collect()
    }

    /// Drops hypotheses whose value at `x` is `value` (a rejected answer) or
    /// undefined (the hidden test input always evaluates).
    pub fn exclude_at(&mut self, x: &Input, rejected: Option<f64>) {
        let l1 = level1().values(x);
        if let Some(ids) = self.alive.as_mut() {
            ids.retain(|&id| match node_value(decode(id), &l1) {
                None => false,
                Some(v) => rejected.is_none_or(|r| !agrees(v, r)),
            });
        }
    }
}

/// Every grammar tree of depth ≤ `max_depth` with at least two distinct
/// variables that reproduces all probes, in canonical order. Depth-3 results
/// are truncated at [`MAX_DEPTH3_RESULTS`].
pub fn enumerate_hypotheses(probes: &[(Input, f64)], max_depth: usize) -> Vec<Expr> {
    let probes: Vec<Probe> = probes.iter().map(|&(x, y)| Probe::new(x, y)).collect();
    let mut out = Vec::new();
    let _ = for_each_hypothesis(&probes, max_depth, |e| {
        out.push(e);
        if out.len() >= MAX_DEPTH3_RESULTS {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    out
}

/// Streaming form of [`enumerate_hypotheses`] that also accepts error probes.
/// Depth-≤2 trees come first in canonical order, then depth-3 trees grouped by
/// root operator.
pub fn for_each_hypothesis(
    probes: &[Probe],
    max_depth: usize,
    mut visit: impl FnMut(Expr) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if probes.is_empty() {
        return ControlFlow::Continue(());
    }
    let mut space = HypothesisSpace::new(max_depth);
    for p in probes {
        space.observe(*p);
    }
    for &id in space.ids() {
        visit(space.expr(id))?;
    }
    if max_depth >= 3 {
        depth3(probes, &mut visit)?;
    }
    ControlFlow::Continue(())
}

/// Rounds to about 27 significant bits so values that agree far below the
/// agreement tolerance share a key.
fn quantize(v: f64) -> i64 {
    if v == 0.0 {
        return 0;
    }
    ((v.to_bits() + (1 << 24)) >> 25) as i64
}

fn vector_key(values: &[f64]) -> Vec<i64> {
    values.iter().map(|&v| quantize(v)).collect()
}

struct Classes {
    /// Representative output vector per class.
    reps: Vec<Vec<f64>>,
    members: Vec<Vec<u32>>,
    index: FxHashMap<Vec<i64>, usize>,
    /// Classes keyed on a subset of probe positions, built on demand.
    partial: FxHashMap<u64, FxHashMap<Vec<i64>, Vec<usize>>>,
}

impl Classes {
    fn lookup(&self, values: &[f64]) -> Option<usize> {
        if values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        self.index.get(&vector_key(values)).copied()
    }

    /// Classes whose outputs match `values` at the positions set in `mask`.
    fn lookup_partial(&mut self, mask: u64, values: &[f64]) -> &[usize] {
        let positions: Vec<usize> = (0..values.len()).filter(|&j| mask >> j & 1 == 1).collect();
        if positions.iter().any(|&j| !values[j].is_finite()) {
            return &[];
        }
        let reps = &self.reps;
        let by_key = self.partial.entry(mask).or_insert_with(|| {
            let mut m: FxHashMap<Vec<i64>, Vec<usize>> = FxHashMap::default();
            for (c, rep) in reps.iter().enumerate() {
                m.entry(positions.iter().map(|&j| quantize(rep[j])).collect()).or_default().push(c);
            }
            m
        });
        let key: Vec<i64> = positions.iter().map(|&j| quantize(values[j])).collect();
        by_key.get(&key).map_or(&[], Vec::as_slice)
    }
}

/// Right-operand values needed so that `a op b` hits `targets`. Positions
/// where any `b` works are left out of the returned mask; `None` when no
/// `b` can work.
fn needed_right(op: Op, a: &[f64], targets: &[f64]) -> Option<(u64, Vec<f64>)> {
    let mut mask = 0u64;
    let mut b = vec![0.0; a.len()];
    for (j, (&a, &y)) in a.iter().zip(targets).enumerate() {
        let v = match op {
            Op::Add => Some(y - a),
            Op::Sub => Some(a - y),
            Op::Mul if a == 0.0 => {
                if !agrees(0.0, y) {
                    return None;
                }
                None
            }
            Op::Mul => Some(y / a),
            Op::Div if y == 0.0 => {
                if a != 0.0 {
                    return None;
                }
                None
            }
            Op::Div => Some(a / y),
            Op::Pow => return None,
        };
        if let Some(v) = v {
            mask |= 1 << j;
            b[j] = v;
        }
    }
    Some((mask, b))
}

fn depth3(probes: &[Probe], visit: &mut impl FnMut(Expr) -> ControlFlow<()>) -> ControlFlow<()> {
    let table = level1();
    let valued: Vec<(Input, f64)> = probes.iter().filter_map(|p| p.output.map(|y| (p.input, y))).collect();
    let error_probes: Vec<Input> = probes.iter().filter(|p| p.output.is_none()).map(|p| p.input).collect();
    let targets: Vec<f64> = valued.iter().map(|&(_, y)| y).collect();
    let l1_values: Vec<Vec<Option<f64>>> = valued.iter().map(|(x, _)| table.values(x)).collect();

    let mut classes = Classes { reps: Vec::new(), members: Vec::new(), index: FxHashMap::default(), partial: FxHashMap::default() };
    let mut row = vec![0.0; valued.len()];
    let mut key: Vec<i64> = Vec::with_capacity(valued.len());
    'ids: for id in 0..LEVEL2 as u32 {
        let node = decode(id);
        for (slot, l1) in row.iter_mut().zip(&l1_values) {
            match node_value(node, l1) {
                Some(v) if v.is_finite() => *slot = v,
                _ => continue 'ids,
            }
        }
        key.clear();
        key.extend(row.iter().map(|&v| quantize(v)));
        let class = match classes.index.get(&key) {
            Some(&c) => c,
            None => {
                classes.reps.push(row.clone());
                classes.members.push(Vec::new());
                classes.index.insert(key.clone(), classes.reps.len() - 1);
                classes.reps.len() - 1
            }
        };
        classes.members[class].push(id);
    }

    let reproduces = |op: Op, a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(&targets)
            .all(|((&a, &b), &y)| op.apply(a, b).is_ok_and(|v| agrees(v, y)))
    };

    let full = if valued.len() >= 64 { u64::MAX } else { (1u64 << valued.len()) - 1 };
    let mut matches: Vec<(Op, usize, usize)> = Vec::new();
    for op in Op::ARITH {
        for lc in 0..classes.reps.len() {
            let Some((mask, b)) = needed_right(op, &classes.reps[lc], &targets) else { continue };
            let candidates: Vec<usize> = if mask == full {
                classes.lookup(&b).into_iter().collect()
            } else {
                classes.lookup_partial(mask, &b).to_vec()
            };
            for rc in candidates {
                if reproduces(op, &classes.reps[lc], &classes.reps[rc]) {
                    matches.push((op, lc, rc));
                }
            }
        }
    }

    // Undefined at every probe that reported an error.
    let error_l1: Vec<Vec<Option<f64>>> = error_probes.iter().map(|x| table.values(x)).collect();
    let errors_at_all = |f: &dyn Fn(&[Option<f64>]) -> Option<f64>| error_l1.iter().all(|l1| f(l1).is_none());

    let l1_len = LEVEL1 as u32;
    for &(op, lc, rc) in &matches {
        for &l in &classes.members[lc] {
            let ln = decode(l);
            let lm = node_mask(ln, table);
            for &r in &classes.members[rc] {
                if l < l1_len && r < l1_len {
                    continue;
                }
                let rn = decode(r);
                if (lm | node_mask(rn, table)).count_ones() < 2 {
                    continue;
                }
                let undefined = errors_at_all(&|l1| op.apply(node_value(ln, l1)?, node_value(rn, l1)?).ok());
                if undefined {
                    visit(Expr::bin(op, node_expr(ln, table), node_expr(rn, table)))?;
                }
            }
        }
    }
    for (lc, a) in classes.reps.iter().enumerate() {
        for e in Op::EXPONENTS {
            let fits = a.iter().zip(&targets).all(|(&a, &y)| agrees(a.powi(e as i32), y));
            if !fits {
                continue;
            }
            for &l in &classes.members[lc] {
                let ln = decode(l);
                if l < l1_len || node_mask(ln, table).count_ones() < 2 {
                    continue;
                }
                if errors_at_all(&|l1| Op::Pow.apply(node_value(ln, l1)?, e as f64).ok()) {
                    visit(node_expr(ln, table).pow(e))?;
                }
            }
        }
    }
    ControlFlow::Continue(())
}
