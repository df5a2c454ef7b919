//! Exact Markov-chain analysis of small instances.
//!
//! States are full cache occupancies plus ARC's adaptation target. For
//! single-level policies the space is every ordered m-arrangement. For the
//! others it is the recurrent class reached from a replayed seed state.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{CacheState, ItemId, Level, Policy, PolicyConfig, PolicyKind, PopularityDist};
use crate::policies::{step_with, Aux, PolicyInstance};

/// Default refusal threshold for state enumeration.
pub const DEFAULT_STATE_CAP: u128 = 5_000_000;
/// Default cap on fixed requests in arrangement enumeration.
pub const DEFAULT_ARRANGEMENT_CAP: usize = 12;
/// Default power-iteration tolerance (L1 change between iterates).
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// One Markov state: cache levels plus ARC's adaptation target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ChainState {
    pub cache: CacheState,
    pub arc_p: usize,
}

impl ChainState {
    pub fn new(cache: CacheState) -> Self {
        Self { cache, arc_p: 0 }
    }
}

/// Indexed list of the states of one (policy, library size) pair.
#[derive(Debug, Clone)]
pub struct StateSpace {
    config: PolicyConfig,
    n: usize,
    states: Vec<ChainState>,
    index: HashMap<ChainState, usize>,
}

impl StateSpace {
    fn from_states(config: PolicyConfig, n: usize, states: Vec<ChainState>) -> Self {
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Self { config, n, states, index }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    /// Library size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ChainState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &ChainState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &ChainState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Index of a single-level state given by its slots.
    pub fn index_of_slots(&self, slots: &[ItemId]) -> Option<usize> {
        self.index_of(&ChainState::new(CacheState::single(slots.to_vec())))
    }

    /// Ordered real content of state `i`.
    pub fn projection(&self, i: usize) -> Vec<ItemId> {
        self.config.project(&self.states[i].cache)
    }

    /// The state reached by requesting `1, 2, .., n` repeatedly: the least
    /// popular items end up most recent. Falls back to the first state.
    pub fn adversarial_start(&self) -> usize {
        let order: Vec<ItemId> = (1..=self.n as ItemId).collect();
        if self.config.level_count() == 1 {
            let m = self.config.m() as ItemId;
            let n = self.n as ItemId;
            let slots: Vec<ItemId> = (0..m).map(|i| n - i).collect();
            if let Some(i) = self.index_of_slots(&slots) {
                return i;
            }
        }
        self.replay_into_space(&order).unwrap_or(0)
    }

    /// The state holding the most popular items, or the nearest replayed
    /// approximation for multi-level policies.
    pub fn ideal_start(&self) -> usize {
        let m = self.config.m() as ItemId;
        if self.config.level_count() == 1 {
            if let Some(i) = self.index_of_slots(&(1..=m).collect::<Vec<_>>()) {
                return i;
            }
        }
        let order: Vec<ItemId> = (1..=self.n as ItemId).rev().collect();
        self.replay_into_space(&order).unwrap_or(0)
    }

    fn replay_into_space(&self, pass: &[ItemId]) -> Option<usize> {
        let mut inst = PolicyInstance::new(self.config.clone());
        for _ in 0..64 {
            inst.run(pass);
            let s = ChainState {
                cache: inst.state().clone(),
                arc_p: inst.aux().arc_p,
            };
            if let Some(i) = self.index_of(&s) {
                return Some(i);
            }
        }
        None
    }
}

fn falling_factorial(n: usize, m: usize) -> u128 {
    (0..m).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

/// Ordered m-arrangements of `1..=n` in lexicographic order.
pub fn enumerate_arrangements_ordered(n: usize, m: usize) -> Vec<Vec<ItemId>> {
    fn rec(n: usize, m: usize, cur: &mut Vec<ItemId>, used: &mut [bool], out: &mut Vec<Vec<ItemId>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in 1..=n {
            if !used[i] {
                used[i] = true;
                cur.push(i as ItemId);
                rec(n, m, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::with_capacity(falling_factorial(n, m) as usize);
    rec(n, m, &mut Vec::with_capacity(m), &mut vec![false; n + 1], &mut out);
    out
}

fn estimated_states(config: &PolicyConfig, n: usize) -> u128 {
    let m = config.m();
    let arr = falling_factorial(n, m.min(n));
    match config.policy() {
        Policy::KLru { k } => (0..*k).fold(1u128, |acc, _| acc.saturating_mul(arr)),
        Policy::Arc => falling_factorial(n, (2 * m).min(n)).saturating_mul(m as u128 + 1),
        Policy::Alru(_) => arr.saturating_mul(arr),
        _ => arr,
    }
}

/// Deterministic successors of `s` on request `item`, with weights summing
/// to one (RANDOM splits a miss over the m slots).
pub fn successors(config: &PolicyConfig, s: &ChainState, item: ItemId) -> Vec<(ChainState, f64)> {
    let slots = if config.kind() == PolicyKind::Random && !s.cache.is_cached(item) {
        config.m()
    } else {
        1
    };
    (0..slots)
        .map(|slot| {
            let mut cache = s.cache.clone();
            let mut aux = Aux {
                arc_p: s.arc_p,
                t: 0,
            };
            step_with(config, &mut cache, &mut aux, item, &mut |_| slot);
            (ChainState { cache, arc_p: aux.arc_p }, 1.0 / slots as f64)
        })
        .collect()
}

/// Enumerates the full states of `config` over a library of `n` items,
/// refusing when the count would exceed [`DEFAULT_STATE_CAP`].
pub fn enumerate_states(config: &PolicyConfig, n: usize) -> Result<StateSpace> {
    enumerate_states_capped(config, n, DEFAULT_STATE_CAP)
}

pub fn enumerate_states_capped(config: &PolicyConfig, n: usize, cap: u128) -> Result<StateSpace> {
    let m = config.m();
    if m > n {
        return Err(invalid(format!("cache size m={m} exceeds library size n={n}")));
    }
    if matches!(config.policy(), Policy::Alru(crate::model::AlruBeta::Dynamic { .. })) {
        return Err(invalid("dynamic A-LRU is time-inhomogeneous; analyze a fixed beta"));
    }
    let estimate = estimated_states(config, n);
    if estimate > cap {
        return Err(Error::TooLarge {
            what: format!("the exact {} chain at n={n} (states)", config.label()),
            count: estimate,
            cap,
        });
    }
    if config.level_count() == 1 {
        let states = enumerate_arrangements_ordered(n, m)
            .into_iter()
            .map(|slots| ChainState::new(CacheState::single(slots)))
            .collect();
        return Ok(StateSpace::from_states(config.clone(), n, states));
    }
    closure_states(config, n, cap)
}

fn seed_state(config: &PolicyConfig, n: usize) -> ChainState {
    let mut inst = PolicyInstance::new(config.clone());
    let pass: Vec<ItemId> = (1..=n as ItemId).collect();
    for _ in 0..config.level_count().max(2) {
        inst.run(&pass);
    }
    ChainState {
        cache: inst.state().clone(),
        arc_p: inst.aux().arc_p,
    }
}

/// Breadth-first closure from the seed, restricted to its unique bottom
/// strongly connected component.
fn closure_states(config: &PolicyConfig, n: usize, cap: u128) -> Result<StateSpace> {
    let seed = seed_state(config, n);
    let mut index: HashMap<ChainState, usize> = HashMap::new();
    let mut states = vec![seed.clone()];
    index.insert(seed, 0);
    let mut adj: Vec<Vec<u32>> = Vec::new();
    let mut head = 0;
    while head < states.len() {
        let s = states[head].clone();
        let mut out = Vec::new();
        for item in 1..=n as ItemId {
            for (t, _) in successors(config, &s, item) {
                let j = match index.get(&t) {
                    Some(&j) => j,
                    None => {
                        let j = states.len();
                        if j as u128 >= cap {
                            return Err(Error::TooLarge {
                                what: format!("the {} chain at n={n} (reachable states)", config.label()),
                                count: j as u128 + 1,
                                cap,
                            });
                        }
                        index.insert(t.clone(), j);
                        states.push(t);
                        j
                    }
                };
                out.push(j as u32);
            }
        }
        out.sort_unstable();
        out.dedup();
        adj.push(out);
        head += 1;
    }
    let comp = tarjan(&adj);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut has_exit = vec![false; ncomp];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            if comp[u] != comp[v as usize] {
                has_exit[comp[u]] = true;
            }
        }
    }
    let bottoms: Vec<usize> = (0..ncomp).filter(|&c| !has_exit[c]).collect();
    if bottoms.len() != 1 {
        return Err(Error::Internal(format!(
            "{} has {} closed classes; expected exactly one",
            config.label(),
            bottoms.len()
        )));
    }
    let keep: Vec<ChainState> = states
        .into_iter()
        .zip(&comp)
        .filter(|(_, &c)| c == bottoms[0])
        .map(|(s, _)| s)
        .collect();
    Ok(StateSpace::from_states(config.clone(), n, keep))
}

/// Iterative Tarjan; returns the component id of each node.
fn tarjan(adj: &[Vec<u32>]) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let n = adj.len();
    let mut idx = vec![UNSET; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if idx[root] != UNSET {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        idx[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (u, ref mut edge)) = call.last_mut() {
            if *edge < adj[u].len() {
                let v = adj[u][*edge] as usize;
                *edge += 1;
                if idx[v] == UNSET {
                    idx[v] = next;
                    low[v] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(idx[v]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[u]);
                }
                if low[u] == idx[u] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == u {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

/// Row-stochastic sparse kernel in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from per-row `(col, prob)` lists; duplicates are merged.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    /// Dense row-major matrix to sparse (zeros dropped).
    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        Self::from_rows(
            dense
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, &v)| v != 0.0)
                        .map(|(j, &v)| (j as u32, v))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// Entry `P(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&(j as u32)).map_or(0.0, |k| v[k])
    }

    /// Iterates `(row, col, prob)` over stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_states()).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &p)| (i, j as usize, p))
        })
    }

    /// `out = x P`.
    pub fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                out[j as usize] += xi * p;
            }
        }
    }

    /// `out = P x`.
    pub fn right_mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *o = c.iter().zip(v).map(|(&j, &p)| p * x[j as usize]).sum();
        }
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n_states()];
        for (i, j, p) in self.entries() {
            rows[j].push((i as u32, p));
        }
        Self::from_rows(rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        let mut d = vec![vec![0.0; n]; n];
        for (i, j, p) in self.entries() {
            d[i][j] = p;
        }
        d
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.n_states())
            .map(|i| (self.row(i).1.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest positive transition probability between distinct states.
    pub fn p_min(&self) -> f64 {
        self.entries()
            .filter(|&(i, j, p)| i != j && p > 0.0)
            .map(|(_, _, p)| p)
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes the edge list as CSV with header `row,col,prob`.
    pub fn write_edges_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["row", "col", "prob"]).map_err(csv_err)?;
        for (i, j, p) in self.entries() {
            wr.write_record([i.to_string(), j.to_string(), format!("{p:e}")])
                .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("{other:?}")),
    }
}

/// Kernel of `config` under `dist` on `space`.
pub fn build_transition_matrix(config: &PolicyConfig, dist: &PopularityDist, space: &StateSpace) -> Result<TransitionMatrix> {
    if dist.n() != space.n() {
        return Err(invalid(format!("distribution has n={}, space has n={}", dist.n(), space.n())));
    }
    let rows: Vec<Result<Vec<(u32, f64)>>> = space
        .states()
        .par_iter()
        .map(|s| {
            let mut row = Vec::with_capacity(dist.n());
            for item in 1..=dist.n() as ItemId {
                let p = dist.p(item);
                for (t, w) in successors(config, s, item) {
                    let j = space.index_of(&t).ok_or_else(|| {
                        Error::Internal(format!("successor {} of {} is outside the state space", t.cache, s.cache))
                    })?;
                    row.push((j as u32, p * w));
                }
            }
            Ok(row)
        })
        .collect();
    Ok(TransitionMatrix::from_rows(rows.into_iter().collect::<Result<_>>()?))
}

/// Stationary law with its power-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
    /// `||pi P - pi||_1` of the returned vector.
    pub residual: f64,
    pub iterations: usize,
}

impl StationaryDist {
    pub fn pi_min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn pi_max(&self) -> f64 {
        self.pi.iter().copied().fold(0.0, f64::max)
    }
}

/// Power iteration from the uniform vector until the L1 change between
/// iterates drops below `tol`.
pub fn stationary_numeric(p: &TransitionMatrix, tol: f64, max_iter: usize) -> Result<StationaryDist> {
    let n = p.n_states();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        p.left_mul(&pi, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        change = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < tol {
            p.left_mul(&pi, &mut next);
            let residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            return Ok(StationaryDist { pi, residual, iterations: it });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: change,
    })
}

/// Elementary symmetric polynomials `e_0..=e_m` of `p`.
fn elementary_symmetric(p: &[f64], m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for &x in p {
        for j in (1..=m).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// Product-form stationary laws of the four single-level policies with the
/// normalizer precomputed for a given `(dist, m)`.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    kind: PolicyKind,
    dist: PopularityDist,
    m: usize,
    norm: f64,
}

impl ClosedForm {
    pub fn new(kind: PolicyKind, dist: &PopularityDist, m: usize) -> Result<Self> {
        if m == 0 || m > dist.n() {
            return Err(invalid(format!("need 1 <= m <= n, got m={m}, n={}", dist.n())));
        }
        let norm = match kind {
            PolicyKind::Lru => 1.0,
            PolicyKind::Fifo | PolicyKind::Random => factorial(m) * elementary_symmetric(dist.probs(), m)[m],
            PolicyKind::Climb => {
                let count = falling_factorial(dist.n(), m);
                if count > DEFAULT_STATE_CAP {
                    return Err(Error::TooLarge {
                        what: "CLIMB normalizer terms".into(),
                        count,
                        cap: DEFAULT_STATE_CAP,
                    });
                }
                let mut z = 0.0;
                for_each_arrangement(dist.n(), m, |x| z += climb_weight(dist, x));
                z
            }
            other => return Err(invalid(format!("no product form for {other:?}"))),
        };
        Ok(Self {
            kind,
            dist: dist.clone(),
            m,
            norm,
        })
    }

    /// Stationary probability of the ordered state `x`.
    pub fn prob(&self, x: &[ItemId]) -> f64 {
        debug_assert_eq!(x.len(), self.m);
        let d = &self.dist;
        match self.kind {
            PolicyKind::Lru => {
                let mut num = 1.0;
                let mut den = 1.0;
                let mut prefix = 0.0;
                for (j, &item) in x.iter().enumerate() {
                    num *= d.p(item);
                    if j + 1 < x.len() {
                        prefix += d.p(item);
                        den *= 1.0 - prefix;
                    }
                }
                num / den
            }
            PolicyKind::Fifo | PolicyKind::Random => x.iter().map(|&i| d.p(i)).product::<f64>() / self.norm,
            PolicyKind::Climb => climb_weight(d, x) / self.norm,
            _ => unreachable!("validated in new"),
        }
    }

    /// Stationary vector over a single-level space.
    pub fn stationary(&self, space: &StateSpace) -> Vec<f64> {
        space
            .states()
            .iter()
            .map(|s| self.prob(&s.cache.levels[0].slots))
            .collect()
    }

    /// Hit probability. FIFO and RANDOM share one set-based evaluation:
    /// `H = sum_i p_i^2 e_{m-1}(p without i) / e_m(p)`.
    pub fn hit_probability(&self) -> f64 {
        let d = &self.dist;
        match self.kind {
            PolicyKind::Fifo | PolicyKind::Random => {
                let e_m = elementary_symmetric(d.probs(), self.m)[self.m];
                let mut h = 0.0;
                for i in 0..d.n() {
                    let others: Vec<f64> = d.probs().iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &p)| p).collect();
                    let e = elementary_symmetric(&others, self.m - 1)[self.m - 1];
                    h += d.probs()[i] * d.probs()[i] * e;
                }
                h / e_m
            }
            _ => {
                let mut h = 0.0;
                for_each_arrangement(d.n(), self.m, |x| {
                    h += self.prob(x) * x.iter().map(|&i| d.p(i)).sum::<f64>();
                });
                h
            }
        }
    }
}

fn climb_weight(d: &PopularityDist, x: &[ItemId]) -> f64 {
    let m = x.len();
    x.iter().enumerate().map(|(i, &item)| d.p(item).powi((m - i) as i32)).product()
}

fn for_each_arrangement(n: usize, m: usize, mut f: impl FnMut(&[ItemId])) {
    fn rec(n: usize, m: usize, cur: &mut Vec<ItemId>, used: &mut [bool], f: &mut dyn FnMut(&[ItemId])) {
        if cur.len() == m {
            f(cur);
            return;
        }
        for i in 1..=n {
            if !used[i] {
                used[i] = true;
                cur.push(i as ItemId);
                rec(n, m, cur, used, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(n, m, &mut Vec::with_capacity(m), &mut vec![false; n + 1], &mut f);
}

/// Closed-form stationary probability of one full single-level state.
pub fn stationary_closed_form(kind: PolicyKind, dist: &PopularityDist, state: &CacheState) -> Result<f64> {
    if state.levels.len() != 1 {
        return Err(invalid("closed forms apply to single-level states"));
    }
    let x = &state.levels[0].slots;
    Ok(ClosedForm::new(kind, dist, x.len())?.prob(x))
}

/// Long-run hit probability: expected real-cached mass under `pi`.
pub fn hit_probability(space: &StateSpace, pi: &[f64], dist: &PopularityDist) -> f64 {
    space
        .states()
        .iter()
        .zip(pi)
        .map(|(s, &w)| w * s.cache.real_items().map(|i| dist.p(i)).sum::<f64>())
        .sum()
}

/// Time reversal `P*(x,y) = pi(y) P(y,x) / pi(x)`.
pub fn time_reversal(p: &TransitionMatrix, pi: &[f64]) -> Result<TransitionMatrix> {
    if let Some(i) = pi.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput(format!("state {i} has zero stationary mass")));
    }
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); p.n_states()];
    for (y, x, v) in p.entries() {
        rows[x].push((y as u32, pi[y] * v / pi[x]));
    }
    Ok(TransitionMatrix::from_rows(rows))
}

/// Entrywise average `(P + P*) / 2`.
pub fn additive_reversibilization(p: &TransitionMatrix, p_star: &TransitionMatrix) -> Result<TransitionMatrix> {
    if p.n_states() != p_star.n_states() {
        return Err(Error::InvalidInput("kernels act on different spaces".into()));
    }
    let rows = (0..p.n_states())
        .map(|i| {
            let (c1, v1) = p.row(i);
            let (c2, v2) = p_star.row(i);
            c1.iter()
                .zip(v1)
                .chain(c2.iter().zip(v2))
                .map(|(&c, &v)| (c, 0.5 * v))
                .collect()
        })
        .collect();
    Ok(TransitionMatrix::from_rows(rows))
}

/// Detailed-balance violation `pi(x)P(x,y) != pi(y)P(y,x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub from: usize,
    pub to: usize,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reversibility {
    pub reversible: bool,
    /// The edge with the largest flow imbalance when not reversible.
    pub witness: Option<Witness>,
}

/// Detailed-balance test over every stored edge with absolute tolerance `tol`.
pub fn is_reversible(p: &TransitionMatrix, pi: &[f64], tol: f64) -> Reversibility {
    let mut worst: Option<Witness> = None;
    for (x, y, v) in p.entries() {
        if x == y {
            continue;
        }
        let forward = pi[x] * v;
        let backward = pi[y] * p.get(y, x);
        let gap = (forward - backward).abs();
        if gap > tol && worst.as_ref().is_none_or(|w| gap > (w.forward - w.backward).abs()) {
            worst = Some(Witness {
                from: x,
                to: y,
                forward,
                backward,
            });
        }
    }
    Reversibility {
        reversible: worst.is_none(),
        witness: worst,
    }
}

/// Request orders of the multiset that places each item `h(y)` times, where
/// `h(y)` is the highest level holding `y`, which rebuild `state` when replayed
/// from empty with no other requests.
///
/// The replay lifts an item one level per request and removes it from the
/// level below. The comparison uses the state's highest-level view, where
/// each item appears only at level `h(y)`.
pub fn enumerate_arrangements(state: &CacheState, config: &PolicyConfig, cap: usize) -> Result<Vec<Vec<ItemId>>> {
    let Policy::KLru { k } = *config.policy() else {
        return Err(invalid("arrangements are defined for k-LRU states"));
    };
    if state.levels.len() != k {
        return Err(invalid(format!("expected {k} levels, found {}", state.levels.len())));
    }
    let m = config.m();
    let mut height: HashMap<ItemId, usize> = HashMap::new();
    for (l, level) in state.levels.iter().enumerate() {
        for &y in &level.slots {
            height.insert(y, l + 1);
        }
    }
    let total: usize = height.values().sum();
    if total > cap {
        return Err(Error::TooLarge {
            what: "fixed requests in arrangement".into(),
            count: total as u128,
            cap: cap as u128,
        });
    }
    let target: Vec<Vec<ItemId>> = state
        .levels
        .iter()
        .enumerate()
        .map(|(l, level)| level.slots.iter().copied().filter(|y| height[y] == l + 1).collect())
        .collect();
    let mut items: Vec<ItemId> = height.keys().copied().collect();
    items.sort_unstable();
    let mut remaining: Vec<usize> = items.iter().map(|y| height[y]).collect();

    struct Search<'a> {
        items: &'a [ItemId],
        target: &'a [Vec<ItemId>],
        k: usize,
        m: usize,
        total: usize,
        out: Vec<Vec<ItemId>>,
    }
    impl Search<'_> {
        fn rec(&mut self, seq: &mut Vec<ItemId>, remaining: &mut [usize], levels: &mut Vec<Vec<ItemId>>, lvl: &mut HashMap<ItemId, usize>) {
            if seq.len() == self.total {
                if levels == self.target {
                    self.out.push(seq.clone());
                }
                return;
            }
            for idx in 0..self.items.len() {
                if remaining[idx] == 0 {
                    continue;
                }
                let y = self.items[idx];
                let saved_levels = levels.clone();
                let saved_lvl = lvl.clone();
                let from = lvl.get(&y).copied().unwrap_or(0);
                let ok = if from == self.k {
                    let l = &mut levels[from - 1];
                    let j = l.iter().position(|&x| x == y).expect("tracked");
                    l[..=j].rotate_right(1);
                    true
                } else {
                    if from > 0 {
                        levels[from - 1].retain(|&x| x != y);
                    }
                    let dest = &mut levels[from];
                    dest.insert(0, y);
                    lvl.insert(y, from + 1);
                    // An evicted item can no longer reach its level.
                    dest.len() <= self.m
                };
                if ok {
                    remaining[idx] -= 1;
                    seq.push(y);
                    self.rec(seq, remaining, levels, lvl);
                    seq.pop();
                    remaining[idx] += 1;
                }
                *levels = saved_levels;
                *lvl = saved_lvl;
            }
        }
    }

    let mut search = Search {
        items: &items,
        target: &target,
        k,
        m,
        total,
        out: Vec::new(),
    };
    search.rec(&mut Vec::new(), &mut remaining, &mut vec![Vec::new(); k], &mut HashMap::new());
    Ok(search.out)
}

/// Space, kernel and stationary law of one exact instance.
#[derive(Debug, Clone)]
pub struct ExactChain {
    pub config: PolicyConfig,
    pub dist: PopularityDist,
    pub space: StateSpace,
    pub matrix: TransitionMatrix,
    pub stationary: StationaryDist,
}

impl ExactChain {
    /// Enumerates, builds the kernel and solves numerically.
    pub fn build(config: &PolicyConfig, dist: &PopularityDist) -> Result<Self> {
        Self::build_with(config, dist, DEFAULT_STATE_CAP, DEFAULT_TOL)
    }

    pub fn build_with(config: &PolicyConfig, dist: &PopularityDist, cap: u128, tol: f64) -> Result<Self> {
        let space = enumerate_states_capped(config, dist.n(), cap)?;
        let matrix = build_transition_matrix(config, dist, &space)?;
        let stationary = stationary_numeric(&matrix, tol, DEFAULT_MAX_ITER)?;
        Ok(Self {
            config: config.clone(),
            dist: dist.clone(),
            space,
            matrix,
            stationary,
        })
    }

    pub fn pi(&self) -> &[f64] {
        &self.stationary.pi
    }

    pub fn hit_probability(&self) -> f64 {
        hit_probability(&self.space, self.pi(), &self.dist)
    }
}

/// Convenience: one-level state from slots.
pub fn single(slots: &[ItemId]) -> CacheState {
    CacheState {
        levels: vec![Level::real(slots.to_vec())],
    }
}
