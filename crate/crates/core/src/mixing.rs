//! Mixing-time measurement and bounds.
//!
//! Empirical `t_mix` comes from evolving point masses through the kernel.
//! The spectral gap, conductance and congestion are computed on the additive
//! reversibilization `(P + P*)/2`, which shares its stationary law and its
//! spectral gap with `P`. The bound evaluators turn stationary extremes into
//! the congestion-based mixing-time bound.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{additive_reversibilization, is_reversible, time_reversal, ExactChain, StateSpace, TransitionMatrix};
use crate::error::{invalid, Error, Result};
use crate::model::{PolicyConfig, PolicyKind, PopularityDist};
use crate::rankmetrics::tv_distance;

/// Largest state count for which the default start set is every state.
pub const ALL_STARTS_CAP: usize = 2_000;
/// Largest state count accepted by the exhaustive conductance scan.
pub const CONDUCTANCE_CAP: usize = 24;
pub const DEFAULT_MAX_STEPS: usize = 10_000_000;
pub const GAP_TOL: f64 = 1e-10;

/// `delta_start P^t`.
pub fn evolve(p: &TransitionMatrix, start: usize, t: usize) -> Vec<f64> {
    let mut x = vec![0.0; p.n_states()];
    x[start] = 1.0;
    let mut next = vec![0.0; x.len()];
    for _ in 0..t {
        p.left_mul(&x, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    x
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StartSet {
    /// Every state; the sup is exact.
    All,
    /// Reverse-popularity state plus the ideal state; a lower bound on the sup.
    Adversarial,
    Custom(Vec<usize>),
}

impl StartSet {
    /// `All` when the space is small enough, otherwise `Adversarial`.
    pub fn default_for(space_len: usize) -> Self {
        if space_len <= ALL_STARTS_CAP {
            StartSet::All
        } else {
            StartSet::Adversarial
        }
    }

    pub fn resolve(&self, space: &StateSpace) -> Vec<usize> {
        match self {
            StartSet::All => (0..space.len()).collect(),
            StartSet::Adversarial => {
                let mut v = vec![space.adversarial_start(), space.ideal_start()];
                v.dedup();
                v
            }
            StartSet::Custom(v) => v.clone(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StartSet::All => "all",
            StartSet::Adversarial => "adversarial",
            StartSet::Custom(_) => "custom",
        }
    }
}

/// Outcome of an empirical mixing-time scan.
#[derive(Debug, Clone, Serialize)]
pub struct MixingReport {
    pub epsilon: f64,
    pub t_mix: usize,
    pub start_set: String,
    pub starts: Vec<usize>,
    /// True only when every state was a start.
    pub exact_sup: bool,
    /// `tv[t][s]` is the TV distance after `t` steps from `starts[s]`.
    pub tv: Vec<Vec<f64>>,
}

impl MixingReport {
    pub fn sup_tv(&self, t: usize) -> f64 {
        self.tv[t].iter().copied().fold(0.0, f64::max)
    }

    /// Long-format CSV with header `t,start_id,tv,sup_tv`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record(["t", "start_id", "tv", "sup_tv"]).map_err(err)?;
        for (t, row) in self.tv.iter().enumerate() {
            let sup = self.sup_tv(t);
            for (s, v) in row.iter().enumerate() {
                wr.write_record([t.to_string(), self.starts[s].to_string(), format!("{v:e}"), format!("{sup:e}")])
                    .map_err(err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// TV distances to `pi` from each start for `t = 0..=t_max`, or until `stop`
/// accepts the row. Per-start TV is non-increasing in `t`; a violation beyond
/// rounding is reported as an internal error.
pub fn tv_trajectory(
    p: &TransitionMatrix,
    pi: &[f64],
    starts: &[usize],
    t_max: usize,
    mut stop: impl FnMut(&[f64]) -> bool,
) -> Result<Vec<Vec<f64>>> {
    let n = p.n_states();
    if let Some(&s) = starts.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidInput(format!("start {s} outside a space of {n} states")));
    }
    let mut dists: Vec<Vec<f64>> = starts
        .iter()
        .map(|&s| {
            let mut x = vec![0.0; n];
            x[s] = 1.0;
            x
        })
        .collect();
    let tv_row = |d: &[Vec<f64>]| -> Vec<f64> { d.par_iter().map(|x| tv_distance(x, pi).expect("same length")).collect() };
    let mut rows = vec![tv_row(&dists)];
    let mut bufs = vec![vec![0.0; n]; starts.len()];
    for _ in 0..t_max {
        if stop(rows.last().unwrap()) {
            break;
        }
        dists.par_iter_mut().zip(bufs.par_iter_mut()).for_each(|(x, b)| {
            p.left_mul(x, b);
            std::mem::swap(x, b);
        });
        let row = tv_row(&dists);
        let prev = rows.last().unwrap();
        if let Some(s) = (0..row.len()).find(|&s| row[s] > prev[s] + 1e-9) {
            return Err(Error::Internal(format!(
                "TV from start {} rose from {} to {}",
                starts[s], prev[s], row[s]
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Smallest `t` with `max_s TV(delta_s P^t, pi) <= epsilon`, scanning one
/// step at a time so the trajectory is recorded exactly.
pub fn empirical_mixing_time(
    p: &TransitionMatrix,
    pi: &[f64],
    epsilon: f64,
    space: &StateSpace,
    starts: &StartSet,
) -> Result<MixingReport> {
    empirical_mixing_time_capped(p, pi, epsilon, space, starts, DEFAULT_MAX_STEPS)
}

pub fn empirical_mixing_time_capped(
    p: &TransitionMatrix,
    pi: &[f64],
    epsilon: f64,
    space: &StateSpace,
    starts: &StartSet,
    max_steps: usize,
) -> Result<MixingReport> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let ids = starts.resolve(space);
    if ids.is_empty() {
        return Err(Error::InvalidInput("empty start set".into()));
    }
    let done = |row: &[f64]| row.iter().copied().fold(0.0, f64::max) <= epsilon;
    let tv = tv_trajectory(p, pi, &ids, max_steps, done)?;
    let last = tv.last().unwrap();
    if !done(last) {
        return Err(Error::NoConvergence {
            iterations: max_steps,
            residual: last.iter().copied().fold(0.0, f64::max),
        });
    }
    Ok(MixingReport {
        epsilon,
        t_mix: tv.len() - 1,
        start_set: starts.label().into(),
        exact_sup: ids.len() == space.len(),
        starts: ids,
        tv,
    })
}

/// `(P + P*)/2` for a kernel with stationary law `pi`.
pub fn reversibilize(p: &TransitionMatrix, pi: &[f64]) -> Result<TransitionMatrix> {
    additive_reversibilization(p, &time_reversal(p, pi)?)
}

/// `1 - lambda_2` of `(P + P*)/2`, by power iteration on the shifted
/// symmetrized kernel `(S + I)/2` with the Perron vector `sqrt(pi)` projected
/// out. Stops once the eigen-residual is below `tol`.
pub fn spectral_gap(p: &TransitionMatrix, pi: &[f64]) -> Result<f64> {
    spectral_gap_with(p, pi, GAP_TOL, DEFAULT_MAX_STEPS)
}

pub fn spectral_gap_with(p: &TransitionMatrix, pi: &[f64], tol: f64, max_iter: usize) -> Result<f64> {
    let n = p.n_states();
    if n < 2 {
        return Ok(1.0);
    }
    let r = reversibilize(p, pi)?;
    let root: Vec<f64> = pi.iter().map(|x| x.sqrt()).collect();
    let deflate = |v: &mut Vec<f64>| {
        let dot: f64 = v.iter().zip(&root).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&root).for_each(|(a, b)| *a -= dot * b);
    };
    let normalize = |v: &mut Vec<f64>| {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
    };
    let mut tmp = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut apply = |v: &[f64], out: &mut Vec<f64>| {
        for i in 0..n {
            tmp[i] = v[i] / root[i];
        }
        r.right_mul(&tmp, &mut scaled);
        for i in 0..n {
            out[i] = 0.5 * (root[i] * scaled[i] + v[i]);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    deflate(&mut v);
    normalize(&mut v);
    let mut av = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        apply(&v, &mut av);
        deflate(&mut av);
        let mu: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
        residual = av.iter().zip(&v).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
        if residual < tol {
            let lambda2 = 2.0 * mu - 1.0;
            return Ok(1.0 - lambda2);
        }
        std::mem::swap(&mut v, &mut av);
        normalize(&mut v);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Minimum of `Q(S, S^c) / pi(S)` over subsets with `pi(S) <= 1/2`, where
/// `Q(x, y) = pi(x) P(x, y)`. Exhaustive Gray-code scan.
pub fn conductance_exact(p: &TransitionMatrix, pi: &[f64]) -> Result<f64> {
    let n = p.n_states();
    if n > CONDUCTANCE_CAP {
        return Err(Error::TooLarge {
            what: "the exhaustive conductance scan".into(),
            count: n as u128,
            cap: CONDUCTANCE_CAP as u128,
        });
    }
    let mut q = vec![vec![0.0; n]; n];
    for (i, j, v) in p.entries() {
        if i != j {
            q[i][j] = pi[i] * v;
        }
    }
    let exact = |mask: u32| -> (f64, f64) {
        let (mut cut, mut mass) = (0.0, 0.0);
        for x in (0..n).filter(|&x| mask >> x & 1 == 1) {
            mass += pi[x];
            cut += (0..n).filter(|&y| mask >> y & 1 == 0).map(|y| q[x][y]).sum::<f64>();
        }
        (cut, mass)
    };
    let mut best = f64::INFINITY;
    let (mut cut, mut mass) = (0.0, 0.0);
    let mut mask: u32 = 0;
    for i in 1u64..(1u64 << n) {
        let x = i.trailing_zeros() as usize;
        let adding = mask >> x & 1 == 0;
        let into_s: f64 = (0..n).filter(|&y| y != x && mask >> y & 1 == 1).map(|y| q[y][x]).sum();
        let out_s: f64 = (0..n).filter(|&y| y != x && mask >> y & 1 == 0).map(|y| q[x][y]).sum();
        mask ^= 1 << x;
        if adding {
            cut += out_s - into_s;
            mass += pi[x];
        } else {
            cut += into_s - out_s;
            mass -= pi[x];
        }
        if i % 4096 == 0 {
            (cut, mass) = exact(mask);
        }
        // The running sums only nominate; the exact recount decides.
        if mass > 0.0 && mass <= 0.5 + 1e-9 && cut / mass < best + 1e-9 {
            let (c, s) = exact(mask);
            if s <= 0.5 + 1e-12 && c / s < best {
                best = c / s;
            }
        }
    }
    Ok(if best.is_finite() { best.max(0.0) } else { 0.0 })
}

/// Canonical-path congestion `max_e load(e) / Q(e)` with BFS shortest paths
/// over positive off-diagonal edges; ties go to the lowest state index.
pub fn congestion(p: &TransitionMatrix, pi: &[f64]) -> Result<f64> {
    let n = p.n_states();
    let row_start: Vec<usize> = {
        let mut v = vec![0];
        for i in 0..n {
            v.push(v[i] + p.row(i).0.len());
        }
        v
    };
    let edge_index = |u: usize, v: usize| -> usize { row_start[u] + p.row(u).0.binary_search(&(v as u32)).expect("edge on path") };
    let loads: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x| -> Result<Vec<(usize, f64)>> {
            let mut parent = vec![usize::MAX; n];
            parent[x] = x;
            let mut queue = std::collections::VecDeque::from([x]);
            while let Some(u) = queue.pop_front() {
                let (cols, vals) = p.row(u);
                for (&c, &v) in cols.iter().zip(vals) {
                    let c = c as usize;
                    if v > 0.0 && parent[c] == usize::MAX {
                        parent[c] = u;
                        queue.push_back(c);
                    }
                }
            }
            let mut out = Vec::new();
            for y in (0..n).filter(|&y| y != x) {
                if parent[y] == usize::MAX {
                    return Err(Error::InvalidPaths { from: x, to: y });
                }
                let w = pi[x] * pi[y];
                let mut v = y;
                while v != x {
                    let u = parent[v];
                    out.push((edge_index(u, v), w));
                    v = u;
                }
            }
            Ok(out)
        })
        .try_fold(
            || vec![0.0; p.nnz()],
            |mut acc, part| {
                for (e, w) in part? {
                    acc[e] += w;
                }
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![0.0; p.nnz()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let mut rho: f64 = 0.0;
    for (e, (u, _, pr)) in p.entries().enumerate() {
        if loads[e] > 0.0 {
            rho = rho.max(loads[e] / (pi[u] * pr));
        }
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheegerCheck {
    pub phi: f64,
    pub gamma: f64,
    pub ok: bool,
}

/// `Phi^2/2 <= gamma <= 2 Phi` on `(P + P*)/2`.
pub fn cheeger_check(p: &TransitionMatrix, pi: &[f64]) -> Result<CheegerCheck> {
    let r = reversibilize(p, pi)?;
    let phi = conductance_exact(&r, pi)?;
    let gamma = spectral_gap(&r, pi)?;
    let slack = 1e-9;
    let ok = phi * phi / 2.0 <= gamma + slack && gamma <= 2.0 * phi + slack;
    Ok(CheegerCheck { phi, gamma, ok })
}

/// Inputs to the congestion-based mixing bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub pi_max: f64,
    pub pi_min: f64,
    pub p_min: f64,
    /// State count; held as a float since analytic state counts overflow integers.
    pub gamma: f64,
    pub epsilon: f64,
    pub reversible: bool,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi_min > 0.0 && self.pi_min <= self.pi_max && self.pi_max <= 1.0) {
            return Err(invalid(format!(
                "need 0 < pi_min <= pi_max <= 1, got {} and {}",
                self.pi_min, self.pi_max
            )));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(invalid(format!("P_min must lie in (0, 1], got {}", self.p_min)));
        }
        if !(self.gamma >= 2.0) {
            return Err(invalid(format!("need at least 2 states, got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Measured extremes of an exact chain.
    pub fn from_chain(chain: &ExactChain, epsilon: f64) -> Self {
        let pi = chain.pi();
        Self {
            pi_max: chain.stationary.pi_max(),
            pi_min: chain.stationary.pi_min(),
            p_min: chain.matrix.p_min(),
            gamma: pi.len() as f64,
            epsilon,
            reversible: is_reversible(&chain.matrix, pi, 1e-10).reversible,
        }
    }
}

/// `8 pi_max^4 Gamma^4 / (pi_min P_min)^2 * (ln(1/pi_min) + ln(1/eps))`,
/// with `P_min` halved for non-reversible chains. Evaluated in log space.
pub fn mixing_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let pm = if inputs.reversible { inputs.p_min } else { inputs.p_min / 2.0 };
    let log = 8f64.ln() + 4.0 * inputs.pi_max.ln() + 4.0 * inputs.gamma.ln()
        - 2.0 * (inputs.pi_min.ln() + pm.ln())
        + (-inputs.pi_min.ln() - inputs.epsilon.ln()).ln();
    Ok(log.exp())
}

fn falling(n: usize, m: usize) -> f64 {
    (0..m).map(|i| (n - i) as f64).product()
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Bound inputs from the policy's closed-form stationary extremes, with
/// `P_min = p_n`. `pi_max` is clamped to 1.
pub fn analytic_inputs(config: &PolicyConfig, dist: &PopularityDist, epsilon: f64) -> Result<BoundInputs> {
    let p = dist.probs();
    let n = p.len();
    let m = config.m();
    if m >= n {
        return Err(invalid(format!("analytic bounds need m < n, got m={m}, n={n}")));
    }
    let lp = |i: usize| p[i - 1].ln();
    let head = |e: &dyn Fn(usize) -> f64| (1..=m).map(|i| e(i) * lp(i)).sum::<f64>();
    let tail = |e: &dyn Fn(usize) -> f64| (1..=m).map(|i| e(i) * lp(n - m + i)).sum::<f64>();
    let (ln_min, ln_max, gamma, reversible) = match config.kind() {
        PolicyKind::Lru => {
            let denom_min: f64 = (1..m).map(|j| (1.0 - (1..=j).map(|l| p[n - l]).sum::<f64>()).ln()).sum();
            let denom_max: f64 = (1..m).map(|j| (1.0 - p[..j].iter().sum::<f64>()).ln()).sum();
            (tail(&|_| 1.0) - denom_min, head(&|_| 1.0) - denom_max, falling(n, m), false)
        }
        kind @ (PolicyKind::Fifo | PolicyKind::Random | PolicyKind::Climb) => {
            let g = falling(n, m);
            let (h, t) = if kind == PolicyKind::Climb {
                (head(&|i| (m - i + 1) as f64), tail(&|i| i as f64))
            } else {
                (head(&|_| 1.0), tail(&|_| 1.0))
            };
            (t - g.ln() - h, h - g.ln() - t, g, kind != PolicyKind::Fifo)
        }
        PolicyKind::KLru => {
            let k = config.level_count();
            if k * m > n {
                return Err(invalid(format!("k-LRU bounds need k*m <= n, got {k}*{m} > {n}")));
            }
            let ln_min: f64 = (1..=k)
                .map(|i| {
                    let block: f64 = ((i - 1) * m + 1..=i * m).map(|l| lp(n - l + 1)).sum();
                    (k - i + 1) as f64 * block
                })
                .sum();
            let big_k = k * (k + 1) * m / 2;
            let ln_max = k as f64 * head(&|_| 1.0) + ln_factorial(big_k) + (big_k - 1) as f64 * ln_binomial(n, m - 1)
                - (big_k - 1) as f64 * (1.0 - p[..m - 1].iter().sum::<f64>()).ln();
            (ln_min, ln_max, falling(n, m).powi(k as i32), false)
        }
        PolicyKind::LruM => {
            let caps = config.level_caps().expect("static layout");
            let h = caps.len();
            let mut ln_min = 0.0;
            let mut off = 0;
            for (i, &mi) in caps.iter().enumerate() {
                ln_min += (i + 1) as f64 * (off + 1..=off + mi).map(|k| lp(n + k - m)).sum::<f64>();
                off += mi;
            }
            let mut ln_top = 0.0;
            let mut off = 0;
            for i in 1..=h {
                let mi = caps[h - i];
                ln_top += (h - i + 1) as f64 * (off + 1..=off + mi).map(lp).sum::<f64>();
                off += mi;
            }
            let big_k: usize = caps.iter().enumerate().map(|(j, &c)| (j + 1) * c).sum();
            let ln_max = ln_top + ln_factorial(big_k) + (big_k - 1) as f64 * ln_binomial(n, m - 1)
                - (big_k - 1) as f64 * (1.0 - p[..m - 1].iter().sum::<f64>()).ln();
            (ln_min, ln_max, falling(n, m), false)
        }
        other => return Err(invalid(format!("no closed-form bound for {other:?}"))),
    };
    Ok(BoundInputs {
        pi_max: ln_max.exp().min(1.0),
        pi_min: ln_min.exp(),
        p_min: p[n - 1],
        gamma,
        epsilon,
        reversible,
    })
}

/// Exponent `e` of the `O(n^e ln n)` bound under Zipf(`alpha`) popularity.
pub fn zipf_bound_exponent(config: &PolicyConfig, alpha: f64) -> Result<f64> {
    let m = config.m() as f64;
    Ok(match config.kind() {
        PolicyKind::Lru => (4.0 * alpha + 2.0) * m + 2.0,
        PolicyKind::Random | PolicyKind::Fifo => (6.0 * alpha + 2.0) * m + 2.0,
        PolicyKind::Climb => 3.0 * alpha * m * (m + 1.0) + 2.0 * m + 2.0,
        PolicyKind::KLru => {
            let k = config.level_count() as f64;
            (k + 1.0) * k * (2.0 * m - 1.0) * m + 4.0 * (k * alpha - 1.0) * m + 6.0
        }
        PolicyKind::LruM => {
            let caps = config.level_caps().expect("static layout");
            let weighted: f64 = caps.iter().enumerate().map(|(j, &c)| ((j + 1) * c) as f64).sum();
            (4.0 * m + 4.0 * alpha - 6.0) * weighted + 6.0
        }
        other => return Err(invalid(format!("no Zipf exponent for {other:?}"))),
    })
}

/// `e(t) = tau + kappa * TV(t)`.
pub fn learning_error(tau: f64, kappa: f64, tv_at_t: f64) -> Result<f64> {
    if tau < 0.0 || kappa < 0.0 || tv_at_t < 0.0 {
        return Err(invalid("learning-error inputs must be non-negative"));
    }
    Ok(tau + kappa * tv_at_t)
}

/// Diagnostic `max_s sum_y P^t(s, y) K(y, c*)` given per-state distances.
pub fn raw_expected_distance(p: &TransitionMatrix, starts: &[usize], distances: &[f64], t: usize) -> f64 {
    starts
        .par_iter()
        .map(|&s| evolve(p, s, t).iter().zip(distances).map(|(a, b)| a * b).sum::<f64>())
        .reduce(|| 0.0, f64::max)
}
