//! Simulation engine and experiment pipelines: windowed hit rates, Monte
//! Carlo stationary estimates, learning-error curves and tau-distance versus
//! hit-probability tables.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{build_transition_matrix, enumerate_states, ClosedForm, ExactChain, StateSpace, TransitionMatrix};
use crate::error::{invalid, Error, Result};
use crate::mixing::{learning_error, StartSet};
use crate::model::{ideal_vector, make_zipf, AlruBeta, AlruLayout, CacheState, ItemId, Policy, PolicyConfig, PolicyKind, PopularityDist, RankWeights, RequestStream};
use crate::policies::{alru_beta, repartition_alru, step_alru, PolicyInstance};
use crate::rankmetrics::{kappa_diameter, kappa_of_projections, tau_distance, Kappa, KappaMode, PositionMap, DEFAULT_PAIR_CAP};
use crate::workload::{read_trace, sample_irm, sample_modulated, ModulationMode, ModulationSpec, TraceFormat};

/// Independent child seed `k` of `base`.
pub fn derive_seed(base: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(k);
    rng.next_u64()
}

/// Where requests come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    Zipf { n: usize, alpha: f64 },
    Probs { probs: Vec<f64> },
    Modulated { n: usize, alpha: f64, shuffle_rate: f64, mode: ModulationMode },
    Trace { path: PathBuf, format: TraceFormat },
}

impl Source {
    /// The stationary popularity law, when the source has one.
    pub fn dist(&self) -> Result<Option<PopularityDist>> {
        Ok(match self {
            Source::Zipf { n, alpha } => Some(make_zipf(*n, *alpha)?),
            Source::Probs { probs } => Some(PopularityDist::new(probs.clone())?),
            _ => None,
        })
    }

    /// A stream of `count` requests; traces ignore `seed` and `count`.
    pub fn materialize(&self, count: usize, seed: u64) -> Result<RequestStream> {
        match self {
            Source::Zipf { .. } | Source::Probs { .. } => {
                Ok(sample_irm(&self.dist()?.expect("stationary source"), count, seed))
            }
            Source::Modulated { n, alpha, shuffle_rate, mode } => {
                let spec = ModulationSpec::new(*shuffle_rate, *mode)?;
                Ok(sample_modulated(&make_zipf(*n, *alpha)?, spec, count, seed)?.stream)
            }
            Source::Trace { path, format } => read_trace(path, *format),
        }
    }
}

/// Settings of one simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub policies: Vec<PolicyConfig>,
    pub source: Source,
    pub count: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub window: usize,
    #[serde(default = "one")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(invalid("no policies given"));
        }
        if self.window == 0 {
            return Err(invalid("window must be at least 1"));
        }
        if self.reps == 0 {
            return Err(invalid("need at least one replication"));
        }
        if !matches!(self.source, Source::Trace { .. }) && self.burn_in >= self.count {
            return Err(invalid(format!(
                "burn-in {} must be below the request count {}",
                self.burn_in, self.count
            )));
        }
        Ok(())
    }
}

/// One replication of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepResult {
    pub stream_seed: u64,
    pub policy_seed: u64,
    pub hits: u64,
    pub requests: u64,
    /// `(end index, hit rate)` per post-burn-in window.
    pub windows: Vec<(usize, f64)>,
}

impl RepResult {
    pub fn hit_rate(&self) -> f64 {
        self.hits as f64 / self.requests as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyResult {
    pub policy: String,
    pub m: usize,
    pub reps: Vec<RepResult>,
    pub hit_mean: f64,
    pub hit_stderr: f64,
    /// `(end index, mean, stderr)` per window.
    pub windows: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSeries {
    pub experiment: String,
    pub results: Vec<PolicyResult>,
}

/// One row of the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub policy: String,
    pub m: usize,
    pub t: u64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
}

/// Writes records as CSV with header `experiment,policy,m,t,metric,value,stderr`.
pub fn write_records_csv<W: Write>(records: &[Record], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    for r in records {
        wr.serialize(r).map_err(err)?;
    }
    if records.is_empty() {
        wr.write_record(["experiment", "policy", "m", "t", "metric", "value", "stderr"])
            .map_err(err)?;
    }
    wr.flush()?;
    Ok(())
}

impl ResultSeries {
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for r in &self.results {
            let rec = |t: u64, metric: &str, value: f64, stderr: f64| Record {
                experiment: self.experiment.clone(),
                policy: r.policy.clone(),
                m: r.m,
                t,
                metric: metric.into(),
                value,
                stderr,
            };
            for &(t, v, se) in &r.windows {
                out.push(rec(t as u64, "hit_rate_window", v, se));
            }
            let horizon = r.windows.last().map_or(0, |w| w.0 as u64);
            out.push(rec(horizon, "hit_rate_cumulative", r.hit_mean, r.hit_stderr));
        }
        out
    }
}

fn binomial_stderr(p: f64, n: f64) -> f64 {
    if n > 0.0 {
        (p * (1.0 - p) / n).sqrt()
    } else {
        f64::NAN
    }
}

/// Mean and standard error: across replications when there are at least
/// five, binomial on the pooled count otherwise.
fn aggregate(rates: &[f64], pooled_n: f64) -> (f64, f64) {
    let r = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / r;
    if rates.len() >= 5 {
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (mean, (var / r).sqrt())
    } else {
        (mean, binomial_stderr(mean, pooled_n))
    }
}

fn simulate(config: &PolicyConfig, items: &[ItemId], burn_in: usize, window: usize) -> (u64, Vec<(usize, f64)>) {
    let mut inst = PolicyInstance::new(config.clone());
    inst.run(&items[..burn_in.min(items.len())]);
    let mut hits = 0;
    let mut windows = Vec::new();
    let (mut w_hits, mut w_len) = (0u64, 0usize);
    for (i, &x) in items.iter().enumerate().skip(burn_in) {
        let h = inst.step(x) as u64;
        hits += h;
        w_hits += h;
        w_len += 1;
        if w_len == window || i + 1 == items.len() {
            windows.push((i + 1, w_hits as f64 / w_len as f64));
            (w_hits, w_len) = (0, 0);
        }
    }
    (hits, windows)
}

/// Replays each replication's stream through every policy.
pub fn run_simulation(spec: &ExperimentSpec) -> Result<ResultSeries> {
    spec.validate()?;
    let per_rep: Vec<Vec<RepResult>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<RepResult>> {
            let stream_seed = derive_seed(spec.seed, 2 * rep as u64);
            let stream = spec.source.materialize(spec.count, stream_seed)?;
            if stream.len() <= spec.burn_in {
                return Err(invalid(format!(
                    "stream of {} requests does not exceed the burn-in {}",
                    stream.len(),
                    spec.burn_in
                )));
            }
            Ok(spec
                .policies
                .par_iter()
                .map(|config| {
                    let policy_seed = derive_seed(spec.seed ^ config.rng_seed(), 2 * rep as u64 + 1);
                    let cfg = config.clone().with_seed(policy_seed);
                    let (hits, windows) = simulate(&cfg, &stream.items, spec.burn_in, spec.window);
                    RepResult {
                        stream_seed,
                        policy_seed,
                        hits,
                        requests: (stream.len() - spec.burn_in) as u64,
                        windows,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let results = spec
        .policies
        .iter()
        .enumerate()
        .map(|(j, config)| {
            let reps: Vec<RepResult> = per_rep.iter().map(|r| r[j].clone()).collect();
            let rates: Vec<f64> = reps.iter().map(|r| r.hit_rate()).collect();
            let pooled: f64 = reps.iter().map(|r| r.requests as f64).sum();
            let (hit_mean, hit_stderr) = aggregate(&rates, pooled);
            let windows = (0..reps[0].windows.len())
                .map(|w| {
                    let (end, _) = reps[0].windows[w];
                    let len = end - if w == 0 { spec.burn_in } else { reps[0].windows[w - 1].0 };
                    let rates: Vec<f64> = reps.iter().map(|r| r.windows[w].1).collect();
                    let (mean, se) = aggregate(&rates, (len * reps.len()) as f64);
                    (end, mean, se)
                })
                .collect();
            PolicyResult {
                policy: config.label(),
                m: config.m(),
                reps,
                hit_mean,
                hit_stderr,
                windows,
            }
        })
        .collect();
    Ok(ResultSeries {
        experiment: spec.name.clone(),
        results,
    })
}

/// Post-burn-in hit frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub hit: f64,
    pub stderr: f64,
    pub first_half: f64,
    pub second_half: f64,
    pub burn_in: usize,
    pub samples: usize,
    /// False when the two halves differ by more than three standard errors
    /// even after the burn-in doublings.
    pub stationary: bool,
}

/// Burn-in doublings tried before an estimate is reported as unconverged.
pub const MAX_BURN_IN_DOUBLINGS: usize = 3;

/// Monte Carlo hit probability under IRM requests from `dist`.
pub fn monte_carlo_stationary(config: &PolicyConfig, dist: &PopularityDist, burn_in: usize, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let sampler = WeightedIndex::new(dist.probs()).expect("valid popularity");
    let mut burn = burn_in;
    let mut attempt = 0;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt as u64));
        let cfg = config.clone().with_seed(derive_seed(seed ^ config.rng_seed(), 1000 + attempt as u64));
        let mut inst = PolicyInstance::new(cfg);
        for _ in 0..burn {
            inst.step(sampler.sample(&mut rng) as ItemId + 1);
        }
        let half = samples / 2;
        let mut h = [0u64; 2];
        for i in 0..samples {
            h[(i >= half) as usize] += inst.step(sampler.sample(&mut rng) as ItemId + 1) as u64;
        }
        let (n1, n2) = (half as f64, (samples - half) as f64);
        let (h1, h2) = (h[0] as f64 / n1, h[1] as f64 / n2);
        let hit = (h[0] + h[1]) as f64 / samples as f64;
        let sd = (h1 * (1.0 - h1) / n1 + h2 * (1.0 - h2) / n2).sqrt();
        let stationary = (h1 - h2).abs() <= 3.0 * sd;
        if stationary || attempt == MAX_BURN_IN_DOUBLINGS {
            if !stationary {
                log::warn!("{}: halves disagree ({h1:.5} vs {h2:.5}) after burn-in {burn}", config.label());
            }
            return Ok(McEstimate {
                hit,
                stderr: binomial_stderr(hit, samples as f64),
                first_half: h1,
                second_half: h2,
                burn_in: burn,
                samples,
                stationary,
            });
        }
        attempt += 1;
        burn = burn.max(1) * 2;
    }
}

/// Time-averaged distance of the projected state to `cstar` along an IRM run.
pub fn monte_carlo_tau(
    config: &PolicyConfig,
    dist: &PopularityDist,
    weights: &RankWeights,
    burn_in: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = dist.n();
    let cstar = ideal_vector(dist, config.m())?;
    let target = PositionMap::from_slots(n, &cstar.real_items().collect::<Vec<_>>());
    let sampler = WeightedIndex::new(dist.probs()).expect("valid popularity");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = PolicyInstance::new(config.clone().with_seed(derive_seed(seed, 1)));
    for _ in 0..burn_in {
        inst.step(sampler.sample(&mut rng) as ItemId + 1);
    }
    let mut memo: HashMap<Vec<ItemId>, f64> = HashMap::new();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        inst.step(sampler.sample(&mut rng) as ItemId + 1);
        let proj = config.project(inst.state());
        let d = *memo
            .entry(proj)
            .or_insert_with_key(|p| crate::rankmetrics::kendall_generalized(&PositionMap::from_slots(n, p), &target, weights));
        sum += d;
        sq += d * d;
    }
    let s = samples as f64;
    let mean = sum / s;
    // Naive i.i.d. error; successive states are correlated.
    Ok((mean, ((sq / s - mean * mean).max(0.0) / s).sqrt()))
}

/// How a stationary law was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Numeric,
    MonteCarlo,
}

/// State space and stationary law, from the product form for single-level
/// policies and by power iteration otherwise.
pub struct Stationary {
    pub space: StateSpace,
    pub pi: Vec<f64>,
    pub method: Method,
    pub matrix: Option<TransitionMatrix>,
}

pub fn stationary_law(config: &PolicyConfig, dist: &PopularityDist, with_matrix: bool) -> Result<Stationary> {
    if matches!(config.policy(), Policy::Alru(AlruBeta::Dynamic { .. })) {
        return Err(invalid("dynamic A-LRU is time-inhomogeneous and has no stationary law"));
    }
    match config.kind() {
        PolicyKind::Lru | PolicyKind::Fifo | PolicyKind::Random | PolicyKind::Climb => {
            let space = enumerate_states(config, dist.n())?;
            let pi = ClosedForm::new(config.kind(), dist, config.m())?.stationary(&space);
            let matrix = with_matrix.then(|| build_transition_matrix(config, dist, &space)).transpose()?;
            Ok(Stationary {
                space,
                pi,
                method: Method::ClosedForm,
                matrix,
            })
        }
        _ => {
            let chain = ExactChain::build(config, dist)?;
            Ok(Stationary {
                pi: chain.stationary.pi,
                space: chain.space,
                method: Method::Numeric,
                matrix: Some(chain.matrix),
            })
        }
    }
}

/// Time grid: `log:a..b` (about ten points per decade), `lin:a..b:step`, or a
/// comma-separated list.
pub fn parse_t_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || invalid(format!("bad time grid {s:?}; use log:a..b, lin:a..b:step or a list"));
    let range = |r: &str| -> Result<(usize, usize)> {
        let (a, b) = r.split_once("..").ok_or_else(bad)?;
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        Ok((a, b))
    };
    let mut grid: Vec<usize> = if let Some(r) = s.strip_prefix("log:") {
        let (a, b) = range(r)?;
        let (la, lb) = ((a.max(1) as f64).log10(), (b.max(1) as f64).log10());
        let steps = ((lb - la) * 10.0).ceil() as usize;
        let mut g: Vec<usize> = (0..=steps)
            .map(|i| 10f64.powf(la + (lb - la) * i as f64 / steps.max(1) as f64).round() as usize)
            .collect();
        if a == 0 {
            g.insert(0, 0);
        }
        g
    } else if let Some(r) = s.strip_prefix("lin:") {
        let (r, step) = r.rsplit_once(':').ok_or_else(bad)?;
        let step: usize = step.trim().parse().map_err(|_| bad())?;
        let (a, b) = range(r)?;
        if step == 0 {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

/// State space on which the TV term of the learning error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvBasis {
    /// Full chain states, including meta levels and ghosts.
    Full,
    /// Real content read as one ordered list, the only part the distance
    /// sees; the bound on the expected distance holds for either basis.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: usize,
    pub tv: f64,
    /// `tau + kappa * tv`.
    pub error: f64,
    /// Worst-start expected distance of the time-`t` law to the ideal
    /// cache, which `error` bounds.
    pub expected_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningCurve {
    pub policy: String,
    pub m: usize,
    pub tau: f64,
    pub kappa: f64,
    pub kappa_exact: bool,
    pub start_set: String,
    pub tv_basis: TvBasis,
    pub states: usize,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn records(&self, experiment: &str) -> Vec<Record> {
        let mut out = Vec::new();
        for p in &self.points {
            for (metric, value) in [
                ("learning_error", p.error),
                ("sup_tv", p.tv),
                ("expected_distance", p.expected_distance),
            ] {
                out.push(Record {
                    experiment: experiment.into(),
                    policy: self.policy.clone(),
                    m: self.m,
                    t: p.t as u64,
                    metric: metric.into(),
                    value,
                    stderr: 0.0,
                });
            }
        }
        out
    }
}

/// Options of [`learning_error_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub t_grid: Vec<usize>,
    /// `None` picks every state on small spaces and adversarial starts otherwise.
    pub starts: Option<StartSet>,
    /// Shared diameter; `None` computes the policy's own.
    pub kappa: Option<f64>,
    /// `None` means full states for time-homogeneous chains and projected
    /// content for dynamic A-LRU, whose ghost layout changes over time.
    pub tv_basis: Option<TvBasis>,
}

impl CurveOptions {
    pub fn new(t_grid: Vec<usize>) -> Self {
        Self {
            t_grid,
            starts: None,
            kappa: None,
            tv_basis: None,
        }
    }
}

/// Full-state TV below which the evolution stops. Later grid points reuse the
/// last values: full TV is non-increasing, and projected TV and the
/// expected-distance excess are bounded by it.
const TV_FLOOR: f64 = 1e-15;

fn own_kappa(projections: Vec<Vec<ItemId>>, n: usize, weights: &RankWeights) -> Result<Kappa> {
    match kappa_of_projections(projections.clone(), n, weights, KappaMode::Exact, DEFAULT_PAIR_CAP) {
        Err(Error::TooLarge { .. }) => kappa_of_projections(
            projections,
            n,
            weights,
            KappaMode::Heuristic {
                random_pairs: 100_000,
                seed: 0,
            },
            DEFAULT_PAIR_CAP,
        ),
        other => other,
    }
}

/// Per-state projection class and distance to the ideal cache, plus the
/// target law on both bases. Grows with the state list.
struct Scorer<'a> {
    config: &'a PolicyConfig,
    weights: &'a RankWeights,
    target: PositionMap,
    n: usize,
    class_of: HashMap<Vec<ItemId>, u32>,
    class: Vec<u32>,
    distance: Vec<f64>,
    pi: Vec<f64>,
    pi_class: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(config: &'a PolicyConfig, dist: &PopularityDist, weights: &'a RankWeights) -> Result<Self> {
        let cstar = ideal_vector(dist, config.m())?;
        Ok(Self {
            config,
            weights,
            target: PositionMap::from_slots(dist.n(), &cstar.real_items().collect::<Vec<_>>()),
            n: dist.n(),
            class_of: HashMap::new(),
            class: Vec::new(),
            distance: Vec::new(),
            pi: Vec::new(),
            pi_class: Vec::new(),
        })
    }

    fn extend<'s>(&mut self, states: impl Iterator<Item = &'s CacheState>) {
        for s in states.skip(self.class.len()) {
            let proj = self.config.project(s);
            let next = self.class_of.len() as u32;
            let c = *self.class_of.entry(proj.clone()).or_insert(next);
            self.class.push(c);
            self.distance
                .push(crate::rankmetrics::kendall_generalized(&PositionMap::from_slots(self.n, &proj), &self.target, self.weights));
        }
    }

    fn set_target(&mut self, pi: Vec<f64>) {
        self.pi_class = vec![0.0; self.class_of.len()];
        for (i, &w) in pi.iter().enumerate() {
            self.pi_class[self.class[i] as usize] += w;
        }
        self.pi = pi;
    }

    fn tau(&self) -> f64 {
        self.pi.iter().zip(&self.distance).map(|(w, d)| w * d).sum()
    }

    /// `(full TV, projected TV, expected distance)` of the law `x`.
    fn score(&self, x: &[f64]) -> (f64, f64, f64) {
        let mut by_class = vec![0.0; self.class_of.len()];
        let (mut full, mut expected) = (0.0, 0.0);
        for i in 0..x.len().max(self.pi.len()) {
            let xi = x.get(i).copied().unwrap_or(0.0);
            full += (xi - self.pi.get(i).copied().unwrap_or(0.0)).abs();
            if xi != 0.0 {
                by_class[self.class[i] as usize] += xi;
                expected += xi * self.distance[i];
            }
        }
        let proj: f64 = by_class
            .iter()
            .enumerate()
            .map(|(c, &v)| (v - self.pi_class.get(c).copied().unwrap_or(0.0)).abs())
            .sum();
        (0.5 * full, 0.5 * proj, expected)
    }
}

/// Worst-start `(tv, expected distance)` per step from per-start score rows.
fn sup_rows(per_start: Vec<Vec<(f64, f64, f64)>>, basis: TvBasis, t_max: usize) -> Vec<(f64, f64)> {
    (0..=t_max)
        .map(|t| {
            per_start.iter().fold((0.0, 0.0), |(tv, ed), row| {
                let (full, proj, exp) = row[t.min(row.len() - 1)];
                let v = if basis == TvBasis::Full { full } else { proj };
                (f64::max(tv, v), f64::max(ed, exp))
            })
        })
        .collect()
}

fn curve_points(grid: &[usize], sup: &[(f64, f64)], tau: f64, kappa: f64) -> Result<Vec<CurvePoint>> {
    grid.iter()
        .map(|&t| {
            let (tv, expected_distance) = sup[t];
            Ok(CurvePoint {
                t,
                tv,
                error: learning_error(tau, kappa, tv)?,
                expected_distance,
            })
        })
        .collect()
}

/// `e(t) = tau(pi) + kappa * sup_s TV(delta_s P^t, pi)` on the grid.
pub fn learning_error_curve(config: &PolicyConfig, dist: &PopularityDist, weights: &RankWeights, opts: &CurveOptions) -> Result<LearningCurve> {
    if let Policy::Alru(AlruBeta::Dynamic { t0, c }) = config.policy() {
        return dynamic_alru_curve(config, dist, weights, opts, *t0, *c);
    }
    let t_max = *opts.t_grid.last().ok_or_else(|| invalid("empty time grid"))?;
    let basis = opts.tv_basis.unwrap_or(TvBasis::Full);
    let law = stationary_law(config, dist, true)?;
    let p = law.matrix.as_ref().expect("requested");
    let mut scorer = Scorer::new(config, dist, weights)?;
    scorer.extend((0..law.space.len()).map(|i| &law.space.state(i).cache));
    scorer.set_target(law.pi.clone());
    let tau = scorer.tau();
    let (kappa, kappa_exact) = match opts.kappa {
        Some(k) => (k, true),
        None => {
            let k = match kappa_diameter(&law.space, weights, KappaMode::Exact) {
                Err(Error::TooLarge { .. }) => kappa_diameter(
                    &law.space,
                    weights,
                    KappaMode::Heuristic {
                        random_pairs: 100_000,
                        seed: 0,
                    },
                )?,
                other => other?,
            };
            (k.value, k.exact)
        }
    };
    let starts = opts.starts.clone().unwrap_or_else(|| StartSet::default_for(law.space.len()));
    let ids = starts.resolve(&law.space);
    let per_start: Vec<Vec<(f64, f64, f64)>> = ids
        .par_iter()
        .map(|&s| {
            let mut x = vec![0.0; law.space.len()];
            x[s] = 1.0;
            let mut next = vec![0.0; x.len()];
            let mut row = Vec::new();
            for t in 0..=t_max {
                let sc = scorer.score(&x);
                row.push(sc);
                if sc.0 < TV_FLOOR || t == t_max {
                    break;
                }
                p.left_mul(&x, &mut next);
                std::mem::swap(&mut x, &mut next);
            }
            row
        })
        .collect();
    let sup = sup_rows(per_start, basis, t_max);
    Ok(LearningCurve {
        policy: config.label(),
        m: config.m(),
        tau,
        kappa,
        kappa_exact,
        start_set: starts.label().into(),
        tv_basis: basis,
        states: law.space.len(),
        points: curve_points(&opts.t_grid, &sup, tau, kappa)?,
    })
}

/// States reached by dynamic A-LRU, with kernels per layout built on demand.
struct UnionChain<'a> {
    dist: &'a PopularityDist,
    states: Vec<CacheState>,
    index: HashMap<CacheState, u32>,
    rows: HashMap<AlruLayout, Vec<Option<Vec<(u32, f64)>>>>,
}

impl<'a> UnionChain<'a> {
    fn new(dist: &'a PopularityDist) -> Self {
        Self {
            dist,
            states: Vec::new(),
            index: HashMap::new(),
            rows: HashMap::new(),
        }
    }

    fn intern(&mut self, s: CacheState) -> u32 {
        if let Some(&i) = self.index.get(&s) {
            return i;
        }
        let i = self.states.len() as u32;
        self.index.insert(s.clone(), i);
        self.states.push(s);
        i
    }

    fn ensure_row(&mut self, i: usize, layout: AlruLayout) {
        if self.rows.get(&layout).and_then(|r| r.get(i)).is_some_and(|r| r.is_some()) {
            return;
        }
        let base = self.states[i].clone();
        let mut row = Vec::with_capacity(self.dist.n());
        for item in 1..=self.dist.n() as ItemId {
            let mut s = base.clone();
            repartition_alru(&mut s, layout);
            step_alru(&mut s, layout, item);
            row.push((self.intern(s), self.dist.p(item)));
        }
        let rows = self.rows.entry(layout).or_default();
        if rows.len() <= i {
            rows.resize(i + 1, None);
        }
        rows[i] = Some(row);
    }

    /// `x P_layout`, growing the state set as needed.
    fn push(&mut self, x: &[f64], layout: AlruLayout) -> Vec<f64> {
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                self.ensure_row(i, layout);
            }
        }
        let mut out = vec![0.0; self.states.len()];
        let rows = &self.rows[&layout];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for &(j, p) in rows[i].as_ref().expect("ensured") {
                    out[j as usize] += xi * p;
                }
            }
        }
        out
    }
}

/// Layout used for request `t` (1-based) under the schedule.
pub fn dynamic_layout(t: u64, m: usize, t0: u64, c: f64) -> Result<AlruLayout> {
    Ok(AlruLayout::from_beta(alru_beta(t, m, t0, c)?, m))
}

/// Time-inhomogeneous evolution over the union of the states visited under
/// every layout. The target law is the stationary law of the layout active
/// at the last grid time; start states are the adversarial and ideal states
/// of the initial (LRU) layout.
fn dynamic_alru_curve(
    config: &PolicyConfig,
    dist: &PopularityDist,
    weights: &RankWeights,
    opts: &CurveOptions,
    t0: u64,
    c: f64,
) -> Result<LearningCurve> {
    let m = config.m();
    let n = dist.n();
    let t_max = *opts.t_grid.last().ok_or_else(|| invalid("empty time grid"))?;
    let basis = opts.tv_basis.unwrap_or(TvBasis::Projected);
    if matches!(opts.starts, Some(StartSet::All)) {
        return Err(invalid("dynamic A-LRU supports adversarial or custom start states only"));
    }
    let mut chain = UnionChain::new(dist);
    let initial = PolicyConfig::new(Policy::Alru(AlruBeta::Fixed(1.0)), m)?;
    let replay = |order: Vec<ItemId>| {
        let mut inst = PolicyInstance::new(initial.clone());
        for _ in 0..2 {
            inst.run(&order);
        }
        inst.state().clone()
    };
    let starts = vec![
        chain.intern(replay((1..=n as ItemId).collect())),
        chain.intern(replay((1..=n as ItemId).rev().collect())),
    ];
    let final_layout = dynamic_layout(t_max.max(1) as u64, m, t0, c)?;
    let mut pi = vec![0.0; chain.states.len()];
    pi[starts[0] as usize] = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..crate::chain::DEFAULT_MAX_ITER {
        let next = chain.push(&pi, final_layout);
        residual = (0..next.len()).map(|i| (next[i] - pi.get(i).copied().unwrap_or(0.0)).abs()).sum();
        pi = next;
        if residual < crate::chain::DEFAULT_TOL {
            break;
        }
    }
    if residual >= crate::chain::DEFAULT_TOL {
        return Err(Error::NoConvergence {
            iterations: crate::chain::DEFAULT_MAX_ITER,
            residual,
        });
    }
    let mut scorer = Scorer::new(config, dist, weights)?;
    scorer.extend(chain.states.iter());
    scorer.set_target(pi);
    let tau = scorer.tau();
    let mut dists: Vec<Vec<f64>> = starts
        .iter()
        .map(|&s| {
            let mut x = vec![0.0; chain.states.len()];
            x[s as usize] = 1.0;
            x
        })
        .collect();
    let mut per_start: Vec<Vec<(f64, f64, f64)>> = vec![Vec::with_capacity(t_max + 1); starts.len()];
    for t in 0..=t_max {
        scorer.extend(chain.states.iter());
        for (row, x) in per_start.iter_mut().zip(&dists) {
            row.push(scorer.score(x));
        }
        if t < t_max {
            let layout = dynamic_layout(t as u64 + 1, m, t0, c)?;
            for x in dists.iter_mut() {
                *x = chain.push(x, layout);
            }
        }
    }
    let sup = sup_rows(per_start, basis, t_max);
    let (kappa, kappa_exact) = match opts.kappa {
        Some(k) => (k, true),
        None => {
            let projections = chain.states.iter().map(|s| config.project(s)).collect();
            let k = own_kappa(projections, n, weights)?;
            (k.value, k.exact)
        }
    };
    Ok(LearningCurve {
        policy: config.label(),
        m,
        tau,
        kappa,
        kappa_exact,
        start_set: StartSet::Adversarial.label().into(),
        tv_basis: basis,
        states: chain.states.len(),
        points: curve_points(&opts.t_grid, &sup, tau, kappa)?,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("spearman needs two equal-length samples of size >= 2".into()));
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mean) * (b - mean)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mean).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - mean).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauHitRow {
    pub policy: String,
    pub m: usize,
    pub tau: f64,
    pub hit: f64,
    pub tau_method: Method,
    pub hit_method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauHitTable {
    pub rows: Vec<TauHitRow>,
    /// Spearman(tau, hit) across policies at each cache size with at least
    /// two policies.
    pub spearman_by_m: Vec<(usize, f64)>,
}

/// Monte Carlo settings for instances beyond the exact caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            burn_in: 1_000_000,
            samples: 10_000_000,
            seed: 0,
        }
    }
}

/// Stationary tau-distance and hit probability per (policy, m). Policies with
/// structural sizes (LRU(m) capacities) carry their own m; the rest are
/// instantiated at each size in `m_grid`.
pub fn tau_vs_hit_table(policies: &[Policy], dist: &PopularityDist, weights: &RankWeights, m_grid: &[usize], mc: McOptions) -> Result<TauHitTable> {
    let mut configs = Vec::new();
    for p in policies {
        match p {
            Policy::LruM { caps } => configs.push(PolicyConfig::lrum(caps.clone())?),
            _ => {
                for &m in m_grid {
                    configs.push(PolicyConfig::new(p.clone(), m)?);
                }
            }
        }
    }
    let rows: Vec<TauHitRow> = configs
        .par_iter()
        .map(|cfg| -> Result<TauHitRow> {
            let cstar = ideal_vector(dist, cfg.m())?;
            match stationary_law(cfg, dist, false) {
                Ok(law) => {
                    let hit = crate::chain::hit_probability(&law.space, &law.pi, dist);
                    let tau = tau_distance(&law.pi, &law.space, weights, &cstar);
                    Ok(TauHitRow {
                        policy: cfg.label(),
                        m: cfg.m(),
                        tau,
                        hit,
                        tau_method: law.method,
                        hit_method: law.method,
                    })
                }
                Err(Error::TooLarge { .. }) => {
                    log::info!("{} at m={}: beyond exact caps, using Monte Carlo", cfg.label(), cfg.m());
                    let seed = derive_seed(mc.seed, cfg.m() as u64);
                    let (tau, _) = monte_carlo_tau(cfg, dist, weights, mc.burn_in, mc.samples, seed)?;
                    let hit = monte_carlo_stationary(cfg, dist, mc.burn_in, mc.samples, seed)?.hit;
                    Ok(TauHitRow {
                        policy: cfg.label(),
                        m: cfg.m(),
                        tau,
                        hit,
                        tau_method: Method::MonteCarlo,
                        hit_method: Method::MonteCarlo,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut spearman_by_m = Vec::new();
    for m in ms {
        let (tau, hit): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.m == m).map(|r| (r.tau, r.hit)).unzip();
        if tau.len() >= 2 {
            spearman_by_m.push((m, spearman(&tau, &hit)?));
        }
    }
    Ok(TauHitTable { rows, spearman_by_m })
}

impl TauHitTable {
    pub fn records(&self, experiment: &str) -> Vec<Record> {
        self.rows
            .iter()
            .flat_map(|r| {
                [("tau_distance", r.tau), ("hit_probability", r.hit)].map(|(metric, value)| Record {
                    experiment: experiment.into(),
                    policy: r.policy.clone(),
                    m: r.m,
                    t: 0,
                    metric: metric.into(),
                    value,
                    stderr: 0.0,
                })
            })
            .collect()
    }
}
