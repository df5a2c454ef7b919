//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p cachelearn --test acceptance`.
//! `ACCEPTANCE_ONLY=2,12` restricts the run to the listed criteria.
//! Criteria recorded as unattainable print `FAIL (known)` and are asserted
//! to keep failing for the documented reason; every other FAIL fails the test.

use std::time::{Duration, Instant};

use cachelearn::chain::{
    additive_reversibilization, is_reversible, stationary_numeric, time_reversal, ClosedForm, ExactChain, DEFAULT_ARRANGEMENT_CAP,
    DEFAULT_MAX_ITER, DEFAULT_STATE_CAP,
};
use cachelearn::chain::enumerate_arrangements;
use cachelearn::experiments::{
    derive_seed, dynamic_layout, learning_error_curve, monte_carlo_stationary, run_simulation, stationary_law, tau_vs_hit_table, CurveOptions,
    ExperimentSpec, LearningCurve, McOptions, Source, TvBasis,
};
use cachelearn::mixing::{
    cheeger_check, congestion, empirical_mixing_time, mixing_bound, spectral_gap, analytic_inputs, zipf_bound_exponent, BoundInputs,
    StartSet,
};
use cachelearn::model::{ideal_vector, make_zipf, AlruBeta, CacheState, Level, Policy, PolicyConfig, PolicyKind, PopularityDist, RankWeights};
use cachelearn::policies::{Aux, PolicyInstance};
use cachelearn::rankmetrics::tau_distance;
use cachelearn::workload::{fit_zipf, sample_irm, ModulationMode};
use nalgebra::DMatrix;
use rayon::prelude::*;

type R<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

struct Outcome {
    pass: bool,
    detail: String,
    /// Expected to fail; the criterion cannot hold for a faithful implementation.
    known_red: bool,
}

fn outcome(pass: bool, detail: impl Into<String>) -> R<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
        known_red: false,
    })
}

fn cfg(p: Policy, m: usize) -> PolicyConfig {
    PolicyConfig::new(p, m).expect("valid config")
}

fn parse(spec: &str, m: usize) -> PolicyConfig {
    let p: Policy = spec.parse().expect("known policy");
    match p {
        Policy::LruM { caps } => PolicyConfig::lrum(caps).expect("valid caps"),
        p => cfg(p, m),
    }
}

const SINGLE: [Policy; 4] = [Policy::Lru, Policy::Fifo, Policy::Random, Policy::Climb];

fn c01() -> R<Outcome> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (n, m) in [(4, 2), (5, 2), (7, 3)] {
        for alpha in [0.4, 0.8] {
            let dist = make_zipf(n, alpha)?;
            for p in SINGLE {
                let c = cfg(p, m);
                let chain = ExactChain::build_with(&c, &dist, DEFAULT_STATE_CAP, 1e-14)?;
                let closed = ClosedForm::new(c.kind(), &dist, m)?.stationary(&chain.space);
                let d = closed.iter().zip(chain.pi()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(d);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-10 && secs < 5.0, format!("max |closed - numeric| = {worst:.2e}, {secs:.2}s"))
}

fn c02() -> R<Outcome> {
    let start = Instant::now();
    let dist = make_zipf(20, 0.8)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, want) in [(Policy::Lru, 0.325), (Policy::Fifo, 0.308), (Policy::Random, 0.308), (Policy::Climb, 0.414)] {
        let h = ClosedForm::new(p.kind(), &dist, 4)?.hit_probability();
        ok &= (h - want).abs() <= 0.002;
        parts.push(format!("{p}={h:.4}"));
    }
    let betas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut mc: Vec<(String, PolicyConfig)> = vec![
        ("2-LRU".into(), cfg(Policy::KLru { k: 2 }, 4)),
        ("LRU(1,3)".into(), PolicyConfig::lrum(vec![1, 3])?),
        ("ARC".into(), cfg(Policy::Arc, 4)),
    ];
    for b in betas {
        mc.push((format!("A-LRU({b})"), cfg(Policy::Alru(AlruBeta::Fixed(b)), 4)));
    }
    let est = mc
        .par_iter()
        .enumerate()
        .map(|(k, (_, c))| monte_carlo_stationary(c, &dist, 1_000_000, 10_000_000, derive_seed(2, k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    for ((label, _), (e, want)) in mc.iter().zip(est.iter().zip([0.408, 0.407, 0.352])) {
        ok &= (e.hit - want).abs() <= 0.01;
        parts.push(format!("{label}={:.4}", e.hit));
    }
    let (best_beta, best) = betas
        .iter()
        .zip(&est[3..])
        .max_by(|a, b| a.1.hit.total_cmp(&b.1.hit))
        .expect("non-empty grid");
    ok &= (best.hit - 0.408).abs() <= 0.01;
    parts.push(format!("A-LRU(best beta={best_beta})={:.4}", best.hit));
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 600.0;
    outcome(ok, format!("{}, {secs:.1}s", parts.join(" ")))
}

fn c03() -> R<Outcome> {
    let mut dists = vec![
        (make_zipf(20, 0.8)?, 4),
        (make_zipf(7, 0.4)?, 3),
        (PopularityDist::new(vec![0.5, 0.3, 0.2])?, 2),
    ];
    let mut rng_weights: Vec<f64> = (1..=9).map(|i| 1.0 / (i as f64 + 0.37 * (i % 3) as f64)).collect();
    rng_weights.sort_by(|a, b| b.total_cmp(a));
    dists.push((PopularityDist::from_weights(rng_weights)?, 4));
    let mut exact = true;
    for (d, m) in &dists {
        let f = ClosedForm::new(Policy::Fifo.kind(), d, *m)?.hit_probability();
        let r = ClosedForm::new(Policy::Random.kind(), d, *m)?.hit_probability();
        exact &= f == r;
    }
    let dist = make_zipf(20, 0.8)?;
    let f = monte_carlo_stationary(&cfg(Policy::Fifo, 4), &dist, 1_000_000, 10_000_000, 31)?;
    let r = monte_carlo_stationary(&cfg(Policy::Random, 4), &dist, 1_000_000, 10_000_000, 32)?;
    let z = (f.hit - r.hit).abs() / (f.stderr.powi(2) + r.stderr.powi(2)).sqrt();
    outcome(
        exact && z <= 3.0,
        format!("closed forms identical on {} laws: {exact}; MC FIFO {:.5} vs RANDOM {:.5}, |z| = {z:.2}", dists.len(), f.hit, r.hit),
    )
}

fn c04() -> R<Outcome> {
    let dist = make_zipf(4, 0.8)?;
    let verdict = |c: &PolicyConfig| -> R<(bool, String)> {
        let chain = ExactChain::build(c, &dist)?;
        let rev = is_reversible(&chain.matrix, chain.pi(), 1e-10);
        let w = rev
            .witness
            .map(|w| format!(" witness {} -> {}", compact(&chain.space.state(w.from).cache), compact(&chain.space.state(w.to).cache)))
            .unwrap_or_default();
        Ok((rev.reversible, w))
    };
    let mut detail = Vec::new();
    let mut rest_ok = true;
    let mut red = Vec::new();
    for (c, want, known) in [
        (cfg(Policy::Fifo, 2), true, Some(false)),
        (cfg(Policy::Random, 2), true, None),
        (cfg(Policy::Climb, 2), true, None),
        (cfg(Policy::Lru, 2), false, None),
        (cfg(Policy::KLru { k: 2 }, 2), false, None),
        (PolicyConfig::lrum(vec![1, 1])?, false, Some(true)),
    ] {
        let (rev, w) = verdict(&c)?;
        match known {
            Some(k) if rev == k => red.push(c.label()),
            _ => rest_ok &= rev == want,
        }
        detail.push(format!("{}: {}{}", c.label(), if rev { "reversible" } else { "non-reversible" }, w));
    }
    // FIFO never moves a cached item, so edges into a state have no reverse
    // and detailed balance cannot hold for m >= 2. LRU((1,1)) is CLIMB (see
    // the reductions), and CLIMB is reversible.
    Ok(Outcome {
        pass: rest_ok && red.is_empty(),
        detail: format!("{}; known-unattainable: {red:?}", detail.join("; ")),
        known_red: rest_ok && red.len() == 2,
    })
}

fn compact(s: &CacheState) -> String {
    let levels: Vec<String> = s.levels.iter().map(|l| format!("{:?}", l.slots)).collect();
    levels.join("/")
}

fn dense_gap(r: &cachelearn::chain::TransitionMatrix, pi: &[f64]) -> f64 {
    let n = pi.len();
    let s = DMatrix::from_fn(n, n, |i, j| pi[i].sqrt() * r.get(i, j) / pi[j].sqrt());
    let s = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    1.0 - ev[1]
}

fn c05() -> R<Outcome> {
    let dist = make_zipf(4, 0.8)?;
    let chain = ExactChain::build(&cfg(Policy::Lru, 2), &dist)?;
    let p = &chain.matrix;
    let pi = chain.pi();
    let ps = time_reversal(p, pi)?;
    let r = additive_reversibilization(p, &ps)?;
    let laws: Vec<Vec<f64>> = [p, &ps, &r]
        .iter()
        .map(|m| stationary_numeric(m, 1e-14, DEFAULT_MAX_ITER).map(|s| s.pi))
        .collect::<Result<_, _>>()?;
    let mut law_gap: f64 = 0.0;
    for a in &laws {
        for b in &laws {
            law_gap = law_gap.max(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    let gaps = [spectral_gap(p, pi)?, spectral_gap(&ps, pi)?, spectral_gap(&r, pi)?, dense_gap(&r, pi)];
    let spread = gaps.iter().copied().fold(f64::MIN, f64::max) - gaps.iter().copied().fold(f64::MAX, f64::min);
    outcome(
        law_gap <= 1e-10 && spread <= 1e-6,
        format!("stationary laws agree to {law_gap:.2e}; gaps {:.8} (spread {spread:.2e})", gaps[3]),
    )
}

/// Every exact chain with at most `cap` states over a small parameter matrix.
fn small_chains(cap: usize) -> R<Vec<ExactChain>> {
    let mut out = Vec::new();
    for (n, m) in [(3, 1), (3, 2), (4, 1), (4, 2), (5, 2)] {
        for alpha in [0.4, 0.8] {
            let dist = make_zipf(n, alpha)?;
            let mut configs: Vec<PolicyConfig> = SINGLE.iter().map(|p| cfg(p.clone(), m)).collect();
            configs.push(cfg(Policy::KLru { k: 2 }, m));
            configs.push(cfg(Policy::Arc, m));
            configs.push(cfg(Policy::Alru(AlruBeta::Fixed(0.5)), m));
            configs.push(PolicyConfig::lrum(vec![1; m])?);
            for c in configs {
                let Ok(chain) = ExactChain::build(&c, &dist) else { continue };
                // FIFO with n = m + 1 only rotates its content and splits
                // into closed cycles; path bounds need irreducibility.
                let irreducible = congestion(&chain.matrix, chain.pi()).is_ok();
                if chain.space.len() <= cap && chain.space.len() >= 2 && irreducible {
                    out.push(chain);
                }
            }
        }
    }
    Ok(out)
}

fn c06() -> R<Outcome> {
    let chains = small_chains(20)?;
    let mut bad = Vec::new();
    for ch in &chains {
        let pi = ch.pi();
        let c = cheeger_check(&ch.matrix, pi)?;
        let rho = congestion(&ch.matrix, pi)?;
        if !c.ok || c.phi < 1.0 / (2.0 * rho) - 1e-12 {
            bad.push(format!("{} n={}", ch.config.label(), ch.dist.n()));
        }
    }
    outcome(bad.is_empty(), format!("{} chains checked, violations: {bad:?}", chains.len()))
}

fn c07() -> R<Outcome> {
    let worked = mixing_bound(&BoundInputs {
        pi_max: 0.7,
        pi_min: 0.3,
        p_min: 0.3,
        gamma: 2.0,
        epsilon: 0.5,
        reversible: true,
    })?;
    let mut ok = (worked / 7198.0 - 1.0).abs() <= 0.01;
    let mut checked = 0;
    let mut bad = Vec::new();
    for (n, m) in [(4, 2), (5, 2)] {
        let dist = make_zipf(n, 0.8)?;
        let mut configs: Vec<PolicyConfig> = SINGLE.iter().map(|p| cfg(p.clone(), m)).collect();
        configs.push(cfg(Policy::KLru { k: 2 }, m));
        configs.push(PolicyConfig::lrum(vec![1, 1])?);
        for c in configs {
            let chain = ExactChain::build(&c, &dist)?;
            let t = empirical_mixing_time(&chain.matrix, chain.pi(), 0.5, &chain.space, &StartSet::All)?.t_mix as f64;
            let analytic = mixing_bound(&analytic_inputs(&c, &dist, 0.5)?)?;
            let measured = mixing_bound(&BoundInputs::from_chain(&chain, 0.5))?;
            checked += 1;
            if analytic < t || measured < t {
                bad.push(format!("{} n={n}: t_mix {t}, bounds {analytic:.3e}/{measured:.3e}", c.label()));
            }
        }
    }
    ok &= bad.is_empty();
    outcome(ok, format!("worked example {worked:.1}; bound >= t_mix(1/2) on {checked} chains, violations {bad:?}"))
}

fn c08() -> R<Outcome> {
    let start = Instant::now();
    let dist = make_zipf(7, 0.8)?;
    let t: Vec<usize> = SINGLE
        .par_iter()
        .map(|p| -> R<usize> {
            let chain = ExactChain::build(&cfg(p.clone(), 3), &dist)?;
            Ok(empirical_mixing_time(&chain.matrix, chain.pi(), 0.25, &chain.space, &StartSet::All)?.t_mix)
        })
        .collect::<R<_>>()?;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        t[0] <= t[1] && t[2] <= t[3] && secs < 120.0,
        format!("t_mix LRU {} FIFO {} RANDOM {} CLIMB {}, {secs:.1}s", t[0], t[1], t[2], t[3]),
    )
}

fn c09() -> R<Outcome> {
    let (a, m) = (0.8, 4.0);
    // Hand evaluation of each exponent formula.
    let hand = [
        (4.0 * a + 2.0) * m + 2.0,
        (6.0 * a + 2.0) * m + 2.0,
        (6.0 * a + 2.0) * m + 2.0,
        3.0 * a * m * (m + 1.0) + 2.0 * m + 2.0,
        3.0 * 2.0 * (2.0 * m - 1.0) * m + 4.0 * (2.0 * a - 1.0) * m + 6.0,
        (4.0 * m + 4.0 * a - 6.0) * (1.0 + 2.0 * 3.0) + 6.0,
    ];
    let want = [22.8, 29.2, 29.2, 58.0, 183.6, 98.4];
    let configs = [
        cfg(Policy::Lru, 4),
        cfg(Policy::Fifo, 4),
        cfg(Policy::Random, 4),
        cfg(Policy::Climb, 4),
        cfg(Policy::KLru { k: 2 }, 4),
        PolicyConfig::lrum(vec![1, 3])?,
    ];
    let got: Vec<f64> = configs.iter().map(|c| zipf_bound_exponent(c, a)).collect::<Result<_, _>>()?;
    let ok = (0..6).all(|i| (got[i] - want[i]).abs() < 1e-9 && (hand[i] - want[i]).abs() < 1e-9);
    outcome(ok, format!("exponents {got:?}"))
}

fn c10() -> R<Outcome> {
    let s = CacheState {
        levels: vec![Level::meta(vec![3, 4]), Level::real(vec![1, 2])],
    };
    let mut got: Vec<String> = enumerate_arrangements(&s, &cfg(Policy::KLru { k: 2 }, 2), DEFAULT_ARRANGEMENT_CAP)?
        .iter()
        .map(|a| a.iter().map(|x| x.to_string()).collect())
        .collect();
    got.sort();
    let mut want: Vec<String> = ["221143", "221413", "224113", "242113", "422113", "212143", "212413", "122143", "122413"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    want.sort();
    let mut singles = 0;
    for m in 1..=3 {
        let k1 = cfg(Policy::KLru { k: 1 }, m);
        let slots: Vec<u32> = (1..=m as u32).rev().collect();
        singles += enumerate_arrangements(&CacheState::single(slots), &k1, DEFAULT_ARRANGEMENT_CAP)?.len();
    }
    outcome(got == want && singles == 3, format!("{} arrangements for ((34),(12)); k=1 counts sum {singles} over 3 states", got.len()))
}

fn c11() -> R<Outcome> {
    let dist = make_zipf(20, 0.8)?;
    let requests = sample_irm(&dist, 100_000, 11).items;
    let pairs = |m: usize| -> R<Vec<(PolicyConfig, PolicyConfig)>> {
        Ok(vec![
            (cfg(Policy::KLru { k: 1 }, m), cfg(Policy::Lru, m)),
            (PolicyConfig::lrum(vec![1; m])?, cfg(Policy::Climb, m)),
            (cfg(Policy::Alru(AlruBeta::Fixed(1.0)), m), cfg(Policy::Lru, m)),
            (cfg(Policy::Alru(AlruBeta::Fixed(0.0)), m), cfg(Policy::KLru { k: 2 }, m)),
        ])
    };
    let mut bad = Vec::new();
    let mut checked = 0;
    for m in 2..=5 {
        for (a, b) in pairs(m)? {
            // LRU(m) fills upper levels only through hits, so unit-capacity
            // LRU(m) and CLIMB agree from a common full state, not from empty.
            let (mut x, mut y) = if b.kind() == PolicyKind::Climb {
                let levels = (1..=m as u32).rev().map(|i| Level::real(vec![i])).collect();
                (
                    PolicyInstance::with_state(a.clone(), CacheState { levels }, Aux::default()),
                    PolicyInstance::with_state(b.clone(), CacheState::single((1..=m as u32).collect()), Aux::default()),
                )
            } else {
                (PolicyInstance::new(a.clone()), PolicyInstance::new(b.clone()))
            };
            checked += 1;
            for (t, &r) in requests.iter().enumerate() {
                let (hx, hy) = (x.step(r), y.step(r));
                if hx != hy || a.project(x.state()) != b.project(y.state()) {
                    bad.push(format!("{} vs {} diverge at t={t}", a.label(), b.label()));
                    break;
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} pairs over {} requests, divergences {bad:?}", requests.len()))
}

const DYN_T0: u64 = 20;
const DYN_C: f64 = 10.0;
const CURVE_HORIZON: usize = 20_000;

fn c12() -> R<Outcome> {
    let dist = make_zipf(7, 0.8)?;
    let weights = RankWeights::standard(7);
    let every_step: Vec<usize> = (0..=CURVE_HORIZON).collect();

    // Single-level policies: every start, full states, shared diameter.
    let mut single: Vec<LearningCurve> = SINGLE
        .par_iter()
        .map(|p| {
            let opts = CurveOptions {
                starts: Some(StartSet::All),
                ..CurveOptions::new(every_step.clone())
            };
            learning_error_curve(&cfg(p.clone(), 3), &dist, &weights, &opts)
        })
        .collect::<Result<_, _>>()?;
    let kappa = single.iter().map(|c| c.kappa).fold(0.0, f64::max);
    for c in &mut single {
        c.kappa = kappa;
        for p in &mut c.points {
            p.error = c.tau + kappa * p.tv;
        }
    }
    let tau: Vec<f64> = single.iter().map(|c| c.tau).collect();
    let plateau_ok = tau[1] > tau[0] && tau[2] > tau[0];
    // Decay time: first t with e(t) within 1% of the plateau.
    let settle = |c: &LearningCurve| c.points.iter().find(|p| p.error <= 1.01 * c.tau).map_or(usize::MAX, |p| p.t);
    let settle_t: Vec<usize> = single.iter().map(settle).collect();
    let climb_slowest = settle_t[3] > settle_t[0] && settle_t[3] > settle_t[1] && settle_t[3] > settle_t[2];

    // Tails against an independent tau evaluation.
    let mut tail_gap: f64 = 0.0;
    for (p, c) in SINGLE.iter().zip(&single) {
        let config = cfg(p.clone(), 3);
        let law = stationary_law(&config, &dist, false)?;
        let direct = tau_distance(&law.pi, &law.space, &weights, &ideal_vector(&dist, 3)?);
        let last = c.points.last().expect("non-empty grid");
        tail_gap = tail_gap
            .max((last.error - direct).abs())
            .max((last.expected_distance - direct).abs())
            .max((c.tau - direct).abs());
    }
    let tails_ok = tail_gap <= 1e-9;

    // Dynamic A-LRU against the LRU and 2-LRU envelope on real content.
    let horizon = 2_000;
    let grid: Vec<usize> = (0..=horizon).collect();
    let multi_specs = ["lru".to_string(), "klru:2".to_string(), format!("alru:dyn:{DYN_T0},{DYN_C}")];
    let mut multi: Vec<LearningCurve> = multi_specs
        .par_iter()
        .map(|s| {
            let opts = CurveOptions {
                starts: Some(StartSet::Adversarial),
                tv_basis: Some(TvBasis::Projected),
                ..CurveOptions::new(grid.clone())
            };
            learning_error_curve(&parse(s, 3), &dist, &weights, &opts)
        })
        .collect::<Result<_, _>>()?;
    let kappa_m = multi.iter().map(|c| c.kappa).fold(0.0, f64::max);
    for c in &mut multi {
        c.kappa = kappa_m;
        for p in &mut c.points {
            p.error = c.tau + kappa_m * p.tv;
        }
    }
    let final_layout = dynamic_layout(horizon as u64, 3, DYN_T0, DYN_C)?;
    let settled = (1..=horizon as u64)
        .find(|&t| dynamic_layout(t, 3, DYN_T0, DYN_C).map(|l| l == final_layout).unwrap_or(false))
        .expect("schedule reaches its final layout") as usize;
    let from = 2 * settled;
    // The final floor layout is not exactly 2-LRU; its stationary gap is structural.
    let tol = (multi[2].tau - multi[1].tau).max(0.0) + 1e-3 * kappa_m;
    let mut worst_excess = f64::MIN;
    for t in from..=horizon {
        let env = multi[0].points[t].error.min(multi[1].points[t].error);
        worst_excess = worst_excess.max(multi[2].points[t].error - env);
    }
    let envelope_ok = worst_excess <= tol;
    // Before T the schedule is plain LRU, so the expected distance matches it.
    let early_gap = (0..DYN_T0 as usize)
        .map(|t| (multi[2].points[t].expected_distance - multi[0].points[t].expected_distance).abs())
        .fold(0.0, f64::max);
    let early_ok = early_gap <= 1e-9;

    let ok = plateau_ok && climb_slowest && tails_ok && envelope_ok && early_ok;
    outcome(
        ok,
        format!(
            "plateaus LRU {:.3} FIFO {:.3} RANDOM {:.3} CLIMB {:.3}; settle t {:?}; tail gap {tail_gap:.1e}; \
             A-LRU(d) T={DYN_T0},c={DYN_C} excess over envelope for t>={from}: {worst_excess:.3} <= tol {tol:.3}; \
             pre-T distance gap {early_gap:.1e}",
            tau[0], tau[1], tau[2], tau[3], settle_t
        ),
    )
}

fn c13() -> R<Outcome> {
    let dist = make_zipf(7, 0.8)?;
    let specs = ["lru", "fifo", "random", "climb", "klru:2", "lrum:1,2", "lrum:2,1", "arc", "alru:0.3", "alru:0.7"];
    let policies: Vec<Policy> = specs.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let table = tau_vs_hit_table(&policies, &dist, &RankWeights::standard(7), &[3], McOptions::default())?;
    let rho = table.spearman_by_m.iter().find(|(m, _)| *m == 3).map(|x| x.1).ok_or("no m=3 row")?;
    outcome(rho <= -0.9, format!("spearman(tau, hit) = {rho:.4} over {} policies", table.rows.len()))
}

fn c14() -> R<Outcome> {
    let policies = vec![cfg(Policy::Lru, 10), cfg(Policy::KLru { k: 2 }, 10)];
    let spec = |source: Source, count: usize, reps: usize, seed: u64| ExperimentSpec {
        name: "crossover".into(),
        policies: policies.clone(),
        source,
        count,
        burn_in: 0,
        window: count,
        reps,
        seed,
    };
    let z = |spec: &ExperimentSpec| -> R<(f64, f64, f64)> {
        let s = run_simulation(spec)?;
        let (a, b) = (&s.results[0], &s.results[1]);
        Ok((a.hit_mean, b.hit_mean, (a.hit_mean - b.hit_mean) / (a.hit_stderr.powi(2) + b.hit_stderr.powi(2)).sqrt()))
    };
    let modulated = |rate: f64| Source::Modulated {
        n: 100,
        alpha: 0.8,
        shuffle_rate: rate,
        mode: ModulationMode::FullShuffle,
    };
    let (ml, mk, mz) = z(&spec(modulated(1e-3), 1_000_000, 10, 14))?;
    let (il, ik, iz) = z(&spec(Source::Zipf { n: 100, alpha: 0.8 }, 10_000_000, 5, 15))?;
    // At rate 1e-3 an epoch lasts ~1000 requests while 2-LRU relearns the
    // top ranks within tens of requests, so its IRM advantage survives. The
    // crossover itself appears at faster re-ranking.
    let (fl, fk, fz) = z(&spec(modulated(0.1), 1_000_000, 10, 16))?;
    let detail = format!(
        "rate 1e-3: LRU {ml:.4} vs 2-LRU {mk:.4} (z {mz:.1}); IRM: LRU {il:.4} vs 2-LRU {ik:.4} (z {iz:.1}); \
         rate 0.1: LRU {fl:.4} vs 2-LRU {fk:.4} (z {fz:.1})"
    );
    let pass = mz >= 3.0 && iz <= -3.0;
    Ok(Outcome {
        pass,
        detail,
        known_red: !pass && mz <= -3.0 && iz <= -3.0 && fz >= 3.0,
    })
}

fn c15() -> R<Outcome> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, alpha) in [0.4, 0.8, 1.2].into_iter().enumerate() {
        let s = sample_irm(&make_zipf(1000, alpha)?, 1_000_000, 150 + k as u64);
        let hat = fit_zipf(&s)?;
        ok &= (hat - alpha).abs() <= 0.05;
        parts.push(format!("{alpha}->{hat:.4}"));
    }
    outcome(ok, parts.join(" "))
}

fn main() {
    let criteria: Vec<(usize, &str, fn() -> R<Outcome>)> = vec![
        (1, "closed form equals power iteration", c01),
        (2, "hit-probability table at (20,4)", c02),
        (3, "FIFO and RANDOM share hit probability", c03),
        (4, "reversibility verdicts at (4,2)", c04),
        (5, "reversal and reversibilization share law and gap", c05),
        (6, "Cheeger and congestion inequalities", c06),
        (7, "mixing bound evaluator", c07),
        (8, "mixing-time ordering at (7,3)", c08),
        (9, "Zipf bound exponents", c09),
        (10, "k-LRU arrangement enumeration", c10),
        (11, "policy reductions", c11),
        (12, "learning-error curves at (7,3)", c12),
        (13, "tau against hit probability", c13),
        (14, "adaptability crossover", c14),
        (15, "Zipf fitting", c15),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    let mut total = Duration::ZERO;
    for (id, title, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        total += start.elapsed();
        let (status, detail) = match result {
            Ok(o) if o.pass => ("PASS", o.detail),
            Ok(o) if o.known_red => ("FAIL (known)", o.detail),
            Ok(o) => {
                unexpected.push(id);
                ("FAIL", o.detail)
            }
            Err(e) => {
                unexpected.push(id);
                ("FAIL", format!("error: {e}"))
            }
        };
        println!("[{status}] #{id:02} {title}: {detail}");
    }
    println!("acceptance finished in {:.1}s", total.as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("criteria failed: {unexpected:?}");
        std::process::exit(1);
    }
}
