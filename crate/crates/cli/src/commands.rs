use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cachelearn::chain::{hit_probability, is_reversible};
use cachelearn::experiments::{
    learning_error_curve, monte_carlo_stationary, parse_t_grid, run_simulation, stationary_law, write_records_csv,
    CurveOptions, TvBasis, ExperimentSpec, LearningCurve, Record, Source,
};
use cachelearn::mixing::{
    conductance_exact, congestion, empirical_mixing_time, mixing_bound, spectral_gap, analytic_inputs, zipf_bound_exponent, BoundInputs,
    StartSet,
};
use cachelearn::model::{ideal_vector, make_zipf, Policy, PolicyConfig, PopularityDist, RankWeights};
use cachelearn::rankmetrics::{kappa_diameter, tau_distance, KappaMode};
use cachelearn::workload::{fit_zipf, read_trace, sample_irm, sample_modulated, write_trace, ModulationMode, ModulationSpec, TraceFormat};
use clap::Parser;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::args::*;
use crate::manifest::Manifest;
use crate::{runconfig, CliError, CliResult};

pub fn dispatch(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A second call (replay inside one process) keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let name = match &cli.command {
        Command::Gen(_) => "gen",
        Command::Sim(_) => "sim",
        Command::Analyze(_) => "analyze",
        Command::Mix(_) => "mix",
        Command::LearnError(_) => "learn-error",
        Command::Fit(_) => "fit",
        Command::Run(_) => "run",
        Command::Replay(a) => {
            let m = Manifest::read(&a.path)?;
            let cli = Cli::try_parse_from(&m.argv).map_err(|e| CliError::Usage(e.to_string()))?;
            return dispatch(cli, m.argv);
        }
    };
    let mut manifest = Manifest::new(name, argv, cli.threads);
    match cli.command {
        Command::Gen(a) => gen(a, &mut manifest)?,
        Command::Sim(a) => sim(a, &mut manifest)?,
        Command::Analyze(a) => analyze(a, &mut manifest)?,
        Command::Mix(a) => mix(a, &mut manifest)?,
        Command::LearnError(a) => learn(a, &mut manifest)?,
        Command::Fit(a) => fit(a, &mut manifest)?,
        Command::Run(a) => runconfig::run(&a.config, &a.out, &mut manifest)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    let path = manifest.write(cli.manifest.as_deref())?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn trace_format(f: FormatArg) -> TraceFormat {
    match f {
        FormatArg::Lines => TraceFormat::Lines,
        FormatArg::Csv => TraceFormat::Csv,
    }
}

pub fn modulation_mode(m: ModeArg) -> ModulationMode {
    match m {
        ModeArg::FullShuffle => ModulationMode::FullShuffle,
        ModeArg::TopSwap => ModulationMode::TopSwap,
    }
}

/// Parses one policy spec and fixes its size; `lrum:` capacities imply `m`.
pub fn policy_config(spec: &str, m: Option<usize>) -> CliResult<PolicyConfig> {
    let policy: Policy = spec.parse().map_err(|e: cachelearn::Error| usage(e.to_string()))?;
    let config = match (&policy, m) {
        (Policy::LruM { caps }, m) => {
            let total: usize = caps.iter().sum();
            if m.is_some_and(|m| m != total) {
                return Err(usage(format!("--m {} disagrees with {spec} (total {total})", m.unwrap())));
            }
            PolicyConfig::lrum(caps.clone())
        }
        (_, Some(m)) => PolicyConfig::new(policy, m),
        (_, None) => return Err(usage(format!("--m is required for {spec}"))),
    };
    config.map_err(|e| usage(e.to_string()))
}

/// Splits a comma-separated policy list, re-attaching numeric fragments to
/// the spec they belong to (`lrum:1,3` and `alru:dyn:40,2`).
pub fn split_policies(list: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match out.last_mut() {
            Some(prev) if tok.parse::<f64>().is_ok() => {
                prev.push(',');
                prev.push_str(tok);
            }
            _ => out.push(tok.to_string()),
        }
    }
    out
}

pub fn popularity(d: &DistArgs) -> CliResult<PopularityDist> {
    let dist = match (&d.probs, d.alpha) {
        (Some(p), _) => {
            let probs = p
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| usage(format!("bad --probs {p:?}")))?;
            PopularityDist::new(probs).map_err(|e| usage(e.to_string()))?
        }
        (None, Some(alpha)) => {
            let n = d.n.ok_or_else(|| usage("--n is required with --alpha"))?;
            make_zipf(n, alpha).map_err(|e| usage(e.to_string()))?
        }
        (None, None) => return Err(usage("give --alpha (with --n) or --probs")),
    };
    if d.n.is_some_and(|n| n != dist.n()) {
        return Err(usage(format!("--n {} disagrees with {} probabilities", d.n.unwrap(), dist.n())));
    }
    Ok(dist)
}

pub fn rank_weights(w: WeightsArg, n: usize) -> RankWeights {
    match w {
        WeightsArg::Default => RankWeights::standard(n),
        WeightsArg::Unit => RankWeights::unit(n),
        WeightsArg::Presence => RankWeights::presence(n),
    }
}

fn dist_flags(d: &DistArgs) -> String {
    match (&d.probs, d.alpha) {
        (Some(p), _) => format!("--probs {p}"),
        (None, Some(a)) => format!("--n {} --alpha {a}", d.n.unwrap_or(0)),
        _ => String::new(),
    }
}

/// Converts a cap refusal into guidance toward the Monte Carlo estimator.
fn exact<T>(r: cachelearn::Result<T>, config: &PolicyConfig, d: &DistArgs) -> CliResult<T> {
    r.map_err(|e| match e {
        cachelearn::Error::TooLarge { .. } => CliError::TooLarge {
            source: e,
            suggestion: format!(
                "cachelearn sim --mc --policy {} --m {} {} --burnin 1000000 --count 10000000",
                config.policy(),
                config.m(),
                dist_flags(d)
            ),
        },
        other => other.into(),
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Records to `path`, or stdout.
fn emit_records(records: &[Record], path: Option<&Path>, manifest: &mut Manifest) -> CliResult<()> {
    match path {
        Some(p) => {
            write_records_csv(records, create(p)?)?;
            manifest.output(p);
        }
        None => write_records_csv(records, std::io::stdout().lock())?,
    }
    Ok(())
}

fn gen(a: GenArgs, manifest: &mut Manifest) -> CliResult<()> {
    let dist = make_zipf(a.n, a.alpha).map_err(|e| usage(e.to_string()))?;
    let stream = match a.modulate {
        Some(rate) => {
            let spec = ModulationSpec::new(rate, modulation_mode(a.mode)).map_err(|e| usage(e.to_string()))?;
            sample_modulated(&dist, spec, a.count, a.seed)?.stream
        }
        None => sample_irm(&dist, a.count, a.seed),
    };
    write_trace(&stream, &a.output, trace_format(a.format))?;
    manifest.seed("stream", a.seed);
    manifest.output(&a.output);
    Ok(())
}

fn sim(a: SimArgs, manifest: &mut Manifest) -> CliResult<()> {
    let configs = a.policies.iter().map(|p| policy_config(p, a.m)).collect::<CliResult<Vec<_>>>()?;
    manifest.seed("base", a.seed);
    let records = if a.mc {
        if a.trace.is_some() || a.modulate.is_some() {
            return Err(usage("--mc samples IRM requests; drop --trace and --modulate"));
        }
        let dist = popularity(&a.dist)?;
        let estimates = configs
            .par_iter()
            .map(|c| monte_carlo_stationary(c, &dist, a.burn_in, a.count, a.seed))
            .collect::<cachelearn::Result<Vec<_>>>()?;
        configs
            .iter()
            .zip(estimates)
            .map(|(c, e)| {
                eprintln!(
                    "{} m={}: hit {:.6} ± {:.6}{}",
                    c.label(),
                    c.m(),
                    e.hit,
                    e.stderr,
                    if e.stationary { "" } else { " (halves disagree; unconverged)" }
                );
                Record {
                    experiment: a.name.clone(),
                    policy: c.label(),
                    m: c.m(),
                    t: e.samples as u64,
                    metric: if e.stationary { "hit_probability_mc" } else { "hit_probability_mc_unconverged" }.into(),
                    value: e.hit,
                    stderr: e.stderr,
                }
            })
            .collect::<Vec<_>>()
    } else {
        let source = match (&a.trace, a.modulate) {
            (Some(path), _) => Source::Trace {
                path: path.clone(),
                format: trace_format(a.format),
            },
            (None, Some(rate)) => Source::Modulated {
                n: a.dist.n.ok_or_else(|| usage("--modulate needs --n and --alpha"))?,
                alpha: a.dist.alpha.ok_or_else(|| usage("--modulate needs --n and --alpha"))?,
                shuffle_rate: rate,
                mode: modulation_mode(a.mode),
            },
            (None, None) => match (&a.dist.probs, a.dist.alpha) {
                (Some(_), _) => Source::Probs {
                    probs: popularity(&a.dist)?.probs().to_vec(),
                },
                _ => {
                    popularity(&a.dist)?;
                    Source::Zipf {
                        n: a.dist.n.unwrap(),
                        alpha: a.dist.alpha.unwrap(),
                    }
                }
            },
        };
        let horizon = match &source {
            Source::Trace { path, format } => read_trace(path, *format)?.len(),
            _ => a.count,
        };
        let spec = ExperimentSpec {
            name: a.name.clone(),
            policies: configs,
            source,
            count: a.count,
            burn_in: a.burn_in,
            window: a.window.unwrap_or(horizon.saturating_sub(a.burn_in).max(1)),
            reps: a.reps,
            seed: a.seed,
        };
        let series = run_simulation(&spec)?;
        for r in &series.results {
            eprintln!("{} m={}: hit {:.6} ± {:.6}", r.policy, r.m, r.hit_mean, r.hit_stderr);
            for (i, rep) in r.reps.iter().enumerate() {
                manifest.seed(&format!("rep{i}.stream"), rep.stream_seed);
                manifest.seed(&format!("rep{i}.{}", r.policy), rep.policy_seed);
            }
        }
        if let Some(p) = &a.json {
            write_json(p, &series)?;
        }
        series.records()
    };
    emit_records(&records, a.output.as_deref(), manifest)?;
    if let Some(p) = &a.json {
        manifest.output(p);
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, manifest: &mut Manifest) -> CliResult<()> {
    let config = policy_config(&a.policy, a.m)?;
    let dist = popularity(&a.dist)?;
    let need_matrix = a.edges.is_some() || a.what.contains(&WhatArg::Reversible);
    let law = exact(stationary_law(&config, &dist, need_matrix), &config, &a.dist)?;
    let mut report = Map::new();
    report.insert("policy".into(), json!(config.label()));
    report.insert("m".into(), json!(config.m()));
    report.insert("n".into(), json!(dist.n()));
    report.insert("states".into(), json!(law.space.len()));
    report.insert("method".into(), json!(law.method));
    println!("policy = {}\nstates = {}", config.label(), law.space.len());
    let weights = rank_weights(a.weights, dist.n());
    for what in &a.what {
        match what {
            WhatArg::Hit => {
                let h = hit_probability(&law.space, &law.pi, &dist);
                println!("hit_probability = {h:.6}");
                report.insert("hit_probability".into(), json!(h));
            }
            WhatArg::Tau => {
                let cstar = ideal_vector(&dist, config.m())?;
                let tau = tau_distance(&law.pi, &law.space, &weights, &cstar);
                println!("tau_distance = {tau:.6}");
                report.insert("tau_distance".into(), json!(tau));
            }
            WhatArg::Stationary => {
                println!("state,probability");
                let mut rows = Vec::new();
                for (i, p) in law.pi.iter().enumerate() {
                    let s = law.space.state(i).cache.to_string();
                    println!("{s},{p:.10e}");
                    rows.push(json!({"state": s, "probability": p}));
                }
                report.insert("stationary".into(), Value::Array(rows));
            }
            WhatArg::Reversible => {
                let p = law.matrix.as_ref().expect("requested");
                let r = is_reversible(p, &law.pi, 1e-10);
                println!("reversible = {}", r.reversible);
                if let Some(w) = &r.witness {
                    println!(
                        "witness = {} -> {} (pi P forward {:.6e}, backward {:.6e})",
                        law.space.state(w.from).cache,
                        law.space.state(w.to).cache,
                        w.forward,
                        w.backward
                    );
                }
                report.insert("reversibility".into(), json!(r));
            }
            WhatArg::Kappa => {
                let k = match kappa_diameter(&law.space, &weights, KappaMode::Exact) {
                    Err(cachelearn::Error::TooLarge { .. }) => kappa_diameter(
                        &law.space,
                        &weights,
                        KappaMode::Heuristic {
                            random_pairs: 100_000,
                            seed: 0,
                        },
                    )?,
                    other => other?,
                };
                println!("kappa = {:.6}{}", k.value, if k.exact { "" } else { " (lower bound)" });
                report.insert("kappa".into(), json!(k));
            }
        }
    }
    if let Some(path) = &a.edges {
        law.matrix.as_ref().expect("requested").write_edges_csv(create(path)?)?;
        manifest.output(path);
    }
    if let Some(path) = &a.output {
        write_json(path, &Value::Object(report))?;
        manifest.output(path);
    }
    Ok(())
}

fn mix(a: MixArgs, manifest: &mut Manifest) -> CliResult<()> {
    let config = policy_config(&a.policy, a.m)?;
    let mut report = Map::new();
    if a.bounds == Some(BoundsArg::ZipfExponent) {
        let alpha = a.dist.alpha.ok_or_else(|| usage("--bounds zipf-exponent needs --alpha"))?;
        let e = zipf_bound_exponent(&config, alpha)?;
        println!("zipf_exponent = {}", fmt_short(e));
        report.insert("zipf_exponent".into(), json!(e));
        if a.dist.n.is_none() && a.dist.probs.is_none() {
            if let Some(path) = &a.json {
                write_json(path, &Value::Object(report))?;
                manifest.output(path);
            }
            return Ok(());
        }
    }
    let dist = popularity(&a.dist)?;
    let law = exact(stationary_law(&config, &dist, true), &config, &a.dist)?;
    let p = law.matrix.as_ref().expect("requested");
    let starts = match a.starts {
        Some(StartsArg::All) => StartSet::All,
        Some(StartsArg::Adversarial) => StartSet::Adversarial,
        None => StartSet::default_for(law.space.len()),
    };
    let rep = empirical_mixing_time(p, &law.pi, a.eps, &law.space, &starts)?;
    println!("states = {}\nt_mix = {}\nexact_sup = {}", law.space.len(), rep.t_mix, rep.exact_sup);
    report.insert("states".into(), json!(law.space.len()));
    report.insert("t_mix".into(), json!(rep.t_mix));
    report.insert("exact_sup".into(), json!(rep.exact_sup));
    report.insert("start_set".into(), json!(rep.start_set));
    if a.bounds == Some(BoundsArg::Congestion) {
        let pi_max = law.pi.iter().copied().fold(0.0, f64::max);
        let pi_min = law.pi.iter().copied().fold(f64::INFINITY, f64::min);
        let measured = BoundInputs {
            pi_max,
            pi_min,
            p_min: p.p_min(),
            gamma: law.pi.len() as f64,
            epsilon: a.eps,
            reversible: is_reversible(p, &law.pi, 1e-10).reversible,
        };
        let b = mixing_bound(&measured)?;
        println!("bound_measured = {b:.6e}");
        report.insert("bound_measured".into(), json!({"inputs": measured, "bound": b}));
        match analytic_inputs(&config, &dist, a.eps).and_then(|t| Ok((t, mixing_bound(&t)?))) {
            Ok((t, b)) => {
                println!("bound_analytic = {b:.6e}");
                report.insert("bound_analytic".into(), json!({"inputs": t, "bound": b}));
            }
            Err(e) => println!("bound_analytic = n/a ({e})"),
        }
    }
    if a.spectral {
        let gap = spectral_gap(p, &law.pi)?;
        println!("spectral_gap = {gap:.6e}");
        report.insert("spectral_gap".into(), json!(gap));
        match conductance_exact(p, &law.pi) {
            Ok(phi) => {
                println!("conductance = {phi:.6e}");
                report.insert("conductance".into(), json!(phi));
            }
            Err(e @ cachelearn::Error::TooLarge { .. }) => println!("conductance = n/a ({e})"),
            Err(e) => return Err(e.into()),
        }
        let rho = congestion(p, &law.pi)?;
        println!("congestion = {rho:.6e}");
        report.insert("congestion".into(), json!(rho));
    }
    if let Some(path) = &a.output {
        rep.write_csv(create(path)?)?;
        manifest.output(path);
    }
    if let Some(path) = &a.json {
        write_json(path, &Value::Object(report))?;
        manifest.output(path);
    }
    Ok(())
}

/// Integers print without a fraction, other values with four decimals.
fn fmt_short(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round())
    } else {
        format!("{x:.4}")
    }
}

/// Replaces each curve's diameter by the largest one.
pub fn share_kappa(curves: &mut [LearningCurve]) {
    let k = curves.iter().map(|c| c.kappa).fold(0.0, f64::max);
    let exact = curves.iter().all(|c| c.kappa_exact);
    for c in curves {
        c.kappa = k;
        c.kappa_exact = exact;
        for p in &mut c.points {
            p.error = c.tau + k * p.tv;
        }
    }
}

pub fn curves_for(
    policies: &[String],
    m: usize,
    dist: &PopularityDist,
    weights: &RankWeights,
    t_grid: Vec<usize>,
    starts: Option<StartsArg>,
    kappa: KappaArg,
    tv_basis: Option<TvBasisArg>,
    d: &DistArgs,
) -> CliResult<Vec<LearningCurve>> {
    let opts = CurveOptions {
        t_grid,
        starts: starts.map(|s| match s {
            StartsArg::All => StartSet::All,
            StartsArg::Adversarial => StartSet::Adversarial,
        }),
        kappa: None,
        tv_basis: tv_basis.map(|b| match b {
            TvBasisArg::Full => TvBasis::Full,
            TvBasisArg::Projected => TvBasis::Projected,
        }),
    };
    let mut curves = Vec::new();
    for spec in policies {
        let config = policy_config(spec, Some(m))?;
        curves.push(exact(learning_error_curve(&config, dist, weights, &opts), &config, d)?);
    }
    if kappa == KappaArg::Shared {
        share_kappa(&mut curves);
    }
    Ok(curves)
}

pub fn write_dat(curves: &[LearningCurve], path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    for c in curves {
        writeln!(w, "# {} tau={} kappa={}", c.policy, c.tau, c.kappa)?;
        writeln!(w, "t sup_tv learning_error expected_distance")?;
        for p in &c.points {
            writeln!(w, "{} {:e} {:e} {:e}", p.t, p.tv, p.error, p.expected_distance)?;
        }
        writeln!(w, "\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gnuplot(curves: &[LearningCurve], dat: &Path, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "set logscale x\nset xlabel 'requests'\nset ylabel 'learning error'\nset key top right")?;
    let plots: Vec<String> = curves
        .iter()
        .enumerate()
        .map(|(i, c)| format!("'{}' index {i} using ($1+1):3 skip 1 with lines title '{}'", dat.display(), c.policy))
        .collect();
    writeln!(w, "plot {}", plots.join(", \\\n     "))?;
    w.flush()?;
    Ok(())
}

fn learn(a: LearnArgs, manifest: &mut Manifest) -> CliResult<()> {
    let dist = popularity(&a.dist)?;
    let weights = rank_weights(a.weights, dist.n());
    let grid = parse_t_grid(&a.tgrid).map_err(|e| usage(e.to_string()))?;
    let policies = split_policies(&a.policies);
    if policies.is_empty() {
        return Err(usage("--policies is empty"));
    }
    let curves = curves_for(&policies, a.m, &dist, &weights, grid, a.starts, a.kappa, a.tv_basis, &a.dist)?;
    for c in &curves {
        let tail = c.points.last().map_or(f64::NAN, |p| p.error);
        eprintln!("{}: tau {:.6}, kappa {:.6}, e(t_max) {:.6}, states {}", c.policy, c.tau, c.kappa, tail, c.states);
    }
    let records: Vec<Record> = curves.iter().flat_map(|c| c.records(&a.name)).collect();
    emit_records(&records, a.output.as_deref(), manifest)?;
    if let Some(dat) = &a.dat {
        write_dat(&curves, dat)?;
        manifest.output(dat);
        if let Some(gp) = &a.gnuplot {
            write_gnuplot(&curves, dat, gp)?;
            manifest.output(gp);
        }
    }
    Ok(())
}

fn fit(a: FitArgs, _manifest: &mut Manifest) -> CliResult<()> {
    let stream = read_trace(&a.trace, trace_format(a.format))?;
    let alpha = fit_zipf(&stream)?;
    println!("alpha_hat = {alpha:.4}");
    let n = stream.max_item() as usize;
    let mut counts = vec![0u64; n + 1];
    for &x in &stream.items {
        counts[x as usize] += 1;
    }
    let mut ranked: Vec<(usize, u64)> = counts.iter().copied().enumerate().skip(1).filter(|&(_, c)| c > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("rank,key,count,frequency");
    for (r, (id, c)) in ranked.iter().take(a.top).enumerate() {
        let key = stream.keys.as_ref().map_or_else(|| id.to_string(), |k| k[id - 1].clone());
        println!("{},{key},{c},{:.6}", r + 1, *c as f64 / stream.len() as f64);
    }
    Ok(())
}
