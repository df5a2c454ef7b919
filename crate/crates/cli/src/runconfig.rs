//! TOML experiment files for `cachelearn run`.
//!
//! Every file has a `kind` and a `name`; outputs go to `<out>/<name>.csv`
//! (long format) and `<out>/<name>.json`.
//!
//! ```toml
//! kind = "learning-error"
//! name = "curves-7-3"
//! policies = ["lru", "fifo", "random", "climb"]
//! m = 3
//! n = 7
//! alpha = 0.8
//! tgrid = "log:1..10000"
//! ```

use std::path::Path;

use cachelearn::experiments::{monte_carlo_stationary, parse_t_grid, run_simulation, tau_vs_hit_table, ExperimentSpec, McOptions, Record};
use cachelearn::model::{make_zipf, Policy, PolicyConfig, PopularityDist};
use rayon::prelude::*;
use serde::Deserialize;

use crate::args::{DistArgs, KappaArg, StartsArg, TvBasisArg, WeightsArg};
use crate::commands::{curves_for, policy_config, rank_weights, write_dat, write_gnuplot};
use crate::manifest::Manifest;
use crate::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunConfig {
    /// Trace replay or synthetic stream through several policies.
    Simulation(ExperimentSpec),
    /// Stationary hit probabilities estimated under IRM requests.
    MonteCarlo(MonteCarloConfig),
    LearningError(LearningConfig),
    TauHit(TauHitConfig),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub name: String,
    pub policies: Vec<PolicyConfig>,
    pub n: usize,
    pub alpha: f64,
    pub burn_in: usize,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    pub name: String,
    pub policies: Vec<String>,
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub tgrid: String,
    #[serde(default)]
    pub starts: Option<StartsArg>,
    #[serde(default = "default_weights")]
    pub weights: WeightsArg,
    #[serde(default = "own")]
    pub kappa: KappaArg,
    #[serde(default)]
    pub tv_basis: Option<TvBasisArg>,
    /// Also write `<name>.dat` and `<name>.gp` for gnuplot.
    #[serde(default)]
    pub gnuplot: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauHitConfig {
    pub name: String,
    pub policies: Vec<String>,
    pub n: usize,
    pub alpha: f64,
    pub m_grid: Vec<usize>,
    #[serde(default = "default_weights")]
    pub weights: WeightsArg,
    #[serde(default)]
    pub mc: Option<McOptions>,
}

fn default_weights() -> WeightsArg {
    WeightsArg::Default
}

fn own() -> KappaArg {
    KappaArg::Own
}

fn zipf(n: usize, alpha: f64) -> CliResult<PopularityDist> {
    make_zipf(n, alpha).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run(config: &Path, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    let text = std::fs::read_to_string(config)?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
    manifest.config = Some(text);
    std::fs::create_dir_all(out)?;
    let (name, records, json) = match cfg {
        RunConfig::Simulation(spec) => {
            manifest.seed("base", spec.seed);
            let series = run_simulation(&spec)?;
            for r in &series.results {
                eprintln!("{} m={}: hit {:.6} ± {:.6}", r.policy, r.m, r.hit_mean, r.hit_stderr);
            }
            (spec.name, series.records(), serde_json::to_value(&series))
        }
        RunConfig::MonteCarlo(c) => {
            manifest.seed("base", c.seed);
            let dist = zipf(c.n, c.alpha)?;
            let est = c
                .policies
                .par_iter()
                .map(|p| monte_carlo_stationary(p, &dist, c.burn_in, c.samples, c.seed))
                .collect::<cachelearn::Result<Vec<_>>>()?;
            let records = c
                .policies
                .iter()
                .zip(&est)
                .map(|(p, e)| {
                    eprintln!("{} m={}: hit {:.6} ± {:.6}", p.label(), p.m(), e.hit, e.stderr);
                    Record {
                        experiment: c.name.clone(),
                        policy: p.label(),
                        m: p.m(),
                        t: e.samples as u64,
                        metric: if e.stationary { "hit_probability_mc" } else { "hit_probability_mc_unconverged" }.into(),
                        value: e.hit,
                        stderr: e.stderr,
                    }
                })
                .collect();
            (c.name, records, serde_json::to_value(&est))
        }
        RunConfig::LearningError(c) => {
            let dist = zipf(c.n, c.alpha)?;
            let weights = rank_weights(c.weights, c.n);
            let grid = parse_t_grid(&c.tgrid).map_err(|e| CliError::Usage(e.to_string()))?;
            let d = DistArgs {
                n: Some(c.n),
                alpha: Some(c.alpha),
                probs: None,
            };
            let curves = curves_for(&c.policies, c.m, &dist, &weights, grid, c.starts, c.kappa, c.tv_basis, &d)?;
            if c.gnuplot {
                let dat = out.join(format!("{}.dat", c.name));
                let gp = out.join(format!("{}.gp", c.name));
                write_dat(&curves, &dat)?;
                write_gnuplot(&curves, &dat, &gp)?;
                manifest.output(&dat);
                manifest.output(&gp);
            }
            let records = curves.iter().flat_map(|x| x.records(&c.name)).collect();
            (c.name, records, serde_json::to_value(&curves))
        }
        RunConfig::TauHit(c) => {
            if c.m_grid.is_empty() {
                return Err(CliError::Usage("m_grid is empty".into()));
            }
            let dist = zipf(c.n, c.alpha)?;
            let weights = rank_weights(c.weights, c.n);
            let policies = c
                .policies
                .iter()
                .map(|p| {
                    // Validate eagerly so a typo fails before any heavy work.
                    let policy: Policy = p.parse().map_err(|e: cachelearn::Error| CliError::Usage(e.to_string()))?;
                    policy_config(p, Some(c.m_grid[0]).filter(|_| !matches!(policy, Policy::LruM { .. })))?;
                    Ok(policy)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let table = tau_vs_hit_table(&policies, &dist, &weights, &c.m_grid, c.mc.unwrap_or_default())?;
            for (m, rho) in &table.spearman_by_m {
                eprintln!("m={m}: spearman(tau, hit) = {rho:.4}");
            }
            (c.name.clone(), table.records(&c.name), serde_json::to_value(&table))
        }
    };
    let csv_path = out.join(format!("{name}.csv"));
    let json_path = out.join(format!("{name}.json"));
    cachelearn::experiments::write_records_csv(&records, std::fs::File::create(&csv_path)?)?;
    let json = json.map_err(std::io::Error::other)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&json).map_err(std::io::Error::other)? + "\n")?;
    manifest.output(&csv_path);
    manifest.output(&json_path);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let text = std::fs::read_to_string(&path).unwrap();
                toml::from_str::<RunConfig>(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                seen += 1;
            }
        }
        assert!(seen >= 5);
    }
}
