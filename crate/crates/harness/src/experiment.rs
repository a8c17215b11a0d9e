//! Experiment designs: mechanism comparison over a population grid, random
//! participant counts, block-size caps and the unbounded-PoA witnesses.
//!
//! Every replication derives its own seeds from the run seed, so results do
//! not depend on the thread count. Mechanisms evaluated on the same grid
//! point share populations and engine seeds (paired comparison).

use bbob_core::equilibrium::compute_a_th;
use bbob_core::market::miner_set;
use bbob_core::mechanism::{optimal_block_size_capped, optimal_block_size_distributional, MechanismConfig};
use bbob_core::random::{derive_seed, rng_from};
use bbob_core::welfare::{equilibrium_welfare, performance_ratio, social_optimum, unbounded_poa_witness};
use bbob_core::{MarketInstance, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{scaled, Setting};
use crate::report::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Crossing threshold of the realized population.
    AbsComplete,
    /// Block size from the value distributions only.
    AbsDistributional,
    /// Every matchable pair fits in one block.
    BenchmarkMaxBlock,
}

impl Mechanism {
    pub fn label(self) -> &'static str {
        match self {
            Mechanism::AbsComplete => "abs_complete",
            Mechanism::AbsDistributional => "abs_distributional",
            Mechanism::BenchmarkMaxBlock => "benchmark_max_block",
        }
    }

    /// Block size this mechanism picks for `instance`, under the config's
    /// cap if one is set.
    pub fn block_size(self, instance: &MarketInstance, config: &MechanismConfig) -> Result<usize> {
        let a = match self {
            Mechanism::AbsComplete => compute_a_th(instance),
            Mechanism::AbsDistributional => return capped_distributional(config),
            Mechanism::BenchmarkMaxBlock => instance.min_side(),
        };
        Ok(config.block_cap.map_or(a, |cap| a.min(cap)).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    MechanismComparison,
    RandomCounts,
    BlockSizeLimit,
    PoaWitness,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::MechanismComparison => "mechanism_comparison",
            Scenario::RandomCounts => "random_counts",
            Scenario::BlockSizeLimit => "block_size_limit",
            Scenario::PoaWitness => "poa_witness",
        }
    }
}

/// Mean equilibrium welfare of one population, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub block_size: usize,
    pub sw_mean: f64,
    pub sw_stderr: f64,
    pub sw_opt: f64,
}

/// Equilibrium welfare of `instance` under `mechanism` with a
/// `non_selfish_fraction` share of protocol-following mining power. The
/// replication seeds depend only on `seed`, so calls that differ only in
/// mechanism or fraction are paired.
pub fn paired_welfare(
    instance: &MarketInstance,
    config: &MechanismConfig,
    mechanism: Mechanism,
    non_selfish_fraction: f64,
    replications: usize,
    seed: u64,
) -> Result<Estimate> {
    let a = mechanism.block_size(instance, config)?;
    let inst = instance
        .with_block_size(a)
        .with_miners(miner_set(config.miners, non_selfish_fraction));
    let sw: Vec<f64> = (0..replications.max(1) as u64)
        .into_par_iter()
        .map(|r| equilibrium_welfare(&inst, derive_seed(seed, &[r])).sw)
        .collect();
    let (sw_mean, sw_stderr) = mean_stderr(&sw);
    Ok(Estimate {
        block_size: a,
        sw_mean,
        sw_stderr,
        sw_opt: social_optimum(&inst),
    })
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn performance(sw: f64, sw_opt: f64) -> f64 {
    if sw_opt > 0.0 {
        sw / sw_opt
    } else {
        1.0
    }
}

fn row(scenario: String, inst_counts: (usize, usize), a: usize, sw: &[f64], sw_opt: f64) -> ResultRow {
    let (sw_mean, sw_stderr) = mean_stderr(sw);
    ResultRow {
        scenario,
        n: inst_counts.1,
        k: inst_counts.0,
        a,
        sw_mean,
        sw_stderr,
        sw_opt,
        ratio: performance(sw_mean, sw_opt),
    }
}

#[derive(Clone, Copy)]
struct Variant {
    label: &'static str,
    mechanism: Mechanism,
    non_selfish_fraction: f64,
}

/// Welfare of each mechanism on `replications` populations per grid point,
/// next to the social optimum.
pub fn run_mechanism_comparison(setting: &Setting, seed: u64) -> Result<Vec<ResultRow>> {
    let mut variants = vec![
        Variant { label: "abs_distributional", mechanism: Mechanism::AbsDistributional, non_selfish_fraction: 0.0 },
        Variant { label: "abs_complete", mechanism: Mechanism::AbsComplete, non_selfish_fraction: 0.0 },
        Variant { label: "abs_non_selfish", mechanism: Mechanism::AbsDistributional, non_selfish_fraction: setting.base.non_selfish_fraction },
        Variant { label: "benchmark_max_block", mechanism: Mechanism::BenchmarkMaxBlock, non_selfish_fraction: 0.0 },
    ];
    if setting.base.non_selfish_fraction == 0.0 {
        variants.remove(2);
    }
    let mut rows = Vec::new();
    for &n in &setting.grid {
        let cfg = setting.at(n);
        let reps = setting.replications;
        let pops: Vec<MarketInstance> = (0..reps as u64)
            .map(|r| cfg.draw_instance(1, &mut rng_from(derive_seed(seed, &[n as u64, r, 0]))))
            .collect::<Result<_>>()?;
        let opt: Vec<f64> = pops.par_iter().map(social_optimum).collect();
        let sw_opt = opt.iter().sum::<f64>() / reps as f64;
        let jobs: Vec<(usize, usize)> = (0..variants.len()).flat_map(|v| (0..reps).map(move |r| (v, r))).collect();
        let runs: Vec<(usize, f64)> = jobs
            .par_iter()
            .map(|&(v, r)| {
                let var = variants[v];
                let a = var.mechanism.block_size(&pops[r], &cfg)?;
                let inst = pops[r]
                    .with_block_size(a)
                    .with_miners(miner_set(cfg.miners, var.non_selfish_fraction));
                Ok((a, equilibrium_welfare(&inst, derive_seed(seed, &[n as u64, r as u64, 1])).sw))
            })
            .collect::<Result<_>>()?;
        for (v, chunk) in runs.chunks(reps).enumerate() {
            let sw: Vec<f64> = chunk.iter().map(|x| x.1).collect();
            let a = (chunk.iter().map(|x| x.0 as f64).sum::<f64>() / reps as f64).round() as usize;
            rows.push(row(
                format!("{}:{}", Scenario::MechanismComparison.label(), variants[v].label),
                (cfg.buyers, n),
                a,
                &sw,
                sw_opt,
            ));
        }
        let mut optimum = row(
            format!("{}:social_optimum", Scenario::MechanismComparison.label()),
            (cfg.buyers, n),
            0,
            &opt,
            sw_opt,
        );
        optimum.ratio = 1.0;
        rows.push(optimum);
    }
    Ok(rows)
}

/// Seller counts for `periods` periods drawn uniformly from
/// `[N/2, 3N/2]` around the configured `N`.
pub fn random_count_sequence(sellers: usize, periods: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(derive_seed(seed, &[u64::MAX]));
    let (lo, hi) = ((sellers / 2).max(1), sellers + sellers / 2);
    (0..periods).map(|_| rng.random_range(lo..=hi.max(lo))).collect()
}

/// Fixes the block size from the mean seller count, then simulates each
/// period with freshly drawn participants. The last row summarizes the
/// series: mean sw with its standard error across periods and the mean
/// per-period ratio.
pub fn run_random_counts(setting: &Setting, counts: &[usize], seed: u64) -> Result<Vec<ResultRow>> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(bbob_core::Error::InvalidConfig("count sequence must be nonempty and positive".into()));
    }
    let mean_n = (counts.iter().sum::<usize>() as f64 / counts.len() as f64).round() as usize;
    let a = capped_distributional(&setting.at(mean_n.max(1)))?;
    let reps = setting.replications;
    let label = Scenario::RandomCounts.label();
    let mut rows = Vec::with_capacity(counts.len() + 1);
    for (t, &n) in counts.iter().enumerate() {
        let cfg = setting.at(n);
        let results: Vec<(f64, f64)> = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let s = derive_seed(seed, &[t as u64, r]);
                let inst = cfg.draw_instance(a, &mut rng_from(derive_seed(s, &[0])))?;
                Ok((equilibrium_welfare(&inst, derive_seed(s, &[1])).sw, social_optimum(&inst)))
            })
            .collect::<Result<_>>()?;
        let sw: Vec<f64> = results.iter().map(|x| x.0).collect();
        let sw_opt = results.iter().map(|x| x.1).sum::<f64>() / reps as f64;
        rows.push(row(format!("{label}:period_{t}"), (cfg.buyers, n), a, &sw, sw_opt));
    }
    let sw: Vec<f64> = rows.iter().map(|r| r.sw_mean).collect();
    let sw_opt = rows.iter().map(|r| r.sw_opt).sum::<f64>() / rows.len() as f64;
    let mut summary = row(format!("{label}:mean"), (scaled(setting.rho, mean_n), mean_n), a, &sw, sw_opt);
    summary.ratio = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64;
    rows.push(summary);
    Ok(rows)
}

/// Distributional block size under the config's cap.
fn capped_distributional(config: &MechanismConfig) -> Result<usize> {
    let a = optimal_block_size_distributional(config)?;
    Ok(config.block_cap.map_or(a, |cap| a.min(cap)).max(1))
}

/// Per grid point: the welfare-maximizing block size under the cap, the
/// distributional block size clipped to the cap, and the benchmark under the
/// same cap, all on shared populations.
pub fn run_blocksize_limit(setting: &Setting, a_max: usize, seed: u64) -> Result<Vec<ResultRow>> {
    if a_max == 0 {
        return Err(bbob_core::Error::InvalidConfig("block cap must be at least 1".into()));
    }
    let label = Scenario::BlockSizeLimit.label();
    let mut rows = Vec::new();
    for &n in &setting.grid {
        let cfg = MechanismConfig { block_cap: None, ..setting.at(n) };
        let s = derive_seed(seed, &[n as u64]);
        let reps = setting.replications;
        let search = optimal_block_size_capped(&cfg, a_max, reps, s)?;
        // same population seeds as the search
        let sw_opt = (0..reps as u64)
            .into_par_iter()
            .map(|r| cfg.draw_instance(1, &mut rng_from(derive_seed(s, &[r, 0]))).map(|i| social_optimum(&i)))
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum::<f64>()
            / reps as f64;
        let at = |variant: &str, a: usize| {
            let e = &search.estimates[a - 1];
            ResultRow {
                scenario: format!("{label}:{variant}"),
                n,
                k: cfg.buyers,
                a,
                sw_mean: e.sw_mean,
                sw_stderr: e.sw_stderr,
                sw_opt,
                ratio: performance(e.sw_mean, sw_opt),
            }
        };
        rows.push(at("capped_search", search.chosen));
        rows.push(at("abs_distributional", optimal_block_size_distributional(&cfg)?.min(a_max)));
        rows.push(at("benchmark_max_block", cfg.buyers.min(n).min(a_max)));
    }
    Ok(rows)
}

/// Simulated welfare of the two witness instances for `target`.
pub fn run_poa_witness(target: f64, replications: usize, seed: u64) -> Vec<ResultRow> {
    let w = unbounded_poa_witness(target);
    [("high_a", &w.high_a), ("low_a", &w.low_a)]
        .into_iter()
        .enumerate()
        .map(|(i, (name, inst))| {
            let rep = performance_ratio(inst, inst.block_size, replications, derive_seed(seed, &[i as u64]));
            ResultRow {
                scenario: format!("{}:{name}", Scenario::PoaWitness.label()),
                n: inst.num_sellers(),
                k: inst.num_buyers(),
                a: inst.block_size,
                sw_mean: rep.sw,
                sw_stderr: rep.sw_stderr,
                sw_opt: rep.sw_opt,
                ratio: rep.performance,
            }
        })
        .collect()
}

/// Runs one scenario with the setting's defaults for the scenario-specific
/// inputs.
pub fn run_scenario(setting: &Setting, scenario: Scenario, seed: u64, poa_target: f64) -> Result<Vec<ResultRow>> {
    match scenario {
        Scenario::MechanismComparison => run_mechanism_comparison(setting, seed),
        Scenario::RandomCounts => {
            let counts = setting
                .counts
                .clone()
                .unwrap_or_else(|| random_count_sequence(setting.base.sellers, 24, seed));
            run_random_counts(setting, &counts, seed)
        }
        Scenario::BlockSizeLimit => {
            let a_max = setting.a_max.unwrap_or(optimal_block_size_distributional(&setting.base)?);
            run_blocksize_limit(setting, a_max, seed)
        }
        Scenario::PoaWitness => Ok(run_poa_witness(poa_target, setting.replications, seed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mechanism_block_sizes() {
        let cfg = MechanismConfig::uniform(100, 100, 0.85, 0.0);
        let inst = cfg.draw_instance(1, &mut rng_from(1)).unwrap();
        assert_eq!(Mechanism::AbsDistributional.block_size(&inst, &cfg).unwrap(), 51);
        assert_eq!(Mechanism::BenchmarkMaxBlock.block_size(&inst, &cfg).unwrap(), 100);
        assert_eq!(Mechanism::AbsComplete.block_size(&inst, &cfg).unwrap(), compute_a_th(&inst));
        let capped = MechanismConfig { block_cap: Some(7), ..cfg };
        assert_eq!(Mechanism::BenchmarkMaxBlock.block_size(&inst, &capped).unwrap(), 7);
    }

    #[test]
    fn count_sequence_stays_in_range() {
        let xs = random_count_sequence(100, 50, 3);
        assert!(xs.iter().all(|&n| (50..=150).contains(&n)));
        assert_eq!(xs, random_count_sequence(100, 50, 3));
    }
}
