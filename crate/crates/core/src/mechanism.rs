//! Block-size mechanisms for the system designer: complete information
//! (the crossing threshold), distributional information (the η fixed point
//! plus a redundancy margin), and a Monte Carlo search under a hard cap.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, LogNormal};

use crate::equilibrium::compute_a_th;
use crate::error::{Error, Result};
use crate::market::{default_horizon, miner_set, Buyer, MarketInstance, Seller, DEFAULT_FEE_UNIT};
use crate::random::{derive_seed, rng_from};
use crate::welfare::{equilibrium_welfare, mean_stderr};

/// A one-dimensional value distribution with an invertible CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueDistribution {
    /// Uniform on `[lo, hi]`; a point mass when `lo == hi`.
    Uniform { lo: f64, hi: f64 },
    /// Beta on `[0, 1]`.
    Beta { alpha: f64, beta: f64 },
    /// Log-normal conditioned on `[lo, hi]`.
    TruncatedLogNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
    /// Piecewise-linear empirical CDF through the midpoint plotting
    /// positions `(i - 0.5) / n` of the sorted samples.
    Empirical { sorted: Vec<f64>, lo: f64, hi: f64 },
}

impl ValueDistribution {
    pub fn constant(v: f64) -> Self {
        ValueDistribution::Uniform { lo: v, hi: v }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        match self {
            ValueDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return bad(format!("uniform bounds [{lo}, {hi}]"));
                }
            }
            ValueDistribution::Beta { alpha, beta } => {
                Beta::new(*alpha, *beta).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
            }
            ValueDistribution::TruncatedLogNormal { mu, sigma, lo, hi } => {
                LogNormal::new(*mu, *sigma).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
                if !(*lo >= 0.0 && lo < hi && hi.is_finite()) {
                    return bad(format!("truncation bounds [{lo}, {hi}]"));
                }
                let ln = LogNormal::new(*mu, *sigma).unwrap();
                if ln.cdf(*hi) - ln.cdf(*lo) <= 0.0 {
                    return bad("truncation interval has no mass".into());
                }
            }
            ValueDistribution::Empirical { sorted, lo, hi } => {
                if sorted.is_empty() {
                    return bad("empirical distribution needs samples".into());
                }
                if sorted.windows(2).any(|w| w[0] > w[1]) {
                    return bad("empirical samples must be sorted".into());
                }
                if !(sorted[0] >= *lo && sorted[sorted.len() - 1] <= *hi) {
                    return bad(format!("samples outside support [{lo}, {hi}]"));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            ValueDistribution::Uniform { lo, hi } => (*lo, *hi),
            ValueDistribution::Beta { .. } => (0.0, 1.0),
            ValueDistribution::TruncatedLogNormal { lo, hi, .. } => (*lo, *hi),
            ValueDistribution::Empirical { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ValueDistribution::Uniform { lo, hi } => {
                if x < *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            ValueDistribution::Beta { alpha, beta } => Beta::new(*alpha, *beta).unwrap().cdf(x.clamp(0.0, 1.0)),
            ValueDistribution::TruncatedLogNormal { mu, sigma, lo, hi } => {
                if x <= *lo {
                    return 0.0;
                }
                if x >= *hi {
                    return 1.0;
                }
                let ln = LogNormal::new(*mu, *sigma).unwrap();
                let (a, b) = (ln.cdf(*lo), ln.cdf(*hi));
                ((ln.cdf(x) - a) / (b - a)).clamp(0.0, 1.0)
            }
            ValueDistribution::Empirical { sorted, lo, hi } => empirical_cdf(sorted, *lo, *hi, x),
        }
    }

    /// Smallest `x` with `cdf(x) >= u`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            ValueDistribution::Uniform { lo, hi } => lo + u * (hi - lo),
            ValueDistribution::Beta { alpha, beta } => Beta::new(*alpha, *beta).unwrap().inverse_cdf(u),
            ValueDistribution::TruncatedLogNormal { mu, sigma, lo, hi } => {
                let ln = LogNormal::new(*mu, *sigma).unwrap();
                let (a, b) = (ln.cdf(*lo), ln.cdf(*hi));
                ln.inverse_cdf(a + u * (b - a)).clamp(*lo, *hi)
            }
            ValueDistribution::Empirical { sorted, lo, hi } => empirical_quantile(sorted, *lo, *hi, u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random())
    }
}

fn plotting_position(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

fn empirical_cdf(sorted: &[f64], lo: f64, hi: f64, x: f64) -> f64 {
    let n = sorted.len();
    let (first, last) = (sorted[0], sorted[n - 1]);
    if first == last {
        return if x < first { 0.0 } else { 1.0 };
    }
    if x < lo {
        return 0.0;
    }
    if x >= hi {
        return 1.0;
    }
    // number of samples <= x; the knot of a tied group sits at its last index
    let j = sorted.partition_point(|&s| s <= x);
    if j == 0 {
        let p1 = plotting_position(0, n);
        return if first > lo { p1 * (x - lo) / (first - lo) } else { 0.0 };
    }
    let (xl, pl) = (sorted[j - 1], plotting_position(j - 1, n));
    if j == n {
        return if hi > last { pl + (1.0 - pl) * (x - last) / (hi - last) } else { 1.0 };
    }
    let (xr, pr) = (sorted[j], plotting_position(j, n));
    pl + (pr - pl) * (x - xl) / (xr - xl)
}

fn empirical_quantile(sorted: &[f64], lo: f64, hi: f64, u: f64) -> f64 {
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return sorted[0];
    }
    // first knot index with position >= u
    let i = ((u * n as f64 - 0.5).ceil().max(0.0) as usize).min(n);
    let (xl, pl) = if i == 0 { (lo, 0.0) } else { (sorted[i - 1], plotting_position(i - 1, n)) };
    let (xr, pr) = if i == n { (hi, 1.0) } else { (sorted[i], plotting_position(i, n)) };
    if pr <= pl {
        return xr;
    }
    (xl + (u - pl) / (pr - pl) * (xr - xl)).clamp(lo, hi)
}

/// Empirical distribution of `samples` on `support`.
pub fn fit_empirical(samples: &[f64], support: (f64, f64)) -> Result<ValueDistribution> {
    if samples.is_empty() {
        return Err(Error::InvalidDistribution("no samples to fit".into()));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!("non-finite sample {x}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let dist = ValueDistribution::Empirical {
        sorted,
        lo: support.0,
        hi: support.1,
    };
    dist.validate()?;
    Ok(dist)
}

/// What the designer knows when choosing a block size without seeing the
/// realized participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Expected buyer count `K`.
    pub buyers: usize,
    /// Expected seller count `N`.
    pub sellers: usize,
    pub psi: f64,
    pub utility: ValueDistribution,
    pub cost: ValueDistribution,
    pub buy_quantity: ValueDistribution,
    pub sell_quantity: ValueDistribution,
    pub block_cap: Option<usize>,
    pub delay_cost: f64,
    pub fee_unit: f64,
    pub miners: usize,
    pub non_selfish_fraction: f64,
}

impl MechanismConfig {
    /// Uniform utilities and costs with unit quantities and selfish miners.
    pub fn uniform(buyers: usize, sellers: usize, psi: f64, delay_cost: f64) -> Self {
        Self {
            buyers,
            sellers,
            psi,
            utility: ValueDistribution::Uniform { lo: 0.0, hi: 1.0 },
            cost: ValueDistribution::Uniform { lo: 0.0, hi: 1.0 },
            buy_quantity: ValueDistribution::constant(1.0),
            sell_quantity: ValueDistribution::constant(1.0),
            block_cap: None,
            delay_cost,
            fee_unit: DEFAULT_FEE_UNIT,
            miners: 1,
            non_selfish_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.buyers == 0 || self.sellers == 0 {
            return bad("need at least one buyer and one seller".into());
        }
        if !(self.psi > 0.0 && self.psi < 1.0) {
            return bad(format!("psi {} must lie in (0, 1)", self.psi));
        }
        if !(0.0..=1.0).contains(&self.non_selfish_fraction) {
            return bad(format!("non-selfish fraction {} outside [0, 1]", self.non_selfish_fraction));
        }
        if self.block_cap == Some(0) {
            return bad("block cap must be at least 1".into());
        }
        for d in [&self.utility, &self.cost, &self.buy_quantity, &self.sell_quantity] {
            d.validate()?;
        }
        for (name, d) in [("utility", &self.utility), ("cost", &self.cost)] {
            let (lo, hi) = d.support();
            if lo < 0.0 || hi > 1.0 {
                return bad(format!("{name} support [{lo}, {hi}] must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Draws a population and wraps it in an instance with the configured
    /// miners and delay.
    pub fn draw_instance<R: Rng + ?Sized>(&self, block_size: usize, rng: &mut R) -> Result<MarketInstance> {
        self.draw_instance_sized(self.buyers, self.sellers, block_size, rng)
    }

    /// Like [`MechanismConfig::draw_instance`] with explicit participant
    /// counts.
    pub fn draw_instance_sized<R: Rng + ?Sized>(
        &self,
        buyers: usize,
        sellers: usize,
        block_size: usize,
        rng: &mut R,
    ) -> Result<MarketInstance> {
        let buyers: Vec<Buyer> = (0..buyers)
            .map(|id| Buyer {
                id,
                utility: self.utility.sample(rng).clamp(0.0, 1.0),
                quantity: self.buy_quantity.sample(rng),
            })
            .collect();
        let sellers: Vec<Seller> = (0..sellers)
            .map(|id| Seller {
                id,
                cost: self.cost.sample(rng).clamp(0.0, 1.0),
                quantity: self.sell_quantity.sample(rng),
            })
            .collect();
        let horizon = default_horizon(buyers.len(), sellers.len(), block_size);
        MarketInstance::new(
            buyers,
            sellers,
            miner_set(self.miners, self.non_selfish_fraction),
            block_size,
            self.delay_cost,
            self.fee_unit,
            horizon,
        )
    }
}

/// Complete-information block size: the number of profitable rank-ordered
/// pairs.
pub fn optimal_block_size_complete(instance: &MarketInstance) -> usize {
    compute_a_th(instance)
}

/// Leftmost root of `h(η) = N C(η) - K (1 - R(η))` on `[0, 1]`, by
/// bisection on the sign of `h`.
pub fn solve_eta(config: &MechanismConfig) -> Result<f64> {
    let (k, n) = (config.buyers as f64, config.sellers as f64);
    let h = |eta: f64| n * config.cost.cdf(eta) - k * (1.0 - config.utility.cdf(eta));
    let (h0, h1) = (h(0.0), h(1.0));
    if h0 > 0.0 || h1 < 0.0 {
        return Err(Error::NoEtaRoot { h0, h1 });
    }
    if h0 == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if h(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Distributional block size `max(1, floor(N (C(η) + N^-ψ)))`.
pub fn optimal_block_size_distributional(config: &MechanismConfig) -> Result<usize> {
    config.validate()?;
    let eta = solve_eta(config)?;
    let n = config.sellers as f64;
    let a = (n * (config.cost.cdf(eta) + n.powf(-config.psi))).floor();
    Ok((a as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimate {
    pub block_size: usize,
    pub sw_mean: f64,
    pub sw_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CappedSearch {
    pub chosen: usize,
    pub estimates: Vec<BlockEstimate>,
}

impl CappedSearch {
    pub fn chosen_estimate(&self) -> &BlockEstimate {
        &self.estimates[self.chosen - 1]
    }
}

/// Brute-force block size under the cap `a_max`: expected equilibrium
/// welfare is estimated for every `A` in `1..=a_max` on the same
/// replication populations, and the best mean wins (ties to the smaller A).
pub fn optimal_block_size_capped(
    config: &MechanismConfig,
    a_max: usize,
    replications: usize,
    seed: u64,
) -> Result<CappedSearch> {
    config.validate()?;
    if a_max == 0 {
        return Err(Error::InvalidConfig("block cap must be at least 1".into()));
    }
    let reps = replications.max(1);
    let populations: Vec<MarketInstance> = (0..reps)
        .map(|r| config.draw_instance(1, &mut rng_from(derive_seed(seed, &[r as u64, 0]))))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (1..=a_max).flat_map(|a| (0..reps).map(move |r| (a, r))).collect();
    let sw: Vec<f64> = jobs
        .par_iter()
        .map(|&(a, r)| {
            let inst = populations[r].with_block_size(a);
            equilibrium_welfare(&inst, derive_seed(seed, &[r as u64, 1])).sw
        })
        .collect();
    let estimates: Vec<BlockEstimate> = sw
        .chunks(reps)
        .enumerate()
        .map(|(i, xs)| {
            let (sw_mean, sw_stderr) = mean_stderr(xs);
            BlockEstimate {
                block_size: i + 1,
                sw_mean,
                sw_stderr,
            }
        })
        .collect();
    let mut chosen = 1;
    for e in &estimates {
        if e.sw_mean > estimates[chosen - 1].sw_mean {
            chosen = e.block_size;
        }
    }
    Ok(CappedSearch { chosen, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_uniform() {
        let c = MechanismConfig::uniform(100, 100, 0.85, 0.0);
        assert!((solve_eta(&c).unwrap() - 0.5).abs() < 1e-12);
        let c = MechanismConfig::uniform(200, 100, 0.85, 0.0);
        assert!((solve_eta(&c).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn distributional_block_size_examples() {
        let c = MechanismConfig::uniform(100, 100, 0.85, 0.0);
        assert_eq!(optimal_block_size_distributional(&c).unwrap(), 51);
    }

    #[test]
    fn no_trade_mass_leaves_redundancy_only() {
        let mut c = MechanismConfig::uniform(1000, 1000, 0.5, 0.0);
        c.cost = ValueDistribution::Uniform { lo: 0.0, hi: 1.0 };
        c.utility = ValueDistribution::constant(0.0);
        // R(η) = 1 everywhere, so η = 0 and C(0) = 0
        assert_eq!(solve_eta(&c).unwrap(), 0.0);
        assert_eq!(optimal_block_size_distributional(&c).unwrap(), 31);
    }

    #[test]
    fn malformed_distributions_error() {
        let mut c = MechanismConfig::uniform(10, 10, 0.85, 0.0);
        c.cost = ValueDistribution::constant(0.0);
        c.utility = ValueDistribution::constant(0.0);
        // h(0) = N > 0
        assert!(matches!(solve_eta(&c), Err(Error::NoEtaRoot { .. })));
    }

    #[test]
    fn empirical_examples() {
        let d = fit_empirical(&[0.0, 1.0], (0.0, 1.0)).unwrap();
        assert!((d.cdf(0.5) - 0.5).abs() < 1e-12);
        let d = fit_empirical(&[0.3, 0.3, 0.3], (0.0, 1.0)).unwrap();
        assert_eq!(d.cdf(0.2999), 0.0);
        assert_eq!(d.cdf(0.3), 1.0);
        assert_eq!(d.inverse_cdf(0.7), 0.3);
        assert!(fit_empirical(&[], (0.0, 1.0)).is_err());
        assert!(fit_empirical(&[1.5], (0.0, 1.0)).is_err());
    }

    #[test]
    fn empirical_roundtrip() {
        let d = fit_empirical(&[0.1, 0.2, 0.2, 0.5, 0.9], (0.0, 1.0)).unwrap();
        for x in [0.05, 0.15, 0.3, 0.7, 0.95] {
            assert!((d.inverse_cdf(d.cdf(x)) - x).abs() < 1e-9, "{x}");
        }
        // tied samples produce a jump
        assert!(d.cdf(0.2) - d.cdf(0.2 - 1e-12) > 0.19);
    }

    #[test]
    fn truncated_lognormal_stays_in_support() {
        let d = ValueDistribution::TruncatedLogNormal {
            mu: -1.0,
            sigma: 0.5,
            lo: 0.1,
            hi: 0.9,
        };
        d.validate().unwrap();
        assert_eq!(d.cdf(0.1), 0.0);
        assert_eq!(d.cdf(0.9), 1.0);
        for u in [0.01, 0.5, 0.99] {
            let x = d.inverse_cdf(u);
            assert!((0.1..=0.9).contains(&x));
            assert!((d.cdf(x) - u).abs() < 1e-6);
        }
    }

    #[test]
    fn capped_with_unit_cap() {
        let c = MechanismConfig::uniform(6, 6, 0.85, 0.01);
        assert_eq!(optimal_block_size_capped(&c, 1, 5, 3).unwrap().chosen, 1);
    }
}
