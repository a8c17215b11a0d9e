//! Social welfare of simulated traces, the exact social optimum, and
//! performance and price-of-anarchy ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{rank, solve, Equilibrium};
use crate::market::{buyer_payoff, pair_gain, seller_payoff, FeeProfile, MarketInstance, MatchTrace};
use crate::matching::{matching_weight, max_weight_matching};
use crate::miner::run_horizon;
use crate::random::{derive_seed, rng_from, SeededChooser};

/// Welfare accounting of a single trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Welfare {
    /// Participants' payoffs plus all collected fees.
    pub sw: f64,
    pub matched_surplus: f64,
    /// Delay borne by both sides of every matched pair.
    pub delay: f64,
    pub fees: f64,
}

/// Total welfare of a trace: buyers' and sellers' realized payoffs plus the
/// fees collected by miners. Fees are transfers, so this equals matched
/// surplus minus delay up to rounding.
pub fn social_welfare(instance: &MarketInstance, trace: &MatchTrace, profile: &FeeProfile) -> Welfare {
    let d = instance.delay_cost;
    let mut w = Welfare {
        sw: 0.0,
        matched_surplus: 0.0,
        delay: 0.0,
        fees: 0.0,
    };
    let mut payoffs = 0.0;
    for p in trace.matched_pairs() {
        let (b, s) = (&instance.buyers[p.buyer], &instance.sellers[p.seller]);
        let (fb, fs) = (profile.buy[p.buyer], profile.sell[p.seller]);
        payoffs += buyer_payoff(b, fb, Some((p.block, s)), d) + seller_payoff(s, fs, Some((p.block, b)), d);
        w.fees += fb + fs;
        w.matched_surplus += pair_gain(b, s);
        w.delay += 2.0 * (p.block as f64 - 1.0) * d;
    }
    w.sw = payoffs + w.fees;
    w
}

/// Maximum total gain from trade over one-to-one matchings of compatible
/// pairs; delay vanishes when the block is unconstrained and fees cancel.
pub fn social_optimum(instance: &MarketInstance) -> f64 {
    if instance.is_homogeneous() {
        // Rank-ordered pairs have decreasing gains, and no matching beats
        // pairing the i highest utilities with the i lowest costs.
        let r = rank(instance);
        let q = instance.buyers[0].quantity;
        return r
            .buyers
            .iter()
            .zip(&r.sellers)
            .map(|(&k, &n)| instance.buyers[k].utility - instance.sellers[n].cost)
            .take_while(|g| *g >= 0.0)
            .map(|g| g * q)
            .sum();
    }
    let w = gain_matrix(instance);
    matching_weight(&w, &max_weight_matching(&w))
}

pub(crate) fn gain_matrix(instance: &MarketInstance) -> Vec<Vec<f64>> {
    instance
        .buyers
        .iter()
        .map(|b| {
            instance
                .sellers
                .iter()
                .map(|s| if b.utility >= s.cost { pair_gain(b, s) } else { 0.0 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub block_size: usize,
    pub pure: bool,
    pub replications: usize,
    /// Mean welfare over replications.
    pub sw: f64,
    pub sw_stderr: f64,
    pub sw_opt: f64,
    /// `sw_opt / sw`; infinite when `sw <= 0` and the optimum is positive.
    pub ratio: f64,
    /// `sw / sw_opt`, 1 when both vanish.
    pub performance: f64,
    pub matched_surplus: f64,
    pub delay: f64,
    pub fees: f64,
    /// Per-replication welfare, in replication order.
    pub samples: Vec<f64>,
}

/// Welfare of one equilibrium play: a fee draw followed by the horizon.
pub fn equilibrium_welfare(instance: &MarketInstance, seed: u64) -> Welfare {
    welfare_under(instance, &solve(instance), seed)
}

fn welfare_under(instance: &MarketInstance, eq: &Equilibrium, seed: u64) -> Welfare {
    let mut rng = rng_from(derive_seed(seed, &[0]));
    let profile = eq.draw_profile(instance, &mut rng);
    let mut chooser = SeededChooser::new(derive_seed(seed, &[1]));
    social_welfare(instance, &run_horizon(instance, &profile, &mut chooser), &profile)
}

pub(crate) fn ratios(sw: f64, sw_opt: f64) -> (f64, f64) {
    let ratio = if sw > 0.0 {
        sw_opt / sw
    } else if sw_opt > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let performance = if sw_opt > 0.0 { sw / sw_opt } else { 1.0 };
    (ratio, performance)
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Equilibrium welfare at block size `block_size` against the optimum.
///
/// Each replication draws a fee profile (the pure one, or a sample of the
/// mixed strategies) and simulates the horizon; the report carries the mean
/// and its standard error.
pub fn performance_ratio(instance: &MarketInstance, block_size: usize, replications: usize, seed: u64) -> WelfareReport {
    let inst = instance.with_block_size(block_size);
    let eq = solve(&inst);
    let reps = replications.max(1);
    let runs: Vec<Welfare> = (0..reps)
        .into_par_iter()
        .map(|r| welfare_under(&inst, &eq, derive_seed(seed, &[r as u64])))
        .collect();
    let samples: Vec<f64> = runs.iter().map(|w| w.sw).collect();
    let (sw, sw_stderr) = mean_stderr(&samples);
    let sw_opt = social_optimum(&inst);
    let (ratio, performance) = ratios(sw, sw_opt);
    let avg = |f: fn(&Welfare) -> f64| runs.iter().map(f).sum::<f64>() / reps as f64;
    WelfareReport {
        block_size: inst.block_size,
        pure: eq.is_pure(),
        replications: reps,
        sw,
        sw_stderr,
        sw_opt,
        ratio,
        performance,
        matched_surplus: avg(|w| w.matched_surplus),
        delay: avg(|w| w.delay),
        fees: avg(|w| w.fees),
        samples,
    }
}

/// Two-pair instances whose equilibrium welfare is an arbitrarily small
/// share of the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoaWitness {
    /// `C1 < R2 < C2 < R1` with a two-pair block: the miner takes both
    /// thin pairs instead of the single wide one.
    pub high_a: MarketInstance,
    /// `(R1 - C1) / (R1 + R2 - C1 - C2)`.
    pub high_a_ratio: f64,
    /// `C1 < C2 < R2 < R1` with a one-pair block and a delay close to half
    /// the total gain: the second pair's wait eats the surplus.
    pub low_a: MarketInstance,
    /// `(R1 + R2 - C1 - C2) / (R1 + R2 - C1 - C2 - 2d)`.
    pub low_a_ratio: f64,
}

/// Builds both witnesses with closed-form ratio at least `target_ratio`
/// (a margin of 10% over the target keeps them strictly above it).
pub fn unbounded_poa_witness(target_ratio: f64) -> PoaWitness {
    let t = target_ratio.max(1.0) * 1.1;

    let delta = 0.5 / t;
    let (r1, r2, c1, c2) = (1.0, delta, 0.0, 1.0 - delta);
    let high_a = MarketInstance::unit(&[r1, r2], &[c1, c2], 2, 0.0).expect("valid witness");
    let high_a_ratio = (r1 - c1) / (r1 + r2 - c1 - c2);

    let (r1, r2, c1, c2) = (0.9, 0.8, 0.1, 0.2);
    let total = r1 + r2 - c1 - c2;
    let d = total * (1.0 - 1.0 / t) / 2.0;
    let low_a = MarketInstance::unit(&[r1, r2], &[c1, c2], 1, d).expect("valid witness");
    let low_a_ratio = total / (total - 2.0 * d);

    PoaWitness {
        high_a,
        high_a_ratio,
        low_a,
        low_a_ratio,
    }
}
