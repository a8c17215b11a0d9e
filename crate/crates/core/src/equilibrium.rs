//! Stage-I fee equilibria: the crossing threshold, threshold fees, the pure
//! profile for large blocks and the shared mixed strategy for small blocks,
//! plus numerical checks of both.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::market::{buyer_payoff, seller_payoff, FeeProfile, MarketInstance, MatchTrace};
use crate::miner::run_horizon;
use crate::random::{derive_seed, for_each_path, SeededChooser};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Buy,
    Sell,
}

/// Buyer ids by descending utility and seller ids by ascending cost, ties
/// broken by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub buyers: Vec<usize>,
    pub sellers: Vec<usize>,
}

pub fn rank(instance: &MarketInstance) -> Ranking {
    let mut buyers: Vec<usize> = (0..instance.num_buyers()).collect();
    buyers.sort_by(|&a, &b| {
        instance.buyers[b]
            .utility
            .total_cmp(&instance.buyers[a].utility)
            .then(a.cmp(&b))
    });
    let mut sellers: Vec<usize> = (0..instance.num_sellers()).collect();
    sellers.sort_by(|&a, &b| {
        instance.sellers[a]
            .cost
            .total_cmp(&instance.sellers[b].cost)
            .then(a.cmp(&b))
    });
    Ranking { buyers, sellers }
}

/// Number of profitable rank-ordered pairs: the first `i` with
/// `R_i >= C_i` and `R_{i+1} < C_{i+1}`, or `min(K, N)` if there is none.
pub fn compute_a_th(instance: &MarketInstance) -> usize {
    a_th_from_ranking(instance, &rank(instance))
}

fn a_th_from_ranking(instance: &MarketInstance, ranking: &Ranking) -> usize {
    let m = instance.min_side();
    let r = |i: usize| instance.buyers[ranking.buyers[i]].utility;
    let c = |i: usize| instance.sellers[ranking.sellers[i]].cost;
    (0..m.saturating_sub(1))
        .find(|&i| r(i) >= c(i) && r(i + 1) < c(i + 1))
        .map_or(m, |i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFees {
    pub sigma_buy: f64,
    pub sigma_sell: f64,
    /// `min(ceil(A_th / A) A, N)`.
    pub j_buy: usize,
    /// `min(ceil(A_th / A) A, K)`.
    pub j_sell: usize,
}

/// Threshold fees: the marginal excluded participant's average half-surplus
/// against the included opposite side, less the delay it would bear, floored
/// at zero.
pub fn threshold_fees(instance: &MarketInstance, a_th: usize, block_size: usize) -> ThresholdFees {
    thresholds_from_ranking(instance, &rank(instance), a_th, block_size)
}

fn thresholds_from_ranking(instance: &MarketInstance, ranking: &Ranking, a_th: usize, a: usize) -> ThresholdFees {
    let k = instance.num_buyers();
    let n = instance.num_sellers();
    let d = instance.delay_cost;
    let reach = a_th.div_ceil(a) * a;
    let j_buy = reach.min(n);
    let j_sell = reach.min(k);
    let delay = |j: usize| ((j + 1).div_ceil(a) * a - 1) as f64 * d;
    let buyer = |i: usize| &instance.buyers[ranking.buyers[i]];
    let seller = |i: usize| &instance.sellers[ranking.sellers[i]];

    let mut sigma_buy = 0.0;
    if j_buy < k && buyer(j_buy).utility >= seller(0).cost {
        let m = buyer(j_buy);
        let (mut sum, mut count) = (0.0, 0usize);
        for s in (0..j_buy).map(seller).filter(|s| m.utility >= s.cost) {
            sum += m.quantity.min(s.quantity) * (m.utility - s.cost);
            count += 1;
        }
        sigma_buy = (sum / (2.0 * count as f64) - delay(j_buy)).max(0.0);
    }
    let mut sigma_sell = 0.0;
    if j_sell < n && seller(j_sell).cost <= buyer(0).utility {
        let m = seller(j_sell);
        let (mut sum, mut count) = (0.0, 0usize);
        for b in (0..j_sell).map(buyer).filter(|b| b.utility >= m.cost) {
            sum += b.quantity.min(m.quantity) * (b.utility - m.cost);
            count += 1;
        }
        sigma_sell = (sum / (2.0 * count as f64) - delay(j_sell)).max(0.0);
    }
    ThresholdFees {
        sigma_buy,
        sigma_sell,
        j_buy,
        j_sell,
    }
}

/// Pure equilibrium profile, or `None` when the block is smaller than the
/// threshold and no pure equilibrium exists.
///
/// The top `min(A, N)` buyers bid one fee unit above the buyer threshold and
/// the remaining buyers bid the threshold itself; sellers likewise with
/// `min(A, K)`.
pub fn psne(instance: &MarketInstance) -> Option<FeeProfile> {
    let ranking = rank(instance);
    let a_th = a_th_from_ranking(instance, &ranking);
    let a = instance.block_size;
    if a < a_th {
        return None;
    }
    let t = thresholds_from_ranking(instance, &ranking, a_th, a);
    let eps = instance.fee_unit;
    let mut buy = vec![t.sigma_buy; instance.num_buyers()];
    for &id in ranking.buyers.iter().take(a.min(instance.num_sellers())) {
        buy[id] += eps;
    }
    let mut sell = vec![t.sigma_sell; instance.num_sellers()];
    for &id in ranking.sellers.iter().take(a.min(instance.num_buyers())) {
        sell[id] += eps;
    }
    Some(FeeProfile { buy, sell })
}

/// Probabilities of `Bin(m, p)`, evaluated in log space and renormalized.
fn binomial_pmf(m: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; m + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[m] = 1.0;
        return out;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let logs: Vec<f64> = (0..=m)
        .map(|n| ln_binomial(m as u64, n as u64) + n as f64 * lp + (m - n) as f64 * lq)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(&logs) {
        *o = (l - top).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// `E[ceil((n + 1) / A)]` for `n ~ Bin(I - 1, p)`: the expected block index
/// of a participant outbid by each of `I - 1` rivals with probability `p`.
fn expected_block(p: f64, i: usize, a: usize) -> f64 {
    binomial_pmf(i - 1, p)
        .iter()
        .enumerate()
        .map(|(n, w)| w * (n + 1).div_ceil(a) as f64)
        .sum()
}

/// Expected fee-plus-delay cost of a participant bidding `f` among `i`
/// contenders for blocks of `a` pairs, each rival outbidding it with
/// probability `p`.
pub fn g(p: f64, f: f64, i: usize, a: usize, d: f64) -> f64 {
    assert!(i >= 1 && a >= 1, "g needs i >= 1 and a >= 1");
    f + d * expected_block(p.clamp(0.0, 1.0), i, a)
}

/// Equilibrium fee distribution shared by the mixing participants of one
/// side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub role: Role,
    pub lower: f64,
    pub upper: f64,
    /// Number of contenders `I = min(ceil(A_th / A) A, K, N)`.
    pub contenders: usize,
    pub block_size: usize,
    pub delay_cost: f64,
    /// Ids of the participants that randomize.
    pub mixers: Vec<usize>,
    /// Pure fee of everyone else on this side.
    pub non_mixer_fee: f64,
}

impl MixedStrategy {
    /// Indifference level `g(1, lower, I, A)`.
    pub fn target(&self) -> f64 {
        g(1.0, self.lower, self.contenders, self.block_size, self.delay_cost)
    }

    /// `F(f)`: the solution of `g(1 - F, f) = g(1, lower)` on the support,
    /// found by bisection. Zero at and below `lower`, one from `upper` on.
    /// With zero delay the support collapses to an atom at `lower`.
    pub fn cdf(&self, f: f64) -> f64 {
        if f < self.lower {
            return 0.0;
        }
        if f >= self.upper {
            return 1.0;
        }
        if f == self.lower {
            return 0.0;
        }
        let target = self.target();
        let excess = |big_f: f64| g(1.0 - big_f, f, self.contenders, self.block_size, self.delay_cost) - target;
        // g(1 - F, f) decreases in F from >= target at F = 0 to <= target at 1.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let e = excess(mid);
            if e == 0.0 {
                return mid;
            }
            if e > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Inverse CDF. `g` is affine in the fee, so the inverse has the closed
    /// form `f = g(1, lower) - d E_{p = 1 - u}[block]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let f = self.target() - self.delay_cost * expected_block(1.0 - u, self.contenders, self.block_size);
        f.clamp(self.lower, self.upper)
    }

    /// Inverse-transform draw for a uniform `u` in `(0, 1)`.
    pub fn sample_fee(&self, u: f64) -> f64 {
        self.quantile(u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedEquilibrium {
    pub a_th: usize,
    pub thresholds: ThresholdFees,
    pub buy: MixedStrategy,
    pub sell: MixedStrategy,
}

impl MixedEquilibrium {
    pub fn strategy(&self, role: Role) -> &MixedStrategy {
        match role {
            Role::Buy => &self.buy,
            Role::Sell => &self.sell,
        }
    }

    /// Draws one fee profile: mixers sample their side's distribution, the
    /// others bid the threshold.
    pub fn sample_profile<R: Rng + ?Sized>(&self, instance: &MarketInstance, rng: &mut R) -> FeeProfile {
        let mut buy = vec![self.buy.non_mixer_fee; instance.num_buyers()];
        for &id in &self.buy.mixers {
            buy[id] = self.buy.quantile(rng.random());
        }
        let mut sell = vec![self.sell.non_mixer_fee; instance.num_sellers()];
        for &id in &self.sell.mixers {
            sell[id] = self.sell.quantile(rng.random());
        }
        FeeProfile { buy, sell }
    }
}

/// Mixed equilibrium for blocks smaller than the threshold.
pub fn msne(instance: &MarketInstance) -> Result<MixedEquilibrium> {
    let ranking = rank(instance);
    let a_th = a_th_from_ranking(instance, &ranking);
    let a = instance.block_size;
    if a >= a_th {
        return Err(Error::PureEquilibriumRegime {
            block_size: a,
            threshold: a_th,
        });
    }
    let t = thresholds_from_ranking(instance, &ranking, a_th, a);
    let contenders = (a_th.div_ceil(a) * a).min(instance.min_side());
    let eps = instance.fee_unit;
    let d = instance.delay_cost;
    let spread = (contenders.div_ceil(a) - 1) as f64 * d;
    let side = |role: Role, sigma: f64, ids: &[usize]| {
        let lower = sigma + eps;
        MixedStrategy {
            role,
            lower,
            upper: lower + spread,
            contenders,
            block_size: a,
            delay_cost: d,
            mixers: ids[..contenders].to_vec(),
            non_mixer_fee: sigma,
        }
    };
    Ok(MixedEquilibrium {
        a_th,
        thresholds: t,
        buy: side(Role::Buy, t.sigma_buy, &ranking.buyers),
        sell: side(Role::Sell, t.sigma_sell, &ranking.sellers),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Equilibrium {
    Pure { a_th: usize, profile: FeeProfile },
    Mixed(MixedEquilibrium),
}

impl Equilibrium {
    pub fn is_pure(&self) -> bool {
        matches!(self, Equilibrium::Pure { .. })
    }

    pub fn a_th(&self) -> usize {
        match self {
            Equilibrium::Pure { a_th, .. } => *a_th,
            Equilibrium::Mixed(m) => m.a_th,
        }
    }

    /// The pure profile, or one draw from the mixed strategies.
    pub fn draw_profile<R: Rng + ?Sized>(&self, instance: &MarketInstance, rng: &mut R) -> FeeProfile {
        match self {
            Equilibrium::Pure { profile, .. } => profile.clone(),
            Equilibrium::Mixed(m) => m.sample_profile(instance, rng),
        }
    }
}

/// The equilibrium in force at the instance's block size.
pub fn solve(instance: &MarketInstance) -> Equilibrium {
    match psne(instance) {
        Some(profile) => Equilibrium::Pure {
            a_th: compute_a_th(instance),
            profile,
        },
        None => Equilibrium::Mixed(msne(instance).expect("no pure profile implies the mixed regime")),
    }
}

/// Realized payoff of one participant in a trace.
pub fn participant_payoff(
    instance: &MarketInstance,
    profile: &FeeProfile,
    trace: &MatchTrace,
    role: Role,
    id: usize,
) -> f64 {
    let d = instance.delay_cost;
    let hit = trace.matched_pairs().find(|p| match role {
        Role::Buy => p.buyer == id,
        Role::Sell => p.seller == id,
    });
    match role {
        Role::Buy => buyer_payoff(
            &instance.buyers[id],
            profile.buy[id],
            hit.map(|p| (p.block, &instance.sellers[p.seller])),
            d,
        ),
        Role::Sell => seller_payoff(
            &instance.sellers[id],
            profile.sell[id],
            hit.map(|p| (p.block, &instance.buyers[p.buyer])),
            d,
        ),
    }
}

/// Expected payoff of one participant over the engine's randomness: exact
/// over all decision paths when there are at most `max_paths`, otherwise a
/// seeded Monte Carlo mean. Returns the value and whether it is exact.
pub fn expected_payoff(
    instance: &MarketInstance,
    profile: &FeeProfile,
    role: Role,
    id: usize,
    max_paths: usize,
    mc_samples: usize,
    seed: u64,
) -> (f64, bool) {
    let mut total = 0.0;
    let complete = for_each_path(
        max_paths,
        |c| participant_payoff(instance, profile, &run_horizon(instance, profile, c), role, id),
        |p, v| total += p * v,
    );
    if complete {
        return (total, true);
    }
    let mut chooser = SeededChooser::new(seed);
    let mean = (0..mc_samples)
        .map(|_| participant_payoff(instance, profile, &run_horizon(instance, profile, &mut chooser), role, id))
        .sum::<f64>()
        / mc_samples.max(1) as f64;
    (mean, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsneCheck {
    /// Evenly spaced fees on `[0, top + 5 d]`, `top` being the largest
    /// fee of the participant's side.
    pub grid_points: usize,
    pub max_paths: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for PsneCheck {
    fn default() -> Self {
        Self {
            grid_points: 201,
            max_paths: 20_000,
            mc_samples: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub role: Role,
    pub id: usize,
    pub fee: f64,
    /// Payoff gain over the equilibrium fee.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsneReport {
    /// Best deviation found; `gain <= 0` means no profitable deviation.
    pub best: Deviation,
    /// Every expectation was computed by full enumeration.
    pub exact: bool,
    pub deviations_checked: usize,
}

impl PsneReport {
    pub fn max_improvement(&self) -> f64 {
        self.best.gain
    }
}

fn deviation_fees(own: f64, side_top: f64, sigma: f64, eps: f64, d: f64, points: usize) -> Vec<f64> {
    let hi = side_top + 5.0 * d;
    let mut fees: Vec<f64> = (0..points)
        .map(|j| if points > 1 { hi * j as f64 / (points - 1) as f64 } else { 0.0 })
        .collect();
    fees.extend([sigma, sigma + eps, sigma + 2.0 * eps, sigma - eps, own - eps, own + eps]);
    fees.retain(|f| *f >= 0.0 && *f != own);
    fees.sort_by(f64::total_cmp);
    fees.dedup();
    fees
}

/// Unilateral-deviation check of a pure profile: every participant's
/// expected payoff at a grid of alternative fees, others fixed.
pub fn verify_psne(instance: &MarketInstance, profile: &FeeProfile, check: &PsneCheck) -> PsneReport {
    let t = threshold_fees(instance, compute_a_th(instance), instance.block_size);
    let eps = instance.fee_unit;
    let d = instance.delay_cost;
    let top_buy = profile.buy.iter().copied().fold(0.0, f64::max);
    let top_sell = profile.sell.iter().copied().fold(0.0, f64::max);
    let who: Vec<(Role, usize)> = (0..instance.num_buyers())
        .map(|k| (Role::Buy, k))
        .chain((0..instance.num_sellers()).map(|n| (Role::Sell, n)))
        .collect();

    let per: Vec<(Deviation, bool, usize)> = who
        .par_iter()
        .map(|&(role, id)| {
            let seed = derive_seed(check.seed, &[role as u64, id as u64]);
            let eval = |p: &FeeProfile| expected_payoff(instance, p, role, id, check.max_paths, check.mc_samples, seed);
            let (own, top, sigma) = match role {
                Role::Buy => (profile.buy[id], top_buy, t.sigma_buy),
                Role::Sell => (profile.sell[id], top_sell, t.sigma_sell),
            };
            let (base, mut exact) = eval(profile);
            let fees = deviation_fees(own, top, sigma, eps, d, check.grid_points);
            let mut best = Deviation {
                role,
                id,
                fee: own,
                gain: f64::NEG_INFINITY,
            };
            let mut trial = profile.clone();
            for &fee in &fees {
                match role {
                    Role::Buy => trial.buy[id] = fee,
                    Role::Sell => trial.sell[id] = fee,
                }
                let (v, ex) = eval(&trial);
                exact &= ex;
                if v - base > best.gain {
                    best = Deviation {
                        role,
                        id,
                        fee,
                        gain: v - base,
                    };
                }
            }
            (best, exact, fees.len())
        })
        .collect();

    let mut best = per[0].0;
    for (dev, _, _) in &per {
        if dev.gain > best.gain {
            best = *dev;
        }
    }
    PsneReport {
        best,
        exact: per.iter().all(|p| p.1),
        deviations_checked: per.iter().map(|p| p.2).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsneCheck {
    /// In-support fees, evenly spaced from `lower` to `upper` inclusive.
    pub grid_fees: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MsneCheck {
    fn default() -> Self {
        Self {
            grid_fees: 5,
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub fee: f64,
    /// Mean of `fee + l d` over samples in which the participant traded in
    /// block `l`; the same convention as [`g`].
    pub mean_cost: f64,
    pub cost_stderr: f64,
    pub mean_payoff: f64,
    pub match_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerCheck {
    pub role: Role,
    pub id: usize,
    pub target: f64,
    pub in_support: Vec<CostPoint>,
    pub outside: Vec<CostPoint>,
}

impl MixerCheck {
    /// `(max - min)` of in-support mean costs relative to the target.
    pub fn relative_spread(&self) -> f64 {
        let costs = self.in_support.iter().map(|p| p.mean_cost);
        let hi = costs.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = costs.fold(f64::INFINITY, f64::min);
        (hi - lo) / self.target
    }

    /// Largest mean payoff of an outside-support fee minus the best
    /// in-support mean payoff.
    pub fn best_outside_gain(&self) -> f64 {
        let inside = self.in_support.iter().map(|p| p.mean_payoff).fold(f64::NEG_INFINITY, f64::max);
        self.outside
            .iter()
            .map(|p| p.mean_payoff - inside)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsneReport {
    pub buy: MixerCheck,
    pub sell: MixerCheck,
}

/// Indifference check of the mixed equilibrium through the full engine: the
/// weakest mixer of each side is pinned to a fixed fee while everyone else
/// draws from the equilibrium; samples are paired across fees.
pub fn verify_msne(instance: &MarketInstance, eq: &MixedEquilibrium, check: &MsneCheck) -> MsneReport {
    let side = |role: Role| {
        let s = eq.strategy(role);
        let id = *s.mixers.last().expect("at least one mixer");
        let n = check.grid_fees.max(2);
        let in_support: Vec<f64> = (0..n)
            .map(|j| s.lower + (s.upper - s.lower) * j as f64 / (n - 1) as f64)
            .collect();
        let mut outside = vec![s.non_mixer_fee, s.upper + s.delay_cost, s.upper + 5.0 * s.delay_cost];
        if s.lower - 0.5 * instance.fee_unit > s.non_mixer_fee {
            outside.push(s.lower - 0.5 * instance.fee_unit);
        }
        outside.retain(|f| *f >= 0.0);
        let point = |fee: f64| mixer_point(instance, eq, role, id, fee, check);
        MixerCheck {
            role,
            id,
            target: s.target(),
            in_support: in_support.into_iter().map(point).collect(),
            outside: outside.into_iter().map(point).collect(),
        }
    };
    MsneReport {
        buy: side(Role::Buy),
        sell: side(Role::Sell),
    }
}

fn mixer_point(instance: &MarketInstance, eq: &MixedEquilibrium, role: Role, id: usize, fee: f64, check: &MsneCheck) -> CostPoint {
    let d = instance.delay_cost;
    let draws: Vec<(Option<f64>, f64)> = (0..check.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = crate::random::rng_from(derive_seed(check.seed, &[role as u64, s as u64, 0]));
            let mut profile = eq.sample_profile(instance, &mut rng);
            match role {
                Role::Buy => profile.buy[id] = fee,
                Role::Sell => profile.sell[id] = fee,
            }
            let mut chooser = SeededChooser::new(derive_seed(check.seed, &[role as u64, s as u64, 1]));
            let trace = run_horizon(instance, &profile, &mut chooser);
            let block = trace.matched_pairs().find_map(|p| {
                let hit = match role {
                    Role::Buy => p.buyer == id,
                    Role::Sell => p.seller == id,
                };
                hit.then_some(p.block)
            });
            let payoff = participant_payoff(instance, &profile, &trace, role, id);
            (block.map(|l| fee + l as f64 * d), payoff)
        })
        .collect();
    let costs: Vec<f64> = draws.iter().filter_map(|x| x.0).collect();
    let m = costs.len().max(1) as f64;
    let mean = costs.iter().sum::<f64>() / m;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    CostPoint {
        fee,
        mean_cost: mean,
        cost_stderr: (var / m).sqrt(),
        mean_payoff: draws.iter().map(|x| x.1).sum::<f64>() / check.samples.max(1) as f64,
        match_rate: costs.len() as f64 / check.samples.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn a_th_examples() {
        let a = |r: &[f64], c: &[f64]| compute_a_th(&MarketInstance::unit(r, c, 1, 0.0).unwrap());
        assert_eq!(a(&[0.9, 0.3], &[0.1, 0.5]), 1);
        assert_eq!(a(&[0.8, 0.6], &[0.2, 0.4]), 2);
        assert_eq!(a(&[0.2], &[0.5]), 1);
        // unsorted input is ranked first
        assert_eq!(a(&[0.3, 0.9], &[0.5, 0.1]), 1);
    }

    #[test]
    fn sigma_example() {
        let inst = MarketInstance::unit(&[0.9, 0.8, 0.5], &[0.1, 0.2], 2, 0.01).unwrap();
        let t = threshold_fees(&inst, compute_a_th(&inst), 2);
        assert_eq!((t.j_buy, t.j_sell), (2, 2));
        assert!(close(t.sigma_buy, 0.145), "{}", t.sigma_buy);
        assert_eq!(t.sigma_sell, 0.0);
    }

    #[test]
    fn sigma_fallbacks() {
        // J = K: nobody is excluded
        let inst = MarketInstance::unit(&[0.9, 0.8], &[0.1, 0.2], 2, 0.0).unwrap();
        assert_eq!(threshold_fees(&inst, 2, 2).sigma_buy, 0.0);
        // marginal buyer below the cheapest seller
        let inst = MarketInstance::unit(&[0.9, 0.8, 0.05], &[0.1, 0.2], 2, 0.0).unwrap();
        assert_eq!(threshold_fees(&inst, 2, 2).sigma_buy, 0.0);
    }

    #[test]
    fn psne_examples() {
        let inst = MarketInstance::unit(&[0.9, 0.3], &[0.1, 0.5], 1, 0.0).unwrap();
        assert!(psne(&inst.with_block_size(1)).is_some());
        let inst = MarketInstance::unit(&[0.8, 0.6], &[0.2, 0.4], 1, 0.0).unwrap();
        assert!(psne(&inst).is_none());
        let p = psne(&inst.with_block_size(2)).unwrap();
        let eps = inst.fee_unit;
        assert_eq!(p.buy, vec![eps, eps]);
        assert_eq!(p.sell, vec![eps, eps]);

        let inst = MarketInstance::unit(&[0.9, 0.8, 0.5], &[0.1, 0.2], 2, 0.01).unwrap();
        let p = psne(&inst).unwrap();
        assert!(close(p.buy[0], 0.145 + eps) && close(p.buy[1], 0.145 + eps) && close(p.buy[2], 0.145));
    }

    #[test]
    fn g_examples() {
        assert!(close(g(1.0, 0.2, 5, 2, 0.1), 0.2 + 3.0 * 0.1));
        assert!(close(g(0.0, 0.2, 5, 2, 0.1), 0.3));
        assert!(close(g(0.5, 0.0, 2, 1, 1.0), 1.5));
    }

    #[test]
    fn g_large_contender_counts_are_finite() {
        let v = g(0.37, 0.0, 5000, 7, 1.0);
        assert!(v.is_finite());
        // mean block ~ (1 + 0.37 * 4999) / 7
        assert!((v - (1.0 + 0.37 * 4999.0) / 7.0).abs() < 1.0);
    }

    fn two_mixer_strategy() -> MixedStrategy {
        MixedStrategy {
            role: Role::Buy,
            lower: 0.1,
            upper: 1.1,
            contenders: 2,
            block_size: 1,
            delay_cost: 1.0,
            mixers: vec![0, 1],
            non_mixer_fee: 0.0,
        }
    }

    #[test]
    fn two_mixer_closed_form() {
        let s = two_mixer_strategy();
        assert_eq!(s.cdf(s.lower), 0.0);
        assert_eq!(s.cdf(s.upper), 1.0);
        assert!((s.cdf(0.6) - 0.5).abs() < 1e-10);
        assert!((s.sample_fee(0.5) - 0.6).abs() < 1e-12);
        assert!(close(s.sample_fee(1e-15), s.lower));
        assert!((s.sample_fee(1.0 - 1e-15) - s.upper).abs() < 1e-12);
    }

    #[test]
    fn msne_support() {
        let inst = MarketInstance::unit(&[0.9, 0.8, 0.7], &[0.1, 0.2, 0.3], 1, 0.05).unwrap();
        let eq = msne(&inst).unwrap();
        assert_eq!(eq.a_th, 3);
        assert_eq!(eq.buy.contenders, 3);
        assert!(close(eq.buy.upper - eq.buy.lower, 2.0 * 0.05));
        assert_eq!(eq.buy.mixers, vec![0, 1, 2]);
        assert!(matches!(
            msne(&inst.with_block_size(3)),
            Err(Error::PureEquilibriumRegime { .. })
        ));
    }
}
