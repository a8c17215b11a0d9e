//! Participants, market instances, payoffs and matching feasibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::miner::Selection;

/// Default smallest fee unit, in normalized utility units.
pub const DEFAULT_FEE_UNIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Buyer {
    pub id: usize,
    /// Utility per asset unit, in `[0, 1]`.
    pub utility: f64,
    /// Asset units the buyer wants.
    pub quantity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seller {
    pub id: usize,
    /// Cost per asset unit, in `[0, 1]`.
    pub cost: f64,
    /// Asset units offered.
    pub quantity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MinerPolicy {
    /// Maximizes the fee revenue of the block being mined.
    Selfish,
    /// Adopts the welfare-greedy recommended matching.
    ProtocolFollowing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Miner {
    pub id: usize,
    /// Probability of mining any given block.
    pub power: f64,
    pub policy: MinerPolicy,
}

impl Miner {
    pub fn selfish(id: usize, power: f64) -> Self {
        Self {
            id,
            power,
            policy: MinerPolicy::Selfish,
        }
    }

    pub fn protocol_following(id: usize, power: f64) -> Self {
        Self {
            id,
            power,
            policy: MinerPolicy::ProtocolFollowing,
        }
    }
}

/// Builds `count` equal-power miners of which a `non_selfish_fraction` share
/// of the total power follows the protocol.
///
/// With a fraction strictly inside `(0, 1)` at least one miner of each kind
/// is created; the total power of each kind matches the fraction exactly.
pub fn miner_set(count: usize, non_selfish_fraction: f64) -> Vec<Miner> {
    let count = count.max(1);
    let f = non_selfish_fraction.clamp(0.0, 1.0);
    if f == 0.0 {
        return (0..count).map(|i| Miner::selfish(i, 1.0 / count as f64)).collect();
    }
    if f == 1.0 {
        return (0..count)
            .map(|i| Miner::protocol_following(i, 1.0 / count as f64))
            .collect();
    }
    let count = count.max(2);
    let protocol = ((f * count as f64).round() as usize).clamp(1, count - 1);
    let selfish = count - protocol;
    let mut miners = Vec::with_capacity(count);
    for i in 0..protocol {
        miners.push(Miner::protocol_following(i, f / protocol as f64));
    }
    for i in 0..selfish {
        miners.push(Miner::selfish(protocol + i, (1.0 - f) / selfish as f64));
    }
    miners
}

/// A complete parameterization of the fee-setting and matching game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub buyers: Vec<Buyer>,
    pub sellers: Vec<Seller>,
    pub miners: Vec<Miner>,
    /// Maximum number of buyer/seller pairs per block.
    pub block_size: usize,
    /// Delay cost per block of waiting.
    pub delay_cost: f64,
    /// Smallest fee increment.
    pub fee_unit: f64,
    /// Number of blocks simulated.
    pub horizon: usize,
    /// Round fees to multiples of `fee_unit` before simulation.
    #[serde(default)]
    pub quantize_fees: bool,
}

impl MarketInstance {
    pub fn new(
        buyers: Vec<Buyer>,
        sellers: Vec<Seller>,
        miners: Vec<Miner>,
        block_size: usize,
        delay_cost: f64,
        fee_unit: f64,
        horizon: usize,
    ) -> Result<Self> {
        let instance = Self {
            buyers,
            sellers,
            miners,
            block_size,
            delay_cost,
            fee_unit,
            horizon,
            quantize_fees: false,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Unit-quantity instance with one selfish miner, the default fee unit
    /// and a horizon long enough to match one pair per block.
    pub fn unit(utilities: &[f64], costs: &[f64], block_size: usize, delay_cost: f64) -> Result<Self> {
        let ones_b = vec![1.0; utilities.len()];
        let ones_s = vec![1.0; costs.len()];
        Self::with_quantities(utilities, &ones_b, costs, &ones_s, block_size, delay_cost)
    }

    pub fn with_quantities(
        utilities: &[f64],
        buy_quantities: &[f64],
        costs: &[f64],
        sell_quantities: &[f64],
        block_size: usize,
        delay_cost: f64,
    ) -> Result<Self> {
        if utilities.len() != buy_quantities.len() || costs.len() != sell_quantities.len() {
            return Err(Error::InvalidInstance("quantity vectors must match participant vectors".into()));
        }
        let buyers = utilities
            .iter()
            .zip(buy_quantities)
            .enumerate()
            .map(|(id, (&utility, &quantity))| Buyer { id, utility, quantity })
            .collect();
        let sellers = costs
            .iter()
            .zip(sell_quantities)
            .enumerate()
            .map(|(id, (&cost, &quantity))| Seller { id, cost, quantity })
            .collect();
        let horizon = default_horizon(utilities.len(), costs.len(), block_size);
        Self::new(
            buyers,
            sellers,
            vec![Miner::selfish(0, 1.0)],
            block_size,
            delay_cost,
            DEFAULT_FEE_UNIT,
            horizon,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if self.buyers.is_empty() || self.sellers.is_empty() {
            return bad("need at least one buyer and one seller".into());
        }
        if self.block_size == 0 {
            return bad("block size must be at least 1".into());
        }
        if !(self.delay_cost >= 0.0 && self.delay_cost.is_finite()) {
            return bad(format!("delay cost {} must be finite and nonnegative", self.delay_cost));
        }
        if !(self.fee_unit > 0.0 && self.fee_unit.is_finite()) {
            return bad(format!("fee unit {} must be positive", self.fee_unit));
        }
        for (i, b) in self.buyers.iter().enumerate() {
            if b.id != i {
                return bad(format!("buyer at position {i} has id {}", b.id));
            }
            if !(0.0..=1.0).contains(&b.utility) {
                return bad(format!("buyer {i} utility {} outside [0, 1]", b.utility));
            }
            if !(b.quantity > 0.0 && b.quantity.is_finite()) {
                return bad(format!("buyer {i} quantity {} must be positive", b.quantity));
            }
        }
        for (i, s) in self.sellers.iter().enumerate() {
            if s.id != i {
                return bad(format!("seller at position {i} has id {}", s.id));
            }
            if !(0.0..=1.0).contains(&s.cost) {
                return bad(format!("seller {i} cost {} outside [0, 1]", s.cost));
            }
            if !(s.quantity > 0.0 && s.quantity.is_finite()) {
                return bad(format!("seller {i} quantity {} must be positive", s.quantity));
            }
        }
        if self.miners.is_empty() {
            return bad("need at least one miner".into());
        }
        let mut total = 0.0;
        for (i, m) in self.miners.iter().enumerate() {
            if m.id != i {
                return bad(format!("miner at position {i} has id {}", m.id));
            }
            if !(0.0..=1.0).contains(&m.power) {
                return bad(format!("miner {i} power {} outside [0, 1]", m.power));
            }
            total += m.power;
        }
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("miner powers sum to {total}, expected 1"));
        }
        let min_horizon = self.min_side().div_ceil(self.block_size);
        if self.horizon < min_horizon.max(1) {
            return bad(format!(
                "horizon {} cannot record all transactions (needs at least {min_horizon})",
                self.horizon
            ));
        }
        Ok(())
    }

    pub fn num_buyers(&self) -> usize {
        self.buyers.len()
    }

    pub fn num_sellers(&self) -> usize {
        self.sellers.len()
    }

    /// `min(K, N)`.
    pub fn min_side(&self) -> usize {
        self.buyers.len().min(self.sellers.len())
    }

    /// True when every buyer and seller trades the same quantity.
    pub fn is_homogeneous(&self) -> bool {
        let q = self.buyers[0].quantity;
        self.buyers.iter().all(|b| b.quantity == q) && self.sellers.iter().all(|s| s.quantity == q)
    }

    /// Copy of this instance with a different block size; the horizon is
    /// extended if the new block size needs more blocks.
    pub fn with_block_size(&self, block_size: usize) -> Self {
        let mut out = self.clone();
        out.block_size = block_size.max(1);
        out.horizon = out.horizon.max(self.min_side().div_ceil(out.block_size));
        out
    }

    pub fn with_miners(&self, miners: Vec<Miner>) -> Self {
        let mut out = self.clone();
        out.miners = miners;
        out
    }
}

/// Horizon that lets every matchable pair be recorded even if each block
/// carries a single pair.
pub fn default_horizon(buyers: usize, sellers: usize, block_size: usize) -> usize {
    let m = buyers.min(sellers).max(1);
    m.max(m.div_ceil(block_size.max(1)))
}

/// One fee per buyer and per seller, indexed by participant id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeProfile {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

impl FeeProfile {
    pub fn new(buy: Vec<f64>, sell: Vec<f64>) -> Result<Self> {
        if let Some(f) = buy.iter().chain(&sell).find(|f| !(**f >= 0.0 && f.is_finite())) {
            return Err(Error::InvalidProfile(format!("fee {f} must be finite and nonnegative")));
        }
        Ok(Self { buy, sell })
    }

    pub fn uniform(buyers: usize, sellers: usize, fee: f64) -> Self {
        Self {
            buy: vec![fee; buyers],
            sell: vec![fee; sellers],
        }
    }

    pub fn check_against(&self, instance: &MarketInstance) -> Result<()> {
        if self.buy.len() != instance.num_buyers() || self.sell.len() != instance.num_sellers() {
            return Err(Error::InvalidProfile(format!(
                "profile has {}x{} fees, instance has {}x{} participants",
                self.buy.len(),
                self.sell.len(),
                instance.num_buyers(),
                instance.num_sellers()
            )));
        }
        Ok(())
    }

    /// Rounds every fee to the nearest multiple of `unit`.
    pub fn quantized(&self, unit: f64) -> Self {
        let q = |f: &f64| (f / unit).round() * unit;
        Self {
            buy: self.buy.iter().map(q).collect(),
            sell: self.sell.iter().map(q).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub buyer: usize,
    pub seller: usize,
    /// 1-based index of the block recording the pair.
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based block index.
    pub block: usize,
    /// Id of the miner whose block was appended.
    pub winner: usize,
    /// The selection every miner computed for this block, by miner id.
    pub selections: Vec<Selection>,
}

impl RoundRecord {
    pub fn winning_selection(&self) -> &Selection {
        &self.selections[self.winner]
    }
}

/// Per-block record of miner selections and the matches that landed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchTrace {
    pub rounds: Vec<RoundRecord>,
}

impl MatchTrace {
    pub fn matched_pairs(&self) -> impl Iterator<Item = MatchedPair> + '_ {
        self.rounds.iter().flat_map(|r| {
            r.winning_selection().pairs.iter().map(move |&(buyer, seller)| MatchedPair {
                buyer,
                seller,
                block: r.block,
            })
        })
    }

    pub fn num_matched(&self) -> usize {
        self.rounds.iter().map(|r| r.winning_selection().pairs.len()).sum()
    }

    /// For each buyer id: the seller it traded with and the block index.
    pub fn buyer_inclusions(&self, num_buyers: usize) -> Vec<Option<(usize, usize)>> {
        let mut out = vec![None; num_buyers];
        for p in self.matched_pairs() {
            out[p.buyer] = Some((p.seller, p.block));
        }
        out
    }

    /// For each seller id: the buyer it traded with and the block index.
    pub fn seller_inclusions(&self, num_sellers: usize) -> Vec<Option<(usize, usize)>> {
        let mut out = vec![None; num_sellers];
        for p in self.matched_pairs() {
            out[p.seller] = Some((p.buyer, p.block));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSurplus {
    pub buy: f64,
    pub sell: f64,
    pub quantity: f64,
}

/// Surplus split of a trade at the mid price `(R + C) / 2` on the
/// reduce-only quantity `min(b, q)`.
pub fn pair_surplus(buyer: &Buyer, seller: &Seller) -> PairSurplus {
    let quantity = buyer.quantity.min(seller.quantity);
    let mid = (buyer.utility + seller.cost) / 2.0;
    PairSurplus {
        buy: quantity * (buyer.utility - mid),
        sell: quantity * (mid - seller.cost),
        quantity,
    }
}

/// Total gain from trade of a pair, `min(b, q) (R - C)`.
pub fn pair_gain(buyer: &Buyer, seller: &Seller) -> f64 {
    buyer.quantity.min(seller.quantity) * (buyer.utility - seller.cost)
}

/// Realized buyer payoff. `inclusion` is the block index and trade partner;
/// an unmatched buyer pays nothing and earns nothing.
pub fn buyer_payoff(buyer: &Buyer, fee: f64, inclusion: Option<(usize, &Seller)>, delay_cost: f64) -> f64 {
    match inclusion {
        Some((block, seller)) => {
            pair_surplus(buyer, seller).buy - fee - (block as f64 - 1.0) * delay_cost
        }
        None => 0.0,
    }
}

/// Realized seller payoff, mirroring [`buyer_payoff`].
pub fn seller_payoff(seller: &Seller, fee: f64, inclusion: Option<(usize, &Buyer)>, delay_cost: f64) -> f64 {
    match inclusion {
        Some((block, buyer)) => {
            pair_surplus(buyer, seller).sell - fee - (block as f64 - 1.0) * delay_cost
        }
        None => 0.0,
    }
}

/// Expected payoff `alpha * sum(fees)` of a miner for one block.
pub fn miner_round_payoff(selected_fees: &[f64], alpha: f64) -> f64 {
    alpha * selected_fees.iter().sum::<f64>()
}

/// Whether equally many buyers and sellers admit a one-to-one matching with
/// `R >= C` on every pair.
pub fn feasible_matching_exists(buyer_utils: &[f64], seller_costs: &[f64]) -> Result<bool> {
    if buyer_utils.len() != seller_costs.len() {
        return Err(Error::LengthMismatch {
            buyers: buyer_utils.len(),
            sellers: seller_costs.len(),
        });
    }
    let mut r = buyer_utils.to_vec();
    let mut c = seller_costs.to_vec();
    Ok(sorted_rank_feasible(&mut r, &mut c))
}

/// Sorts both slices ascending and checks `r[j] >= c[j]` at every rank.
pub(crate) fn sorted_rank_feasible(r: &mut [f64], c: &mut [f64]) -> bool {
    r.sort_by(f64::total_cmp);
    c.sort_by(f64::total_cmp);
    r.iter().zip(c.iter()).all(|(r, c)| r >= c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(utility: f64, quantity: f64) -> Buyer {
        Buyer { id: 0, utility, quantity }
    }

    fn s(cost: f64, quantity: f64) -> Seller {
        Seller { id: 0, cost, quantity }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn surplus_unit_pair() {
        let p = pair_surplus(&b(0.9, 1.0), &s(0.1, 1.0));
        assert!(close(p.quantity, 1.0) && close(p.buy, 0.4) && close(p.sell, 0.4));
    }

    #[test]
    fn surplus_equal_values_is_zero() {
        let p = pair_surplus(&b(0.37, 2.5), &s(0.37, 1.5));
        assert_eq!(p.buy, 0.0);
        assert_eq!(p.sell, 0.0);
    }

    #[test]
    fn surplus_uses_min_quantity() {
        let p = pair_surplus(&b(0.9, 2.0), &s(0.1, 3.0));
        assert!(close(p.quantity, 2.0) && close(p.buy, 0.8) && close(p.sell, 0.8));
    }

    #[test]
    fn buyer_payoff_cases() {
        let buyer = b(0.9, 1.0);
        let seller = s(0.1, 1.0);
        assert!(close(buyer_payoff(&buyer, 0.1, Some((1, &seller)), 0.3), 0.3));
        assert!(close(buyer_payoff(&buyer, 0.1, Some((2, &seller)), 0.3), 0.0));
        assert_eq!(buyer_payoff(&buyer, 0.1, None, 0.3), 0.0);
        assert!(close(seller_payoff(&seller, 0.1, Some((2, &buyer)), 0.3), 0.0));
    }

    #[test]
    fn miner_payoff() {
        assert!(close(miner_round_payoff(&[5.0, 3.0, 4.0, 1.0], 0.2), 2.6));
        assert_eq!(miner_round_payoff(&[], 0.7), 0.0);
        assert_eq!(miner_round_payoff(&[1e-6], 1.0), 1e-6);
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasible_matching_exists(&[0.9, 0.8], &[0.1, 0.2]).unwrap());
        assert!(!feasible_matching_exists(&[0.9], &[0.95]).unwrap());
        assert!(feasible_matching_exists(&[0.5, 0.9], &[0.6, 0.1]).unwrap());
        assert!(matches!(
            feasible_matching_exists(&[0.5], &[0.1, 0.2]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn instance_validation() {
        assert!(MarketInstance::unit(&[0.9], &[0.1], 1, 0.0).is_ok());
        assert!(MarketInstance::unit(&[1.2], &[0.1], 1, 0.0).is_err());
        assert!(MarketInstance::unit(&[], &[0.1], 1, 0.0).is_err());
        assert!(MarketInstance::unit(&[0.5], &[0.1], 0, 0.0).is_err());
        let mut inst = MarketInstance::unit(&[0.9, 0.8], &[0.1, 0.2], 1, 0.0).unwrap();
        inst.horizon = 1;
        assert!(inst.validate().is_err());
        inst.horizon = 2;
        inst.miners = vec![Miner::selfish(0, 0.5), Miner::selfish(1, 0.4)];
        assert!(inst.validate().is_err());
    }

    #[test]
    fn miner_set_powers() {
        let m = miner_set(5, 0.2);
        let protocol: f64 = m
            .iter()
            .filter(|m| m.policy == MinerPolicy::ProtocolFollowing)
            .map(|m| m.power)
            .sum();
        assert!(close(protocol, 0.2));
        assert!(close(m.iter().map(|m| m.power).sum::<f64>(), 1.0));
        assert!(miner_set(5, 0.0).iter().all(|m| m.policy == MinerPolicy::Selfish));
    }

    #[test]
    fn quantization_rounds_to_unit() {
        let p = FeeProfile::new(vec![0.26, 0.0], vec![0.74]).unwrap().quantized(0.5);
        assert_eq!(p.buy, vec![0.5, 0.0]);
        assert_eq!(p.sell, vec![0.5]);
        assert!(FeeProfile::new(vec![-1.0], vec![]).is_err());
    }
}
