//! Block construction by selfish and protocol-following miners, and the
//! pending-pool dynamics over the horizon.

use std::cmp::Ordering;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::market::{pair_gain, sorted_rank_feasible, FeeProfile, MarketInstance, MatchTrace, MinerPolicy, RoundRecord};
use crate::matching::max_weight_matching;
use crate::random::Chooser;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: usize,
    pub fee: f64,
}

/// Transactions still waiting for inclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingPool {
    pub buyers: Vec<PoolEntry>,
    pub sellers: Vec<PoolEntry>,
    /// 1-based index of the next block to be mined.
    pub round: usize,
}

impl PendingPool {
    pub fn initial(profile: &FeeProfile) -> Self {
        let entries = |fees: &[f64]| {
            fees.iter()
                .enumerate()
                .map(|(id, &fee)| PoolEntry { id, fee })
                .collect()
        };
        Self {
            buyers: entries(&profile.buy),
            sellers: entries(&profile.sell),
            round: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.buyers.len() + self.sellers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buyers.is_empty() && self.sellers.is_empty()
    }

    /// Pool after `selection` has been recorded in the current block.
    pub fn without(&self, selection: &Selection) -> Self {
        let keep = |entries: &[PoolEntry], chosen: &[usize]| {
            entries
                .iter()
                .copied()
                .filter(|e| !chosen.contains(&e.id))
                .collect()
        };
        Self {
            buyers: keep(&self.buyers, &selection.buyers),
            sellers: keep(&self.sellers, &selection.sellers),
            round: self.round + 1,
        }
    }

    fn has_fee_paying_pair(&self) -> bool {
        self.buyers.iter().any(|e| e.fee > 0.0) && self.sellers.iter().any(|e| e.fee > 0.0)
    }
}

/// A miner's proposed block content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub buyers: Vec<usize>,
    pub sellers: Vec<usize>,
    /// `(buyer id, seller id)` trades recorded in the block.
    pub pairs: Vec<(usize, usize)>,
    pub total_fee: f64,
}

impl Selection {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

/// Fee with a tie-break priority; ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    fee: f64,
    priority: i64,
}

impl Add for Key {
    type Output = Key;
    fn add(self, rhs: Key) -> Key {
        Key {
            fee: self.fee + rhs.fee,
            priority: self.priority + rhs.priority,
        }
    }
}

impl Key {
    fn beats(&self, other: &Key) -> bool {
        match self.fee.partial_cmp(&other.fee) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => self.priority > other.priority,
        }
    }
}

/// Fee-paying entries ordered by descending fee, with equal-fee runs in
/// uniformly random order. Returns `(id, fee, priority)` where a larger
/// priority wins ties.
fn ranked_candidates<C: Chooser>(entries: &[PoolEntry], chooser: &mut C) -> Vec<(usize, f64, i64)> {
    let mut c: Vec<PoolEntry> = entries.iter().copied().filter(|e| e.fee > 0.0).collect();
    c.sort_by(|a, b| b.fee.total_cmp(&a.fee).then(a.id.cmp(&b.id)));
    let mut start = 0;
    while start < c.len() {
        let mut end = start + 1;
        while end < c.len() && c[end].fee == c[start].fee {
            end += 1;
        }
        chooser.shuffle(&mut c[start..end]);
        start = end;
    }
    let n = c.len() as i64;
    c.iter()
        .enumerate()
        .map(|(rank, e)| (e.id, e.fee, n - rank as i64))
        .collect()
}

/// Samples a pairing uniformly among all `R >= C` perfect matchings of the
/// chosen buyers and sellers.
///
/// The compatibility graph is nested: scanning buyers by ascending utility,
/// each buyer's compatible sellers contain the previous buyer's, so choosing
/// uniformly among the still-unused compatible sellers at every step is
/// uniform over complete matchings.
fn random_feasible_pairing<C: Chooser>(
    instance: &MarketInstance,
    buyers: &[usize],
    sellers: &[usize],
    chooser: &mut C,
) -> Vec<(usize, usize)> {
    let mut b = buyers.to_vec();
    let mut s = sellers.to_vec();
    b.sort_by(|&x, &y| {
        instance.buyers[x]
            .utility
            .total_cmp(&instance.buyers[y].utility)
            .then(x.cmp(&y))
    });
    s.sort_by(|&x, &y| {
        instance.sellers[x]
            .cost
            .total_cmp(&instance.sellers[y].cost)
            .then(x.cmp(&y))
    });
    let mut avail: Vec<usize> = Vec::with_capacity(s.len());
    let mut next = 0;
    let mut pairs = Vec::with_capacity(b.len());
    for &k in &b {
        let r = instance.buyers[k].utility;
        while next < s.len() && instance.sellers[s[next]].cost <= r {
            avail.push(s[next]);
            next += 1;
        }
        assert!(!avail.is_empty(), "pairing requested for an infeasible selection");
        let pick = chooser.below(avail.len());
        pairs.push((k, avail.swap_remove(pick)));
    }
    pairs.sort_unstable();
    pairs
}

fn finish_selection<C: Chooser>(
    instance: &MarketInstance,
    pool: &PendingPool,
    mut buyers: Vec<usize>,
    mut sellers: Vec<usize>,
    chooser: &mut C,
) -> Selection {
    buyers.sort_unstable();
    sellers.sort_unstable();
    let fee_of = |entries: &[PoolEntry], id: usize| entries.iter().find(|e| e.id == id).map_or(0.0, |e| e.fee);
    let total_fee = buyers.iter().map(|&k| fee_of(&pool.buyers, k)).sum::<f64>()
        + sellers.iter().map(|&n| fee_of(&pool.sellers, n)).sum::<f64>();
    let pairs = random_feasible_pairing(instance, &buyers, &sellers, chooser);
    Selection {
        buyers,
        sellers,
        pairs,
        total_fee,
    }
}

/// Fee-maximizing block of a selfish miner.
///
/// Chooses equally many buyers and sellers (at most the block size) that can
/// be matched with `R >= C` and carry the largest total fee; zero-fee
/// transactions are never chosen. Equal-fee transactions are ordered at
/// random before optimizing, and the realized pairing is uniform among the
/// feasible ones.
///
/// The search runs successive augmentations on a flow over the
/// value-sorted transactions: a chosen seller opens a unit of flow at its
/// cost, a chosen buyer closes one at its utility, and a set is matchable
/// exactly when the running balance stays nonnegative. Each augmentation
/// keeps every previously chosen transaction, so the best selection with
/// `i + 1` pairs extends the best one with `i`.
pub fn selfish_select<C: Chooser>(pool: &PendingPool, instance: &MarketInstance, chooser: &mut C) -> Selection {
    let buyers = ranked_candidates(&pool.buyers, chooser);
    let sellers = ranked_candidates(&pool.sellers, chooser);
    if buyers.is_empty() || sellers.is_empty() {
        return Selection::default();
    }

    struct Item {
        value: f64,
        seller: bool,
        id: usize,
        key: Key,
    }
    let mut items: Vec<Item> = Vec::with_capacity(buyers.len() + sellers.len());
    for &(id, fee, priority) in &sellers {
        items.push(Item {
            value: instance.sellers[id].cost,
            seller: true,
            id,
            key: Key { fee, priority },
        });
    }
    for &(id, fee, priority) in &buyers {
        items.push(Item {
            value: instance.buyers[id].utility,
            seller: false,
            id,
            key: Key { fee, priority },
        });
    }
    // Sellers precede buyers at equal values: R >= C admits equality.
    items.sort_by(|a, b| a.value.total_cmp(&b.value).then(b.seller.cmp(&a.seller)));

    let len = items.len();
    let cap = instance.block_size.min(buyers.len()).min(sellers.len());
    let mut used = vec![false; len];
    let mut flow = vec![0u32; len.saturating_sub(1)];
    for _ in 0..cap {
        let mut best: Option<(Key, usize, usize)> = None;
        let mut best_open: Option<(Key, usize)> = None;
        let mut best_close_run: Option<(Key, usize)> = None;
        let consider = |cand: Key, seller_pos: usize, buyer_pos: usize, best: &mut Option<(Key, usize, usize)>| {
            if best.as_ref().is_none_or(|(k, _, _)| cand.beats(k)) {
                *best = Some((cand, seller_pos, buyer_pos));
            }
        };
        for p in 0..len {
            if !used[p] {
                let it = &items[p];
                if it.seller {
                    if let Some((k, q)) = best_close_run {
                        consider(k + it.key, p, q, &mut best);
                    }
                    if best_open.as_ref().is_none_or(|(k, _)| it.key.beats(k)) {
                        best_open = Some((it.key, p));
                    }
                } else {
                    if let Some((k, q)) = best_open {
                        consider(k + it.key, q, p, &mut best);
                    }
                    if best_close_run.as_ref().is_none_or(|(k, _)| it.key.beats(k)) {
                        best_close_run = Some((it.key, p));
                    }
                }
            }
            if p + 1 < len && flow[p] == 0 {
                best_close_run = None;
            }
        }
        let Some((_, sp, bp)) = best else { break };
        used[sp] = true;
        used[bp] = true;
        if sp < bp {
            for f in &mut flow[sp..bp] {
                *f += 1;
            }
        } else {
            for f in &mut flow[bp..sp] {
                *f -= 1;
            }
        }
    }

    let mut chosen_b = Vec::new();
    let mut chosen_s = Vec::new();
    for (p, it) in items.iter().enumerate() {
        if used[p] {
            if it.seller {
                chosen_s.push(it.id);
            } else {
                chosen_b.push(it.id);
            }
        }
    }
    finish_selection(instance, pool, chosen_b, chosen_s, chooser)
}

/// Top-`i` fee prefix selection: scans `i = 0..=min(A, K, N)` over the
/// fee-sorted transactions (random order within equal fees) and keeps the
/// largest prefix that admits a feasible matching.
///
/// Coincides with [`selfish_select`] whenever the fee ordering is aligned
/// with matchability, as it is at equilibrium; on arbitrary pools a
/// non-prefix selection can carry more fee.
pub fn prefix_select<C: Chooser>(pool: &PendingPool, instance: &MarketInstance, chooser: &mut C) -> Selection {
    let buyers = ranked_candidates(&pool.buyers, chooser);
    let sellers = ranked_candidates(&pool.sellers, chooser);
    let cap = instance.block_size.min(buyers.len()).min(sellers.len());
    let mut best = 0;
    for i in 1..=cap {
        let mut r: Vec<f64> = buyers[..i].iter().map(|&(id, _, _)| instance.buyers[id].utility).collect();
        let mut c: Vec<f64> = sellers[..i].iter().map(|&(id, _, _)| instance.sellers[id].cost).collect();
        if sorted_rank_feasible(&mut r, &mut c) {
            best = i;
        }
    }
    let chosen_b = buyers[..best].iter().map(|e| e.0).collect();
    let chosen_s = sellers[..best].iter().map(|e| e.0).collect();
    finish_selection(instance, pool, chosen_b, chosen_s, chooser)
}

/// Welfare-greedy recommended block: a maximum-gain assignment of pending
/// fee-paying pairs, keeping positive-gain pairs and truncating to the
/// block size by descending gain.
///
/// With identical quantities the rank-ordered pairing (highest utility with
/// lowest cost) is used among the optimal assignments.
pub fn recommend_matching(pool: &PendingPool, instance: &MarketInstance) -> Selection {
    let buyers: Vec<PoolEntry> = pool.buyers.iter().copied().filter(|e| e.fee > 0.0).collect();
    let sellers: Vec<PoolEntry> = pool.sellers.iter().copied().filter(|e| e.fee > 0.0).collect();
    if buyers.is_empty() || sellers.is_empty() {
        return Selection::default();
    }
    let quantity = instance.buyers[buyers[0].id].quantity;
    let homogeneous = buyers.iter().all(|e| instance.buyers[e.id].quantity == quantity)
        && sellers.iter().all(|e| instance.sellers[e.id].quantity == quantity);

    let mut pairs: Vec<(f64, PoolEntry, PoolEntry)> = Vec::new();
    if homogeneous {
        let mut b = buyers.clone();
        let mut s = sellers.clone();
        b.sort_by(|x, y| {
            instance.buyers[y.id]
                .utility
                .total_cmp(&instance.buyers[x.id].utility)
                .then(x.id.cmp(&y.id))
        });
        s.sort_by(|x, y| {
            instance.sellers[x.id]
                .cost
                .total_cmp(&instance.sellers[y.id].cost)
                .then(x.id.cmp(&y.id))
        });
        for (eb, es) in b.iter().zip(&s) {
            let gain = pair_gain(&instance.buyers[eb.id], &instance.sellers[es.id]);
            if gain <= 0.0 {
                break;
            }
            pairs.push((gain, *eb, *es));
        }
    } else {
        let weights: Vec<Vec<f64>> = buyers
            .iter()
            .map(|eb| {
                sellers
                    .iter()
                    .map(|es| {
                        let (bu, se) = (&instance.buyers[eb.id], &instance.sellers[es.id]);
                        if bu.utility >= se.cost {
                            pair_gain(bu, se)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        for (i, j) in max_weight_matching(&weights).into_iter().enumerate() {
            if let Some(j) = j {
                pairs.push((weights[i][j], buyers[i], sellers[j]));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.id.cmp(&y.1.id)));
    }
    pairs.truncate(instance.block_size);

    let mut sel = Selection {
        buyers: pairs.iter().map(|p| p.1.id).collect(),
        sellers: pairs.iter().map(|p| p.2.id).collect(),
        pairs: pairs.iter().map(|p| (p.1.id, p.2.id)).collect(),
        total_fee: pairs.iter().map(|p| p.1.fee + p.2.fee).sum(),
    };
    sel.buyers.sort_unstable();
    sel.sellers.sort_unstable();
    sel.pairs.sort_unstable();
    sel
}

/// Selection of a miner following `policy`.
pub fn select_for_policy<C: Chooser>(
    policy: MinerPolicy,
    pool: &PendingPool,
    instance: &MarketInstance,
    chooser: &mut C,
) -> Selection {
    match policy {
        MinerPolicy::Selfish => selfish_select(pool, instance, chooser),
        MinerPolicy::ProtocolFollowing => recommend_matching(pool, instance),
    }
}

/// Mines one block: every miner proposes a selection, one winner is drawn
/// with probability equal to its power, and its transactions leave the pool.
pub fn run_round<C: Chooser>(pool: &PendingPool, instance: &MarketInstance, chooser: &mut C) -> (RoundRecord, PendingPool) {
    let mut recommended: Option<Selection> = None;
    let mut selections = Vec::with_capacity(instance.miners.len());
    for miner in &instance.miners {
        let sel = match miner.policy {
            MinerPolicy::Selfish => selfish_select(pool, instance, chooser),
            MinerPolicy::ProtocolFollowing => recommended
                .get_or_insert_with(|| recommend_matching(pool, instance))
                .clone(),
        };
        selections.push(sel);
    }
    let powers: Vec<f64> = instance.miners.iter().map(|m| m.power).collect();
    let winner = chooser.weighted(&powers);
    let next = pool.without(&selections[winner]);
    (
        RoundRecord {
            block: pool.round,
            winner,
            selections,
        },
        next,
    )
}

/// Simulates blocks `1..=T` from the initial pool implied by `profile`.
///
/// Stops early once no miner can build a nonempty block, since the pool can
/// no longer change.
pub fn run_horizon<C: Chooser>(instance: &MarketInstance, profile: &FeeProfile, chooser: &mut C) -> MatchTrace {
    let profile = if instance.quantize_fees {
        profile.quantized(instance.fee_unit)
    } else {
        profile.clone()
    };
    let mut pool = PendingPool::initial(&profile);
    let mut trace = MatchTrace::default();
    while pool.round <= instance.horizon && pool.has_fee_paying_pair() {
        let (record, next) = run_round(&pool, instance, chooser);
        if record.selections.iter().all(Selection::is_empty) {
            break;
        }
        trace.rounds.push(record);
        pool = next;
    }
    trace
}
