use bbob_core::equilibrium::{g, msne, MixedStrategy, Role};
use bbob_core::market::{
    buyer_payoff, pair_surplus, seller_payoff, Buyer, FeeProfile, MarketInstance, Miner, MinerPolicy, Seller,
};
use bbob_core::mechanism::{optimal_block_size_distributional, solve_eta, MechanismConfig, ValueDistribution};
use bbob_core::miner::{run_horizon, run_round, PendingPool};
use bbob_core::random::SeededChooser;
use bbob_core::welfare::social_welfare;
use proptest::prelude::*;

fn unit_instance() -> impl Strategy<Value = MarketInstance> {
    (
        prop::collection::vec(0.0..=1.0f64, 1..8),
        prop::collection::vec(0.0..=1.0f64, 1..8),
        1usize..5,
        0.0..0.1f64,
    )
        .prop_map(|(r, c, a, d)| MarketInstance::unit(&r, &c, a, d).unwrap())
}

fn mixed_strategy() -> impl Strategy<Value = MixedStrategy> {
    (2usize..60, 1usize..20, 0.001..0.5f64, 0.0..0.5f64).prop_map(|(i, a, d, sigma)| {
        let lower = sigma + 1e-6;
        MixedStrategy {
            role: Role::Buy,
            lower,
            upper: lower + (i.div_ceil(a) - 1) as f64 * d,
            contenders: i,
            block_size: a,
            delay_cost: d,
            mixers: (0..i).collect(),
            non_mixer_fee: sigma,
        }
    })
}

proptest! {
    #[test]
    fn surplus_split_is_exact(r in 0.0..=1.0f64, c in 0.0..=1.0f64, b in 1.0..3.0f64, q in 1.0..3.0f64) {
        let buyer = Buyer { id: 0, utility: r, quantity: b };
        let seller = Seller { id: 0, cost: c, quantity: q };
        let s = pair_surplus(&buyer, &seller);
        prop_assert_eq!(s.quantity, b.min(q));
        prop_assert!((s.buy + s.sell - b.min(q) * (r - c)).abs() < 1e-15);
        prop_assert!((s.buy - s.sell).abs() < 1e-15);
    }

    #[test]
    fn payoff_decomposition(r in 0.5..=1.0f64, c in 0.0..0.5f64, fb in 0.0..0.2f64, fs in 0.0..0.2f64,
                            lb in 1usize..5, ls in 1usize..5, d in 0.0..0.1f64) {
        let buyer = Buyer { id: 0, utility: r, quantity: 1.0 };
        let seller = Seller { id: 0, cost: c, quantity: 1.0 };
        let total = buyer_payoff(&buyer, fb, Some((lb, &seller)), d)
            + seller_payoff(&seller, fs, Some((ls, &buyer)), d) + fb + fs;
        let expect = (r - c) - (lb - 1) as f64 * d - (ls - 1) as f64 * d;
        prop_assert!((total - expect).abs() < 1e-12);
    }

    #[test]
    fn g_is_monotone(i in 2usize..40, a in 1usize..10, d in 0.01..1.0f64, f in 0.0..1.0f64,
                     p in 0.0..0.95f64) {
        prop_assert!(g(p, f + 0.01, i, a, d) > g(p, f, i, a, d));
        if i > a {
            prop_assert!(g(p + 0.05, f, i, a, d) > g(p, f, i, a, d));
        }
    }

    #[test]
    fn cdf_satisfies_indifference(s in mixed_strategy()) {
        prop_assert_eq!(s.cdf(s.lower), if s.upper > s.lower { 0.0 } else { 1.0 });
        prop_assert_eq!(s.cdf(s.upper), 1.0);
        prop_assert!((s.upper - s.lower - (s.contenders.div_ceil(s.block_size) - 1) as f64 * s.delay_cost).abs() < 1e-12);
        let target = s.target();
        let mut prev = 0.0;
        for j in 1..=20 {
            let f = s.lower + (s.upper - s.lower) * j as f64 / 21.0;
            let big_f = s.cdf(f);
            prop_assert!(big_f >= prev);
            prev = big_f;
            let lhs = g(1.0 - big_f, f, s.contenders, s.block_size, s.delay_cost);
            prop_assert!((lhs - target).abs() < 1e-8, "f={} F={} lhs={} target={}", f, big_f, lhs, target);
        }
    }

    #[test]
    fn quantile_inverts_cdf(s in mixed_strategy(), u in 0.001..0.999f64) {
        let f = s.quantile(u);
        prop_assert!(f >= s.lower && f <= s.upper);
        let level = g(1.0 - u, f, s.contenders, s.block_size, s.delay_cost);
        prop_assert!((level - s.target()).abs() < 1e-12);
        // F itself is ill-conditioned where g is flat in p; the fee is not
        if s.upper > s.lower {
            prop_assert!((s.quantile(s.cdf(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_invariants(inst in unit_instance(), seed in 0u64..1000, fees in prop::collection::vec(0.0..1.0f64, 16)) {
        let k = inst.num_buyers();
        let n = inst.num_sellers();
        let profile = FeeProfile::new(fees[..k].to_vec(), fees[8..8 + n].to_vec()).unwrap();
        let inst = inst.with_miners(vec![
            Miner::selfish(0, 0.6),
            Miner { id: 1, power: 0.4, policy: MinerPolicy::ProtocolFollowing },
        ]);
        let trace = run_horizon(&inst, &profile, &mut SeededChooser::new(seed));
        let mut seen_b = vec![false; k];
        let mut seen_s = vec![false; n];
        prop_assert!(trace.rounds.len() <= inst.horizon);
        for round in &trace.rounds {
            let sel = round.winning_selection();
            prop_assert!(sel.pairs.len() <= inst.block_size);
            for &(b, s) in &sel.pairs {
                prop_assert!(!seen_b[b] && !seen_s[s]);
                seen_b[b] = true;
                seen_s[s] = true;
                prop_assert!(inst.buyers[b].utility >= inst.sellers[s].cost);
                prop_assert!(profile.buy[b] > 0.0 && profile.sell[s] > 0.0);
            }
        }
        let w = social_welfare(&inst, &trace, &profile);
        prop_assert!((w.sw - (w.matched_surplus - w.delay)).abs() < 1e-9);
    }

    #[test]
    fn selfish_miners_agree_on_fee(inst in unit_instance(), seed in 0u64..1000, fees in prop::collection::vec(0.0..1.0f64, 16)) {
        let k = inst.num_buyers();
        let n = inst.num_sellers();
        let profile = FeeProfile::new(fees[..k].to_vec(), fees[8..8 + n].to_vec()).unwrap();
        let inst = inst.with_miners(vec![Miner::selfish(0, 0.5), Miner::selfish(1, 0.3), Miner::selfish(2, 0.2)]);
        let trace = run_horizon(&inst, &profile, &mut SeededChooser::new(seed));
        for round in &trace.rounds {
            let fees: Vec<f64> = round.selections.iter().map(|s| s.total_fee).collect();
            prop_assert!(fees.iter().all(|f| (f - fees[0]).abs() < 1e-12));
            // distinct continuous fees: identical id sets
            prop_assert!(round.selections.iter().all(|s| s.buyers == round.selections[0].buyers));
        }
    }

    #[test]
    fn pool_shrinks_with_every_nonempty_block(inst in unit_instance(), seed in 0u64..1000,
                                              fees in prop::collection::vec(0.0..1.0f64, 16)) {
        let k = inst.num_buyers();
        let n = inst.num_sellers();
        let profile = FeeProfile::new(fees[..k].to_vec(), fees[8..8 + n].to_vec()).unwrap();
        let mut pool = PendingPool::initial(&profile);
        let mut chooser = SeededChooser::new(seed);
        for _ in 0..inst.horizon {
            let (round, next) = run_round(&pool, &inst, &mut chooser);
            let landed = round.winning_selection().len();
            prop_assert_eq!(next.len() + 2 * landed, pool.len());
            if landed == 0 {
                break;
            }
            pool = next;
        }
    }

    #[test]
    fn eta_root_and_monotone_block_size(k in 10usize..2000, n in 10usize..2000, psi in 0.1..0.95f64,
                                        a in 0.5..4.0f64, b in 0.5..4.0f64) {
        let mut c = MechanismConfig::uniform(k, n, psi, 0.0);
        c.utility = ValueDistribution::Beta { alpha: a, beta: b };
        let eta = solve_eta(&c).unwrap();
        let h = n as f64 * c.cost.cdf(eta) - k as f64 * (1.0 - c.utility.cdf(eta));
        prop_assert!(h.abs() <= 1e-9 * k.max(n) as f64);
    }
}

#[test]
fn block_size_nondecreasing_over_n_grid() {
    let mut prev = 0;
    for n in (10..=5000).step_by(10) {
        let a = optimal_block_size_distributional(&MechanismConfig::uniform(n, n, 0.85, 0.0)).unwrap();
        assert!(a >= prev, "N={n}: {a} < {prev}");
        prev = a;
    }
}

#[test]
fn msne_bounds_hold_on_random_instances() {
    let mut rng = bbob_core::random::rng_from(11);
    use rand::Rng;
    for _ in 0..200 {
        let k = rng.random_range(2..20);
        let n = rng.random_range(2..20);
        let r: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let inst = MarketInstance::unit(&r, &c, 1, rng.random_range(0.0..0.05)).unwrap();
        if let Ok(eq) = msne(&inst) {
            for s in [&eq.buy, &eq.sell] {
                assert!(s.lower <= s.upper);
                assert!(s.non_mixer_fee >= 0.0);
                assert_eq!(s.mixers.len(), s.contenders);
            }
        }
    }
}
