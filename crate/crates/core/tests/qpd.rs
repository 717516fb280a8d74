use alphawealth_core::distributions::{level_sample, TestRequest};
use alphawealth_core::qpd::{stability_bound, z_envelope, QpdConfig, QpdLedgerEntry, QpdState, QpdVariant};
use alphawealth_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(variant: QpdVariant, q: f64, n0: u64) -> QpdConfig {
    QpdConfig::new(variant, 0.05, 0.95, q, n0)
}

fn random_z(rng: &mut ChaCha8Rng) -> TestRequest {
    TestRequest::z(1.0, rng.random_range(0.2..1.5), rng.random_range(0.5..0.99)).unwrap()
}

/// Feeds `tests` random z requests with random p-values through `state`.
fn drive(state: &mut QpdState, rng: &mut ChaCha8Rng, tests: usize) {
    for _ in 0..tests {
        let request = random_z(rng);
        let Ok(quote) = state.quote(&request) else { continue };
        // Rejections are common enough to exercise the reward paths.
        let p = if rng.random_bool(0.3) { rng.random::<f64>() * quote.level } else { rng.random() };
        state.execute(&request, &quote, p).unwrap();
    }
}

/// Minimal cost by direct evaluation of `L(n + c) ≤ W(1 − q^c) + free`.
fn brute_force_cost(state: &QpdState, request: &TestRequest) -> Option<u64> {
    let cfg = &state.config;
    let rate = if state.tests_done == 0 { 0.0 } else { state.rejections as f64 / state.tests_done as f64 };
    let free = if cfg.variant == QpdVariant::AsrOpt { (rate * cfg.alpha).min(state.pool_b) } else { 0.0 };
    (0..=cfg.max_cost).find(|&c| {
        let level = state.pool_a * (1.0 - cfg.q.powi(c as i32)) + free;
        level > 0.0 && level_sample(request, state.n + c).unwrap() <= level * (1.0 + 1e-12)
    })
}

#[test]
fn quotes_match_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for variant in QpdVariant::ALL {
        let mut state = QpdState::new(config(variant, 0.995, 100)).unwrap();
        for _ in 0..40 {
            let request = random_z(&mut rng);
            let quote = state.quote(&request).unwrap();
            let oracle = brute_force_cost(&state, &request).unwrap();
            assert!(quote.cost == oracle || quote.cost + 1 == oracle, "{variant:?}: {} vs {oracle}", quote.cost);
            assert!(QpdState::power_guarantee_check(&request, &quote));
            let p = rng.random::<f64>();
            state.execute(&request, &quote, p).unwrap();
        }
    }
}

#[test]
fn first_database_experiment_quote_matches_scan() {
    let request = TestRequest::t(0.1, 0.95).unwrap();
    for variant in QpdVariant::ALL {
        let state = QpdState::new(config(variant, 0.999, 2000)).unwrap();
        let quote = state.quote(&request).unwrap();
        let scan = (0..=state.config.max_cost)
            .find(|&c| level_sample(&request, 2000 + c).unwrap() <= state.allocation_for_cost(c))
            .unwrap();
        assert_eq!(quote.cost, scan);
        assert!(QpdState::power_guarantee_check(&request, &quote));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A request whose level-sample function is pointwise below another's is
    /// never quoted a higher cost.
    #[test]
    fn fairness(seed in any::<u64>(), history in 0usize..15, variant in 0usize..3,
                effect in 0.2f64..1.2, bump in 0.0f64..0.5, power in 0.5f64..0.95, power_gap in 0.0f64..0.04) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = QpdState::new(config(QpdVariant::ALL[variant], 0.995, 50)).unwrap();
        drive(&mut state, &mut rng, history);
        let easy = TestRequest::z(1.0, effect + bump, power).unwrap();
        let hard = TestRequest::z(1.0, effect, power + power_gap).unwrap();
        let (a, b) = (state.quote(&easy), state.quote(&hard));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!(a.cost <= b.cost),
            (Err(_), Ok(_)) => prop_assert!(false, "easier request infeasible"),
            _ => {}
        }
    }

    #[test]
    fn wealth_floors_hold(seed in any::<u64>(), tests in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for variant in QpdVariant::ALL {
            let mut state = QpdState::new(config(variant, 0.995, 20)).unwrap();
            drive(&mut state, &mut rng, tests);
            let floor = state.wealth_floor();
            prop_assert!(floor > 0.0);
            match variant {
                QpdVariant::As => {
                    let exact = 0.05 * 0.995f64.powf((state.n - 20) as f64);
                    prop_assert!((state.pool_a - exact).abs() <= 1e-15 * exact);
                }
                QpdVariant::Asr => prop_assert!(state.pool_a >= floor * (1.0 - 1e-12)),
                QpdVariant::AsrOpt => {
                    prop_assert_eq!(state.pool_a, floor);
                    prop_assert!(state.pool_b >= 0.0);
                }
            }
        }
    }

    /// Any execution that leaves the wealth no lower cannot raise the next
    /// quote for the same request.
    #[test]
    fn asr_quote_does_not_rise_after_wealth_gain(seed in any::<u64>(), tests in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = QpdState::new(config(QpdVariant::Asr, 0.995, 50)).unwrap();
        drive(&mut state, &mut rng, tests);
        let request = random_z(&mut rng);
        let before = state.quote(&request).unwrap();
        let wealth = state.wealth();
        state.execute(&request, &before, 0.0).unwrap();
        if state.wealth() >= wealth {
            prop_assert!(state.quote(&request).unwrap().cost <= before.cost);
        }
    }
}

/// Quotes for envelope-certified z requests stay below `ceil(c*)` over 10³
/// random request sequences.
#[test]
fn stability_bound_caps_quotes() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seq in 0..1000 {
        let variant = QpdVariant::ALL[seq % 3];
        let q = if seq % 2 == 0 { 0.99 } else { 0.995 };
        let mut state = QpdState::new(config(variant, q, rng.random_range(1..300))).unwrap();
        for _ in 0..8 {
            let request = random_z(&mut rng);
            let b = z_envelope(&request, q).unwrap();
            let c_star = stability_bound(&state.config, b).unwrap();
            assert!(c_star > 0.0);
            let quote = state.quote(&request).unwrap();
            assert!(quote.cost <= c_star.ceil() as u64, "cost {} above c* {c_star}", quote.cost);
            let capped = state.quote_with(&request, Some(b)).unwrap();
            assert_eq!(capped.cost, quote.cost);
            assert_eq!(capped.stability_bound, Some(c_star));
            let p = if rng.random_bool(0.2) { 0.0 } else { rng.random() };
            state.execute(&request, &quote, p).unwrap();
        }
    }
}

#[test]
fn z_envelope_dominates_level_sample() {
    let request = TestRequest::z(1.0, 0.3, 0.9).unwrap();
    let q: f64 = 0.99;
    let b = z_envelope(&request, q).unwrap();
    for n in 1..4000u64 {
        let l = level_sample(&request, n).unwrap();
        assert!(l <= b * q.powf(n as f64) * (1.0 + 1e-12), "n={n}");
    }
    let slow = TestRequest::z(1.0, 0.01, 0.9).unwrap();
    assert!(z_envelope(&slow, q).is_err());
}

#[test]
fn replay_reproduces_state_from_json_ledger() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for variant in QpdVariant::ALL {
        let mut state = QpdState::new(config(variant, 0.995, 100)).unwrap();
        drive(&mut state, &mut rng, 50);
        let lines: Vec<String> = state.ledger.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        let ledger: Vec<QpdLedgerEntry> = lines.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
        let replayed = QpdState::replay(state.config, &ledger).unwrap();
        assert_eq!(replayed, state);

        let mut tampered = ledger.clone();
        tampered[10].p_value = if tampered[10].rejected { 1.0 } else { 0.0 };
        assert!(matches!(QpdState::replay(state.config, &tampered), Err(Error::ReplayDiverged { .. })));
    }
}

#[test]
fn as_variant_wealth_is_exponential_in_samples() {
    let request = TestRequest::z(1.0, 0.5, 0.9).unwrap();
    let mut state = QpdState::new(config(QpdVariant::As, 0.999, 1)).unwrap();
    for _ in 0..20 {
        state.quote_and_execute(&request, 0.01).unwrap();
        let exact = 0.05 * 0.999f64.powf((state.n - 1) as f64);
        assert!((state.wealth() - exact).abs() <= 1e-15 * exact);
    }
}
