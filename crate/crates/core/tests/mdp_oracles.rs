use pnlsvi::experiment::scenario::{random_mdp, two_state_instance};
use pnlsvi::mdp::{occupancy_measure, optimal_values, policy_value, sample_index, EpisodicMdp, Policy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn all_deterministic_policies(mdp: &EpisodicMdp) -> Vec<Policy> {
    let (sn, an, hn) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let slots = sn * hn;
    let total = an.pow(slots as u32);
    (0..total)
        .map(|mut code| {
            let mut actions = vec![vec![0; sn]; hn];
            for row in actions.iter_mut() {
                for a in row.iter_mut() {
                    *a = code % an;
                    code /= an;
                }
            }
            Policy::deterministic(an, &actions).unwrap()
        })
        .collect()
}

#[test]
fn optimal_values_match_policy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mdp = random_mdp(2, 2, 3, &mut rng).unwrap();
        let opt = optimal_values(&mdp);
        for s in 0..2 {
            let best = all_deterministic_policies(&mdp)
                .iter()
                .map(|pi| policy_value(&mdp, pi).unwrap().v[0][s])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - opt.values.v[0][s]).abs() < 1e-12);
        }
    }
}

#[test]
fn two_state_optimal_policy_attains_optimum() {
    let mdp = two_state_instance().unwrap();
    let opt = optimal_values(&mdp);
    let v = policy_value(&mdp, &opt.policy).unwrap();
    for h in 0..=2 {
        for s in 0..2 {
            assert!((v.v[h][s] - opt.values.v[h][s]).abs() < 1e-12);
        }
    }
    assert_eq!(opt.values.v[2], vec![0.0, 0.0]);
}

/// Monte-Carlo return and visit counts of the uniform policy.
#[test]
fn uniform_policy_matches_monte_carlo() {
    let mdp = two_state_instance().unwrap();
    let pi = Policy::uniform(2, 2, 2);
    let exact = policy_value(&mdp, &pi).unwrap();
    let v0: f64 = mdp.initial_distribution().iter().zip(&exact.v[0]).map(|(p, v)| p * v).sum();
    let occ = occupancy_measure(&mdp, &pi).unwrap();

    let n = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut visits = [[0usize; 4]; 2];
    for _ in 0..n {
        let mut s = sample_index(&mut rng, mdp.initial_distribution());
        let mut ret = 0.0;
        for (h, row) in visits.iter_mut().enumerate() {
            let a = sample_index(&mut rng, pi.distribution(h, s));
            row[s * 2 + a] += 1;
            ret += mdp.reward(h, s, a);
            s = sample_index(&mut rng, mdp.transition_row(h, s, a));
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - v0).abs() <= 3.0 * se, "mc {mean} vs exact {v0} (se {se})");

    for (h, row) in visits.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let p = occ.stage(h).cell(c);
            let freq = count as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se, "h {h} cell {c}: {freq} vs {p}");
        }
    }
}

#[test]
fn rejects_malformed_instances() {
    // transition row with mass 0.9
    let bad = EpisodicMdp::new(1, 1, 1, vec![0.5], vec![0.9], vec![1.0]);
    assert!(bad.is_err());
    let bad_reward = EpisodicMdp::new(1, 1, 1, vec![1.5], vec![1.0], vec![1.0]);
    assert!(bad_reward.is_err());
    let bad_init = EpisodicMdp::new(2, 1, 1, vec![0.5, 0.5], vec![1.0, 0.0, 0.0, 1.0], vec![0.6, 0.6]);
    assert!(bad_init.is_err());
}

#[test]
fn document_round_trip() {
    let mdp = two_state_instance().unwrap();
    let json = serde_json::to_string(&mdp).unwrap();
    let back: EpisodicMdp = serde_json::from_str(&json).unwrap();
    assert_eq!(back, mdp);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_and_occupancy_invariants(seed in any::<u64>(), sn in 1usize..4, an in 1usize..4, hn in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(sn, an, hn, &mut rng).unwrap();
        let opt = optimal_values(&mdp);
        let uniform = Policy::uniform(sn, an, hn);
        let val = policy_value(&mdp, &uniform).unwrap();
        for h in 0..hn {
            for s in 0..sn {
                let v = opt.values.v[h][s];
                prop_assert!((-1e-12..=(hn - h) as f64 + 1e-12).contains(&v));
                prop_assert!(val.v[h][s] <= v + 1e-12);
            }
        }
        let occ = occupancy_measure(&mdp, &uniform).unwrap();
        for h in 0..hn {
            let total: f64 = occ.stage(h).values().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(occ.stage(h).values().iter().all(|&d| d >= 0.0));
        }
        for h in 0..hn {
            let next = &opt.values.v[h + 1];
            let var = mdp.conditional_variance(h, next).unwrap();
            prop_assert!(var.values().iter().all(|&x| x >= -1e-12));
            let cap = (((hn - h) as f64).powi(2)).max(1.0);
            let tv = mdp.truncated_variance(h, next).unwrap();
            prop_assert!(tv.values().iter().all(|&x| (1.0..=cap).contains(&x)));
            // second moment dominates the squared mean
            let m1 = mdp.bellman_apply(h, next).unwrap();
            let m2 = mdp.bellman_second_moment(h, next).unwrap();
            for c in 0..m1.num_cells() {
                prop_assert!(m2.cell(c) + 1e-12 >= m1.cell(c).powi(2));
            }
        }
    }

    #[test]
    fn epsilon_mixture_rows_are_distributions(eps in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(3, 3, 2, &mut rng).unwrap();
        let mix = Policy::epsilon_mixture(&optimal_values(&mdp).policy, eps).unwrap();
        for h in 0..2 {
            for s in 0..3 {
                let row = mix.distribution(h, s);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&p| p >= eps / 3.0 - 1e-12));
            }
        }
    }
}
