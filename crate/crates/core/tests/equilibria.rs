mod common;

use common::count_y_solutions;
use provision::enumerate::{enumerate_nash, EnumerationLimits};
use provision::game::{best_response_dynamics, is_nash, y_to_z, z_to_y, DynamicsOutcome};
use provision::{generate_instance, GeneratorParams, Instance, PresencePattern, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s1(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_units = [4, 8, 12][rng.gen_range(0..3)];
    let p = GeneratorParams {
        n_users: 12,
        n_units,
        k: rng.gen_range(2..=4),
        capacity: [5, 8, 11][rng.gen_range(0..3)],
        w_max: 10,
        omega: 10.0,
        alpha: 0.0,
        seed,
    };
    generate_instance(&p).unwrap()
}

fn random_x_t(inst: &Instance, seed: u64) -> (ServiceConfig, PresencePattern) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ServiceConfig::new((0..inst.n_units()).map(|_| rng.gen_bool(0.75)).collect());
    let t = PresencePattern::sample(inst, &mut rng);
    (x, t)
}

#[test]
fn strategy_and_label_counts_agree() {
    for seed in 0..40 {
        let inst = s1(seed);
        let (x, t) = random_x_t(&inst, seed + 500);
        let ys = enumerate_nash(&inst, &x, &t, EnumerationLimits::default()).unwrap();
        assert_eq!(ys.len() as u64, count_y_solutions(&inst, &x, &t), "seed {seed}");
    }
}

#[test]
fn enumerated_labellings_round_trip_through_profiles() {
    for seed in 0..10 {
        let inst = s1(seed);
        let (x, t) = random_x_t(&inst, seed + 900);
        for y in enumerate_nash(&inst, &x, &t, EnumerationLimits::default()).unwrap() {
            let z = y_to_z(&inst, &y);
            assert!(is_nash(&inst, &x, &t, &z).unwrap());
            assert_eq!(z_to_y(&inst, &x, &t, &z).unwrap(), y);
        }
    }
}

#[test]
fn best_response_dynamics_lands_on_an_enumerated_equilibrium() {
    for seed in 0..10 {
        let inst = s1(seed);
        let (x, t) = random_x_t(&inst, seed + 1300);
        let all = enumerate_nash(&inst, &x, &t, EnumerationLimits::default()).unwrap();
        match best_response_dynamics(&inst, &x, &t, seed, 1000).unwrap() {
            DynamicsOutcome::Converged { profile, .. } => {
                let y = z_to_y(&inst, &x, &t, &profile).unwrap();
                assert!(all.contains(&y), "seed {seed}");
            }
            DynamicsOutcome::NoConvergence => panic!("no convergence for seed {seed}"),
        }
    }
}

#[test]
fn empty_edge_set_has_one_equilibrium() {
    let inst = Instance::new(
        vec![provision::instance::User { x: 0.0, y: 0.0, p: 0.5 }],
        vec![provision::instance::Unit { x: 0.0, y: 0.0, capacity: 3, cost: 1.0 }],
        vec![],
        10.0,
        0.0,
        10,
    )
    .unwrap();
    let x = ServiceConfig::all_on(1);
    let t = PresencePattern::all_present(1);
    assert_eq!(enumerate_nash(&inst, &x, &t, EnumerationLimits::default()).unwrap().len(), 1);
    assert_eq!(count_y_solutions(&inst, &x, &t), 1);
}
