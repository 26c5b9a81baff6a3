mod common;

use common::*;
use provision::bp::{unit_factor_sweep, user_factor_sweep};
use provision::{UnitId, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn unit_factor_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=8usize {
        for _ in 0..20 {
            let cap = rng.gen_range(2..=20);
            let w_su: Vec<u32> = (0..d).map(|_| rng.gen_range(1..=12)).collect();
            let links: Vec<(f64, Vec<(usize, u32, u32)>)> = w_su.iter().map(|&w| (1.0, vec![(0, 1, w)])).collect();
            let users: Vec<(f64, &[(usize, u32, u32)])> = links.iter().map(|(p, l)| (*p, l.as_slice())).collect();
            let inst = toy(&users, &[cap], 10.0);
            let incoming: Vec<Triple> = (0..d).map(|_| random_triple(&mut rng)).collect();
            for active in [true, false] {
                let got = unit_factor_sweep(&inst, active, UnitId(0), &incoming).unwrap();
                let want = brute_messages(d, &incoming, |l| f64::from(u8::from(unit_allows(l, &w_su, cap, active))));
                assert!(max_diff(&got, &want) < 1e-10, "d={d} cap={cap} w={w_su:?}");
            }
        }
    }
}

#[test]
fn user_factor_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in 1..=8usize {
        for _ in 0..20 {
            // small weight range so ties are common
            let w_us: Vec<u32> = (0..d).map(|_| rng.gen_range(0..=4)).collect();
            let links: Vec<(usize, u32, u32)> = w_us.iter().enumerate().map(|(s, &w)| (s, w, 1)).collect();
            let inst = toy(&[(0.5, &links)], &vec![5; d], 10.0);
            let order: Vec<u32> = inst.user_edges(UserId(0)).iter().map(|&e| inst.edge(e).w_us).collect();
            let incoming: Vec<Triple> = (0..d).map(|_| random_triple(&mut rng)).collect();
            let p: f64 = rng.gen();
            let nu = [1.0 - p, p];
            let got = user_factor_sweep(&inst, UserId(0), &incoming, nu).unwrap();
            let want = brute_messages(d, &incoming, |l| {
                nu[0] * f64::from(u8::from(user_allows(l, &order, false)))
                    + nu[1] * f64::from(u8::from(user_allows(l, &order, true)))
            });
            assert!(max_diff(&got.mu_hat, &want) < 1e-10, "w={order:?}");

            // presence reply
            let mut z = [0.0; 2];
            for labels in labellings(d) {
                let prod: f64 = (0..d).map(|j| incoming[j][labels[j].slot()]).product();
                for (t, zt) in z.iter_mut().enumerate() {
                    if user_allows(&labels, &order, t == 1) {
                        *zt += prod;
                    }
                }
            }
            let s = z[0] + z[1];
            assert!((got.nu_hat[0] - z[0] / s).abs() < 1e-10);
        }
    }
}

#[test]
fn unit_with_three_equal_neighbours() {
    let inst = toy(&[(1.0, &[(0, 7, 3)]), (1.0, &[(0, 7, 3)]), (1.0, &[(0, 7, 3)])], &[5], 10.0);
    let incoming = vec![[1.0 / 3.0; 3]; 3];
    let got = unit_factor_sweep(&inst, true, UnitId(0), &incoming).unwrap();
    let w = [3, 3, 3];
    let want = brute_messages(3, &incoming, |l| f64::from(u8::from(unit_allows(l, &w, 5, true))));
    assert!(max_diff(&got, &want) < 1e-12);
}
