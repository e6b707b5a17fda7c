//! Properties of the per-epoch iteration, the schedule algebra, and the
//! matrix-exponential shortcut.

use gapdyn_core::discrete::{
    aggregate_matrix, approx_final_state, approx_product_matrix, build_step_matrix,
    compare_schedules, exact_product_matrix, simulate_discrete, Schedule,
};
use gapdyn_core::{DynamicsParams, InitialState};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn draw_small(rng: &mut ChaCha8Rng) -> (DynamicsParams, InitialState) {
    let beta = rng.gen_range(0.005..0.08);
    let alpha = beta + rng.gen_range(0.02..0.2);
    let k = rng.gen_range(0.05..0.4);
    let b = rng.gen_range(0.0..0.05);
    let gamma = rng.gen_range(0.0..0.5);
    let params = DynamicsParams::new(alpha, beta, k, b)
        .unwrap()
        .with_gamma(gamma)
        .unwrap();
    let u_v0 = rng.gen_range(0.5..2.0);
    let init = InitialState::new(u_v0 + rng.gen_range(0.5..3.0), u_v0).unwrap();
    (params, init)
}

#[test]
fn zero_boost_iteration_is_plain_euler() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (p0, init) = draw_small(&mut rng);
        let params = DynamicsParams::new(p0.alpha, p0.beta, p0.k, p0.b).unwrap();
        let schedule = Schedule::self_improvement(12).unwrap();
        let run = simulate_discrete(&params, &init, &schedule).unwrap();
        let (mut u_s, mut u_v) = (init.u_s0, init.u_v0);
        for r in &run.records {
            let e = params.k * (u_s - u_v) - params.b;
            u_s -= params.alpha * e;
            u_v -= params.beta * e;
            assert!((r.post_u_s - u_s).abs() <= 1e-12);
            assert!((r.post_u_v - u_v).abs() <= 1e-12);
        }
    }
}

#[test]
fn homogeneous_coordinate_survives_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let (params, init) = draw_small(&mut rng);
        let total = rng.gen_range(0.0..1.0);
        let schedule = Schedule::uniform(10, total).unwrap();
        let v = approx_final_state(&params, &init, &schedule).unwrap();
        assert_eq!(v.one, 1.0);
        let exact = exact_product_matrix(&params, &schedule).unwrap();
        assert_eq!(exact.entries()[2], [0.0, 0.0, 1.0]);
        let approx = approx_product_matrix(&params, &schedule).unwrap();
        assert_eq!(approx.entries()[2], [0.0, 0.0, 1.0]);
    }
}

#[test]
fn aggregate_depends_only_on_the_stated_total() {
    let params = DynamicsParams::new(0.2, 0.1, 0.5, 0.05)
        .unwrap()
        .with_gamma(0.5)
        .unwrap();
    // Same horizon and total, arbitrarily different placement: the aggregate
    // must agree bit for bit, including when per-epoch sums would drift.
    let shapes = [
        Schedule::early(10, 1.0).unwrap(),
        Schedule::uniform(10, 1.0).unwrap(),
        Schedule::late(10, 1.0, 8).unwrap(),
        Schedule::custom(vec![0.1, 0.2, 0.0, 0.3, 0.05, 0.05, 0.1, 0.1, 0.05, 0.05], 1.0)
            .unwrap(),
    ];
    let reference = aggregate_matrix(&params, &shapes[0]).unwrap();
    for s in &shapes[1..] {
        let m = aggregate_matrix(&params, s).unwrap();
        assert_eq!(m.entries(), reference.entries());
    }
}

#[test]
#[allow(clippy::needless_range_loop)] // paired-index matrix walks
fn matrix_exponential_matches_plain_series() {
    // Independent oracle: unscaled 60-term Taylor sum on matrices with
    // moderate norm, computed here with no squaring tricks.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let (params, _) = draw_small(&mut rng);
        let schedule = Schedule::uniform(10, rng.gen_range(0.2..1.0)).unwrap();
        let agg = aggregate_matrix(&params, &schedule).unwrap();
        let m: Vec<Vec<f64>> = agg
            .entries()
            .iter()
            .map(|row| row.iter().map(|&x| -x).collect())
            .collect();

        let mut series = [[0.0_f64; 3]; 3];
        let mut term = [[0.0_f64; 3]; 3];
        for i in 0..3 {
            series[i][i] = 1.0;
            term[i][i] = 1.0;
        }
        for n in 1..=60 {
            let mut next = [[0.0_f64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = 0.0;
                    for l in 0..3 {
                        acc += term[i][l] * m[l][j];
                    }
                    next[i][j] = acc / n as f64;
                }
            }
            term = next;
            for i in 0..3 {
                for j in 0..3 {
                    series[i][j] += term[i][j];
                }
            }
        }

        let fast = approx_product_matrix(&params, &schedule).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (fast.entries()[i][j] - series[i][j]).abs() <= 1e-10,
                    "entry ({i},{j}): {} vs {}",
                    fast.entries()[i][j],
                    series[i][j]
                );
            }
        }
    }
}

#[test]
fn gap_contracts_geometrically_without_boost() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let (p0, init) = draw_small(&mut rng);
        let params = DynamicsParams::new(p0.alpha, p0.beta, p0.k, p0.b).unwrap();
        let factor = 1.0 - params.decay_rate();
        assert!(factor > 0.0 && factor < 1.0);
        let g_inf = params.b / params.k;
        let run =
            simulate_discrete(&params, &init, &Schedule::self_improvement(20).unwrap()).unwrap();
        assert!(!run.stability_warning);
        let mut prev = (init.gap() - g_inf).abs();
        for r in &run.records {
            let excess = (r.post_u_s - r.post_u_v - g_inf).abs();
            assert!(excess <= prev * factor + 1e-12);
            prev = excess;
        }
    }
}

#[test]
fn shortcut_tracks_exact_product_for_small_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..50 {
        let (params, init) = draw_small(&mut rng);
        let schedule = Schedule::uniform(10, rng.gen_range(0.2..1.0)).unwrap();
        let run = simulate_discrete(&params, &init, &schedule).unwrap();
        let (u_s, u_v) = run.final_state().unwrap();
        let approx = approx_final_state(&params, &init, &schedule).unwrap();
        // Small per-epoch changes keep the exponential shortcut within a few
        // percent of the exact product over ten epochs.
        assert!((approx.u_s - u_s).abs() < 0.05 * (1.0 + u_s.abs()));
        assert!((approx.u_v - u_v).abs() < 0.05 * (1.0 + u_v.abs()));
    }
}

#[test]
fn comparison_outcomes_are_consistent() {
    let params = DynamicsParams::new(0.2, 0.1, 0.5, 0.05)
        .unwrap()
        .with_gamma(0.5)
        .unwrap();
    let init = InitialState::new(3.0, 1.0).unwrap();
    let early = Schedule::early(10, 1.0).unwrap();
    let uniform = Schedule::uniform(10, 1.0).unwrap();
    let late = Schedule::late(10, 1.0, 8).unwrap();
    let cmp = compare_schedules(
        &params,
        &init,
        &[("early", &early), ("uniform", &uniform), ("late", &late)],
    )
    .unwrap();
    assert_eq!(cmp.outcomes.len(), 3);
    let us: Vec<f64> = cmp.outcomes.iter().map(|o| o.exact_u_s).collect();
    let spread = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - us.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(cmp.spread_exact_u_s, spread);
    for o in &cmp.outcomes {
        let d_s = (o.exact_u_s - o.approx_u_s).abs();
        let d_v = (o.exact_u_v - o.approx_u_v).abs();
        assert_eq!(o.discrepancy, d_s.max(d_v));
        assert_eq!(o.total_eta, 1.0);
    }
    // Verified independently by exact enumeration: every full-budget
    // schedule ends strictly below the zero-allocation baseline.
    for o in &cmp.outcomes {
        assert!(o.exact_u_s < cmp.baseline_u_s);
    }
}

#[test]
fn step_matrix_reproduces_one_iteration_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..100 {
        let (params, init) = draw_small(&mut rng);
        let eta = rng.gen_range(0.0..1.0);
        let schedule = Schedule::custom(vec![eta], eta).unwrap();
        let run = simulate_discrete(&params, &init, &schedule).unwrap();
        let m = build_step_matrix(&params, eta).unwrap().entries().to_owned();
        let u0 = [init.u_v0, init.u_s0, 1.0];
        let mut u1 = [0.0_f64; 3];
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += (f64::from(u8::from(i == j)) - m[i][j]) * u0[j];
            }
            u1[i] = acc;
        }
        let r = &run.records[0];
        assert!((u1[1] - r.post_u_s).abs() < 1e-12, "{} {}", u1[1], r.post_u_s);
        assert!((u1[0] - r.post_u_v).abs() < 1e-12);
        assert_eq!(u1[2], 1.0);
    }
}
