//! Structural properties of the closed form and its agreement with direct
//! numerical integration.

use gapdyn_core::dynamics::{
    closed_form_state, derive_constants, epochs_to_tolerance, integrate_ode,
    sensitivity_final_to_gap,
};
use gapdyn_core::{DynamicsParams, InitialState};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn draw_params(rng: &mut ChaCha8Rng) -> (DynamicsParams, InitialState) {
    let beta = rng.gen_range(0.0..1.0);
    let alpha = beta + rng.gen_range(0.2..1.5);
    let k = rng.gen_range(0.5..1.4);
    let b = rng.gen_range(0.0..0.4);
    let params = DynamicsParams::new(alpha, beta, k, b).unwrap();
    let u_v0 = rng.gen_range(-1.0..2.0);
    let g0 = b / k + rng.gen_range(0.3..3.0);
    let init = InitialState::new(u_v0 + g0, u_v0).unwrap();
    (params, init)
}

#[test]
fn closed_form_matches_rk4_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let (params, init) = draw_params(&mut rng);
        let traj = integrate_ode(&params, &init, 10.0, 1e-2).unwrap();
        let mut worst = 0.0_f64;
        for p in traj.points() {
            let exact = closed_form_state(&params, &init, p.t).unwrap();
            worst = worst.max((p.u_s - exact.u_s).abs());
            worst = worst.max((p.u_v - exact.u_v).abs());
        }
        assert!(worst < 1e-7, "worst deviation {worst}");
    }
}

#[test]
fn rk4_error_falls_at_least_eight_fold_per_halving() {
    let params = DynamicsParams::new(2.0, 1.0, 1.0, 0.5).unwrap();
    let init = InitialState::new(3.0, 1.0).unwrap();
    let max_err = |step: f64| {
        let traj = integrate_ode(&params, &init, 2.0, step).unwrap();
        traj.points()
            .iter()
            .map(|p| {
                let exact = closed_form_state(&params, &init, p.t).unwrap();
                (p.u_s - exact.u_s).abs().max((p.u_v - exact.u_v).abs())
            })
            .fold(0.0_f64, f64::max)
    };
    let coarse = max_err(0.02);
    let fine = max_err(0.01);
    assert!(coarse > 0.0 && fine > 0.0);
    assert!(
        coarse / fine >= 8.0,
        "halving gained only {:.2}x",
        coarse / fine
    );
}

#[test]
fn both_channels_decay_monotonically_toward_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (params, init) = draw_params(&mut rng);
        let c = derive_constants(&params, &init).unwrap();
        let mut prev = closed_form_state(&params, &init, 0.0).unwrap();
        for i in 1..=40 {
            let s = closed_form_state(&params, &init, i as f64 * 0.25).unwrap();
            assert!(s.u_s < prev.u_s + 1e-12);
            assert!(s.u_v <= prev.u_v + 1e-12);
            assert!(s.gap <= prev.gap + 1e-12);
            assert!(s.gap >= c.g_inf - 1e-9);
            // E = k*gap - b must equal the decaying form k*delta*exp(-lambda t).
            assert!((s.energy - (params.k * s.gap - params.b)).abs() < 1e-9);
            prev = s;
        }
        // The excess gap at the last sample is exactly delta * exp(-lambda t).
        let want = c.delta * (-c.lambda * 10.0).exp();
        assert!((prev.gap - c.g_inf - want).abs() < 1e-9);
    }
}

#[test]
fn tolerance_budget_lands_exactly_on_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (params, init) = draw_params(&mut rng);
        let c = derive_constants(&params, &init).unwrap();
        let eps = rng.gen_range(1e-3..0.1);
        let t_star = epochs_to_tolerance(&params, &init, eps).unwrap();
        assert!(t_star >= 0.0);
        let at = closed_form_state(&params, &init, t_star).unwrap();
        assert!(
            ((at.gap - c.g_inf).abs() - eps).abs() < 1e-9,
            "residual gap {} vs eps {eps}",
            at.gap - c.g_inf
        );
        let after = closed_form_state(&params, &init, t_star + 1e-6).unwrap();
        assert!((after.gap - c.g_inf).abs() < eps);
    }
}

#[test]
fn final_solver_sensitivity_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let (params, init) = draw_params(&mut rng);
        let analytic = sensitivity_final_to_gap(&params).unwrap();
        // Widen the gap by moving the verifier: u_s0 fixed, G_0 = u_s0 - u_v0.
        let h = 1e-5;
        let up = derive_constants(
            &params,
            &InitialState::new(init.u_s0, init.u_v0 - h).unwrap(),
        )
        .unwrap();
        let down = derive_constants(
            &params,
            &InitialState::new(init.u_s0, init.u_v0 + h).unwrap(),
        )
        .unwrap();
        let fd = (up.u_s_inf - down.u_s_inf) / (2.0 * h);
        assert!(
            (fd - analytic).abs() < 1e-8 * (1.0 + analytic.abs()),
            "fd {fd} analytic {analytic}"
        );
    }
}
