use std::f64::consts::TAU;

use hall_edge::cutoff::{shell_window, single_scale};
use hall_edge::lattice::C64;
use hall_edge::rg::wick::*;
use hall_edge::rg::*;
use hall_edge::Error;
use proptest::prelude::*;

fn pair(lambda: f64) -> FlowState {
    FlowState::initial(vec![1.0, -1.0], vec![1.0, 1.0], vec![vec![0.0, lambda], vec![lambda, 0.0]])
}

fn triple(lambda: f64) -> FlowState {
    let l = lambda;
    FlowState::initial(
        vec![1.0, -0.6, 1.4],
        vec![1.0, 1.0, 1.0],
        vec![vec![0.0, l, 0.6 * l], vec![l, 0.0, -0.8 * l], vec![0.6 * l, -0.8 * l, 0.0]],
    )
}

#[test]
fn propagator_support_and_plateau() {
    let s = pair(0.0);
    assert_eq!(single_scale_propagator(-2, 0, (3.0, 0.0), &s), C64::new(0.0, 0.0));
    assert_eq!(single_scale_propagator(-2, 0, (0.05, 0.0), &s), C64::new(0.0, 0.0));
    let r = 2f64.powi(-2);
    let k = (0.6 * r, 0.8 * r);
    let want = C64::new(1.0, 0.0) / C64::new(k.1, -k.0);
    assert!((single_scale_propagator(-2, 0, k, &s) - want).norm() < 1e-14 * want.norm());
}

#[test]
fn sup_norm_scales_like_inverse_shell() {
    let s = triple(0.05);
    let mut constants = Vec::new();
    for h in [0, -3, -6] {
        let mut sup = 0.0f64;
        for w in 0..3 {
            for i in 0..200 {
                for j in 0..64 {
                    let r = 2f64.powi(h) * (0.5 + 1.5 * i as f64 / 199.0);
                    let t = TAU * j as f64 / 64.0;
                    let k = (r * t.cos(), r * t.sin() / s.v[w]);
                    sup = sup.max(single_scale_propagator(h, w, k, &s).norm() * s.z[w]);
                }
            }
        }
        constants.push(sup * 2f64.powi(h));
    }
    for c in &constants {
        assert!((c / constants[0] - 1.0).abs() < 1e-12, "{constants:?}");
        assert!(*c < 2.0);
    }
}

#[test]
fn position_space_decay_constant_is_scale_free() {
    let s = triple(0.05);
    let profiles: Vec<DecayProfile> = [0, -2, -4].iter().map(|&h| position_space_decay(h, 0, &s, 128, 64.0)).collect();
    for p in &profiles {
        assert!((p.constant / profiles[0].constant - 1.0).abs() < 1e-6, "{profiles:?}");
        assert!(p.constant.is_finite() && p.constant < 10.0);
        assert!(p.sup_constant < 2.0);
    }
}

#[test]
fn diagrams_match_wick_enumeration() {
    let st = FlowState::initial(
        vec![1.0, -0.7, 1.3],
        vec![1.0, 1.2, 0.9],
        vec![vec![0.0, 0.1, 0.07], vec![0.1, 0.0, -0.05], vec![0.07, -0.05, 0.0]],
    );
    let m = GridModel::new(16, 16.0, 0, &st, 4.0).unwrap();
    for (w, w2, k1, k2, k3) in [(0, 1, [1, 2], [3, -1], [0, 5]), (1, 2, [2, 7], [-3, 1], [4, 4])] {
        let cmp = compare_with_oracle(&m, w, w2, k1, k2, k3);
        assert!(cmp.max_deviation() <= 1e-6, "{cmp:?}");
    }
    for (w, k) in [(0, [2, -3]), (2, [0, 1])] {
        let d = quadratic_diagram(&m, w, k);
        let o = quadratic_oracle(&m, w, k);
        assert!((d - o).norm() <= 1e-6 * o.norm().max(1e-12), "{d} vs {o}");
        assert!(o.norm() > 0.0);
    }
}

#[test]
fn wick_oracle_is_sensitive_to_diagram_signs() {
    let st = pair(0.1);
    let m = GridModel::new(16, 16.0, 0, &st, 4.0).unwrap();
    let (k1, k2, k3) = ([1, 2], [3, -1], [0, 5]);
    let parts = quartic_diagrams(&m, 0, 1, k1, k2, k3);
    let oracle = quartic_oracle(&m, 0, 1, k1, k2, k3);
    let flipped = parts.chain + parts.particle_particle - parts.particle_hole;
    assert!(parts.particle_hole.norm() > 1e-8);
    assert!((flipped - oracle).norm() > 1e3 * (parts.total() - oracle).norm());
}

#[test]
fn free_flow_has_no_increments() {
    let s = triple(0.0);
    let b = beta_second_order(&s, &RgConfig::default()).unwrap();
    assert!(b.z0.iter().chain(&b.z1).chain(&b.beta_v).all(|&x| x == 0.0));
    assert_eq!(b.beta_lambda_max(), 0.0);
    let traj = flow_run(&s, -12, &RgConfig::default()).unwrap();
    assert!(traj.states.iter().all(|t| t.z == s.z && t.v == s.v && t.lambda == s.lambda));
    let r = vanishing_beta_report(&traj, &RgConfig::default()).unwrap();
    assert_eq!(r.verdict, BetaVerdict::VanishingAtTruncationOrder);
}

#[test]
fn opposite_pair_at_scale_minus_five() {
    let lambda = 0.1;
    let s = FlowState { h: -5, ..pair(lambda) };
    let b = beta_second_order(&s, &RgConfig::default()).unwrap();
    assert!(b.beta_lambda_max() <= 1e-7);
    let want = opposite_pair_vertex_correction(lambda);
    for w in 0..2 {
        assert!(b.z0[w] > 0.0);
        assert!((b.z0[w] - want).abs() < 1e-6 * want, "{} vs {want}", b.z0[w]);
        // η = log₂(1 + z0) is of order λ².
        assert!((1.0 + b.z0[w]).log2() < lambda * lambda);
    }
    assert!(b.chain_bubble <= 1e-8);
}

#[test]
fn two_channel_report_vanishes() {
    let cfg = RgConfig::default();
    let traj = flow_run(&pair(0.1), -12, &cfg).unwrap();
    let r = vanishing_beta_report(&traj, &cfg).unwrap();
    assert_eq!(r.verdict, BetaVerdict::VanishingAtTruncationOrder);
    assert!(r.theta.is_none());
    for (m, t) in r.beta_v_max.iter().zip(&r.beta_v_theta) {
        // |βv| ≤ C|λ| 2^{θh}: either below tolerance or decaying.
        assert!(*m <= cfg.beta_tol || t.unwrap() > 0.0);
    }
}

#[test]
fn thirty_scale_flow_stays_contained() {
    let lambda = 0.05;
    let cfg = RgConfig::default();
    let traj = flow_run(&triple(lambda), -30, &cfg).unwrap();
    assert_eq!(traj.states.len(), 31);
    assert!(traj.lambda_drift() <= lambda.powf(1.5));
    assert!(traj.velocity_drift() <= lambda.sqrt());
    for eta in traj.eta() {
        assert!(eta > 0.0 && eta <= 10.0 * lambda * lambda, "eta {eta}");
    }
    for b in &traj.betas {
        assert!(b.beta_lambda_max() <= cfg.beta_tol);
    }
    let r = vanishing_beta_report(&traj, &cfg).unwrap();
    assert_eq!(r.verdict, BetaVerdict::VanishingAtTruncationOrder);
}

#[test]
fn containment_breach_reports_scale() {
    let cfg = RgConfig { bounds: Containment { c_z: 1e-6, ..Default::default() }, ..Default::default() };
    match flow_run(&pair(0.1), -5, &cfg) {
        Err(Error::FlowDivergence { scale, .. }) => assert_eq!(scale, -1),
        other => panic!("expected a divergence, got {other:?}"),
    }
}

#[test]
fn flow_input_guards() {
    let cfg = RgConfig::default();
    assert!(matches!(flow_run(&pair(0.1), 3, &cfg), Err(Error::Config(_))));
    assert!(matches!(flow_run(&pair(40.0), -2, &cfg), Err(Error::Params(_))));
    let short = flow_run(&pair(0.1), -4, &cfg).unwrap();
    assert!(matches!(vanishing_beta_report(&short, &cfg), Err(Error::Config(_))));
}

#[test]
fn closed_loop_matches_free_density() {
    // The all-scale loop is minus the free same-channel density correlation.
    let p = hall_edge::luttinger::LuttingerParams::free(vec![1.3], vec![0.7]);
    for q in [(0.2, 0.4), (-1.0, 0.3)] {
        let s = hall_edge::luttinger::density_density(&p, q).unwrap()[(0, 0)];
        assert!((loop_closed(q, 1.3, 0.7) + s).norm() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn shells_partition_the_window(r in 1e-4f64..1e3, h in -10i32..-1, n in 1i32..8) {
        let sum: f64 = (h + 1..=n).map(|j| single_scale(r, j)).sum();
        prop_assert!((sum - shell_window(r, h, n)).abs() <= 1e-12);
    }

    #[test]
    fn single_scale_propagator_is_odd(k0 in -4.0f64..4.0, k1 in -4.0f64..4.0, h in -6i32..1) {
        let s = triple(0.05);
        for w in 0..3 {
            let a = single_scale_propagator(h, w, (k0, k1), &s);
            let b = single_scale_propagator(h, w, (-k0, -k1), &s);
            prop_assert_eq!(a, -b);
        }
    }
}
