use std::f64::consts::{PI, TAU};

use hall_edge::current::{build_vertices, Component, CurrentVariant};
use hall_edge::lattice::{BandSource, CylinderGeometry, HamiltonianBuilder, LatticeHamiltonian, C64};
use hall_edge::models::{direct_sum, haldane_cylinder, hofstadter_cylinder, HaldaneParams};
use hall_edge::response::*;
use hall_edge::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn haldane(l1: usize, l2: usize) -> LatticeHamiltonian {
    haldane_cylinder(l1, l2, &HaldaneParams::default()).unwrap()
}

/// Decoupled chains, one per interior row, with distinct on-site energies.
fn chains(l1: usize, l2: usize, t: f64) -> LatticeHamiltonian {
    let g = CylinderGeometry::new(l1, l2, 1).unwrap();
    let mut b = HamiltonianBuilder::new(g, 1.0);
    for x2 in g.interior_rows() {
        b.hop(1, x2, x2, 0, 0, C64::new(-t, 0.0));
        b.onsite(x2, 0, 0.37 * x2 as f64);
    }
    b.build().unwrap()
}

fn random_model(seed: u64) -> LatticeHamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CylinderGeometry::new(12, 10, 2).unwrap();
    let mut b = HamiltonianBuilder::new(g, 2f64.sqrt());
    for x2 in g.interior_rows() {
        for rho in 0..2 {
            b.onsite(x2, rho, rng.random_range(-1.0..1.0));
            for (d1, d2) in [(0i32, 0usize), (1, 0), (0, 1), (1, 1), (-1, 1)] {
                for sigma in 0..2 {
                    if d1 == 0 && d2 == 0 && sigma <= rho {
                        continue;
                    }
                    let amp = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    b.hop(d1, x2, x2 + d2, rho, sigma, amp);
                }
            }
        }
    }
    b.build().unwrap()
}

fn rand_momentum(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(-2.0..2.0), rng.random_range(-PI..PI))
}

#[test]
fn density_vertices_are_complete() {
    let h = haldane(16, 12);
    let es = h.eigensystem(0.83).unwrap();
    let v = build_vertices(&h, &es, &es, 0.0, CurrentVariant::Conserved).unwrap();
    let sum = v.density.iter().fold(v.density[0].clone() * C64::new(0.0, 0.0), |acc, n| acc + n);
    let n = sum.nrows();
    for a in 0..n {
        for b in 0..n {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((sum[(a, b)] - C64::new(want, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn chain_current_is_group_velocity() {
    let (t, k) = (0.9, 0.61);
    let h = chains(16, 6, t);
    let es = h.eigensystem(k).unwrap();
    let v = build_vertices(&h, &es, &es, 0.0, CurrentVariant::Conserved).unwrap();
    let j1 = v.along.iter().fold(v.along[0].clone() * C64::new(0.0, 0.0), |acc, x| acc + x);
    let s = 1e-5;
    let up = h.eigensystem(k + s).unwrap().energies;
    let down = h.eigensystem(k - s).unwrap().energies;
    for a in 0..es.len() {
        let fd = (up[a] - down[a]) / (2.0 * s);
        assert!((j1[(a, a)].re - fd).abs() < 1e-8, "band {a}: {} vs {fd}", j1[(a, a)]);
        assert!(j1[(a, a)].im.abs() < 1e-14);
        assert!((fd - 2.0 * t * k.sin()).abs() < 1e-8);
    }
}

/// `−β⁻¹ Σ_n G_a(iω_n) G_b(iω_n + i p0)` over `n ∈ [−N, N)` with the
/// `1/ω²` tail added back.
fn matsubara_bubble(xa: f64, xb: f64, p0: f64, beta: f64, n: i64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for j in -n..n {
        let w = (2 * j + 1) as f64 * PI / beta;
        s += 1.0 / (C64::new(-xa, w) * C64::new(-xb, w + p0));
    }
    // Σ_{|n| ≥ N} 1/ω_n² ≈ β²/(2π²N) for both tails together.
    let tail = beta * beta / (2.0 * PI * PI * n as f64);
    -(s - tail) / beta
}

#[test]
fn lindhard_matches_matsubara_sum() {
    let (beta, mu) = (6.0, 0.4);
    let h = chains(12, 5, 1.0);
    let spec = GridSpectrum::new(&h).unwrap();
    let cfg = ResponseConfig { mu, temperature: Temperature::Beta(beta), variant: CurrentVariant::Conserved };
    let p0 = TAU / beta;
    let rows = 0..5;
    for m in [0i64, 1, 5] {
        let got = strip_correlations(
            &h,
            &spec,
            &cfg,
            p0,
            m,
            &[Strip::new(Component::Density, rows.clone())],
            &[Strip::new(Component::Density, rows.clone())],
        )
        .unwrap()[(0, 0)];
        let mut want = C64::new(0.0, 0.0);
        for j in 0..12i64 {
            let (a, b) = (spec.at(j), spec.at(j + m));
            for r in 0..a.len() {
                want += matsubara_bubble(a.energies[r] - mu, b.energies[r] - mu, p0, beta, 2048);
            }
        }
        want /= 12.0;
        assert!((got - want).norm() < 1e-6 * want.norm().max(1e-3), "m = {m}: {got} vs {want}");
    }
}

#[test]
fn empty_occupation_gives_zero_response() {
    let h = haldane(12, 8);
    let spec = GridSpectrum::new(&h).unwrap();
    let cfg = ResponseConfig::ground_state(-10.0);
    let r = current_current(&h, &spec, &cfg, 0.4, 0, &[1, 2, 3]).unwrap();
    assert!(r.table.iter().all(|t| t.camax() == 0.0));
}

#[test]
fn reversed_momentum_swaps_arguments() {
    let h = haldane(12, 10);
    let spec = GridSpectrum::new(&h).unwrap();
    let cfg = ResponseConfig::ground_state(0.1);
    let rows = [1, 2, 4];
    let a = current_current(&h, &spec, &cfg, 0.35, 2, &rows).unwrap();
    let b = current_current(&h, &spec, &cfg, -0.35, -2, &rows).unwrap();
    for mu in Component::ALL {
        for nu in Component::ALL {
            let (x, y) = (a.get(mu, nu), b.get(nu, mu));
            assert!((x - y.transpose()).camax() < 1e-12, "{mu:?} {nu:?}");
        }
    }
}

#[test]
fn conjugation_symmetry() {
    let h = haldane(12, 10);
    let spec = GridSpectrum::new(&h).unwrap();
    let cfg = ResponseConfig::ground_state(0.1);
    let rows = [1, 3, 4];
    let a = current_current(&h, &spec, &cfg, 0.35, 1, &rows).unwrap();
    let b = current_current(&h, &spec, &cfg, -0.35, 1, &rows).unwrap();
    for mu in Component::ALL {
        for nu in Component::ALL {
            let d = (a.get(mu, nu).map(|z| z.conj()) - b.get(nu, mu).transpose()).camax();
            assert!(d < 1e-12, "{mu:?} {nu:?}: {d:e}");
        }
    }
    // Static density response: p1 -> -p1 is complex conjugation.
    let plus = current_current(&h, &spec, &cfg, 0.0, 2, &rows).unwrap();
    let minus = current_current(&h, &spec, &cfg, 0.0, -2, &rows).unwrap();
    let (x, y) = (plus.get(Component::Density, Component::Density), minus.get(Component::Density, Component::Density));
    assert!((x.map(|z| z.conj()) - y).camax() < 1e-12);
}

#[test]
fn charge_sum_rule_on_builtin_and_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let models = [haldane(16, 16), hofstadter_cylinder(16, 16, 1, 3, 1.0).unwrap(), random_model(3)];
    for h in &models {
        let spec = GridSpectrum::new(h).unwrap();
        let cfg = ResponseConfig::ground_state(0.1);
        for _ in 0..5 {
            let p0 = rng.random_range(0.05..2.0);
            let y2 = rng.random_range(1..h.geometry().l2 - 1);
            let r = ward_sum_rule(h, &spec, &cfg, p0, y2).unwrap();
            assert!(r[0] <= 1e-10 && r[1] <= 1e-10, "{r:?}");
        }
    }
}

#[test]
fn charge_sum_rule_does_not_see_the_current_vertex() {
    // Only diagonal band pairs enter at p1 = 0, where F vanishes for p0 ≠ 0.
    let h = haldane(16, 16);
    let spec = GridSpectrum::new(&h).unwrap();
    let cfg = ResponseConfig { variant: CurrentVariant::Truncated, ..ResponseConfig::ground_state(0.1) };
    let r = ward_sum_rule(&h, &spec, &cfg, 0.3, 5).unwrap();
    assert!(r[0] <= 1e-10 && r[1] <= 1e-10);
}

#[test]
fn vertex_identity_on_builtin_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = [haldane(16, 16), hofstadter_cylinder(16, 16, 1, 3, 1.0).unwrap(), random_model(9)];
    for h in &models {
        for _ in 0..10 {
            let (p, k) = (rand_momentum(&mut rng), rand_momentum(&mut rng));
            let (res, scale) = vertex_ward_check(h, 0.1, CurrentVariant::Conserved, p, k).unwrap();
            assert!(res <= 1e-10, "{res:e} (scale {scale:e})");
        }
        let (res, _) = vertex_ward_check(h, 0.1, CurrentVariant::Conserved, (0.7, 0.0), (0.2, 1.1)).unwrap();
        assert!(res <= 1e-12);
    }
}

#[test]
fn vertex_identity_at_a_fermi_point() {
    let h = haldane(16, 16);
    let cfg = hall_edge::spectrum::EdgeConfig { mu: 0.1, delta: 0.04, delta_tilde: 0.05, ..Default::default() };
    let a = hall_edge::spectrum::analyze_edges(&h, &cfg).unwrap();
    let kf = a.lower().next().unwrap().k_f;
    let (res, scale) = vertex_ward_check(&h, 0.1, CurrentVariant::Conserved, (1e-2, 1e-2), (1e-2, kf)).unwrap();
    assert!(res <= 1e-10, "{res:e} at scale {scale:e}");
}

#[test]
fn truncated_current_breaks_local_identities() {
    let h = haldane(16, 16);
    let (res, scale) = vertex_ward_check(&h, 0.1, CurrentVariant::Truncated, (0.4, 0.9), (0.3, 2.0)).unwrap();
    assert!(res > 1e-3 * scale.max(1e-3), "{res:e}");
    let spec = GridSpectrum::new(&h).unwrap();
    let good = ResponseConfig::ground_state(0.1);
    let bad = ResponseConfig { variant: CurrentVariant::Truncated, ..good };
    let (r_good, s_good) = continuity_residual(&h, &spec, &good, 0.3, 2, 4).unwrap();
    assert!(r_good <= 1e-10 * s_good.max(1.0), "{r_good:e}");
    let (r_bad, _) = continuity_residual(&h, &spec, &bad, 0.3, 2, 4).unwrap();
    assert!(r_bad > 1e-4, "{r_bad:e}");
}

fn sweep() -> ConductanceSweep {
    ConductanceSweep { a: 12, a_prime: 6, p1_count: 3 }
}

#[test]
fn topological_conductance_converges_to_quantum() {
    let errs: Vec<f64> = [24, 36, 48]
        .iter()
        .map(|&l1| {
            let g = edge_conductance_free(&haldane(l1, 24), 0.1, &sweep()).unwrap();
            assert!(g.max_imag < 1e-9);
            (TAU * g.g - 1.0).abs()
        })
        .collect();
    assert!(errs[2] <= 0.05, "{errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn counterpropagating_pair_cancels() {
    let plus = haldane(48, 24);
    let minus = haldane_cylinder(48, 24, &HaldaneParams { phi: PI / 2.0, ..Default::default() }).unwrap();
    let h = direct_sum(&[(&plus, 0.0), (&minus, 0.07)]).unwrap();
    let g = edge_conductance_free(&h, 0.1, &sweep()).unwrap();
    assert!((TAU * g.g).abs() <= 0.05, "{}", TAU * g.g);
}

#[test]
fn trivial_gap_conducts_nothing() {
    // Without edge modes G(p1) starts at order p1².
    let h = haldane_cylinder(48, 16, &HaldaneParams { mass: 3.0, ..Default::default() }).unwrap();
    let g = edge_conductance_free(&h, 0.0, &ConductanceSweep { a: 8, a_prime: 4, p1_count: 3 }).unwrap();
    let curv: Vec<f64> = g.points.iter().map(|p| p.re / (p.p1 * p.p1)).collect();
    assert!(curv.iter().all(|c| (c / curv[0] - 1.0).abs() < 0.2), "{curv:?}");
    assert!((TAU * g.g).abs() < 1e-3, "{}", TAU * g.g);
}

#[test]
fn opposite_limit_order_vanishes() {
    let h = haldane(24, 24);
    // Nonzero only through strip-boundary terms that die off with the width.
    let wide = static_limit(&h, 0.1, 12, 6, 1e-3).unwrap();
    let narrow = static_limit(&h, 0.1, 8, 4, 1e-3).unwrap();
    assert!(wide.norm() < 1e-5 && wide.norm() < 0.1 * narrow.norm(), "{wide} {narrow}");
    let smaller_eta = static_limit(&h, 0.1, 12, 6, 1e-4).unwrap();
    assert!((smaller_eta - wide).norm() < 1e-2 * wide.norm());
}

#[test]
fn strip_order_is_validated() {
    let h = haldane(24, 16);
    let bad = ConductanceSweep { a: 4, a_prime: 6, p1_count: 3 };
    assert!(matches!(edge_conductance_free(&h, 0.1, &bad), Err(Error::Config(_))));
    let short = ConductanceSweep { a: 8, a_prime: 4, p1_count: 2 };
    assert!(matches!(edge_conductance_free(&h, 0.1, &short), Err(Error::Config(_))));
}

#[test]
fn strip_dependence_decays_with_width() {
    let h = haldane(48, 40);
    let spec = GridSpectrum::new(&h).unwrap();
    let widths = [3usize, 5, 7, 9];
    let diffs: Vec<f64> = widths
        .iter()
        .map(|&w| {
            let g = |a: usize, b: usize| strip_conductance(&h, &spec, 0.1, a, b, 1).unwrap();
            (g(2 * w, w) - g(2 * w + 2, w + 2)).norm()
        })
        .collect();
    let xs: Vec<f64> = widths.iter().map(|&w| w as f64).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope < 0.0, "fitted decay rate {} from {diffs:?}", -slope);
}

fn wick(beta: f64, horizon: f64) -> WickParams {
    WickParams { mu: 0.1, beta, horizon, eta: TAU * (10.0 + 1.0 / 3.0) / 20.0, p1_index: 1, a: 6, a_prime: 3 }
}

#[test]
fn wick_residual_halves_with_beta() {
    let h = haldane(12, 12);
    let spec = GridSpectrum::new(&h).unwrap();
    let res: Vec<f64> =
        [20.0, 40.0, 80.0].iter().map(|&b| wick_rotation_check(&h, &spec, &wick(b, 200.0)).unwrap().residual).collect();
    assert!(res[0] / res[1] >= 1.8 && res[1] / res[2] >= 1.8, "{res:?}");
}

#[test]
fn wick_horizon_term_decays_exponentially() {
    let h = haldane(12, 12);
    let spec = GridSpectrum::new(&h).unwrap();
    let eta = wick(20.0, 1.0).eta;
    for beta in [20.0, 40.0, 80.0] {
        let far = wick_rotation_check(&h, &spec, &wick(beta, 200.0)).unwrap();
        let scaled: Vec<f64> = [0.25, 0.5, 1.0, 2.0]
            .iter()
            .map(|&t| {
                let c = wick_rotation_check(&h, &spec, &wick(beta, t)).unwrap();
                (c.lhs - far.lhs).norm() * (eta * t).exp()
            })
            .collect();
        // e^{ηT}·(horizon term) stays bounded while the term itself shrinks.
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        assert!(scaled.iter().all(|&s| s > 0.0 && s <= max));
        assert!(max / scaled[3] < 10.0, "beta {beta}: {scaled:?}");
        let plateau = wick_rotation_check(&h, &spec, &wick(beta, 10.0)).unwrap();
        assert!((plateau.residual - far.residual).abs() < 1e-6 * far.residual);
    }
}

#[test]
fn wick_sides_vanish_outside_the_spectrum() {
    let h = haldane(12, 12);
    let spec = GridSpectrum::new(&h).unwrap();
    let c = wick_rotation_check(&h, &spec, &WickParams { mu: -20.0, ..wick(40.0, 50.0) }).unwrap();
    assert!(c.lhs.norm() < 1e-14 && c.rhs.norm() < 1e-14);
}

#[test]
fn zero_bosonic_frequency_is_an_error() {
    assert!(matches!(bosonic_frequency(0.01, 20.0), Err(Error::ZeroBosonicFrequency { .. })));
    let w = bosonic_frequency(1.0, 20.0).unwrap();
    assert!((w - TAU * 3.0 / 20.0).abs() < 1e-15);
}

#[test]
fn intercept_of_exact_line() {
    let (c, e) = linear_intercept(&[1.0, 2.0, 3.0], &[2.5, 3.0, 3.5]);
    assert!((c - 2.0).abs() < 1e-14 && e < 1e-14);
}
