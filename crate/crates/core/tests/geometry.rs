use std::f64::consts::{PI, TAU};

use hall_edge::lattice::{BandSource, CMatrix, CylinderGeometry, HamiltonianBuilder, LatticeHamiltonian, C64};
use hall_edge::modelfile::ModelFile;
use hall_edge::models::{haldane_cylinder, hofstadter_cylinder, stacked_shifted, HaldaneParams};
use hall_edge::Error;
use proptest::prelude::*;

fn chain(l2: usize, t: f64) -> LatticeHamiltonian {
    let g = CylinderGeometry::new(10, l2, 1).unwrap();
    let mut b = HamiltonianBuilder::new(g, 1.0);
    for x2 in g.interior_rows() {
        b.hop(1, x2, x2, 0, 0, C64::new(-t, 0.0));
    }
    b.build().unwrap()
}

#[test]
fn embedded_chain_is_diagonal_cosine() {
    let h = chain(7, 0.8);
    for k in [0.0, 0.4, 2.0, -1.3] {
        let f = h.fiber(k);
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j && (1..6).contains(&i) { -1.6 * f64::cos(k) } else { 0.0 };
                assert!((f[(i, j)] - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn zero_hamiltonian_fiber_vanishes() {
    let g = CylinderGeometry::new(6, 6, 3).unwrap();
    let h = LatticeHamiltonian::zero(g, 2.0);
    assert_eq!(h.fiber(0.9).camax(), 0.0);
    let es = h.eigensystem(0.9).unwrap();
    assert!(es.energies.iter().all(|&e| e == 0.0));
}

/// Honeycomb sites placed in the plane: A at the cell corner, B at
/// `(a1 + a2)/3`.
fn site(n1: i32, n2: i32, orb: usize) -> (f64, f64) {
    let a1 = (1.0, 0.0);
    let a2 = (0.5, 3f64.sqrt() / 2.0);
    let (mut x, mut y) = (n1 as f64 * a1.0 + n2 as f64 * a2.0, n1 as f64 * a1.1 + n2 as f64 * a2.1);
    if orb == 1 {
        x += (a1.0 + a2.0) / 3.0;
        y += (a1.1 + a2.1) / 3.0;
    }
    (x, y)
}

/// Real-space Haldane Hamiltonian found from site geometry alone (bond
/// lengths and turning sense of the two-bond path), folded onto one
/// column with the twist phase `e^{ik d}`.
fn haldane_by_geometry(l2: usize, p: &HaldaneParams, k: f64) -> CMatrix {
    let nn = 1.0 / 3f64.sqrt();
    let interior = |r: i32| r >= 1 && r < l2 as i32 - 1;
    let mut h = CMatrix::zeros(2 * l2, 2 * l2);
    for x2 in 0..l2 as i32 {
        if !interior(x2) {
            continue;
        }
        for rho in 0..2 {
            let r = site(0, x2, rho);
            let i = 2 * x2 as usize + rho;
            h[(i, i)] += C64::new(if rho == 0 { p.mass } else { -p.mass }, 0.0);
            for d1 in -3..=3 {
                for y2 in 0..l2 as i32 {
                    if !interior(y2) {
                        continue;
                    }
                    for sigma in 0..2 {
                        let s = site(d1, y2, sigma);
                        let dist = (s.0 - r.0).hypot(s.1 - r.1);
                        let j = 2 * y2 as usize + sigma;
                        let twist = C64::from_polar(1.0, k * d1 as f64);
                        if (dist - nn).abs() < 1e-9 {
                            h[(i, j)] += twist * (-p.t1);
                        } else if (dist - 1.0).abs() < 1e-9 && rho == sigma {
                            // The middle site is the unique neighbour shared by both ends.
                            let other = 1 - rho;
                            let mut turn = 0.0;
                            for m1 in -3..=3 {
                                for m2 in x2 - 2..=x2 + 2 {
                                    let m = site(m1, m2, other);
                                    let near = |a: (f64, f64)| ((m.0 - a.0).hypot(m.1 - a.1) - nn).abs() < 1e-9;
                                    if near(r) && near(s) {
                                        turn = (m.0 - r.0) * (s.1 - m.1) - (m.1 - r.1) * (s.0 - m.0);
                                    }
                                }
                            }
                            assert!(turn != 0.0);
                            h[(i, j)] += twist * C64::from_polar(p.t2, turn.signum() * p.phi);
                        }
                    }
                }
            }
        }
    }
    h
}

#[test]
fn haldane_fiber_matches_real_space_geometry() {
    let p = HaldaneParams { t1: 1.0, t2: 0.27, phi: 0.9, mass: 0.13 };
    let l2 = 8;
    let h = haldane_cylinder(6, l2, &p).unwrap();
    for k in [0.0, 0.77, PI, -2.1] {
        let oracle = haldane_by_geometry(l2, &p, k);
        let diff = (h.fiber(k) - oracle).camax();
        assert!(diff < 1e-13, "k = {k}: deviation {diff:e}");
    }
}

#[test]
fn haldane_without_nnn_has_chiral_symmetry() {
    let p = HaldaneParams { t2: 0.0, ..Default::default() };
    let h = haldane_cylinder(8, 8, &p).unwrap();
    let e = h.eigensystem(1.1).unwrap().energies;
    let n = e.len();
    for i in 0..n {
        assert!((e[i] + e[n - 1 - i]).abs() < 1e-12);
    }
}

#[test]
fn hofstadter_matches_harper_fiber() {
    let (l2, t) = (9, 1.1);
    for (p, q) in [(1, 3), (2, 5), (-1, 4)] {
        let h = hofstadter_cylinder(8, l2, p, q, t).unwrap();
        for k in [0.0, 0.6, 2.5] {
            let mut oracle = CMatrix::zeros(l2, l2);
            for x2 in 1..l2 - 1 {
                let theta = TAU * p as f64 * x2 as f64 / q as f64;
                oracle[(x2, x2)] = C64::new(-2.0 * t * (k + theta).cos(), 0.0);
                if x2 + 2 < l2 {
                    oracle[(x2, x2 + 1)] = C64::new(-t, 0.0);
                    oracle[(x2 + 1, x2)] = C64::new(-t, 0.0);
                }
            }
            let diff = (h.fiber(k) - oracle).camax();
            assert!(diff < 1e-13, "flux {p}/{q}, k = {k}: {diff:e}");
        }
    }
}

#[test]
fn hofstadter_phase_advances_by_flux() {
    let h = hofstadter_cylinder(8, 8, 1, 3, 1.0).unwrap();
    for x2 in 1..7 {
        let b = h.block(1, x2, x2).unwrap();
        let want = C64::from_polar(-1.0, TAU * x2 as f64 / 3.0);
        assert!((b[(0, 0)] - want).norm() < 1e-14);
    }
}

#[test]
fn construction_errors() {
    assert!(matches!(CylinderGeometry::new(3, 8, 1), Err(Error::Geometry(_))));
    assert!(matches!(CylinderGeometry::new(8, 8, 0), Err(Error::Geometry(_))));
    let g = CylinderGeometry::new(8, 8, 1).unwrap();
    let mut b = HamiltonianBuilder::new(g, 1.5);
    b.hop(2, 3, 3, 0, 0, C64::new(1.0, 0.0));
    assert!(matches!(b.build(), Err(Error::OutOfRange { offset1: 2, .. }) | Err(Error::OutOfRange { offset1: -2, .. })));
    assert!(matches!(hofstadter_cylinder(8, 8, 2, 4, 1.0), Err(Error::Model(_))));
    assert!(matches!(hofstadter_cylinder(8, 8, 1, 1, 1.0), Err(Error::Model(_))));
    let bad = HaldaneParams { t2: f64::NAN, ..Default::default() };
    assert!(haldane_cylinder(8, 8, &bad).is_err());
}

#[test]
fn stack_is_block_diagonal_with_shifts() {
    let base = haldane_cylinder(8, 8, &HaldaneParams::default()).unwrap();
    let shifts = [0.0, 0.13, 0.29];
    let s = stacked_shifted(&base, &shifts).unwrap();
    assert_eq!(s.geometry().m, 6);
    let k = 0.4;
    let mut all: Vec<f64> = shifts
        .iter()
        .flat_map(|&sh| base.eigensystem(k).unwrap().energies.into_iter().map(move |e| e + sh))
        .collect();
    all.sort_by(f64::total_cmp);
    let got = s.eigensystem(k).unwrap().energies;
    assert_eq!(got.len(), all.len());
    for (a, b) in got.iter().zip(&all) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn dump_round_trips_through_model_file() {
    let h = haldane_cylinder(8, 6, &HaldaneParams { mass: 0.2, ..Default::default() }).unwrap();
    let mut text = Vec::new();
    h.write_dump(&mut text).unwrap();
    let dir = std::env::temp_dir().join(format!("hall-edge-dump-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("h.dat"), &text).unwrap();
    let file = ModelFile::parse(
        "[geometry]\nL1 = 8\nL2 = 6\nM = 2\n[model]\nkind = \"blocks\"\n[params]\nrange = 1.5\ndump = \"h.dat\"\n",
    )
    .unwrap();
    let back = file.build(Some(&dir)).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    for k in [0.0, 1.3] {
        assert!((back.fiber(k) - h.fiber(k)).camax() < 1e-15);
    }
}

#[test]
fn model_file_builds_builtin_kinds() {
    let f = ModelFile::parse("[geometry]\nL1 = 8\nL2 = 8\n[model]\nkind = \"hofstadter\"\n[params]\np = 1\nq = 3\n").unwrap();
    let h = f.build(None).unwrap();
    let direct = hofstadter_cylinder(8, 8, 1, 3, 1.0).unwrap();
    assert_eq!((h.fiber(0.3) - direct.fiber(0.3)).camax(), 0.0);
    let f = ModelFile::parse("[geometry]\nL1 = 8\nL2 = 8\n[model]\nkind = \"kagome\"\n").unwrap();
    assert!(matches!(f.build(None), Err(Error::ModelFile(_))));
    assert!(ModelFile::parse("[geometry]\nL1 = 8\n").is_err());
}

fn models() -> Vec<LatticeHamiltonian> {
    let haldane = haldane_cylinder(8, 8, &HaldaneParams { mass: 0.1, ..Default::default() }).unwrap();
    vec![
        haldane.clone(),
        hofstadter_cylinder(8, 9, 1, 3, 1.0).unwrap(),
        stacked_shifted(&haldane, &[0.0, 0.2]).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fibers_are_hermitian(k in -10.0f64..10.0) {
        for h in models() {
            let f = h.fiber(k);
            let dev = (&f - f.adjoint()).camax();
            prop_assert!(dev <= 1e-13 * f.camax().max(1e-300));
        }
    }

    #[test]
    fn fibers_are_two_pi_periodic(k in -10.0f64..10.0) {
        for h in models() {
            prop_assert!((h.fiber(k + TAU) - h.fiber(k)).camax() <= 1e-13);
        }
    }

    #[test]
    fn spectra_are_sorted(k in -10.0f64..10.0) {
        for h in models() {
            let e = h.eigensystem(k).unwrap().energies;
            prop_assert!(e.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(e.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn random_hopping_outside_range_is_rejected(d1 in -4i32..=4, dx2 in 0usize..4) {
        let g = CylinderGeometry::new(8, 8, 1).unwrap();
        let mut b = HamiltonianBuilder::new(g, 2.0);
        b.hop(d1, 2, 2 + dx2, 0, 0, C64::new(0.5, 0.25));
        let reach = (d1 as f64).hypot(dx2 as f64);
        let built = b.build();
        if reach > 2.0 {
            prop_assert!(matches!(built, Err(Error::OutOfRange { .. })), "expected OutOfRange");
        } else {
            prop_assert!(built.is_ok());
        }
    }
}
