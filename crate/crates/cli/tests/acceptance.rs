//! Acceptance criteria, one line each. Exits non-zero when any fails.

use std::f64::consts::{PI, TAU};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hall_edge::current::CurrentVariant;
use hall_edge::lattice::{CMatrix, LatticeHamiltonian, C64};
use hall_edge::luttinger::*;
use hall_edge::models::{direct_sum, haldane_cylinder, hofstadter_cylinder, HaldaneParams};
use hall_edge::quadrature::QuadratureSpec;
use hall_edge::response::*;
use hall_edge::rg::wick::{compare_with_oracle, GridModel};
use hall_edge::rg::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn sci(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.1e}")).collect();
    format!("[{}]", v.join(", "))
}

fn haldane(l1: usize, l2: usize) -> LatticeHamiltonian {
    haldane_cylinder(l1, l2, &HaldaneParams::default()).unwrap()
}

fn universality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = universality_ensemble(&mut rng, 500, 4, 2.0).map_err(fail)?;
    ensure(s.max_abs_error <= 1e-9, format!("max |2πG − Σ sgn v| = {:.2e} over {} sets", s.max_abs_error, s.samples))
}

fn anomalous_bubble() -> Outcome {
    let exact = 1.0 / (4.0 * PI);
    let b = bubble_regularized((0.0, 1.0), 1.0, -12, 12, &QuadratureSpec::default()).map_err(fail)?;
    let main = (b.value - exact).norm();
    let spec = QuadratureSpec { tol: 1e-12, ..Default::default() };
    let err = |h: i32, n: i32| bubble_regularized((0.0, 1.0), 1.0, h, n, &spec).map(|r| (r.value - exact).norm());
    let ir = [-4, -6, -8].iter().map(|&h| err(h, 14)).collect::<Result<Vec<_>, _>>().map_err(fail)?;
    let uv = [2, 3, 4].iter().map(|&n| err(-20, n)).collect::<Result<Vec<_>, _>>().map_err(fail)?;
    let decreasing = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]);
    ensure(
        main <= 1e-3 && decreasing(&ir) && decreasing(&uv),
        format!("error {main:.2e} at (h, N) = (−12, 12); h↓ {}; N↑ {}", sci(&ir), sci(&uv)),
    )
}

fn bubble_vanishing() -> Outcome {
    let shells = [0, -1, -3];
    let mut worst: f64 = 0.0;
    let mut control = f64::INFINITY;
    for &h1 in &shells {
        for &h2 in &shells {
            for v in [1.0, -0.6] {
                worst = worst.max(same_chirality_bubble(h1, h2, v, false).norm());
            }
            if (h1 - h2).abs() <= 1 {
                control = control.min(same_chirality_bubble(h1, h2, 1.0, true).norm());
            }
        }
    }
    ensure(worst <= 1e-8 && control > 1e-3, format!("max same-chirality bubble {worst:.2e}; |D|² control ≥ {control:.2e}"))
}

fn to_complex(m: &nalgebra::DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

fn t_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=4);
        let p = LuttingerParams::random(&mut rng, n, 3.0);
        let f = |q| t_matrix(&p, q);
        let s = directional_limit(f, LimitOrder::SpaceFirst, PATH_CURVATURE).map_err(fail)?;
        let d = directional_limit(f, LimitOrder::TimeFirst, PATH_CURVATURE).map_err(fail)?;
        worst = worst.max((s - to_complex(&t_limit_static(&p).map_err(fail)?)).camax());
        worst = worst.max((d - to_complex(&t_limit_dynamic(&p).map_err(fail)?)).camax());
    }
    ensure(worst <= 1e-8, format!("max entrywise deviation {worst:.2e} over 50 sets"))
}

fn ward_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = [("haldane", haldane(16, 16)), ("hofstadter", hofstadter_cylinder(16, 16, 1, 3, 1.0).map_err(fail)?)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, h) in &models {
        let spec = GridSpectrum::new(h).map_err(fail)?;
        let cfg = ResponseConfig::ground_state(0.1);
        let (mut sum_rule, mut vertex): (f64, f64) = (0.0, 0.0);
        for _ in 0..5 {
            let p0 = rng.random_range(0.05..2.0);
            let y2 = rng.random_range(1..h.geometry().l2 - 1);
            let r = ward_sum_rule(h, &spec, &cfg, p0, y2).map_err(fail)?;
            sum_rule = sum_rule.max(r[0]).max(r[1]);
            let mut mom = || (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
            let (p, k) = (mom(), mom());
            vertex = vertex.max(vertex_ward_check(h, 0.1, CurrentVariant::Conserved, p, k).map_err(fail)?.0);
        }
        ok &= sum_rule <= 1e-10 && vertex <= 1e-10;
        parts.push(format!("{name}: sum rule {sum_rule:.1e}, vertex {vertex:.1e}"));
    }
    ensure(ok, parts.join("; "))
}

fn free_conductance() -> Outcome {
    let sweep = ConductanceSweep { a: 12, a_prime: 6, p1_count: 3 };
    let errs = [24, 36, 48]
        .iter()
        .map(|&l1| edge_conductance_free(&haldane(l1, 24), 0.1, &sweep).map(|g| (TAU * g.g - 1.0).abs()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    let plus = haldane(48, 24);
    let minus = haldane_cylinder(48, 24, &HaldaneParams { phi: PI / 2.0, ..Default::default() }).map_err(fail)?;
    let pair = direct_sum(&[(&plus, 0.0), (&minus, 0.07)]).map_err(fail)?;
    let g_pair = TAU * edge_conductance_free(&pair, 0.1, &sweep).map_err(fail)?.g;
    ensure(
        errs[2] <= 0.05 && errs[0] > errs[1] && errs[1] > errs[2] && g_pair.abs() <= 0.05,
        format!("|2πG − 1| over L1 = 24, 36, 48: {errs:.4?}; counterpropagating pair 2πG = {g_pair:.4}"),
    )
}

fn wick_rotation() -> Outcome {
    let h = haldane(12, 12);
    let spec = GridSpectrum::new(&h).map_err(fail)?;
    let eta = TAU * (10.0 + 1.0 / 3.0) / 20.0;
    let params = |beta: f64, horizon: f64| WickParams { mu: 0.1, beta, horizon, eta, p1_index: 1, a: 6, a_prime: 3 };
    let run = |beta, t| wick_rotation_check(&h, &spec, &params(beta, t)).map_err(fail);
    let betas = [20.0, 40.0, 80.0];
    let res = betas.iter().map(|&b| run(b, 200.0).map(|c| c.residual)).collect::<Result<Vec<_>, _>>()?;
    let ratios = [res[0] / res[1], res[1] / res[2]];
    let mut horizon_ok = true;
    for beta in betas {
        let far = run(beta, 200.0)?;
        let mut scaled = Vec::new();
        for t in [0.25, 0.5, 1.0, 2.0] {
            scaled.push((run(beta, t)?.lhs - far.lhs).norm() * (eta * t).exp());
        }
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        let plateau = run(beta, 10.0)?;
        horizon_ok &= scaled.iter().all(|&s| s > 0.0) && max / scaled[3] < 10.0;
        horizon_ok &= (plateau.residual - far.residual).abs() < 1e-6 * far.residual;
    }
    ensure(
        ratios.iter().all(|&r| r >= 1.8) && horizon_ok,
        format!("β-doubling ratios {ratios:.3?}; e^(−ηT) term decays to the plateau: {horizon_ok}"),
    )
}

fn rg_flow() -> Outcome {
    let l = 0.05;
    let state = FlowState::initial(
        vec![1.0, -0.6, 1.4],
        vec![1.0; 3],
        vec![vec![0.0, l, 0.6 * l], vec![l, 0.0, -0.8 * l], vec![0.6 * l, -0.8 * l, 0.0]],
    );
    let cfg = RgConfig::default();
    let traj = flow_run(&state, -30, &cfg).map_err(fail)?;
    let eta = traj.eta();
    let beta = traj.betas.iter().map(|b| b.beta_lambda_max()).fold(0.0, f64::max);
    let grid = GridModel::new(16, 16.0, 0, &state, cfg.p_c).map_err(fail)?;
    let oracle = [(0, 1, [1, 2], [3, -1], [0, 5]), (1, 2, [2, 7], [-3, 1], [4, 4])]
        .iter()
        .map(|&(w, w2, k1, k2, k3)| compare_with_oracle(&grid, w, w2, k1, k2, k3).max_deviation())
        .fold(0.0, f64::max);
    let ok = traj.lambda_drift() <= l.powf(1.5)
        && traj.velocity_drift() <= l.sqrt()
        && eta.iter().all(|&e| e > 0.0 && e <= 10.0 * l * l)
        && beta <= cfg.beta_tol
        && oracle <= 1e-6;
    ensure(
        ok,
        format!(
            "λ drift {:.1e}, v drift {:.1e}, η ≤ {:.2e}, max |βλ| {beta:.1e}, oracle {oracle:.1e}",
            traj.lambda_drift(),
            traj.velocity_drift(),
            eta.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn reproducibility() -> Outcome {
    let run = |dir: &std::path::Path, cmd: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_hall-edge"))
            .arg("--out")
            .arg(dir)
            .arg("--quiet")
            .args(cmd)
            .output()
            .map_err(fail)
    };
    let mut same = Vec::new();
    for (cmd, file) in [
        (&["ref-check", "--seed", "7", "--channels", "3"][..], "ref-check.json"),
        (&["wick", "--model", "haldane", "--l1", "12", "--l2", "12", "--a", "6", "--a-prime", "3", "--seed", "3"][..], "wick.json"),
    ] {
        let a = tempfile::tempdir().map_err(fail)?;
        let b = tempfile::tempdir().map_err(fail)?;
        for d in [&a, &b] {
            let o = run(d.path(), cmd)?;
            if !o.status.success() {
                return Err(format!("{} exited with {:?}", cmd[0], o.status.code()));
            }
        }
        let x = std::fs::read(a.path().join(file)).map_err(fail)?;
        let y = std::fs::read(b.path().join(file)).map_err(fail)?;
        same.push((cmd[0], x == y));
    }
    ensure(same.iter().all(|s| s.1), format!("byte-identical reports: {same:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("universality identity", universality, 5),
        ("anomalous bubble", anomalous_bubble, 60),
        ("same-chirality bubbles vanish", bubble_vanishing, 10),
        ("T-limit closed forms", t_limits, 10),
        ("lattice Ward identities", ward_identities, 30),
        ("free edge conductance", free_conductance, 300),
        ("Wick rotation", wick_rotation, 120),
        ("RG flow at truncation order", rg_flow, 180),
        ("reproducibility", reproducibility, 60),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += !ok as usize;
        println!(
            "{} {}. {name}: {detail} [{:.2} s of {budget} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
