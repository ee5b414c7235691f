use std::f64::consts::{PI, TAU};

use anyhow::{anyhow, Context, Result};
use hall_edge::current::CurrentVariant;
use hall_edge::lattice::BandSource;
use hall_edge::luttinger::{
    bubble_closed, bubble_regularized, directional_limit, discontinuity_matrix, discontinuity_numeric,
    edge_conductance_ref, same_chirality_bubble, t_limit_dynamic, t_limit_static, t_matrix, universality_ensemble,
    LimitOrder, LuttingerParams, PATH_CURVATURE,
};
use hall_edge::response::{
    edge_conductance_free, vertex_ward_check, ward_sum_rule, wick_rotation_check, ConductanceSweep, GridSpectrum,
    ResponseConfig, WickParams,
};
use hall_edge::rg::wick::{compare_with_oracle, GridModel};
use hall_edge::rg::{flow_run, vanishing_beta_report, BetaVerdict, FlowState};
use hall_edge::spectrum::{analyze_edges, half_weights, row_weights, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{LatticeModel, RunConfig};
use crate::report::{Check, OutputDir, RunReport};

pub const COMMANDS: [&str; 7] = ["spectrum", "edges", "conductance", "wick", "ref-check", "bubble", "rg"];

/// Raised when a lattice command runs without a model.
#[derive(Debug)]
pub struct MissingModel;

impl std::fmt::Display for MissingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "this command needs a lattice model: pass --model or add a [model] section")
    }
}

impl std::error::Error for MissingModel {}

/// Runs one command and writes its data files and JSON report.
pub fn dispatch(command: &str, cfg: &RunConfig) -> Result<RunReport> {
    let mut out = OutputDir::create(&cfg.run.output_dir)?;
    let mut report = match command {
        "spectrum" => spectrum(cfg, &mut out),
        "edges" => edges(cfg, &mut out),
        "conductance" => conductance(cfg, &mut out),
        "wick" => wick(cfg, &mut out),
        "ref-check" => ref_check(cfg, &mut out),
        "bubble" => bubble(cfg, &mut out),
        "rg" => rg(cfg, &mut out),
        other => Err(anyhow!("unknown command `{other}`; expected one of {}", COMMANDS.join(", "))),
    }
    .with_context(|| format!("{command} failed"))?;
    out.finish(&mut report)?;
    Ok(report)
}

fn lattice(cfg: &RunConfig) -> Result<LatticeModel> {
    cfg.lattice_model()?.ok_or_else(|| MissingModel.into())
}

fn lattice_inputs(cfg: &RunConfig, m: &LatticeModel) -> Value {
    json!({ "model": m.description, "geometry": cfg.geometry, "tolerances": cfg.tolerances })
}

fn spectrum(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let m = lattice(cfg)?;
    let h = &m.hamiltonian;
    let g = h.geometry();
    let n_k = cfg.tolerances.n_k;
    let per_k = (0..n_k)
        .into_par_iter()
        .map(|j| {
            let k1 = TAU * j as f64 / n_k as f64;
            let f = h.fiber(k1);
            let herm = (&f - f.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
            let es = h.eigensystem(k1)?;
            let rows: Vec<Vec<f64>> = es
                .energies
                .iter()
                .enumerate()
                .map(|(b, &e)| {
                    let (lo, up) = half_weights(&g, &row_weights(&g, es.vectors.column(b).iter()));
                    vec![k1, e, lo, up]
                })
                .collect();
            Ok((herm, rows))
        })
        .collect::<hall_edge::Result<Vec<_>>>()?;
    let herm = per_k.iter().map(|p| p.0).fold(0.0, f64::max);
    let rows: Vec<Vec<f64>> = per_k.into_iter().flat_map(|p| p.1).collect();
    let (e_min, e_max) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[1]), b.max(r[1])));
    let window = cfg.tolerances.delta_tilde;
    let edge_like = rows
        .iter()
        .filter(|r| (r[1] - m.mu).abs() <= window && r[2].max(r[3]) >= cfg.tolerances.loc_threshold)
        .count();
    out.data("spectrum.dat", &["k1", "energy", "weight_lower", "weight_upper"], &rows)?;

    let mut report = RunReport::new("spectrum", cfg.run.seed, lattice_inputs(cfg, &m));
    report.results = json!({
        "n_k": n_k,
        "n_states": rows.len(),
        "energy_min": e_min,
        "energy_max": e_max,
        "edge_localized_states_near_mu": edge_like,
        "max_hermiticity_defect": herm,
    });
    report.check(Check::at_most("fiber_hermiticity", herm, cfg.tolerances.hermiticity));
    Ok(report)
}

#[derive(Serialize)]
struct EdgeRow {
    #[serde(rename = "L1")]
    l1: usize,
    #[serde(rename = "L2")]
    l2: usize,
    mu: f64,
    delta: f64,
    delta_tilde: f64,
    branch: usize,
    side: Side,
    k_f: f64,
    v: f64,
    chirality: i32,
    loc_rate: f64,
    loc_r2: f64,
}

fn edges(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let m = lattice(cfg)?;
    let h = &m.hamiltonian;
    let g = h.geometry();
    let ecfg = cfg.tolerances.edge_config(m.mu);
    let a = analyze_edges(h, &ecfg)?;
    let rows: Vec<EdgeRow> = a
        .modes
        .iter()
        .map(|md| EdgeRow {
            l1: g.l1,
            l2: g.l2,
            mu: m.mu,
            delta: ecfg.delta,
            delta_tilde: ecfg.delta_tilde,
            branch: md.branch,
            side: md.side,
            k_f: md.k_f,
            v: md.v,
            chirality: md.v.signum() as i32,
            loc_rate: md.loc_rate,
            loc_r2: md.loc_r2,
        })
        .collect();
    out.csv("edges.csv", &rows)?;
    let samples: Vec<Vec<f64>> = a
        .branches
        .iter()
        .flat_map(|b| {
            let side = if b.side == Side::Lower { 0.0 } else { 1.0 };
            b.samples.iter().map(move |s| vec![b.label as f64, side, s.k1, s.energy])
        })
        .collect();
    out.data("branches.dat", &["branch", "side_upper", "k1", "energy"], &samples)?;

    let (lower, upper) = (a.chirality(Side::Lower), a.chirality(Side::Upper));
    let mut report = RunReport::new("edges", cfg.run.seed, lattice_inputs(cfg, &m));
    report.results = json!({
        "modes": a.modes,
        "assumptions": a.report,
        "chirality_lower": lower,
        "chirality_upper": upper,
        "predicted_conductance": a.predicted_conductance(),
    });
    for (name, flag) in [("regular_branches", &a.report.a), ("edge_only_window", &a.report.b), ("localized", &a.report.c), ("separated_fermi_points", &a.report.d)] {
        report.check(Check::holds(name, flag.passed));
    }
    report.check(Check::holds("chirality_balance", lower + upper == 0));
    Ok(report)
}

#[derive(Serialize)]
struct ConductanceRow {
    #[serde(rename = "L1")]
    l1: usize,
    #[serde(rename = "L2")]
    l2: usize,
    mu: f64,
    a: usize,
    a_prime: usize,
    p1: f64,
    re: f64,
    im: f64,
}

fn conductance(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let m = lattice(cfg)?;
    let h = &m.hamiltonian;
    let g = h.geometry();
    let tol = &cfg.tolerances;
    let expected = match cfg.run.expected_chirality {
        Some(c) => c,
        None => analyze_edges(h, &tol.edge_config(m.mu)).context("edge analysis for the expected value")?.chirality(Side::Lower),
    };
    let sweep = ConductanceSweep { a: cfg.geometry.a, a_prime: cfg.geometry.a_prime, p1_count: cfg.geometry.p1_count };
    let est = edge_conductance_free(h, m.mu, &sweep)?;
    let rows: Vec<ConductanceRow> = est
        .points
        .iter()
        .map(|p| ConductanceRow { l1: g.l1, l2: g.l2, mu: m.mu, a: sweep.a, a_prime: sweep.a_prime, p1: p.p1, re: p.re, im: p.im })
        .collect();
    out.csv("conductance.csv", &rows)?;

    // Lattice Ward identities at seeded momenta validate the response first.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let spec = GridSpectrum::new(h)?;
    let rcfg = ResponseConfig::ground_state(m.mu);
    let mut sum_rule: f64 = 0.0;
    let mut vertex: f64 = 0.0;
    for _ in 0..3 {
        let p0 = rng.random_range(0.05..2.0);
        let y2 = rng.random_range(1..g.l2 - 1);
        let r = ward_sum_rule(h, &spec, &rcfg, p0, y2)?;
        sum_rule = sum_rule.max(r[0]).max(r[1]);
        let mut mom = || (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let (p, k) = (mom(), mom());
        vertex = vertex.max(vertex_ward_check(h, m.mu, CurrentVariant::Conserved, p, k)?.0);
    }

    let two_pi_g = TAU * est.g;
    let mut report = RunReport::new("conductance", cfg.run.seed, lattice_inputs(cfg, &m));
    report.results = json!({
        "g": est.g,
        "two_pi_g": two_pi_g,
        "stderr": est.stderr,
        "max_imag": est.max_imag,
        "expected_two_pi_g": expected,
        "ward_sum_rule_residual": sum_rule,
        "vertex_ward_residual": vertex,
    });
    match cfg.run.phase.as_deref() {
        Some("topological") => report.check(Check::holds("topological_edge_count", expected.abs() == 1)),
        Some("trivial") => report.check(Check::holds("trivial_edge_count", expected == 0)),
        Some(other) => return Err(anyhow!("unknown phase `{other}`; expected topological or trivial")),
        None => {}
    }
    report.check(Check::at_most("two_pi_g_deviation", (two_pi_g - expected as f64).abs(), tol.conductance));
    report.check(Check::at_most("ward_sum_rule", sum_rule, tol.ward));
    report.check(Check::at_most("vertex_ward", vertex, tol.ward));
    Ok(report)
}

#[derive(Serialize)]
struct WickRow {
    #[serde(rename = "L1")]
    l1: usize,
    #[serde(rename = "L2")]
    l2: usize,
    mu: f64,
    a: usize,
    a_prime: usize,
    p1_index: i64,
    eta: f64,
    horizon: f64,
    beta: f64,
    eta_beta: f64,
    lhs_re: f64,
    lhs_im: f64,
    rhs_re: f64,
    rhs_im: f64,
    residual: f64,
}

fn wick(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let m = lattice(cfg)?;
    let h = &m.hamiltonian;
    let g = h.geometry();
    let spec = GridSpectrum::new(h)?;
    let r = &cfg.run;
    let rows = r
        .betas
        .iter()
        .map(|&beta| {
            let w = WickParams {
                mu: m.mu,
                beta,
                horizon: r.horizon,
                eta: r.eta,
                p1_index: r.p1_index,
                a: cfg.geometry.a,
                a_prime: cfg.geometry.a_prime,
            };
            let c = wick_rotation_check(h, &spec, &w)?;
            Ok(WickRow {
                l1: g.l1,
                l2: g.l2,
                mu: m.mu,
                a: w.a,
                a_prime: w.a_prime,
                p1_index: w.p1_index,
                eta: w.eta,
                horizon: w.horizon,
                beta,
                eta_beta: c.eta_beta,
                lhs_re: c.lhs.re,
                lhs_im: c.lhs.im,
                rhs_re: c.rhs.re,
                rhs_im: c.rhs.im,
                residual: c.residual,
            })
        })
        .collect::<hall_edge::Result<Vec<_>>>()?;
    out.csv("wick.csv", &rows)?;

    let mut inputs = lattice_inputs(cfg, &m);
    inputs["wick"] = json!({ "betas": r.betas, "horizon": r.horizon, "eta": r.eta, "p1_index": r.p1_index });
    let mut report = RunReport::new("wick", cfg.run.seed, inputs);
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[0].residual / w[1].residual).collect();
    report.results = json!({
        "residuals": rows.iter().map(|w| w.residual).collect::<Vec<_>>(),
        "doubling_ratios": ratios,
    });
    for (i, q) in ratios.iter().enumerate() {
        report.check(Check::at_least(&format!("residual_ratio_{i}"), *q, cfg.tolerances.beta_doubling));
    }
    Ok(report)
}

#[derive(Serialize)]
struct LimitRow {
    set: usize,
    channels: usize,
    lambda_scale: f64,
    seed: u64,
    static_deviation: f64,
    dynamic_deviation: f64,
    numeric_discontinuity_deviation: f64,
}

fn real_to_complex(m: &nalgebra::DMatrix<f64>) -> hall_edge::lattice::CMatrix {
    m.map(|x| hall_edge::lattice::C64::new(x, 0.0))
}

fn ref_check(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let r = &cfg.reference;
    let tol = &cfg.tolerances;
    if r.channels == 0 {
        return Err(anyhow!("[reference] channels must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let ensemble = universality_ensemble(&mut rng, r.ensemble_size, r.channels, r.lambda_scale)?;

    let sets: Vec<LuttingerParams> = (0..r.limit_sets)
        .map(|_| {
            let n = rng.random_range(1..=r.channels);
            LuttingerParams::random(&mut rng, n, r.lambda_scale)
        })
        .collect();
    let rows = sets
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let f = |q| t_matrix(p, q);
            let s = directional_limit(f, LimitOrder::SpaceFirst, PATH_CURVATURE)?;
            let d = directional_limit(f, LimitOrder::TimeFirst, PATH_CURVATURE)?;
            let a = discontinuity_numeric(p)?;
            Ok(LimitRow {
                set: i,
                channels: p.channels(),
                lambda_scale: r.lambda_scale,
                seed: cfg.run.seed,
                static_deviation: (s - real_to_complex(&t_limit_static(p)?)).camax(),
                dynamic_deviation: (d - real_to_complex(&t_limit_dynamic(p)?)).camax(),
                numeric_discontinuity_deviation: (a - real_to_complex(&discontinuity_matrix(p)?)).camax(),
            })
        })
        .collect::<hall_edge::Result<Vec<_>>>()?;
    out.csv("ref_limits.csv", &rows)?;
    let t_dev = rows.iter().map(|x| x.static_deviation.max(x.dynamic_deviation)).fold(0.0, f64::max);
    let a_dev = rows.iter().map(|x| x.numeric_discontinuity_deviation).fold(0.0, f64::max);

    let mut report = RunReport::new("ref-check", cfg.run.seed, json!({ "reference": r, "tolerances": tol }));
    let single = match &r.params {
        Some(p) => {
            let g = edge_conductance_ref(p)?;
            let err = (TAU * g - TAU * p.chiral_conductance()).abs();
            report.check(Check::at_most("given_params_universality", err, tol.reference));
            json!({ "g": g, "two_pi_g": TAU * g, "chirality": TAU * p.chiral_conductance(), "abs_error": err })
        }
        None => Value::Null,
    };
    report.results = json!({
        "samples": ensemble.samples,
        "max_abs_error": ensemble.max_abs_error,
        "mean_abs_error": ensemble.mean_abs_error,
        "worst_params": ensemble.worst_params,
        "t_limit_max_deviation": t_dev,
        "numeric_discontinuity_max_deviation": a_dev,
        "given_params": single,
    });
    report.check(Check::at_most("universality", ensemble.max_abs_error, tol.reference));
    report.check(Check::at_most("t_limits", t_dev, tol.t_limit));
    Ok(report)
}

#[derive(Serialize)]
struct BubbleRow {
    p0: f64,
    p1: f64,
    v: f64,
    h: i32,
    #[serde(rename = "N")]
    n: i32,
    re: f64,
    im: f64,
    quadrature_error: f64,
    nodes: usize,
    abs_error: f64,
}

#[derive(Serialize)]
struct ShellRow {
    h1: i32,
    h2: i32,
    v: f64,
    re: f64,
    im: f64,
    control_re: f64,
    control_im: f64,
}

fn bubble(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let r = &cfg.reference;
    let tol = &cfg.tolerances;
    let p = (r.bubble_momentum[0], r.bubble_momentum[1]);
    let v = r.bubble_velocity;
    let exact = bubble_closed(p, v);
    let spec = tol.quadrature();
    let rows = r
        .bubble_scales
        .par_iter()
        .map(|&[h, n]| {
            let b = bubble_regularized(p, v, h, n, &spec)?;
            Ok(BubbleRow {
                p0: p.0,
                p1: p.1,
                v,
                h,
                n,
                re: b.value.re,
                im: b.value.im,
                quadrature_error: b.error,
                nodes: b.nodes,
                abs_error: (b.value - exact).norm(),
            })
        })
        .collect::<hall_edge::Result<Vec<_>>>()?;
    out.csv("bubble.csv", &rows)?;

    let mut shells = Vec::new();
    for &h1 in &r.shells {
        for &h2 in &r.shells {
            let b = same_chirality_bubble(h1, h2, v, false);
            let c = same_chirality_bubble(h1, h2, v, true);
            shells.push(ShellRow { h1, h2, v, re: b.re, im: b.im, control_re: c.re, control_im: c.im });
        }
    }
    out.csv("same_chirality.csv", &shells)?;

    let errors: Vec<f64> = rows.iter().map(|b| b.abs_error).collect();
    let same = shells.iter().map(|s| s.re.hypot(s.im)).fold(0.0, f64::max);
    let control = shells
        .iter()
        .filter(|s| (s.h1 - s.h2).abs() <= 1)
        .map(|s| s.control_re.hypot(s.control_im))
        .fold(f64::INFINITY, f64::min);

    let mut report = RunReport::new("bubble", cfg.run.seed, json!({ "reference": r, "tolerances": tol }));
    report.results = json!({
        "closed_form": [exact.re, exact.im],
        "errors": errors,
        "same_chirality_max": same,
        "control_min": control,
    });
    if let Some(last) = errors.last() {
        report.check(Check::at_most("bubble_finest", *last, tol.bubble));
    }
    report.check(Check::holds("bubble_error_decreasing", errors.windows(2).all(|w| w[1] < w[0])));
    report.check(Check::at_most("same_chirality", same, tol.same_chirality));
    report.check(Check::at_least("control", control, tol.control));
    Ok(report)
}

#[derive(Serialize)]
struct FlowRow {
    h: i32,
    channel: usize,
    lambda: f64,
    z: f64,
    v: f64,
    v_initial: f64,
    z0: Option<f64>,
    z1: Option<f64>,
    beta_v: Option<f64>,
    beta_lambda_max: Option<f64>,
}

fn rg(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunReport> {
    let s = &cfg.rg;
    let tol = &cfg.tolerances;
    let n = s.velocities.len();
    if n < 2 {
        return Err(anyhow!("[rg] velocities needs at least two channels"));
    }
    let rcfg = s.rg_config(tol.beta_lambda);
    let initial = FlowState::initial(s.velocities.clone(), vec![1.0; n], s.couplings());
    let traj = flow_run(&initial, -(s.scales as i32), &rcfg)?;
    let verdict = vanishing_beta_report(&traj, &rcfg)?;

    let mut rows = Vec::new();
    for (i, st) in traj.states.iter().enumerate() {
        let beta = traj.betas.get(i);
        for c in 0..n {
            rows.push(FlowRow {
                h: st.h,
                channel: c,
                lambda: s.lambda,
                z: st.z[c],
                v: st.v[c],
                v_initial: s.velocities[c],
                z0: beta.map(|b| b.z0[c]),
                z1: beta.map(|b| b.z1[c]),
                beta_v: beta.map(|b| b.beta_v[c]),
                beta_lambda_max: beta.map(|b| b.beta_lambda_max()),
            });
        }
    }
    out.csv("rg_flow.csv", &rows)?;
    let log_z: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|st| std::iter::once(st.h as f64).chain(st.z.iter().map(|z| z.log2())).collect())
        .collect();
    let header: Vec<String> = std::iter::once("h".to_string()).chain((0..n).map(|c| format!("log2_z{c}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.data("rg_z.dat", &header, &log_z)?;

    let lam = s.lambda.abs();
    let eta = traj.eta();
    let beta_max = traj.betas.iter().map(|b| b.beta_lambda_max()).fold(0.0, f64::max);
    let mut report = RunReport::new("rg", cfg.run.seed, json!({ "rg": s, "tolerances": tol }));
    let mut results = json!({
        "lambda_drift": traj.lambda_drift(),
        "velocity_drift": traj.velocity_drift(),
        "eta": eta,
        "beta_lambda_max": beta_max,
        "vanishing": verdict,
        "final_state": traj.states.last(),
    });
    report.check(Check::at_most("lambda_drift", traj.lambda_drift(), lam.powf(1.5)));
    report.check(Check::at_most("velocity_drift", traj.velocity_drift(), lam.sqrt()));
    report.check(Check::holds("eta_positive", eta.iter().all(|&e| e > 0.0)));
    report.check(Check::at_most("eta_max", eta.iter().cloned().fold(0.0, f64::max), 10.0 * lam * lam));
    report.check(Check::at_most("beta_lambda", beta_max, tol.beta_lambda));
    report.check(Check::holds("vanishing_verdict", verdict.verdict == BetaVerdict::VanishingAtTruncationOrder));

    if s.oracle {
        let grid = GridModel::new(16, 16.0, 0, &initial, s.p_c)?;
        let triples = [([1, 2], [3, -1], [0, 5]), ([2, 7], [-3, 1], [4, 4])];
        let devs: Vec<f64> = triples
            .iter()
            .enumerate()
            .map(|(i, &(k1, k2, k3))| {
                let w = i % n;
                compare_with_oracle(&grid, w, (w + 1) % n, k1, k2, k3).max_deviation()
            })
            .collect();
        let dev = devs.iter().cloned().fold(0.0, f64::max);
        results["oracle_max_deviation"] = json!(dev);
        report.check(Check::at_most("wick_oracle", dev, tol.oracle));
    }
    report.results = results;
    Ok(report)
}
