//! Second-order running couplings of the multi-channel reference model.
//!
//! The interaction is `V = (1/2L²) Σ_{ω≠ω'} Σ_p U_{ωω'}(p) n̂_{p,ω} n̂_{−p,ω'}` with
//! `U = λ Z Z v̂` and `n̂_{p,ω} = L⁻² Σ_k ψ⁺_{k,ω} ψ⁻_{k+p,ω}`. Integrating a
//! single scale gives `W = −V + ½⟨V;V⟩ᵀ + …`; the quartic kernel `K` is the
//! coefficient of `L⁻⁶ ψ⁺_{k1ω} ψ⁻_{k2ω} ψ⁺_{k3ω'} ψ⁻_{k4ω'}` and the quadratic
//! kernel `Ŵ₂` the coefficient of `L⁻² ψ⁺_{kω} ψ⁻_{kω}`.

pub mod wick;

use std::f64::consts::{LN_2, PI, TAU};

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cutoff::{d, form_factor, norm_v, single_scale};
use crate::error::{Error, Result};
use crate::lattice::C64;
use crate::luttinger::{same_chirality_bubble, LuttingerParams};
use crate::quadrature::{gauss_legendre, integrate_log_polar, QuadratureSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub h: i32,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    /// Relevant coupling, held at zero for exactly linear dispersion.
    pub nu: Vec<f64>,
}

impl FlowState {
    pub fn initial(v: Vec<f64>, z: Vec<f64>, lambda: Vec<Vec<f64>>) -> Self {
        let n = v.len();
        Self { h: 0, z, v, lambda, nu: vec![0.0; n] }
    }

    pub fn channels(&self) -> usize {
        self.v.len()
    }

    pub fn params(&self, p_c: f64) -> LuttingerParams {
        LuttingerParams { v: self.v.clone(), z: self.z.clone(), lambda: self.lambda.clone(), p_c }
    }

    /// `U_{ab}(p) = λ_{ab} Z_a Z_b v̂(p)`.
    pub fn coupling(&self, a: usize, b: usize, p: (f64, f64), p_c: f64) -> f64 {
        self.lambda[a][b] * self.z[a] * self.z[b] * form_factor(p, p_c)
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `f_h(‖k‖_ω) / (Z_ω D_ω(k))`.
pub fn single_scale_propagator(h: i32, omega: usize, k: (f64, f64), state: &FlowState) -> C64 {
    let f = single_scale(norm_v(k, state.v[omega]), h);
    if f == 0.0 {
        return C64::new(0.0, 0.0);
    }
    f / (d(k, state.v[omega]) * state.z[omega])
}

/// Closed-form all-scale loop `∫ d²q/(2π)² g_c(q) g_c(q − p)`.
pub fn loop_closed(p: (f64, f64), v: f64, z: f64) -> C64 {
    let num = C64::new(v * p.1, p.0);
    let den = C64::new(v * p.1, -p.0);
    -num / den / (4.0 * PI * v.abs() * z * z)
}

/// Bounds checked after every step: `|ln(Z_{h−1}/Z_h)| ≤ c_z |λ|`,
/// `|v_h − v_0| ≤ c_v |λ|`, `|λ_h| ≤ c_lambda |λ|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    pub c_z: f64,
    pub c_v: f64,
    pub c_lambda: f64,
}

impl Default for Containment {
    fn default() -> Self {
        Self { c_z: 1.0, c_v: 10.0, c_lambda: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgConfig {
    pub p_c: f64,
    pub bounds: Containment,
    /// Values of `|βλ|` below this count as vanishing.
    pub beta_tol: f64,
    /// Uniform angular nodes for the shell integrals.
    pub angular_nodes: usize,
}

impl Default for RgConfig {
    fn default() -> Self {
        Self { p_c: 4.0, bounds: Containment::default(), beta_tol: 1e-10, angular_nodes: 64 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaEvaluation {
    pub h: i32,
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    pub beta_lambda: Vec<Vec<f64>>,
    pub beta_v: Vec<f64>,
    /// Largest same-chirality shell bubble that entered the chain diagrams.
    pub chain_bubble: f64,
    /// Size of the particle-particle ladder alone, before it meets the
    /// particle-hole one.
    pub ladder: f64,
}

impl BetaEvaluation {
    pub fn beta_lambda_max(&self) -> f64 {
        self.beta_lambda.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Pairs of shells whose lowest member is `h`.
fn shell_pairs(h: i32) -> Vec<(i32, i32)> {
    if h >= 0 {
        vec![(h, h)]
    } else {
        vec![(h, h), (h, h + 1), (h + 1, h)]
    }
}

/// `Ŵ₂(k)` from the mixed-chirality sunset with the closed-form inner loop:
/// `−Σ_c ∫ d²p/(2π)² U_{ωc}(p)² g^{(h)}_ω(k + p) Π_c(p)`.
pub fn sunset(h: i32, omega: usize, k: (f64, f64), state: &FlowState, cfg: &RgConfig) -> C64 {
    let v = state.v[omega];
    let (lo, mid, hi) = (2f64.powi(h - 1), 2f64.powi(h), 2f64.powi(h + 1));
    let (x, w) = gauss_legendre(12);
    let n_t = cfg.angular_nodes;
    let mut total = C64::new(0.0, 0.0);
    for (a, b) in [(lo, mid), (mid, hi)] {
        let panels = 4;
        let step = (b - a) / panels as f64;
        for panel in 0..panels {
            let a0 = a + step * panel as f64;
            for (xi, wi) in x.iter().zip(w) {
                let r = a0 + 0.5 * step * (xi + 1.0);
                let f = single_scale(r, h);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n_t {
                    let theta = TAU * (j as f64 + 0.5) / n_t as f64;
                    // s = k + p in coordinates where ‖s‖_ω = |u|.
                    let s = (r * theta.cos(), r * theta.sin() / v);
                    let g = f / (d(s, v) * state.z[omega]);
                    let p = (s.0 - k.0, s.1 - k.1);
                    let mut inner = C64::new(0.0, 0.0);
                    for c in 0..state.channels() {
                        if c == omega || state.lambda[omega][c] == 0.0 {
                            continue;
                        }
                        let u = state.coupling(omega, c, p, cfg.p_c);
                        inner += loop_closed(p, state.v[c], state.z[c]) * (u * u);
                    }
                    total += g * inner * (0.5 * step * wi * r * TAU / n_t as f64);
                }
            }
        }
    }
    -total / (TAU * TAU * v.abs())
}

/// `(z0, z1)` from `−Ŵ₂(k)/Z ≈ −i k0 z0 + k1 z1`, by symmetric differences
/// with steps `2^{h−3}` and `2^{h−4}` combined by one Richardson step.
pub fn vertex_corrections(h: i32, omega: usize, state: &FlowState, cfg: &RgConfig) -> (f64, f64) {
    let f = |k: (f64, f64)| -sunset(h, omega, k, state, cfg) / state.z[omega];
    let deriv = |axis: usize, step: f64| {
        let e = if axis == 0 { (step, 0.0) } else { (0.0, step) };
        (f(e) - f((-e.0, -e.1))) / (2.0 * step)
    };
    let rich = |axis: usize| {
        let s = 2f64.powi(h - 3);
        (deriv(axis, 0.5 * s) * 4.0 - deriv(axis, s)) / 3.0
    };
    let z0 = (C64::new(0.0, 1.0) * rich(0)).re;
    let z1 = rich(1).re;
    (z0, z1)
}

/// Second-order increments on scale `state.h`.
pub fn beta_second_order(state: &FlowState, cfg: &RgConfig) -> Result<BetaEvaluation> {
    let n = state.channels();
    let h = state.h;
    let (z0, z1): (Vec<f64>, Vec<f64>) = (0..n).map(|w| vertex_corrections(h, w, state, cfg)).unzip();
    let beta_v = (0..n).map(|w| (z1[w] - state.v[w] * z0[w]) / (1.0 + z0[w])).collect();

    let pairs = shell_pairs(h);
    // Chain loops at zero transfer: same-chirality shell bubbles.
    let mut chain_bubble = 0.0f64;
    let mut loops = vec![C64::new(0.0, 0.0); n];
    for c in 0..n {
        for &(j1, j2) in &pairs {
            let b = same_chirality_bubble(j1, j2, state.v[c], false);
            chain_bubble = chain_bubble.max(b.norm());
            loops[c] += b / (state.z[c] * state.z[c]);
        }
    }

    let mut beta_lambda = vec![vec![0.0; n]; n];
    let mut ladder = 0.0f64;
    let zero = (0.0, 0.0);
    for a in 0..n {
        for b in a + 1..n {
            let mut k = C64::new(0.0, 0.0);
            for c in 0..n {
                k -= loops[c] * (state.coupling(a, c, zero, cfg.p_c) * state.coupling(c, b, zero, cfg.p_c));
            }
            if state.lambda[a][b] != 0.0 {
                let (ladders, pp) = ladder_pair(h, a, b, state, cfg)?;
                k += ladders;
                ladder = ladder.max(pp);
            }
            let beta = -k.re / (state.z[a] * state.z[b]);
            beta_lambda[a][b] = beta;
            beta_lambda[b][a] = beta;
        }
    }
    Ok(BetaEvaluation { h, z0, z1, beta_lambda, beta_v, chain_bubble, ladder })
}

/// Particle-particle plus particle-hole ladders at zero external momenta, and
/// the size of the particle-particle one alone.
fn ladder_pair(h: i32, a: usize, b: usize, state: &FlowState, cfg: &RgConfig) -> Result<(C64, f64)> {
    let (va, vb) = (state.v[a].abs(), state.v[b].abs());
    let mut sum = C64::new(0.0, 0.0);
    let mut pp_size = 0.0f64;
    for (j1, j2) in shell_pairs(h) {
        let r_min = 2f64.powi(j1.min(j2) - 1) / va.max(vb).max(1.0);
        let r_max = 2f64.powi(j1.max(j2) + 1) / va.min(vb).min(1.0);
        let scale = (state.coupling(a, b, (0.0, 0.0), cfg.p_c) / (state.z[a] * state.z[b])).powi(2);
        let spec = QuadratureSpec { tol: 1e-9 * scale.max(f64::MIN_POSITIVE), ..Default::default() };
        let term = |p: (f64, f64), sign: f64| {
            let u = state.coupling(a, b, p, cfg.p_c) * state.coupling(a, b, (-p.0, -p.1), cfg.p_c);
            let ga = single_scale_propagator(j1, a, p, state);
            let gb = single_scale_propagator(j2, b, (sign * p.0, sign * p.1), state);
            ga * gb * u / (TAU * TAU)
        };
        let pp = integrate_log_polar(|x, y| term((x, y), -1.0), r_min, r_max, &[], &spec)?;
        let both = integrate_log_polar(|x, y| term((x, y), -1.0) + term((x, y), 1.0), r_min, r_max, &[], &spec)?;
        pp_size = pp_size.max(pp.value.norm());
        sum += both.value;
    }
    Ok((sum, pp_size))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTrajectory {
    /// States from `h = 0` down to `h_min`.
    pub states: Vec<FlowState>,
    /// Increments computed on each scale, one fewer than states.
    pub betas: Vec<BetaEvaluation>,
}

/// Iterates `Z_{h−1} = Z_h(1 + z0)`, `Z_{h−1} v_{h−1} = Z_h(v_h + z1)`,
/// `λ_{h−1} = λ_h + βλ` down to `h_min`.
pub fn flow_run(initial: &FlowState, h_min: i32, cfg: &RgConfig) -> Result<FlowTrajectory> {
    initial.params(cfg.p_c).validate()?;
    if h_min > initial.h {
        return Err(Error::Config(format!("h_min = {h_min} lies above the starting scale {}", initial.h)));
    }
    let lam = initial.lambda_max();
    let b = cfg.bounds;
    let mut states = vec![initial.clone()];
    let mut betas = Vec::new();
    let slack = 1e-14;
    while states.last().expect("nonempty").h > h_min {
        let s = states.last().expect("nonempty");
        let beta = beta_second_order(s, cfg)?;
        let n = s.channels();
        let mut next = s.clone();
        next.h -= 1;
        for w in 0..n {
            next.z[w] = s.z[w] * (1.0 + beta.z0[w]);
            next.v[w] = (s.v[w] + beta.z1[w]) / (1.0 + beta.z0[w]);
            for u in 0..n {
                next.lambda[w][u] = s.lambda[w][u] + beta.beta_lambda[w][u];
            }
        }
        for w in 0..n {
            let ratio = (next.z[w] / s.z[w]).ln().abs();
            if !(ratio <= b.c_z * lam + slack) {
                return Err(Error::FlowDivergence { scale: next.h, reason: format!("Z ratio of channel {w} grew by {ratio:.3e}") });
            }
            let dv = (next.v[w] - initial.v[w]).abs();
            if !(dv <= b.c_v * lam + slack) {
                return Err(Error::FlowDivergence { scale: next.h, reason: format!("velocity of channel {w} drifted by {dv:.3e}") });
            }
        }
        if !(next.lambda_max() <= b.c_lambda * lam + slack) {
            return Err(Error::FlowDivergence { scale: next.h, reason: format!("coupling grew to {:.3e}", next.lambda_max()) });
        }
        betas.push(beta);
        states.push(next);
    }
    Ok(FlowTrajectory { states, betas })
}

impl FlowTrajectory {
    /// `max_h |λ_h − λ_0|`.
    pub fn lambda_drift(&self) -> f64 {
        let l0 = &self.states[0].lambda;
        self.states
            .iter()
            .flat_map(|s| s.lambda.iter().flatten().zip(l0.iter().flatten()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// `max_h |v_h − v_0|`.
    pub fn velocity_drift(&self) -> f64 {
        let v0 = &self.states[0].v;
        self.states
            .iter()
            .flat_map(|s| s.v.iter().zip(v0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// Per channel `η` from the least-squares slope of `log₂ Z_h` against `h`,
    /// so that `Z_h ∝ 2^{−η h}`.
    pub fn eta(&self) -> Vec<f64> {
        let hs: Vec<f64> = self.states.iter().map(|s| s.h as f64).collect();
        (0..self.states[0].channels())
            .map(|w| {
                let ys: Vec<f64> = self.states.iter().map(|s| s.z[w].log2()).collect();
                -least_squares_slope(&hs, &ys)
            })
            .collect()
    }
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaVerdict {
    /// `|βλ|` under the tolerance on every scale.
    VanishingAtTruncationOrder,
    /// Fitted `θ > 0`.
    Decaying,
    NotDecaying,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VanishingReport {
    pub verdict: BetaVerdict,
    pub beta_lambda_max: f64,
    /// Fitted `θ` in `|βλ_h| ≈ C 2^{θh}`, when `βλ` is resolved.
    pub theta: Option<f64>,
    /// Largest `|βv_h|` per channel.
    pub beta_v_max: Vec<f64>,
    /// Fitted `θ` for `|βv_h|` per channel; `None` when it vanishes.
    pub beta_v_theta: Vec<Option<f64>>,
    pub eta: Vec<f64>,
}

pub fn vanishing_beta_report(traj: &FlowTrajectory, cfg: &RgConfig) -> Result<VanishingReport> {
    if traj.betas.len() < 10 {
        return Err(Error::Config(format!("need at least 10 scales, trajectory has {}", traj.betas.len())));
    }
    let hs: Vec<f64> = traj.betas.iter().map(|b| b.h as f64).collect();
    let bl: Vec<f64> = traj.betas.iter().map(|b| b.beta_lambda_max()).collect();
    let beta_lambda_max = bl.iter().fold(0.0f64, |m, &x| m.max(x));
    let fit = |ys: &[f64]| -> Option<f64> {
        if ys.iter().all(|&y| y <= cfg.beta_tol) {
            return None;
        }
        let logs: Vec<f64> = ys.iter().map(|y| y.max(f64::MIN_POSITIVE).log2()).collect();
        Some(least_squares_slope(&hs, &logs))
    };
    let theta = fit(&bl);
    let verdict = match theta {
        None => BetaVerdict::VanishingAtTruncationOrder,
        Some(t) if t > 0.0 => BetaVerdict::Decaying,
        Some(_) => BetaVerdict::NotDecaying,
    };
    let n = traj.states[0].channels();
    let mut beta_v_max = Vec::with_capacity(n);
    let mut beta_v_theta = Vec::with_capacity(n);
    for w in 0..n {
        let ys: Vec<f64> = traj.betas.iter().map(|b| b.beta_v[w].abs()).collect();
        beta_v_max.push(ys.iter().fold(0.0f64, |m, &x| m.max(x)));
        beta_v_theta.push(fit(&ys));
    }
    Ok(VanishingReport { verdict, beta_lambda_max, theta, beta_v_max, beta_v_theta, eta: traj.eta() })
}

/// Expected `z0 = z1` for two opposite unit-speed channels at coupling `λ`:
/// `λ² ln 2 / 8π²`.
pub fn opposite_pair_vertex_correction(lambda: f64) -> f64 {
    lambda * lambda * LN_2 / (8.0 * PI * PI)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayProfile {
    pub h: i32,
    /// `max_x |g^{(h)}(x)| (1 + (2^h ‖x‖)³) Z / 2^h`.
    pub constant: f64,
    /// `max_k |ĝ^{(h)}(k)| Z 2^h`.
    pub sup_constant: f64,
}

/// Position-space single-scale propagator on a periodic box of side
/// `box0 · 2^{−h}` with `sites²` points, by FFT.
pub fn position_space_decay(h: i32, omega: usize, state: &FlowState, sites: usize, box0: f64) -> DecayProfile {
    let l = box0 * 2f64.powi(-h);
    let n = sites;
    let half = (n / 2) as i64;
    let wrap = |i: usize| if (i as i64) < half { i as i64 } else { i as i64 - n as i64 };
    let mut data = vec![C64::new(0.0, 0.0); n * n];
    let mut sup = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let k = (TAU * (wrap(i) as f64 + 0.5) / l, TAU * (wrap(j) as f64 + 0.5) / l);
            let g = single_scale_propagator(h, omega, k, state);
            sup = sup.max(g.norm());
            data[i * n + j] = g;
        }
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
    let norm = 1.0 / (l * l);
    let spacing = l / n as f64;
    let scale = 2f64.powi(h);
    let mut constant = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let x = (wrap(i) as f64 * spacing).hypot(wrap(j) as f64 * spacing);
            let g = data[i * n + j].norm() * norm;
            constant = constant.max(g * (1.0 + (scale * x).powi(3)) * state.z[omega] / scale);
        }
    }
    DecayProfile { h, constant, sup_constant: sup * state.z[omega] * scale }
}
