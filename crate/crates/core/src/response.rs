//! Euclidean linear response of the free lattice Gibbs state.
//!
//! Two-point functions use the spectral form
//! `Ŝ_μν(p; x2, y2) = L1⁻¹ Σ_k Σ_ab V^μ_ab(k, p1; x2) V^ν_ba(k+p1, −p1; y2) F_ab`
//! with `F_ab = (n_b − n_a) / (i p0 + e_a − e_b)`, `a` a band at `k` and `b` a
//! band at `k + p1`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::current::{check_current_range, in_bands, strip_operator, Component, CurrentVariant};
use crate::error::{Error, Result};
use crate::lattice::{BandSource, CMatrix, Eigensystem, LatticeHamiltonian, C64};

/// Energy differences below this count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Temperature {
    Zero,
    Beta(f64),
}

impl Temperature {
    pub fn occupation(self, e: f64, mu: f64) -> f64 {
        match self {
            Temperature::Zero => {
                if e < mu {
                    1.0
                } else if e > mu {
                    0.0
                } else {
                    0.5
                }
            }
            Temperature::Beta(beta) => {
                let x = beta * (e - mu);
                if x > 0.0 {
                    let t = (-x).exp();
                    t / (1.0 + t)
                } else {
                    1.0 / (1.0 + x.exp())
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseConfig {
    pub mu: f64,
    pub temperature: Temperature,
    pub variant: CurrentVariant,
}

impl ResponseConfig {
    pub fn ground_state(mu: f64) -> Self {
        Self { mu, temperature: Temperature::Zero, variant: CurrentVariant::Conserved }
    }
}

/// `F_ab` of the spectral form, with the `p0 = 0` degenerate limit taken
/// analytically.
pub fn spectral_weight(ea: f64, eb: f64, p0: f64, cfg: &ResponseConfig, k1: f64) -> Result<C64> {
    let na = cfg.temperature.occupation(ea, cfg.mu);
    let nb = cfg.temperature.occupation(eb, cfg.mu);
    if p0 != 0.0 {
        return Ok(C64::new(nb - na, 0.0) / C64::new(ea - eb, p0));
    }
    if (ea - eb).abs() > DEGENERACY_TOL {
        return Ok(C64::new((nb - na) / (ea - eb), 0.0));
    }
    match cfg.temperature {
        Temperature::Beta(beta) => Ok(C64::new(beta * na * (1.0 - na), 0.0)),
        Temperature::Zero if na == nb => Ok(C64::new(0.0, 0.0)),
        Temperature::Zero => Err(Error::DegenerateCrossing { k1 }),
    }
}

/// Eigensystems on the `L1` momenta `2πj/L1`.
#[derive(Clone, Debug)]
pub struct GridSpectrum {
    pub states: Vec<Eigensystem>,
}

impl GridSpectrum {
    pub fn new<S: BandSource + ?Sized>(src: &S) -> Result<Self> {
        let l1 = src.geometry().l1;
        let states = (0..l1)
            .into_par_iter()
            .map(|j| {
                let k1 = TAU * j as f64 / l1 as f64;
                src.eigensystem(k1).map_err(|e| match e {
                    Error::Eigensolver { .. } => Error::Eigensolver { k_index: j, k1 },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State at grid index `j` taken modulo `L1`.
    pub fn at(&self, j: i64) -> &Eigensystem {
        &self.states[j.rem_euclid(self.states.len() as i64) as usize]
    }

    pub fn momentum(&self, m: i64) -> f64 {
        TAU * m as f64 / self.states.len() as f64
    }
}

/// An operator summed over a set of rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Strip {
    pub component: Component,
    pub rows: Vec<usize>,
}

impl Strip {
    pub fn new(component: Component, rows: impl IntoIterator<Item = usize>) -> Self {
        Self { component, rows: rows.into_iter().collect() }
    }

    pub fn row(component: Component, x2: usize) -> Self {
        Self { component, rows: vec![x2] }
    }
}

/// Correlation table `Σ_{x∈left_i} Σ_{y∈right_j} Ŝ_{μ_i ν_j}((p0, 2πm/L1); x, y)`.
pub fn strip_correlations(
    h: &LatticeHamiltonian,
    spectrum: &GridSpectrum,
    cfg: &ResponseConfig,
    p0: f64,
    m: i64,
    left: &[Strip],
    right: &[Strip],
) -> Result<CMatrix> {
    check_current_range(h)?;
    let l1 = spectrum.len();
    let p1 = spectrum.momentum(m);
    let per_k = (0..l1 as i64)
        .into_par_iter()
        .map(|j| -> Result<CMatrix> {
            let sa = spectrum.at(j);
            let sb = spectrum.at(j + m);
            let k = sa.k1;
            let kp = k + p1;
            let mut f = CMatrix::zeros(sa.len(), sb.len());
            for a in 0..sa.len() {
                for b in 0..sb.len() {
                    f[(a, b)] = spectral_weight(sa.energies[a], sb.energies[b], p0, cfg, k)?;
                }
            }
            let lefts = left
                .iter()
                .map(|s| {
                    let op = strip_operator(h, s.component, s.rows.iter().copied(), k, p1, cfg.variant);
                    in_bands(&op, sa, sb).map(|v| v.component_mul(&f))
                })
                .collect::<Result<Vec<_>>>()?;
            let rights = right
                .iter()
                .map(|s| {
                    let op = strip_operator(h, s.component, s.rows.iter().copied(), kp, -p1, cfg.variant);
                    in_bands(&op, sb, sa).map(|v| v.transpose())
                })
                .collect::<Result<Vec<_>>>()?;
            let mut table = CMatrix::zeros(left.len(), right.len());
            for (i, l) in lefts.iter().enumerate() {
                for (jj, r) in rights.iter().enumerate() {
                    table[(i, jj)] = l.iter().zip(r.iter()).map(|(x, y)| x * y).sum();
                }
            }
            Ok(table)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = CMatrix::zeros(left.len(), right.len());
    for t in &per_k {
        total += t;
    }
    Ok(total / C64::new(l1 as f64, 0.0))
}

/// Row-resolved two-point functions for all component pairs.
#[derive(Clone, Debug)]
pub struct ResponseResult {
    pub p0: f64,
    pub p1: f64,
    pub rows: Vec<usize>,
    /// `table[3μ + ν]` is the `rows × rows` matrix `Ŝ_μν(p; x2, y2)`.
    pub table: Vec<CMatrix>,
}

impl ResponseResult {
    pub fn get(&self, mu: Component, nu: Component) -> &CMatrix {
        &self.table[3 * mu.index() + nu.index()]
    }
}

pub fn current_current(
    h: &LatticeHamiltonian,
    spectrum: &GridSpectrum,
    cfg: &ResponseConfig,
    p0: f64,
    m: i64,
    rows: &[usize],
) -> Result<ResponseResult> {
    let strips: Vec<Strip> = Component::ALL
        .iter()
        .flat_map(|&c| rows.iter().map(move |&x| Strip::row(c, x)))
        .collect();
    let all = strip_correlations(h, spectrum, cfg, p0, m, &strips, &strips)?;
    let n = rows.len();
    let mut table = Vec::with_capacity(9);
    for mu in 0..3 {
        for nu in 0..3 {
            table.push(all.view((mu * n, nu * n), (n, n)).into_owned());
        }
    }
    Ok(ResponseResult { p0, p1: spectrum.momentum(m), rows: rows.to_vec(), table })
}

/// `|Σ_{x2} Ŝ_{0,i}((p0, 0); x2, y2)|` for `i = 1, 2`.
pub fn ward_sum_rule(
    h: &LatticeHamiltonian,
    spectrum: &GridSpectrum,
    cfg: &ResponseConfig,
    p0: f64,
    y2: usize,
) -> Result<[f64; 2]> {
    let all = Strip::new(Component::Density, 0..h.geometry().l2);
    let t = strip_correlations(
        h,
        spectrum,
        cfg,
        p0,
        0,
        &[all],
        &[Strip::row(Component::Along, y2), Strip::row(Component::Across, y2)],
    )?;
    Ok([t[(0, 0)].norm(), t[(0, 1)].norm()])
}

/// Residual of charge continuity in the first argument,
/// `p0 Σ_{x2} Ŝ_00(p; x2, y2) + (1 − e^{−i p1}) Σ_{x2} Ŝ_10(p; x2, y2)`,
/// together with the size of the two terms.
pub fn continuity_residual(
    h: &LatticeHamiltonian,
    spectrum: &GridSpectrum,
    cfg: &ResponseConfig,
    p0: f64,
    m: i64,
    y2: usize,
) -> Result<(f64, f64)> {
    let rows = 0..h.geometry().l2;
    let t = strip_correlations(
        h,
        spectrum,
        cfg,
        p0,
        m,
        &[Strip::new(Component::Density, rows.clone()), Strip::new(Component::Along, rows)],
        &[Strip::row(Component::Density, y2)],
    )?;
    let p1 = spectrum.momentum(m);
    let a = t[(0, 0)] * p0;
    let b = t[(1, 0)] * (C64::new(1.0, 0.0) - C64::from_polar(1.0, -p1));
    Ok(((a + b).norm(), a.norm().max(b.norm())))
}

/// Free Euclidean propagator `(−i k0 + Ĥ(k1) − μ)⁻¹` on the interior rows.
pub fn propagator(h: &LatticeHamiltonian, mu: f64, k0: f64, k1: f64) -> Result<CMatrix> {
    let idx = h.geometry().interior_indices();
    let n = idx.len();
    let mut a = h.fiber(k1).view((idx.start, idx.start), (n, n)).into_owned();
    for i in 0..n {
        a[(i, i)] += C64::new(-mu, -k0);
    }
    a.try_inverse().ok_or(Error::Singular { p0: k0, p1: k1, condition: f64::INFINITY })
}

/// Residual of the vertex identity
/// `p0 G N G' + (1 − e^{−i p1}) G J1 G' − i (G − G') = 0`, where `G = G(k)`,
/// `G' = G(k + p)` and `N`, `J1` are the density and `j1` kernels summed over
/// all rows. Returns the residual and `max |G − G'|` as its scale.
pub fn vertex_ward_check(
    h: &LatticeHamiltonian,
    mu: f64,
    variant: CurrentVariant,
    p: (f64, f64),
    k: (f64, f64),
) -> Result<(f64, f64)> {
    check_current_range(h)?;
    let g = h.geometry();
    let idx = g.interior_indices();
    let n = idx.len();
    let gk = propagator(h, mu, k.0, k.1)?;
    let gkp = propagator(h, mu, k.0 + p.0, k.1 + p.1)?;
    let j1 = strip_operator(h, Component::Along, 0..g.l2, k.1, p.1, variant);
    let j1 = j1.view((idx.start, idx.start), (n, n));
    let phase = C64::new(1.0, 0.0) - C64::from_polar(1.0, -p.1);
    let diff = &gk - &gkp;
    let r = &gk * &gkp * C64::new(p.0, 0.0) + &gk * j1 * &gkp * phase - &diff * C64::new(0.0, 1.0);
    Ok((r.camax(), diff.camax()))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConductanceSweep {
    pub a: usize,
    pub a_prime: usize,
    /// Number of grid momenta `2πm/L1`, `m = 1..=p1_count`.
    pub p1_count: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConductancePoint {
    pub p1: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConductanceEstimate {
    pub a: usize,
    pub a_prime: usize,
    pub points: Vec<ConductancePoint>,
    pub g: f64,
    pub stderr: f64,
    pub max_imag: f64,
}

impl ConductanceEstimate {
    /// `|G − target| / |target|`, or `|G|` when the target vanishes.
    pub fn relative_error(&self, target: f64) -> f64 {
        if target == 0.0 {
            self.g.abs()
        } else {
            (self.g - target).abs() / target.abs()
        }
    }
}

/// `½ [G(p1) + G(−p1)]` with `G(p1) = Σ_{x2≤a} Σ_{y2≤a'} Ŝ_01((0⁺, p1); x2, y2)`.
pub fn strip_conductance(
    h: &LatticeHamiltonian,
    spectrum: &GridSpectrum,
    mu: f64,
    a: usize,
    a_prime: usize,
    m: i64,
) -> Result<C64> {
    let cfg = ResponseConfig::ground_state(mu);
    let left = [Strip::new(Component::Density, 0..=a)];
    let right = [Strip::new(Component::Along, 0..=a_prime)];
    let plus = strip_correlations(h, spectrum, &cfg, 0.0, m, &left, &right)?[(0, 0)];
    let minus = strip_correlations(h, spectrum, &cfg, 0.0, -m, &left, &right)?[(0, 0)];
    Ok((plus + minus) * 0.5)
}

/// Least-squares line through `(x, y)`; returns intercept and its standard error.
pub fn linear_intercept(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = n - 2.0;
    let stderr = if dof > 0.0 {
        let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / dof * (1.0 / n + mx * mx / sxx)).sqrt()
    } else {
        0.0
    };
    (intercept, stderr)
}

/// Free edge conductance with the `p0 → 0⁺` limit taken first and `p1 → 0`
/// by a linear fit over the three smallest momenta.
pub fn edge_conductance_free(h: &LatticeHamiltonian, mu: f64, sweep: &ConductanceSweep) -> Result<ConductanceEstimate> {
    let l2 = h.geometry().l2;
    if sweep.a_prime >= sweep.a || sweep.a >= l2 {
        return Err(Error::Config(format!(
            "need a' < a < L2, got a' = {}, a = {}, L2 = {l2}",
            sweep.a_prime, sweep.a
        )));
    }
    if sweep.p1_count < 3 {
        return Err(Error::Config("need at least 3 momenta for the p1 -> 0 fit".into()));
    }
    let spectrum = GridSpectrum::new(h)?;
    let points = (1..=sweep.p1_count as i64)
        .map(|m| {
            let g = strip_conductance(h, &spectrum, mu, sweep.a, sweep.a_prime, m)?;
            Ok(ConductancePoint { p1: spectrum.momentum(m), re: g.re, im: g.im })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points[..3].iter().map(|p| p.p1).collect();
    let ys: Vec<f64> = points[..3].iter().map(|p| p.re).collect();
    let (g, stderr) = linear_intercept(&xs, &ys);
    let max_imag = points.iter().map(|p| p.im.abs()).fold(0.0, f64::max);
    Ok(ConductanceEstimate { a: sweep.a, a_prime: sweep.a_prime, points, g, stderr, max_imag })
}

/// The opposite order of limits: `p1 = 0` first, then a small `p0 = eta`.
pub fn static_limit(h: &LatticeHamiltonian, mu: f64, a: usize, a_prime: usize, eta: f64) -> Result<C64> {
    let spectrum = GridSpectrum::new(h)?;
    let cfg = ResponseConfig::ground_state(mu);
    let t = strip_correlations(
        h,
        &spectrum,
        &cfg,
        eta,
        0,
        &[Strip::new(Component::Density, 0..=a)],
        &[Strip::new(Component::Along, 0..=a_prime)],
    )?;
    Ok(t[(0, 0)])
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WickCheck {
    pub eta_beta: f64,
    pub lhs: C64,
    pub rhs: C64,
    pub residual: f64,
}

/// Nearest bosonic Matsubara frequency to `eta`.
pub fn bosonic_frequency(eta: f64, beta: f64) -> Result<f64> {
    let step = TAU / beta;
    let w = step * (eta / step).round();
    if w == 0.0 {
        return Err(Error::ZeroBosonicFrequency { eta, beta });
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WickParams {
    pub mu: f64,
    pub beta: f64,
    pub horizon: f64,
    pub eta: f64,
    pub p1_index: i64,
    pub a: usize,
    pub a_prime: usize,
}

/// Compares the damped real-time commutator
/// `−i ∫_{−T}^0 e^{ηt} L1⁻¹ ⟨[n̂^{≤a}_{p1}(t), ĵ^{≤a'}_{1,−p1}]⟩ dt`
/// with its Euclidean counterpart at the bosonic frequency nearest to `η`.
pub fn wick_rotation_check(h: &LatticeHamiltonian, spectrum: &GridSpectrum, w: &WickParams) -> Result<WickCheck> {
    check_current_range(h)?;
    let eta_beta = bosonic_frequency(w.eta, w.beta)?;
    let temp = Temperature::Beta(w.beta);
    let l1 = spectrum.len();
    let p1 = spectrum.momentum(w.p1_index);
    let per_k = (0..l1 as i64)
        .into_par_iter()
        .map(|j| -> Result<(C64, C64)> {
            let sa = spectrum.at(j);
            let sb = spectrum.at(j + w.p1_index);
            let k = sa.k1;
            let dens = strip_operator(h, Component::Density, 0..=w.a, k, p1, CurrentVariant::Conserved);
            let cur = strip_operator(h, Component::Along, 0..=w.a_prime, k + p1, -p1, CurrentVariant::Conserved);
            let x = in_bands(&dens, sa, sb)?;
            let y = in_bands(&cur, sb, sa)?;
            let mut lhs = C64::new(0.0, 0.0);
            let mut rhs = C64::new(0.0, 0.0);
            for a in 0..sa.len() {
                let na = temp.occupation(sa.energies[a], w.mu);
                for b in 0..sb.len() {
                    let nb = temp.occupation(sb.energies[b], w.mu);
                    let dn = na - nb;
                    if dn == 0.0 {
                        continue;
                    }
                    let weight = x[(a, b)] * y[(b, a)] * dn;
                    let omega = sa.energies[a] - sb.energies[b];
                    let z = C64::new(w.eta, omega);
                    lhs += weight * (C64::new(1.0, 0.0) - (-z * w.horizon).exp()) / z;
                    rhs += weight / C64::new(eta_beta, omega);
                }
            }
            let minus_i = C64::new(0.0, -1.0);
            Ok((lhs * minus_i, rhs * minus_i))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut lhs, mut rhs) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for (l, r) in per_k {
        lhs += l;
        rhs += r;
    }
    lhs /= l1 as f64;
    rhs /= l1 as f64;
    Ok(WickCheck { eta_beta, lhs, rhs, residual: (lhs - rhs).norm() })
}
