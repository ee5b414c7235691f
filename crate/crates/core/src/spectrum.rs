//! Edge-mode spectroscopy: band scans, branch continuation, Fermi points and
//! the edge-mode assumptions (bulk gap, localisation, nonzero velocity,
//! separated Fermi momenta).

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{hermitian_eigen, BandSource, CMatrix, CylinderGeometry, C64};

pub type CVector = DVector<C64>;

/// Minimum overlap for two states at neighbouring momenta to be continued
/// as the same branch.
pub const OVERLAP_THRESHOLD: f64 = 0.7;

/// Row weights below this are treated as numerical zero in localisation fits.
const WEIGHT_FLOOR: f64 = 1e-26;

/// Row weights this far below the peak are treated as noise in fits.
const NOISE_FLOOR: f64 = 1e-12;

/// Energies closer than this are treated as one degenerate cluster.
const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub n_k: usize,
    pub mu: f64,
    /// Half-width of the window where branches must be regular.
    pub delta: f64,
    /// Half-width of the window that must contain only edge states.
    pub delta_tilde: f64,
    pub loc_threshold: f64,
    pub v_min: f64,
    pub gamma_min: f64,
    pub root_tol: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            n_k: 256,
            mu: 0.0,
            delta: 0.2,
            delta_tilde: 0.3,
            loc_threshold: 0.9,
            v_min: 1e-3,
            gamma_min: 1e-2,
            root_tol: 1e-10,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_k < 64 {
            return Err(Error::Config(format!("n_k must be at least 64, got {}", self.n_k)));
        }
        if !(self.delta > 0.0 && self.delta < self.delta_tilde) {
            return Err(Error::Config(format!(
                "need 0 < delta < delta_tilde, got {} and {}",
                self.delta, self.delta_tilde
            )));
        }
        if !(0.5..=1.0).contains(&self.loc_threshold) {
            return Err(Error::Config("loc_threshold must lie in [0.5, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub k1: f64,
    pub energies: Vec<f64>,
    /// One column per retained energy.
    pub vectors: CMatrix,
}

#[derive(Clone, Debug)]
pub struct BandScan {
    pub geometry: CylinderGeometry,
    pub window: (f64, f64),
    pub points: Vec<ScanPoint>,
}

impl BandScan {
    pub fn n_states(&self) -> usize {
        self.points.iter().map(|p| p.energies.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_states() == 0
    }
}

/// Diagonalises `n_k` evenly spaced fibers and keeps eigenpairs with energy
/// strictly inside `window`.
pub fn scan_spectrum<S: BandSource + ?Sized>(src: &S, n_k: usize, window: (f64, f64)) -> Result<BandScan> {
    if n_k < 64 {
        return Err(Error::Config(format!("n_k must be at least 64, got {n_k}")));
    }
    let points = (0..n_k)
        .into_par_iter()
        .map(|j| {
            let k1 = TAU * j as f64 / n_k as f64;
            let es = src.eigensystem(k1).map_err(|e| match e {
                Error::Eigensolver { .. } => Error::Eigensolver { k_index: j, k1 },
                other => other,
            })?;
            let keep: Vec<usize> =
                (0..es.len()).filter(|&q| es.energies[q] > window.0 && es.energies[q] < window.1).collect();
            let energies: Vec<f64> = keep.iter().map(|&q| es.energies[q]).collect();
            let mut vectors = es.vectors.select_columns(&keep);
            separate_degenerate_edges(&src.geometry(), &energies, &mut vectors);
            Ok(ScanPoint { k1, energies, vectors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandScan { geometry: src.geometry(), window, points })
}

/// Within each cluster of (numerically) degenerate energies, rotates the
/// eigenvectors so they diagonalise the lower-half projector. Edge states on
/// opposite edges at equal energy hybridise only through exponentially small
/// tunnelling; this undoes the arbitrary mixing picked by the eigensolver.
fn separate_degenerate_edges(geometry: &CylinderGeometry, energies: &[f64], vectors: &mut CMatrix) {
    let half = geometry.m * (geometry.l2 / 2);
    let mut start = 0;
    while start < energies.len() {
        let mut end = start + 1;
        while end < energies.len() && energies[end] - energies[end - 1] < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            let block = vectors.columns(start, end - start).into_owned();
            let lower = block.rows(0, half);
            let proj = lower.adjoint() * lower;
            if let Some((_, rot)) = hermitian_eigen(proj) {
                vectors.columns_mut(start, end - start).copy_from(&(block * rot));
            }
        }
        start = end;
    }
}

/// Per-row weights `Σ_ρ |φ(x2, ρ)|²`.
pub fn row_weights<'a, I>(geometry: &CylinderGeometry, v: I) -> Vec<f64>
where
    I: IntoIterator<Item = &'a C64>,
{
    let mut w = vec![0.0; geometry.l2];
    for (i, z) in v.into_iter().enumerate() {
        w[i / geometry.m] += z.norm_sqr();
    }
    w
}

/// Weight on the lower and on the upper half of the cylinder.
pub fn half_weights(geometry: &CylinderGeometry, rows: &[f64]) -> (f64, f64) {
    let half = geometry.l2 / 2;
    let lower = rows[..half].iter().sum();
    let upper = rows[geometry.l2 - half..].iter().sum();
    (lower, upper)
}

pub fn side_of(geometry: &CylinderGeometry, rows: &[f64], threshold: f64) -> Option<Side> {
    let (lower, upper) = half_weights(geometry, rows);
    if lower >= threshold {
        Some(Side::Lower)
    } else if upper >= threshold {
        Some(Side::Upper)
    } else {
        None
    }
}

#[derive(Clone, Debug)]
pub struct BranchSample {
    pub k1: f64,
    pub energy: f64,
    pub vector: CVector,
}

#[derive(Clone, Debug)]
pub struct EdgeBranch {
    pub label: usize,
    pub side: Side,
    /// Consecutive grid samples; `k1` increases and may run past `2π`
    /// when a branch wraps around the zone.
    pub samples: Vec<BranchSample>,
}

impl EdgeBranch {
    /// Largest discrete second derivative over samples with `|ε − μ| ≤ δ`.
    pub fn max_curvature(&self, mu: f64, delta: f64) -> Option<f64> {
        self.samples
            .windows(3)
            .filter(|w| (w[1].energy - mu).abs() <= delta)
            .map(|w| {
                let dk = w[1].k1 - w[0].k1;
                ((w[2].energy - 2.0 * w[1].energy + w[0].energy) / (dk * dk)).abs()
            })
            .reduce(f64::max)
    }
}

fn overlap(a: &CVector, b: impl IntoIterator<Item = C64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm()
}

struct OpenBranch {
    side: Side,
    samples: Vec<BranchSample>,
    first_index: usize,
    last_index: usize,
}

/// Groups in-window states into branches by eigenvector overlap between
/// neighbouring momenta. Every retained state must be localised on one
/// half of the cylinder.
pub fn extract_edge_branches(scan: &BandScan, loc_threshold: f64) -> Result<Vec<EdgeBranch>> {
    let g = scan.geometry;
    let n = scan.points.len();
    let mut done: Vec<OpenBranch> = Vec::new();
    let mut open: Vec<OpenBranch> = Vec::new();
    for (j, pt) in scan.points.iter().enumerate() {
        let mut sides = Vec::with_capacity(pt.energies.len());
        for (q, &e) in pt.energies.iter().enumerate() {
            let rows = row_weights(&g, pt.vectors.column(q).iter());
            match side_of(&g, &rows, loc_threshold) {
                Some(s) => sides.push(s),
                None => {
                    let (lower, upper) = half_weights(&g, &rows);
                    return Err(Error::BulkStateInWindow { k1: pt.k1, energy: e, lower, upper });
                }
            }
        }
        let mut taken = vec![false; pt.energies.len()];
        let mut still_open = Vec::new();
        for mut br in open.drain(..) {
            let last = &br.samples.last().expect("open branch has samples").vector;
            let best = (0..pt.energies.len())
                .filter(|&q| !taken[q] && sides[q] == br.side)
                .map(|q| (q, overlap(last, pt.vectors.column(q).iter().copied())))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((q, ov)) if ov >= OVERLAP_THRESHOLD => {
                    taken[q] = true;
                    br.samples.push(BranchSample {
                        k1: pt.k1,
                        energy: pt.energies[q],
                        vector: pt.vectors.column(q).into_owned(),
                    });
                    br.last_index = j;
                    still_open.push(br);
                }
                _ => done.push(br),
            }
        }
        open = still_open;
        for q in (0..pt.energies.len()).filter(|&q| !taken[q]) {
            open.push(OpenBranch {
                side: sides[q],
                samples: vec![BranchSample {
                    k1: pt.k1,
                    energy: pt.energies[q],
                    vector: pt.vectors.column(q).into_owned(),
                }],
                first_index: j,
                last_index: j,
            });
        }
    }
    done.append(&mut open);

    // Join branches leaving the zone at the last grid point with branches
    // entering at k1 = 0; the fiber is 2π-periodic so vectors compare directly.
    if n > 1 {
        loop {
            let mut joined = false;
            for a in 0..done.len() {
                if done[a].last_index != n - 1 {
                    continue;
                }
                let tail = done[a].samples.last().unwrap().vector.clone();
                let partner = (0..done.len())
                    .filter(|&b| b != a && done[b].first_index == 0 && done[b].side == done[a].side)
                    .map(|b| (b, overlap(&tail, done[b].samples[0].vector.iter().copied())))
                    .filter(|&(_, ov)| ov >= OVERLAP_THRESHOLD)
                    .max_by(|x, y| x.1.total_cmp(&y.1));
                if let Some((b, _)) = partner {
                    let mut head = done.remove(b);
                    let a = if b < a { a - 1 } else { a };
                    let turns = (done[a].samples.last().unwrap().k1 / TAU).floor() + 1.0;
                    for s in &mut head.samples {
                        s.k1 += TAU * turns;
                    }
                    done[a].samples.append(&mut head.samples);
                    done[a].last_index = head.last_index;
                    joined = true;
                    break;
                }
            }
            if !joined {
                break;
            }
        }
    }

    let mut branches: Vec<EdgeBranch> = done
        .into_iter()
        .map(|b| EdgeBranch { label: 0, side: b.side, samples: b.samples })
        .collect();
    branches.sort_by(|a, b| a.side.cmp(&b.side).then(a.samples[0].k1.total_cmp(&b.samples[0].k1)));
    for (i, b) in branches.iter_mut().enumerate() {
        b.label = i;
    }
    Ok(branches)
}

/// Re-diagonalises at `k1` and returns the state with the largest overlap
/// with `reference`.
fn track<S: BandSource + ?Sized>(src: &S, k1: f64, reference: &CVector) -> Result<(f64, CVector)> {
    let es = src.eigensystem(k1)?;
    let q = (0..es.len())
        .max_by(|&a, &b| {
            overlap(reference, es.vectors.column(a).iter().copied())
                .total_cmp(&overlap(reference, es.vectors.column(b).iter().copied()))
        })
        .ok_or(Error::Eigensolver { k_index: 0, k1 })?;
    Ok((es.energies[q], es.vectors.column(q).into_owned()))
}

#[derive(Clone, Debug)]
pub struct FermiCrossing {
    /// Fermi momentum reduced to `[0, 2π)`.
    pub k_f: f64,
    pub v: f64,
    pub vector: CVector,
}

/// Centred difference with step `h`, one Richardson step with `h/2`.
fn tracked_velocity<S: BandSource + ?Sized>(src: &S, k: f64, reference: &CVector, h: f64) -> Result<f64> {
    let e = |x: f64| track(src, x, reference).map(|(e, _)| e);
    let d = |h: f64| -> Result<f64> { Ok((e(k + h)? - e(k - h)?) / (2.0 * h)) };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Locates every crossing of `μ` along a branch by bisection with fresh
/// diagonalisations, and measures the group velocity there.
pub fn fermi_point<S: BandSource + ?Sized>(
    src: &S,
    branch: &EdgeBranch,
    mu: f64,
    tol: f64,
    v_min: f64,
) -> Result<Vec<FermiCrossing>> {
    let mut out = Vec::new();
    for w in branch.samples.windows(2) {
        let (fa, fb) = (w[0].energy - mu, w[1].energy - mu);
        if fa * fb > 0.0 || fb == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (w[0].k1, w[1].k1);
        let mut f_lo = fa;
        let mut k = lo;
        let mut vec = w[0].vector.clone();
        if fa != 0.0 {
            loop {
                k = 0.5 * (lo + hi);
                let (e, v) = track(src, k, &vec)?;
                let f = e - mu;
                vec = v;
                if f.abs() <= tol || hi - lo < 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                    break;
                }
                if f.signum() == f_lo.signum() {
                    lo = k;
                    f_lo = f;
                } else {
                    hi = k;
                }
            }
        }
        let v = tracked_velocity(src, k, &vec, 1e-4)?;
        if v.abs() < v_min {
            return Err(Error::TangentCrossing { branch: branch.label, k1: k, velocity: v.abs(), v_min });
        }
        out.push(FermiCrossing { k_f: k.rem_euclid(TAU), v, vector: vec });
    }
    if out.is_empty() {
        return Err(Error::NoCrossing { branch: branch.label });
    }
    Ok(out)
}

/// Log-linear fit of the row amplitude `|ξ(x2)|` against the distance to the
/// edge, over the half of the cylinder where the state lives. Lattice edge
/// states often oscillate between neighbouring rows, so the fit uses the
/// local maxima of the profile (its upper envelope), ignoring rows already
/// at the numerical noise floor. Returns the decay rate and the fit's R².
pub fn localization(geometry: &CylinderGeometry, vector: &CVector, side: Side) -> (f64, f64) {
    let rows = row_weights(geometry, vector.iter());
    let half = geometry.l2 / 2;
    let by_distance: Vec<f64> = (1..half)
        .map(|s| match side {
            Side::Lower => rows[s],
            Side::Upper => rows[geometry.l2 - 1 - s],
        })
        .collect();
    let peak = by_distance.iter().copied().fold(0.0, f64::max);
    let floor = (peak * NOISE_FLOOR).max(WEIGHT_FLOOR);
    let usable = |i: usize| by_distance[i] > floor;
    let mut pts: Vec<(f64, f64)> = (0..by_distance.len())
        .filter(|&i| usable(i))
        .filter(|&i| {
            let left = i.checked_sub(1).map_or(0.0, |j| by_distance[j]);
            let right = by_distance.get(i + 1).copied().unwrap_or(0.0);
            by_distance[i] >= left && by_distance[i] >= right
        })
        .map(|i| ((i + 1) as f64, 0.5 * by_distance[i].ln()))
        .collect();
    if pts.len() < 3 {
        pts = (0..by_distance.len())
            .filter(|&i| usable(i))
            .map(|i| ((i + 1) as f64, 0.5 * by_distance[i].ln()))
            .collect();
    }
    if pts.len() < 2 {
        return (f64::INFINITY, 1.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (-slope, r2)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeMode {
    pub branch: usize,
    pub side: Side,
    pub k_f: f64,
    pub v: f64,
    pub loc_rate: f64,
    pub loc_r2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Flag {
    pub passed: bool,
    pub detail: String,
}

impl Flag {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub delta: f64,
    pub delta_tilde: f64,
    /// Smallest Fermi-momentum separation among the checked combinations,
    /// `None` when no combination applies.
    pub gamma: Option<f64>,
    pub a: Flag,
    pub b: Flag,
    pub c: Flag,
    pub d: Flag,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.a.passed && self.b.passed && self.c.passed && self.d.passed
    }
}

/// Distance on the circle `ℝ / 2πℤ`.
pub fn circle_distance(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    r.min(TAU - r)
}

/// Pairwise and quadruple Fermi-momentum separations on each edge, skipping
/// the combinations where equality is automatic.
pub fn fermi_separation(k_f: &[f64]) -> Option<f64> {
    let n = k_f.len();
    let mut gamma: Option<f64> = None;
    let mut see = |d: f64| gamma = Some(gamma.map_or(d, |g: f64| g.min(d)));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                see(circle_distance(k_f[i] - k_f[j]));
            }
        }
    }
    for w1 in 0..n {
        for w2 in 0..n {
            for w3 in 0..n {
                for w4 in 0..n {
                    if (w1 == w2 && w3 == w4) || (w1 == w3 && w2 == w4) {
                        continue;
                    }
                    see(circle_distance((k_f[w1] - k_f[w2]) - (k_f[w3] - k_f[w4])));
                }
            }
        }
    }
    gamma
}

pub fn check_assumptions(modes: &[EdgeMode], cfg: &EdgeConfig) -> AssumptionReport {
    let a = Flag::new(true, "every state in the window is edge-localised");
    let bad_loc: Vec<usize> = modes.iter().filter(|m| !(m.loc_rate > 0.0 && m.loc_r2 >= 0.95)).map(|m| m.branch).collect();
    let b = if bad_loc.is_empty() {
        Flag::new(true, "all branches exponentially localised")
    } else {
        Flag::new(false, format!("poor localisation fit on branches {bad_loc:?}"))
    };
    let slow: Vec<usize> = modes.iter().filter(|m| m.v.abs() <= cfg.v_min).map(|m| m.branch).collect();
    let c = if slow.is_empty() {
        Flag::new(true, format!("all |v| > {}", cfg.v_min))
    } else {
        Flag::new(false, format!("|v| <= v_min on branches {slow:?}"))
    };

    let mut gamma: Option<f64> = None;
    let mut problems = Vec::new();
    for side in [Side::Lower, Side::Upper] {
        let on_side: Vec<&EdgeMode> = modes.iter().filter(|m| m.side == side).collect();
        let mut labels: Vec<usize> = on_side.iter().map(|m| m.branch).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            problems.push(format!("{side:?} edge: a branch crosses mu more than once"));
        }
        let kf: Vec<f64> = on_side.iter().map(|m| m.k_f).collect();
        if let Some(g) = fermi_separation(&kf) {
            gamma = Some(gamma.map_or(g, |x| x.min(g)));
            if g < cfg.gamma_min {
                problems.push(format!("{side:?} edge: Fermi momenta separated by {g:.3e} < {}", cfg.gamma_min));
            }
        }
    }
    let d = if problems.is_empty() {
        Flag::new(true, "Fermi momenta separated")
    } else {
        Flag::new(false, problems.join("; "))
    };
    AssumptionReport { delta: cfg.delta, delta_tilde: cfg.delta_tilde, gamma, a, b, c, d }
}

#[derive(Clone, Debug)]
pub struct EdgeAnalysis {
    pub branches: Vec<EdgeBranch>,
    pub modes: Vec<EdgeMode>,
    pub report: AssumptionReport,
}

impl EdgeAnalysis {
    pub fn lower(&self) -> impl Iterator<Item = &EdgeMode> {
        self.modes.iter().filter(|m| m.side == Side::Lower)
    }

    /// `Σ sgn(v)` over the modes on one edge.
    pub fn chirality(&self, side: Side) -> i32 {
        self.modes.iter().filter(|m| m.side == side).map(|m| m.v.signum() as i32).sum()
    }

    /// `Σ sgn(v) / 2π` over the lower edge.
    pub fn predicted_conductance(&self) -> f64 {
        self.chirality(Side::Lower) as f64 / TAU
    }
}

/// Full pipeline: scan the `δ̃` window, build branches, find Fermi points of
/// branches that cross `μ` inside the `δ` window, fit localisation, check.
pub fn analyze_edges<S: BandSource + ?Sized>(src: &S, cfg: &EdgeConfig) -> Result<EdgeAnalysis> {
    cfg.validate()?;
    let g = src.geometry();
    let scan = scan_spectrum(src, cfg.n_k, (cfg.mu - cfg.delta_tilde, cfg.mu + cfg.delta_tilde))?;
    let branches = extract_edge_branches(&scan, cfg.loc_threshold)?;
    let crossing: Vec<&EdgeBranch> = branches
        .iter()
        .filter(|b| b.samples.windows(2).any(|w| (w[0].energy - cfg.mu).signum() != (w[1].energy - cfg.mu).signum()))
        .collect();
    let per_branch = crossing
        .par_iter()
        .map(|b| fermi_point(src, b, cfg.mu, cfg.root_tol, cfg.v_min).map(|c| (b, c)))
        .collect::<Result<Vec<_>>>()?;
    let mut modes = Vec::new();
    for (b, crossings) in per_branch {
        for c in crossings {
            let (loc_rate, loc_r2) = localization(&g, &c.vector, b.side);
            modes.push(EdgeMode { branch: b.label, side: b.side, k_f: c.k_f, v: c.v, loc_rate, loc_r2 });
        }
    }
    let report = check_assumptions(&modes, cfg);
    Ok(EdgeAnalysis { branches, modes, report })
}

/// Distance from `μ` to the nearest state that is not edge-localised: the
/// widest `δ̃` for which the window contains edge states only.
pub fn widest_edge_window<S: BandSource + ?Sized>(src: &S, n_k: usize, mu: f64, loc_threshold: f64) -> Result<f64> {
    let g = src.geometry();
    let nearest = (0..n_k)
        .into_par_iter()
        .map(|j| {
            let k1 = TAU * j as f64 / n_k as f64;
            let mut es = src.eigensystem(k1)?;
            separate_degenerate_edges(&g, &es.energies, &mut es.vectors);
            let mut best = f64::INFINITY;
            for q in 0..es.len() {
                let rows = row_weights(&g, es.vectors.column(q).iter());
                if side_of(&g, &rows, loc_threshold).is_none() {
                    best = best.min((es.energies[q] - mu).abs());
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(nearest.into_iter().fold(f64::INFINITY, f64::min))
}

/// Reduces a momentum to `(-π, π]`.
pub fn centered(k: f64) -> f64 {
    let r = k.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
