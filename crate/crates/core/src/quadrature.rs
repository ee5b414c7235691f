//! Gauss–Legendre rules and adaptive cubature on annuli in log-polar cells.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::TAU;
use std::num::NonZeroUsize;
use std::sync::{Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::C64;

type Rule = (Vec<f64>, Vec<f64>);

/// Nodes and weights of the `n`-point rule on `[−1, 1]`, cached.
pub fn gauss_legendre(n: usize) -> &'static Rule {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, &'static Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut map = cache.lock().expect("quadrature cache poisoned");
    map.entry(n).or_insert_with(|| {
        let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("rule needs at least one node"));
        let (x, w): (Vec<f64>, Vec<f64>) = rule.as_node_weight_pairs().iter().copied().unzip();
        Box::leak(Box::new((x, w)))
    })
}

/// Composite Gauss–Legendre over `[a, b]` with the given interior breakpoints.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for seg in cuts.windows(2) {
        let h = (seg[1] - seg[0]) / panels as f64;
        for p in 0..panels {
            let lo = seg[0] + h * p as f64;
            for (xi, wi) in x.iter().zip(w) {
                total += 0.5 * h * wi * f(lo + 0.5 * h * (xi + 1.0));
            }
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Absolute error target.
    pub tol: f64,
    /// Node budget before giving up.
    pub max_nodes: usize,
    /// Gauss–Legendre points per cell direction.
    pub order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { tol: 1e-9, max_nodes: 4_000_000, order: 4 }
    }
}

/// A small disk where the integrand varies on a scale much finer than the
/// surrounding cells; cells touching it are subdivided before adapting.
#[derive(Clone, Copy, Debug)]
pub struct Hotspot {
    pub center: (f64, f64),
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    pub nodes: usize,
}

/// Cell `[u0, u1] × [t0, t1]` in `(ln r, θ)`.
#[derive(Clone, Copy, Debug)]
struct Cell {
    u0: f64,
    u1: f64,
    t0: f64,
    t1: f64,
}

impl Cell {
    fn split(&self) -> [Cell; 4] {
        let um = 0.5 * (self.u0 + self.u1);
        let tm = 0.5 * (self.t0 + self.t1);
        [
            Cell { u0: self.u0, u1: um, t0: self.t0, t1: tm },
            Cell { u0: um, u1: self.u1, t0: self.t0, t1: tm },
            Cell { u0: self.u0, u1: um, t0: tm, t1: self.t1 },
            Cell { u0: um, u1: self.u1, t0: tm, t1: self.t1 },
        ]
    }

    /// Largest physical extent of the cell.
    fn size(&self) -> f64 {
        let r1 = self.u1.exp();
        (r1 - self.u0.exp()).max(r1 * (self.t1 - self.t0))
    }

    fn touches(&self, spot: &Hotspot) -> bool {
        let (c0, c1) = spot.center;
        let rc = c0.hypot(c1);
        let rho = 1.5 * spot.radius;
        if rho >= rc {
            return self.u0.exp() <= rc + rho;
        }
        let (lo, hi) = ((rc - rho).ln(), (rc + rho).ln());
        if self.u1 < lo || self.u0 > hi {
            return false;
        }
        let tc = c1.atan2(c0).rem_euclid(TAU);
        let half = (rho / rc).asin();
        let gap = |t: f64| {
            let d = (t - tc).rem_euclid(TAU);
            d.min(TAU - d)
        };
        let mid = 0.5 * (self.t0 + self.t1);
        gap(mid) <= 0.5 * (self.t1 - self.t0) + half
    }
}

struct Scored {
    cell: Cell,
    value: C64,
    error: f64,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rule_on<F: Fn(f64, f64) -> C64>(f: &F, c: &Cell, order: usize) -> C64 {
    let (x, w) = gauss_legendre(order);
    let (hu, ht) = (0.5 * (c.u1 - c.u0), 0.5 * (c.t1 - c.t0));
    let mut acc = C64::new(0.0, 0.0);
    for (xi, wi) in x.iter().zip(w) {
        let u = c.u0 + hu * (xi + 1.0);
        let r = u.exp();
        let jac = r * r;
        for (xj, wj) in x.iter().zip(w) {
            let t = c.t0 + ht * (xj + 1.0);
            acc += f(r * t.cos(), r * t.sin()) * (wi * wj * jac);
        }
    }
    acc * (hu * ht)
}

fn score<F: Fn(f64, f64) -> C64>(f: &F, cell: Cell, order: usize) -> Scored {
    let coarse = rule_on(f, &cell, order);
    let fine: C64 = cell.split().iter().map(|c| rule_on(f, c, order)).sum();
    Scored { cell, value: fine, error: (fine - coarse).norm() }
}

/// `∫ f(q) d²q` over `r_min ≤ |q| ≤ r_max`, with `f` taking Cartesian
/// coordinates. Cells are refined worst-first until the summed error
/// estimate drops below `spec.tol`.
pub fn integrate_log_polar<F>(f: F, r_min: f64, r_max: f64, hotspots: &[Hotspot], spec: &QuadratureSpec) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    let (ua, ub) = (r_min.ln(), r_max.ln());
    let n_u = ((ub - ua) / std::f64::consts::LN_2).ceil().max(1.0) as usize;
    let n_t = 8;
    let du = (ub - ua) / n_u as f64;
    let dt = TAU / n_t as f64;
    let mut seeds = Vec::new();
    for i in 0..n_u {
        for j in 0..n_t {
            seeds.push(Cell {
                u0: ua + du * i as f64,
                u1: ua + du * (i + 1) as f64,
                t0: dt * j as f64,
                t1: dt * (j + 1) as f64,
            });
        }
    }
    let mut cells = Vec::new();
    while let Some(c) = seeds.pop() {
        let hot = hotspots.iter().any(|s| c.touches(s) && c.size() > 0.5 * s.radius);
        if hot && c.u1 - c.u0 > 1e-12 {
            seeds.extend(c.split());
        } else {
            cells.push(c);
        }
    }
    cells.sort_by(|a, b| a.u0.total_cmp(&b.u0).then(a.t0.total_cmp(&b.t0)));

    let per_cell = 5 * spec.order * spec.order;
    let mut nodes = cells.len() * per_cell;
    let scored: Vec<Scored> = cells.par_iter().map(|&c| score(&f, c, spec.order)).collect();
    let mut heap: BinaryHeap<Scored> = scored.into_iter().collect();
    let total_error = |heap: &BinaryHeap<Scored>| heap.iter().map(|s| s.error).sum::<f64>();
    let mut err = total_error(&heap);
    const BATCH: usize = 64;
    while err > spec.tol {
        if nodes > spec.max_nodes {
            let value: C64 = heap.iter().map(|s| s.value).sum();
            return Err(Error::Quadrature { estimate: format!("{value}"), error: err, nodes });
        }
        let mut batch = Vec::with_capacity(BATCH);
        while batch.len() < BATCH {
            match heap.pop() {
                Some(s) => batch.push(s.cell),
                None => break,
            }
        }
        let children: Vec<Scored> = batch
            .par_iter()
            .flat_map_iter(|c| c.split())
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&c| score(&f, c, spec.order))
            .collect();
        nodes += children.len() * per_cell;
        heap.extend(children);
        err = total_error(&heap);
    }
    let mut finals: Vec<Scored> = heap.into_vec();
    finals.sort_by(|a, b| a.cell.u0.total_cmp(&b.cell.u0).then(a.cell.t0.total_cmp(&b.cell.t0)));
    let value = finals.iter().map(|s| s.value).sum();
    Ok(QuadResult { value, error: err, nodes })
}
