//! Built-in lattice models.
//!
//! The honeycomb lattice is embedded with Bravais vectors `a1 = (1, 0)`,
//! `a2 = (1/2, √3/2)`: the cell `n1 a1 + n2 a2` sits at `(x1, x2) = (n1, n2)`,
//! orbital 0 is the A site at the cell origin and orbital 1 the B site at
//! `(a1 + a2)/3`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CylinderGeometry, HamiltonianBuilder, HoppingBlock, LatticeHamiltonian, CMatrix, C64};

/// Reach of every built-in model: nearest and next-nearest cells.
pub const MODEL_RANGE: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaldaneParams {
    pub t1: f64,
    pub t2: f64,
    pub phi: f64,
    pub mass: f64,
}

impl Default for HaldaneParams {
    fn default() -> Self {
        Self { t1: 1.0, t2: 0.3, phi: -std::f64::consts::FRAC_PI_2, mass: 0.0 }
    }
}

/// A-to-B nearest-neighbour displacements (B cell minus A cell).
const NN_CELLS: [(i32, i32); 3] = [(0, 0), (-1, 0), (0, -1)];

/// Next-nearest displacements `a1`, `-a2`, `a2 - a1`. Hopping along these
/// turns clockwise for A and anticlockwise for B.
const NNN_CELLS: [(i32, i32); 3] = [(1, 0), (0, -1), (-1, 1)];

/// Haldane model: `-t1` between neighbours, `t2 e^{iνφ}` between next
/// neighbours with `ν = ±1` the turning sense of the two-bond path, and a
/// staggered mass `+m` on A, `-m` on B.
pub fn haldane_cylinder(l1: usize, l2: usize, p: &HaldaneParams) -> Result<LatticeHamiltonian> {
    let geometry = CylinderGeometry::new(l1, l2, 2)?;
    if !(p.t1.is_finite() && p.t2.is_finite() && p.phi.is_finite() && p.mass.is_finite()) {
        return Err(Error::Model("Haldane parameters must be finite".into()));
    }
    let mut b = HamiltonianBuilder::new(geometry, MODEL_RANGE);
    for x2 in 0..l2 {
        b.onsite(x2, 0, p.mass);
        b.onsite(x2, 1, -p.mass);
        for &(d1, d2) in &NN_CELLS {
            if let Some(y2) = shift_row(x2, d2, l2) {
                b.hop(d1, x2, y2, 0, 1, C64::new(-p.t1, 0.0));
            }
        }
        for &(d1, d2) in &NNN_CELLS {
            if let Some(y2) = shift_row(x2, d2, l2) {
                b.hop(d1, x2, y2, 0, 0, C64::from_polar(p.t2, -p.phi));
                b.hop(d1, x2, y2, 1, 1, C64::from_polar(p.t2, p.phi));
            }
        }
    }
    b.build()
}

/// Hofstadter model in Landau gauge: `-t [e^{iθ(x2)} a†_x a_{x+e1} + a†_x a_{x+e2} + h.c.]`
/// with `θ(x2) = 2π (p/q) x2`.
pub fn hofstadter_cylinder(l1: usize, l2: usize, p: i64, q: i64, t: f64) -> Result<LatticeHamiltonian> {
    if q < 2 {
        return Err(Error::Model(format!("flux denominator must be >= 2, got {q}")));
    }
    if gcd(p.unsigned_abs(), q.unsigned_abs()) != 1 {
        return Err(Error::Model(format!("flux {p}/{q} is not in lowest terms")));
    }
    let geometry = CylinderGeometry::new(l1, l2, 1)?;
    let mut b = HamiltonianBuilder::new(geometry, 1.0);
    for x2 in 0..l2 {
        let theta = TAU * (p as f64 / q as f64) * x2 as f64;
        b.hop(1, x2, x2, 0, 0, C64::from_polar(-t, theta));
        if x2 + 1 < l2 {
            b.hop(0, x2, x2 + 1, 0, 0, C64::new(-t, 0.0));
        }
    }
    b.build()
}

/// Block-diagonal sum of independent copies, each shifted in energy by
/// a constant on its interior rows.
pub fn direct_sum(parts: &[(&LatticeHamiltonian, f64)]) -> Result<LatticeHamiltonian> {
    let Some((first, _)) = parts.first() else {
        return Err(Error::Model("direct sum needs at least one part".into()));
    };
    let g0 = first.geometry();
    let mut m_total = 0;
    for (h, _) in parts {
        let g = h.geometry();
        if g.l1 != g0.l1 || g.l2 != g0.l2 {
            return Err(Error::Dimension("direct sum parts must share L1 and L2".into()));
        }
        m_total += g.m;
    }
    let geometry = CylinderGeometry::new(g0.l1, g0.l2, m_total)?;
    let range = parts.iter().map(|(h, _)| h.range()).fold(0.0, f64::max);
    let mut blocks = Vec::new();
    let mut offset = 0;
    for (h, shift) in parts {
        let m = h.geometry().m;
        for hb in h.shifted(*shift).blocks() {
            let mut block = CMatrix::zeros(m_total, m_total);
            block.view_mut((offset, offset), (m, m)).copy_from(&hb.block);
            blocks.push(HoppingBlock { block, ..hb });
        }
        offset += m;
    }
    LatticeHamiltonian::from_blocks(geometry, range, blocks)
}

/// Copies of `base` shifted by each entry of `shifts`.
pub fn stacked_shifted(base: &LatticeHamiltonian, shifts: &[f64]) -> Result<LatticeHamiltonian> {
    if shifts.is_empty() {
        return Err(Error::Model("stacked model needs at least one shift".into()));
    }
    let parts: Vec<_> = shifts.iter().map(|&s| (base, s)).collect();
    direct_sum(&parts)
}

fn shift_row(x2: usize, d2: i32, l2: usize) -> Option<usize> {
    let y = x2 as i64 + d2 as i64;
    (0..l2 as i64).contains(&y).then_some(y as usize)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
