//! Density and current operators at fixed `(k1, p1)`.
//!
//! Operators are represented by their kernel `O(k1, p1)` in the site basis of
//! the fiber: `Ô(p1) = Σ_{k1} c†_{k1} O(k1, p1) c_{k1+p1}`. The bond current
//! of the bond `(x, x+d)` is `i (a†_x H a_{x+d} − a†_{x+d} H† a_x)`; the
//! current through row `x2` collects unit bonds plus half of each diagonal
//! bond that crosses the same cut.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CMatrix, Eigensystem, LatticeHamiltonian, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    /// Density `n`.
    Density,
    /// Current along the periodic direction `j1`.
    Along,
    /// Current across the cylinder `j2`.
    Across,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Density, Component::Along, Component::Across];

    pub fn index(self) -> usize {
        match self {
            Component::Density => 0,
            Component::Along => 1,
            Component::Across => 2,
        }
    }
}

/// Which diagonal bonds enter `j1`. `Truncated` leaves out the halves of the
/// diagonal bonds based on neighbouring rows; it breaks charge conservation
/// and exists only to show that the Ward checks notice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurrentVariant {
    #[default]
    Conserved,
    Truncated,
}

/// Current kernels need every hop to stay within one cell in each direction.
pub fn check_current_range(h: &LatticeHamiltonian) -> Result<()> {
    let blocks = h.blocks();
    if blocks.iter().any(|b| b.offset1.abs() > 1 || b.x2.abs_diff(b.y2) > 1) {
        let reach = blocks
            .iter()
            .map(|b| (b.offset1 as f64).hypot(b.x2 as f64 - b.y2 as f64))
            .fold(0.0, f64::max);
        return Err(Error::CurrentRange(reach));
    }
    Ok(())
}

/// Kernel of the bond current for displacement `d = (d1, d2)` based at row `row`.
pub fn bond_current(h: &LatticeHamiltonian, d: (i32, i32), row: i64, k1: f64, p1: f64) -> CMatrix {
    let g = h.geometry();
    let m = g.m;
    let mut out = CMatrix::zeros(g.dim(), g.dim());
    let other = row + d.1 as i64;
    if row < 0 || other < 0 || row >= g.l2 as i64 || other >= g.l2 as i64 {
        return out;
    }
    let (r, s) = (row as usize, other as usize);
    let Some(t) = h.block(d.0, r, s) else {
        return out;
    };
    let i = C64::new(0.0, 1.0);
    let fwd = i * C64::from_polar(1.0, (k1 + p1) * d.0 as f64);
    let bwd = -i * C64::from_polar(1.0, -k1 * d.0 as f64);
    {
        let mut v = out.view_mut((r * m, s * m), (m, m));
        v += &t * fwd;
    }
    {
        let mut v = out.view_mut((s * m, r * m), (m, m));
        v += t.adjoint() * bwd;
    }
    out
}

/// Kernel of the density on row `x2`.
pub fn density(h: &LatticeHamiltonian, x2: usize) -> CMatrix {
    let g = h.geometry();
    let mut out = CMatrix::zeros(g.dim(), g.dim());
    for i in x2 * g.m..(x2 + 1) * g.m {
        out[(i, i)] = C64::new(1.0, 0.0);
    }
    out
}

/// Kernel of `j1` on row `x2`.
pub fn current_along(h: &LatticeHamiltonian, x2: usize, k1: f64, p1: f64, variant: CurrentVariant) -> CMatrix {
    let r = x2 as i64;
    let b = |d, row| bond_current(h, d, row, k1, p1);
    let mut j = b((1, 0), r) + (b((1, -1), r) + b((1, 1), r)) * C64::new(0.5, 0.0);
    if variant == CurrentVariant::Conserved {
        j += (b((1, 1), r - 1) + b((1, -1), r + 1)) * C64::new(0.5, 0.0);
    }
    j
}

/// Kernel of `j2` on row `x2`: current from row `x2` to `x2 + 1`.
pub fn current_across(h: &LatticeHamiltonian, x2: usize, k1: f64, p1: f64) -> CMatrix {
    let r = x2 as i64;
    let b = |d, row| bond_current(h, d, row, k1, p1);
    let half = C64::new(0.5, 0.0);
    let shift_back = C64::from_polar(0.5, -p1);
    let shift_fwd = C64::from_polar(0.5, p1);
    b((0, 1), r) + (b((-1, 1), r) + b((1, 1), r)) * half + b((1, 1), r) * shift_back + b((-1, 1), r) * shift_fwd
}

pub fn operator(
    h: &LatticeHamiltonian,
    c: Component,
    x2: usize,
    k1: f64,
    p1: f64,
    variant: CurrentVariant,
) -> CMatrix {
    match c {
        Component::Density => density(h, x2),
        Component::Along => current_along(h, x2, k1, p1, variant),
        Component::Across => current_across(h, x2, k1, p1),
    }
}

/// Sum of an operator kernel over a set of rows.
pub fn strip_operator<I>(h: &LatticeHamiltonian, c: Component, rows: I, k1: f64, p1: f64, variant: CurrentVariant) -> CMatrix
where
    I: IntoIterator<Item = usize>,
{
    let dim = h.geometry().dim();
    rows.into_iter()
        .fold(CMatrix::zeros(dim, dim), |acc, x2| acc + operator(h, c, x2, k1, p1, variant))
}

/// Vertices between the eigenbases at `k1` (rows) and `k1 + p1` (columns),
/// resolved per row `x2`.
#[derive(Clone, Debug)]
pub struct VertexSet {
    pub k1: f64,
    pub p1: f64,
    pub density: Vec<CMatrix>,
    pub along: Vec<CMatrix>,
    pub across: Vec<CMatrix>,
}

impl VertexSet {
    pub fn get(&self, c: Component) -> &[CMatrix] {
        match c {
            Component::Density => &self.density,
            Component::Along => &self.along,
            Component::Across => &self.across,
        }
    }
}

/// Expresses a site-basis kernel between two eigenbases: `V_a† O V_b`.
pub fn in_bands(op: &CMatrix, left: &Eigensystem, right: &Eigensystem) -> Result<CMatrix> {
    if op.nrows() != left.vectors.nrows() || op.ncols() != right.vectors.nrows() {
        return Err(Error::Dimension(format!(
            "operator is {}x{}, eigenvectors have lengths {} and {}",
            op.nrows(),
            op.ncols(),
            left.vectors.nrows(),
            right.vectors.nrows()
        )));
    }
    Ok(left.vectors.adjoint() * op * &right.vectors)
}

pub fn build_vertices(
    h: &LatticeHamiltonian,
    at_k: &Eigensystem,
    at_kp: &Eigensystem,
    p1: f64,
    variant: CurrentVariant,
) -> Result<VertexSet> {
    check_current_range(h)?;
    let dim = h.geometry().dim();
    if at_k.vectors.nrows() != dim || at_kp.vectors.nrows() != dim {
        return Err(Error::Dimension(format!(
            "fiber dimension {dim} does not match eigenvectors ({} and {})",
            at_k.vectors.nrows(),
            at_kp.vectors.nrows()
        )));
    }
    let k1 = at_k.k1;
    let rows = 0..h.geometry().l2;
    let mut set = VertexSet { k1, p1, density: Vec::new(), along: Vec::new(), across: Vec::new() };
    for x2 in rows {
        set.density.push(in_bands(&density(h, x2), at_k, at_kp)?);
        set.along.push(in_bands(&current_along(h, x2, k1, p1, variant), at_k, at_kp)?);
        set.across.push(in_bands(&current_across(h, x2, k1, p1), at_k, at_kp)?);
    }
    Ok(set)
}
