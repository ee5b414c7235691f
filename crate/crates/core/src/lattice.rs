//! Cylinder geometry and translation-invariant hopping Hamiltonians.
//!
//! Sites are `(x1, x2)` with `x1` periodic (`L1` sites) and `x2 ∈ 0..L2` open.
//! Rows `0` and `L2-1` are Dirichlet rows: every hopping block touching them is
//! zero, and they are dropped before diagonalisation so that they never show
//! up as spurious zero-energy states.
//!
//! A block with `offset1 = d` holds the amplitudes of `a†_{(x1, x2)} H a_{(x1+d, y2)}`.
//! The Bloch fiber is `Ĥ(k1) = Σ_d e^{i k1 d} B(d)`, so a plane wave
//! `e^{i k1 x1} ξ(x2)` is an eigenfunction with energy `eig Ĥ(k1)` and
//! `dε/dk1` is its group velocity.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Relative tolerance used when checking Hermiticity across blocks.
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderGeometry {
    pub l1: usize,
    pub l2: usize,
    pub m: usize,
}

impl CylinderGeometry {
    pub fn new(l1: usize, l2: usize, m: usize) -> Result<Self> {
        if l1 < 4 || l2 < 4 || m < 1 {
            return Err(Error::Geometry(format!(
                "need L1 >= 4, L2 >= 4, M >= 1 (got L1={l1}, L2={l2}, M={m})"
            )));
        }
        Ok(Self { l1, l2, m })
    }

    /// Length of a fiber vector, Dirichlet rows included.
    pub fn dim(&self) -> usize {
        self.m * self.l2
    }

    pub fn interior_rows(&self) -> Range<usize> {
        1..self.l2 - 1
    }

    /// Index range of the non-Dirichlet part of a fiber vector.
    pub fn interior_indices(&self) -> Range<usize> {
        self.m..self.m * (self.l2 - 1)
    }

    pub fn is_dirichlet(&self, x2: usize) -> bool {
        x2 == 0 || x2 + 1 == self.l2
    }

    /// Periodic distance in `x1`, plain distance in `x2`.
    pub fn distance(&self, x: (i64, i64), y: (i64, i64)) -> f64 {
        let l1 = self.l1 as i64;
        let d1 = (x.0 - y.0).rem_euclid(l1);
        let d1 = d1.min(l1 - d1) as f64;
        let d2 = (x.1 - y.1) as f64;
        d1.hypot(d2)
    }

    /// The allowed momenta `2π j / L1`.
    pub fn momenta(&self) -> Vec<f64> {
        (0..self.l1).map(|j| TAU * j as f64 / self.l1 as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoppingBlock {
    pub offset1: i32,
    pub x2: usize,
    pub y2: usize,
    pub block: CMatrix,
}

/// Sorted eigenpairs of one fiber. Columns of `vectors` have full fiber
/// length and vanish on the Dirichlet rows.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub k1: f64,
    pub energies: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Anything that can hand out diagonalised fibers on a cylinder.
pub trait BandSource: Sync {
    fn geometry(&self) -> CylinderGeometry;
    fn eigensystem(&self, k1: f64) -> Result<Eigensystem>;
}

#[derive(Clone, Debug)]
pub struct LatticeHamiltonian {
    geometry: CylinderGeometry,
    range: f64,
    offsets: BTreeMap<i32, CMatrix>,
}

impl LatticeHamiltonian {
    pub fn zero(geometry: CylinderGeometry, range: f64) -> Self {
        Self { geometry, range, offsets: BTreeMap::new() }
    }

    /// Builds a Hamiltonian from blocks, summing repeated entries, and
    /// validates range, Dirichlet rows and Hermiticity.
    pub fn from_blocks<I>(geometry: CylinderGeometry, range: f64, blocks: I) -> Result<Self>
    where
        I: IntoIterator<Item = HoppingBlock>,
    {
        let m = geometry.m;
        let dim = geometry.dim();
        let mut offsets: BTreeMap<i32, CMatrix> = BTreeMap::new();
        for b in blocks {
            if b.block.nrows() != m || b.block.ncols() != m {
                return Err(Error::Dimension(format!(
                    "block at offset {} is {}x{}, expected {m}x{m}",
                    b.offset1,
                    b.block.nrows(),
                    b.block.ncols()
                )));
            }
            if b.x2 >= geometry.l2 || b.y2 >= geometry.l2 {
                return Err(Error::Dimension(format!(
                    "rows ({}, {}) outside 0..{}",
                    b.x2, b.y2, geometry.l2
                )));
            }
            if b.block.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let reach = (b.offset1 as f64).hypot(b.x2 as f64 - b.y2 as f64);
            if reach > range + 1e-12 {
                return Err(Error::OutOfRange { offset1: b.offset1, x2: b.x2, y2: b.y2, range });
            }
            if geometry.is_dirichlet(b.x2) || geometry.is_dirichlet(b.y2) {
                return Err(Error::DirichletRow { offset1: b.offset1, x2: b.x2, y2: b.y2 });
            }
            let target = offsets.entry(b.offset1).or_insert_with(|| CMatrix::zeros(dim, dim));
            let mut view = target.view_mut((b.x2 * m, b.y2 * m), (m, m));
            view += &b.block;
        }
        let h = Self { geometry, range, offsets };
        h.check_hermitian()?;
        Ok(h)
    }

    fn check_hermitian(&self) -> Result<()> {
        let m = self.geometry.m;
        let scale = self.max_abs().max(1.0);
        let zero = CMatrix::zeros(self.geometry.dim(), self.geometry.dim());
        for (&d, mat) in &self.offsets {
            let partner = self.offsets.get(&-d).unwrap_or(&zero);
            for x2 in 0..self.geometry.l2 {
                for y2 in 0..self.geometry.l2 {
                    let a = mat.view((x2 * m, y2 * m), (m, m));
                    let b = partner.view((y2 * m, x2 * m), (m, m));
                    let dev = (a - b.adjoint()).camax();
                    if dev > HERMITIAN_TOL * scale {
                        return Err(Error::NonHermitian { offset1: d, x2, y2, deviation: dev });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> CylinderGeometry {
        self.geometry
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Largest `|offset1|` with a nonzero block.
    pub fn max_offset(&self) -> i32 {
        self.offsets.keys().map(|d| d.abs()).max().unwrap_or(0)
    }

    pub fn offsets(&self) -> impl Iterator<Item = (i32, &CMatrix)> {
        self.offsets.iter().map(|(d, m)| (*d, m))
    }

    /// The `M×M` block of `a†_{(x1,x2)} a_{(x1+offset1, y2)}`, if present.
    pub fn block(&self, offset1: i32, x2: usize, y2: usize) -> Option<CMatrix> {
        let m = self.geometry.m;
        if x2 >= self.geometry.l2 || y2 >= self.geometry.l2 {
            return None;
        }
        self.offsets
            .get(&offset1)
            .map(|mat| mat.view((x2 * m, y2 * m), (m, m)).into_owned())
            .filter(|b| b.iter().any(|z| z.norm_sqr() > 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.offsets.values().map(|m| m.camax()).fold(0.0, f64::max)
    }

    /// Nonzero blocks, ordered by offset and rows.
    pub fn blocks(&self) -> Vec<HoppingBlock> {
        let m = self.geometry.m;
        let mut out = Vec::new();
        for (&d, mat) in &self.offsets {
            for x2 in 0..self.geometry.l2 {
                for y2 in 0..self.geometry.l2 {
                    let b = mat.view((x2 * m, y2 * m), (m, m));
                    if b.iter().any(|z| z.norm_sqr() > 0.0) {
                        out.push(HoppingBlock { offset1: d, x2, y2, block: b.into_owned() });
                    }
                }
            }
        }
        out
    }

    /// `Σ_d e^{i k1 d} B(d)` over the full fiber, Dirichlet rows included.
    pub fn fiber(&self, k1: f64) -> CMatrix {
        let dim = self.geometry.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (&d, mat) in &self.offsets {
            let phase = C64::from_polar(1.0, k1 * d as f64);
            out.zip_apply(mat, |o, b| *o += phase * b);
        }
        out
    }

    /// Adds `shift · 𝟙` on the interior rows.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        if shift == 0.0 {
            return out;
        }
        let dim = self.geometry.dim();
        let onsite = out.offsets.entry(0).or_insert_with(|| CMatrix::zeros(dim, dim));
        for i in self.geometry.interior_indices() {
            onsite[(i, i)] += C64::new(shift, 0.0);
        }
        out
    }

    /// One line per nonzero block entry: `offset1 x2 y2 rho rho' re im`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# offset1 x2 y2 rho rho' re im")?;
        for b in self.blocks() {
            for r in 0..self.geometry.m {
                for s in 0..self.geometry.m {
                    let z = b.block[(r, s)];
                    if z.norm_sqr() > 0.0 {
                        writeln!(w, "{} {} {} {} {} {:e} {:e}", b.offset1, b.x2, b.y2, r, s, z.re, z.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

impl BandSource for LatticeHamiltonian {
    fn geometry(&self) -> CylinderGeometry {
        self.geometry
    }

    fn eigensystem(&self, k1: f64) -> Result<Eigensystem> {
        let full = self.fiber(k1);
        let idx = self.geometry.interior_indices();
        let n = idx.len();
        let inner = full.view((idx.start, idx.start), (n, n)).into_owned();
        let (energies, vecs) = hermitian_eigen(inner).ok_or(Error::Eigensolver { k_index: 0, k1 })?;
        let mut vectors = CMatrix::zeros(self.geometry.dim(), n);
        vectors.view_mut((idx.start, 0), (n, n)).copy_from(&vecs);
        Ok(Eigensystem { k1, energies, vectors })
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn hermitian_eigen(m: CMatrix) -> Option<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    if n == 0 {
        return Some((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = m.try_symmetric_eigen(1e-15, 0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    Some((energies, vectors))
}

/// Incremental construction with automatic Hermitian partners.
#[derive(Clone, Debug)]
pub struct HamiltonianBuilder {
    geometry: CylinderGeometry,
    range: f64,
    blocks: Vec<HoppingBlock>,
}

impl HamiltonianBuilder {
    pub fn new(geometry: CylinderGeometry, range: f64) -> Self {
        Self { geometry, range, blocks: Vec::new() }
    }

    fn unit(&self, rho: usize, sigma: usize, amp: C64) -> CMatrix {
        let mut b = CMatrix::zeros(self.geometry.m, self.geometry.m);
        b[(rho, sigma)] = amp;
        b
    }

    /// Raw entry without a Hermitian partner (used by the model-file loader).
    pub fn entry(&mut self, offset1: i32, x2: usize, y2: usize, rho: usize, sigma: usize, amp: C64) -> &mut Self {
        let block = self.unit(rho, sigma, amp);
        self.blocks.push(HoppingBlock { offset1, x2, y2, block });
        self
    }

    /// Adds `amp · a†_{(x1,x2),rho} a_{(x1+offset1,y2),sigma}` plus its adjoint.
    /// Hops with either row on a Dirichlet row are dropped.
    pub fn hop(&mut self, offset1: i32, x2: usize, y2: usize, rho: usize, sigma: usize, amp: C64) -> &mut Self {
        if self.geometry.is_dirichlet(x2) || self.geometry.is_dirichlet(y2) {
            return self;
        }
        if offset1 == 0 && x2 == y2 && rho == sigma {
            return self.onsite(x2, rho, 2.0 * amp.re);
        }
        self.entry(offset1, x2, y2, rho, sigma, amp);
        self.entry(-offset1, y2, x2, sigma, rho, amp.conj());
        self
    }

    pub fn onsite(&mut self, x2: usize, rho: usize, energy: f64) -> &mut Self {
        if self.geometry.is_dirichlet(x2) {
            return self;
        }
        self.entry(0, x2, x2, rho, rho, C64::new(energy, 0.0))
    }

    pub fn build(self) -> Result<LatticeHamiltonian> {
        LatticeHamiltonian::from_blocks(self.geometry, self.range, self.blocks)
    }
}
