//! Second-order kernels on a finite antiperiodic momentum grid, both from the
//! closed diagram formulas and from brute-force Wick contraction of
//! `½⟨V;V⟩ᵀ`.
//!
//! Fermionic momenta are index pairs `j ∈ ℤ_n²` standing for
//! `2π(j + ½)/L`, bosonic ones `2πj/L`; all index arithmetic is modulo `n`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{single_scale_propagator, FlowState};
use crate::error::{Error, Result};
use crate::lattice::C64;

pub type Index = [i64; 2];

#[derive(Clone, Debug)]
pub struct GridModel {
    pub n: usize,
    pub box_size: f64,
    pub h: i32,
    pub p_c: f64,
    state: FlowState,
    /// Propagator tables per channel, row-major in the index.
    props: Vec<Vec<C64>>,
}

fn wrap(i: i64, n: i64) -> i64 {
    let r = i.rem_euclid(n);
    if r < n / 2 {
        r
    } else {
        r - n
    }
}

impl GridModel {
    pub fn new(n: usize, box_size: f64, h: i32, state: &FlowState, p_c: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Config(format!("grid size must be even, got {n}")));
        }
        let mut m = Self { n, box_size, h, p_c, state: state.clone(), props: Vec::new() };
        m.props = (0..state.channels())
            .map(|c| m.all().map(|j| single_scale_propagator(h, c, m.fermion(j), state)).collect())
            .collect();
        Ok(m)
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    fn all(&self) -> impl Iterator<Item = Index> + '_ {
        let n = self.n as i64;
        (0..n * n).map(move |f| [f / n, f % n])
    }

    fn flat(&self, j: Index) -> usize {
        let n = self.n as i64;
        (j[0].rem_euclid(n) * n + j[1].rem_euclid(n)) as usize
    }

    pub fn fermion(&self, j: Index) -> (f64, f64) {
        let n = self.n as i64;
        let k = |i: i64| TAU * (wrap(i, n) as f64 + 0.5) / self.box_size;
        (k(j[0]), k(j[1]))
    }

    pub fn boson(&self, j: Index) -> (f64, f64) {
        let n = self.n as i64;
        let k = |i: i64| TAU * wrap(i, n) as f64 / self.box_size;
        (k(j[0]), k(j[1]))
    }

    pub fn g(&self, c: usize, j: Index) -> C64 {
        self.props[c][self.flat(j)]
    }

    pub fn u(&self, a: usize, b: usize, p: Index) -> f64 {
        self.state.coupling(a, b, self.boson(p), self.p_c)
    }

    fn volume(&self) -> f64 {
        self.box_size * self.box_size
    }
}

fn add(a: Index, b: Index) -> Index {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: Index, b: Index) -> Index {
    [a[0] - b[0], a[1] - b[1]]
}

/// Quartic kernel split by topology.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct QuarticParts {
    pub chain: C64,
    pub particle_particle: C64,
    pub particle_hole: C64,
}

impl QuarticParts {
    pub fn total(&self) -> C64 {
        self.chain + self.particle_particle + self.particle_hole
    }
}

/// Diagram formulas for the kernel of `ψ⁺_{k1ω} ψ⁻_{k2ω} ψ⁺_{k3ω'} ψ⁻_{k4ω'}`
/// with `k4 = k1 − k2 + k3`:
/// - chain `−Σ_c U_{ωc}(P) U_{cω'}(P) L⁻² Σ_q g_c(q) g_c(q − P)`, `P = k2 − k1`;
/// - particle-particle `L⁻² Σ_p U(p) U(P − p) g_ω(k1 + p) g_ω'(k3 − p)`;
/// - particle-hole `L⁻² Σ_p U(p) U(P − p) g_ω(k1 + p) g_ω'(k4 + p)`.
pub fn quartic_diagrams(m: &GridModel, w: usize, w2: usize, k1: Index, k2: Index, k3: Index) -> QuarticParts {
    let big_p = sub(k2, k1);
    let k4 = add(sub(k1, k2), k3);
    let vol = m.volume();
    let mut parts = QuarticParts::default();
    for c in 0..m.state.channels() {
        let uu = m.u(w, c, big_p) * m.u(c, w2, big_p);
        if uu == 0.0 {
            continue;
        }
        let bubble: C64 = m.all().map(|q| m.g(c, q) * m.g(c, sub(q, big_p))).sum();
        parts.chain -= bubble * uu / vol;
    }
    for p in m.all() {
        let uu = m.u(w, w2, p) * m.u(w, w2, sub(big_p, p));
        if uu == 0.0 {
            continue;
        }
        let ga = m.g(w, add(k1, p));
        parts.particle_particle += ga * m.g(w2, sub(k3, p)) * uu / vol;
        parts.particle_hole += ga * m.g(w2, add(k4, p)) * uu / vol;
    }
    parts
}

/// Sunset formula for `Ŵ₂(k)`:
/// `−Σ_c L⁻⁴ Σ_{p,q} U_{ωc}(p)² g_ω(k + p) g_c(q) g_c(q − p)`.
pub fn quadratic_diagram(m: &GridModel, w: usize, k: Index) -> C64 {
    let vol = m.volume();
    let mut total = C64::new(0.0, 0.0);
    for c in 0..m.state.channels() {
        if c == w || m.state.lambda[w][c] == 0.0 {
            continue;
        }
        for p in m.all() {
            let u = m.u(w, c, p);
            if u == 0.0 {
                continue;
            }
            let bubble: C64 = m.all().map(|q| m.g(c, q) * m.g(c, sub(q, p))).sum();
            total -= m.g(w, add(k, p)) * bubble * (u * u) / (vol * vol);
        }
    }
    total
}

/// A leg of a vertex `U_{ab}(p) ψ⁺_{k,a} ψ⁻_{k+p,a} ψ⁺_{q,b} ψ⁻_{q−p,b}`.
#[derive(Clone, Copy, Debug)]
struct Leg {
    /// `true` for `ψ⁺`.
    plus: bool,
    channel: usize,
    /// Which free momentum carries the leg: 0 for `k`, 1 for `q`.
    var: usize,
    /// Coefficient of the transfer `p`.
    p_coeff: i64,
}

fn vertex_legs(a: usize, b: usize) -> [Leg; 4] {
    [
        Leg { plus: true, channel: a, var: 0, p_coeff: 0 },
        Leg { plus: false, channel: a, var: 0, p_coeff: 1 },
        Leg { plus: true, channel: b, var: 1, p_coeff: 0 },
        Leg { plus: false, channel: b, var: 1, p_coeff: -1 },
    ]
}

/// External field requested in the target monomial.
#[derive(Clone, Copy, Debug)]
pub struct Field {
    pub plus: bool,
    pub channel: usize,
    pub momentum: Index,
}

/// Parity of the permutation that sorts `order`.
fn parity(order: &[usize]) -> f64 {
    let mut seen = vec![false; order.len()];
    let mut sign = 1.0;
    for start in 0..order.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = order[i];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// Perfect matchings of the internal legs into `(minus, plus)` pairs of equal
/// channel.
fn matchings(legs: &[(usize, Leg)]) -> Vec<Vec<(usize, usize)>> {
    if legs.is_empty() {
        return vec![Vec::new()];
    }
    let (first, rest) = (legs[0], &legs[1..]);
    let mut out = Vec::new();
    for (i, other) in rest.iter().enumerate() {
        if other.1.plus == first.1.plus || other.1.channel != first.1.channel {
            continue;
        }
        let pair = if first.1.plus { (other.0, first.0) } else { (first.0, other.0) };
        let remaining: Vec<_> = rest.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| *l).collect();
        for mut m in matchings(&remaining) {
            m.insert(0, pair);
            out.push(m);
        }
    }
    out
}

/// Solutions of `x_a + c = x_b` and `x_a + c = t` over `ℤ_n²` for the four
/// loop-momentum unknowns, given the transfers.
fn solve_momenta(eqs: &[(usize, Index, Option<usize>, Index)], n: i64) -> Vec<[Index; 4]> {
    fn propagate(vals: &mut [Option<Index>; 4], eqs: &[(usize, Index, Option<usize>, Index)], n: i64) -> bool {
        let md = |x: Index| [x[0].rem_euclid(n), x[1].rem_euclid(n)];
        loop {
            let mut changed = false;
            for &(a, off_a, b, rhs) in eqs {
                match b {
                    None => {
                        let want = md(sub(rhs, off_a));
                        match vals[a] {
                            Some(x) if x != want => return false,
                            Some(_) => {}
                            None => {
                                vals[a] = Some(want);
                                changed = true;
                            }
                        }
                    }
                    Some(b) => match (vals[a], vals[b]) {
                        (Some(x), Some(y)) => {
                            if md(add(x, off_a)) != md(add(y, rhs)) {
                                return false;
                            }
                        }
                        (Some(x), None) => {
                            vals[b] = Some(md(sub(add(x, off_a), rhs)));
                            changed = true;
                        }
                        (None, Some(y)) => {
                            vals[a] = Some(md(sub(add(y, rhs), off_a)));
                            changed = true;
                        }
                        (None, None) => {}
                    },
                }
            }
            if !changed {
                return true;
            }
        }
    }
    fn recurse(vals: [Option<Index>; 4], eqs: &[(usize, Index, Option<usize>, Index)], n: i64, out: &mut Vec<[Index; 4]>) {
        let mut vals = vals;
        if !propagate(&mut vals, eqs, n) {
            return;
        }
        match vals.iter().position(|v| v.is_none()) {
            None => out.push(vals.map(|v| v.expect("all set"))),
            Some(i) => {
                for f in 0..n * n {
                    let mut next = vals;
                    next[i] = Some([f / n, f % n]);
                    recurse(next, eqs, n, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    recurse([None; 4], eqs, n, &mut out);
    out
}

/// Coefficient of the normal-ordered monomial `targets` (in the given order,
/// with `L⁻²` per pair of fields factored out) in `½⟨V;V⟩ᵀ`, by enumerating
/// every leg assignment, contraction pattern and momentum.
pub fn wick_coefficient(m: &GridModel, targets: &[Field]) -> C64 {
    let n_ch = m.state.channels();
    let n = m.n as i64;
    let vol = m.volume();
    let labels: Vec<(usize, usize)> =
        (0..n_ch).flat_map(|a| (0..n_ch).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let mut total = C64::new(0.0, 0.0);
    for &(a1, a2) in &labels {
        for &(b1, b2) in &labels {
            let legs: Vec<Leg> = vertex_legs(a1, a2).into_iter().chain(vertex_legs(b1, b2)).collect();
            for assign in assignments(&legs, targets) {
                let internal: Vec<(usize, Leg)> =
                    legs.iter().copied().enumerate().filter(|(i, _)| !assign.contains(i)).collect();
                for pairs in matchings(&internal) {
                    if !pairs.iter().any(|&(x, y)| (x < 4) != (y < 4)) {
                        continue;
                    }
                    let mut order: Vec<usize> = assign.clone();
                    for &(x, y) in &pairs {
                        order.push(x);
                        order.push(y);
                    }
                    let sign = parity(&order);
                    total += sign * sum_over_momenta(m, &legs, &assign, &pairs, targets, n, (a1, a2), (b1, b2));
                }
            }
        }
    }
    // ½ (1/2L⁶)², L² per contraction, L^{2·fields − 2} restored.
    let contractions = ((8 - targets.len()) / 2) as i32;
    let prefactor = 0.125 * vol.powi(contractions + targets.len() as i32 - 7);
    total * prefactor
}

fn assignments(legs: &[Leg], targets: &[Field]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(legs: &[Leg], targets: &[Field], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let t = cur.len();
        if t == targets.len() {
            out.push(cur.clone());
            return;
        }
        for (i, l) in legs.iter().enumerate() {
            if cur.contains(&i) || l.plus != targets[t].plus || l.channel != targets[t].channel {
                continue;
            }
            cur.push(i);
            go(legs, targets, cur, out);
            cur.pop();
        }
    }
    go(legs, targets, &mut cur, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn sum_over_momenta(
    m: &GridModel,
    legs: &[Leg],
    assign: &[usize],
    pairs: &[(usize, usize)],
    targets: &[Field],
    n: i64,
    la: (usize, usize),
    lb: (usize, usize),
) -> C64 {
    // Unknowns: 0 = k_A, 1 = q_A, 2 = k_B, 3 = q_B; transfers enumerated.
    let var_of = |i: usize| legs[i].var + if i < 4 { 0 } else { 2 };
    let mut total = C64::new(0.0, 0.0);
    for pf in 0..n * n {
        let pa = [pf / n, pf % n];
        for pg in 0..n * n {
            let pb = [pg / n, pg % n];
            let transfer = |i: usize| {
                let p = if i < 4 { pa } else { pb };
                [p[0] * legs[i].p_coeff, p[1] * legs[i].p_coeff]
            };
            let mut eqs = Vec::new();
            for (t, &i) in assign.iter().enumerate() {
                eqs.push((var_of(i), transfer(i), None, targets[t].momentum));
            }
            for &(x, y) in pairs {
                // mom(x) = mom(y): x_a + off_x = x_b + off_y.
                eqs.push((var_of(x), transfer(x), Some(var_of(y)), transfer(y)));
            }
            let sols = solve_momenta(&eqs, n);
            if sols.is_empty() {
                continue;
            }
            let uu = m.u(la.0, la.1, pa) * m.u(lb.0, lb.1, pb);
            if uu == 0.0 {
                continue;
            }
            for s in sols {
                let mut val = C64::new(uu, 0.0);
                for &(x, _) in pairs {
                    let mom = add(s[var_of(x)], transfer(x));
                    val *= m.g(legs[x].channel, mom);
                }
                total += val;
            }
        }
    }
    total
}

/// Oracle quartic kernel for `ψ⁺_{k1ω} ψ⁻_{k2ω} ψ⁺_{k3ω'} ψ⁻_{k4ω'}`.
pub fn quartic_oracle(m: &GridModel, w: usize, w2: usize, k1: Index, k2: Index, k3: Index) -> C64 {
    let k4 = add(sub(k1, k2), k3);
    let targets = [
        Field { plus: true, channel: w, momentum: k1 },
        Field { plus: false, channel: w, momentum: k2 },
        Field { plus: true, channel: w2, momentum: k3 },
        Field { plus: false, channel: w2, momentum: k4 },
    ];
    wick_coefficient(m, &targets)
}

/// Oracle quadratic kernel for `ψ⁺_{kω} ψ⁻_{kω}`.
pub fn quadratic_oracle(m: &GridModel, w: usize, k: Index) -> C64 {
    let targets = [Field { plus: true, channel: w, momentum: k }, Field { plus: false, channel: w, momentum: k }];
    wick_coefficient(m, &targets)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OracleComparison {
    pub quartic_diagram: C64,
    pub quartic_oracle: C64,
    pub quadratic_diagram: C64,
    pub quadratic_oracle: C64,
}

impl OracleComparison {
    pub fn max_deviation(&self) -> f64 {
        (self.quartic_diagram - self.quartic_oracle).norm().max((self.quadratic_diagram - self.quadratic_oracle).norm())
    }
}

/// Diagram formulas against the oracle at one set of external momenta.
pub fn compare_with_oracle(m: &GridModel, w: usize, w2: usize, k1: Index, k2: Index, k3: Index) -> OracleComparison {
    OracleComparison {
        quartic_diagram: quartic_diagrams(m, w, w2, k1, k2, k3).total(),
        quartic_oracle: quartic_oracle(m, w, w2, k1, k2, k3),
        quadratic_diagram: quadratic_diagram(m, w, k1),
        quadratic_oracle: quadratic_oracle(m, w, k1),
    }
}
