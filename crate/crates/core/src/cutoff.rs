//! Cutoff functions and regularised relativistic propagators.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::C64;
use crate::quadrature::gauss_legendre;

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³` on `[0, 1]`, clamped outside.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Even cutoff: 1 on `|s| ≤ 1`, 0 on `|s| ≥ 2`, decreasing in between.
pub fn chi(s: f64) -> f64 {
    1.0 - smoothstep(s.abs() - 1.0)
}

/// Derivative of [`chi`] for `s ≥ 0`.
pub fn chi_prime(s: f64) -> f64 {
    let t = s.abs() - 1.0;
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    -30.0 * t * t * (t - 1.0) * (t - 1.0) * s.signum()
}

/// Gaussian mollification of `χ` restricted to the half line:
/// `χ^ε(t) = ∫_0^∞ e^{−(t−s)²/ε} χ(s) ds / ∫_0^∞ e^{−(t−s)²/ε} ds`.
/// The plateau part is done in closed form, the transition band `[1, 2]`
/// with 32-node Gauss–Legendre around `t`.
pub fn chi_eps(t: f64, eps: f64) -> f64 {
    if eps <= 0.0 {
        return chi(t);
    }
    let w = eps.sqrt();
    let norm = 0.5 * (PI * eps).sqrt() * libm::erfc(-t / w);
    let plateau = 0.5
        * (PI * eps).sqrt()
        * if t >= 1.0 {
            libm::erfc((t - 1.0) / w) - libm::erfc(t / w)
        } else {
            libm::erf((1.0 - t) / w) + libm::erf(t / w)
        };
    // Only the part of the band within a few Gaussian widths of t matters.
    let lo = (t - 9.0 * w).clamp(1.0, 2.0 - 9.0 * w.min(1.0 / 9.0));
    let hi = (t + 9.0 * w).clamp(1.0 + 9.0 * w.min(1.0 / 9.0), 2.0);
    let band = if lo < hi {
        let (x, wt) = gauss_legendre(32);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        x.iter()
            .zip(wt.iter())
            .map(|(&xi, &wi)| {
                let s = mid + half * xi;
                half * wi * (-(t - s) * (t - s) / eps).exp() * chi(s)
            })
            .sum()
    } else {
        0.0
    };
    (plateau + band) / norm
}

/// `D_ω(k) = −i k0 + v k1`.
pub fn d(k: (f64, f64), v: f64) -> C64 {
    C64::new(v * k.1, -k.0)
}

/// `|k|_ω = √(k0² + v² k1²)`.
pub fn norm_v(k: (f64, f64), v: f64) -> f64 {
    k.0.hypot(v * k.1)
}

/// `χ_{[h,N]}(k) = (1 − χ(2^{−h}|k|))·χ(2^{−N}|k|)`, supported on
/// `2^{h−1} ≤ |k| ≤ 2^{N+1}`.
pub fn shell_window(r: f64, h: i32, n: i32) -> f64 {
    (1.0 - chi(r * 2f64.powi(-h))) * chi(r * 2f64.powi(-n))
}

/// Mollified version of [`shell_window`].
pub fn shell_window_eps(r: f64, h: i32, n: i32, eps: f64) -> f64 {
    (1.0 - chi_eps(r * 2f64.powi(-h), eps)) * chi_eps(r * 2f64.powi(-n), eps)
}

/// Single-scale support `f_j(r) = χ(2^{−j} r) − χ(2^{−j+1} r)`, supported on
/// `2^{j−1} ≤ r ≤ 2^{j+1}`.
pub fn single_scale(r: f64, j: i32) -> f64 {
    chi(r * 2f64.powi(-j)) - chi(r * 2f64.powi(1 - j))
}

/// Interaction form factor `v̂(p) = χ(|p| / p_c)`.
pub fn form_factor(p: (f64, f64), p_c: f64) -> f64 {
    chi(p.0.hypot(p.1) / p_c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatorConfig {
    /// Infrared scale, negative.
    pub h: i32,
    /// Ultraviolet scale, positive.
    pub n: i32,
    /// Lattice spacing.
    pub spacing: f64,
    /// Side of the periodic box.
    pub box_size: f64,
    /// Mollification width, zero for the sharp cutoff.
    pub eps: f64,
}

impl RegulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h >= 0 || self.n <= 0 {
            return Err(Error::Config(format!("need h < 0 < N, got h = {}, N = {}", self.h, self.n)));
        }
        if !(self.spacing > 0.0 && self.box_size > 0.0 && self.eps >= 0.0) {
            return Err(Error::Config("spacing and box size must be positive, eps non-negative".into()));
        }
        let sites = self.box_size / self.spacing;
        if (sites - sites.round()).abs() > 1e-9 || (sites.round() as i64) % 2 != 0 {
            return Err(Error::Config(format!("box holds {sites} sites; need an even integer")));
        }
        Ok(())
    }

    /// Antiperiodic momenta `2π(m + ½)/L` in one Brillouin zone `[−π/𝔞, π/𝔞)`.
    pub fn antiperiodic_momenta(&self) -> Vec<f64> {
        let sites = (self.box_size / self.spacing).round() as i64;
        (-sites / 2..sites / 2).map(|m| TAU * (m as f64 + 0.5) / self.box_size).collect()
    }
}

/// `‖k‖_ω`: the `|·|_ω` distance to the nearest reciprocal-lattice image.
pub fn periodic_norm(k: (f64, f64), v: f64, spacing: f64) -> f64 {
    let g = TAU / spacing;
    let fold = |x: f64| x - g * (x / g).round();
    norm_v((fold(k.0), fold(k.1)), v)
}

/// Lattice denominator `−i sin(𝔞k0)/𝔞 + v sin(𝔞k1)/𝔞`.
pub fn lattice_d(k: (f64, f64), v: f64, spacing: f64) -> C64 {
    C64::new(v * (spacing * k.1).sin(), -(spacing * k.0).sin()) / spacing
}

/// `(1/Z) χ^{ε}_{[h,N]}(k) / 𝔇_𝔞(k)`.
pub fn lattice_propagator(k: (f64, f64), v: f64, z: f64, reg: &RegulatorConfig) -> C64 {
    let den = lattice_d(k, v, reg.spacing);
    assert!(den.norm() > 0.0, "momentum {k:?} sits on a zero of the lattice denominator");
    let r = periodic_norm(k, v, reg.spacing);
    shell_window_eps(r, reg.h, reg.n, reg.eps) / (den * z)
}

/// Continuum propagator `(1/Z) χ_{[h,N]}(k) / D(k)`.
pub fn continuum_propagator(k: (f64, f64), v: f64, z: f64, h: i32, n: i32) -> C64 {
    shell_window(norm_v(k, v), h, n) / (d(k, v) * z)
}
