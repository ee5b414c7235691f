//! Multi-channel Luttinger reference model: anomalous bubbles, the channel
//! T-matrix, density correlations and the conductance algebra.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff::{chi, d, form_factor, shell_window, single_scale};
use crate::error::{Error, Result};
use crate::lattice::{CMatrix, C64};
use crate::quadrature::{integrate_1d, integrate_log_polar, Hotspot, QuadResult, QuadratureSpec};

/// Largest condition number accepted when inverting channel matrices.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuttingerParams {
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    /// Symmetric coupling matrix with zero diagonal, row-major.
    pub lambda: Vec<Vec<f64>>,
    /// Form-factor scale.
    #[serde(default = "default_p_c")]
    pub p_c: f64,
}

fn default_p_c() -> f64 {
    4.0
}

impl LuttingerParams {
    pub fn free(v: Vec<f64>, z: Vec<f64>) -> Self {
        let n = v.len();
        Self { v, z, lambda: vec![vec![0.0; n]; n], p_c: default_p_c() }
    }

    pub fn channels(&self) -> usize {
        self.v.len()
    }

    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        let n = self.channels();
        DMatrix::from_fn(n, n, |i, j| self.lambda[i][j])
    }

    /// `(Λ_Z)_{ω1ω2} = λ_{ω1ω2} Z_{ω2} / Z_{ω1}`.
    pub fn lambda_z(&self) -> DMatrix<f64> {
        let n = self.channels();
        DMatrix::from_fn(n, n, |i, j| self.lambda[i][j] * self.z[j] / self.z[i])
    }

    /// `κ = (4π|v|)⁻¹` as a vector.
    pub fn kappa(&self) -> DVector<f64> {
        DVector::from_iterator(self.channels(), self.v.iter().map(|v| 1.0 / (4.0 * PI * v.abs())))
    }

    /// `κ Λ_Z`.
    pub fn kappa_lambda_z(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.kappa()) * self.lambda_z()
    }

    /// Spectral radius of `κΛ_Z`. It is similar to the symmetric matrix
    /// `√κ Λ √κ`, so its eigenvalues are real.
    pub fn spectral_radius(&self) -> f64 {
        let sk = self.kappa().map(f64::sqrt);
        let sym = DMatrix::from_diagonal(&sk) * self.lambda_matrix() * DMatrix::from_diagonal(&sk);
        sym.symmetric_eigenvalues().iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.channels();
        if n == 0 {
            return Err(Error::Params("need at least one channel".into()));
        }
        if self.z.len() != n || self.lambda.len() != n || self.lambda.iter().any(|r| r.len() != n) {
            return Err(Error::Params(format!("v has {n} channels; Z and Lambda must match")));
        }
        if self.v.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::Params("velocities must be finite and nonzero".into()));
        }
        if self.z.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::Params("field strengths must be positive".into()));
        }
        if !(self.p_c > 0.0) {
            return Err(Error::Params("form-factor scale must be positive".into()));
        }
        for i in 0..n {
            if self.lambda[i][i] != 0.0 {
                return Err(Error::Params(format!("Lambda[{i}][{i}] must vanish")));
            }
            for j in 0..i {
                if self.lambda[i][j] != self.lambda[j][i] {
                    return Err(Error::Params(format!("Lambda is not symmetric at ({i},{j})")));
                }
            }
        }
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return Err(Error::Params(format!("spectral radius of kappa*Lambda_Z is {rho:.6}, must be < 1")));
        }
        Ok(())
    }

    /// `Σ_ω sgn(v_ω) / 2π`.
    pub fn chiral_conductance(&self) -> f64 {
        self.v.iter().map(|v| v.signum()).sum::<f64>() / TAU
    }

    /// Random admissible parameters: `|v| ∈ [0.3, 2]` with random sign,
    /// `Z ∈ [0.5, 2]`, and couplings of size `scale` rescaled if needed to keep
    /// the spectral radius of `κΛ_Z` at most 0.9.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, channels: usize, scale: f64) -> Self {
        let v = (0..channels)
            .map(|_| {
                let m = rng.random_range(0.3..2.0);
                if rng.random_bool(0.5) { m } else { -m }
            })
            .collect();
        let z = (0..channels).map(|_| rng.random_range(0.5..2.0)).collect();
        let mut lambda = vec![vec![0.0; channels]; channels];
        for i in 0..channels {
            for j in 0..i {
                let x = scale * rng.random_range(-1.0..1.0);
                lambda[i][j] = x;
                lambda[j][i] = x;
            }
        }
        let mut p = Self { v, z, lambda, p_c: default_p_c() };
        let rho = p.spectral_radius();
        if rho > 0.9 {
            let f = 0.9 / rho;
            for row in &mut p.lambda {
                for x in row.iter_mut() {
                    *x *= f;
                }
            }
        }
        p
    }
}

/// `D_ω(p)` at `p̃ = (p0, −p1)`.
pub fn d_tilde(p: (f64, f64), v: f64) -> C64 {
    d((p.0, -p.1), v)
}

/// Cutoff-free anomalous bubble `(i p0 + v p1) / (4π|v|)`.
pub fn bubble_closed(p: (f64, f64), v: f64) -> C64 {
    -d_tilde(p, v) / (4.0 * PI * v.abs())
}

/// Unit-velocity bubble
/// `∫ d²q/(2π)² F(q) [F(q − P) − F(q + P)] / (−i q0 + q1)` with the shell
/// window `F = χ_{[h,N]}`.
fn unit_bubble(p: (f64, f64), h: i32, n: i32, spec: &QuadratureSpec) -> Result<QuadResult> {
    let window = move |x: f64, y: f64| shell_window(x.hypot(y), h, n);
    let f = move |q0: f64, q1: f64| {
        let w = window(q0, q1);
        if w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let diff = window(q0 - p.0, q1 - p.1) - window(q0 + p.0, q1 + p.1);
        if diff == 0.0 {
            return C64::new(0.0, 0.0);
        }
        C64::new(w * diff, 0.0) / (C64::new(q1, -q0) * (TAU * TAU))
    };
    let ir = 2f64.powi(h + 1);
    let spots = [Hotspot { center: p, radius: ir }, Hotspot { center: (-p.0, -p.1), radius: ir }];
    let r_min = 2f64.powi(h - 1);
    let r_max = 2f64.powi(n + 1);
    integrate_log_polar(f, r_min, r_max, &spots, spec)
}

/// Regularised bubble `𝔅^{h,N}_ω(p)`, computed after rescaling `k1 → v k1`.
pub fn bubble_regularized(p: (f64, f64), v: f64, h: i32, n: i32, spec: &QuadratureSpec) -> Result<QuadResult> {
    if h >= n {
        return Err(Error::Config(format!("need h < N, got h = {h}, N = {n}")));
    }
    let mut r = unit_bubble((p.0, v * p.1), h, n, spec)?;
    r.value /= v.abs();
    r.error /= v.abs();
    Ok(r)
}

/// `∫ d²k/(2π)² f_{h1}(k) f_{h2}(k) / D_ω(k)²`. With `|D|²` in place of `D²`
/// (`squared_modulus = true`) the angular cancellation is lost; used as a
/// control.
pub fn same_chirality_bubble(h1: i32, h2: i32, v: f64, squared_modulus: bool) -> C64 {
    let lo = 2f64.powi(h1.max(h2) - 1);
    let hi = 2f64.powi(h1.min(h2) + 1);
    if lo >= hi {
        return C64::new(0.0, 0.0);
    }
    let breaks: Vec<f64> = [h1, h2].iter().flat_map(|&j| [2f64.powi(j - 1), 2f64.powi(j), 2f64.powi(j + 1)]).collect();
    // Uniform angles integrate e^{−2iθ} exactly for n_theta ≥ 3.
    let n_theta = 16;
    let mut total = C64::new(0.0, 0.0);
    for j in 0..n_theta {
        let theta = TAU * (j as f64 + 0.5) / n_theta as f64;
        let (c, s) = (theta.cos(), theta.sin());
        let radial_re = integrate_1d(
            |r| {
                let k = (r * c, r * s);
                let den = d(k, 1.0);
                let den2 = if squared_modulus { C64::new(den.norm_sqr(), 0.0) } else { den * den };
                (single_scale(r, h1) * single_scale(r, h2) * r / den2).re
            },
            lo,
            hi,
            &breaks,
            8,
            8,
        );
        let radial_im = integrate_1d(
            |r| {
                let k = (r * c, r * s);
                let den = d(k, 1.0);
                let den2 = if squared_modulus { C64::new(den.norm_sqr(), 0.0) } else { den * den };
                (single_scale(r, h1) * single_scale(r, h2) * r / den2).im
            },
            lo,
            hi,
            &breaks,
            8,
            8,
        );
        total += C64::new(radial_re, radial_im) * (TAU / n_theta as f64);
    }
    total / (TAU * TAU * v.abs())
}

/// Inverse with a conditioning guard.
fn guarded_inverse(m: &CMatrix, p: (f64, f64)) -> Result<CMatrix> {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Singular { p0: p.0, p1: p.1, condition });
    }
    m.clone().try_inverse().ok_or(Error::Singular { p0: p.0, p1: p.1, condition })
}

fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Diagonal `𝔅(p) / D(p)`.
fn bubble_over_d(params: &LuttingerParams, p: (f64, f64)) -> CMatrix {
    let diag = DVector::from_iterator(params.channels(), params.v.iter().map(|&v| bubble_closed(p, v) / d(p, v)));
    CMatrix::from_diagonal(&diag)
}

/// `T(p) = (𝟙 + 𝔅(p) D(p)⁻¹ Λ_Z v̂(p))⁻¹`.
pub fn t_matrix(params: &LuttingerParams, p: (f64, f64)) -> Result<CMatrix> {
    let n = params.channels();
    let vhat = form_factor(p, params.p_c);
    let m = CMatrix::identity(n, n) + bubble_over_d(params, p) * real_to_complex(&params.lambda_z()) * C64::new(vhat, 0.0);
    guarded_inverse(&m, p)
}

/// `S(p) = T(p) Z⁻² 𝔅(p)/D(p)`.
pub fn density_density(params: &LuttingerParams, p: (f64, f64)) -> Result<CMatrix> {
    let t = t_matrix(params, p)?;
    let zinv2 = CMatrix::from_diagonal(&DVector::from_iterator(
        params.channels(),
        params.z.iter().map(|z| C64::new(1.0 / (z * z), 0.0)),
    ));
    Ok(t * zinv2 * bubble_over_d(params, p))
}

/// `(𝟙 − κΛ_Z)⁻¹`, the limit `p1 → 0` first, then `p0 → 0`.
pub fn t_limit_static(params: &LuttingerParams) -> Result<DMatrix<f64>> {
    let n = params.channels();
    (DMatrix::identity(n, n) - params.kappa_lambda_z())
        .try_inverse()
        .ok_or_else(|| Error::Params("1 - kappa*Lambda_Z is singular".into()))
}

/// `(𝟙 + κΛ_Z)⁻¹`, the limit `p0 → 0` first, then `p1 → 0`.
pub fn t_limit_dynamic(params: &LuttingerParams) -> Result<DMatrix<f64>> {
    let n = params.channels();
    (DMatrix::identity(n, n) + params.kappa_lambda_z())
        .try_inverse()
        .ok_or_else(|| Error::Params("1 + kappa*Lambda_Z is singular".into()))
}

/// `𝒜 = (𝟙 + κΛ_Z)⁻¹ (𝟙 − κΛ_Z)⁻¹ (2π|v|)⁻¹ Z⁻²`.
pub fn discontinuity_matrix(params: &LuttingerParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let diag = DVector::from_iterator(
        params.channels(),
        params.v.iter().zip(&params.z).map(|(v, z)| 1.0 / (TAU * v.abs() * z * z)),
    );
    Ok(t_limit_dynamic(params)? * t_limit_static(params)? * DMatrix::from_diagonal(&diag))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexRenormalizations {
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    /// Largest difference between the expanded and the inverse-T forms.
    pub cross_check: f64,
}

/// `Z0 = (𝟙 − Λ_Zᵀκ) Z` and `Z1 = (𝟙 + Λ_Zᵀκ)(v∘Z)`, checked against
/// `(T_staticᵀ)⁻¹ Z` and `(T_dynamicᵀ)⁻¹ (v∘Z)`.
pub fn vertex_renormalizations(params: &LuttingerParams) -> Result<VertexRenormalizations> {
    params.validate()?;
    let n = params.channels();
    let z = DVector::from_vec(params.z.clone());
    let vz = DVector::from_iterator(n, params.v.iter().zip(&params.z).map(|(v, z)| v * z));
    let lk = params.lambda_z().transpose() * DMatrix::from_diagonal(&params.kappa());
    let id = DMatrix::<f64>::identity(n, n);
    let z0 = (&id - &lk) * &z;
    let z1 = (&id + &lk) * &vz;
    let inv_t = |t: DMatrix<f64>| t.transpose().try_inverse().ok_or_else(|| Error::Params("T limit is singular".into()));
    let z0_t = inv_t(t_limit_static(params)?)? * &z;
    let z1_t = inv_t(t_limit_dynamic(params)?)? * &vz;
    let cross_check = (&z0 - z0_t).amax().max((&z1 - z1_t).amax());
    Ok(VertexRenormalizations { z0: z0.as_slice().to_vec(), z1: z1.as_slice().to_vec(), cross_check })
}

/// `G = Z0 · (𝒜 Z1)`.
pub fn edge_conductance_ref(params: &LuttingerParams) -> Result<f64> {
    let a = discontinuity_matrix(params)?;
    let r = vertex_renormalizations(params)?;
    let z0 = DVector::from_vec(r.z0);
    let z1 = DVector::from_vec(r.z1);
    Ok(z0.dot(&(a * z1)))
}

/// Value at `t = 0` of the interpolating polynomial through `(t_i, y_i)`.
pub fn neville_at_zero(ts: &[f64], ys: &[CMatrix]) -> CMatrix {
    let mut p: Vec<CMatrix> = ys.to_vec();
    let n = ts.len();
    for level in 1..n {
        for i in 0..n - level {
            let (ti, tj) = (ts[i], ts[i + level]);
            p[i] = (&p[i] * C64::new(-tj, 0.0) - &p[i + 1] * C64::new(-ti, 0.0)) / C64::new(ti - tj, 0.0);
        }
    }
    p.swap_remove(0)
}

/// Which momentum component goes to zero faster along the path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitOrder {
    /// `p(t) = (t, c t²)`: `p1 → 0` first.
    SpaceFirst,
    /// `p(t) = (c t², t)`: `p0 → 0` first.
    TimeFirst,
}

pub const LIMIT_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Path curvature `c`. The correlations depend on `p` through the ratio
/// `c t / v`, so the cubic remainder of the extrapolation scales like `c³`.
pub const PATH_CURVATURE: f64 = 0.01;

fn path(order: LimitOrder, t: f64, c: f64) -> (f64, f64) {
    match order {
        LimitOrder::SpaceFirst => (t, c * t * t),
        LimitOrder::TimeFirst => (c * t * t, t),
    }
}

/// Directional limit of a channel-matrix valued function of `p` by
/// polynomial extrapolation over [`LIMIT_STEPS`].
pub fn directional_limit<F>(f: F, order: LimitOrder, c: f64) -> Result<CMatrix>
where
    F: Fn((f64, f64)) -> Result<CMatrix>,
{
    let ys = LIMIT_STEPS.iter().map(|&t| f(path(order, t, c))).collect::<Result<Vec<_>>>()?;
    Ok(neville_at_zero(&LIMIT_STEPS, &ys))
}

/// `𝒜` from numerical directional limits of the density correlation.
pub fn discontinuity_numeric(params: &LuttingerParams) -> Result<CMatrix> {
    let dyn_lim = directional_limit(|p| density_density(params, p), LimitOrder::TimeFirst, PATH_CURVATURE)?;
    let stat_lim = directional_limit(|p| density_density(params, p), LimitOrder::SpaceFirst, PATH_CURVATURE)?;
    Ok(dyn_lim - stat_lim)
}

/// `Z_ω D_ω(p) S⁰_ωω(p) − 𝔅^{h,N}_ω(p) / Z_ω` for the free model, with the
/// regularised bubble from quadrature.
pub fn anomaly_residual(p: (f64, f64), v: f64, z: f64, h: i32, n: i32, spec: &QuadratureSpec) -> Result<C64> {
    let s0 = bubble_closed(p, v) / (d(p, v) * z * z);
    let reg = bubble_regularized(p, v, h, n, spec)?;
    Ok(d(p, v) * s0 * z - reg.value / z)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub samples: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub worst_params: Option<LuttingerParams>,
}

/// `|2πG − Σ sgn v|` over random admissible parameter sets with 1 to
/// `max_channels` channels.
pub fn universality_ensemble<R: Rng + ?Sized>(
    rng: &mut R,
    samples: usize,
    max_channels: usize,
    lambda_scale: f64,
) -> Result<EnsembleSummary> {
    let mut max_err = 0.0;
    let mut sum = 0.0;
    let mut worst = None;
    for _ in 0..samples {
        let n = rng.random_range(1..=max_channels);
        let p = LuttingerParams::random(rng, n, lambda_scale);
        let g = edge_conductance_ref(&p)?;
        let err = (TAU * g - TAU * p.chiral_conductance()).abs();
        sum += err;
        if err > max_err || worst.is_none() {
            max_err = err;
            worst = Some(p);
        }
    }
    Ok(EnsembleSummary {
        samples,
        max_abs_error: max_err,
        mean_abs_error: if samples > 0 { sum / samples as f64 } else { 0.0 },
        worst_params: worst,
    })
}

/// Plateau value used by the form factor: `v̂(0) = 1`.
pub fn form_factor_at_zero() -> f64 {
    chi(0.0)
}
