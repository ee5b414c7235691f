//! Run configuration: TOML file merged with command-line overrides.
//! Every key is listed in `docs/config-schema.md`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hall_edge::lattice::LatticeHamiltonian;
use hall_edge::luttinger::LuttingerParams;
use hall_edge::modelfile::{GeometrySection as ModelGeometry, ModelFile, ModelSection};
use hall_edge::quadrature::QuadratureSpec;
use hall_edge::rg::{Containment, RgConfig};
use hall_edge::spectrum::EdgeConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub geometry: GeometrySection,
    /// `kind` or `file`, plus `mu`, plus the model parameters.
    pub model: Option<toml::Table>,
    pub reference: ReferenceSection,
    pub rg: RgSection,
    pub tolerances: Tolerances,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub command: Option<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    /// Inverse temperatures for `wick`.
    pub betas: Vec<f64>,
    /// Real-time horizon `T` for `wick`.
    pub horizon: f64,
    /// Damping `η` for `wick`.
    pub eta: f64,
    pub p1_index: i64,
    /// Expected `Σ sgn(v)` on the lower edge for `conductance`; taken from
    /// the edge analysis when absent.
    pub expected_chirality: Option<i32>,
    /// `topological` or `trivial`: also check that the edge count agrees.
    pub phase: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: None,
            betas: vec![20.0, 40.0, 80.0],
            horizon: 200.0,
            eta: TAU * (10.0 + 1.0 / 3.0) / 20.0,
            p1_index: 1,
            expected_chirality: None,
            phase: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(rename = "L1")]
    pub l1: usize,
    #[serde(rename = "L2")]
    pub l2: usize,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    /// Outer strip depth for the density.
    pub a: usize,
    /// Inner strip depth for the current.
    pub a_prime: usize,
    /// Grid momenta used for the `p1 → 0` fit.
    pub p1_count: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { l1: 48, l2: 24, m: None, a: 12, a_prime: 6, p1_count: 3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    /// Largest channel count drawn in `ref-check`.
    pub channels: usize,
    pub ensemble_size: usize,
    pub lambda_scale: f64,
    /// Parameter sets for the directional-limit check.
    pub limit_sets: usize,
    pub bubble_momentum: [f64; 2],
    pub bubble_velocity: f64,
    /// `(h, N)` pairs for `bubble`, ordered from coarse to fine.
    pub bubble_scales: Vec<[i32; 2]>,
    /// Shells for the same-chirality check.
    pub shells: Vec<i32>,
    /// A specific parameter set reported alongside the ensemble.
    pub params: Option<LuttingerParams>,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            channels: 4,
            ensemble_size: 500,
            lambda_scale: 2.0,
            limit_sets: 50,
            bubble_momentum: [0.0, 1.0],
            bubble_velocity: 1.0,
            bubble_scales: vec![[-4, 4], [-8, 8], [-12, 12]],
            shells: vec![0, -1, -3],
            params: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RgSection {
    /// Size of the off-diagonal couplings at `h = 0`.
    pub lambda: f64,
    pub velocities: Vec<f64>,
    pub scales: u32,
    pub p_c: f64,
    pub angular_nodes: usize,
    pub c_z: f64,
    pub c_v: f64,
    pub c_lambda: f64,
    /// Also compare the diagram evaluator with the Wick enumeration.
    pub oracle: bool,
}

impl Default for RgSection {
    fn default() -> Self {
        let b = Containment::default();
        Self {
            lambda: 0.05,
            velocities: vec![1.0, -0.6, 1.4],
            scales: 30,
            p_c: 4.0,
            angular_nodes: 64,
            c_z: b.c_z,
            c_v: b.c_v,
            c_lambda: b.c_lambda,
            oracle: false,
        }
    }
}

impl RgSection {
    pub fn rg_config(&self, beta_tol: f64) -> RgConfig {
        RgConfig {
            p_c: self.p_c,
            bounds: Containment { c_z: self.c_z, c_v: self.c_v, c_lambda: self.c_lambda },
            beta_tol,
            angular_nodes: self.angular_nodes,
        }
    }

    /// Couplings `λ_ab = λ s_ab` with fixed signs and sizes in `[0.6, 1]`,
    /// so the largest entry is exactly `λ`.
    pub fn couplings(&self) -> Vec<Vec<f64>> {
        let n = self.velocities.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                let k = (i * (i - 1)) / 2 + j;
                let size = [1.0, 0.6, -0.8, 0.7, -0.9, 0.65][k % 6];
                m[i][j] = self.lambda * size;
                m[j][i] = self.lambda * size;
            }
        }
        m
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub n_k: usize,
    pub delta: f64,
    pub delta_tilde: f64,
    pub loc_threshold: f64,
    pub v_min: f64,
    pub gamma_min: f64,
    pub root_tol: f64,
    pub hermiticity: f64,
    pub ward: f64,
    pub conductance: f64,
    pub reference: f64,
    pub t_limit: f64,
    pub bubble: f64,
    pub quadrature: f64,
    pub same_chirality: f64,
    /// Lower bound the `|D|²` control bubble must exceed.
    pub control: f64,
    pub beta_doubling: f64,
    pub beta_lambda: f64,
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let e = EdgeConfig::default();
        Self {
            n_k: e.n_k,
            delta: e.delta,
            delta_tilde: e.delta_tilde,
            loc_threshold: e.loc_threshold,
            v_min: e.v_min,
            gamma_min: e.gamma_min,
            root_tol: e.root_tol,
            hermiticity: 1e-12,
            ward: 1e-10,
            conductance: 0.05,
            reference: 1e-9,
            t_limit: 1e-8,
            bubble: 1e-3,
            quadrature: 1e-9,
            same_chirality: 1e-8,
            control: 1e-3,
            beta_doubling: 1.8,
            beta_lambda: 1e-10,
            oracle: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn edge_config(&self, mu: f64) -> EdgeConfig {
        EdgeConfig {
            n_k: self.n_k,
            mu,
            delta: self.delta,
            delta_tilde: self.delta_tilde,
            loc_threshold: self.loc_threshold,
            v_min: self.v_min,
            gamma_min: self.gamma_min,
            root_tol: self.root_tol,
        }
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec { tol: self.quadrature, ..Default::default() }
    }
}

/// A built lattice model and the chemical potential it is probed at.
pub struct LatticeModel {
    pub hamiltonian: LatticeHamiltonian,
    pub mu: f64,
    /// Echo of what was built, for the report.
    pub description: toml::Table,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn resolve(&self, p: &str) -> PathBuf {
        match &self.base_dir {
            Some(dir) => dir.join(p),
            None => PathBuf::from(p),
        }
    }

    /// Builds the `[model]` section. `file` points at a model file whose own
    /// geometry is used; otherwise `kind` and the remaining keys are combined
    /// with `[geometry]`.
    pub fn lattice_model(&self) -> Result<Option<LatticeModel>> {
        let Some(table) = &self.model else { return Ok(None) };
        let mut params = table.clone();
        let mu = match params.remove("mu") {
            Some(v) => v.as_float().or(v.as_integer().map(|i| i as f64)).context("[model] mu must be a number")?,
            None => 0.1,
        };
        let (file, base) = if let Some(path) = params.remove("file") {
            let path = self.resolve(path.as_str().context("[model] file must be a string")?);
            if !params.is_empty() {
                bail!("[model] file cannot be combined with other model keys");
            }
            let base = path.parent().map(Path::to_path_buf);
            (ModelFile::load(&path)?, base)
        } else {
            let kind = match params.remove("kind") {
                Some(k) => k.as_str().context("[model] kind must be a string")?.to_string(),
                None => bail!("[model] needs `kind` or `file`"),
            };
            let geometry = ModelGeometry { l1: self.geometry.l1, l2: self.geometry.l2, m: self.geometry.m };
            (ModelFile { geometry, model: ModelSection { kind }, params }, self.base_dir.clone())
        };
        let hamiltonian = file.build(base.as_deref())?;
        let mut description = table.clone();
        description.insert("mu".into(), mu.into());
        description.insert("L1".into(), (file.geometry.l1 as i64).into());
        description.insert("L2".into(), (file.geometry.l2 as i64).into());
        Ok(Some(LatticeModel { hamiltonian, mu, description }))
    }
}
