//! TOML model definitions and matrix dumps.
//!
//! ```toml
//! [geometry]
//! L1 = 48
//! L2 = 24
//!
//! [model]
//! kind = "haldane"          # haldane | hofstadter | stacked | blocks
//!
//! [params]
//! t1 = 1.0
//! t2 = 0.3
//! phi = -1.5707963267948966
//! mass = 0.0
//! ```
//!
//! Missing Haldane keys take the values of `HaldaneParams::default()`.
//! `stacked` takes the Haldane keys plus `shifts = [..]` and an optional
//! `flip = [..]` of booleans reversing `phi` per copy. `hofstadter` takes
//! `p`, `q`, `t`. `blocks` takes `M`, `range` and either inline
//! `entries = [[offset1, x2, y2, rho, rho', re, im], ..]` or `dump = "path"`
//! pointing at a matrix dump.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lattice::{CylinderGeometry, HamiltonianBuilder, LatticeHamiltonian, C64};
use crate::models::{direct_sum, haldane_cylinder, hofstadter_cylinder, HaldaneParams};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub geometry: GeometrySection,
    pub model: ModelSection,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(rename = "L1")]
    pub l1: usize,
    #[serde(rename = "L2")]
    pub l2: usize,
    #[serde(rename = "M", default)]
    pub m: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HaldaneKeys {
    #[serde(default = "one")]
    t1: f64,
    #[serde(default = "default_t2")]
    t2: f64,
    #[serde(default = "default_phi")]
    phi: f64,
    #[serde(default)]
    mass: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StackedKeys {
    #[serde(default = "one")]
    t1: f64,
    #[serde(default = "default_t2")]
    t2: f64,
    #[serde(default = "default_phi")]
    phi: f64,
    #[serde(default)]
    mass: f64,
    shifts: Vec<f64>,
    #[serde(default)]
    flip: Vec<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HofstadterKeys {
    p: i64,
    q: i64,
    #[serde(default = "one")]
    t: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockKeys {
    range: f64,
    #[serde(default)]
    entries: Vec<(i32, usize, usize, usize, usize, f64, f64)>,
    #[serde(default)]
    dump: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn default_t2() -> f64 {
    HaldaneParams::default().t2
}

fn default_phi() -> f64 {
    HaldaneParams::default().phi
}

fn params<T: serde::de::DeserializeOwned>(table: &toml::Table, kind: &str) -> Result<T> {
    T::deserialize(toml::Value::Table(table.clone()))
        .map_err(|e| Error::ModelFile(format!("[params] for {kind}: {e}")))
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Builds the Hamiltonian. Relative `dump` paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<LatticeHamiltonian> {
        let (l1, l2) = (self.geometry.l1, self.geometry.l2);
        let kind = self.model.kind.as_str();
        let fixed_m = |m: usize| match self.geometry.m {
            Some(given) if given != m => {
                Err(Error::ModelFile(format!("{kind} has M = {m}, file says M = {given}")))
            }
            _ => Ok(()),
        };
        match kind {
            "haldane" => {
                fixed_m(2)?;
                let k: HaldaneKeys = params(&self.params, kind)?;
                let p = HaldaneParams { t1: k.t1, t2: k.t2, phi: k.phi, mass: k.mass };
                haldane_cylinder(l1, l2, &p)
            }
            "hofstadter" => {
                fixed_m(1)?;
                let k: HofstadterKeys = params(&self.params, kind)?;
                hofstadter_cylinder(l1, l2, k.p, k.q, k.t)
            }
            "stacked" => {
                let k: StackedKeys = params(&self.params, kind)?;
                if k.shifts.is_empty() {
                    return Err(Error::ModelFile("stacked model needs a nonempty `shifts`".into()));
                }
                if !k.flip.is_empty() && k.flip.len() != k.shifts.len() {
                    return Err(Error::ModelFile("`flip` must match `shifts` in length".into()));
                }
                fixed_m(2 * k.shifts.len())?;
                let copies = k
                    .shifts
                    .iter()
                    .enumerate()
                    .map(|(i, _)| {
                        let sign = if k.flip.get(i).copied().unwrap_or(false) { -1.0 } else { 1.0 };
                        let p = HaldaneParams { t1: k.t1, t2: k.t2, phi: sign * k.phi, mass: k.mass };
                        haldane_cylinder(l1, l2, &p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let parts: Vec<_> = copies.iter().zip(&k.shifts).map(|(h, &s)| (h, s)).collect();
                direct_sum(&parts)
            }
            "blocks" => {
                let m = self
                    .geometry
                    .m
                    .ok_or_else(|| Error::ModelFile("kind = \"blocks\" needs [geometry] M".into()))?;
                let k: BlockKeys = params(&self.params, kind)?;
                let geometry = CylinderGeometry::new(l1, l2, m)?;
                let mut entries = k.entries;
                if let Some(dump) = &k.dump {
                    let path = match base_dir {
                        Some(dir) => dir.join(dump),
                        None => dump.into(),
                    };
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
                    entries.extend(parse_dump(&text)?);
                }
                let mut b = HamiltonianBuilder::new(geometry, k.range);
                for (d, x2, y2, r, s, re, im) in entries {
                    if r >= m || s >= m {
                        return Err(Error::ModelFile(format!("orbital index ({r},{s}) outside 0..{m}")));
                    }
                    b.entry(d, x2, y2, r, s, C64::new(re, im));
                }
                b.build()
            }
            other => Err(Error::ModelFile(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Reads the text written by [`LatticeHamiltonian::write_dump`].
pub fn parse_dump(text: &str) -> Result<Vec<(i32, usize, usize, usize, usize, f64, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::ModelFile(format!("dump line {}: `{line}`", n + 1));
        if f.len() != 7 {
            return Err(bad());
        }
        out.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
            f[4].parse().map_err(|_| bad())?,
            f[5].parse().map_err(|_| bad())?,
            f[6].parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}
