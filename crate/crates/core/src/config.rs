//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! field = "max(re(z1), re(z2))"
//!
//! [space]
//! kind = "euclidean"          # euclidean | axes_cross | cusp | curve
//! dim = 2
//!
//! [grid]
//! points = [[[0.5, 0.0], [0.0, 0.0]]]
//!
//! [budget]
//! restarts = 8
//!
//! [quadrature]
//! m = 512
//! ```

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{slice_lattice, SearchBudget};
use crate::field::ScalarField;
use crate::functional::QuadratureSpec;
use crate::hull::{CompactSet, Piece};
use crate::space::{BranchMap, ComplexPoint, DomainConstraint, SpaceModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Envelope,
    Hull,
    Oracle,
    Verify,
    Counterexample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub budget: SearchBudget,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub hull: Option<HullConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

fn default_quadrature() -> QuadratureSpec {
    QuadratureSpec::new(512).expect("512 is a valid node count")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: SpaceKindConfig,
    #[serde(default)]
    pub dim: Option<usize>,
    /// Branches of a `curve`: each maps `t` to polynomial coordinates.
    #[serde(default)]
    pub branches: Vec<BranchMap>,
    #[serde(default)]
    pub domain: Option<DomainConstraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKindConfig {
    Euclidean,
    AxesCross,
    Cusp,
    Curve,
}

impl SpaceConfig {
    pub fn build(&self) -> Result<SpaceModel, ConfigError> {
        let err = |e: crate::space::SpaceError| ConfigError::Invalid(e.to_string());
        let model = match self.kind {
            SpaceKindConfig::Euclidean => match self.dim {
                Some(d) if d > 0 => SpaceModel::euclidean(d),
                _ => return invalid("space.dim must be a positive integer for a euclidean space"),
            },
            SpaceKindConfig::AxesCross => SpaceModel::axes_cross(),
            SpaceKindConfig::Cusp => SpaceModel::cusp(),
            SpaceKindConfig::Curve => SpaceModel::curve(self.branches.clone()).map_err(err)?,
        };
        if let (Some(d), false) = (self.dim, self.kind == SpaceKindConfig::Euclidean) {
            if d != model.ambient_dim {
                return invalid(format!("space.dim = {d} but the model lives in dimension {}", model.ambient_dim));
            }
        }
        if self.kind != SpaceKindConfig::Curve && !self.branches.is_empty() {
            return invalid("space.branches is only allowed for kind = \"curve\"");
        }
        let model = match &self.domain {
            Some(d) => model.with_domain(d.clone()).map_err(err)?,
            None => model,
        };
        model.validate().map_err(err)?;
        Ok(model)
    }
}

/// Explicit points, or an `n x n` lattice in one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub points: Vec<ComplexPoint>,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub base: ComplexPoint,
    /// 1-based coordinate that varies.
    pub coord: usize,
    pub lo: Complex64,
    pub step: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Vec<ComplexPoint>, ConfigError> {
        let mut out = self.points.clone();
        if let Some(l) = &self.lattice {
            if l.coord == 0 || l.coord > l.base.dim() {
                return invalid("grid.lattice.coord must be between 1 and the dimension");
            }
            if !(l.step > 0.0 && l.step.is_finite()) || l.n == 0 {
                return invalid("grid.lattice needs step > 0 and n > 0");
            }
            out.extend(slice_lattice(&l.base.0, l.coord - 1, l.lo, l.step, l.n));
        }
        if out.is_empty() {
            return invalid("grid has no points");
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_prefix() -> String {
    "results".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), prefix: default_prefix() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullConfig {
    pub set: Vec<Piece>,
    pub point: ComplexPoint,
    pub u_radius: f64,
    pub eps: f64,
    #[serde(default)]
    pub window: Option<DomainConstraint>,
    /// The user asserts that the hull of the set is compact in the window.
    #[serde(default)]
    pub assume_compact_hull: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub center: Complex64,
    pub radius: f64,
    #[serde(default)]
    pub inner_radius: f64,
    #[serde(default = "default_oracle_n")]
    pub n: usize,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
    #[serde(default = "default_oracle_iters")]
    pub max_iters: usize,
    /// Results JSON of an envelope run to compare against.
    #[serde(default)]
    pub compare: Option<PathBuf>,
}

fn default_oracle_n() -> usize {
    129
}

fn default_oracle_tol() -> f64 {
    1e-10
}

fn default_oracle_iters() -> usize {
    1_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub certificate: PathBuf,
    pub set: Vec<Piece>,
    /// Test fields; the bundled corpus when empty.
    #[serde(default)]
    pub rho: Vec<String>,
    #[serde(default = "default_verify_tol")]
    pub tol: f64,
}

fn default_verify_tol() -> f64 {
    1e-6
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(src)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&src)
    }

    /// Search budget with the run seed.
    pub fn budget(&self) -> SearchBudget {
        SearchBudget { seed: self.seed, ..self.budget.clone() }
    }

    pub fn space(&self) -> Result<SpaceModel, ConfigError> {
        match &self.space {
            Some(s) => s.build(),
            None => invalid("missing [space] section"),
        }
    }

    pub fn field(&self, dim: usize) -> Result<ScalarField, ConfigError> {
        match &self.field {
            Some(f) => ScalarField::parse(f, dim).map_err(|e| ConfigError::Invalid(format!("field: {e}"))),
            None => invalid("missing key `field`"),
        }
    }

    pub fn grid(&self) -> Result<Vec<ComplexPoint>, ConfigError> {
        match &self.grid {
            Some(g) => g.build(),
            None => invalid("missing [grid] section"),
        }
    }

    /// Checks everything the given mode needs, before any computation.
    pub fn validate(&self, mode: Mode) -> Result<(), ConfigError> {
        if let Some(m) = self.mode {
            if m != mode {
                return invalid(format!("config is for mode {m:?} but {mode:?} was requested"));
            }
        }
        self.budget().validate().map_err(|e| ConfigError::Invalid(format!("budget: {e}")))?;
        match mode {
            Mode::Envelope => {
                let space = self.space()?;
                self.field(space.ambient_dim)?;
                let grid = self.grid()?;
                if let Some(p) = grid.iter().find(|p| p.dim() != space.ambient_dim) {
                    return invalid(format!("grid point {p} has the wrong dimension"));
                }
            }
            Mode::Hull => {
                let Some(h) = &self.hull else {
                    return invalid("missing [hull] section");
                };
                let k = CompactSet::new(h.set.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if h.point.dim() != k.dim() {
                    return invalid("hull.point has the wrong dimension");
                }
                if !(h.u_radius > 0.0) || !(h.eps > 0.0) {
                    return invalid("hull.u_radius and hull.eps must be positive");
                }
            }
            Mode::Oracle => {
                let Some(o) = &self.oracle else {
                    return invalid("missing [oracle] section");
                };
                self.field(1)?;
                if !(o.radius > 0.0) || o.n < 33 {
                    return invalid("oracle needs radius > 0 and n >= 33");
                }
            }
            Mode::Verify => {
                let Some(v) = &self.verify else {
                    return invalid("missing [verify] section");
                };
                let k = CompactSet::new(v.set.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                for r in &v.rho {
                    ScalarField::parse(r, k.dim()).map_err(|e| ConfigError::Invalid(format!("rho {r:?}: {e}")))?;
                }
            }
            Mode::Counterexample => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 3
field = "re(z1)"
[space]
kind = "euclidean"
dim = 2
[grid]
points = [[[0.5, 0.0], [0.0, -1.0]]]
[grid.lattice]
base = [[0.0, 0.0], [1.0, 0.0]]
coord = 1
lo = [-1.0, -1.0]
step = 1.0
n = 3
"#;

    #[test]
    fn parses_and_builds() {
        let c = RunConfig::from_toml(BASIC).unwrap();
        c.validate(Mode::Envelope).unwrap();
        assert_eq!(c.grid().unwrap().len(), 10);
        assert_eq!(c.budget().seed, 3);
        assert_eq!(c.quadrature.m, 512);
    }

    #[test]
    fn missing_seed_is_named() {
        let src = BASIC.replace("seed = 3", "");
        let e = RunConfig::from_toml(&src).unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = BASIC.replace("dim = 2", "dim = 2\ndimm = 3");
        assert!(RunConfig::from_toml(&src).is_err());
        let src = format!("{BASIC}\n[budget]\nrestart = 3\n");
        assert!(RunConfig::from_toml(&src).is_err());
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let src = BASIC.replace("seed = 3", "seed = 3\nmode = \"hull\"");
        let c = RunConfig::from_toml(&src).unwrap();
        assert!(c.validate(Mode::Envelope).is_err());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::from_toml(BASIC).unwrap();
        let back = RunConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
