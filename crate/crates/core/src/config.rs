//! Run configuration: a single JSON document shared by every subcommand,
//! schema-validated on load, with CLI flags layered on top by the binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly_nonlocal::PairRule;
use crate::fields::{AnalyticSource, PiecewiseConstant, SourceTerm};
use crate::kernels::NamedKernel;
use crate::mesh::{Label, LabeledMesh};
use crate::optimizer::OptConfig;
use crate::quad::TriangleRule;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config i/o ({path}): {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
}

/// Kernel selection: a named radial kernel plus its horizon δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    /// "gamma1" (constant) or "gamma2" (quartic).
    pub name: String,
    pub delta: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            name: "gamma1".to_string(),
            delta: 0.1,
        }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<NamedKernel, ConfigError> {
        NamedKernel::from_name(&self.name, self.delta)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Forcing-term selection: piecewise constants per subdomain or a named
/// analytic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum SourceSpec {
    /// f = f_local·χ_{Ω_l} + f_nonlocal·χ_{Ω_nl}.
    #[serde(rename = "piecewise")]
    Piecewise { f_local: f64, f_nonlocal: f64 },
    /// A named analytic field: "zero" or "sin_product" (sin πx · sin πy).
    #[serde(rename = "analytic")]
    Analytic { name: String },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Piecewise {
            f_local: -10.0,
            f_nonlocal: 10.0,
        }
    }
}

impl SourceSpec {
    pub fn build(&self) -> Result<Box<dyn SourceTerm>, ConfigError> {
        match self {
            SourceSpec::Piecewise { f_local, f_nonlocal } => {
                Ok(Box::new(PiecewiseConstant::new(*f_local, *f_nonlocal)))
            }
            SourceSpec::Analytic { name } => match name.as_str() {
                "zero" => Ok(Box::new(AnalyticSource {
                    value: |_x| 0.0,
                    grad: |_x| crate::geometry::Vec2::zeros(),
                })),
                "sin_product" => Ok(Box::new(AnalyticSource {
                    value: |x| (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin(),
                    grad: |x| {
                        let pi = std::f64::consts::PI;
                        crate::geometry::Vec2::new(
                            pi * (pi * x.x).cos() * (pi * x.y).sin(),
                            pi * (pi * x.x).sin() * (pi * x.y).cos(),
                        )
                    },
                })),
                other => Err(ConfigError::Invalid(format!(
                    "unknown analytic source '{other}' (known: zero, sin_product)"
                ))),
            },
        }
    }
}

/// Optimizer parameter block (paper defaults where stated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptSection {
    pub tol: f64,
    pub maxiter: usize,
    pub armijo_c: f64,
    pub tau: f64,
    pub memory: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub alpha_min: f64,
}

impl Default for OptSection {
    fn default() -> Self {
        let d = OptConfig::default();
        OptSection {
            tol: d.tol,
            maxiter: d.maxiter,
            armijo_c: d.armijo_c,
            tau: d.tau,
            memory: d.memory,
            mu_min: d.mu_min,
            mu_max: d.mu_max,
            alpha_min: d.alpha_min,
        }
    }
}

/// Quadrature degrees: the nonlocal pair rule (x and y factors) and the
/// single-triangle rule for loads and tracking terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSection {
    pub pair_degree_x: usize,
    pub pair_degree_y: usize,
    pub load_degree: usize,
}

impl Default for QuadSection {
    fn default() -> Self {
        QuadSection {
            pair_degree_x: 5,
            pair_degree_y: 5,
            load_degree: 5,
        }
    }
}

impl QuadSection {
    pub fn pair_rule(&self) -> PairRule {
        PairRule {
            rule_x: TriangleRule::of_degree(self.pair_degree_x),
            rule_y: TriangleRule::of_degree(self.pair_degree_y),
        }
    }

    pub fn load_rule(&self) -> TriangleRule {
        TriangleRule::of_degree(self.load_degree)
    }
}

/// Schwarz solver parameters for `solve --method schwarz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchwarzSection {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SchwarzSection {
    fn default() -> Self {
        SchwarzSection {
            tol: 1e-12,
            max_sweeps: 200,
        }
    }
}

/// The configuration document. Every subcommand reads one of these; CLI
/// flags override individual keys after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Working mesh (MSH 2.2 ASCII).
    pub mesh: PathBuf,
    /// Mesh carrying the tracking data ū (defaults to `mesh` when empty).
    pub data_mesh: Option<PathBuf>,
    /// Nodal field file for ū (binary + JSON sidecar), as written by
    /// `generate-data`.
    pub data_field: Option<PathBuf>,
    /// MSH physical-group id → region name ("local" | "nonlocal" | "exterior").
    pub labels: BTreeMap<String, String>,
    pub kernel: KernelSpec,
    pub source: SourceSpec,
    /// Perimeter regularization weight.
    pub nu: f64,
    pub opt: OptSection,
    pub quadrature: QuadSection,
    pub schwarz: SchwarzSection,
    pub output_dir: PathBuf,
    /// Extrapolation tolerance when interpolating ū between meshes.
    pub interp_max_dist: f64,
    /// Seed for the random velocity fields of `check-derivative`.
    pub seed: u64,
    /// Recorded intent flag; assembly is deterministic in any case.
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: PathBuf::new(),
            data_mesh: None,
            data_field: None,
            labels: default_labels(),
            kernel: KernelSpec::default(),
            source: SourceSpec::default(),
            nu: 1e-3,
            opt: OptSection::default(),
            quadrature: QuadSection::default(),
            schwarz: SchwarzSection::default(),
            output_dir: PathBuf::from("out"),
            interp_max_dist: 0.2,
            seed: 1,
            deterministic: true,
        }
    }
}

/// The conventional physical-group numbering used by the fixture writer.
pub fn default_labels() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("1".to_string(), "local".to_string()),
        ("2".to_string(), "nonlocal".to_string()),
        ("3".to_string(), "exterior".to_string()),
    ])
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate_schema()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String, ConfigError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Value-level checks that need no file system or mesh.
    pub fn validate_schema(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.kernel.delta <= 0.0 {
            return bad("kernel.delta must be positive".into());
        }
        self.kernel.build()?;
        self.source.build()?;
        if !(self.nu >= 0.0) {
            return bad("nu must be nonnegative".into());
        }
        if !(self.opt.tol > 0.0) {
            return bad("opt.tol must be positive".into());
        }
        if !(self.opt.tau > 0.0 && self.opt.tau < 1.0) {
            return bad("opt.tau must lie in (0,1)".into());
        }
        if !(self.opt.armijo_c > 0.0 && self.opt.armijo_c < 1.0) {
            return bad("opt.armijo_c must lie in (0,1)".into());
        }
        if !(0.0 <= self.opt.mu_min && self.opt.mu_min <= self.opt.mu_max && self.opt.mu_max > 0.0)
        {
            return bad("opt mu bounds must satisfy 0 <= mu_min <= mu_max, mu_max > 0".into());
        }
        if !(self.interp_max_dist > 0.0) {
            return bad("interp_max_dist must be positive".into());
        }
        for (key, value) in &self.labels {
            if key.parse::<i32>().is_err() {
                return bad(format!("label key '{key}' is not an integer physical id"));
            }
            parse_region(value)?;
        }
        if !(self.schwarz.tol > 0.0) || self.schwarz.max_sweeps == 0 {
            return bad("schwarz.tol must be positive and max_sweeps nonzero".into());
        }
        Ok(())
    }

    /// File-existence checks for the paths a subcommand will actually read.
    pub fn validate_files(&self, need_data: bool) -> Result<(), ConfigError> {
        let check = |p: &Path| {
            if p.as_os_str().is_empty() || !p.exists() {
                Err(ConfigError::MissingFile(p.to_path_buf()))
            } else {
                Ok(())
            }
        };
        check(&self.mesh)?;
        if let Some(dm) = &self.data_mesh {
            check(dm)?;
        }
        if need_data {
            match &self.data_field {
                Some(df) => check(df)?,
                None => {
                    return Err(ConfigError::Invalid(
                        "data_field is required for this subcommand".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// The horizon must fit inside the exterior collar: the nonlocal
    /// neighborhood of Ω must not reach beyond the meshed strip. The collar
    /// width is measured as the minimal bounding-box margin between Ω
    /// (LOCAL ∪ NONLOCAL) and the full mesh.
    pub fn validate_against_mesh(&self, mesh: &LabeledMesh) -> Result<(), ConfigError> {
        let mut omega = BBox::empty();
        let mut full = BBox::empty();
        for t in 0..mesh.n_triangles() {
            for &v in &mesh.triangle(t) {
                let p = mesh.vertex(v);
                full.absorb(p.x, p.y);
                if mesh.label(t) != Label::Exterior {
                    omega.absorb(p.x, p.y);
                }
            }
        }
        let width = (omega.min_x - full.min_x)
            .min(full.max_x - omega.max_x)
            .min(omega.min_y - full.min_y)
            .min(full.max_y - omega.max_y);
        if self.kernel.delta > width + 1e-12 {
            return Err(ConfigError::Invalid(format!(
                "kernel.delta = {} exceeds the exterior-layer width {width:.6}",
                self.kernel.delta
            )));
        }
        Ok(())
    }

    /// Assembles the optimizer parameter struct from the document.
    pub fn opt_config(&self) -> OptConfig {
        OptConfig {
            nu: self.nu,
            delta: self.kernel.delta,
            tol: self.opt.tol,
            maxiter: self.opt.maxiter,
            armijo_c: self.opt.armijo_c,
            tau: self.opt.tau,
            memory: self.opt.memory,
            mu_min: self.opt.mu_min,
            mu_max: self.opt.mu_max,
            alpha_min: self.opt.alpha_min,
            interp_max_dist: self.interp_max_dist,
            pair_rule: self.quadrature.pair_rule(),
            load_rule: self.quadrature.load_rule(),
        }
    }

    /// Physical-group id → Label map for the MSH reader.
    pub fn label_map(&self) -> Result<BTreeMap<i32, Label>, ConfigError> {
        let mut out = BTreeMap::new();
        for (key, value) in &self.labels {
            let id: i32 = key
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("label key '{key}' not an integer")))?;
            out.insert(id, parse_region(value)?);
        }
        Ok(out)
    }
}

fn parse_region(name: &str) -> Result<Label, ConfigError> {
    match name.to_ascii_lowercase().as_str() {
        "local" => Ok(Label::Local),
        "nonlocal" => Ok(Label::Nonlocal),
        "exterior" => Ok(Label::Exterior),
        other => Err(ConfigError::Invalid(format!(
            "unknown region '{other}' (expected local | nonlocal | exterior)"
        ))),
    }
}

struct BBox {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl BBox {
    fn empty() -> BBox {
        BBox {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }

    fn absorb(&mut self, x: f64, y: f64) {
        self.min_x = self.min_x.min(x);
        self.max_x = self.max_x.max(x);
        self.min_y = self.min_y.min(y);
        self.max_y = self.max_y.max(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::samples;

    #[test]
    fn roundtrip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.mesh = PathBuf::from("meshes/a.msh");
        cfg.nu = 2.5e-3;
        cfg.kernel = KernelSpec {
            name: "gamma2".into(),
            delta: 0.15,
        };
        cfg.source = SourceSpec::Analytic {
            name: "sin_product".into(),
        };
        let text = cfg.to_json().unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        // and once more through the serializer
        assert_eq!(text, back.to_json().unwrap());
    }

    #[test]
    fn schema_rejects_unknown_keys_and_bad_values() {
        let err = serde_json::from_str::<RunConfig>(r#"{"meesh": "x.msh"}"#);
        assert!(err.is_err(), "unknown key must be rejected");

        let mut cfg = RunConfig::default();
        cfg.opt.tau = 1.0;
        assert!(matches!(
            cfg.validate_schema(),
            Err(ConfigError::Invalid(_))
        ));

        let mut cfg = RunConfig::default();
        cfg.kernel.name = "gamma9".into();
        assert!(cfg.validate_schema().is_err());

        let mut cfg = RunConfig::default();
        cfg.labels.insert("7".into(), "void".into());
        assert!(cfg.validate_schema().is_err());
    }

    #[test]
    fn missing_files_are_reported() {
        let mut cfg = RunConfig::default();
        cfg.mesh = PathBuf::from("/nonexistent/m.msh");
        assert!(matches!(
            cfg.validate_files(false),
            Err(ConfigError::MissingFile(_))
        ));
    }

    #[test]
    fn delta_must_fit_the_exterior_layer() {
        // two exterior layers of width 1/8 each → collar 0.25
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let mut cfg = RunConfig::default();
        cfg.kernel.delta = 0.2;
        cfg.validate_against_mesh(&mesh).unwrap();
        cfg.kernel.delta = 0.3;
        assert!(cfg.validate_against_mesh(&mesh).is_err());
    }

    #[test]
    fn sources_and_kernels_build() {
        let cfg = RunConfig::default();
        let k = cfg.kernel.build().unwrap();
        assert_eq!(k.name(), "gamma1");
        let s = SourceSpec::Analytic { name: "zero".into() }.build().unwrap();
        assert_eq!(s.value(Label::Local, Vec2::new(0.3, 0.3)), 0.0);
        let s = SourceSpec::default().build().unwrap();
        assert_eq!(s.value(Label::Local, Vec2::new(0.3, 0.3)), -10.0);
        assert_eq!(s.value(Label::Nonlocal, Vec2::new(0.5, 0.5)), 10.0);
    }

    #[test]
    fn label_map_parses() {
        let cfg = RunConfig::default();
        let map = cfg.label_map().unwrap();
        assert_eq!(map[&1], Label::Local);
        assert_eq!(map[&2], Label::Nonlocal);
        assert_eq!(map[&3], Label::Exterior);
    }
}
