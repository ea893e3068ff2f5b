//! Run configuration: TOML sections, defaults, overrides and validation.

use std::path::{Path, PathBuf};

use polyharm::{GeometryKind, Profile, SobolevParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub geometry: RawGeometry,
    #[serde(default)]
    pub operator: RawOperator,
    #[serde(default)]
    pub constraint: RawConstraint,
    #[serde(default)]
    pub testfn: RawTestFn,
    #[serde(default)]
    pub tolerances: RawTolerances,
    #[serde(default)]
    pub rayleigh: RawRayleigh,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGeometry {
    pub kind: Option<GeometryKind>,
    pub n: Option<u32>,
    pub radius: Option<f64>,
    pub node_count: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOperator {
    pub k: Option<u32>,
    pub lower_order: Option<Vec<Profile>>,
    pub f: Option<Profile>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConstraint {
    pub q: Option<f64>,
    pub q_schedule: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    /// One list `[φ₁, …, φ_k]` per boundary component.
    pub boundary: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTestFn {
    pub eps_list: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub cutoff_order: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTolerances {
    pub el_tol: Option<f64>,
    pub constraint_tol: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRayleigh {
    pub truncation_radius: Option<f64>,
    pub node_count: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub directory: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Command-line values that replace their config counterparts.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<u32>,
    pub k: Option<u32>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
    pub eps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub operator: OperatorConfig,
    pub constraint: ConstraintConfig,
    pub testfn: TestFnConfig,
    pub tolerances: Tolerances,
    pub rayleigh: RayleighConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub n: u32,
    pub radius: f64,
    pub node_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorConfig {
    pub k: u32,
    pub lower_order: Vec<Profile>,
    pub f: Profile,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintConfig {
    pub q: f64,
    pub q_schedule: Vec<f64>,
    pub gamma: f64,
    pub boundary: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestFnConfig {
    pub eps_list: Vec<f64>,
    pub delta: f64,
    pub cutoff_order: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub el_tol: f64,
    pub constraint_tol: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayleighConfig {
    pub truncation_radius: f64,
    pub node_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

/// Fractions of `(2, 2♯)` used when no schedule is given.
const DEFAULT_SCHEDULE: [f64; 6] = [0.25, 0.5, 0.75, 0.875, 0.975, 0.9975];
const DEFAULT_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Fills defaults, applies overrides and checks cross-field consistency.
    pub fn resolve(self, ov: &Overrides) -> Result<RunConfig, CliError> {
        let n = ov.n.or(self.geometry.n).unwrap_or(3);
        let k = ov.k.or(self.operator.k).unwrap_or(1);
        let params = SobolevParams::new(n, k).map_err(|e| config_err(e.to_string()))?;
        let two_sharp = params.two_sharp();

        let kind = self.geometry.kind.unwrap_or(GeometryKind::Slab);
        let geometry = GeometryConfig {
            kind,
            n,
            radius: self.geometry.radius.unwrap_or(1.0),
            node_count: self.geometry.node_count.unwrap_or(201),
        };
        if !(geometry.radius > 0.0 && geometry.radius.is_finite()) {
            return Err(config_err(format!(
                "geometry.radius = {} must be > 0",
                geometry.radius
            )));
        }

        let lower_order = self
            .operator
            .lower_order
            .unwrap_or_else(|| vec![Profile::zero(); k as usize]);
        if lower_order.len() != k as usize {
            return Err(config_err(format!(
                "operator.lower_order has {} profiles, k = {k} needs {k}",
                lower_order.len()
            )));
        }
        let operator = OperatorConfig {
            k,
            lower_order,
            f: self.operator.f.unwrap_or(Profile::constant(1.0)),
        };

        let in_range = |q: f64| q > 2.0 && q < two_sharp;
        let q =
            ov.q.or(self.constraint.q)
                .unwrap_or(2.0 + (two_sharp - 2.0) / 2.0);
        if !in_range(q) {
            return Err(config_err(format!("q = {q} outside (2, {two_sharp})")));
        }
        let q_schedule = self.constraint.q_schedule.unwrap_or_else(|| {
            DEFAULT_SCHEDULE
                .iter()
                .map(|s| 2.0 + s * (two_sharp - 2.0))
                .collect()
        });
        if q_schedule.is_empty() {
            return Err(config_err("constraint.q_schedule is empty"));
        }
        if let Some(bad) = q_schedule.iter().find(|&&q| !in_range(q)) {
            return Err(config_err(format!(
                "q_schedule entry {bad} outside (2, {two_sharp})"
            )));
        }
        let components = match kind {
            GeometryKind::Ball => 1,
            GeometryKind::Slab => 2,
        };
        let boundary = self
            .constraint
            .boundary
            .unwrap_or_else(|| vec![vec![0.0; k as usize]; components]);
        if boundary.len() != components {
            return Err(config_err(format!(
                "constraint.boundary has {} components, {kind:?} has {components}",
                boundary.len()
            )));
        }
        if let Some(c) = boundary.iter().find(|c| c.len() != k as usize) {
            return Err(config_err(format!(
                "boundary component has {} values, k = {k} needs {k}",
                c.len()
            )));
        }
        let gamma = ov.gamma.or(self.constraint.gamma).unwrap_or(1.0);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(config_err(format!("gamma = {gamma} must be > 0")));
        }
        let constraint = ConstraintConfig {
            q,
            q_schedule,
            gamma,
            boundary,
        };

        let eps_list = ov
            .eps
            .clone()
            .or(self.testfn.eps_list)
            .unwrap_or_else(|| DEFAULT_EPS.to_vec());
        if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(config_err("testfn.eps_list must be nonempty and positive"));
        }
        let testfn = TestFnConfig {
            eps_list,
            delta: self.testfn.delta.unwrap_or(geometry.radius / 4.0),
            cutoff_order: self.testfn.cutoff_order.unwrap_or(2 * k + 1),
        };

        let tolerances = Tolerances {
            el_tol: self.tolerances.el_tol.unwrap_or(1e-6),
            constraint_tol: self.tolerances.constraint_tol.unwrap_or(1e-10),
            max_iterations: self.tolerances.max_iterations.unwrap_or(20000),
        };
        if !(tolerances.el_tol > 0.0) || !(tolerances.constraint_tol > 0.0) {
            return Err(config_err("tolerances must be > 0"));
        }

        let rayleigh = RayleighConfig {
            truncation_radius: self.rayleigh.truncation_radius.unwrap_or(100.0),
            node_count: self.rayleigh.node_count.unwrap_or(20001),
        };

        let mut formats = self
            .output
            .formats
            .unwrap_or_else(|| vec![Format::Csv, Format::Json]);
        formats.sort();
        formats.dedup();
        let output = OutputConfig {
            directory: self
                .output
                .directory
                .unwrap_or_else(|| PathBuf::from("out")),
            formats,
        };

        Ok(RunConfig {
            geometry,
            operator,
            constraint,
            testfn,
            tolerances,
            rayleigh,
            output,
        })
    }
}

impl RunConfig {
    pub fn params(&self) -> SobolevParams {
        SobolevParams::new(self.geometry.n, self.operator.k).expect("validated in resolve")
    }

    pub fn emits(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = RawConfig::default().resolve(&Overrides::default()).unwrap();
        assert_eq!(c.geometry.n, 3);
        assert_eq!(c.constraint.q, 4.0);
        assert_eq!(c.constraint.boundary, vec![vec![0.0], vec![0.0]]);
        let expect = [3.0, 4.0, 5.0, 5.5, 5.9, 5.99];
        for (a, b) in c.constraint.q_schedule.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(c.testfn.delta, 0.25);
        assert_eq!(c.testfn.cutoff_order, 3);
    }

    #[test]
    fn profiles_parse_from_toml() {
        let raw = RawConfig::parse(
            r#"
            [operator]
            k = 2
            lower_order = [{ type = "constant", value = 0 }, { type = "polynomial", coefficients = [1.0, 0.5] }]
            f = { type = "gaussian", base = 1.0, amplitude = 1.0, width = 1.0 }
            "#,
        )
        .unwrap();
        let lo = raw.operator.lower_order.clone().unwrap();
        assert_eq!(lo[0], Profile::constant(0.0));
        assert_eq!(
            lo[1],
            Profile::Polynomial {
                coefficients: vec![1.0, 0.5]
            }
        );
        assert_eq!(
            raw.operator.f,
            Some(Profile::Gaussian {
                base: 1.0,
                amplitude: 1.0,
                width: 1.0,
                center: 0.0
            })
        );
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let cases = [
            "[geometry]\nn = 4\n[operator]\nk = 2",
            "[constraint]\nq = 6.0",
            "[constraint]\nq_schedule = [3.0, 7.0]",
            "[constraint]\nboundary = [[1.0, 0.0], [0.0, 0.0]]",
            "[constraint]\nboundary = [[1.0]]",
            "[operator]\nlower_order = [{ type = \"constant\", value = 1 }, { type = \"constant\", value = 1 }]",
            "[geometry]\nshape = \"ball\"",
        ];
        for text in cases {
            let r = RawConfig::parse(text).and_then(|c| c.resolve(&Overrides::default()));
            assert!(matches!(r, Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn overrides_win() {
        let raw = RawConfig::parse("[constraint]\nq = 3.0\ngamma = 2.0").unwrap();
        let ov = Overrides {
            n: Some(5),
            k: Some(2),
            q: Some(9.0),
            eps: Some(vec![0.1]),
            ..Default::default()
        };
        let c = raw.resolve(&ov).unwrap();
        assert_eq!(c.constraint.q, 9.0);
        assert_eq!(c.constraint.gamma, 2.0);
        assert_eq!(c.testfn.eps_list, vec![0.1]);
        assert_eq!(c.constraint.boundary, vec![vec![0.0, 0.0]; 2]);
    }
}
