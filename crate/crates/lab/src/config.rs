//! Run configuration: a flat key-value text format mirroring the config
//! structure, overridable by CLI flags. Round-trips without loss.

use anyhow::{bail, Context, Result};
use rigidity_core::geometry::GeometryKind;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub params: ParamsConfig,
    pub solver: SolverConfig,
    pub flow: FlowConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub n: u32,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsConfig {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub res_tol: f64,
    pub class_tol: f64,
    pub max_iter: usize,
    /// None = automatic (1e-8 x gradient scale).
    pub eps: Option<f64>,
    pub frozen_jacobian: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub t_end: f64,
    pub dt0: f64,
    pub mass_tol: f64,
    pub log_space: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig {
                kind: GeometryKind::SphereAxisymmetric,
                n: 3,
                resolution: 400,
            },
            params: ParamsConfig { p: 2.0, q: 4.0, lambda: 0.5 },
            solver: SolverConfig {
                res_tol: 1e-9,
                class_tol: 1e-6,
                max_iter: 200,
                eps: None,
                frozen_jacobian: false,
            },
            flow: FlowConfig { t_end: 5.0, dt0: 1e-3, mass_tol: 1e-6, log_space: false },
            output: OutputConfig { dir: "out".into(), formats: "csv,json".into() },
        }
    }
}

fn kind_name(kind: GeometryKind) -> &'static str {
    match kind {
        GeometryKind::SphereAxisymmetric => "sphere",
        GeometryKind::TorusOneD => "torus",
    }
}

pub fn parse_kind(s: &str) -> Result<GeometryKind> {
    match s {
        "sphere" => Ok(GeometryKind::SphereAxisymmetric),
        "torus" => Ok(GeometryKind::TorusOneD),
        other => bail!("unknown geometry kind '{other}' (expected sphere|torus)"),
    }
}

impl RunConfig {
    /// Serialize to the flat key-value text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "geometry.kind = {}", kind_name(self.geometry.kind));
        let _ = writeln!(s, "geometry.n = {}", self.geometry.n);
        let _ = writeln!(s, "geometry.N = {}", self.geometry.resolution);
        let _ = writeln!(s, "params.p = {}", self.params.p);
        let _ = writeln!(s, "params.q = {}", self.params.q);
        let _ = writeln!(s, "params.lambda = {}", self.params.lambda);
        let _ = writeln!(s, "solver.res_tol = {}", self.solver.res_tol);
        let _ = writeln!(s, "solver.class_tol = {}", self.solver.class_tol);
        let _ = writeln!(s, "solver.max_iter = {}", self.solver.max_iter);
        match self.solver.eps {
            Some(e) => {
                let _ = writeln!(s, "solver.eps = {e}");
            }
            None => {
                let _ = writeln!(s, "solver.eps = auto");
            }
        }
        let _ = writeln!(s, "solver.frozen_jacobian = {}", self.solver.frozen_jacobian);
        let _ = writeln!(s, "flow.t_end = {}", self.flow.t_end);
        let _ = writeln!(s, "flow.dt0 = {}", self.flow.dt0);
        let _ = writeln!(s, "flow.mass_tol = {}", self.flow.mass_tol);
        let _ = writeln!(s, "flow.log_space = {}", self.flow.log_space);
        let _ = writeln!(s, "output.dir = {}", self.output.dir);
        let _ = writeln!(s, "output.formats = {}", self.output.formats);
        s
    }

    /// Parse the flat format; unknown keys are rejected, missing keys keep
    /// their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value)
                .with_context(|| format!("line {}: key '{key}'", lineno + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "geometry.kind" => self.geometry.kind = parse_kind(value)?,
            "geometry.n" => self.geometry.n = value.parse()?,
            "geometry.N" => self.geometry.resolution = value.parse()?,
            "params.p" => self.params.p = value.parse()?,
            "params.q" => self.params.q = value.parse()?,
            "params.lambda" => self.params.lambda = value.parse()?,
            "solver.res_tol" => self.solver.res_tol = value.parse()?,
            "solver.class_tol" => self.solver.class_tol = value.parse()?,
            "solver.max_iter" => self.solver.max_iter = value.parse()?,
            "solver.eps" => {
                self.solver.eps = if value == "auto" { None } else { Some(value.parse()?) }
            }
            "solver.frozen_jacobian" => self.solver.frozen_jacobian = value.parse()?,
            "flow.t_end" => self.flow.t_end = value.parse()?,
            "flow.dt0" => self.flow.dt0 = value.parse()?,
            "flow.mass_tol" => self.flow.mass_tol = value.parse()?,
            "flow.log_space" => self.flow.log_space = value.parse()?,
            "output.dir" => self.output.dir = value.to_string(),
            "output.formats" => self.output.formats = value.to_string(),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_without_loss() {
        let mut cfg = RunConfig::default();
        cfg.params.p = 2.3;
        cfg.params.lambda = 0.123456789012345;
        cfg.solver.eps = Some(3.5e-9);
        cfg.geometry.kind = GeometryKind::TorusOneD;
        cfg.geometry.n = 2;
        let text = cfg.to_text();
        let back = RunConfig::from_text(&text).unwrap();
        assert_eq!(cfg, back);
        // and the default round-trips too (eps = auto path)
        let d = RunConfig::default();
        assert_eq!(d, RunConfig::from_text(&d.to_text()).unwrap());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_text("bogus.key = 1").is_err());
    }
}
