//! Orchestration shared by the CLI and the acceptance suite.

use crate::config::RunConfig;
use anyhow::{anyhow, Result};
use rigidity_core::geometry::{build_geometry, Geometry};
use rigidity_core::params::ParamSet;
use rigidity_core::spectral::{lambda_star_estimate, LambdaStarOpts};

/// Geometry + parameters materialized from a config.
pub struct Workspace {
    pub geom: Geometry,
    pub params: ParamSet,
}

/// Strict parameter domain (equation/flow work).
pub fn build_strict(cfg: &RunConfig) -> Result<Workspace> {
    let geom = build_geometry(cfg.geometry.kind, cfg.geometry.n, cfg.geometry.resolution)
        .map_err(|e| anyhow!("{e}"))?;
    let params = ParamSet::new(cfg.geometry.n, cfg.params.p, cfg.params.q, cfg.params.lambda)
        .map_err(|e| anyhow!("{e}"))?;
    Ok(Workspace { geom, params })
}

/// Relaxed parameter domain (identity/operator checks that remain valid for
/// p >= n, e.g. the torus at n = 2 with p >= 2).
pub fn build_relaxed(cfg: &RunConfig) -> Result<Workspace> {
    let geom = build_geometry(cfg.geometry.kind, cfg.geometry.n, cfg.geometry.resolution)
        .map_err(|e| anyhow!("{e}"))?;
    let params =
        ParamSet::relaxed(cfg.geometry.n, cfg.params.p, cfg.params.q, cfg.params.lambda)
            .map_err(|e| anyhow!("{e}"))?;
    Ok(Workspace { geom, params })
}

/// Parameters for flow/scan experiments accept the torus at n = 2 (p = n),
/// where the constants stay finite even though p* degenerates.
pub fn build_flow_domain(cfg: &RunConfig) -> Result<Workspace> {
    if (cfg.params.p - cfg.geometry.n as f64).abs() < 1e-12 {
        build_relaxed(cfg)
    } else {
        build_strict(cfg)
    }
}

/// Threshold estimate for the workspace's standard point, with the default
/// seed library only (deterministic).
pub fn lambda_hat(ws: &Workspace, descent_steps: usize) -> Result<f64> {
    let opts = LambdaStarOpts { descent_steps, ..Default::default() };
    let report = lambda_star_estimate(&ws.geom, &ws.params, &opts, &[])
        .map_err(|e| anyhow!("{e}"))?;
    Ok(report.best_value)
}
