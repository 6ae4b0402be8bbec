//! CSV and JSON emission. All numbers print with Rust's shortest-roundtrip
//! float formatting, so identical runs produce byte-identical files.

use anyhow::{Context, Result};
use rigidity_core::elliptic::ScanReport;
use rigidity_core::flow::FlowTrace;
use rigidity_core::geometry::{Field, Geometry};
use rigidity_core::identities::IdentityReport;
use rigidity_core::spectral::LambdaStarReport;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

/// Report header carried by every JSON artifact.
pub fn header(seed: u64, config_text: &str) -> Value {
    json!({
        "seed": seed,
        "config": config_text.lines().collect::<Vec<_>>(),
    })
}

pub fn field_csv(geom: &Geometry, field: &Field) -> String {
    let mut s = String::from("coordinate,value\n");
    for (t, v) in geom.grid.iter().zip(field.values.iter()) {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

pub fn identity_reports_csv(reports: &[IdentityReport]) -> String {
    let mut s = String::from("name,lhs,rhs,abs_gap,rel_gap,refinement_slope,tolerance,pass\n");
    for r in reports {
        let slope = r.refinement_slope.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.name, r.lhs, r.rhs, r.abs_gap, r.rel_gap, slope, r.tolerance, r.pass
        );
    }
    s
}

pub fn identity_report_json(r: &IdentityReport) -> Value {
    json!({
        "name": r.name,
        "lhs": r.lhs,
        "rhs": r.rhs,
        "abs_gap": r.abs_gap,
        "rel_gap": r.rel_gap,
        "refinement_slope": r.refinement_slope,
        "tolerance": r.tolerance,
        "pass": r.pass,
    })
}

pub fn identity_reports_json(reports: &[IdentityReport]) -> Value {
    Value::Array(reports.iter().map(identity_report_json).collect())
}

pub fn scan_csv(report: &ScanReport) -> String {
    // rows: lambda; columns: perturbation id; cells: classification
    let mut s = String::from("lambda");
    for (pi, p) in report.perturbations.iter().enumerate() {
        let _ = write!(s, ",pert_{pi}_{p:?}");
    }
    s.push('\n');
    for (li, lam) in report.lambda_grid.iter().enumerate() {
        let _ = write!(s, "{lam}");
        for pi in 0..report.perturbations.len() {
            let cell = report
                .cells
                .iter()
                .find(|c| c.cell.lambda_index == li && c.cell.perturbation_index == pi);
            let name = cell.map(|c| c.class.as_str()).unwrap_or("missing");
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
    }
    s
}

pub fn scan_json(report: &ScanReport) -> Value {
    json!({
        "lambda_grid": report.lambda_grid,
        "perturbations": report.perturbations.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>(),
        "smallest_nonconstant_lambda": report.smallest_nonconstant_lambda,
        "lambda_hat": report.lambda_hat,
        "cells": report.cells.iter().map(|c| json!({
            "lambda": c.cell.lambda,
            "perturbation": format!("{:?}", c.cell.perturbation),
            "class": c.class.as_str(),
            "residual_norm": c.residual_norm,
            "iterations": c.iterations,
            "cdc_threshold": c.cdc_threshold,
        })).collect::<Vec<_>>(),
    })
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut s = String::from("t,mass,F,dF_dt_fd,dF_dt_rhs,G\n");
    for i in 0..trace.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            trace.times[i],
            trace.mass[i],
            trace.f_values[i],
            trace.df_dt_fd[i],
            trace.df_dt_rhs[i],
            trace.g_values[i]
        );
    }
    s
}

pub fn lambda_star_json(report: &LambdaStarReport) -> Value {
    json!({
        "best_value": report.best_value,
        "candidates_evaluated": report.candidates_evaluated,
        "normalization": report.normalization,
        "scale_sensitivity": report.scale_sensitivity,
        "converged": report.converged,
    })
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}
