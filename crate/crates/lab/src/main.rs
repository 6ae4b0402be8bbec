//! Command-line front door: configuration, experiment orchestration and
//! report emission.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rigidity_core::elliptic::{
    assemble_scan_report, scan_cells, solve_cell, solve_stationary, Nonlinearity, SolveOpts,
    SolutionClass,
};
use rigidity_core::fields::{perturbation_library, FieldSpec};
use rigidity_core::flow::{dissipation_identity_check, run_flow, FlowOpts};
use rigidity_core::identities::{interpolation_check, verify_unconditional};
use rigidity_core::operators::default_eps;
use rigidity_core::params::{cdc_certificate, derive_constants, sigma_admissible_interval};
use rigidity_core::spectral::{lambda1, lambda_star_estimate, poincare_sides, LambdaStarOpts};
use rigidity_lab::config::{parse_kind, RunConfig};
use rigidity_lab::{corpus, pool, report, run};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rigidity-lab",
    about = "Numerical laboratory for p-Laplacian rigidity on model manifolds",
    version
)]
struct Cli {
    /// Flat key-value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed for every random corpus; recorded in report headers.
    #[arg(long, global = true, default_value_t = 20260810)]
    seed: u64,
    /// Validate the configuration, print derived constants and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Geometry kind: sphere | torus.
    #[arg(long, global = true)]
    geometry: Option<String>,
    /// Ambient dimension n.
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Grid resolution N.
    #[arg(long = "grid", global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form constants for (n, p, q).
    Constants,
    /// Evaluate the carre du champ certificate at a gamma.
    Certificate {
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
    },
    /// Run the unconditional identity suite on a named field (or the corpus).
    Verify {
        /// exp-cos[:a] | cos:amp,k | sin:amp,k | shifted:c0 | inv-shifted:c0 |
        /// pow-shifted:c0,e | two-mode:a1,a3 | one
        #[arg(long)]
        field: Option<String>,
    },
    /// Solve the stationary equation from a perturbed start.
    Solve {
        #[arg(long, default_value_t = 0.3)]
        amp: f64,
        #[arg(long, default_value_t = 1)]
        k: u32,
    },
    /// Classification scan over a lambda grid and the perturbation library.
    Scan {
        /// Comma-separated lambda values; default spreads below the threshold
        /// estimate.
        #[arg(long)]
        lambdas: Option<String>,
    },
    /// Integrate the porous-medium-type flow and record the trace.
    Flow {
        #[arg(long, default_value_t = 0.2)]
        amp: f64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
    /// Lowest positive eigenvalue of the linearized operator at a field.
    Lambda1 {
        #[arg(long)]
        field: Option<String>,
    },
    /// Rayleigh-quotient threshold estimate.
    LambdaStar {
        #[arg(long, default_value_t = 40)]
        descent_steps: usize,
        #[arg(long, default_value_t = 4)]
        random_seeds: usize,
    },
    /// Interpolation inequality over a random positive corpus.
    InterpCheck {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        /// lambda as a fraction of the threshold estimate (ignored when
        /// --lambda is given).
        #[arg(long, default_value_t = 0.9)]
        lambda_frac: f64,
    },
}

/// Exit codes: 0 success, 1 failed verdict, 2 usage/config error.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(kind) = &cli.geometry {
        cfg.geometry.kind = parse_kind(kind)?;
        // the flat torus defaults to its natural dimension unless --n is given
        if cli.n.is_none() && cfg.geometry.kind == rigidity_core::GeometryKind::TorusOneD {
            cfg.geometry.n = 2;
        }
    }
    if let Some(n) = cli.n {
        cfg.geometry.n = n;
    }
    if let Some(res) = cli.grid {
        cfg.geometry.resolution = res;
    }
    if let Some(p) = cli.p {
        cfg.params.p = p;
    }
    if let Some(q) = cli.q {
        cfg.params.q = q;
    }
    if let Some(lambda) = cli.lambda {
        cfg.params.lambda = lambda;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = dir.display().to_string();
    }
    Ok(cfg)
}

fn parse_field(spec: &str) -> Result<FieldSpec> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let floats = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad number '{x}': {e}")))
            .collect()
    };
    Ok(match (name, args) {
        ("one", _) => FieldSpec::One,
        ("exp-cos", None) => FieldSpec::ExpCos { a: 1.0 },
        ("exp-cos", Some(a)) => FieldSpec::ExpCos { a: floats(a)?[0] },
        ("cos", Some(a)) => {
            let v = floats(a)?;
            FieldSpec::CosMode { amp: v[0], k: v.get(1).copied().unwrap_or(1.0) as u32 }
        }
        ("sin", Some(a)) => {
            let v = floats(a)?;
            FieldSpec::SinMode { amp: v[0], k: v.get(1).copied().unwrap_or(1.0) as u32 }
        }
        ("shifted", Some(a)) => FieldSpec::Shifted { c0: floats(a)?[0] },
        ("inv-shifted", Some(a)) => FieldSpec::InverseShifted { c0: floats(a)?[0] },
        ("pow-shifted", Some(a)) => {
            let v = floats(a)?;
            FieldSpec::PowShifted { c0: v[0], e: v[1] }
        }
        ("two-mode", Some(a)) => {
            let v = floats(a)?;
            FieldSpec::TwoMode { a1: v[0], a3: v[1] }
        }
        other => bail!("unknown field spec '{}'", other.0),
    })
}

fn print_constants(cfg: &RunConfig) -> Result<()> {
    let ws = run::build_flow_domain(cfg)?;
    let dc = derive_constants(&ws.params).map_err(|e| anyhow!("{e}"))?;
    println!(
        "beta={} theta={} kappa={} s={} p_star={}",
        dc.beta, dc.theta, dc.kappa, dc.s, dc.p_star
    );
    if let Some(v) = dc.vartheta_p2 {
        println!("vartheta_p2={v}");
    }
    Ok(())
}

fn solve_opts(cfg: &RunConfig) -> SolveOpts {
    SolveOpts {
        res_tol: cfg.solver.res_tol,
        class_tol: cfg.solver.class_tol,
        max_iter: cfg.solver.max_iter,
        eps: cfg.solver.eps,
        frozen_jacobian: cfg.solver.frozen_jacobian,
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let out_dir = PathBuf::from(&cfg.output.dir);
    let head = report::header(cli.seed, &cfg.to_text());

    if cli.dry_run {
        print_constants(&cfg)?;
        return Ok(true);
    }

    match &cli.cmd {
        Command::Constants => {
            print_constants(&cfg)?;
            let ws = run::build_flow_domain(&cfg)?;
            let dc = derive_constants(&ws.params).map_err(|e| anyhow!("{e}"))?;
            report::write_json(
                &out_dir,
                "constants.json",
                &json!({
                    "header": head,
                    "beta": dc.beta, "theta": dc.theta, "kappa": dc.kappa,
                    "s": dc.s, "p_star": dc.p_star, "vartheta_p2": dc.vartheta_p2,
                }),
            )?;
            Ok(true)
        }
        Command::Certificate { gamma } => {
            let ws = run::build_strict(&cfg)?;
            let cert = cdc_certificate(&ws.params, *gamma).map_err(|e| anyhow!("{e}"))?;
            let (lo, hi) = sigma_admissible_interval(&ws.params);
            println!(
                "alpha={} sigma={} X={} eta={} eta0={} alpha_tilde={} X0={} admissible={}",
                cert.alpha,
                cert.sigma,
                cert.x,
                cert.eta,
                cert.eta0,
                cert.alpha_tilde,
                cert.x0,
                cert.admissible
            );
            report::write_json(
                &out_dir,
                "certificate.json",
                &json!({
                    "header": head,
                    "gamma": cert.gamma, "alpha": cert.alpha, "sigma": cert.sigma,
                    "X": cert.x, "eta": cert.eta, "eta0": cert.eta0,
                    "alpha_tilde": cert.alpha_tilde, "X0": cert.x0,
                    "threshold_coeffs": [cert.threshold_coeffs.0, cert.threshold_coeffs.1],
                    "sigma_admissible_interval": [lo, hi],
                    "admissible": cert.admissible,
                }),
            )?;
            Ok(true)
        }
        Command::Verify { field } => {
            let ws = run::build_relaxed(&cfg)?;
            let specs: Vec<FieldSpec> = match field {
                Some(name) => vec![parse_field(name)?],
                None => rigidity_core::fields::identity_corpus(ws.geom.kind),
            };
            let mut all = Vec::new();
            let mut csv = String::new();
            let mut ok = true;
            for spec in &specs {
                let u = spec.sample(&ws.geom);
                let eps = default_eps(&ws.geom, &u);
                let reps = verify_unconditional(&ws.geom, &ws.params, &u, eps)
                    .map_err(|e| anyhow!("{e}"))?;
                for r in &reps {
                    println!(
                        "{:?} {}: lhs={} rhs={} rel_gap={} pass={}",
                        spec, r.name, r.lhs, r.rhs, r.rel_gap, r.pass
                    );
                    ok &= r.pass;
                }
                csv.push_str(&report::identity_reports_csv(&reps));
                all.push(json!({
                    "field": format!("{spec:?}"),
                    "reports": report::identity_reports_json(&reps),
                }));
            }
            report::write(&out_dir, "verify_summary.csv", &csv)?;
            report::write_json(&out_dir, "verify.json", &json!({"header": head, "runs": all}))?;
            Ok(ok)
        }
        Command::Solve { amp, k } => {
            let ws = run::build_flow_domain(&cfg)?;
            let f = Nonlinearity::power_law(ws.params.q);
            let v0 = FieldSpec::CosMode { amp: *amp, k: *k }.sample(&ws.geom);
            let res = solve_stationary(&ws.geom, &ws.params, &f, &v0, &solve_opts(&cfg))
                .map_err(|e| anyhow!("{e}"))?;
            println!(
                "class={} residual={} iterations={}",
                res.classified.as_str(),
                res.residual_norm,
                res.iterations
            );
            report::write(&out_dir, "solution.csv", &report::field_csv(&ws.geom, &res.field))?;
            report::write_json(
                &out_dir,
                "solve.json",
                &json!({
                    "header": head,
                    "class": res.classified.as_str(),
                    "residual_norm": res.residual_norm,
                    "iterations": res.iterations,
                }),
            )?;
            Ok(res.classified != SolutionClass::Diverged)
        }
        Command::Scan { lambdas } => {
            let ws = run::build_flow_domain(&cfg)?;
            let lambda_hat = run::lambda_hat(&ws, 25)?;
            let grid: Vec<f64> = match lambdas {
                Some(list) => {
                    let mut v: Vec<f64> = list
                        .split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
                        .collect::<Result<_>>()?;
                    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    v
                }
                None => [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|f| f * lambda_hat).collect(),
            };
            let perts = perturbation_library();
            let opts = solve_opts(&cfg);
            let cells = scan_cells(&grid, &perts);
            let results =
                pool::parallel_map(&cells, |cell| solve_cell(&ws.geom, &ws.params, cell, &opts));
            let rep = assemble_scan_report(grid, perts, results, Some(lambda_hat));
            for c in &rep.cells {
                println!(
                    "lambda={} pert={:?}: {}",
                    c.cell.lambda,
                    c.cell.perturbation,
                    c.class.as_str()
                );
            }
            println!(
                "lambda_hat={} smallest_nonconstant={:?}",
                lambda_hat, rep.smallest_nonconstant_lambda
            );
            report::write(&out_dir, "scan.csv", &report::scan_csv(&rep))?;
            let mut v = report::scan_json(&rep);
            v["header"] = head;
            report::write_json(&out_dir, "scan.json", &v)?;
            Ok(true)
        }
        Command::Flow { amp, k, samples } => {
            let ws = run::build_flow_domain(&cfg)?;
            let u0 = FieldSpec::CosMode { amp: *amp, k: *k }.sample(&ws.geom);
            let opts = FlowOpts {
                t_end: cfg.flow.t_end,
                dt0: cfg.flow.dt0,
                dt_max: cfg.flow.dt0,
                mass_tol: cfg.flow.mass_tol,
                log_space: cfg.flow.log_space,
                samples: *samples,
                eps: cfg.solver.eps,
                ..Default::default()
            };
            let trace = run_flow(&ws.geom, &ws.params, &u0, &opts).map_err(|e| anyhow!("{e}"))?;
            let check = dissipation_identity_check(&ws.geom, &ws.params, &trace)
                .map_err(|e| anyhow!("{e}"))?;
            let drift = trace.max_mass_drift();
            let f_up = trace.max_f_increase();
            let fd_tol = 1e-8 * trace.f_values[0].abs().max(1e-300);
            let mass_ok = drift < cfg.flow.mass_tol * cfg.flow.t_end.max(1.0);
            let mono_ok = f_up < fd_tol;
            println!(
                "mass_drift={drift} max_F_increase={f_up} median_dF_gap={} G_gap={}",
                check.median_df_gap, check.max_g_gap
            );
            report::write(&out_dir, "trace.csv", &report::trace_csv(&trace))?;
            for (i, f) in trace.fields.iter().enumerate() {
                report::write(
                    &out_dir,
                    &format!("field_{i:04}.csv"),
                    &report::field_csv(&ws.geom, f),
                )?;
            }
            report::write_json(
                &out_dir,
                "flow.json",
                &json!({
                    "header": head,
                    "mass_drift": drift,
                    "max_f_increase": f_up,
                    "median_df_gap": check.median_df_gap,
                    "max_g_gap": check.max_g_gap,
                    "mass_ok": mass_ok,
                    "monotone_ok": mono_ok,
                }),
            )?;
            Ok(mass_ok && mono_ok)
        }
        Command::Lambda1 { field } => {
            let ws = run::build_relaxed(&cfg)?;
            let spec = match field {
                Some(name) => parse_field(name)?,
                None => FieldSpec::One,
            };
            let u = spec.sample(&ws.geom);
            let eps = cfg.solver.eps.unwrap_or_else(|| default_eps(&ws.geom, &u));
            let (lam, phi) =
                lambda1(&ws.geom, &ws.params, &u, eps).map_err(|e| anyhow!("{e}"))?;
            let (lhs, rhs) = poincare_sides(&ws.geom, &ws.params, &u, &phi, eps, lam)
                .map_err(|e| anyhow!("{e}"))?;
            let equality_gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
            println!("lambda1={lam} poincare_equality_gap={equality_gap}");
            report::write(&out_dir, "eigenfield.csv", &report::field_csv(&ws.geom, &phi))?;
            report::write_json(
                &out_dir,
                "lambda1.json",
                &json!({
                    "header": head,
                    "lambda1": lam,
                    "poincare_lhs": lhs,
                    "poincare_rhs": rhs,
                    "poincare_equality_gap": equality_gap,
                }),
            )?;
            Ok(equality_gap < 1e-6)
        }
        Command::LambdaStar { descent_steps, random_seeds } => {
            let ws = run::build_flow_domain(&cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let extra: Vec<_> = (0..*random_seeds)
                .map(|_| corpus::random_smooth_positive(&ws.geom, &mut rng, 0.25))
                .collect();
            let opts = LambdaStarOpts {
                descent_steps: *descent_steps,
                eps: cfg.solver.eps.unwrap_or(0.0),
                ..Default::default()
            };
            let rep = lambda_star_estimate(&ws.geom, &ws.params, &opts, &extra)
                .map_err(|e| anyhow!("{e}"))?;
            println!(
                "lambda_hat={} candidates={} scale_sensitivity={:?} converged={}",
                rep.best_value, rep.candidates_evaluated, rep.scale_sensitivity, rep.converged
            );
            report::write(
                &out_dir,
                "best_field.csv",
                &report::field_csv(&ws.geom, &rep.best_field),
            )?;
            let mut v = report::lambda_star_json(&rep);
            v["header"] = head;
            report::write_json(&out_dir, "lambda_star.json", &v)?;
            Ok(true)
        }
        Command::InterpCheck { samples, lambda_frac } => {
            let ws = run::build_flow_domain(&cfg)?;
            let lambda_used = if cli.lambda.is_some() {
                cfg.params.lambda
            } else {
                lambda_frac * run::lambda_hat(&ws, 25)?
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let mut violations = 0usize;
            let mut worst_margin = f64::INFINITY;
            for _ in 0..*samples {
                let v = corpus::lognormal_smoothed(&ws.geom, &mut rng, 0.3, 10);
                let rep = interpolation_check(&ws.geom, &ws.params, &v, lambda_used)
                    .map_err(|e| anyhow!("{e}"))?;
                if !rep.pass {
                    violations += 1;
                }
                worst_margin = worst_margin.min(rep.lhs - rep.rhs);
            }
            println!(
                "lambda={lambda_used} samples={samples} violations={violations} worst_margin={worst_margin}"
            );
            report::write_json(
                &out_dir,
                "interp.json",
                &json!({
                    "header": head,
                    "lambda": lambda_used,
                    "samples": samples,
                    "violations": violations,
                    "worst_margin": worst_margin,
                }),
            )?;
            Ok(violations == 0)
        }
    }
}
