//! Subcommand implementations. Each returns its full standard output and
//! the list of failed checks.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde_json::{json, Map, Value};
use spinzero::clifford::Spinor;
use spinzero::fieldio::save_field;
use spinzero::green::{ode_residual, verify_distributional_identity, AnnulusBump, GaussianSpinor, GreenKernel, QuadratureOptions, TestSpinor};
use spinzero::perturb::{fd_derivative, split_experiment, BranchSelector};
use spinzero::radial::verify_preimage_inclusions;
use spinzero::spectral::{eigensolve, SolverOptions};
use spinzero::torus::ConformalFamily;
use spinzero::zeroset::{a_hat_complete_intersection, genericity_trial, min_modulus, zero_report};

use crate::{
    AhatArgs, CliError, Command, GenericArgs, GreenCheckArgs, IdentitiesArgs, PerturbArgs, ResolvedGeometry,
    SpectrumArgs, SplitArgs, ZerosArgs,
};

/// Radii and spectral parameters of the Green ODE check.
const ODE_RADII: [f64; 7] = [0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
const ODE_TOL: f64 = 1e-8;
const GAUSSIAN_TOL: f64 = 1e-5;
const ANNULUS_TOL: f64 = 1e-8;

#[derive(Debug, Default)]
pub struct Report {
    pub stdout: String,
    pub failures: Vec<String>,
}

pub fn dispatch(cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::Spectrum(a) => spectrum(a),
        Command::Perturb(a) => perturb(a),
        Command::Split(a) => split(a),
        Command::Zeros(a) => zeros(a),
        Command::Generic(a) => generic(a),
        Command::GreenCheck(a) => green_check(a),
        Command::Identities(a) => identities(a),
        Command::Ahat(a) => ahat(a),
    }
}

/// Resolved configuration: command name, geometry and command fields.
fn config(command: &str, geom: Option<&ResolvedGeometry>, extra: Value) -> Value {
    let mut map = Map::new();
    map.insert("command".into(), json!(command));
    if let Some(g) = geom {
        if let Value::Object(m) = json!(g) {
            map.extend(m);
        }
    }
    if let Value::Object(m) = extra {
        map.extend(m);
    }
    Value::Object(map)
}

fn comment_header(cfg: &Value) -> String {
    format!("# config: {cfg}\n")
}

fn require_positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn spectrum(a: &SpectrumArgs) -> Result<Report, CliError> {
    require_positive("-m", a.m)?;
    let (rg, geom) = a.geometry.resolve()?;
    let f = a.f.clone().resolve_seed(rg.seed);
    let fam = ConformalFamily::new(f.sample(&geom, rg.seed)?, a.t)?;
    let opts = SolverOptions::for_geometry(&geom);
    let report = eigensolve(&geom, &fam, a.m, &opts)?;
    let cfg = config("spectrum", Some(&rg), json!({"m": a.m, "f": f.to_string(), "t": a.t, "tol": opts.tol}));
    let mut out = String::new();
    writeln!(out, "{}", json!({"record": "config", "config": cfg})).unwrap();
    writeln!(out, "{}", json!({"record": "kernel", "kernel_dim": report.kernel_dim})).unwrap();
    for r in report.records() {
        let mut v = json!(r);
        v.as_object_mut().unwrap().insert("record".into(), json!("eigenvalue"));
        writeln!(out, "{v}").unwrap();
    }
    Ok(Report { stdout: out, failures: vec![] })
}

fn perturb(a: &PerturbArgs) -> Result<Report, CliError> {
    require_positive("-m", a.m)?;
    let (rg, geom) = a.geometry.resolve()?;
    let f = a.f.clone().resolve_seed(rg.seed);
    let samples = f.sample(&geom, rg.seed)?;
    let opts = SolverOptions::for_geometry(&geom);
    let base = eigensolve(&geom, &ConformalFamily::flat(geom.num_points()), a.m, &opts)?;
    // one row per branch of every positive cluster reached by 1..=m
    let mut targets: Vec<(i64, usize)> = Vec::new();
    for i in 1..=a.m as i64 {
        let pair = base.pair(i).ok_or_else(|| CliError::Usage(format!("no eigenpair {i}")))?;
        let dim = base.clusters[pair.cluster].dim();
        if !targets.iter().any(|&(j, _)| base.pair(j).map(|p| p.cluster) == Some(pair.cluster)) {
            targets.push((i, dim));
        }
    }
    let cfg = config("perturb", Some(&rg), json!({"m": a.m, "f": f.to_string(), "h": a.h, "tol": opts.tol}));
    let mut out = comment_header(&cfg);
    out.push_str("index,branch,cluster_dim,lambda,analytic,fd,abs_error,tolerance,pass\n");
    let mut failures = Vec::new();
    for (index, dim) in targets {
        for branch in 0..dim.div_ceil(2) {
            let d = fd_derivative(&geom, &samples, BranchSelector { index, branch }, a.h, &opts)?;
            let tol = 1e-6f64.max(5.0 * a.h * a.h * d.lambda0.abs());
            let pass = d.error() <= tol;
            let row = format!(
                "{index},{branch},{},{:.12},{:.10e},{:.10e},{:.3e},{:.3e},{pass}",
                d.cluster_dim,
                d.lambda0,
                d.analytic,
                d.fd,
                d.error(),
                tol
            );
            if !pass {
                failures.push(row.clone());
            }
            writeln!(out, "{row}").unwrap();
        }
    }
    Ok(Report { stdout: out, failures })
}

fn split(a: &SplitArgs) -> Result<Report, CliError> {
    let (rg, geom) = a.geometry.resolve()?;
    let f = a.f.clone().resolve_seed(rg.seed);
    let grid: Vec<f64> = if a.t_grid.is_empty() {
        require_positive("--steps", a.steps)?;
        // rounded so printed grid values stay short
        (0..=a.steps)
            .map(|i| (a.t_max * i as f64 / a.steps as f64 * 1e12).round() / 1e12)
            .collect()
    } else {
        a.t_grid.clone()
    };
    let opts = SolverOptions::for_geometry(&geom);
    let report = split_experiment(&geom, &f.sample(&geom, rg.seed)?, a.index, &grid, &opts)?;
    let cfg = config(
        "split",
        Some(&rg),
        json!({"f": f.to_string(), "index": a.index, "t_grid": grid, "tol": opts.tol}),
    );
    let mut out = comment_header(&cfg);
    out.push_str(&report.to_csv());
    let failures = if report.final_all_simple {
        vec![]
    } else {
        vec![format!("branches not all simple at t = {}", grid.last().copied().unwrap_or(0.0))]
    };
    Ok(Report { stdout: out, failures })
}

fn zeros(a: &ZerosArgs) -> Result<Report, CliError> {
    if a.index == 0 {
        return Err(CliError::Usage("--index must be nonzero".into()));
    }
    let (rg, geom) = a.geometry.resolve()?;
    let f = a.f.clone().resolve_seed(rg.seed);
    let fam = ConformalFamily::new(f.sample(&geom, rg.seed)?, a.t)?;
    let opts = SolverOptions::for_geometry(&geom);
    let spec = eigensolve(&geom, &fam, a.index.unsigned_abs() as usize, &opts)?;
    let pair = spec
        .pair(a.index)
        .ok_or_else(|| CliError::Usage(format!("no eigenpair {}", a.index)))?;
    let report = zero_report(&geom, &pair.psi, a.threshold)?;
    let minimum = min_modulus(&geom, &pair.psi)?;
    if let Some(path) = &a.save {
        save_field(path, &geom, &pair.psi)?;
    }
    let cfg = config(
        "zeros",
        Some(&rg),
        json!({
            "f": f.to_string(),
            "t": a.t,
            "index": a.index,
            "threshold": report.threshold,
            "save": a.save.as_ref().map(|p| p.display().to_string()),
            "tol": opts.tol,
        }),
    );
    let doc = json!({
        "config": cfg,
        "lambda": pair.lambda,
        "cluster_dim": spec.clusters[pair.cluster].dim(),
        "min_modulus": minimum,
        "zeros": report,
    });
    Ok(Report { stdout: format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()), failures: vec![] })
}

fn generic(a: &GenericArgs) -> Result<Report, CliError> {
    require_positive("-m", a.m)?;
    require_positive("-K", a.trials)?;
    let (rg, geom) = a.geometry.resolve()?;
    let opts = SolverOptions::for_geometry(&geom);
    let stats = genericity_trial(&geom, a.m, a.trials, rg.seed, a.t0, &opts)?;
    let cfg = config("generic", Some(&rg), json!({"m": a.m, "trials": a.trials, "t0": a.t0, "tol": opts.tol}));
    let failures = if stats.solver_failures == 0 {
        vec![]
    } else {
        vec![format!("{} of {} trials failed to solve", stats.solver_failures, stats.trials)]
    };
    let doc = json!({"config": cfg, "stats": stats});
    Ok(Report { stdout: format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()), failures })
}

enum SpinorSpec {
    Gauss { width: f64, center: Vec<f64> },
    Annulus { r1: f64, r2: f64 },
}

fn parse_spinor_spec(s: &str, n: usize) -> Result<SpinorSpec, CliError> {
    let bad = || CliError::Usage(format!("spinor spec `{s}`: use gauss:W[,c1,..,cn] or annulus:R1,R2"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    let nums = rest
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    match (kind, nums.len()) {
        ("gauss", 1) => Ok(SpinorSpec::Gauss { width: nums[0], center: vec![0.0; n] }),
        ("gauss", k) if k == n + 1 => Ok(SpinorSpec::Gauss { width: nums[0], center: nums[1..].to_vec() }),
        ("annulus", 2) => Ok(SpinorSpec::Annulus { r1: nums[0], r2: nums[1] }),
        _ => Err(bad()),
    }
}

fn default_spinor_specs(n: usize) -> Vec<String> {
    let shifted: Vec<String> = (0..n).map(|i| format!("{}", 0.15 * (i as f64 + 1.0))).collect();
    vec!["gauss:4".into(), format!("gauss:2.5,{}", shifted.join(",")), "annulus:0.4,1.3".into()]
}

fn green_check(a: &GreenCheckArgs) -> Result<Report, CliError> {
    let n = a.dim;
    if !(2..=3).contains(&n) {
        return Err(CliError::Usage(format!("dimension {n} is not supported; use 2 or 3")));
    }
    let specs = if a.spinors.is_empty() { default_spinor_specs(n) } else { a.spinors.clone() };
    let parsed = specs.iter().map(|s| parse_spinor_spec(s, n)).collect::<Result<Vec<_>, _>>()?;
    let kern = GreenKernel::new(n, a.lambda)?;
    let gamma = Spinor::new(Complex64::new(0.8, 0.1), Complex64::new(-0.3, 0.6));
    let sigma = Spinor::new(Complex64::new(0.3, -0.7), Complex64::new(0.2, 0.4));

    let cfg = config("green-check", None, json!({"dim": n, "lambda": a.lambda, "spinors": specs}));
    let mut out = comment_header(&cfg);
    writeln!(out, "{:<28} {:>12} {:>10} {:>6}", "check", "residual", "tolerance", "status").unwrap();
    let mut failures = Vec::new();
    let mut row = |name: &str, residual: f64, tol: f64, out: &mut String| {
        let pass = residual <= tol;
        let line = format!("{name:<28} {residual:>12.3e} {tol:>10.0e} {:>6}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures.push(line.clone());
        }
        writeln!(out, "{line}").unwrap();
    };

    let mut ode: f64 = 0.0;
    for r in ODE_RADII {
        ode = ode.max(ode_residual(n, a.lambda, r)?.abs());
    }
    row("ode", ode, ODE_TOL, &mut out);
    for (spec, parsed) in specs.iter().zip(parsed) {
        let (psi, quad_tol, tol): (Box<dyn TestSpinor>, f64, f64) = match parsed {
            SpinorSpec::Gauss { width, center } => {
                (Box::new(GaussianSpinor::new(width, center, sigma, vec![])?), 1e-6, GAUSSIAN_TOL)
            }
            SpinorSpec::Annulus { r1, r2 } => (Box::new(AnnulusBump::new(n, r1, r2, sigma)?), 1e-10, ANNULUS_TOL),
        };
        let opts = QuadratureOptions { tol: quad_tol, ..Default::default() };
        let check = verify_distributional_identity(&kern, psi.as_ref(), &gamma, &opts)?;
        row(spec, check.residual, tol, &mut out);
    }
    Ok(Report { stdout: out, failures })
}

fn identities(a: &IdentitiesArgs) -> Result<Report, CliError> {
    if !(2..=3).contains(&a.dim) {
        return Err(CliError::Usage(format!("dimension {} is not supported; use 2 or 3", a.dim)));
    }
    let cases = verify_preimage_inclusions(a.dim, a.max_m)?;
    let cfg = config("identities", None, json!({"dim": a.dim, "max_m": a.max_m}));
    let mut out = comment_header(&cfg);
    writeln!(out, "{:<24} {:<10} {:>5} {:>9} {:>8} {:>6}", "grade", "monomial", "blade", "remainder", "in_span", "status").unwrap();
    let mut failures = Vec::new();
    for c in &cases {
        let monomial: Vec<String> = c.monomial.iter().map(|v| v.to_string()).collect();
        let line = format!(
            "{:<24} {:<10} {:>5} {:>9} {:>8} {:>6}",
            c.grade.to_string(),
            format!("[{}]", monomial.join(",")),
            c.blade,
            if c.remainder_zero { "zero" } else { "nonzero" },
            c.pre_in_span,
            if c.passed() { "PASS" } else { "FAIL" }
        );
        if !c.passed() {
            failures.push(line.clone());
        }
        writeln!(out, "{line}").unwrap();
    }
    writeln!(out, "# {} cases, {} failed", cases.len(), failures.len()).unwrap();
    Ok(Report { stdout: out, failures })
}

fn ahat(a: &AhatArgs) -> Result<Report, CliError> {
    let value = a_hat_complete_intersection(a.k, a.d)?;
    let cfg = config("ahat", None, json!({"k": a.k, "d": a.d}));
    Ok(Report { stdout: format!("{}{value}\n", comment_header(&cfg)), failures: vec![] })
}
