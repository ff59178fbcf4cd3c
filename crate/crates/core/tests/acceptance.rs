//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Tolerances are pinned here.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinzero::clifford::{make_fiber, Spinor};
use spinzero::green::{
    dyadic_remainder_ratios, ode_residual, verify_distributional_identity, AnnulusBump, GaussianSpinor, GreenKernel,
    QuadratureOptions,
};
use spinzero::perturb::{eigenvalue_derivative, fd_derivative, split_experiment, BranchSelector};
use spinzero::radial::verify_preimage_inclusions;
use spinzero::spectral::{eigensolve, SolverOptions};
use spinzero::torus::{ConformalFamily, SpinorField, TorusSpinGeometry, TrigPolynomial};
use spinzero::zeroset::{
    a_hat_complete_intersection, genericity_trial, min_modulus, poincare_hopf_budget, three_wave_eigenspinor,
};
use spinzero::DEFAULT_SEED;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn square(delta: &[f64], n: usize) -> TorusSpinGeometry {
    TorusSpinGeometry::unit(delta.len(), delta, &vec![n; delta.len()]).expect("valid torus")
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn clifford_suite() -> Outcome {
    let mut failures = Vec::new();
    let basis = [
        Spinor::new(c(1.0, 0.0), c(0.0, 0.0)),
        Spinor::new(c(0.0, 1.0), c(0.0, 0.0)),
        Spinor::new(c(0.0, 0.0), c(1.0, 0.0)),
        Spinor::new(c(0.0, 0.0), c(0.0, 1.0)),
    ];
    for n in [2, 3] {
        let fiber = make_fiber(n).expect("supported dimension");
        let id = Matrix2::<Complex64>::identity();
        for i in 0..n {
            for j in 0..n {
                let anti = fiber.gamma(i) * fiber.gamma(j) + fiber.gamma(j) * fiber.gamma(i);
                let expected = if i == j { id * c(-2.0, 0.0) } else { Matrix2::zeros() };
                if anti != expected {
                    failures.push(format!("n={n}: gamma_{i} gamma_{j} anticommutator"));
                }
            }
        }
        for phi in &basis {
            if fiber.quaternionic(&fiber.quaternionic(phi)) != -phi {
                failures.push(format!("n={n}: J^2 != -1"));
            }
            for i in 0..n {
                let lhs = fiber.quaternionic(&(fiber.gamma(i) * phi));
                let rhs = fiber.gamma(i) * fiber.quaternionic(phi);
                if lhs != rhs {
                    failures.push(format!("n={n}: J does not commute with gamma_{i}"));
                }
            }
            // antilinearity on i phi
            let iphi = phi * c(0.0, 1.0);
            if fiber.quaternionic(&iphi) != fiber.quaternionic(phi) * c(0.0, -1.0) {
                failures.push(format!("n={n}: J not antilinear"));
            }
        }
        let vol = fiber.volume_element();
        let expected = if n == 3 { id } else { fiber.gamma(0) * fiber.gamma(1) };
        if vol != expected || (n == 2 && vol * vol != -id) {
            failures.push(format!("n={n}: volume element"));
        }
    }
    outcome(failures.is_empty(), if failures.is_empty() { "all relations exact for n=2,3".into() } else { failures.join("; ") })
}

fn preimage_identities() -> Outcome {
    let mut total = 0;
    let mut failed = 0;
    for n in [2, 3] {
        match verify_preimage_inclusions(n, 3) {
            Ok(cases) => {
                total += cases.len();
                failed += cases.iter().filter(|c| !c.passed()).count();
            }
            Err(e) => return outcome(false, format!("n={n}: {e}")),
        }
    }
    outcome(failed == 0 && total > 0, format!("{total} generator cases, {failed} failures"))
}

fn green_ode() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        for lambda in [0.0, 0.5, 1.0, 3.0] {
            for r in [0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
                match ode_residual(n, lambda, r) {
                    Ok(v) => worst = worst.max(v.abs()),
                    Err(e) => return outcome(false, e.to_string()),
                }
            }
        }
    }
    outcome(worst <= 1e-8, format!("max |residual| = {worst:.3e} (tol 1e-8)"))
}

fn distributional_identity() -> Outcome {
    let gamma = Spinor::new(c(0.8, 0.1), c(-0.3, 0.6));
    let opts = QuadratureOptions { tol: 1e-6, ..Default::default() };
    let mut worst_gauss: f64 = 0.0;
    let mut worst_annulus: f64 = 0.0;
    for n in [2, 3] {
        for lambda in [0.0, 1.5] {
            let kern = GreenKernel::new(n, lambda).expect("kernel");
            let bumps = [
                (4.0, vec![0.0; n], Spinor::new(c(1.0, 0.0), c(0.0, 0.0)), vec![]),
                (
                    2.5,
                    (0..n).map(|i| 0.15 * (i as f64 + 1.0)).collect(),
                    Spinor::new(c(0.3, -0.7), c(0.2, 0.4)),
                    (0..n).map(|i| Spinor::new(c(0.1 * i as f64, 0.5), c(-0.2, 0.3))).collect(),
                ),
                (
                    6.0,
                    (0..n).map(|i| -0.1 * (i as f64 + 0.5)).collect(),
                    Spinor::new(c(0.0, 0.0), c(0.0, 0.0)),
                    (0..n).map(|i| Spinor::new(c(1.0, 0.0), c(0.0, 0.25 * i as f64))).collect(),
                ),
            ];
            for (width, center, constant, linear) in bumps {
                let psi = GaussianSpinor::new(width, center, constant, linear).expect("bump");
                match verify_distributional_identity(&kern, &psi, &gamma, &opts) {
                    Ok(check) => worst_gauss = worst_gauss.max(check.residual),
                    Err(e) => return outcome(false, format!("n={n} lambda={lambda}: {e}")),
                }
            }
            let ring = AnnulusBump::new(n, 0.4, 1.3, Spinor::new(c(0.5, 0.5), c(-1.0, 0.0))).expect("annulus");
            let ring_opts = QuadratureOptions { tol: 1e-10, ..Default::default() };
            match verify_distributional_identity(&kern, &ring, &gamma, &ring_opts) {
                Ok(check) => worst_annulus = worst_annulus.max(check.residual),
                Err(e) => return outcome(false, format!("annulus n={n} lambda={lambda}: {e}")),
            }
        }
    }
    outcome(
        worst_gauss <= 1e-5 && worst_annulus <= 1e-8,
        format!("Gaussian max residual {worst_gauss:.2e} (tol 1e-5), annulus {worst_annulus:.2e} (tol 1e-8)"),
    )
}

fn expansion() -> Outcome {
    let gamma = Spinor::new(c(0.5, 0.5), c(-0.5, 0.5));
    let mut parts = Vec::new();
    let mut pass = true;
    for (n, dir) in [(2, vec![1.0, 2.0]), (3, vec![1.0, -1.0, 0.5])] {
        let kern = GreenKernel::new(n, 1.0).expect("kernel");
        match dyadic_remainder_ratios(&kern, &dir, &gamma, 3..=10) {
            Ok(rr) => {
                let change = rr.last_relative_change();
                let ok = rr.ratios.iter().all(|v| v.is_finite()) && change <= 0.2;
                pass &= ok;
                parts.push(format!("n={n}: C = {:.4e}, last change {:.1}%", rr.constant(), 100.0 * change));
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(pass, parts.join("; "))
}

/// Enumerated flat eigenvalues from direct mode counting.
fn expected_flat(delta: &[f64], m: usize) -> (usize, Vec<f64>) {
    let mut norms: Vec<f64> = Vec::new();
    let mut kernel = 0;
    for b1 in -6i64..=6 {
        for b2 in -6i64..=6 {
            let k = ((b1 as f64 + delta[0]).powi(2) + (b2 as f64 + delta[1]).powi(2)).sqrt();
            if k == 0.0 {
                kernel += 2;
            } else {
                norms.push(2.0 * PI * k);
            }
        }
    }
    norms.sort_by(|a, b| a.total_cmp(b));
    // each mode adds one positive dimension; enumeration counts pairs
    let mut values = Vec::new();
    let mut i = 0;
    while i < norms.len() && values.len() < m {
        let mut j = i;
        while j < norms.len() && (norms[j] - norms[i]).abs() < 1e-9 {
            j += 1;
        }
        for _ in 0..(j - i).div_ceil(2) {
            values.push(norms[i]);
        }
        i = j;
    }
    values.truncate(m);
    (kernel, values)
}

fn flat_spectrum() -> Outcome {
    let m = 4;
    let mut worst: f64 = 0.0;
    let mut kernels = Vec::new();
    let mut lambda1 = f64::NAN;
    let opts = SolverOptions::default();
    for delta in [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]] {
        let geom = square(&delta, 32);
        let report = match eigensolve(&geom, &ConformalFamily::flat(geom.num_points()), m, &opts) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("delta={delta:?}: {e}")),
        };
        let (kernel, expected) = expected_flat(&delta, m);
        if kernel != report.kernel_dim {
            return outcome(false, format!("delta={delta:?}: kernel {} vs {kernel}", report.kernel_dim));
        }
        kernels.push(report.kernel_dim);
        for (j, v) in expected.iter().enumerate() {
            let idx = j as i64 + 1;
            match (report.pair(idx), report.pair(-idx)) {
                (Some(p), Some(q)) => worst = worst.max((p.lambda - v).abs()).max((q.lambda + v).abs()),
                _ => return outcome(false, format!("delta={delta:?}: missing pair {idx}")),
            }
        }
        if delta == [0.5, 0.5] {
            lambda1 = report.pair(1).map(|p| p.lambda).unwrap_or(f64::NAN);
        }
    }
    let l1_err = (lambda1 - PI * 2f64.sqrt()).abs();
    outcome(
        worst <= 1e-8 && kernels == vec![2, 0, 0, 0] && l1_err <= 1e-8,
        format!("max eigenvalue error {worst:.2e}, kernel dims {kernels:?}, |lambda_1 - pi sqrt 2| = {l1_err:.1e}"),
    )
}

fn lichnerowicz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let deltas = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]];
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let geom = square(&deltas[trial % 4], 32);
        let mut psi = SpinorField::zeros(geom.grid());
        for b1 in -5i64..=5 {
            for b2 in -5i64..=5 {
                let sigma = Spinor::new(
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                );
                psi.axpy(c(1.0 / 11.0, 0.0), &geom.plane_wave(&[b1, b2], &sigma));
            }
        }
        let d2 = geom.dirac_flat(&geom.dirac_flat(&psi).expect("dirac")).expect("dirac");
        let lap = geom.neg_laplacian(&psi).expect("laplacian");
        let rel = geom.l2_norm(&d2.sub(&lap)).expect("norm") / geom.l2_norm(&psi).expect("norm");
        worst = worst.max(rel);
    }
    outcome(worst <= 1e-10, format!("max |D^2 psi - Delta psi| / |psi| = {worst:.2e} over 10 fields"))
}

fn perturbation() -> Outcome {
    let h = 1e-3;
    let opts = SolverOptions::default();
    let geom = square(&[0.5, 0.0], 32);
    let mut worst_ratio: f64 = 0.0;
    for s in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
        rng.set_stream(100 + s);
        let f = TrigPolynomial::random(2, 3, &mut rng).normalized(&geom, 1.0).sample(&geom);
        match fd_derivative(&geom, &f, BranchSelector::pair(1), h, &opts) {
            Ok(fd) if fd.cluster_dim == 2 => {
                let tol = 1e-6f64.max(5.0 * h * h * fd.lambda0.abs());
                worst_ratio = worst_ratio.max(fd.error() / tol);
            }
            Ok(fd) => return outcome(false, format!("seed {s}: branch not simple (dim {})", fd.cluster_dim)),
            Err(e) => return outcome(false, format!("seed {s}: {e}")),
        }
    }
    // homothety
    let hgeom = square(&[0.5, 0.5], 32);
    let ones = vec![1.0; hgeom.num_points()];
    let homothety = match fd_derivative(&hgeom, &ones, BranchSelector::pair(1), h, &opts) {
        Ok(fd) => (fd.fd + PI * 2f64.sqrt() / 2.0).abs(),
        Err(e) => return outcome(false, format!("homothety: {e}")),
    };
    // sign property for f >= 0
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    rng.set_stream(200);
    let g = TrigPolynomial::random(2, 3, &mut rng).sample(&geom);
    let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let nonneg: Vec<f64> = g.iter().map(|v| v - lo).collect();
    let report = match eigensolve(&geom, &ConformalFamily::flat(geom.num_points()), 2, &opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let sign_ok = report
        .pairs
        .iter()
        .filter(|p| p.lambda > 0.0)
        .all(|p| eigenvalue_derivative(&geom, &nonneg, p).map(|d| d < 0.0).unwrap_or(false));
    outcome(
        worst_ratio <= 1.0 && homothety <= 1e-4 && sign_ok,
        format!(
            "worst |analytic - fd| / tol = {worst_ratio:.3} over 5 seeds; homothety error {homothety:.2e}; sign property {}",
            if sign_ok { "holds" } else { "fails" }
        ),
    )
}

fn splitting() -> Outcome {
    let geom = square(&[0.5, 0.5], 32);
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let f = TrigPolynomial::random(2, 3, &mut rng).normalized(&geom, 1.0).sample(&geom);
    let grid: Vec<f64> = (0..=10).map(|i| 0.02 * i as f64).collect();
    match split_experiment(&geom, &f, 1, &grid, &SolverOptions::default()) {
        Ok(rep) => {
            let last_t = *grid.last().expect("grid");
            let final_gap = rep
                .rows
                .iter()
                .filter(|r| r.t == last_t)
                .map(|r| r.min_gap)
                .fold(f64::INFINITY, f64::min);
            outcome(
                rep.final_all_simple && final_gap > 1e-4,
                format!(
                    "initial dim {} at {:.6}; simple from t = {:?}; gap at t = 0.2: {final_gap:.3e}",
                    rep.initial_dim, rep.initial_lambda, rep.split_t
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn zero_pipeline() -> Outcome {
    let geom = square(&[0.5, 0.5], 64);
    let zero = [0.3141, 0.2718];
    let located = match three_wave_eigenspinor(&geom, &[[0, 0], [-1, 0], [0, -1]], &zero)
        .and_then(|(psi, _)| min_modulus(&geom, &psi))
    {
        Ok(m) => m,
        Err(e) => return outcome(false, e.to_string()),
    };
    let cell = 1.0 / 64.0;
    let offset = located
        .location
        .iter()
        .zip(&zero)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let stats = match genericity_trial(&geom, 2, 20, DEFAULT_SEED, 0.1, &SolverOptions::default()) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let pass = offset <= cell
        && stats.solver_failures == 0
        && stats.all_simple_count == 20
        && stats.all_nowhere_zero_count == 20;
    outcome(
        pass,
        format!(
            "zero found {offset:.2e} from target (cell {cell:.4}), min |psi| = {:.1e}; trials {} failures {} all_simple {} nowhere_zero {}",
            located.value, stats.trials, stats.solver_failures, stats.all_simple_count, stats.all_nowhere_zero_count
        ),
    )
}

fn formulas() -> Outcome {
    let budget = [1, 2, 0].map(poincare_hopf_budget);
    let int = |v: i64| BigRational::from_integer(BigInt::from(v));
    let ahat: Vec<Option<BigRational>> = [2, 4, 6].iter().map(|&d| a_hat_complete_intersection(1, d).ok()).collect();
    let pass = budget == [0, 1, -1] && ahat == vec![Some(int(0)), Some(int(2)), Some(int(8))];
    let shown: Vec<String> = ahat.iter().map(|v| v.as_ref().map_or("error".into(), |r| r.to_string())).collect();
    outcome(pass, format!("budgets {budget:?}; A-hat(1, 2/4/6) = {}", shown.join(", ")))
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Option<Duration>); 11] = [
        (1, "clifford/J relations", clifford_suite, Some(Duration::from_secs(1))),
        (2, "exact Dirac preimage identities", preimage_identities, Some(Duration::from_secs(30))),
        (3, "Green ODE residual", green_ode, None),
        (4, "distributional identity", distributional_identity, Some(Duration::from_secs(120))),
        (5, "singular expansion remainder", expansion, None),
        (6, "flat torus spectrum", flat_spectrum, None),
        (7, "Schroedinger-Lichnerowicz (flat)", lichnerowicz, None),
        (8, "eigenvalue derivative", perturbation, None),
        (9, "multiplicity splitting", splitting, None),
        (10, "zero-set pipeline", zero_pipeline, Some(Duration::from_secs(600))),
        (11, "closed formulas", formulas, None),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        let limit = budget.map_or(String::new(), |b| format!(" (limit {}s)", b.as_secs()));
        println!(
            "criterion {id:>2} [{}] {name}: {} [{:.2}s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
