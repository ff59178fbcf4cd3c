//! Green's kernels of `D - lambda` on `R^2` and `R^3`.
//!
//! The kernel is `G(x, 0) gamma = (D + lambda)(f_lambda gamma)` for a radial
//! profile `f_lambda(x) = g(|x|)` solving
//! `g'' + (n-1)/r g' + lambda^2 g = -delta_0`, which evaluates to
//! `g'(r)/r x.gamma + lambda g(r) gamma`.
//!
//! On a flat torus the kernel is a twisted lattice sum, evaluated here by an
//! Ewald split so that the mode cutoff only controls an exponentially small
//! truncation error.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{inner, make_fiber, Spinor, SpinorFiber};
use crate::special::{bessel_y, bessel_y_deriv, cylinder_01, gamma_half_integer, sphere_area, upper_gamma_ladder};
use crate::special::{BesselOrder, EULER_GAMMA};
use crate::torus::TorusSpinGeometry;
use crate::{Error, Result};

/// Radial profile value and its first two derivatives at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub g: f64,
    pub dg: f64,
    pub d2g: f64,
}

fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveArgument(r))
    }
}

/// The radial profile `g_lambda(r)` with analytic derivatives.
///
/// For `n = 2, lambda != 0` it is the `Y_0`/`J_0` combination whose constant
/// cancels the `ln |lambda|` dependence of the logarithmic part; for `n = 3`
/// the `Y_{1/2}` form, which reduces to `cos(|lambda| r) / (4 pi r)`.
pub fn profile(n: usize, lambda: f64, r: f64) -> Result<Profile> {
    check_dim(n)?;
    check_radius(r)?;
    let a = lambda.abs();
    if n == 2 {
        if a == 0.0 {
            return Ok(Profile {
                g: -r.ln() / (2.0 * PI),
                dg: -1.0 / (2.0 * PI * r),
                d2g: 1.0 / (2.0 * PI * r * r),
            });
        }
        let z = a * r;
        let c = (a.ln() - 2f64.ln() + EULER_GAMMA) / (2.0 * PI);
        let v = cylinder_01(z)?;
        // h(z) = -Y0/4 + c J0, with Z0' = -Z1 and Z0'' = -Z0 + Z1/z
        let h = -0.25 * v.y0 + c * v.j0;
        let dh = 0.25 * v.y1 - c * v.j1;
        let d2h = -0.25 * (-v.y0 + v.y1 / z) + c * (-v.j0 + v.j1 / z);
        return Ok(Profile { g: h, dg: a * dh, d2g: a * a * d2h });
    }
    let omega = sphere_area(3);
    if a == 0.0 {
        return Ok(Profile {
            g: 1.0 / (omega * r),
            dg: -1.0 / (omega * r * r),
            d2g: 2.0 / (omega * r * r * r),
        });
    }
    let m = 0.5;
    let order = BesselOrder::Half;
    let k = -PI * a.powf(m) / (2f64.powf(m) * gamma_half_integer(1)? * omega);
    let z = a * r;
    let y = bessel_y(order, z)?;
    let dy = bessel_y_deriv(order, z)?;
    let d2y = -dy / z - (1.0 - m * m / (z * z)) * y;
    let rm = r.powf(-m);
    Ok(Profile {
        g: k * rm * y,
        dg: k * (-m * rm / r * y + a * rm * dy),
        d2g: k * (m * (m + 1.0) * rm / (r * r) * y - 2.0 * m * a * rm / r * dy + a * a * rm * d2y),
    })
}

/// `f_lambda` at radius `r`.
pub fn f_lambda(n: usize, lambda: f64, r: f64) -> Result<f64> {
    Ok(profile(n, lambda, r)?.g)
}

/// `g'' + (n-1)/r g' + lambda^2 g` from the analytic derivatives.
pub fn ode_residual(n: usize, lambda: f64, r: f64) -> Result<f64> {
    let p = profile(n, lambda, r)?;
    Ok(p.d2g + (n as f64 - 1.0) / r * p.dg + lambda * lambda * p.g)
}

/// Green's kernel of `D - lambda` on `R^n` with pole at the origin.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    n: usize,
    lambda: f64,
    fiber: SpinorFiber,
}

impl GreenKernel {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        check_dim(n)?;
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
        }
        Ok(Self { n, lambda, fiber: make_fiber(n)? })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn fiber(&self) -> &SpinorFiber {
        &self.fiber
    }

    fn check_point(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {}", x.len(), self.n)));
        }
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            Err(Error::AtPole)
        } else {
            Ok(r)
        }
    }

    /// Radial coefficients `(g'(r)/r, lambda g(r))` of the kernel.
    pub fn radial_coefficients(&self, r: f64) -> Result<(f64, f64)> {
        let p = profile(self.n, self.lambda, r)?;
        Ok((p.dg / r, self.lambda * p.g))
    }

    /// `G(x, 0) gamma`.
    pub fn eval(&self, x: &[f64], gamma: &Spinor) -> Result<Spinor> {
        let r = self.check_point(x)?;
        let (cx, c0) = self.radial_coefficients(r)?;
        Ok(self.fiber.clifford_mul(x, gamma) * Complex64::from(cx) + gamma * Complex64::from(c0))
    }

    /// The two leading singular terms of the kernel at `x`.
    pub fn leading_terms(&self, x: &[f64], gamma: &Spinor) -> Result<Spinor> {
        let r = self.check_point(x)?;
        let omega = sphere_area(self.n);
        let xg = self.fiber.clifford_mul(x, gamma);
        let (cx, c0) = if self.n == 2 {
            (-1.0 / (omega * r * r), -self.lambda / omega * r.ln())
        } else {
            (-1.0 / (omega * r.powi(3)), self.lambda / (omega * r))
        };
        Ok(xg * Complex64::from(cx) + gamma * Complex64::from(c0))
    }

    /// Kernel minus its leading singular terms.
    pub fn remainder(&self, x: &[f64], gamma: &Spinor) -> Result<Spinor> {
        Ok(self.eval(x, gamma)? - self.leading_terms(x, gamma)?)
    }

    /// Scale of the remainder bound at radius `r`: `r |ln r|` for `n = 2`,
    /// `1` for `n = 3`.
    pub fn remainder_scale(&self, r: f64) -> f64 {
        if self.n == 2 {
            r * r.ln().abs()
        } else {
            1.0
        }
    }
}

/// `G(x, 0) gamma` for the Euclidean kernel.
pub fn green_eval(kern: &GreenKernel, x: &[f64], gamma: &Spinor) -> Result<Spinor> {
    kern.eval(x, gamma)
}

/// `G(x, 0) gamma` minus its leading singular terms.
pub fn expansion_remainder(kern: &GreenKernel, x: &[f64], gamma: &Spinor) -> Result<Spinor> {
    kern.remainder(x, gamma)
}

/// Remainder ratios `|remainder| / scale(r)` along `|x| = 2^{-j}` in a fixed
/// direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderRatios {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl RemainderRatios {
    /// Relative change of the last two ratios.
    pub fn last_relative_change(&self) -> f64 {
        match self.ratios.as_slice() {
            [.., a, b] => (b - a).abs() / b.abs().max(f64::MIN_POSITIVE),
            _ => f64::NAN,
        }
    }

    /// The largest ratio, taken as the reported constant.
    pub fn constant(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn dyadic_remainder_ratios(
    kern: &GreenKernel,
    direction: &[f64],
    gamma: &Spinor,
    js: std::ops::RangeInclusive<i32>,
) -> Result<RemainderRatios> {
    let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len == 0.0 {
        return Err(Error::InvalidArgument("zero direction".into()));
    }
    let mut radii = Vec::new();
    let mut ratios = Vec::new();
    for j in js {
        let r = 2f64.powi(-j);
        let x: Vec<f64> = direction.iter().map(|v| v / len * r).collect();
        let rem = kern.remainder(&x, gamma)?;
        radii.push(r);
        ratios.push(rem.norm() / kern.remainder_scale(r));
    }
    Ok(RemainderRatios { radii, ratios })
}

/// A closed-form spinor field on `R^n` with known `D psi`, used to test the
/// distributional identity.
pub trait TestSpinor: Sync {
    fn value(&self, x: &[f64]) -> Spinor;
    fn dirac(&self, x: &[f64]) -> Spinor;
    /// Radii `(inner, outer)` of a ball shell containing the support up to
    /// negligible values.
    fn support(&self) -> (f64, f64);
}

/// `exp(-a |y|^2) (u + sum_j y_j v_j)` with `y = x - center`.
#[derive(Debug, Clone)]
pub struct GaussianSpinor {
    pub width: f64,
    pub center: Vec<f64>,
    pub constant: Spinor,
    pub linear: Vec<Spinor>,
    fiber: SpinorFiber,
}

impl GaussianSpinor {
    pub fn new(width: f64, center: Vec<f64>, constant: Spinor, linear: Vec<Spinor>) -> Result<Self> {
        let n = center.len();
        if !(width > 0.0) {
            return Err(Error::NonPositiveArgument(width));
        }
        if !linear.is_empty() && linear.len() != n {
            return Err(Error::InvalidArgument("linear part needs one spinor per coordinate".into()));
        }
        Ok(Self { width, center, constant, linear, fiber: make_fiber(n)? })
    }

    fn shifted(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let e = (-self.width * y.iter().map(|v| v * v).sum::<f64>()).exp();
        (y, e)
    }

    fn polynomial(&self, y: &[f64]) -> Spinor {
        let mut p = self.constant;
        for (yj, vj) in y.iter().zip(&self.linear) {
            p += vj * Complex64::from(*yj);
        }
        p
    }
}

impl TestSpinor for GaussianSpinor {
    fn value(&self, x: &[f64]) -> Spinor {
        let (y, e) = self.shifted(x);
        self.polynomial(&y) * Complex64::from(e)
    }

    fn dirac(&self, x: &[f64]) -> Spinor {
        let (y, e) = self.shifted(x);
        let fiber = &self.fiber;
        let two_a_y: Vec<f64> = y.iter().map(|v| -2.0 * self.width * v).collect();
        let mut out = fiber.clifford_mul(&two_a_y, &self.polynomial(&y));
        for (j, vj) in self.linear.iter().enumerate() {
            out += fiber.gamma(j) * vj;
        }
        out * Complex64::from(e)
    }

    fn support(&self) -> (f64, f64) {
        let c = self.center.iter().map(|v| v * v).sum::<f64>().sqrt();
        (0.0, c + (40.0 / self.width).sqrt())
    }
}

/// `b(|x|) u` with the smooth bump `b(r) = exp(-1/((r - r1)(r2 - r)))` on
/// the annulus `r1 < r < r2`.
#[derive(Debug, Clone)]
pub struct AnnulusBump {
    r1: f64,
    r2: f64,
    spinor: Spinor,
    fiber: SpinorFiber,
}

impl AnnulusBump {
    pub fn new(n: usize, r1: f64, r2: f64, spinor: Spinor) -> Result<Self> {
        if !(0.0 < r1 && r1 < r2) {
            return Err(Error::InvalidArgument(format!("annulus needs 0 < r1 < r2, got {r1}, {r2}")));
        }
        Ok(Self { r1, r2, spinor, fiber: make_fiber(n)? })
    }

    fn bump(&self, r: f64) -> (f64, f64) {
        if r <= self.r1 || r >= self.r2 {
            return (0.0, 0.0);
        }
        let h = (r - self.r1) * (self.r2 - r);
        let b = (-1.0 / h).exp();
        let dh = (self.r2 - r) - (r - self.r1);
        (b, b * dh / (h * h))
    }
}

impl TestSpinor for AnnulusBump {
    fn value(&self, x: &[f64]) -> Spinor {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.spinor * Complex64::from(self.bump(r).0)
    }

    fn dirac(&self, x: &[f64]) -> Spinor {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (_, db) = self.bump(r);
        if db == 0.0 {
            return Spinor::zeros();
        }
        let unit: Vec<f64> = x.iter().map(|v| v / r * db).collect();
        self.fiber.clifford_mul(&unit, &self.spinor)
    }

    fn support(&self) -> (f64, f64) {
        (self.r1, self.r2)
    }
}

/// Refinement controls for the shell quadrature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Absolute agreement required between successive refinements (the
    /// final pair must agree to half of this).
    pub tol: f64,
    pub max_levels: usize,
    /// Gauss nodes per radial panel at level 0.
    pub radial_nodes: usize,
    /// Angular resolution at level 0.
    pub angular_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { tol: 1e-5, max_levels: 6, radial_nodes: 8, angular_nodes: 16 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub previous: Complex64,
    pub levels: usize,
}

/// Number of dyadic radial panels graded towards the origin.
const GRADED_PANELS: usize = 8;

fn radial_panels(inner: f64, outer: f64) -> Vec<(f64, f64)> {
    if inner > 0.0 {
        let k = 4;
        return (0..k)
            .map(|i| {
                let a = inner + (outer - inner) * i as f64 / k as f64;
                let b = inner + (outer - inner) * (i + 1) as f64 / k as f64;
                (a, b)
            })
            .collect();
    }
    let mut edges = vec![0.0];
    for i in (0..GRADED_PANELS).rev() {
        edges.push(outer * 0.5f64.powi(i as i32));
    }
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

fn gauss(nodes: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(nodes).expect("positive node count"))
        .as_node_weight_pairs()
        .to_vec()
}

/// Unit directions with weights integrating over `S^{n-1}`.
fn sphere_rule(n: usize, resolution: usize) -> Vec<(Vec<f64>, f64)> {
    if n == 2 {
        let w = 2.0 * PI / resolution as f64;
        return (0..resolution)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / resolution as f64;
                (vec![t.cos(), t.sin()], w)
            })
            .collect();
    }
    let phis = 2 * resolution;
    let mut out = Vec::with_capacity(resolution * phis);
    for (c, wc) in gauss(resolution) {
        let s = (1.0 - c * c).sqrt();
        for i in 0..phis {
            let p = 2.0 * PI * i as f64 / phis as f64;
            out.push((vec![s * p.cos(), s * p.sin(), c], wc * 2.0 * PI / phis as f64));
        }
    }
    out
}

fn shell_sum<F>(n: usize, panels: &[(f64, f64)], q: usize, angular: usize, f: &F) -> Complex64
where
    F: Fn(f64, &[f64]) -> Complex64 + Sync,
{
    let rule = gauss(q);
    let dirs = sphere_rule(n, angular);
    let nodes: Vec<(f64, f64)> = panels
        .iter()
        .flat_map(|&(a, b)| {
            let half = 0.5 * (b - a);
            rule.iter().map(move |&(t, w)| (a + half * (t + 1.0), w * half))
        })
        .collect();
    // fixed-order reduction keeps runs bit-reproducible
    let shells: Vec<Complex64> = nodes
        .par_iter()
        .map(|&(r, w)| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut x = vec![0.0; n];
            for (d, wd) in &dirs {
                for (xi, di) in x.iter_mut().zip(d) {
                    *xi = r * di;
                }
                acc += f(r, &x) * *wd;
            }
            acc * (w * r.powi(n as i32 - 1))
        })
        .collect();
    shells.iter().sum()
}

/// Integral over the shell `inner < |x| < outer` in spherical coordinates
/// about the origin, doubling radial and angular resolution until two
/// successive values agree to `tol / 2`. The integrand receives `(|x|, x)`
/// and may be singular like `|x|^{1-n}` at the origin.
pub fn spherical_integrate<F>(n: usize, inner: f64, outer: f64, opts: &QuadratureOptions, f: F) -> Result<QuadratureResult>
where
    F: Fn(f64, &[f64]) -> Complex64 + Sync,
{
    check_dim(n)?;
    if !(0.0 <= inner && inner < outer) {
        return Err(Error::InvalidArgument(format!("bad shell radii {inner}, {outer}")));
    }
    let panels = radial_panels(inner, outer);
    let mut previous = shell_sum(n, &panels, opts.radial_nodes, opts.angular_nodes, &f);
    for level in 1..=opts.max_levels {
        let scale = 1 << level;
        let value = shell_sum(n, &panels, opts.radial_nodes * scale, opts.angular_nodes * scale, &f);
        if (value - previous).norm() <= 0.5 * opts.tol {
            return Ok(QuadratureResult { value, previous, levels: level });
        }
        previous = value;
    }
    let last = shell_sum(
        n,
        &panels,
        opts.radial_nodes << (opts.max_levels + 1),
        opts.angular_nodes << (opts.max_levels + 1),
        &f,
    );
    if (last - previous).norm() <= 0.5 * opts.tol {
        return Ok(QuadratureResult { value: last, previous, levels: opts.max_levels + 1 });
    }
    Err(Error::QuadratureDiverged { previous: previous.norm(), last: last.norm() })
}

/// Outcome of checking `int <(D - lambda) psi, G(., 0) gamma> = <psi(0), gamma>`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub integral: Complex64,
    pub expected: Complex64,
    pub residual: f64,
    pub levels: usize,
}

/// Evaluates the pairing of `(D - lambda) psi` with the kernel by shell
/// quadrature and compares it with `<psi(0), gamma>`.
pub fn verify_distributional_identity(
    kern: &GreenKernel,
    psi: &dyn TestSpinor,
    gamma: &Spinor,
    opts: &QuadratureOptions,
) -> Result<IdentityCheck> {
    let n = kern.dim();
    let (inner_r, outer_r) = psi.support();
    let lambda = Complex64::from(kern.lambda());
    let fiber = kern.fiber();
    let integrand = |r: f64, x: &[f64]| -> Complex64 {
        let (cx, c0) = match kern.radial_coefficients(r) {
            Ok(c) => c,
            Err(_) => return Complex64::new(f64::NAN, f64::NAN),
        };
        let g = fiber.clifford_mul(x, gamma) * Complex64::from(cx) + gamma * Complex64::from(c0);
        let lhs = psi.dirac(x) - psi.value(x) * lambda;
        inner(&lhs, &g)
    };
    let q = spherical_integrate(n, inner_r, outer_r, opts, integrand)?;
    if !q.value.re.is_finite() || !q.value.im.is_finite() {
        return Err(Error::QuadratureDiverged { previous: q.previous.norm(), last: f64::NAN });
    }
    let origin = vec![0.0; n];
    let expected = inner(&psi.value(&origin), gamma);
    Ok(IdentityCheck {
        integral: q.value,
        expected,
        residual: (q.value - expected).norm(),
        levels: q.levels,
    })
}

/// Parameters of the Ewald-split torus kernel.
#[derive(Debug, Clone, Copy)]
struct Ewald {
    /// Heat-kernel split time.
    eta: f64,
    /// Number of terms in the `lambda^2` series of the short-time part.
    terms: usize,
}

impl Ewald {
    fn for_cutoff(cutoff: f64, lambda: f64) -> Self {
        // truncation error exp(-4 pi^2 eta K^2) ~ 1e-16
        let eta = 37.0 / (4.0 * PI * PI * cutoff * cutoff);
        let x = lambda * lambda * eta;
        let terms = (12.0 + 4.0 * x).ceil() as usize;
        Self { eta, terms }
    }
}

/// Kernel of `D - lambda` on a flat spin torus with pole at the origin,
/// in the trivialization where sections are `exp(2 pi i delta.s)` times
/// periodic functions of the lattice coordinates `s`.
///
/// Modes `k = b + delta` (in dual-lattice units) with `|k| <= cutoff` enter
/// through `(1/V) exp(2 pi i k.x) (D_k - lambda)^{-1} gamma`; the tail is
/// carried by the heat-kernel image sum of the Ewald split.
pub fn torus_green_mode_sum(
    geom: &TorusSpinGeometry,
    lambda: f64,
    x: &[f64],
    gamma: &Spinor,
    cutoff: f64,
) -> Result<Spinor> {
    let distance = geom.distance_to_flat_spectrum(lambda);
    if distance <= 1e-6 {
        return Err(Error::NearSpectrum { lambda, distance });
    }
    if x.len() != geom.dim() {
        return Err(Error::GeometryMismatch);
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::AtPole);
    }
    if geom.to_lattice(x).iter().any(|s| s.abs() > 0.5) {
        return Err(Error::OutsideDomain);
    }
    if !(cutoff > 0.0) {
        return Err(Error::NonPositiveArgument(cutoff));
    }
    ewald_kernel(geom, lambda, x, gamma, cutoff, Ewald::for_cutoff(cutoff, lambda))
}

fn ewald_kernel(
    geom: &TorusSpinGeometry,
    lambda: f64,
    x: &[f64],
    gamma: &Spinor,
    cutoff: f64,
    ew: Ewald,
) -> Result<Spinor> {
    let n = geom.dim();
    let fiber = geom.fiber();
    let l2 = lambda * lambda;
    let four_pi2 = 4.0 * PI * PI;

    // reciprocal part: smooth, exponentially convergent
    let mut recip = Spinor::zeros();
    let dual = geom.dual();
    let shortest_dual = (0..n)
        .map(|c| dual.column(c).norm())
        .fold(f64::INFINITY, f64::min);
    let range = (cutoff / shortest_dual).ceil() as i64 + 1;
    for_each_index(n, range, |b| {
        let k = geom.mode_frequency(b);
        let k2: f64 = k.iter().map(|v| v * v).sum();
        if k2.sqrt() > cutoff {
            return;
        }
        let a = four_pi2 * k2 - l2;
        let phase: f64 = 2.0 * PI * k.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
        let weight = Complex64::from_polar((-ew.eta * a).exp() / a, phase);
        let kg = fiber.clifford_mul(&k, gamma) * Complex64::new(0.0, 2.0 * PI);
        recip += (kg + gamma * Complex64::from(lambda)) * weight;
    });
    recip /= Complex64::from(geom.volume());

    // short-time part: heat kernel images weighted by the spin twist
    let lattice = geom.lattice();
    let shortest = (0..n)
        .map(|c| lattice.column(c).norm())
        .fold(f64::INFINITY, f64::min);
    let reach = (160.0 * ew.eta).sqrt();
    let range = (reach / shortest).ceil() as i64 + 1;
    let half = n == 3;
    let norm = (4.0 * PI).powf(-(n as f64) / 2.0);
    let coeffs: Vec<f64> = {
        let mut c = Vec::with_capacity(ew.terms);
        let mut v = norm;
        for j in 0..ew.terms {
            if j > 0 {
                v *= l2 / j as f64;
            }
            c.push(v);
        }
        c
    };
    let a0 = n as f64 / 2.0 - 1.0;
    let mut real = Spinor::zeros();
    let mut failure = None;
    for_each_index(n, range, |m| {
        let y: Vec<f64> = (0..n)
            .map(|r| x[r] - (0..n).map(|c| lattice[(r, c)] * m[c] as f64).sum::<f64>())
            .collect();
        let rho2: f64 = y.iter().map(|v| v * v).sum();
        if rho2.sqrt() > reach {
            return;
        }
        let u = rho2 / (4.0 * ew.eta);
        let q = rho2 / 4.0;
        let (g0, g1) = match (
            upper_gamma_ladder(half, 0, ew.terms, u),
            upper_gamma_ladder(half, 1, ew.terms, u),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e);
                return;
            }
        };
        // F = sum_j c_j q^{j - a0} Gamma(a0 - j, u);
        // grad F = -(y/2) sum_j c_j q^{j - a0 - 1} Gamma(a0 + 1 - j, u)
        let mut f = 0.0;
        let mut s1 = 0.0;
        for j in 0..ew.terms {
            let p = q.powf(j as f64 - a0);
            f += coeffs[j] * p * g0[j];
            s1 += coeffs[j] * p / q * g1[j];
        }
        let grad: Vec<f64> = y.iter().map(|v| -0.5 * v * s1).collect();
        let twist: f64 = 2.0 * PI * m.iter().zip(geom.delta()).map(|(a, d)| *a as f64 * d).sum::<f64>();
        let phase = Complex64::from_polar(1.0, twist);
        real += (fiber.clifford_mul(&grad, gamma) + gamma * Complex64::from(lambda * f)) * phase;
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(recip + real)
}

fn for_each_index<F: FnMut(&[i64])>(n: usize, range: i64, mut f: F) {
    let side = (2 * range + 1) as usize;
    let total = side.pow(n as u32);
    let mut idx = vec![0i64; n];
    for mut p in 0..total {
        for slot in idx.iter_mut() {
            *slot = (p % side) as i64 - range;
            p /= side;
        }
        f(&idx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::inner;
    use approx::assert_relative_eq;

    fn spinor(a: f64, b: f64, c: f64, d: f64) -> Spinor {
        Spinor::new(Complex64::new(a, b), Complex64::new(c, d))
    }

    #[test]
    fn profile_special_values() {
        assert_relative_eq!(f_lambda(3, 0.0, 1.0).unwrap(), 1.0 / (4.0 * PI), epsilon = 1e-16);
        assert_eq!(f_lambda(2, 0.0, 1.0).unwrap(), 0.0);
        for (lambda, r) in [(2.0, 0.7), (-2.0, 0.7), (0.3, 5.0), (3.0, 0.05)] {
            let closed = (lambda as f64).abs() * r;
            let expected = closed.cos() / (4.0 * PI * r);
            assert_relative_eq!(f_lambda(3, lambda, r).unwrap(), expected, epsilon = 1e-13, max_relative = 1e-12);
        }
        assert!(f_lambda(2, 1.0, 0.0).is_err());
        assert!(f_lambda(4, 1.0, 1.0).is_err());
    }

    #[test]
    fn n2_profile_keeps_pure_log_singularity() {
        // g + ln(r)/(2 pi) J0(|lambda| r) is bounded as r -> 0
        for lambda in [0.5, 1.0, 3.0] {
            let r: f64 = 1e-6;
            let g = f_lambda(2, lambda, r).unwrap();
            assert!((g + r.ln() / (2.0 * PI)).abs() < 1e-9);
        }
    }

    #[test]
    fn ode_residual_and_fd_derivatives() {
        for n in [2, 3] {
            for lambda in [0.0, 0.5, 1.0, 3.0] {
                for r in [0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
                    let p = profile(n, lambda, r).unwrap();
                    let res = ode_residual(n, lambda, r).unwrap();
                    assert!(res.abs() <= 1e-8 * (1.0f64).max(p.g.abs() * lambda * lambda), "n={n} l={lambda} r={r}: {res}");
                    // five-point stencils as an independent derivative oracle
                    let h = 1e-3 * r;
                    let g = |t: f64| f_lambda(n, lambda, t).unwrap();
                    let d1 = (g(r - 2.0 * h) - 8.0 * g(r - h) + 8.0 * g(r + h) - g(r + 2.0 * h)) / (12.0 * h);
                    let d2 = (-g(r - 2.0 * h) + 16.0 * g(r - h) - 30.0 * g(r) + 16.0 * g(r + h) - g(r + 2.0 * h))
                        / (12.0 * h * h);
                    assert!((d1 - p.dg).abs() <= 1e-7 * p.dg.abs().max(1.0));
                    assert!((d2 - p.d2g).abs() <= 1e-4 * p.d2g.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn kernel_leading_terms() {
        let gamma = spinor(0.3, -0.2, 1.0, 0.5);
        let k3 = GreenKernel::new(3, 0.0).unwrap();
        let x = [0.3, -0.4, 0.2];
        let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = k3.fiber().clifford_mul(&x, &gamma) * Complex64::from(-1.0 / (4.0 * PI * r.powi(3)));
        assert!((k3.eval(&x, &gamma).unwrap() - expected).norm() < 1e-14);
        assert!(k3.remainder(&x, &gamma).unwrap().norm() < 1e-14);

        let k2 = GreenKernel::new(2, 0.0).unwrap();
        let x = [0.6, 0.8];
        let expected = k2.fiber().clifford_mul(&x, &gamma) * Complex64::from(-1.0 / (2.0 * PI));
        assert!((k2.eval(&x, &gamma).unwrap() - expected).norm() < 1e-15);
        assert!(k2.remainder(&[0.1, 0.02], &gamma).unwrap().norm() < 1e-12);
        assert!(matches!(k2.eval(&[0.0, 0.0], &gamma), Err(Error::AtPole)));
    }

    #[test]
    fn kernel_commutes_with_quaternionic_structure() {
        let gamma = spinor(0.3, -0.2, 1.0, 0.5);
        for (n, x) in [(2, vec![0.3, -0.7]), (3, vec![0.1, 0.2, -0.5])] {
            let k = GreenKernel::new(n, 1.3).unwrap();
            let f = k.fiber();
            let lhs = k.eval(&x, &f.quaternionic(&gamma)).unwrap();
            let rhs = f.quaternionic(&k.eval(&x, &gamma).unwrap());
            assert!((lhs - rhs).norm() < 1e-13);
        }
    }

    /// `sum_j gamma_j d_j G - lambda G` by sixth-order central differences.
    fn dirac_fd_residual(k: &GreenKernel, x: &[f64], gamma: &Spinor, h: f64) -> (f64, f64) {
        let n = k.dim();
        let stencil = [(-3.0, -1.0 / 60.0), (-2.0, 3.0 / 20.0), (-1.0, -0.75), (1.0, 0.75), (2.0, -3.0 / 20.0), (3.0, 1.0 / 60.0)];
        let g0 = k.eval(x, gamma).unwrap();
        let mut out = g0 * Complex64::from(-k.lambda());
        for j in 0..n {
            let mut d = Spinor::zeros();
            for (o, w) in stencil {
                let mut y = x.to_vec();
                y[j] += o * h;
                d += k.eval(&y, gamma).unwrap() * Complex64::from(w / h);
            }
            out += k.fiber().gamma(j) * d;
        }
        (out.norm(), g0.norm())
    }

    #[test]
    fn kernel_solves_homogeneous_equation_away_from_pole() {
        let gamma = spinor(1.0, 0.0, -0.3, 0.4);
        for n in [2, 3] {
            for lambda in [0.0, 0.7, 2.5] {
                let k = GreenKernel::new(n, lambda).unwrap();
                for base in [0.3, 0.8, 1.7] {
                    let x: Vec<f64> = (0..n).map(|i| base * (1.0 + 0.3 * i as f64)).collect();
                    let (res, size) = dirac_fd_residual(&k, &x, &gamma, 1e-3);
                    assert!(res <= 1e-6 * size.max(1.0), "n={n} l={lambda}: {res} vs {size}");
                }
            }
        }
    }

    #[test]
    fn dyadic_remainders_stay_bounded() {
        let gamma = spinor(0.5, 0.5, -0.5, 0.5);
        for (n, dir) in [(2, vec![1.0, 2.0]), (3, vec![1.0, -1.0, 0.5])] {
            let k = GreenKernel::new(n, 1.0).unwrap();
            let rr = dyadic_remainder_ratios(&k, &dir, &gamma, 3..=10).unwrap();
            assert!(rr.constant().is_finite());
            assert!(rr.last_relative_change() < 0.2, "n={n}: {:?}", rr.ratios);
        }
    }

    #[test]
    fn shell_quadrature_integrates_singular_weight() {
        // int_{|x|<1} |x|^{1-n} exp(-|x|^2) = omega_{n-1} int_0^1 exp(-r^2) dr
        let erf1 = 1.0 - crate::special::erfc(1.0);
        for n in [2, 3] {
            let exact = sphere_area(n) * 0.5 * crate::special::SQRT_PI * erf1;
            let q = spherical_integrate(n, 0.0, 1.0, &QuadratureOptions { tol: 1e-10, ..Default::default() }, |r, _| {
                Complex64::from(r.powi(1 - n as i32) * (-r * r).exp())
            })
            .unwrap();
            assert!((q.value.re - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn distributional_identity_for_gaussians() {
        let gamma = spinor(0.8, 0.1, -0.3, 0.6);
        let opts = QuadratureOptions::default();
        for n in [2, 3] {
            for lambda in [0.0, 1.5] {
                let k = GreenKernel::new(n, lambda).unwrap();
                let center: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 + 1.0)).collect();
                let lin: Vec<Spinor> = (0..n).map(|i| spinor(0.2 * i as f64, 0.3, -0.1, 0.05 * i as f64)).collect();
                let psi = GaussianSpinor::new(3.0, center, spinor(1.0, -0.5, 0.25, 0.75), lin).unwrap();
                let check = verify_distributional_identity(&k, &psi, &gamma, &opts).unwrap();
                assert!(check.residual <= 1e-5 * (1.0 + check.expected.norm()), "n={n} l={lambda}: {check:?}");
            }
        }
    }

    #[test]
    fn annulus_supported_field_integrates_to_zero() {
        let gamma = spinor(0.8, 0.1, -0.3, 0.6);
        for n in [2, 3] {
            let k = GreenKernel::new(n, 1.5).unwrap();
            let psi = AnnulusBump::new(n, 0.5, 1.5, spinor(1.0, 0.0, 0.5, -0.5)).unwrap();
            let opts = QuadratureOptions { tol: 1e-9, ..Default::default() };
            let check = verify_distributional_identity(&k, &psi, &gamma, &opts).unwrap();
            assert_eq!(check.expected, Complex64::new(0.0, 0.0));
            assert!(check.residual <= 1e-8, "n={n}: {check:?}");
        }
    }

    fn square(n: usize, delta: &[f64]) -> TorusSpinGeometry {
        TorusSpinGeometry::unit(n, delta, &vec![8; n]).unwrap()
    }

    #[test]
    fn torus_kernel_is_independent_of_the_ewald_split() {
        let gamma = spinor(0.4, -0.1, 0.7, 0.2);
        for (geom, x) in [
            (square(2, &[0.5, 0.0]), vec![0.1, -0.07]),
            (square(2, &[0.0, 0.0]), vec![0.21, 0.13]),
            (square(3, &[0.5, 0.5, 0.0]), vec![0.1, 0.05, -0.12]),
        ] {
            let lambda = 0.3;
            let a = ewald_kernel(&geom, lambda, &x, &gamma, 30.0, Ewald { eta: 0.01, terms: 20 }).unwrap();
            let b = ewald_kernel(&geom, lambda, &x, &gamma, 30.0, Ewald { eta: 0.03, terms: 20 }).unwrap();
            assert!((a - b).norm() < 1e-10 * a.norm().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn torus_kernel_is_quasi_periodic() {
        let gamma = spinor(0.4, -0.1, 0.7, 0.2);
        let geom = square(2, &[0.5, 0.0]);
        let ew = Ewald { eta: 0.02, terms: 20 };
        let x = [0.2, 0.1];
        let g = ewald_kernel(&geom, 0.9, &x, &gamma, 30.0, ew).unwrap();
        let shifted = ewald_kernel(&geom, 0.9, &[1.2, 0.1], &gamma, 30.0, ew).unwrap();
        assert!((shifted + g).norm() < 1e-10);
        let shifted = ewald_kernel(&geom, 0.9, &[0.2, 1.1], &gamma, 30.0, ew).unwrap();
        assert!((shifted - g).norm() < 1e-10);
    }

    #[test]
    fn torus_kernel_hermitian_symmetry() {
        let geom = square(2, &[0.5, 0.5]);
        let g1 = spinor(0.4, -0.1, 0.7, 0.2);
        let g2 = spinor(-0.3, 0.6, 0.1, 0.9);
        let x = [0.17, -0.23];
        let mx = [-0.17, 0.23];
        let a = inner(&torus_green_mode_sum(&geom, 0.3, &x, &g1, 20.0).unwrap(), &g2);
        let b = inner(&torus_green_mode_sum(&geom, 0.3, &mx, &g2, 20.0).unwrap(), &g1);
        assert!((a - b.conj()).norm() < 1e-12);
    }

    #[test]
    fn torus_kernel_shares_euclidean_singularity() {
        let geom = square(2, &[0.0, 0.0]);
        let gamma = spinor(1.0, 0.0, 0.0, 0.0);
        let lambda = 0.3;
        let k = GreenKernel::new(2, lambda).unwrap();
        let dir = [0.6, 0.8];
        let regular = |r: f64| {
            let x = [dir[0] * r, dir[1] * r];
            torus_green_mode_sum(&geom, lambda, &x, &gamma, 20.0).unwrap() - k.eval(&x, &gamma).unwrap()
        };
        let (a, b) = (regular(0.05), regular(0.025));
        let singular = |r: f64| k.leading_terms(&[dir[0] * r, dir[1] * r], &gamma).unwrap();
        assert!((a - b).norm() < (singular(0.05) - singular(0.025)).norm());
        // successive cutoffs leave the regular part unchanged
        let x = [0.06, 0.08];
        let c20 = torus_green_mode_sum(&geom, lambda, &x, &gamma, 20.0).unwrap();
        let c40 = torus_green_mode_sum(&geom, lambda, &x, &gamma, 40.0).unwrap();
        assert!((c20 - c40).norm() <= 1e-3);
    }

    #[test]
    fn torus_kernel_guards() {
        let geom = square(2, &[0.0, 0.0]);
        let gamma = spinor(1.0, 0.0, 0.0, 0.0);
        assert!(matches!(torus_green_mode_sum(&geom, 0.0, &[0.1, 0.1], &gamma, 10.0), Err(Error::NearSpectrum { .. })));
        assert!(matches!(torus_green_mode_sum(&geom, 2.0 * PI, &[0.1, 0.1], &gamma, 10.0), Err(Error::NearSpectrum { .. })));
        assert!(matches!(torus_green_mode_sum(&geom, 0.3, &[0.7, 0.1], &gamma, 10.0), Err(Error::OutsideDomain)));
        assert!(matches!(torus_green_mode_sum(&geom, 0.3, &[0.0, 0.0], &gamma, 10.0), Err(Error::AtPole)));
    }
}
