//! Gamma values, cylinder functions of order 0 and 1/2, and the incomplete
//! gamma values used by the Ewald split of the torus Green's kernel.
//!
//! `Y_0` follows the standard normalization, in which the constant in the
//! logarithmic term is the Euler-Mascheroni constant:
//! `Y_0(z) = (2/pi) (ln(z/2) + EULER_GAMMA) J_0(z) + O(z^2 ln z)`.
//!
//! For `z <= 2` the integer orders are summed from their power series. For
//! larger arguments `J_0, J_1, J_2, ...` come from Miller's backward
//! recurrence normalized by `J_0 + 2 sum J_2k = 1`, and `Y_0, Y_1` from the
//! Neumann series in the even-order `J`s.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
pub const SQRT_PI: f64 = 1.772_453_850_905_516;

const SERIES_CUTOFF: f64 = 2.0;

/// Supported Bessel orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselOrder {
    Zero,
    Half,
}

impl BesselOrder {
    /// Order `numer / denom`; only 0 and 1/2 are constructible.
    pub fn from_ratio(numer: i64, denom: i64) -> Result<Self> {
        match (numer, denom) {
            (0, d) if d != 0 => Ok(BesselOrder::Zero),
            (n, d) if d != 0 && 2 * n == d => Ok(BesselOrder::Half),
            _ => Err(Error::UnsupportedOrder(format!("{numer}/{denom}"))),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            BesselOrder::Zero => 0.0,
            BesselOrder::Half => 0.5,
        }
    }

    /// Order used by the Green's kernel in dimension `n`: `(n - 2) / 2`.
    pub fn for_dimension(n: usize) -> Result<Self> {
        match n {
            2 => Ok(BesselOrder::Zero),
            3 => Ok(BesselOrder::Half),
            _ => Err(Error::UnsupportedDimension(n)),
        }
    }
}

/// `Gamma(twice / 2)` for `twice` in `1..=40`, from exact factorial tables.
pub fn gamma_half_integer(twice: u32) -> Result<f64> {
    if twice == 0 || twice > 40 {
        return Err(Error::InvalidArgument(format!(
            "gamma table covers arguments 1/2..20, got {twice}/2"
        )));
    }
    if twice.is_multiple_of(2) {
        // Gamma(k) = (k-1)!
        let k = twice / 2;
        Ok((1..k).map(f64::from).product())
    } else {
        // Gamma(k + 1/2) = (2k-1)!! / 2^k * sqrt(pi)
        let k = (twice - 1) / 2;
        let double_fact: f64 = (0..k).map(|j| f64::from(2 * j + 1)).product();
        Ok(double_fact / 2f64.powi(k as i32) * SQRT_PI)
    }
}

/// Surface area of the unit sphere `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            let half = n as u32;
            2.0 * PI.powf(n as f64 / 2.0) / gamma_half_integer(half).expect("dimension in table")
        }
    }
}

fn check_positive(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveArgument(z))
    }
}

/// `J_0, J_1, Y_0, Y_1` at one argument.
#[derive(Debug, Clone, Copy)]
pub struct CylinderValues {
    pub j0: f64,
    pub j1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Evaluates the integer-order cylinder functions of order 0 and 1.
pub fn cylinder_01(z: f64) -> Result<CylinderValues> {
    check_positive(z)?;
    Ok(if z <= SERIES_CUTOFF {
        series_01(z)
    } else {
        miller_01(z)
    })
}

fn series_01(z: f64) -> CylinderValues {
    let q = -0.25 * z * z;
    let log_term = (0.5 * z).ln() + EULER_GAMMA;

    let mut j0 = 0.0;
    let mut j1 = 0.0;
    let mut y0_tail = 0.0;
    let mut y1_tail = 0.0;
    // term_k = q^k / (k!)^2, term1_k = q^k / (k! (k+1)!)
    let mut term = 1.0;
    let mut term1 = 1.0;
    let mut harmonic = 0.0;
    for k in 0..60 {
        if k > 0 {
            let kf = k as f64;
            term *= q / (kf * kf);
            term1 *= q / (kf * (kf + 1.0));
            harmonic += 1.0 / kf;
        }
        j0 += term;
        j1 += term1;
        // Y_0 tail: sum_{k>=1} (-1)^{k+1} H_k (z^2/4)^k / (k!)^2 = -sum H_k q^k/(k!)^2
        y0_tail -= harmonic * term;
        // psi(k+1) + psi(k+2) = -2 gamma + 2 H_k + 1/(k+1)
        let psi_sum = -2.0 * EULER_GAMMA + 2.0 * harmonic + 1.0 / (k as f64 + 1.0);
        y1_tail += psi_sum * term1;
        if term.abs() < 1e-18 && term1.abs() < 1e-18 && k > 2 {
            break;
        }
    }
    j1 *= 0.5 * z;
    let y0 = FRAC_2_PI * (log_term * j0 + y0_tail);
    let y1 = -FRAC_2_PI / z + FRAC_2_PI * (0.5 * z).ln() * j1 - 0.5 * z * y1_tail / PI;
    CylinderValues { j0, j1, y0, y1 }
}

/// Miller backward recurrence; returns `J_0..=J_top` normalized.
fn miller_sequence(z: f64) -> Vec<f64> {
    let start = (z + 40.0 + 10.0 * z.cbrt()).ceil() as usize;
    let top = start + start % 2;
    let mut values = vec![0.0; top + 2];
    values[top] = 1e-30;
    for k in (1..=top).rev() {
        values[k - 1] = 2.0 * k as f64 / z * values[k] - values[k + 1];
    }
    let norm: f64 = values[0] + 2.0 * values.iter().skip(2).step_by(2).sum::<f64>();
    values.truncate(top + 1);
    values.iter_mut().for_each(|v| *v /= norm);
    values
}

fn miller_01(z: f64) -> CylinderValues {
    let j = miller_sequence(z);
    let log_term = (0.5 * z).ln() + EULER_GAMMA;
    let mut even_sum = 0.0;
    let mut odd_sum = 0.0;
    let mut k = 1;
    while 2 * k < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        even_sum += sign * j[2 * k] / kf;
        let next = if 2 * k + 1 < j.len() { j[2 * k + 1] } else { 0.0 };
        odd_sum += sign * (j[2 * k - 1] - next) / kf;
        k += 1;
    }
    let y0 = FRAC_2_PI * log_term * j[0] - 2.0 * FRAC_2_PI * even_sum;
    let y1 = -FRAC_2_PI * j[0] / z + FRAC_2_PI * log_term * j[1] + FRAC_2_PI * odd_sum;
    CylinderValues {
        j0: j[0],
        j1: j[1],
        y0,
        y1,
    }
}

/// `J_m(z)` for `m` in {0, 1/2}.
pub fn bessel_j(order: BesselOrder, z: f64) -> Result<f64> {
    check_positive(z)?;
    Ok(match order {
        BesselOrder::Zero => cylinder_01(z)?.j0,
        BesselOrder::Half => (FRAC_2_PI / z).sqrt() * z.sin(),
    })
}

/// `Y_m(z)` for `m` in {0, 1/2}.
pub fn bessel_y(order: BesselOrder, z: f64) -> Result<f64> {
    check_positive(z)?;
    Ok(match order {
        BesselOrder::Zero => cylinder_01(z)?.y0,
        BesselOrder::Half => -(FRAC_2_PI / z).sqrt() * z.cos(),
    })
}

/// `d/dz J_m(z)`.
pub fn bessel_j_deriv(order: BesselOrder, z: f64) -> Result<f64> {
    check_positive(z)?;
    Ok(match order {
        BesselOrder::Zero => -cylinder_01(z)?.j1,
        BesselOrder::Half => (FRAC_2_PI / z).sqrt() * (z.cos() - z.sin() / (2.0 * z)),
    })
}

/// `d/dz Y_m(z)`.
pub fn bessel_y_deriv(order: BesselOrder, z: f64) -> Result<f64> {
    check_positive(z)?;
    Ok(match order {
        BesselOrder::Zero => -cylinder_01(z)?.y1,
        BesselOrder::Half => (FRAC_2_PI / z).sqrt() * (z.sin() + z.cos() / (2.0 * z)),
    })
}

/// Exponential integral `E_1(u) = Gamma(0, u)` for `u > 0`.
pub fn exp_integral_e1(u: f64) -> Result<f64> {
    check_positive(u)?;
    if u <= 1.0 {
        let mut sum = -EULER_GAMMA - u.ln();
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -u / kf;
            let add = -term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        Ok(sum)
    } else {
        // Lentz continued fraction.
        let tiny = 1e-300;
        let mut b = u + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok(h * (-u).exp())
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

/// Upper incomplete gamma values `Gamma(a0 - j, u)` for `j = 0..count`,
/// where `a0` is 0 or 1/2 plus a nonnegative integer shift `lift`: the
/// returned vector holds `Gamma(base + lift - j, u)`.
///
/// For `u < 1` uses `Gamma(a, u) = (Gamma(a + 1, u) - u^a e^{-u}) / a`
/// downwards from `Gamma(0, u) = E_1(u)` or `Gamma(1/2, u) = sqrt(pi)
/// erfc(sqrt u)`, and `Gamma(a + 1, u) = a Gamma(a, u) + u^a e^{-u}`
/// upwards; the downward step cancels badly for larger `u`, where each value
/// comes from the continued fraction instead.
pub fn upper_gamma_ladder(half_base: bool, lift: usize, count: usize, u: f64) -> Result<Vec<f64>> {
    check_positive(u)?;
    let base = if half_base { 0.5 } else { 0.0 };
    if u >= 1.0 {
        return (0..count)
            .map(|j| upper_gamma_cf(base + lift as f64 - j as f64, u))
            .collect();
    }
    let start = if half_base {
        SQRT_PI * erfc(u.sqrt())
    } else {
        exp_integral_e1(u)?
    };
    let eu = (-u).exp();
    let mut up = vec![start];
    for i in 0..lift {
        let a = base + i as f64;
        let prev = up[i];
        up.push(a * prev + u.powf(a) * eu);
    }
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let a = base + lift as f64 - j as f64;
        let value = if j <= lift {
            up[lift - j]
        } else {
            let above = out[j - 1];
            (above - u.powf(a) * eu) / a
        };
        out.push(value);
    }
    Ok(out)
}

/// `Gamma(a, u)` for real `a` and `u >= 1` by the Legendre continued
/// fraction (modified Lentz).
fn upper_gamma_cf(a: f64, u: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = u + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < 1e-16 {
            return Ok((-u + a * u.ln()).exp() * h);
        }
    }
    Err(Error::InvalidArgument(format!("incomplete gamma continued fraction stalled at a={a}, u={u}")))
}
