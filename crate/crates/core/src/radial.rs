//! Exact Euclidean Dirac calculus on radial spinor expressions.
//!
//! A term is
//!
//! ```text
//! c * x^alpha * |x|^k * ln(|x|)^p * (x .)^i * E_B gamma
//! ```
//!
//! with `c` rational, `alpha` a multi-index, `k` rational, `p` in {0, 1},
//! `i` in {0, 1} and `E_B = E_b1 ... E_bs` an ordered Clifford blade
//! (bitmask, `E_j^2 = -1`) acting on a generic constant spinor `gamma`.
//! Working in the abstract Clifford module keeps every coefficient rational
//! and makes the identities hold for every choice of `gamma` at once.
//!
//! Expressions are kept merged by shape. Since `x .` can also be written as
//! `sum x_l E_l`, two different term lists can describe the same function;
//! [`RadialSpinor::is_zero`] decides equality through a normal form.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;
pub type Exponent = Ratio<i64>;

/// Everything about a term except its coefficient.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermShape {
    pub monomial: Vec<u32>,
    pub radial_power: Exponent,
    pub log_power: u32,
    pub vector_part: bool,
    pub blade: u8,
}

impl TermShape {
    pub fn degree(&self) -> u32 {
        self.monomial.iter().sum()
    }

    /// Homogeneity degree `|alpha| + k + i` (logs count as degree 0).
    pub fn homogeneity(&self) -> Exponent {
        Exponent::from_integer(self.degree() as i64 + self.vector_part as i64) + self.radial_power
    }

    pub fn grade(&self) -> Grade {
        Grade {
            k: self.radial_power,
            m: self.degree() as usize,
            i: self.vector_part as u8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialTerm {
    pub coeff: Rational,
    pub shape: TermShape,
}

/// `(k, m, i)` labelling the space spanned by `x^alpha |x|^k (x.)^i gamma`,
/// `|alpha| = m` (with `ln|x|` in place of `|x|^0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Grade {
    pub k: Exponent,
    pub m: usize,
    pub i: u8,
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(k={}, m={}, i={})", self.k, self.m, self.i)
    }
}

impl Grade {
    /// Whether the preimage construction applies:
    /// `i = 0`: `-n <= k`, `-n < k + m <= 0`;
    /// `i = 1`: `-n <= k`, `-n < k + m + 1 <= 0`.
    pub fn is_admissible(&self, n: usize) -> bool {
        let n = Exponent::from_integer(n as i64);
        let top = self.k + Exponent::from_integer(self.m as i64 + self.i as i64);
        self.i <= 1 && -n <= self.k && -n < top && top <= Exponent::zero()
    }

    /// Whether a term shape belongs to this grade's space. At `k = 0` the
    /// `i = 0` space carries `ln|x|`; the `i = 1` space is spanned by the
    /// `x^alpha (1 - n ln|x|) x.gamma` generators, taken jointly with
    /// `x^alpha x.gamma` and `x^alpha ln|x| x.gamma`.
    pub fn contains(&self, shape: &TermShape) -> bool {
        if shape.grade() != *self {
            return false;
        }
        match (self.k.is_zero(), self.i) {
            (false, _) => shape.log_power == 0,
            (true, 0) => shape.log_power == 1,
            (true, _) => shape.log_power <= 1,
        }
    }

    /// Grades of the sum of spaces in which the preimage lies.
    pub fn preimage_grades(&self) -> Vec<Grade> {
        let m = self.m as i64;
        let two = |j: i64| Exponent::from_integer(2 * j);
        let mut grades = Vec::new();
        if self.i == 0 {
            for j in 1..=(m + 1) / 2 {
                grades.push(Grade { k: self.k + two(j), m: (m + 1 - 2 * j) as usize, i: 0 });
            }
            for j in 0..=m / 2 {
                grades.push(Grade { k: self.k + two(j), m: (m - 2 * j) as usize, i: 1 });
            }
        } else {
            for j in 0..=m / 2 {
                grades.push(Grade { k: self.k + two(1 + j), m: (m - 2 * j) as usize, i: 0 });
            }
            for j in 1..=(m + 1) / 2 {
                grades.push(Grade { k: self.k + two(j), m: (m + 1 - 2 * j) as usize, i: 1 });
            }
        }
        grades
    }
}

/// `E_j E_B = sign * E_{B xor j}` with `E_j^2 = -1`.
fn blade_left_mul(j: usize, blade: u8) -> (i64, u8) {
    let below = (blade & ((1u8 << j) - 1)).count_ones();
    let mut sign = if below.is_multiple_of(2) { 1 } else { -1 };
    if blade & (1 << j) != 0 {
        sign = -sign;
    }
    (sign, blade ^ (1 << j))
}

fn rational(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

fn exponent_to_rational(k: Exponent) -> Rational {
    Rational::new(BigInt::from(*k.numer()), BigInt::from(*k.denom()))
}

/// Finite sum of terms in canonical (merged, nonzero) form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadialSpinor {
    n: usize,
    terms: BTreeMap<TermShape, Rational>,
}

impl RadialSpinor {
    pub fn zero(n: usize) -> Self {
        RadialSpinor { n, terms: BTreeMap::new() }
    }

    /// Single term `coeff * x^monomial |x|^k ln^p (x.)^i E_blade gamma`.
    pub fn term(
        n: usize,
        coeff: Rational,
        monomial: &[u32],
        radial_power: Exponent,
        log_power: u32,
        vector_part: bool,
        blade: u8,
    ) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if monomial.len() != n {
            return Err(Error::InvalidArgument(format!(
                "monomial has {} exponents, expected {n}",
                monomial.len()
            )));
        }
        if log_power > 1 {
            return Err(Error::InvalidArgument(format!("log power {log_power} exceeds 1")));
        }
        if blade >= 1 << n {
            return Err(Error::InvalidArgument(format!("blade {blade:#b} out of range")));
        }
        let mut s = Self::zero(n);
        s.add_term(
            coeff,
            TermShape {
                monomial: monomial.to_vec(),
                radial_power,
                log_power,
                vector_part,
                blade,
            },
        );
        Ok(s)
    }

    /// Builds an expression from arbitrary terms, merging equal shapes.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = RadialTerm>) -> Self {
        let mut s = Self::zero(n);
        for t in terms {
            s.add_term(t.coeff, t.shape);
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> Vec<RadialTerm> {
        self.terms
            .iter()
            .map(|(shape, coeff)| RadialTerm { coeff: coeff.clone(), shape: shape.clone() })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TermShape, &Rational)> {
        self.terms.iter()
    }

    fn add_term(&mut self, coeff: Rational, shape: TermShape) {
        if coeff.is_zero() {
            return;
        }
        debug_assert!(shape.log_power <= 1, "log power above 1 in {shape:?}");
        let entry = self.terms.entry(shape);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn add_assign(&mut self, other: &RadialSpinor) {
        assert_eq!(self.n, other.n, "dimension mismatch");
        for (shape, coeff) in &other.terms {
            self.add_term(coeff.clone(), shape.clone());
        }
    }

    pub fn add(&self, other: &RadialSpinor) -> RadialSpinor {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &RadialSpinor) -> RadialSpinor {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, a: &Rational) -> RadialSpinor {
        let mut out = Self::zero(self.n);
        for (shape, coeff) in &self.terms {
            out.add_term(coeff * a, shape.clone());
        }
        out
    }

    /// The common grade if every term has the same `(k, m, i)`.
    pub fn homogeneous_grade(&self) -> Option<Grade> {
        let mut grades = self.terms.keys().map(TermShape::grade);
        let first = grades.next()?;
        grades.all(|g| g == first).then_some(first)
    }

    /// Whether the expression vanishes identically on `R^n \ {0}`.
    ///
    /// Expands `x .` into `sum x_l E_l`, groups by (class of `k` mod 2, log
    /// power, blade), lifts every term of a group to the smallest `k` of the
    /// group with powers of `|x|^2 = sum x_i^2`, and checks that each
    /// resulting polynomial is zero.
    pub fn is_zero(&self) -> bool {
        type Poly = BTreeMap<Vec<u32>, Rational>;
        let two = Exponent::from_integer(2);
        let mut groups: BTreeMap<(Exponent, u32, u8), Vec<(Exponent, Vec<u32>, Rational)>> =
            BTreeMap::new();
        for (shape, coeff) in &self.terms {
            let class = shape.radial_power - two * (shape.radial_power / two).floor();
            let mut push = |monomial: Vec<u32>, blade: u8, c: Rational| {
                groups
                    .entry((class, shape.log_power, blade))
                    .or_default()
                    .push((shape.radial_power, monomial, c));
            };
            if shape.vector_part {
                for l in 0..self.n {
                    let (sign, blade) = blade_left_mul(l, shape.blade);
                    let mut monomial = shape.monomial.clone();
                    monomial[l] += 1;
                    push(monomial, blade, coeff * rational(sign));
                }
            } else {
                push(shape.monomial.clone(), shape.blade, coeff.clone());
            }
        }
        groups.values().all(|members| {
            let k_min = members.iter().map(|(k, _, _)| *k).min().expect("nonempty group");
            let mut poly = Poly::new();
            for (k, monomial, c) in members {
                let lift = ((k - k_min) / two).to_integer() as u32;
                let mut current: Poly = BTreeMap::from([(monomial.clone(), c.clone())]);
                for _ in 0..lift {
                    let mut next = Poly::new();
                    for (mono, v) in &current {
                        for l in 0..self.n {
                            let mut m = mono.clone();
                            m[l] += 2;
                            *next.entry(m).or_insert_with(Rational::zero) += v;
                        }
                    }
                    current = next;
                }
                for (mono, v) in current {
                    *poly.entry(mono).or_insert_with(Rational::zero) += v;
                }
            }
            poly.values().all(Zero::is_zero)
        })
    }

    /// `partial_j` applied termwise.
    pub fn partial(&self, j: usize) -> RadialSpinor {
        let mut out = Self::zero(self.n);
        let two = Exponent::from_integer(2);
        for (shape, c) in &self.terms {
            let a = shape.monomial[j];
            if a > 0 {
                let mut s = shape.clone();
                s.monomial[j] -= 1;
                out.add_term(c * rational(a as i64), s);
            }
            let mut lowered = shape.clone();
            lowered.monomial[j] += 1;
            lowered.radial_power = shape.radial_power - two;
            if !shape.radial_power.is_zero() {
                out.add_term(c * exponent_to_rational(shape.radial_power), lowered.clone());
            }
            if shape.log_power > 0 {
                let mut s = lowered;
                s.log_power -= 1;
                out.add_term(c * rational(shape.log_power as i64), s);
            }
            if shape.vector_part {
                let (sign, blade) = blade_left_mul(j, shape.blade);
                let mut s = shape.clone();
                s.vector_part = false;
                s.blade = blade;
                out.add_term(c * rational(sign), s);
            }
        }
        out
    }

    /// Left Clifford multiplication by `E_j`, using `E_j x. = -2 x_j - x. E_j`.
    pub fn left_mul(&self, j: usize) -> RadialSpinor {
        let mut out = Self::zero(self.n);
        for (shape, c) in &self.terms {
            let (sign, blade) = blade_left_mul(j, shape.blade);
            if shape.vector_part {
                let mut s = shape.clone();
                s.monomial[j] += 1;
                s.vector_part = false;
                out.add_term(c * rational(-2), s);
                let mut s = shape.clone();
                s.blade = blade;
                out.add_term(c * rational(-sign), s);
            } else {
                let mut s = shape.clone();
                s.blade = blade;
                out.add_term(c * rational(sign), s);
            }
        }
        out
    }

    /// `sum_j partial_j partial_j`.
    pub fn laplacian(&self) -> RadialSpinor {
        let mut out = Self::zero(self.n);
        for j in 0..self.n {
            out.add_assign(&self.partial(j).partial(j));
        }
        out
    }
}

impl fmt::Display for RadialSpinor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (shape, c)) in self.terms.iter().enumerate() {
            let (sign, mag) = if c.is_negative() { ("-", -c) } else { ("+", c.clone()) };
            if idx == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{mag}")?;
            for (l, &a) in shape.monomial.iter().enumerate() {
                match a {
                    0 => {}
                    1 => write!(f, " x{}", l + 1)?,
                    _ => write!(f, " x{}^{a}", l + 1)?,
                }
            }
            if !shape.radial_power.is_zero() {
                write!(f, " |x|^({})", shape.radial_power)?;
            }
            if shape.log_power == 1 {
                write!(f, " ln|x|")?;
            }
            if shape.vector_part {
                write!(f, " x.")?;
            }
            if shape.blade != 0 {
                write!(f, " E")?;
                for l in 0..self.n {
                    if shape.blade & (1 << l) != 0 {
                        write!(f, "{}", l + 1)?;
                    }
                }
            }
            write!(f, " g")?;
        }
        Ok(())
    }
}

/// Euclidean Dirac operator `sum_j E_j partial_j`, evaluated term by term
/// with closed formulas. For `R = |x|^k ln^p`:
///
/// ```text
/// D(x^a R B g)    = sum_j a_j x^(a-e_j) R E_j B g + x^a (R'/r) x.B g
/// D(x^a R x.B g)  = -(2|a| + n + k) x^a R B g - p x^a |x|^k ln^(p-1) B g
///                   - sum_j a_j x^(a-e_j) R x.E_j B g
/// ```
pub fn dirac_symbolic(s: &RadialSpinor) -> RadialSpinor {
    let n = s.n;
    let two = Exponent::from_integer(2);
    let mut out = RadialSpinor::zero(n);
    for (shape, c) in &s.terms {
        let m = shape.degree() as i64;
        if !shape.vector_part {
            for j in 0..n {
                let a = shape.monomial[j];
                if a == 0 {
                    continue;
                }
                let (sign, blade) = blade_left_mul(j, shape.blade);
                let mut t = shape.clone();
                t.monomial[j] -= 1;
                t.blade = blade;
                out.add_term(c * rational(sign * a as i64), t);
            }
            let mut t = shape.clone();
            t.radial_power = shape.radial_power - two;
            t.vector_part = true;
            if !shape.radial_power.is_zero() {
                out.add_term(c * exponent_to_rational(shape.radial_power), t.clone());
            }
            if shape.log_power > 0 {
                t.log_power -= 1;
                out.add_term(c * rational(shape.log_power as i64), t);
            }
        } else {
            let factor = exponent_to_rational(shape.radial_power) + rational(2 * m + n as i64);
            let mut t = shape.clone();
            t.vector_part = false;
            out.add_term(-(c * factor), t.clone());
            if shape.log_power > 0 {
                t.log_power -= 1;
                out.add_term(-(c * rational(shape.log_power as i64)), t);
            }
            for j in 0..n {
                let a = shape.monomial[j];
                if a == 0 {
                    continue;
                }
                let (sign, blade) = blade_left_mul(j, shape.blade);
                let mut t = shape.clone();
                t.monomial[j] -= 1;
                t.blade = blade;
                out.add_term(-(c * rational(sign * a as i64)), t);
            }
        }
    }
    out
}

/// Second route to the Dirac operator: `sum_j E_j . partial_j s`.
pub fn dirac_by_partials(s: &RadialSpinor) -> RadialSpinor {
    let mut out = RadialSpinor::zero(s.n);
    for j in 0..s.n {
        out.add_assign(&s.partial(j).left_mul(j));
    }
    out
}

/// `(D - lambda)(D + lambda) s + sum_i partial_i^2 s + lambda^2 s`, which
/// vanishes identically for every `s` because `D^2 = -Laplacian` on flat
/// space.
pub fn second_order_check(s: &RadialSpinor, lambda: &Rational) -> RadialSpinor {
    let plus = dirac_symbolic(s).add(&s.scale(lambda));
    let minus = dirac_symbolic(&plus).sub(&plus.scale(lambda));
    minus.add(&s.laplacian()).add(&s.scale(&(lambda * lambda)))
}

/// Result of [`dirac_preimage`]: `D(pre) = s - remainder`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preimage {
    pub grade: Grade,
    pub pre: RadialSpinor,
    pub remainder: RadialSpinor,
}

/// Constructs `pre` with `D(pre) = s` for homogeneous `s` of admissible grade
/// by induction on the monomial degree: one coordinate factor is peeled
/// off per step using the anticommutation rule. The returned remainder is
/// `s - D(pre)`, recomputed exactly (it is zero whenever the construction is
/// correct).
pub fn dirac_preimage(s: &RadialSpinor) -> Result<Preimage> {
    let n = s.n;
    let grade = s
        .homogeneous_grade()
        .ok_or_else(|| Error::InvalidArgument("input is zero or not homogeneous".into()))?;
    let bad = || Error::InadmissibleGrade {
        k: grade.k.to_string(),
        m: grade.m,
        i: grade.i,
    };
    if !grade.is_admissible(n) || !s.terms.keys().all(|t| grade.contains(t)) {
        return Err(bad());
    }
    let mut pre = RadialSpinor::zero(n);
    for (shape, c) in &s.terms {
        if shape.vector_part {
            preimage_vector(n, c, &shape.monomial, shape.radial_power, shape.blade, &mut pre);
        } else {
            preimage_scalar(n, c, &shape.monomial, shape.radial_power, shape.blade, &mut pre);
        }
    }
    assert!(
        pre.terms.keys().all(|t| t.log_power <= 1),
        "log power above 1 in preimage"
    );
    let remainder = s.sub(&dirac_symbolic(&pre));
    Ok(Preimage { grade, pre, remainder })
}

/// Preimage of `c x^a |x|^k B g` (`ln|x|` when `k = 0`), accumulated into `out`.
fn preimage_scalar(n: usize, c: &Rational, a: &[u32], k: Exponent, blade: u8, out: &mut RadialSpinor) {
    let m: u32 = a.iter().sum();
    if k.is_zero() {
        // D((1 - n ln|x|)/n^2 x.g) = ln|x| g; admissible only with m = 0.
        assert_eq!(m, 0, "ln-term with a monomial factor is outside the admissible range");
        let nn = rational(n as i64);
        let shape = |log_power| TermShape {
            monomial: a.to_vec(),
            radial_power: k,
            log_power,
            vector_part: true,
            blade,
        };
        out.add_term(c / (&nn * &nn), shape(0));
        out.add_term(-(c / nn), shape(1));
        return;
    }
    let s0 = exponent_to_rational(k) + rational(2 * m as i64 + n as i64);
    assert!(!s0.is_zero(), "2m + n + k vanished");
    out.add_term(
        -(c / &s0),
        TermShape {
            monomial: a.to_vec(),
            radial_power: k,
            log_power: 0,
            vector_part: true,
            blade,
        },
    );
    for j in 0..n {
        if a[j] == 0 {
            continue;
        }
        let (sign, next_blade) = blade_left_mul(j, blade);
        let mut next = a.to_vec();
        next[j] -= 1;
        let coeff = -(c * rational(sign * a[j] as i64)) / &s0;
        preimage_vector(n, &coeff, &next, k, next_blade, out);
    }
}

/// Preimage of `c x^a |x|^k x.B g`, accumulated into `out`.
fn preimage_vector(n: usize, c: &Rational, a: &[u32], k: Exponent, blade: u8, out: &mut RadialSpinor) {
    // f = |x|^(k+2)/(k+2), or ln|x| when k + 2 = 0; then f'/r = |x|^k.
    let k2 = k + Exponent::from_integer(2);
    let (f_coeff, f_log) = if k2.is_zero() {
        (Rational::one(), 1)
    } else {
        (exponent_to_rational(k2).recip(), 0)
    };
    out.add_term(
        c * &f_coeff,
        TermShape {
            monomial: a.to_vec(),
            radial_power: k2,
            log_power: f_log,
            vector_part: false,
            blade,
        },
    );
    for j in 0..n {
        if a[j] == 0 {
            continue;
        }
        let (sign, next_blade) = blade_left_mul(j, blade);
        let mut next = a.to_vec();
        next[j] -= 1;
        let coeff = -(c * rational(sign * a[j] as i64) * &f_coeff);
        preimage_scalar(n, &coeff, &next, k2, next_blade, out);
    }
}

/// All multi-indices of total degree `m` in `n` variables, lexicographic.
pub fn multi_indices(n: usize, m: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in (0..=m).rev() {
        for mut rest in multi_indices(n - 1, m - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every admissible integer grade with `m <= max_m`.
pub fn admissible_grades(n: usize, max_m: usize) -> Vec<Grade> {
    let mut out = Vec::new();
    for i in 0..=1u8 {
        for m in 0..=max_m {
            for k in -(n as i64)..=0 {
                let g = Grade { k: Exponent::from_integer(k), m, i };
                if g.is_admissible(n) {
                    out.push(g);
                }
            }
        }
    }
    out
}

/// Outcome of one generator check.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCase {
    pub n: usize,
    pub grade: Grade,
    pub monomial: Vec<u32>,
    pub blade: u8,
    pub remainder_zero: bool,
    pub pre_in_span: bool,
}

impl IdentityCase {
    pub fn passed(&self) -> bool {
        self.remainder_zero && self.pre_in_span
    }
}

/// The generator of `grade` with the given monomial and blade.
pub fn generator(n: usize, grade: Grade, monomial: &[u32], blade: u8) -> Result<RadialSpinor> {
    let log_power = (grade.k.is_zero() && grade.i == 0) as u32;
    RadialSpinor::term(n, Rational::one(), monomial, grade.k, log_power, grade.i == 1, blade)
}

/// Runs [`dirac_preimage`] on every generator of every admissible integer
/// grade with `m <= max_m` and every blade, and checks the remainder is zero
/// and the preimage lies in the allowed sum of spaces.
pub fn verify_preimage_inclusions(n: usize, max_m: usize) -> Result<Vec<IdentityCase>> {
    let mut cases = Vec::new();
    for grade in admissible_grades(n, max_m) {
        let allowed = grade.preimage_grades();
        for monomial in multi_indices(n, grade.m as u32) {
            for blade in 0..(1u8 << n) {
                let s = generator(n, grade, &monomial, blade)?;
                let result = dirac_preimage(&s)?;
                let pre_in_span = result
                    .pre
                    .iter()
                    .all(|(shape, _)| allowed.iter().any(|g| g.contains(shape)));
                cases.push(IdentityCase {
                    n,
                    grade,
                    monomial: monomial.clone(),
                    blade,
                    remainder_zero: result.remainder.is_zero(),
                    pre_in_span,
                });
            }
        }
    }
    Ok(cases)
}
