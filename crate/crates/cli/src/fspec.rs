//! Conformal-factor specifications: `const:C`, `cos:b1,b2[,b3]`, `random[:SEED]`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinzero::torus::{TorusSpinGeometry, TrigPolynomial};

use crate::CliError;

/// Bandwidth of `random` factors.
pub const RANDOM_BANDWIDTH: i64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum FSpec {
    Const(f64),
    Cos(Vec<i64>),
    /// Uses the command's `--seed` when no seed is given.
    Random(Option<u64>),
}

impl FromStr for FSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Usage(format!("f-spec `{s}`: {why}"));
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "const" => rest.parse().map(FSpec::Const).map_err(|_| bad("expected const:C")),
            "cos" => rest
                .split(',')
                .map(|v| v.trim().parse::<i64>())
                .collect::<Result<Vec<_>, _>>()
                .map(FSpec::Cos)
                .map_err(|_| bad("expected cos:b1,b2[,b3] with integer modes")),
            "random" if rest.is_empty() => Ok(FSpec::Random(None)),
            "random" => rest.parse().map(|v| FSpec::Random(Some(v))).map_err(|_| bad("expected random:SEED")),
            _ => Err(bad("unknown kind; use const, cos or random")),
        }
    }
}

impl fmt::Display for FSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FSpec::Const(c) => write!(f, "const:{c}"),
            FSpec::Cos(m) => {
                let modes: Vec<String> = m.iter().map(|v| v.to_string()).collect();
                write!(f, "cos:{}", modes.join(","))
            }
            FSpec::Random(Some(s)) => write!(f, "random:{s}"),
            FSpec::Random(None) => write!(f, "random"),
        }
    }
}

impl FSpec {
    /// Fixes the seed of a seedless `random` spec.
    pub fn resolve_seed(self, seed: u64) -> Self {
        match self {
            FSpec::Random(None) => FSpec::Random(Some(seed)),
            other => other,
        }
    }

    /// The trigonometric polynomial; random factors are scaled to grid sup 1.
    pub fn polynomial(&self, geom: &TorusSpinGeometry, seed: u64) -> Result<TrigPolynomial, CliError> {
        let n = geom.dim();
        match self {
            FSpec::Const(c) => Ok(TrigPolynomial::constant(*c, n)),
            FSpec::Cos(mode) if mode.len() == n => Ok(TrigPolynomial::cosine(mode)),
            FSpec::Cos(mode) => Err(CliError::Usage(format!("cos mode has {} entries, dimension is {n}", mode.len()))),
            FSpec::Random(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s.unwrap_or(seed));
                Ok(TrigPolynomial::random(n, RANDOM_BANDWIDTH, &mut rng).normalized(geom, 1.0))
            }
        }
    }

    pub fn sample(&self, geom: &TorusSpinGeometry, seed: u64) -> Result<Vec<f64>, CliError> {
        Ok(self.polynomial(geom, seed)?.sample(geom))
    }
}
