//! Classic RSA over an explicit truth-value lexicon.
//!
//! `l0(t|u) ∝ L(u,t) P(t)`, `s1(u|t) ∝ exp(α log l0(t|u) − κ(u))`,
//! `l2(t|u) ∝ s1(u|t) P(t)`, and the speaker-first variant
//! `s0(u|t) ∝ L(u,t) exp(−κ(u))`, `l1(t|u) ∝ s0(u|t) P(t)`.

use std::fs;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the prior summing to one.
const PRIOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub utterances: Vec<String>,
    /// Display labels; defaults to `1..=n`.
    #[serde(default)]
    pub referents: Vec<String>,
    /// `truth[u][t]` is 1 when utterance `u` is true of referent `t`.
    pub truth: Vec<Vec<u8>>,
    /// Per-utterance cost; defaults to zero.
    #[serde(default)]
    pub costs: Vec<f64>,
    /// Defaults to uniform.
    #[serde(default)]
    pub prior: Vec<f64>,
}

impl Lexicon {
    /// Fills defaulted fields and checks shapes, truth values and the prior.
    pub fn new(
        utterances: Vec<String>,
        referents: Vec<String>,
        truth: Vec<Vec<u8>>,
        costs: Vec<f64>,
        prior: Vec<f64>,
    ) -> Result<Self> {
        let mut lex = Self {
            utterances,
            referents,
            truth,
            costs,
            prior,
        };
        lex.normalize_fields()?;
        Ok(lex)
    }

    fn normalize_fields(&mut self) -> Result<()> {
        let n_u = self.utterances.len();
        if n_u == 0 {
            return Err(Error::Config("lexicon has no utterances".into()));
        }
        if self.truth.len() != n_u {
            return Err(Error::Config(format!(
                "truth has {} rows for {n_u} utterances",
                self.truth.len()
            )));
        }
        let n_t = self.truth[0].len();
        if n_t == 0 {
            return Err(Error::Config("lexicon has no referents".into()));
        }
        if let Some(row) = self.truth.iter().position(|r| r.len() != n_t) {
            return Err(Error::Config(format!(
                "truth row {row} has the wrong length"
            )));
        }
        if self.truth.iter().flatten().any(|&v| v > 1) {
            return Err(Error::Config("truth values must be 0 or 1".into()));
        }
        if self.referents.is_empty() {
            self.referents = (1..=n_t).map(|i| i.to_string()).collect();
        } else if self.referents.len() != n_t {
            return Err(Error::Config(format!(
                "{} referent labels for {n_t} referents",
                self.referents.len()
            )));
        }
        if self.costs.is_empty() {
            self.costs = vec![0.0; n_u];
        } else if self.costs.len() != n_u {
            return Err(Error::Config(format!(
                "{} costs for {n_u} utterances",
                self.costs.len()
            )));
        }
        if self.prior.is_empty() {
            self.prior = vec![1.0 / n_t as f64; n_t];
        } else if self.prior.len() != n_t {
            return Err(Error::Config(format!(
                "prior has {} entries for {n_t} referents",
                self.prior.len()
            )));
        }
        if self.prior.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || self.costs.iter().any(|c| !c.is_finite())
        {
            return Err(Error::Config(
                "prior and costs must be finite, prior nonnegative".into(),
            ));
        }
        let total: f64 = self.prior.iter().sum();
        if (total - 1.0).abs() > PRIOR_TOLERANCE {
            return Err(Error::Config(format!("prior sums to {total}, not 1")));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lex: Self = serde_json::from_slice(&fs::read(path)?)?;
        lex.normalize_fields()?;
        Ok(lex)
    }

    pub fn n_utterances(&self) -> usize {
        self.utterances.len()
    }

    pub fn n_referents(&self) -> usize {
        self.prior.len()
    }

    pub fn utterance_index(&self, u: &str) -> Option<usize> {
        self.utterances.iter().position(|x| x == u)
    }

    fn is_true(&self, u: usize, t: usize) -> bool {
        self.truth[u][t] == 1
    }

    fn vacuous(&self, u: usize) -> Error {
        Error::VacuousUtterance(self.utterances[u].clone())
    }

    fn normalize(mass: Vec<f64>) -> Option<Vec<f64>> {
        let total: f64 = mass.iter().sum();
        (total > 0.0).then(|| mass.into_iter().map(|m| m / total).collect())
    }

    /// Literal listener over referents.
    pub fn l0(&self, u: usize) -> Result<Vec<f64>> {
        let mass = (0..self.n_referents())
            .map(|t| {
                if self.is_true(u, t) {
                    self.prior[t]
                } else {
                    0.0
                }
            })
            .collect();
        Self::normalize(mass).ok_or_else(|| self.vacuous(u))
    }

    /// Pragmatic speaker over utterances. Utterances false of `t` or vacuous
    /// get probability 0.
    pub fn s1(&self, t: usize, alpha: f64) -> Result<Vec<f64>> {
        let scores: Vec<Option<f64>> = (0..self.n_utterances())
            .map(|u| match self.l0(u) {
                Ok(l0) if l0[t] > 0.0 => Some(alpha * l0[t].ln() - self.costs[u]),
                _ => None,
            })
            .collect();
        let max = scores
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NoTrueUtterance(self.referents[t].clone()));
        }
        let mass = scores
            .iter()
            .map(|s| s.map_or(0.0, |s| (s - max).exp()))
            .collect();
        Ok(Self::normalize(mass).expect("at least one positive score"))
    }

    /// Pragmatic listener over referents.
    pub fn l2(&self, u: usize, alpha: f64) -> Result<Vec<f64>> {
        self.l0(u)?;
        let mass = (0..self.n_referents())
            .map(|t| match self.s1(t, alpha) {
                Ok(s1) => s1[u] * self.prior[t],
                Err(_) => 0.0,
            })
            .collect();
        Self::normalize(mass).ok_or_else(|| self.vacuous(u))
    }

    /// Literal speaker over utterances.
    pub fn s0(&self, t: usize) -> Result<Vec<f64>> {
        let scores: Vec<Option<f64>> = (0..self.n_utterances())
            .map(|u| self.is_true(u, t).then(|| -self.costs[u]))
            .collect();
        let max = scores
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NoTrueUtterance(self.referents[t].clone()));
        }
        let mass = scores
            .iter()
            .map(|s| s.map_or(0.0, |s| (s - max).exp()))
            .collect();
        Ok(Self::normalize(mass).expect("at least one positive score"))
    }

    /// Listener that inverts the literal speaker.
    pub fn l1(&self, u: usize) -> Result<Vec<f64>> {
        let mass = (0..self.n_referents())
            .map(|t| match self.s0(t) {
                Ok(s0) => s0[u] * self.prior[t],
                Err(_) => 0.0,
            })
            .collect();
        Self::normalize(mass).ok_or_else(|| self.vacuous(u))
    }

    /// The same agents in exact rational arithmetic. Requires zero costs;
    /// the prior is taken at its exact binary value.
    pub fn rational(&self) -> Result<RationalLexicon<'_>> {
        if self.costs.iter().any(|&c| c != 0.0) {
            return Err(Error::Config(
                "exact rational agents need zero utterance costs".into(),
            ));
        }
        let prior = self
            .prior
            .iter()
            .map(|&p| {
                BigRational::from_float(p)
                    .ok_or_else(|| Error::Config(format!("prior {p} is not finite")))
            })
            .collect::<Result<_>>()?;
        Ok(RationalLexicon { lex: self, prior })
    }
}

/// Exact rational `l0`, `s1`, `l2`, `s0` and `l1` for integral `alpha` and
/// zero costs.
pub struct RationalLexicon<'a> {
    lex: &'a Lexicon,
    prior: Vec<BigRational>,
}

fn normalize_rational(mass: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let total = mass.iter().fold(BigRational::zero(), |acc, m| acc + m);
    (!total.is_zero()).then(|| mass.into_iter().map(|m| m / &total).collect())
}

impl RationalLexicon<'_> {
    pub fn l0(&self, u: usize) -> Result<Vec<BigRational>> {
        let mass = (0..self.lex.n_referents())
            .map(|t| {
                if self.lex.is_true(u, t) {
                    self.prior[t].clone()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        normalize_rational(mass).ok_or_else(|| self.lex.vacuous(u))
    }

    /// With zero costs, `exp(α log l0) = l0^α`.
    pub fn s1(&self, t: usize, alpha: u32) -> Result<Vec<BigRational>> {
        let mass = (0..self.lex.n_utterances())
            .map(|u| match self.l0(u) {
                Ok(l0) if !l0[t].is_zero() => num_traits::pow(l0[t].clone(), alpha as usize),
                _ => BigRational::zero(),
            })
            .collect();
        normalize_rational(mass)
            .ok_or_else(|| Error::NoTrueUtterance(self.lex.referents[t].clone()))
    }

    pub fn l2(&self, u: usize, alpha: u32) -> Result<Vec<BigRational>> {
        self.l0(u)?;
        let mass = (0..self.lex.n_referents())
            .map(|t| match self.s1(t, alpha) {
                Ok(s1) => &s1[u] * &self.prior[t],
                Err(_) => BigRational::zero(),
            })
            .collect();
        normalize_rational(mass).ok_or_else(|| self.lex.vacuous(u))
    }

    pub fn s0(&self, t: usize) -> Result<Vec<BigRational>> {
        let mass = (0..self.lex.n_utterances())
            .map(|u| {
                if self.lex.is_true(u, t) {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        normalize_rational(mass)
            .ok_or_else(|| Error::NoTrueUtterance(self.lex.referents[t].clone()))
    }

    pub fn l1(&self, u: usize) -> Result<Vec<BigRational>> {
        let mass = (0..self.lex.n_referents())
            .map(|t| match self.s0(t) {
                Ok(s0) => &s0[u] * &self.prior[t],
                Err(_) => BigRational::zero(),
            })
            .collect();
        normalize_rational(mass).ok_or_else(|| self.lex.vacuous(u))
    }
}

/// Integer percent, rounding half away from zero.
pub fn percent(p: &BigRational) -> i64 {
    let scaled = p * BigRational::from_integer(BigInt::from(100));
    scaled
        .round()
        .to_integer()
        .to_i64()
        .expect("percent fits in i64")
}
