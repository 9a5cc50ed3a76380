//! Rational Speech Acts reasoning: exact agents over a truth-value lexicon
//! and neural pragmatic agents over the learned base models, plus the
//! geometric blends that combine them.

mod exact;
mod neural;

use serde::{Deserialize, Serialize};

pub use exact::{percent, Lexicon, RationalLexicon};
pub use neural::{
    l2_from_alternatives, neural_l1, neural_l2, neural_s1, s1_from_l0, sample_alternatives,
    AgentOutputs, AlternativeSet, L0Cache, PragmaticAgents,
};

use crate::colorspace::CONTEXT_SIZE;
use crate::error::{Error, Result};
use crate::listener::ListenerDistribution;

/// Probabilities are floored here before log-space blending.
pub const BLEND_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PragmaticsConfig {
    /// Rationality of the exact speaker.
    pub alpha: f64,
    /// Rationality of the neural speaker S1.
    pub alpha_neural: f64,
    /// S0 samples per target index in each alternative set.
    pub m: usize,
    /// Alternative sets averaged by L2.
    pub n: usize,
    pub beta_a: f64,
    pub beta_b: f64,
    pub gamma: f64,
}

impl Default for PragmaticsConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            alpha_neural: 0.544,
            m: 8,
            n: 8,
            beta_a: 0.492,
            beta_b: -0.15,
            gamma: 0.491,
        }
    }
}

impl PragmaticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("m and n must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha_neural >= 0.0) {
            return Err(Error::Config("alpha must be nonnegative".into()));
        }
        if ![
            self.alpha,
            self.alpha_neural,
            self.beta_a,
            self.beta_b,
            self.gamma,
        ]
        .iter()
        .all(|x| x.is_finite())
        {
            return Err(Error::Config("pragmatics weights must be finite".into()));
        }
        Ok(())
    }
}

/// `p^w q^(1-w)`, renormalized, after flooring both at [`BLEND_FLOOR`].
pub fn blend(p: &ListenerDistribution, q: &ListenerDistribution, w: f64) -> ListenerDistribution {
    let scores: [f64; CONTEXT_SIZE] = std::array::from_fn(|i| {
        let lp = p.probs[i].max(BLEND_FLOOR).ln();
        let lq = q.probs[i].max(BLEND_FLOOR).ln();
        w * lp + (1.0 - w) * lq
    });
    ListenerDistribution::from_log_scores(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(p: [f64; 3]) -> ListenerDistribution {
        ListenerDistribution { probs: p }
    }

    #[test]
    fn blend_endpoints() {
        let p = dist([0.7, 0.2, 0.1]);
        let q = dist([0.1, 0.1, 0.8]);
        for (a, b) in blend(&p, &q, 1.0).probs.iter().zip(p.probs) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        for (a, b) in blend(&p, &q, 0.0).probs.iter().zip(q.probs) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn negative_weight_extrapolates() {
        // w = -1: p^-1 q^2 on two live entries.
        let p = dist([0.6, 0.4, 0.0]);
        let q = dist([0.5, 0.5, 0.0]);
        let out = blend(&p, &q, -1.0);
        let (a, b) = (0.25 / 0.6, 0.25 / 0.4);
        assert_abs_diff_eq!(out.probs[0], a / (a + b), epsilon = 1e-9);
        assert_abs_diff_eq!(out.probs[1], b / (a + b), epsilon = 1e-9);
        assert!(out.probs[2] < 1e-11);
    }

    #[test]
    fn defaults_validate() {
        PragmaticsConfig::default().validate().unwrap();
        let bad = PragmaticsConfig {
            m: 0,
            ..PragmaticsConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
