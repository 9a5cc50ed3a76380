//! Neural pragmatic agents built on the base listener L0 and speaker S0.
//!
//! S1 renormalizes `L0(t|u)^α` over a sampled alternative set; L2 inverts
//! S1 over targets and averages `n` independently sampled sets; L1 inverts
//! S0 directly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;

use super::{blend, PragmaticsConfig};
use crate::colorspace::{Color, CONTEXT_SIZE};
use crate::corpus::{preprocess, ContextTrial, TokenMode};
use crate::error::Result;
use crate::listener::{ListenerDistribution, ListenerModel, QuadraticScorer};
use crate::nn::log_softmax;
use crate::speaker::SpeakerModel;

/// Candidate utterances for S1's normalizer. The observed utterance comes
/// first; duplicates are kept, so frequent samples weigh more.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlternativeSet {
    utterances: Vec<String>,
}

impl AlternativeSet {
    pub fn new(observed: String) -> Self {
        Self {
            utterances: vec![observed],
        }
    }

    pub fn push(&mut self, utterance: String) {
        self.utterances.push(utterance);
    }

    pub fn observed(&self) -> &str {
        &self.utterances[0]
    }

    pub fn utterances(&self) -> &[String] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn multiplicity(&self, utterance: &str) -> usize {
        self.utterances.iter().filter(|u| *u == utterance).count()
    }
}

/// `S1(u_k | t) = L0(t|u_k)^α / Σ_j L0(t|u_j)^α` for every alternative `k`
/// and target `t`, given the L0 distribution of each alternative.
pub fn s1_from_l0(l0: &[ListenerDistribution], alpha: f64) -> Vec<[f64; CONTEXT_SIZE]> {
    assert!(!l0.is_empty(), "empty alternative set");
    let mut out = vec![[0.0; CONTEXT_SIZE]; l0.len()];
    #[allow(clippy::needless_range_loop)]
    for t in 0..CONTEXT_SIZE {
        // Floor keeps zero-probability columns finite under any alpha.
        let logits: Vec<f64> = l0
            .iter()
            .map(|d| alpha * d.probs[t].max(f64::MIN_POSITIVE).ln())
            .collect();
        for (k, lp) in log_softmax(&logits).into_iter().enumerate() {
            out[k][t] = lp.exp();
        }
    }
    out
}

/// L2 for the first alternative from one S1 table: `S1(u_0|t)` renormalized
/// over targets.
fn l2_from_s1(s1: &[[f64; CONTEXT_SIZE]]) -> ListenerDistribution {
    ListenerDistribution::normalized(s1[0])
}

/// Scores utterances with L0, computing each distinct utterance's quadratic
/// form once. Safe to share across threads.
pub struct L0Cache<'m> {
    model: &'m ListenerModel,
    scorers: Mutex<HashMap<Vec<String>, Arc<Option<QuadraticScorer>>>>,
}

impl<'m> L0Cache<'m> {
    pub fn new(model: &'m ListenerModel) -> Self {
        Self {
            model,
            scorers: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &'m ListenerModel {
        self.model
    }

    fn scorer(&self, utterance: &str) -> Result<Arc<Option<QuadraticScorer>>> {
        let tokens = preprocess(&[utterance], TokenMode::Listener);
        if let Some(s) = self.scorers.lock().expect("cache lock").get(&tokens) {
            return Ok(Arc::clone(s));
        }
        let scorer = if tokens.is_empty() {
            None
        } else {
            Some(self.model.scorer(&tokens)?)
        };
        let scorer = Arc::new(scorer);
        self.scorers
            .lock()
            .expect("cache lock")
            .insert(tokens, Arc::clone(&scorer));
        Ok(scorer)
    }

    /// `L0(. | u, C)`. An utterance with no tokens carries no information
    /// and gets the uniform distribution.
    pub fn distribution(
        &self,
        utterance: &str,
        colors: &[Color; CONTEXT_SIZE],
    ) -> Result<ListenerDistribution> {
        Ok(match self.scorer(utterance)?.as_ref() {
            Some(s) => s.distribution(colors),
            None => ListenerDistribution::uniform(),
        })
    }
}

/// `S1(. | t)` over `alt` for every target, with L0 from `cache`.
pub fn neural_s1(
    cache: &L0Cache<'_>,
    alt: &AlternativeSet,
    colors: &[Color; CONTEXT_SIZE],
    alpha: f64,
) -> Result<Vec<[f64; CONTEXT_SIZE]>> {
    let l0 = alt
        .utterances()
        .iter()
        .map(|u| cache.distribution(u, colors))
        .collect::<Result<Vec<_>>>()?;
    Ok(s1_from_l0(&l0, alpha))
}

/// `n` alternative sets for `observed`: each holds `observed` plus `m`
/// S0 samples per target index, drawn in target order.
pub fn sample_alternatives<R: Rng + ?Sized>(
    s0: &SpeakerModel,
    observed: &str,
    colors: &[Color; CONTEXT_SIZE],
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<AlternativeSet>> {
    let mut decoders: Vec<_> = (0..CONTEXT_SIZE).map(|t| s0.decoder(colors, t)).collect();
    let mut sets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut alt = AlternativeSet::new(observed.to_string());
        for dec in &mut decoders {
            for _ in 0..m {
                alt.push(dec.sample(rng, 1.0)?.text());
            }
        }
        sets.push(alt);
    }
    Ok(sets)
}

/// L2 from pre-drawn alternative sets: the mean over sets of `S1(u|t)`
/// renormalized over targets.
pub fn l2_from_alternatives(
    cache: &L0Cache<'_>,
    sets: &[AlternativeSet],
    colors: &[Color; CONTEXT_SIZE],
    alpha: f64,
) -> Result<ListenerDistribution> {
    let mut mean = [0.0; CONTEXT_SIZE];
    for alt in sets {
        let l2 = l2_from_s1(&neural_s1(cache, alt, colors, alpha)?);
        for (acc, p) in mean.iter_mut().zip(l2.probs) {
            *acc += p / sets.len() as f64;
        }
    }
    Ok(ListenerDistribution { probs: mean })
}

/// `L2(. | u, C)` with `cfg.n` sets of `cfg.m` samples per target.
pub fn neural_l2<R: Rng + ?Sized>(
    cache: &L0Cache<'_>,
    s0: &SpeakerModel,
    utterance: &str,
    colors: &[Color; CONTEXT_SIZE],
    cfg: &PragmaticsConfig,
    rng: &mut R,
) -> Result<ListenerDistribution> {
    let sets = sample_alternatives(s0, utterance, colors, cfg.m, cfg.n, rng)?;
    l2_from_alternatives(cache, &sets, colors, cfg.alpha_neural)
}

/// `L1(t | u, C) ∝ S0(u | t, C)`, normalized in log space.
pub fn neural_l1(
    s0: &SpeakerModel,
    utterance: &str,
    colors: &[Color; CONTEXT_SIZE],
) -> Result<ListenerDistribution> {
    let tokens = preprocess(&[utterance], TokenMode::Speaker);
    let mut scores = [0.0; CONTEXT_SIZE];
    for (t, s) in scores.iter_mut().enumerate() {
        *s = s0.s0_log_prob(&tokens, colors, t)?;
    }
    Ok(ListenerDistribution::from_log_scores(scores))
}

/// Every listener's distribution for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentOutputs {
    pub l0: ListenerDistribution,
    pub l1: ListenerDistribution,
    pub l2: ListenerDistribution,
    pub la: ListenerDistribution,
    pub lb: ListenerDistribution,
    pub le: ListenerDistribution,
}

/// The base models plus blending weights.
pub struct PragmaticAgents<'m> {
    pub l0: L0Cache<'m>,
    pub s0: &'m SpeakerModel,
    pub cfg: PragmaticsConfig,
}

impl<'m> PragmaticAgents<'m> {
    pub fn new(l0: &'m ListenerModel, s0: &'m SpeakerModel, cfg: PragmaticsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            l0: L0Cache::new(l0),
            s0,
            cfg,
        })
    }

    pub fn l0(&self, trial: &ContextTrial) -> Result<ListenerDistribution> {
        self.l0.distribution(&trial.utterance(), &trial.colors)
    }

    pub fn l1(&self, trial: &ContextTrial) -> Result<ListenerDistribution> {
        neural_l1(self.s0, &trial.utterance(), &trial.colors)
    }

    pub fn l2<R: Rng + ?Sized>(
        &self,
        trial: &ContextTrial,
        rng: &mut R,
    ) -> Result<ListenerDistribution> {
        neural_l2(
            &self.l0,
            self.s0,
            &trial.utterance(),
            &trial.colors,
            &self.cfg,
            rng,
        )
    }

    /// All six listeners; L2 consumes `rng`.
    pub fn all<R: Rng + ?Sized>(&self, trial: &ContextTrial, rng: &mut R) -> Result<AgentOutputs> {
        let l0 = self.l0(trial)?;
        let l1 = self.l1(trial)?;
        let l2 = self.l2(trial, rng)?;
        Ok(self.blends(l0, l1, l2))
    }

    /// `La = blend(L0, L1, βa)`, `Lb = blend(L0, L2, βb)`, `Le = blend(La, Lb, γ)`.
    pub fn blends(
        &self,
        l0: ListenerDistribution,
        l1: ListenerDistribution,
        l2: ListenerDistribution,
    ) -> AgentOutputs {
        let la = blend(&l0, &l1, self.cfg.beta_a);
        let lb = blend(&l0, &l2, self.cfg.beta_b);
        let le = blend(&la, &lb, self.cfg.gamma);
        AgentOutputs {
            l0,
            l1,
            l2,
            la,
            lb,
            le,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(p: [f64; 3]) -> ListenerDistribution {
        ListenerDistribution { probs: p }
    }

    #[test]
    fn single_alternative_gets_all_mass() {
        let s1 = s1_from_l0(&[dist([0.2, 0.5, 0.3])], 0.544);
        assert_eq!(s1, vec![[1.0, 1.0, 1.0]]);
        assert_eq!(l2_from_s1(&s1), ListenerDistribution::uniform());
    }

    #[test]
    fn duplicates_double_mass() {
        let a = dist([0.6, 0.3, 0.1]);
        let b = dist([0.2, 0.2, 0.6]);
        let once = s1_from_l0(&[a, b], 1.0);
        let twice = s1_from_l0(&[a, b, b], 1.0);
        for t in 0..3 {
            let ratio_once = once[1][t] / once[0][t];
            let ratio_twice = (twice[1][t] + twice[2][t]) / twice[0][t];
            assert_abs_diff_eq!(ratio_twice, 2.0 * ratio_once, epsilon = 1e-12);
        }
    }

    #[test]
    fn column_scaling_invariance() {
        let l0 = [
            dist([0.6, 0.3, 0.1]),
            dist([0.2, 0.2, 0.6]),
            dist([0.1, 0.8, 0.1]),
        ];
        let base = s1_from_l0(&l0, 0.7);
        // Scale target column 1 by 0.5 across all alternatives.
        let scaled: Vec<_> = l0
            .iter()
            .map(|d| dist([d.probs[0], d.probs[1] * 0.5, d.probs[2]]))
            .collect();
        let after = s1_from_l0(&scaled, 0.7);
        for (x, y) in base.iter().zip(&after) {
            for t in 0..3 {
                assert_abs_diff_eq!(x[t], y[t], epsilon = 1e-12);
            }
        }
    }

    fn toy_models() -> (ListenerModel, SpeakerModel) {
        let vocab = Vocabulary::from_tokens(["blue", "dark", "red"].map(String::from));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (
            ListenerModel::new(vocab.clone(), &mut rng),
            SpeakerModel::new(vocab, &mut rng),
        )
    }

    fn colors() -> [Color; 3] {
        [
            Color::from_rgb8(200, 30, 30),
            Color::from_rgb8(20, 180, 40),
            Color::from_rgb8(40, 40, 220),
        ]
    }

    #[test]
    fn l2_is_a_distribution_and_deterministic() {
        let (l0, s0) = toy_models();
        let cache = L0Cache::new(&l0);
        let cfg = PragmaticsConfig {
            m: 2,
            n: 3,
            ..PragmaticsConfig::default()
        };
        let a = neural_l2(
            &cache,
            &s0,
            "dark blue",
            &colors(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let b = neural_l2(
            &cache,
            &s0,
            "dark blue",
            &colors(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        assert!(a.is_valid(1e-9));
        assert_eq!(a, b);
    }

    #[test]
    fn alternative_sets_have_expected_size() {
        let (_, s0) = toy_models();
        let sets = sample_alternatives(
            &s0,
            "blue",
            &colors(),
            3,
            2,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(sets.len(), 2);
        for s in &sets {
            assert_eq!(s.len(), 10);
            assert_eq!(s.observed(), "blue");
        }
    }

    #[test]
    fn l1_on_identical_colors_is_uniform() {
        let (_, s0) = toy_models();
        let c = Color::from_rgb8(90, 90, 200);
        let d = neural_l1(&s0, "dark blue", &[c; 3]).unwrap();
        for p in d.probs {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }
}
