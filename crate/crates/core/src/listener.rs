//! The neural literal listener L0.
//!
//! An LSTM reads the utterance; its final hidden state is mapped to the mean
//! `mu` and matrix `sigma` of a quadratic form over Fourier color features.
//! Each context color is scored by `-(f - mu)^T sigma (f - mu)` and the three
//! scores are normalized with a softmax. Context colors play no part until
//! that final normalization.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorspace::{Color, FourierFeatures, HsvColor, CONTEXT_SIZE, FOURIER_DIM};
use crate::corpus::{ContextTrial, TokenMode, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{
    fit, log_softmax, Affine, Checkpoint, Embedding, Goal, Grads, Graph, LstmCell, NodeId,
    Objective, OptimizerConfig, ParamSet, TrainConfig, TrainReport, EMBED_DIM, HIDDEN_DIM,
};

pub const LISTENER_KIND: &str = "listener";

/// Learning rate of the listener's ADADELTA optimizer.
pub const L0_LEARNING_RATE: f64 = 0.2;

const SIGMA_LEN: usize = FOURIER_DIM * FOURIER_DIM;

/// A probability distribution over the three context colors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListenerDistribution {
    pub probs: [f64; CONTEXT_SIZE],
}

impl ListenerDistribution {
    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / CONTEXT_SIZE as f64; CONTEXT_SIZE],
        }
    }

    /// Softmax of unnormalized log scores.
    pub fn from_log_scores(scores: [f64; CONTEXT_SIZE]) -> Self {
        let lp = log_softmax(&scores);
        Self {
            probs: [lp[0].exp(), lp[1].exp(), lp[2].exp()],
        }
    }

    /// Normalizes nonnegative masses. All-zero mass gives the uniform distribution.
    pub fn normalized(mass: [f64; CONTEXT_SIZE]) -> Self {
        let total: f64 = mass.iter().sum();
        if total > 0.0 && total.is_finite() {
            Self {
                probs: mass.map(|m| m / total),
            }
        } else {
            Self::uniform()
        }
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..CONTEXT_SIZE {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.probs.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// The quadratic form an utterance induces over feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticScorer {
    mu: Vec<f64>,
    /// Row-major `FOURIER_DIM x FOURIER_DIM`.
    sigma: Vec<f64>,
}

impl QuadraticScorer {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert_eq!(mu.len(), FOURIER_DIM);
        assert_eq!(sigma.len(), SIGMA_LEN);
        Self { mu, sigma }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `-(f - mu)^T sigma (f - mu)`.
    pub fn score(&self, f: &FourierFeatures) -> f64 {
        let d: Vec<f64> = f
            .as_slice()
            .iter()
            .zip(&self.mu)
            .map(|(x, m)| x - m)
            .collect();
        let q: f64 = self
            .sigma
            .chunks_exact(FOURIER_DIM)
            .zip(&d)
            .map(|(row, di)| di * row.iter().zip(&d).map(|(s, dj)| s * dj).sum::<f64>())
            .sum();
        -q
    }

    pub fn distribution(&self, colors: &[Color; CONTEXT_SIZE]) -> ListenerDistribution {
        ListenerDistribution::from_log_scores(colors.map(|c| self.score(&c.fourier())))
    }
}

/// Layer handles of the listener; the weights live in a separate [`ParamSet`].
#[derive(Debug, Clone)]
pub struct ListenerNet {
    pub vocab: Vocabulary,
    embedding: Embedding,
    lstm: LstmCell,
    output: Affine,
}

impl ListenerNet {
    pub fn encode(&self, tokens: &[String]) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        Ok(self.vocab.encode(tokens))
    }

    /// Returns the `mu` (vector) and `sigma` (matrix) nodes for token ids.
    fn forward(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<(NodeId, NodeId)> {
        if ids.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let xs = self.embedding.lookup(g, ids)?;
        let state = self.lstm.run(g, &xs);
        let out = self.output.forward(g, state.h);
        let mu = g.slice(out, 0, FOURIER_DIM);
        let flat = g.slice(out, FOURIER_DIM, SIGMA_LEN);
        let sigma = g.reshape(flat, FOURIER_DIM, FOURIER_DIM);
        Ok((mu, sigma))
    }

    /// Unnormalized scores of the three colors as one 3-vector node.
    fn score_nodes(
        g: &mut Graph<'_>,
        mu: NodeId,
        sigma: NodeId,
        features: &[FourierFeatures; CONTEXT_SIZE],
    ) -> NodeId {
        let scores: Vec<NodeId> = features
            .iter()
            .map(|f| {
                let f = g.input_vector(f.as_slice());
                let d = g.sub(f, mu);
                let sd = g.matvec(sigma, d);
                let q = g.dot(d, sd);
                g.scale(q, -1.0)
            })
            .collect();
        g.concat(&scores)
    }

    pub fn scorer(&self, params: &ParamSet, ids: &[usize]) -> Result<QuadraticScorer> {
        let mut g = Graph::new(params);
        let (mu, sigma) = self.forward(&mut g, ids)?;
        Ok(QuadraticScorer::new(
            g.value(mu).data().to_vec(),
            g.value(sigma).data().to_vec(),
        ))
    }

    /// Cross-entropy of `target` for one example, as a graph node.
    pub fn loss_node(
        &self,
        g: &mut Graph<'_>,
        ids: &[usize],
        features: &[FourierFeatures; CONTEXT_SIZE],
        target: usize,
    ) -> Result<NodeId> {
        let (mu, sigma) = self.forward(g, ids)?;
        let logits = Self::score_nodes(g, mu, sigma, features);
        Ok(g.softmax_xent(logits, target))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ListenerMeta {
    vocab: Vocabulary,
    embed_dim: usize,
    hidden_dim: usize,
}

#[derive(Debug, Clone)]
pub struct ListenerModel {
    pub net: ListenerNet,
    pub params: ParamSet,
}

impl ListenerModel {
    pub fn new<R: Rng + ?Sized>(vocab: Vocabulary, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let embedding = Embedding::new(&mut params, "l0.embed", vocab.len(), EMBED_DIM, rng);
        let lstm = LstmCell::new(&mut params, "l0.lstm", EMBED_DIM, HIDDEN_DIM, rng);
        let output = Affine::new(
            &mut params,
            "l0.out",
            HIDDEN_DIM,
            FOURIER_DIM + SIGMA_LEN,
            rng,
        );
        Self {
            net: ListenerNet {
                vocab,
                embedding,
                lstm,
                output,
            },
            params,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.net.vocab
    }

    /// The quadratic form for listener-mode tokens.
    pub fn scorer(&self, tokens: &[String]) -> Result<QuadraticScorer> {
        let ids = self.net.encode(tokens)?;
        self.net.scorer(&self.params, &ids)
    }

    /// `L0(. | u, C)` for listener-mode tokens.
    pub fn l0_score(
        &self,
        tokens: &[String],
        colors: &[Color; CONTEXT_SIZE],
    ) -> Result<ListenerDistribution> {
        Ok(self.scorer(tokens)?.distribution(colors))
    }

    /// `L0(. | u, C)` for a trial's own utterance.
    pub fn l0_trial(&self, trial: &ContextTrial) -> Result<ListenerDistribution> {
        self.l0_score(&trial.tokens(TokenMode::Listener), &trial.colors)
    }

    pub fn density_grid(
        &self,
        tokens: &[String],
        h_bins: usize,
        s_bins: usize,
        v_bins: usize,
    ) -> Result<DensityGrid> {
        Ok(density_grid(&self.scorer(tokens)?, h_bins, s_bins, v_bins))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = ListenerMeta {
            vocab: self.net.vocab.clone(),
            embed_dim: EMBED_DIM,
            hidden_dim: HIDDEN_DIM,
        };
        Checkpoint::new(
            LISTENER_KIND,
            serde_json::to_value(meta).expect("vocabulary serializes"),
            &self.params,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(LISTENER_KIND)?;
        let meta: ListenerMeta = serde_json::from_value(ckpt.meta.clone())?;
        if meta.embed_dim != EMBED_DIM || meta.hidden_dim != HIDDEN_DIM {
            return Err(Error::Checkpoint(format!(
                "listener dims {}x{} differ from {EMBED_DIM}x{HIDDEN_DIM}",
                meta.embed_dim, meta.hidden_dim
            )));
        }
        let mut model = Self::new(meta.vocab, &mut ChaCha8Rng::seed_from_u64(0));
        let missing = model.params.load_from(&ckpt.params()?);
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "missing or misshapen arrays: {}",
                missing.join(", ")
            )));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// A trial reduced to what the listener sees.
#[derive(Debug, Clone)]
struct Example {
    ids: Vec<usize>,
    features: [FourierFeatures; CONTEXT_SIZE],
    target: usize,
}

fn examples(net: &ListenerNet, trials: &[ContextTrial]) -> Vec<Example> {
    trials
        .iter()
        .filter_map(|t| {
            let ids = net.encode(&t.tokens(TokenMode::Listener)).ok()?;
            Some(Example {
                ids,
                features: t.colors.map(|c| c.fourier()),
                target: t.target_index,
            })
        })
        .collect()
}

/// Fraction of examples whose argmax is the target, scoring each distinct
/// utterance once.
fn accuracy(net: &ListenerNet, params: &ParamSet, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut cache: HashMap<&[usize], QuadraticScorer> = HashMap::new();
    let mut correct = 0usize;
    for ex in examples {
        if !cache.contains_key(ex.ids.as_slice()) {
            cache.insert(&ex.ids, net.scorer(params, &ex.ids)?);
        }
        let scorer = &cache[ex.ids.as_slice()];
        let dist = ListenerDistribution::from_log_scores(std::array::from_fn(|i| {
            scorer.score(&ex.features[i])
        }));
        correct += usize::from(dist.argmax() == ex.target);
    }
    Ok(correct as f64 / examples.len() as f64)
}

struct L0Objective<'a> {
    net: &'a ListenerNet,
    train: Vec<Example>,
    dev: Vec<Example>,
}

impl Objective for L0Objective<'_> {
    fn batch_loss(&self, params: &ParamSet, batch: &[usize], grads: &mut Grads) -> Result<f64> {
        // Examples sharing an utterance share one encoder pass.
        let mut g = Graph::new(params);
        let mut encoded: HashMap<&[usize], (NodeId, NodeId)> = HashMap::new();
        let mut losses = Vec::with_capacity(batch.len());
        for &i in batch {
            let ex = &self.train[i];
            let (mu, sigma) = match encoded.get(ex.ids.as_slice()) {
                Some(&pair) => pair,
                None => {
                    let pair = self.net.forward(&mut g, &ex.ids)?;
                    encoded.insert(&ex.ids, pair);
                    pair
                }
            };
            let logits = ListenerNet::score_nodes(&mut g, mu, sigma, &ex.features);
            losses.push(g.softmax_xent(logits, ex.target));
        }
        let total = g.add_all(&losses);
        g.backward(total, grads);
        Ok(g.scalar(total))
    }

    fn dev_metric(&self, params: &ParamSet) -> Result<f64> {
        accuracy(self.net, params, &self.dev)
    }
}

/// Default listener training: ADADELTA at [`L0_LEARNING_RATE`].
pub fn l0_train_config() -> TrainConfig {
    TrainConfig::new(OptimizerConfig::adadelta(L0_LEARNING_RATE))
}

/// Minimizes target cross-entropy on `train`, tracking dev accuracy each
/// epoch. The model ends at its best-dev parameters, which are also written
/// to `checkpoint` when given. Trials with no tokens are skipped.
pub fn train_l0(
    model: &mut ListenerModel,
    train: &[ContextTrial],
    dev: &[ContextTrial],
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainReport> {
    let objective = L0Objective {
        net: &model.net,
        train: examples(&model.net, train),
        dev: examples(&model.net, dev),
    };
    let n = objective.train.len();
    let net = &model.net;
    fit(
        &mut model.params,
        &objective,
        n,
        cfg,
        "dev_accuracy",
        Goal::Maximize,
        |params, _| {
            if let Some(path) = checkpoint {
                ListenerModel {
                    net: net.clone(),
                    params: params.clone(),
                }
                .save(path)?;
            }
            Ok(())
        },
    )
}

/// Log marginal density over an HSV lattice, summed over value. Rows are hue
/// bins, columns saturation bins; the largest cell is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub h_bins: usize,
    pub s_bins: usize,
    pub values: Vec<f64>,
}

fn bin_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

impl DensityGrid {
    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.values[h * self.s_bins + s]
    }

    pub fn hue_center(&self, h: usize) -> f64 {
        360.0 * bin_center(h, self.h_bins)
    }

    pub fn saturation_center(&self, s: usize) -> f64 {
        bin_center(s, self.s_bins)
    }

    /// `(h, s)` of the largest cell, first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.s_bins, best % self.s_bins)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("hue");
        for s in 0..self.s_bins {
            let _ = write!(out, ",s{:.4}", self.saturation_center(s));
        }
        out.push('\n');
        for h in 0..self.h_bins {
            let _ = write!(out, "{:.4}", self.hue_center(h));
            for s in 0..self.s_bins {
                let _ = write!(out, ",{}", self.get(h, s));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Evaluates `exp(score)` at bin centers of an `h x s x v` HSV lattice and
/// returns `log sum_v` per `(h, s)` cell, shifted so the maximum is 0.
pub fn density_grid(
    scorer: &QuadraticScorer,
    h_bins: usize,
    s_bins: usize,
    v_bins: usize,
) -> DensityGrid {
    assert!(h_bins > 0 && s_bins > 0 && v_bins > 0, "empty lattice");
    let mut values = Vec::with_capacity(h_bins * s_bins);
    let mut column = vec![0.0; v_bins];
    for h in 0..h_bins {
        for s in 0..s_bins {
            for (v, slot) in column.iter_mut().enumerate() {
                let c = HsvColor {
                    h: 360.0 * bin_center(h, h_bins),
                    s: bin_center(s, s_bins),
                    v: bin_center(v, v_bins),
                }
                .to_rgb();
                *slot = scorer.score(&c.fourier());
            }
            let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            values.push(max + column.iter().map(|x| (x - max).exp()).sum::<f64>().ln());
        }
    }
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut values {
        *v -= top;
    }
    DensityGrid {
        h_bins,
        s_bins,
        values,
    }
}
