//! The neural literal speaker S0.
//!
//! An encoder LSTM reads the Fourier features of the context with the target
//! last. Its final cell state is concatenated to the previous-token embedding
//! at every decoder step, and an affine map of the decoder state gives the
//! next-token distribution.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorspace::{Color, CONTEXT_SIZE, FOURIER_DIM};
use crate::corpus::{ContextTrial, TokenMode, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{
    fit, log_softmax, Affine, Checkpoint, Embedding, Goal, Grads, Graph, LstmCell, NodeId,
    Objective, OptimizerConfig, ParamSet, TrainConfig, TrainReport, EMBED_DIM, HIDDEN_DIM,
};

pub const SPEAKER_KIND: &str = "speaker";

/// Learning rate of the speaker's Adam optimizer.
pub const S0_LEARNING_RATE: f64 = 0.004;

/// Longest utterance the decoder emits before the end token is forced.
pub const MAX_DECODE_LEN: usize = 20;

/// Context indices in encoder order: distractors as given, then the target.
pub fn encoder_order(target: usize) -> [usize; CONTEXT_SIZE] {
    let mut order = [0; CONTEXT_SIZE];
    for (k, i) in (0..CONTEXT_SIZE).filter(|&i| i != target).enumerate() {
        order[k] = i;
    }
    order[CONTEXT_SIZE - 1] = target;
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSample {
    /// Tokens without the end marker.
    pub tokens: Vec<String>,
    /// Log probability under the model, including the end token.
    pub log_prob: f64,
}

impl UtteranceSample {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Layer handles of the speaker; the weights live in a separate [`ParamSet`].
#[derive(Debug, Clone)]
pub struct SpeakerNet {
    pub vocab: Vocabulary,
    encoder: LstmCell,
    embedding: Embedding,
    decoder: LstmCell,
    output: Affine,
}

impl SpeakerNet {
    /// Context vector node: the encoder's final cell state.
    fn encode_node(
        &self,
        g: &mut Graph<'_>,
        colors: &[Color; CONTEXT_SIZE],
        target: usize,
    ) -> NodeId {
        let xs: Vec<NodeId> = encoder_order(target)
            .iter()
            .map(|&i| g.input_vector(colors[i].fourier().as_slice()))
            .collect();
        self.encoder.run(g, &xs).c
    }

    /// Summed cross-entropy of `ids` (which end with the end token).
    pub fn loss_node(
        &self,
        g: &mut Graph<'_>,
        colors: &[Color; CONTEXT_SIZE],
        target: usize,
        ids: &[usize],
    ) -> Result<NodeId> {
        let ctx = self.encode_node(g, colors, target);
        let mut state = self.decoder.zero_state(g);
        let mut prev = Vocabulary::START_ID;
        let mut losses = Vec::with_capacity(ids.len());
        for &id in ids {
            let emb = self.embedding.lookup(g, &[prev])?[0];
            let x = g.concat(&[ctx, emb]);
            state = self.decoder.step(g, x, state);
            let logits = self.output.forward(g, state.h);
            losses.push(g.softmax_xent(logits, id));
            prev = id;
        }
        Ok(g.add_all(&losses))
    }

    fn context_values(
        &self,
        params: &ParamSet,
        colors: &[Color; CONTEXT_SIZE],
        target: usize,
    ) -> Vec<f64> {
        let feats = encoder_order(target).map(|i| colors[i].fourier());
        self.encoder
            .run_values(params, feats.iter().map(|f| f.as_slice()))
            .1
    }
}

/// Decoder state after a prefix: `(h, c, log p(next token))`.
#[derive(Debug, Clone)]
struct StepOut {
    h: Vec<f64>,
    c: Vec<f64>,
    log_probs: Vec<f64>,
}

/// Tape-free decoding for one `(context, target)`, memoizing each prefix so
/// repeated samples share work.
pub struct Decoder<'m> {
    model: &'m SpeakerModel,
    context: Vec<f64>,
    cache: HashMap<Vec<usize>, StepOut>,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m SpeakerModel, colors: &[Color; CONTEXT_SIZE], target: usize) -> Self {
        Self {
            model,
            context: model.net.context_values(&model.params, colors, target),
            cache: HashMap::new(),
        }
    }

    /// The context vector fed to every decoder step.
    pub fn context(&self) -> &[f64] {
        &self.context
    }

    fn step(&mut self, prefix: &[usize]) -> Result<&StepOut> {
        if !self.cache.contains_key(prefix) {
            let net = &self.model.net;
            let params = &self.model.params;
            let (prev, h, c) = match prefix.split_last() {
                None => (
                    Vocabulary::START_ID,
                    vec![0.0; HIDDEN_DIM],
                    vec![0.0; HIDDEN_DIM],
                ),
                Some((&last, head)) => {
                    let out = self.step(head)?;
                    (last, out.h.clone(), out.c.clone())
                }
            };
            let emb = net.embedding.row(params, prev)?;
            let x: Vec<f64> = self.context.iter().chain(emb).copied().collect();
            let (h, c) = net.decoder.step_values(params, &x, &h, &c);
            let log_probs = log_softmax(&net.output.apply(params, &h));
            self.cache
                .insert(prefix.to_vec(), StepOut { h, c, log_probs });
        }
        Ok(&self.cache[prefix])
    }

    /// Next-token log probabilities after `prefix` (ids without `<s>`).
    pub fn next_log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self.step(prefix)?.log_probs.clone())
    }

    /// Log probability of `ids`, which must end with the end token.
    pub fn log_prob_ids(&mut self, ids: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..ids.len() {
            let lp = &self.step(&ids[..k])?.log_probs;
            let id = ids[k];
            if id >= lp.len() {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    len: lp.len(),
                });
            }
            total += lp[id];
        }
        Ok(total)
    }

    /// Ancestral sampling at `temperature`; `temperature <= 0` decodes greedily.
    /// The recorded log probability is under the untempered model.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        temperature: f64,
    ) -> Result<UtteranceSample> {
        let mut ids = Vec::new();
        let mut log_prob = 0.0;
        loop {
            let lp = &self.step(&ids)?.log_probs;
            let next = if ids.len() >= MAX_DECODE_LEN {
                Vocabulary::END_ID
            } else if temperature <= 0.0 {
                argmax(lp)
            } else {
                draw(lp, temperature, rng)
            };
            log_prob += lp[next];
            if next == Vocabulary::END_ID {
                break;
            }
            ids.push(next);
        }
        Ok(UtteranceSample {
            tokens: self.model.net.vocab.decode(&ids),
            log_prob,
        })
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

fn draw<R: Rng + ?Sized>(log_probs: &[f64], temperature: f64, rng: &mut R) -> usize {
    let scaled: Vec<f64> = log_probs.iter().map(|lp| lp / temperature).collect();
    let probs = log_softmax(&scaled);
    let mut u: f64 = rng.random();
    for (i, lp) in probs.iter().enumerate() {
        u -= lp.exp();
        if u < 0.0 {
            return i;
        }
    }
    // Rounding left a sliver of mass; fall back to the last possible token.
    probs
        .iter()
        .rposition(|lp| lp.is_finite())
        .unwrap_or(Vocabulary::END_ID)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpeakerMeta {
    vocab: Vocabulary,
    embed_dim: usize,
    hidden_dim: usize,
}

#[derive(Debug, Clone)]
pub struct SpeakerModel {
    pub net: SpeakerNet,
    pub params: ParamSet,
}

impl SpeakerModel {
    pub fn new<R: Rng + ?Sized>(vocab: Vocabulary, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let encoder = LstmCell::new(&mut params, "s0.encoder", FOURIER_DIM, HIDDEN_DIM, rng);
        let embedding = Embedding::new(&mut params, "s0.embed", vocab.len(), EMBED_DIM, rng);
        let decoder = LstmCell::new(
            &mut params,
            "s0.decoder",
            HIDDEN_DIM + EMBED_DIM,
            HIDDEN_DIM,
            rng,
        );
        let output = Affine::new(&mut params, "s0.out", HIDDEN_DIM, vocab.len(), rng);
        Self {
            net: SpeakerNet {
                vocab,
                encoder,
                embedding,
                decoder,
                output,
            },
            params,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.net.vocab
    }

    /// The context vector `h`: final encoder cell state with the target last.
    pub fn encode_context(&self, colors: &[Color; CONTEXT_SIZE], target: usize) -> Vec<f64> {
        self.net.context_values(&self.params, colors, target)
    }

    pub fn decoder(&self, colors: &[Color; CONTEXT_SIZE], target: usize) -> Decoder<'_> {
        Decoder::new(self, colors, target)
    }

    /// Token ids of speaker-mode `tokens` followed by the end token.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = self.net.vocab.encode(tokens);
        ids.push(Vocabulary::END_ID);
        ids
    }

    /// `log S0(u | target, C)` for speaker-mode tokens; the end token is
    /// appended here.
    pub fn s0_log_prob<S: AsRef<str>>(
        &self,
        tokens: &[S],
        colors: &[Color; CONTEXT_SIZE],
        target: usize,
    ) -> Result<f64> {
        self.decoder(colors, target)
            .log_prob_ids(&self.encode_tokens(tokens))
    }

    pub fn s0_sample<R: Rng + ?Sized>(
        &self,
        colors: &[Color; CONTEXT_SIZE],
        target: usize,
        rng: &mut R,
        temperature: f64,
    ) -> Result<UtteranceSample> {
        self.decoder(colors, target).sample(rng, temperature)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = SpeakerMeta {
            vocab: self.net.vocab.clone(),
            embed_dim: EMBED_DIM,
            hidden_dim: HIDDEN_DIM,
        };
        Checkpoint::new(
            SPEAKER_KIND,
            serde_json::to_value(meta).expect("vocabulary serializes"),
            &self.params,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(SPEAKER_KIND)?;
        let meta: SpeakerMeta = serde_json::from_value(ckpt.meta.clone())?;
        if meta.embed_dim != EMBED_DIM || meta.hidden_dim != HIDDEN_DIM {
            return Err(Error::Checkpoint(format!(
                "speaker dims {}x{} differ from {EMBED_DIM}x{HIDDEN_DIM}",
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

#[derive(Debug, Clone)]
struct Example {
    colors: [Color; CONTEXT_SIZE],
    target: usize,
    ids: Vec<usize>,
}

fn examples(model: &SpeakerModel, trials: &[ContextTrial]) -> Vec<Example> {
    trials
        .iter()
        .filter_map(|t| {
            let tokens = t.tokens(TokenMode::Speaker);
            (!tokens.is_empty()).then(|| Example {
                colors: t.colors,
                target: t.target_index,
                ids: model.encode_tokens(&tokens),
            })
        })
        .collect()
}

/// Per-token perplexity of `examples`, end tokens included.
fn token_perplexity(net: &SpeakerNet, params: &ParamSet, examples: &[Example]) -> Result<f64> {
    let mut nll = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let mut g = Graph::new(params);
        let loss = net.loss_node(&mut g, &ex.colors, ex.target, &ex.ids)?;
        nll += g.scalar(loss);
        count += ex.ids.len();
    }
    Ok(if count == 0 {
        f64::INFINITY
    } else {
        (nll / count as f64).exp()
    })
}

struct S0Objective<'a> {
    net: &'a SpeakerNet,
    train: Vec<Example>,
    dev: Vec<Example>,
}

impl Objective for S0Objective<'_> {
    fn batch_loss(&self, params: &ParamSet, batch: &[usize], grads: &mut Grads) -> Result<f64> {
        let mut total = 0.0;
        for &i in batch {
            let ex = &self.train[i];
            let mut g = Graph::new(params);
            let loss = self.net.loss_node(&mut g, &ex.colors, ex.target, &ex.ids)?;
            g.backward(loss, grads);
            total += g.scalar(loss);
        }
        Ok(total)
    }

    fn dev_metric(&self, params: &ParamSet) -> Result<f64> {
        token_perplexity(self.net, params, &self.dev)
    }
}

/// Default speaker training: Adam at [`S0_LEARNING_RATE`].
pub fn s0_train_config() -> TrainConfig {
    TrainConfig::new(OptimizerConfig::adam(S0_LEARNING_RATE))
}

/// Teacher-forced token cross-entropy training with per-epoch dev token
/// perplexity. The model ends at its best-dev parameters, which are also
/// written to `checkpoint` when given. Trials with no tokens are skipped.
pub fn train_s0(
    model: &mut SpeakerModel,
    train: &[ContextTrial],
    dev: &[ContextTrial],
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainReport> {
    let objective = S0Objective {
        net: &model.net,
        train: examples(model, train),
        dev: examples(model, dev),
    };
    let n = objective.train.len();
    let net = &model.net;
    fit(
        &mut model.params,
        &objective,
        n,
        cfg,
        "dev_token_perplexity",
        Goal::Minimize,
        |params, _| {
            if let Some(path) = checkpoint {
                SpeakerModel {
                    net: net.clone(),
                    params: params.clone(),
                }
                .save(path)?;
            }
            Ok(())
        },
    )
}
