use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pragref::colorspace::ConditionThresholds;
use pragref::corpus::{
    filter_trials, load_raw, split_by_dyad, synth_corpus, write_jsonl, ContextTrial, FilterConfig,
    FilterReport, Split, SplitSpec, TokenMode, Vocabulary,
};
use pragref::listener::{l0_train_config, train_l0, ListenerDistribution, ListenerModel};
use pragref::metrics::{
    behavior_metrics, compare_speakers, distribution_dump_csv, evaluate, human_accuracy,
    map_trials, sample_contexts, trial_rng, BehaviorReport, DepthTable, EvalReport,
};
use pragref::nn::{TrainConfig, TrainReport};
use pragref::rsa::{percent, AgentOutputs, Lexicon, PragmaticAgents};
use pragref::speaker::{s0_train_config, train_s0, SpeakerModel};
use pragref::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// Equal train/dev/test shares by dyad.
pub const SPLIT_FRACTIONS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

const DEMO_LEXICON: &str = include_str!("../../core/data/demo_lexicon.json");

pub struct Prepared {
    pub trials: Vec<ContextTrial>,
    pub spec: SplitSpec,
    pub filter: FilterReport,
    pub rejects: usize,
}

impl Prepared {
    pub fn split(&self, split: Split) -> Vec<ContextTrial> {
        self.spec
            .select(&self.trials, split)
            .into_iter()
            .cloned()
            .collect()
    }
}

/// Loads, filters and splits the corpus. Deterministic given the seed.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let report = load_raw(cfg.corpus()?)?;
    let (trials, filter) = filter_trials(&report.trials, &FilterConfig::default());
    let spec = split_by_dyad(&trials, SPLIT_FRACTIONS, cfg.seed)?;
    Ok(Prepared {
        trials,
        spec,
        filter,
        rejects: report.rejects.len(),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Prints `csv` and, with an output directory, writes `<name>.csv` and
/// `<name>.json` there.
fn emit<T: Serialize>(cfg: &RunConfig, name: &str, csv: &str, json: &T) -> Result<()> {
    print!("{csv}");
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        fs::write(dir.join(format!("{name}.csv")), csv)?;
        write_json(&dir.join(format!("{name}.json")), json)?;
    }
    Ok(())
}

fn require_out(cfg: &RunConfig) -> Result<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --out".into()))
}

fn vocab_for(trials: &[ContextTrial], mode: TokenMode) -> Vocabulary {
    let toks: Vec<Vec<String>> = trials.iter().map(|t| t.tokens(mode)).collect();
    Vocabulary::build(toks.iter().map(Vec::as_slice))
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<()> {
    let out = require_out(cfg)?;
    let p = prepare(cfg)?;
    ensure_dir(out)?;
    let mut counts = serde_json::Map::new();
    for split in Split::ALL {
        let trials = p.split(split);
        write_jsonl(&trials, &out.join(format!("{split}.jsonl")))?;
        counts.insert(split.to_string(), json!(trials.len()));
    }
    write_json(&out.join("split.json"), &p.spec)?;
    let train = p.split(Split::Train);
    for (mode, name) in [
        (TokenMode::Listener, "listener"),
        (TokenMode::Speaker, "speaker"),
    ] {
        let vocab = vocab_for(&train, mode);
        fs::write(
            out.join(format!("vocab_{name}.txt")),
            vocab.tokens().join("\n") + "\n",
        )?;
    }
    let stats = json!({
        "seed": cfg.seed,
        "rejected_rows": p.rejects,
        "filter": p.filter,
        "split_trials": counts,
    });
    write_json(&out.join("stats.json"), &stats)?;
    println!("split,trials");
    for split in Split::ALL {
        println!("{split},{}", counts[split.as_str()]);
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, n_trials: usize) -> Result<()> {
    let out = require_out(cfg)?;
    let trials = synth_corpus(n_trials, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    write_jsonl(&trials, out)?;
    println!("wrote {} trials to {}", trials.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    L0,
    S0,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::L0 => "l0",
            ModelKind::S0 => "s0",
        }
    }
}

pub fn checkpoint_path(cfg: &RunConfig, kind: ModelKind) -> PathBuf {
    cfg.checkpoint_dir.join(format!("{}.json", kind.name()))
}

fn train_config(cfg: &RunConfig, kind: ModelKind) -> TrainConfig {
    let mut tc = match kind {
        ModelKind::L0 => l0_train_config(),
        ModelKind::S0 => s0_train_config(),
    };
    tc.seed = cfg.seed;
    if let Some(e) = cfg.train.epochs {
        tc.epochs = e;
    }
    if let Some(b) = cfg.train.batch_size {
        tc.batch_size = b;
    }
    if let Some(lr) = cfg.train.lr {
        tc.optimizer = tc.optimizer.with_lr(lr);
    }
    tc
}

fn log_epochs(kind: ModelKind, report: &TrainReport) {
    for e in &report.epochs {
        let loss = e.train_loss.map_or("-".to_string(), |l| format!("{l:.6}"));
        eprintln!(
            "{} epoch {} train_loss {loss} {} {:.6}",
            kind.name(),
            e.epoch,
            report.metric,
            e.dev_metric
        );
    }
}

/// Trains from scratch, or from the existing checkpoint with `resume`. The
/// best-dev checkpoint and a JSON log land in the checkpoint directory.
pub fn cmd_train(cfg: &RunConfig, kind: ModelKind, resume: bool) -> Result<()> {
    let p = prepare(cfg)?;
    let (train, dev) = (p.split(Split::Train), p.split(Split::Dev));
    ensure_dir(&cfg.checkpoint_dir)?;
    let path = checkpoint_path(cfg, kind);
    let tc = train_config(cfg, kind);
    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    let report = match kind {
        ModelKind::L0 => {
            let mut model = if resume {
                ListenerModel::load(&path)?
            } else {
                ListenerModel::new(vocab_for(&train, TokenMode::Listener), &mut init)
            };
            train_l0(&mut model, &train, &dev, &tc, Some(&path))?
        }
        ModelKind::S0 => {
            let mut model = if resume {
                SpeakerModel::load(&path)?
            } else {
                SpeakerModel::new(vocab_for(&train, TokenMode::Speaker), &mut init)
            };
            train_s0(&mut model, &train, &dev, &tc, Some(&path))?
        }
    };
    log_epochs(kind, &report);
    let log = json!({ "train_config": tc, "report": report });
    write_json(
        &cfg.checkpoint_dir
            .join(format!("{}_train.json", kind.name())),
        &log,
    )?;
    println!(
        "{}: best epoch {} {} {:.6} -> {}",
        kind.name(),
        report.best_epoch,
        report.metric,
        report.best_metric,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalAgent {
    L0,
    L1,
    L2,
    La,
    Lb,
    Le,
    /// All six model listeners from one shared L2 pass.
    All,
    Human,
    Uniform,
}

impl EvalAgent {
    pub fn name(self) -> &'static str {
        match self {
            EvalAgent::L0 => "l0",
            EvalAgent::L1 => "l1",
            EvalAgent::L2 => "l2",
            EvalAgent::La => "la",
            EvalAgent::Lb => "lb",
            EvalAgent::Le => "le",
            EvalAgent::All => "all",
            EvalAgent::Human => "human",
            EvalAgent::Uniform => "uniform",
        }
    }
}

const AGENT_NAMES: [&str; 6] = ["l0", "l1", "l2", "la", "lb", "le"];

fn pick(o: &AgentOutputs, name: &str) -> ListenerDistribution {
    match name {
        "l0" => o.l0,
        "l1" => o.l1,
        "l2" => o.l2,
        "la" => o.la,
        "lb" => o.lb,
        _ => o.le,
    }
}

/// Distributions of the requested model listeners. L2 uses stream `i` of
/// the run seed for trial `i`.
fn model_distributions(
    cfg: &RunConfig,
    agent: EvalAgent,
    trials: &[ContextTrial],
) -> Result<Vec<(&'static str, Vec<ListenerDistribution>)>> {
    let load_l0 = || ListenerModel::load(&checkpoint_path(cfg, ModelKind::L0));
    let load_s0 = || SpeakerModel::load(&checkpoint_path(cfg, ModelKind::S0));
    match agent {
        EvalAgent::L0 => {
            let l0 = load_l0()?;
            let cache = pragref::rsa::L0Cache::new(&l0);
            let d = map_trials(trials, |_, t| cache.distribution(&t.utterance(), &t.colors))?;
            Ok(vec![("l0", d)])
        }
        EvalAgent::L1 => {
            let s0 = load_s0()?;
            let d = map_trials(trials, |_, t| {
                pragref::rsa::neural_l1(&s0, &t.utterance(), &t.colors)
            })?;
            Ok(vec![("l1", d)])
        }
        _ => {
            let (l0, s0) = (load_l0()?, load_s0()?);
            let agents = PragmaticAgents::new(&l0, &s0, cfg.pragmatics)?;
            let outs = map_trials(trials, |i, t| agents.all(t, &mut trial_rng(cfg.seed, i)))?;
            let names: Vec<&'static str> = match agent {
                EvalAgent::All => AGENT_NAMES.to_vec(),
                other => vec![other.name()],
            };
            Ok(names
                .into_iter()
                .map(|n| (n, outs.iter().map(|o| pick(o, n)).collect()))
                .collect())
        }
    }
}

pub fn cmd_eval(cfg: &RunConfig, agent: EvalAgent, dump: bool) -> Result<()> {
    let split: Split = cfg.split.parse()?;
    let p = prepare(cfg)?;
    let trials = p.split(split);
    let name = format!("eval_{}_{split}", agent.name());
    if agent == EvalAgent::Human {
        let h = human_accuracy(&trials);
        return emit(cfg, &name, &h.to_csv(), &h);
    }
    let dists = match agent {
        EvalAgent::Uniform => vec![(
            "uniform",
            vec![ListenerDistribution::uniform(); trials.len()],
        )],
        _ => model_distributions(cfg, agent, &trials)?,
    };
    let reports: Vec<EvalReport> = dists.iter().map(|(n, d)| evaluate(n, &trials, d)).collect();
    let mut csv = String::from(EvalReport::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_rows());
    }
    let json = json!({ "split": split, "seed": cfg.seed, "pragmatics": cfg.pragmatics, "reports": reports });
    emit(cfg, &name, &csv, &json)?;
    if dump {
        let out = require_out(cfg)?;
        let table: Vec<(&str, &[ListenerDistribution])> =
            dists.iter().map(|(n, d)| (*n, d.as_slice())).collect();
        fs::write(
            out.join(format!("probs_{}_{split}.csv", agent.name())),
            distribution_dump_csv(&trials, &table),
        )?;
    }
    Ok(())
}

enum Cell {
    Row(Vec<i64>),
    Failed(String),
}

struct Table {
    title: String,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    rows: Vec<Cell>,
}

impl Table {
    fn render(&self) -> String {
        let width = self
            .col_labels
            .iter()
            .chain(&self.row_labels)
            .map(|s| s.chars().count())
            .max()
            .unwrap_or(0)
            .max(4);
        let mut out = format!("{}\n{:width$}", self.title, "");
        for c in &self.col_labels {
            let _ = write!(out, "  {c:>width$}");
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.rows) {
            let _ = write!(out, "{label:width$}");
            match row {
                Cell::Row(values) => {
                    for v in values {
                        let _ = write!(out, "  {v:>width$}");
                    }
                }
                Cell::Failed(msg) => {
                    let _ = write!(out, "  {msg}");
                }
            }
            out.push('\n');
        }
        out
    }

    fn json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .row_labels
            .iter()
            .zip(&self.rows)
            .map(|(label, row)| match row {
                Cell::Row(v) => json!({ "label": label, "percent": v }),
                Cell::Failed(msg) => json!({ "label": label, "error": msg }),
            })
            .collect();
        json!({ "title": self.title, "columns": self.col_labels, "rows": rows })
    }
}

fn float_percents(p: Vec<f64>) -> Vec<i64> {
    p.into_iter().map(|x| (x * 100.0).round() as i64).collect()
}

/// Literal listener, pragmatic speaker and pragmatic listener tables in
/// integer percents. Exact rational arithmetic is used when costs are zero
/// (after scaling by `kappa`) and `alpha` is a whole number.
pub fn cmd_rsa_demo(cfg: &RunConfig, lexicon: Option<&Path>, kappa: f64) -> Result<()> {
    let mut lex: Lexicon = match lexicon {
        Some(path) => Lexicon::load(path)?,
        None => {
            let raw: Lexicon = serde_json::from_str(DEMO_LEXICON)?;
            Lexicon::new(
                raw.utterances,
                raw.referents,
                raw.truth,
                raw.costs,
                raw.prior,
            )?
        }
    };
    if !kappa.is_finite() {
        return Err(Error::Config("kappa must be finite".into()));
    }
    for c in &mut lex.costs {
        *c *= kappa;
    }
    let alpha = cfg.pragmatics.alpha;
    let exact_alpha =
        (alpha.fract() == 0.0 && alpha <= f64::from(u32::MAX)).then_some(alpha as u32);
    let rational = match exact_alpha {
        Some(_) => lex.rational().ok(),
        None => None,
    };
    let cell = |r: Result<Vec<i64>>| match r {
        Ok(v) => Cell::Row(v),
        Err(e) => Cell::Failed(e.to_string()),
    };
    let (us, ts) = (0..lex.n_utterances(), 0..lex.n_referents());
    let (l0, s1, l2): (Vec<Cell>, Vec<Cell>, Vec<Cell>) = match (&rational, exact_alpha) {
        (Some(r), Some(a)) => {
            let pct = |v: Vec<_>| v.iter().map(percent).collect::<Vec<i64>>();
            (
                us.clone().map(|u| cell(r.l0(u).map(pct))).collect(),
                ts.map(|t| cell(r.s1(t, a).map(pct))).collect(),
                us.map(|u| cell(r.l2(u, a).map(pct))).collect(),
            )
        }
        _ => (
            us.clone()
                .map(|u| cell(lex.l0(u).map(float_percents)))
                .collect(),
            ts.map(|t| cell(lex.s1(t, alpha).map(float_percents)))
                .collect(),
            us.map(|u| cell(lex.l2(u, alpha).map(float_percents)))
                .collect(),
        ),
    };
    let tables = [
        Table {
            title: "l0: P(referent | utterance), %".into(),
            row_labels: lex.utterances.clone(),
            col_labels: lex.referents.clone(),
            rows: l0,
        },
        Table {
            title: format!("s1: P(utterance | referent), %, alpha = {alpha}"),
            row_labels: lex.referents.clone(),
            col_labels: lex.utterances.clone(),
            rows: s1,
        },
        Table {
            title: format!("l2: P(referent | utterance), %, alpha = {alpha}"),
            row_labels: lex.utterances.clone(),
            col_labels: lex.referents.clone(),
            rows: l2,
        },
    ];
    let text = tables
        .iter()
        .map(Table::render)
        .collect::<Vec<_>>()
        .join("\n");
    print!("{text}");
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        fs::write(dir.join("rsa_demo.txt"), &text)?;
        let json = json!({
            "alpha": alpha,
            "kappa": kappa,
            "exact": rational.is_some(),
            "l0": tables[0].json(),
            "s1": tables[1].json(),
            "l2": tables[2].json(),
        });
        write_json(&dir.join("rsa_demo.json"), &json)?;
    }
    Ok(())
}

/// Speaker behavior of S0 and S1 on sampled contexts, plus the human corpus
/// when one is configured.
pub fn cmd_analyze(cfg: &RunConfig, contexts: usize, pool: Option<usize>) -> Result<()> {
    let l0 = ListenerModel::load(&checkpoint_path(cfg, ModelKind::L0))?;
    let s0 = SpeakerModel::load(&checkpoint_path(cfg, ModelKind::S0))?;
    let cache = pragref::rsa::L0Cache::new(&l0);
    let ctxs = sample_contexts(contexts, ConditionThresholds::default(), cfg.seed)?;
    let pool = pool.unwrap_or(cfg.pragmatics.m);
    let cmp = compare_speakers(
        &s0,
        &cache,
        &ctxs,
        cfg.pragmatics.alpha_neural,
        pool,
        cfg.seed,
    )?;
    let mut csv = cmp.to_csv();
    let human = match &cfg.corpus {
        Some(_) => {
            let p = prepare(cfg)?;
            let items: Vec<_> = p
                .trials
                .iter()
                .map(|t| (t.utterance(), t.condition))
                .collect();
            let report = behavior_metrics(&items, &DepthTable::bundled());
            csv.push_str(&report.csv_rows("human"));
            Some(report)
        }
        None => None,
    };
    let json: serde_json::Value = json!({
        "contexts_per_condition": contexts,
        "pool": pool,
        "alpha": cfg.pragmatics.alpha_neural,
        "seed": cfg.seed,
        "s0": cmp.s0,
        "s1": cmp.s1,
        "human": human.as_ref().map(|h: &BehaviorReport| h.per_condition.clone()),
    });
    emit(cfg, "behavior", &csv, &json)?;
    if let Some(dir) = &cfg.out {
        let mut samples = String::from("condition,s0,s1\n");
        for ((a, b), c) in cmp.samples.iter().zip(&ctxs) {
            let _ = writeln!(samples, "{},{a},{b}", c.condition);
        }
        fs::write(dir.join("speaker_samples.csv"), samples)?;
    }
    Ok(())
}

pub fn cmd_density(cfg: &RunConfig, utterance: &str, bins: [usize; 3]) -> Result<()> {
    if bins.contains(&0) {
        return Err(Error::Config("grid bins must be positive".into()));
    }
    let l0 = ListenerModel::load(&checkpoint_path(cfg, ModelKind::L0))?;
    let tokens = pragref::corpus::preprocess(&[utterance], TokenMode::Listener);
    let grid = l0.density_grid(&tokens, bins[0], bins[1], bins[2])?;
    let csv = grid.to_csv();
    match &cfg.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                ensure_dir(parent)?;
            }
            grid.write_csv(path)?;
            let (h, s) = grid.argmax();
            println!(
                "peak at hue {:.1}, saturation {:.3} -> {}",
                grid.hue_center(h),
                grid.saturation_center(s),
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}
