//! Listener evaluation and speaker behavior statistics.
//!
//! Behavior flags use surface heuristics instead of a part-of-speech tagger,
//! and color-term specificity comes from a bundled `term,depth` table
//! (`data/color_depths.csv`) instead of a lexical database.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{Color, Condition, ConditionThresholds, ContextSampler, CONTEXT_SIZE};
use crate::corpus::{word_count, ContextTrial};
use crate::error::{Error, Result};
use crate::listener::ListenerDistribution;
use crate::rsa::{s1_from_l0, L0Cache};
use crate::speaker::SpeakerModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEval {
    pub trials: usize,
    pub accuracy: f64,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub trials: usize,
    pub accuracy: f64,
    /// `exp` of the mean negative log probability of the target.
    pub perplexity: f64,
    /// Conditions with no trials are absent.
    pub per_condition: BTreeMap<Condition, ConditionEval>,
}

fn summarize<'a, I: Iterator<Item = (&'a ContextTrial, &'a ListenerDistribution)>>(
    pairs: I,
) -> ConditionEval {
    let (mut n, mut correct, mut nll) = (0usize, 0usize, 0.0);
    for (t, d) in pairs {
        n += 1;
        correct += usize::from(d.argmax() == t.target_index);
        nll -= d.prob(t.target_index).ln();
    }
    if n == 0 {
        return ConditionEval {
            trials: 0,
            accuracy: 0.0,
            perplexity: f64::NAN,
        };
    }
    ConditionEval {
        trials: n,
        accuracy: correct as f64 / n as f64,
        perplexity: (nll / n as f64).exp(),
    }
}

/// Accuracy (argmax, ties to the lowest index) and perplexity of `dists`
/// against the trials' targets.
pub fn evaluate(
    agent: &str,
    trials: &[ContextTrial],
    dists: &[ListenerDistribution],
) -> EvalReport {
    assert_eq!(trials.len(), dists.len(), "one distribution per trial");
    let all = summarize(trials.iter().zip(dists));
    let per_condition = Condition::ALL
        .iter()
        .filter_map(|&c| {
            let s = summarize(trials.iter().zip(dists).filter(|(t, _)| t.condition == c));
            (s.trials > 0).then_some((c, s))
        })
        .collect();
    EvalReport {
        agent: agent.to_string(),
        trials: all.trials,
        accuracy: all.accuracy,
        perplexity: all.perplexity,
        per_condition,
    }
}

/// Runs `agent` on every trial in parallel and evaluates the results. The
/// agent receives the trial's position, for deriving per-trial random streams.
pub fn evaluate_with<F>(
    name: &str,
    trials: &[ContextTrial],
    agent: F,
) -> Result<(EvalReport, Vec<ListenerDistribution>)>
where
    F: Fn(usize, &ContextTrial) -> Result<ListenerDistribution> + Sync,
{
    let dists = map_trials(trials, agent)?;
    Ok((evaluate(name, trials, &dists), dists))
}

/// Applies `f` to every trial in parallel, keeping input order.
pub fn map_trials<T, F>(trials: &[ContextTrial], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &ContextTrial) -> Result<T> + Sync,
{
    trials
        .par_iter()
        .enumerate()
        .map(|(i, t)| f(i, t))
        .collect()
}

/// A random stream for trial `index` that does not depend on thread scheduling.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "agent,condition,trials,accuracy,perplexity";

    /// One row for all trials, then one per condition.
    pub fn csv_rows(&self) -> String {
        let mut out = format!(
            "{},all,{},{:.6},{:.6}\n",
            self.agent, self.trials, self.accuracy, self.perplexity
        );
        for (c, e) in &self.per_condition {
            let _ = writeln!(
                out,
                "{},{c},{},{:.6},{:.6}",
                self.agent, e.trials, e.accuracy, e.perplexity
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }
}

/// Per-trial listener probabilities, one row per trial and agent.
pub fn distribution_dump_csv(
    trials: &[ContextTrial],
    agents: &[(&str, &[ListenerDistribution])],
) -> String {
    let mut out = String::from("game_id,round,condition,target,utterance,agent,p0,p1,p2\n");
    for (i, t) in trials.iter().enumerate() {
        for (name, dists) in agents {
            let d = dists[i];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{name},{:.6},{:.6},{:.6}",
                t.game_id,
                t.round,
                t.condition,
                t.target_index,
                csv_field(&t.utterance()),
                d.probs[0],
                d.probs[1],
                d.probs[2]
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCount {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAccuracy {
    /// Conditions with no clicked trials are absent.
    pub per_condition: BTreeMap<Condition, ConditionCount>,
    pub overall: Option<ConditionCount>,
    /// Trials without a recorded click, excluded from every count.
    pub missing_clicks: usize,
}

/// Fraction of clicks on the target, by condition.
pub fn human_accuracy(trials: &[ContextTrial]) -> HumanAccuracy {
    let mut counts: BTreeMap<Condition, (usize, usize)> = BTreeMap::new();
    let mut missing = 0;
    for t in trials {
        match t.clicked_index {
            Some(c) => {
                let e = counts.entry(t.condition).or_default();
                e.0 += usize::from(c == t.target_index);
                e.1 += 1;
            }
            None => missing += 1,
        }
    }
    let finish = |(correct, total): (usize, usize)| ConditionCount {
        correct,
        total,
        accuracy: correct as f64 / total as f64,
    };
    let (c, n) = counts
        .values()
        .fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    HumanAccuracy {
        per_condition: counts.into_iter().map(|(k, v)| (k, finish(v))).collect(),
        overall: (n > 0).then(|| finish((c, n))),
        missing_clicks: missing,
    }
}

impl HumanAccuracy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,correct,total,accuracy\n");
        let rows = self
            .per_condition
            .iter()
            .map(|(c, v)| (c.to_string(), v))
            .chain(self.overall.as_ref().map(|v| ("all".to_string(), v)));
        for (name, v) in rows {
            let _ = writeln!(out, "{name},{},{},{:.6}", v.correct, v.total, v.accuracy);
        }
        out
    }
}

/// Words ending in -er or -est that are not comparatives or superlatives.
const SUFFIX_STOPLIST: &[&str] = &[
    "after", "amber", "border", "butter", "center", "copper", "corner", "cover", "either", "ever",
    "finger", "forest", "ginger", "honest", "however", "interest", "lavender", "layer", "modest",
    "neither", "never", "number", "order", "other", "over", "paper", "power", "rather", "river",
    "silver", "summer", "super", "tower", "umber", "under", "water", "whatever", "winter",
];

const BUNDLED_DEPTHS: &str = include_str!("../data/color_depths.csv");

/// Color-term specificity depths. Schema: CSV with header `term,depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthTable {
    depths: HashMap<String, u32>,
}

impl DepthTable {
    /// Depth above which a term counts as highly specific.
    pub const BASIC_DEPTH: u32 = 7;

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_DEPTHS).expect("bundled depth table is valid")
    }

    pub fn parse(csv: &str) -> Result<Self> {
        let mut lines = csv
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == "term,depth" => {}
            _ => {
                return Err(Error::Config(
                    "depth table must start with `term,depth`".into(),
                ))
            }
        }
        let mut depths = HashMap::new();
        for (i, line) in lines {
            let (term, depth) = line.split_once(',').ok_or_else(|| {
                Error::Config(format!("depth table line {}: expected two fields", i + 1))
            })?;
            let depth = depth.trim().parse().map_err(|_| {
                Error::Config(format!("depth table line {}: bad depth `{depth}`", i + 1))
            })?;
            depths.insert(term.trim().to_lowercase(), depth);
        }
        Ok(Self { depths })
    }

    /// Depth of `word`, also trying it with an `-ish` ending removed
    /// (`reddish` → `red`, `greenish` → `green`).
    pub fn depth(&self, word: &str) -> Option<u32> {
        if let Some(&d) = self.depths.get(word) {
            return Some(d);
        }
        let stem = word.strip_suffix("ish")?;
        if let Some(&d) = self.depths.get(stem) {
            return Some(d);
        }
        let mut chars = stem.chars();
        let (last, prev) = (chars.next_back()?, chars.next_back()?);
        if last == prev {
            return self
                .depths
                .get(&stem[..stem.len() - last.len_utf8()])
                .copied();
        }
        self.depths.get(&format!("{stem}e")).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceFlags {
    pub comparative: bool,
    pub superlative: bool,
    pub negative: bool,
    pub high_specificity: bool,
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn has_suffix(word: &str, suffix: &str) -> bool {
    word.strip_suffix(suffix)
        .is_some_and(|stem| stem.chars().count() >= 3)
        && !SUFFIX_STOPLIST.contains(&word)
}

pub fn utterance_flags(text: &str, depths: &DepthTable) -> UtteranceFlags {
    let ws = words(text);
    UtteranceFlags {
        comparative: ws
            .iter()
            .any(|w| w == "more" || w == "less" || has_suffix(w, "er")),
        superlative: ws
            .iter()
            .any(|w| w == "most" || w == "least" || has_suffix(w, "est")),
        negative: ws.iter().any(|w| w == "not"),
        high_specificity: ws
            .iter()
            .filter_map(|w| depths.depth(w))
            .any(|d| d > DepthTable::BASIC_DEPTH),
    }
}

/// Means per condition; percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub utterances: usize,
    pub chars: f64,
    pub words: f64,
    pub comparatives: f64,
    pub high_specificity: f64,
    pub negatives: f64,
    pub superlatives: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorReport {
    /// Conditions with no utterances are absent.
    pub per_condition: BTreeMap<Condition, BehaviorRow>,
}

/// Behavior statistics of raw (untokenized) utterances grouped by condition.
pub fn behavior_metrics<S: AsRef<str>>(
    items: &[(S, Condition)],
    depths: &DepthTable,
) -> BehaviorReport {
    let mut sums: BTreeMap<Condition, [f64; 7]> = BTreeMap::new();
    for (text, cond) in items {
        let text = text.as_ref();
        let f = utterance_flags(text, depths);
        let pct = |b: bool| if b { 100.0 } else { 0.0 };
        let row = [
            1.0,
            text.chars().count() as f64,
            word_count(text) as f64,
            pct(f.comparative),
            pct(f.high_specificity),
            pct(f.negative),
            pct(f.superlative),
        ];
        let acc = sums.entry(*cond).or_insert([0.0; 7]);
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let per_condition = sums
        .into_iter()
        .map(|(c, s)| {
            let n = s[0];
            (
                c,
                BehaviorRow {
                    utterances: n as usize,
                    chars: s[1] / n,
                    words: s[2] / n,
                    comparatives: s[3] / n,
                    high_specificity: s[4] / n,
                    negatives: s[5] / n,
                    superlatives: s[6] / n,
                },
            )
        })
        .collect();
    BehaviorReport { per_condition }
}

impl BehaviorReport {
    pub const CSV_HEADER: &'static str =
        "source,condition,utterances,chars,words,pct_comparatives,pct_high_specificity,pct_negatives,pct_superlatives";

    pub fn csv_rows(&self, source: &str) -> String {
        let mut out = String::new();
        for (c, r) in &self.per_condition {
            let _ = writeln!(
                out,
                "{source},{c},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                r.utterances,
                r.chars,
                r.words,
                r.comparatives,
                r.high_specificity,
                r.negatives,
                r.superlatives
            );
        }
        out
    }

    pub fn to_csv(&self, source: &str) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows(source))
    }
}

/// A context for speaker analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerContext {
    pub colors: [Color; CONTEXT_SIZE],
    pub target: usize,
    pub condition: Condition,
}

/// `per_condition` sampled contexts for each condition, far first.
pub fn sample_contexts(
    per_condition: usize,
    thresholds: ConditionThresholds,
    seed: u64,
) -> Result<Vec<SpeakerContext>> {
    let sampler = ContextSampler::new(thresholds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * per_condition);
    for condition in Condition::ALL {
        for _ in 0..per_condition {
            let ctx = sampler.sample(condition, &mut rng)?;
            out.push(SpeakerContext {
                colors: ctx.colors,
                target: ctx.target,
                condition,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerComparison {
    pub s0: BehaviorReport,
    pub s1: BehaviorReport,
    /// `(S0 sample, S1 sample)` per context.
    pub samples: Vec<(String, String)>,
}

impl SpeakerComparison {
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{}{}",
            BehaviorReport::CSV_HEADER,
            self.s0.csv_rows("s0"),
            self.s1.csv_rows("s1")
        )
    }
}

/// Draws one S0 utterance per context, and one S1 utterance chosen from a
/// pool of `pool` further S0 samples for the target, reweighted by
/// `L0(target | u)^alpha` over the pool. Context `i` uses stream `i` of `seed`.
pub fn compare_speakers(
    s0: &SpeakerModel,
    l0: &L0Cache<'_>,
    contexts: &[SpeakerContext],
    alpha: f64,
    pool: usize,
    seed: u64,
) -> Result<SpeakerComparison> {
    if pool == 0 {
        return Err(Error::Config("S1 candidate pool must be nonempty".into()));
    }
    let samples = contexts
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| {
            let mut rng = trial_rng(seed, i);
            let mut dec = s0.decoder(&ctx.colors, ctx.target);
            let literal = dec.sample(&mut rng, 1.0)?.text();
            let candidates = (0..pool)
                .map(|_| dec.sample(&mut rng, 1.0).map(|s| s.text()))
                .collect::<Result<Vec<_>>>()?;
            let l0s = candidates
                .iter()
                .map(|u| l0.distribution(u, &ctx.colors))
                .collect::<Result<Vec<_>>>()?;
            let weights: Vec<f64> = s1_from_l0(&l0s, alpha)
                .iter()
                .map(|row| row[ctx.target])
                .collect();
            let mut u: f64 = rng.random();
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                u -= w;
                if u < 0.0 {
                    pick = k;
                    break;
                }
            }
            Ok((literal, candidates[pick].clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let depths = DepthTable::bundled();
    let tagged = |pick: fn(&(String, String)) -> &String| -> Vec<(String, Condition)> {
        samples
            .iter()
            .zip(contexts)
            .map(|(s, c)| (pick(s).clone(), c.condition))
            .collect()
    };
    Ok(SpeakerComparison {
        s0: behavior_metrics(&tagged(|s| &s.0), &depths),
        s1: behavior_metrics(&tagged(|s| &s.1), &depths),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trial(cond: Condition, target: usize, click: Option<usize>) -> ContextTrial {
        let c = [
            Color::from_rgb8(200, 30, 30),
            Color::from_rgb8(20, 180, 40),
            Color::from_rgb8(40, 40, 220),
        ];
        ContextTrial {
            game_id: "g".into(),
            round: 1,
            colors: c,
            target_index: target,
            condition: cond,
            speaker_text: vec!["blue".into()],
            clicked_index: click,
        }
    }

    #[test]
    fn uniform_agent_has_perplexity_three() {
        let trials: Vec<_> = (0..9)
            .map(|i| trial(Condition::ALL[i % 3], i % 3, None))
            .collect();
        let dists = vec![ListenerDistribution::uniform(); 9];
        let r = evaluate("uniform", &trials, &dists);
        assert_abs_diff_eq!(r.perplexity, 3.0, epsilon = 1e-12);
        // Ties go to index 0, which is the target for a third of the trials.
        assert_abs_diff_eq!(r.accuracy, 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(r.per_condition.len(), 3);
    }

    #[test]
    fn oracle_agent_is_perfect() {
        let trials: Vec<_> = (0..6).map(|i| trial(Condition::Far, i % 3, None)).collect();
        let dists: Vec<_> = trials
            .iter()
            .map(|t| {
                let mut p = [0.0; 3];
                p[t.target_index] = 1.0;
                ListenerDistribution { probs: p }
            })
            .collect();
        let r = evaluate("oracle", &trials, &dists);
        assert_eq!((r.accuracy, r.perplexity), (1.0, 1.0));
        assert_eq!(
            r.per_condition.keys().copied().collect::<Vec<_>>(),
            vec![Condition::Far]
        );
    }

    #[test]
    fn human_accuracy_excludes_missing_clicks() {
        let trials = vec![
            trial(Condition::Far, 0, Some(0)),
            trial(Condition::Far, 1, Some(2)),
            trial(Condition::Close, 2, None),
        ];
        let h = human_accuracy(&trials);
        assert_eq!(h.missing_clicks, 1);
        assert_eq!(h.per_condition[&Condition::Far].accuracy, 0.5);
        assert!(!h.per_condition.contains_key(&Condition::Close));
        assert!(!h.per_condition.contains_key(&Condition::Split));
    }

    #[test]
    fn flags_follow_the_rules() {
        let d = DepthTable::bundled();
        let f = utterance_flags("darker blue", &d);
        assert!(f.comparative && !f.superlative && !f.negative && !f.high_specificity);
        let f = utterance_flags("not the bluest one", &d);
        assert!(f.negative && f.superlative && !f.comparative);
        assert!(utterance_flags("deep magenta, purple with some pink", &d).high_specificity);
        assert!(!utterance_flags("the other silver one", &d).comparative);
        assert!(utterance_flags("more red", &d).comparative);
        assert!(utterance_flags("least gray", &d).superlative);
    }

    #[test]
    fn depth_normalizes_ish() {
        let d = DepthTable::bundled();
        assert_eq!(d.depth("reddish"), Some(7));
        assert_eq!(d.depth("greenish"), Some(7));
        assert_eq!(d.depth("purplish"), Some(7));
        assert_eq!(d.depth("teal"), Some(8));
        assert_eq!(d.depth("taupe"), Some(9));
        assert_eq!(d.depth("table"), None);
    }

    #[test]
    fn behavior_report_means() {
        let items = [
            ("blue", Condition::Far),
            ("dark teal", Condition::Far),
            ("the darkest one", Condition::Close),
        ];
        let r = behavior_metrics(&items, &DepthTable::bundled());
        let far = r.per_condition[&Condition::Far];
        assert_eq!(far.utterances, 2);
        assert_abs_diff_eq!(far.words, 1.5);
        assert_abs_diff_eq!(far.chars, 6.5);
        assert_abs_diff_eq!(far.high_specificity, 50.0);
        assert_abs_diff_eq!(r.per_condition[&Condition::Close].superlatives, 100.0);
        assert!(!r.per_condition.contains_key(&Condition::Split));
        assert_eq!(r.to_csv("human").lines().count(), 3);
    }

    #[test]
    fn bad_depth_table_rejected() {
        assert!(DepthTable::parse("word,level\nred,7").is_err());
        assert!(DepthTable::parse("term,depth\nred,seven").is_err());
    }
}
