//! Reference-game trials: ingestion, filtering, tokenization, vocabularies
//! and dyad-level splits.

mod split;
mod synth;
mod tokenize;
mod vocab;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::colorspace::{classify_condition, Color, Condition, ConditionThresholds, CONTEXT_SIZE};
use crate::error::{Error, Result};

pub use split::{split_by_dyad, Split, SplitSpec};
pub use synth::{
    bayes_rate, synth_corpus, TemplateSpeaker, CLEAR_MARGIN, COLOR_TERMS, EXTREME_OFFSET,
    SYNTH_ROUNDS_PER_GAME,
};
pub use tokenize::{preprocess, split_suffix, TokenMode, MIN_STEM_LEN, SPLIT_SUFFIXES};
pub use vocab::{Vocabulary, END, START, UNK};

/// One round of a reference game. Colors are in listener order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTrial {
    pub game_id: String,
    pub round: u32,
    pub colors: [Color; CONTEXT_SIZE],
    pub target_index: usize,
    pub condition: Condition,
    /// Speaker messages of the round, in order, untokenized.
    pub speaker_text: Vec<String>,
    pub clicked_index: Option<usize>,
}

impl ContextTrial {
    pub fn tokens(&self, mode: TokenMode) -> Vec<String> {
        preprocess(&self.speaker_text, mode)
    }

    /// All speaker messages joined by a space.
    pub fn utterance(&self) -> String {
        self.speaker_text.join(" ")
    }

    /// `(game_id, round)`, unique within a corpus.
    pub fn key(&self) -> String {
        format!("{}#{}", self.game_id, self.round)
    }
}

/// Line format of the JSON-lines corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub game_id: Option<String>,
    pub round: Option<i64>,
    pub colors: Option<Vec<Vec<f64>>>,
    pub target_index: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub speaker_text: Option<Vec<String>>,
    #[serde(default)]
    pub clicked_index: Option<i64>,
}

impl From<&ContextTrial> for TrialRecord {
    fn from(t: &ContextTrial) -> Self {
        Self {
            game_id: Some(t.game_id.clone()),
            round: Some(i64::from(t.round)),
            colors: Some(t.colors.iter().map(|c| c.channels().to_vec()).collect()),
            target_index: Some(t.target_index as i64),
            condition: Some(t.condition.to_string()),
            speaker_text: Some(t.speaker_text.clone()),
            clicked_index: t.clicked_index.map(|c| c as i64),
        }
    }
}

/// A row that parsed as JSON but does not describe a valid trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub trials: Vec<ContextTrial>,
    pub rejects: Vec<Reject>,
}

fn index_in_context(v: i64, what: &str) -> std::result::Result<usize, String> {
    usize::try_from(v)
        .ok()
        .filter(|&i| i < CONTEXT_SIZE)
        .ok_or_else(|| format!("{what} {v} is not in 0..{CONTEXT_SIZE}"))
}

impl TrialRecord {
    fn require<T>(value: Option<T>, line: usize, field: &'static str) -> Result<T> {
        value.ok_or(Error::MissingField { line, field })
    }

    /// Missing required fields are errors; well-formed rows that violate a
    /// trial invariant come back as `Ok(Err(reason))`.
    fn into_trial(
        self,
        line: usize,
        th: &ConditionThresholds,
    ) -> Result<std::result::Result<ContextTrial, String>> {
        let game_id = Self::require(self.game_id, line, "game_id")?;
        let round = Self::require(self.round, line, "round")?;
        let colors = Self::require(self.colors, line, "colors")?;
        let target = Self::require(self.target_index, line, "target_index")?;
        let speaker_text = Self::require(self.speaker_text, line, "speaker_text")?;

        let check = || -> std::result::Result<ContextTrial, String> {
            if colors.len() != CONTEXT_SIZE {
                return Err(format!(
                    "expected {CONTEXT_SIZE} colors, found {}",
                    colors.len()
                ));
            }
            let mut parsed = [Color::from_rgb8(0, 0, 0); CONTEXT_SIZE];
            for (slot, c) in parsed.iter_mut().zip(&colors) {
                if c.len() != 3 {
                    return Err(format!("color {c:?} does not have 3 channels"));
                }
                *slot = Color::new(c[0], c[1], c[2]).map_err(|e| e.to_string())?;
            }
            let target_index = index_in_context(target, "target_index")?;
            let clicked_index = self
                .clicked_index
                .map(|c| index_in_context(c, "clicked_index"))
                .transpose()?;
            let round = u32::try_from(round).map_err(|_| format!("round {round} is negative"))?;
            if preprocess(&speaker_text, TokenMode::Speaker).is_empty() {
                return Err("speaker_text is empty".to_string());
            }
            let condition = match &self.condition {
                Some(label) => label.parse::<Condition>().map_err(|e| e.to_string())?,
                None => classify_condition(&parsed, target_index, th).map_err(|e| e.to_string())?,
            };
            Ok(ContextTrial {
                game_id: game_id.clone(),
                round,
                colors: parsed,
                target_index,
                condition,
                speaker_text: speaker_text.clone(),
                clicked_index,
            })
        };
        Ok(check())
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped. Stored condition
/// labels are trusted; missing ones are computed from the colors.
pub fn load_raw(path: &Path) -> Result<LoadReport> {
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file), path, &ConditionThresholds::default())
}

pub fn read_jsonl<R: BufRead>(
    reader: R,
    path: &Path,
    th: &ConditionThresholds,
) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        match record.into_trial(line_no, th)? {
            Ok(trial) => report.trials.push(trial),
            Err(reason) => report.rejects.push(Reject {
                line: line_no,
                reason,
            }),
        }
    }
    Ok(report)
}

pub fn write_jsonl(trials: &[ContextTrial], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in trials {
        serde_json::to_writer(&mut out, &TrialRecord::from(t))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Messages longer than `mean + sigma_mult * std` words are dropped.
    pub sigma_mult: f64,
    /// Games with fewer rounds than this are dropped; `None` keeps all games.
    pub min_rounds: Option<usize>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            sigma_mult: 4.0,
            min_rounds: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub input_trials: usize,
    pub input_messages: usize,
    pub mean_words: f64,
    pub std_words: f64,
    pub max_words: f64,
    pub long_messages: usize,
    pub emptied_trials: usize,
    pub incomplete_games: usize,
    pub incomplete_game_trials: usize,
    pub output_trials: usize,
}

pub fn word_count(message: &str) -> usize {
    message.split_whitespace().count()
}

/// Drops overlong messages (threshold computed over all input messages),
/// trials left without messages, and incomplete games.
pub fn filter_trials(
    trials: &[ContextTrial],
    cfg: &FilterConfig,
) -> (Vec<ContextTrial>, FilterReport) {
    let lengths: Vec<f64> = trials
        .iter()
        .flat_map(|t| t.speaker_text.iter().map(|m| word_count(m) as f64))
        .collect();
    let n = lengths.len() as f64;
    let mean = if n > 0.0 {
        lengths.iter().sum::<f64>() / n
    } else {
        0.0
    };
    let var = if n > 0.0 {
        lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n
    } else {
        0.0
    };
    let max_words = mean + cfg.sigma_mult * var.sqrt();

    let mut report = FilterReport {
        input_trials: trials.len(),
        input_messages: lengths.len(),
        mean_words: mean,
        std_words: var.sqrt(),
        max_words,
        ..Default::default()
    };

    let mut kept = Vec::with_capacity(trials.len());
    for t in trials {
        let messages: Vec<String> = t
            .speaker_text
            .iter()
            .filter(|m| (word_count(m) as f64) <= max_words)
            .cloned()
            .collect();
        report.long_messages += t.speaker_text.len() - messages.len();
        if preprocess(&messages, TokenMode::Speaker).is_empty() {
            report.emptied_trials += 1;
            continue;
        }
        kept.push(ContextTrial {
            speaker_text: messages,
            ..t.clone()
        });
    }

    if let Some(min_rounds) = cfg.min_rounds {
        let mut rounds: BTreeMap<&str, usize> = BTreeMap::new();
        for t in trials {
            *rounds.entry(t.game_id.as_str()).or_default() += 1;
        }
        let incomplete: Vec<String> = rounds
            .into_iter()
            .filter(|(_, n)| *n < min_rounds)
            .map(|(g, _)| g.to_string())
            .collect();
        report.incomplete_games = incomplete.len();
        let before = kept.len();
        kept.retain(|t| !incomplete.contains(&t.game_id));
        report.incomplete_game_trials = before - kept.len();
    }

    report.output_trials = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const ROW: &str = r#"{"game_id": "g1", "round": 1, "colors": [[0.1,0.2,0.3],[0.9,0.1,0.1],[0.2,0.8,0.2]], "target_index": 0, "condition": "far", "speaker_text": ["Blue"], "clicked_index": 0}"#;

    fn read(text: &str) -> Result<LoadReport> {
        read_jsonl(
            Cursor::new(text),
            Path::new("mem"),
            &ConditionThresholds::default(),
        )
    }

    fn trial(game: &str, text: &str) -> ContextTrial {
        ContextTrial {
            game_id: game.into(),
            round: 1,
            colors: [
                Color::from_rgb8(0, 0, 0),
                Color::from_rgb8(128, 128, 128),
                Color::from_rgb8(255, 0, 0),
            ],
            target_index: 0,
            condition: Condition::Far,
            speaker_text: vec![text.into()],
            clicked_index: None,
        }
    }

    #[test]
    fn three_rows() {
        let text = [ROW, ROW, ROW].join("\n");
        let report = read(&text).unwrap();
        assert_eq!(report.trials.len(), 3);
        assert!(report.rejects.is_empty());
        assert_eq!(report.trials[0].clicked_index, Some(0));
    }

    #[test]
    fn empty_file() {
        let report = read("").unwrap();
        assert!(report.trials.is_empty() && report.rejects.is_empty());
    }

    #[test]
    fn two_colors_rejected() {
        let bad = ROW.replace("[[0.1,0.2,0.3],", "[");
        let report = read(&format!("{ROW}\n{bad}")).unwrap();
        assert_eq!(report.trials.len(), 1);
        assert_eq!(report.rejects.len(), 1);
        assert_eq!(report.rejects[0].line, 2);
    }

    #[test]
    fn syntax_error_carries_line() {
        let err = read(&format!("{ROW}\n{{not json")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_field() {
        let row = ROW.replace(r#""target_index": 0, "#, "");
        let err = read(&row).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingField {
                line: 1,
                field: "target_index"
            }
        ));
    }

    #[test]
    fn condition_computed_when_absent() {
        let row = ROW.replace(r#""condition": "far", "#, "");
        let t = &read(&row).unwrap().trials[0];
        let expected = classify_condition(&t.colors, 0, &ConditionThresholds::default()).unwrap();
        assert_eq!(t.condition, expected);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let trials = read(&[ROW, ROW].join("\n")).unwrap().trials;
        write_jsonl(&trials, &path).unwrap();
        assert_eq!(load_raw(&path).unwrap().trials, trials);
    }

    #[test]
    fn long_message_excluded() {
        let mut trials: Vec<ContextTrial> = (0..50)
            .map(|i| trial(&format!("g{i}"), "light blue"))
            .collect();
        trials.push(trial("long", &vec!["word"; 200].join(" ")));
        let (kept, report) = filter_trials(&trials, &FilterConfig::default());
        assert_eq!(kept.len(), 50);
        assert_eq!(report.long_messages, 1);
        assert_eq!(report.emptied_trials, 1);
    }

    #[test]
    fn short_corpus_unchanged() {
        let trials: Vec<ContextTrial> = ["blue", "light blue", "the dark one"]
            .iter()
            .map(|t| trial("g", t))
            .collect();
        let (kept, report) = filter_trials(&trials, &FilterConfig::default());
        assert_eq!(kept, trials);
        assert_eq!(report.long_messages, 0);
    }

    #[test]
    fn incomplete_games_dropped() {
        let mut trials = vec![trial("short", "blue")];
        trials.extend((0..3).map(|_| trial("full", "blue")));
        let cfg = FilterConfig {
            min_rounds: Some(3),
            ..FilterConfig::default()
        };
        let (kept, report) = filter_trials(&trials, &cfg);
        assert_eq!(kept.len(), 3);
        assert_eq!(report.incomplete_games, 1);
    }

    #[test]
    fn split_three_games() {
        let trials: Vec<ContextTrial> = ["a", "b", "c"].iter().map(|g| trial(g, "blue")).collect();
        let spec = split_by_dyad(&trials, [1.0 / 3.0; 3], 7).unwrap();
        assert_eq!(spec.counts(&trials), [1, 1, 1]);
    }

    #[test]
    fn split_deterministic_and_balanced() {
        let trials: Vec<ContextTrial> = (0..3000)
            .map(|i| trial(&format!("g{}", i / 50), "blue"))
            .collect();
        let a = split_by_dyad(&trials, [0.5, 0.25, 0.25], 42).unwrap();
        assert_eq!(a, split_by_dyad(&trials, [0.5, 0.25, 0.25], 42).unwrap());
        let counts = a.counts(&trials);
        for (c, f) in counts.iter().zip([0.5, 0.25, 0.25]) {
            assert!((*c as f64 / 3000.0 - f).abs() <= 0.02, "{counts:?}");
        }
        let [train, dev, test] = a.partition(&trials);
        for t in &train {
            assert!(!dev.iter().chain(&test).any(|u| u.game_id == t.game_id));
        }
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(split_by_dyad(&[], [0.5, 0.5, 0.5], 0).is_err());
    }
}
