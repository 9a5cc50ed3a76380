//! A rule-based speaker over a small color-term lexicon, used to generate a
//! stand-in corpus when no recorded games are available.
//!
//! Every description has a fixed meaning: a basic-term region (nearest
//! prototype by CIEDE2000), optionally narrowed by lightness or chroma bands
//! measured from the term's prototype. The speaker uses the shortest
//! description that clearly fits the target and clearly excludes both
//! distractors, so harder contexts get longer descriptions.

use rand::Rng;

use super::ContextTrial;
use crate::colorspace::{
    ciede2000_lab, Color, Condition, ConditionThresholds, ContextSampler, Lab, CONTEXT_SIZE,
};
use crate::error::Result;

/// Prototype colors for the template lexicon, as 8-bit sRGB.
pub const COLOR_TERMS: [(&str, [u8; 3]); 13] = [
    ("red", [220, 30, 30]),
    ("orange", [250, 140, 20]),
    ("yellow", [240, 225, 40]),
    ("green", [40, 170, 50]),
    ("teal", [0, 128, 128]),
    ("blue", [30, 80, 220]),
    ("purple", [128, 40, 160]),
    ("magenta", [230, 30, 180]),
    ("pink", [250, 150, 190]),
    ("brown", [130, 80, 30]),
    ("gray", [128, 128, 128]),
    ("black", [15, 15, 15]),
    ("white", [245, 245, 245]),
];

/// Slack a description needs on the target, and its negation on each
/// distractor, before the speaker relies on it.
pub const CLEAR_MARGIN: f64 = 3.0;

/// Offset from the prototype where the superlative bands begin.
pub const EXTREME_OFFSET: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Lightness,
    Chroma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Modifier {
    Bare,
    /// Above (`high`) or below the prototype on one axis.
    Band {
        axis: Axis,
        high: bool,
    },
    /// At least `EXTREME_OFFSET` beyond the prototype on one axis.
    Extreme {
        axis: Axis,
        high: bool,
    },
    /// Both lightness and chroma bands.
    Pair {
        light: bool,
        bright: bool,
    },
}

const MODIFIERS: [Modifier; 13] = [
    Modifier::Bare,
    Modifier::Band {
        axis: Axis::Lightness,
        high: true,
    },
    Modifier::Band {
        axis: Axis::Lightness,
        high: false,
    },
    Modifier::Band {
        axis: Axis::Chroma,
        high: true,
    },
    Modifier::Band {
        axis: Axis::Chroma,
        high: false,
    },
    Modifier::Extreme {
        axis: Axis::Lightness,
        high: true,
    },
    Modifier::Extreme {
        axis: Axis::Lightness,
        high: false,
    },
    Modifier::Extreme {
        axis: Axis::Chroma,
        high: true,
    },
    Modifier::Extreme {
        axis: Axis::Chroma,
        high: false,
    },
    Modifier::Pair {
        light: true,
        bright: true,
    },
    Modifier::Pair {
        light: true,
        bright: false,
    },
    Modifier::Pair {
        light: false,
        bright: true,
    },
    Modifier::Pair {
        light: false,
        bright: false,
    },
];

fn band_word(axis: Axis, high: bool) -> &'static str {
    match (axis, high) {
        (Axis::Lightness, true) => "lighter",
        (Axis::Lightness, false) => "darker",
        (Axis::Chroma, true) => "brighter",
        (Axis::Chroma, false) => "duller",
    }
}

fn extreme_word(axis: Axis, high: bool) -> &'static str {
    match (axis, high) {
        (Axis::Lightness, true) => "lightest",
        (Axis::Lightness, false) => "darkest",
        (Axis::Chroma, true) => "brightest",
        (Axis::Chroma, false) => "dullest",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Description {
    term: usize,
    modifier: Modifier,
}

/// Per-color measurements the lexicon is defined on.
#[derive(Debug, Clone, Copy)]
struct Percept {
    /// CIEDE2000 distance to each prototype.
    dist: [f64; COLOR_TERMS.len()],
    term: usize,
    lab: Lab,
}

#[derive(Debug, Clone)]
pub struct TemplateSpeaker {
    prototypes: Vec<(&'static str, Lab)>,
}

impl Default for TemplateSpeaker {
    fn default() -> Self {
        Self {
            prototypes: COLOR_TERMS
                .iter()
                .map(|&(name, [r, g, b])| (name, Color::from_rgb8(r, g, b).to_lab()))
                .collect(),
        }
    }
}

impl TemplateSpeaker {
    pub fn terms(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.prototypes.iter().map(|(n, _)| *n)
    }

    fn percept(&self, c: Color) -> Percept {
        let lab = c.to_lab();
        let dist: [f64; COLOR_TERMS.len()] =
            std::array::from_fn(|i| ciede2000_lab(lab, self.prototypes[i].1));
        let mut term = 0;
        for i in 1..dist.len() {
            if dist[i] < dist[term] {
                term = i;
            }
        }
        Percept { dist, term, lab }
    }

    /// Nearest basic term.
    pub fn basic_term(&self, c: Color) -> &'static str {
        self.prototypes[self.percept(c).term].0
    }

    fn words(&self, d: Description) -> String {
        let term = self.prototypes[d.term].0;
        match d.modifier {
            Modifier::Bare => term.to_string(),
            Modifier::Band { axis, high } => format!("{} {term}", band_word(axis, high)),
            Modifier::Extreme { axis, high } => format!("the {} {term}", extreme_word(axis, high)),
            Modifier::Pair { light, bright } => format!(
                "{} {} {term}",
                if light { "light" } else { "dark" },
                if bright { "bright" } else { "dull" }
            ),
        }
    }

    fn parse(&self, utterance: &str) -> Option<Description> {
        let words: Vec<&str> = utterance.split_whitespace().collect();
        let (head, rest) = words.split_last()?;
        let term = self.prototypes.iter().position(|(n, _)| n == head)?;
        let axes = [Axis::Lightness, Axis::Chroma];
        let modifier = match rest {
            [] => Modifier::Bare,
            [w] => axes
                .iter()
                .flat_map(|&axis| [true, false].map(|high| (axis, high)))
                .find(|&(axis, high)| band_word(axis, high) == *w)
                .map(|(axis, high)| Modifier::Band { axis, high })?,
            ["the", w] => axes
                .iter()
                .flat_map(|&axis| [true, false].map(|high| (axis, high)))
                .find(|&(axis, high)| extreme_word(axis, high) == *w)
                .map(|(axis, high)| Modifier::Extreme { axis, high })?,
            [l, b] => Modifier::Pair {
                light: match *l {
                    "light" => true,
                    "dark" => false,
                    _ => return None,
                },
                bright: match *b {
                    "bright" => true,
                    "dull" => false,
                    _ => return None,
                },
            },
            _ => return None,
        };
        Some(Description { term, modifier })
    }

    /// Signed offset of `p` from the prototype of `term` along `axis`.
    fn offset(&self, p: &Percept, term: usize, axis: Axis) -> f64 {
        let proto = self.prototypes[term].1;
        match axis {
            Axis::Lightness => p.lab.l - proto.l,
            Axis::Chroma => p.lab.chroma() - proto.chroma(),
        }
    }

    /// How comfortably `d` applies to `p`: nonnegative exactly when `d` is
    /// true of `p`, and larger the further `p` is from every boundary.
    fn slack(&self, d: Description, p: &Percept) -> f64 {
        let term_slack = p
            .dist
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != d.term)
            .map(|(_, x)| x - p.dist[d.term])
            .fold(f64::INFINITY, f64::min);
        let band = |axis, high: bool, from: f64| {
            let x = self.offset(p, d.term, axis);
            if high {
                x - from
            } else {
                -x - from
            }
        };
        let modifier_slack = match d.modifier {
            Modifier::Bare => f64::INFINITY,
            Modifier::Band { axis, high } => band(axis, high, 0.0),
            Modifier::Extreme { axis, high } => band(axis, high, EXTREME_OFFSET),
            Modifier::Pair { light, bright } => {
                band(Axis::Lightness, light, 0.0).min(band(Axis::Chroma, bright, 0.0))
            }
        };
        term_slack.min(modifier_slack)
    }

    fn choose(&self, p: &[Percept; CONTEXT_SIZE], target: usize) -> Description {
        let candidates = MODIFIERS.map(|modifier| Description {
            term: p[target].term,
            modifier,
        });
        let others = [(target + 1) % CONTEXT_SIZE, (target + 2) % CONTEXT_SIZE];
        let clear = candidates.iter().find(|&&d| {
            self.slack(d, &p[target]) >= CLEAR_MARGIN
                && others
                    .iter()
                    .all(|&o| self.slack(d, &p[o]) <= -CLEAR_MARGIN)
        });
        if let Some(&d) = clear {
            return d;
        }
        // No clear option: the true description that fits the fewest
        // distractors, earliest on ties.
        let mut best = candidates[0];
        let mut best_count = usize::MAX;
        for &d in &candidates {
            if self.slack(d, &p[target]) < 0.0 {
                continue;
            }
            let count = others
                .iter()
                .filter(|&&o| self.slack(d, &p[o]) >= 0.0)
                .count();
            if count < best_count {
                best = d;
                best_count = count;
            }
        }
        best
    }

    /// The description of `colors[target]`.
    pub fn describe(&self, colors: &[Color; CONTEXT_SIZE], target: usize) -> String {
        let p = colors.map(|c| self.percept(c));
        self.words(self.choose(&p, target))
    }

    /// Utterance for each possible target index of the context.
    pub fn describe_all(&self, colors: &[Color; CONTEXT_SIZE]) -> [String; CONTEXT_SIZE] {
        let p = colors.map(|c| self.percept(c));
        [0, 1, 2].map(|t| self.words(self.choose(&p, t)))
    }

    /// Whether `utterance` is literally true of `color`. Meanings do not
    /// depend on the other colors in the context.
    pub fn is_true(&self, utterance: &str, color: Color) -> bool {
        self.parse(utterance)
            .is_some_and(|d| self.slack(d, &self.percept(color)) >= 0.0)
    }

    /// Probability that an ideal listener who knows these templates picks the
    /// target: `1 / k`, where `k` targets in the context share the target's
    /// description.
    pub fn bayes_accuracy(&self, colors: &[Color; CONTEXT_SIZE], target: usize) -> f64 {
        let all = self.describe_all(colors);
        let ties = all.iter().filter(|u| **u == all[target]).count();
        1.0 / ties as f64
    }
}

/// Mean of [`TemplateSpeaker::bayes_accuracy`] over trials.
pub fn bayes_rate<'a, I: IntoIterator<Item = &'a ContextTrial>>(
    speaker: &TemplateSpeaker,
    trials: I,
) -> f64 {
    let (sum, n) = trials.into_iter().fold((0.0, 0usize), |(s, n), t| {
        (s + speaker.bayes_accuracy(&t.colors, t.target_index), n + 1)
    });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub const SYNTH_ROUNDS_PER_GAME: usize = 50;

/// Conditions cycle far, split, close; every block of 50 trials forms a game.
/// Clicks come from an ideal template listener, ties broken at random.
pub fn synth_corpus<R: Rng + ?Sized>(n_trials: usize, rng: &mut R) -> Result<Vec<ContextTrial>> {
    let speaker = TemplateSpeaker::default();
    let sampler = ContextSampler::new(ConditionThresholds::default());
    let mut trials = Vec::with_capacity(n_trials);
    for i in 0..n_trials {
        let condition = Condition::ALL[i % 3];
        let ctx = sampler.sample(condition, rng)?;
        let descriptions = speaker.describe_all(&ctx.colors);
        let utterance = descriptions[ctx.target].clone();
        let candidates: Vec<usize> = (0..CONTEXT_SIZE)
            .filter(|&j| descriptions[j] == utterance)
            .collect();
        let clicked = candidates[rng.random_range(0..candidates.len())];
        trials.push(ContextTrial {
            game_id: format!("synth-{:05}", i / SYNTH_ROUNDS_PER_GAME),
            round: (i % SYNTH_ROUNDS_PER_GAME) as u32 + 1,
            colors: ctx.colors,
            target_index: ctx.target,
            condition,
            speaker_text: vec![utterance],
            clicked_index: Some(clicked),
        });
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_trials_one_per_condition() {
        let trials = synth_corpus(3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let conds: Vec<Condition> = trials.iter().map(|t| t.condition).collect();
        assert_eq!(conds, Condition::ALL);
    }

    #[test]
    fn utterances_true_of_target() {
        let speaker = TemplateSpeaker::default();
        let trials = synth_corpus(600, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for t in &trials {
            assert!(
                speaker.is_true(&t.speaker_text[0], t.colors[t.target_index]),
                "{:?} false of target",
                t.speaker_text
            );
        }
    }

    #[test]
    fn far_trials_mostly_bare_terms() {
        let speaker = TemplateSpeaker::default();
        let trials = synth_corpus(1500, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let far: Vec<_> = trials
            .iter()
            .filter(|t| t.condition == Condition::Far)
            .collect();
        let bare = far
            .iter()
            .filter(|t| {
                let u = &t.speaker_text[0];
                !u.contains(' ') && speaker.terms().any(|term| term == u)
            })
            .count();
        assert!(
            bare as f64 / far.len() as f64 > 0.8,
            "{bare} / {}",
            far.len()
        );
    }

    #[test]
    fn bayes_accuracy_counts_ties() {
        let speaker = TemplateSpeaker::default();
        let blue = Color::from_rgb8(30, 80, 220);
        let red = Color::from_rgb8(220, 30, 30);
        let yellow = Color::from_rgb8(240, 225, 40);
        assert_eq!(speaker.bayes_accuracy(&[blue, red, yellow], 0), 1.0);
        assert_eq!(speaker.describe(&[blue, red, yellow], 1), "red");
    }

    #[test]
    fn parse_round_trips_every_description() {
        let speaker = TemplateSpeaker::default();
        for term in 0..COLOR_TERMS.len() {
            for modifier in MODIFIERS {
                let d = Description { term, modifier };
                assert_eq!(speaker.parse(&speaker.words(d)), Some(d));
            }
        }
        assert_eq!(speaker.parse("blue not green"), None);
    }

    #[test]
    fn bands_split_at_the_prototype() {
        let speaker = TemplateSpeaker::default();
        let light = Color::from_rgb8(70, 120, 240);
        let dark = Color::from_rgb8(20, 50, 160);
        assert!(speaker.is_true("lighter blue", light) && !speaker.is_true("darker blue", light));
        assert!(speaker.is_true("darker blue", dark) && !speaker.is_true("lighter blue", dark));
        assert!(!speaker.is_true("lighter red", light));
    }
}
