use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ContextTrial;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Assignment of whole games (dyads) to splits.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub assignment: BTreeMap<String, Split>,
}

impl SplitSpec {
    pub fn split_of(&self, game_id: &str) -> Option<Split> {
        self.assignment.get(game_id).copied()
    }

    /// Trials of `split`, in input order. Games missing from the assignment
    /// are skipped.
    pub fn select<'a>(&self, trials: &'a [ContextTrial], split: Split) -> Vec<&'a ContextTrial> {
        trials
            .iter()
            .filter(|t| self.split_of(&t.game_id) == Some(split))
            .collect()
    }

    pub fn partition(&self, trials: &[ContextTrial]) -> [Vec<ContextTrial>; 3] {
        let mut out: [Vec<ContextTrial>; 3] = Default::default();
        for t in trials {
            if let Some(s) = self.split_of(&t.game_id) {
                out[s as usize].push(t.clone());
            }
        }
        out
    }

    pub fn counts(&self, trials: &[ContextTrial]) -> [usize; 3] {
        let mut counts = [0; 3];
        for t in trials {
            if let Some(s) = self.split_of(&t.game_id) {
                counts[s as usize] += 1;
            }
        }
        counts
    }
}

/// Shuffles games with `seed`, then hands each game to whichever split is
/// furthest below its target share of trials so far.
pub fn split_by_dyad(trials: &[ContextTrial], fractions: [f64; 3], seed: u64) -> Result<SplitSpec> {
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }

    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for t in trials {
        *sizes.entry(t.game_id.as_str()).or_default() += 1;
    }
    let mut games: Vec<(&str, usize)> = sizes.into_iter().collect();
    games.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut assigned = [0usize; 3];
    let mut spec = SplitSpec::default();
    for (game, size) in games {
        let after = (assigned.iter().sum::<usize>() + size) as f64;
        let best = (0..3)
            .max_by(|&a, &b| {
                let deficit = |i: usize| fractions[i] * after - assigned[i] as f64;
                deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a))
            })
            .unwrap_or(0);
        assigned[best] += size;
        spec.assignment.insert(game.to_string(), Split::ALL[best]);
    }
    Ok(spec)
}
