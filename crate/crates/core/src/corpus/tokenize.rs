use serde::{Deserialize, Serialize};

use super::vocab::UNK;

/// Which agent the tokens are for. Only listener input gets comparative,
/// superlative and `-ish` endings split off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    Listener,
    Speaker,
}

pub const SPLIT_SUFFIXES: [&str; 3] = ["est", "ish", "er"];

/// Shortest stem left behind when an ending is split off.
pub const MIN_STEM_LEN: usize = 3;

/// Lowercases, concatenates the speaker messages of one round, and splits
/// punctuation into standalone tokens. A literal `<unk>` (as in decoded
/// speaker samples) stays one token.
pub fn preprocess<S: AsRef<str>>(messages: &[S], mode: TokenMode) -> Vec<String> {
    let mut tokens = Vec::new();
    for message in messages {
        let lowered = message.as_ref().to_lowercase();
        for chunk in lowered.split_whitespace() {
            if chunk == UNK {
                tokens.push(UNK.to_string());
                continue;
            }
            let mut word = String::new();
            for ch in chunk.chars() {
                if ch.is_alphanumeric() {
                    word.push(ch);
                } else {
                    flush_word(&mut word, mode, &mut tokens);
                    tokens.push(ch.to_string());
                }
            }
            flush_word(&mut word, mode, &mut tokens);
        }
    }
    tokens
}

fn flush_word(word: &mut String, mode: TokenMode, out: &mut Vec<String>) {
    if word.is_empty() {
        return;
    }
    match mode {
        TokenMode::Speaker => out.push(std::mem::take(word)),
        TokenMode::Listener => {
            let mut suffixes = Vec::new();
            let mut stem = std::mem::take(word);
            while let Some(suffix) = split_suffix(&stem) {
                stem.truncate(stem.len() - suffix.len());
                suffixes.push(suffix);
            }
            out.push(stem);
            out.extend(suffixes.into_iter().rev().map(str::to_string));
        }
    }
}

/// The ending to peel off `word`, if the remaining stem is long enough.
pub fn split_suffix(word: &str) -> Option<&'static str> {
    SPLIT_SUFFIXES.into_iter().find(|suffix| {
        word.ends_with(suffix) && word.chars().count() >= MIN_STEM_LEN + suffix.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str, mode: TokenMode) -> Vec<String> {
        preprocess(&[s], mode)
    }

    #[test]
    fn listener_splits_endings() {
        assert_eq!(
            toks("Darker blue.", TokenMode::Listener),
            ["dark", "er", "blue", "."]
        );
        assert_eq!(
            toks("the lightest", TokenMode::Listener),
            ["the", "light", "est"]
        );
        assert_eq!(toks("greenish", TokenMode::Listener), ["green", "ish"]);
    }

    #[test]
    fn short_stems_stay_whole() {
        assert_eq!(toks("her best", TokenMode::Listener), ["her", "best"]);
    }

    #[test]
    fn speaker_keeps_endings() {
        assert_eq!(toks("bluish", TokenMode::Speaker), ["bluish"]);
        assert_eq!(
            toks("Darker blue.", TokenMode::Speaker),
            ["darker", "blue", "."]
        );
    }

    #[test]
    fn punctuation_split() {
        assert_eq!(
            toks("blue, not teal", TokenMode::Speaker),
            ["blue", ",", "not", "teal"]
        );
    }

    #[test]
    fn unknown_marker_is_atomic() {
        assert_eq!(
            toks("dark <unk> blue", TokenMode::Listener),
            ["dark", "<unk>", "blue"]
        );
    }

    #[test]
    fn messages_concatenate_in_order() {
        let t = preprocess(&["Blue", "the LIGHT one!"], TokenMode::Speaker);
        assert_eq!(t, ["blue", "the", "light", "one", "!"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_own_output(s in "[a-zA-Z ,.!?'-]{0,40}", listener in any::<bool>()) {
            let mode = if listener { TokenMode::Listener } else { TokenMode::Speaker };
            let once = preprocess(&[s.as_str()], mode);
            let twice = preprocess(&[once.join(" ")], mode);
            prop_assert_eq!(once, twice);
        }
    }
}
