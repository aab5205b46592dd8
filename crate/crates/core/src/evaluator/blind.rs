use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A shuffled multiple-choice prompt and its answer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindPrompt {
    pub text: String,
    /// Choice `i` carries label `i + 1`.
    pub choices: Vec<String>,
    /// Label of the positive.
    pub answer: usize,
    /// For each choice, its index into the negatives, or `None` for the positive.
    pub sources: Vec<Option<usize>>,
}

impl BlindPrompt {
    pub fn k(&self) -> usize {
        self.choices.len()
    }
}

/// Seeded uniform subsample of `subsample` negatives (all of them when
/// fewer exist) plus the positive at a seeded position.
pub fn build_blind_prompt(positive: &str, negatives: &[String], seed: u64, subsample: usize) -> BlindPrompt {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = subsample.min(negatives.len());
    let mut sources: Vec<Option<usize>> = index::sample(&mut rng, negatives.len(), take).into_iter().map(Some).collect();
    let slot = rng.random_range(0..=sources.len());
    sources.insert(slot, None);
    let choices: Vec<String> = sources
        .iter()
        .map(|s| match s {
            Some(i) => negatives[*i].clone(),
            None => positive.to_string(),
        })
        .collect();
    let mut text = String::from("Which of the following captions correctly describes the image?\n\n");
    for (i, choice) in choices.iter().enumerate() {
        text.push_str(&format!("{}. {choice}\n", i + 1));
    }
    text.push_str(&format!("\nAnswer with a single number from 1 to {} and nothing else.", choices.len()));
    BlindPrompt { text, choices, answer: slot + 1, sources }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no choice number in the response")]
pub struct Unparseable;

/// First standalone digit run, accepted only when it is a label in 1..=k.
pub fn parse_choice(output: &str, k: usize) -> Result<usize, Unparseable> {
    let chars: Vec<char> = output.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let before = start.checked_sub(1).map(|j| chars[j]);
            let after = chars.get(i).copied();
            let standalone = before.is_none_or(|c| !c.is_alphanumeric()) && after.is_none_or(|c| !c.is_alphanumeric());
            if standalone {
                let digits: String = chars[start..i].iter().collect();
                return match digits.parse::<usize>() {
                    Ok(v) if (1..=k).contains(&v) => Ok(v),
                    _ => Err(Unparseable),
                };
            }
        } else {
            i += 1;
        }
    }
    Err(Unparseable)
}
