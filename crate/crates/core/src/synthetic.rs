//! Seeded synthetic documents and needle-retrieval tasks.

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text;

/// Phrase present in every needle sentence and in no filler sentence.
pub const NEEDLE_MARKER: &str = "secret code";

const ADJECTIVES: &[&str] = &[
    "quiet", "amber", "distant", "narrow", "bright", "heavy", "gentle", "hollow", "silver",
    "ancient", "restless", "pale", "crooked", "humble", "vivid", "frozen",
];
const NOUNS: &[&str] = &[
    "river", "lantern", "orchard", "harbor", "meadow", "tower", "falcon", "bridge", "village",
    "forest", "engine", "garden", "library", "canyon", "market", "island",
];
const VERBS: &[&str] = &[
    "rests", "waits", "shines", "turns", "drifts", "stands", "glows", "sleeps", "hums", "leans",
    "wanders", "settles",
];
const PLACES: &[&str] = &[
    "hill", "shore", "valley", "square", "road", "field", "station", "coast", "ridge", "plain",
];
const PEOPLE: &[&str] = &[
    "the farmer",
    "a traveler",
    "the baker",
    "an old sailor",
    "the teacher",
    "a young painter",
    "the miller",
    "a weaver",
];
const TIMES: &[&str] = &[
    "at dawn",
    "in the evening",
    "after the rain",
    "during winter",
    "before noon",
    "at night",
];

const TEMPLATES: &[&str] = &[
    "The {adj} {noun} {verb} near the {place}.",
    "Every morning {person} walks past the {adj} {noun}.",
    "Nobody remembers when the {noun} by the {place} was built.",
    "{Person} said the {noun} {verb} {time}.",
    "A {adj} wind moved across the {place} {time}.",
    "The old {noun} {verb} while {person} watches from the {place}.",
    "People often talk about the {adj} {noun} and its long history.",
    "Beyond the {place} lies a {adj} {noun} that few have seen.",
    "{Person} painted the {noun} {time} and then returned to the {place}.",
    "The {noun} grew more {adj} with each passing season.",
    "It is said that the {place} was once home to a {adj} {noun}.",
    "Children gather by the {noun} {time} to hear stories.",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pick<'a>(rng: &mut impl Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

/// One filler sentence from the template pool.
pub fn filler_sentence(rng: &mut impl Rng) -> String {
    let template = pick(rng, TEMPLATES);
    let person = pick(rng, PEOPLE);
    template
        .replace("{adj}", pick(rng, ADJECTIVES))
        .replace("{noun}", pick(rng, NOUNS))
        .replace("{verb}", pick(rng, VERBS))
        .replace("{place}", pick(rng, PLACES))
        .replace("{time}", pick(rng, TIMES))
        .replace("{Person}", &capitalize(person))
        .replace("{person}", person)
}

/// `n_sentences` filler sentences separated by single spaces.
pub fn generate_document(seed: u64, n_sentences: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sentences)
        .map(|_| filler_sentence(&mut rng))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub seed: u64,
    pub text: String,
    pub needle_key: String,
    pub needle_value: String,
    /// Requested position as a fraction of the document, in `[0, 1]`.
    pub needle_position: f64,
    pub question: String,
    pub expected_answer: String,
}

impl SyntheticTask {
    pub fn recovered(&self, answer: &str) -> bool {
        answer.contains(&self.expected_answer)
    }
}

pub fn needle_sentence(key: &str, value: &str) -> String {
    format!("The secret code for {key} is {value}.")
}

/// A filler document of about `length_tokens` whitespace tokens with one
/// needle sentence placed at `needle_position` (a fraction of the sentence
/// count). `length_tokens` is raised to 50 if smaller.
pub fn generate_synthetic(seed: u64, length_tokens: usize, needle_position: f64) -> SyntheticTask {
    let length_tokens = length_tokens.max(50);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let needle_key = format!("{}-{}", pick(&mut rng, ADJECTIVES), pick(&mut rng, NOUNS));
    let needle_value = rng.random_range(100_000u32..1_000_000).to_string();
    let needle = needle_sentence(&needle_key, &needle_value);

    let mut total = text::whitespace_len(&needle);
    let mut sentences = Vec::new();
    while total < length_tokens {
        let s = filler_sentence(&mut rng);
        total += text::whitespace_len(&s);
        sentences.push(s);
    }
    let position = if needle_position.is_finite() {
        needle_position.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let at = ((position * sentences.len() as f64).floor() as usize).min(sentences.len());
    sentences.insert(at, needle);
    SyntheticTask {
        seed,
        text: sentences.join(" "),
        question: format!("What is the secret code for {needle_key}?"),
        expected_answer: needle_value.clone(),
        needle_key,
        needle_value,
        needle_position: position,
    }
}

/// `count` tasks whose seeds and needle positions derive from `seed`. A
/// fixed `needle_position` overrides the drawn one.
pub fn generate_suite(
    seed: u64,
    count: usize,
    length_tokens: usize,
    needle_position: Option<f64>,
) -> Vec<SyntheticTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let task_seed = rng.next_u64();
            let p = rng.random::<f64>();
            generate_synthetic(task_seed, length_tokens, needle_position.unwrap_or(p))
        })
        .collect()
}

/// A document with one bigram planted early and repeated far later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRepeat {
    pub text: String,
    /// Token index of the first token of the first occurrence.
    pub first_position: usize,
    /// Token index of the repeated continuation (second token of the second
    /// occurrence).
    pub key_position: usize,
}

pub const PLANTED_BIGRAM: (&str, &str) = ("quartz", "lantern");

/// Unique filler tokens with a period roughly every ten tokens, the planted
/// bigram near the start, and its repeat between `short_window + 8` and
/// `2 * short_window + 8` tokens later.
pub fn planted_repeat_document(seed: u64, short_window: usize) -> PlantedRepeat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens: Vec<String> = Vec::new();
    let mut next_id = 0usize;
    let mut since_period = 0usize;
    let mut sentence_len = rng.random_range(8..13);
    let mut filler = |tokens: &mut Vec<String>, rng: &mut ChaCha8Rng, n: usize| {
        for _ in 0..n {
            let mut t = format!("w{next_id}");
            next_id += 1;
            since_period += 1;
            if since_period >= sentence_len {
                t.push('.');
                since_period = 0;
                sentence_len = rng.random_range(8..13);
            }
            tokens.push(t);
        }
    };
    let lead = rng.random_range(0..40);
    filler(&mut tokens, &mut rng, lead);
    let first_position = tokens.len();
    tokens.push(PLANTED_BIGRAM.0.into());
    tokens.push(PLANTED_BIGRAM.1.into());
    let gap = rng.random_range(short_window + 8..=2 * short_window + 8);
    filler(&mut tokens, &mut rng, gap);
    tokens.push(PLANTED_BIGRAM.0.into());
    let key_position = tokens.len();
    tokens.push(PLANTED_BIGRAM.1.into());
    let tail = rng.random_range(0..30);
    filler(&mut tokens, &mut rng, tail);
    PlantedRepeat {
        text: tokens.join(" "),
        first_position,
        key_position,
    }
}
