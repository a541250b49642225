//! Seeded synthetic corpus with two lexically distinct sources.
//!
//! "Machine" documents are filled-in templates over a small English
//! vocabulary (low entropy). "Human" documents are random sequences drawn
//! from a few thousand pseudo-words with irregular punctuation and spacing
//! (high entropy). Useful for smoke tests, benchmarks and demos; not a
//! stand-in for real detection data.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::corpus::{Document, Label};
use crate::seed::stream_rng;

const OPENERS: &[&str] = &[
    "In conclusion,",
    "Overall,",
    "Furthermore,",
    "Additionally,",
    "It is important to note that",
    "In today's world,",
    "Moreover,",
];
const SUBJECTS: &[&str] = &[
    "technology",
    "education",
    "the environment",
    "society",
    "innovation",
    "communication",
    "healthcare",
];
const VERBS: &[&str] = &[
    "plays a crucial role in",
    "has a significant impact on",
    "helps to improve",
    "is essential for",
    "can provide many benefits for",
];
const OBJECTS: &[&str] = &[
    "our daily lives",
    "the modern world",
    "future generations",
    "economic growth",
    "many people",
];

const ONSETS: &[&str] = &[
    "b", "br", "c", "ch", "d", "dr", "f", "g", "gl", "h", "j", "k", "kr", "l", "m", "n", "p", "pl", "qu", "r", "s",
    "sk", "st", "t", "th", "tr", "v", "w", "z",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "y"];
const CODAS: &[&str] = &["", "n", "m", "l", "r", "s", "x", "th", "nd", "rk"];

fn pseudo_vocabulary(size: usize, seed: u64) -> Vec<String> {
    let mut rng = stream_rng(seed, "synthetic/vocab", 0);
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}{}",
                    ONSETS.choose(&mut rng).unwrap(),
                    NUCLEI.choose(&mut rng).unwrap(),
                    CODAS.choose(&mut rng).unwrap()
                )
            })
            .collect();
        words.insert(w);
    }
    let mut v: Vec<String> = words.into_iter().collect();
    v.shuffle(&mut rng);
    v
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn machine_text<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(4..=8);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(if rng.random_bool(0.2) { "\n\n" } else { " " });
        }
        let opener = OPENERS.choose(rng).unwrap();
        let sentence = format!(
            "{opener} {} {} {}.",
            SUBJECTS.choose(rng).unwrap(),
            VERBS.choose(rng).unwrap(),
            OBJECTS.choose(rng).unwrap()
        );
        out.push_str(&capitalize(&sentence));
    }
    out
}

fn human_text<R: Rng>(rng: &mut R, vocab: &[String]) -> String {
    let n = rng.random_range(3..=8);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(match rng.random_range(0..10) {
                0 => "\n",
                1 => "  ",
                _ => " ",
            });
        }
        let len = rng.random_range(6..=16);
        let words: Vec<&str> = (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect();
        let mut sentence = capitalize(&words.join(" "));
        sentence.push(*['.', '.', '!', '?', ';'].choose(rng).unwrap());
        out.push_str(&sentence);
    }
    out
}

/// `n` documents alternating machine / human, ids `syn-00000`, ...
pub fn generate(n: usize, seed: u64) -> Vec<Document> {
    let vocab = pseudo_vocabulary(3000, seed);
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, "synthetic/doc", i as u64);
            let (label, text, generator) = if i % 2 == 0 {
                (Label::Machine, machine_text(&mut rng), "template-lm")
            } else {
                (Label::Human, human_text(&mut rng, &vocab), "human")
            };
            Document {
                generator: Some(generator.to_string()),
                source: Some("synthetic".to_string()),
                ..Document::new(format!("syn-{i:05}"), text, label)
            }
        })
        .collect()
}

/// Seeded shuffle-and-split; the first part gets `1 - holdout` of the data.
pub fn split_holdout(docs: &[Document], holdout: f64, seed: u64) -> (Vec<Document>, Vec<Document>) {
    let mut shuffled = docs.to_vec();
    shuffled.shuffle(&mut stream_rng(seed, "synthetic/split", 0));
    let cut = ((1.0 - holdout.clamp(0.0, 1.0)) * docs.len() as f64).round() as usize;
    let rest = shuffled.split_off(cut);
    (shuffled, rest)
}
