#![allow(dead_code)]

use std::path::PathBuf;

use jay_repair::corpus::{load_corpus, LoadedCorpus};
use jay_repair::representation::Vocab;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus() -> LoadedCorpus {
    load_corpus(&corpus_dir()).expect("seed corpus loads")
}

pub fn vocab(c: &LoadedCorpus) -> Vocab {
    Vocab::build(c.entries.iter().map(|e| e.program.text.as_str()))
}
