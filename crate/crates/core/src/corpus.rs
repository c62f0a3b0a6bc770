//! On-disk datasets: the seed corpus, holdout splitting, and the persistent
//! append-only sample store.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::minilang::{
    self, run_tests, LocationSpan, Program, SourceProgram, TestSuite, DEFAULT_FUEL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Correct,
    Buggy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_fix: Option<PathBuf>,
    /// Hand-counted number of statements, recorded when the program was authored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statements: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub program: SourceProgram,
    pub ast: Program,
    pub suite: TestSuite,
    pub status: Status,
    pub reference_fix: Option<SourceProgram>,
    pub declared_statements: Option<usize>,
}

/// Why a manifest entry was not loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub entries: Vec<CorpusEntry>,
    pub rejections: Vec<Rejection>,
}

impl LoadedCorpus {
    pub fn correct(&self) -> Vec<&CorpusEntry> {
        self.entries.iter().filter(|e| e.status == Status::Correct).collect()
    }

    pub fn buggy(&self) -> Vec<&CorpusEntry> {
        self.entries.iter().filter(|e| e.status == Status::Buggy).collect()
    }
}

/// Load `dir/manifest.json` and every program it lists, keeping only entries
/// whose status can be reproduced by the compile and test oracles. A
/// directory without a manifest is an empty corpus.
pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Ok(LoadedCorpus::default());
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for m in manifest {
        if !seen.insert(m.name.clone()) {
            out.rejections.push(Rejection { name: m.name, reason: "duplicate name".into() });
            continue;
        }
        match load_entry(dir, &m) {
            Ok(entry) => out.entries.push(entry),
            Err(reason) => out.rejections.push(Rejection { name: m.name, reason }),
        }
    }
    Ok(out)
}

fn load_entry(dir: &Path, m: &ManifestEntry) -> std::result::Result<CorpusEntry, String> {
    let program_path = dir.join(format!("{}.jay", m.name));
    let text = std::fs::read_to_string(&program_path)
        .map_err(|e| format!("cannot read {}: {e}", program_path.display()))?;
    let suite_path = dir.join(format!("{}.tests.json", m.name));
    let suite_text = std::fs::read_to_string(&suite_path)
        .map_err(|e| format!("missing suite {}: {e}", suite_path.display()))?;
    let suite = TestSuite::from_json(&suite_text)
        .map_err(|e| format!("malformed suite {}: {e}", suite_path.display()))?;
    let program = SourceProgram::new(m.name.clone(), text);
    let ast = program
        .compile()
        .map_err(|d| format!("does not compile: {}", d[0]))?;
    check_suite(&ast, &suite)?;
    let report = run_tests(&ast, &suite, DEFAULT_FUEL);
    match m.status {
        Status::Correct if !report.all_pass() => {
            return Err(format!("marked correct but {} of {} tests fail", report.failures(), suite.cases.len()))
        }
        Status::Buggy if report.all_pass() => return Err("marked buggy but every test passes".into()),
        _ => {}
    }
    let reference_fix = match &m.reference_fix {
        None => None,
        Some(rel) => {
            let path = dir.join(rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read reference fix {}: {e}", path.display()))?;
            let fix = SourceProgram::new(m.name.clone(), text);
            let fix_ast = fix.compile().map_err(|d| format!("reference fix does not compile: {}", d[0]))?;
            if !run_tests(&fix_ast, &suite, DEFAULT_FUEL).all_pass() {
                return Err("reference fix fails its tests".into());
            }
            Some(fix)
        }
    };
    Ok(CorpusEntry {
        program,
        ast,
        suite,
        status: m.status,
        reference_fix,
        declared_statements: m.statements,
    })
}

fn check_suite(ast: &Program, suite: &TestSuite) -> std::result::Result<(), String> {
    if suite.cases.is_empty() {
        return Err("empty test suite".into());
    }
    let mut ids = HashSet::new();
    for c in &suite.cases {
        if !ids.insert(&c.id) {
            return Err(format!("duplicate test id `{}`", c.id));
        }
        if ast.function(&c.entry).is_none() {
            return Err(format!("test `{}` calls missing function `{}`", c.id, c.entry));
        }
    }
    Ok(())
}

/// Deterministic disjoint split. The validation part has
/// `max(1, round(fraction * n))` items; both parts keep input order.
pub fn split_holdout<T: Clone>(samples: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if samples.is_empty() {
        return Err(Error::Data("cannot split an empty sample list".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Usage(format!("holdout fraction {fraction} not in (0, 1)")));
    }
    let n = samples.len();
    let n_val = ((fraction * n as f64).round() as usize).max(1).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &idx[..n_val] {
        is_val[i] = true;
    }
    let mut train = Vec::with_capacity(n - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (s, v) in samples.iter().zip(is_val) {
        if v {
            val.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// buggy -> correct
    Fix,
    /// correct -> buggy
    Break,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Mechanical,
    BackTranslation { iteration: u32 },
}

impl Origin {
    pub fn label(&self) -> String {
        match self {
            Origin::Mechanical => "mechanical".into(),
            Origin::BackTranslation { iteration } => format!("backtranslation:{iteration}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub direction: Direction,
    pub input_tokens: Vec<u32>,
    pub target_tokens: Vec<u32>,
    pub origin: Origin,
    pub source_program: String,
    /// Statement location in the correct base program.
    pub span: LocationSpan,
}

pub type SampleKey = [u8; 32];

impl TrainingSample {
    /// Content hash over (direction, input, target). Provenance is not part of it.
    pub fn key(&self) -> SampleKey {
        let mut h = Sha256::new();
        h.update([match self.direction {
            Direction::Fix => 0u8,
            Direction::Break => 1u8,
        }]);
        h.update((self.input_tokens.len() as u64).to_le_bytes());
        for t in &self.input_tokens {
            h.update(t.to_le_bytes());
        }
        h.update((self.target_tokens.len() as u64).to_le_bytes());
        for t in &self.target_tokens {
            h.update(t.to_le_bytes());
        }
        h.finalize().into()
    }
}

pub const STORE_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    format: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StoreRecord {
    Sample(TrainingSample),
    Commit(usize),
}

/// Append-only, deduplicated collection of training samples, optionally
/// backed by a file.
///
/// File layout: a header line `{"format": 1}`, then records of the form
/// `<byte length>\t<json>\n`. Each appended batch ends with a commit record;
/// records after the last commit are ignored on load.
#[derive(Debug, Default)]
pub struct SampleStore {
    path: Option<PathBuf>,
    samples: Vec<TrainingSample>,
    keys: HashSet<SampleKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCount {
    pub direction: Direction,
    pub origin: Origin,
    pub count: usize,
}

impl SampleStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open a store file, creating it with a header when missing.
    pub fn open(path: &Path) -> Result<Self> {
        let mut store = SampleStore { path: Some(path.to_path_buf()), ..Default::default() };
        if !path.exists() {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
            let header = serde_json::to_string(&StoreHeader { format: STORE_FORMAT }).expect("header");
            writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
            f.sync_all().map_err(|e| Error::io(path, e))?;
            return Ok(store);
        }
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (header_line, mut rest) = content
            .split_once('\n')
            .ok_or_else(|| Error::Data(format!("{}: missing store header", path.display())))?;
        let header: StoreHeader = serde_json::from_str(header_line).map_err(|e| Error::json(path, e))?;
        if header.format != STORE_FORMAT {
            return Err(Error::Data(format!("{}: unsupported store format {}", path.display(), header.format)));
        }
        let mut offset = header_line.len() + 1;
        let mut committed = offset;
        let mut pending = Vec::new();
        while let Some((line, tail)) = rest.split_once('\n') {
            let Some((len, json)) = line.split_once('\t') else { break };
            if len.parse::<usize>().ok() != Some(json.len()) {
                break;
            }
            match serde_json::from_str::<StoreRecord>(json) {
                Ok(StoreRecord::Sample(s)) => pending.push(s),
                Ok(StoreRecord::Commit(n)) if n == pending.len() => {
                    for s in pending.drain(..) {
                        if store.keys.insert(s.key()) {
                            store.samples.push(s);
                        }
                    }
                    committed = offset + line.len() + 1;
                }
                _ => break,
            }
            offset += line.len() + 1;
            rest = tail;
        }
        if committed < content.len() {
            log::warn!("{}: dropping {} bytes of uncommitted records", path.display(), content.len() - committed);
            let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
            f.set_len(committed as u64).map_err(|e| Error::io(path, e))?;
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn contains(&self, sample: &TrainingSample) -> bool {
        self.keys.contains(&sample.key())
    }

    /// Add the samples not already present. Persisted before returning.
    pub fn append(&mut self, batch: Vec<TrainingSample>) -> Result<usize> {
        let mut fresh = Vec::new();
        let mut batch_keys = HashSet::new();
        for s in batch {
            let k = s.key();
            if !self.keys.contains(&k) && batch_keys.insert(k) {
                fresh.push(s);
            }
        }
        if fresh.is_empty() {
            return Ok(0);
        }
        if let Some(path) = &self.path {
            let mut buf = String::new();
            for s in &fresh {
                push_record(&mut buf, &StoreRecord::Sample(s.clone()));
            }
            push_record(&mut buf, &StoreRecord::Commit(fresh.len()));
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
            f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
            f.sync_data().map_err(|e| Error::io(path, e))?;
        }
        let added = fresh.len();
        self.keys.extend(batch_keys);
        self.samples.extend(fresh);
        Ok(added)
    }

    /// Samples of one direction, optionally excluding mechanical ones.
    pub fn select(&self, direction: Direction, include_mechanical: bool) -> Vec<&TrainingSample> {
        self.samples
            .iter()
            .filter(|s| s.direction == direction)
            .filter(|s| include_mechanical || s.origin != Origin::Mechanical)
            .collect()
    }

    pub fn count(&self, direction: Direction) -> usize {
        self.samples.iter().filter(|s| s.direction == direction).count()
    }

    /// Sample counts per (direction, origin), in sorted order.
    pub fn counts(&self) -> Vec<StoreCount> {
        let mut m: BTreeMap<(Direction, Origin), usize> = BTreeMap::new();
        for s in &self.samples {
            *m.entry((s.direction, s.origin)).or_default() += 1;
        }
        m.into_iter().map(|((direction, origin), count)| StoreCount { direction, origin, count }).collect()
    }
}

fn push_record(buf: &mut String, rec: &StoreRecord) {
    let json = serde_json::to_string(rec).expect("serializable record");
    buf.push_str(&json.len().to_string());
    buf.push('\t');
    buf.push_str(&json);
    buf.push('\n');
}

/// Number of statement locations in a parsed program.
pub fn statement_count(ast: &Program) -> usize {
    minilang::enumerate_statement_locations(ast).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: u32, direction: Direction) -> TrainingSample {
        TrainingSample {
            direction,
            input_tokens: vec![i, i + 1],
            target_tokens: vec![i, 2],
            origin: Origin::Mechanical,
            source_program: "p".into(),
            span: LocationSpan::line(1),
        }
    }

    #[test]
    fn holdout_sizes() {
        let items: Vec<u32> = (0..1000).collect();
        let (t, v) = split_holdout(&items, 0.02, 1).unwrap();
        assert_eq!((t.len(), v.len()), (980, 20));
        let items: Vec<u32> = (0..10).collect();
        let (t, v) = split_holdout(&items, 0.02, 1).unwrap();
        assert_eq!((t.len(), v.len()), (9, 1));
    }

    #[test]
    fn holdout_is_deterministic_and_disjoint() {
        let items: Vec<u32> = (0..200).collect();
        let a = split_holdout(&items, 0.1, 42).unwrap();
        let b = split_holdout(&items, 0.1, 42).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<u32> = a.0.iter().chain(&a.1).copied().collect();
        all.sort();
        assert_eq!(all, items);
        let c = split_holdout(&items, 0.1, 43).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn holdout_rejects_empty() {
        assert!(split_holdout::<u32>(&[], 0.02, 0).is_err());
    }

    #[test]
    fn dedup_and_counts() {
        let mut store = SampleStore::in_memory();
        let batch: Vec<_> = (0..5).map(|i| sample(i * 10, Direction::Fix)).collect();
        assert_eq!(store.append(batch.clone()).unwrap(), 5);
        assert_eq!(store.append(batch).unwrap(), 0);
        let more: Vec<_> = (0..7).map(|i| sample(i * 10 + 100, Direction::Fix)).collect();
        assert_eq!(store.append(more).unwrap(), 7);
        assert_eq!(store.len(), 12);
        // same text pair, other direction, is a distinct sample
        assert_eq!(store.append(vec![sample(0, Direction::Break)]).unwrap(), 1);
        assert_eq!(store.count(Direction::Fix), 12);
        assert_eq!(store.counts().len(), 2);
    }

    #[test]
    fn persisted_store_reloads_and_ignores_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        {
            let mut store = SampleStore::open(&path).unwrap();
            store.append((0..3).map(|i| sample(i, Direction::Fix)).collect()).unwrap();
            store.append((0..2).map(|i| sample(i, Direction::Break)).collect()).unwrap();
        }
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with("{\"format\":1}\n"));
        // simulate a crash in the middle of a batch
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        let mut buf = String::new();
        push_record(&mut buf, &StoreRecord::Sample(sample(77, Direction::Fix)));
        f.write_all(buf.as_bytes()).unwrap();
        f.write_all(b"12\t{\"sam").unwrap();
        drop(f);
        let mut store = SampleStore::open(&path).unwrap();
        assert_eq!(store.len(), 5);
        assert_eq!(store.samples()[3], sample(0, Direction::Break));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
        store.append(vec![sample(50, Direction::Fix)]).unwrap();
        assert_eq!(SampleStore::open(&path).unwrap().len(), 6);
    }
}
