//! Subcommand implementations: run configuration, on-disk layout, and the
//! steps from mechanical data generation to evaluation.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtranslation::{
    corpus_buggy_seeds, fine_tune, run_loop, BtContext, BtState, FineTuneLog, IterationLog, LoopConfig,
};
use crate::corpus::{load_corpus, Direction, LoadedCorpus, SampleStore, StoreCount};
use crate::critics::{judge, CriticFamily, CriticKind, Evidence, FilterCounts, Polarity};
use crate::error::{Error, Result};
use crate::eval::{assess, evaluate, mechanical_tasks, repair, EvalReport, PatchAssessment, RepairTask};
use crate::generate::{propose, Proposal};
use crate::mechanical::{generate_mechanical_dataset, Rule};
use crate::minilang::{LineRegion, LocationSpan, SourceProgram, TestSuite, DEFAULT_FUEL};
use crate::model::{ModelConfig, Seq2Seq, TrainConfig};
use crate::representation::{RepresentationConfig, Vocab};
use crate::seeding::derive_seed;

/// Model dimensions; vocabulary size and sequence lengths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub dropout: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self { d_model: d.d_model, d_ff: d.d_ff, n_heads: d.n_heads, n_layers: d.n_layers, dropout: d.dropout }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MechanicalConfig {
    pub rules: Vec<Rule>,
    pub per_location_cap: usize,
}

impl Default for MechanicalConfig {
    fn default() -> Self {
        Self { rules: Rule::ALL.to_vec(), per_location_cap: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub beam: usize,
    pub fuel: u64,
    /// Evaluate on this many held-out mechanical bugs instead of the buggy corpus.
    pub heldout: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { beam: 100, fuel: DEFAULT_FUEL, heldout: None }
    }
}

/// Everything a subcommand needs. Component seeds are derived from `seed`
/// by [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub run_dir: PathBuf,
    /// Defaults to `<run_dir>/store.jsonl`.
    pub store: Option<PathBuf>,
    pub seed: u64,
    pub representation: RepresentationConfig,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub backtranslation: LoopConfig,
    pub mechanical: MechanicalConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("corpus"),
            run_dir: PathBuf::from("runs/default"),
            store: None,
            seed: 0,
            representation: RepresentationConfig::default(),
            model: ModelShape::default(),
            train: TrainConfig::default(),
            backtranslation: LoopConfig::default(),
            mechanical: MechanicalConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub critic: Option<CriticFamily>,
    pub iterations: Option<usize>,
    pub beam: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Apply flags, fill derived fields and validate.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(c) = o.critic {
            self.backtranslation.critic = c;
        }
        if let Some(n) = o.iterations {
            self.backtranslation.iterations = n;
        }
        if let Some(k) = o.beam {
            self.eval.beam = k;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if self.store.is_none() {
            self.store = Some(self.run_dir.join("store.jsonl"));
        }
        self.train.seed = derive_seed(self.seed, &["train"]);
        self.backtranslation.seed = derive_seed(self.seed, &["backtranslation"]);
        self.backtranslation.finetune.seed = self.backtranslation.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.representation.validate()?;
        self.train.validate()?;
        self.backtranslation.validate()?;
        if self.backtranslation.iterations == 0 {
            return Err(Error::Usage("iterations must be at least 1".into()));
        }
        if self.eval.beam == 0 {
            return Err(Error::Usage("beam width must be at least 1".into()));
        }
        if self.mechanical.per_location_cap == 0 {
            return Err(Error::Usage("per_location_cap must be at least 1".into()));
        }
        self.model_config(1, "check").validate()
    }

    pub fn store_path(&self) -> PathBuf {
        self.store.clone().unwrap_or_else(|| self.run_dir.join("store.jsonl"))
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.run_dir.join("vocab.json")
    }

    pub fn init_dir(&self) -> PathBuf {
        self.run_dir.join("init")
    }

    /// Full model configuration for one role (`fixer` or `breaker`).
    pub fn model_config(&self, vocab_size: usize, role: &str) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.model.d_model,
            d_ff: self.model.d_ff,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            dropout: self.model.dropout,
            max_source_len: self.representation.max_input_len,
            max_target_len: self.representation.max_target_len,
            seed: derive_seed(self.seed, &["model", role]),
        }
    }

    fn corpus(&self) -> Result<LoadedCorpus> {
        if !self.corpus_dir.is_dir() {
            return Err(Error::Data(format!("corpus directory {} does not exist", self.corpus_dir.display())));
        }
        let corpus = load_corpus(&self.corpus_dir)?;
        for r in &corpus.rejections {
            log::warn!("corpus entry {} rejected: {}", r.name, r.reason);
        }
        Ok(corpus)
    }

    /// Load the run's vocabulary, building it from the corpus the first time.
    fn vocab(&self, corpus: &LoadedCorpus) -> Result<Vocab> {
        let path = self.vocab_path();
        if path.exists() {
            return Vocab::load(&path);
        }
        let texts: Vec<&str> = corpus.entries.iter().map(|e| e.program.text.as_str()).collect();
        let vocab = Vocab::build(texts);
        ensure_dir(&self.run_dir)?;
        vocab.save(&path)?;
        Ok(vocab)
    }

    fn existing_store(&self) -> Result<SampleStore> {
        let path = self.store_path();
        if !path.exists() {
            return Err(Error::Data(format!("sample store {} does not exist; run gen-mechanical first", path.display())));
        }
        SampleStore::open(&path)
    }

    /// Write the resolved configuration next to a command's outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_json(&dir.join("config.json"), self)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("serializable value");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_model(path: &Path, vocab: &Vocab) -> Result<Seq2Seq> {
    let m = Seq2Seq::load(path)?;
    if m.config.vocab_size != vocab.len() {
        return Err(Error::Data(format!(
            "{} expects {} vocabulary entries, the run has {}",
            path.display(),
            m.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(m)
}

/// A unified-style single-hunk diff.
pub fn hunk_diff(name: &str, old: &str, old_region: LineRegion, new: &str, new_region: LineRegion) -> String {
    let mut out = format!(
        "--- {name}\n+++ {name}\n@@ -{},{} +{},{} @@\n",
        old_region.start, old_region.len, new_region.start, new_region.len
    );
    for l in old_region.split(old).1 {
        writeln!(out, "-{l}").expect("write to string");
    }
    for l in new_region.split(new).1 {
        writeln!(out, "+{l}").expect("write to string");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanicalSummary {
    pub locations: usize,
    pub bugs: usize,
    pub per_rule: BTreeMap<Rule, usize>,
    /// Bugs whose samples exceeded a length limit.
    pub rejected: usize,
    pub store_added: usize,
    pub store: Vec<StoreCount>,
}

/// Corrupt the correct corpus with the configured rules and fill the store.
/// Each bug's diff is written under `<run_dir>/mutants/`.
pub fn gen_mechanical(cfg: &RunConfig) -> Result<MechanicalSummary> {
    if cfg.mechanical.rules.is_empty() {
        return Err(Error::Usage("no corruption rules configured".into()));
    }
    let corpus = cfg.corpus()?;
    let vocab = cfg.vocab(&corpus)?;
    let correct = corpus.correct();
    if correct.is_empty() {
        return Err(Error::Data("the corpus has no correct programs".into()));
    }
    let ds = generate_mechanical_dataset(
        &correct,
        &cfg.mechanical.rules,
        cfg.mechanical.per_location_cap,
        derive_seed(cfg.seed, &["mechanical"]),
        &vocab,
        &cfg.representation,
    );
    let mut store = SampleStore::open(&cfg.store_path())?;
    let added = store.append(ds.samples.clone())?;
    let mutants = cfg.run_dir.join("mutants");
    ensure_dir(&mutants)?;
    for b in &ds.bugs {
        let file = format!("{}.L{}-{}.{}.diff", b.base, b.span.start_line, b.span.end_line, b.rule);
        write_text(&mutants.join(file), &b.diff())?;
    }
    let summary = MechanicalSummary {
        locations: ds.locations,
        bugs: ds.bugs.len(),
        per_rule: ds.per_rule(),
        rejected: ds.rejected.len(),
        store_added: added,
        store: store.counts(),
    };
    write_json(&mutants.join("summary.json"), &summary)?;
    cfg.echo(&cfg.run_dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSummary {
    pub fixer: FineTuneLog,
    pub breaker: FineTuneLog,
}

/// Train a fixer and a breaker from scratch on the store; writes
/// `<run_dir>/init/{fixer,breaker}.ckpt` and `curves.json`.
pub fn init_train(cfg: &RunConfig) -> Result<InitSummary> {
    let corpus = cfg.corpus()?;
    let vocab = cfg.vocab(&corpus)?;
    let store = cfg.existing_store()?;
    let dir = cfg.init_dir();
    ensure_dir(&dir)?;
    let mut logs = Vec::new();
    for (direction, role) in [(Direction::Fix, "fixer"), (Direction::Break, "breaker")] {
        let n = store.select(direction, true).len();
        if n < 2 {
            return Err(Error::Data(format!("the store holds {n} {direction:?} samples; at least 2 are needed")));
        }
        let mut model = Seq2Seq::new(cfg.model_config(vocab.len(), role))?;
        let seed = derive_seed(cfg.seed, &["init", role]);
        let log = fine_tune(&mut model, &store, direction, true, &cfg.train, cfg.backtranslation.holdout_fraction, seed)?;
        model.save(&dir.join(format!("{role}.ckpt")))?;
        logs.push(log);
    }
    let breaker = logs.pop().expect("two logs");
    let fixer = logs.pop().expect("two logs");
    let summary = InitSummary { fixer, breaker };
    write_json(&dir.join("curves.json"), &summary)?;
    cfg.echo(&dir)?;
    Ok(summary)
}

/// Run the back-translation loop from the initial checkpoints. The store is
/// copied into `out` first so that runs from the same start stay independent.
pub fn backtranslate(cfg: &RunConfig, out: &Path) -> Result<Vec<IterationLog>> {
    let corpus = cfg.corpus()?;
    let vocab = cfg.vocab(&corpus)?;
    let base = cfg.existing_store()?;
    let init = cfg.init_dir();
    let fixer = load_model(&init.join("fixer.ckpt"), &vocab)?;
    let breaker = load_model(&init.join("breaker.ckpt"), &vocab)?;
    ensure_dir(out)?;
    cfg.echo(out)?;
    let store_path = out.join("store.jsonl");
    if store_path.exists() {
        std::fs::remove_file(&store_path).map_err(|e| Error::io(&store_path, e))?;
    }
    let mut store = SampleStore::open(&store_path)?;
    store.append(base.samples().to_vec())?;
    let ctx = BtContext::new(&corpus, &vocab, cfg.representation);
    let mut state = BtState { fixer, breaker, buggy_seeds: corpus_buggy_seeds(&corpus) };
    let logs = run_loop(&ctx, &mut state, &mut store, &cfg.backtranslation, Some(out))?;
    state.fixer.save(&out.join("fixer.ckpt"))?;
    state.breaker.save(&out.join("breaker.ckpt"))?;
    Ok(logs)
}

/// The configured evaluation tasks: the buggy corpus, or held-out mechanical
/// bugs absent from the store.
pub fn eval_tasks(cfg: &RunConfig, corpus: &LoadedCorpus, vocab: &Vocab) -> Result<Vec<RepairTask>> {
    match cfg.eval.heldout {
        None => Ok(corpus.buggy().into_iter().filter_map(RepairTask::from_entry).collect()),
        Some(n) => {
            let store = cfg.existing_store()?;
            Ok(mechanical_tasks(
                &corpus.correct(),
                &cfg.mechanical.rules,
                derive_seed(cfg.seed, &["heldout"]),
                &store,
                vocab,
                &cfg.representation,
                cfg.eval.fuel,
                n,
            ))
        }
    }
}

/// Evaluate a fixer checkpoint; writes `report.json`, `report.csv` and `review/` into `out`.
pub fn evaluate_model(cfg: &RunConfig, model: &Path, out: &Path) -> Result<EvalReport> {
    let corpus = cfg.corpus()?;
    let vocab = cfg.vocab(&corpus)?;
    let fixer = load_model(model, &vocab)?;
    let tasks = eval_tasks(cfg, &corpus, &vocab)?;
    let report = evaluate(&fixer, &vocab, &cfg.representation, &tasks, cfg.eval.beam, cfg.eval.fuel)?;
    report.write(out)?;
    cfg.echo(out)?;
    Ok(report)
}

/// Parse `a` or `a-b` (1-based, inclusive).
pub fn parse_span(s: &str) -> Result<LocationSpan> {
    let bad = || Error::Usage(format!("bad span '{s}', expected LINE or START-END"));
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b < a {
        return Err(bad());
    }
    Ok(LocationSpan::new(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRequest {
    pub program: PathBuf,
    pub span: LocationSpan,
    /// Defaults to `<program stem>.tests.json` beside the program.
    pub suite: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

/// Repair one program at a given span; each candidate is written to `out/rank<r>.jay`.
pub fn repair_program(
    cfg: &RunConfig,
    req: &RepairRequest,
    model: &Path,
    out: &Path,
) -> Result<Vec<(Proposal, PatchAssessment)>> {
    let text = std::fs::read_to_string(&req.program).map_err(|e| Error::io(&req.program, e))?;
    let lines = text.lines().count();
    if req.span.end_line > lines {
        return Err(Error::Usage(format!("span {} lies outside the {lines}-line program", req.span)));
    }
    let suite_path = req.suite.clone().unwrap_or_else(|| {
        let stem = req.program.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        req.program.with_file_name(format!("{stem}.tests.json"))
    });
    let suite = TestSuite::load(&suite_path).map_err(|e| Error::io(&suite_path, e))?;
    let reference = match &req.reference {
        None => None,
        Some(p) => {
            let t = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(
                SourceProgram::new("reference", t)
                    .compile()
                    .map_err(|d| Error::Data(format!("reference fix does not compile: {}", d[0])))?,
            )
        }
    };
    let corpus = cfg.corpus()?;
    let vocab = cfg.vocab(&corpus)?;
    let fixer = load_model(model, &vocab)?;
    let name = req.program.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "program".into());
    let task = RepairTask {
        name,
        buggy: SourceProgram::new("program", text),
        region: LineRegion::from_span(req.span),
        reference,
        suite,
    };
    let cands = repair(&fixer, &vocab, &cfg.representation, &task, cfg.eval.beam)?;
    let verdicts = assess(&cands, &task, cfg.eval.fuel);
    ensure_dir(out)?;
    for c in &cands {
        write_text(&out.join(format!("rank{}.jay", c.rank)), &c.text)?;
    }
    write_json(&out.join("verdicts.json"), &verdicts)?;
    Ok(cands.into_iter().zip(verdicts).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugRecord {
    /// File name of the buggy program, relative to the output directory.
    pub file: String,
    pub base: String,
    pub span: LocationSpan,
    pub region: LineRegion,
    pub rank: usize,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenBugsSummary {
    pub critic: CriticFamily,
    pub locations: usize,
    pub k_buggy: usize,
    /// Locations whose input did not fit the representation.
    pub unrepresentable: usize,
    /// Candidates generated, before judgment and deduplication.
    pub generated: usize,
    pub critic_counts: FilterCounts,
    /// Accepted candidates after removing duplicate programs.
    pub emitted: usize,
}

/// Generate a bug corpus with a breaker checkpoint. Writes each accepted bug
/// as `<file>.jay` plus `<file>.diff`, and `bugs.json`, `summary.json`.
pub fn gen_bugs(cfg: &RunConfig, model: &Path, out: &Path, k_buggy: usize) -> Result<(GenBugsSummary, Vec<BugRecord>)> {
    if k_buggy == 0 {
        return Err(Error::Usage("beam width must be at least 1".into()));
    }
    let corpus = cfg.corpus()?;
    let vocab = cfg.vocab(&corpus)?;
    let breaker = load_model(model, &vocab)?;
    let ctx = BtContext::new(&corpus, &vocab, cfg.representation);
    let mut sites = Vec::new();
    for (prog, suite, spans) in &ctx.correct {
        for span in spans {
            sites.push((prog, *suite, *span));
        }
    }
    let critic = cfg.backtranslation.critic;
    let kind = CriticKind::new(critic, Polarity::BuggyCode);
    let fuel = cfg.backtranslation.fuel;
    let judged: Vec<Option<Vec<(Proposal, crate::critics::CriticVerdict)>>> = sites
        .par_iter()
        .map(|(prog, suite, span)| {
            let props = propose(&breaker, &vocab, &cfg.representation, &prog.text, LineRegion::from_span(*span), k_buggy)?;
            Ok(props.ok().map(|ps| {
                ps.into_iter()
                    .map(|p| {
                        let v = judge(kind, &SourceProgram::new(prog.name.as_str(), p.text.as_str()), suite, fuel);
                        (p, v)
                    })
                    .collect()
            }))
        })
        .collect::<Result<_>>()?;
    ensure_dir(out)?;
    let mut summary = GenBugsSummary {
        critic,
        locations: sites.len(),
        k_buggy,
        unrepresentable: 0,
        generated: 0,
        critic_counts: FilterCounts::default(),
        emitted: 0,
    };
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for ((prog, _, span), j) in sites.iter().zip(judged) {
        let Some(cands) = j else {
            summary.unrepresentable += 1;
            continue;
        };
        for (p, v) in cands {
            summary.generated += 1;
            summary.critic_counts.add(&v);
            if !v.accept || !seen.insert(p.text.clone()) {
                continue;
            }
            let file = format!("{}.L{}-{}.r{}", prog.name, span.start_line, span.end_line, p.rank);
            write_text(&out.join(format!("{file}.jay")), &p.text)?;
            let diff = hunk_diff(&prog.name, &prog.text, LineRegion::from_span(*span), &p.text, p.region);
            write_text(&out.join(format!("{file}.diff")), &diff)?;
            records.push(BugRecord {
                file: format!("{file}.jay"),
                base: prog.name.clone(),
                span: *span,
                region: p.region,
                rank: p.rank,
                evidence: v.evidence,
            });
        }
    }
    summary.emitted = records.len();
    if summary.emitted == 0 {
        log::warn!("gen-bugs emitted no bugs");
    }
    write_json(&out.join("bugs.json"), &records)?;
    write_json(&out.join("summary.json"), &summary)?;
    cfg.echo(out)?;
    Ok((summary, records))
}
