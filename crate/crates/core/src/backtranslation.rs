//! The fixer/breaker back-translation loop.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_holdout, Direction, LoadedCorpus, Origin, SampleStore, StoreCount};
use crate::critics::{filter, CriticFamily, CriticKind, FilterCounts, Polarity};
use crate::error::{Error, Result};
use crate::generate::{propose, Proposal};
use crate::minilang::{
    diff_hunk, enumerate_statement_locations, pretty_print, LineRegion, LocationSpan, SourceProgram, TestSuite,
    DEFAULT_FUEL,
};
use crate::model::{train, Seq2Seq, TrainConfig, TrainOutcome};
use crate::representation::{build_sample, RepresentationConfig, Vocab};
use crate::seeding::{derive_seed, derived_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub iterations: usize,
    /// Fixer beams per buggy seed.
    pub k_correct: usize,
    /// Breaker beams per statement location.
    pub k_buggy: usize,
    pub critic: CriticFamily,
    pub fuel: u64,
    pub seed: u64,
    /// Whether fine-tuning also sees the mechanical samples.
    pub include_mechanical: bool,
    pub holdout_fraction: f64,
    /// Seeded subsample of breaker input locations per iteration.
    pub location_cap: Option<usize>,
    /// Seeded subsample of fixer inputs per iteration.
    pub buggy_seed_cap: Option<usize>,
    /// Keep every judged candidate batch in the iteration log.
    pub record_batches: bool,
    pub finetune: TrainConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            k_correct: 10,
            k_buggy: 1,
            critic: CriticFamily::Tests,
            fuel: DEFAULT_FUEL,
            seed: 0,
            include_mechanical: true,
            holdout_fraction: 0.02,
            location_cap: None,
            buggy_seed_cap: None,
            record_batches: false,
            finetune: TrainConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_correct == 0 || self.k_buggy == 0 {
            return Err(Error::Usage("beam widths must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Usage(format!("holdout fraction {} not in (0, 1)", self.holdout_fraction)));
        }
        self.finetune.validate()
    }
}

/// A buggy program the fixer is asked to repair, with its known fault region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuggySeed {
    /// Program whose test suite judges candidates.
    pub base: String,
    pub program: SourceProgram,
    pub region: LineRegion,
    pub span: LocationSpan,
    /// 0 for corpus programs, otherwise the iteration that accepted the bug.
    pub iteration: u32,
}

/// Buggy corpus programs that carry a reference fix, localized by diffing against it.
pub fn corpus_buggy_seeds(corpus: &LoadedCorpus) -> Vec<BuggySeed> {
    let mut out = Vec::new();
    for e in corpus.buggy() {
        let Some(fix) = &e.reference_fix else {
            log::warn!("buggy program {} has no reference fix and cannot seed the fixer", e.program.name);
            continue;
        };
        let (region, fix_region) = diff_hunk(&e.program.text, &fix.text);
        if region.len == 0 && fix_region.len == 0 {
            continue;
        }
        let span = region.to_span().unwrap_or_else(|| LocationSpan::line(region.start));
        out.push(BuggySeed { base: e.program.name.clone(), program: e.program.clone(), region, span, iteration: 0 });
    }
    out
}

/// Data shared by every iteration.
pub struct BtContext<'a> {
    /// Correct programs in canonical layout, with their suites.
    pub correct: Vec<(SourceProgram, &'a TestSuite, Vec<LocationSpan>)>,
    pub suites: BTreeMap<String, &'a TestSuite>,
    pub vocab: &'a Vocab,
    pub repr: RepresentationConfig,
}

impl<'a> BtContext<'a> {
    pub fn new(corpus: &'a LoadedCorpus, vocab: &'a Vocab, repr: RepresentationConfig) -> Self {
        let correct = corpus
            .correct()
            .into_iter()
            .map(|e| (pretty_print(&e.program.name, &e.ast), &e.suite, enumerate_statement_locations(&e.ast)))
            .collect();
        let suites = corpus.entries.iter().map(|e| (e.program.name.clone(), &e.suite)).collect();
        Self { correct, suites, vocab, repr }
    }
}

/// Models and fixer inputs carried from one iteration to the next.
pub struct BtState {
    pub fixer: Seq2Seq,
    pub breaker: Seq2Seq,
    pub buggy_seeds: Vec<BuggySeed>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub inputs: usize,
    /// Inputs whose marked region did not fit the input budget.
    pub unrepresentable: usize,
    pub generated: usize,
    /// Fixer outputs identical to their buggy input.
    pub identical_discarded: usize,
    pub critic: FilterCounts,
    pub samples_built: usize,
    /// Accepted candidates whose sample exceeded a length limit.
    pub samples_rejected: usize,
    pub store_added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneLog {
    pub direction: Direction,
    /// Why fine-tuning did not run, if it did not.
    pub skipped: Option<String>,
    pub train_size: usize,
    pub val_size: usize,
    pub holdout_seed: u64,
    pub outcome: Option<TrainOutcome>,
}

/// One judged batch: the candidates generated for a single input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub polarity: Polarity,
    pub base: String,
    pub candidates: Vec<SourceProgram>,
    /// Indices into `candidates` that the critic kept.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub fixer_generation_ms: u64,
    pub breaker_finetune_ms: u64,
    pub breaker_generation_ms: u64,
    pub fixer_finetune_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u32,
    pub critic: CriticFamily,
    pub fixer_generation: GenerationLog,
    pub breaker_finetune: FineTuneLog,
    pub breaker_generation: GenerationLog,
    pub fixer_finetune: FineTuneLog,
    pub new_buggy_seeds: usize,
    pub buggy_seeds_total: usize,
    pub store_before: Vec<StoreCount>,
    pub store_after: Vec<StoreCount>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<BatchRecord>,
    /// Not deterministic; ignore when comparing runs.
    pub wall_clock: PhaseTiming,
}

impl IterationLog {
    /// The log with timing zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> IterationLog {
        IterationLog { wall_clock: PhaseTiming::default(), ..self.clone() }
    }
}

fn subsample<T: Clone>(items: Vec<T>, cap: Option<usize>, seed: u64, labels: &[&str]) -> Vec<T> {
    match cap {
        Some(cap) if cap < items.len() => {
            let mut idx = sample(&mut derived_rng(seed, labels), items.len(), cap).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| items[i].clone()).collect()
        }
        _ => items,
    }
}

/// Fine-tune `model` on every stored sample of `direction`, holding out a fresh
/// seeded fraction for early stopping.
pub fn fine_tune(
    model: &mut Seq2Seq,
    store: &SampleStore,
    direction: Direction,
    include_mechanical: bool,
    cfg: &TrainConfig,
    holdout_fraction: f64,
    seed: u64,
) -> Result<FineTuneLog> {
    let samples = store.select(direction, include_mechanical);
    let holdout_seed = derive_seed(seed, &["holdout"]);
    let mut log =
        FineTuneLog { direction, skipped: None, train_size: 0, val_size: 0, holdout_seed, outcome: None };
    if samples.len() < 2 {
        log.skipped = Some(format!("only {} samples", samples.len()));
        return Ok(log);
    }
    let (tr, val) = split_holdout(&samples, holdout_fraction, holdout_seed)?;
    log.train_size = tr.len();
    log.val_size = val.len();
    log::info!("fine-tuning {direction:?} on {} samples, holdout seed {holdout_seed}", tr.len());
    let cfg = TrainConfig { seed: derive_seed(seed, &["train"]), ..cfg.clone() };
    log.outcome = Some(train(model, &tr, &val, &cfg)?);
    Ok(log)
}

struct Judged {
    log: GenerationLog,
    kept: Vec<(usize, Proposal)>,
    batches: Vec<BatchRecord>,
}

/// Generate for each input in parallel, then judge each input's candidates as one batch.
fn generate_and_judge(
    ctx: &BtContext<'_>,
    model: &Seq2Seq,
    inputs: &[(String, &TestSuite, &str, LineRegion)],
    k: usize,
    kind: CriticKind,
    cfg: &LoopConfig,
) -> Result<Judged> {
    let proposals: Vec<_> = inputs
        .par_iter()
        .map(|(_, _, text, region)| propose(model, ctx.vocab, &ctx.repr, text, *region, k))
        .collect::<Result<_>>()?;
    let mut out = Judged { log: GenerationLog { inputs: inputs.len(), ..Default::default() }, kept: vec![], batches: vec![] };
    for (i, (props, (base, suite, text, _))) in proposals.into_iter().zip(inputs).enumerate() {
        let Ok(props) = props else {
            out.log.unrepresentable += 1;
            continue;
        };
        out.log.generated += props.len();
        let mut candidates = Vec::new();
        for p in props {
            if kind.polarity == Polarity::CorrectCode && p.text == *text {
                out.log.identical_discarded += 1;
                continue;
            }
            candidates.push((SourceProgram::new(format!("{base}#{}", p.rank), p.text.clone()), p));
        }
        let all: Vec<SourceProgram> =
            if cfg.record_batches { candidates.iter().map(|c| c.0.clone()).collect() } else { vec![] };
        let ranks: Vec<usize> = candidates.iter().map(|c| c.1.rank).collect();
        let (kept, counts) = filter(kind, candidates, suite, cfg.fuel);
        out.log.critic.merge(&counts);
        if cfg.record_batches {
            let kept_idx = kept.iter().map(|k| ranks.iter().position(|&r| r == k.1.rank).expect("kept rank")).collect();
            out.batches.push(BatchRecord { polarity: kind.polarity, base: base.clone(), candidates: all, kept: kept_idx });
        }
        out.kept.extend(kept.into_iter().map(|(_, p, _)| (i, p)));
    }
    Ok(out)
}

/// One full iteration: fixer generation, critic, Break samples, breaker
/// fine-tuning, breaker generation, critic, Fix samples, fixer fine-tuning.
pub fn bt_iteration(
    iteration: u32,
    ctx: &BtContext<'_>,
    state: &mut BtState,
    store: &mut SampleStore,
    cfg: &LoopConfig,
) -> Result<IterationLog> {
    cfg.validate()?;
    let it = iteration.to_string();
    let store_before = store.counts();
    let mut timing = PhaseTiming::default();
    let origin = Origin::BackTranslation { iteration };

    // fixer proposes correct programs for buggy seeds
    let t = Instant::now();
    let seeds = subsample(state.buggy_seeds.clone(), cfg.buggy_seed_cap, cfg.seed, &["buggy-seeds", &it]);
    let mut inputs = Vec::with_capacity(seeds.len());
    for s in &seeds {
        let suite = ctx
            .suites
            .get(&s.base)
            .ok_or_else(|| Error::Data(format!("no test suite for base program {}", s.base)))?;
        inputs.push((s.base.clone(), *suite, s.program.text.as_str(), s.region));
    }
    let kind = CriticKind::new(cfg.critic, Polarity::CorrectCode);
    let judged = generate_and_judge(ctx, &state.fixer, &inputs, cfg.k_correct, kind, cfg)?;
    let mut fixer_generation = judged.log;
    let mut batches = judged.batches;
    let mut break_samples = Vec::new();
    for (i, p) in judged.kept {
        let s = &seeds[i];
        let span = p.region.to_span().unwrap_or_else(|| LocationSpan::line(p.region.start));
        match build_sample(
            ctx.vocab, &ctx.repr, Direction::Break, &p.text, p.region, &s.program.text, s.region, origin, &s.base, span,
        ) {
            Ok(sample) => break_samples.push(sample),
            Err(_) => fixer_generation.samples_rejected += 1,
        }
    }
    fixer_generation.samples_built = break_samples.len();
    fixer_generation.store_added = store.append(break_samples)?;
    timing.fixer_generation_ms = t.elapsed().as_millis() as u64;

    let t = Instant::now();
    let breaker_finetune = if fixer_generation.samples_built == 0 {
        skipped(Direction::Break, "no accepted fixer output")
    } else {
        let seed = derive_seed(cfg.seed, &["finetune", "breaker", &it]);
        fine_tune(&mut state.breaker, store, Direction::Break, cfg.include_mechanical, &cfg.finetune, cfg.holdout_fraction, seed)?
    };
    timing.breaker_finetune_ms = t.elapsed().as_millis() as u64;

    // breaker proposes bugs at statement locations of correct programs
    let t = Instant::now();
    let mut locations = Vec::new();
    for (prog, suite, spans) in &ctx.correct {
        for span in spans {
            locations.push((prog, *suite, *span));
        }
    }
    let locations = subsample(locations, cfg.location_cap, cfg.seed, &["locations", &it]);
    let inputs: Vec<_> = locations
        .iter()
        .map(|(prog, suite, span)| (prog.name.clone(), *suite, prog.text.as_str(), LineRegion::from_span(*span)))
        .collect();
    let kind = CriticKind::new(cfg.critic, Polarity::BuggyCode);
    let judged = generate_and_judge(ctx, &state.breaker, &inputs, cfg.k_buggy, kind, cfg)?;
    let mut breaker_generation = judged.log;
    batches.extend(judged.batches);
    let mut fix_samples = Vec::new();
    let mut known: HashSet<(String, LineRegion)> =
        state.buggy_seeds.iter().map(|s| (s.program.text.clone(), s.region)).collect();
    let mut new_seeds = 0;
    for (i, p) in judged.kept {
        let (prog, _, span) = &locations[i];
        let region = LineRegion::from_span(*span);
        match build_sample(
            ctx.vocab, &ctx.repr, Direction::Fix, &p.text, p.region, &prog.text, region, origin, &prog.name, *span,
        ) {
            Ok(sample) => fix_samples.push(sample),
            Err(_) => breaker_generation.samples_rejected += 1,
        }
        if known.insert((p.text.clone(), p.region)) {
            state.buggy_seeds.push(BuggySeed {
                base: prog.name.clone(),
                program: SourceProgram::new(format!("{}@{iteration}", prog.name), p.text),
                region: p.region,
                span: *span,
                iteration,
            });
            new_seeds += 1;
        }
    }
    breaker_generation.samples_built = fix_samples.len();
    breaker_generation.store_added = store.append(fix_samples)?;
    timing.breaker_generation_ms = t.elapsed().as_millis() as u64;

    let t = Instant::now();
    let fixer_finetune = if breaker_generation.samples_built == 0 {
        skipped(Direction::Fix, "no accepted breaker output")
    } else {
        let seed = derive_seed(cfg.seed, &["finetune", "fixer", &it]);
        fine_tune(&mut state.fixer, store, Direction::Fix, cfg.include_mechanical, &cfg.finetune, cfg.holdout_fraction, seed)?
    };
    timing.fixer_finetune_ms = t.elapsed().as_millis() as u64;

    Ok(IterationLog {
        iteration,
        critic: cfg.critic,
        fixer_generation,
        breaker_finetune,
        breaker_generation,
        fixer_finetune,
        new_buggy_seeds: new_seeds,
        buggy_seeds_total: state.buggy_seeds.len(),
        store_before,
        store_after: store.counts(),
        batches,
        wall_clock: timing,
    })
}

fn skipped(direction: Direction, why: &str) -> FineTuneLog {
    log::warn!("skipping {direction:?} fine-tuning: {why}");
    FineTuneLog { direction, skipped: Some(why.into()), train_size: 0, val_size: 0, holdout_seed: 0, outcome: None }
}

/// Run `cfg.iterations` iterations. With `out_dir`, each iteration `k` writes
/// `iter<k>/fixer.ckpt`, `iter<k>/breaker.ckpt` and `iter<k>/log.json`.
pub fn run_loop(
    ctx: &BtContext<'_>,
    state: &mut BtState,
    store: &mut SampleStore,
    cfg: &LoopConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<IterationLog>> {
    let mut logs = Vec::new();
    for k in 1..=cfg.iterations {
        let wrap = |e: Error| Error::Iteration { iteration: k, source: Box::new(e) };
        let log = bt_iteration(k as u32, ctx, state, store, cfg).map_err(wrap)?;
        log::info!(
            "iteration {k}: fixer kept {}/{}, breaker kept {}/{}",
            log.fixer_generation.critic.kept,
            log.fixer_generation.generated,
            log.breaker_generation.critic.kept,
            log.breaker_generation.generated
        );
        if let Some(dir) = out_dir {
            let d = dir.join(format!("iter{k}"));
            std::fs::create_dir_all(&d).map_err(|e| wrap(Error::io(&d, e)))?;
            state.fixer.save(&d.join("fixer.ckpt")).map_err(wrap)?;
            state.breaker.save(&d.join("breaker.ckpt")).map_err(wrap)?;
            let json = serde_json::to_string_pretty(&log).expect("serializable log");
            let p = d.join("log.json");
            std::fs::write(&p, json).map_err(|e| wrap(Error::io(&p, e)))?;
        }
        logs.push(log);
    }
    Ok(logs)
}
