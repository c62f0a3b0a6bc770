//! Tokenizer and the marked-region input representation shared by the fixer
//! and the breaker.
//!
//! The vocabulary is built deterministically from the seed corpus: reserved
//! markers, one token per byte for fallback, printable ASCII, language
//! lexemes, identifier pieces (split on `_` and camelCase), each of those
//! with a leading-space variant, and an indentation token. Encoding is a
//! greedy longest match, so `decode(encode(x)) == x` for any text.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Direction, Origin, TrainingSample};
use crate::error::{Error, Result};
use crate::minilang::lexer::FIXED_LEXEMES;
use crate::minilang::pretty::INDENT;
use crate::minilang::{LineRegion, LocationSpan, SourceProgram};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const START_BUGGY: u32 = 3;
pub const END_BUGGY: u32 = 4;
pub const UNK: u32 = 5;

const RESERVED: [&str; 6] = ["[PAD]", "[BOS]", "[EOS]", "[START_BUGGY]", "[END_BUGGY]", "[UNK]"];
const BYTE_BASE: u32 = 6;
const FIRST_TEXT_ID: u32 = BYTE_BASE + 256;

pub const VOCAB_FORMAT: u32 = 1;

/// Ids the decoders must never emit.
pub const NEVER_GENERATED: [u32; 5] = [PAD, BOS, START_BUGGY, END_BUGGY, UNK];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_token_len: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format: u32,
    tokens: std::collections::BTreeMap<String, u32>,
}

/// Split an identifier into pieces: `max_len` -> `max`, `_`, `len`; `maxLen` -> `max`, `Len`.
pub fn identifier_pieces(ident: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = ident.as_bytes();
    let mut start = 0;
    for i in 0..bytes.len() {
        let boundary = bytes[i] == b'_'
            || (i > 0 && bytes[i - 1] == b'_')
            || (i > 0 && bytes[i].is_ascii_uppercase() && bytes[i - 1].is_ascii_lowercase());
        if boundary && i > start {
            out.push(&ident[start..i]);
            start = i;
        }
    }
    if start < bytes.len() {
        out.push(&ident[start..]);
    }
    out
}

impl Vocab {
    /// Build the vocabulary from program texts.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: BTreeSet<String> = FIXED_LEXEMES.iter().map(|s| s.to_string()).collect();
        for text in texts {
            if let Ok(tokens) = crate::minilang::lexer::lex(text) {
                for t in tokens {
                    if let crate::minilang::lexer::Tok::Ident(name) = &t.tok {
                        for piece in identifier_pieces(name) {
                            words.insert(piece.to_string());
                        }
                    }
                }
            }
        }
        for c in 0x20u8..0x7f {
            words.insert((c as char).to_string());
        }
        words.insert("\n".into());
        words.insert(INDENT.into());
        let spaced: Vec<String> = words
            .iter()
            .filter(|w| !w.starts_with(' ') && *w != "\n" && !w.is_empty())
            .map(|w| format!(" {w}"))
            .collect();
        words.extend(spaced);

        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..=255u8).map(|b| format!("<0x{b:02X}>")));
        tokens.extend(words);
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let mut index = HashMap::new();
        let mut max_token_len = 1;
        for (id, t) in tokens.iter().enumerate().skip(FIRST_TEXT_ID as usize) {
            index.insert(t.clone(), id as u32);
            max_token_len = max_token_len.max(t.len());
        }
        Self { tokens, index, max_token_len }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < text.len() {
            let max = self.max_token_len.min(text.len() - i);
            let hit = (1..=max).rev().find_map(|n| {
                let end = i + n;
                if !text.is_char_boundary(end) {
                    return None;
                }
                self.index.get(&text[i..end]).map(|&id| (id, n))
            });
            match hit {
                Some((id, n)) => {
                    out.push(id);
                    i += n;
                }
                None => {
                    let ch = text[i..].chars().next().expect("char at boundary");
                    let mut buf = [0u8; 4];
                    for b in ch.encode_utf8(&mut buf).bytes() {
                        out.push(BYTE_BASE + b as u32);
                    }
                    i += ch.len_utf8();
                }
            }
        }
        out
    }

    /// Render ids as text. Reserved ids are rendered by name.
    pub fn decode(&self, ids: &[u32]) -> String {
        self.render(ids, true)
    }

    /// Render generated ids: stops at the first EOS and drops other reserved ids.
    pub fn decode_generated(&self, ids: &[u32]) -> String {
        let end = ids.iter().position(|&t| t == EOS).unwrap_or(ids.len());
        self.render(&ids[..end], false)
    }

    fn render(&self, ids: &[u32], show_reserved: bool) -> String {
        let mut bytes = Vec::new();
        for &id in ids {
            if id < BYTE_BASE {
                if show_reserved {
                    bytes.extend_from_slice(RESERVED[id as usize].as_bytes());
                }
            } else if id < FIRST_TEXT_ID {
                bytes.push((id - BYTE_BASE) as u8);
            } else if let Some(t) = self.tokens.get(id as usize) {
                bytes.extend_from_slice(t.as_bytes());
            } else if show_reserved {
                bytes.extend_from_slice(RESERVED[UNK as usize].as_bytes());
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabFile {
            format: VOCAB_FORMAT,
            tokens: self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect(),
        };
        let json = serde_json::to_string_pretty(&file).expect("vocab serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: VocabFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.format != VOCAB_FORMAT {
            return Err(Error::Data(format!("{}: unsupported vocab format {}", path.display(), file.format)));
        }
        let mut tokens = vec![String::new(); file.tokens.len()];
        for (t, id) in file.tokens {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| Error::Data(format!("{}: token id {id} out of range", path.display())))?;
            *slot = t;
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Data(format!("{}: reserved id {i} is not {r}", path.display())));
            }
        }
        Ok(Self::from_tokens(tokens))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepresentationConfig {
    /// Lines of context on each side of the marked region.
    pub context_lines: usize,
    pub max_input_len: usize,
    /// Maximum target length, EOS included.
    pub max_target_len: usize,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self { context_lines: 3, max_input_len: 256, max_target_len: 64 }
    }
}

impl RepresentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_input_len < 8 || self.max_target_len < 8 {
            return Err(Error::Usage("max_input_len and max_target_len must be at least 8".into()));
        }
        Ok(())
    }
}

/// Why an input could not be built.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepresentationError {
    #[error("marked region needs {needed} tokens but the input limit is {limit}")]
    RegionTooLong { needed: usize, limit: usize },
    #[error("target needs {needed} tokens but the target limit is {limit}")]
    TargetTooLong { needed: usize, limit: usize },
    #[error("region {0:?} lies outside the program")]
    OutOfRange(LineRegion),
}

/// An encoded input, with how many context tokens truncation removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltInput {
    pub tokens: Vec<u32>,
    pub truncated_before: usize,
    pub truncated_after: usize,
}

fn lines_text(lines: &[&str]) -> String {
    crate::minilang::join_lines(lines)
}

/// `context before ++ [START_BUGGY] ++ region ++ [END_BUGGY] ++ context after`.
pub fn build_input(
    vocab: &Vocab,
    program: &SourceProgram,
    span: LocationSpan,
    cfg: &RepresentationConfig,
) -> Result<BuiltInput, RepresentationError> {
    build_input_region(vocab, &program.text, LineRegion::from_span(span), cfg)
}

/// Like [`build_input`] for a possibly empty line region.
pub fn build_input_region(
    vocab: &Vocab,
    text: &str,
    region: LineRegion,
    cfg: &RepresentationConfig,
) -> Result<BuiltInput, RepresentationError> {
    let line_count = text.lines().count();
    if region.start == 0 || region.start + region.len > line_count + 1 {
        return Err(RepresentationError::OutOfRange(region));
    }
    let (before, marked, after) = region.split(text);
    let before = &before[before.len().saturating_sub(cfg.context_lines)..];
    let after = &after[..after.len().min(cfg.context_lines)];
    let mut prefix = vocab.encode(&lines_text(before));
    let body = vocab.encode(&lines_text(&marked));
    let mut suffix = vocab.encode(&lines_text(after));

    let needed = body.len() + 2;
    if needed > cfg.max_input_len {
        return Err(RepresentationError::RegionTooLong { needed, limit: cfg.max_input_len });
    }
    let budget = cfg.max_input_len - needed;
    let (keep_before, keep_after) = symmetric_budget(prefix.len(), suffix.len(), budget);
    let truncated_before = prefix.len() - keep_before;
    let truncated_after = suffix.len() - keep_after;
    prefix.drain(..truncated_before);
    suffix.truncate(keep_after);

    let mut tokens = prefix;
    tokens.push(START_BUGGY);
    tokens.extend(body);
    tokens.push(END_BUGGY);
    tokens.extend(suffix);
    Ok(BuiltInput { tokens, truncated_before, truncated_after })
}

/// Split `budget` between two sides as evenly as possible, giving any share
/// one side cannot use to the other.
fn symmetric_budget(before: usize, after: usize, budget: usize) -> (usize, usize) {
    if before + after <= budget {
        return (before, after);
    }
    let half = budget / 2;
    if before <= half {
        (before, budget - before)
    } else if after <= budget - half {
        (budget - after, after)
    } else {
        (half, budget - half)
    }
}

/// Encode a replacement region as a training target, EOS appended.
pub fn build_target(vocab: &Vocab, region_lines: &[&str], cfg: &RepresentationConfig) -> Result<Vec<u32>, RepresentationError> {
    let mut t = vocab.encode(&lines_text(region_lines));
    t.push(EOS);
    if t.len() > cfg.max_target_len {
        return Err(RepresentationError::TargetTooLong { needed: t.len(), limit: cfg.max_target_len });
    }
    Ok(t)
}

/// Build one directed training sample: the input marks `input_region` of
/// `input_text`, the target is the text of `target_region` in `target_text`.
#[allow(clippy::too_many_arguments)]
pub fn build_sample(
    vocab: &Vocab,
    cfg: &RepresentationConfig,
    direction: Direction,
    input_text: &str,
    input_region: LineRegion,
    target_text: &str,
    target_region: LineRegion,
    origin: Origin,
    source_program: &str,
    span: LocationSpan,
) -> Result<TrainingSample, RepresentationError> {
    let input = build_input_region(vocab, input_text, input_region, cfg)?;
    let (_, target_lines, _) = target_region.split(target_text);
    let target_tokens = build_target(vocab, &target_lines, cfg)?;
    Ok(TrainingSample {
        direction,
        input_tokens: input.tokens,
        target_tokens,
        origin,
        source_program: source_program.to_string(),
        span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build(["fn max_len(aB: int) -> int {\n    return aB;\n}\n"])
    }

    #[test]
    fn reserved_ids_are_distinct_and_first() {
        let v = vocab();
        let ids = [PAD, BOS, EOS, START_BUGGY, END_BUGGY, UNK];
        let set: BTreeSet<_> = ids.iter().collect();
        assert_eq!(set.len(), 6);
        assert_eq!(v.token(START_BUGGY), Some("[START_BUGGY]"));
        assert!(v.len() < 1000, "{}", v.len());
    }

    #[test]
    fn roundtrip_simple_and_empty() {
        let v = vocab();
        let ids = v.encode("x = a + b;");
        assert_eq!(v.decode(&ids), "x = a + b;");
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[]), "");
    }

    #[test]
    fn roundtrip_unicode_via_bytes() {
        let v = vocab();
        let s = "let é = \"ü\";\t☃";
        assert_eq!(v.decode(&v.encode(s)), s);
    }

    #[test]
    fn identifier_pieces_split() {
        assert_eq!(identifier_pieces("max_len"), vec!["max", "_", "len"]);
        assert_eq!(identifier_pieces("maxLen"), vec!["max", "Len"]);
        assert_eq!(identifier_pieces("x"), vec!["x"]);
    }

    #[test]
    fn spaced_variants_shorten_sequences() {
        let v = vocab();
        let ids = v.encode("    return x + 1;");
        let pieces: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(pieces, vec!["    ", "return", " x", " +", " 1", ";"]);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = vocab();
        v.save(&path).unwrap();
        assert_eq!(Vocab::load(&path).unwrap(), v);
    }

    fn program(lines: usize) -> SourceProgram {
        let text: Vec<String> = (1..=lines).map(|i| format!("l{i};")).collect();
        SourceProgram::new("p", crate::minilang::join_lines(&text))
    }

    fn cfg(n: usize) -> RepresentationConfig {
        RepresentationConfig { context_lines: n, max_input_len: 256, max_target_len: 64 }
    }

    #[test]
    fn input_at_file_top_has_empty_prefix() {
        let v = vocab();
        let p = program(10);
        let built = build_input(&v, &p, LocationSpan::line(1), &cfg(3)).unwrap();
        assert_eq!(built.tokens[0], START_BUGGY);
        let text = v.decode(&built.tokens);
        assert_eq!(text, "[START_BUGGY]l1;\n[END_BUGGY]l2;\nl3;\nl4;\n");
    }

    #[test]
    fn input_mid_file_has_n_lines_each_side() {
        let v = vocab();
        let p = program(10);
        let built = build_input(&v, &p, LocationSpan::new(5, 6), &cfg(3)).unwrap();
        let text = v.decode(&built.tokens);
        assert_eq!(text, "l2;\nl3;\nl4;\n[START_BUGGY]l5;\nl6;\n[END_BUGGY]l7;\nl8;\nl9;\n");
    }

    #[test]
    fn empty_region_marks_insertion_point() {
        let v = vocab();
        let p = program(4);
        let built = build_input_region(&v, &p.text, LineRegion { start: 3, len: 0 }, &cfg(1)).unwrap();
        assert_eq!(v.decode(&built.tokens), "l2;\n[START_BUGGY][END_BUGGY]l3;\n");
    }

    #[test]
    fn truncation_keeps_region_and_is_symmetric() {
        let v = vocab();
        let p = program(40);
        let c = RepresentationConfig { context_lines: 10, max_input_len: 20, max_target_len: 64 };
        let built = build_input(&v, &p, LocationSpan::line(20), &c).unwrap();
        assert_eq!(built.tokens.len(), 20);
        let s = built.tokens.iter().position(|&t| t == START_BUGGY).unwrap();
        let e = built.tokens.iter().position(|&t| t == END_BUGGY).unwrap();
        let body = e - s - 1;
        let before = s;
        let after = built.tokens.len() - e - 1;
        assert_eq!(v.decode(&built.tokens[s + 1..e]), "l20;\n");
        assert!(before.abs_diff(after) <= 1, "{before} {after} {body}");
        assert!(built.truncated_before > 0 && built.truncated_after > 0);
    }

    #[test]
    fn oversized_region_is_rejected() {
        let v = vocab();
        let p = program(40);
        let c = RepresentationConfig { context_lines: 1, max_input_len: 8, max_target_len: 64 };
        let err = build_input(&v, &p, LocationSpan::new(1, 30), &c).unwrap_err();
        assert!(matches!(err, RepresentationError::RegionTooLong { .. }));
        assert!(matches!(
            build_input(&v, &p, LocationSpan::new(39, 41), &c),
            Err(RepresentationError::OutOfRange(_))
        ));
    }

    #[test]
    fn symmetric_budget_cases() {
        assert_eq!(symmetric_budget(3, 4, 10), (3, 4));
        assert_eq!(symmetric_budget(10, 10, 6), (3, 3));
        assert_eq!(symmetric_budget(1, 10, 6), (1, 5));
        assert_eq!(symmetric_budget(10, 2, 6), (4, 2));
        assert_eq!(symmetric_budget(10, 10, 7), (3, 4));
    }

    #[test]
    fn target_has_eos_and_limit() {
        let v = vocab();
        let t = build_target(&v, &["    return aB;"], &cfg(3)).unwrap();
        assert_eq!(*t.last().unwrap(), EOS);
        assert_eq!(v.decode_generated(&t), "    return aB;\n");
        let empty = build_target(&v, &[], &cfg(3)).unwrap();
        assert_eq!(empty, vec![EOS]);
        let long = vec!["x = a + b + c + d + e + f + g;"; 10];
        assert!(build_target(&v, &long, &cfg(3)).is_err());
    }
}
