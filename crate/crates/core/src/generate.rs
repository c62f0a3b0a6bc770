//! Turning model outputs into whole candidate programs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::minilang::{splice_lines, LineRegion};
use crate::model::Seq2Seq;
use crate::representation::{build_input_region, RepresentationConfig, RepresentationError, Vocab};

/// One generated replacement, spliced into its program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// 1-based beam rank.
    pub rank: usize,
    pub log_prob: f64,
    /// The generated lines, as decoded.
    pub replacement: String,
    /// The full program with the region replaced.
    pub text: String,
    /// Where the replacement sits in `text`.
    pub region: LineRegion,
}

/// Mark `region` of `text`, decode `k` beams, and splice each into the text.
/// Returns `Ok(Err(_))` when the input cannot be represented.
pub fn propose(
    model: &Seq2Seq,
    vocab: &Vocab,
    repr: &RepresentationConfig,
    text: &str,
    region: LineRegion,
    k: usize,
) -> Result<std::result::Result<Vec<Proposal>, RepresentationError>> {
    let input = match build_input_region(vocab, text, region, repr) {
        Ok(i) => i,
        Err(e) => return Ok(Err(e)),
    };
    let beams = model.beam(&input.tokens, k, repr.max_target_len)?;
    Ok(Ok(beams
        .into_iter()
        .map(|b| {
            let replacement = vocab.decode_generated(&b.tokens);
            let (spliced, new_region) = splice_lines(text, region.start, region.len, &replacement);
            Proposal { rank: b.rank, log_prob: b.log_prob, replacement, text: spliced, region: new_region }
        })
        .collect()))
}
