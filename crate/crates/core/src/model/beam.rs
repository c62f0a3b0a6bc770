use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::representation::EOS;

/// Anything that can score the next token given a prefix.
pub trait NextTokenScorer {
    fn next_log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCandidate {
    /// Generated tokens, ending in EOS unless the length limit was hit.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<u32>,
    log_prob: f64,
    done: bool,
}

/// Higher log-probability first; ties broken by lexicographic token order.
fn order(a: &Hyp, b: &Hyp) -> Ordering {
    b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search without length penalty. At every step the pool of finished
/// hypotheses and one-token extensions of live ones is cut to the best `k`;
/// the search ends once all of those are finished (EOS emitted or `max_len`
/// tokens reached). Tokens in `banned` are never generated.
pub fn beam_search(
    scorer: &dyn NextTokenScorer,
    k: usize,
    max_len: usize,
    banned: &[u32],
) -> Result<Vec<BeamCandidate>> {
    assert!(k >= 1, "beam width must be at least 1");
    let mut beams = vec![Hyp { tokens: Vec::new(), log_prob: 0.0, done: max_len == 0 }];
    while beams.iter().any(|h| !h.done) {
        let mut pool: Vec<Hyp> = Vec::new();
        for h in beams {
            if h.done {
                pool.push(h);
                continue;
            }
            let lp = scorer.next_log_probs(&h.tokens)?;
            for (tok, &l) in lp.iter().enumerate() {
                let tok = tok as u32;
                if banned.contains(&tok) || l == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(tok);
                let done = tok == EOS || tokens.len() >= max_len;
                pool.push(Hyp { tokens, log_prob: h.log_prob + l, done });
            }
        }
        if pool.len() > k {
            pool.select_nth_unstable_by(k - 1, order);
            pool.truncate(k);
        }
        pool.sort_by(order);
        beams = pool;
    }
    Ok(beams
        .into_iter()
        .filter(|h| !h.tokens.is_empty())
        .enumerate()
        .map(|(i, h)| BeamCandidate { tokens: h.tokens, log_prob: h.log_prob, rank: i + 1 })
        .collect())
}

/// Repeatedly take the most likely allowed token (lowest id on ties) until EOS or `max_len`.
pub fn greedy_decode(scorer: &dyn NextTokenScorer, max_len: usize, banned: &[u32]) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    while out.len() < max_len {
        let lp = scorer.next_log_probs(&out)?;
        let mut best: Option<(u32, f64)> = None;
        for (tok, &l) in lp.iter().enumerate() {
            let tok = tok as u32;
            if banned.contains(&tok) {
                continue;
            }
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((tok, l));
            }
        }
        let Some((tok, _)) = best else { break };
        out.push(tok);
        if tok == EOS {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed table: next-token distribution depends on the previous token only.
    struct Bigram(Vec<Vec<f64>>);

    impl NextTokenScorer for Bigram {
        fn next_log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>> {
            let row = prefix.last().map_or(0, |&t| t as usize + 1);
            Ok(self.0[row].iter().map(|p| p.ln()).collect())
        }
    }

    #[test]
    fn finished_beams_stop_the_search() {
        // vocabulary {0, 1, EOS=2}; EOS is overwhelmingly likely first
        let m = Bigram(vec![vec![0.05, 0.05, 0.9], vec![0.1, 0.1, 0.8], vec![0.1, 0.1, 0.8], vec![0.3, 0.3, 0.4]]);
        let out = beam_search(&m, 1, 10, &[]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].tokens, vec![EOS]);
        assert_eq!(out[0].rank, 1);
    }

    #[test]
    fn length_limit_finishes_hypotheses() {
        let m = Bigram(vec![vec![0.9, 0.05, 0.05]; 4]);
        let out = beam_search(&m, 2, 3, &[]).unwrap();
        assert_eq!(out[0].tokens, vec![0, 0, 0]);
        assert!(out.iter().all(|c| c.tokens.len() <= 3));
    }

    #[test]
    fn banned_tokens_never_appear() {
        let m = Bigram(vec![vec![0.9, 0.05, 0.05]; 4]);
        let out = beam_search(&m, 3, 4, &[0]).unwrap();
        assert!(out.iter().all(|c| !c.tokens.contains(&0)));
        assert!(!greedy_decode(&m, 4, &[0]).unwrap().contains(&0));
    }

    #[test]
    fn ties_break_lexicographically() {
        let m = Bigram(vec![vec![0.25, 0.25, 0.5]; 4]);
        let out = beam_search(&m, 3, 1, &[]).unwrap();
        let seqs: Vec<_> = out.iter().map(|c| c.tokens.clone()).collect();
        assert_eq!(seqs, vec![vec![2], vec![0], vec![1]]);
        assert_eq!(greedy_decode(&Bigram(vec![vec![0.4, 0.4, 0.2]; 4]), 1, &[]).unwrap(), vec![0]);
    }
}
