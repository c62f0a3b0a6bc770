use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Seq2Seq};
use crate::error::{Error, Result};
use crate::seeding::derived_rng;

const STEP: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely rather than relatively.
const FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub scalars_checked: usize,
}

/// Compare analytic gradients of the token-averaged cross-entropy with central
/// finite differences on every parameter, over a random batch of two pairs.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-5)`. Dropout is disabled.
pub fn grad_check(cfg: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig { dropout: 0.0, seed, ..cfg.clone() };
    let mut model = Seq2Seq::new(cfg.clone())?;
    if model.parameter_count() >= 5000 {
        return Err(Error::Usage(format!(
            "grad check needs fewer than 5000 parameters, config has {}",
            model.parameter_count()
        )));
    }
    let mut rng = derived_rng(seed, &["grad-check batch"]);
    let v = cfg.vocab_size as u32;
    let batch: Vec<(Vec<u32>, Vec<u32>)> = (0..2)
        .map(|_| {
            let ls = rng.gen_range(1..=cfg.max_source_len);
            let lt = rng.gen_range(1..=cfg.max_target_len);
            ((0..ls).map(|_| rng.gen_range(0..v)).collect(), (0..lt).map(|_| rng.gen_range(0..v)).collect())
        })
        .collect();

    let loss = |m: &Seq2Seq| -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0;
        for (s, t) in &batch {
            let (l, k) = m.loss(s, t)?;
            sum += l;
            n += k;
        }
        Ok(sum / n as f64)
    };

    let mut analytic = model.params.zeros_like();
    let mut tokens = 0;
    for (s, t) in &batch {
        let (_, n, g) = model.loss_and_grads(s, t, None, true)?;
        tokens += n;
        super::params::accumulate(&mut analytic, &g.expect("requested"));
    }
    for g in &mut analytic {
        *g /= tokens as f64;
    }

    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..model.params.len() {
        for j in 0..model.params.values[i].len() {
            let orig = model.params.values[i].as_slice().expect("contiguous")[j];
            model.params.values[i].as_slice_mut().expect("contiguous")[j] = orig + STEP;
            let plus = loss(&model)?;
            model.params.values[i].as_slice_mut().expect("contiguous")[j] = orig - STEP;
            let minus = loss(&model)?;
            model.params.values[i].as_slice_mut().expect("contiguous")[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[i].as_slice().expect("contiguous")[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}]", model.params.names[i]));
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_relative_error: worst.0, worst_parameter: worst.1, scalars_checked: checked })
}
