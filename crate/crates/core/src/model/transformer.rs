use ndarray::{Array2, Axis};
use rand::RngCore;

use super::layers::{
    dropout, dropout_backward, log_softmax_rows, Attn, AttnCache, Ffn, FfnCache, Lin, Ln, LnCache,
};
use super::params::{Init, ParamStore};
use super::ModelConfig;
use crate::error::{Error, Result};
use super::beam::{beam_search, greedy_decode, BeamCandidate, NextTokenScorer};
use crate::representation::{BOS, NEVER_GENERATED};
use crate::seeding::rng;

#[derive(Debug, Clone)]
struct EncLayer {
    ln1: Ln,
    attn: Attn,
    ln2: Ln,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct DecLayer {
    ln1: Ln,
    self_attn: Attn,
    ln2: Ln,
    cross: Attn,
    ln3: Ln,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    pos_source: usize,
    pos_target: usize,
    enc: Vec<EncLayer>,
    enc_ln: Ln,
    dec: Vec<DecLayer>,
    dec_ln: Ln,
    out: Lin,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: rand_chacha::ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.store.add(name, rows, cols, init, &mut self.rng)
    }

    fn lin(&mut self, name: &str, d_in: usize, d_out: usize) -> Lin {
        let std = (d_in as f64).powf(-0.5);
        Lin {
            w: self.add(format!("{name}.w"), d_in, d_out, Init::Normal(std)),
            b: self.add(format!("{name}.b"), 1, d_out, Init::Zeros),
        }
    }

    fn ln(&mut self, name: &str, d: usize) -> Ln {
        Ln { g: self.add(format!("{name}.g"), 1, d, Init::Ones), b: self.add(format!("{name}.b"), 1, d, Init::Zeros) }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            q: self.lin(&format!("{name}.q"), d, d),
            k: self.lin(&format!("{name}.k"), d, d),
            v: self.lin(&format!("{name}.v"), d, d),
            o: self.lin(&format!("{name}.o"), d, d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, d_ff: usize) -> Ffn {
        Ffn { l1: self.lin(&format!("{name}.1"), d, d_ff), l2: self.lin(&format!("{name}.2"), d_ff, d) }
    }
}

impl Layout {
    fn build(cfg: &ModelConfig, store: &mut ParamStore) -> Self {
        let d = cfg.d_model;
        let mut b = Builder { store, rng: rng(cfg.seed) };
        let emb_std = (d as f64).powf(-0.5);
        let embed = b.add("embed".into(), cfg.vocab_size, d, Init::Normal(emb_std));
        let pos_source = b.add("pos.source".into(), cfg.max_source_len, d, Init::Normal(emb_std));
        let pos_target = b.add("pos.target".into(), cfg.max_target_len, d, Init::Normal(emb_std));
        let enc = (0..cfg.n_layers)
            .map(|i| EncLayer {
                ln1: b.ln(&format!("enc.{i}.ln1"), d),
                attn: b.attn(&format!("enc.{i}.attn"), d),
                ln2: b.ln(&format!("enc.{i}.ln2"), d),
                ffn: b.ffn(&format!("enc.{i}.ffn"), d, cfg.d_ff),
            })
            .collect();
        let enc_ln = b.ln("enc.ln", d);
        let dec = (0..cfg.n_layers)
            .map(|i| DecLayer {
                ln1: b.ln(&format!("dec.{i}.ln1"), d),
                self_attn: b.attn(&format!("dec.{i}.self"), d),
                ln2: b.ln(&format!("dec.{i}.ln2"), d),
                cross: b.attn(&format!("dec.{i}.cross"), d),
                ln3: b.ln(&format!("dec.{i}.ln3"), d),
                ffn: b.ffn(&format!("dec.{i}.ffn"), d, cfg.d_ff),
            })
            .collect();
        let dec_ln = b.ln("dec.ln", d);
        let out = b.lin("out", d, cfg.vocab_size);
        Layout { embed, pos_source, pos_target, enc, enc_ln, dec, dec_ln, out }
    }
}

/// An encoded input, reusable across decoding steps.
#[derive(Debug, Clone)]
pub struct Encoded {
    out: Array2<f64>,
}

struct EncLayerCache {
    ln1: LnCache,
    attn: AttnCache,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    ffn: FfnCache,
    drop2: Option<Array2<f64>>,
}

struct DecLayerCache {
    ln1: LnCache,
    self_attn: AttnCache,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    cross: AttnCache,
    drop2: Option<Array2<f64>>,
    ln3: LnCache,
    ffn: FfnCache,
    drop3: Option<Array2<f64>>,
}

struct StackCache<L> {
    drop0: Option<Array2<f64>>,
    layers: Vec<L>,
    ln: LnCache,
}

/// The encoder-decoder model. Fixer and breaker are two independent instances.
#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub params: ParamStore,
    /// Optimizer steps taken so far.
    pub step: u64,
    layout: Layout,
}

impl PartialEq for Seq2Seq {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.step == other.step
    }
}

/// Summed loss, target token count and optional gradients.
pub type LossAndGrads = (f64, usize, Option<Vec<Array2<f64>>>);

impl Seq2Seq {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::default();
        let layout = Layout::build(&config, &mut params);
        Ok(Self { config, params, step: 0, layout })
    }

    /// Rebuild from stored parameters, checking names and shapes against the config.
    pub fn from_params(config: ModelConfig, params: ParamStore, step: u64) -> Result<Self> {
        let mut fresh = Self::new(config)?;
        if fresh.params.names != params.names {
            return Err(Error::Data("parameter names do not match the model configuration".into()));
        }
        for (i, (a, b)) in fresh.params.values.iter().zip(&params.values).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Data(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    params.names[i],
                    b.shape(),
                    a.shape()
                )));
            }
        }
        fresh.params = params;
        fresh.step = step;
        Ok(fresh)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    fn check_ids(&self, ids: &[u32], limit: usize, what: &str) -> Result<()> {
        if ids.len() > limit {
            return Err(Error::Data(format!("{what} has {} tokens, model limit is {limit}", ids.len())));
        }
        if let Some(bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Data(format!("token id {bad} out of range for vocabulary {}", self.config.vocab_size)));
        }
        Ok(())
    }

    fn embed(&self, ids: &[u32], pos: usize) -> Array2<f64> {
        let p = &self.params.values;
        let mut x = Array2::zeros((ids.len(), self.config.d_model));
        for (t, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(t);
            row += &p[self.layout.embed].row(id as usize);
            row += &p[pos].row(t);
        }
        x
    }

    fn embed_backward(&self, g: &mut [Array2<f64>], ids: &[u32], pos: usize, dx: &Array2<f64>) {
        for (t, &id) in ids.iter().enumerate() {
            let mut row = g[self.layout.embed].row_mut(id as usize);
            row += &dx.row(t);
            let mut prow = g[pos].row_mut(t);
            prow += &dx.row(t);
        }
    }

    fn encode_fwd<R: RngCore + ?Sized>(&self, src: &[u32], mut rng: Option<&mut R>) -> (Array2<f64>, StackCache<EncLayerCache>) {
        let p = &self.params.values;
        let h = self.config.n_heads;
        let rate = self.config.dropout;
        let mut x = self.embed(src, self.layout.pos_source);
        let drop0 = dropout(&mut x, rate, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let (a, ln1) = l.ln1.forward(p, &x);
            let (mut at, attn) = l.attn.forward(p, &a, &a, h, false);
            let drop1 = dropout(&mut at, rate, rng.as_deref_mut());
            x += &at;
            let (b, ln2) = l.ln2.forward(p, &x);
            let (mut f, ffn) = l.ffn.forward(p, &b);
            let drop2 = dropout(&mut f, rate, rng.as_deref_mut());
            x += &f;
            layers.push(EncLayerCache { ln1, attn, drop1, ln2, ffn, drop2 });
        }
        let (out, ln) = self.layout.enc_ln.forward(p, &x);
        (out, StackCache { drop0, layers, ln })
    }

    fn encode_bwd(&self, g: &mut [Array2<f64>], src: &[u32], c: &StackCache<EncLayerCache>, d_out: &Array2<f64>) {
        let p = &self.params.values;
        let mut dx = self.layout.enc_ln.backward(p, g, &c.ln, d_out);
        for (l, lc) in self.layout.enc.iter().zip(&c.layers).rev() {
            let df = dropout_backward(&dx, &lc.drop2);
            let db = l.ffn.backward(p, g, &lc.ffn, &df);
            dx += &l.ln2.backward(p, g, &lc.ln2, &db);
            let dat = dropout_backward(&dx, &lc.drop1);
            let (dq, dkv) = l.attn.backward(p, g, &lc.attn, &dat);
            dx += &l.ln1.backward(p, g, &lc.ln1, &(dq + dkv));
        }
        let d0 = dropout_backward(&dx, &c.drop0);
        self.embed_backward(g, src, self.layout.pos_source, &d0);
    }

    /// Decoder stack over `inputs`; returns the final hidden states before the last norm.
    fn decode_fwd<R: RngCore + ?Sized>(
        &self,
        enc: &Array2<f64>,
        inputs: &[u32],
        mut rng: Option<&mut R>,
    ) -> (Array2<f64>, Option<Array2<f64>>, Vec<DecLayerCache>) {
        let p = &self.params.values;
        let h = self.config.n_heads;
        let rate = self.config.dropout;
        let mut x = self.embed(inputs, self.layout.pos_target);
        let drop0 = dropout(&mut x, rate, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.layout.dec.len());
        for l in &self.layout.dec {
            let (a, ln1) = l.ln1.forward(p, &x);
            let (mut at, self_attn) = l.self_attn.forward(p, &a, &a, h, true);
            let drop1 = dropout(&mut at, rate, rng.as_deref_mut());
            x += &at;
            let (c, ln2) = l.ln2.forward(p, &x);
            let (mut ct, cross) = l.cross.forward(p, &c, enc, h, false);
            let drop2 = dropout(&mut ct, rate, rng.as_deref_mut());
            x += &ct;
            let (b, ln3) = l.ln3.forward(p, &x);
            let (mut f, ffn) = l.ffn.forward(p, &b);
            let drop3 = dropout(&mut f, rate, rng.as_deref_mut());
            x += &f;
            layers.push(DecLayerCache { ln1, self_attn, drop1, ln2, cross, drop2, ln3, ffn, drop3 });
        }
        (x, drop0, layers)
    }

    /// Returns the gradient with respect to the encoder output.
    fn decode_bwd(
        &self,
        g: &mut [Array2<f64>],
        inputs: &[u32],
        drop0: &Option<Array2<f64>>,
        caches: &[DecLayerCache],
        dx_top: Array2<f64>,
        enc_rows: usize,
    ) -> Array2<f64> {
        let p = &self.params.values;
        let mut dx = dx_top;
        let mut d_enc = Array2::zeros((enc_rows, self.config.d_model));
        for (l, lc) in self.layout.dec.iter().zip(caches).rev() {
            let df = dropout_backward(&dx, &lc.drop3);
            let db = l.ffn.backward(p, g, &lc.ffn, &df);
            dx += &l.ln3.backward(p, g, &lc.ln3, &db);
            let dct = dropout_backward(&dx, &lc.drop2);
            let (dq, dkv) = l.cross.backward(p, g, &lc.cross, &dct);
            d_enc += &dkv;
            dx += &l.ln2.backward(p, g, &lc.ln2, &dq);
            let dat = dropout_backward(&dx, &lc.drop1);
            let (dq, dkv) = l.self_attn.backward(p, g, &lc.self_attn, &dat);
            dx += &l.ln1.backward(p, g, &lc.ln1, &(dq + dkv));
        }
        let d0 = dropout_backward(&dx, drop0);
        self.embed_backward(g, inputs, self.layout.pos_target, &d0);
        d_enc
    }

    fn check_pair(&self, src: &[u32], tgt: &[u32]) -> Result<()> {
        if src.is_empty() {
            return Err(Error::Data("empty input sequence".into()));
        }
        self.check_ids(src, self.config.max_source_len, "input")?;
        self.check_ids(tgt, self.config.max_target_len, "target")
    }

    /// Summed cross-entropy of `tgt` under teacher forcing, with the number of
    /// target tokens. Gradients of the summed loss are returned when requested.
    /// Passing an RNG enables dropout.
    pub fn loss_and_grads(
        &self,
        src: &[u32],
        tgt: &[u32],
        mut rng: Option<&mut dyn RngCore>,
        want_grads: bool,
    ) -> Result<LossAndGrads> {
        self.check_pair(src, tgt)?;
        if tgt.is_empty() {
            return Ok((0.0, 0, want_grads.then(|| self.params.zeros_like())));
        }
        let p = &self.params.values;
        let (enc, enc_cache) = self.encode_fwd(src, rng.as_deref_mut());
        let mut inputs = Vec::with_capacity(tgt.len());
        inputs.push(BOS);
        inputs.extend_from_slice(&tgt[..tgt.len() - 1]);
        let (x, drop0, dec_caches) = self.decode_fwd(&enc, &inputs, rng);
        let (hid, ln_cache) = self.layout.dec_ln.forward(p, &x);
        let logits = self.layout.out.forward(p, &hid);
        let logp = log_softmax_rows(&logits);
        let loss: f64 = tgt.iter().enumerate().map(|(t, &y)| -logp[[t, y as usize]]).sum();
        if !want_grads {
            return Ok((loss, tgt.len(), None));
        }
        let mut g = self.params.zeros_like();
        let mut dlogits = logp.mapv(f64::exp);
        for (t, &y) in tgt.iter().enumerate() {
            dlogits[[t, y as usize]] -= 1.0;
        }
        let dhid = self.layout.out.backward(p, &mut g, &hid, &dlogits);
        let dx = self.layout.dec_ln.backward(p, &mut g, &ln_cache, &dhid);
        let d_enc = self.decode_bwd(&mut g, &inputs, &drop0, &dec_caches, dx, enc.nrows());
        self.encode_bwd(&mut g, src, &enc_cache, &d_enc);
        Ok((loss, tgt.len(), Some(g)))
    }

    /// Summed loss and token count in evaluation mode.
    pub fn loss(&self, src: &[u32], tgt: &[u32]) -> Result<(f64, usize)> {
        let (l, n, _) = self.loss_and_grads(src, tgt, None, false)?;
        Ok((l, n))
    }

    pub fn encode(&self, src: &[u32]) -> Result<Encoded> {
        if src.is_empty() {
            return Err(Error::Data("empty input sequence".into()));
        }
        self.check_ids(src, self.config.max_source_len, "input")?;
        Ok(Encoded { out: self.encode_fwd::<dyn RngCore>(src, None).0 })
    }

    /// Log-probabilities of the next token after `prefix` (BOS implied).
    pub fn next_log_probs(&self, enc: &Encoded, prefix: &[u32]) -> Result<Vec<f64>> {
        self.check_ids(prefix, self.config.max_target_len.saturating_sub(1), "decoder prefix")?;
        let mut inputs = Vec::with_capacity(prefix.len() + 1);
        inputs.push(BOS);
        inputs.extend_from_slice(prefix);
        let (x, _, _) = self.decode_fwd::<dyn RngCore>(&enc.out, &inputs, None);
        let last = x.row(x.nrows() - 1).to_owned().insert_axis(Axis(0));
        let p = &self.params.values;
        let (hid, _) = self.layout.dec_ln.forward(p, &last);
        let logits = self.layout.out.forward(p, &hid);
        Ok(log_softmax_rows(&logits).row(0).to_vec())
    }

    /// Next-token distribution for an input and a target prefix.
    pub fn forward(&self, src: &[u32], prefix: &[u32]) -> Result<Vec<f64>> {
        let enc = self.encode(src)?;
        self.next_log_probs(&enc, prefix)
    }
}

/// Scores next tokens for one encoded input.
pub struct EncodedScorer<'a> {
    model: &'a Seq2Seq,
    enc: Encoded,
}

impl NextTokenScorer for EncodedScorer<'_> {
    fn next_log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        self.model.next_log_probs(&self.enc, prefix)
    }
}

impl Seq2Seq {
    pub fn scorer(&self, src: &[u32]) -> Result<EncodedScorer<'_>> {
        Ok(EncodedScorer { model: self, enc: self.encode(src)? })
    }

    /// Decode length limit: the requested one, capped by the positional table.
    fn cap(&self, max_len: usize) -> usize {
        max_len.min(self.config.max_target_len)
    }

    /// Beam search over generatable tokens.
    pub fn beam(&self, src: &[u32], k: usize, max_len: usize) -> Result<Vec<BeamCandidate>> {
        beam_search(&self.scorer(src)?, k, self.cap(max_len), &NEVER_GENERATED)
    }

    pub fn greedy(&self, src: &[u32], max_len: usize) -> Result<Vec<u32>> {
        greedy_decode(&self.scorer(src)?, self.cap(max_len), &NEVER_GENERATED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> Seq2Seq {
        Seq2Seq::new(ModelConfig { seed, max_source_len: 16, max_target_len: 8, ..ModelConfig::tiny(20) }).unwrap()
    }

    #[test]
    fn distribution_shape_and_normalization() {
        let m = model(1);
        let lp = m.forward(&[3, 7, 9, 4], &[8, 10]).unwrap();
        assert_eq!(lp.len(), 20);
        assert!(lp.iter().all(|v| v.is_finite()));
        let s: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }

    #[test]
    fn reproducible_from_seed() {
        assert_eq!(model(5).forward(&[3, 4], &[]).unwrap(), model(5).forward(&[3, 4], &[]).unwrap());
        assert_ne!(model(5).forward(&[3, 4], &[]).unwrap(), model(6).forward(&[3, 4], &[]).unwrap());
    }

    #[test]
    fn rejects_bad_ids_and_lengths() {
        let m = model(1);
        assert!(m.forward(&[25], &[]).is_err());
        assert!(m.forward(&[1; 17], &[]).is_err());
        assert!(m.forward(&[], &[]).is_err());
        assert!(m.loss(&[3], &[2; 9]).is_err());
    }

    #[test]
    fn teacher_forced_loss_matches_stepwise_log_probs() {
        let m = model(2);
        let src = [3, 11, 12, 4];
        let tgt = [7, 8, 2];
        let (loss, n) = m.loss(&src, &tgt).unwrap();
        assert_eq!(n, 3);
        let enc = m.encode(&src).unwrap();
        let mut manual = 0.0;
        for t in 0..tgt.len() {
            manual -= m.next_log_probs(&enc, &tgt[..t]).unwrap()[tgt[t] as usize];
        }
        assert!((loss - manual).abs() < 1e-9, "{loss} {manual}");
    }

    #[test]
    fn empty_target_has_zero_loss_and_gradient() {
        let m = model(3);
        let (l, n, g) = m.loss_and_grads(&[3, 4], &[], None, true).unwrap();
        assert_eq!((l, n), (0.0, 0));
        assert!(g.unwrap().iter().all(|a| a.iter().all(|&v| v == 0.0)));
    }
}
