//! Layer forward passes that record what their backward passes need.

use ndarray::{s, Array2, Axis};
use rand::Rng;

pub(crate) type Params = [Array2<f64>];
pub(crate) type Grads = [Array2<f64>];

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lin {
    pub w: usize,
    pub b: usize,
}

impl Lin {
    pub fn forward(&self, p: &Params, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&p[self.w]);
        y += &p[self.b];
        y
    }

    pub fn backward(&self, p: &Params, g: &mut Grads, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        g[self.w] += &x.t().dot(dy);
        g[self.b] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&p[self.w].t())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ln {
    pub g: usize,
    pub b: usize,
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

impl Ln {
    pub fn forward(&self, p: &Params, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            row -= mean;
            let var = row.dot(&row) / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row *= is;
            inv_std.push(is);
        }
        let mut y = &xhat * &p[self.g];
        y += &p[self.b];
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &Params, g: &mut Grads, c: &LnCache, dy: &Array2<f64>) -> Array2<f64> {
        g[self.g] += &(dy * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        g[self.b] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &p[self.g];
        let d = dy.ncols() as f64;
        let mut dx = dxhat.clone();
        for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
            let xh = c.xhat.row(i);
            let mean_d = row.sum() / d;
            let mean_dx = row.dot(&xh) / d;
            let is = c.inv_std[i];
            row.zip_mut_with(&xh, |v, &x| *v = is * (*v - mean_d - x * mean_dx));
        }
        dx
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attn {
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub o: Lin,
}

pub(crate) struct AttnCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
}

impl Attn {
    pub fn forward(
        &self,
        p: &Params,
        xq: &Array2<f64>,
        xkv: &Array2<f64>,
        heads: usize,
        causal: bool,
    ) -> (Array2<f64>, AttnCache) {
        let q = self.q.forward(p, xq);
        let k = self.k.forward(p, xkv);
        let v = self.v.forward(p, xkv);
        let d = q.ncols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut o = Array2::zeros((xq.nrows(), d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            if causal {
                for ((i, j), v) in sc.indexed_iter_mut() {
                    if j > i {
                        *v = f64::NEG_INFINITY;
                    }
                }
            }
            softmax_rows(&mut sc);
            o.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
            probs.push(sc);
        }
        let out = self.o.forward(p, &o);
        (out, AttnCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, probs, o })
    }

    /// Returns gradients with respect to the query input and the key/value input.
    pub fn backward(&self, p: &Params, g: &mut Grads, c: &AttnCache, dout: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let d_o = self.o.backward(p, g, &c.o, dout);
        let heads = c.probs.len();
        let d = c.q.ncols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for (h, a) in c.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let doh = d_o.slice(cols);
            let da = doh.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&doh));
            let mut ds = a * &da;
            for (i, mut row) in ds.rows_mut().into_iter().enumerate() {
                let r = row.sum();
                row.zip_mut_with(&a.row(i), |v, &ai| *v -= ai * r);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let dxq = self.q.backward(p, g, &c.xq, &dq);
        let mut dxkv = self.k.backward(p, g, &c.xkv, &dk);
        dxkv += &self.v.backward(p, g, &c.xkv, &dv);
        (dxq, dxkv)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ffn {
    pub l1: Lin,
    pub l2: Lin,
}

pub(crate) struct FfnCache {
    x: Array2<f64>,
    h: Array2<f64>,
}

impl Ffn {
    pub fn forward(&self, p: &Params, x: &Array2<f64>) -> (Array2<f64>, FfnCache) {
        let mut h = self.l1.forward(p, x);
        h.mapv_inplace(|v| v.max(0.0));
        let y = self.l2.forward(p, &h);
        (y, FfnCache { x: x.clone(), h })
    }

    pub fn backward(&self, p: &Params, g: &mut Grads, c: &FfnCache, dy: &Array2<f64>) -> Array2<f64> {
        let mut dh = self.l2.backward(p, g, &c.h, dy);
        dh.zip_mut_with(&c.h, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        self.l1.backward(p, g, &c.x, &dh)
    }
}

/// Inverted dropout. Returns the scaled keep-mask when active.
pub(crate) fn dropout<R: rand::RngCore + ?Sized>(x: &mut Array2<f64>, rate: f64, rng: Option<&mut R>) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
    *x *= &mask;
    Some(mask)
}

pub(crate) fn dropout_backward(dy: &Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}

/// Log-softmax of each row.
pub(crate) fn log_softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row -= lse;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let x = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -1000.0, 0.0, 1000.0]).unwrap();
        let l = log_softmax_rows(&x);
        for row in l.rows() {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
