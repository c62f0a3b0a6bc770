use ndarray::{Array2, Zip};

/// Adam with decoupled weight decay. Decay applies to weight matrices and
/// embeddings, not to biases or norm gains.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    decay: Vec<bool>,
}

impl AdamW {
    pub fn new(names: &[String], shapes: &[Array2<f64>], lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|a| Array2::zeros(a.raw_dim())).collect(),
            v: shapes.iter().map(|a| Array2::zeros(a.raw_dim())).collect(),
            decay: names.iter().map(|n| n.ends_with(".w") || n == "embed" || n.starts_with("pos.")).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for i in 0..params.len() {
            let wd = if self.decay[i] { self.weight_decay } else { 0.0 };
            Zip::from(&mut params[i]).and(&grads[i]).and(&mut self.m[i]).and(&mut self.v[i]).for_each(
                |p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *p -= lr * (update + wd * *p);
                },
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let names = vec!["x.w".to_string()];
        let mut p = vec![Array2::from_elem((1, 2), 3.0)];
        let mut opt = AdamW::new(&names, &p, 0.1, 0.0);
        for _ in 0..500 {
            let g = vec![p[0].mapv(|v| 2.0 * (v - 1.0))];
            opt.step(&mut p, &g);
        }
        assert!(p[0].iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn decay_is_decoupled_and_skips_biases() {
        let names = vec!["a.w".to_string(), "a.b".to_string()];
        let mut p = vec![Array2::from_elem((1, 1), 1.0), Array2::from_elem((1, 1), 1.0)];
        let mut opt = AdamW::new(&names, &p, 0.1, 0.5);
        let zero = vec![Array2::zeros((1, 1)), Array2::zeros((1, 1))];
        opt.step(&mut p, &zero);
        assert!((p[0][[0, 0]] - 0.95).abs() < 1e-12);
        assert_eq!(p[1][[0, 0]], 1.0);
    }
}
