use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Named parameter matrices. Vectors are stored as 1-row matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
}

pub(crate) enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

impl ParamStore {
    pub(crate) fn add(&mut self, name: String, rows: usize, cols: usize, init: Init, rng: &mut impl Rng) -> usize {
        let value = match init {
            Init::Zeros => Array2::zeros((rows, cols)),
            Init::Ones => Array2::ones((rows, cols)),
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("finite std");
                Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
            }
        };
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }
}

/// Add `src` into `dst` elementwise.
pub(crate) fn accumulate(dst: &mut [Array2<f64>], src: &[Array2<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
