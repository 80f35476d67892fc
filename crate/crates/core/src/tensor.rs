//! Point-wise tensor values and index bookkeeping.
//!
//! Components are flattened row-major over the index list, contravariant
//! indices first, in the order they are written.

use crate::error::{Error, Result};
use crate::jet::Jet;

/// A chart point. `coords` holds `(x0, y0, x1, y1, …)` with `z_k = x_k + i y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub chart_id: usize,
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Point> {
        let n = coords.len();
        if n < 4 || n % 2 != 0 {
            return Err(Error::Dimension(format!(
                "chart dimension must be even and at least 4, got {n}"
            )));
        }
        Ok(Point { chart_id: 0, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn m(&self) -> usize {
        self.coords.len() / 2
    }
}

pub fn flat_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Inverse of [`flat_index`] for `rank` indices.
pub fn unflatten(n: usize, rank: usize, mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for k in (0..rank).rev() {
        idx[k] = flat % n;
        flat /= n;
    }
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub upper: usize,
    pub lower: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, upper: usize, lower: usize) -> Tensor {
        Tensor {
            upper,
            lower,
            n,
            data: vec![0.0; n.pow((upper + lower) as u32)],
        }
    }

    pub fn from_jets(n: usize, upper: usize, lower: usize, jets: &[Jet]) -> Tensor {
        Tensor {
            upper,
            lower,
            n,
            data: jets.iter().map(Jet::value).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.upper + self.lower
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat_index(self.n, idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let i = flat_index(self.n, idx);
        self.data[i] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn scaled(&self, s: f64) -> Tensor {
        let mut t = self.clone();
        t.data.iter_mut().for_each(|v| *v *= s);
        t
    }

    /// The `n × n` matrix of a rank-2 tensor.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        assert_eq!(self.rank(), 2, "matrix view needs a rank-2 tensor");
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}
