//! Chart-local tensor fields evaluated as Taylor jets.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{Jet, Jet2};
use crate::tensor::{Point, Tensor};

/// Density weight `(w, w′)`. Real densities have `w = w′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight {
    pub w: f64,
    pub w_prime: f64,
}

impl Weight {
    pub const ZERO: Weight = Weight { w: 0.0, w_prime: 0.0 };

    pub fn new(w: f64, w_prime: f64) -> Result<Weight> {
        let d = w - w_prime;
        if (d - d.round()).abs() > 1e-12 {
            return Err(Error::Weight(format!("w - w' = {d} is not an integer")));
        }
        Ok(Weight { w, w_prime })
    }

    pub fn real(w: f64) -> Weight {
        Weight { w, w_prime: w }
    }

    pub fn is_real(&self) -> bool {
        self.w == self.w_prime
    }
}

/// Maps chart coordinates and a jet order to the component jets.
pub type Evaluator = Arc<dyn Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync>;

#[derive(Clone)]
pub struct TensorField {
    pub n: usize,
    pub upper: usize,
    pub lower: usize,
    pub weight: Weight,
    eval: Evaluator,
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorField")
            .field("n", &self.n)
            .field("valence", &(self.upper, self.lower))
            .field("weight", &self.weight)
            .finish()
    }
}

impl TensorField {
    pub fn new(n: usize, valence: (usize, usize), weight: Weight, eval: Evaluator) -> TensorField {
        TensorField {
            n,
            upper: valence.0,
            lower: valence.1,
            weight,
            eval,
        }
    }

    /// Field given by a closure over coordinate jets. The closure sees one jet
    /// per chart coordinate and returns the component jets.
    pub fn from_formula<F>(n: usize, valence: (usize, usize), weight: Weight, f: F) -> TensorField
    where
        F: Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync + 'static,
    {
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| f(&Jet::coordinates(x, order)));
        TensorField::new(n, valence, weight, eval)
    }

    pub fn constant(n: usize, valence: (usize, usize), weight: Weight, values: Vec<f64>) -> TensorField {
        assert_eq!(values.len(), n.pow((valence.0 + valence.1) as u32));
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
            let sp = crate::jet::JetSpace::get(x.len(), order);
            Ok(values.iter().map(|&v| Jet::constant(&sp, order, v)).collect())
        });
        TensorField::new(n, valence, weight, eval)
    }

    pub fn zero(n: usize, valence: (usize, usize), weight: Weight) -> TensorField {
        TensorField::constant(n, valence, weight, vec![0.0; n.pow((valence.0 + valence.1) as u32)])
    }

    pub fn rank(&self) -> usize {
        self.upper + self.lower
    }

    pub fn components(&self) -> usize {
        self.n.pow(self.rank() as u32)
    }

    pub fn with_weight(mut self, weight: Weight) -> TensorField {
        self.weight = weight;
        self
    }

    /// Component jets at `x`, carrying derivatives up to `order`.
    pub fn eval(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "field on {}-dimensional chart evaluated at a point with {} coordinates",
                self.n,
                x.len()
            )));
        }
        let out = (self.eval)(x, order)?;
        if out.len() != self.components() {
            return Err(Error::Dimension(format!(
                "evaluator returned {} components, expected {}",
                out.len(),
                self.components()
            )));
        }
        if let Some(bad) = out.iter().position(|j| !j.value().is_finite()) {
            return Err(Error::Domain(format!(
                "component {bad} is not finite at {x:?}"
            )));
        }
        Ok(out)
    }

    pub fn value(&self, x: &[f64]) -> Result<Tensor> {
        Ok(Tensor::from_jets(self.n, self.upper, self.lower, &self.eval(x, 0)?))
    }

    pub fn eval_jet2(&self, p: &Point) -> Result<Vec<Jet2>> {
        Ok(self.eval(&p.coords, 2)?.iter().map(Jet::jet2).collect())
    }

    /// Point-wise combination with another field of the same shape.
    pub fn map2<F>(&self, other: &TensorField, f: F) -> TensorField
    where
        F: Fn(&Jet, &Jet) -> Jet + Send + Sync + 'static,
    {
        assert_eq!(self.components(), other.components());
        let (a, b) = (self.clone(), other.clone());
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
            let ja = a.eval(x, order)?;
            let jb = b.eval(x, order)?;
            Ok(ja.iter().zip(&jb).map(|(p, q)| f(p, q)).collect())
        });
        TensorField::new(self.n, (self.upper, self.lower), self.weight, eval)
    }

    pub fn scaled(&self, s: f64) -> TensorField {
        let a = self.clone();
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
            Ok(a.eval(x, order)?.iter().map(|j| j.scale(s)).collect())
        });
        TensorField::new(self.n, (self.upper, self.lower), self.weight, eval)
    }

    pub fn add(&self, other: &TensorField) -> TensorField {
        self.map2(other, |p, q| p + q)
    }
}

/// Value, first and second partials of every component at `p`.
pub fn eval_jet2(field: &TensorField, p: &Point) -> Result<Vec<Jet2>> {
    field.eval_jet2(p)
}
