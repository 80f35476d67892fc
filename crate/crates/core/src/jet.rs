//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `c_α = ∂^α f / α!` of a function of
//! `n` chart coordinates, for every multi-index of total degree at most the jet's
//! order. Products truncate to the smaller order of the operands and
//! differentiation lowers the order by one, so a quantity built from fields
//! evaluated at order `k` carries exactly the derivative information that is
//! still valid.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

/// Monomial layout and product tables for `n` variables up to `order`.
///
/// Monomials are ordered by degree, and the layout of degrees `≤ k` is the same
/// for every space with order `≥ k`, so coefficient prefixes are compatible
/// across orders.
pub struct JetSpace {
    n: usize,
    order: usize,
    exponents: Vec<Vec<u8>>,
    /// `succ[i * n + v]` is the index of monomial `i + e_v`, or `usize::MAX`.
    succ: Vec<usize>,
    /// `(i, j, l)` with `mono(i) + mono(j) = mono(l)`.
    products: Vec<(u32, u32, u32)>,
    /// Spaces of orders `0..order`.
    lower: Vec<Arc<JetSpace>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("n", &self.n)
            .field("order", &self.order)
            .field("monomials", &self.exponents.len())
            .finish()
    }
}

type SpaceCache = Mutex<HashMap<(usize, usize), Arc<JetSpace>>>;

fn space_cache() -> &'static SpaceCache {
    static CACHE: OnceLock<SpaceCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn monomials(n: usize, order: usize) -> Vec<Vec<u8>> {
    let mut exponents: Vec<Vec<u8>> = vec![vec![0; n]];
    let mut start = 0;
    for _ in 1..=order {
        let end = exponents.len();
        let mut next = Vec::new();
        for e in &exponents[start..end] {
            // extend only at or after the last nonzero slot to avoid duplicates
            let last = e.iter().rposition(|&v| v > 0).unwrap_or(0);
            for v in last..n {
                let mut f = e.clone();
                f[v] += 1;
                next.push(f);
            }
        }
        next.sort_by(|a, b| b.cmp(a));
        exponents.extend(next);
        start = end;
    }
    exponents
}

impl JetSpace {
    /// Shared space for `n` variables up to `order`.
    pub fn get(n: usize, order: usize) -> Arc<JetSpace> {
        if let Some(s) = space_cache()
            .lock()
            .expect("jet space cache poisoned")
            .get(&(n, order))
        {
            return s.clone();
        }
        let lower: Vec<Arc<JetSpace>> = (0..order).map(|k| JetSpace::get(n, k)).collect();
        let built = Arc::new(JetSpace::build(n, order, lower));
        space_cache()
            .lock()
            .expect("jet space cache poisoned")
            .entry((n, order))
            .or_insert(built)
            .clone()
    }

    fn build(n: usize, order: usize, lower: Vec<Arc<JetSpace>>) -> JetSpace {
        let exponents = monomials(n, order);
        let index: HashMap<&[u8], usize> = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_slice(), i))
            .collect();
        let degree: Vec<usize> = exponents
            .iter()
            .map(|e| e.iter().map(|&v| v as usize).sum())
            .collect();
        let mut succ = vec![usize::MAX; exponents.len() * n];
        for (i, e) in exponents.iter().enumerate() {
            for v in 0..n {
                let mut f = e.clone();
                f[v] += 1;
                if let Some(&j) = index.get(f.as_slice()) {
                    succ[i * n + v] = j;
                }
            }
        }
        let mut products = Vec::new();
        for (i, a) in exponents.iter().enumerate() {
            for (j, b) in exponents.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, index[s.as_slice()] as u32));
            }
        }
        JetSpace {
            n,
            order,
            exponents,
            succ,
            products,
            lower,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Index of the monomial `e_v`.
    fn linear(&self, v: usize) -> usize {
        self.succ[v]
    }
}

fn sub_space(space: &Arc<JetSpace>, order: usize) -> Arc<JetSpace> {
    if order >= space.order {
        space.clone()
    } else {
        space.lower[order].clone()
    }
}

/// Truncated Taylor expansion of a scalar function around a chart point.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("order", &self.order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    /// Constant jet of the given order. `space` only fixes the variable count;
    /// an order above the space's order is clamped to it.
    pub fn constant(space: &Arc<JetSpace>, order: usize, value: f64) -> Jet {
        let sp = sub_space(space, order);
        let mut coeffs = vec![0.0; sp.len()];
        coeffs[0] = value;
        Jet { space: sp, coeffs }
    }

    pub fn zero(space: &Arc<JetSpace>, order: usize) -> Jet {
        Jet::constant(space, order, 0.0)
    }

    /// The coordinate function `x_v` expanded at `value`.
    pub fn variable(space: &Arc<JetSpace>, order: usize, v: usize, value: f64) -> Jet {
        let mut j = Jet::constant(space, order, value);
        if j.order() >= 1 {
            let l = j.space.linear(v);
            j.coeffs[l] = 1.0;
        }
        j
    }

    /// Coordinate jets for every chart variable at `point`.
    pub fn coordinates(point: &[f64], order: usize) -> Vec<Jet> {
        let space = JetSpace::get(point.len(), order);
        point
            .iter()
            .enumerate()
            .map(|(v, &x)| Jet::variable(&space, order, v, x))
            .collect()
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `∂f/∂x_v` at the expansion point. Requires order ≥ 1.
    pub fn d1(&self, v: usize) -> f64 {
        assert!(self.order() >= 1, "first derivative of an order-0 jet");
        self.coeffs[self.space.linear(v)]
    }

    /// `∂²f/∂x_v∂x_w` at the expansion point. Requires order ≥ 2.
    pub fn d2(&self, v: usize, w: usize) -> f64 {
        assert!(self.order() >= 2, "second derivative of an order-<2 jet");
        let l = self.space.succ[self.space.linear(v) * self.space.n + w];
        let c = self.coeffs[l];
        if v == w {
            2.0 * c
        } else {
            c
        }
    }

    /// True when every coefficient up to the jet's order vanishes.
    pub fn is_identically_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.space.n).map(|v| self.d1(v)).collect()
    }

    /// Jet of `∂f/∂x_v`, one order lower.
    pub fn derivative(&self, v: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let sp = sub_space(&self.space, self.order() - 1);
        let n = self.space.n;
        let coeffs = (0..sp.len())
            .map(|i| {
                let s = self.space.succ[i * n + v];
                (self.space.exponents[i][v] as f64 + 1.0) * self.coeffs[s]
            })
            .collect();
        Jet { space: sp, coeffs }
    }

    /// Evaluate the Taylor polynomial of `self` (expanded at `center`) at the
    /// jets `x`.
    pub fn taylor_eval(&self, center: &[f64], x: &[Jet]) -> Jet {
        let sp = x[0].space().clone();
        let o = x[0].order();
        let shifted: Vec<Jet> = x.iter().zip(center).map(|(v, c)| v.add_scalar(-c)).collect();
        let mut out = Jet::zero(&sp, o);
        for (e, &c) in self.space.exponents.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let mut t = Jet::constant(&sp, o, c);
            for (v, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t = &t * &shifted[v];
                }
            }
            out += &t;
        }
        out
    }

    /// Drop information above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let sp = sub_space(&self.space, order);
        let coeffs = self.coeffs[..sp.len()].to_vec();
        Jet { space: sp, coeffs }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.coeffs.iter_mut().for_each(|c| *c *= s);
        j
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.coeffs[0] += s;
        j
    }

    /// `self += s * other`, truncating to the lower order.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        debug_assert_eq!(self.space.n, other.space.n, "jets in different variable counts");
        if other.order() < self.order() {
            *self = self.truncate(other.order());
        }
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += s * o;
        }
    }

    pub fn mul_jet(&self, other: &Jet) -> Jet {
        debug_assert_eq!(self.space.n, other.space.n, "jets in different variable counts");
        let sp = if self.order() <= other.order() {
            &self.space
        } else {
            &other.space
        };
        let mut coeffs = vec![0.0; sp.len()];
        for &(i, j, l) in &sp.products {
            coeffs[l as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Jet {
            space: sp.clone(),
            coeffs,
        }
    }

    /// Multiplicative inverse. The value must be nonzero.
    pub fn recip(&self) -> Jet {
        let a0 = self.value();
        debug_assert!(a0 != 0.0, "reciprocal of a jet with zero value");
        let inv = 1.0 / a0;
        // 1/a = inv * Σ_k (-(a - a0) * inv)^k
        let mut t = self.scale(-inv);
        t.coeffs[0] = 0.0;
        let mut sum = Jet::constant(&self.space, self.order(), 1.0);
        let mut pow = sum.clone();
        for _ in 0..self.order() {
            pow = pow.mul_jet(&t);
            sum += &pow;
        }
        sum.scale(inv)
    }

    pub fn powi(&self, k: u32) -> Jet {
        let mut out = Jet::constant(&self.space, self.order(), 1.0);
        for _ in 0..k {
            out = out.mul_jet(self);
        }
        out
    }

    /// Square root of a jet with positive value.
    pub fn sqrt(&self) -> Jet {
        let a0 = self.value();
        debug_assert!(a0 > 0.0, "square root of a non-positive jet");
        let r = a0.sqrt();
        // sqrt(a0 (1 + t)) = r Σ binom(1/2, k) t^k
        let mut t = self.scale(1.0 / a0);
        t.coeffs[0] = 0.0;
        let mut sum = Jet::constant(&self.space, self.order(), 1.0);
        let mut pow = sum.clone();
        let mut binom = 1.0;
        for k in 0..self.order() {
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
            pow = pow.mul_jet(&t);
            sum.axpy(binom, &pow);
        }
        sum.scale(r)
    }

    /// Value, gradient and Hessian view.
    pub fn jet2(&self) -> Jet2 {
        let n = self.space.n;
        let d1 = if self.order() >= 1 {
            self.gradient()
        } else {
            vec![0.0; n]
        };
        let mut d2 = vec![0.0; n * n];
        if self.order() >= 2 {
            for v in 0..n {
                for w in 0..n {
                    d2[v * n + w] = self.d2(v, w);
                }
            }
        }
        Jet2 {
            value: self.value(),
            d1,
            d2,
        }
    }
}

/// Value with first and second partials of one component at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: Vec<f64>,
    /// Row-major `n × n`, symmetric.
    pub d2: Vec<f64>,
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        self.axpy(-1.0, rhs);
    }
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let mut j = self.clone();
        j += rhs;
        j
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let mut j = self.clone();
        j -= rhs;
        j
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self += &rhs;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self -= &rhs;
        self
    }
}

impl Add<&Jet> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: &Jet) -> Jet {
        self += rhs;
        self
    }
}

impl Sub<&Jet> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: &Jet) -> Jet {
        self -= rhs;
        self
    }
}

impl Mul<&Jet> for Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.mul_jet(&rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}
