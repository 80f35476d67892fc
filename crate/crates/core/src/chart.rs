//! User-supplied geometries: polynomial components in one chart, read from TOML.
//!
//! ```toml
//! m = 2
//! box = [[-1, 1], [-1, 1], [-1, 1], [-1, 1]]   # optional
//!
//! [j]            # optional, defaults to the standard J
//! "1,0" = "1"
//! "0,1" = "-1"
//!
//! [gamma]        # Γ^c_{ab}, keyed "c,a,b"
//! "0,0,1" = "x0*y1 - 2.5"
//!
//! [zeta]         # ζ^{ab}, keyed "a,b"
//! "0,0" = "1 + x0^2 + y0^2"
//! ```
//!
//! Variables `x<k>`, `y<k>` are the real and imaginary parts of `z_k`, i.e.
//! chart coordinates `2k` and `2k+1`. Omitted components are zero.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{TensorField, Weight};
use crate::geometry::{minimal_complex_defect, ComplexStructure, Connection, Geometry};
use crate::jet::Jet;
use crate::models::ModelPackage;
use crate::tensor::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn eval(&self, x: &[Jet]) -> Jet {
        match self {
            Expr::Num(v) => Jet::constant(x[0].space(), x[0].order(), *v),
            Expr::Var(k) => x[*k].clone(),
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Pow(a, k) => a.eval(x).powi(*k),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(k) => x[*k],
            Expr::Neg(a) => -a.value(x),
            Expr::Add(a, b) => a.value(x) + b.value(x),
            Expr::Sub(a, b) => a.value(x) - b.value(x),
            Expr::Mul(a, b) => a.value(x) * b.value(x),
            Expr::Pow(a, k) => a.value(x).powi(*k as i32),
        }
    }
}

/// Parse a polynomial in `x<k>`, `y<k>` over `n` real coordinates.
pub fn parse_polynomial(src: &str, n: usize) -> Result<Expr> {
    let mut p = Parser { s: src.as_bytes(), i: 0, n, src };
    let e = p.sum()?;
    p.ws();
    if p.i != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
    n: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, what: &str) -> Error {
        Error::Parse(format!("{what} at column {} of `{}`", self.i + 1, self.src))
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut e = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let r = self.product()?;
            e = if c == b'+' { Expr::Add(e.into(), r.into()) } else { Expr::Sub(e.into(), r.into()) };
        }
        Ok(e)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        while self.peek() == Some(b'*') {
            self.i += 1;
            e = Expr::Mul(e.into(), self.unary()?.into());
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.i += 1;
                Ok(Expr::Neg(self.unary()?.into()))
            }
            Some(b'+') => {
                self.i += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.i += 1;
        self.ws();
        let start = self.i;
        while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
            self.i += 1;
        }
        let k = self.src[start..self.i]
            .parse::<u32>()
            .map_err(|_| self.err("expected a nonnegative integer exponent"))?;
        Ok(Expr::Pow(base.into(), k))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let e = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.i += 1;
                Ok(e)
            }
            Some(c @ (b'x' | b'y')) => {
                self.i += 1;
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                    self.i += 1;
                }
                let k = self.src[start..self.i]
                    .parse::<usize>()
                    .map_err(|_| self.err("expected a variable index"))?;
                let v = 2 * k + usize::from(c == b'y');
                if v >= self.n {
                    return Err(self.err("variable index out of range"));
                }
                Ok(Expr::Var(v))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
                    self.i += 1;
                }
                if self.i < self.s.len() && matches!(self.s[self.i], b'e' | b'E') {
                    self.i += 1;
                    if self.i < self.s.len() && matches!(self.s[self.i], b'+' | b'-') {
                        self.i += 1;
                    }
                    while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                        self.i += 1;
                    }
                }
                self.src[start..self.i]
                    .parse::<f64>()
                    .map(Expr::Num)
                    .map_err(|_| self.err("malformed number"))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartFile {
    m: usize,
    #[serde(rename = "box")]
    bounds: Option<Vec<(f64, f64)>>,
    j: Option<BTreeMap<String, String>>,
    #[serde(default)]
    gamma: BTreeMap<String, String>,
    zeta: BTreeMap<String, String>,
}

fn component_table(
    table: &BTreeMap<String, String>,
    n: usize,
    rank: usize,
    name: &str,
) -> Result<Vec<Option<Expr>>> {
    let mut out = vec![None; n.pow(rank as u32)];
    for (key, src) in table {
        let idx: Vec<usize> = key
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("{name}: bad index key `{key}`")))?;
        if idx.len() != rank || idx.iter().any(|&i| i >= n) {
            return Err(Error::Parse(format!("{name}: index key `{key}` needs {rank} indices below {n}")));
        }
        let flat = idx.iter().fold(0, |acc, &i| acc * n + i);
        let e = parse_polynomial(src, n).map_err(|e| Error::Parse(format!("{name}[{key}]: {e}")))?;
        out[flat] = Some(e);
    }
    Ok(out)
}

fn polynomial_field(comps: Vec<Option<Expr>>, n: usize, valence: (usize, usize), weight: Weight) -> TensorField {
    let comps = Arc::new(comps);
    TensorField::from_formula(n, valence, weight, move |x| {
        let zero = Jet::zero(x[0].space(), x[0].order());
        Ok(comps.iter().map(|c| c.as_ref().map_or_else(|| zero.clone(), |e| e.eval(x))).collect())
    })
}

/// Load a chart file. When `Γ` is not minimal complex at the box center it is
/// replaced by the minimal complex connection built from its symmetric part.
pub fn load_chart(src: &str) -> Result<ModelPackage> {
    let file: ChartFile = toml::from_str(src).map_err(|e| Error::Parse(e.to_string()))?;
    let m = file.m;
    if m < 2 {
        return Err(Error::Config(format!("m must be at least 2, got {m}")));
    }
    let n = 2 * m;
    let default_box = file.bounds.unwrap_or_else(|| vec![(-1.0, 1.0); n]);
    if default_box.len() != n || default_box.iter().any(|(a, b)| !(a < b)) {
        return Err(Error::Config(format!("box must list {n} intervals with min < max")));
    }
    let j = match &file.j {
        None => ComplexStructure::standard(m),
        Some(t) => {
            let comps = component_table(t, n, 2, "j")?;
            ComplexStructure::new(polynomial_field(comps, n, (1, 1), Weight::ZERO))?
        }
    };
    let gamma = polynomial_field(component_table(&file.gamma, n, 3, "gamma")?, n, (1, 2), Weight::ZERO);
    let zeta = polynomial_field(component_table(&file.zeta, n, 2, "zeta")?, n, (2, 0), Weight::real(-1.0));

    let center = Point::new(default_box.iter().map(|(a, b)| 0.5 * (a + b)).collect())?;
    let jdef = j.square_defect(&center.coords)?;
    if jdef > 1e-10 {
        return Err(Error::Config(format!("J² + 1 = {jdef:e} at the box center")));
    }
    let raw = Geometry::new(j.clone(), Connection::new(gamma, false)?)?;
    let (nj, tors) = minimal_complex_defect(&raw, &center)?;
    let conn = if nj.max(tors) > 1e-10 {
        let g = raw.conn.gamma.clone();
        let sym = TensorField::from_formula(n, (1, 2), Weight::ZERO, move |x| {
            let c: Vec<f64> = x.iter().map(|v| v.value()).collect();
            let v = g.eval(&c, x[0].order())?;
            let mut out = Vec::with_capacity(n * n * n);
            for k in 0..n * n * n {
                let (c, a, b) = (k / (n * n), (k / n) % n, k % n);
                out.push((&v[k] + &v[(c * n + b) * n + a]).scale(0.5));
            }
            Ok(out)
        });
        Connection::minimal_complex_from(&Connection::new(sym, false)?, &j)
    } else {
        Connection { minimal_complex: true, ..raw.conn }
    };
    let geometry = Geometry::new(j, conn)?;
    Ok(ModelPackage {
        key: "chart".into(),
        geometry,
        zeta,
        h_form: None,
        default_box,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_polynomials() {
        let e = parse_polynomial("1 - 2*x0^2 + (y1 + 0.5)*x1 - -3e-1", 4).unwrap();
        let v = [0.3, -1.0, 2.0, 0.25];
        let want = 1.0 - 2.0 * 0.09 + (0.25 + 0.5) * 2.0 + 0.3;
        assert!((e.value(&v) - want).abs() < 1e-15);
        let x = Jet::coordinates(&v, 2);
        let j = e.eval(&x);
        assert!((j.value() - want).abs() < 1e-15);
        assert!((j.d1(0) + 4.0 * 0.3).abs() < 1e-15);
        assert!((j.d2(2, 3) - 1.0).abs() < 1e-15);
        for bad in ["x2", "1 +", "(x0", "x0^-1", "z0", "x0 x1"] {
            assert!(parse_polynomial(bad, 4).is_err(), "{bad}");
        }
    }

    #[test]
    fn flat_chart_matches_flat_model() {
        let src = r#"
            m = 2
            [zeta]
            "0,0" = "1"
            "1,1" = "1"
            "2,2" = "-1"
            "3,3" = "-1"
        "#;
        let pkg = load_chart(src).unwrap();
        let flat = crate::models::flat_model(2, 1, 1).unwrap();
        let x = [0.2, 0.1, -0.4, 0.9];
        assert_eq!(pkg.zeta.value(&x).unwrap(), flat.zeta.value(&x).unwrap());
        assert!(pkg.geometry.conn.minimal_complex);
        let s = crate::tractor::Splitting::new(pkg.geometry.clone());
        let r = crate::bgg::metrizability_residual(&pkg.zeta, &s, &Point::new(x.to_vec()).unwrap()).unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn projects_to_minimal_complex() {
        let src = r#"
            m = 2
            [gamma]
            "0,1,2" = "x0 + 1"
            "3,0,0" = "y1^2"
            [zeta]
            "0,0" = "1"
            "1,1" = "1"
        "#;
        let pkg = load_chart(src).unwrap();
        let p = Point::new(vec![0.3, -0.2, 0.5, 0.1]).unwrap();
        let (nj, tors) = minimal_complex_defect(&pkg.geometry, &p).unwrap();
        assert!(nj < 1e-13 && tors < 1e-13, "{nj} {tors}");
    }

    #[test]
    fn rejects_bad_files() {
        assert!(load_chart("m = 1\n[zeta]\n").is_err());
        assert!(load_chart("m = 2\n[zeta]\n\"0,4\" = \"1\"\n").is_err());
        assert!(load_chart("m = 2\n[zeta]\n\"0\" = \"1\"\n").is_err());
        assert!(load_chart("m = 2\nextra = 1\n[zeta]\n").is_err());
        assert!(load_chart("m = 2\n[j]\n\"0,0\" = \"1\"\n[zeta]\n").is_err());
    }
}
