//! Almost complex structures, connections and their curvature.
//!
//! Index conventions: `J[a][b] = J^a_b`, `Γ[c][a][b] = Γ^c_{ab}` with
//! `∇_a η^b = ∂_a η^b + Γ^b_{ac} η^c`, and
//! `R[a][b][c][d] = R_{ab}{}^c{}_d` so that `(∇_a∇_b − ∇_b∇_a)η^c = R_{ab}{}^c{}_d η^d`
//! for torsion-free `∇`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Evaluator, TensorField, Weight};
use crate::jet::{Jet, JetSpace};
use crate::linalg::jet_inverse;
use crate::tensor::{flat_index, unflatten, Point, Tensor};

#[derive(Debug, Clone)]
pub struct ComplexStructure {
    pub field: TensorField,
}

impl ComplexStructure {
    pub fn new(field: TensorField) -> Result<ComplexStructure> {
        if (field.upper, field.lower) != (1, 1) || field.n % 2 != 0 || field.n < 4 {
            return Err(Error::Dimension(format!(
                "J must be a (1,1) field in even dimension ≥ 4, got {:?} in dimension {}",
                (field.upper, field.lower),
                field.n
            )));
        }
        Ok(ComplexStructure { field })
    }

    /// `J e_{2k} = e_{2k+1}`, i.e. multiplication by `i` on `z_k = x_k + i y_k`.
    pub fn standard(m: usize) -> ComplexStructure {
        ComplexStructure {
            field: TensorField::constant(2 * m, (1, 1), Weight::ZERO, standard_j(m)),
        }
    }

    pub fn n(&self) -> usize {
        self.field.n
    }

    /// Max-norm of `J² + id` at `x`.
    pub fn square_defect(&self, x: &[f64]) -> Result<f64> {
        let j = self.field.value(x)?;
        let n = self.n();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let s: f64 = (0..n).map(|c| j.get(&[a, c]) * j.get(&[c, b])).sum();
                let e = if a == b { -1.0 } else { 0.0 };
                worst = worst.max((s - e).abs());
            }
        }
        Ok(worst)
    }
}

/// Row-major standard complex structure on `ℝ^{2m}`.
pub fn standard_j(m: usize) -> Vec<f64> {
    let n = 2 * m;
    let mut j = vec![0.0; n * n];
    for k in 0..m {
        j[(2 * k + 1) * n + 2 * k] = 1.0;
        j[(2 * k) * n + 2 * k + 1] = -1.0;
    }
    j
}

#[derive(Debug, Clone)]
pub struct Connection {
    pub gamma: TensorField,
    pub minimal_complex: bool,
}

impl Connection {
    pub fn new(gamma: TensorField, minimal_complex: bool) -> Result<Connection> {
        if (gamma.upper, gamma.lower) != (1, 2) {
            return Err(Error::Dimension("Christoffel symbols must be a (1,2) field".into()));
        }
        Ok(Connection {
            gamma,
            minimal_complex,
        })
    }

    pub fn flat(n: usize) -> Connection {
        Connection {
            gamma: TensorField::zero(n, (1, 2), Weight::ZERO),
            minimal_complex: true,
        }
    }

    pub fn n(&self) -> usize {
        self.gamma.n
    }

    /// Levi-Civita connection of a (0,2) metric field.
    pub fn levi_civita(metric: &TensorField) -> Result<Connection> {
        if (metric.upper, metric.lower) != (0, 2) {
            return Err(Error::Dimension("metric must be a (0,2) field".into()));
        }
        let g = metric.clone();
        let n = g.n;
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
            let gj = g.eval(x, order + 1)?;
            let ginv = jet_inverse(&gj, n)?;
            let dg: Vec<Vec<Jet>> = (0..n)
                .map(|v| gj.iter().map(|j| j.derivative(v)).collect())
                .collect();
            let mut out = Vec::with_capacity(n * n * n);
            for c in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let mut acc = Jet::zero(gj[0].space(), order);
                        for d in 0..n {
                            let mut t = dg[a][d * n + b].clone();
                            t += &dg[b][d * n + a];
                            t -= &dg[d][a * n + b];
                            acc += &(&ginv[c * n + d] * &t);
                        }
                        out.push(acc.scale(0.5));
                    }
                }
            }
            Ok(out)
        });
        Ok(Connection {
            gamma: TensorField::new(n, (1, 2), Weight::ZERO, eval),
            minimal_complex: false,
        })
    }

    /// Minimal complex connection built from a torsion-free connection `D`:
    /// `∇_X Y = D_X Y − ¼[(D_{JY}J)X + J(D_Y J)X + 2J(D_X J)Y]`.
    pub fn minimal_complex_from(d: &Connection, j: &ComplexStructure) -> Connection {
        let (d, jf) = (d.clone(), j.field.clone());
        let n = d.n();
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
            let gam = d.gamma.eval(x, order)?;
            let jj = jf.eval(x, order + 1)?;
            let sp = gam[0].space().clone();
            // (D_c J)^a_b
            let mut dj = Vec::with_capacity(n * n * n);
            for c in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let mut t = jj[a * n + b].derivative(c);
                        for e in 0..n {
                            t += &(&gam[(a * n + c) * n + e] * &jj[e * n + b]);
                            t -= &(&gam[(e * n + c) * n + b] * &jj[a * n + e]);
                        }
                        dj.push(t);
                    }
                }
            }
            let jt: Vec<Jet> = jj.iter().map(|v| v.truncate(order)).collect();
            let mut out = Vec::with_capacity(n * n * n);
            for a in 0..n {
                for c in 0..n {
                    for b in 0..n {
                        let mut q = Jet::zero(&sp, order);
                        for e in 0..n {
                            q += &(&jt[e * n + b] * &dj[(e * n + a) * n + c]);
                            q += &(&jt[a * n + e] * &dj[(b * n + e) * n + c]);
                            q.axpy(2.0, &(&jt[a * n + e] * &dj[(c * n + e) * n + b]));
                        }
                        out.push(&gam[(a * n + c) * n + b] - &q.scale(0.25));
                    }
                }
            }
            Ok(out)
        });
        Connection {
            gamma: TensorField::new(n, (1, 2), Weight::ZERO, eval),
            minimal_complex: true,
        }
    }
}

/// The data defining an almost c-projective structure in one chart.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub m: usize,
    pub j: ComplexStructure,
    pub conn: Connection,
}

impl Geometry {
    pub fn new(j: ComplexStructure, conn: Connection) -> Result<Geometry> {
        let n = j.n();
        if conn.n() != n {
            return Err(Error::Dimension("J and Γ live on different charts".into()));
        }
        if n < 4 {
            return Err(Error::Dimension("m ≥ 2 is required".into()));
        }
        Ok(Geometry { m: n / 2, j, conn })
    }

    pub fn n(&self) -> usize {
        2 * self.m
    }

    pub fn local(&self, x: &[f64], order: usize) -> Result<Local> {
        Local::new(Some(&self.j), &self.conn, x, order)
    }

    pub fn with_connection(&self, conn: Connection) -> Geometry {
        Geometry {
            m: self.m,
            j: self.j.clone(),
            conn,
        }
    }
}

/// `J` and `Γ` jets at a point, with the derived curvature quantities.
/// Every quantity involving `k` derivatives of `Γ` carries `order − k`.
pub struct Local {
    pub n: usize,
    pub m: usize,
    pub order: usize,
    pub x: Vec<f64>,
    j: Vec<Jet>,
    gamma: Vec<Jet>,
    gamma_zero: Vec<bool>,
}

impl Local {
    pub fn new(j: Option<&ComplexStructure>, conn: &Connection, x: &[f64], order: usize) -> Result<Local> {
        let n = conn.n();
        let gamma = conn.gamma.eval(x, order)?;
        let j = match j {
            Some(j) => j.field.eval(x, order)?,
            None => Vec::new(),
        };
        Ok(Local::from_jets(n, x, order, j, gamma))
    }

    pub fn from_jets(n: usize, x: &[f64], order: usize, j: Vec<Jet>, gamma: Vec<Jet>) -> Local {
        let gamma_zero = gamma.iter().map(is_zero).collect();
        Local {
            n,
            m: n / 2,
            order,
            x: x.to_vec(),
            j,
            gamma,
            gamma_zero,
        }
    }

    pub fn space(&self) -> Arc<JetSpace> {
        self.gamma[0].space().clone()
    }

    pub fn zero(&self, order: usize) -> Jet {
        Jet::zero(&self.space(), order)
    }

    pub fn constant(&self, order: usize, v: f64) -> Jet {
        Jet::constant(&self.space(), order, v)
    }

    pub fn j(&self, a: usize, b: usize) -> &Jet {
        assert!(!self.j.is_empty(), "complex structure not loaded");
        &self.j[a * self.n + b]
    }

    pub fn j_jets(&self) -> &[Jet] {
        &self.j
    }

    pub fn gamma(&self, c: usize, a: usize, b: usize) -> &Jet {
        &self.gamma[(c * self.n + a) * self.n + b]
    }

    pub fn gamma_jets(&self) -> &[Jet] {
        &self.gamma
    }

    fn gz(&self, c: usize, a: usize, b: usize) -> bool {
        self.gamma_zero[(c * self.n + a) * self.n + b]
    }

    /// `Γ^i_{ai}`.
    pub fn gamma_trace(&self, a: usize) -> Jet {
        let mut t = self.zero(self.order);
        for i in 0..self.n {
            t += self.gamma(i, a, i);
        }
        t
    }

    /// Covariant derivative of a weighted tensor. The derivative index is
    /// prepended. `w` is the real density weight `(w, w)`; densities are chart
    /// functions relative to the coordinate volume form.
    pub fn covariant(&self, t: &[Jet], upper: usize, lower: usize, w: f64) -> Vec<Jet> {
        let n = self.n;
        let rank = upper + lower;
        let size = n.pow(rank as u32);
        assert_eq!(t.len(), size, "tensor has the wrong number of components");
        let trace: Vec<Jet> = if w != 0.0 {
            (0..n).map(|c| self.gamma_trace(c)).collect()
        } else {
            Vec::new()
        };
        let live: Vec<bool> = t.iter().map(|j| !is_zero(j)).collect();
        let mut out = Vec::with_capacity(n * size);
        for c in 0..n {
            for f in 0..size {
                let idx = unflatten(n, rank, f);
                let mut acc = t[f].derivative(c);
                let mut jdx = idx.clone();
                for k in 0..rank {
                    for i in 0..n {
                        jdx[k] = i;
                        let tf = flat_index(n, &jdx);
                        if !live[tf] {
                            continue;
                        }
                        if k < upper {
                            if !self.gz(idx[k], c, i) {
                                acc += &(self.gamma(idx[k], c, i) * &t[tf]);
                            }
                        } else if !self.gz(i, c, idx[k]) {
                            acc -= &(self.gamma(i, c, idx[k]) * &t[tf]);
                        }
                    }
                    jdx[k] = idx[k];
                }
                if w != 0.0 && live[f] {
                    acc.axpy(w / (self.m as f64 + 1.0), &(&trace[c] * &t[f]));
                }
                out.push(acc);
            }
        }
        out
    }

    /// `T^c_{ab} = Γ^c_{ab} − Γ^c_{ba}`.
    pub fn torsion(&self) -> Vec<Jet> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n * n);
        for c in 0..n {
            for a in 0..n {
                for b in 0..n {
                    out.push(self.gamma(c, a, b) - self.gamma(c, b, a));
                }
            }
        }
        out
    }

    /// `N^a_{bc}` for `N(X,Y) = [X,Y] − [JX,JY] + J[JX,Y] + J[X,JY]`, the sign for
    /// which a complex connection has `(0,2)` torsion part `−¼N`.
    pub fn nijenhuis(&self) -> Vec<Jet> {
        let n = self.n;
        let dj: Vec<Vec<Jet>> = (0..n)
            .map(|d| self.j.iter().map(|v| v.derivative(d)).collect())
            .collect();
        let mut out = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut s = self.zero(self.order - 1);
                    for d in 0..n {
                        s -= &(self.j(d, b) * &dj[d][a * n + c]);
                        s += &(self.j(d, c) * &dj[d][a * n + b]);
                        let t = &dj[b][d * n + c] - &dj[c][d * n + b];
                        s += &(self.j(a, d) * &t);
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    /// `∇_c J^a_b`.
    pub fn nabla_j(&self) -> Vec<Jet> {
        self.covariant(&self.j, 1, 1, 0.0)
    }

    pub fn curvature(&self) -> Vec<Jet> {
        let n = self.n;
        let dg: Vec<Vec<Jet>> = (0..n)
            .map(|v| self.gamma.iter().map(|g| g.derivative(v)).collect())
            .collect();
        let mut out = Vec::with_capacity(n.pow(4));
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut r = &dg[a][(c * n + b) * n + d] - &dg[b][(c * n + a) * n + d];
                        for e in 0..n {
                            if !self.gz(c, a, e) && !self.gz(e, b, d) {
                                r += &(self.gamma(c, a, e) * self.gamma(e, b, d));
                            }
                            if !self.gz(c, b, e) && !self.gz(e, a, d) {
                                r -= &(self.gamma(c, b, e) * self.gamma(e, a, d));
                            }
                        }
                        out.push(r);
                    }
                }
            }
        }
        out
    }

    /// `R_{bd} = R_{ib}{}^i{}_d`, computed without forming the full curvature.
    pub fn ricci(&self) -> Vec<Jet> {
        let n = self.n;
        let trace: Vec<Jet> = (0..n).map(|e| self.gamma_trace(e)).collect();
        let mut out = Vec::with_capacity(n * n);
        for b in 0..n {
            for d in 0..n {
                let mut r = self.zero(self.order - 1);
                for i in 0..n {
                    r += &self.gamma(i, b, d).derivative(i);
                    r -= &self.gamma(i, i, d).derivative(b);
                }
                for e in 0..n {
                    if !self.gz(e, b, d) {
                        r += &(&trace[e] * self.gamma(e, b, d));
                    }
                    for i in 0..n {
                        if !self.gz(i, b, e) && !self.gz(e, i, d) {
                            r -= &(self.gamma(i, b, e) * self.gamma(e, i, d));
                        }
                    }
                }
                out.push(r);
            }
        }
        out
    }

    /// `P_ab = (1/(2(m+1)))(R_ab + (1/(m−1))(R_(ab) − J^i_(a J^j_b) R_ij))`.
    pub fn schouten(&self) -> Vec<Jet> {
        schouten_from_ricci(&self.ricci(), &self.j, self.n)
    }

    pub fn weyl(&self) -> Vec<Jet> {
        let p = self.schouten();
        weyl_from(&self.curvature(), &p, &self.j, self.n)
    }
}

fn is_zero(j: &Jet) -> bool {
    j.is_identically_zero()
}

pub fn schouten_from_ricci(ric: &[Jet], j: &[Jet], n: usize) -> Vec<Jet> {
    let m = (n / 2) as f64;
    let order = ric[0].order();
    let jt: Vec<Jet> = j.iter().map(|v| v.truncate(order)).collect();
    let mut jrj = vec![Jet::zero(ric[0].space(), order); n * n];
    for a in 0..n {
        for b in 0..n {
            let mut s = Jet::zero(ric[0].space(), order);
            for i in 0..n {
                for k in 0..n {
                    if jt[i * n + a].is_identically_zero() || jt[k * n + b].is_identically_zero() {
                        continue;
                    }
                    s += &(&(&jt[i * n + a] * &jt[k * n + b]) * &ric[i * n + k]);
                }
            }
            jrj[a * n + b] = s;
        }
    }
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let sym = (&ric[a * n + b] + &ric[b * n + a]).scale(0.5);
            let jsym = (&jrj[a * n + b] + &jrj[b * n + a]).scale(0.5);
            let mut p = ric[a * n + b].clone();
            p.axpy(1.0 / (m - 1.0), &(&sym - &jsym));
            out.push(p.scale(1.0 / (2.0 * (m + 1.0))));
        }
    }
    out
}

/// `W = R − 2δ^c_[a P_b]d + 2P_[ab]δ^c_d + 2J^i_[a P_b]i J^c_d + 2J^c_[a P_b]i J^i_d`.
pub fn weyl_from(r: &[Jet], p: &[Jet], j: &[Jet], n: usize) -> Vec<Jet> {
    let order = r[0].order().min(p[0].order());
    let jt: Vec<Jet> = j.iter().map(|v| v.truncate(order)).collect();
    // (JP)_{ab} = J^i_a P_bi
    let mut jp = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut s = Jet::zero(r[0].space(), order);
            for i in 0..n {
                s += &(&jt[i * n + a] * &p[b * n + i]);
            }
            jp.push(s);
        }
    }
    // (PJ)_{bd} = P_bi J^i_d
    let mut pj = Vec::with_capacity(n * n);
    for b in 0..n {
        for d in 0..n {
            let mut s = Jet::zero(r[0].space(), order);
            for i in 0..n {
                s += &(&p[b * n + i] * &jt[i * n + d]);
            }
            pj.push(s);
        }
    }
    let mut out = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            let pab = &p[a * n + b] - &p[b * n + a];
            let jpab = &jp[a * n + b] - &jp[b * n + a];
            for c in 0..n {
                for d in 0..n {
                    let mut w = r[((a * n + b) * n + c) * n + d].truncate(order);
                    if c == a {
                        w -= &p[b * n + d];
                    }
                    if c == b {
                        w += &p[a * n + d];
                    }
                    if c == d {
                        w += &pab;
                    }
                    w += &(&jpab * &jt[c * n + d]);
                    w += &(&jt[c * n + a] * &pj[b * n + d]);
                    w -= &(&jt[c * n + b] * &pj[a * n + d]);
                    out.push(w);
                }
            }
        }
    }
    out
}

fn values(n: usize, upper: usize, lower: usize, jets: &[Jet]) -> Tensor {
    Tensor::from_jets(n, upper, lower, jets)
}

pub fn nijenhuis(j: &ComplexStructure, p: &Point) -> Result<Tensor> {
    let n = j.n();
    let l = Local::new(Some(j), &Connection::flat(n), &p.coords, 1)?;
    Ok(values(n, 1, 2, &l.nijenhuis()))
}

pub fn torsion(conn: &Connection, p: &Point) -> Result<Tensor> {
    let l = Local::new(None, conn, &p.coords, 0)?;
    Ok(values(conn.n(), 1, 2, &l.torsion()))
}

pub fn curvature(conn: &Connection, p: &Point) -> Result<Tensor> {
    let l = Local::new(None, conn, &p.coords, 1)?;
    Ok(values(conn.n(), 1, 3, &l.curvature()))
}

pub fn ricci(conn: &Connection, p: &Point) -> Result<Tensor> {
    let l = Local::new(None, conn, &p.coords, 1)?;
    Ok(values(conn.n(), 0, 2, &l.ricci()))
}

pub fn schouten(conn: &Connection, j: &ComplexStructure, p: &Point) -> Result<Tensor> {
    let l = Local::new(Some(j), conn, &p.coords, 1)?;
    Ok(values(conn.n(), 0, 2, &l.schouten()))
}

pub fn weyl(conn: &Connection, j: &ComplexStructure, p: &Point) -> Result<Tensor> {
    let l = Local::new(Some(j), conn, &p.coords, 1)?;
    Ok(values(conn.n(), 1, 3, &l.weyl()))
}

/// Max-norms of `∇J` and `T + ¼N` at `p`.
pub fn minimal_complex_defect(geom: &Geometry, p: &Point) -> Result<(f64, f64)> {
    let l = geom.local(&p.coords, 1)?;
    let nj = Tensor::from_jets(l.n, 1, 2, &l.nabla_j()).max_abs();
    let t = l.torsion();
    let nn = l.nijenhuis();
    let defect = t
        .iter()
        .zip(&nn)
        .fold(0.0f64, |acc, (a, b)| acc.max((a.value() + 0.25 * b.value()).abs()));
    Ok((nj, defect))
}
