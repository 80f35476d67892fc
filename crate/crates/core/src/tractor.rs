//! Splittings, the metricity bundle `𝓗*` and its dual, and the Thomas
//! D-operator.
//!
//! Sections are stored as slot jets at a point against an explicit
//! [`Splitting`]. Moving between splittings always goes through a [`Upsilon`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{TensorField, Weight};
use crate::geometry::{Geometry, Local};
use crate::jet::Jet;
use crate::tensor::Point;
use crate::transform::{density_derivative, transform_connection, Upsilon};

/// A choice of connection in the class, i.e. a Weyl structure.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub geometry: Geometry,
    /// Accumulated change relative to the splitting this one was derived from.
    pub offset: Option<Upsilon>,
}

impl Splitting {
    pub fn new(geometry: Geometry) -> Splitting {
        Splitting {
            geometry,
            offset: None,
        }
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    pub fn m(&self) -> usize {
        self.geometry.m
    }

    pub fn local(&self, x: &[f64], order: usize) -> Result<Local> {
        self.geometry.local(x, order)
    }

    /// The splitting of `∇ + Υ`.
    pub fn change(&self, u: &Upsilon) -> Splitting {
        let g = &self.geometry;
        Splitting {
            geometry: g.with_connection(transform_connection(&g.conn, &g.j, u)),
            offset: Some(match &self.offset {
                Some(o) => o.add(u),
                None => u.clone(),
            }),
        }
    }
}

/// `(ζ^{ab}, λ^a, ν)`, all of weight `(−1,−1)`.
#[derive(Debug, Clone)]
pub struct TractorHSection {
    pub x: Vec<f64>,
    pub zeta: Vec<Jet>,
    pub lambda: Vec<Jet>,
    pub nu: Jet,
    pub splitting: Splitting,
}

/// `(τ, λ_a, φ_ab)`, all of weight `(1,1)`.
#[derive(Debug, Clone)]
pub struct TractorHDualSection {
    pub x: Vec<f64>,
    pub tau: Jet,
    pub lambda: Vec<Jet>,
    pub phi: Vec<Jet>,
    pub splitting: Splitting,
}

/// Slot values of a derivative `∇^𝒯_c h` for one direction `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTriple {
    pub top: Vec<f64>,
    pub middle: Vec<f64>,
    pub bottom: f64,
}

impl SlotTriple {
    pub fn max_abs(&self) -> f64 {
        self.top
            .iter()
            .chain(&self.middle)
            .fold(self.bottom.abs(), |a, v| a.max(v.abs()))
    }
}

fn values(v: &[Jet]) -> Vec<f64> {
    v.iter().map(Jet::value).collect()
}

fn jz(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl TractorHSection {
    pub fn order(&self) -> usize {
        self.zeta
            .iter()
            .chain(&self.lambda)
            .map(Jet::order)
            .chain(std::iter::once(self.nu.order()))
            .min()
            .unwrap_or(0)
    }

    pub fn zeta_matrix(&self) -> DMatrix<f64> {
        let n = self.lambda.len();
        DMatrix::from_row_slice(n, n, &values(&self.zeta))
    }

    /// The `(2m+2) × (2m+2)` real symmetric slot matrix
    /// `S = [[4ν I₂, B], [Bᵀ, ζ]]` with `B = [λᵀ; (Jλ)ᵀ]`.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.lambda.len();
        let j = self.splitting.geometry.j.field.value(&self.x)?.matrix();
        let lam = DVector::from_vec(values(&self.lambda));
        let jl = &j * &lam;
        let mut s = DMatrix::zeros(n + 2, n + 2);
        let nu = self.nu.value();
        s[(0, 0)] = 4.0 * nu;
        s[(1, 1)] = 4.0 * nu;
        for a in 0..n {
            s[(0, a + 2)] = lam[a];
            s[(a + 2, 0)] = lam[a];
            s[(1, a + 2)] = jl[a];
            s[(a + 2, 1)] = jl[a];
        }
        s.view_mut((2, 2), (n, n)).copy_from(&self.zeta_matrix());
        Ok(s)
    }
}

impl TractorHSection {
    /// [`TractorHSection::matrix`] with jet entries, row-major.
    pub fn matrix_jets(&self) -> Result<Vec<Jet>> {
        let n = self.lambda.len();
        let d = n + 2;
        let order = self.order();
        let sp = self.nu.space().clone();
        let j = self.splitting.geometry.j.field.eval(&self.x, order)?;
        let mut s = vec![Jet::zero(&sp, order); d * d];
        let nu4 = self.nu.truncate(order).scale(4.0);
        s[0] = nu4.clone();
        s[d + 1] = nu4;
        for a in 0..n {
            let mut jl = Jet::zero(&sp, order);
            for i in 0..n {
                jl += &(&j[a * n + i] * &self.lambda[i]);
            }
            let l = self.lambda[a].truncate(order);
            s[a + 2] = l.clone();
            s[(a + 2) * d] = l;
            s[d + a + 2] = jl.clone();
            s[(a + 2) * d + 1] = jl;
            for b in 0..n {
                s[(a + 2) * d + b + 2] = self.zeta[a * n + b].truncate(order);
            }
        }
        Ok(s)
    }
}

impl TractorHDualSection {
    /// Read slots back from a jet matrix laid out like [`TractorHDualSection::matrix`].
    pub fn from_matrix_jets(mat: &[Jet], n: usize, x: &[f64], splitting: Splitting) -> TractorHDualSection {
        let d = n + 2;
        TractorHDualSection {
            x: x.to_vec(),
            tau: mat[0].clone(),
            lambda: (0..n).map(|a| mat[a + 2].scale(0.5)).collect(),
            phi: (0..n * n)
                .map(|k| mat[(k / n + 2) * d + k % n + 2].scale(0.25))
                .collect(),
            splitting,
        }
    }
}

impl TractorHDualSection {
    pub fn phi_matrix(&self) -> DMatrix<f64> {
        let n = self.lambda.len();
        DMatrix::from_row_slice(n, n, &values(&self.phi))
    }

    /// `Φ = [[τ I₂, 2Λ], [2Λᵀ, 4φ]]` with `Λ = [λᵀ; −(λJ)ᵀ]`, the matrix that
    /// inverts [`TractorHSection::matrix`].
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.lambda.len();
        let j = self.splitting.geometry.j.field.value(&self.x)?.matrix();
        let lam = DVector::from_vec(values(&self.lambda));
        let lj = j.transpose() * &lam;
        let mut s = DMatrix::zeros(n + 2, n + 2);
        s[(0, 0)] = self.tau.value();
        s[(1, 1)] = self.tau.value();
        for a in 0..n {
            s[(0, a + 2)] = 2.0 * lam[a];
            s[(a + 2, 0)] = 2.0 * lam[a];
            s[(1, a + 2)] = -2.0 * lj[a];
            s[(a + 2, 1)] = -2.0 * lj[a];
        }
        s.view_mut((2, 2), (n, n)).copy_from(&(self.phi_matrix() * 4.0));
        Ok(s)
    }
}

/// Report of the four splitting-tractor relations, as max deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    pub yx: f64,
    pub yw: f64,
    pub zx: f64,
    pub zw: f64,
}

impl RelationReport {
    pub fn max(&self) -> f64 {
        self.yx.max(self.yw).max(self.zx).max(self.zw)
    }
}

/// `Y·X = 1, Y·W = 0, Z·X = 0, Z·W = δ` for the realified standard tractor
/// `𝓔^𝒜 ≅ 𝓔(−1,0) ⊕ TM(−1,0)`. Hatted `Y, W` of a changed splitting are
/// expressed in the frame of the splitting it came from.
pub fn splitting_relation_check(s: &Splitting, p: &Point) -> Result<RelationReport> {
    let n = s.n();
    let d = n + 2;
    let mut x = DMatrix::zeros(d, 2);
    let mut y = DMatrix::zeros(2, d);
    let mut z = DMatrix::zeros(n, d);
    let mut w = DMatrix::zeros(d, n);
    for k in 0..2 {
        x[(k, k)] = 1.0;
        y[(k, k)] = 1.0;
    }
    for a in 0..n {
        z[(a, a + 2)] = 1.0;
        w[(a + 2, a)] = 1.0;
    }
    if let Some(u) = &s.offset {
        // the complex 1-form Υ_b − iΥ_i J^i_b acting on the top slot
        let uv = u.one_form.value(&p.coords)?;
        let j = s.geometry.j.field.value(&p.coords)?.matrix();
        let uj = j.transpose() * DVector::from_vec(uv.data.clone());
        let mut um = DMatrix::zeros(2, n);
        for b in 0..n {
            um[(0, b)] = uv.data[b];
            um[(1, b)] = -uj[b];
        }
        w = &w + &x * &um;
        y = &y - &um * &z;
    }
    let dev = |a: DMatrix<f64>, e: DMatrix<f64>| (a - e).amax();
    Ok(RelationReport {
        yx: dev(&y * &x, DMatrix::identity(2, 2)),
        yw: dev(&y * &w, DMatrix::zeros(2, n)),
        zx: dev(&z * &x, DMatrix::zeros(n, 2)),
        zw: dev(&z * &w, DMatrix::identity(n, n)),
    })
}

/// Re-express `h` in the splitting `∇ + Υ`:
/// `ζ̂ = ζ`, `λ̂ = λ − 2ζΥ`, `ν̂ = ν − Υ·λ + ζ(Υ,Υ)`.
#[allow(non_snake_case)]
pub fn change_splitting_H(h: &TractorHSection, u: &Upsilon) -> Result<TractorHSection> {
    let n = h.lambda.len();
    let order = h.order();
    let uu = u.one_form.eval(&h.x, order)?;
    let mut zu = Vec::with_capacity(n);
    for a in 0..n {
        let mut s = Jet::zero(uu[0].space(), order);
        for b in 0..n {
            s += &(&h.zeta[a * n + b] * &uu[b]);
        }
        zu.push(s);
    }
    let lambda: Vec<Jet> = (0..n).map(|a| &h.lambda[a] - &zu[a].scale(2.0)).collect();
    let mut nu = h.nu.clone();
    for a in 0..n {
        nu -= &(&uu[a] * &h.lambda[a]);
        nu += &(&uu[a] * &zu[a]);
    }
    Ok(TractorHSection {
        x: h.x.clone(),
        zeta: h.zeta.clone(),
        lambda,
        nu,
        splitting: h.splitting.change(u),
    })
}

/// Dual law: `τ̂ = τ`, `λ̂ = λ + τΥ`, `φ̂ = φ + Herm(Υ⊗λ)·2 + τ·Herm(Υ⊗Υ)`,
/// obtained from `Φ̂ = E^{−T} Φ E^{−1}`.
#[allow(non_snake_case)]
pub fn change_splitting_Hdual(h: &TractorHDualSection, u: &Upsilon) -> Result<TractorHDualSection> {
    let n = h.lambda.len();
    let order = h
        .phi
        .iter()
        .chain(&h.lambda)
        .map(Jet::order)
        .min()
        .unwrap_or(0)
        .min(h.tau.order());
    let uu = u.one_form.eval(&h.x, order)?;
    let jj = h.splitting.geometry.j.field.eval(&h.x, order)?;
    let sp = uu[0].space().clone();
    let lam: Vec<Jet> = (0..n).map(|a| &h.lambda[a] + &(&h.tau * &uu[a])).collect();
    let uj: Vec<Jet> = (0..n)
        .map(|a| {
            let mut s = Jet::zero(&sp, order);
            for i in 0..n {
                s += &(&uu[i] * &jj[i * n + a]);
            }
            s
        })
        .collect();
    let lj: Vec<Jet> = (0..n)
        .map(|a| {
            let mut s = Jet::zero(&sp, order);
            for i in 0..n {
                s += &(&h.lambda[i] * &jj[i * n + a]);
            }
            s
        })
        .collect();
    let mut phi = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            // ¼ Vᵀ(2Λ) + ¼(2Λ)ᵀV + ¼ τ VᵀV with V = [2Υ; −2ΥJ]
            let mut t = h.phi[a * n + b].clone();
            t += &(&uu[a] * &h.lambda[b]);
            t += &(&uu[b] * &h.lambda[a]);
            t += &(&uj[a] * &lj[b]);
            t += &(&uj[b] * &lj[a]);
            let uu2 = &(&uu[a] * &uu[b]) + &(&uj[a] * &uj[b]);
            t += &(&h.tau * &uu2);
            phi.push(t);
        }
    }
    Ok(TractorHDualSection {
        x: h.x.clone(),
        tau: h.tau.clone(),
        lambda: lam,
        phi,
        splitting: h.splitting.change(u),
    })
}

/// `∇^𝒯_c h` for every direction `c`, as slot jets one order lower:
/// `(∇_cζ^{ab} + δ_c^{(a}λ^{b)} + J^{(a}_c(Jλ)^{b)}, ∇_cλ^b + 2δ^b_cν − 2P_{ci}ζ^{ib},
/// ∇_cν − P_{ci}λ^i)`.
pub fn tractor_derivative_h_jets(h: &TractorHSection) -> Result<Vec<TractorHSection>> {
    let order = h.order();
    if order == 0 {
        return Err(Error::Precondition("slots need at least one derivative".into()));
    }
    let n = h.lambda.len();
    // Γ at `order` gives P at `order − 1`, matching the differentiated slots.
    let l = h.splitting.local(&h.x, order)?;
    let p = l.schouten();
    let dz = l.covariant(&h.zeta, 2, 0, -1.0);
    let dl = l.covariant(&h.lambda, 1, 0, -1.0);
    let dn = l.covariant(std::slice::from_ref(&h.nu), 0, 0, -1.0);
    let o = order - 1;
    let jt: Vec<Jet> = l.j_jets().iter().map(|v| v.truncate(o)).collect();
    let lam: Vec<Jet> = h.lambda.iter().map(|v| v.truncate(o)).collect();
    let jl: Vec<Jet> = (0..n)
        .map(|a| {
            let mut s = l.zero(o);
            for i in 0..n {
                s += &(&jt[a * n + i] * &lam[i]);
            }
            s
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let mut zeta = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let mut t = dz[(c * n + a) * n + b].clone();
                let mut sym = l.zero(o);
                if a == c {
                    sym += &lam[b];
                }
                if b == c {
                    sym += &lam[a];
                }
                sym += &(&jt[a * n + c] * &jl[b]);
                sym += &(&jt[b * n + c] * &jl[a]);
                t.axpy(0.5, &sym);
                zeta.push(t);
            }
        }
        let mut lambda = Vec::with_capacity(n);
        for b in 0..n {
            let mut t = dl[c * n + b].clone();
            if b == c {
                t.axpy(2.0, &h.nu);
            }
            for i in 0..n {
                t.axpy(-2.0, &(&p[c * n + i] * &h.zeta[i * n + b]));
            }
            lambda.push(t);
        }
        let mut nu = dn[c].clone();
        for i in 0..n {
            nu -= &(&p[c * n + i] * &h.lambda[i]);
        }
        out.push(TractorHSection {
            x: h.x.clone(),
            zeta,
            lambda,
            nu,
            splitting: h.splitting.clone(),
        });
    }
    Ok(out)
}

fn triple_of(h: &TractorHSection) -> SlotTriple {
    SlotTriple {
        top: values(&h.zeta),
        middle: values(&h.lambda),
        bottom: h.nu.value(),
    }
}

#[allow(non_snake_case)]
pub fn tractor_derivative_H(h: &TractorHSection, c: usize) -> Result<SlotTriple> {
    let all = tractor_derivative_h_jets(h)?;
    all.get(c)
        .map(triple_of)
        .ok_or_else(|| Error::Dimension(format!("direction {c} out of range")))
}

/// `∇^𝒯_c` on `𝓗`: `(∇_cτ − 2λ_c, ∇_cλ_a + P_caτ − φ_ca,
/// ∇_cφ_ab + 2P_c(bλ_a) + 2P_ciλ_j J^i_(a J^j_b))`.
pub fn tractor_derivative_hdual_jets(h: &TractorHDualSection) -> Result<Vec<TractorHDualSection>> {
    let order = h
        .phi
        .iter()
        .chain(&h.lambda)
        .map(Jet::order)
        .min()
        .unwrap_or(0)
        .min(h.tau.order());
    if order == 0 {
        return Err(Error::Precondition("slots need at least one derivative".into()));
    }
    let n = h.lambda.len();
    let l = h.splitting.local(&h.x, order)?;
    let p = l.schouten();
    let dt = l.covariant(std::slice::from_ref(&h.tau), 0, 0, 1.0);
    let dl = l.covariant(&h.lambda, 0, 1, 1.0);
    let dp = l.covariant(&h.phi, 0, 2, 1.0);
    let o = order - 1;
    let jt: Vec<Jet> = l.j_jets().iter().map(|v| v.truncate(o)).collect();
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        // (PJ)_{c a} = P_ci J^i_a and (λJ)_b = λ_j J^j_b
        let pj: Vec<Jet> = (0..n)
            .map(|a| {
                let mut s = l.zero(o);
                for i in 0..n {
                    s += &(&p[c * n + i] * &jt[i * n + a]);
                }
                s
            })
            .collect();
        let lj: Vec<Jet> = (0..n)
            .map(|b| {
                let mut s = l.zero(o);
                for k in 0..n {
                    s += &(&h.lambda[k] * &jt[k * n + b]);
                }
                s
            })
            .collect();
        let tau = &dt[c] - &h.lambda[c].scale(2.0);
        let lambda: Vec<Jet> = (0..n)
            .map(|a| {
                let mut t = dl[c * n + a].clone();
                t += &(&p[c * n + a] * &h.tau);
                t -= &h.phi[c * n + a];
                t
            })
            .collect();
        let mut phi = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let mut t = dp[(c * n + a) * n + b].clone();
                t += &(&p[c * n + b] * &h.lambda[a]);
                t += &(&p[c * n + a] * &h.lambda[b]);
                t += &(&pj[a] * &lj[b]);
                t += &(&pj[b] * &lj[a]);
                phi.push(t);
            }
        }
        out.push(TractorHDualSection {
            x: h.x.clone(),
            tau,
            lambda,
            phi,
            splitting: h.splitting.clone(),
        });
    }
    Ok(out)
}

#[allow(non_snake_case)]
pub fn tractor_derivative_Hdual(h: &TractorHDualSection, c: usize) -> Result<SlotTriple> {
    let all = tractor_derivative_hdual_jets(h)?;
    all.get(c)
        .map(|d| SlotTriple {
            top: values(&d.phi),
            middle: values(&d.lambda),
            bottom: d.tau.value(),
        })
        .ok_or_else(|| Error::Dimension(format!("direction {c} out of range")))
}

/// Cotractor slot pair `(σ, μ_a)` twisted by `𝓔(0, w′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CotractorSlots {
    pub sigma: Complex64,
    pub mu: Vec<Complex64>,
    pub weight: Weight,
}

impl CotractorSlots {
    /// `μ̂ = μ + (Υ − iΥJ)σ + (w′/w)(Υ + iΥJ)σ`.
    pub fn change_splitting(&self, s: &Splitting, u: &Upsilon, p: &Point) -> Result<CotractorSlots> {
        let n = self.mu.len();
        let uv = u.one_form.value(&p.coords)?;
        let j = s.geometry.j.field.value(&p.coords)?;
        let ratio = if self.weight.w == 0.0 {
            0.0
        } else {
            self.weight.w_prime / self.weight.w
        };
        let mu = (0..n)
            .map(|a| {
                let uj: f64 = (0..n).map(|i| uv.data[i] * j.get(&[i, a])).sum();
                let hol = Complex64::new(uv.data[a], -uj);
                self.mu[a] + hol * self.sigma + hol.conj() * self.sigma * ratio
            })
            .collect();
        Ok(CotractorSlots {
            sigma: self.sigma,
            mu,
            weight: self.weight,
        })
    }
}

/// `D_𝒜 s = (w s, ∇_a s)` for a scalar density of weight `(w, w′)`.
#[allow(non_snake_case)]
pub fn thomasD_density(s: &TensorField, split: &Splitting, p: &Point) -> Result<CotractorSlots> {
    if s.rank() != 0 {
        return Err(Error::Dimension("Thomas D acts on scalar densities".into()));
    }
    let weight = Weight::new(s.weight.w, s.weight.w_prime)?;
    if weight.w == 0.0 && weight.w_prime != 0.0 {
        return Err(Error::Weight("weight (0, w′) with w′ ≠ 0 has no cotractor lift".into()));
    }
    let l = split.local(&p.coords, 0)?;
    let f = s.eval(&p.coords, 1)?;
    Ok(CotractorSlots {
        sigma: Complex64::new(weight.w * f[0].value(), 0.0),
        mu: density_derivative(&l, &f[0], weight),
        weight,
    })
}

/// Max-norm of `J ζ Jᵀ − ζ` for a slot matrix block.
pub fn hermitian_defect(zeta: &DMatrix<f64>, j: &DMatrix<f64>) -> f64 {
    (j * zeta * j.transpose() - zeta).amax()
}

/// Pairing used by tests: `Σ_a λ^a η_a`.
pub fn pair(a: &[f64], b: &[f64]) -> f64 {
    jz(a, b)
}
