//! Curved-orbit decomposition: strict signature of `ζ`, the degeneracy
//! hypersurface `M₀`, metrics on the open strata and CR data on `M₀`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bgg::{metrizability_residual, scale_norm, special_boundary_scale, split_zeta_at};
use crate::determinants::{det_tractor_hermitian, det_weighted_hermitian_jets, sample_points, tractor_j};
use crate::error::{Error, Result};
use crate::field::TensorField;
use crate::geometry::Local;
use crate::jet::Jet;
use crate::linalg::{jet_inverse, pfaffian};
use crate::models::Sign;
use crate::tensor::Point;
use crate::tractor::Splitting;
use crate::transform::delta_gamma;

pub type StratumLabel = Sign;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub alg: f64,
    pub num: f64,
    pub eig: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            alg: 1e-10,
            num: 1e-8,
            eig: 1e-9,
        }
    }
}

/// Complex signature `(p, q, r)`: real eigenvalue counts halved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SignatureTriple {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl std::fmt::Display for SignatureTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.r == 0 {
            write!(f, "({},{})", self.p, self.q)
        } else {
            write!(f, "({},{},{})", self.p, self.q, self.r)
        }
    }
}

/// Signature of a real symmetric matrix commuting with `j`, counted over ℂ.
pub fn complex_signature(a: &DMatrix<f64>, j: &DMatrix<f64>, tol: &Tolerances) -> Result<SignatureTriple> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let defect = (j * a * j.transpose() - a).amax();
    if defect > tol.alg.max(1e-13) * scale {
        return Err(Error::Precondition(format!(
            "form is not J-Hermitian (defect {defect:.3e})"
        )));
    }
    let ev = SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues;
    let radius = ev.amax();
    let thr = tol.eig * radius;
    let p = ev.iter().filter(|&&v| v > thr).count();
    let q = ev.iter().filter(|&&v| v < -thr).count();
    let r = ev.len() - p - q;
    if p % 2 == 1 || q % 2 == 1 {
        return Err(Error::Precondition(format!(
            "eigenvalues are not J-paired: {p} positive, {q} negative, {r} zero"
        )));
    }
    Ok(SignatureTriple {
        p: p / 2,
        q: q / 2,
        r: r / 2,
    })
}

/// Signature and Pfaffian of `L(ζ)` at a point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TractorSignature {
    pub p: usize,
    pub q: usize,
    pub det: f64,
}

/// `None` when `L(ζ)` is degenerate at `x`.
pub fn tractor_signature(zeta: &TensorField, s: &Splitting, x: &Point, tol: &Tolerances) -> Result<Option<TractorSignature>> {
    let h = split_zeta_at(zeta, s, &x.coords, 2)?;
    let m = h.matrix()?;
    let det = det_tractor_hermitian(&h, x)?;
    let bound: f64 = m.row_iter().map(|r| r.norm()).product::<f64>().sqrt();
    if det.abs() <= tol.alg * bound.max(f64::MIN_POSITIVE) {
        return Ok(None);
    }
    let j = s.geometry.j.field.value(&x.coords)?.matrix();
    let sig = complex_signature(&m, &tractor_j(&j), tol)?;
    if sig.r != 0 {
        return Ok(None);
    }
    Ok(Some(TractorSignature { p: sig.p, q: sig.q, det }))
}

/// Label from the signature of `ζ` and that of `L(ζ)`. With `L(ζ)` degenerate
/// (flat solutions) the label is the sign of `𝐝𝐞𝐭ζ`.
pub fn label_for(sig: SignatureTriple, l: Option<TractorSignature>, tau: f64) -> Result<Sign> {
    match l {
        None if sig.r > 0 => Err(Error::Hypothesis(format!(
            "ζ degenerates with signature {sig} where L(ζ) is degenerate"
        ))),
        None => Ok(Sign::of(tau)),
        Some(_) if sig.r > 1 => Err(Error::Hypothesis(format!("ζ has corank {} > 1", sig.r))),
        Some(_) if sig.r == 1 => Ok(Sign::Zero),
        Some(t) if t.q >= 1 && (sig.p, sig.q) == (t.p, t.q - 1) => Ok(Sign::Plus),
        Some(t) if t.p >= 1 && (sig.p, sig.q) == (t.p - 1, t.q) => Ok(Sign::Minus),
        Some(t) => Err(Error::Hypothesis(format!(
            "signature {sig} of ζ is incompatible with L(ζ) of signature ({},{})",
            t.p, t.q
        ))),
    }
}

fn zeta_at(zeta: &TensorField, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(zeta.value(x)?.matrix())
}

fn j_at(s: &Splitting, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(s.geometry.j.field.value(x)?.matrix())
}

/// `𝐝𝐞𝐭ζ` at a chart point.
pub fn tau_value(zeta: &TensorField, s: &Splitting, x: &[f64]) -> Result<f64> {
    let z = zeta_at(zeta, x)?;
    let j = j_at(s, x)?;
    let a = &z * j.transpose();
    Ok(pfaffian(&((&a - a.transpose()) * 0.5)))
}

/// Strict signature of `|scale|·ζ` at `p` and its stratum label.
pub fn classify_point(
    zeta: &TensorField,
    s: &Splitting,
    p: &Point,
    scale: f64,
    tol: &Tolerances,
) -> Result<(SignatureTriple, StratumLabel)> {
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Domain("scale must be finite and nonzero".into()));
    }
    let l = tractor_signature(zeta, s, p, tol)?;
    classify_with(zeta, s, &p.coords, scale, l, tol).map(|(sig, lab, _)| (sig, lab))
}

fn classify_with(
    zeta: &TensorField,
    s: &Splitting,
    x: &[f64],
    scale: f64,
    l: Option<TractorSignature>,
    tol: &Tolerances,
) -> Result<(SignatureTriple, StratumLabel, f64)> {
    let z = zeta_at(zeta, x)? * scale.abs();
    let j = j_at(s, x)?;
    let sig = complex_signature(&z, &j, tol)?;
    let tau = tau_value(zeta, s, x)?;
    Ok((sig, label_for(sig, l, tau)?, tau))
}

/// `g⁻¹ = sgn(τ)τζ` and `g`, for points off `M₀`.
pub fn open_stratum_metric(zeta: &TensorField, s: &Splitting, p: &Point, tol: &Tolerances) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (sig, _) = classify_point(zeta, s, p, 1.0, tol)?;
    if sig.r != 0 {
        return Err(Error::Domain(format!("{:?} lies on the degeneracy locus", p.coords)));
    }
    let tau = tau_value(zeta, s, &p.coords)?;
    let ginv = zeta_at(zeta, &p.coords)? * tau.abs();
    let g = ginv
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("g⁻¹ is singular at {:?}", p.coords)))?;
    Ok((ginv, g))
}

/// An axis-aligned chart box with per-axis sample counts.
#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Grid> {
        if bounds.len() != resolution.len() {
            return Err(Error::Config("box and resolution have different lengths".into()));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Config("resolution must be at least 2 on every axis".into()));
        }
        if bounds.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("box must be nonempty and finite".into()));
        }
        Ok(Grid { bounds, resolution })
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.resolution.len()];
        let mut f = flat;
        for (k, &r) in self.resolution.iter().enumerate().rev() {
            idx[k] = f % r;
            f /= r;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.resolution).fold(0, |acc, (&i, &r)| acc * r + i)
    }

    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.bounds)
            .zip(&self.resolution)
            .map(|((&i, &(a, b)), &r)| a + (b - a) * i as f64 / (r - 1) as f64)
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Root of `τ` on the segment `[a, b]`, whose endpoint values have opposite
/// strict signs, refined until `|τ| < tol`. Illinois false position: the
/// bracket is kept throughout.
pub fn bisect_tau(zeta: &TensorField, s: &Splitting, a: &[f64], b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let fa = tau_value(zeta, s, a)?;
    let fb = tau_value(zeta, s, b)?;
    refine_root(zeta, s, a, b, fa, fb, tol)
}

fn refine_root(zeta: &TensorField, s: &Splitting, a: &[f64], b: &[f64], fa: f64, fb: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    let f = |t: f64| -> Result<(Vec<f64>, f64)> {
        let x: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect();
        let v = tau_value(zeta, s, &x)?;
        Ok((x, v))
    };
    if fa * fb >= 0.0 {
        return Err(Error::Precondition("segment does not bracket a sign change".into()));
    }
    let (mut lo, mut hi, mut flo, mut fhi) = (0.0, 1.0, fa, fb);
    let mut side = 0i8;
    for _ in 0..200 {
        let mut t = hi - fhi * (hi - lo) / (fhi - flo);
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let (x, v) = f(t)?;
        if v.abs() < tol {
            return Ok((x, v));
        }
        if v * flo > 0.0 {
            lo = t;
            flo = v;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fhi = v;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    Err(Error::Refinement(format!(
        "root refinement between {a:?} and {b:?} did not reach |τ| < {tol:e}"
    )))
}

/// `‖∇τ‖` for `τ = 𝐝𝐞𝐭ζ`.
pub fn grad_tau_norm(zeta: &TensorField, s: &Splitting, x: &[f64]) -> Result<f64> {
    let n = s.n();
    let z = zeta.eval(x, 1)?;
    let j = s.geometry.j.field.eval(x, 1)?;
    let t = det_weighted_hermitian_jets(&z, &j, n);
    Ok(t.gradient().iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// One sign-change edge and its root.
#[derive(Debug, Clone, Serialize)]
pub struct Root {
    pub coords: Vec<f64>,
    pub tau: f64,
    pub grad_tau_norm: f64,
}

/// Roots of `τ` on every axis edge of `grid` whose endpoints have opposite
/// strict signs of `τ`.
pub fn locate_hypersurface(zeta: &TensorField, s: &Splitting, grid: &Grid, tol: &Tolerances) -> Result<Vec<Root>> {
    let taus: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| tau_value(zeta, s, &grid.coords(&grid.index(k))))
        .collect::<Result<_>>()?;
    let edges = sign_change_edges(grid, &taus);
    roots_on_edges(zeta, s, grid, &taus, &edges, tol)
}

fn sign_change_edges(grid: &Grid, taus: &[f64]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for k in 0..grid.len() {
        let idx = grid.index(k);
        for axis in 0..idx.len() {
            if idx[axis] + 1 < grid.resolution[axis] {
                let mut jdx = idx.clone();
                jdx[axis] += 1;
                let l = grid.flat(&jdx);
                if taus[k] * taus[l] < 0.0 {
                    edges.push((k, l));
                }
            }
        }
    }
    edges
}

fn roots_on_edges(
    zeta: &TensorField,
    s: &Splitting,
    grid: &Grid,
    taus: &[f64],
    edges: &[(usize, usize)],
    tol: &Tolerances,
) -> Result<Vec<Root>> {
    edges
        .par_iter()
        .map(|&(k, l)| {
            let a = grid.coords(&grid.index(k));
            let b = grid.coords(&grid.index(l));
            let (x, tau) = refine_root(zeta, s, &a, &b, taus[k], taus[l], tol.alg)?;
            let g = grad_tau_norm(zeta, s, &x)?;
            if g < tol.num {
                return Err(Error::Hypothesis(format!(
                    "∇τ vanishes on the degeneracy locus at {x:?} (‖∇τ‖ = {g:.3e})"
                )));
            }
            Ok(Root {
                coords: x,
                tau,
                grad_tau_norm: g,
            })
        })
        .collect()
}

/// CR package at a point of `M₀`, built in the special boundary scale.
#[derive(Debug, Clone, Serialize)]
pub struct CrData {
    pub coords: Vec<f64>,
    /// Orthonormal (Euclidean) basis of `H`, as columns.
    #[serde(skip)]
    pub h_basis: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub reeb: Vec<f64>,
    /// `dθ(X, JY)` on `H` in the basis `h_basis`.
    #[serde(skip)]
    pub levi: DMatrix<f64>,
    pub theta_t: f64,
    pub reeb_contraction: f64,
    /// Component of `T` transverse to `H`, relative to `‖T‖`.
    pub reeb_transversality: f64,
    pub kernel_defect: f64,
    pub levi_constant: f64,
    pub levi_agreement: f64,
    pub levi_signature: (usize, usize),
    pub boundary_norm: f64,
}

fn nullspace(rows: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let n = rows.ncols();
    let e = SymmetricEigen::new(rows.transpose() * rows);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    DMatrix::from_columns(&order[..dim].iter().map(|&k| e.eigenvectors.column(k).into_owned()).collect::<Vec<_>>())
}

/// Pseudo-inverse of a symmetric matrix, dropping its `drop` smallest
/// eigenvalues in absolute value.
fn pseudo_inverse(a: &DMatrix<f64>, drop: usize) -> DMatrix<f64> {
    let e = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| e.eigenvalues[x].abs().total_cmp(&e.eigenvalues[y].abs()));
    let mut out = DMatrix::zeros(n, n);
    for &k in &order[drop..] {
        let v = e.eigenvectors.column(k);
        out += v * v.transpose() / e.eigenvalues[k];
    }
    out
}

fn values(v: &[Jet]) -> Vec<f64> {
    v.iter().map(Jet::value).collect()
}

/// θ, T, the Levi form by two routes, and the boundary-scale check at a root.
pub fn cr_data(zeta: &TensorField, s: &Splitting, p: &Point, tol: &Tolerances) -> Result<CrData> {
    let n = s.n();
    let x = &p.coords;
    let h = split_zeta_at(zeta, s, x, 4)?;
    let phi = jet_inverse(&h.matrix_jets()?, n + 2)?;
    let sp = phi[0].space().clone();
    let f = Jet::constant(&sp, 3, 1.0);
    let gamma = special_boundary_scale(&f, &h, &phi[0], p)?;
    // θ and T are normalized against each other by taking τ̂ = −2Φ₀₀
    let tau_hat = phi[0].scale(-2.0);
    let boundary_norm = scale_norm(&h, &gamma)?;

    let l = s.local(x, 2)?;
    let j = l.j_jets().to_vec();
    let jv = DMatrix::from_row_slice(n, n, &values(&j));
    // θ_b = J^i_b ∂_i(τ̂/γ)
    let u = &tau_hat * &gamma.recip();
    let theta: Vec<Jet> = (0..n)
        .map(|b| {
            let mut t = l.zero(1);
            for i in 0..n {
                t += &(&j[i * n + b] * &u.derivative(i));
            }
            t
        })
        .collect();
    let dtheta = DMatrix::from_fn(n, n, |a, b| theta[b].d1(a) - theta[a].d1(b));
    let theta_v = DVector::from_vec(values(&theta));

    // T = −(1/2m) J ∇^γ_i(γζ)^{ij}, ∇^γ the connection of the γ-splitting
    let dg = l.covariant(std::slice::from_ref(&gamma.truncate(2)), 0, 0, 1.0);
    let ginv = gamma.truncate(1).recip().scale(-0.5);
    let ups: Vec<Jet> = dg.iter().map(|d| d * &ginv).collect();
    let dgam = delta_gamma(&ups, &j, n);
    let gam: Vec<Jet> = l.gamma_jets().iter().zip(&dgam).map(|(a, b)| a + b).collect();
    let lg = Local::from_jets(n, x, 1, j.iter().map(|v| v.truncate(1)).collect(), gam);
    let z = zeta.eval(x, 1)?;
    let gz: Vec<Jet> = z.iter().map(|v| v * &gamma.truncate(1)).collect();
    let dgz = lg.covariant(&gz, 2, 0, 0.0);
    let div: Vec<f64> = (0..n)
        .map(|jj| (0..n).map(|i| dgz[(i * n + i) * n + jj].value()).sum())
        .collect();
    let m = s.m() as f64;
    let reeb = (&jv * DVector::from_vec(div)) * (-0.5 / m);
    let theta_t = theta_v.dot(&reeb);

    let dtau = DVector::from_vec(tau_hat.gradient());
    let constraints = DMatrix::from_rows(&[dtau.transpose(), theta_v.transpose()]);
    let hb = nullspace(&constraints, n - 2);
    let tm0 = nullspace(&DMatrix::from_rows(&[dtau.transpose()]), n - 1);
    let reeb_contraction = (reeb.transpose() * &dtheta * &tm0).amax();
    let along_h = &hb * (hb.transpose() * &reeb);
    let reeb_transversality = (&reeb - along_h).norm() / reeb.norm();

    let zv = DMatrix::from_row_slice(n, n, &values(&z));
    let kernel_defect = (&zv * &dtau).amax().max((&zv * &theta_v).amax());

    let levi = {
        let a = hb.transpose() * &dtheta * &jv * &hb;
        (&a + a.transpose()) * 0.5
    };
    let route2 = hb.transpose() * pseudo_inverse(&(zv * gamma.value()), 2) * &hb;
    let levi_constant = levi.dot(&route2) / route2.dot(&route2);
    let levi_agreement = (&levi - &route2 * levi_constant).norm() / levi.norm();
    let jh = hb.transpose() * &jv * &hb;
    let sig = complex_signature(&levi, &jh, &Tolerances { alg: 1e-6, ..*tol })?;
    if sig.r != 0 {
        return Err(Error::Hypothesis(format!("Levi form is degenerate at {x:?}")));
    }
    Ok(CrData {
        coords: x.clone(),
        h_basis: hb,
        theta: theta_v.iter().copied().collect(),
        reeb: reeb.iter().copied().collect(),
        levi,
        theta_t,
        reeb_contraction,
        reeb_transversality,
        kernel_defect,
        levi_constant,
        levi_agreement,
        levi_signature: (sig.p, sig.q),
        boundary_norm,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub coords: Vec<f64>,
    pub label: StratumLabel,
    pub signature: SignatureTriple,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RootRecord {
    pub root: Root,
    pub cr: Option<CrData>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrataSummary {
    pub counts: BTreeMap<String, usize>,
    pub signatures: BTreeMap<String, String>,
    pub m0_points: usize,
    pub max_residual: Option<f64>,
    pub tractor_signature: Option<(usize, usize)>,
    pub det_l_min: Option<f64>,
    pub det_l_max: Option<f64>,
    pub separated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratificationReport {
    pub grid: Grid,
    pub points: Vec<PointRecord>,
    pub m0: Vec<RootRecord>,
    pub summary: StrataSummary,
}

#[derive(Debug, Clone, Copy)]
pub struct StratifyOptions {
    pub tol: Tolerances,
    /// Evaluate the metrizability residual at every grid point.
    pub residuals: bool,
    /// Compute CR data at located roots.
    pub cr: bool,
    /// Cap on the number of roots that get CR data, taken at an even stride
    /// through the root list. `None` means every root.
    pub cr_limit: Option<usize>,
    /// Number of probe points for the signature of `L(ζ)`.
    pub probes: usize,
    pub seed: u64,
}

impl Default for StratifyOptions {
    fn default() -> Self {
        StratifyOptions {
            tol: Tolerances::default(),
            residuals: true,
            cr: true,
            cr_limit: Some(256),
            probes: 16,
            seed: 0,
        }
    }
}

/// Signature of `L(ζ)` from the box center and `probes` seeded points of the
/// box, which must all agree.
fn probe_tractor(zeta: &TensorField, s: &Splitting, grid: &Grid, opts: &StratifyOptions) -> Result<(Option<TractorSignature>, f64, f64)> {
    let mut pts = vec![Point::new(grid.center())?];
    let unit = sample_points(grid.bounds.len(), opts.probes, 1.0, opts.seed);
    for u in unit {
        let x = u
            .coords
            .iter()
            .zip(&grid.bounds)
            .map(|(t, (a, b))| a + (b - a) * 0.5 * (t + 1.0))
            .collect();
        pts.push(Point::new(x)?);
    }
    let sigs: Vec<Option<TractorSignature>> = pts
        .par_iter()
        .map(|p| tractor_signature(zeta, s, p, &opts.tol))
        .collect::<Result<_>>()?;
    let first = sigs[0];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (p, sig) in pts.iter().zip(&sigs) {
        let same = match (first, sig) {
            (None, None) => true,
            (Some(a), Some(b)) => (a.p, a.q) == (b.p, b.q),
            _ => false,
        };
        if !same {
            return Err(Error::Hypothesis(format!(
                "L(ζ) changes type between the box center and {:?}",
                p.coords
            )));
        }
        let d = sig.map(|t| t.det).unwrap_or(0.0);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok((first, lo, hi))
}

/// Labels on `grid`, the roots of `τ` on sign-change edges and, optionally, CR
/// data at every root.
pub fn stratify(zeta: &TensorField, s: &Splitting, grid: &Grid, opts: &StratifyOptions) -> Result<StratificationReport> {
    if grid.bounds.len() != s.n() {
        return Err(Error::Config(format!(
            "box has {} axes but the chart has dimension {}",
            grid.bounds.len(),
            s.n()
        )));
    }
    let (lsig, det_lo, det_hi) = probe_tractor(zeta, s, grid, opts)?;
    let points: Vec<PointRecord> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.coords(&grid.index(k));
            let (signature, label, tau) = classify_with(zeta, s, &x, 1.0, lsig, &opts.tol)?;
            let residual = if opts.residuals {
                Some(metrizability_residual(zeta, s, &Point::new(x.clone())?)?.norm())
            } else {
                None
            };
            Ok(PointRecord {
                coords: x,
                label,
                signature,
                tau,
                residual,
            })
        })
        .collect::<Result<_>>()?;

    let taus: Vec<f64> = points.iter().map(|r| r.tau).collect();
    let edges = sign_change_edges(grid, &taus);
    let roots = roots_on_edges(zeta, s, grid, &taus, &edges, &opts.tol)?;

    // every plus–minus edge must carry a root
    let mut separated = true;
    for k in 0..grid.len() {
        let idx = grid.index(k);
        for axis in 0..idx.len() {
            if idx[axis] + 1 < grid.resolution[axis] {
                let mut jdx = idx.clone();
                jdx[axis] += 1;
                let l = grid.flat(&jdx);
                let pair = (points[k].label, points[l].label);
                if matches!(pair, (Sign::Plus, Sign::Minus) | (Sign::Minus, Sign::Plus)) && taus[k] * taus[l] >= 0.0 {
                    separated = false;
                }
            }
        }
    }
    if !separated {
        return Err(Error::Refinement(
            "a plus–minus grid edge carries no sign change of τ; refine the grid".into(),
        ));
    }

    let stride = match opts.cr_limit {
        Some(k) if k > 0 => roots.len().div_ceil(k).max(1),
        Some(_) => usize::MAX,
        None => 1,
    };
    let m0: Vec<RootRecord> = roots
        .into_par_iter()
        .enumerate()
        .map(|(i, root)| {
            let cr = if opts.cr && lsig.is_some() && i % stride == 0 {
                Some(cr_data(zeta, s, &Point::new(root.coords.clone())?, &opts.tol)?)
            } else {
                None
            };
            Ok(RootRecord { root, cr })
        })
        .collect::<Result<_>>()?;

    let mut counts = BTreeMap::new();
    let mut signatures = BTreeMap::new();
    for lab in [Sign::Plus, Sign::Zero, Sign::Minus] {
        counts.insert(label_name(lab).to_string(), 0);
    }
    for r in &points {
        *counts.entry(label_name(r.label).to_string()).or_insert(0) += 1;
        signatures
            .entry(label_name(r.label).to_string())
            .or_insert_with(|| r.signature.to_string());
    }
    let max_residual = if opts.residuals {
        Some(points.iter().filter_map(|r| r.residual).fold(0.0, f64::max))
    } else {
        None
    };
    let summary = StrataSummary {
        counts,
        signatures,
        m0_points: m0.len(),
        max_residual,
        tractor_signature: lsig.map(|t| (t.p, t.q)),
        det_l_min: lsig.map(|_| det_lo),
        det_l_max: lsig.map(|_| det_hi),
        separated,
    };
    Ok(StratificationReport {
        grid: grid.clone(),
        points,
        m0,
        summary,
    })
}

/// Fraction of grid points whose label is the stratum of their orbit under `h`.
pub fn oracle_agreement(report: &StratificationReport, h: &DMatrix<Complex64>) -> Result<f64> {
    let mut hits = 0usize;
    for r in &report.points {
        let orbit = crate::models::orbit_oracle(h, &crate::models::homogeneous(&r.coords))?;
        hits += usize::from(r.label == crate::models::stratum_of_orbit(orbit));
    }
    Ok(hits as f64 / report.points.len().max(1) as f64)
}

pub fn label_name(s: Sign) -> &'static str {
    match s {
        Sign::Plus => "plus",
        Sign::Zero => "zero",
        Sign::Minus => "minus",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        cpm_model_with_form, diagonal_form, fs_metric, homogeneous, orbit_oracle, stratum_of_orbit,
    };
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn setup(key: &str) -> (crate::models::ModelPackage, Splitting) {
        let pkg = crate::models::from_key(key).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        (pkg, s)
    }

    #[test]
    fn signature_counting() {
        let j = DMatrix::from_row_slice(4, 4, &crate::geometry::standard_j(2));
        let tol = Tolerances::default();
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0, -1.0, -1.0]));
        assert_eq!(complex_signature(&a, &j, &tol).unwrap(), SignatureTriple { p: 1, q: 1, r: 0 });
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0, 1e-12, 1e-12]));
        assert_eq!(complex_signature(&b, &j, &tol).unwrap(), SignatureTriple { p: 1, q: 0, r: 1 });
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0]));
        assert!(complex_signature(&c, &j, &tol).is_err());
    }

    #[test]
    fn model_points_classify_by_orbit() {
        let (pkg, s) = setup("cpm:m=2,p=1,q=0");
        let tol = Tolerances::default();
        let h = pkg.h_form.clone().unwrap();
        let cases = [
            ([0.0, 0.0, 0.0, 0.0], SignatureTriple { p: 1, q: 1, r: 0 }, Sign::Minus),
            ([0.0, 0.0, 2.0, 0.0], SignatureTriple { p: 2, q: 0, r: 0 }, Sign::Plus),
            ([0.0, 0.0, 1.0, 0.0], SignatureTriple { p: 1, q: 0, r: 1 }, Sign::Zero),
        ];
        for (x, sig, label) in cases {
            let p = pt(&x);
            assert_eq!(classify_point(&pkg.zeta, &s, &p, 1.0, &tol).unwrap(), (sig, label));
            assert_eq!(stratum_of_orbit(orbit_oracle(&h, &homogeneous(&x)).unwrap()), label);
            for scale in [2.5, -0.3] {
                assert_eq!(classify_point(&pkg.zeta, &s, &p, scale, &tol).unwrap().1, label);
            }
        }
        assert!(classify_point(&pkg.zeta, &s, &pt(&[0.0; 4]), 0.0, &tol).is_err());
    }

    #[test]
    fn flipping_the_form_swaps_labels() {
        let tol = Tolerances::default();
        let h = diagonal_form(1, 0);
        let a = cpm_model_with_form(h.clone()).unwrap();
        let b = cpm_model_with_form(-h).unwrap();
        let sa = Splitting::new(a.geometry.clone());
        let sb = Splitting::new(b.geometry.clone());
        for x in crate::determinants::sample_points(4, 20, 2.0, 3) {
            let la = classify_point(&a.zeta, &sa, &x, 1.0, &tol).unwrap().1;
            let lb = classify_point(&b.zeta, &sb, &x, 1.0, &tol).unwrap().1;
            assert_eq!(la, lb.flip());
        }
    }

    #[test]
    fn open_stratum_metrics() {
        let tol = Tolerances::default();
        let (pkg, s) = setup("flat:m=2,sig=2,0");
        let (ginv, g) = open_stratum_metric(&pkg.zeta, &s, &pt(&[1.0, 0.0, 0.0, 1.0]), &tol).unwrap();
        assert_eq!(ginv, DMatrix::identity(4, 4));
        assert_eq!(g, DMatrix::identity(4, 4));

        let pkg = cpm_model_with_form(DMatrix::<Complex64>::identity(3, 3)).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let x = [0.4, -0.1, 0.7, 1.2];
        let (_, g) = open_stratum_metric(&pkg.zeta, &s, &pt(&x), &tol).unwrap();
        assert!((g - fs_metric(2).value(&x).unwrap().matrix()).amax() < 1e-13);

        let (pkg, s) = setup("cpm:m=2,p=1,q=0");
        let (ginv, _) = open_stratum_metric(&pkg.zeta, &s, &pt(&[0.0, 0.0, 2.0, 0.0]), &tol).unwrap();
        let j = DMatrix::from_row_slice(4, 4, &crate::geometry::standard_j(2));
        assert_eq!(complex_signature(&ginv, &j, &tol).unwrap(), SignatureTriple { p: 2, q: 0, r: 0 });
        let on = open_stratum_metric(&pkg.zeta, &s, &pt(&[0.0, 0.0, 1.0, 0.0]), &tol);
        assert!(matches!(on, Err(Error::Domain(_))));
    }

    #[test]
    fn hypersurface_roots_lie_on_the_null_cone() {
        let tol = Tolerances::default();
        let grid = Grid::new(vec![(-2.0, 2.0); 4], vec![6, 6, 6, 3]).unwrap();
        let (pkg, s) = setup("cpm:m=2,p=1,q=0");
        let h = pkg.h_form.clone().unwrap();
        let roots = locate_hypersurface(&pkg.zeta, &s, &grid, &tol).unwrap();
        assert!(!roots.is_empty());
        for r in &roots {
            assert!(r.tau.abs() < 1e-10 && r.grad_tau_norm > 1e-6);
            let v = crate::models::h_value(&h, &homogeneous(&r.coords));
            assert!(v.abs() < 1e-8, "{v}");
        }
        let definite = cpm_model_with_form(DMatrix::<Complex64>::identity(3, 3)).unwrap();
        let sd = Splitting::new(definite.geometry.clone());
        assert!(locate_hypersurface(&definite.zeta, &sd, &grid, &tol).unwrap().is_empty());
        let (flat, sf) = setup("flat:m=2,sig=1,1");
        assert!(locate_hypersurface(&flat.zeta, &sf, &grid, &tol).unwrap().is_empty());
    }

    #[test]
    fn cr_package_on_model_roots() {
        let tol = Tolerances::default();
        for (key, levi) in [("cpm:m=2,p=1,q=0", (1, 0)), ("cpm:m=2,p=0,q=1", (0, 1)), ("cpm:m=3,p=1,q=1", (1, 1))] {
            let (pkg, s) = setup(key);
            let n = 2 * pkg.m();
            let a = vec![0.1; n];
            let mut b = a.clone();
            b[n - 2] = 3.0;
            let (x, _) = bisect_tau(&pkg.zeta, &s, &a, &b, 1e-12).unwrap();
            let cr = cr_data(&pkg.zeta, &s, &pt(&x), &tol).unwrap();
            assert!((cr.theta_t - 1.0).abs() < 1e-8, "{key}: {}", cr.theta_t);
            assert!(cr.reeb_contraction < 1e-8);
            assert!(cr.kernel_defect < 1e-8);
            assert!(cr.levi_agreement < 1e-7);
            assert!((cr.levi_constant - 2.0).abs() < 1e-6);
            assert!(cr.boundary_norm.abs() < 1e-8);
            assert!(cr.reeb_transversality > 1e-3);
            assert_eq!(cr.levi_signature, levi, "{key}");
            assert_eq!(cr.h_basis.ncols(), n - 2);
            let th = nalgebra::DVector::from_vec(cr.theta.clone());
            assert!((cr.h_basis.transpose() * th).amax() < 1e-12);
        }
    }

    #[test]
    fn small_stratification_matches_oracle() {
        let grid = Grid::new(vec![(-2.0, 2.0); 4], vec![7, 7, 7, 3]).unwrap();
        let opts = StratifyOptions { cr_limit: Some(8), ..Default::default() };
        let (pkg, s) = setup("cpm:m=2,p=1,q=0");
        let h = pkg.h_form.clone().unwrap();
        let rep = stratify(&pkg.zeta, &s, &grid, &opts).unwrap();
        assert_eq!(rep.points.len(), grid.len());
        for r in &rep.points {
            assert_eq!(r.label, stratum_of_orbit(orbit_oracle(&h, &homogeneous(&r.coords)).unwrap()));
        }
        assert!(rep.summary.separated);
        assert_eq!(oracle_agreement(&rep, &h).unwrap(), 1.0);
        assert!(oracle_agreement(&rep, &(-h.clone())).unwrap() < 0.5);
        assert!(rep.summary.max_residual.unwrap() < 1e-10);
        assert_eq!(rep.m0.iter().filter(|r| r.cr.is_some()).count(), 8);
        assert_eq!(rep.summary.tractor_signature, Some((2, 1)));

        let (flat, sf) = setup("flat:m=2,sig=2,0");
        let rep = stratify(&flat.zeta, &sf, &grid, &opts).unwrap();
        assert_eq!(rep.summary.counts["plus"], grid.len());
        assert_eq!(rep.summary.m0_points, 0);

        let d = cpm_model_with_form(DMatrix::<Complex64>::identity(3, 3)).unwrap();
        let sd = Splitting::new(d.geometry.clone());
        let rep = stratify(&d.zeta, &sd, &grid, &opts).unwrap();
        assert_eq!(rep.summary.m0_points, 0);
        assert_eq!(rep.summary.counts.values().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![(0.0, 1.0); 2], vec![1, 3]).is_err());
        assert!(Grid::new(vec![(1.0, 1.0); 2], vec![2, 3]).is_err());
        assert!(Grid::new(vec![(0.0, 1.0); 2], vec![2]).is_err());
        let g = Grid::new(vec![(0.0, 1.0), (-1.0, 1.0)], vec![3, 5]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.index(g.flat(&[2, 3])), vec![2, 3]);
        assert_eq!(g.coords(&[2, 4]), vec![1.0, 1.0]);
    }
}
