//! Model geometries: flat `ℂᵐ` and the homogeneous `ℂPᵐ` in an affine chart.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{TensorField, Weight};
use crate::geometry::{ComplexStructure, Connection, Geometry};
use crate::jet::Jet;

/// A complex-valued jet.
#[derive(Clone, Debug)]
pub struct CJet {
    pub re: Jet,
    pub im: Jet,
}

impl CJet {
    pub fn real(re: Jet) -> CJet {
        let im = re.scale(0.0);
        CJet { re, im }
    }

    pub fn constant(like: &Jet, c: Complex64) -> CJet {
        CJet {
            re: Jet::constant(like.space(), like.order(), c.re),
            im: Jet::constant(like.space(), like.order(), c.im),
        }
    }

    pub fn conj(&self) -> CJet {
        CJet {
            re: self.re.clone(),
            im: -&self.im,
        }
    }

    pub fn add(&self, o: &CJet) -> CJet {
        CJet {
            re: &self.re + &o.re,
            im: &self.im + &o.im,
        }
    }

    pub fn sub(&self, o: &CJet) -> CJet {
        CJet {
            re: &self.re - &o.re,
            im: &self.im - &o.im,
        }
    }

    pub fn mul(&self, o: &CJet) -> CJet {
        CJet {
            re: &(&self.re * &o.re) - &(&self.im * &o.im),
            im: &(&self.re * &o.im) + &(&self.im * &o.re),
        }
    }

    pub fn scale(&self, c: Complex64) -> CJet {
        CJet {
            re: &self.re.scale(c.re) - &self.im.scale(c.im),
            im: &self.re.scale(c.im) + &self.im.scale(c.re),
        }
    }
}

/// Complex coordinate jets `z_k = x_{2k} + i x_{2k+1}`.
pub fn complex_coordinates(x: &[Jet]) -> Vec<CJet> {
    x.chunks(2)
        .map(|p| CJet {
            re: p[0].clone(),
            im: p[1].clone(),
        })
        .collect()
}

/// Real `2m × 2m` matrix of a complex `m × m` matrix acting on `ℂᵐ ≅ ℝ^{2m}`.
/// For Hermitian `H` this is also the Gram matrix of `Re(X* H Y)`.
pub fn realify(mat: &[CJet], m: usize) -> Vec<Jet> {
    let n = 2 * m;
    let mut out = vec![mat[0].re.scale(0.0); n * n];
    for g in 0..m {
        for b in 0..m {
            let c = &mat[g * m + b];
            out[(2 * g) * n + 2 * b] = c.re.clone();
            out[(2 * g) * n + 2 * b + 1] = -&c.im;
            out[(2 * g + 1) * n + 2 * b] = c.im.clone();
            out[(2 * g + 1) * n + 2 * b + 1] = c.re.clone();
        }
    }
    out
}

pub fn realify_values(mat: &DMatrix<Complex64>) -> DMatrix<f64> {
    let m = mat.nrows();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for g in 0..m {
        for b in 0..m {
            let c = mat[(g, b)];
            out[(2 * g, 2 * b)] = c.re;
            out[(2 * g, 2 * b + 1)] = -c.im;
            out[(2 * g + 1, 2 * b)] = c.im;
            out[(2 * g + 1, 2 * b + 1)] = c.re;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Zero,
    Minus,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Plus
        } else if v < 0.0 {
            Sign::Minus
        } else {
            Sign::Zero
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
            Sign::Zero => Sign::Zero,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Zero => "0",
            Sign::Minus => "-",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ModelPackage {
    pub key: String,
    pub geometry: Geometry,
    /// Weight `(−1,−1)` J-Hermitian `(2,0)` solution of the metrizability equation.
    pub zeta: TensorField,
    /// The `(m+1) × (m+1)` Hermitian form `h`, for the projective model.
    pub h_form: Option<DMatrix<Complex64>>,
    pub default_box: Vec<(f64, f64)>,
}

impl ModelPackage {
    pub fn m(&self) -> usize {
        self.geometry.m
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::Config(format!("m must be at least 2, got {m}")));
    }
    Ok(())
}

/// `ℝ^{2m}` with constant `J`, flat `Γ` and a constant Hermitian `ζ` of complex
/// signature `(p, q)`.
pub fn flat_model(m: usize, p: usize, q: usize) -> Result<ModelPackage> {
    check_m(m)?;
    if p + q != m {
        return Err(Error::Config(format!("flat model needs p + q = m, got {p} + {q} ≠ {m}")));
    }
    let n = 2 * m;
    let mut z = vec![0.0; n * n];
    for k in 0..m {
        let s = if k < p { 1.0 } else { -1.0 };
        z[(2 * k) * n + 2 * k] = s;
        z[(2 * k + 1) * n + 2 * k + 1] = s;
    }
    Ok(ModelPackage {
        key: format!("flat:m={m},sig={p},{q}"),
        geometry: Geometry::new(ComplexStructure::standard(m), Connection::flat(n))?,
        zeta: TensorField::constant(n, (2, 0), Weight::real(-1.0), z),
        h_form: None,
        default_box: vec![(-2.0, 2.0); n],
    })
}

/// Fubini–Study metric `g_{αβ̄} = ∂_α∂_β̄ log(1 + |z|²)` on the affine chart.
pub fn fs_metric(m: usize) -> TensorField {
    TensorField::from_formula(2 * m, (0, 2), Weight::ZERO, move |x| {
        let z = complex_coordinates(x);
        let one = Jet::constant(x[0].space(), x[0].order(), 1.0);
        let mut s = one.clone();
        for zk in &z {
            s = &s + &(&(&zk.re * &zk.re) + &(&zk.im * &zk.im));
        }
        let inv = s.recip();
        let inv2 = &inv * &inv;
        // conj(g_{αβ̄}) = (s δ − z_α z̄_β)/s², realified as Re(X* · Y)
        let mut h = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                let mut c = z[a].mul(&z[b].conj()).scale(Complex64::new(-1.0, 0.0));
                if a == b {
                    c.re = &c.re + &s;
                }
                h.push(CJet {
                    re: &c.re * &inv2,
                    im: &c.im * &inv2,
                });
            }
        }
        Ok(realify(&h, m))
    })
}

/// Levi-Civita connection of the Fubini–Study metric in closed form:
/// `Γ^γ_{αβ} = −(z̄_α δ^γ_β + z̄_β δ^γ_α)/(1 + |z|²)`, mixed-type symbols zero.
pub fn fs_connection(m: usize) -> Connection {
    let n = 2 * m;
    let gamma = TensorField::from_formula(n, (1, 2), Weight::ZERO, move |x| {
        let z = complex_coordinates(x);
        let mut s = Jet::constant(x[0].space(), x[0].order(), 1.0);
        for zk in &z {
            s = &s + &(&(&zk.re * &zk.re) + &(&zk.im * &zk.im));
        }
        let inv = CJet::real(s.recip().scale(-1.0));
        let zero = CJet::real(x[0].scale(0.0));
        let mut out = vec![zero.re.clone(); n * n * n];
        for al in 0..m {
            // C_α as a complex matrix [γ][β]
            let mut c = vec![zero.clone(); m * m];
            for g in 0..m {
                for b in 0..m {
                    let mut e = zero.clone();
                    if g == b {
                        e = e.add(&z[al].conj());
                    }
                    if g == al {
                        e = e.add(&z[b].conj());
                    }
                    c[g * m + b] = e.mul(&inv);
                }
            }
            let ic: Vec<CJet> = c.iter().map(|v| v.scale(Complex64::new(0.0, 1.0))).collect();
            for (dir, mat) in [(2 * al, &c), (2 * al + 1, &ic)] {
                let r = realify(mat, m);
                for cc in 0..n {
                    for b in 0..n {
                        out[(cc * n + dir) * n + b] = r[cc * n + b].clone();
                    }
                }
            }
        }
        Ok(out)
    });
    Connection {
        gamma,
        minimal_complex: true,
    }
}

/// Signature-`(p+1, q+1)` diagonal form `diag(1,…,1,−1,…,−1)`.
pub fn diagonal_form(p: usize, q: usize) -> DMatrix<Complex64> {
    let d = p + q + 2;
    DMatrix::from_fn(d, d, |i, j| {
        if i != j {
            Complex64::new(0.0, 0.0)
        } else if i <= p {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(-1.0, 0.0)
        }
    })
}

/// The projective model with diagonal `h`. For `p + q = m − 1`, `h` has
/// signature `(p+1, q+1)`; for `p + q = m + 1`, `(p, q)` is the signature of
/// `h` itself, which admits the definite forms.
pub fn cpm_model(m: usize, p: usize, q: usize) -> Result<ModelPackage> {
    check_m(m)?;
    let h = if p + q + 1 == m {
        diagonal_form(p, q)
    } else if p + q == m + 1 {
        DMatrix::from_fn(m + 1, m + 1, |i, j| match (i == j, i < p) {
            (false, _) => Complex64::new(0.0, 0.0),
            (true, true) => Complex64::new(1.0, 0.0),
            (true, false) => Complex64::new(-1.0, 0.0),
        })
    } else {
        return Err(Error::Config(format!(
            "projective model needs p + q = m − 1 or m + 1, got {p} + {q} with m = {m}"
        )));
    };
    let mut pkg = cpm_model_with_form(h)?;
    pkg.key = format!("cpm:m={m},p={p},q={q}");
    Ok(pkg)
}

/// The projective model for an arbitrary nondegenerate Hermitian form `h`.
///
/// With `X = (1, z)` and `K = h⁻¹`, the solution is `ζ(z) = T K T*` for
/// `T = [−z | I]`, the top slot of `K` in the affine-chart frame.
pub fn cpm_model_with_form(h: DMatrix<Complex64>) -> Result<ModelPackage> {
    let d = h.nrows();
    if d < 3 || h.ncols() != d {
        return Err(Error::Config("h must be square of size m + 1 ≥ 3".into()));
    }
    if (&h - h.adjoint()).norm() > 1e-12 * h.norm() {
        return Err(Error::Config("h must be Hermitian".into()));
    }
    let k = h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Config("h must be nondegenerate".into()))?;
    let m = d - 1;
    let n = 2 * m;
    let kk = k.clone();
    let zeta = TensorField::from_formula(n, (2, 0), Weight::real(-1.0), move |x| {
        let z = complex_coordinates(x);
        let mut out = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                let mut e = CJet::constant(&x[0], kk[(a + 1, b + 1)]);
                e = e.sub(&z[a].scale(kk[(0, b + 1)]));
                e = e.sub(&z[b].conj().scale(kk[(a + 1, 0)]));
                e = e.add(&z[a].mul(&z[b].conj()).scale(kk[(0, 0)]));
                out.push(e);
            }
        }
        Ok(realify(&out, m))
    });
    let (p1, q1) = hermitian_signature(&h);
    Ok(ModelPackage {
        key: format!("cpm:m={m},p={},q={}", p1.saturating_sub(1), q1.saturating_sub(1)),
        geometry: Geometry::new(ComplexStructure::standard(m), fs_connection(m))?,
        zeta,
        h_form: Some(h),
        default_box: vec![(-2.0, 2.0); n],
    })
}

/// Counts of positive and negative eigenvalues of a Hermitian matrix.
pub fn hermitian_signature(h: &DMatrix<Complex64>) -> (usize, usize) {
    let r = realify_values(h);
    let ev = nalgebra::SymmetricEigen::new(r).eigenvalues;
    let tol = 1e-12 * ev.amax().max(1e-300);
    let p = ev.iter().filter(|&&v| v > tol).count() / 2;
    let q = ev.iter().filter(|&&v| v < -tol).count() / 2;
    (p, q)
}

/// Homogeneous coordinates `X = (1, z)` of an affine-chart point.
pub fn homogeneous(x: &[f64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(1.0, 0.0)];
    out.extend(x.chunks(2).map(|p| Complex64::new(p[0], p[1])));
    out
}

/// Real value `h(X, X̄) = X* h X`.
pub fn h_value(h: &DMatrix<Complex64>, x: &[Complex64]) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += x[i].conj() * h[(i, j)] * x[j];
        }
    }
    s.re
}

/// Strict sign of `h(X, X̄)`.
pub fn orbit_oracle(h: &DMatrix<Complex64>, hom: &[Complex64]) -> Result<Sign> {
    if hom.len() != h.nrows() {
        return Err(Error::Dimension("homogeneous vector has the wrong length".into()));
    }
    if hom.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::Domain("zero vector has no orbit".into()));
    }
    Ok(Sign::of(h_value(h, hom)))
}

/// Stratum of the orbit with the given sign of `h(X, X̄)`. `ζ` at `[X]` is
/// `h⁻¹` restricted to the annihilator of `X`, so where `h(X, X̄) > 0` it has
/// one positive direction fewer than `h⁻¹`: signature `(p, q+1)`, the minus
/// stratum.
pub fn stratum_of_orbit(orbit: Sign) -> Sign {
    orbit.flip()
}

/// Parse `flat:m=<m>,sig=<p>,<q>` or `cpm:m=<m>,p=<p>,q=<q>`.
pub fn from_key(key: &str) -> Result<ModelPackage> {
    let (kind, rest) = key
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("model key `{key}` has no `:`")))?;
    let mut vals = std::collections::HashMap::new();
    let mut last = String::new();
    for part in rest.split(',') {
        if let Some((k, v)) = part.split_once('=') {
            last = k.trim().to_string();
            vals.insert(last.clone(), vec![v.trim().to_string()]);
        } else if let Some(list) = vals.get_mut(&last) {
            list.push(part.trim().to_string());
        } else {
            return Err(Error::Config(format!("cannot parse `{part}` in model key `{key}`")));
        }
    }
    let num = |name: &str, idx: usize| -> Result<usize> {
        vals.get(name)
            .and_then(|v| v.get(idx))
            .ok_or_else(|| Error::Config(format!("model key `{key}` is missing `{name}`")))?
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("model key `{key}`: `{name}`: {e}")))
    };
    match kind.trim() {
        "flat" => flat_model(num("m", 0)?, num("sig", 0)?, num("sig", 1)?),
        "cpm" => cpm_model(num("m", 0)?, num("p", 0)?, num("q", 0)?),
        other => Err(Error::Config(format!("unknown model family `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{minimal_complex_defect, nijenhuis, torsion};
    use crate::tensor::Point;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_fs_connection_is_levi_civita() {
        let lc = Connection::levi_civita(&fs_metric(2)).unwrap();
        let cf = fs_connection(2);
        for x in [[0.0, 0.0, 0.0, 0.0], [0.3, -0.5, 1.2, 0.7], [-1.5, 0.2, 0.1, -0.9]] {
            let a = lc.gamma.eval(&x, 1).unwrap();
            let b = cf.gamma.eval(&x, 1).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p.value() - q.value()).abs() < 1e-13, "{x:?}");
                for v in 0..4 {
                    assert!((p.d1(v) - q.d1(v)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fs_connection_is_complex_and_torsion_free() {
        let pkg = cpm_model(2, 1, 0).unwrap();
        let p = pt(&[0.4, -0.3, 0.8, 1.1]);
        let (nj, t) = minimal_complex_defect(&pkg.geometry, &p).unwrap();
        assert!(nj < 1e-13 && t < 1e-13);
        assert!(torsion(&pkg.geometry.conn, &p).unwrap().max_abs() < 1e-15);
        assert_eq!(nijenhuis(&pkg.geometry.j, &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn zeta_is_j_hermitian_and_matches_fs_inverse() {
        // definite h = I: ζ = I + z z*, and g⁻¹ = (1 + |z|²) ζ
        let h = DMatrix::<Complex64>::identity(3, 3);
        let pkg = cpm_model_with_form(h).unwrap();
        let x = [0.3, -0.2, 0.5, 0.9];
        let z = pkg.zeta.value(&x).unwrap().matrix();
        let g = fs_metric(2).value(&x).unwrap().matrix();
        let s = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        let prod = &g * &z * s;
        assert!((prod - DMatrix::<f64>::identity(4, 4)).amax() < 1e-13);
        let j = DMatrix::from_row_slice(4, 4, &crate::geometry::standard_j(2));
        assert!((&j * &z * j.transpose() - &z).amax() < 1e-14);
    }

    #[test]
    fn orbit_oracle_examples() {
        let h = diagonal_form(1, 0);
        let c = |v: [f64; 3]| v.iter().map(|&r| Complex64::new(r, 0.0)).collect::<Vec<_>>();
        assert_eq!(orbit_oracle(&h, &c([1.0, 0.0, 0.0])).unwrap(), Sign::Plus);
        assert_eq!(orbit_oracle(&h, &c([0.0, 0.0, 1.0])).unwrap(), Sign::Minus);
        assert_eq!(orbit_oracle(&h, &c([1.0, 0.0, 1.0])).unwrap(), Sign::Zero);
        assert!(orbit_oracle(&h, &c([0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn registry_keys() {
        assert_eq!(from_key("flat:m=2,sig=1,1").unwrap().key, "flat:m=2,sig=1,1");
        assert_eq!(from_key("cpm:m=3,p=1,q=1").unwrap().m(), 3);
        assert!(from_key("cpm:m=2,p=1,q=1").is_err());
        assert!(from_key("flat:m=1,sig=1,0").is_err());
        assert!(from_key("sphere:m=2").is_err());
        let sig = hermitian_signature(&from_key("cpm:m=2,p=0,q=1").unwrap().h_form.unwrap());
        assert_eq!(sig, (1, 2));
    }
}
