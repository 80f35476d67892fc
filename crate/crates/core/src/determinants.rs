//! Determinants of weighted Hermitian forms and of tractor Hermitian metrics.
//!
//! Both are Pfaffians of the form twisted by the complex structure, normalized
//! so that the standard flat Hermitian form has determinant 1.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bgg::split_zeta_at;
use crate::error::{Error, Result};
use crate::field::{Evaluator, TensorField, Weight};
use crate::geometry::{Connection, Local};
use crate::jet::Jet;
use crate::linalg::{jet_inverse, jet_pfaffian, pfaffian};
use crate::models::{cpm_model, ModelPackage};
use crate::tensor::Point;
use crate::tractor::{Splitting, TractorHDualSection, TractorHSection};

/// `Pf(ζ Jᵀ)`, the real weight `(1,1)` determinant of a weight `(−1,−1)`
/// J-Hermitian form.
pub fn det_weighted_hermitian(zeta: &TensorField, j: &TensorField, p: &Point) -> Result<f64> {
    let z = zeta.value(&p.coords)?.matrix();
    let jm = j.value(&p.coords)?.matrix();
    Ok(pfaffian(&twist(&z, &jm)))
}

fn twist(z: &DMatrix<f64>, j: &DMatrix<f64>) -> DMatrix<f64> {
    let a = z * j.transpose();
    // exact antisymmetry
    (&a - a.transpose()) * 0.5
}

/// Jet version of [`det_weighted_hermitian`].
pub fn det_weighted_hermitian_jets(zeta: &[Jet], j: &[Jet], n: usize) -> Jet {
    let mut a = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let mut t = zeta[r].scale(0.0);
            for k in 0..n {
                t += &(&zeta[r * n + k] * &j[c * n + k]);
            }
            a.push(t);
        }
    }
    let anti: Vec<Jet> = (0..n * n)
        .map(|k| (&a[k] - &a[(k % n) * n + k / n]).scale(0.5))
        .collect();
    jet_pfaffian(&anti, n)
}

/// Tractor complex structure `diag([[0,−1],[1,0]], J)`.
pub fn tractor_j(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.nrows();
    let mut t = DMatrix::zeros(n + 2, n + 2);
    t[(0, 1)] = -1.0;
    t[(1, 0)] = 1.0;
    t.view_mut((2, 2), (n, n)).copy_from(j);
    t
}

/// `Pf(S J_𝒯ᵀ)` of the assembled slot matrix. Its square is `det S`.
pub fn det_tractor_hermitian(h: &TractorHSection, p: &Point) -> Result<f64> {
    if p.coords != h.x {
        return Err(Error::Dimension("section and point disagree".into()));
    }
    let s = h.matrix()?;
    let j = h.splitting.geometry.j.field.value(&p.coords)?.matrix();
    Ok(pfaffian(&twist(&s, &tractor_j(&j))))
}

/// `Φ = h⁻¹` as dual slots, with jets one order below those of `h`'s slots
/// where available.
pub fn inverse_tractor_metric(h: &TractorHSection, p: &Point) -> Result<TractorHDualSection> {
    if p.coords != h.x {
        return Err(Error::Dimension("section and point disagree".into()));
    }
    let n = h.lambda.len();
    let s = h.matrix()?;
    let scale: f64 = s.row_iter().map(|r| r.norm()).product();
    let det = s.determinant();
    if det.abs() < 1e-12 * scale {
        return Err(Error::Degenerate(format!(
            "tractor metric is singular at {:?}: det {det:.3e} against row-norm product {scale:.3e}",
            p.coords
        )));
    }
    let inv = jet_inverse(&h.matrix_jets()?, n + 2)?;
    Ok(TractorHDualSection::from_matrix_jets(&inv, n, &h.x, h.splitting.clone()))
}

/// Metric `g = (τζ)⁻¹` with `τ = 𝐝𝐞𝐭 ζ`, defined where `ζ` is nondegenerate.
pub fn metric_of_solution(zeta: &TensorField, j: &TensorField) -> TensorField {
    let (z, jf) = (zeta.clone(), j.clone());
    let n = zeta.n;
    let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
        let zj = z.eval(x, order)?;
        let jj = jf.eval(x, order)?;
        let tau = det_weighted_hermitian_jets(&zj, &jj, n);
        let tz: Vec<Jet> = zj.iter().map(|v| v * &tau).collect();
        jet_inverse(&tz, n).map_err(|_| Error::Degenerate(format!("ζ degenerates at {x:?}")))
    });
    TensorField::new(n, (0, 2), Weight::ZERO, eval)
}

/// Scalar curvature `g^{ab} Ric_ab` of a metric field at `p`.
pub fn scalar_curvature(g: &TensorField, p: &Point) -> Result<f64> {
    let n = g.n;
    let conn = Connection::levi_civita(g)?;
    let l = Local::new(None, &conn, &p.coords, 1)?;
    let ric = l.ricci();
    let gv = g.value(&p.coords)?.matrix();
    let ginv = gv
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("metric degenerates at {:?}", p.coords)))?;
    let mut r = 0.0;
    for a in 0..n {
        for b in 0..n {
            r += ginv[(a, b)] * ric[a * n + b].value();
        }
    }
    Ok(r)
}

/// Result of a calibration run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Calibration {
    pub model: String,
    pub m: usize,
    pub kappa: f64,
    /// Max relative deviation of the sampled ratios from their mean.
    pub spread: f64,
    pub samples: usize,
}

/// Deterministic sample of `count` chart points in `[-r, r]^n`.
pub fn sample_points(n: usize, count: usize, r: f64, seed: u64) -> Vec<Point> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point::new((0..n).map(|_| rng.gen_range(-r..=r)).collect()).expect("even dimension"))
        .collect()
}

/// `κ_m` with `det L(ζ) = κ_m R^g`, where `g = (𝐝𝐞𝐭ζ · ζ)⁻¹`. Flat models have
/// `R = 0`; they are checked for `det L(ζ) = 0` and then calibrated on the
/// definite projective model of the same dimension.
pub fn calibrate_scalar_curvature_constant(model: &ModelPackage, samples: usize, seed: u64) -> Result<Calibration> {
    let n = model.geometry.n();
    let m = model.m();
    let s = Splitting::new(model.geometry.clone());
    let pts = sample_points(n, samples, 1.5, seed);
    if model.h_form.is_none() {
        for p in &pts {
            let h = split_zeta_at(&model.zeta, &s, &p.coords, 2)?;
            let d = det_tractor_hermitian(&h, p)?;
            if d.abs() > 1e-12 {
                return Err(Error::Calibration(format!(
                    "flat model has det L(ζ) = {d:.3e} ≠ 0 at {:?}",
                    p.coords
                )));
            }
        }
        let mut cal = calibrate_scalar_curvature_constant(&cpm_model(m, m - 1, 0)?, samples, seed)?;
        cal.model = model.key.clone();
        return Ok(cal);
    }
    let g = metric_of_solution(&model.zeta, &model.geometry.j.field);
    let mut ratios = Vec::with_capacity(samples);
    for p in &pts {
        let h = split_zeta_at(&model.zeta, &s, &p.coords, 2)?;
        let tau = det_weighted_hermitian(&model.zeta, &model.geometry.j.field, p)?;
        if tau.abs() < 1e-3 {
            continue;
        }
        let r = scalar_curvature(&g, p)?;
        ratios.push(det_tractor_hermitian(&h, p)? / r);
    }
    if ratios.is_empty() {
        return Err(Error::Calibration("no usable sample points".into()));
    }
    let kappa = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios
        .iter()
        .map(|r| ((r - kappa) / kappa).abs())
        .fold(0.0, f64::max);
    if spread > 1e-8 {
        return Err(Error::Calibration(format!(
            "det L(ζ)/R is not constant: relative spread {spread:.3e}"
        )));
    }
    Ok(Calibration {
        model: model.key.clone(),
        m,
        kappa,
        spread,
        samples: ratios.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgg::split_zeta;
    use crate::geometry::standard_j;
    use crate::models::{cpm_model_with_form, flat_model, from_key};
    use crate::tractor::change_splitting_H;
    use crate::transform::Upsilon;
    use num_complex::Complex64;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn jfield(m: usize) -> TensorField {
        TensorField::constant(2 * m, (1, 1), Weight::ZERO, standard_j(m))
    }

    #[test]
    fn weighted_determinant_normalization_and_scaling() {
        let pkg = flat_model(2, 2, 0).unwrap();
        let p = pt(&[0.0; 4]);
        let j = jfield(2);
        assert_eq!(det_weighted_hermitian(&pkg.zeta, &j, &p).unwrap(), 1.0);
        assert_eq!(det_weighted_hermitian(&flat_model(2, 1, 1).unwrap().zeta, &j, &p).unwrap(), -1.0);
        for c in [2.0, -1.0] {
            let d = det_weighted_hermitian(&pkg.zeta.scaled(c), &j, &p).unwrap();
            assert_eq!(d, c * c);
        }
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        v[5] = 1.0;
        let degenerate = TensorField::constant(4, (2, 0), Weight::real(-1.0), v);
        assert_eq!(det_weighted_hermitian(&degenerate, &j, &p).unwrap(), 0.0);
    }

    #[test]
    fn weighted_determinant_matches_complex_determinant() {
        // for h = I, ζ = I + z z* and det_ℂ ζ = 1 + |z|²
        let pkg = cpm_model_with_form(DMatrix::<Complex64>::identity(3, 3)).unwrap();
        let j = jfield(2);
        for x in [[0.3, -0.2, 0.5, 0.9], [1.5, 0.0, -0.7, 0.2]] {
            let p = pt(&x);
            let d = det_weighted_hermitian(&pkg.zeta, &j, &p).unwrap();
            let s = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
            assert!((d - s).abs() < 1e-12);
            let z = pkg.zeta.value(&x).unwrap().matrix();
            let dense = (&z * DMatrix::from_row_slice(4, 4, &standard_j(2)).transpose()).determinant();
            assert!((d * d - dense).abs() < 1e-11 * dense.abs());
        }
    }

    #[test]
    fn tractor_determinant_is_invariant_and_constant() {
        for key in ["cpm:m=2,p=1,q=0", "cpm:m=3,p=1,q=1"] {
            let pkg = from_key(key).unwrap();
            let n = 2 * pkg.m();
            let s = Splitting::new(pkg.geometry.clone());
            let mut first = None;
            for p in sample_points(n, 8, 1.5, 2) {
                let h = split_zeta(&pkg.zeta, &s, &p).unwrap();
                let d = det_tractor_hermitian(&h, &p).unwrap();
                let dense = h.matrix().unwrap().determinant();
                assert!((d * d - dense).abs() < 1e-10 * dense.abs());
                let f = *first.get_or_insert(d);
                assert!((d - f).abs() < 1e-10 && d != 0.0);
                for seed in 0..3 {
                    let moved = change_splitting_H(&h, &Upsilon::random_polynomial(n, 2, seed)).unwrap();
                    assert!((det_tractor_hermitian(&moved, &p).unwrap() - d).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn singular_tractor_metric() {
        let pkg = flat_model(2, 2, 0).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let p = pt(&[0.1, 0.2, 0.3, 0.4]);
        let h = split_zeta(&pkg.zeta, &s, &p).unwrap();
        assert_eq!(det_tractor_hermitian(&h, &p).unwrap(), 0.0);
        assert!(matches!(inverse_tractor_metric(&h, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn inverse_of_block_and_model_metrics() {
        let pkg = flat_model(2, 1, 1).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let p = pt(&[0.1, 0.2, 0.3, 0.4]);
        let mut h = split_zeta(&pkg.zeta, &s, &p).unwrap();
        h.nu = h.nu.add_scalar(0.25);
        let phi = inverse_tractor_metric(&h, &p).unwrap();
        assert_eq!(phi.tau.value(), 1.0);
        assert!(phi.lambda.iter().all(|v| v.value() == 0.0));
        assert_eq!(phi.phi_matrix() * 4.0, pkg.zeta.value(&p.coords).unwrap().matrix());

        let pkg = from_key("cpm:m=2,p=0,q=1").unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        for p in sample_points(4, 10, 2.0, 8) {
            let h = split_zeta(&pkg.zeta, &s, &p).unwrap();
            let phi = inverse_tractor_metric(&h, &p).unwrap();
            let prod = phi.matrix().unwrap() * h.matrix().unwrap();
            assert!((prod - DMatrix::identity(6, 6)).amax() < 1e-11);
            let back = phi.matrix().unwrap().try_inverse().unwrap();
            assert!((back - h.matrix().unwrap()).amax() < 1e-10);
        }
    }

    #[test]
    fn calibration_constants() {
        for (key, kappa) in [("cpm:m=2,p=1,q=0", 1.0 / 6.0), ("cpm:m=3,p=2,q=0", 1.0 / 12.0)] {
            let c = calibrate_scalar_curvature_constant(&from_key(key).unwrap(), 12, 4).unwrap();
            assert!((c.kappa - kappa).abs() < 1e-10, "{c:?}");
            assert!(c.spread < 1e-8);
        }
        let flat = calibrate_scalar_curvature_constant(&flat_model(2, 2, 0).unwrap(), 5, 1).unwrap();
        assert!((flat.kappa - 1.0 / 6.0).abs() < 1e-10);
    }
}
