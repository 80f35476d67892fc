//! Batch verification suite: each check is a measured quantity against an
//! upper bound.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::bgg::{metrizability_residual, normality_defect, split_zeta, split_zeta_at};
use crate::determinants::det_tractor_hermitian;
use crate::error::{Error, Result};
use crate::geometry::{minimal_complex_defect, schouten, weyl};
use crate::models::{homogeneous, orbit_oracle, stratum_of_orbit, ModelPackage, Sign};
use crate::strata::{classify_point, Tolerances};
use crate::tensor::Point;
use crate::tractor::{change_splitting_H, splitting_relation_check, Splitting};
use crate::transform::{transform_connection, transform_schouten, Upsilon};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, measured: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            measured,
            tolerance,
            pass: measured < tolerance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub tol: Tolerances,
    pub samples: usize,
    pub upsilons: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: Tolerances::default(),
            samples: 200,
            upsilons: 10,
            seed: 0,
        }
    }
}

/// Uniform points in a box, reproducible from the seed.
pub fn box_samples(bounds: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Point>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point::new(bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect()))
        .collect()
}

fn par_max<F>(points: &[Point], f: F) -> Result<f64>
where
    F: Fn(&Point) -> Result<f64> + Sync,
{
    points
        .par_iter()
        .map(&f)
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Runs the structural, solution, splitting, invariance and (for projective
/// models) orbit checks over seeded samples in `bounds`.
pub fn verify_model(pkg: &ModelPackage, bounds: &[(f64, f64)], opts: &VerifyOptions) -> Result<Vec<Check>> {
    let n = pkg.geometry.n();
    if bounds.len() != n {
        return Err(Error::Config(format!("box has {} intervals, the chart has {n} coordinates", bounds.len())));
    }
    let tol = opts.tol;
    let pts = box_samples(bounds, opts.samples, opts.seed)?;
    let geom = &pkg.geometry;
    let s = Splitting::new(geom.clone());
    let mut out = Vec::new();

    let jsq = par_max(&pts, |p| geom.j.square_defect(&p.coords))?;
    out.push(Check::below("j_squared_plus_one", jsq, tol.alg));
    let mc = par_max(&pts, |p| {
        let (a, b) = minimal_complex_defect(geom, p)?;
        Ok(a.max(b))
    })?;
    out.push(Check::below("minimal_complex_defect", mc, tol.alg));

    let res = par_max(&pts, |p| Ok(metrizability_residual(&pkg.zeta, &s, p)?.norm()))?;
    out.push(Check::below("metrizability_residual", res, tol.alg));
    let normal = normality_defect(&pkg.zeta, &s, &pts, f64::INFINITY)?;
    out.push(Check::below("normality_defect", normal, tol.eig));

    let rel = par_max(&pts, |p| Ok(splitting_relation_check(&s, p)?.max()))?;
    out.push(Check::below("splitting_relations", rel, tol.alg));

    let dets: Vec<f64> = pts
        .par_iter()
        .map(|p| det_tractor_hermitian(&split_zeta(&pkg.zeta, &s, p)?, p))
        .collect::<Result<_>>()?;
    let (lo, hi) = dets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    out.push(Check::below("tractor_determinant_spread", (hi - lo) / hi.abs().max(lo.abs()).max(1.0), tol.num));

    let few = &pts[..pts.len().min(20)];
    let mut weyl_d = 0.0f64;
    let mut schouten_d = 0.0f64;
    let mut res_d = 0.0f64;
    let mut commute_d = 0.0f64;
    for k in 0..opts.upsilons {
        let u = Upsilon::random_polynomial(n, 2, opts.seed.wrapping_add(k as u64));
        let moved = transform_connection(&geom.conn, &geom.j, &u);
        let t = s.change(&u);
        let r: Vec<[f64; 4]> = few
            .par_iter()
            .map(|p| {
                let w = weyl(&geom.conn, &geom.j, p)?.max_abs_diff(&weyl(&moved, &geom.j, p)?);
                let sch = schouten(&geom.conn, &geom.j, p)?;
                let shown = transform_schouten(&sch, &geom.conn, &geom.j, &u, p)?;
                let sd = shown.max_abs_diff(&schouten(&moved, &geom.j, p)?);
                let rd = metrizability_residual(&pkg.zeta, &t, p)?.norm();
                let h = split_zeta_at(&pkg.zeta, &s, &p.coords, 2)?;
                let ch = change_splitting_H(&h, &u)?.matrix()?;
                let direct = split_zeta_at(&pkg.zeta, &t, &p.coords, 2)?.matrix()?;
                Ok([w, sd, rd, (ch - direct).amax()])
            })
            .collect::<Result<_>>()?;
        for v in r {
            weyl_d = weyl_d.max(v[0]);
            schouten_d = schouten_d.max(v[1]);
            res_d = res_d.max(v[2]);
            commute_d = commute_d.max(v[3]);
        }
    }
    if opts.upsilons > 0 {
        out.push(Check::below("weyl_invariance", weyl_d, tol.num));
        out.push(Check::below("schouten_transformation", schouten_d, tol.eig));
        out.push(Check::below("residual_invariance", res_d, tol.eig));
        out.push(Check::below("splitting_commutes_with_l", commute_d, tol.eig));
    }

    if let Some(h) = &pkg.h_form {
        let disagree = pts
            .par_iter()
            .map(|p| {
                let orbit = orbit_oracle(h, &homogeneous(&p.coords))?;
                if orbit == Sign::Zero {
                    return Ok(0usize);
                }
                let (_, label) = classify_point(&pkg.zeta, &s, p, 1.0, &tol)?;
                Ok(usize::from(label != stratum_of_orbit(orbit)))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        out.push(Check::below("orbit_label_disagreement", disagree as f64 / pts.len().max(1) as f64, 0.5 / pts.len().max(1) as f64));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::from_key;

    #[test]
    fn models_pass() {
        let opts = VerifyOptions { samples: 40, upsilons: 3, ..Default::default() };
        for key in ["cpm:m=2,p=1,q=0", "flat:m=2,sig=2,0", "cpm:m=3,p=0,q=2"] {
            let pkg = from_key(key).unwrap();
            let checks = verify_model(&pkg, &pkg.default_box, &opts).unwrap();
            for c in &checks {
                assert!(c.pass, "{key}: {c:?}");
            }
        }
    }

    #[test]
    fn flat_residual_is_exact() {
        let pkg = from_key("flat:m=2,sig=1,1").unwrap();
        let checks = verify_model(&pkg, &pkg.default_box, &VerifyOptions { samples: 10, ..Default::default() }).unwrap();
        let r = checks.iter().find(|c| c.name == "metrizability_residual").unwrap();
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn wrong_box_is_rejected() {
        let pkg = from_key("flat:m=2,sig=1,1").unwrap();
        assert!(verify_model(&pkg, &[(0.0, 1.0)], &VerifyOptions::default()).is_err());
    }

    #[test]
    fn samples_are_reproducible() {
        let b = [(-1.0, 1.0), (0.0, 3.0), (-1.0, 1.0), (-1.0, 1.0)];
        let a = box_samples(&b, 5, 9).unwrap();
        assert_eq!(a, box_samples(&b, 5, 9).unwrap());
        assert!(a.iter().all(|p| p.coords[1] >= 0.0 && p.coords[1] <= 3.0));
    }
}
