//! Splitting operators `L(ζ)`, `L(τ)`, the metrizability residual, the
//! normality defect and the special boundary scale.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::TensorField;
use crate::jet::Jet;
use crate::tensor::Point;
use crate::tractor::{
    change_splitting_H, tractor_derivative_h_jets, Splitting, TractorHDualSection, TractorHSection,
};
use crate::transform::Upsilon;

/// `∇_cζ^{ab} − (1/m)δ_c^{(a}μ^{b)} − (1/m)J^{(a}_c(Jμ)^{b)}` with `μ^b = ∇_dζ^{bd}`,
/// laid out `[c][a][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetrizabilityResidual {
    pub n: usize,
    pub components: Vec<f64>,
}

impl MetrizabilityResidual {
    pub fn get(&self, c: usize, a: usize, b: usize) -> f64 {
        self.components[(c * self.n + a) * self.n + b]
    }

    pub fn norm(&self) -> f64 {
        crate::tensor::max_abs(&self.components)
    }
}

fn check_zeta(zeta: &TensorField, s: &Splitting) -> Result<()> {
    if zeta.upper != 2 || zeta.lower != 0 || zeta.n != s.n() {
        return Err(Error::Dimension("ζ must be a (2,0) tensor on the chart".into()));
    }
    Ok(())
}

fn divergence(dz: &[Jet], n: usize) -> Vec<Jet> {
    (0..n)
        .map(|b| {
            let mut t = dz[b].scale(0.0);
            for i in 0..n {
                t += &dz[(i * n + i) * n + b];
            }
            t
        })
        .collect()
}

/// `L(ζ)` with slots carrying jets of order `order − 2`.
pub fn split_zeta_at(zeta: &TensorField, s: &Splitting, x: &[f64], order: usize) -> Result<TractorHSection> {
    check_zeta(zeta, s)?;
    if order < 2 {
        return Err(Error::Precondition("L(ζ) needs a 2-jet of ζ".into()));
    }
    let n = s.n();
    let m = s.m() as f64;
    // Γ one order below ζ is enough for every slot
    let l = s.local(x, order - 1)?;
    let z = zeta.eval(x, order)?;
    let mu = divergence(&l.covariant(&z, 2, 0, -1.0), n);
    let dmu = l.covariant(&mu, 1, 0, -1.0);
    let p = l.schouten();
    let o = order - 2;
    let mut nu = l.zero(o);
    for i in 0..n {
        nu.axpy(1.0 / (4.0 * m * m), &dmu[i * n + i]);
        for j in 0..n {
            nu.axpy(1.0 / (2.0 * m), &(&p[i * n + j] * &z[i * n + j]));
        }
    }
    Ok(TractorHSection {
        x: x.to_vec(),
        zeta: z.iter().map(|v| v.truncate(o)).collect(),
        lambda: mu.iter().map(|v| v.truncate(o).scale(-1.0 / m)).collect(),
        nu,
        splitting: s.clone(),
    })
}

/// `L(ζ)` at `p`; the slots keep one derivative so they can be differentiated.
pub fn split_zeta(zeta: &TensorField, s: &Splitting, p: &Point) -> Result<TractorHSection> {
    split_zeta_at(zeta, s, &p.coords, 3)
}

/// `L(τ) = (τ, ½∇τ, Herm(½∇∇τ + Pτ))`, slots of order `order − 2`.
pub fn split_tau_at(tau: &TensorField, s: &Splitting, x: &[f64], order: usize) -> Result<TractorHDualSection> {
    if tau.rank() != 0 {
        return Err(Error::Dimension("τ must be a scalar density".into()));
    }
    if order < 2 {
        return Err(Error::Precondition("L(τ) needs a 2-jet of τ".into()));
    }
    let n = s.n();
    let l = s.local(x, order)?;
    let t = tau.eval(x, order)?;
    let dt = l.covariant(&t, 0, 0, 1.0);
    let ddt = l.covariant(&dt, 0, 1, 1.0);
    let p = l.schouten();
    let o = order - 2;
    let j: Vec<Jet> = l.j_jets().iter().map(|v| v.truncate(o)).collect();
    // symmetric part of ½∇∇τ + Pτ
    let mut xs = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut v = l.zero(o);
            v.axpy(0.25, &ddt[a * n + b]);
            v.axpy(0.25, &ddt[b * n + a]);
            let pp = &p[a * n + b] + &p[b * n + a];
            v.axpy(0.5, &(&pp * &t[0]));
            xs.push(v);
        }
    }
    let mut phi = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut v = xs[a * n + b].scale(0.5);
            for i in 0..n {
                for k in 0..n {
                    let jj = &j[i * n + a] * &j[k * n + b];
                    v.axpy(0.5, &(&jj * &xs[i * n + k]));
                }
            }
            phi.push(v);
        }
    }
    Ok(TractorHDualSection {
        x: x.to_vec(),
        tau: t[0].truncate(o),
        lambda: dt.iter().map(|v| v.truncate(o).scale(0.5)).collect(),
        phi,
        splitting: s.clone(),
    })
}

pub fn split_tau(tau: &TensorField, s: &Splitting, p: &Point) -> Result<TractorHDualSection> {
    split_tau_at(tau, s, &p.coords, 2)
}

pub fn metrizability_residual(zeta: &TensorField, s: &Splitting, p: &Point) -> Result<MetrizabilityResidual> {
    check_zeta(zeta, s)?;
    let n = s.n();
    let m = s.m() as f64;
    let l = s.local(&p.coords, 1)?;
    let z = zeta.eval(&p.coords, 1)?;
    let dz: Vec<f64> = l.covariant(&z, 2, 0, -1.0).iter().map(Jet::value).collect();
    let j: Vec<f64> = l.j_jets().iter().map(Jet::value).collect();
    let mu: Vec<f64> = (0..n).map(|b| (0..n).map(|i| dz[(i * n + i) * n + b]).sum()).collect();
    let jmu: Vec<f64> = (0..n).map(|a| (0..n).map(|i| j[a * n + i] * mu[i]).sum()).collect();
    let k = 0.5 / m;
    let mut out = Vec::with_capacity(n * n * n);
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut v = dz[(c * n + a) * n + b];
                if a == c {
                    v -= k * mu[b];
                }
                if b == c {
                    v -= k * mu[a];
                }
                v -= k * (j[a * n + c] * jmu[b] + j[b * n + c] * jmu[a]);
                out.push(v);
            }
        }
    }
    Ok(MetrizabilityResidual { n, components: out })
}

/// Sup over `sample` and directions of `‖∇^𝒯 L(ζ)‖`. Fails if `ζ` does not
/// solve the metrizability equation to `eps_num` somewhere on the sample.
pub fn normality_defect(zeta: &TensorField, s: &Splitting, sample: &[Point], eps_num: f64) -> Result<f64> {
    let per_point: Vec<Result<(f64, f64)>> = sample
        .par_iter()
        .map(|p| {
            let r = metrizability_residual(zeta, s, p)?.norm();
            let h = split_zeta(zeta, s, p)?;
            let d = tractor_derivative_h_jets(&h)?
                .iter()
                .map(|dh| {
                    dh.zeta
                        .iter()
                        .chain(&dh.lambda)
                        .chain(std::iter::once(&dh.nu))
                        .fold(0.0f64, |a, v| a.max(v.value().abs()))
                })
                .fold(0.0, f64::max);
            Ok((r, d))
        })
        .collect();
    let mut worst_r = (0.0, None);
    let mut defect = 0.0f64;
    for (p, v) in sample.iter().zip(per_point) {
        let (r, d) = v?;
        if r > worst_r.0 {
            worst_r = (r, Some(p));
        }
        defect = defect.max(d);
    }
    if let (r, Some(p)) = worst_r {
        if r >= eps_num {
            return Err(Error::Precondition(format!(
                "ζ is not a solution: residual {r:.3e} at {:?}",
                p.coords
            )));
        }
    }
    Ok(defect)
}

/// The special boundary scale `γ = f + ξτ̂`, `ξ = −½fρ`, where `ρ` is the
/// `Y_𝒜Y_ℬ h^{𝒜ℬ}` component of `h` in the splitting of `f`.
///
/// `f` and `tau_hat` are jets at `h.x`; `γ` comes back as a jet of the lowest
/// order among the inputs minus one.
pub fn special_boundary_scale(f: &Jet, h: &TractorHSection, tau_hat: &Jet, p: &Point) -> Result<Jet> {
    if p.coords != h.x {
        return Err(Error::Dimension("section and point disagree".into()));
    }
    if f.value() == 0.0 || !f.value().is_finite() {
        return Err(Error::Domain(format!("scale f vanishes at {:?}", p.coords)));
    }
    let hf = change_splitting_H(h, &upsilon_of_scale(h, f)?)?;
    let rho = hf.nu.scale(4.0);
    let xi = (f * &rho).scale(-0.5);
    Ok(f + &(&xi * tau_hat))
}

/// Constant-coefficient Taylor polynomial of `−∇f/(2f)` about `h.x`, as a
/// one-form field usable by [`change_splitting_H`].
pub fn upsilon_of_scale(h: &TractorHSection, f: &Jet) -> Result<Upsilon> {
    if f.value() == 0.0 {
        return Err(Error::Domain("scale vanishes".into()));
    }
    let order = f.order().saturating_sub(1);
    let l = h.splitting.local(&h.x, order + 1)?;
    let n = l.n;
    let df = l.covariant(std::slice::from_ref(f), 0, 0, 1.0);
    let inv = f.truncate(order).recip().scale(-0.5);
    let u: Vec<Jet> = df.iter().map(|d| d * &inv).collect();
    Ok(Upsilon::taylor(n, &h.x, u))
}

/// `h(Y^γ, Y^γ)`: four times the bottom slot of `h` in the splitting of `γ`.
pub fn scale_norm(h: &TractorHSection, gamma: &Jet) -> Result<f64> {
    let hg = change_splitting_H(h, &upsilon_of_scale(h, gamma)?)?;
    Ok(4.0 * hg.nu.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Weight;
    use crate::models::{cpm_model, cpm_model_with_form, flat_model};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn random_zeta(seed: u64) -> TensorField {
        // J-Hermitian with polynomial entries: realify of a Hermitian matrix
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        TensorField::from_formula(4, (2, 0), Weight::real(-1.0), move |x| {
            let lin = |k: usize| {
                let mut t = x[0].scale(c[k]);
                for v in 1..4 {
                    t.axpy(c[k + v], &x[v]);
                }
                (&t * &t).add_scalar(c[k + 4])
            };
            let a = lin(0);
            let d = lin(5);
            let re = lin(10);
            let im = lin(15);
            let z = x[0].scale(0.0);
            let v = vec![
                a.clone(), z.clone(), re.clone(), -&im,
                z.clone(), a, im.clone(), re.clone(),
                re.clone(), im.clone(), d.clone(), z.clone(),
                -&im, re, z, d,
            ];
            Ok(v)
        })
    }

    #[test]
    fn flat_examples() {
        let pkg = flat_model(2, 1, 1).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let p = pt(&[0.5, 0.1, -2.0, 1.0]);
        let h = split_zeta(&pkg.zeta, &s, &p).unwrap();
        assert_eq!(h.zeta_matrix(), pkg.zeta.value(&p.coords).unwrap().matrix());
        assert!(h.lambda.iter().all(|v| v.value() == 0.0) && h.nu.value() == 0.0);
        assert_eq!(metrizability_residual(&pkg.zeta, &s, &p).unwrap().norm(), 0.0);
        assert_eq!(normality_defect(&pkg.zeta, &s, &[p.clone()], 1e-8).unwrap(), 0.0);

        let one = TensorField::constant(4, (0, 0), Weight::real(1.0), vec![1.0]);
        let t = split_tau(&one, &s, &p).unwrap();
        assert_eq!(t.matrix().unwrap(), {
            let mut m = DMatrix::zeros(6, 6);
            m[(0, 0)] = 1.0;
            m[(1, 1)] = 1.0;
            m
        });
        let x0 = TensorField::from_formula(4, (0, 0), Weight::real(1.0), |x| Ok(vec![x[0].clone()]));
        let t = split_tau(&x0, &s, &p).unwrap();
        assert_eq!(t.tau.value(), 0.5);
        assert_eq!(t.lambda.iter().map(Jet::value).collect::<Vec<_>>(), vec![0.5, 0.0, 0.0, 0.0]);
        assert!(t.phi.iter().all(|v| v.value() == 0.0));
    }

    #[test]
    fn fubini_study_canonical_splitting() {
        // h = I gives ζ = g⁻¹/(1 + |z|²), so τ⁻¹ = 1/(1 + |z|²) and R = 4m(m+1)
        let pkg = cpm_model_with_form(DMatrix::<Complex64>::identity(3, 3)).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        for x in [[0.0, 0.0, 0.0, 0.0], [0.3, -0.7, 1.1, 0.4]] {
            let p = pt(&x);
            let h = split_zeta(&pkg.zeta, &s, &p).unwrap();
            let sq = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
            assert!(h.lambda.iter().all(|v| v.value().abs() < 1e-13));
            assert!((h.nu.value() - 1.0 / sq).abs() < 1e-13, "{}", h.nu.value());
        }
    }

    #[test]
    fn model_solutions_are_normal() {
        for (m, p, q) in [(2, 1, 0), (2, 0, 1), (3, 2, 0), (3, 1, 1)] {
            let pkg = cpm_model(m, p, q).unwrap();
            let s = Splitting::new(pkg.geometry.clone());
            let sample: Vec<Point> = (0..6)
                .map(|k| pt(&(0..2 * m).map(|i| ((k * 7 + i * 3) as f64).sin()).collect::<Vec<_>>()))
                .collect();
            for x in &sample {
                assert!(metrizability_residual(&pkg.zeta, &s, x).unwrap().norm() < 1e-10);
            }
            assert!(normality_defect(&pkg.zeta, &s, &sample, 1e-8).unwrap() < 1e-9);
            let t = s.change(&Upsilon::random_polynomial(2 * m, 2, m as u64));
            assert!(normality_defect(&pkg.zeta, &t, &sample, 1e-8).unwrap() < 1e-9);
        }
    }

    #[test]
    fn middle_slot_is_minus_divergence() {
        // flat connection: λ^c = −(1/m) ∂_i ζ^{ic}, checked by central differences
        let zeta = random_zeta(4);
        let pkg = flat_model(2, 2, 0).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let x = [0.2, -0.3, 0.5, 0.1];
        let h = split_zeta(&zeta, &s, &pt(&x)).unwrap();
        let e = 1e-5;
        for c in 0..4 {
            let mut div = 0.0;
            for i in 0..4 {
                let mut a = x;
                let mut b = x;
                a[i] += e;
                b[i] -= e;
                div += (zeta.value(&a).unwrap().get(&[i, c]) - zeta.value(&b).unwrap().get(&[i, c])) / (2.0 * e);
            }
            assert!((h.lambda[c].value() + div / 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn residual_is_trace_free_and_matches_top_slot() {
        let pkg = cpm_model(2, 1, 0).unwrap();
        let s = Splitting::new(pkg.geometry.clone()).change(&Upsilon::random_polynomial(4, 2, 9));
        let zeta = random_zeta(1);
        let p = pt(&[0.1, 0.2, -0.3, 0.4]);
        let r = metrizability_residual(&zeta, &s, &p).unwrap();
        assert!(r.norm() > 1e-2);
        let j = crate::geometry::standard_j(2);
        for b in 0..4 {
            let tr: f64 = (0..4).map(|a| r.get(a, a, b)).sum();
            let jtr: f64 = (0..4).flat_map(|a| (0..4).map(move |c| (a, c))).map(|(a, c)| j[a * 4 + c] * r.get(c, a, b)).sum();
            assert!(tr.abs() < 1e-12 && jtr.abs() < 1e-12, "{tr} {jtr}");
        }
        let d = tractor_derivative_h_jets(&split_zeta(&zeta, &s, &p).unwrap()).unwrap();
        for c in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    assert!((d[c].zeta[a * 4 + b].value() - r.get(c, a, b)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn residual_vanishing_is_invariant() {
        let pkg = cpm_model(3, 1, 1).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let p = pt(&[0.3, 0.1, -0.2, 0.6, 0.4, -0.5]);
        let base = metrizability_residual(&pkg.zeta, &s, &p).unwrap().norm().max(1e-15);
        for seed in 0..10 {
            let t = s.change(&Upsilon::random_polynomial(6, 2, seed));
            assert!(metrizability_residual(&pkg.zeta, &t, &p).unwrap().norm() < 10.0 * base.max(1e-13));
        }
    }

    #[test]
    fn non_solution_is_rejected_by_normality() {
        let pkg = flat_model(2, 2, 0).unwrap();
        let s = Splitting::new(pkg.geometry.clone());
        let err = normality_defect(&random_zeta(2), &s, &[pt(&[0.1, 0.1, 0.1, 0.1])], 1e-8).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
