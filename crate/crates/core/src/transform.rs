//! Change of connection within a c-projective class, `∇̃ = ∇ + Υ`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{Evaluator, TensorField, Weight};
use crate::geometry::{ComplexStructure, Connection, Geometry, Local};
use crate::jet::Jet;
use crate::tensor::{Point, Tensor};

#[derive(Debug, Clone)]
pub struct Upsilon {
    pub one_form: TensorField,
}

impl Upsilon {
    pub fn new(one_form: TensorField) -> Result<Upsilon> {
        if (one_form.upper, one_form.lower) != (0, 1) {
            return Err(Error::Dimension("Υ must be a (0,1) field".into()));
        }
        Ok(Upsilon { one_form })
    }

    pub fn zero(n: usize) -> Upsilon {
        Upsilon {
            one_form: TensorField::zero(n, (0, 1), Weight::ZERO),
        }
    }

    pub fn constant(values: Vec<f64>) -> Upsilon {
        Upsilon {
            one_form: TensorField::constant(values.len(), (0, 1), Weight::ZERO, values),
        }
    }

    /// The Taylor polynomials of the jets `u` (expanded at `center`) as a field.
    pub fn taylor(n: usize, center: &[f64], u: Vec<Jet>) -> Upsilon {
        let c = center.to_vec();
        Upsilon {
            one_form: TensorField::from_formula(n, (0, 1), Weight::ZERO, move |x| {
                Ok(u.iter().map(|j| j.taylor_eval(&c, x)).collect())
            }),
        }
    }

    /// Components are polynomials of degree ≤ `degree` with coefficients drawn
    /// uniformly from [−1, 1].
    pub fn random_polynomial(n: usize, degree: usize, seed: u64) -> Upsilon {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let monos = exponents_up_to(n, degree);
        let coeffs: Vec<Vec<f64>> = (0..n)
            .map(|_| monos.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let one_form = TensorField::from_formula(n, (0, 1), Weight::ZERO, move |x| {
            let sp = x[0].space().clone();
            let o = x[0].order();
            let powers: Vec<Jet> = monos
                .iter()
                .map(|e| {
                    let mut p = Jet::constant(&sp, o, 1.0);
                    for (v, &k) in e.iter().enumerate() {
                        for _ in 0..k {
                            p = &p * &x[v];
                        }
                    }
                    p
                })
                .collect();
            Ok(coeffs
                .iter()
                .map(|cs| {
                    let mut acc = Jet::zero(&sp, o);
                    for (c, p) in cs.iter().zip(&powers) {
                        acc.axpy(*c, p);
                    }
                    acc
                })
                .collect())
        });
        Upsilon { one_form }
    }

    /// `−∇σ / (2wσ)` for a nonvanishing real density `σ` of weight `(w,w)`: the
    /// change taking `∇` to the connection that preserves `σ`.
    pub fn preserving(geom: &Geometry, sigma: &TensorField) -> Result<Upsilon> {
        let w = sigma.weight.w;
        if !sigma.weight.is_real() || w == 0.0 || sigma.rank() != 0 {
            return Err(Error::Weight("scale must be a real scalar density of nonzero weight".into()));
        }
        let (g, s) = (geom.clone(), sigma.clone());
        let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
            let l = g.local(x, order)?;
            let sj = s.eval(x, order + 1)?;
            if sj[0].value() == 0.0 {
                return Err(Error::Domain(format!("scale vanishes at {x:?}")));
            }
            let ds = l.covariant(&sj, 0, 0, w);
            let inv = sj[0].truncate(order).recip().scale(-1.0 / (2.0 * w));
            Ok(ds.iter().map(|d| d * &inv).collect())
        });
        Ok(Upsilon {
            one_form: TensorField::new(geom.n(), (0, 1), Weight::ZERO, eval),
        })
    }

    pub fn neg(&self) -> Upsilon {
        Upsilon {
            one_form: self.one_form.scaled(-1.0),
        }
    }

    pub fn add(&self, other: &Upsilon) -> Upsilon {
        Upsilon {
            one_form: self.one_form.add(&other.one_form),
        }
    }
}

fn exponents_up_to(n: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; n]];
    let mut frontier = out.clone();
    for _ in 0..degree {
        let mut next = Vec::new();
        for e in &frontier {
            let last = e.iter().rposition(|&k| k > 0).unwrap_or(0);
            for v in last..n {
                let mut f = e.clone();
                f[v] += 1;
                next.push(f);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// `ΔΓ^b_{ac} = Υ_a δ^b_c − Υ_i J^i_a J^b_c + Υ_c δ^b_a − Υ_i J^i_c J^b_a`,
/// laid out as `[b][a][c]`.
pub fn delta_gamma(u: &[Jet], j: &[Jet], n: usize) -> Vec<Jet> {
    let order = u[0].order().min(j[0].order());
    let sp = u[0].space().clone();
    let uj: Vec<Jet> = (0..n)
        .map(|a| {
            let mut s = Jet::zero(&sp, order);
            for i in 0..n {
                s += &(&u[i] * &j[i * n + a]);
            }
            s
        })
        .collect();
    let mut out = Vec::with_capacity(n * n * n);
    for b in 0..n {
        for a in 0..n {
            for c in 0..n {
                let mut d = Jet::zero(&sp, order);
                if b == c {
                    d += &u[a];
                }
                if b == a {
                    d += &u[c];
                }
                d -= &(&uj[a] * &j[b * n + c]);
                d -= &(&uj[c] * &j[b * n + a]);
                out.push(d);
            }
        }
    }
    out
}

/// The connection `∇ + Υ` of the same c-projective class.
pub fn transform_connection(conn: &Connection, j: &ComplexStructure, u: &Upsilon) -> Connection {
    let (c, jf, uf) = (conn.clone(), j.field.clone(), u.one_form.clone());
    let n = conn.n();
    let eval: Evaluator = Arc::new(move |x: &[f64], order: usize| {
        let g = c.gamma.eval(x, order)?;
        let jj = jf.eval(x, order)?;
        let uu = uf.eval(x, order)?;
        let d = delta_gamma(&uu, &jj, n);
        Ok(g.iter().zip(&d).map(|(a, b)| a + b).collect())
    });
    Connection {
        gamma: TensorField::new(n, (1, 2), Weight::ZERO, eval),
        minimal_complex: conn.minimal_complex,
    }
}

/// `½(Γ^i_{ai} − i J^i_k Γ^k_{ai})`, the trace of `Γ_a` as a complex-linear map.
pub fn complex_trace(l: &Local, a: usize) -> Complex64 {
    let n = l.n;
    let mut re = 0.0;
    let mut im = 0.0;
    for i in 0..n {
        re += l.gamma(i, a, i).value();
        for k in 0..n {
            im += l.j(i, k).value() * l.gamma(k, a, i).value();
        }
    }
    Complex64::new(0.5 * re, -0.5 * im)
}

/// `∇_a υ` for a scalar density of weight `(w, w′)` whose chart representative
/// has jet `f` (order ≥ 1).
pub fn density_derivative(l: &Local, f: &Jet, weight: Weight) -> Vec<Complex64> {
    let k = 1.0 / (l.m as f64 + 1.0);
    (0..l.n)
        .map(|a| {
            let t = complex_trace(l, a);
            let conn = (t * weight.w + t.conj() * weight.w_prime) * k;
            Complex64::new(f.d1(a), 0.0) + conn * f.value()
        })
        .collect()
}

/// `∇̃_a υ` computed with the transformed connection.
pub fn transform_density_derivative(
    geom: &Geometry,
    u: &Upsilon,
    s: &TensorField,
    p: &Point,
) -> Result<Vec<Complex64>> {
    if s.rank() != 0 {
        return Err(Error::Dimension("density must be scalar".into()));
    }
    let weight = Weight::new(s.weight.w, s.weight.w_prime)?;
    let tilde = geom.with_connection(transform_connection(&geom.conn, &geom.j, u));
    let l = tilde.local(&p.coords, 0)?;
    let f = s.eval(&p.coords, 1)?;
    Ok(density_derivative(&l, &f[0], weight))
}

/// `P̃_ab = P_ab − ∇_aΥ_b + Υ_aΥ_b − J^i_a J^j_b Υ_iΥ_j`.
pub fn transform_schouten(
    p_ab: &Tensor,
    conn: &Connection,
    j: &ComplexStructure,
    u: &Upsilon,
    p: &Point,
) -> Result<Tensor> {
    let l = Local::new(Some(j), conn, &p.coords, 0)?;
    let uu = u.one_form.eval(&p.coords, 1)?;
    let du = l.covariant(&uu, 0, 1, 0.0);
    let n = l.n;
    let uv: Vec<f64> = uu.iter().map(Jet::value).collect();
    let uj: Vec<f64> = (0..n)
        .map(|a| (0..n).map(|i| uv[i] * l.j(i, a).value()).sum())
        .collect();
    let mut out = p_ab.clone();
    for a in 0..n {
        for b in 0..n {
            let v = p_ab.get(&[a, b]) - du[a * n + b].value() + uv[a] * uv[b] - uj[a] * uj[b];
            out.set(&[a, b], v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{schouten, weyl};

    fn flat() -> Geometry {
        Geometry::new(ComplexStructure::standard(2), Connection::flat(4)).unwrap()
    }

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_upsilon_is_identity() {
        let g = flat();
        let u = Upsilon::random_polynomial(4, 2, 3);
        let c = transform_connection(&g.conn, &g.j, &u);
        let back = transform_connection(&c, &g.j, &u.neg());
        let x = [0.3, -0.4, 0.8, 0.1];
        let a = g.conn.gamma.eval(&x, 1).unwrap();
        let b = back.gamma.eval(&x, 1).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p.value() - q.value()).abs() < 1e-12);
        }
        let same = transform_connection(&g.conn, &g.j, &Upsilon::zero(4));
        assert!(same.gamma.value(&x).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn four_term_display_on_constant_vector() {
        // flat ℝ⁴, Υ = dx⁰, η = e₁: ∇̃_a η^b = Γ̃^b_{a1}
        let g = flat();
        let u = Upsilon::constant(vec![1.0, 0.0, 0.0, 0.0]);
        let c = transform_connection(&g.conn, &g.j, &u);
        let gam = c.gamma.value(&[0.0; 4]).unwrap();
        let j = crate::geometry::standard_j(2);
        let ups = [1.0, 0.0, 0.0, 0.0];
        let eta = [0.0, 1.0, 0.0, 0.0];
        for a in 0..4 {
            for b in 0..4 {
                let uj_a: f64 = (0..4).map(|i| ups[i] * j[i * 4 + a]).sum();
                let j_eta_b: f64 = (0..4).map(|d| j[b * 4 + d] * eta[d]).sum();
                let ueta: f64 = (0..4).map(|c| ups[c] * eta[c]).sum();
                let uj_eta: f64 = (0..4)
                    .map(|c| (0..4).map(|d| ups[c] * j[c * 4 + d] * eta[d]).sum::<f64>())
                    .sum();
                let delta = if a == b { 1.0 } else { 0.0 };
                let want = ups[a] * eta[b] - uj_a * j_eta_b + ueta * delta - uj_eta * j[b * 4 + a];
                assert!((gam.get(&[b, a, 1]) - want).abs() < 1e-15, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn density_law() {
        let g = flat();
        let p = pt(&[0.2, 0.1, -0.3, 0.4]);
        let u = Upsilon::constant(vec![1.0, 0.0, 0.0, 0.0]);
        // weight (−1,−1), τ ≡ 1 → ∇̃₀τ = −2
        let one = TensorField::constant(4, (0, 0), Weight::real(-1.0), vec![1.0]);
        let d = transform_density_derivative(&g, &u, &one, &p).unwrap();
        assert!((d[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-14);
        // weight (0,0) unchanged
        let f = TensorField::from_formula(4, (0, 0), Weight::ZERO, |x| Ok(vec![&x[0] * &x[1]]));
        let d = transform_density_derivative(&g, &u, &f, &p).unwrap();
        assert!((d[0].re - 0.1).abs() < 1e-15 && (d[1].re - 0.2).abs() < 1e-15);
    }

    #[test]
    fn complex_weight_law_on_curved_connection() {
        let g = flat();
        let base = g.with_connection(transform_connection(
            &g.conn,
            &g.j,
            &Upsilon::random_polynomial(4, 2, 7),
        ));
        let u = Upsilon::random_polynomial(4, 2, 8);
        let p = pt(&[0.2, 0.1, -0.3, 0.4]);
        let f = TensorField::from_formula(4, (0, 0), Weight::new(1.5, -0.5).unwrap(), |x| {
            Ok(vec![(&x[0] * &x[2]).add_scalar(2.0)])
        });
        let tilde = transform_density_derivative(&base, &u, &f, &p).unwrap();
        let l = base.local(&p.coords, 0).unwrap();
        let fj = f.eval(&p.coords, 1).unwrap();
        let plain = density_derivative(&l, &fj[0], f.weight);
        let uu = u.one_form.value(&p.coords).unwrap();
        let v = fj[0].value();
        for a in 0..4 {
            let uj: f64 = (0..4).map(|b| uu.data[b] * l.j(b, a).value()).sum();
            let want = plain[a] + Complex64::new(uu.data[a] * v, -2.0 * uj * v);
            assert!((tilde[a] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn schouten_of_flat_with_constant_upsilon() {
        let g = flat();
        let ups = vec![0.3, -0.7, 0.2, 0.5];
        let u = Upsilon::constant(ups.clone());
        let p = pt(&[0.1, 0.2, 0.3, 0.4]);
        let p0 = schouten(&g.conn, &g.j, &p).unwrap();
        let pt_ = transform_schouten(&p0, &g.conn, &g.j, &u, &p).unwrap();
        let direct = schouten(&transform_connection(&g.conn, &g.j, &u), &g.j, &p).unwrap();
        assert!(pt_.max_abs_diff(&direct) < 1e-12);
        assert!(weyl(&transform_connection(&g.conn, &g.j, &u), &g.j, &p).unwrap().max_abs() < 1e-12);
    }
}
