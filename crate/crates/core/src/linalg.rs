//! Dense linear algebra on jet-valued and real matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Inverse of a row-major `n × n` jet matrix by Gauss-Jordan elimination,
/// pivoting on values.
pub fn jet_inverse(a: &[Jet], n: usize) -> Result<Vec<Jet>> {
    assert_eq!(a.len(), n * n);
    let sp = a[0].space().clone();
    let order = a.iter().map(Jet::order).min().unwrap_or(0);
    let mut m: Vec<Jet> = a.to_vec();
    let mut inv: Vec<Jet> = (0..n * n)
        .map(|k| Jet::constant(&sp, order, if k / n == k % n { 1.0 } else { 0.0 }))
        .collect();
    let scale = a.iter().fold(0.0f64, |s, j| s.max(j.value().abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| {
                m[r * n + col]
                    .value()
                    .abs()
                    .total_cmp(&m[s * n + col].value().abs())
            })
            .expect("non-empty pivot range");
        if m[piv * n + col].value().abs() <= 1e-14 * scale.max(1e-300) {
            return Err(Error::Degenerate(format!(
                "matrix is singular to working precision at column {col}"
            )));
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let r = m[col * n + col].recip();
        for k in 0..n {
            m[col * n + k] = &m[col * n + k] * &r;
            inv[col * n + k] = &inv[col * n + k] * &r;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col].clone();
            if f.value() == 0.0 && f.order() == 0 {
                continue;
            }
            for k in 0..n {
                let t = &f * &m[col * n + k];
                m[row * n + k] -= &t;
                let t = &f * &inv[col * n + k];
                inv[row * n + k] -= &t;
            }
        }
    }
    Ok(inv)
}

/// Pfaffian of a real antisymmetric matrix by skew Gaussian elimination.
pub fn pfaffian(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n % 2 == 1 {
        return 0.0;
    }
    let mut m = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        // bring the largest entry of row k into position (k, k+1)
        let (mut piv, mut best) = (k + 1, m[(k, k + 1)].abs());
        for j in k + 2..n {
            if m[(k, j)].abs() > best {
                best = m[(k, j)].abs();
                piv = j;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != k + 1 {
            m.swap_rows(k + 1, piv);
            m.swap_columns(k + 1, piv);
            pf = -pf;
        }
        let akk1 = m[(k, k + 1)];
        pf *= akk1;
        for i in k + 2..n {
            let f = m[(k, i)] / akk1;
            // eliminate row/column i using row/column k+1
            for j in k..n {
                let v = m[(k + 1, j)];
                m[(i, j)] -= f * v;
            }
            for j in k..n {
                let v = m[(j, k + 1)];
                m[(j, i)] -= f * v;
            }
        }
        k += 2;
    }
    pf
}

/// Pfaffian of an antisymmetric jet matrix, by expansion along the first row.
/// Only used for small sizes.
pub fn jet_pfaffian(a: &[Jet], n: usize) -> Jet {
    let idx: Vec<usize> = (0..n).collect();
    pf_rec(a, n, &idx)
}

fn pf_rec(a: &[Jet], n: usize, idx: &[usize]) -> Jet {
    let sp = a[0].space().clone();
    let order = a[0].order();
    if idx.is_empty() {
        return Jet::constant(&sp, order, 1.0);
    }
    let i0 = idx[0];
    let mut acc = Jet::zero(&sp, order);
    for (k, &j) in idx.iter().enumerate().skip(1) {
        let rest: Vec<usize> = idx
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != 0 && l != k)
            .map(|(_, &v)| v)
            .collect();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = &a[i0 * n + j] * &pf_rec(a, n, &rest);
        acc.axpy(sign, &term);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        m
    }

    #[test]
    fn pfaffian_squares_to_determinant() {
        for (n, seed) in [(2, 1), (4, 2), (6, 3), (8, 4)] {
            let a = skew(n, seed);
            let pf = pfaffian(&a);
            assert!((pf * pf - a.determinant()).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn pfaffian_of_standard_block() {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(2, 3)] = 1.0;
        a[(3, 2)] = -1.0;
        assert_eq!(pfaffian(&a), 1.0);
    }

    #[test]
    fn jet_pfaffian_matches_dense() {
        let a = skew(6, 9);
        let sp = crate::jet::JetSpace::get(4, 0);
        let rows: Vec<Jet> = (0..36)
            .map(|k| Jet::constant(&sp, 0, a[(k / 6, k % 6)]))
            .collect();
        assert!((jet_pfaffian(&rows, 6).value() - pfaffian(&a)).abs() < 1e-13);
    }

    #[test]
    fn jet_inverse_of_position_dependent_matrix() {
        let x = Jet::coordinates(&[0.3, -0.2, 0.5, 0.1], 2);
        let one = Jet::constant(x[0].space(), 2, 1.0);
        let a = vec![
            one.add_scalar(1.0) + x[0].clone(),
            x[1].clone(),
            &x[2] * &x[3],
            one.add_scalar(2.0),
        ];
        let inv = jet_inverse(&a, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = Jet::zero(x[0].space(), 2);
                for k in 0..2 {
                    s += &(&a[i * 2 + k] * &inv[k * 2 + j]);
                }
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s.value() - e).abs() < 1e-14);
                for v in 0..4 {
                    assert!(s.d1(v).abs() < 1e-13);
                    for w in 0..4 {
                        assert!(s.d2(v, w).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
