//! Dense integer matrix helpers (row-major `Vec<Vec<_>>`).

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type BMat = Vec<Vec<BigInt>>;

pub fn identity(n: usize) -> BMat {
    (0..n)
        .map(|i| (0..n).map(|j| BigInt::from((i == j) as i64)).collect())
        .collect()
}

pub fn from_i64(m: &[Vec<i64>]) -> BMat {
    m.iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect()
}

pub fn to_i64(m: &BMat) -> Option<Vec<Vec<i64>>> {
    m.iter()
        .map(|r| r.iter().map(|v| v.to_i64()).collect::<Option<Vec<_>>>())
        .collect()
}

pub fn transpose(m: &BMat) -> BMat {
    if m.is_empty() {
        return vec![];
    }
    let (r, c) = (m.len(), m[0].len());
    (0..c)
        .map(|j| (0..r).map(|i| m[i][j].clone()).collect())
        .collect()
}

pub fn mul(a: &BMat, b: &BMat) -> BMat {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![BigInt::zero(); c]; r];
    for i in 0..r {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..c {
                out[i][j] += &a[i][l] * &b[l][j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &BMat, x: &[BigInt]) -> Vec<BigInt> {
    a.iter()
        .map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn det(m: &BMat) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a = m.clone();
    let mut sign = 1;
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            let Some(s) = (k + 1..n).find(|&i| !a[i][k].is_zero()) else {
                return BigInt::zero();
            };
            a.swap(k, s);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    let d = a[n - 1][n - 1].clone();
    if sign < 0 {
        -d
    } else {
        d
    }
}

pub fn submatrix(m: &BMat, idx: &[usize]) -> BMat {
    idx.iter()
        .map(|&i| idx.iter().map(|&j| m[i][j].clone()).collect())
        .collect()
}

/// Exact inverse over the rationals; `None` when singular.
pub fn inverse_rational(m: &BMat) -> Option<Vec<Vec<BigRational>>> {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row: Vec<BigRational> =
                r.iter().map(|v| BigRational::from_integer(v.clone())).collect();
            row.extend((0..n).map(|j| BigRational::from_integer(BigInt::from((i == j) as i64))));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        let inv = a[c][c].recip();
        for v in a[c].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                let pivot_row = a[c].clone();
                for (v, pv) in a[i].iter_mut().zip(pivot_row.iter()) {
                    *v = &*v - &f * pv;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Exact inverse of a unimodular integer matrix.
pub fn inverse_unimodular(m: &BMat) -> Option<BMat> {
    let inv = inverse_rational(m)?;
    inv.into_iter()
        .map(|r| {
            r.into_iter()
                .map(|v| if v.is_integer() { Some(v.to_integer()) } else { None })
                .collect::<Option<Vec<_>>>()
        })
        .collect()
}

/// Inverse modulo m of a matrix whose determinant is a unit mod m.
pub fn inverse_mod(mat: &[Vec<i128>], m: i128) -> Option<Vec<Vec<i128>>> {
    let n = mat.len();
    let mut a: Vec<Vec<i128>> = mat
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row: Vec<i128> = r.iter().map(|v| v.rem_euclid(m)).collect();
            row.extend((0..n).map(|j| (i == j) as i128));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&i| a[i][c].gcd(&m) == 1)?;
        a.swap(c, p);
        let inv = crate::arith::mod_inv(a[c][c], m)?;
        for v in a[c].iter_mut() {
            *v = (*v * inv).rem_euclid(m);
        }
        for i in 0..n {
            if i != c && a[i][c] != 0 {
                let f = a[i][c];
                for j in 0..2 * n {
                    a[i][j] = (a[i][j] - f * a[c][j]).rem_euclid(m);
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

pub fn is_zero_vec(x: &[BigInt]) -> bool {
    x.iter().all(|v| v.is_zero())
}

pub fn max_abs(m: &BMat) -> BigInt {
    m.iter()
        .flat_map(|r| r.iter())
        .map(|v| v.abs())
        .max()
        .unwrap_or_else(BigInt::zero)
}

pub fn content(m: &BMat) -> BigInt {
    m.iter()
        .flat_map(|r| r.iter())
        .fold(BigInt::zero(), |g, v| g.gcd(v))
}
