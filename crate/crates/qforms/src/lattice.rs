//! LLL reduction, exact lattice point enumeration and congruence sublattices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith;
use crate::error::{Budget, Meter, QfError, Result};
use crate::form::{ser_big, ser_rat, QuadraticForm};
use crate::matrix::{self, BMat};

#[derive(Debug, Clone, Serialize)]
pub struct ReducedForm {
    #[serde(serialize_with = "ser_form")]
    pub form: QuadraticForm,
    /// columns are the reduced basis; form = UᵀAU
    #[serde(serialize_with = "ser_mat")]
    pub u: BMat,
    #[serde(serialize_with = "ser_big_opt")]
    pub min_value: Option<BigInt>,
    pub swaps: u64,
}

fn ser_form<S: serde::Serializer>(q: &QuadraticForm, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&q.to_json(), s)
}

pub fn ser_mat<S: serde::Serializer>(m: &BMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<serde_json::Value>> = m.iter().map(|r| r.iter().map(crate::form::big_to_json).collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

fn ser_big_opt<S: serde::Serializer>(v: &Option<BigInt>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser_big(x, s),
        None => s.serialize_none(),
    }
}

fn rat(v: &BigInt) -> BigRational {
    BigRational::from_integer(v.clone())
}

/// Gram-Schmidt data (μ, B) of a Gram matrix.
fn gso(g: &BMat) -> (Vec<Vec<BigRational>>, Vec<BigRational>) {
    let n = g.len();
    let mut mu = vec![vec![BigRational::zero(); n]; n];
    let mut b = vec![BigRational::zero(); n];
    for i in 0..n {
        for j in 0..i {
            let mut v = rat(&g[i][j]);
            for l in 0..j {
                v -= &mu[j][l] * &mu[i][l] * &b[l];
            }
            mu[i][j] = v / &b[j];
        }
        let mut v = rat(&g[i][i]);
        for l in 0..i {
            v -= &mu[i][l] * &mu[i][l] * &b[l];
        }
        b[i] = v;
    }
    (mu, b)
}

fn round_rat(x: &BigRational) -> BigInt {
    (x + BigRational::new(BigInt::one(), BigInt::from(2))).floor().to_integer()
}

/// Exact LLL (δ = 3/4) on the Gram matrix of a positive definite form.
pub fn lll(q: &QuadraticForm) -> Result<(BMat, u64)> {
    if !q.is_positive_definite() {
        return Err(QfError::precondition("reduction needs a positive definite form"));
    }
    let n = q.n();
    let a = q.matrix();
    let mut u = matrix::identity(n);
    let gram = |u: &BMat| matrix::mul(&matrix::mul(&matrix::transpose(u), a), u);
    let mut g = gram(&u);
    let delta = BigRational::new(BigInt::from(3), BigInt::from(4));
    let mut k = 1;
    let mut swaps = 0u64;
    while k < n {
        for j in (0..k).rev() {
            let (mu, _) = gso(&g);
            let r = round_rat(&mu[k][j]);
            if !r.is_zero() {
                for row in u.iter_mut() {
                    let v = &row[j] * &r;
                    row[k] -= v;
                }
                g = gram(&u);
            }
        }
        let (mu, b) = gso(&g);
        let lhs = &b[k];
        let rhs = (&delta - &mu[k][k - 1] * &mu[k][k - 1]) * &b[k - 1];
        if *lhs >= rhs {
            k += 1;
        } else {
            for row in u.iter_mut() {
                row.swap(k, k - 1);
            }
            g = gram(&u);
            swaps += 1;
            k = (k - 1).max(1);
        }
    }
    // greedy pass: order basis vectors by their norm
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| g[i][i].cmp(&g[j][j]).then(i.cmp(&j)));
    let u: BMat = (0..n).map(|r| order.iter().map(|&c| u[r][c].clone()).collect()).collect();
    Ok((u, swaps))
}

/// LLL-reduced equivalent form, with min(Q) certified by enumeration when feasible.
pub fn reduce_form(q: &QuadraticForm, budget: &Budget) -> Result<ReducedForm> {
    let (u, swaps) = lll(q)?;
    let form = q.transform(&u)?;
    let bound = form.entry(0, 0).clone();
    let min_value = match minimum(&form, &bound, budget) {
        Ok(m) => Some(m),
        Err(QfError::Budget { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ReducedForm { form, u, min_value, swaps })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinMaxReport {
    /// min(Q)^{n-1} ‖Q‖ / |Δ|
    #[serde(serialize_with = "ser_rat")]
    pub ratio: BigRational,
    /// log min(Q) / log |Δ| (0 when |Δ| = 1)
    pub alpha: f64,
    pub note: &'static str,
}

pub fn min_max_check(r: &ReducedForm) -> Result<MinMaxReport> {
    let m = r
        .min_value
        .as_ref()
        .ok_or_else(|| QfError::precondition("minimum not certified"))?;
    let n = r.form.n();
    let d = r.form.det().abs();
    let ratio = BigRational::new(num_traits::pow(m.clone(), n - 1) * r.form.height(), d.clone());
    let alpha = if d.is_one() {
        0.0
    } else {
        m.to_f64().unwrap().ln() / crate::form::rat_to_f64(&rat(&d)).ln()
    };
    Ok(MinMaxReport {
        ratio,
        alpha,
        note: "constant-free (implied constants A1 = A2 = 1)",
    })
}

/// Integer data for exact depth-first enumeration.
///
/// Level i fixes x_i with x_{i+1..n} already chosen; the coordinates below i
/// are eliminated through the Schur complement, scaled by the leading minor
/// D_i to stay integral: M_i = D_i (A_22 - A_21 A_11^{-1} A_12).
struct Enumerator {
    n: usize,
    /// d[i] = det of the leading i×i block
    d: Vec<i128>,
    /// m[i] indexed by (row - i, col - i)
    m: Vec<Vec<Vec<i128>>>,
}

fn to_i128(v: &BigInt) -> Result<i128> {
    v.to_i128()
        .ok_or_else(|| QfError::precondition("form too large for 128-bit enumeration"))
}

impl Enumerator {
    fn new(q: &QuadraticForm) -> Result<Self> {
        if !q.is_positive_definite() {
            return Err(QfError::precondition("enumeration needs a positive definite form"));
        }
        let n = q.n();
        let a = q.matrix();
        let mut d = Vec::with_capacity(n + 1);
        let mut m = Vec::with_capacity(n);
        for i in 0..n {
            let lead: Vec<usize> = (0..i).collect();
            let di = matrix::det(&matrix::submatrix(a, &lead));
            d.push(to_i128(&di)?);
            let inv = if i == 0 {
                vec![]
            } else {
                matrix::inverse_rational(&matrix::submatrix(a, &lead)).unwrap()
            };
            let mut mi = vec![vec![0i128; n - i]; n - i];
            for r in i..n {
                for c in i..n {
                    let mut s = rat(&a[r][c]);
                    for x in 0..i {
                        for y in 0..i {
                            s -= rat(&a[r][x]) * &inv[x][y] * rat(&a[y][c]);
                        }
                    }
                    let v = s * rat(&di);
                    if !v.is_integer() {
                        return Err(QfError::internal("scaled Schur complement is not integral"));
                    }
                    mi[r - i][c - i] = to_i128(&v.to_integer())?;
                }
            }
            m.push(mi);
        }
        d.push(to_i128(q.det())?);
        Ok(Enumerator { n, d, m })
    }

    /// (b, c) with D_i f(x_i) = M00 x² + 2 b x + c for the chosen tail.
    fn coeffs(&self, i: usize, x: &[i64]) -> Option<(i128, i128)> {
        let mi = &self.m[i];
        let mut b: i128 = 0;
        let mut c: i128 = 0;
        for j in i + 1..self.n {
            if x[j] == 0 {
                continue;
            }
            let xj = x[j] as i128;
            b = b.checked_add(mi[0][j - i].checked_mul(xj)?)?;
            let mut row: i128 = 0;
            for l in i + 1..self.n {
                row = row.checked_add(mi[j - i][l - i].checked_mul(x[l] as i128)?)?;
            }
            c = c.checked_add(row.checked_mul(xj)?)?;
        }
        Some((b, c))
    }
}

fn div_floor(a: i128, b: i128) -> i128 {
    Integer::div_floor(&a, &b)
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -Integer::div_floor(&(-a), &b)
}

/// Integer x with a x² + 2 b x + c ≤ r, as a closed range.
fn level_range(a: i128, b: i128, c: i128, r: i128) -> Option<Option<(i128, i128)>> {
    // (a x + b)² ≤ b² - a (c - r)
    let disc = b.checked_mul(b)?.checked_sub(a.checked_mul(c.checked_sub(r)?)?)?;
    if disc < 0 {
        return Some(None);
    }
    let s = arith::isqrt_u128(disc as u128) as i128;
    let lo = div_ceil(-s - b, a);
    let hi = div_floor(s - b, a);
    Some((lo <= hi).then_some((lo, hi)))
}

enum Target {
    Equal(i128),
    AtMost(i128),
}

pub enum Visit {
    Continue,
    Stop,
}

/// Depth-first walk over all x ≠ 0 with Q(x) = k (or ≤ k), calling `f(x, Q(x))`.
fn walk(
    q: &QuadraticForm,
    target: Target,
    budget: &Budget,
    f: &mut dyn FnMut(&[i64], i128) -> Visit,
) -> Result<u64> {
    let e = Enumerator::new(q)?;
    let n = e.n;
    let r = match target {
        Target::Equal(k) | Target::AtMost(k) => k,
    };
    let equal = matches!(target, Target::Equal(_));
    let mut meter = Meter::new(budget.enum_points, "enumeration points");
    let mut x = vec![0i64; n];
    let overflow = || QfError::precondition("enumeration bound too large for 128-bit arithmetic");
    // explicit stack of (level, next value, hi)
    let mut stack: Vec<(usize, i128, i128)> = Vec::with_capacity(n);
    let push = |i: usize, x: &[i64], stack: &mut Vec<(usize, i128, i128)>| -> Result<()> {
        let (b, c) = e.coeffs(i, x).ok_or_else(overflow)?;
        let a = e.m[i][0][0];
        let ri = r.checked_mul(e.d[i]).ok_or_else(overflow)?;
        if let Some((lo, hi)) = level_range(a, b, c, ri).ok_or_else(overflow)? {
            stack.push((i, lo, hi));
        }
        Ok(())
    };
    push(n - 1, &x, &mut stack)?;
    let mut leaves = 0u64;
    while let Some(top) = stack.last_mut() {
        let (i, cur, hi) = *top;
        if cur > hi {
            stack.pop();
            x[i] = 0;
            continue;
        }
        top.1 += 1;
        meter.tick(1)?;
        x[i] = i64::try_from(cur).map_err(|_| overflow())?;
        if i > 0 {
            if i == 1 && equal {
                // solve the last coordinate exactly: a x² + 2bx + c = k
                let (b, c) = e.coeffs(0, &x).ok_or_else(overflow)?;
                let a = e.m[0][0][0];
                let disc = b.checked_mul(b).and_then(|v| v.checked_sub(a.checked_mul(c - r)?)).ok_or_else(overflow)?;
                if disc >= 0 {
                    let s = arith::isqrt_u128(disc as u128) as i128;
                    if s * s == disc {
                        let mut sols = vec![];
                        for num in [-b - s, -b + s] {
                            if num % a == 0 {
                                sols.push(num / a);
                            }
                        }
                        sols.dedup();
                        for x0 in sols {
                            x[0] = i64::try_from(x0).map_err(|_| overflow())?;
                            if x.iter().any(|&v| v != 0) {
                                leaves += 1;
                                if let Visit::Stop = f(&x, r) {
                                    return Ok(leaves);
                                }
                            }
                        }
                        x[0] = 0;
                    }
                }
                continue;
            }
            push(i - 1, &x, &mut stack)?;
            continue;
        }
        if x.iter().all(|&v| v == 0) {
            continue;
        }
        let val = q.eval_i128(&x).ok_or_else(overflow)?;
        if equal && val != r {
            continue;
        }
        leaves += 1;
        if let Visit::Stop = f(&x, val) {
            return Ok(leaves);
        }
    }
    Ok(leaves)
}

fn target_i128(k: &BigInt) -> Result<i128> {
    if k.is_negative() {
        return Err(QfError::precondition("k must be non-negative"));
    }
    to_i128(k)
}

/// Every x ≠ 0 with Q(x) = k, sorted.
pub fn enumerate_representations(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<Vec<Vec<i64>>> {
    let k = target_i128(k)?;
    let mut out = Vec::new();
    if k == 0 {
        return Ok(out);
    }
    walk(q, Target::Equal(k), budget, &mut |x, _| {
        out.push(x.to_vec());
        Visit::Continue
    })?;
    out.sort();
    Ok(out)
}

/// Number of x with Q(x) = k (x ≠ 0).
pub fn count_representations(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<u64> {
    let k = target_i128(k)?;
    if k == 0 {
        return Ok(0);
    }
    walk(q, Target::Equal(k), budget, &mut |_, _| Visit::Continue)
}

/// Some x with Q(x) = k, or None when 𝒮(k; Q) is empty (certified).
pub fn find_representation(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<Option<Vec<i64>>> {
    let k = target_i128(k)?;
    if k == 0 {
        return Ok(None);
    }
    let mut found = None;
    walk(q, Target::Equal(k), budget, &mut |x, _| {
        found = Some(x.to_vec());
        Visit::Stop
    })?;
    Ok(found)
}

/// Calls `f` on every x with Q(x) = k.
pub fn for_each_representation(
    q: &QuadraticForm,
    k: &BigInt,
    budget: &Budget,
    f: &mut dyn FnMut(&[i64]) -> Visit,
) -> Result<u64> {
    walk(q, Target::Equal(target_i128(k)?), budget, &mut |x, _| f(x))
}

/// Calls `f` on every x ≠ 0 with Q(x) ≤ bound.
pub fn for_each_in_ellipsoid(
    q: &QuadraticForm,
    bound: &BigInt,
    budget: &Budget,
    f: &mut dyn FnMut(&[i64], i128) -> Visit,
) -> Result<u64> {
    walk(q, Target::AtMost(target_i128(bound)?), budget, f)
}

/// min Q(x) over x ≠ 0, given some bound ≥ the minimum.
pub fn minimum(q: &QuadraticForm, bound: &BigInt, budget: &Budget) -> Result<BigInt> {
    let mut best: Option<i128> = None;
    for_each_in_ellipsoid(q, bound, budget, &mut |_, v| {
        best = Some(best.map_or(v, |b| b.min(v)));
        Visit::Continue
    })?;
    best.map(BigInt::from)
        .ok_or_else(|| QfError::precondition("bound is below the minimum"))
}

#[derive(Debug, Clone, Serialize)]
pub struct CongruenceLatticeBasis {
    /// (coefficients of L_i, p)
    pub constraints: Vec<(Vec<i64>, u64)>,
    /// columns generate the lattice; Hermite normal form
    #[serde(serialize_with = "ser_mat")]
    pub t: BMat,
    #[serde(serialize_with = "ser_big")]
    pub det: BigInt,
}

impl CongruenceLatticeBasis {
    pub fn column(&self, j: usize) -> Vec<BigInt> {
        self.t.iter().map(|r| r[j].clone()).collect()
    }

    pub fn contains(&self, x: &[BigInt]) -> bool {
        self.constraints.iter().all(|(l, p)| {
            let v: BigInt = l.iter().zip(x).map(|(a, b)| BigInt::from(*a) * b).sum();
            (v % BigInt::from(*p)).is_zero()
        })
    }
}

/// Upper triangular column Hermite normal form of a nonsingular basis.
pub fn column_hnf(t: &BMat) -> BMat {
    let n = t.len();
    // work on rows of the transpose (each row a basis vector)
    let mut rows = matrix::transpose(t);
    for piv in (0..n).rev() {
        // make rows[piv] the only basis vector among 0..=piv with a nonzero entry at coordinate piv
        loop {
            let cand: Vec<usize> = (0..=piv).filter(|&r| !rows[r][piv].is_zero()).collect();
            let Some(&best) = cand.iter().min_by_key(|&&r| rows[r][piv].abs()) else { break };
            rows.swap(best, piv);
            let mut done = true;
            for r in 0..piv {
                if rows[r][piv].is_zero() {
                    continue;
                }
                let qt = rows[r][piv].div_floor(&rows[piv][piv]);
                let pr = rows[piv].clone();
                for (v, w) in rows[r].iter_mut().zip(&pr) {
                    *v -= &qt * w;
                }
                if !rows[r][piv].is_zero() {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if rows[piv][piv].is_negative() {
            for v in rows[piv].iter_mut() {
                *v = -&*v;
            }
        }
    }
    // reduce entries above each pivot: vector j (j > i) reduced mod vector i at coordinate i
    for i in 0..n {
        for j in i + 1..n {
            let qt = rows[j][i].div_floor(&rows[i][i]);
            if !qt.is_zero() {
                let ri = rows[i].clone();
                for (v, w) in rows[j].iter_mut().zip(&ri) {
                    *v -= &qt * w;
                }
            }
        }
    }
    matrix::transpose(&rows)
}

/// Basis of {x ∈ ℤⁿ : p | L_i(x) for all i}.
pub fn congruence_lattice_basis(n: usize, constraints: &[(Vec<i64>, u64)]) -> Result<CongruenceLatticeBasis> {
    let mut t = matrix::identity(n);
    for (l, p) in constraints {
        if l.len() != n {
            return Err(QfError::precondition("linear form has the wrong length"));
        }
        if !arith::is_prime(*p) {
            return Err(QfError::precondition(format!("{p} is not prime")));
        }
        let pb = BigInt::from(*p);
        let vals: Vec<BigInt> = (0..n)
            .map(|j| {
                let s: BigInt = (0..n).map(|i| BigInt::from(l[i]) * &t[i][j]).sum();
                s.mod_floor(&pb)
            })
            .collect();
        let Some(j0) = vals.iter().position(|v| !v.is_zero()) else { continue };
        let inv = arith::mod_inv(vals[j0].to_i128().unwrap(), *p as i128).unwrap();
        for j in 0..n {
            if j == j0 || vals[j].is_zero() {
                continue;
            }
            let c = (&vals[j] * BigInt::from(inv)).mod_floor(&pb);
            for row in t.iter_mut() {
                let v = &row[j0] * &c;
                row[j] -= v;
            }
        }
        for row in t.iter_mut() {
            row[j0] *= &pb;
        }
    }
    let t = column_hnf(&t);
    let det = matrix::det(&t).abs();
    Ok(CongruenceLatticeBasis {
        constraints: constraints.to_vec(),
        t,
        det,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn box_count(d: &[i64], k: i64) -> u64 {
        // brute force over |x_i| ≤ ⌊√k⌋
        let r = (k as f64).sqrt() as i64 + 1;
        let n = d.len();
        let w = (2 * r + 1) as usize;
        let mut cnt = 0;
        for code in 0..w.pow(n as u32) {
            let mut c = code;
            let mut s = 0;
            let mut nz = false;
            for &di in d {
                let xi = (c % w) as i64 - r;
                c /= w;
                s += di * xi * xi;
                nz |= xi != 0;
            }
            cnt += (nz && s == k) as u64;
        }
        cnt
    }

    #[test]
    fn reduce_examples() {
        let b = Budget::default();
        let r = reduce_form(&QuadraticForm::identity(5), &b).unwrap();
        assert_eq!(r.u, matrix::identity(5));
        assert_eq!(r.min_value, Some(big(1)));
        // Gram of (2e1, e1+e2): shortest vector e2-... has norm 1 after reduction
        let q = QuadraticForm::from_i64(vec![vec![4, 2], vec![2, 2]]).unwrap();
        let r = reduce_form(&q, &b).unwrap();
        assert_eq!(r.min_value, Some(big(2)));
        assert_eq!(r.form.det(), q.det());
        let r = reduce_form(&QuadraticForm::diag(&[1, 1, 7, 7]), &b).unwrap();
        assert_eq!(r.form, QuadraticForm::diag(&[1, 1, 7, 7]));
        assert_eq!(r.min_value, Some(big(1)));
    }

    #[test]
    fn min_max_examples() {
        let b = Budget::default();
        let r = min_max_check(&reduce_form(&QuadraticForm::identity(5), &b).unwrap()).unwrap();
        assert_eq!(r.ratio, BigRational::one());
        assert_eq!(r.alpha, 0.0);
        let r = min_max_check(&reduce_form(&QuadraticForm::diag(&[1, 1, 7, 7]), &b).unwrap()).unwrap();
        assert_eq!(r.ratio, BigRational::new(big(1), big(7)));
        let r = min_max_check(&reduce_form(&QuadraticForm::diag(&[3; 5]), &b).unwrap()).unwrap();
        assert_eq!(r.ratio, BigRational::one());
    }

    #[test]
    fn enumeration_examples() {
        let b = Budget::default();
        assert_eq!(enumerate_representations(&QuadraticForm::identity(4), &big(2), &b).unwrap().len(), 24);
        let q1 = QuadraticForm::diag(&[2, 2, 2, 2, 5]);
        assert!(enumerate_representations(&q1, &big(3), &b).unwrap().is_empty());
        assert!(enumerate_representations(&q1, &big(0), &b).unwrap().is_empty());
        let v = enumerate_representations(&QuadraticForm::identity(3), &big(3), &b).unwrap();
        assert_eq!(v.len(), 8);
        assert!(v.iter().all(|x| x.iter().all(|c| c.abs() == 1)));
    }

    #[test]
    fn identity_counts_match_box() {
        let b = Budget::default();
        for n in 1..=4usize {
            for k in 1..=60i64 {
                let c = count_representations(&QuadraticForm::identity(n), &big(k), &b).unwrap();
                assert_eq!(c, box_count(&vec![1; n], k), "n={n} k={k}");
            }
        }
        for k in [100i64, 199, 200] {
            let c = count_representations(&QuadraticForm::identity(5), &big(k), &b).unwrap();
            assert_eq!(c, box_count(&[1; 5], k));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let b = Budget { enum_points: 100, ..Budget::default() };
        let e = count_representations(&QuadraticForm::identity(5), &big(10_000), &b);
        assert!(matches!(e, Err(QfError::Budget { .. })));
    }

    #[test]
    fn lattice_examples() {
        let t = congruence_lattice_basis(3, &[]).unwrap();
        assert_eq!(t.t, matrix::identity(3));
        assert_eq!(t.det, big(1));
        let t = congruence_lattice_basis(4, &[(vec![1, 0, 0, 0], 7), (vec![0, 1, 0, 0], 7)]).unwrap();
        assert_eq!(t.t, matrix::from_i64(&[vec![7, 0, 0, 0], vec![0, 7, 0, 0], vec![0, 0, 1, 0], vec![0, 0, 0, 1]]));
        assert_eq!(t.det, big(49));
        let t = congruence_lattice_basis(2, &[(vec![1, 1], 3)]).unwrap();
        assert_eq!(t.det, big(3));
    }

    /// Elementary divisors of an integer matrix (Smith normal form).
    fn smith_divisors(mut m: Vec<Vec<i64>>) -> Vec<i64> {
        let rows = m.len();
        let cols = if rows == 0 { 0 } else { m[0].len() };
        let mut out = vec![];
        let mut t = 0;
        while t < rows.min(cols) {
            let mut piv = None;
            for i in t..rows {
                for j in t..cols {
                    if m[i][j] != 0 && piv.is_none_or(|(a, b): (usize, usize)| m[i][j].abs() < m[a][b].abs()) {
                        piv = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = piv else { break };
            m.swap(t, pi);
            for r in m.iter_mut() {
                r.swap(t, pj);
            }
            let mut clean = true;
            for i in t + 1..rows {
                let q = m[i][t] / m[t][t];
                for j in t..cols {
                    m[i][j] -= q * m[t][j];
                }
                clean &= m[i][t] == 0;
            }
            for j in t + 1..cols {
                let q = m[t][j] / m[t][t];
                for i in t..rows {
                    m[i][j] -= q * m[i][t];
                }
                clean &= m[t][j] == 0;
            }
            if !clean {
                continue;
            }
            // divisibility of the remaining block
            let bad = (t + 1..rows).flat_map(|i| (t + 1..cols).map(move |j| (i, j))).find(|&(i, j)| m[i][j] % m[t][t] != 0);
            if let Some((i, _)) = bad {
                for j in t..cols {
                    m[t][j] += m[i][j];
                }
                continue;
            }
            out.push(m[t][t].abs());
            t += 1;
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lattice_matches_smith_index(
            rows in proptest::collection::vec(proptest::collection::vec(-6i64..6, 4), 0..4),
            pi in 0usize..3,
        ) {
            let p = [2u64, 3, 5][pi];
            let cons: Vec<(Vec<i64>, u64)> = rows.iter().map(|r| (r.clone(), p)).collect();
            let t = congruence_lattice_basis(4, &cons).unwrap();
            for j in 0..4 {
                prop_assert!(t.contains(&t.column(j)));
            }
            // index = p^{rank mod p}; rank mod p = #elementary divisors prime to p
            let rank = if rows.is_empty() { 0 } else {
                smith_divisors(rows.clone()).iter().filter(|&&d| d % p as i64 != 0).count()
            };
            prop_assert_eq!(t.det.clone(), arith::big_pow(p, rank as u32));
            // upper triangular with reduced entries above the diagonal
            for i in 0..4 {
                prop_assert!(t.t[i][i].is_positive());
                for j in 0..i {
                    prop_assert!(t.t[i][j].is_zero());
                }
                for j in i + 1..4 {
                    prop_assert!(!t.t[i][j].is_negative() && t.t[i][j] < t.t[i][i]);
                }
            }
        }

        #[test]
        fn reduction_preserves_representation_counts(
            c in proptest::collection::vec(-3i64..4, 3),
            d in proptest::collection::vec(1i64..5, 3),
            k in 1i64..50,
        ) {
            // A = LᵀDL with unit lower triangular L is positive definite
            let l = [[1, 0, 0], [c[0], 1, 0], [c[1], c[2], 1]];
            let a: Vec<Vec<i64>> = (0..3).map(|i| (0..3).map(|j| (0..3).map(|r| l[r][i] * d[r] * l[r][j]).sum()).collect()).collect();
            let q = QuadraticForm::from_i64(a).unwrap();
            let b = Budget::default();
            let r = reduce_form(&q, &b).unwrap();
            prop_assert_eq!(r.form.det(), q.det());
            prop_assert_eq!(
                count_representations(&q, &big(k), &b).unwrap(),
                count_representations(&r.form, &big(k), &b).unwrap()
            );
            prop_assert!(r.min_value.is_some());
        }
    }
}
