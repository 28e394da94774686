//! Small zeros of indefinite forms and the Kneser family.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith;
use crate::error::{Budget, QfError, Result};
use crate::form::{FormClass, QuadraticForm};
use crate::lattice::{for_each_in_ellipsoid, Visit};

#[derive(Debug, Clone, Serialize)]
pub struct ZeroSearchResult {
    /// least max-norm zero, ties broken towards the lexicographically greatest
    pub found: Option<Vec<i64>>,
    /// same, restricted to x₁ ≠ 0
    pub found_first_nonzero: Option<Vec<i64>>,
    pub search_bound: i64,
    pub exhaustive: bool,
    pub points_visited: u64,
}

impl ZeroSearchResult {
    pub fn norm(&self, first_nonzero: bool) -> Option<i64> {
        let v = if first_nonzero { &self.found_first_nonzero } else { &self.found };
        v.as_ref().map(|x| max_norm(x))
    }
}

pub fn max_norm(x: &[i64]) -> i64 {
    x.iter().map(|v| v.abs()).max().unwrap_or(0)
}

/// (norm ascending, then lexicographically greatest).
fn better(a: &[i64], b: &[i64]) -> bool {
    let (na, nb) = (max_norm(a), max_norm(b));
    na < nb || (na == nb && a > b)
}

fn keep(slot: &mut Option<Vec<i64>>, x: &[i64]) {
    if slot.as_ref().is_none_or(|s| better(x, s)) {
        *slot = Some(x.to_vec());
    }
}

fn merge(a: Option<Vec<i64>>, b: Option<Vec<i64>>) -> Option<Vec<i64>> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Box search state: coordinates 0..n-1 enumerated, the last solved for.
struct BoxSearch<'a> {
    a: &'a [Vec<i128>],
    n: usize,
    bound: i64,
    counter: &'a AtomicU64,
    limit: u64,
}

impl BoxSearch<'_> {
    /// Exact x_n with Q = 0 and |x_n| ≤ bound for a fixed prefix.
    fn solve_last(&self, x: &mut [i64], best: &mut Option<Vec<i64>>, best1: &mut Option<Vec<i64>>, b: i128, c: i128) {
        let n = self.n;
        let a = self.a[n - 1][n - 1];
        let prefix_zero = x[..n - 1].iter().all(|&v| v == 0);
        let mut emit = |xn: i128, x: &mut [i64]| {
            if xn.abs() > self.bound as i128 {
                return;
            }
            x[n - 1] = xn as i64;
            if !(prefix_zero && xn == 0) {
                keep(best, x);
                if x[0] != 0 {
                    keep(best1, x);
                }
            }
            x[n - 1] = 0;
        };
        if a == 0 {
            if b == 0 {
                if c == 0 {
                    // every x_n works: the smallest-norm, greatest choice
                    let m = max_norm(&x[..n - 1]) as i128;
                    emit(if prefix_zero { 1 } else { m }, x);
                }
                return;
            }
            // 2 b x_n + c = 0
            if c % (2 * b) == 0 {
                emit(-c / (2 * b), x);
            }
            return;
        }
        // a x² + 2 b x + c = 0
        let disc = b * b - a * c;
        if disc < 0 {
            return;
        }
        let s = arith::isqrt_u128(disc as u128) as i128;
        if s * s != disc {
            return;
        }
        for num in [-b + s, -b - s] {
            if num % a == 0 {
                emit(num / a, x);
            }
        }
    }

    /// Recursive walk over coordinates i..n-1 (exclusive of the last).
    fn walk(&self, i: usize, x: &mut [i64], best: &mut Option<Vec<i64>>, best1: &mut Option<Vec<i64>>) -> bool {
        let n = self.n;
        if i == n - 1 {
            // b = Σ_{j<n-1} A_{n-1,j} x_j ; c = Q(prefix)
            let mut b: i128 = 0;
            let mut c: i128 = 0;
            for j in 0..n - 1 {
                if x[j] == 0 {
                    continue;
                }
                b += self.a[n - 1][j] * x[j] as i128;
                let mut row: i128 = 0;
                for l in 0..n - 1 {
                    row += self.a[j][l] * x[l] as i128;
                }
                c += row * x[j] as i128;
            }
            self.solve_last(x, best, best1, b, c);
            return true;
        }
        if i == n - 2 {
            // innermost enumerated coordinate: update b and c incrementally
            let mut b0: i128 = 0;
            let mut c0: i128 = 0;
            let mut lin: i128 = 0;
            for j in 0..i {
                if x[j] == 0 {
                    continue;
                }
                b0 += self.a[n - 1][j] * x[j] as i128;
                lin += self.a[i][j] * x[j] as i128;
                let mut row: i128 = 0;
                for l in 0..i {
                    row += self.a[j][l] * x[l] as i128;
                }
                c0 += row * x[j] as i128;
            }
            let aii = self.a[i][i];
            let ani = self.a[n - 1][i];
            let w = 2 * self.bound as u64 + 1;
            if self.counter.fetch_add(w, Ordering::Relaxed) + w > self.limit {
                return false;
            }
            for t in -self.bound..=self.bound {
                let tt = t as i128;
                x[i] = t;
                let b = b0 + ani * tt;
                let c = c0 + 2 * lin * tt + aii * tt * tt;
                self.solve_last(x, best, best1, b, c);
            }
            x[i] = 0;
            return true;
        }
        for t in -self.bound..=self.bound {
            x[i] = t;
            if !self.walk(i + 1, x, best, best1) {
                x[i] = 0;
                return false;
            }
        }
        x[i] = 0;
        true
    }
}

/// Exhaustive search for zeros of Q in the box |x| ≤ B.
pub fn search_zero(q: &QuadraticForm, bound: i64, budget: &Budget) -> Result<ZeroSearchResult> {
    if q.class() != FormClass::Indefinite {
        return Err(QfError::precondition("zero search needs a nonsingular indefinite form"));
    }
    if bound < 1 {
        return Err(QfError::precondition("search bound must be at least 1"));
    }
    let n = q.n();
    let s = q.small()?;
    let h = q.height().to_i128().unwrap_or(i128::MAX);
    // |Q(x)| ≤ n² H B² must fit comfortably
    if (n as i128 * n as i128).checked_mul(h).and_then(|v| v.checked_mul(bound as i128 * bound as i128)).is_none_or(|v| v > 1i128 << 100) {
        return Err(QfError::precondition("search box too large for 128-bit arithmetic"));
    }
    let a: Vec<Vec<i128>> = s.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let counter = AtomicU64::new(0);
    let bs = BoxSearch { a: &a, n, bound, counter: &counter, limit: budget.enum_points };
    let run = |first: Option<i64>| -> (Option<Vec<i64>>, Option<Vec<i64>>, bool) {
        let mut x = vec![0i64; n];
        let (mut b, mut b1) = (None, None);
        let ok = match first {
            Some(t) => {
                x[0] = t;
                bs.walk(1, &mut x, &mut b, &mut b1)
            }
            None => bs.walk(0, &mut x, &mut b, &mut b1),
        };
        (b, b1, ok)
    };
    let parts: Vec<(Option<Vec<i64>>, Option<Vec<i64>>, bool)> = if n >= 3 {
        (-bound..=bound).into_par_iter().map(|t| run(Some(t))).collect()
    } else {
        vec![run(None)]
    };
    let mut found = None;
    let mut found1 = None;
    let mut exhaustive = true;
    for (b, b1, ok) in parts {
        found = merge(found, b);
        found1 = merge(found1, b1);
        exhaustive &= ok;
    }
    for v in found.iter().chain(found1.iter()) {
        if !q.evaluate_i64(v)?.is_zero() {
            return Err(QfError::internal("reported zero does not vanish"));
        }
    }
    if !exhaustive {
        return Err(QfError::Budget {
            what: format!("zero search limit of {} points exceeded", budget.enum_points),
            progress: Some(format!("best so far: {found:?}")),
        });
    }
    Ok(ZeroSearchResult {
        found,
        found_first_nonzero: found1,
        search_bound: bound,
        exhaustive,
        points_visited: counter.load(Ordering::Relaxed),
    })
}

fn diag_of(q: &QuadraticForm) -> Result<Vec<i64>> {
    let d = q
        .diagonal_i64()
        .ok_or_else(|| QfError::precondition("form must be diagonal"))?;
    if d.iter().any(|&v| v == 0) {
        return Err(QfError::precondition("diagonal coefficients must be nonzero"));
    }
    if d.iter().all(|&v| v > 0) || d.iter().all(|&v| v < 0) {
        return Err(QfError::precondition("form must be indefinite"));
    }
    Ok(d)
}

/// Zero of Σ d_i x_i² of least weight Σ |d_i| x_i², ties to the lexicographically
/// greatest; `None` when no zero has weight ≤ cap.
fn least_weight_zero(d: &[i64], cap: i128, budget: &Budget) -> Result<Option<(Vec<i64>, i128)>> {
    let absd: Vec<i64> = d.iter().map(|v| v.abs()).collect();
    let pos = QuadraticForm::diag(&absd);
    let mut r: i128 = 2 * *absd.iter().max().unwrap() as i128;
    loop {
        let r_eff = r.min(cap);
        let mut best: Option<(Vec<i64>, i128)> = None;
        for_each_in_ellipsoid(&pos, &BigInt::from(r_eff), budget, &mut |x, w| {
            let v: i128 = x.iter().zip(d).map(|(&xi, &di)| di as i128 * (xi as i128) * (xi as i128)).sum();
            if v == 0 && best.as_ref().is_none_or(|(bx, bw)| w < *bw || (w == *bw && x > bx.as_slice())) {
                best = Some((x.to_vec(), w));
            }
            Visit::Continue
        })?;
        if best.is_some() || r_eff >= cap {
            return Ok(best);
        }
        r *= 4;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiveVariableZero {
    /// chosen coordinates (0-based)
    pub indices: Vec<usize>,
    pub x: Vec<i64>,
    pub weight: i64,
    /// 2 |Δ₅| for the chosen quinary form
    pub ellipsoid_bound: i64,
    pub max_norm: i64,
    /// √2 ‖Q‖²
    pub norm_bound: f64,
    pub within_bound: bool,
}

/// Sign-mixed 5-subset of the diagonal with the smallest |product|.
pub fn choose_quintuple(d: &[i64]) -> Result<Vec<usize>> {
    let n = d.len();
    let mut best: Option<(i128, Vec<usize>)> = None;
    let mut idx = [0usize; 5];
    fn rec(start: usize, depth: usize, n: usize, d: &[i64], idx: &mut [usize; 5], best: &mut Option<(i128, Vec<usize>)>) {
        if depth == 5 {
            let pos = idx.iter().any(|&i| d[i] > 0);
            let neg = idx.iter().any(|&i| d[i] < 0);
            if pos && neg {
                let prod: i128 = idx.iter().map(|&i| d[i].unsigned_abs() as i128).product();
                if best.as_ref().is_none_or(|(p, _)| prod < *p) {
                    *best = Some((prod, idx.to_vec()));
                }
            }
            return;
        }
        for i in start..n {
            idx[depth] = i;
            rec(i + 1, depth + 1, n, d, idx, best);
        }
    }
    rec(0, 0, n, d, &mut idx, &mut best);
    best.map(|b| b.1)
        .ok_or_else(|| QfError::internal("no sign-mixed quintuple"))
}

/// Zero of a diagonal indefinite form found in an indefinite quinary slice.
pub fn diagonal_five_variable_zero(q: &QuadraticForm, budget: &Budget) -> Result<FiveVariableZero> {
    let d = diag_of(q)?;
    let n = d.len();
    if n < 5 {
        return Err(QfError::precondition("need n >= 5"));
    }
    let idx = choose_quintuple(&d)?;
    let sub: Vec<i64> = idx.iter().map(|&i| d[i]).collect();
    let delta5: i128 = sub.iter().map(|v| v.unsigned_abs() as i128).product();
    let (y, w) = least_weight_zero(&sub, 2 * delta5, budget)?
        .ok_or_else(|| QfError::internal("no zero inside the quinary ellipsoid"))?;
    let mut x = vec![0i64; n];
    for (k, &i) in idx.iter().enumerate() {
        x[i] = y[k];
    }
    if !q.evaluate_i64(&x)?.is_zero() {
        return Err(QfError::internal("five-variable zero does not vanish"));
    }
    let h = q.height().to_f64().unwrap();
    let norm_bound = 2f64.sqrt() * h * h;
    let mn = max_norm(&x);
    Ok(FiveVariableZero {
        indices: idx,
        weight: w as i64,
        ellipsoid_bound: (2 * delta5) as i64,
        max_norm: mn,
        norm_bound,
        within_bound: (mn as f64) <= norm_bound,
        x,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OuWilliamsReport {
    pub given_weight: Option<i64>,
    pub ellipsoid_zero: Option<Vec<i64>>,
    pub weight: Option<i64>,
    /// 2 |Δ|
    pub bound: i64,
    pub within: bool,
    /// √2 ‖Q‖^{(n-1)/2}
    pub max_norm_bound: f64,
}

/// A zero inside the ellipsoid Σ|A_i| x_i² ≤ 2|Δ|, found by enumeration.
pub fn ou_williams_check(q: &QuadraticForm, given: Option<&[i64]>, budget: &Budget) -> Result<OuWilliamsReport> {
    let d = diag_of(q)?;
    let weight_of = |x: &[i64]| -> i64 { x.iter().zip(&d).map(|(a, b)| b.abs() * a * a).sum() };
    let given_weight = match given {
        Some(x) => {
            if !q.evaluate_i64(x)?.is_zero() {
                return Err(QfError::precondition("given vector is not a zero"));
            }
            Some(weight_of(x))
        }
        None => None,
    };
    let bound: i128 = 2 * q.det().abs().to_i128().ok_or_else(|| QfError::precondition("discriminant too large"))?;
    let found = least_weight_zero(&d, bound, budget)?;
    let h = q.height().to_f64().unwrap();
    Ok(OuWilliamsReport {
        given_weight,
        within: found.is_some(),
        weight: found.as_ref().map(|f| f.1 as i64),
        ellipsoid_zero: found.map(|f| f.0),
        bound: bound as i64,
        max_norm_bound: 2f64.sqrt() * h.powf((d.len() as f64 - 1.0) / 2.0),
    })
}

/// X₁² − Σ (X_i − c X_{i−1})².
pub fn kneser_form(c: i64, n: usize) -> Result<QuadraticForm> {
    if c < 3 {
        return Err(QfError::precondition("need c >= 3"));
    }
    if n < 2 {
        return Err(QfError::precondition("need n >= 2"));
    }
    let mut a = vec![vec![0i64; n]; n];
    a[0][0] = 1;
    for i in 1..n {
        // −(e_i − c e_{i−1})(e_i − c e_{i−1})ᵀ
        a[i][i] -= 1;
        a[i - 1][i - 1] -= c * c;
        a[i][i - 1] += c;
        a[i - 1][i] += c;
    }
    QuadraticForm::from_i64(a)
}

/// (1, c−1, c²−c, …, c^{n−1}−c^{n−2}).
pub fn kneser_zero(c: i64, n: usize) -> Vec<BigInt> {
    let cb = BigInt::from(c);
    let mut v = vec![BigInt::from(1)];
    for i in 1..n {
        v.push(num_traits::pow(cb.clone(), i) - num_traits::pow(cb.clone(), i - 1));
    }
    v
}

/// γ_k: exact for k ≤ 8, Blichfeldt's bound (2/π) Γ(2 + k/2)^{2/k} beyond.
pub fn hermite_constant(k: usize) -> f64 {
    let exact = [(1, 1.0, 1.0), (2, 4.0, 3.0), (3, 2.0, 1.0), (4, 4.0, 1.0), (5, 8.0, 1.0), (6, 64.0, 3.0), (7, 64.0, 1.0), (8, 256.0, 1.0)];
    if let Some(&(_, num, den)) = exact.iter().find(|e| e.0 == k) {
        return (num / den as f64).powf(1.0 / k as f64);
    }
    let kf = k as f64;
    (2.0 / std::f64::consts::PI) * statrs_gamma(2.0 + kf / 2.0).powf(2.0 / kf)
}

fn statrs_gamma(x: f64) -> f64 {
    // Γ(x) for x > 1 via ln Γ (Lanczos, g = 7)
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

pub fn alpha_n(n: usize) -> u32 {
    u32::from(n % 2 == 0)
}

/// 0 when Δ is odd and square-free, else 1/(n−4).
pub fn beta_q(det: &BigInt, n: usize) -> Result<f64> {
    let odd = !(det % 2u32).is_zero();
    if odd && arith::factor_big(det)?.iter().all(|&(_, e)| e == 1) {
        Ok(0.0)
    } else {
        Ok(1.0 / (n as f64 - 4.0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaEnvelopeReport {
    pub observed: i64,
    pub first_nonzero: bool,
    /// ‖Q‖^{(n−1)/2}
    pub cassels: f64,
    /// (√2 n γ_{n−1})^{(n−1)/2}
    pub davenport_constant: f64,
    /// m(Q)^{-1/2}(|Δ|^{1+2β}‖Q‖^n)^{1/(n−3−α_n)}, with the certified bound for m(Q)
    pub discriminant_envelope: Option<f64>,
    /// ‖Q‖^{n/2}
    pub masser: f64,
    pub alpha_n: u32,
    pub beta_q: f64,
    pub ratios: Vec<(String, f64)>,
    pub note: &'static str,
}

pub fn lambda_envelope_report(q: &QuadraticForm, result: &ZeroSearchResult) -> Result<LambdaEnvelopeReport> {
    if q.det().is_zero() {
        return Err(QfError::precondition("form is degenerate (discriminant 0)"));
    }
    let first = result.found_first_nonzero.is_some();
    let observed = result
        .norm(first)
        .ok_or_else(|| QfError::precondition("no zero was found"))?;
    let n = q.n();
    let nf = n as f64;
    let h = q.height().to_f64().unwrap();
    let d = q.det().abs().to_f64().unwrap();
    let cassels = h.powf((nf - 1.0) / 2.0);
    let davenport_constant = (2f64.sqrt() * nf * hermite_constant(n - 1)).powf((nf - 1.0) / 2.0);
    let masser = h.powf(nf / 2.0);
    let al = alpha_n(n);
    let beta = if n > 4 { beta_q(q.det(), n)? } else { 0.0 };
    let discriminant_envelope = if n >= 5 {
        let env = q.eigen_envelope();
        let m = crate::form::rat_to_f64(env.min_abs_lower.as_ref().unwrap());
        Some(m.powf(-0.5) * (d.powf(1.0 + 2.0 * beta) * h.powf(nf)).powf(1.0 / (nf - 3.0 - al as f64)))
    } else {
        None
    };
    let o = observed as f64;
    let mut ratios = vec![("cassels".to_string(), o / cassels), ("masser".to_string(), o / masser)];
    if let Some(t) = discriminant_envelope {
        ratios.push(("discriminant".to_string(), o / t));
    }
    Ok(LambdaEnvelopeReport {
        observed,
        first_nonzero: first,
        cassels,
        davenport_constant,
        discriminant_envelope,
        masser,
        alpha_n: al,
        beta_q: beta,
        ratios,
        note: "constant-free (implied constant unknown)",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bigv(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn small_searches() {
        let b = Budget::default();
        let r = search_zero(&QuadraticForm::diag(&[1, 1, -1]), 1, &b).unwrap();
        assert_eq!(r.found, Some(vec![1, 0, 1]));
        let r = search_zero(&QuadraticForm::diag(&[1, 1, 1, 1, -1]), 1, &b).unwrap();
        assert_eq!(r.found, Some(vec![1, 0, 0, 0, 1]));
        let r = search_zero(&QuadraticForm::diag(&[1, -1]), 3, &b).unwrap();
        assert_eq!(r.found, Some(vec![1, 1]));
        // isotropic binary with zero diagonal in the last slot
        let q = QuadraticForm::from_i64(vec![vec![1, 1], vec![1, 0]]).unwrap();
        let r = search_zero(&q, 3, &b).unwrap();
        assert_eq!(r.found, Some(vec![0, 1]));
        assert_eq!(r.found_first_nonzero, Some(vec![2, -1]));
    }

    #[test]
    fn kneser_examples() {
        let q = kneser_form(3, 5).unwrap();
        assert_eq!(q.det().abs(), BigInt::from(1));
        assert_eq!(q.class(), FormClass::Indefinite);
        assert_eq!(q.height(), &BigInt::from(10));
        assert!(q.evaluate(&kneser_zero(3, 5)).unwrap().is_zero());
        assert_eq!(kneser_zero(3, 3), bigv(&[1, 2, 6]));
        let a = kneser_zero(4, 4);
        assert_eq!(a, bigv(&[1, 3, 12, 48]));
        assert!(kneser_form(4, 4).unwrap().evaluate(&a).unwrap().is_zero());
        // restricted search on the smaller member
        let r = search_zero(&kneser_form(3, 3).unwrap(), 6, &Budget::default()).unwrap();
        assert_eq!(r.found_first_nonzero, Some(vec![1, 2, 6]));
    }

    #[test]
    fn five_variable_examples() {
        let b = Budget::default();
        let z = diagonal_five_variable_zero(&QuadraticForm::diag(&[1, 1, 1, 1, -1, 7, 7]), &b).unwrap();
        assert_eq!(z.indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(z.x, vec![1, 0, 0, 0, 1, 0, 0]);
        let z = diagonal_five_variable_zero(&QuadraticForm::diag(&[2, -3, 5, -7, 11]), &b).unwrap();
        assert!(z.weight <= 2 * 2310 && z.within_bound);
        let z = diagonal_five_variable_zero(&QuadraticForm::diag(&[1, -1, 4, 9, 25, 36]), &b).unwrap();
        assert!(z.indices.contains(&0) && z.indices.contains(&1));
    }

    #[test]
    fn ou_williams_examples() {
        let b = Budget::default();
        let r = ou_williams_check(&QuadraticForm::diag(&[1, -1, 1]), Some(&[1, 1, 0]), &b).unwrap();
        assert_eq!(r.given_weight, Some(2));
        assert!(r.within && r.weight.unwrap() <= 2);
        let r = ou_williams_check(&QuadraticForm::diag(&[2, -3, 5, -7, 11]), None, &b).unwrap();
        assert!(r.within && r.weight.unwrap() <= 4620);
        let r = ou_williams_check(&QuadraticForm::diag(&[1, 1, 1, 1, -1]), Some(&[1, 0, 0, 0, 1]), &b).unwrap();
        assert_eq!(r.given_weight, Some(2));
    }

    #[test]
    fn envelope_parameters() {
        assert_eq!(alpha_n(6), 1);
        assert_eq!(alpha_n(7), 0);
        assert_eq!(beta_q(&BigInt::from(15), 5).unwrap(), 0.0);
        assert_eq!(beta_q(&BigInt::from(12), 9).unwrap(), 0.2);
        assert!((hermite_constant(2) - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // Blichfeldt's bound stays above the exact value at the seam
        let blich8 = (2.0 / std::f64::consts::PI) * statrs_gamma(6.0).powf(0.25);
        assert!(blich8 >= hermite_constant(8));
        assert!((statrs_gamma(5.0) - 24.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_report_kneser_small() {
        let q = kneser_form(3, 4).unwrap();
        let r = search_zero(&q, 18, &Budget::default()).unwrap();
        assert_eq!(r.found_first_nonzero, Some(vec![1, 2, 6, 18]));
        let e = lambda_envelope_report(&q, &r).unwrap();
        assert_eq!(e.observed, 18);
        assert!(e.discriminant_envelope.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn zeros_vanish_and_restricted_norm_dominates(
            d in proptest::collection::vec(prop_oneof![-6i64..=-1, 1i64..=6], 3..5),
        ) {
            prop_assume!(d.iter().any(|&v| v > 0) && d.iter().any(|&v| v < 0));
            let q = QuadraticForm::diag(&d);
            let r = search_zero(&q, 6, &Budget::default()).unwrap();
            if let Some(x) = &r.found {
                prop_assert!(q.evaluate_i64(x).unwrap().is_zero());
            }
            if let (Some(a), Some(b)) = (r.norm(false), r.norm(true)) {
                prop_assert!(b >= a);
            }
            // brute-force oracle for the least norm
            let n = d.len();
            let w = 13i64;
            let mut best: Option<i64> = None;
            for code in 1..w.pow(n as u32) {
                let mut c = code;
                let mut s = 0;
                let mut m = 0;
                for &di in &d {
                    let x = c % w - 6;
                    c /= w;
                    s += di * x * x;
                    m = m.max(x.abs());
                }
                if s == 0 && m > 0 {
                    best = Some(best.map_or(m, |b| b.min(m)));
                }
            }
            prop_assert_eq!(best, r.norm(false));
        }

        #[test]
        fn kneser_family_zero(c in 3i64..6, n in 3usize..7) {
            let q = kneser_form(c, n).unwrap();
            prop_assert!(q.evaluate(&kneser_zero(c, n)).unwrap().is_zero());
            prop_assert_eq!(q.det().abs(), BigInt::from(1));
        }

        #[test]
        fn five_variable_norm_bound(d in proptest::collection::vec(prop_oneof![-8i64..=-1, 1i64..=8], 5..7)) {
            prop_assume!(d.iter().any(|&v| v > 0) && d.iter().any(|&v| v < 0));
            let z = diagonal_five_variable_zero(&QuadraticForm::diag(&d), &Budget::default()).unwrap();
            prop_assert!(z.within_bound);
            prop_assert!(z.weight <= z.ellipsoid_bound);
        }
    }
}
