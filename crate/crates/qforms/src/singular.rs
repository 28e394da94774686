//! Local densities σ_p, the singular series and the p-reduced stratification.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{self, legendre};
use crate::error::{Budget, QfError, Result};
use crate::expsums::closed_form_mr;
use crate::form::{ser_rat, QuadraticForm};
use crate::localsolve::{self, decide_weak_lsc_all, diagonalize_odd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethod {
    /// p ∤ 2Δk: count of the diagonal form mod p via the closed form
    ClosedForm,
    /// Hensel-liftable classes of the lifting tree (p = 2)
    Counting,
    /// odd p: diagonal Jordan data reduced step by step (x_i = p y_i)
    CountingWithDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDensity {
    pub p: u64,
    #[serde(serialize_with = "ser_rat")]
    pub lower: BigRational,
    #[serde(serialize_with = "ser_rat")]
    pub upper: BigRational,
    pub depth_used: u32,
    pub method: DensityMethod,
    pub certified: bool,
    /// Some(true) when p^{-t(n-1)} N(p^t) was seen to equal the value at two
    /// consecutive depths past the Hensel horizon
    pub depth_check: Option<bool>,
}

impl LocalDensity {
    fn exact(p: u64, v: BigRational, depth: u32, method: DensityMethod) -> Self {
        LocalDensity {
            p,
            lower: v.clone(),
            upper: v,
            depth_used: depth,
            method,
            certified: true,
            depth_check: None,
        }
    }

    pub fn value(&self) -> Option<&BigRational> {
        (self.lower == self.upper).then_some(&self.lower)
    }

    pub fn positive(&self) -> bool {
        self.lower.is_positive()
    }
}

fn rpow(p: u64, e: i64) -> BigRational {
    let b = BigRational::from_integer(BigInt::from(p));
    b.pow(e as i32)
}

fn check_k(k: &BigInt) -> Result<()> {
    if k.is_negative() {
        return Err(QfError::precondition("k must be non-negative"));
    }
    Ok(())
}

/// (ν_p(a), a/p^ν mod p) for a ≠ 0.
fn split(a: &BigInt, p: u64) -> Result<(u32, u64)> {
    let v = arith::valuation(a, p).ok_or_else(|| QfError::precondition("zero diagonal coefficient"))?;
    let u = a / arith::big_pow(p, v);
    let r = u.mod_floor(&BigInt::from(p)).to_u64().unwrap();
    Ok((v, r))
}

/// One reduction x_i = p y_i on the unit coordinates followed by division by p.
fn descend_state(s: &[(u32, u64)]) -> Vec<(u32, u64)> {
    s.iter()
        .map(|&(v, u)| if v == 0 { (1, u) } else { (v - 1, u) })
        .collect()
}

/// Density contribution of solutions with some unit coordinate a unit:
/// p^{1-n} · p^s · M_r(p).
fn good_part(s: &[(u32, u64)], kmod: i64, p: u64) -> Result<BigRational> {
    let units: Vec<i64> = s.iter().filter(|c| c.0 == 0).map(|c| c.1 as i64).collect();
    let r = units.len();
    if r == 0 {
        return Ok(BigRational::zero());
    }
    let m = closed_form_mr(&units, kmod, p)?.value;
    Ok(BigRational::from_integer(m) * rpow(p, 1 - r as i64))
}

/// σ_p for the diagonal form Σ A_i x_i² at odd p, exact.
///
/// Splits solutions by whether the unit part of x is nonzero mod p; the rest
/// satisfy σ(Q, k) ⊇ p^{1-r} σ(Q'', k/p) with Q'' the rescaled form. For k = 0
/// the recursion is periodic and the resulting linear relation is solved.
pub fn diagonal_density_odd(diag: &[BigInt], k: &BigInt, p: u64) -> Result<BigRational> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    check_k(k)?;
    let n = diag.len();
    let mut state: Vec<(u32, u64)> = diag.iter().map(|a| split(a, p)).collect::<Result<_>>()?;
    let units = |s: &[(u32, u64)]| s.iter().filter(|c| c.0 == 0).count() as i64;
    if !k.is_zero() {
        let (mut kv, ku) = split(k, p)?;
        let mut total = BigRational::zero();
        let mut factor = BigRational::one();
        loop {
            let kmod = if kv == 0 { ku as i64 } else { 0 };
            total += &factor * good_part(&state, kmod, p)?;
            if kv == 0 {
                return Ok(total);
            }
            factor *= rpow(p, 1 - units(&state));
            state = descend_state(&state);
            kv -= 1;
        }
    }
    if n < 3 {
        return Err(QfError::precondition("k = 0 needs n >= 3"));
    }
    let mut seen: HashMap<Vec<(u32, u64)>, usize> = HashMap::new();
    let mut goods = Vec::new();
    let mut prefix = vec![BigRational::one()];
    loop {
        if let Some(&i) = seen.get(&state) {
            let j = goods.len();
            let pi = prefix[i].clone();
            let mut inner = BigRational::zero();
            for l in i..j {
                inner += &prefix[l] / &pi * &goods[l];
            }
            let ratio = &prefix[j] / &pi;
            if ratio >= BigRational::one() {
                return Err(QfError::internal("density recursion does not contract"));
            }
            let cyc = inner / (BigRational::one() - ratio);
            let mut head = BigRational::zero();
            for l in 0..i {
                head += &prefix[l] * &goods[l];
            }
            return Ok(head + pi * cyc);
        }
        seen.insert(state.clone(), goods.len());
        goods.push(good_part(&state, 0, p)?);
        let c = rpow(p, 1 - units(&state));
        let last = prefix.last().unwrap().clone();
        prefix.push(last * c);
        state = descend_state(&state);
    }
}

/// Depth for the odd-prime diagonalization: enough to fix every Jordan unit mod p.
fn jordan_depth(q: &QuadraticForm, p: u64) -> Result<u32> {
    let v = arith::valuation(q.det(), p).unwrap_or(0);
    let t = v + 2;
    if arith::checked_upow(p, t).is_some_and(|m| (m as u128) < (1u128 << 62)) {
        return Ok(t);
    }
    let t = v + 1;
    if arith::checked_upow(p, t).is_some_and(|m| (m as u128) < (1u128 << 62)) {
        return Ok(t);
    }
    Err(QfError::precondition(format!("{p}^{t} exceeds the supported residue range")))
}

fn unramified(q: &QuadraticForm, k: &BigInt, p: u64) -> bool {
    p != 2 && !(q.det() % p).is_zero() && !(k % p).is_zero()
}

/// Largest p^n for which the lifting tree is used as a cross-check.
const TREE_CHECK_LIMIT: u128 = 1 << 16;

fn tree_feasible(p: u64, n: usize) -> bool {
    (p as u128).checked_pow(n as u32).is_some_and(|v| v <= TREE_CHECK_LIMIT)
}

/// σ_p(k, Q) with its certification status.
pub fn local_density(q: &QuadraticForm, k: &BigInt, p: u64, tmax: u32, budget: &Budget) -> Result<LocalDensity> {
    if q.det().is_zero() {
        return Err(QfError::precondition("form is degenerate (discriminant 0)"));
    }
    check_k(k)?;
    if !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not prime")));
    }
    let n = q.n();
    if k.is_zero() && n < 3 {
        return Err(QfError::precondition("k = 0 needs n >= 3"));
    }
    if unramified(q, k, p) {
        let d = diagonalize_odd(q, p, 1)?;
        let coeffs: Vec<i64> = d.diag.iter().map(|a| a.mod_floor(&BigInt::from(p)).to_i64().unwrap()).collect();
        let kmod = k.mod_floor(&BigInt::from(p)).to_i64().unwrap();
        let m = closed_form_mr(&coeffs, kmod, p)?.value;
        let v = BigRational::from_integer(m) * rpow(p, 1 - n as i64);
        return Ok(LocalDensity::exact(p, v, 1, DensityMethod::ClosedForm));
    }
    let (value, depth, method) = if p == 2 {
        let td = localsolve::tree_density(q, k, p, budget)?;
        let v = if k.is_zero() {
            td.value / (BigRational::one() - rpow(2, 2 - n as i64))
        } else {
            td.value
        };
        (v, td.horizon, DensityMethod::Counting)
    } else {
        let t = jordan_depth(q, p)?;
        let d = diagonalize_odd(q, p, t)?;
        (diagonal_density_odd(&d.diag, k, p)?, t, DensityMethod::CountingWithDescent)
    };
    let mut out = LocalDensity::exact(p, value, depth, method);
    if !k.is_zero() && tree_feasible(p, n) {
        out.depth_check = depth_check(q, k, p, tmax, &out.lower, budget)?;
        if out.depth_check == Some(false) {
            return Err(QfError::internal(format!("density at p={p} disagrees with the congruence counts")));
        }
    }
    Ok(out)
}

/// Compares p^{-t(n-1)} N(p^t) at two consecutive depths past the horizon.
fn depth_check(
    q: &QuadraticForm,
    k: &BigInt,
    p: u64,
    tmax: u32,
    value: &BigRational,
    budget: &Budget,
) -> Result<Option<bool>> {
    let td = localsolve::tree_density(q, k, p, budget)?;
    if &td.value != value {
        return Ok(Some(false));
    }
    let t1 = td.horizon + 1;
    if t1 + 1 > tmax {
        return Ok(None);
    }
    let a = localsolve::density_at_depth(q, k, p, t1, budget)?;
    let b = localsolve::density_at_depth(q, k, p, t1 + 1, budget)?;
    Ok(Some(&a == value && &b == value))
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularSeriesEstimate {
    pub pcut: u64,
    /// σ_p at the primes dividing 2Δk
    pub ramified: Vec<LocalDensity>,
    pub unramified_count: usize,
    #[serde(serialize_with = "ser_rat")]
    pub finite_part: BigRational,
    #[serde(serialize_with = "ser_rat")]
    pub tail_lower: BigRational,
    #[serde(serialize_with = "ser_rat")]
    pub tail_upper: BigRational,
    #[serde(serialize_with = "ser_rat")]
    pub lower: BigRational,
    #[serde(serialize_with = "ser_rat")]
    pub upper: BigRational,
    /// |σ_p - 1| ≤ C p^{-s} assumed beyond pcut
    pub tail_constant: f64,
    pub tail_exponent: f64,
    pub certified: bool,
}

impl SingularSeriesEstimate {
    pub fn lower_f64(&self) -> f64 {
        crate::form::rat_to_f64(&self.lower)
    }
    pub fn upper_f64(&self) -> f64 {
        crate::form::rat_to_f64(&self.upper)
    }
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower_f64() + self.upper_f64())
    }
}

/// Per-prime bound |σ_p - 1| ≤ C p^{-s} for p ∤ 2Δk (p ∤ 2Δ when k = 0).
///
/// k ≠ 0: the count mod p is p^{n-1} ± p^{(n-1)/2} (n odd) or
/// p^{n-1} ∓ p^{(n-2)/2} (n even), and σ_p equals it over p^{n-1}.
/// k = 0, n odd: σ_p = (1 - p^{1-n})/(1 - p^{2-n}).
/// k = 0, n even: σ_p - 1 = χ(p)(p-1)p^{-n/2} up to a factor ≤ 2.
pub fn tail_bound_params(n: usize, k_zero: bool) -> (f64, f64) {
    let nf = n as f64;
    match (k_zero, n % 2 == 1) {
        (false, true) => (1.0, (nf - 1.0) / 2.0),
        (false, false) => (1.0, nf / 2.0),
        (true, true) => (1.0, nf - 2.0),
        (true, false) => (2.0, (nf - 2.0) / 2.0),
    }
}

fn rational_down(x: f64) -> BigRational {
    BigRational::from_float(x * (1.0 - 1e-12)).unwrap_or_else(BigRational::zero)
}

fn rational_up(x: f64) -> BigRational {
    BigRational::from_float(x * (1.0 + 1e-12)).unwrap_or_else(BigRational::zero)
}

/// Upper bound for Σ_{p > P} p^{-s}, s > 1.
///
/// Partial summation against π(x) < 1.25506 x / ln x gives
/// s ∫_P^∞ π(x) x^{-s-1} dx ≤ 1.25506 s P^{1-s} / ((s - 1) ln P).
/// The sum over all integers, P^{1-s}/(s-1), is used when smaller.
pub fn prime_tail_sum(pcut: u64, s: f64) -> f64 {
    let pf = pcut.max(2) as f64;
    let integers = pf.powf(1.0 - s) / (s - 1.0);
    let primes = 1.25506 * s * pf.powf(1.0 - s) / ((s - 1.0) * pf.ln());
    integers.min(primes)
}

/// Interval for Π_{p > P} (1 + e_p) with |e_p| ≤ C p^{-s}.
pub fn tail_interval(n: usize, k_zero: bool, pcut: u64) -> Result<(BigRational, BigRational)> {
    let (c, s) = tail_bound_params(n, k_zero);
    if s <= 1.0 {
        return Err(QfError::precondition("the singular series tail does not converge absolutely for this n"));
    }
    let sum = c * prime_tail_sum(pcut, s);
    let xmax = c * (pcut as f64 + 1.0).powf(-s);
    if xmax >= 0.5 {
        return Err(QfError::precondition(format!("Pcut={pcut} is too small for a tail bound")));
    }
    // ln(1 - x) ≥ -x/(1 - xmax) for 0 ≤ x ≤ xmax
    Ok((rational_down((-sum / (1.0 - xmax)).exp()), rational_up(sum.exp())))
}

/// 𝔖(k, Q) as an exact finite product times a certified tail interval.
pub fn singular_series(q: &QuadraticForm, k: &BigInt, pcut: u64, budget: &Budget) -> Result<SingularSeriesEstimate> {
    let n = q.n();
    if n < 4 {
        return Err(QfError::precondition("singular series needs n >= 4"));
    }
    if q.det().is_zero() {
        return Err(QfError::precondition("form is degenerate (discriminant 0)"));
    }
    check_k(k)?;
    if n == 4 && k.is_zero() {
        return Err(QfError::precondition("k = 0 needs n >= 5"));
    }
    let bad = localsolve::bad_primes(q, k)?;
    let mut primes = arith::primes_up_to(pcut);
    primes.extend(bad.iter().copied().filter(|&p| p > pcut));
    let tmax = 12;
    let dens: Vec<LocalDensity> = primes
        .par_iter()
        .map(|&p| local_density(q, k, p, tmax, budget))
        .collect::<Result<_>>()?;
    let mut finite = BigRational::one();
    for d in &dens {
        finite *= &d.lower;
    }
    let certified = dens.iter().all(|d| d.certified);
    let (tail_lower, tail_upper) = tail_interval(n, k.is_zero(), pcut)?;
    let (c, s) = tail_bound_params(n, k.is_zero());
    let ramified: Vec<LocalDensity> = dens.iter().filter(|d| bad.contains(&d.p)).cloned().collect();
    Ok(SingularSeriesEstimate {
        pcut,
        unramified_count: dens.len() - ramified.len(),
        ramified,
        lower: &finite * &tail_lower,
        upper: &finite * &tail_upper,
        finite_part: finite,
        tail_lower,
        tail_upper,
        tail_constant: c,
        tail_exponent: s,
        certified,
    })
}

/// Checks |σ_p - 1| ≤ C p^{-(n-2)/2} exactly at one unramified prime.
pub fn tail_inequality_holds(q: &QuadraticForm, k: &BigInt, p: u64, c: u64) -> Result<bool> {
    let d = local_density(q, k, p, 0, &Budget::default())?;
    let e = &d.lower - BigRational::one();
    // (σ - 1)^2 p^{n-2} ≤ C^2
    let lhs = &e * &e * BigRational::from_integer(arith::big_pow(p, q.n() as u32 - 2));
    Ok(lhs <= BigRational::from_integer(BigInt::from(c * c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PReduced {
    /// p divides at most n-3 coefficients
    Condition1,
    /// p | k, exactly n-2 coefficients divisible, (-A_iA_j/p) = 1
    Condition2,
    /// all but one divisible, (kA_i/p) = 1
    Condition3,
    /// strong LSC holds mod p (r = 2, p ∤ k) yet none of the three conditions applies
    StrongUnlisted,
    /// descent case r ∈ {0, 1, 2}
    NotReduced { r: usize },
    /// Q ≡ k has no solution mod p
    WeakFails,
}

impl PReduced {
    pub fn is_reduced(&self) -> bool {
        matches!(self, PReduced::Condition1 | PReduced::Condition2 | PReduced::Condition3)
    }
}

fn classify_state(s: &[(u32, u64)], kmod: u64, p: u64) -> PReduced {
    let units: Vec<i128> = s.iter().filter(|c| c.0 == 0).map(|c| c.1 as i128).collect();
    let k = kmod as i128;
    match units.len() {
        r if r >= 3 => PReduced::Condition1,
        2 => {
            let l = legendre(-units[0] * units[1], p);
            match (k == 0, l) {
                (true, 1) => PReduced::Condition2,
                (true, _) => PReduced::NotReduced { r: 2 },
                (false, _) => PReduced::StrongUnlisted,
            }
        }
        1 => {
            if k == 0 {
                PReduced::NotReduced { r: 1 }
            } else if legendre(k * units[0], p) == 1 {
                PReduced::Condition3
            } else {
                PReduced::WeakFails
            }
        }
        _ => {
            if k == 0 {
                PReduced::NotReduced { r: 0 }
            } else {
                PReduced::WeakFails
            }
        }
    }
}

/// Which p-reduced condition the diagonal pair (k, Σ A_i x_i²) meets.
pub fn p_reduced_classify(diag: &[BigInt], k: &BigInt, p: u64) -> Result<PReduced> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    let s: Vec<(u32, u64)> = diag.iter().map(|a| split(a, p)).collect::<Result<_>>()?;
    let kmod = k.mod_floor(&BigInt::from(p)).to_u64().unwrap();
    Ok(classify_state(&s, kmod, p))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalDescent {
    pub p: u64,
    pub nu_delta: u32,
    /// number of descent steps θ_p taken before the pair became p-reduced
    pub steps: u32,
    /// r of each step
    pub cases: Vec<usize>,
    #[serde(serialize_with = "crate::form::ser_big")]
    pub k_final: BigInt,
    pub final_class: PReduced,
    /// N*(p) = p^s M_r(p) of the terminal pair, when reduced
    #[serde(serialize_with = "crate::form::ser_big")]
    pub nstar: BigInt,
    /// N*(p) ≥ p^{n-1} - (n+2) p^{n-2}
    pub nstar_envelope_ok: bool,
}

/// Iterates the r = 0/1/2 reduction on diagonal Jordan data until p-reduced.
pub fn diagonal_descent(diag: &[BigInt], k: &BigInt, p: u64) -> Result<DiagonalDescent> {
    let n = diag.len();
    let mut s: Vec<(u32, u64)> = diag.iter().map(|a| split(a, p)).collect::<Result<_>>()?;
    let nu_delta: u32 = s.iter().map(|c| c.0).sum();
    let mut k = k.clone();
    let pb = BigInt::from(p);
    let mut cases = Vec::new();
    let limit = nu_delta as usize + arith::valuation(&k, p).unwrap_or(0) as usize + n + 1;
    loop {
        let kmod = k.mod_floor(&pb).to_u64().unwrap();
        let class = classify_state(&s, kmod, p);
        match class {
            PReduced::NotReduced { r } => {
                if cases.len() >= limit || k.is_zero() {
                    return Err(QfError::internal("diagonal descent did not terminate"));
                }
                cases.push(r);
                s = descend_state(&s);
                k /= &pb;
            }
            _ => {
                let units: Vec<i64> = s.iter().filter(|c| c.0 == 0).map(|c| c.1 as i64).collect();
                let nstar = if units.is_empty() {
                    BigInt::zero()
                } else {
                    closed_form_mr(&units, kmod as i64, p)?.value * arith::big_pow(p, (n - units.len()) as u32)
                };
                let env = arith::big_pow(p, n as u32 - 1) - BigInt::from(n as u64 + 2) * arith::big_pow(p, n as u32 - 2);
                return Ok(DiagonalDescent {
                    p,
                    nu_delta,
                    steps: cases.len() as u32,
                    cases,
                    k_final: k,
                    final_class: class,
                    nstar_envelope_ok: !class.is_reduced() || nstar >= env,
                    nstar,
                });
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaLowerReport {
    pub strong: bool,
    /// θ_{k,Q}: 0 under strong LSC, else 1/(n-4)
    #[serde(serialize_with = "ser_rat")]
    pub theta: BigRational,
    /// |Δ|^{-θ}, constant-free
    pub envelope: f64,
    pub series: SingularSeriesEstimate,
    /// 𝔖_lower / envelope (informational)
    pub ratio: f64,
    pub per_prime: Vec<PrimeTheta>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimeTheta {
    pub p: u64,
    /// ν_p(Δ)/(n-4)
    #[serde(serialize_with = "ser_rat")]
    pub theta_bound: BigRational,
    pub descent: DiagonalDescent,
}

/// Computed 𝔖 next to the lower envelope |Δ|^{-θ}.
pub fn sigma_lower_report(q: &QuadraticForm, k: &BigInt, pcut: u64, budget: &Budget) -> Result<SigmaLowerReport> {
    let n = q.n();
    if n < 5 {
        return Err(QfError::precondition("the lower-bound report needs n >= 5"));
    }
    let weak = decide_weak_lsc_all(q, k, budget)?;
    if !weak.weak() {
        return Err(QfError::precondition("weak LSC fails; no lower bound applies"));
    }
    let strong = weak.strong();
    let theta = if strong {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::one(), BigInt::from(n as i64 - 4))
    };
    let absd = crate::form::rat_to_f64(&BigRational::from_integer(q.det().abs()));
    let envelope = absd.powf(-crate::form::rat_to_f64(&theta));
    let series = singular_series(q, k, pcut, budget)?;
    let mut per_prime = Vec::new();
    for p in arith::prime_divisors_big(q.det())? {
        if p == 2 {
            continue;
        }
        let t = jordan_depth(q, p)?;
        let d = diagonalize_odd(q, p, t)?;
        let nu = arith::valuation(q.det(), p).unwrap_or(0);
        per_prime.push(PrimeTheta {
            p,
            theta_bound: BigRational::new(BigInt::from(nu), BigInt::from(n as i64 - 4)),
            descent: diagonal_descent(&d.diag, k, p)?,
        });
    }
    Ok(SigmaLowerReport {
        strong,
        ratio: series.lower_f64() / envelope,
        theta,
        envelope,
        series,
        per_prime,
    })
}
