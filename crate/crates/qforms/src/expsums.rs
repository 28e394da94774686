//! Complete exponential sums S_q(c) attached to Q(x) = k, plus Gauss,
//! Kloosterman and Salié sums and the closed-form counts M_r(p).

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::{self, legendre, mod_inv};
use crate::error::{Budget, QfError, Result};
use crate::form::QuadraticForm;
use crate::localsolve::{self, Block};

const TWO_PI: f64 = std::f64::consts::TAU;
/// Per-operation rounding allowance used in the error bounds.
const EPS: f64 = 4.0e-16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpSumValue {
    pub q: u64,
    pub c: Vec<i64>,
    pub re: f64,
    pub im: f64,
    pub abs_err: f64,
}

impl ExpSumValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
    pub fn abs(&self) -> f64 {
        self.value().norm()
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Default, Clone, Copy)]
struct Acc {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

impl Acc {
    fn add(&mut self, z: Complex64) {
        fn step(s: &mut f64, c: &mut f64, x: f64) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
        step(&mut self.re, &mut self.re_c, z.re);
        step(&mut self.im, &mut self.im_c, z.im);
    }
    fn total(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

/// Table of e_q(r) for r mod q.
struct Roots {
    q: i128,
    tab: Vec<Complex64>,
}

impl Roots {
    fn new(q: u64) -> Self {
        let tab = (0..q)
            .map(|r| {
                let th = TWO_PI * r as f64 / q as f64;
                Complex64::new(th.cos(), th.sin())
            })
            .collect();
        Roots { q: q as i128, tab }
    }
    fn e(&self, r: i128) -> Complex64 {
        self.tab[r.rem_euclid(self.q) as usize]
    }
}

/// Ramanujan sum c_q(r) = Σ_{gcd(a,q)=1} e_q(ar).
pub fn ramanujan(q: u64, r: i128) -> i64 {
    let g = (r.rem_euclid(q as i128) as u64).gcd(&q);
    let mut s = 0i64;
    for d in 1..=g {
        if g % d == 0 {
            s += mobius(q / d) * d as i64;
        }
    }
    s
}

pub fn mobius(n: u64) -> i64 {
    if n == 1 {
        return 1;
    }
    let f = arith::factor_u64(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

fn check_c(q: &QuadraticForm, c: &[i64]) -> Result<()> {
    if c.len() != q.n() {
        return Err(QfError::precondition(format!(
            "vector c has length {}, form has dimension {}",
            c.len(),
            q.n()
        )));
    }
    Ok(())
}

fn units(q: u64) -> Vec<i128> {
    (1..=q as i128).filter(|a| a.gcd(&(q as i128)) == 1).collect()
}

/// Σ_{a coprime to q} e_q(-ak) Π_blocks (block sum), with each block
/// given as a closure over a.
fn sum_over_units(
    q: u64,
    k: i128,
    factors: &[Box<dyn Fn(i128) -> Complex64 + '_>],
    roots: &Roots,
) -> Complex64 {
    let mut acc = Acc::default();
    for a in units(q) {
        let mut z = roots.e(-a * k);
        for f in factors {
            z *= f(a);
        }
        acc.add(z);
    }
    acc.total()
}

/// S_q(c) straight from the definition. Diagonal forms use the
/// per-coordinate factorisation of the b-sum; other forms sum
/// c_q(Q(b) - k) e_q(b·c) over all b mod q.
pub fn eval_sq_direct(
    form: &QuadraticForm,
    k: &BigInt,
    q: u64,
    c: &[i64],
    budget: &Budget,
) -> Result<ExpSumValue> {
    check_c(form, c)?;
    if q == 0 {
        return Err(QfError::precondition("modulus q must be positive"));
    }
    let n = form.n() as u32;
    let qi = q as i128;
    let kk = k.mod_floor(&BigInt::from(q)).to_i128().unwrap();
    let roots = Roots::new(q);
    let phi = arith::euler_phi(q) as f64;
    let qf = q as f64;
    if let Some(d) = form.diagonal_i64() {
        let cost = phi * qf * n as f64;
        if cost > budget.enum_points as f64 {
            return Err(QfError::budget("exponential sum terms"));
        }
        let factors: Vec<Box<dyn Fn(i128) -> Complex64>> = d
            .iter()
            .zip(c)
            .map(|(&ai, &ci)| {
                let roots = &roots;
                Box::new(move |a: i128| {
                    let mut acc = Acc::default();
                    for b in 0..qi {
                        acc.add(roots.e(a * (ai as i128).rem_euclid(qi) % qi * b % qi * b + ci as i128 * b));
                    }
                    acc.total()
                }) as Box<dyn Fn(i128) -> Complex64>
            })
            .collect();
        let v = sum_over_units(q, kk, &factors, &roots);
        let err = phi * qf.powi(n as i32) * ((n + 2) as f64 * qf + 4.0) * EPS;
        return Ok(ExpSumValue {
            q,
            c: c.to_vec(),
            re: v.re,
            im: v.im,
            abs_err: err,
        });
    }
    let terms = qf.powi(n as i32);
    if terms > budget.enum_points as f64 {
        return Err(QfError::budget("exponential sum terms"));
    }
    let a = form.small()?;
    let ram: Vec<i64> = (0..q).map(|r| ramanujan(q, r as i128)).collect();
    let nn = n as usize;
    let mut b = vec![0i128; nn];
    let mut acc = Acc::default();
    loop {
        let mut qv = 0i128;
        for i in 0..nn {
            if b[i] == 0 {
                continue;
            }
            let row: i128 = (0..nn).map(|j| (a[i][j] as i128).rem_euclid(qi) * b[j]).sum::<i128>() % qi;
            qv = (qv + row * b[i]) % qi;
        }
        let r = ram[(qv - kk).rem_euclid(qi) as usize];
        if r != 0 {
            let lin: i128 = b.iter().zip(c).map(|(&x, &y)| x * y as i128).sum();
            acc.add(roots.e(lin) * r as f64);
        }
        let mut i = 0;
        loop {
            if i == nn {
                let v = acc.total();
                return Ok(ExpSumValue {
                    q,
                    c: c.to_vec(),
                    re: v.re,
                    im: v.im,
                    abs_err: terms * phi * 4.0 * EPS,
                });
            }
            b[i] += 1;
            if b[i] < qi {
                break;
            }
            b[i] = 0;
            i += 1;
        }
    }
}

/// One factor of the multiplicative decomposition.
fn prime_power_sum(
    form: &QuadraticForm,
    k: &BigInt,
    p: u64,
    t: u32,
    c: &[i128],
) -> Result<(Complex64, f64)> {
    let q = arith::upow(p, t);
    let qi = q as i128;
    let roots = Roots::new(q);
    let kk = k.mod_floor(&BigInt::from(q)).to_i128().unwrap();
    let n = form.n();
    // change variables b = U y so that Q becomes a sum of small blocks
    let (u, blocks): (Vec<Vec<BigInt>>, Vec<Block>) = if p == 2 {
        let bl = localsolve::two_adic_blocks(form, t.max(3))?;
        (bl.t.clone(), bl.blocks.clone())
    } else {
        let d = localsolve::diagonalize_odd(form, p, t)?;
        let bl = d
            .diag
            .iter()
            .map(|v| Block::Square { a: v.to_i128().unwrap() })
            .collect();
        (d.u, bl)
    };
    // c' = Uᵀ c mod q
    let cp: Vec<i128> = (0..n)
        .map(|j| {
            let s: BigInt = (0..n).map(|i| &u[i][j] * BigInt::from(c[i])).sum();
            s.mod_floor(&BigInt::from(q)).to_i128().unwrap()
        })
        .collect();
    let mut factors: Vec<Box<dyn Fn(i128) -> Complex64 + '_>> = Vec::new();
    let mut pos = 0;
    let rr = &roots;
    for bl in &blocks {
        match *bl {
            Block::Square { a: coef } => {
                let ci = cp[pos];
                let coef = coef.rem_euclid(qi);
                factors.push(Box::new(move |a: i128| {
                    let mut acc = Acc::default();
                    for y in 0..qi {
                        acc.add(rr.e(a * coef % qi * y % qi * y + ci * y));
                    }
                    acc.total()
                }));
            }
            Block::Hyperbolic { b } | Block::Hexagonal { c: b } => {
                let hex = matches!(bl, Block::Hexagonal { .. });
                let (c1, c2) = (cp[pos], cp[pos + 1]);
                let b = b.rem_euclid(qi);
                factors.push(Box::new(move |a: i128| {
                    let mut acc = Acc::default();
                    for y1 in 0..qi {
                        for y2 in 0..qi {
                            let f = if hex { y1 * y1 + y1 * y2 + y2 * y2 } else { y1 * y2 } % qi;
                            acc.add(rr.e(a * b % qi * f + c1 * y1 + c2 * y2));
                        }
                    }
                    acc.total()
                }));
            }
        }
        pos += bl.dim();
    }
    let v = sum_over_units(q, kk, &factors, &roots);
    let qf = q as f64;
    let err = arith::euler_phi(q) as f64 * qf.powi(n as i32) * ((n + 2) as f64 * qf * qf + 4.0) * EPS;
    Ok((v, err))
}

/// S_q(c) through the multiplicative splitting S_{uv}(c) = S_u(v̄c) S_v(ūc),
/// each prime-power factor evaluated in p-adic normal form.
pub fn eval_sq(form: &QuadraticForm, k: &BigInt, q: u64, c: &[i64], budget: &Budget) -> Result<ExpSumValue> {
    check_c(form, c)?;
    if q == 0 {
        return Err(QfError::precondition("modulus q must be positive"));
    }
    if q == 1 {
        return Ok(ExpSumValue { q, c: c.to_vec(), re: 1.0, im: 0.0, abs_err: 0.0 });
    }
    let fac = arith::factor_u64(q);
    if fac.len() == 1 && form.diagonal_i64().is_none() && (q as f64).powi(form.n() as i32) <= 1e6 {
        return eval_sq_direct(form, k, q, c, budget);
    }
    let mut value = Complex64::new(1.0, 0.0);
    let mut mag = 1.0f64;
    let mut err = 0.0f64;
    for &(p, t) in &fac {
        let pt = arith::upow(p, t);
        let v = q / pt;
        let vbar = mod_inv(v as i128, pt as i128).unwrap();
        let twisted: Vec<i128> = c.iter().map(|&ci| (ci as i128 * vbar).rem_euclid(pt as i128)).collect();
        let cost = arith::euler_phi(pt) as f64 * (pt as f64).powi(2) * form.n() as f64;
        if cost > budget.enum_points as f64 {
            return Err(QfError::budget("exponential sum terms"));
        }
        let (z, e) = prime_power_sum(form, k, p, t, &twisted)?;
        // |Πx - Πy| ≤ Π(|y| + e) - Π|y|
        err = (mag + err) * (z.norm() + e) - mag * z.norm();
        mag *= z.norm();
        value *= z;
    }
    err += mag * 1e-15 * fac.len() as f64;
    Ok(ExpSumValue { q, c: c.to_vec(), re: value.re, im: value.im, abs_err: err })
}

/// |x - y| ≤ 1e-6·max(|x|,|y|) + the two error bounds.
pub fn agree(x: &ExpSumValue, y: &ExpSumValue, rel: f64) -> bool {
    (x.value() - y.value()).norm() <= rel * x.abs().max(y.abs()) + x.abs_err + y.abs_err
}

/// (a/p)·ω_p with ω_p = i^{(p-1)²/4}√p.
pub fn gauss_sum(a: i64, p: u64) -> Result<Complex64> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    let l = legendre(a as i128, p);
    if l == 0 {
        return Err(QfError::precondition(format!("{p} divides {a}")));
    }
    Ok(omega(p) * l as f64)
}

pub fn omega(p: u64) -> Complex64 {
    let s = (p as f64).sqrt();
    if p % 4 == 1 {
        Complex64::new(s, 0.0)
    } else {
        Complex64::new(0.0, s)
    }
}

/// Σ_z e_p(az²) by direct summation.
pub fn gauss_sum_direct(a: i64, p: u64) -> Complex64 {
    let roots = Roots::new(p);
    let mut acc = Acc::default();
    for z in 0..p as i128 {
        acc.add(roots.e(a as i128 * z % p as i128 * z));
    }
    acc.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Even,
    Odd,
}

/// Kloosterman (even) or Salié (odd) sum Σ_{c≠0} χ(c) e_p(ac + b c̄).
pub fn kloosterman_salie(a: i64, b: i64, p: u64, parity: Parity) -> Result<Complex64> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    let roots = Roots::new(p);
    let pi = p as i128;
    let mut acc = Acc::default();
    for c in 1..pi {
        let cb = mod_inv(c, pi).unwrap();
        let chi = match parity {
            Parity::Even => 1.0,
            Parity::Odd => legendre(c, p) as f64,
        };
        acc.add(roots.e(a as i128 * c + b as i128 * cb) * chi);
    }
    Ok(acc.total())
}

/// The uniform bound 2√p·gcd(a,b,p)^{1/2}.
pub fn kloosterman_bound(a: i64, b: i64, p: u64) -> f64 {
    let g = (a.unsigned_abs().gcd(&b.unsigned_abs())).gcd(&p);
    2.0 * (p as f64).sqrt() * (g as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClosedFormCount {
    pub p: u64,
    pub r: usize,
    pub coeffs: Vec<i64>,
    pub k: i64,
    #[serde(serialize_with = "crate::form::ser_big")]
    pub value: BigInt,
    pub kappa: u8,
    /// ω_p² = (-1/p)·p
    pub omega_squared: i64,
}

/// #{z mod p, z ≠ 0 : Σ a_i z_i² ≡ k} in closed form.
pub fn closed_form_mr(coeffs: &[i64], k: i64, p: u64) -> Result<ClosedFormCount> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    let r = coeffs.len();
    if r == 0 {
        return Err(QfError::precondition("need at least one coefficient"));
    }
    let prod: i128 = coeffs.iter().fold(1i128, |acc, &a| (acc * a as i128).rem_euclid(p as i128));
    if prod == 0 {
        return Err(QfError::precondition(format!("{p} divides a coefficient")));
    }
    let pb = BigInt::from(p);
    let kappa = u8::from((k as i128).rem_euclid(p as i128) == 0);
    let w2 = legendre(-1, p) as i64 * p as i64;
    let w2b = BigInt::from(w2);
    let base = num_traits::pow(pb.clone(), r - 1) - BigInt::from(kappa);
    let value = if r % 2 == 0 {
        // (a/p) ω^r p^{-1} (κp - 1)
        let l = legendre(prod, p);
        let num = num_traits::pow(w2b, r / 2) * (BigInt::from(kappa) * &pb - 1) * l;
        base + num / &pb
    } else {
        let l = legendre(-(k as i128) * prod, p);
        let num = num_traits::pow(w2b, r.div_ceil(2)) * l;
        base + num / &pb
    };
    Ok(ClosedFormCount {
        p,
        r,
        coeffs: coeffs.to_vec(),
        k,
        value,
        kappa,
        omega_squared: w2,
    })
}

/// Brute-force M_r(p).
pub fn brute_mr(coeffs: &[i64], k: i64, p: u64) -> u64 {
    let pi = p as i64;
    let r = coeffs.len();
    // distribution of a_i z² over z mod p, convolved coordinate by coordinate
    let mut dist = vec![0u64; p as usize];
    dist[0] = 1;
    for &a in coeffs {
        let mut next = vec![0u64; p as usize];
        for (s, &cnt) in dist.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            for z in 0..pi {
                let v = (s as i64 + a * z % pi * z).rem_euclid(pi) as usize;
                next[v] += cnt;
            }
        }
        dist = next;
    }
    let _ = r;
    let kk = k.rem_euclid(pi) as usize;
    dist[kk] - u64::from(kk == 0)
}

/// General envelope 2^{ω(q)+n+1} q^{n/2+1} gcd(q^n, Δ)^{1/2}.
pub fn envelope_general(q: u64, n: usize, det: &BigInt) -> f64 {
    let g = gcd_qn_det(q, n, det);
    2f64.powi((arith::omega(q) + n as u32 + 1) as i32) * (q as f64).powf(n as f64 / 2.0 + 1.0) * g.sqrt()
}

/// Square-free envelope with the extra gcd(q, k, δ_nΔ)^{1/2} factor.
pub fn envelope_squarefree(q: u64, n: usize, det: &BigInt, k: &BigInt) -> f64 {
    let g = gcd_qn_det(q, n, det);
    let delta_n = if n % 2 == 0 { BigInt::zero() } else { det.clone() };
    let g2 = BigInt::from(q).gcd(k).gcd(&delta_n);
    2f64.powi((arith::omega(q) + n as u32 + 1) as i32)
        * (q as f64).powf((n as f64 + 1.0) / 2.0)
        * g.sqrt()
        * g2.to_f64().unwrap().sqrt()
}

fn gcd_qn_det(q: u64, n: usize, det: &BigInt) -> f64 {
    let qn = num_traits::pow(BigInt::from(q), n);
    qn.gcd(&det.abs()).to_f64().unwrap_or(f64::INFINITY)
}

pub fn gamma_n(n: usize, k: &BigInt) -> u32 {
    u32::from(n % 2 == 0 && k.is_zero())
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageReport {
    pub gamma_n: u32,
    pub exponent: f64,
    pub x_values: Vec<u64>,
    pub sums: Vec<f64>,
    pub envelopes: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Σ_{q≤X} |S_q(c)| at X = 1, 2, 4, … and its ratio to X^{(n+3+γ_n)/2}.
pub fn average_sq(form: &QuadraticForm, k: &BigInt, c: &[i64], x: u64, budget: &Budget) -> Result<AverageReport> {
    check_c(form, c)?;
    if x == 0 {
        return Err(QfError::precondition("X must be at least 1"));
    }
    let n = form.n();
    let g = gamma_n(n, k);
    let exponent = (n as f64 + 3.0 + g as f64) / 2.0;
    let vals: Vec<f64> = (1..=x)
        .map(|q| eval_sq(form, k, q, c, budget).map(|v| v.abs()))
        .collect::<Result<_>>()?;
    let mut xs = Vec::new();
    let mut xv = 1u64;
    while xv <= x {
        xs.push(xv);
        xv *= 2;
    }
    if *xs.last().unwrap() != x {
        xs.push(x);
    }
    let sums: Vec<f64> = xs.iter().map(|&xv| vals[..xv as usize].iter().sum()).collect();
    let envelopes: Vec<f64> = xs.iter().map(|&xv| (xv as f64).powf(exponent)).collect();
    let ratios = sums.iter().zip(&envelopes).map(|(s, e)| s / e).collect();
    Ok(AverageReport { gamma_n: g, exponent, x_values: xs, sums, envelopes, ratios })
}
