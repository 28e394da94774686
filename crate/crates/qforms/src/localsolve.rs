//! Congruence counts modulo prime powers, Hensel lifting trees, p-adic
//! normal forms and the weak/strong local solubility decisions.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::{self, mod_inv, sqrt_mod_prime};
use crate::error::{Budget, Meter, QfError, Result};
use crate::form::QuadraticForm;
use crate::matrix::{self, BMat};

/// Moduli used in the 128-bit residue arithmetic stay below this.
const MOD_LIMIT: u128 = 1 << 62;
/// Largest p^{tn} counted by direct enumeration.
const DIRECT_LIMIT: u128 = 1 << 20;

pub fn tau(p: u64) -> u32 {
    u32::from(p == 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountStrategy {
    Direct,
    LiftingTree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CongruenceCount {
    pub p: u64,
    pub t: u32,
    pub n_count: BigUint,
    pub nstar: BigUint,
    pub strategy: CountStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalVerdict {
    pub p: u64,
    pub weak: bool,
    pub strong: bool,
    /// x mod p^{1+2τ_p} with Q(x) ≡ k and p ∤ Ax
    pub witness: Option<Vec<BigInt>>,
    /// a Hensel-liftable class (x mod p^j) proving weak solubility
    pub weak_witness: Option<(Vec<BigInt>, u32)>,
    pub cutoff_used: u32,
}

fn k_mod(k: &BigInt, m: i128) -> i128 {
    k.mod_floor(&BigInt::from(m)).to_i128().unwrap()
}

fn checked_modulus(p: u64, e: u32) -> Result<i128> {
    match (p as u128).checked_pow(e) {
        Some(m) if m < MOD_LIMIT => Ok(m as i128),
        _ => Err(QfError::precondition(format!(
            "modulus {p}^{e} exceeds the supported 62-bit range"
        ))),
    }
}

/// Integer data of a form reduced for residue arithmetic.
struct Residues {
    n: usize,
    a: Vec<Vec<i128>>,
    p: u64,
}

impl Residues {
    fn new(q: &QuadraticForm, p: u64) -> Result<Self> {
        let s = q.small()?;
        Ok(Residues {
            n: q.n(),
            a: s.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect(),
            p,
        })
    }

    /// (Ax mod m, Q(x) mod m) for 0 ≤ x_i < m.
    fn eval(&self, x: &[i128], m: i128) -> (Vec<i128>, i128) {
        let ax: Vec<i128> = self
            .a
            .iter()
            .map(|row| {
                row.iter()
                    .zip(x)
                    .fold(0i128, |acc, (&a, &xi)| (acc + a.rem_euclid(m) * xi) % m)
            })
            .collect();
        let q = ax.iter().zip(x).fold(0i128, |acc, (&u, &v)| (acc + u * v) % m);
        (ax, q)
    }

    fn ax_unit(&self, x: &[i128]) -> bool {
        let p = self.p as i128;
        let (ax, _) = self.eval(&x.iter().map(|v| v.rem_euclid(p)).collect::<Vec<_>>(), p);
        ax.iter().any(|&v| v != 0)
    }
}

/// Node of the lifting tree: a class x mod p^j with Q(x) ≡ k mod p^j.
#[derive(Debug, Clone)]
struct Node {
    x: Vec<i128>,
    j: u32,
    /// ν_p(2Ax) capped at j
    m: u32,
    /// (Q(x) - k) mod p^{2j}
    diff: i128,
    ax_unit: bool,
}

impl Node {
    fn resolved(&self) -> bool {
        self.m < self.j
    }
}

enum Flow {
    Continue,
    Stop,
}

struct Walker<'a> {
    r: &'a Residues,
    k: &'a BigInt,
    max_depth: u32,
    primitive: bool,
    meter: Meter,
}

impl Walker<'_> {
    fn node(&self, x: Vec<i128>, j: u32) -> Result<Node> {
        let p = self.r.p;
        let m2 = checked_modulus(p, 2 * j)?;
        let (ax, qv) = self.r.eval(&x, m2);
        let m = ax
            .iter()
            .map(|&v| arith::val_capped((2 * v).rem_euclid(m2), p, 2 * j))
            .min()
            .unwrap_or(2 * j)
            .min(j);
        let diff = (qv - k_mod(self.k, m2)).rem_euclid(m2);
        let pp = p as i128;
        let ax_unit = ax.iter().any(|&v| v % pp != 0);
        Ok(Node { x, j, m, diff, ax_unit })
    }

    fn walk(&mut self, visit: &mut dyn FnMut(&Node) -> Flow) -> Result<()> {
        let p = self.r.p as i128;
        let n = self.r.n;
        let kp = k_mod(self.k, p);
        let mut x = vec![0i128; n];
        loop {
            let skip = self.primitive && x.iter().all(|&v| v == 0);
            if !skip {
                self.meter.tick(1)?;
                let (_, qv) = self.r.eval(&x, p);
                if qv == kp {
                    let node = self.node(x.clone(), 1)?;
                    if let Flow::Stop = self.descend(node, visit)? {
                        return Ok(());
                    }
                }
            }
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(());
                }
                x[i] += 1;
                if x[i] < p {
                    break;
                }
                x[i] = 0;
                i += 1;
            }
        }
    }

    fn descend(&mut self, node: Node, visit: &mut dyn FnMut(&Node) -> Flow) -> Result<Flow> {
        if let Flow::Stop = visit(&node) {
            return Ok(Flow::Stop);
        }
        if node.resolved() || node.j >= self.max_depth {
            return Ok(Flow::Continue);
        }
        // a singular class keeps all p^n children or none
        let p = self.r.p;
        if node.diff % checked_modulus(p, node.j + 1)? != 0 {
            return Ok(Flow::Continue);
        }
        let pj = checked_modulus(p, node.j)?;
        let n = self.r.n;
        let mut y = vec![0i128; n];
        loop {
            self.meter.tick(1)?;
            let child: Vec<i128> = node.x.iter().zip(&y).map(|(&a, &b)| a + pj * b).collect();
            let c = self.node(child, node.j + 1)?;
            if let Flow::Stop = self.descend(c, visit)? {
                return Ok(Flow::Stop);
            }
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(Flow::Continue);
                }
                y[i] += 1;
                if (y[i] as u64) < p {
                    break;
                }
                y[i] = 0;
                i += 1;
            }
        }
    }
}

fn liftable(node: &Node, p: u64) -> bool {
    node.resolved() && node.diff % (arith::upow(p, node.j + node.m) as i128) == 0
}

fn big_p(p: u64, e: u32) -> BigUint {
    num_traits::pow(BigUint::from(p), e as usize)
}

/// N(p^t) and N*(p^t) for Q(x) ≡ k.
pub fn count_congruence(
    q: &QuadraticForm,
    k: &BigInt,
    p: u64,
    t: u32,
    budget: &Budget,
) -> Result<CongruenceCount> {
    if t == 0 {
        return Err(QfError::precondition("exponent t must be at least 1"));
    }
    if !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not prime")));
    }
    let r = Residues::new(q, p)?;
    let n = q.n() as u32;
    let total = (p as u128).checked_pow(t * n);
    if matches!(total, Some(v) if v <= DIRECT_LIMIT) {
        return count_direct(&r, k, p, t, budget);
    }
    let mut w = Walker {
        r: &r,
        k,
        max_depth: t,
        primitive: false,
        meter: Meter::new(budget.nodes, "lifting-tree nodes"),
    };
    let mut nc = BigUint::zero();
    let mut ns = BigUint::zero();
    let nu = n;
    w.walk(&mut |node| {
        let s = t - node.j;
        let c = if node.resolved() {
            let ok = if s <= node.m {
                node.diff % (arith::upow(p, t) as i128) == 0
            } else {
                node.diff % (arith::upow(p, node.j + node.m) as i128) == 0
            };
            if !ok {
                BigUint::zero()
            } else if s <= node.m {
                big_p(p, nu * s)
            } else {
                big_p(p, (nu - 1) * s + node.m)
            }
        } else if node.j == t {
            BigUint::one()
        } else {
            BigUint::zero()
        };
        if node.ax_unit {
            ns += &c;
        }
        nc += c;
        Flow::Continue
    })?;
    Ok(CongruenceCount {
        p,
        t,
        n_count: nc,
        nstar: ns,
        strategy: CountStrategy::LiftingTree,
    })
}

fn count_direct(r: &Residues, k: &BigInt, p: u64, t: u32, budget: &Budget) -> Result<CongruenceCount> {
    let m = checked_modulus(p, t)?;
    let kk = k_mod(k, m);
    let n = r.n;
    let mut meter = Meter::new(budget.nodes, "residue enumeration");
    let mut x = vec![0i128; n];
    let (mut nc, mut ns) = (0u64, 0u64);
    loop {
        meter.tick(1)?;
        let (_, qv) = r.eval(&x, m);
        if qv == kk {
            nc += 1;
            if r.ax_unit(&x) {
                ns += 1;
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(CongruenceCount {
                    p,
                    t,
                    n_count: nc.into(),
                    nstar: ns.into(),
                    strategy: CountStrategy::Direct,
                });
            }
            x[i] += 1;
            if x[i] < m {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// Depth beyond which no singular class survives when k ≠ 0.
pub fn weak_cutoff(q: &QuadraticForm, k: &BigInt, p: u64) -> u32 {
    let vk = arith::valuation(k, p).unwrap_or(0);
    let vd = arith::valuation(q.det(), p).unwrap_or(0);
    vk + 2 * vd + 2 * tau(p) + 1
}

/// Strong local solubility at p.
pub fn strong_witness(q: &QuadraticForm, k: &BigInt, p: u64) -> Result<Option<Vec<BigInt>>> {
    if p == 2 {
        return strong_witness_two(q, k);
    }
    let d = diagonalize_odd(q, p, 1)?;
    let pi = p as i128;
    let a: Vec<i128> = d.diag.iter().map(|v| v.mod_floor(&BigInt::from(p)).to_i128().unwrap()).collect();
    let idx: Vec<usize> = (0..a.len()).filter(|&i| a[i] != 0).collect();
    let kk = k_mod(k, pi);
    let y = match solve_diag_nonzero(&idx.iter().map(|&i| a[i]).collect::<Vec<_>>(), kk, p) {
        Some(y) => y,
        None => return Ok(None),
    };
    let mut full = vec![0i128; a.len()];
    for (pos, &i) in idx.iter().enumerate() {
        full[i] = y[pos];
    }
    let x: Vec<BigInt> = (0..a.len())
        .map(|i| {
            let s: BigInt = (0..a.len()).map(|j| &d.u[i][j] * BigInt::from(full[j])).sum();
            s.mod_floor(&BigInt::from(p))
        })
        .collect();
    let r = Residues::new(q, p)?;
    let xi: Vec<i128> = x.iter().map(|v| v.to_i128().unwrap()).collect();
    let (_, qv) = r.eval(&xi, pi);
    if qv != kk || !r.ax_unit(&xi) {
        return Err(QfError::internal("strong witness failed verification"));
    }
    Ok(Some(x))
}

/// Nonzero y with Σ a_i y_i² ≡ k mod p, all a_i units.
fn solve_diag_nonzero(a: &[i128], k: i128, p: u64) -> Option<Vec<i128>> {
    let pi = p as i128;
    let sq = |v: i128| -> Option<i128> { sqrt_mod_prime(v.rem_euclid(pi) as u64, p).map(|s| s as i128) };
    let inv = |v: i128| mod_inv(v, pi).unwrap();
    match a.len() {
        0 => None,
        1 => {
            if k == 0 {
                return None;
            }
            sq(k * inv(a[0])).map(|s| vec![s])
        }
        _ => {
            // fix y_1, solve the rest recursively with the last two coordinates
            let r = a.len();
            let tail = &a[r - 2..];
            for y0 in 0..pi {
                let rest = (k - a[0] * y0 * y0).rem_euclid(pi);
                if r == 2 {
                    let v = rest * inv(a[1]) % pi;
                    if let Some(s) = sq(v) {
                        if y0 != 0 || s != 0 {
                            return Some(vec![y0, s]);
                        }
                    }
                    continue;
                }
                for y1 in 0..pi {
                    let rest2 = (rest - tail[0] * y1 * y1).rem_euclid(pi);
                    let v = rest2 * inv(tail[1]) % pi;
                    if let Some(s) = sq(v) {
                        if y0 != 0 || y1 != 0 || s != 0 {
                            let mut out = vec![0; r];
                            out[0] = y0;
                            out[r - 2] = y1;
                            out[r - 1] = s;
                            return Some(out);
                        }
                    }
                }
            }
            None
        }
    }
}

fn strong_witness_two(q: &QuadraticForm, k: &BigInt) -> Result<Option<Vec<BigInt>>> {
    // Q(x + 4y) ≡ Q(x) mod 8 and Ax mod 2 depends on x mod 2
    let r = Residues::new(q, 2)?;
    let n = q.n();
    let kk = k_mod(k, 8);
    let mut x = vec![0i128; n];
    loop {
        let (_, qv) = r.eval(&x, 8);
        if qv == kk && r.ax_unit(&x) {
            return Ok(Some(x.iter().map(|&v| BigInt::from(v)).collect()));
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(None);
            }
            x[i] += 1;
            if x[i] < 4 {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// First Hensel-liftable class of the solubility tree, if any.
fn weak_witness(
    q: &QuadraticForm,
    k: &BigInt,
    p: u64,
    budget: &Budget,
) -> Result<(Option<(Vec<BigInt>, u32)>, u32)> {
    let cutoff = weak_cutoff(q, k, p);
    let r = Residues::new(q, p)?;
    let mut w = Walker {
        r: &r,
        k,
        max_depth: cutoff,
        primitive: k.is_zero(),
        meter: Meter::new(budget.nodes, "lifting-tree nodes"),
    };
    let mut found = None;
    let mut stray = false;
    w.walk(&mut |node| {
        if liftable(node, p) {
            found = Some((node.x.iter().map(|&v| BigInt::from(v)).collect(), node.j));
            return Flow::Stop;
        }
        if !node.resolved() && node.j >= cutoff {
            stray = true;
        }
        Flow::Continue
    })?;
    if found.is_none() && stray {
        return Err(QfError::internal(format!(
            "singular class survived to the cutoff depth {cutoff} at p={p}"
        )));
    }
    Ok((found, cutoff))
}

fn check_nonsingular(q: &QuadraticForm) -> Result<()> {
    if q.det().is_zero() {
        return Err(QfError::precondition("form is degenerate (discriminant 0)"));
    }
    Ok(())
}

/// Weak and strong local solubility of Q = k at p.
pub fn decide_local(q: &QuadraticForm, k: &BigInt, p: u64, budget: &Budget) -> Result<LocalVerdict> {
    check_nonsingular(q)?;
    if !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not prime")));
    }
    let witness = strong_witness(q, k, p)?;
    let cutoff = weak_cutoff(q, k, p);
    // a primitive nonsingular solution gives a nontrivial zero when k = 0
    let (weak_witness, cutoff) = if witness.is_some() && !(k.is_zero() && witness.as_ref().unwrap().iter().all(|v| v.is_zero())) {
        (None, cutoff)
    } else {
        weak_witness(q, k, p, budget)?
    };
    let strong = witness.is_some();
    Ok(LocalVerdict {
        p,
        weak: strong || weak_witness.is_some(),
        strong,
        witness,
        weak_witness,
        cutoff_used: cutoff,
    })
}

pub fn decide_strong_lsc(q: &QuadraticForm, k: &BigInt, p: u64, budget: &Budget) -> Result<LocalVerdict> {
    decide_local(q, k, p, budget)
}

pub fn decide_weak_lsc(q: &QuadraticForm, k: &BigInt, p: u64, budget: &Budget) -> Result<LocalVerdict> {
    let mut v = decide_local(q, k, p, budget)?;
    if v.weak && v.weak_witness.is_none() {
        let (w, c) = weak_witness(q, k, p, budget)?;
        v.weak_witness = w;
        v.cutoff_used = c;
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct WeakReport {
    pub verdicts: Vec<LocalVerdict>,
    pub automatic_certificate: String,
}

impl WeakReport {
    pub fn weak(&self) -> bool {
        self.verdicts.iter().all(|v| v.weak)
    }
    pub fn strong(&self) -> bool {
        self.verdicts.iter().all(|v| v.strong)
    }
}

/// Primes at which local solubility must be checked: p | 2Δk.
pub fn bad_primes(q: &QuadraticForm, k: &BigInt) -> Result<Vec<u64>> {
    let mut ps = vec![2u64];
    ps.extend(arith::prime_divisors_big(q.det())?);
    if !k.is_zero() {
        ps.extend(arith::prime_divisors_big(k)?);
    }
    ps.sort_unstable();
    ps.dedup();
    Ok(ps)
}

/// Local verdicts at every p | 2Δk; other primes are soluble for n ≥ 3.
pub fn decide_weak_lsc_all(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<WeakReport> {
    check_nonsingular(q)?;
    if q.n() < 3 {
        return Err(QfError::precondition("need n >= 3"));
    }
    let verdicts = bad_primes(q, k)?
        .into_iter()
        .map(|p| decide_local(q, k, p, budget))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakReport {
        verdicts,
        automatic_certificate: "p not dividing 2*det*k: Q mod p is a nonsingular form in n >= 3 variables, \
             so Q = k has a nonsingular solution mod p (closed-form count M_n(p) > 0), which lifts to every p^t"
            .to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OddDiagonalization {
    pub p: u64,
    pub t: u32,
    /// columns are the new basis; p ∤ det U
    pub u: BMat,
    /// inverse of U modulo p^t
    pub uinv: Vec<Vec<i128>>,
    pub diag: Vec<BigInt>,
}

fn mat_mod(q: &QuadraticForm, m: i128) -> Result<Vec<Vec<i128>>> {
    Ok(q.small()?
        .iter()
        .map(|r| r.iter().map(|&v| (v as i128).rem_euclid(m)).collect())
        .collect())
}

/// B ← EᵀBE and U ← UE for a column operation e_dst += c·e_src.
fn col_add(b: &mut [Vec<i128>], u: &mut [Vec<i128>], dst: usize, src: usize, c: i128, m: i128) {
    let n = b.len();
    for row in b.iter_mut() {
        row[dst] = (row[dst] + c * row[src]).rem_euclid(m);
    }
    for j in 0..n {
        b[dst][j] = (b[dst][j] + c * b[src][j]).rem_euclid(m);
    }
    for row in u.iter_mut() {
        row[dst] = (row[dst] + c * row[src]).rem_euclid(m);
    }
}

fn swap_idx(b: &mut [Vec<i128>], u: &mut [Vec<i128>], i: usize, j: usize) {
    if i == j {
        return;
    }
    b.swap(i, j);
    for row in b.iter_mut() {
        row.swap(i, j);
    }
    for row in u.iter_mut() {
        row.swap(i, j);
    }
}

fn val_mod(v: i128, p: u64, t: u32) -> u32 {
    arith::val_capped(v, p, t)
}

/// UᵀAU ≡ diag(A_1..A_n) mod p^t for odd p.
pub fn diagonalize_odd(q: &QuadraticForm, p: u64, t: u32) -> Result<OddDiagonalization> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    if t == 0 {
        return Err(QfError::precondition("precision must be at least 1"));
    }
    let m = checked_modulus(p, t)?;
    let n = q.n();
    let mut b = mat_mod(q, m)?;
    let mut u: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    for s in 0..n {
        let mut best: Option<(u32, usize, usize)> = None;
        for i in s..n {
            for j in i..n {
                let v = val_mod(b[i][j], p, t);
                // diagonal entries win ties
                if v < t && best.is_none_or(|(bv, bi, bj)| v < bv || (v == bv && i == j && bi != bj)) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((v, i, j)) = best else { break };
        if i != j {
            col_add(&mut b, &mut u, i, j, 1, m);
            if val_mod(b[i][i], p, t) != v {
                return Err(QfError::internal("pivot merge lost valuation"));
            }
        }
        swap_idx(&mut b, &mut u, s, i);
        let pv = arith::upow(p, v) as i128;
        let unit = b[s][s] / pv;
        let m_rel = m / pv;
        let uinv = mod_inv(unit, m_rel).ok_or_else(|| QfError::internal("pivot is not a unit"))?;
        for l in s + 1..n {
            if b[l][s] == 0 {
                continue;
            }
            let lam = ((b[l][s] / pv) % m_rel * uinv).rem_euclid(m_rel);
            col_add(&mut b, &mut u, l, s, (-lam).rem_euclid(m), m);
        }
    }
    let uinv = matrix::inverse_mod(&u, m).ok_or_else(|| QfError::internal("U not invertible mod p^t"))?;
    let out = OddDiagonalization {
        p,
        t,
        u: u.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect(),
        uinv,
        diag: (0..n).map(|i| BigInt::from(b[i][i])).collect(),
    };
    out.verify(q)?;
    Ok(out)
}

impl OddDiagonalization {
    pub fn modulus(&self) -> BigInt {
        arith::big_pow(self.p, self.t)
    }

    /// Checks UᵀAU ≡ diag mod p^t and p ∤ det U exactly.
    pub fn verify(&self, q: &QuadraticForm) -> Result<()> {
        let m = self.modulus();
        let b = matrix::mul(&matrix::mul(&matrix::transpose(&self.u), q.matrix()), &self.u);
        for i in 0..q.n() {
            for j in 0..q.n() {
                let want = if i == j { self.diag[i].clone() } else { BigInt::zero() };
                if !(&b[i][j] - want).mod_floor(&m).is_zero() {
                    return Err(QfError::internal(format!("diagonalization fails at ({i},{j})")));
                }
            }
        }
        if (matrix::det(&self.u) % BigInt::from(self.p)).is_zero() {
            return Err(QfError::internal("p divides det U"));
        }
        Ok(())
    }

    pub fn valuations(&self) -> Vec<u32> {
        self.diag
            .iter()
            .map(|d| arith::valuation(d, self.p).unwrap_or(self.t).min(self.t))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Block {
    /// a X²
    Square { a: i128 },
    /// b XY, b even
    Hyperbolic { b: i128 },
    /// c (X² + XY + Y²), c even
    Hexagonal { c: i128 },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Square { .. } => 1,
            _ => 2,
        }
    }
    /// The coefficient d_j attached to each variable of the block.
    pub fn coeff(&self) -> i128 {
        match *self {
            Block::Square { a } => a,
            Block::Hyperbolic { b } => b,
            Block::Hexagonal { c } => c,
        }
    }
    fn rank(&self) -> u8 {
        match self {
            Block::Square { .. } => 0,
            Block::Hyperbolic { .. } => 1,
            Block::Hexagonal { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoAdicBlocks {
    pub precision: u32,
    /// columns are the new basis; det T odd
    pub t: BMat,
    pub tinv: Vec<Vec<i128>>,
    pub blocks: Vec<Block>,
}

impl TwoAdicBlocks {
    /// Gram matrix of the block form.
    pub fn gram(&self) -> Vec<Vec<i128>> {
        let n: usize = self.blocks.iter().map(|b| b.dim()).sum();
        let mut g = vec![vec![0i128; n]; n];
        let mut s = 0;
        for b in &self.blocks {
            match *b {
                Block::Square { a } => g[s][s] = a,
                Block::Hyperbolic { b } => {
                    g[s][s + 1] = b / 2;
                    g[s + 1][s] = b / 2;
                }
                Block::Hexagonal { c } => {
                    g[s][s] = c;
                    g[s + 1][s + 1] = c;
                    g[s][s + 1] = c / 2;
                    g[s + 1][s] = c / 2;
                }
            }
            s += b.dim();
        }
        g
    }

    /// d_j for every coordinate.
    pub fn coord_coeffs(&self) -> Vec<i128> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.coeff(), b.dim()))
            .collect()
    }

    pub fn verify(&self, q: &QuadraticForm) -> Result<()> {
        let m = arith::big_pow(2, self.precision);
        let b = matrix::mul(&matrix::mul(&matrix::transpose(&self.t), q.matrix()), &self.t);
        let g = self.gram();
        for i in 0..q.n() {
            for j in 0..q.n() {
                if !(&b[i][j] - BigInt::from(g[i][j])).mod_floor(&m).is_zero() {
                    return Err(QfError::internal(format!("block form fails at ({i},{j})")));
                }
            }
        }
        if matrix::det(&self.t).is_even() {
            return Err(QfError::internal("det T is even"));
        }
        if self.blocks.iter().any(|b| !matches!(b, Block::Square { .. }) && b.coeff() % 2 != 0) {
            return Err(QfError::internal("binary block coefficient is odd"));
        }
        Ok(())
    }
}

/// Newton iteration for f(s) ≡ 0 mod m when f' is odd.
fn newton2(f: impl Fn(i128) -> i128, df: impl Fn(i128) -> i128, start: i128, m: i128) -> Result<i128> {
    let mut s = start;
    for _ in 0..256 {
        let v = f(s).rem_euclid(m);
        if v == 0 {
            return Ok(s);
        }
        let d = mod_inv(df(s), m).ok_or_else(|| QfError::internal("Newton derivative not a unit"))?;
        s = (s - v * d).rem_euclid(m);
    }
    Err(QfError::internal("Newton iteration did not converge"))
}

/// Splits Q over ℤ₂ into aX², bXY and c(X²+XY+Y²) blocks modulo 2^precision.
pub fn two_adic_blocks(q: &QuadraticForm, precision: u32) -> Result<TwoAdicBlocks> {
    if precision < 3 {
        return Err(QfError::precondition("2-adic precision must be at least 3"));
    }
    // the 2x2 normalization works modulo a few extra powers of two
    let work = precision + 4;
    let m = checked_modulus(2, work)?;
    let n = q.n();
    let mut b = mat_mod(q, m)?;
    let mut u: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    let mut blocks = Vec::new();
    let mut s = 0;
    while s < n {
        let mut best: Option<(u32, usize, usize)> = None;
        for i in s..n {
            for j in i..n {
                let v = val_mod(b[i][j], 2, work);
                if v < work && best.is_none_or(|(bv, bi, bj)| v < bv || (v == bv && i == j && bi != bj)) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((v, i, j)) = best else {
            for _ in s..n {
                blocks.push(Block::Square { a: 0 });
            }
            break;
        };
        let pv = 1i128 << v;
        if i == j {
            swap_idx(&mut b, &mut u, s, i);
            let unit = b[s][s] / pv;
            let inv = mod_inv(unit, m >> v).unwrap();
            for l in s + 1..n {
                if b[l][s] == 0 {
                    continue;
                }
                let lam = ((b[l][s] / pv) * inv).rem_euclid(m >> v);
                col_add(&mut b, &mut u, l, s, (-lam).rem_euclid(m), m);
            }
            blocks.push(Block::Square { a: b[s][s] });
            s += 1;
            continue;
        }
        swap_idx(&mut b, &mut u, s, i);
        swap_idx(&mut b, &mut u, s + 1, j);
        // M' = M / 2^v = [[2α, β], [β, 2γ]] with β odd
        let mm = m >> v;
        let (m00, m01, m11) = (b[s][s] / pv, b[s][s + 1] / pv, b[s + 1][s + 1] / pv);
        let det = (m00 * m11 - m01 * m01).rem_euclid(mm);
        let dinv = mod_inv(det, mm).ok_or_else(|| QfError::internal("2x2 pivot not invertible"))?;
        for l in s + 2..n {
            let (r0, r1) = (b[l][s] / pv, b[l][s + 1] / pv);
            if b[l][s] == 0 && b[l][s + 1] == 0 {
                continue;
            }
            let c0 = ((m11 * r0 - m01 * r1).rem_euclid(mm) * dinv).rem_euclid(mm);
            let c1 = ((m00 * r1 - m01 * r0).rem_euclid(mm) * dinv).rem_euclid(mm);
            col_add(&mut b, &mut u, l, s, (-c0).rem_euclid(m), m);
            col_add(&mut b, &mut u, l, s + 1, (-c1).rem_euclid(m), m);
        }
        let alpha = b[s][s] >> (v + 1);
        let beta = b[s][s + 1] >> v;
        let gamma = b[s + 1][s + 1] >> (v + 1);
        if (alpha * gamma) % 2 == 0 {
            let h = |x: i128| (alpha + beta * x + gamma * x % m * x).rem_euclid(m);
            let dh = |x: i128| beta + 2 * gamma * x;
            let s0 = newton2(h, dh, if alpha % 2 == 0 { 0 } else { alpha }, m)?;
            col_add(&mut b, &mut u, s, s + 1, s0, m);
            let bp = b[s][s + 1] >> v;
            let tt = (-(b[s + 1][s + 1] >> (v + 1)) * mod_inv(bp, m).unwrap()).rem_euclid(m);
            col_add(&mut b, &mut u, s + 1, s, tt, m);
            if b[s][s] % (1i128 << precision) != 0 || b[s + 1][s + 1] % (1i128 << precision) != 0 {
                return Err(QfError::internal("hyperbolic normalization failed"));
            }
            blocks.push(Block::Hyperbolic { b: (2 * b[s][s + 1]).rem_euclid(2i128 << precision) });
        } else {
            let bi = mod_inv(beta, m).unwrap();
            let yfun = |x: i128| (alpha * bi % m * (1 - 2 * x)).rem_euclid(m);
            let g = |x: i128| {
                let y = yfun(x);
                (alpha * x % m * x + beta * x % m * y + gamma * y % m * y - alpha).rem_euclid(m)
            };
            let dg = |x: i128| {
                let _ = x;
                alpha
            };
            let x0 = newton_hex(&g, &dg, m)?;
            let y0 = yfun(x0);
            // e2' = x·e1 + y·e2
            let n_ = b.len();
            let mut e: Vec<Vec<i128>> = (0..n_).map(|r| (0..n_).map(|c| (r == c) as i128).collect()).collect();
            e[s][s + 1] = x0;
            e[s + 1][s + 1] = y0;
            apply_change(&mut b, &mut u, &e, m);
            // binary coefficients are kept modulo 2^{precision+1} so c/2 is exact
            let cm = 2i128 << precision;
            let c = b[s][s].rem_euclid(cm);
            if (b[s + 1][s + 1] - c) % cm != 0 || (2 * b[s][s + 1] - c) % cm != 0 {
                return Err(QfError::internal("hexagonal normalization failed"));
            }
            blocks.push(Block::Hexagonal { c: c.rem_euclid(cm) });
        }
        s += 2;
    }
    // order: squares, hyperbolic planes, hexagonal planes
    let mut starts = Vec::new();
    let mut pos = 0;
    for bl in &blocks {
        starts.push(pos);
        pos += bl.dim();
    }
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&i| (blocks[i].rank(), i));
    let perm: Vec<usize> = order.iter().flat_map(|&i| starts[i]..starts[i] + blocks[i].dim()).collect();
    let cm = 1i128 << precision;
    let t: BMat = (0..n)
        .map(|r| perm.iter().map(|&c| BigInt::from(u[r][c].rem_euclid(cm))).collect())
        .collect();
    let blocks: Vec<Block> = order
        .iter()
        .map(|&i| match blocks[i] {
            Block::Square { a } => Block::Square { a: a.rem_euclid(cm) },
            other => other,
        })
        .collect();
    let tsmall: Vec<Vec<i128>> = t.iter().map(|r| r.iter().map(|v| v.to_i128().unwrap()).collect()).collect();
    let tinv = matrix::inverse_mod(&tsmall, cm).ok_or_else(|| QfError::internal("T not invertible mod 2"))?;
    let out = TwoAdicBlocks { precision, t, tinv, blocks };
    out.verify(q)?;
    Ok(out)
}

fn newton_hex(g: &dyn Fn(i128) -> i128, dg: &dyn Fn(i128) -> i128, m: i128) -> Result<i128> {
    // g vanishes mod 2 identically and g' is odd, so any start converges
    let mut x = 0i128;
    for _ in 0..256 {
        let v = g(x);
        if v == 0 {
            return Ok(x);
        }
        let d = mod_inv(dg(x), m).unwrap();
        x = (x - v * d).rem_euclid(m);
    }
    Err(QfError::internal("hexagonal Newton iteration did not converge"))
}

fn apply_change(b: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, e: &[Vec<i128>], m: i128) {
    let n = b.len();
    let mulm = |x: &Vec<Vec<i128>>, y: &[Vec<i128>]| -> Vec<Vec<i128>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).fold(0i128, |acc, l| (acc + x[i][l] * y[l][j]) % m).rem_euclid(m))
                    .collect()
            })
            .collect()
    };
    let et: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| e[j][i]).collect()).collect();
    let be = mulm(b, e);
    *b = mulm(&et, &be);
    *u = mulm(u, e);
}

/// Exact local density data from the lifting tree.
#[derive(Debug, Clone)]
pub struct TreeDensity {
    /// Σ over liftable classes of p^{-(n-1)j+m}
    pub value: BigRational,
    /// deepest j+m over contributing classes
    pub horizon: u32,
    pub classes: u64,
}

/// Density of primitive (k = 0) or all (k ≠ 0) solutions, summed over
/// Hensel-liftable classes.
pub fn tree_density(q: &QuadraticForm, k: &BigInt, p: u64, budget: &Budget) -> Result<TreeDensity> {
    check_nonsingular(q)?;
    let cutoff = weak_cutoff(q, k, p);
    let r = Residues::new(q, p)?;
    let n = q.n() as i64;
    let mut w = Walker {
        r: &r,
        k,
        max_depth: cutoff,
        primitive: k.is_zero(),
        meter: Meter::new(budget.nodes, "lifting-tree nodes"),
    };
    let mut value = BigRational::zero();
    let mut horizon = 1;
    let mut classes = 0;
    let mut stray = false;
    let pb = BigInt::from(p);
    w.walk(&mut |node| {
        if liftable(node, p) {
            let e = -(n - 1) * node.j as i64 + node.m as i64;
            value += BigRational::from_integer(pb.clone()).pow(e as i32);
            horizon = horizon.max(node.j + node.m);
            classes += 1;
        } else if !node.resolved() && node.j >= cutoff {
            stray = true;
        }
        Flow::Continue
    })?;
    if stray {
        return Err(QfError::internal(format!("singular class survived to depth {cutoff} at p={p}")));
    }
    Ok(TreeDensity { value, horizon, classes })
}

/// p^{-t(n-1)} N(p^t) as an exact rational.
pub fn density_at_depth(q: &QuadraticForm, k: &BigInt, p: u64, t: u32, budget: &Budget) -> Result<BigRational> {
    let c = count_congruence(q, k, p, t, budget)?;
    let den = arith::big_pow(p, t * (q.n() as u32 - 1));
    Ok(BigRational::new(BigInt::from(c.n_count), den))
}

pub fn is_even_matrix(q: &QuadraticForm, d: i64) -> bool {
    q.matrix().iter().flatten().all(|v| (v % BigInt::from(d)).is_zero())
}

pub fn k_is_positive(k: &BigInt) -> bool {
    k.is_positive()
}
