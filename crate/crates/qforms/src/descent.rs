//! Reduction of (k, Q) failing strong local solubility to a cleaner pair
//! (k′, Q′) with the same global solubility.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith;
use crate::error::{Budget, QfError, Result};
use crate::form::{ser_big, QuadraticForm};
use crate::lattice::{congruence_lattice_basis, find_representation, ser_mat};
use crate::localsolve::{decide_local, decide_weak_lsc_all, diagonalize_odd, two_adic_blocks, Block, TwoAdicBlocks};
use crate::matrix::{self, BMat};
use crate::singular::local_density;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseTag {
    OddR0,
    OddR1,
    OddR2,
    TwoAdicSingle,
    TwoAdicQuad,
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentStep {
    pub p: u64,
    pub case: CaseTag,
    /// columns form a basis of the sublattice
    #[serde(serialize_with = "ser_mat")]
    pub t: BMat,
    #[serde(serialize_with = "ser_big")]
    pub k_before: BigInt,
    #[serde(serialize_with = "ser_big")]
    pub k_after: BigInt,
    pub q_before: QuadraticForm,
    pub q_after: QuadraticForm,
    /// Q_after = p^{-θ} Q_before(T·) and k_after = p^{-θ} k_before
    pub theta: u32,
    /// ν_p(Δ_before) − ν_p(Δ_after)
    pub disc_valuation_drop: u32,
}

impl DescentStep {
    /// Re-checks the step exactly.
    pub fn verify(&self) -> Result<()> {
        let pt = arith::big_pow(self.p, self.theta);
        let lhs = matrix::mul(&matrix::mul(&matrix::transpose(&self.t), self.q_before.matrix()), &self.t);
        let rhs: BMat = self
            .q_after
            .matrix()
            .iter()
            .map(|r| r.iter().map(|v| v * &pt).collect())
            .collect();
        if lhs != rhs {
            return Err(QfError::internal("Q_after does not match Q_before(T·)/p^θ"));
        }
        if &self.k_after * &pt != self.k_before {
            return Err(QfError::internal("k_after does not match k_before/p^θ"));
        }
        let (db, da) = (self.q_before.det().abs(), self.q_after.det().abs());
        if da > db {
            return Err(QfError::internal("discriminant increased"));
        }
        // k_after/|Δ_after| ≥ k_before/|Δ_before|
        if self.q_before.n() >= 5 && &self.k_after * &db < &self.k_before * &da {
            return Err(QfError::internal("k/|Δ| decreased"));
        }
        Ok(())
    }
}

fn finish_step(p: u64, case: CaseTag, t: BMat, q: &QuadraticForm, k: &BigInt, theta: u32) -> Result<DescentStep> {
    let pt = arith::big_pow(p, theta);
    let q_after = q
        .transform(&t)?
        .divide(&pt)
        .map_err(|_| QfError::internal("Q(T·) is not divisible by the expected power of p"))?;
    if !(k % &pt).is_zero() {
        return Err(QfError::internal("k is not divisible by the expected power of p"));
    }
    let drop = arith::valuation(q.det(), p).unwrap_or(0) - arith::valuation(q_after.det(), p).unwrap_or(0);
    let step = DescentStep {
        p,
        case,
        t,
        k_before: k.clone(),
        k_after: k / &pt,
        q_before: q.clone(),
        q_after,
        theta,
        disc_valuation_drop: drop,
    };
    step.verify()?;
    Ok(step)
}

fn witness_text(w: &Option<Vec<BigInt>>) -> String {
    match w {
        Some(x) => format!("{:?}", x.iter().map(|v| v.to_string()).collect::<Vec<_>>()),
        None => "none".into(),
    }
}

/// One reduction step at an odd prime where strong LSC fails.
pub fn descend_odd(q: &QuadraticForm, k: &BigInt, p: u64, budget: &Budget) -> Result<DescentStep> {
    if p == 2 || !arith::is_prime(p) {
        return Err(QfError::precondition(format!("{p} is not an odd prime")));
    }
    let v = decide_local(q, k, p, budget)?;
    if !v.weak {
        return Err(QfError::precondition(format!("weak LSC fails at p = {p}")));
    }
    if v.strong {
        return Err(QfError::precondition(format!(
            "strong LSC holds at p = {p} (witness {})",
            witness_text(&v.witness)
        )));
    }
    let d = diagonalize_odd(q, p, 1)?;
    let pb = BigInt::from(p);
    let units: Vec<usize> = (0..q.n()).filter(|&i| !(&d.diag[i] % &pb).is_zero()).collect();
    let r = units.len();
    let a = |i: usize| d.diag[units[i]].to_i128().unwrap();
    let contradiction = |why: String| QfError::internal(format!("contradiction at p = {p}: {why}"));
    if r >= 3 {
        return Err(contradiction(format!("r = {r} unit coefficients, so M_r(p) > 0 gives a nonsingular solution")));
    }
    if !(k % &pb).is_zero() {
        return Err(contradiction("p does not divide k although strong LSC fails".into()));
    }
    let case = match r {
        0 => CaseTag::OddR0,
        1 => CaseTag::OddR1,
        _ => {
            if arith::legendre(-a(0) * a(1), p) == 1 {
                return Err(contradiction("-a1 a2 is a square mod p, so a nonsingular zero exists".into()));
            }
            CaseTag::OddR2
        }
    };
    let constraints: Vec<(Vec<i64>, u64)> = units
        .iter()
        .map(|&i| (d.uinv[i].iter().map(|&x| x as i64).collect(), p))
        .collect();
    let lat = congruence_lattice_basis(q.n(), &constraints)?;
    finish_step(p, case, lat.t, q, k, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma2Kind {
    /// a solution mod 8 with Ax odd lifts
    StrongLsc,
    NoCoefficientDivisibleBy8,
    /// solution mod 2^7 with x_j odd and 8 ∤ d_j
    LiftableMod128,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sigma2Certificate {
    pub kind: Sigma2Kind,
    /// x mod 2^7 (or mod 8 for the strong branch)
    pub witness: Option<Vec<i64>>,
    /// explicit bound 2^{-3(n-1)} on σ₂, only for the strong branch
    pub hensel_lower_bound: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum TwoAdicOutcome {
    Certificate(Sigma2Certificate),
    Step(DescentStep),
}

const SCAN_BITS: u32 = 7;

/// Solution of Q ≡ k mod 2^7 in block coordinates, preferring one with a
/// "good" odd coordinate (y_j odd and 8 ∤ d_j). Returns (y, good).
pub fn scan_mod_128(blocks: &TwoAdicBlocks, k: &BigInt) -> Option<(Vec<i64>, bool)> {
    let m: i128 = 1 << SCAN_BITS;
    let target = k.mod_floor(&BigInt::from(m)).to_i128().unwrap() as usize;
    let states = 2 * m as usize;
    // layer[s] = (prev state, values of the block's variables)
    let mut layers: Vec<Vec<Option<(usize, [i64; 2])>>> = vec![];
    let mut reach = vec![false; states];
    reach[0] = true;
    for b in &blocks.blocks {
        let d = b.coeff();
        let good_coeff = d.rem_euclid(8) != 0;
        // distinct (value, good) outcomes with one representative
        let mut outcomes: Vec<Option<[i64; 2]>> = vec![None; states];
        let range = if b.dim() == 1 { 1 } else { m };
        for y1 in 0..m {
            for y2 in 0..range {
                let v = match *b {
                    Block::Square { a } => a * y1 * y1,
                    Block::Hyperbolic { b } => b * y1 * y2,
                    Block::Hexagonal { c } => c * (y1 * y1 + y1 * y2 + y2 * y2),
                }
                .rem_euclid(m) as usize;
                let good = good_coeff && (y1 % 2 == 1 || y2 % 2 == 1);
                let s = v + if good { m as usize } else { 0 };
                if outcomes[s].is_none() {
                    outcomes[s] = Some([y1 as i64, y2 as i64]);
                }
            }
        }
        let mut layer = vec![None; states];
        let mut next = vec![false; states];
        for (s, _) in reach.iter().enumerate().filter(|x| *x.1) {
            let (sv, sg) = (s % m as usize, s >= m as usize);
            for (o, ys) in outcomes.iter().enumerate() {
                let Some(ys) = ys else { continue };
                let (ov, og) = (o % m as usize, o >= m as usize);
                let ns = (sv + ov) % m as usize + if sg || og { m as usize } else { 0 };
                if !next[ns] {
                    next[ns] = true;
                    layer[ns] = Some((s, *ys));
                }
            }
        }
        layers.push(layer);
        reach = next;
    }
    let end = if reach[target + m as usize] {
        target + m as usize
    } else if reach[target] {
        target
    } else {
        return None;
    };
    let good = end >= m as usize;
    // walk back through the layers
    let mut y = Vec::new();
    let mut s = end;
    for (b, layer) in blocks.blocks.iter().zip(&layers).rev() {
        let (prev, ys) = layer[s].unwrap();
        let part: Vec<i64> = ys[..b.dim()].to_vec();
        y.splice(0..0, part);
        s = prev;
    }
    Some((y, good))
}

fn strong_two_certificate(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<Option<Sigma2Certificate>> {
    let v = decide_local(q, k, 2, budget)?;
    if !v.weak {
        return Err(QfError::precondition("weak LSC fails at p = 2"));
    }
    Ok(v.strong.then(|| Sigma2Certificate {
        kind: Sigma2Kind::StrongLsc,
        witness: v.witness.map(|w| w.iter().map(|x| x.to_i64().unwrap_or(0)).collect()),
        hensel_lower_bound: Some(format!("2^-{}", 3 * (q.n() - 1))),
    }))
}

/// Either certifies σ₂(k, Q) ≫ 1 or emits a 2-adic reduction step.
pub fn descend_two_adic(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<TwoAdicOutcome> {
    if q.det().is_zero() {
        return Err(QfError::precondition("form is degenerate (discriminant 0)"));
    }
    if let Some(c) = strong_two_certificate(q, k, budget)? {
        return Ok(TwoAdicOutcome::Certificate(c));
    }
    let n = q.n();
    let four = BigInt::from(4);
    // everything divisible by 4: divide out the global factor
    if q.matrix().iter().flatten().all(|v| (v % &four).is_zero()) && (k % &four).is_zero() {
        return Ok(TwoAdicOutcome::Step(finish_step(2, CaseTag::TwoAdicQuad, matrix::identity(n), q, k, 2)?));
    }
    let blocks = two_adic_blocks(q, SCAN_BITS + 1)?;
    let d = blocks.coord_coeffs();
    if d.iter().all(|c| c.rem_euclid(8) != 0) {
        return Ok(TwoAdicOutcome::Certificate(Sigma2Certificate {
            kind: Sigma2Kind::NoCoefficientDivisibleBy8,
            witness: None,
            hensel_lower_bound: None,
        }));
    }
    let (y, good) = scan_mod_128(&blocks, k)
        .ok_or_else(|| QfError::internal("no solution mod 2^7 although weak LSC holds at 2"))?;
    if good {
        let yb: Vec<BigInt> = y.iter().map(|&v| BigInt::from(v)).collect();
        let m = BigInt::from(1i64 << SCAN_BITS);
        let x: Vec<i64> = matrix::mat_vec(&blocks.t, &yb)
            .iter()
            .map(|v| v.mod_floor(&m).to_i64().unwrap())
            .collect();
        return Ok(TwoAdicOutcome::Certificate(Sigma2Certificate {
            kind: Sigma2Kind::LiftableMod128,
            witness: Some(x),
            hensel_lower_bound: None,
        }));
    }
    if !(k % &four).is_zero() {
        return Err(QfError::internal("every solution mod 2^7 is forced even but 4 does not divide k"));
    }
    let constraints: Vec<(Vec<i64>, u64)> = (0..n)
        .filter(|&j| d[j].rem_euclid(8) != 0)
        .map(|j| (blocks.tinv[j].iter().map(|&v| v.rem_euclid(2) as i64).collect(), 2))
        .collect();
    let lat = congruence_lattice_basis(n, &constraints)?;
    if lat.det.abs() > BigInt::from(1u64 << (n - 1)) {
        return Err(QfError::internal("2-adic lattice determinant exceeds 2^(n-1)"));
    }
    Ok(TwoAdicOutcome::Step(finish_step(2, CaseTag::TwoAdicSingle, lat.t, q, k, 2)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct TerminalCertificate {
    /// odd primes dividing Δ′ at which strong LSC was verified; the rest hold automatically
    pub odd_primes_checked: Vec<u64>,
    pub sigma2: Sigma2Certificate,
    /// σ₂(k′, Q′) lower bound when computable within budget
    pub sigma2_density: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentTrace {
    pub steps: Vec<DescentStep>,
    #[serde(serialize_with = "ser_big")]
    pub terminal_k: BigInt,
    pub terminal_form: QuadraticForm,
    pub certificate: TerminalCertificate,
    pub iteration_limit: u32,
}

/// Iterates odd and 2-adic steps until strong LSC holds at every odd prime
/// and σ₂ is certified.
pub fn descend_full(q: &QuadraticForm, k: &BigInt, budget: &Budget) -> Result<DescentTrace> {
    if !q.is_positive_definite() {
        return Err(QfError::precondition("descent needs a positive definite form"));
    }
    if q.n() < 5 {
        return Err(QfError::precondition("descent needs n >= 5"));
    }
    if !k.is_positive() {
        return Err(QfError::precondition("k must be positive"));
    }
    if !decide_weak_lsc_all(q, k, budget)?.weak() {
        return Err(QfError::precondition("(k, Q) fails weak LSC"));
    }
    let limit = arith::valuation(k, 2).unwrap_or(0)
        + arith::factor_big(q.det())?.iter().map(|&(_, e)| e).sum::<u32>();
    let mut steps: Vec<DescentStep> = vec![];
    let (mut cq, mut ck) = (q.clone(), k.clone());
    loop {
        if steps.len() as u32 > limit {
            return Err(QfError::internal(format!("descent exceeded {limit} steps")));
        }
        let odd: Vec<u64> = arith::prime_divisors_big(cq.det())?.into_iter().filter(|&p| p != 2).collect();
        let mut odd_step = None;
        for &p in &odd {
            if !decide_local(&cq, &ck, p, budget)?.strong {
                odd_step = Some(descend_odd(&cq, &ck, p, budget)?);
                break;
            }
        }
        let step = match odd_step {
            Some(s) => s,
            None => match descend_two_adic(&cq, &ck, budget)? {
                TwoAdicOutcome::Step(s) => s,
                TwoAdicOutcome::Certificate(sigma2) => {
                    let sigma2_density = match local_density(&cq, &ck, 2, 24, budget) {
                        Ok(d) => Some(crate::form::rat_to_f64(&d.lower)),
                        Err(QfError::Budget { .. }) => None,
                        Err(e) => return Err(e),
                    };
                    return Ok(DescentTrace {
                        steps,
                        terminal_k: ck,
                        terminal_form: cq,
                        certificate: TerminalCertificate { odd_primes_checked: odd, sigma2, sigma2_density },
                        iteration_limit: limit,
                    });
                }
            },
        };
        if step.k_after >= step.k_before {
            return Err(QfError::internal("k did not decrease"));
        }
        cq = step.q_after.clone();
        ck = step.k_after.clone();
        steps.push(step);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolubilityCheck {
    pub original_soluble: bool,
    pub terminal_soluble: bool,
    pub equivalent: bool,
}

/// 𝒮(k;Q) = ∅ ⇔ 𝒮(k′;Q′) = ∅ by enumeration.
pub fn verify_solubility_equivalence(q: &QuadraticForm, k: &BigInt, trace: &DescentTrace, budget: &Budget) -> Result<SolubilityCheck> {
    let a = find_representation(q, k, budget)?.is_some();
    let b = find_representation(&trace.terminal_form, &trace.terminal_k, budget)?.is_some();
    Ok(SolubilityCheck { original_soluble: a, terminal_soluble: b, equivalent: a == b })
}

/// Total odd-p discriminant drop per step is at least n − 4.
pub fn theta_accounting_ok(trace: &DescentTrace) -> bool {
    let n = trace.terminal_form.n() as u32;
    trace
        .steps
        .iter()
        .filter(|s| s.p != 2)
        .all(|s| s.disc_valuation_drop + 4 >= n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn diag_mat(d: &[i64]) -> BMat {
        matrix::from_i64(&(0..d.len()).map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0 }).collect()).collect::<Vec<_>>())
    }

    #[test]
    fn odd_r2_example() {
        let q = QuadraticForm::diag(&[1, 1, 7, 7, 7]);
        let s = descend_odd(&q, &b(147), 7, &Budget::default()).unwrap();
        assert_eq!(s.case, CaseTag::OddR2);
        assert_eq!(s.t, diag_mat(&[7, 7, 1, 1, 1]));
        assert_eq!(s.q_after, QuadraticForm::diag(&[7, 7, 1, 1, 1]));
        assert_eq!(s.k_after, b(21));
        assert_eq!(s.q_before.det(), &b(343));
        assert_eq!(s.q_after.det(), &b(49));
        assert_eq!(s.disc_valuation_drop, 1);
    }

    #[test]
    fn odd_r0_and_r1() {
        let bu = Budget::default();
        let s = descend_odd(&QuadraticForm::diag(&[7; 5]), &b(21), 7, &bu).unwrap();
        assert_eq!(s.case, CaseTag::OddR0);
        assert_eq!(s.t, matrix::identity(5));
        assert_eq!(s.q_after, QuadraticForm::identity(5));
        assert_eq!(s.k_after, b(3));
        let s = descend_odd(&QuadraticForm::diag(&[3, 7, 7, 7, 7]), &b(35), 7, &bu).unwrap();
        assert_eq!(s.case, CaseTag::OddR1);
        assert_eq!(s.t, diag_mat(&[7, 1, 1, 1, 1]));
        assert_eq!(s.q_after, QuadraticForm::diag(&[21, 1, 1, 1, 1]));
        assert_eq!(s.k_after, b(5));
    }

    #[test]
    fn odd_step_rejects_strong_pairs() {
        let e = descend_odd(&QuadraticForm::diag(&[1, 1, 1, 7, 7]), &b(7), 7, &Budget::default()).unwrap_err();
        assert!(matches!(e, QfError::Precondition(_)));
        // weak LSC fails: x² + y² ≡ 7 mod 49 is impossible
        let e = descend_odd(&QuadraticForm::diag(&[1, 1, 49, 49, 49]), &b(7), 7, &Budget::default()).unwrap_err();
        assert!(matches!(e, QfError::Precondition(_)));
    }

    #[test]
    fn two_adic_examples() {
        let bu = Budget::default();
        match descend_two_adic(&QuadraticForm::identity(5), &b(1), &bu).unwrap() {
            TwoAdicOutcome::Certificate(c) => {
                assert_eq!(c.kind, Sigma2Kind::StrongLsc);
                assert_eq!(c.hensel_lower_bound.as_deref(), Some("2^-12"));
            }
            other => panic!("{other:?}"),
        }
        match descend_two_adic(&QuadraticForm::diag(&[4; 5]), &b(12), &bu).unwrap() {
            TwoAdicOutcome::Step(s) => {
                assert_eq!(s.case, CaseTag::TwoAdicQuad);
                assert_eq!(s.q_after, QuadraticForm::identity(5));
                assert_eq!(s.k_after, b(3));
            }
            other => panic!("{other:?}"),
        }
        match descend_two_adic(&QuadraticForm::diag(&[1, 1, 1, 8, 8]), &b(32), &bu).unwrap() {
            TwoAdicOutcome::Step(s) => {
                assert_eq!(s.case, CaseTag::TwoAdicSingle);
                assert_eq!(s.t, diag_mat(&[2, 2, 2, 1, 1]));
                assert_eq!(s.q_after, QuadraticForm::diag(&[1, 1, 1, 2, 2]));
                assert_eq!(s.k_after, b(8));
                assert!(s.q_after.det().abs() * 4 <= s.q_before.det().abs());
            }
            other => panic!("{other:?}"),
        }
    }

    /// x1²+x2²+x3² + 8(x4²+x5²) ≡ 32 mod 128 never has x1, x2 or x3 odd.
    #[test]
    fn mod_128_oracle_for_example() {
        let mut odd_sums = std::collections::HashSet::new();
        for x1 in 0..128i64 {
            for x2 in 0..128i64 {
                for x3 in 0..128i64 {
                    if (x1 | x2 | x3) & 1 == 1 {
                        odd_sums.insert((x1 * x1 + x2 * x2 + x3 * x3) % 128);
                    }
                }
            }
        }
        let tails: std::collections::HashSet<i64> = (0..128i64)
            .flat_map(|a| (0..128i64).map(move |c| 8 * (a * a + c * c) % 128))
            .collect();
        let hit = odd_sums.iter().any(|s| tails.contains(&((32 - s).rem_euclid(128))));
        assert!(!hit);
        let blocks = two_adic_blocks(&QuadraticForm::diag(&[1, 1, 1, 8, 8]), 8).unwrap();
        assert!(!scan_mod_128(&blocks, &b(32)).unwrap().1);
    }

    #[test]
    fn full_examples() {
        let bu = Budget::default();
        let t = descend_full(&QuadraticForm::identity(5), &b(10), &bu).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.terminal_k, b(10));
        let t = descend_full(&QuadraticForm::diag(&[1, 1, 7, 7, 7]), &b(147), &bu).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.terminal_k, b(21));
        assert_eq!(t.terminal_form, QuadraticForm::diag(&[7, 7, 1, 1, 1]));
        let t = descend_full(&QuadraticForm::diag(&[49; 5]), &b(49), &bu).unwrap();
        assert_eq!(t.steps.len(), 2);
        assert!(t.steps.iter().all(|s| s.case == CaseTag::OddR0 && s.p == 7));
        assert_eq!(t.terminal_form, QuadraticForm::identity(5));
        assert_eq!(t.terminal_k, b(1));
        assert!(t.certificate.sigma2_density.unwrap() > 0.0);
        let t = descend_full(&QuadraticForm::diag(&[1, 1, 1, 8, 8]), &b(32), &bu).unwrap();
        assert_eq!(t.terminal_k, b(8));
        assert!(theta_accounting_ok(&t));
    }

    #[test]
    fn full_rejects_small_n() {
        let e = descend_full(&QuadraticForm::diag(&[1, 1, 7, 7]), &b(147), &Budget::default()).unwrap_err();
        assert!(matches!(e, QfError::Precondition(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// The block-coordinate DP agrees with a direct scan over (ℤ/128)³.
        #[test]
        fn dp_scan_matches_brute_force(d in proptest::collection::vec(1i64..17, 3), k in 0i64..128) {
            let q = QuadraticForm::diag(&d);
            let blocks = two_adic_blocks(&q, 8).unwrap();
            let dj = blocks.coord_coeffs();
            let mut any = false;
            let mut good = false;
            for code in 0..128i64 * 128 * 128 {
                let x = [code % 128, (code / 128) % 128, code / 16384];
                let v: i64 = (0..3).map(|i| d[i] * x[i] * x[i]).sum();
                if (v - k).rem_euclid(128) != 0 {
                    continue;
                }
                any = true;
                let g = (0..3).any(|j| {
                    dj[j].rem_euclid(8) != 0 && (0..3).map(|i| blocks.tinv[j][i] * x[i] as i128).sum::<i128>().rem_euclid(2) == 1
                });
                if g {
                    good = true;
                    break;
                }
            }
            let r = scan_mod_128(&blocks, &b(k));
            prop_assert_eq!(r.is_some(), any);
            if let Some((_, g)) = r {
                prop_assert_eq!(g, good);
            }
        }

        #[test]
        fn full_descent_invariants(d in proptest::collection::vec(prop_oneof![Just(1i64), Just(2), Just(3), Just(4), Just(7), Just(8), Just(9)], 5), k in 1i64..300) {
            let q = QuadraticForm::diag(&d);
            let bu = Budget::default();
            let kb = b(k);
            prop_assume!(decide_weak_lsc_all(&q, &kb, &bu).unwrap().weak());
            let t = descend_full(&q, &kb, &bu).unwrap();
            for s in &t.steps {
                s.verify().unwrap();
            }
            for w in t.steps.windows(2) {
                prop_assert!(w[1].k_before == w[0].k_after && w[1].k_after < w[0].k_after);
            }
            prop_assert!(theta_accounting_ok(&t));
            prop_assert!(t.terminal_form.is_positive_definite());
            let chk = verify_solubility_equivalence(&q, &kb, &t, &bu).unwrap();
            prop_assert!(chk.equivalent);
            // terminal pair: strong LSC at every odd prime of Δ′
            for p in arith::prime_divisors_big(t.terminal_form.det()).unwrap() {
                if p != 2 {
                    prop_assert!(decide_local(&t.terminal_form, &t.terminal_k, p, &bu).unwrap().strong);
                }
            }
        }
    }
}
