//! Locally soluble but globally unrepresented integers of positive definite forms.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Budget, QfError, Result};
use crate::form::QuadraticForm;
use crate::lattice::find_representation;
use crate::localsolve::decide_weak_lsc_all;

#[derive(Debug, Clone, Serialize)]
pub struct PrimeEvidence {
    pub p: u64,
    pub weak: bool,
    pub strong: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceptionEvidence {
    pub k: u64,
    pub primes: Vec<PrimeEvidence>,
    /// 𝒮(k; Q) = ∅ by exhaustive enumeration
    pub enumeration_empty: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceptionalReport {
    pub form: serde_json::Value,
    pub k_max: u64,
    pub weak_exceptions: Vec<u64>,
    pub strong_exceptions: Vec<u64>,
    pub kappa_observed: u64,
    pub kappa_star_observed: u64,
    pub represented: u64,
    /// k that are neither represented nor locally soluble
    pub locally_obstructed: u64,
    pub evidence: Vec<ExceptionEvidence>,
    pub automatic_certificate: String,
}

/// Lower bound p^{n-1} - 1 - p^{(n+1)/2} for the number of nonzero solutions
/// mod p when p ∤ 2Δk, checked at p = 3 (it increases with p).
fn automatic_primes_bound(n: usize) -> bool {
    let p = 3f64;
    p.powi(n as i32 - 1) - 1.0 - p.powf((n as f64 + 1.0) / 2.0) > 0.0
}

enum Outcome {
    Represented,
    Obstructed,
    Exception(ExceptionEvidence, bool),
}

fn classify(q: &QuadraticForm, k: u64, budget: &Budget) -> Result<Outcome> {
    let kb = BigInt::from(k);
    if find_representation(q, &kb, budget)?.is_some() {
        return Ok(Outcome::Represented);
    }
    let rep = decide_weak_lsc_all(q, &kb, budget)?;
    if !rep.weak() {
        return Ok(Outcome::Obstructed);
    }
    let strong = rep.strong();
    let primes = rep
        .verdicts
        .iter()
        .map(|v| PrimeEvidence { p: v.p, weak: v.weak, strong: v.strong })
        .collect();
    Ok(Outcome::Exception(
        ExceptionEvidence { k, primes, enumeration_empty: true },
        strong,
    ))
}

const CHUNK: u64 = 512;

/// Scans k = 1..=K and sorts each k into represented / obstructed / exceptional.
pub fn scan_exceptions(q: &QuadraticForm, k_max: u64, budget: &Budget) -> Result<ExceptionalReport> {
    if !q.is_positive_definite() {
        return Err(QfError::precondition("exceptional scan needs a positive definite form"));
    }
    let n = q.n();
    if n < 3 {
        return Err(QfError::precondition("exceptional scan needs n >= 3"));
    }
    if n >= 4 && !automatic_primes_bound(n) {
        return Err(QfError::internal("automatic-primes inequality failed"));
    }
    let mut rep = ExceptionalReport {
        form: q.to_json(),
        k_max,
        weak_exceptions: vec![],
        strong_exceptions: vec![],
        kappa_observed: 0,
        kappa_star_observed: 0,
        represented: 0,
        locally_obstructed: 0,
        evidence: vec![],
        automatic_certificate: format!(
            "p not dividing 2*det*k: p^(n-1) - 1 - p^((n+1)/2) > 0 for p >= 3, n = {n}, so a nonsingular solution mod p exists and lifts"
        ),
    };
    let mut start = 1u64;
    while start <= k_max {
        let end = (start + CHUNK - 1).min(k_max);
        let outcomes: Vec<Result<Outcome>> = (start..=end).into_par_iter().map(|k| classify(q, k, budget)).collect();
        for (k, o) in (start..=end).zip(outcomes) {
            let o = o.map_err(|e| match e {
                QfError::Budget { what, .. } => QfError::Budget {
                    what,
                    progress: Some(format!("fully scanned k <= {}", k - 1)),
                },
                other => other,
            })?;
            match o {
                Outcome::Represented => rep.represented += 1,
                Outcome::Obstructed => rep.locally_obstructed += 1,
                Outcome::Exception(ev, strong) => {
                    rep.weak_exceptions.push(k);
                    rep.kappa_observed = k;
                    if strong {
                        rep.strong_exceptions.push(k);
                        rep.kappa_star_observed = k;
                    }
                    rep.evidence.push(ev);
                }
            }
        }
        start = end + 1;
    }
    Ok(rep)
}

/// Whether k alone is exceptional (weak) and, if so, strong-exceptional.
pub fn is_exception(q: &QuadraticForm, k: u64, budget: &Budget) -> Result<Option<ExceptionEvidence>> {
    match classify(q, k, budget)? {
        Outcome::Exception(ev, _) => Ok(Some(ev)),
        _ => Ok(None),
    }
}

/// φ(n) = 4(n-2)(3n²-7n-3) / ((2n³-9n²+2n+12)(n-3)).
pub fn phi(n: usize) -> f64 {
    let n = n as f64;
    4.0 * (n - 2.0) * (3.0 * n * n - 7.0 * n - 3.0) / ((2.0 * n.powi(3) - 9.0 * n * n + 2.0 * n + 12.0) * (n - 3.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeEntry {
    pub name: &'static str,
    pub applies_to: &'static str,
    pub exponent_text: String,
    pub envelope: f64,
    pub observed: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub n: usize,
    pub phi: Option<f64>,
    pub entries: Vec<EnvelopeEntry>,
    pub note: &'static str,
}

/// Observed κ against the constant-free envelopes of the known upper bounds.
pub fn kappa_envelope_report(q: &QuadraticForm, report: &ExceptionalReport) -> Result<EnvelopeReport> {
    let n = q.n();
    let d = q.det().abs().to_f64().unwrap_or(f64::INFINITY);
    let h = q.height().to_f64().unwrap_or(f64::INFINITY);
    let nf = n as f64;
    let mut entries = vec![];
    let mut push = |name, applies_to, exponent_text: String, envelope: f64, observed: u64| {
        entries.push(EnvelopeEntry {
            name,
            applies_to,
            exponent_text,
            envelope,
            observed,
            ratio: observed as f64 / envelope,
        });
    };
    let kw = report.kappa_observed;
    let ks = report.kappa_star_observed;
    if n >= 5 {
        if n <= 9 {
            push("hybrid", "kappa", format!("|D|^phi(n), phi = {:.6}", phi(n)), d.powf(phi(n)), kw);
            let e = 5.0 / (nf - 4.0) + 1.0 / nf;
            push("watson", "kappa", format!("|D|^(5/(n-4)+1/n) = |D|^{e:.6}"), d.powf(e), kw);
        } else {
            push("hybrid", "kappa", "|D|".into(), d, kw);
            push("watson", "kappa", "|D|".into(), d, kw);
        }
        let e = (nf - 2.0) / (nf - 4.0) + 2.0 / nf;
        push("hsia-icaza", "kappa", format!("|D|^((n-2)/(n-4)+2/n) = |D|^{e:.6}"), d.powf(e), kw);
        let env = (d.powf((nf - 2.0) / (nf - 4.0)) * h.powf(nf)).powf(2.0 / (nf - 3.0));
        push("height", "kappa", "(|D|^((n-2)/(n-4)) H^n)^(2/(n-3))".into(), env, kw);
    }
    if n >= 4 {
        let env = (d * h.powf(nf)).powf(2.0 / (nf - 3.0));
        push("strong", "kappa-star", "(|D| H^n)^(2/(n-3))".into(), env, ks);
    }
    Ok(EnvelopeReport {
        n,
        phi: (n >= 5).then(|| phi(n)),
        entries,
        note: "constant-free (implied constant unknown)",
    })
}

pub fn k_from_big(k: &BigInt) -> Result<u64> {
    if k.is_negative() {
        return Err(QfError::precondition("k must be non-negative"));
    }
    k.to_u64().ok_or_else(|| QfError::precondition("k too large for a scan"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::reduce_form;
    use proptest::prelude::*;

    #[test]
    fn phi_table() {
        let table = [(5, 4.723), (6, 2.545), (7, 1.752), (8, 1.341), (9, 1.088)];
        for (n, v) in table {
            // truncated to three decimals in the table
            assert_eq!((phi(n) * 1000.0).floor() / 1000.0, v, "n={n}");
        }
    }

    #[test]
    fn watson_forms() {
        let b = Budget::default();
        let r = scan_exceptions(&QuadraticForm::diag(&[2, 2, 2, 2, 5]), 100, &b).unwrap();
        assert!(r.weak_exceptions.contains(&3));
        let r = scan_exceptions(&QuadraticForm::diag(&[1, 1, 7, 7]), 200, &b).unwrap();
        assert!(r.weak_exceptions.contains(&147));
        for k in &r.strong_exceptions {
            assert!(r.weak_exceptions.contains(k));
        }
    }

    #[test]
    fn five_squares_small() {
        let r = scan_exceptions(&QuadraticForm::identity(5), 500, &Budget::default()).unwrap();
        assert!(r.weak_exceptions.is_empty());
        assert_eq!(r.represented, 500);
    }

    #[test]
    fn trivial_discriminant_envelopes() {
        let q = QuadraticForm::identity(5);
        let r = scan_exceptions(&q, 20, &Budget::default()).unwrap();
        let e = kappa_envelope_report(&q, &r).unwrap();
        for x in &e.entries {
            assert_eq!(x.envelope, 1.0);
            assert_eq!(x.ratio, x.observed as f64);
        }
    }

    /// Dumb box search for small diagonal forms.
    fn box_represents(d: &[i64], k: i64) -> bool {
        let r = (k as f64).sqrt() as i64 + 1;
        let w = 2 * r + 1;
        (0..w.pow(d.len() as u32)).any(|mut c| {
            let mut s = 0;
            for &di in d {
                let x = c % w - r;
                c /= w;
                s += di * x * x;
            }
            s == k
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn represented_never_listed(d in proptest::collection::vec(1i64..6, 4)) {
            let q = QuadraticForm::diag(&d);
            let r = scan_exceptions(&q, 100, &Budget::default()).unwrap();
            for k in 1..=100i64 {
                if box_represents(&d, k) {
                    prop_assert!(!r.weak_exceptions.contains(&(k as u64)));
                } else {
                    prop_assert!(r.evidence.iter().all(|e| e.k != k as u64) || r.weak_exceptions.contains(&(k as u64)));
                }
            }
            prop_assert_eq!(r.represented, (1..=100).filter(|&k| box_represents(&d, k)).count() as u64);
        }

        #[test]
        fn unimodular_invariance(c in proptest::collection::vec(-2i64..3, 3), d in proptest::collection::vec(1i64..4, 4)) {
            let l = [[1, 0, 0, 0], [c[0], 1, 0, 0], [0, c[1], 1, 0], [c[2], 0, 0, 1]];
            let a: Vec<Vec<i64>> = (0..4).map(|i| (0..4).map(|j| (0..4).map(|r| l[r][i] * d[r] * l[r][j]).sum()).collect()).collect();
            let q = QuadraticForm::from_i64(a).unwrap();
            let b = Budget::default();
            let red = reduce_form(&q, &b).unwrap();
            let x = scan_exceptions(&q, 60, &b).unwrap();
            let y = scan_exceptions(&red.form, 60, &b).unwrap();
            prop_assert_eq!(x.weak_exceptions, y.weak_exceptions);
            prop_assert_eq!(x.strong_exceptions, y.strong_exceptions);
        }
    }
}
