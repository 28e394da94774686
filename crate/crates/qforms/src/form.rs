//! Classically integral quadratic forms Q(x) = xᵀAx.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{QfError, Result};
use crate::matrix::{self, BMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormClass {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Degenerate,
}

impl FormClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormClass::PositiveDefinite => "positive-definite",
            FormClass::NegativeDefinite => "negative-definite",
            FormClass::Indefinite => "indefinite",
            FormClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticForm {
    n: usize,
    a: BMat,
    det: BigInt,
    height: BigInt,
    class: FormClass,
    small: Option<Vec<Vec<i64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenEnvelope {
    pub max_abs_upper: BigRational,
    /// `None` when the form is degenerate
    pub min_abs_lower: Option<BigRational>,
    pub numeric_eigs: Vec<f64>,
}

impl EigenEnvelope {
    pub fn degenerate(&self) -> bool {
        self.min_abs_lower.is_none()
    }
}

fn leading_minors(a: &BMat) -> Vec<BigInt> {
    (1..=a.len())
        .map(|k| matrix::det(&matrix::submatrix(a, &(0..k).collect::<Vec<_>>())))
        .collect()
}

impl QuadraticForm {
    pub fn new(a: BMat) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(QfError::precondition("dimension must be at least 1"));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(QfError::malformed(
                    format!("matrix[{i}]"),
                    format!("row has length {}, expected {n}", row.len()),
                ));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if a[i][j] != a[j][i] {
                    return Err(QfError::malformed(
                        format!("matrix[{i}][{j}]"),
                        format!("not symmetric: A[{i}][{j}]={} but A[{j}][{i}]={}", a[i][j], a[j][i]),
                    ));
                }
            }
        }
        let minors = leading_minors(&a);
        let det = minors[n - 1].clone();
        let class = if det.is_zero() {
            FormClass::Degenerate
        } else if minors.iter().all(|m| m.is_positive()) {
            FormClass::PositiveDefinite
        } else if minors
            .iter()
            .enumerate()
            .all(|(k, m)| if k % 2 == 0 { m.is_negative() } else { m.is_positive() })
        {
            FormClass::NegativeDefinite
        } else {
            FormClass::Indefinite
        };
        let height = matrix::max_abs(&a);
        let small = matrix::to_i64(&a);
        Ok(QuadraticForm {
            n,
            a,
            det,
            height,
            class,
            small,
        })
    }

    pub fn from_i64(rows: Vec<Vec<i64>>) -> Result<Self> {
        Self::new(matrix::from_i64(&rows))
    }

    pub fn diag(d: &[i64]) -> Self {
        let n = d.len();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { d[i] } else { 0 }).collect())
            .collect();
        Self::from_i64(rows).expect("diagonal forms are symmetric")
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn matrix(&self) -> &BMat {
        &self.a
    }
    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.a[i][j]
    }
    pub fn det(&self) -> &BigInt {
        &self.det
    }
    pub fn height(&self) -> &BigInt {
        &self.height
    }
    pub fn class(&self) -> FormClass {
        self.class
    }
    pub fn is_positive_definite(&self) -> bool {
        self.class == FormClass::PositiveDefinite
    }

    /// Matrix entries as i64, when they fit.
    pub fn small(&self) -> Result<&Vec<Vec<i64>>> {
        self.small
            .as_ref()
            .ok_or_else(|| QfError::precondition("form coefficients exceed 64-bit range"))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.a[i][j].is_zero()))
    }

    pub fn diagonal_i64(&self) -> Option<Vec<i64>> {
        if !self.is_diagonal() {
            return None;
        }
        let s = self.small.as_ref()?;
        Some((0..self.n).map(|i| s[i][i]).collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(QfError::precondition(format!(
                "vector has length {len}, form has dimension {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[BigInt]) -> Result<BigInt> {
        self.check_len(x.len())?;
        let ax = matrix::mat_vec(&self.a, x);
        Ok(x.iter().zip(&ax).map(|(u, v)| u * v).sum())
    }

    pub fn evaluate_i64(&self, x: &[i64]) -> Result<BigInt> {
        let xb: Vec<BigInt> = x.iter().map(|&v| BigInt::from(v)).collect();
        self.evaluate(&xb)
    }

    /// Q(x) in 128-bit arithmetic; `None` on overflow.
    pub fn eval_i128(&self, x: &[i64]) -> Option<i128> {
        let s = self.small.as_ref()?;
        let mut total: i128 = 0;
        for i in 0..self.n {
            if x[i] == 0 {
                continue;
            }
            let mut row: i128 = 0;
            for j in 0..self.n {
                row = row.checked_add((s[i][j] as i128).checked_mul(x[j] as i128)?)?;
            }
            total = total.checked_add(row.checked_mul(x[i] as i128)?)?;
        }
        Some(total)
    }

    /// Ax (the gradient of Q is 2Ax).
    pub fn gradient(&self, x: &[BigInt]) -> Result<Vec<BigInt>> {
        self.check_len(x.len())?;
        Ok(matrix::mat_vec(&self.a, x))
    }

    pub fn gradient_i64(&self, x: &[i64]) -> Result<Vec<BigInt>> {
        let xb: Vec<BigInt> = x.iter().map(|&v| BigInt::from(v)).collect();
        self.gradient(&xb)
    }

    /// The form with matrix UᵀAU.
    pub fn transform(&self, u: &BMat) -> Result<Self> {
        if u.len() != self.n || u.iter().any(|r| r.len() != self.n) {
            return Err(QfError::precondition("transformation has wrong shape"));
        }
        let ut = matrix::transpose(u);
        Self::new(matrix::mul(&matrix::mul(&ut, &self.a), u))
    }

    /// The form with matrix A/d; fails unless d divides every entry.
    pub fn divide(&self, d: &BigInt) -> Result<Self> {
        let mut out = self.a.clone();
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                if !(&*v % d).is_zero() {
                    return Err(QfError::precondition(format!("{d} does not divide the form")));
                }
                *v = &*v / d;
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, c: i64) -> Result<Self> {
        let c = BigInt::from(c);
        Self::new(
            self.a
                .iter()
                .map(|r| r.iter().map(|v| v * &c).collect())
                .collect(),
        )
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.a[i][j].to_f64().unwrap_or(f64::NAN))
    }

    /// Numeric eigenvalues in descending order (uncertified).
    pub fn numeric_eigenvalues(&self) -> Vec<f64> {
        let e = self.to_f64().symmetric_eigen();
        let mut v: Vec<f64> = e.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    }

    pub fn eigen_envelope(&self) -> EigenEnvelope {
        let nh = BigInt::from(self.n) * &self.height;
        let max_abs_upper = BigRational::from_integer(nh.clone());
        let min_abs_lower = if self.det.is_zero() {
            None
        } else {
            let denom = num_traits::pow(nh, self.n - 1);
            Some(BigRational::new(self.det.abs(), denom))
        };
        EigenEnvelope {
            max_abs_upper,
            min_abs_lower,
            numeric_eigs: self.numeric_eigenvalues(),
        }
    }

    /// All principal minors except the full determinant, keyed by index set.
    pub fn proper_principal_minors(&self) -> Vec<(Vec<usize>, BigInt)> {
        let n = self.n;
        let mut out = Vec::new();
        for mask in 1u32..(1u32 << n) - 1 {
            let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let d = matrix::det(&matrix::submatrix(&self.a, &idx));
            out.push((idx, d));
        }
        out
    }

    /// Necessary condition for setting n-5 variables to zero and keeping an
    /// indefinite quinary form: proper principal minors of both signs.
    pub fn minor_sign_condition(&self) -> bool {
        let m = self.proper_principal_minors();
        m.iter().any(|(_, d)| d.is_positive()) && m.iter().any(|(_, d)| d.is_negative())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .a
            .iter()
            .map(|r| serde_json::Value::Array(r.iter().map(big_to_json).collect()))
            .collect();
        serde_json::json!({ "n": self.n, "matrix": rows })
    }

    /// Parses `{"n": int, "matrix": [[int,...],...]}`; integers may be JSON
    /// numbers or decimal strings.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| {
            QfError::malformed(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| QfError::malformed("$", "expected a JSON object"))?;
        let n = obj
            .get("n")
            .ok_or_else(|| QfError::malformed("$.n", "missing field"))?
            .as_u64()
            .ok_or_else(|| QfError::malformed("$.n", "expected a non-negative integer"))?
            as usize;
        if n == 0 {
            return Err(QfError::malformed("$.n", "dimension must be at least 1"));
        }
        let rows = obj
            .get("matrix")
            .ok_or_else(|| QfError::malformed("$.matrix", "missing field"))?
            .as_array()
            .ok_or_else(|| QfError::malformed("$.matrix", "expected an array of rows"))?;
        if rows.len() != n {
            return Err(QfError::malformed(
                "$.matrix",
                format!("has {} rows, expected {n}", rows.len()),
            ));
        }
        let mut a = Vec::with_capacity(n);
        for (i, r) in rows.iter().enumerate() {
            let r = r
                .as_array()
                .ok_or_else(|| QfError::malformed(format!("$.matrix[{i}]"), "expected an array"))?;
            if r.len() != n {
                return Err(QfError::malformed(
                    format!("$.matrix[{i}]"),
                    format!("has {} entries, expected {n}", r.len()),
                ));
            }
            let mut row = Vec::with_capacity(n);
            for (j, e) in r.iter().enumerate() {
                row.push(json_to_big(e).ok_or_else(|| {
                    QfError::malformed(format!("$.matrix[{i}][{j}]"), "expected an integer")
                })?);
            }
            a.push(row);
        }
        Self::new(a).map_err(|e| match e {
            QfError::Malformed { location, message } => QfError::Malformed {
                location: format!("$.{}", location),
                message,
            },
            other => other,
        })
    }
}

impl Serialize for QuadraticForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

pub fn big_to_json(v: &BigInt) -> serde_json::Value {
    match v.to_i64() {
        Some(x) => serde_json::Value::from(x),
        None => serde_json::Value::from(v.to_string()),
    }
}

/// Serializes an integer as a JSON number when it fits in i64, else a string.
pub fn ser_big<S: serde::Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&big_to_json(v), s)
}

pub fn ser_big_vec<S: serde::Serializer>(v: &[BigInt], s: S) -> std::result::Result<S::Ok, S::Error> {
    let vals: Vec<serde_json::Value> = v.iter().map(big_to_json).collect();
    serde::Serialize::serialize(&vals, s)
}

fn json_to_big(v: &serde_json::Value) -> Option<BigInt> {
    if let Some(x) = v.as_i64() {
        return Some(BigInt::from(x));
    }
    if let Some(x) = v.as_u64() {
        return Some(BigInt::from(x));
    }
    if let Some(s) = v.as_str() {
        return s.trim().parse::<BigInt>().ok();
    }
    None
}

/// Serializes a rational as "p/q" (or "p" when integral).
pub fn ser_rat<S: serde::Serializer>(v: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rat_to_string(v))
}

pub fn ser_rat_opt<S: serde::Serializer>(v: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_str(&rat_to_string(r)),
        None => s.serialize_none(),
    }
}

pub fn rat_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    // correctly rounded even when numerator and denominator overflow f64
    r.to_f64().unwrap_or(f64::NAN)
}
