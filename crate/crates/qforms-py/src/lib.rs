//! Python bindings. Forms are passed as square lists of integers; results
//! come back as plain dicts, lists and ints.

use num_bigint::BigInt;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use qforms::{Budget, QfError, QuadraticForm};

pyo3::create_exception!(qforms_py, BudgetExceeded, PyRuntimeError);

fn err(e: QfError) -> PyErr {
    match e {
        QfError::Precondition(_) | QfError::Malformed { .. } => PyValueError::new_err(e.to_string()),
        QfError::Budget { .. } => BudgetExceeded::new_err(e.to_string()),
        QfError::Internal(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn form(matrix: Vec<Vec<BigInt>>) -> PyResult<QuadraticForm> {
    QuadraticForm::new(matrix).map_err(err)
}

fn budget() -> PyResult<Budget> {
    Budget::from_env().map_err(err)
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn ser<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let j = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &j)
}

/// Discriminant, height and signature class.
#[pyfunction]
fn analyze<'py>(py: Python<'py>, matrix: Vec<Vec<BigInt>>) -> PyResult<Bound<'py, PyAny>> {
    let q = form(matrix)?;
    let d = PyDict::new(py);
    d.set_item("n", q.n())?;
    d.set_item("discriminant", q.det().clone())?;
    d.set_item("height", q.height().clone())?;
    d.set_item("class", q.class().as_str())?;
    Ok(d.into_any())
}

/// (weak, strong) local solubility of Q(x) = k at the prime p.
#[pyfunction]
fn decide_local(matrix: Vec<Vec<BigInt>>, k: BigInt, p: u64) -> PyResult<(bool, bool)> {
    let v = qforms::localsolve::decide_local(&form(matrix)?, &k, p, &budget()?).map_err(err)?;
    Ok((v.weak, v.strong))
}

/// Weak local solubility at every prime.
#[pyfunction]
fn weak_lsc(matrix: Vec<Vec<BigInt>>, k: BigInt) -> PyResult<bool> {
    Ok(qforms::localsolve::decide_weak_lsc_all(&form(matrix)?, &k, &budget()?).map_err(err)?.weak())
}

/// (N(p^t), N*(p^t)).
#[pyfunction]
fn count_congruence(matrix: Vec<Vec<BigInt>>, k: BigInt, p: u64, t: u32) -> PyResult<(BigInt, BigInt)> {
    let c = qforms::localsolve::count_congruence(&form(matrix)?, &k, p, t, &budget()?).map_err(err)?;
    Ok((c.n_count.into(), c.nstar.into()))
}

/// σ_p as a dict with exact rational bounds given as strings.
#[pyfunction]
#[pyo3(signature = (matrix, k, p, tmax=24))]
fn local_density<'py>(py: Python<'py>, matrix: Vec<Vec<BigInt>>, k: BigInt, p: u64, tmax: u32) -> PyResult<Bound<'py, PyAny>> {
    let d = qforms::singular::local_density(&form(matrix)?, &k, p, tmax, &budget()?).map_err(err)?;
    ser(py, &d)
}

/// Certified (lower, upper) for the singular series.
#[pyfunction]
#[pyo3(signature = (matrix, k, pcut=1000))]
fn singular_series(matrix: Vec<Vec<BigInt>>, k: BigInt, pcut: u64) -> PyResult<(f64, f64)> {
    let s = qforms::singular::singular_series(&form(matrix)?, &k, pcut, &budget()?).map_err(err)?;
    Ok((s.lower_f64(), s.upper_f64()))
}

/// #{z ≠ 0 mod p : Σ a_i z_i² ≡ k}.
#[pyfunction]
fn closed_form_mr(coeffs: Vec<i64>, k: i64, p: u64) -> PyResult<BigInt> {
    Ok(qforms::expsums::closed_form_mr(&coeffs, k, p).map_err(err)?.value)
}

/// S_q(c) as a complex number.
#[pyfunction]
fn eval_sq(matrix: Vec<Vec<BigInt>>, k: BigInt, q: u64, c: Vec<i64>) -> PyResult<(f64, f64)> {
    let s = qforms::expsums::eval_sq(&form(matrix)?, &k, q, &c, &budget()?).map_err(err)?;
    Ok((s.re, s.im))
}

/// Exceptional integers up to kmax of a positive definite form.
#[pyfunction]
fn scan_exceptions<'py>(py: Python<'py>, matrix: Vec<Vec<BigInt>>, kmax: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = qforms::represent::scan_exceptions(&form(matrix)?, kmax, &budget()?).map_err(err)?;
    ser(py, &r)
}

/// Least zeros of max-norm at most `bound`.
#[pyfunction]
fn search_zero<'py>(py: Python<'py>, matrix: Vec<Vec<BigInt>>, bound: i64) -> PyResult<Bound<'py, PyAny>> {
    let r = qforms::zeros::search_zero(&form(matrix)?, bound, &budget()?).map_err(err)?;
    ser(py, &r)
}

/// The Kneser form's matrix and its zero (1, c−1, …).
#[pyfunction]
fn kneser(c: i64, n: usize) -> PyResult<(Vec<Vec<BigInt>>, Vec<BigInt>)> {
    let q = qforms::zeros::kneser_form(c, n).map_err(err)?;
    Ok((q.matrix().clone(), qforms::zeros::kneser_zero(c, n)))
}

/// Full descent trace.
#[pyfunction]
fn descend<'py>(py: Python<'py>, matrix: Vec<Vec<BigInt>>, k: BigInt) -> PyResult<Bound<'py, PyAny>> {
    let t = qforms::descent::descend_full(&form(matrix)?, &k, &budget()?).map_err(err)?;
    ser(py, &t)
}

#[pyfunction]
fn phi(n: usize) -> f64 {
    qforms::represent::phi(n)
}

#[pymodule]
fn qforms_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BudgetExceeded", m.py().get_type::<BudgetExceeded>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(decide_local, m)?)?;
    m.add_function(wrap_pyfunction!(weak_lsc, m)?)?;
    m.add_function(wrap_pyfunction!(count_congruence, m)?)?;
    m.add_function(wrap_pyfunction!(local_density, m)?)?;
    m.add_function(wrap_pyfunction!(singular_series, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_mr, m)?)?;
    m.add_function(wrap_pyfunction!(eval_sq, m)?)?;
    m.add_function(wrap_pyfunction!(scan_exceptions, m)?)?;
    m.add_function(wrap_pyfunction!(search_zero, m)?)?;
    m.add_function(wrap_pyfunction!(kneser, m)?)?;
    m.add_function(wrap_pyfunction!(descend, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    Ok(())
}
