use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use serde_json::{json, Value};

use qforms::deltamethod::{main_term_compare, DeltaConfig, Schedule};
use qforms::descent::{descend_full, verify_solubility_equivalence};
use qforms::expsums::{envelope_general, envelope_squarefree, eval_sq};
use qforms::form::rat_to_string;
use qforms::lattice::{min_max_check, reduce_form};
use qforms::localsolve::{count_congruence, decide_local, decide_weak_lsc_all, LocalVerdict};
use qforms::represent::{k_from_big, scan_exceptions, kappa_envelope_report};
use qforms::singular::{local_density, singular_series};
use qforms::zeros::{
    diagonal_five_variable_zero, kneser_form, kneser_zero, lambda_envelope_report, search_zero,
};
use qforms::{arith, Budget, FormClass, QfError, QuadraticForm, Result};

const SCHEMA: &str = "qforms-report/1";
const ENVELOPE_LABEL: &str = "constant-free (implied constant unknown)";

#[derive(Parser, Debug)]
#[command(name = "qforms", version, about = "Exact tools for integral quadratic forms")]
struct Cli {
    /// print the JSON report instead of a text summary
    #[arg(long, global = true)]
    json: bool,
    /// cap on worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct FormArg {
    /// JSON file {"n": .., "matrix": [[..]]}
    #[arg(long)]
    form: Option<PathBuf>,
    /// diagonal form given inline, e.g. 1,1,7,7
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    diag: Option<Vec<i64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// discriminant, height, signature class and reduction
    Analyze {
        #[command(flatten)]
        form: FormArg,
    },
    /// weak and strong local solubility of Q(x) = k
    Locsolve {
        #[command(flatten)]
        form: FormArg,
        #[arg(long, allow_hyphen_values = true)]
        k: BigInt,
        /// a single prime; all p | 2Δk otherwise
        #[arg(long)]
        p: Option<u64>,
        /// also count solutions mod p^t for t = 1..=tmax
        #[arg(long)]
        tmax: Option<u32>,
    },
    /// local densities and the singular series
    Density {
        #[command(flatten)]
        form: FormArg,
        #[arg(long, allow_hyphen_values = true)]
        k: BigInt,
        #[arg(long)]
        p: Option<u64>,
        #[arg(long, default_value_t = 24)]
        tmax: u32,
        #[arg(long, default_value_t = 1000)]
        pcut: u64,
    },
    /// the exponential sum S_q(c)
    Sums {
        #[command(flatten)]
        form: FormArg,
        #[arg(long, allow_hyphen_values = true)]
        k: BigInt,
        #[arg(long)]
        q: u64,
        /// comma separated; zero vector by default
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        c: Option<Vec<i64>>,
    },
    /// small zeros of an indefinite form
    Zeros {
        #[command(flatten)]
        form: FormArg,
        #[arg(long)]
        bound: i64,
    },
    /// the form X1^2 - sum (X_i - c X_{i-1})^2 and its zero
    Kneser {
        #[arg(long)]
        c: i64,
        #[arg(long)]
        n: usize,
        /// certify minimality by exhaustive search up to this max-norm
        #[arg(long)]
        search: Option<i64>,
    },
    /// locally soluble integers missed by a positive definite form
    Exceptional {
        #[command(flatten)]
        form: FormArg,
        #[arg(long)]
        kmax: u64,
    },
    /// descent until strong local solubility
    Descend {
        #[command(flatten)]
        form: FormArg,
        #[arg(long, allow_hyphen_values = true)]
        k: BigInt,
        /// compare solubility before and after by enumeration
        #[arg(long)]
        verify: bool,
    },
    /// weighted counts against the circle-method main term
    Delta {
        #[command(flatten)]
        form: FormArg,
        /// schedule of targets k (definite forms)
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u64>>,
        /// schedule of box sizes B at k = 0
        #[arg(long, value_delimiter = ',')]
        b: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        pcut: u64,
    },
}

fn load_form(f: &FormArg) -> Result<(QuadraticForm, Value)> {
    match (&f.form, &f.diag) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| QfError::malformed(path.display().to_string(), e.to_string()))?;
            let q = QuadraticForm::from_json_str(&text).map_err(|e| match e {
                QfError::Malformed { location, message } => QfError::Malformed {
                    location: format!("{}: {location}", path.display()),
                    message,
                },
                other => other,
            })?;
            Ok((q, json!({ "form_file": path.display().to_string() })))
        }
        (None, Some(d)) if !d.is_empty() => Ok((QuadraticForm::diag(d), json!({ "diag": d }))),
        _ => Err(QfError::precondition("give exactly one of --form or --diag")),
    }
}

fn verdict_json(v: &LocalVerdict) -> Value {
    let strs = |x: &[BigInt]| x.iter().map(|b| b.to_string()).collect::<Vec<_>>();
    json!({
        "p": v.p,
        "weak": v.weak,
        "strong": v.strong,
        "witness": v.witness.as_deref().map(strs),
        "weak_witness": v.weak_witness.as_ref().map(|(x, j)| json!({ "x": strs(x), "modulus_exponent": j })),
        "cutoff_used": v.cutoff_used,
        "status": "exact",
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| QfError::internal(e.to_string()))
}

/// Runs one command and returns (config, result, text summary).
fn execute(cmd: &Command, budget: &Budget) -> Result<(Value, Value, Vec<String>)> {
    let mut text = vec![];
    let (config, result) = match cmd {
        Command::Analyze { form } => {
            let (q, src) = load_form(form)?;
            let env = q.eigen_envelope();
            text.push(format!("n = {}", q.n()));
            text.push(format!("Δ = {}", q.det()));
            text.push(format!("H = {}", q.height()));
            text.push(format!("class: {}", q.class().as_str()));
            let mut res = json!({
                "form": q.to_json(),
                "n": q.n(),
                "discriminant": q.det().to_string(),
                "height": q.height().to_string(),
                "class": q.class().as_str(),
                "eigenvalue_bounds": {
                    "max_abs_upper": rat_to_string(&env.max_abs_upper),
                    "min_abs_lower": env.min_abs_lower.as_ref().map(rat_to_string),
                    "status": "exact",
                    "numeric_eigenvalues": env.numeric_eigs,
                    "numeric_status": "estimate",
                },
            });
            if q.class() == FormClass::PositiveDefinite {
                let red = reduce_form(&q, budget)?;
                let mm = min_max_check(&red)?;
                if let Some(m) = &red.min_value {
                    text.push(format!("minimum = {m}"));
                }
                res["reduction"] = to_value(&red)?;
                res["min_max"] = to_value(&mm)?;
            }
            (json!({ "command": "analyze", "form": src }), res)
        }
        Command::Locsolve { form, k, p, tmax } => {
            let (q, src) = load_form(form)?;
            let verdicts: Vec<LocalVerdict> = match p {
                Some(p) => vec![decide_local(&q, k, *p, budget)?],
                None => decide_weak_lsc_all(&q, k, budget)?.verdicts,
            };
            for v in &verdicts {
                text.push(format!("p = {}: weak {}, strong {}", v.p, v.weak, v.strong));
            }
            let mut counts = vec![];
            if let Some(tmax) = tmax {
                for v in &verdicts {
                    for t in 1..=*tmax {
                        let c = count_congruence(&q, k, v.p, t, budget)?;
                        text.push(format!("N({}^{t}) = {}, N*({}^{t}) = {}", v.p, c.n_count, v.p, c.nstar));
                        counts.push(json!({
                            "p": c.p,
                            "t": c.t,
                            "count": c.n_count.to_string(),
                            "nonsingular_count": c.nstar.to_string(),
                            "strategy": to_value(&c.strategy)?,
                            "status": "exact",
                        }));
                    }
                }
            }
            let weak = verdicts.iter().all(|v| v.weak);
            let strong = verdicts.iter().all(|v| v.strong);
            text.push(format!("overall: weak {weak}, strong {strong}"));
            (
                json!({ "command": "locsolve", "form": src, "k": k.to_string(), "p": p, "tmax": tmax }),
                json!({
                    "form": q.to_json(),
                    "verdicts": verdicts.iter().map(verdict_json).collect::<Vec<_>>(),
                    "weak": weak,
                    "strong": strong,
                    "counts": counts,
                }),
            )
        }
        Command::Density { form, k, p, tmax, pcut } => {
            let (q, src) = load_form(form)?;
            let res = match p {
                Some(p) => {
                    let d = local_density(&q, k, *p, *tmax, budget)?;
                    text.push(format!(
                        "σ_{p} in [{}, {}] (certified: {})",
                        rat_to_string(&d.lower),
                        rat_to_string(&d.upper),
                        d.certified
                    ));
                    json!({ "form": q.to_json(), "density": to_value(&d)?, "status": if d.certified { "exact" } else { "interval" } })
                }
                None => {
                    let s = singular_series(&q, k, *pcut, budget)?;
                    text.push(format!("singular series in [{:.9}, {:.9}]", s.lower_f64(), s.upper_f64()));
                    json!({ "form": q.to_json(), "singular_series": to_value(&s)?, "status": "interval" })
                }
            };
            (
                json!({ "command": "density", "form": src, "k": k.to_string(), "p": p, "tmax": tmax, "pcut": pcut }),
                res,
            )
        }
        Command::Sums { form, k, q: modulus, c } => {
            let (q, src) = load_form(form)?;
            let c = c.clone().unwrap_or_else(|| vec![0; q.n()]);
            if c.len() != q.n() {
                return Err(QfError::precondition(format!("--c needs {} entries", q.n())));
            }
            let s = eval_sq(&q, k, *modulus, &c, budget)?;
            let general = envelope_general(*modulus, q.n(), q.det());
            let squarefree = arith::is_squarefree(*modulus).then(|| envelope_squarefree(*modulus, q.n(), q.det(), k));
            text.push(format!("S_{modulus}(c) = {:.9} + {:.9}i (± {:.1e})", s.re, s.im, s.abs_err));
            text.push(format!("|S| = {:.6}, envelope {general:.6}", s.abs()));
            (
                json!({ "command": "sums", "form": src, "k": k.to_string(), "q": modulus, "c": c }),
                json!({
                    "form": q.to_json(),
                    "value": to_value(&s)?,
                    "abs": s.abs(),
                    "status": "estimate±abs_err",
                    "envelope_general": general,
                    "envelope_squarefree": squarefree,
                    "envelope_status": "exact bound",
                }),
            )
        }
        Command::Zeros { form, bound } => {
            let (q, src) = load_form(form)?;
            let r = search_zero(&q, *bound, budget)?;
            text.push(format!("least zero: {:?}", r.found));
            text.push(format!("least zero with x1 != 0: {:?}", r.found_first_nonzero));
            let lam = lambda_envelope_report(&q, &r)?;
            let five = match q.diagonal_i64() {
                Some(_) if q.n() >= 5 => Some(to_value(&diagonal_five_variable_zero(&q, budget)?)?),
                _ => None,
            };
            (
                json!({ "command": "zeros", "form": src, "bound": bound }),
                json!({
                    "form": q.to_json(),
                    "search": to_value(&r)?,
                    "status": if r.exhaustive { "exact" } else { "partial" },
                    "envelopes": to_value(&lam)?,
                    "envelope_label": ENVELOPE_LABEL,
                    "five_variable_zero": five,
                }),
            )
        }
        Command::Kneser { c, n, search } => {
            let q = kneser_form(*c, *n)?;
            let a = kneser_zero(*c, *n);
            let value = q.evaluate(&a)?;
            let an = a.last().cloned().unwrap_or_default();
            // a_n > ½ H^{(n−1)/2}  ⇔  4 a_n² > H^{n−1}
            let exceeds = BigInt::from(4) * &an * &an > num_traits_pow(q.height(), n - 1);
            let a_str: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            text.push(format!("zero a = ({})", a_str.join(",")));
            text.push(format!("Q0(a) = {value}, H = {}, a_n > H^((n-1)/2)/2: {exceeds}", q.height()));
            let mut res = json!({
                "form": q.to_json(),
                "height": q.height().to_string(),
                "zero": a_str,
                "value_at_zero": value.to_string(),
                "last_exceeds_half_power": exceeds,
                "status": "exact",
            });
            if let Some(b) = search {
                let r = search_zero(&q, *b, budget)?;
                if let Some(x) = &r.found_first_nonzero {
                    let s: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                    text.push(format!("minimal zero with x1 != 0 up to {b}: ({})", s.join(",")));
                } else {
                    text.push(format!("no zero with x1 != 0 up to {b}"));
                }
                res["search"] = to_value(&r)?;
            }
            (json!({ "command": "kneser", "c": c, "n": n, "search": search }), res)
        }
        Command::Exceptional { form, kmax } => {
            let (q, src) = load_form(form)?;
            let r = scan_exceptions(&q, *kmax, budget)?;
            let env = kappa_envelope_report(&q, &r)?;
            text.push(format!("weak exceptions: {:?}", r.weak_exceptions));
            text.push(format!("strong exceptions: {:?}", r.strong_exceptions));
            (
                json!({ "command": "exceptional", "form": src, "kmax": kmax }),
                json!({ "report": to_value(&r)?, "status": "exact", "envelopes": to_value(&env)?, "envelope_label": ENVELOPE_LABEL }),
            )
        }
        Command::Descend { form, k, verify } => {
            let (q, src) = load_form(form)?;
            let t = descend_full(&q, k, budget)?;
            for s in &t.steps {
                text.push(format!("p = {}: {:?}, k {} -> {}", s.p, s.case, s.k_before, s.k_after));
            }
            text.push(format!("terminal k = {}", t.terminal_k));
            let mut res = json!({ "trace": to_value(&t)?, "status": "exact" });
            if *verify {
                k_from_big(k)?;
                let chk = verify_solubility_equivalence(&q, k, &t, budget)?;
                text.push(format!("solubility equivalent: {}", chk.equivalent));
                res["solubility"] = to_value(&chk)?;
            }
            (json!({ "command": "descend", "form": src, "k": k.to_string(), "verify": verify }), res)
        }
        Command::Delta { form, k, b, samples, seed, pcut } => {
            let (q, src) = load_form(form)?;
            let schedule = match (k, b) {
                (Some(ks), None) => Schedule::K(ks.clone()),
                (None, Some(bs)) => Schedule::B(bs.clone()),
                _ => return Err(QfError::precondition("give exactly one of --k or --b")),
            };
            let cfg = DeltaConfig { samples: *samples, seed: *seed, pcut: *pcut, ..DeltaConfig::default() };
            let s = main_term_compare(&q, &schedule, &cfg, budget)?;
            text.push(format!("σ∞ = {:.6} ± {:.6}", s.sigma_infty.value, s.sigma_infty.ci_half_width));
            for r in &s.reports {
                text.push(format!(
                    "B = {:.3}, k = {}: count {:.6}, relErr {}",
                    r.b,
                    r.k,
                    r.weighted_count,
                    r.rel_error.map(|e| format!("{e:.4}")).unwrap_or_else(|| "n/a".into())
                ));
            }
            (
                json!({
                    "command": "delta", "form": src, "k": k, "b": b,
                    "samples": samples, "seed": seed, "pcut": pcut, "eps": cfg.eps,
                }),
                json!({ "summary": to_value(&s)?, "status": "estimate±CI" }),
            )
        }
    };
    Ok((config, result, text))
}

fn num_traits_pow(h: &BigInt, e: usize) -> BigInt {
    (0..e).fold(BigInt::from(1), |acc, _| acc * h)
}

fn exit_code(e: &QfError) -> u8 {
    match e {
        QfError::Precondition(_) | QfError::Malformed { .. } => 2,
        QfError::Budget { .. } => 3,
        QfError::Internal(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let budget = match Budget::from_env() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match execute(&cli.cmd, &budget) {
        Ok((mut config, result, text)) => {
            config["budget"] = json!(budget);
            config["threads"] = json!(cli.threads);
            // a closed pipe is not an error worth a panic
            let mut out = std::io::stdout().lock();
            if cli.json {
                let report = json!({
                    "schema": SCHEMA,
                    "version": env!("CARGO_PKG_VERSION"),
                    "config": config,
                    "result": result,
                });
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for line in text {
                    let _ = writeln!(out, "{line}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let QfError::Budget { progress: Some(p), .. } = &e {
                eprintln!("progress: {p}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
