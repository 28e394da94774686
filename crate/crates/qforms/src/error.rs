use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QfError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed input at {location}: {message}")]
    Malformed { location: String, message: String },
    #[error("budget exhausted: {what}")]
    Budget {
        what: String,
        progress: Option<String>,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl QfError {
    pub fn precondition(msg: impl Into<String>) -> Self {
        QfError::Precondition(msg.into())
    }
    pub fn budget(what: impl Into<String>) -> Self {
        QfError::Budget {
            what: what.into(),
            progress: None,
        }
    }
    pub fn internal(msg: impl Into<String>) -> Self {
        QfError::Internal(msg.into())
    }
    pub fn malformed(location: impl Into<String>, message: impl Into<String>) -> Self {
        QfError::Malformed {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, QfError>;

/// Work limits shared by the exhaustive procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// node visits in lifting trees and residue scans
    pub nodes: u64,
    /// lattice points visited by enumeration and box searches
    pub enum_points: u64,
    /// Monte Carlo samples
    pub mc_samples: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            nodes: 100_000_000,
            enum_points: 2_000_000_000,
            mc_samples: 400_000,
        }
    }
}

impl Budget {
    /// Reads `QFORMS_BUDGET`: either one integer applied to node and point
    /// limits, or a comma list like `nodes=1e6,enum=1e8,mc=1e5`.
    pub fn from_env() -> Result<Self> {
        match std::env::var("QFORMS_BUDGET") {
            Ok(s) => Self::parse(&s),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut b = Self::default();
        let num = |t: &str| -> Result<u64> {
            let t = t.trim();
            if let Ok(v) = t.parse::<u64>() {
                return Ok(v);
            }
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(|v| v as u64)
                .ok_or_else(|| QfError::malformed("QFORMS_BUDGET", format!("bad number {t:?}")))
        };
        if !s.contains('=') {
            let v = num(s)?;
            b.nodes = v;
            b.enum_points = v;
            return Ok(b);
        }
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| QfError::malformed("QFORMS_BUDGET", format!("bad item {part:?}")))?;
            let v = num(v)?;
            match k.trim() {
                "nodes" => b.nodes = v,
                "enum" => b.enum_points = v,
                "mc" => b.mc_samples = v,
                other => {
                    return Err(QfError::malformed(
                        "QFORMS_BUDGET",
                        format!("unknown key {other:?}"),
                    ))
                }
            }
        }
        Ok(b)
    }
}

/// Counts work against one budget limit.
#[derive(Debug, Clone)]
pub struct Meter {
    used: u64,
    limit: u64,
    what: &'static str,
}

impl Meter {
    pub fn new(limit: u64, what: &'static str) -> Self {
        Meter { used: 0, limit, what }
    }

    pub fn tick(&mut self, n: u64) -> Result<()> {
        self.used = self.used.saturating_add(n);
        if self.used > self.limit {
            return Err(QfError::budget(format!(
                "{} limit of {} exceeded",
                self.what, self.limit
            )));
        }
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}
