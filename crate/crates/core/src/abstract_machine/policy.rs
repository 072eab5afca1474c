use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AbsAddr, AbstractState, Time};
use crate::concrete::{JournalEntry, Loc, Stamp};
use crate::domain::{call_site, Frame, Role};
use crate::syntax::{Expr, ExprKind};

/// A precision policy: abstract allocation and clock, together with the
/// abstraction of concrete addresses and times they must simulate.
pub trait Policy: Send + Sync {
    fn spec(&self) -> PolicySpec;

    fn initial_time(&self) -> Time {
        Time::empty()
    }

    fn tick(&self, s: &AbstractState, kont: Option<&Frame<AbsAddr>>) -> Time;

    fn alloc(&self, s: &AbstractState, kont: Option<&Frame<AbsAddr>>, role: &Role) -> AbsAddr;

    fn alpha_time(&self, t: &Stamp) -> Time;

    fn alpha_addr(&self, a: Loc, entry: &JournalEntry) -> AbsAddr;

    /// Upper bounds on the number of abstract times and addresses for
    /// `program`.
    fn carrier_sizes(&self, program: &Expr) -> (f64, f64);
}

/// Call-string contours of length at most `k`. Time advances only when a
/// function body is entered; addresses pair the allocation role with the
/// post-transition time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KCfa {
    pub k: usize,
}

impl Policy for KCfa {
    fn spec(&self) -> PolicySpec {
        if self.k == 0 {
            PolicySpec::zero_cfa()
        } else {
            PolicySpec::k_cfa(self.k)
        }
    }

    fn tick(&self, s: &AbstractState, kont: Option<&Frame<AbsAddr>>) -> Time {
        match call_site(&s.control, kont) {
            Some(site) => s.time.push(site, self.k),
            None => s.time.clone(),
        }
    }

    fn alloc(&self, s: &AbstractState, kont: Option<&Frame<AbsAddr>>, role: &Role) -> AbsAddr {
        AbsAddr::new(role.clone(), self.tick(s, kont))
    }

    fn alpha_time(&self, t: &Stamp) -> Time {
        Time::from_sites(t.calls.prefix(self.k))
    }

    fn alpha_addr(&self, _a: Loc, entry: &JournalEntry) -> AbsAddr {
        AbsAddr::new(entry.role.clone(), self.alpha_time(&entry.birth))
    }

    fn carrier_sizes(&self, program: &Expr) -> (f64, f64) {
        let sites = program.preorder().iter().filter(|e| matches!(e.kind(), ExprKind::App(..))).count() as f64;
        let times: f64 = (0..=self.k as i32).map(|i| sites.powi(i)).sum();
        let tags = (program.variables().len() + program.node_count()) as f64;
        (times, tags * times)
    }
}

/// 0CFA: one address per variable and per continuation allocation site.
pub fn policy_zero_cfa(_program: &Expr) -> KCfa {
    KCfa { k: 0 }
}

pub fn policy_k_cfa(_program: &Expr, k: usize) -> KCfa {
    KCfa { k }
}

/// Serializable policy selection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: String,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PolicySpecError {
    #[error("unknown policy {0:?} (expected 0cfa or kcfa)")]
    UnknownName(String),
    #[error("0cfa takes no k")]
    KWithZeroCfa,
}

impl PolicySpec {
    pub fn zero_cfa() -> PolicySpec {
        PolicySpec { name: "0cfa".into(), k: 0 }
    }

    pub fn k_cfa(k: usize) -> PolicySpec {
        PolicySpec { name: "kcfa".into(), k }
    }

    pub fn build(&self, program: &Expr) -> Result<KCfa, PolicySpecError> {
        match self.name.as_str() {
            "0cfa" if self.k == 0 => Ok(policy_zero_cfa(program)),
            "0cfa" => Err(PolicySpecError::KWithZeroCfa),
            "kcfa" => Ok(policy_k_cfa(program, self.k)),
            other => Err(PolicySpecError::UnknownName(other.into())),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name.as_str() {
            "kcfa" => write!(f, "{}cfa", self.k),
            name => write!(f, "{name}"),
        }
    }
}
