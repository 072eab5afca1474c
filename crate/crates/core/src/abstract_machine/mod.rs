//! The abstract time-stamped CESK* machine: set-valued stores joined on
//! every write, finite addresses and times chosen by a [`Policy`], and the
//! abstraction map from concrete states.

mod alpha;
mod policy;
mod step;

use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::domain::{Control, DisplayEnv, Env, Role, Storable};
use crate::syntax::Label;

pub use alpha::{alpha_state, alpha_storable, AlphaError, AlphaTracker};
pub use policy::{policy_k_cfa, policy_zero_cfa, KCfa, Policy, PolicySpec, PolicySpecError};
pub use step::{abs_step, Successors};

/// Abstract time: the most recent call sites, newest first, at most `k`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(pub Arc<[Label]>);

impl Time {
    pub fn empty() -> Time {
        Time(Arc::from(Vec::new()))
    }

    pub fn from_sites(sites: Vec<Label>) -> Time {
        Time(Arc::from(sites))
    }

    pub fn sites(&self) -> &[Label] {
        &self.0
    }

    /// `site` prepended, keeping at most `k` entries.
    pub fn push(&self, site: Label, k: usize) -> Time {
        let sites: Vec<Label> = std::iter::once(site).chain(self.0.iter().copied()).take(k).collect();
        Time::from_sites(sites)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "•");
        }
        write!(f, "[")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "]")
    }
}

impl Serialize for Time {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Abstract address: the allocation-site tag paired with a contour.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbsAddr {
    pub role: Role,
    pub time: Time,
}

impl AbsAddr {
    pub fn new(role: Role, time: Time) -> AbsAddr {
        AbsAddr { role, time }
    }
}

impl fmt::Display for AbsAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.time.0.is_empty() {
            write!(f, "{}", self.role)
        } else {
            write!(f, "{}{}", self.role, self.time)
        }
    }
}

pub type AbsStorable = Storable<AbsAddr>;

/// Address → non-empty set of storables. Writes go through [`store_join`].
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractStore(im::OrdMap<AbsAddr, im::OrdSet<AbsStorable>>);

impl AbstractStore {
    pub fn new() -> AbstractStore {
        AbstractStore::default()
    }

    pub fn get(&self, a: &AbsAddr) -> Option<&im::OrdSet<AbsStorable>> {
        self.0.get(a)
    }

    pub fn contains(&self, a: &AbsAddr) -> bool {
        self.0.contains_key(a)
    }

    /// Number of addresses.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of storables over all addresses.
    pub fn size(&self) -> usize {
        self.0.values().map(|s| s.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AbsAddr, &im::OrdSet<AbsStorable>)> {
        self.0.iter()
    }

    pub fn join(&self, a: AbsAddr, s: AbsStorable) -> AbstractStore {
        match self.0.get(&a) {
            Some(set) if set.contains(&s) => self.clone(),
            Some(set) => AbstractStore(self.0.update(a, set.update(s))),
            None => AbstractStore(self.0.update(a, im::OrdSet::unit(s))),
        }
    }

    /// Pointwise inclusion.
    pub fn leq(&self, other: &AbstractStore) -> bool {
        if self.0.ptr_eq(&other.0) {
            return true;
        }
        self.0.iter().all(|(a, set)| match other.0.get(a) {
            Some(big) => set.is_subset(big),
            None => false,
        })
    }

    pub fn restrict(&self, live: &std::collections::BTreeSet<AbsAddr>) -> AbstractStore {
        let mut out = self.0.clone();
        for a in self.0.keys().filter(|a| !live.contains(a)) {
            out.remove(a);
        }
        AbstractStore(out)
    }

    pub(crate) fn from_map(map: im::OrdMap<AbsAddr, im::OrdSet<AbsStorable>>) -> AbstractStore {
        AbstractStore(map)
    }
}

/// `σ̂ ⊔ [a ↦ {s}]`.
pub fn store_join(store: &AbstractStore, a: AbsAddr, s: AbsStorable) -> AbstractStore {
    store.join(a, s)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AbstractState {
    pub control: Control<AbsAddr>,
    pub env: Env<AbsAddr>,
    pub store: AbstractStore,
    pub kont: AbsAddr,
    pub time: Time,
}

impl AbstractState {
    /// The store-independent part of the state, which the order compares
    /// flatly.
    pub fn shape(&self) -> (&Control<AbsAddr>, &Env<AbsAddr>, &AbsAddr, &Time) {
        (&self.control, &self.env, &self.kont, &self.time)
    }
}

/// `ŝ1 ⊑ ŝ2`: equal controls, environments, continuation addresses and
/// times, and pointwise store inclusion.
pub fn leq_state(a: &AbstractState, b: &AbstractState) -> bool {
    a.shape() == b.shape() && a.store.leq(&b.store)
}

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(acesk {} {} (", self.control, DisplayEnv(&self.env))?;
        for (i, (a, set)) in self.store.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "[{a}")?;
            for s in set {
                write!(f, " {s}")?;
            }
            write!(f, "]")?;
        }
        write!(f, ") {} {})", self.kont, self.time)
    }
}
