use std::collections::BTreeMap;

use thiserror::Error;

use super::{AbsAddr, AbsStorable, AbstractState, AbstractStore, Policy};
use crate::concrete::{CeskState, Loc, Store};
use crate::domain::Storable;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AlphaError {
    #[error("address {0} has no journal entry")]
    MissingJournal(Loc),
}

fn addr(policy: &dyn Policy, store: &Store, a: &Loc) -> Result<AbsAddr, AlphaError> {
    let entry = store.entry(a).ok_or(AlphaError::MissingJournal(*a))?;
    Ok(policy.alpha_addr(*a, entry))
}

pub fn alpha_storable(policy: &dyn Policy, store: &Store, s: &Storable<Loc>) -> Result<AbsStorable, AlphaError> {
    s.try_map(&mut |a| addr(policy, store, a))
}

/// Abstraction of a journaled concrete state. Store cells whose addresses
/// collide are joined.
pub fn alpha_state(s: &CeskState, policy: &dyn Policy) -> Result<AbstractState, AlphaError> {
    AlphaTracker::new(policy).alpha(s)
}

/// Computes α along a trace, updating the abstract store from the
/// difference between consecutive concrete stores.
///
/// Each abstract storable carries the number of concrete cells that map to
/// it, so strong updates and collection can retract it exactly.
pub struct AlphaTracker<'p> {
    policy: &'p dyn Policy,
    prev: im::OrdMap<Loc, Storable<Loc>>,
    counts: BTreeMap<AbsAddr, BTreeMap<AbsStorable, usize>>,
    /// Abstract image of each concrete cell currently counted.
    images: BTreeMap<Loc, (AbsAddr, AbsStorable)>,
    store: im::OrdMap<AbsAddr, im::OrdSet<AbsStorable>>,
}

impl<'p> AlphaTracker<'p> {
    pub fn new(policy: &'p dyn Policy) -> AlphaTracker<'p> {
        AlphaTracker {
            policy,
            prev: im::OrdMap::new(),
            counts: BTreeMap::new(),
            images: BTreeMap::new(),
            store: im::OrdMap::new(),
        }
    }

    fn add(&mut self, a: AbsAddr, s: AbsStorable) {
        let n = self.counts.entry(a.clone()).or_default().entry(s.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            let set = self.store.get(&a).cloned().unwrap_or_default();
            self.store.insert(a, set.update(s));
        }
    }

    fn remove(&mut self, a: AbsAddr, s: AbsStorable) {
        let per_addr = self.counts.get_mut(&a).expect("retracting an unrecorded cell");
        let n = per_addr.get_mut(&s).expect("retracting an unrecorded storable");
        *n -= 1;
        if *n > 0 {
            return;
        }
        per_addr.remove(&s);
        if per_addr.is_empty() {
            self.counts.remove(&a);
            self.store.remove(&a);
        } else if let Some(set) = self.store.get(&a) {
            let set = set.without(&s);
            self.store.insert(a, set);
        }
    }

    pub fn alpha(&mut self, s: &CeskState) -> Result<AbstractState, AlphaError> {
        let policy = self.policy;
        let cells = s.store.cells().clone();
        let prev = std::mem::replace(&mut self.prev, cells.clone());
        let mut removed = Vec::new();
        let mut added = Vec::new();
        for item in prev.diff(&cells) {
            match item {
                im::ordmap::DiffItem::Add(a, v) => added.push((*a, v.clone())),
                im::ordmap::DiffItem::Update { new: (a, n), .. } => {
                    removed.push(*a);
                    added.push((*a, n.clone()));
                }
                im::ordmap::DiffItem::Remove(a, _) => removed.push(*a),
            }
        }
        // Removed cells may have lost their journal entries, so they are
        // retracted through their recorded images.
        for a in removed {
            let (aa, vv) = self.images.remove(&a).expect("retracting an unrecorded cell");
            self.remove(aa, vv);
        }
        for (a, v) in added {
            let aa = addr(policy, &s.store, &a)?;
            let vv = alpha_storable(policy, &s.store, &v)?;
            self.images.insert(a, (aa.clone(), vv.clone()));
            self.add(aa, vv);
        }
        Ok(AbstractState {
            control: s.control.try_map(&mut |a| addr(policy, &s.store, a))?,
            env: crate::domain::map_env(&s.env, &mut |a| addr(policy, &s.store, a))?,
            store: AbstractStore::from_map(self.store.clone()),
            kont: addr(policy, &s.store, &s.kont)?,
            time: policy.alpha_time(&s.time),
        })
    }
}
