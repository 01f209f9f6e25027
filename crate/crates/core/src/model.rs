//! Solution encoding, objective evaluation, Pareto dominance and repair.
//!
//! An [`Individual`] carries three vectors over the non-depot customers
//! `2..=N-1`: activity bits, a visiting permutation and per-customer mutation
//! rates. The tour it encodes is the open path
//! `1 -> (perm filtered to active customers) -> N`.

use std::cmp::Ordering;

use crate::error::{contract, Result};
use crate::instance::{CustomerId, CustomerKind, Instance};
use crate::scalar::total_cmp;
use crate::Scalar;

/// Both objectives are minimized.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ObjectiveVector<T> {
    pub tour_length: T,
    /// Dynamic customers that have requested service but are not on the tour.
    pub unvisited: usize,
}

impl<T: Scalar> ObjectiveVector<T> {
    pub fn new(tour_length: T, unvisited: usize) -> Self {
        Self { tour_length, unvisited }
    }

    pub fn dominates(&self, other: &Self) -> bool {
        dominates(self, other)
    }

    /// Lexicographic order: tour length first, then unvisited.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        total_cmp(self.tour_length, other.tour_length).then(self.unvisited.cmp(&other.unvisited))
    }
}

/// Pareto dominance: not worse in either objective and strictly better in one.
pub fn dominates<T: Scalar>(a: &ObjectiveVector<T>, b: &ObjectiveVector<T>) -> bool {
    a.tour_length <= b.tour_length
        && a.unvisited <= b.unvisited
        && (a.tour_length < b.tour_length || a.unvisited < b.unvisited)
}

/// Indices (ascending) of the points no other point dominates.
///
/// Sort-and-sweep in `O(n log n)`. Duplicated points do not dominate each
/// other, so all copies of a non-dominated point are kept.
pub fn nondominated_filter<T: Scalar>(points: &[ObjectiveVector<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].lex_cmp(&points[b]));

    let mut keep = Vec::new();
    // Smallest `unvisited` among points with strictly smaller tour length.
    let mut best_before = usize::MAX;
    let mut i = 0;
    while i < order.len() {
        let length = points[order[i]].tour_length;
        let mut j = i;
        while j < order.len() && points[order[j]].tour_length == length {
            j += 1;
        }
        // Group sorted by unvisited, so its first member holds the minimum.
        let group_min = points[order[i]].unvisited;
        if group_min < best_before {
            keep.extend(order[i..j].iter().copied().filter(|&k| points[k].unvisited == group_min));
            best_before = group_min;
        }
        i = j;
    }
    keep.sort_unstable();
    keep
}

/// Irreversible, already driven part of the tour at an era boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct CommittedState<T> {
    prefix: Vec<CustomerId>,
    era_start_time: T,
    served: Vec<bool>,
}

impl<T: Scalar> CommittedState<T> {
    /// Nothing driven yet.
    pub fn empty(n: usize) -> Self {
        Self { prefix: Vec::new(), era_start_time: T::zero(), served: vec![false; n + 1] }
    }

    pub fn new(prefix: Vec<CustomerId>, era_start_time: T, n: usize) -> Result<Self> {
        let mut served = vec![false; n + 1];
        for &id in &prefix {
            if id <= 1 || id >= n {
                return Err(contract(format!("committed prefix contains depot or invalid id {id}")));
            }
            if std::mem::replace(&mut served[id], true) {
                return Err(contract(format!("committed prefix visits {id} twice")));
            }
        }
        Ok(Self { prefix, era_start_time, served })
    }

    pub fn prefix(&self) -> &[CustomerId] {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }

    pub fn era_start_time(&self) -> T {
        self.era_start_time
    }

    pub fn contains(&self, id: CustomerId) -> bool {
        self.served.get(id).copied().unwrap_or(false)
    }

    /// Whether `self` starts with every customer of `earlier`, in order.
    pub fn extends(&self, earlier: &Self) -> bool {
        self.prefix.starts_with(&earlier.prefix)
    }
}

/// The data an individual is judged against within one era.
#[derive(Clone, Copy, Debug)]
pub struct EraView<'a, T> {
    pub instance: &'a Instance<T>,
    pub committed: &'a CommittedState<T>,
    /// Current time; dynamic customers with `request_time <= now` have appeared.
    pub now: T,
}

impl<'a, T: Scalar> EraView<'a, T> {
    pub fn new(instance: &'a Instance<T>, committed: &'a CommittedState<T>, now: T) -> Self {
        Self { instance, committed, now }
    }

    /// Dynamic customers that have appeared but are not yet served.
    pub fn upper_bound(&self) -> usize {
        let served_dynamic =
            self.committed.prefix().iter().filter(|&&id| self.instance.is_dynamic(id)).count();
        self.instance.appeared_dynamic(self.now).saturating_sub(served_dynamic)
    }

    /// Customers whose activity bit may still change: appeared, dynamic and
    /// not committed.
    pub fn is_free(&self, id: CustomerId) -> bool {
        self.instance.is_dynamic(id) && self.instance.has_appeared(id, self.now) && !self.committed.contains(id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual<T> {
    bits: Vec<bool>,
    perm: Vec<CustomerId>,
    rates: Vec<T>,
    objectives: Option<ObjectiveVector<T>>,
}

#[inline]
fn slot(id: CustomerId) -> usize {
    id - 2
}

impl<T: Scalar> Individual<T> {
    /// Identity permutation, mandatory customers active, everything else
    /// inactive, all rates zero.
    pub fn new(instance: &Instance<T>) -> Self {
        let n = instance.n();
        let inner = n.saturating_sub(2);
        let bits = (2..n).map(|id| instance.kind(id) == CustomerKind::Mandatory).collect();
        Self { bits, perm: (2..n).collect(), rates: vec![T::zero(); inner], objectives: None }
    }

    pub fn from_parts(bits: Vec<bool>, perm: Vec<CustomerId>, rates: Vec<T>) -> Result<Self> {
        let m = perm.len();
        if bits.len() != m || rates.len() != m {
            return Err(contract("bits, perm and rates must have equal length"));
        }
        let mut seen = vec![false; m];
        for &id in &perm {
            if id < 2 || id > m + 1 || std::mem::replace(&mut seen[slot(id)], true) {
                return Err(contract(format!("perm is not a permutation of 2..={}", m + 1)));
            }
        }
        if rates.iter().any(|&r| !(r >= T::zero() && r <= T::one())) {
            return Err(contract("mutation rates must lie in [0, 1]"));
        }
        Ok(Self { bits, perm, rates, objectives: None })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn perm(&self) -> &[CustomerId] {
        &self.perm
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn is_active(&self, id: CustomerId) -> bool {
        self.bits[slot(id)]
    }

    pub fn rate(&self, id: CustomerId) -> T {
        self.rates[slot(id)]
    }

    pub fn set_active(&mut self, id: CustomerId, active: bool) {
        if self.bits[slot(id)] != active {
            self.bits[slot(id)] = active;
            self.objectives = None;
        }
    }

    pub fn set_rate(&mut self, id: CustomerId, rate: T) {
        self.rates[slot(id)] = rate;
    }

    /// Swaps two permutation positions.
    pub fn swap_positions(&mut self, a: usize, b: usize) {
        if a != b {
            self.perm.swap(a, b);
            self.objectives = None;
        }
    }

    pub(crate) fn set_perm(&mut self, perm: Vec<CustomerId>) {
        debug_assert_eq!(perm.len(), self.perm.len());
        if perm != self.perm {
            self.perm = perm;
            self.objectives = None;
        }
    }

    /// Active customers in visiting order (depots excluded).
    pub fn active_tour(&self) -> impl Iterator<Item = CustomerId> + '_ {
        self.perm.iter().copied().filter(move |&id| self.bits[slot(id)])
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Cached objectives from the last [`evaluate`], if still valid.
    pub fn objectives(&self) -> Option<ObjectiveVector<T>> {
        self.objectives
    }

    #[cfg(test)]
    pub(crate) fn with_objectives(mut self, objectives: ObjectiveVector<T>) -> Self {
        self.objectives = Some(objectives);
        self
    }

    /// Full open path including both depots.
    pub fn route(&self, instance: &Instance<T>) -> Vec<CustomerId> {
        let mut route = Vec::with_capacity(self.active_count() + 2);
        route.push(instance.start_depot());
        route.extend(self.active_tour());
        if instance.n() > 1 {
            route.push(instance.end_depot());
        }
        route
    }

    pub fn tour_length(&self, instance: &Instance<T>) -> T {
        let mut prev = instance.start_depot();
        let mut length = T::zero();
        for id in self.active_tour() {
            length += instance.d(prev, id);
            prev = id;
        }
        length + instance.d(prev, instance.end_depot())
    }

    /// Checks every invariant `evaluate` relies on.
    pub fn check_feasible(&self, view: &EraView<'_, T>) -> Result<()> {
        let instance = view.instance;
        if self.perm.len() != instance.n().saturating_sub(2) {
            return Err(contract("individual encodes a different number of customers"));
        }
        let prefix = view.committed.prefix();
        if !self.perm.starts_with(prefix) {
            return Err(contract("permutation does not start with the committed prefix"));
        }
        for id in 2..instance.n() {
            let (bit, rate) = (self.bits[slot(id)], self.rates[slot(id)]);
            let fixed_on = instance.kind(id) == CustomerKind::Mandatory || view.committed.contains(id);
            if fixed_on && (!bit || rate != T::zero()) {
                return Err(contract(format!("customer {id} must be active with rate 0")));
            }
            if !instance.has_appeared(id, view.now) && (bit || rate != T::zero()) {
                return Err(contract(format!("customer {id} has not requested service yet")));
            }
        }
        Ok(())
    }
}

/// Computes and caches both objectives. Fails if `ind` is not feasible for
/// `view` (see [`repair`]).
pub fn evaluate<T: Scalar>(ind: &mut Individual<T>, view: &EraView<'_, T>) -> Result<ObjectiveVector<T>> {
    ind.check_feasible(view)?;
    let unvisited = view
        .instance
        .dynamic_ids()
        .filter(|&id| view.instance.has_appeared(id, view.now) && !ind.is_active(id))
        .count();
    let objectives = ObjectiveVector::new(ind.tour_length(view.instance), unvisited);
    ind.objectives = Some(objectives);
    Ok(objectives)
}

/// Makes any encoding feasible for `view`.
///
/// Mandatory and committed customers become active with rate 0, customers
/// that have not appeared become inactive with rate 0, and the committed
/// prefix is moved to the front of the permutation in committed order while
/// all other customers keep their relative order. Idempotent. Returns
/// whether anything changed.
pub fn repair<T: Scalar>(ind: &mut Individual<T>, view: &EraView<'_, T>) -> bool {
    let instance = view.instance;
    let committed = view.committed;
    let mut changed = false;
    for id in 2..instance.n() {
        let s = slot(id);
        let (bit, rate) = if instance.kind(id) == CustomerKind::Mandatory || committed.contains(id) {
            (true, T::zero())
        } else if !instance.has_appeared(id, view.now) {
            (false, T::zero())
        } else {
            continue;
        };
        if ind.bits[s] != bit || ind.rates[s] != rate {
            ind.bits[s] = bit;
            ind.rates[s] = rate;
            changed = true;
        }
    }

    let prefix = committed.prefix();
    if !ind.perm.starts_with(prefix) {
        let mut perm = Vec::with_capacity(ind.perm.len());
        perm.extend_from_slice(prefix);
        perm.extend(ind.perm.iter().copied().filter(|&id| !committed.contains(id)));
        ind.perm = perm;
        changed = true;
    }
    if changed {
        ind.objectives = None;
    }
    changed
}

/// Mutually non-dominated, duplicate-free solutions sorted by ascending tour
/// length (and therefore strictly descending `unvisited`).
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationSet<T> {
    members: Vec<(Individual<T>, ObjectiveVector<T>)>,
    era: usize,
}

impl<T: Scalar> ApproximationSet<T> {
    /// Extracts the sorted non-dominated set from evaluated individuals.
    /// Individuals without cached objectives are ignored.
    pub fn from_population(population: &[Individual<T>], era: usize) -> Self {
        let evaluated: Vec<(usize, ObjectiveVector<T>)> =
            population.iter().enumerate().filter_map(|(i, ind)| ind.objectives().map(|o| (i, o))).collect();
        let points: Vec<ObjectiveVector<T>> = evaluated.iter().map(|&(_, o)| o).collect();
        let mut members: Vec<(Individual<T>, ObjectiveVector<T>)> = nondominated_filter(&points)
            .into_iter()
            .map(|k| (population[evaluated[k].0].clone(), evaluated[k].1))
            .collect();
        // Stable sort keeps the earliest population member among duplicates.
        members.sort_by(|a, b| a.1.lex_cmp(&b.1));
        members.dedup_by(|later, earlier| later.1 == earlier.1);
        Self { members, era }
    }

    pub fn singleton(individual: Individual<T>, objectives: ObjectiveVector<T>, era: usize) -> Self {
        Self { members: vec![(individual, objectives)], era }
    }

    pub fn era(&self) -> usize {
        self.era
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[(Individual<T>, ObjectiveVector<T>)] {
        &self.members
    }

    pub fn objectives(&self) -> impl Iterator<Item = ObjectiveVector<T>> + '_ {
        self.members.iter().map(|m| m.1)
    }

    /// 1-based rank lookup.
    pub fn get(&self, rank: usize) -> Option<&(Individual<T>, ObjectiveVector<T>)> {
        rank.checked_sub(1).and_then(|i| self.members.get(i))
    }
}
