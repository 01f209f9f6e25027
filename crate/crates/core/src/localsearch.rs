//! Tour improvement: nearest-neighbour construction, 2-opt and Or-opt with
//! don't-look bits, the Hamiltonian-path-to-TSP reduction used for the
//! first era, and population boosting.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::Rng as _;

use crate::error::{contract, Result};
use crate::instance::CustomerId;
use crate::model::{EraView, Individual};
use crate::rng;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn cycle_length(&self, tour: &[usize]) -> T {
        if tour.len() < 2 {
            return T::zero();
        }
        let closing = self.get(tour[tour.len() - 1], tour[0]);
        tour.windows(2).map(|w| self.get(w[0], w[1])).sum::<T>() + closing
    }

    fn max_entry(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalSearchOptions {
    /// `None` runs to a local optimum, which keeps results reproducible.
    pub time_limit: Option<Duration>,
    /// Picks the nearest-neighbour start node.
    pub seed: u64,
}

/// Symmetric TSP whose optimal cycles induce optimal `start -> end`
/// Hamiltonian paths.
///
/// Matrix index `i < nodes.len()` stands for `nodes[i]`; the extra index
/// `dummy` is joined to `start` and `end` at cost 0 and to every other node
/// at cost `B = 1 + sum of all pairwise distances`, which exceeds any saving
/// a tour could make by avoiding the zero edges.
#[derive(Clone, Debug)]
pub struct HppReduction<T> {
    pub nodes: Vec<CustomerId>,
    pub start: usize,
    pub end: usize,
    pub dummy: usize,
    pub matrix: DistanceMatrix<T>,
}

pub fn hpp_to_tsp<T: Scalar>(
    dist: &impl Fn(CustomerId, CustomerId) -> T,
    nodes: &[CustomerId],
    start: CustomerId,
    end: CustomerId,
) -> Result<HppReduction<T>> {
    if start == end {
        return Err(contract("path start and end must differ"));
    }
    let find = |id| nodes.iter().position(|&x| x == id).ok_or_else(|| contract(format!("node {id} not in node set")));
    let (s, e) = (find(start)?, find(end)?);
    let n = nodes.len();
    let mut total = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            total += dist(nodes[i], nodes[j]);
        }
    }
    let big = T::one() + total;
    let matrix = DistanceMatrix::from_fn(n + 1, |i, j| {
        if j == n {
            if i == s || i == e { T::zero() } else { big }
        } else {
            dist(nodes[i], nodes[j])
        }
    });
    Ok(HppReduction { nodes: nodes.to_vec(), start: s, end: e, dummy: n, matrix })
}

impl<T: Scalar> HppReduction<T> {
    /// Reads the `start -> end` path off a cycle over the augmented matrix.
    pub fn path_from_cycle(&self, cycle: &[usize]) -> Result<Vec<CustomerId>> {
        let k = cycle.len();
        let at = cycle.iter().position(|&v| v == self.dummy).ok_or_else(|| contract("cycle misses the dummy node"))?;
        let next = cycle[(at + 1) % k];
        let prev = cycle[(at + k - 1) % k];
        let forward = match (next, prev) {
            (a, b) if a == self.start && b == self.end => true,
            (a, b) if a == self.end && b == self.start => false,
            _ => return Err(contract("dummy node is not between start and end")),
        };
        Ok((1..k)
            .map(|step| if forward { cycle[(at + step) % k] } else { cycle[(at + k - step) % k] })
            .map(|v| self.nodes[v])
            .collect())
    }
}

/// Shortest-found Hamiltonian path from `start` to `end` through all `nodes`.
pub fn solve_hpp<T: Scalar>(
    dist: &impl Fn(CustomerId, CustomerId) -> T,
    nodes: &[CustomerId],
    start: CustomerId,
    end: CustomerId,
    options: &LocalSearchOptions,
) -> Result<Vec<CustomerId>> {
    let reduction = hpp_to_tsp(dist, nodes, start, end)?;
    if nodes.len() <= 3 {
        let middle = nodes.iter().copied().filter(|&v| v != start && v != end);
        return Ok(std::iter::once(start).chain(middle).chain([end]).collect());
    }
    let cycle = solve_tsp(&reduction.matrix, options);
    reduction.path_from_cycle(&cycle)
}

pub fn path_length<T: Scalar>(dist: &impl Fn(CustomerId, CustomerId) -> T, path: &[CustomerId]) -> T {
    path.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Nearest-neighbour tour from a seeded start node, then [`improve_tour`].
pub fn solve_tsp<T: Scalar>(matrix: &DistanceMatrix<T>, options: &LocalSearchOptions) -> Vec<usize> {
    let n = matrix.len();
    if n == 0 {
        return Vec::new();
    }
    let deadline = options.time_limit.map(|t| Instant::now() + t);
    let mut rng = rng::stream(options.seed, &[rng::hash_str("nearest-neighbour")]);
    let first = rng.random_range(0..n);
    let mut tour = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut current = first;
    used[first] = true;
    tour.push(first);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&v| !used[v])
            .min_by(|&a, &b| crate::scalar::total_cmp(matrix.get(current, a), matrix.get(current, b)))
            .expect("unvisited node remains");
        used[next] = true;
        tour.push(next);
        current = next;
    }
    improve_tour(matrix, &mut tour, deadline);
    tour
}

/// First-improvement 2-opt plus Or-opt (segments of 1 to 3 nodes, both
/// orientations) driven by a don't-look-bit queue. Never lengthens the tour.
/// Returns whether the tour changed.
pub fn improve_tour<T: Scalar>(matrix: &DistanceMatrix<T>, tour: &mut Vec<usize>, deadline: Option<Instant>) -> bool {
    let n = tour.len();
    if n < 4 {
        return false;
    }
    let mut state = CycleState::new(matrix, std::mem::take(tour));
    let mut queue: VecDeque<usize> = state.order.iter().copied().collect();
    let mut queued = vec![true; n];
    let mut changed = false;
    let mut steps = 0u32;
    while let Some(a) = queue.pop_front() {
        queued[a] = false;
        steps = steps.wrapping_add(1);
        if steps.is_multiple_of(32) && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let touched = state.two_opt(a).or_else(|| state.or_opt(a));
        if let Some(nodes) = touched {
            changed = true;
            for v in nodes {
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
            if !queued[a] {
                queued[a] = true;
                queue.push_back(a);
            }
        }
    }
    *tour = state.order;
    changed
}

struct CycleState<'a, T> {
    m: &'a DistanceMatrix<T>,
    order: Vec<usize>,
    pos: Vec<usize>,
    /// Each node's other nodes sorted by distance.
    neighbours: Vec<Vec<usize>>,
    eps: T,
}

impl<'a, T: Scalar> CycleState<'a, T> {
    fn new(m: &'a DistanceMatrix<T>, order: Vec<usize>) -> Self {
        let n = order.len();
        let mut pos = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        let neighbours = (0..n)
            .map(|a| {
                let mut others: Vec<usize> = (0..n).filter(|&c| c != a).collect();
                others.sort_by(|&x, &y| crate::scalar::total_cmp(m.get(a, x), m.get(a, y)));
                others
            })
            .collect();
        let eps = m.max_entry() * T::epsilon() * T::of(64.0);
        Self { m, order, pos, neighbours, eps }
    }

    #[inline]
    fn succ(&self, v: usize) -> usize {
        self.order[(self.pos[v] + 1) % self.order.len()]
    }

    #[inline]
    fn pred(&self, v: usize) -> usize {
        let n = self.order.len();
        self.order[(self.pos[v] + n - 1) % n]
    }

    #[inline]
    fn d(&self, a: usize, b: usize) -> T {
        self.m.get(a, b)
    }

    /// Reverses the cyclic run of positions `i..=j`, or equivalently its
    /// complement when that is shorter.
    fn reverse(&mut self, i: usize, j: usize) {
        let n = self.order.len();
        let len = (j + n - i) % n + 1;
        let (mut lo, mut hi, len) = if 2 * len > n { ((j + 1) % n, (i + n - 1) % n, n - len) } else { (i, j, len) };
        for _ in 0..len / 2 {
            self.order.swap(lo, hi);
            self.pos[self.order[lo]] = lo;
            self.pos[self.order[hi]] = hi;
            lo = (lo + 1) % n;
            hi = (hi + n - 1) % n;
        }
    }

    fn two_opt(&mut self, a: usize) -> Option<Vec<usize>> {
        for forward in [true, false] {
            let b = if forward { self.succ(a) } else { self.pred(a) };
            let d_ab = self.d(a, b);
            for idx in 0..self.neighbours[a].len() {
                let c = self.neighbours[a][idx];
                let d_ac = self.d(a, c);
                if d_ac >= d_ab {
                    break;
                }
                let d = if forward { self.succ(c) } else { self.pred(c) };
                if c == b || d == a {
                    continue;
                }
                let gain = d_ab + self.d(c, d) - d_ac - self.d(b, d);
                if gain > self.eps {
                    if forward {
                        self.reverse(self.pos[b], self.pos[c]);
                    } else {
                        self.reverse(self.pos[a], self.pos[d]);
                    }
                    return Some(vec![a, b, c, d]);
                }
            }
        }
        None
    }

    fn or_opt(&mut self, a: usize) -> Option<Vec<usize>> {
        let n = self.order.len();
        for seg_len in 1..=3usize {
            if n < seg_len + 3 {
                break;
            }
            let start = self.pos[a];
            let segment: Vec<usize> = (0..seg_len).map(|k| self.order[(start + k) % n]).collect();
            let e = segment[seg_len - 1];
            let p = self.pred(a);
            let nx = self.succ(e);
            let removal = self.d(p, a) + self.d(e, nx) - self.d(p, nx);
            if removal <= self.eps {
                continue;
            }
            let mut best: Option<(T, usize, bool)> = None;
            for k in 0..(n - seg_len) {
                let c = self.order[(start + seg_len + k) % n];
                let f = self.succ(c);
                if f == a {
                    continue;
                }
                let base = self.d(c, f);
                let fwd = self.d(c, a) + self.d(e, f) - base;
                let rev = self.d(c, e) + self.d(a, f) - base;
                let (cost, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                if removal - cost > self.eps && best.is_none_or(|(b, _, _)| cost < b) {
                    best = Some((cost, c, reversed));
                }
            }
            if let Some((_, c, reversed)) = best {
                let f = self.succ(c);
                let mut rest: Vec<usize> = (0..(n - seg_len)).map(|k| self.order[(start + seg_len + k) % n]).collect();
                let at = rest.iter().position(|&v| v == c).expect("insertion point outside segment") + 1;
                let mut moved = segment.clone();
                if reversed {
                    moved.reverse();
                }
                rest.splice(at..at, moved);
                self.order = rest;
                for (i, &v) in self.order.iter().enumerate() {
                    self.pos[v] = i;
                }
                return Some(vec![p, nx, a, e, c, f]);
            }
        }
        None
    }
}

/// Shortens the free part of an individual's tour.
///
/// The committed prefix stays in place; the open path from the last
/// committed customer (or the start depot) through the remaining active
/// customers to the end depot is improved with 2-opt/Or-opt, seeded with the
/// current order so the tour never gets longer. Inactive customers keep
/// their permutation slots and activity bits are untouched.
pub fn boost<T: Scalar>(ind: &mut Individual<T>, view: &EraView<'_, T>, time_limit: Option<Duration>) -> bool {
    let instance = view.instance;
    let committed = view.committed;
    let anchor = committed.prefix().last().copied().unwrap_or(instance.start_depot());
    let free: Vec<CustomerId> = ind.active_tour().filter(|&id| !committed.contains(id)).collect();
    if free.len() < 2 {
        return false;
    }
    let mut nodes = Vec::with_capacity(free.len() + 2);
    nodes.push(anchor);
    nodes.extend_from_slice(&free);
    nodes.push(instance.end_depot());
    let dist = |i: CustomerId, j: CustomerId| instance.d(i, j);
    let reduction = hpp_to_tsp(&dist, &nodes, anchor, instance.end_depot()).expect("anchor and end depot differ");
    // Initial cycle: dummy, anchor, current free order, end depot.
    let mut cycle: Vec<usize> = std::iter::once(reduction.dummy).chain(0..nodes.len()).collect();
    let before = reduction.matrix.cycle_length(&cycle);
    if !improve_tour(&reduction.matrix, &mut cycle, time_limit.map(|t| Instant::now() + t)) {
        return false;
    }
    let path = match reduction.path_from_cycle(&cycle) {
        Ok(path) if reduction.matrix.cycle_length(&cycle) < before => path,
        _ => return false,
    };
    let mut new_order = path[1..path.len() - 1].iter().copied();
    let perm: Vec<CustomerId> = ind
        .perm()
        .iter()
        .map(|&id| if ind.is_active(id) && !committed.contains(id) { new_order.next().expect("same active set") } else { id })
        .collect();
    ind.set_perm(perm);
    true
}
