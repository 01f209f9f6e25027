//! The static per-era evolutionary optimizer: a (mu + lambda) EMOA with
//! NSGA-II survival selection, bit-flip and swap mutation, and periodic
//! local-search boosting.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::localsearch;
use crate::model::{evaluate, repair, ApproximationSet, EraView, Individual, ObjectiveVector};
use crate::rng::Rng;
use crate::scalar::total_cmp;
use crate::Scalar;

/// Generations at which the whole population is boosted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoostSchedule {
    /// Initial, half-time and last generation.
    Standard,
    At(Vec<usize>),
}

impl BoostSchedule {
    pub fn generations(&self, total: usize) -> Vec<usize> {
        let mut gens = match self {
            BoostSchedule::Standard if total == 0 => Vec::new(),
            BoostSchedule::Standard => vec![0, total / 2, total - 1],
            BoostSchedule::At(g) => g.iter().copied().filter(|&g| g < total).collect(),
        };
        gens.sort_unstable();
        gens.dedup();
        gens
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmoaConfig<T> {
    pub mu: usize,
    pub lambda: usize,
    /// Generations per era.
    pub generations: usize,
    /// Probability of applying swap mutation to an offspring.
    pub p_swap: T,
    /// Transpositions per swap mutation; `None` means `max(1, N / 10)`.
    pub sigma_swap: Option<usize>,
    pub ls_schedule: BoostSchedule,
    /// Budget per local-search call; `None` runs each call to a local optimum.
    pub ls_time_limit: Option<Duration>,
    /// Mutation rate given to dynamic customers when they appear.
    pub initial_rate: T,
    pub seed: u64,
}

impl<T: Scalar> Default for EmoaConfig<T> {
    /// Workstation-sized budget.
    fn default() -> Self {
        Self {
            mu: 50,
            lambda: 50,
            generations: 2_000,
            p_swap: T::of(0.6),
            sigma_swap: None,
            ls_schedule: BoostSchedule::Standard,
            ls_time_limit: Some(Duration::from_secs(1)),
            initial_rate: T::of(0.5),
            seed: 0,
        }
    }
}

impl<T: Scalar> EmoaConfig<T> {
    /// The published budget: 65,000 generations per era, mu = lambda = 100.
    pub fn full_scale() -> Self {
        Self { mu: 100, lambda: 100, generations: 65_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.lambda == 0 {
            return Err(param("mu and lambda must be positive"));
        }
        if !(self.p_swap > T::zero() && self.p_swap < T::one()) {
            return Err(param(format!("p_swap must lie in (0, 1), got {}", self.p_swap)));
        }
        if self.sigma_swap == Some(0) {
            return Err(param("sigma_swap must be at least 1"));
        }
        if !(self.initial_rate >= T::zero() && self.initial_rate <= T::one()) {
            return Err(param("initial_rate must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn sigma_for(&self, n_customers: usize) -> usize {
        self.sigma_swap.unwrap_or((n_customers / 10).max(1))
    }
}

/// Per-generation statistics handed to observers.
#[derive(Clone, Copy, Debug)]
pub struct GenerationStats<T> {
    /// Number of completed generations.
    pub generation: usize,
    pub best_tour_length: T,
    pub boosted: bool,
}

/// Random initial population.
///
/// Mandatory customers are active with rate 0; appeared dynamic customers get
/// a fair random bit and the initial rate; the permutation is uniform and then
/// repaired against the committed prefix.
pub fn init_random<T: Scalar>(view: &EraView<'_, T>, config: &EmoaConfig<T>, rng: &mut Rng) -> Vec<Individual<T>> {
    (0..config.mu)
        .map(|_| {
            let mut ind = Individual::new(view.instance);
            let mut perm = ind.perm().to_vec();
            perm.shuffle(rng);
            ind.set_perm(perm);
            for id in view.instance.dynamic_ids() {
                if view.is_free(id) {
                    ind.set_active(id, rng.random_bool(0.5));
                    ind.set_rate(id, config.initial_rate);
                }
            }
            repair(&mut ind, view);
            ind
        })
        .collect()
}

/// Seeds the next era's population from the previous one.
///
/// The decision maker's pick comes first, followed by the previous
/// population; the result is cut or padded (with copies of the pick) to
/// `mu`. Customers that appeared since the last era get the initial rate and
/// a random bit, then everything is repaired against the new commitment.
pub fn init_transfer<T: Scalar>(
    previous: &[Individual<T>],
    selected: &Individual<T>,
    view: &EraView<'_, T>,
    config: &EmoaConfig<T>,
    rng: &mut Rng,
) -> Vec<Individual<T>> {
    let sources = std::iter::once(selected).chain(previous.iter()).chain(std::iter::repeat(selected));
    sources
        .take(config.mu)
        .map(|source| {
            let mut ind = source.clone();
            repair(&mut ind, view);
            for id in view.instance.dynamic_ids() {
                if view.is_free(id) && ind.rate(id) == T::zero() {
                    ind.set_active(id, rng.random_bool(0.5));
                    ind.set_rate(id, config.initial_rate);
                }
            }
            ind
        })
        .collect()
}

/// Bit flips with per-customer probabilities, then with probability `p_swap`
/// `sigma` random transpositions among the non-committed permutation
/// positions, then repair.
pub fn mutate<T: Scalar>(ind: &mut Individual<T>, view: &EraView<'_, T>, config: &EmoaConfig<T>, sigma: usize, rng: &mut Rng) {
    for id in 2..view.instance.n() {
        let rate = ind.rate(id);
        if rate > T::zero() && rng.random::<f64>() < rate.as_f64() {
            let active = ind.is_active(id);
            ind.set_active(id, !active);
        }
    }
    let fixed = view.committed.len();
    let len = ind.perm().len();
    if len - fixed >= 2 && rng.random::<f64>() < config.p_swap.as_f64() {
        for _ in 0..sigma {
            let a = rng.random_range(fixed..len);
            let b = rng.random_range(fixed..len);
            ind.swap_positions(a, b);
        }
    }
    repair(ind, view);
}

/// Fronts of mutually non-dominated points, best first (Deb's fast
/// non-dominated sorting).
pub fn nondominated_sort<T: Scalar>(points: &[ObjectiveVector<T>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i].dominates(&points[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if points[j].dominates(&points[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of `front` (same order). Boundary points
/// of either objective get infinity.
pub fn crowding_distance<T: Scalar>(points: &[ObjectiveVector<T>], front: &[usize]) -> Vec<T> {
    let m = front.len();
    let mut distance = vec![T::zero(); m];
    if m <= 2 {
        return vec![T::infinity(); m];
    }
    let tour = |p: &ObjectiveVector<T>| p.tour_length;
    let unvisited = |p: &ObjectiveVector<T>| T::of_count(p.unvisited);
    for value in [&tour as &dyn Fn(&ObjectiveVector<T>) -> T, &unvisited] {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| total_cmp(value(&points[front[a]]), value(&points[front[b]])));
        let lo = value(&points[front[order[0]]]);
        let hi = value(&points[front[order[m - 1]]]);
        distance[order[0]] = T::infinity();
        distance[order[m - 1]] = T::infinity();
        let span = hi - lo;
        if span <= T::zero() {
            continue;
        }
        for k in 1..m - 1 {
            let gap = value(&points[front[order[k + 1]]]) - value(&points[front[order[k - 1]]]);
            distance[order[k]] += gap / span;
        }
    }
    distance
}

/// NSGA-II survival: whole fronts by rank, the last partial front by
/// descending crowding distance. All individuals must be evaluated.
pub fn survival_select<T: Scalar>(population: Vec<Individual<T>>, mu: usize) -> Vec<Individual<T>> {
    if population.len() <= mu {
        return population;
    }
    let points: Vec<ObjectiveVector<T>> =
        population.iter().map(|i| i.objectives().expect("survival selection needs evaluated individuals")).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(mu);
    for front in nondominated_sort(&points) {
        let room = mu - chosen.len();
        if front.len() <= room {
            chosen.extend(front);
        } else {
            let crowding = crowding_distance(&points, &front);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| total_cmp(crowding[b], crowding[a]));
            chosen.extend(order.into_iter().take(room).map(|k| front[k]));
        }
        if chosen.len() == mu {
            break;
        }
    }
    chosen.sort_unstable();
    let mut slots: Vec<Option<Individual<T>>> = population.into_iter().map(Some).collect();
    chosen.into_iter().map(|i| slots[i].take().expect("index chosen once")).collect()
}

fn boost_all<T: Scalar>(population: &mut [Individual<T>], view: &EraView<'_, T>, limit: Option<Duration>) {
    population.par_iter_mut().for_each(|ind| {
        localsearch::boost(ind, view, limit);
    });
}

fn evaluate_all<T: Scalar>(population: &mut [Individual<T>], view: &EraView<'_, T>) -> Result<()> {
    for ind in population.iter_mut() {
        if ind.objectives().is_none() {
            evaluate(ind, view)?;
        }
    }
    Ok(())
}

fn best_length<T: Scalar>(population: &[Individual<T>]) -> T {
    population.iter().filter_map(|i| i.objectives()).map(|o| o.tour_length).fold(T::infinity(), T::min)
}

/// Runs one era's static optimization from `initial`.
///
/// Returns the non-dominated set of the final population (tagged with `era`)
/// and the population itself.
pub fn run_static<T: Scalar>(
    view: &EraView<'_, T>,
    config: &EmoaConfig<T>,
    initial: Vec<Individual<T>>,
    era: usize,
    rng: &mut Rng,
    observer: &mut dyn FnMut(&GenerationStats<T>),
) -> Result<(ApproximationSet<T>, Vec<Individual<T>>)> {
    config.validate()?;
    let mut population = initial;
    if population.is_empty() {
        return Err(param("initial population is empty"));
    }
    for ind in population.iter_mut() {
        repair(ind, view);
    }
    evaluate_all(&mut population, view)?;

    let sigma = config.sigma_for(view.instance.n());
    let schedule = config.ls_schedule.generations(config.generations);
    for generation in 0..config.generations {
        let boosted = schedule.binary_search(&generation).is_ok();
        if boosted {
            boost_all(&mut population, view, config.ls_time_limit);
            evaluate_all(&mut population, view)?;
        }
        let mut offspring = Vec::with_capacity(config.lambda);
        for _ in 0..config.lambda {
            let mut child = population[rng.random_range(0..population.len())].clone();
            mutate(&mut child, view, config, sigma, rng);
            evaluate(&mut child, view)?;
            offspring.push(child);
        }
        population.extend(offspring);
        population = survival_select(population, config.mu);
        observer(&GenerationStats { generation: generation + 1, best_tour_length: best_length(&population), boosted });
    }
    Ok((ApproximationSet::from_population(&population, era), population))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_uniform, EraLength, GeneratorConfig, Instance};
    use crate::model::{dominates, CommittedState};
    use crate::rng;

    fn instance(seed: u64) -> Instance<f64> {
        generate_uniform(&GeneratorConfig {
            n_mandatory: 10,
            n_dynamic: 30,
            n_eras: 4,
            delta: EraLength::Fixed(50.0),
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_config(seed: u64) -> EmoaConfig<f64> {
        EmoaConfig { mu: 20, lambda: 20, generations: 60, ls_time_limit: None, seed, ..Default::default() }
    }

    fn ov(t: f64, u: usize) -> ObjectiveVector<f64> {
        ObjectiveVector::new(t, u)
    }

    #[test]
    fn standard_schedule() {
        assert_eq!(BoostSchedule::Standard.generations(2000), vec![0, 1000, 1999]);
        assert_eq!(BoostSchedule::Standard.generations(1), vec![0]);
        assert!(BoostSchedule::Standard.generations(0).is_empty());
        assert_eq!(BoostSchedule::At(vec![5, 1, 5, 99]).generations(10), vec![1, 5]);
    }

    #[test]
    fn config_validation() {
        assert!(EmoaConfig::<f64>::default().validate().is_ok());
        assert!(EmoaConfig::<f64> { mu: 0, ..Default::default() }.validate().is_err());
        assert!(EmoaConfig::<f64> { p_swap: 1.0, ..Default::default() }.validate().is_err());
        assert!(EmoaConfig::<f64> { sigma_swap: Some(0), ..Default::default() }.validate().is_err());
        let full = EmoaConfig::<f64>::full_scale();
        assert_eq!((full.mu, full.lambda, full.generations), (100, 100, 65_000));
        assert_eq!(full.sigma_for(100), 10);
        assert_eq!(full.p_swap, 0.6);
    }

    #[test]
    fn random_init_is_feasible_and_reproducible() {
        let inst = instance(1);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 50.0);
        assert!(inst.appeared_dynamic(50.0) > 0);
        let cfg = small_config(0);
        let a = init_random(&view, &cfg, &mut rng::stream(3, &[]));
        let b = init_random(&view, &cfg, &mut rng::stream(3, &[]));
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.mu);
        for ind in &a {
            ind.check_feasible(&view).unwrap();
            assert!(inst.mandatory_ids().all(|id| ind.is_active(id)));
        }
    }

    #[test]
    fn no_appeared_dynamics_means_zero_unvisited() {
        let inst = instance(1);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 0.0);
        let mut pop = init_random(&view, &small_config(0), &mut rng::stream(3, &[]));
        for ind in pop.iter_mut() {
            assert_eq!(evaluate(ind, &view).unwrap().unvisited, 0);
        }
    }

    #[test]
    fn transfer_keeps_selected_and_repairs() {
        let inst = instance(2);
        let cfg = small_config(0);
        let empty = CommittedState::empty(inst.n());
        let early = EraView::new(&inst, &empty, 50.0);
        let mut r = rng::stream(1, &[]);
        let previous = init_random(&early, &cfg, &mut r);
        let selected = previous[3].clone();
        let prefix: Vec<usize> = selected.active_tour().take(2).collect();
        let committed = CommittedState::new(prefix, 100.0, inst.n()).unwrap();
        let view = EraView::new(&inst, &committed, 100.0);
        let pop = init_transfer(&previous, &selected, &view, &cfg, &mut r);
        assert_eq!(pop.len(), cfg.mu);
        for ind in &pop {
            ind.check_feasible(&view).unwrap();
            for id in inst.dynamic_ids() {
                if view.is_free(id) {
                    assert!(ind.rate(id) > 0.0, "free customer {id} must be mutable");
                }
            }
        }
        // The first member is the pick, up to the new customers' bits.
        let first = &pop[0];
        for id in inst.dynamic_ids().filter(|&id| inst.has_appeared(id, 50.0)) {
            assert_eq!(first.is_active(id), selected.is_active(id));
        }
        assert_eq!(first.perm(), selected.perm());

        let small = init_transfer(&previous[..2], &selected, &view, &cfg, &mut r);
        assert_eq!(small.len(), cfg.mu);
    }

    #[test]
    fn committed_positions_never_move() {
        let inst = instance(3);
        let cfg = small_config(0);
        let prefix = vec![4, 2, 7];
        let committed = CommittedState::new(prefix.clone(), 100.0, inst.n()).unwrap();
        let view = EraView::new(&inst, &committed, 100.0);
        let mut r = rng::stream(9, &[]);
        let mut ind = init_random(&view, &cfg, &mut r).remove(0);
        let sigma = cfg.sigma_for(inst.n());
        for _ in 0..10_000 {
            mutate(&mut ind, &view, &cfg, sigma, &mut r);
            assert_eq!(&ind.perm()[..3], prefix.as_slice());
            assert!(ind.check_feasible(&view).is_ok());
        }
    }

    #[test]
    fn zero_rates_without_swap_is_identity() {
        let inst = instance(3);
        let cfg = small_config(0);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 0.0);
        let base = init_random(&view, &cfg, &mut rng::stream(0, &[])).remove(0);
        assert!(base.rates().iter().all(|&r| r == 0.0));
        let (mut same, mut total) = (0, 0);
        for seed in 0..500 {
            let mut r = rng::stream(seed, &[]);
            let mut probe = r.clone();
            let swap_drawn = probe.random::<f64>() < cfg.p_swap;
            let mut ind = base.clone();
            mutate(&mut ind, &view, &cfg, 4, &mut r);
            total += 1;
            if !swap_drawn {
                assert_eq!(ind, base);
                same += 1;
            }
            assert_eq!(ind.bits(), base.bits());
        }
        assert!(same > 0 && same < total);
    }

    #[test]
    fn half_rate_flip_frequency() {
        let inst = instance(4);
        let cfg = small_config(0);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 200.0);
        let id = inst.dynamic_ids().find(|&id| inst.has_appeared(id, 200.0)).unwrap();
        let base = init_random(&view, &cfg, &mut rng::stream(0, &[])).remove(0);
        assert_eq!(base.rate(id), 0.5);
        let mut r = rng::stream(77, &[]);
        let trials = 10_000;
        let flips = (0..trials)
            .filter(|_| {
                let mut ind = base.clone();
                mutate(&mut ind, &view, &cfg, 1, &mut r);
                ind.is_active(id) != base.is_active(id)
            })
            .count();
        let freq = flips as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.02, "flip frequency {freq}");
    }

    fn peel(points: &[ObjectiveVector<f64>]) -> Vec<Vec<usize>> {
        let mut remaining: Vec<usize> = (0..points.len()).collect();
        let mut fronts = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| dominates(&points[j], &points[i])))
                .collect();
            remaining.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn sorting_matches_peeling() {
        let mut r = rng::stream(5, &[]);
        for _ in 0..50 {
            let pts: Vec<_> = (0..100).map(|_| ov(r.random_range(0..30) as f64, r.random_range(0..30))).collect();
            assert_eq!(nondominated_sort(&pts), peel(&pts));
        }
    }

    #[test]
    fn crowding_boundaries_infinite() {
        let pts = [ov(1.0, 5), ov(2.0, 3), ov(4.0, 2), ov(8.0, 0)];
        let cd = crowding_distance(&pts, &[0, 1, 2, 3]);
        assert!(cd[0].is_infinite() && cd[3].is_infinite());
        assert!((cd[1] - (3.0 / 7.0 + 3.0 / 5.0)).abs() < 1e-12);
        assert!((cd[2] - (6.0 / 7.0 + 3.0 / 5.0)).abs() < 1e-12);
    }

    fn with_objectives(inst: &Instance<f64>, pts: &[ObjectiveVector<f64>]) -> Vec<Individual<f64>> {
        pts.iter().map(|&o| Individual::new(inst).with_objectives(o)).collect()
    }

    #[test]
    fn survival_single_front_uses_crowding() {
        let inst = instance(0);
        let pts: Vec<_> = (0..10).map(|k| ov(k as f64, 10 - k)).collect();
        let pop = with_objectives(&inst, &pts);
        let survivors = survival_select(pop, 4);
        let objs: Vec<_> = survivors.iter().map(|i| i.objectives().unwrap()).collect();
        assert!(objs.contains(&ov(0.0, 10)) && objs.contains(&ov(9.0, 1)));
        assert_eq!(objs.len(), 4);
    }

    #[test]
    fn survival_keeps_dominating_point() {
        let inst = instance(0);
        let mut r = rng::stream(6, &[]);
        for _ in 0..100 {
            let mut pts: Vec<_> = (0..19).map(|_| ov(r.random_range(10..50) as f64, r.random_range(1..20))).collect();
            pts.push(ov(1.0, 0));
            let pop = with_objectives(&inst, &pts);
            let survivors = survival_select(pop, 5);
            assert!(survivors.iter().any(|i| i.objectives() == Some(ov(1.0, 0))));
        }
    }

    #[test]
    fn zero_generations_returns_initial_front() {
        let inst = instance(5);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 100.0);
        let cfg = EmoaConfig { generations: 0, ..small_config(0) };
        let mut r = rng::stream(0, &[]);
        let init = init_random(&view, &cfg, &mut r);
        let (front, pop) = run_static(&view, &cfg, init, 2, &mut r, &mut |_| {}).unwrap();
        assert_eq!(pop.len(), cfg.mu);
        assert_eq!(front, ApproximationSet::from_population(&pop, 2));
    }

    #[test]
    fn nothing_appeared_gives_singleton() {
        let inst = instance(5);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 0.0);
        let cfg = small_config(1);
        let mut r = rng::stream(0, &[]);
        let init = init_random(&view, &cfg, &mut r);
        let (front, _) = run_static(&view, &cfg, init, 1, &mut r, &mut |_| {}).unwrap();
        assert_eq!(front.len(), 1);
    }

    #[test]
    fn final_front_audit_and_elitism() {
        let inst = instance(6);
        let committed = CommittedState::new(vec![3, 5], 100.0, inst.n()).unwrap();
        let view = EraView::new(&inst, &committed, 100.0);
        let cfg = small_config(2);
        let mut r = rng::stream(2, &[]);
        let init = init_random(&view, &cfg, &mut r);
        let mut trace: Vec<GenerationStats<f64>> = Vec::new();
        let (front, pop) = run_static(&view, &cfg, init, 3, &mut r, &mut |s| trace.push(*s)).unwrap();
        assert_eq!(trace.len(), cfg.generations);
        for w in trace.windows(2) {
            assert!(w[1].best_tour_length <= w[0].best_tour_length + 1e-9);
        }
        let objs: Vec<_> = front.objectives().collect();
        for a in &objs {
            assert!(a.unvisited <= view.upper_bound());
            for b in &objs {
                assert!(!dominates(a, b));
            }
        }
        for w in objs.windows(2) {
            assert!(w[0].tour_length < w[1].tour_length && w[0].unvisited > w[1].unvisited);
        }
        for ind in front.members().iter().map(|m| &m.0).chain(pop.iter()) {
            let mut copy = ind.clone();
            assert!(!repair(&mut copy, &view));
            ind.check_feasible(&view).unwrap();
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let inst = instance(7);
        let committed = CommittedState::empty(inst.n());
        let view = EraView::new(&inst, &committed, 100.0);
        let cfg = small_config(3);
        let run = || {
            let mut r = rng::stream(3, &[]);
            let init = init_random(&view, &cfg, &mut r);
            run_static(&view, &cfg, init, 2, &mut r, &mut |_| {}).unwrap().1
        };
        assert_eq!(run(), run());
    }
}
