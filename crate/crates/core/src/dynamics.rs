//! The era driver: advances the vehicle along the chosen tour, derives the
//! committed prefix and upper bound for each era, runs the static optimizer,
//! asks the decision maker, and records everything in an [`EraTrace`].
//! Also hosts the clairvoyant baseline.
//!
//! The vehicle leaves depot 1 at time 0 and drives one distance unit per time
//! unit. A customer is committed once the vehicle has fully reached it.

use std::io::Write;

use crate::decisions::{Decision, DecisionRequest, DecisionSource};
use crate::emoa::{self, EmoaConfig, GenerationStats};
use crate::error::{contract, param, Error, Result};
use crate::instance::{CustomerId, Instance};
use crate::localsearch::{self, LocalSearchOptions};
use crate::metrics::to_aposteriori;
use crate::model::{evaluate, ApproximationSet, CommittedState, EraView, Individual, ObjectiveVector};
use crate::rng;
use crate::Scalar;

/// Extends the committed prefix with every active customer of `selected`
/// that the vehicle reaches by `to_time`.
pub fn advance_clock<T: Scalar>(
    selected: &Individual<T>,
    committed: &CommittedState<T>,
    from_time: T,
    to_time: T,
    instance: &Instance<T>,
) -> Result<CommittedState<T>> {
    if to_time < from_time {
        return Err(param(format!("clock cannot run backwards ({from_time} -> {to_time})")));
    }
    if !selected.perm().starts_with(committed.prefix()) || !committed.prefix().iter().all(|&id| selected.is_active(id)) {
        return Err(contract("selected tour does not continue the committed prefix"));
    }
    let mut prefix = Vec::new();
    let mut position = instance.start_depot();
    let mut clock = T::zero();
    for id in selected.active_tour() {
        clock += instance.d(position, id);
        if clock > to_time {
            break;
        }
        prefix.push(id);
        position = id;
    }
    if prefix.len() < committed.len() {
        return Err(contract("committed customers are not reachable by the new era start"));
    }
    CommittedState::new(prefix, to_time, instance.n())
}

/// Appeared dynamic customers minus those already served.
pub fn upper_bound<T: Scalar>(committed: &CommittedState<T>, instance: &Instance<T>, now: T) -> usize {
    EraView::new(instance, committed, now).upper_bound()
}

#[derive(Clone, Debug)]
pub struct EraRecord<T> {
    /// 1-based era index.
    pub era: usize,
    pub start_time: T,
    /// Dynamic customers that had requested service at `start_time`.
    pub appeared: usize,
    pub upper_bound: usize,
    pub committed: CommittedState<T>,
    pub front: ApproximationSet<T>,
    pub decision: Decision<T>,
    /// 1-based rank of the chosen member in `front`.
    pub chosen_rank: usize,
}

impl<T: Scalar> EraRecord<T> {
    pub fn chosen(&self) -> &(Individual<T>, ObjectiveVector<T>) {
        self.front.get(self.chosen_rank).expect("chosen rank lies within the front")
    }
}

#[derive(Clone, Debug)]
pub struct EraTrace<T> {
    pub records: Vec<EraRecord<T>>,
    pub n_eras: usize,
    pub delta: T,
    pub total_dynamic: usize,
}

impl<T: Scalar> EraTrace<T> {
    pub fn is_complete(&self) -> bool {
        self.records.len() == self.n_eras
    }

    /// The chosen solution of the last recorded era.
    pub fn final_choice(&self) -> Option<&(Individual<T>, ObjectiveVector<T>)> {
        self.records.last().map(EraRecord::chosen)
    }

    pub fn final_record(&self) -> Option<&EraRecord<T>> {
        self.records.last()
    }

    /// Decisions as resolved ranks, suitable for [`crate::decisions::Replay`].
    pub fn resolved_decisions(&self) -> Vec<Decision<T>> {
        self.records.iter().map(|r| Decision::Index(r.chosen_rank)).collect()
    }

    /// One row per (era, front member):
    /// `era,t,tour_length,unvisited,unvisited_aposteriori,selected,upper_bound`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "era,t,tour_length,unvisited,unvisited_aposteriori,selected,upper_bound")?;
        for r in &self.records {
            for (rank, (_, obj)) in r.front.members().iter().enumerate() {
                let apost = to_aposteriori(*obj, r.appeared, self.total_dynamic);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.era,
                    r.start_time,
                    obj.tour_length,
                    obj.unvisited,
                    apost.unvisited,
                    u8::from(rank + 1 == r.chosen_rank),
                    r.upper_bound
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Final planned route with arrival times and, for driven customers, the
    /// era at whose start they were committed.
    pub fn write_tour<W: Write>(&self, instance: &Instance<T>, mut out: W) -> Result<()> {
        let Some((ind, _)) = self.final_choice() else {
            return Err(contract("trace has no decisions"));
        };
        let committed_in = |id: CustomerId| self.records.iter().find(|r| r.committed.contains(id)).map(|r| r.era);
        writeln!(out, "# position id kind arrival_time committed_era")?;
        let mut clock = T::zero();
        let route = ind.route(instance);
        for (pos, &id) in route.iter().enumerate() {
            if pos > 0 {
                clock += instance.d(route[pos - 1], id);
            }
            let era = if id == instance.start_depot() { Some(1) } else { committed_in(id) };
            let era = era.map_or_else(|| "-".to_string(), |e| e.to_string());
            writeln!(out, "{} {} {} {} {}", pos + 1, id, instance.kind(id), clock, era)?;
        }
        Ok(())
    }
}

/// Progress notifications from [`run_demoa_observed`].
#[derive(Debug)]
pub enum EraEvent<'a, T> {
    Started { era: usize, now: T, upper_bound: usize },
    Generation { era: usize, stats: GenerationStats<T> },
    AwaitingDecision { era: usize, front: &'a ApproximationSet<T>, upper_bound: usize },
    Decided { record: &'a EraRecord<T> },
}

/// A run stopped early, with the eras completed so far.
#[derive(Debug)]
pub struct PartialRun<T> {
    pub error: Error,
    pub trace: EraTrace<T>,
}

impl<T> std::fmt::Display for PartialRun<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted after {} eras: {}", self.trace_len(), self.error)
    }
}

impl<T> PartialRun<T> {
    fn trace_len(&self) -> usize {
        self.trace.records.len()
    }
}

/// Era-1 solution: the shortest found mandatory-only Hamiltonian path.
pub fn solve_first_era<T: Scalar>(instance: &Instance<T>, config: &EmoaConfig<T>) -> Result<(Individual<T>, ObjectiveVector<T>)> {
    let (start, end) = (instance.start_depot(), instance.end_depot());
    let mandatory: Vec<CustomerId> = instance.mandatory_ids().collect();
    let mut ind = Individual::new(instance);
    if instance.n() > 2 {
        let nodes: Vec<CustomerId> = std::iter::once(start).chain(mandatory.iter().copied()).chain([end]).collect();
        let options = LocalSearchOptions { time_limit: config.ls_time_limit, seed: rng::derive_seed(config.seed, &[1]) };
        let path = localsearch::solve_hpp(&|i, j| instance.d(i, j), &nodes, start, end, &options)?;
        let perm: Vec<CustomerId> = path[1..path.len() - 1].iter().copied().chain(instance.dynamic_ids()).collect();
        ind.set_perm(perm);
    }
    let committed = CommittedState::empty(instance.n());
    let objectives = evaluate(&mut ind, &EraView::new(instance, &committed, T::zero()))?;
    Ok((ind, objectives))
}

pub fn run_demoa<T: Scalar>(
    instance: &Instance<T>,
    n_eras: usize,
    delta: T,
    source: &mut dyn DecisionSource<T>,
    config: &EmoaConfig<T>,
) -> std::result::Result<EraTrace<T>, Box<PartialRun<T>>> {
    run_demoa_observed(instance, n_eras, delta, source, config, &mut |_| {})
}

/// The full era loop. Era `j` starts at `(j - 1) * delta`.
pub fn run_demoa_observed<T: Scalar>(
    instance: &Instance<T>,
    n_eras: usize,
    delta: T,
    source: &mut dyn DecisionSource<T>,
    config: &EmoaConfig<T>,
    observer: &mut dyn FnMut(EraEvent<'_, T>),
) -> std::result::Result<EraTrace<T>, Box<PartialRun<T>>> {
    let mut trace = EraTrace { records: Vec::new(), n_eras, delta, total_dynamic: instance.n_dynamic() };
    match drive(instance, source, config, observer, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(Box::new(PartialRun { error, trace })),
    }
}

fn drive<T: Scalar>(
    instance: &Instance<T>,
    source: &mut dyn DecisionSource<T>,
    config: &EmoaConfig<T>,
    observer: &mut dyn FnMut(EraEvent<'_, T>),
    trace: &mut EraTrace<T>,
) -> Result<()> {
    let (n_eras, delta) = (trace.n_eras, trace.delta);
    if n_eras == 0 {
        return Err(param("n_eras must be at least 1"));
    }
    if delta <= T::zero() || !delta.is_finite() {
        return Err(param(format!("delta must be positive, got {delta}")));
    }
    config.validate()?;

    let mut population: Vec<Individual<T>> = Vec::new();
    for era in 1..=n_eras {
        let now = T::of_count(era - 1) * delta;
        let committed = match trace.records.last() {
            None => CommittedState::empty(instance.n()),
            Some(prev) => advance_clock(&prev.chosen().0, &prev.committed, prev.start_time, now, instance)?,
        };
        let view = EraView::new(instance, &committed, now);
        let bound = view.upper_bound();
        observer(EraEvent::Started { era, now, upper_bound: bound });

        let front = if era == 1 {
            let (ind, obj) = solve_first_era(instance, config)?;
            population = vec![ind.clone()];
            ApproximationSet::singleton(ind, obj, 1)
        } else {
            let mut rng = rng::stream(config.seed, &[era as u64]);
            let initial = match trace.records.last() {
                Some(prev) if era >= 3 => emoa::init_transfer(&population, &prev.chosen().0, &view, config, &mut rng),
                _ => emoa::init_random(&view, config, &mut rng),
            };
            let (front, final_population) = emoa::run_static(&view, config, initial, era, &mut rng, &mut |stats| {
                observer(EraEvent::Generation { era, stats: *stats })
            })?;
            population = final_population;
            front
        };

        observer(EraEvent::AwaitingDecision { era, front: &front, upper_bound: bound });
        let decision = source.decide(&DecisionRequest { era, now, upper_bound: bound, front: &front })?;
        let chosen_rank = decision.resolve(front.len())?;
        let record = EraRecord {
            era,
            start_time: now,
            appeared: instance.appeared_dynamic(now),
            upper_bound: bound,
            committed,
            front,
            decision,
            chosen_rank,
        };
        trace.records.push(record);
        observer(EraEvent::Decided { record: trace.records.last().expect("just pushed") });
    }
    Ok(())
}

/// Optimizer with full knowledge of all requests and nothing driven yet:
/// the non-dominated union of `n_repeats` independent static runs.
pub fn run_clairvoyant<T: Scalar>(instance: &Instance<T>, config: &EmoaConfig<T>, n_repeats: usize) -> Result<ApproximationSet<T>> {
    run_clairvoyant_observed(instance, config, n_repeats, &mut |_, _| {})
}

/// Like [`run_clairvoyant`], reporting `(repeat, completed generations)`.
pub fn run_clairvoyant_observed<T: Scalar>(
    instance: &Instance<T>,
    config: &EmoaConfig<T>,
    n_repeats: usize,
    observer: &mut dyn FnMut(usize, usize),
) -> Result<ApproximationSet<T>> {
    if n_repeats == 0 {
        return Err(param("n_repeats must be positive"));
    }
    let committed = CommittedState::empty(instance.n());
    let view = EraView::new(instance, &committed, T::infinity());
    let mut pooled: Vec<Individual<T>> = Vec::new();
    for repeat in 0..n_repeats {
        let mut rng = rng::stream(config.seed, &[rng::hash_str("clairvoyant"), repeat as u64]);
        let mut initial = emoa::init_random(&view, config, &mut rng);
        if instance.n_dynamic() == 0 {
            initial.truncate(1);
            initial[0] = solve_first_era(instance, config)?.0;
        }
        let (front, _) = emoa::run_static(&view, config, initial, 0, &mut rng, &mut |s| observer(repeat, s.generation))?;
        pooled.extend(front.members().iter().map(|m| m.0.clone()));
    }
    Ok(ApproximationSet::from_population(&pooled, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decisions::{DecisionPath, PathDecisionMaker, Replay};
    use crate::instance::{generate_uniform, Customer, CustomerKind, EraLength, GeneratorConfig};

    fn line_instance() -> Instance<f64> {
        // Depot at 0, customers at 3, 7, 12 on a line, end depot at 20.
        let c = |id, x, kind, t| Customer { id, x, y: 0.0, kind, request_time: t };
        Instance::new(
            vec![
                c(1, 0.0, CustomerKind::StartDepot, 0.0),
                c(2, 3.0, CustomerKind::Mandatory, 0.0),
                c(3, 7.0, CustomerKind::Dynamic, 1.0),
                c(4, 12.0, CustomerKind::Mandatory, 0.0),
                c(5, 20.0, CustomerKind::EndDepot, 0.0),
            ],
            "uniform",
            3,
            10.0,
            0,
        )
        .unwrap()
    }

    fn line_tour(inst: &Instance<f64>) -> Individual<f64> {
        let mut ind = Individual::new(inst);
        ind.set_active(3, true);
        ind
    }

    #[test]
    fn clock_commits_reached_customers() {
        let inst = line_instance();
        let ind = line_tour(&inst);
        let empty = CommittedState::empty(inst.n());
        assert_eq!(advance_clock(&ind, &empty, 0.0, 8.0, &inst).unwrap().prefix(), &[2, 3]);
        assert!(advance_clock(&ind, &empty, 0.0, 0.0, &inst).unwrap().is_empty());
        assert_eq!(advance_clock(&ind, &empty, 0.0, 7.0, &inst).unwrap().prefix(), &[2, 3]);
        assert_eq!(advance_clock(&ind, &empty, 0.0, 100.0, &inst).unwrap().prefix(), &[2, 3, 4]);
        let two = advance_clock(&ind, &empty, 0.0, 8.0, &inst).unwrap();
        let later = advance_clock(&ind, &two, 8.0, 12.5, &inst).unwrap();
        assert!(later.extends(&two));
        assert!(advance_clock(&ind, &empty, 5.0, 1.0, &inst).is_err());

        let mut other = Individual::new(&inst);
        other.set_perm(vec![4, 3, 2]);
        assert!(matches!(advance_clock(&other, &two, 8.0, 20.0, &inst), Err(Error::Contract(_))));
    }

    #[test]
    fn bound_examples() {
        let inst = generate_uniform(&GeneratorConfig::<f64> {
            n_mandatory: 5,
            n_dynamic: 12,
            n_eras: 3,
            delta: EraLength::Fixed(10.0),
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let empty = CommittedState::empty(inst.n());
        assert_eq!(upper_bound(&empty, &inst, 0.0), 0);
        let now = 30.0;
        assert_eq!(upper_bound(&empty, &inst, now), 12);
        let served: Vec<usize> = inst.dynamic_ids().take(4).chain(inst.mandatory_ids().take(1)).collect();
        let committed = CommittedState::new(served, now, inst.n()).unwrap();
        assert_eq!(upper_bound(&committed, &inst, now), 8);
    }

    #[test]
    fn illustration_era_three() {
        // Three appeared, one served: at most two can be unvisited.
        let inst = line_instance();
        let c = |id, x: f64, y: f64, kind, t| Customer { id, x, y, kind, request_time: t };
        let inst = Instance::new(
            vec![
                c(1, 0.0, 0.0, CustomerKind::StartDepot, 0.0),
                c(2, 1.0, 1.0, CustomerKind::Mandatory, 0.0),
                c(3, 0.9, -0.2, CustomerKind::Dynamic, 0.5),
                c(4, 1.2, 1.8, CustomerKind::Dynamic, 0.5),
                c(5, 2.6, 0.7, CustomerKind::Dynamic, 1.5),
                c(6, 2.0, 0.2, CustomerKind::Mandatory, 0.0),
                c(7, 3.0, 2.0, CustomerKind::EndDepot, 0.0),
            ],
            inst.topology(),
            3,
            1.0,
            0,
        )
        .unwrap();
        let committed = CommittedState::new(vec![2, 3], 2.0, inst.n()).unwrap();
        assert_eq!(upper_bound(&committed, &inst, 2.0), 2);
    }

    fn small_instance(seed: u64) -> Instance<f64> {
        generate_uniform(&GeneratorConfig::<f64> {
            n_mandatory: 8,
            n_dynamic: 24,
            n_eras: 4,
            delta: EraLength::Auto,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick() -> EmoaConfig<f64> {
        EmoaConfig { mu: 16, lambda: 16, generations: 40, ls_time_limit: None, seed: 3, ..Default::default() }
    }

    #[test]
    fn single_era_is_the_mandatory_path() {
        let inst = small_instance(1);
        let mut dm = PathDecisionMaker::new(DecisionPath::constant(0.5, 1).unwrap());
        let trace = run_demoa(&inst, 1, inst.delta(), &mut dm, &quick()).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].front.len(), 1);
        let (ind, obj) = trace.final_choice().unwrap();
        assert_eq!(ind.active_count(), inst.mandatory_ids().count());
        assert_eq!(obj.unvisited, 0);
    }

    #[test]
    fn trace_invariants() {
        let inst = small_instance(2);
        let cfg = quick();
        let mut dm = PathDecisionMaker::new("0.25,0.75,0.5,0.75".parse::<DecisionPath<f64>>().unwrap());
        let trace = run_demoa(&inst, 4, inst.delta(), &mut dm, &cfg).unwrap();
        assert!(trace.is_complete());
        assert_eq!(trace.records[0].front.len(), 1);
        for (j, r) in trace.records.iter().enumerate() {
            assert_eq!(r.era, j + 1);
            assert!((r.start_time - j as f64 * inst.delta()).abs() < 1e-9);
            assert!(r.chosen().1.unvisited <= r.upper_bound);
            assert_eq!(r.upper_bound, upper_bound(&r.committed, &inst, r.start_time));
            if j > 0 {
                let prev = &trace.records[j - 1];
                assert!(r.committed.extends(&prev.committed));
                // Every later pick drives the committed customers in order.
                assert!(r.chosen().0.perm().starts_with(prev.committed.prefix()));
            }
        }
        let csv = trace.to_csv_string();
        let rows = csv.lines().count() - 1;
        assert_eq!(rows, trace.records.iter().map(|r| r.front.len()).sum::<usize>());
        assert_eq!(csv.lines().filter(|l| l.split(',').nth(5) == Some("1")).count(), 4);
        let mut tour = Vec::new();
        trace.write_tour(&inst, &mut tour).unwrap();
        let tour = String::from_utf8(tour).unwrap();
        assert!(tour.lines().nth(1).unwrap().starts_with("1 1 SD 0 1"));
    }

    #[test]
    fn replay_reproduces_trace() {
        let inst = small_instance(4);
        let cfg = quick();
        let mut dm = PathDecisionMaker::new(DecisionPath::constant(0.5, 3).unwrap());
        let a = run_demoa(&inst, 3, inst.delta(), &mut dm, &cfg).unwrap();
        let mut replay = Replay::new(a.resolved_decisions());
        let b = run_demoa(&inst, 3, inst.delta(), &mut replay, &cfg).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn failing_source_returns_partial_trace() {
        let inst = small_instance(5);
        let mut dm = PathDecisionMaker::new(DecisionPath::constant(0.5, 2).unwrap());
        let partial = run_demoa(&inst, 3, inst.delta(), &mut dm, &quick()).unwrap_err();
        assert_eq!(partial.trace.records.len(), 2);
        assert!(matches!(partial.error, Error::Aborted(_)));
    }

    #[test]
    fn clairvoyant_front() {
        let inst = small_instance(6);
        let cfg = quick();
        let union = run_clairvoyant(&inst, &cfg, 3).unwrap();
        let objs: Vec<_> = union.objectives().collect();
        for a in &objs {
            for b in &objs {
                assert!(!a.dominates(b));
            }
        }
        let no_dyn = generate_uniform(&GeneratorConfig::<f64> { n_mandatory: 8, n_dynamic: 0, seed: 1, ..Default::default() }).unwrap();
        assert_eq!(run_clairvoyant(&no_dyn, &cfg, 2).unwrap().len(), 1);
        assert!(run_clairvoyant(&inst, &cfg, 0).is_err());
    }
}
