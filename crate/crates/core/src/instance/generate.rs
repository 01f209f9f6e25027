//! Random instance generators.
//!
//! Depots take the first and last ids, non-depot mandatory customers the ids
//! right after the start depot, and dynamic customers the rest.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Customer, CustomerKind, Instance};
use crate::error::{param, Error, Result};
use crate::localsearch::{self, LocalSearchOptions};
use crate::rng;
use crate::Scalar;

const MAX_CENTER_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Uniform,
    Clustered(usize),
}

impl Topology {
    pub fn label(self) -> String {
        match self {
            Topology::Uniform => "uniform".to_string(),
            Topology::Clustered(k) => format!("cl{k}"),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Topology::Uniform),
            "cl2" => Ok(Topology::Clustered(2)),
            "cl3" => Ok(Topology::Clustered(3)),
            other => Err(param(format!("unknown topology {other:?} (expected uniform, cl2 or cl3)"))),
        }
    }
}

/// Era length used when assigning request times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EraLength<T> {
    Fixed(T),
    /// Length of the mandatory-only Hamiltonian path divided by the number
    /// of eras, so the planned mandatory tour roughly spans the horizon.
    Auto,
}

impl<T: Scalar> FromStr for EraLength<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(EraLength::Auto);
        }
        s.parse::<T>()
            .map(EraLength::Fixed)
            .map_err(|_| param(format!("era length must be a number or \"auto\", got {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig<T> {
    /// Mandatory customers including both depots.
    pub n_mandatory: usize,
    pub n_dynamic: usize,
    pub side: T,
    pub n_eras: usize,
    pub delta: EraLength<T>,
    pub seed: u64,
}

impl<T: Scalar> Default for GeneratorConfig<T> {
    fn default() -> Self {
        Self {
            n_mandatory: 25,
            n_dynamic: 75,
            side: T::of(100.0),
            n_eras: 7,
            delta: EraLength::Auto,
            seed: 0,
        }
    }
}

impl<T: Scalar> GeneratorConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.n_mandatory < 2 {
            return Err(param("n_mandatory must be at least 2 (both depots are mandatory)"));
        }
        if self.side <= T::zero() || !self.side.is_finite() {
            return Err(param(format!("side must be positive, got {}", self.side)));
        }
        if self.n_eras < 2 {
            return Err(param("n_eras must be at least 2"));
        }
        if let EraLength::Fixed(d) = self.delta {
            if d <= T::zero() || !d.is_finite() {
                return Err(param(format!("delta must be positive, got {d}")));
            }
        }
        Ok(())
    }

    fn kind_of(&self, id: usize) -> CustomerKind {
        let n = self.n_mandatory + self.n_dynamic;
        if id == 1 {
            CustomerKind::StartDepot
        } else if id == n {
            CustomerKind::EndDepot
        } else if id < self.n_mandatory {
            CustomerKind::Mandatory
        } else {
            CustomerKind::Dynamic
        }
    }
}

pub fn generate<T: Scalar>(topology: Topology, config: &GeneratorConfig<T>) -> Result<Instance<T>> {
    match topology {
        Topology::Uniform => generate_uniform(config),
        Topology::Clustered(k) => generate_clustered(k, config),
    }
}

/// Customers i.i.d. uniform in `[0, side]^2`.
pub fn generate_uniform<T: Scalar>(config: &GeneratorConfig<T>) -> Result<Instance<T>> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, &[rng::hash_str("uniform")]);
    let side = config.side.as_f64();
    let n = config.n_mandatory + config.n_dynamic;
    let points = (0..n)
        .map(|_| (rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect();
    finish(config, points, Topology::Uniform)
}

/// Customers drawn around `n_clusters` well separated centers.
///
/// Centers are uniform in the square with pairwise distance at least
/// `side / 2`. The depots belong to the first cluster, the remaining
/// customers are dealt round-robin and scattered with an isotropic Gaussian
/// of standard deviation `side / 20`, clipped to the square.
pub fn generate_clustered<T: Scalar>(n_clusters: usize, config: &GeneratorConfig<T>) -> Result<Instance<T>> {
    config.validate()?;
    if !(2..=3).contains(&n_clusters) {
        return Err(param(format!("n_clusters must be 2 or 3, got {n_clusters}")));
    }
    let topology = Topology::Clustered(n_clusters);
    let mut rng = rng::stream(config.seed, &[rng::hash_str(&topology.label())]);
    let side = config.side.as_f64();
    let min_sep = side / 2.0;

    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(n_clusters);
    let mut attempts = 0;
    while centers.len() < n_clusters {
        if attempts == MAX_CENTER_ATTEMPTS {
            return Err(Error::Generation(format!(
                "could not place {n_clusters} centers {min_sep} apart in {MAX_CENTER_ATTEMPTS} attempts"
            )));
        }
        attempts += 1;
        let c = (rng.random::<f64>() * side, rng.random::<f64>() * side);
        if centers.iter().all(|o| (o.0 - c.0).hypot(o.1 - c.1) >= min_sep) {
            centers.push(c);
        }
    }

    let noise = Normal::new(0.0, side / 20.0).map_err(|e| Error::Generation(e.to_string()))?;
    let n = config.n_mandatory + config.n_dynamic;
    let points = (1..=n)
        .map(|id| {
            let cluster = if id == 1 || id == n { 0 } else { (id - 2) % n_clusters };
            let (cx, cy) = centers[cluster];
            let x = (cx + noise.sample(&mut rng)).clamp(0.0, side);
            let y = (cy + noise.sample(&mut rng)).clamp(0.0, side);
            (x, y)
        })
        .collect();
    finish(config, points, topology)
}

fn finish<T: Scalar>(config: &GeneratorConfig<T>, points: Vec<(f64, f64)>, topology: Topology) -> Result<Instance<T>> {
    let mut customers: Vec<Customer<T>> = points
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| Customer {
            id: i + 1,
            x: T::of(x),
            y: T::of(y),
            kind: config.kind_of(i + 1),
            request_time: T::zero(),
        })
        .collect();
    let delta = match config.delta {
        EraLength::Fixed(d) => d,
        EraLength::Auto => auto_delta(&customers, config.n_eras)?,
    };
    draw_request_times(&mut customers, config.n_eras, delta, config.seed);
    Instance::new(customers, topology.label(), config.n_eras, delta, config.seed)
}

fn auto_delta<T: Scalar>(customers: &[Customer<T>], n_eras: usize) -> Result<T> {
    let n = customers.len();
    let dist = |i: usize, j: usize| {
        let (a, b) = (&customers[i - 1], &customers[j - 1]);
        (a.x - b.x).hypot(a.y - b.y)
    };
    let nodes: Vec<usize> = customers
        .iter()
        .filter(|c| c.kind != CustomerKind::Dynamic)
        .map(|c| c.id)
        .collect();
    let path = localsearch::solve_hpp(&dist, &nodes, 1, n, &LocalSearchOptions::default())?;
    let length = localsearch::path_length(&dist, &path);
    if length > T::zero() {
        Ok(length / T::of_count(n_eras))
    } else {
        // All mandatory customers on one spot; any positive era length works.
        Ok(T::one())
    }
}

/// Request times uniform on `(0, (n_eras - 1) * delta]`, so that every
/// dynamic customer is visible to at least the last planning era.
fn draw_request_times<T: Scalar>(customers: &mut [Customer<T>], n_eras: usize, delta: T, seed: u64) {
    let mut rng = rng::stream(seed, &[rng::hash_str("request-times")]);
    let latest = T::of_count(n_eras - 1) * delta;
    for c in customers.iter_mut() {
        c.request_time = if c.kind == CustomerKind::Dynamic {
            let u: f64 = rng.random();
            let t = T::of(1.0 - u) * latest;
            if t > T::zero() { t } else { latest }
        } else {
            T::zero()
        };
    }
}

/// Redraws all dynamic request times for a new era schedule.
pub fn assign_request_times<T: Scalar>(instance: &Instance<T>, n_eras: usize, delta: T, seed: u64) -> Result<Instance<T>> {
    if n_eras < 2 {
        return Err(param("n_eras must be at least 2"));
    }
    if delta <= T::zero() || !delta.is_finite() {
        return Err(param(format!("delta must be positive, got {delta}")));
    }
    let mut customers = instance.customers().to_vec();
    draw_request_times(&mut customers, n_eras, delta, seed);
    instance.with_schedule(customers, n_eras, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::write_instance;

    fn config(n_mandatory: usize, n_dynamic: usize, seed: u64) -> GeneratorConfig<f64> {
        GeneratorConfig { n_mandatory, n_dynamic, seed, delta: EraLength::Fixed(100.0), ..Default::default() }
    }

    fn bytes(inst: &Instance<f64>) -> Vec<u8> {
        let mut out = Vec::new();
        write_instance(inst, &mut out).unwrap();
        out
    }

    #[test]
    fn uniform_counts() {
        let inst = generate_uniform(&config(25, 75, 11)).unwrap();
        assert_eq!(inst.n(), 100);
        assert_eq!(inst.n_dynamic(), 75);
        assert_eq!(inst.mandatory_ids().count(), 23);
        assert_eq!(inst.kind(1), CustomerKind::StartDepot);
        assert_eq!(inst.kind(100), CustomerKind::EndDepot);
        for c in inst.customers() {
            assert!((0.0..=100.0).contains(&c.x) && (0.0..=100.0).contains(&c.y));
        }
    }

    #[test]
    fn depots_only() {
        let inst = generate_uniform(&config(2, 0, 1)).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.n_dynamic(), 0);
        let inst = generate_clustered(2, &config(2, 0, 1)).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.topology(), "cl2");
    }

    #[test]
    fn deterministic() {
        for topo in [Topology::Uniform, Topology::Clustered(2), Topology::Clustered(3)] {
            let cfg = GeneratorConfig { seed: 7, ..GeneratorConfig::<f64>::default() };
            assert_eq!(bytes(&generate(topo, &cfg).unwrap()), bytes(&generate(topo, &cfg).unwrap()));
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(generate_uniform(&config(1, 5, 0)), Err(Error::Parameter(_))));
        let bad_side = GeneratorConfig { side: 0.0, ..config(5, 5, 0) };
        assert!(generate_uniform(&bad_side).is_err());
        assert!(generate_clustered(4, &config(5, 5, 0)).is_err());
        let bad_delta = GeneratorConfig { delta: EraLength::Fixed(-1.0), ..config(5, 5, 0) };
        assert!(generate_uniform(&bad_delta).is_err());
    }

    #[test]
    fn request_times_within_last_planning_point() {
        let inst = generate_uniform(&config(25, 75, 3)).unwrap();
        assert_eq!(inst.horizon(), 700.0);
        for c in inst.customers() {
            if c.kind == CustomerKind::Dynamic {
                assert!(c.request_time > 0.0 && c.request_time <= 600.0);
            } else {
                assert_eq!(c.request_time, 0.0);
            }
        }
    }

    #[test]
    fn reassigning_times() {
        let inst = generate_uniform(&config(5, 20, 3)).unwrap();
        let a = assign_request_times(&inst, 3, 10.0, 9).unwrap();
        let b = assign_request_times(&inst, 3, 10.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 30.0);
        assert!(a.dynamic_ids().all(|id| a.request_time(id) > 0.0 && a.request_time(id) <= 20.0));

        let none = generate_uniform(&config(5, 0, 3)).unwrap();
        let same = assign_request_times(&none, 4, 50.0, 1).unwrap();
        assert_eq!(none.customers(), same.customers());
        assert!(assign_request_times(&inst, 1, 10.0, 0).is_err());
        assert!(assign_request_times(&inst, 3, 0.0, 0).is_err());
    }

    #[test]
    fn auto_delta_spans_mandatory_path() {
        let cfg = GeneratorConfig { seed: 5, ..GeneratorConfig::<f64>::default() };
        let inst = generate_uniform(&cfg).unwrap();
        let ids: Vec<usize> = std::iter::once(1).chain(inst.mandatory_ids()).chain([inst.n()]).collect();
        let path = localsearch::solve_hpp(&|i, j| inst.d(i, j), &ids, 1, inst.n(), &LocalSearchOptions::default()).unwrap();
        let len = localsearch::path_length(&|i, j| inst.d(i, j), &path);
        assert!((inst.delta() * 7.0 - len).abs() < 1e-9);
    }

    fn mean_pairwise(inst: &Instance<f64>, same_cluster: bool, k: usize) -> f64 {
        let n = inst.n();
        let cluster = |id: usize| if id == 1 || id == n { 0 } else { (id - 2) % k };
        let (mut sum, mut cnt) = (0.0, 0usize);
        for i in 1..=n {
            for j in (i + 1)..=n {
                if (cluster(i) == cluster(j)) == same_cluster {
                    sum += inst.d(i, j);
                    cnt += 1;
                }
            }
        }
        sum / cnt as f64
    }

    #[test]
    fn clusters_are_tighter_than_gaps() {
        for k in [2, 3] {
            for seed in 0..20 {
                let cfg = GeneratorConfig { seed, ..GeneratorConfig::<f64>::default() };
                let inst = generate_clustered(k, &cfg).unwrap();
                assert_eq!(inst.topology(), format!("cl{k}"));
                assert!(mean_pairwise(&inst, true, k) < mean_pairwise(&inst, false, k));
            }
        }
    }

    #[test]
    fn topology_labels_parse() {
        for t in ["uniform", "cl2", "cl3"] {
            assert_eq!(t.parse::<Topology>().unwrap().label(), t);
        }
        assert!("cl4".parse::<Topology>().is_err());
        assert_eq!("auto".parse::<EraLength<f64>>().unwrap(), EraLength::Auto);
        assert_eq!("12.5".parse::<EraLength<f64>>().unwrap(), EraLength::Fixed(12.5));
    }

    #[test]
    fn works_in_single_precision() {
        let cfg = GeneratorConfig::<f32> { seed: 2, ..Default::default() };
        let inst = generate_clustered(3, &cfg).unwrap();
        assert_eq!(inst.n(), 100);
        assert!(inst.delta() > 0.0);
    }
}
