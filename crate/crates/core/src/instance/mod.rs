//! Problem instances: customers, depots, request times and the cached
//! Euclidean distance matrix.

mod generate;
mod io;

pub use generate::{
    assign_request_times, generate, generate_clustered, generate_uniform, EraLength,
    GeneratorConfig, Topology,
};
pub use io::{parse_instance, read_instance, write_instance};

use std::fmt;
use std::str::FromStr;

use crate::error::{param, Error, Result};
use crate::Scalar;

/// Customer identifier, 1-based. Id 1 is the start depot, id `N` the end depot.
pub type CustomerId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CustomerKind {
    StartDepot,
    EndDepot,
    Mandatory,
    Dynamic,
}

impl CustomerKind {
    pub fn code(self) -> &'static str {
        match self {
            CustomerKind::StartDepot => "SD",
            CustomerKind::EndDepot => "ED",
            CustomerKind::Mandatory => "M",
            CustomerKind::Dynamic => "D",
        }
    }

    pub fn is_depot(self) -> bool {
        matches!(self, CustomerKind::StartDepot | CustomerKind::EndDepot)
    }
}

impl fmt::Display for CustomerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CustomerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SD" => Ok(CustomerKind::StartDepot),
            "ED" => Ok(CustomerKind::EndDepot),
            "M" => Ok(CustomerKind::Mandatory),
            "D" => Ok(CustomerKind::Dynamic),
            other => Err(param(format!("unknown customer kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Customer<T> {
    pub id: CustomerId,
    pub x: T,
    pub y: T,
    pub kind: CustomerKind,
    /// Zero for depots and mandatory customers, strictly positive for dynamic ones.
    pub request_time: T,
}

/// An immutable problem instance.
///
/// Besides the customers it records the era schedule it was generated for
/// (`n_eras` eras of length `delta`, horizon `n_eras * delta`).
#[derive(Clone, Debug)]
pub struct Instance<T> {
    customers: Vec<Customer<T>>,
    topology: String,
    n_eras: usize,
    delta: T,
    seed: u64,
    dist: Vec<T>,
}

impl<T: Scalar> PartialEq for Instance<T> {
    fn eq(&self, other: &Self) -> bool {
        self.customers == other.customers
            && self.topology == other.topology
            && self.n_eras == other.n_eras
            && self.delta == other.delta
            && self.seed == other.seed
    }
}

impl<T: Scalar> Instance<T> {
    /// Validates the customer list and builds the distance matrix.
    ///
    /// `customers` may be given in any order; they are stored sorted by id.
    pub fn new(
        mut customers: Vec<Customer<T>>,
        topology: impl Into<String>,
        n_eras: usize,
        delta: T,
        seed: u64,
    ) -> Result<Self> {
        let topology = topology.into();
        if topology.is_empty() || topology.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "topology label {topology:?} must be a single non-empty token"
            )));
        }
        if n_eras == 0 {
            return Err(Error::Validation("n_eras must be at least 1".into()));
        }
        if delta <= T::zero() || !delta.is_finite() {
            return Err(Error::Validation(format!("delta must be positive, got {delta}")));
        }
        customers.sort_by_key(|c| c.id);
        let n = customers.len();
        if n < 2 {
            return Err(Error::Validation("an instance needs both depots".into()));
        }
        let horizon = T::of_count(n_eras) * delta;
        for (pos, c) in customers.iter().enumerate() {
            if c.id != pos + 1 {
                return Err(Error::Validation(if pos > 0 && customers[pos - 1].id == c.id {
                    format!("duplicate customer id {}", c.id)
                } else {
                    format!("customer ids must be contiguous 1..{n}, found {}", c.id)
                }));
            }
            if !c.x.is_finite() || !c.y.is_finite() {
                return Err(Error::Validation(format!("customer {} has non-finite coordinates", c.id)));
            }
            let expected_depot = if c.id == 1 {
                Some(CustomerKind::StartDepot)
            } else if c.id == n {
                Some(CustomerKind::EndDepot)
            } else {
                None
            };
            match (expected_depot, c.kind) {
                (Some(k), kind) if k != kind => {
                    return Err(Error::Validation(format!("customer {} must be {}, found {}", c.id, k, kind)))
                }
                (None, kind) if kind.is_depot() => {
                    return Err(Error::Validation(format!("customer {} cannot be a depot", c.id)))
                }
                _ => {}
            }
            if c.kind == CustomerKind::Dynamic {
                if c.request_time.is_nan() || c.request_time <= T::zero() || c.request_time > horizon {
                    return Err(Error::Validation(format!(
                        "dynamic customer {} has request time {} outside (0, {horizon}]",
                        c.id, c.request_time
                    )));
                }
            } else if c.request_time != T::zero() {
                return Err(Error::Validation(format!(
                    "customer {} is not dynamic but has request time {}",
                    c.id, c.request_time
                )));
            }
        }

        let mut dist = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = customers[i].x - customers[j].x;
                let dy = customers[i].y - customers[j].y;
                let d = dx.hypot(dy);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }

        Ok(Self { customers, topology, n_eras, delta, seed, dist })
    }

    /// Number of customers `N`, depots included.
    pub fn n(&self) -> usize {
        self.customers.len()
    }

    pub fn start_depot(&self) -> CustomerId {
        1
    }

    pub fn end_depot(&self) -> CustomerId {
        self.n()
    }

    pub fn customers(&self) -> &[Customer<T>] {
        &self.customers
    }

    /// Panics on an id outside `1..=N`.
    pub fn customer(&self, id: CustomerId) -> &Customer<T> {
        &self.customers[id - 1]
    }

    pub fn kind(&self, id: CustomerId) -> CustomerKind {
        self.customer(id).kind
    }

    pub fn request_time(&self, id: CustomerId) -> T {
        self.customer(id).request_time
    }

    pub fn topology(&self) -> &str {
        &self.topology
    }

    pub fn n_eras(&self) -> usize {
        self.n_eras
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn horizon(&self) -> T {
        T::of_count(self.n_eras) * self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Mandatory customers including both depots.
    pub fn n_mandatory(&self) -> usize {
        self.n() - self.n_dynamic()
    }

    pub fn n_dynamic(&self) -> usize {
        self.customers.iter().filter(|c| c.kind == CustomerKind::Dynamic).count()
    }

    pub fn is_dynamic(&self, id: CustomerId) -> bool {
        self.kind(id) == CustomerKind::Dynamic
    }

    /// Whether `id` is a depot or has requested service by time `now`.
    pub fn has_appeared(&self, id: CustomerId, now: T) -> bool {
        self.request_time(id) <= now
    }

    /// Dynamic customers whose request time is `<= now`.
    pub fn appeared_dynamic(&self, now: T) -> usize {
        self.customers
            .iter()
            .filter(|c| c.kind == CustomerKind::Dynamic && c.request_time <= now)
            .count()
    }

    /// Non-depot mandatory customer ids in ascending order.
    pub fn mandatory_ids(&self) -> impl Iterator<Item = CustomerId> + '_ {
        self.customers.iter().filter(|c| c.kind == CustomerKind::Mandatory).map(|c| c.id)
    }

    pub fn dynamic_ids(&self) -> impl Iterator<Item = CustomerId> + '_ {
        self.customers.iter().filter(|c| c.kind == CustomerKind::Dynamic).map(|c| c.id)
    }

    /// Euclidean distance between two customers.
    pub fn distance(&self, i: CustomerId, j: CustomerId) -> Result<T> {
        let n = self.n();
        if i == 0 || j == 0 || i > n || j > n {
            return Err(param(format!("customer ids ({i}, {j}) outside 1..={n}")));
        }
        Ok(self.d(i, j))
    }

    /// Unchecked variant of [`Instance::distance`]; panics on invalid ids.
    #[inline]
    pub fn d(&self, i: CustomerId, j: CustomerId) -> T {
        self.dist[(i - 1) * self.n() + (j - 1)]
    }

    pub(crate) fn with_schedule(
        &self,
        customers: Vec<Customer<T>>,
        n_eras: usize,
        delta: T,
    ) -> Result<Self> {
        Self::new(customers, self.topology.clone(), n_eras, delta, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn customer(id: usize, x: f64, y: f64, kind: CustomerKind, t: f64) -> Customer<f64> {
        Customer { id, x, y, kind, request_time: t }
    }

    fn square() -> Instance<f64> {
        Instance::new(
            vec![
                customer(1, 0.0, 0.0, CustomerKind::StartDepot, 0.0),
                customer(2, 3.0, 4.0, CustomerKind::Mandatory, 0.0),
                customer(3, 1.0, 1.0, CustomerKind::Dynamic, 5.0),
                customer(4, 6.0, 8.0, CustomerKind::EndDepot, 0.0),
            ],
            "uniform",
            2,
            10.0,
            0,
        )
        .unwrap()
    }

    #[test]
    fn three_four_five() {
        let inst = square();
        assert_eq!(inst.distance(1, 2).unwrap(), 5.0);
        assert_eq!(inst.distance(2, 2).unwrap(), 0.0);
        assert_eq!(inst.distance(1, 4).unwrap(), 10.0);
        assert!(inst.distance(0, 1).is_err());
        assert!(inst.distance(1, 5).is_err());
    }

    #[test]
    fn symmetric_zero_diagonal() {
        let inst = square();
        for i in 1..=4 {
            assert_eq!(inst.d(i, i), 0.0);
            for j in 1..=4 {
                assert_eq!(inst.d(i, j), inst.d(j, i));
                assert!(inst.d(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn counts() {
        let inst = square();
        assert_eq!(inst.n(), 4);
        assert_eq!(inst.n_dynamic(), 1);
        assert_eq!(inst.n_mandatory(), 3);
        assert_eq!(inst.appeared_dynamic(4.9), 0);
        assert_eq!(inst.appeared_dynamic(5.0), 1);
        assert_eq!(inst.horizon(), 20.0);
    }

    #[test]
    fn rejects_bad_customers() {
        let base = square();
        let mut c = base.customers().to_vec();
        c[2].request_time = 0.0;
        assert!(matches!(Instance::new(c, "u", 2, 10.0, 0), Err(Error::Validation(_))));

        let mut c = base.customers().to_vec();
        c[1].request_time = 1.0;
        assert!(Instance::new(c, "u", 2, 10.0, 0).is_err());

        let mut c = base.customers().to_vec();
        c[2].id = 2;
        let err = Instance::new(c, "u", 2, 10.0, 0).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let mut c = base.customers().to_vec();
        c[3].kind = CustomerKind::Mandatory;
        assert!(Instance::new(c, "u", 2, 10.0, 0).is_err());

        let mut c = base.customers().to_vec();
        c[2].request_time = 25.0;
        assert!(Instance::new(c, "u", 2, 10.0, 0).is_err());
    }
}
