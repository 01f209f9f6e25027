//! Decision makers: the automatic d-rank rule, decision paths and their
//! exhaustive enumeration, and a blocking hand-off for human decisions.

use std::fmt;
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Duration;

use crate::error::{param, Error, Result};
use crate::model::ApproximationSet;
use crate::Scalar;

/// 1-based rank `ceil(d * m)`, clamped to `[1, m]`.
///
/// Small `d` picks short tours, `d` close to 1 picks few unvisited customers.
pub fn d_rank_index<T: Scalar>(m: usize, d: T) -> Result<usize> {
    if m == 0 {
        return Err(Error::Contract("cannot select from an empty front".into()));
    }
    if !(d >= T::zero() && d <= T::one()) {
        return Err(param(format!("d must lie in [0, 1], got {d}")));
    }
    let scaled = d.as_f64() * m as f64;
    // Absorb representation error such as 0.1 * 30 = 3.0000000000000004.
    let k = (scaled - 1e-9 * scaled.max(1.0)).ceil();
    Ok((k.max(1.0) as usize).min(m))
}

pub fn d_rank_select<T: Scalar>(front: &ApproximationSet<T>, d: T) -> Result<usize> {
    d_rank_index(front.len(), d)
}

/// What a decision maker submits for one era.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision<T> {
    /// 1-based rank in the tour-length-sorted front.
    Index(usize),
    /// d-rank preference.
    Rank(T),
}

impl<T: Scalar> Decision<T> {
    /// The 1-based rank this decision selects on a front of `m` members.
    pub fn resolve(&self, m: usize) -> Result<usize> {
        match *self {
            Decision::Index(k) if (1..=m).contains(&k) => Ok(k),
            Decision::Index(k) => Err(Error::Decision(format!("index {k} outside 1..={m}"))),
            Decision::Rank(d) => d_rank_index(m, d).map_err(|e| Error::Decision(e.to_string())),
        }
    }
}

impl<T: Scalar> fmt::Display for Decision<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Index(k) => write!(f, "#{k}"),
            Decision::Rank(d) => write!(f, "d={d}"),
        }
    }
}

/// Everything a decision maker sees at the end of an era.
#[derive(Clone, Copy, Debug)]
pub struct DecisionRequest<'a, T> {
    pub era: usize,
    pub now: T,
    pub upper_bound: usize,
    pub front: &'a ApproximationSet<T>,
}

pub trait DecisionSource<T> {
    fn decide(&mut self, request: &DecisionRequest<'_, T>) -> Result<Decision<T>>;
}

/// One d value per era, e.g. `(0.25, 0.25, 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionPath<T>(Vec<T>);

impl<T: Scalar> DecisionPath<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&d| !(d >= T::zero() && d <= T::one())) {
            return Err(param(format!("decision path entries must lie in [0, 1], got {bad}")));
        }
        Ok(Self(values))
    }

    pub fn constant(d: T, n_eras: usize) -> Result<Self> {
        Self::new(vec![d; n_eras])
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<T> {
        self.0.last().copied()
    }

    /// Comma-separated form accepted by the CLI, without spaces.
    pub fn to_literal(&self) -> String {
        self.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl<T: Scalar> fmt::Display for DecisionPath<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", items.join(", "))
    }
}

impl<T: Scalar> FromStr for DecisionPath<T> {
    type Err = Error;

    /// Accepts `0.25,0.5,0.75` and `(0.25, 0.5, 0.75)`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')');
        if body.trim().is_empty() {
            return Err(param("empty decision path"));
        }
        let values = body
            .split(',')
            .map(|v| v.trim().parse::<T>().map_err(|_| param(format!("bad decision value {v:?}"))))
            .collect::<Result<Vec<T>>>()?;
        Self::new(values)
    }
}

/// Automatic d-rank decision maker following a path; era `j` uses entry `j`.
#[derive(Clone, Debug)]
pub struct PathDecisionMaker<T> {
    path: DecisionPath<T>,
}

impl<T: Scalar> PathDecisionMaker<T> {
    pub fn new(path: DecisionPath<T>) -> Self {
        Self { path }
    }
}

impl<T: Scalar> DecisionSource<T> for PathDecisionMaker<T> {
    fn decide(&mut self, request: &DecisionRequest<'_, T>) -> Result<Decision<T>> {
        let d = self
            .path
            .values()
            .get(request.era - 1)
            .copied()
            .ok_or_else(|| Error::Aborted(format!("decision path has no entry for era {}", request.era)))?;
        Ok(Decision::Rank(d))
    }
}

/// Replays a recorded list of decisions, one per era.
#[derive(Clone, Debug)]
pub struct Replay<T> {
    decisions: Vec<Decision<T>>,
}

impl<T: Scalar> Replay<T> {
    pub fn new(decisions: Vec<Decision<T>>) -> Self {
        Self { decisions }
    }
}

impl<T: Scalar> DecisionSource<T> for Replay<T> {
    fn decide(&mut self, request: &DecisionRequest<'_, T>) -> Result<Decision<T>> {
        self.decisions
            .get(request.era - 1)
            .copied()
            .ok_or_else(|| Error::Aborted(format!("no recorded decision for era {}", request.era)))
    }
}

/// Lexicographic stream over `D^n_eras`, smallest values first.
#[derive(Clone, Debug)]
pub struct PathEnumerator<T> {
    values: Vec<T>,
    digits: Vec<usize>,
    done: bool,
}

pub fn enumerate_paths<T: Scalar>(d_set: &[T], n_eras: usize) -> Result<PathEnumerator<T>> {
    if d_set.is_empty() {
        return Err(param("decision set must not be empty"));
    }
    let mut values = d_set.to_vec();
    values.sort_by(|a, b| crate::scalar::total_cmp(*a, *b));
    values.dedup();
    DecisionPath::new(values.clone())?;
    Ok(PathEnumerator { values, digits: vec![0; n_eras], done: false })
}

impl<T: Scalar> PathEnumerator<T> {
    /// Number of paths still to come.
    pub fn remaining(&self) -> usize {
        if self.done {
            return 0;
        }
        let base = self.values.len();
        let consumed = self.digits.iter().fold(0usize, |acc, &d| acc * base + d);
        base.pow(self.digits.len() as u32) - consumed
    }
}

impl<T: Scalar> Iterator for PathEnumerator<T> {
    type Item = DecisionPath<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let path = DecisionPath(self.digits.iter().map(|&i| self.values[i]).collect());
        // Odometer increment, last era fastest.
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.values.len() {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(path)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining();
        (n, Some(n))
    }
}

type Submission<T> = (Decision<T>, mpsc::Sender<Result<usize>>);

/// Decision source that blocks until a human submits through the paired
/// [`DecisionHandle`]. Invalid submissions are rejected and the era keeps
/// waiting.
pub struct InteractiveSource<T> {
    inbox: mpsc::Receiver<Submission<T>>,
    timeout: Option<Duration>,
}

#[derive(Clone)]
pub struct DecisionHandle<T> {
    outbox: mpsc::Sender<Submission<T>>,
}

pub fn interactive_source<T: Scalar>(timeout: Option<Duration>) -> (InteractiveSource<T>, DecisionHandle<T>) {
    let (outbox, inbox) = mpsc::channel();
    (InteractiveSource { inbox, timeout }, DecisionHandle { outbox })
}

impl<T: Scalar> DecisionHandle<T> {
    /// Submits a decision and waits until the optimizer accepts (returning
    /// the chosen 1-based rank) or rejects it.
    pub fn submit(&self, decision: Decision<T>) -> Result<usize> {
        let (tx, rx) = mpsc::channel();
        self.outbox
            .send((decision, tx))
            .map_err(|_| Error::Aborted("optimizer is no longer waiting for decisions".into()))?;
        rx.recv().map_err(|_| Error::Aborted("optimizer stopped before acknowledging".into()))?
    }
}

impl<T: Scalar> DecisionSource<T> for InteractiveSource<T> {
    fn decide(&mut self, request: &DecisionRequest<'_, T>) -> Result<Decision<T>> {
        loop {
            let (decision, ack) = match self.timeout {
                Some(t) => self.inbox.recv_timeout(t).map_err(|e| match e {
                    mpsc::RecvTimeoutError::Timeout => Error::Aborted("timed out waiting for a decision".into()),
                    mpsc::RecvTimeoutError::Disconnected => Error::Aborted("session cancelled".into()),
                })?,
                None => self.inbox.recv().map_err(|_| Error::Aborted("session cancelled".into()))?,
            };
            match decision.resolve(request.front.len()) {
                Ok(k) => {
                    let _ = ack.send(Ok(k));
                    return Ok(Decision::Index(k));
                }
                Err(e) => {
                    let _ = ack.send(Err(e));
                }
            }
        }
    }
}
