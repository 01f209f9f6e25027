//! A-posteriori objective space, 2-D hypervolume and the hypervolume
//! indicator against a reference set.

use crate::model::{nondominated_filter, ObjectiveVector};
use crate::scalar::total_cmp;
use crate::Scalar;

/// Moves an era-local objective vector into the space where every dynamic
/// customer counts, appeared or not: customers that have not requested
/// service yet are added to the unvisited count.
pub fn to_aposteriori<T: Scalar>(obj: ObjectiveVector<T>, appeared: usize, total_dynamic: usize) -> ObjectiveVector<T> {
    debug_assert!(appeared <= total_dynamic && obj.unvisited <= appeared);
    ObjectiveVector::new(obj.tour_length, obj.unvisited + total_dynamic.saturating_sub(appeared))
}

/// Area dominated by `points` and bounded by `reference` (both coordinates
/// minimized). Points that do not weakly dominate the reference are ignored.
pub fn hypervolume_2d_points<T: Scalar>(points: &[[T; 2]], reference: [T; 2]) -> T {
    let mut inside: Vec<[T; 2]> =
        points.iter().copied().filter(|p| p[0] <= reference[0] && p[1] <= reference[1]).collect();
    inside.sort_by(|a, b| total_cmp(a[0], b[0]).then(total_cmp(a[1], b[1])));
    let mut volume = T::zero();
    let mut ceiling = reference[1];
    for p in inside {
        if p[1] < ceiling {
            volume += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    volume
}

pub fn hypervolume_2d<T: Scalar>(points: &[ObjectiveVector<T>], reference: [T; 2]) -> T {
    hypervolume_2d_points(&as_points(points), reference)
}

fn as_points<T: Scalar>(points: &[ObjectiveVector<T>]) -> Vec<[T; 2]> {
    points.iter().map(|p| [p.tour_length, T::of_count(p.unvisited)]).collect()
}

/// Component-wise maximum over both sets plus one in each coordinate.
pub fn reference_point<T: Scalar>(p: &[ObjectiveVector<T>], r: &[ObjectiveVector<T>]) -> [T; 2] {
    let mut nadir = [T::zero(), T::zero()];
    for q in p.iter().chain(r) {
        nadir[0] = nadir[0].max(q.tour_length);
        nadir[1] = nadir[1].max(T::of_count(q.unvisited));
    }
    [nadir[0] + T::one(), nadir[1] + T::one()]
}

/// `HV(R) - HV(P)` at the shared reference point; 0 is best.
pub fn hv_indicator<T: Scalar>(p: &[ObjectiveVector<T>], r: &[ObjectiveVector<T>]) -> T {
    let reference = reference_point(p, r);
    hypervolume_2d(r, reference) - hypervolume_2d(p, reference)
}

/// Keeps the points whose unvisited count does not exceed `max_bound`.
pub fn filter_by_bound<T: Scalar>(r: &[ObjectiveVector<T>], max_bound: usize) -> Vec<ObjectiveVector<T>> {
    r.iter().copied().filter(|q| q.unvisited <= max_bound).collect()
}

/// Non-dominated union of several point sets.
pub fn nondominated_union<T: Scalar>(sets: &[&[ObjectiveVector<T>]]) -> Vec<ObjectiveVector<T>> {
    let all: Vec<ObjectiveVector<T>> = sets.iter().flat_map(|s| s.iter().copied()).collect();
    let mut front: Vec<ObjectiveVector<T>> = nondominated_filter(&all).into_iter().map(|i| all[i]).collect();
    front.sort_by(|a, b| a.lex_cmp(b));
    front.dedup();
    front
}
