//! Deterministic top-k selection shared by the dynamic matchers.

use alloc::vec::Vec;
use core::cmp::Ordering;

/// Higher score first, then lower index.
#[inline]
pub(crate) fn by_score_desc(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Indices of the `k` best candidates in rank order.
///
/// The comparator is a strict total order, so the result does not depend on
/// the input order of `candidates`.
pub(crate) fn top_k(mut candidates: Vec<(usize, f64)>, k: usize) -> Vec<usize> {
    let k = k.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, by_score_desc);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_score_desc);
    candidates.into_iter().map(|(i, _)| i).collect()
}
