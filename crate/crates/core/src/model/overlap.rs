use super::ArrayView;

/// Largest footprint (in positions) for which overlap is decided exactly.
pub const EXACT_OVERLAP_LIMIT: usize = 4096;

/// Descriptor identity: same base, offset, shape and strides.
///
/// Two views reaching the same elements through different strides are not
/// identical; that only costs fusion opportunities.
pub fn views_identical(a: &ArrayView, b: &ArrayView) -> bool {
    a == b
}

/// Returns false only when `a` and `b` provably touch no common element.
pub fn may_share_data(a: &ArrayView, b: &ArrayView) -> bool {
    if a.base_id() != b.base_id() {
        return false;
    }
    if views_identical(a, b) {
        return true;
    }
    let (Some((alo, ahi)), Some((blo, bhi))) = (a.extent(), b.extent()) else {
        return false;
    };
    if ahi < blo || bhi < alo {
        return false;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if small.len() > EXACT_OVERLAP_LIMIT {
        return true;
    }
    let lo = alo.max(blo);
    let hi = ahi.min(bhi);
    let mut marks: Vec<usize> = small.footprint().filter(|i| (lo..=hi).contains(i)).collect();
    if marks.is_empty() {
        return false;
    }
    marks.sort_unstable();
    large.footprint().any(|i| (lo..=hi).contains(&i) && marks.binary_search(&i).is_ok())
}
