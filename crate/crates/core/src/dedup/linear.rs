//! Packed linear scan over the window's hash deque.

use std::collections::VecDeque;

#[inline(always)]
fn scan_nearest(hashes: &[u64], q: u64, offset: usize, best: &mut Option<(usize, u32)>, radius: u32) {
    let mut limit = best.map_or(radius, |(_, d)| d);
    for (i, &h) in hashes.iter().enumerate() {
        let d = (h ^ q).count_ones();
        // strict `<` after the first hit keeps the oldest entry on ties
        if d < limit || (best.is_none() && d <= limit) {
            *best = Some((offset + i, d));
            limit = d;
            if d == 0 {
                return;
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn scan_nearest_popcnt(
    hashes: &[u64],
    q: u64,
    offset: usize,
    best: &mut Option<(usize, u32)>,
    radius: u32,
) {
    scan_nearest(hashes, q, offset, best, radius)
}

fn scan(hashes: &[u64], q: u64, offset: usize, best: &mut Option<(usize, u32)>, radius: u32) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("popcnt") {
        // SAFETY: the popcnt feature was detected at runtime.
        unsafe { scan_nearest_popcnt(hashes, q, offset, best, radius) };
        return;
    }
    scan_nearest(hashes, q, offset, best, radius)
}

/// Closest entry within `radius` as `(position, distance)`, oldest on ties.
pub(super) fn nearest(hashes: &VecDeque<u64>, q: u64, radius: u32) -> Option<(usize, u32)> {
    let (front, back) = hashes.as_slices();
    let mut best = None;
    scan(front, q, 0, &mut best, radius);
    if best.is_none_or(|(_, d)| d > 0) {
        scan(back, q, front.len(), &mut best, radius);
    }
    best
}

pub(super) fn within(hashes: &VecDeque<u64>, q: u64, radius: u32) -> Vec<(usize, u32)> {
    hashes
        .iter()
        .enumerate()
        .filter_map(|(i, &h)| {
            let d = (h ^ q).count_ones();
            (d <= radius).then_some((i, d))
        })
        .collect()
}
