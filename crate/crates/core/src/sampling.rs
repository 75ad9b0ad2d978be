//! Integer apportionment and stratified sampling helpers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splits `total` into parts proportional to `weights` using the
/// largest-remainder method. Leftover units go to the largest fractional
/// remainders, lowest index first on ties. Returns zeros when all weights
/// are zero.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut parts = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let q = total as u128 * w as u128;
        parts.push((q / sum) as usize);
        rems.push((q % sum, i));
    }
    let assigned: usize = parts.iter().sum();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(total - assigned) {
        parts[i] += 1;
    }
    parts
}

/// Draws `n` indices from `labels` so that per-class counts follow the
/// largest-remainder apportionment of the source class counts. Returned
/// indices are sorted (source order).
pub fn stratified_sample(labels: &[usize], n_classes: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quotas = largest_remainder(n.min(labels.len()), &counts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (members, q) in by_class.iter_mut().zip(quotas) {
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..q]);
    }
    out.sort_unstable();
    out
}
