//! BK-tree over 64-bit hashes with tombstone deletion.
//!
//! Removed entries stay in the tree as routing nodes and are skipped by
//! queries. Once tombstones outnumber a quarter of the live entries the tree
//! is rebuilt from the live set in insertion order.

use std::collections::HashMap;

const NO_ROOT: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    hash: u64,
    seq: u64,
    live: bool,
    /// `(distance to this node, child index)`
    children: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct BkTree {
    nodes: Vec<Node>,
    root: u32,
    by_seq: HashMap<u64, u32>,
    live: usize,
    dead: usize,
}

impl Default for BkTree {
    fn default() -> Self {
        Self::new()
    }
}

impl BkTree {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            root: NO_ROOT,
            by_seq: HashMap::new(),
            live: 0,
            dead: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn tombstones(&self) -> usize {
        self.dead
    }

    pub fn insert(&mut self, hash: u64, seq: u64) {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            hash,
            seq,
            live: true,
            children: Vec::new(),
        });
        self.by_seq.insert(seq, idx);
        self.live += 1;

        if self.root == NO_ROOT {
            self.root = idx;
            return;
        }
        let mut cur = self.root as usize;
        loop {
            let d = (self.nodes[cur].hash ^ hash).count_ones();
            match self.nodes[cur].children.iter().find(|&&(k, _)| k == d) {
                Some(&(_, child)) => cur = child as usize,
                None => {
                    self.nodes[cur].children.push((d, idx));
                    return;
                }
            }
        }
    }

    /// Tombstones the entry with sequence `seq`. Returns false if absent.
    pub fn remove(&mut self, seq: u64) -> bool {
        let Some(idx) = self.by_seq.remove(&seq) else {
            return false;
        };
        self.nodes[idx as usize].live = false;
        self.live -= 1;
        self.dead += 1;
        if self.dead * 4 > self.live {
            self.rebuild();
        }
        true
    }

    fn rebuild(&mut self) {
        let mut live = self.live_entries();
        live.sort_unstable_by_key(|&(seq, _)| seq);
        *self = Self::new();
        self.nodes.reserve(live.len());
        for (seq, hash) in live {
            self.insert(hash, seq);
        }
    }

    /// `(seq, hash)` of every live entry, unordered.
    pub fn live_entries(&self) -> Vec<(u64, u64)> {
        self.nodes
            .iter()
            .filter(|n| n.live)
            .map(|n| (n.seq, n.hash))
            .collect()
    }

    /// Every live entry within `radius` as `(seq, distance)`, unordered.
    pub fn within(&self, q: u64, radius: u32) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        if self.root == NO_ROOT {
            return out;
        }
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            let d = (node.hash ^ q).count_ones();
            if node.live && d <= radius {
                out.push((node.seq, d));
            }
            let (lo, hi) = (d.saturating_sub(radius), d + radius);
            stack.extend(
                node.children
                    .iter()
                    .filter(|&&(k, _)| k >= lo && k <= hi)
                    .map(|&(_, c)| c),
            );
        }
        out
    }

    /// Closest live entry within `radius` as `(seq, distance)`; ties go to the
    /// smallest sequence number.
    pub fn nearest(&self, q: u64, radius: u32) -> Option<(u64, u32)> {
        if self.root == NO_ROOT {
            return None;
        }
        let mut best: Option<(u64, u32)> = None;
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            let d = (node.hash ^ q).count_ones();
            let bound = best.map_or(radius, |(_, bd)| bd);
            if node.live && d <= bound {
                let better = match best {
                    None => true,
                    Some((bs, bd)) => d < bd || (d == bd && node.seq < bs),
                };
                if better {
                    best = Some((node.seq, d));
                }
            }
            // The bound stays inclusive so equal-distance older entries are found.
            let bound = best.map_or(radius, |(_, bd)| bd);
            let (lo, hi) = (d.saturating_sub(bound), d + bound);
            stack.extend(
                node.children
                    .iter()
                    .filter(|&&(k, _)| k >= lo && k <= hi)
                    .map(|&(_, c)| c),
            );
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_tree_finds_nothing() {
        let t = BkTree::new();
        assert!(t.within(0, 64).is_empty());
        assert_eq!(t.nearest(0, 64), None);
    }

    #[test]
    fn duplicate_hashes_are_kept() {
        let mut t = BkTree::new();
        t.insert(7, 0);
        t.insert(7, 1);
        t.insert(7, 2);
        let mut hits = t.within(7, 0);
        hits.sort();
        assert_eq!(hits, vec![(0, 0), (1, 0), (2, 0)]);
        assert_eq!(t.nearest(7, 0), Some((0, 0)));
        t.remove(0);
        assert_eq!(t.nearest(7, 0), Some((1, 0)));
    }

    #[test]
    fn rebuild_triggers_past_quarter_tombstones() {
        let mut t = BkTree::new();
        for s in 0..8 {
            t.insert(s * 3, s);
        }
        t.remove(0);
        assert_eq!((t.len(), t.tombstones()), (7, 1));
        t.remove(1);
        // 2 * 4 > 6 -> rebuilt
        assert_eq!((t.len(), t.tombstones()), (6, 0));
        let mut live: Vec<u64> = t.live_entries().into_iter().map(|e| e.0).collect();
        live.sort();
        assert_eq!(live, (2..8).collect::<Vec<_>>());
        assert!(!t.remove(0));
    }

    #[test]
    fn matches_brute_force_radius_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t = BkTree::new();
        let hashes: Vec<u64> = (0..3000)
            .map(|_| rng.gen::<u64>() & rng.gen::<u64>())
            .collect();
        for (s, &h) in hashes.iter().enumerate() {
            t.insert(h, s as u64);
        }
        for s in (0..3000).step_by(7) {
            t.remove(s as u64);
        }
        for _ in 0..100 {
            let q = rng.gen::<u64>() & rng.gen::<u64>();
            let r = rng.gen_range(0..24);
            let mut got = t.within(q, r);
            got.sort();
            let want: Vec<(u64, u32)> = hashes
                .iter()
                .enumerate()
                .filter(|(s, _)| s % 7 != 0)
                .map(|(s, &h)| (s as u64, (h ^ q).count_ones()))
                .filter(|&(_, d)| d <= r)
                .collect();
            assert_eq!(got, want);
            let best = want.iter().min_by_key(|&&(s, d)| (d, s)).copied();
            assert_eq!(t.nearest(q, r), best);
        }
    }
}
