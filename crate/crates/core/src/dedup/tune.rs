//! Choosing the duplicate threshold from human- or truth-labelled pairs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DedupError, MAX_DISTANCE};

/// A hash distance with a same/different judgment for the image pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub distance: u32,
    pub is_same: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    /// `(d, accuracy)` for every `d` in the requested range.
    pub points: Vec<(u32, f64)>,
    /// Smallest `d` reaching the maximum accuracy.
    pub best_d: u32,
}

impl ThresholdCurve {
    pub fn accuracy_at(&self, d: u32) -> Option<f64> {
        self.points.iter().find(|p| p.0 == d).map(|p| p.1)
    }
}

/// Accuracy of "duplicate iff distance ≤ d", counted pair by pair.
pub fn brute_force_accuracy(pairs: &[AnnotatedPair], d: u32) -> f64 {
    let correct = pairs
        .iter()
        .filter(|p| (p.distance <= d) == p.is_same)
        .count();
    correct as f64 / pairs.len() as f64
}

/// Sweeps `d` over `d_min..=d_max` using cumulative distance histograms.
pub fn tune_threshold(
    pairs: &[AnnotatedPair],
    d_min: u32,
    d_max: u32,
) -> Result<ThresholdCurve, DedupError> {
    if pairs.is_empty() {
        return Err(DedupError::NoPairs);
    }
    if d_min > d_max || d_max > MAX_DISTANCE {
        return Err(DedupError::Range { d_min, d_max });
    }
    // Distances above 64 cannot occur for 64-bit hashes but are tolerated
    // in hand-built inputs by clamping them into the last bucket.
    let bucket = |d: u32| d.min(MAX_DISTANCE + 1) as usize;
    let mut same = [0usize; MAX_DISTANCE as usize + 2];
    let mut diff = [0usize; MAX_DISTANCE as usize + 2];
    for p in pairs {
        if p.is_same {
            same[bucket(p.distance)] += 1;
        } else {
            diff[bucket(p.distance)] += 1;
        }
    }
    let total_diff: usize = diff.iter().sum();
    let n = pairs.len() as f64;

    let (mut same_le, mut diff_le) = (0usize, 0usize);
    let mut points = Vec::with_capacity((d_max - d_min + 1) as usize);
    for d in 0..=d_max {
        same_le += same[d as usize];
        diff_le += diff[d as usize];
        if d >= d_min {
            let correct = same_le + (total_diff - diff_le);
            points.push((d, correct as f64 / n));
        }
    }
    let best_d = points
        .iter()
        .fold(None::<(u32, f64)>, |best, &(d, a)| match best {
            Some((_, ba)) if ba >= a => best,
            _ => Some((d, a)),
        })
        .map(|(d, _)| d)
        .expect("range is non-empty");
    Ok(ThresholdCurve { points, best_d })
}

/// Writes the curve as `d,accuracy` CSV.
pub fn write_curve_csv<W: Write>(curve: &ThresholdCurve, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d", "accuracy"])?;
    for &(d, a) in &curve.points {
        w.write_record([d.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(distance: u32, is_same: bool) -> AnnotatedPair {
        AnnotatedPair { distance, is_same }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(tune_threshold(&[], 0, 20), Err(DedupError::NoPairs));
        let p = [pair(0, true)];
        assert!(tune_threshold(&p, 5, 4).is_err());
        assert!(tune_threshold(&p, 0, 65).is_err());
    }

    #[test]
    fn all_identical_pairs() {
        let pairs = vec![pair(0, true); 30];
        let c = tune_threshold(&pairs, 3, 20).unwrap();
        assert!(c.points.iter().all(|&(_, a)| a == 1.0));
        assert_eq!(c.best_d, 3);
        assert_eq!(c.points.len(), 18);
    }

    #[test]
    fn planted_separation_at_seven() {
        let pairs: Vec<_> = (0..=20).map(|d| pair(d, d <= 7)).collect();
        let c = tune_threshold(&pairs, 0, 20).unwrap();
        assert_eq!(c.accuracy_at(7), Some(1.0));
        assert_eq!(c.best_d, 7);
    }

    /// 1,100 pairs: same pairs have distances spread over 0..=10 (mostly
    /// exact re-posts), different pairs over 11..=20 plus a light overlap.
    fn planted_overlap(seed: u64) -> Vec<AnnotatedPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..1100)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    let d = if rng.gen_bool(0.9) { 0 } else { rng.gen_range(1..=10) };
                    pair(d, true)
                } else {
                    let d = if rng.gen_bool(0.02) {
                        rng.gen_range(6..=10)
                    } else {
                        rng.gen_range(11..=20)
                    };
                    pair(d, false)
                }
            })
            .collect()
    }

    #[test]
    fn planted_overlap_peaks_at_ten() {
        let pairs = planted_overlap(10);
        let c = tune_threshold(&pairs, 0, 20).unwrap();
        for &(d, a) in &c.points {
            assert_eq!(a, brute_force_accuracy(&pairs, d));
        }
        assert_eq!(c.best_d, 10);
        assert!(c.points.iter().filter(|p| p.0 <= 10).all(|p| p.1 >= 0.9));
        assert!(c.accuracy_at(20).unwrap() < c.accuracy_at(10).unwrap() - 0.2);
    }

    #[test]
    fn csv_output() {
        let c = tune_threshold(&[pair(1, true), pair(3, false)], 0, 3).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&c, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "d,accuracy\n0,0.5\n1,1\n2,1\n3,0.5\n"
        );
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw in proptest::collection::vec((0u32..=64, any::<bool>()), 1..200),
            lo in 0u32..=64, span in 0u32..=64
        ) {
            let pairs: Vec<_> = raw.into_iter().map(|(d, s)| pair(d, s)).collect();
            let hi = (lo + span).min(64);
            let c = tune_threshold(&pairs, lo, hi).unwrap();
            let mut best = (lo, -1.0);
            for d in lo..=hi {
                let a = brute_force_accuracy(&pairs, d);
                prop_assert_eq!(c.accuracy_at(d), Some(a));
                if a > best.1 {
                    best = (d, a);
                }
            }
            prop_assert_eq!(c.best_d, best.0);
        }
    }
}
