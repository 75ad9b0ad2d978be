//! Perceptual-hash robustness and discrimination on generated images.

use crisis_filter::harness::{render_base, BaseRecipe, Family, Perturbation};
use crisis_filter::phash::{hamming, phash};

const FAMILIES: [Family; 4] = [Family::Severe, Family::Mild, Family::Intact, Family::Banner];

fn bases(n: u64) -> Vec<BaseRecipe> {
    (0..n)
        .map(|i| BaseRecipe {
            family: FAMILIES[(i % 4) as usize],
            seed: 0x5EED_0000 + i,
            width: 64 + (i as usize * 7) % 33,
            height: 64 + (i as usize * 13) % 33,
        })
        .collect()
}

fn light_edits(seed: u64) -> Vec<Perturbation> {
    vec![
        Perturbation::Resize { scale: 0.9 },
        Perturbation::Resize { scale: 1.1 },
        Perturbation::Brightness { gain: 1.1 },
        Perturbation::Brightness { gain: 0.9 },
        Perturbation::Crop {
            left: 0.025,
            top: 0.025,
            right: 0.025,
            bottom: 0.025,
        },
        Perturbation::TextBand {
            top: 0.9,
            height: 0.05,
            seed,
        },
    ]
}

#[test]
fn light_edits_stay_within_threshold() {
    let mut total = 0;
    let mut close = 0;
    let mut worst = Vec::new();
    for b in bases(200) {
        let img = render_base(&b);
        let h = phash(&img);
        for p in light_edits(b.seed) {
            let d = hamming(h, phash(&p.apply(&img)));
            total += 1;
            if d <= 10 {
                close += 1;
            } else {
                worst.push((p.kind(), d));
            }
        }
    }
    let share = close as f64 / total as f64;
    assert!(share >= 0.95, "only {share:.3} within 10; misses {worst:?}");
}

#[test]
fn independent_bases_are_far_apart() {
    let hashes: Vec<_> = bases(300).iter().map(|b| phash(&render_base(b))).collect();
    let mut pairs = 0;
    let mut far = 0;
    for i in 0..hashes.len() {
        for j in i + 1..hashes.len() {
            pairs += 1;
            far += usize::from(hamming(hashes[i], hashes[j]) > 10);
        }
    }
    let share = far as f64 / pairs as f64;
    assert!(share >= 0.99, "only {share:.4} of base pairs exceed 10");
}
