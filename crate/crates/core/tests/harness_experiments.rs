//! Budget simulation and threshold sweep on generated corpora.

use crisis_filter::classify::TrainParams;
use crisis_filter::harness::{
    budget_sim, generate_corpus, select_setting, sweep_threshold_experiment, BaseCounts, BudgetConfig, Corpus,
    CorpusSpec, Setting,
};
use crisis_filter::record::{DamageLabel, Relevance};
use crisis_filter::sampling::largest_remainder;

fn corpus(seed: u64, rate: f64) -> Corpus {
    generate_corpus(&CorpusSpec {
        seed,
        n_base_relevant: BaseCounts {
            severe: 60,
            mild: 30,
            none: 90,
        },
        n_irrelevant: 40,
        duplicate_rate: rate,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn truth(c: &Corpus) -> Vec<bool> {
    c.items.iter().map(|i| i.record.relevance == Some(Relevance::Relevant)).collect()
}

fn cfg(budget: usize, seed: u64) -> BudgetConfig {
    BudgetConfig {
        budget_usd: budget,
        sample_seed: seed,
        train: TrainParams {
            epochs: 200,
            ..TrainParams::default()
        },
        ..BudgetConfig::default()
    }
}

fn damage_counts(c: &Corpus, indices: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut counts = vec![0; 3];
    for i in indices {
        let d = c.items[i].record.damage.unwrap();
        counts[DamageLabel::ALL.iter().position(|&x| x == d).unwrap()] += 1;
    }
    counts
}

#[test]
fn without_duplicates_s1_and_s2_reports_match() {
    let c = corpus(31, 0.0);
    let t = truth(&c);
    let s1 = budget_sim(&c, &cfg(150, 5), Setting::S1, &t).unwrap();
    let s2 = budget_sim(&c, &cfg(150, 5), Setting::S2, &t).unwrap();
    assert_eq!(s2.wasted_labels, 0);
    assert_eq!(s1.class_counts, s2.class_counts);
    assert_eq!(s1.eval, s2.eval);
}

#[test]
fn samples_follow_source_class_proportions() {
    let c = corpus(32, 0.4);
    let t = truth(&c);
    for (setting, budget) in [(Setting::S1, 173), (Setting::S3, 101)] {
        let sel = select_setting(&c, &cfg(budget, 9), setting, &t).unwrap();
        let pool: Vec<usize> = (0..c.len()).filter(|&i| setting == Setting::S1 || t[i]).collect();
        let source = damage_counts(&c, pool.into_iter());
        assert_eq!(damage_counts(&c, sel.indices.iter().copied()), largest_remainder(budget, &source));
    }
}

#[test]
fn sweep_curve_holds_across_seeds() {
    for seed in [3, 17, 29] {
        let c = generate_corpus(&CorpusSpec {
            seed,
            ..CorpusSpec::default()
        })
        .unwrap();
        let r = sweep_threshold_experiment(&c, 1100, seed).unwrap();
        for d in 0..=10 {
            let acc = r.curve.accuracy_at(d).unwrap();
            assert!(acc >= 0.95, "seed {seed}: accuracy({d}) = {acc}");
        }
        assert!((8..=12).contains(&r.curve.best_d), "seed {seed}: best_d {}", r.curve.best_d);
        assert!(r.curve.accuracy_at(20).unwrap() < r.curve.accuracy_at(10).unwrap());
    }
}

#[test]
fn s1_beats_s2_on_duplicated_corpora() {
    let wins = (0..4u64)
        .filter(|&s| {
            let c = corpus(40 + s, 0.4);
            let t = truth(&c);
            let a = budget_sim(&c, &cfg(250, s), Setting::S1, &t).unwrap();
            let b = budget_sim(&c, &cfg(250, s), Setting::S2, &t).unwrap();
            a.eval.macro_avg.f1 >= b.eval.macro_avg.f1
        })
        .count();
    assert!(wins >= 3, "S1 won only {wins} of 4");
}
