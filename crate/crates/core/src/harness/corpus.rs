//! Synthetic labeled corpora with planted near-duplicate groups.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_base, BaseRecipe, Family, Perturbation, PerturbationKind};
use super::HarnessError;
use crate::classify::{extract_with_hash, FeatureVector, DEFAULT_IRRELEVANT_CATEGORIES};
use crate::imagecore::{netpbm, Raster};
use crate::phash::{hamming, PerceptualHash};
use crate::pipeline::{RetentionReport, RetentionRow, Stage, ALL_ROW};
use crate::record::{DamageLabel, ImageRecord, Relevance};

const MAX_ATTEMPTS: u64 = 12;
const MIN_INTENSITY: f64 = 0.5;
const DAY_MS: i64 = 86_400_000;
const MEAN_REPOST_DELAY_MS: f64 = 3_600_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseCounts {
    pub severe: usize,
    pub mild: usize,
    pub none: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    /// Distinct relevant base images per damage class.
    pub n_base_relevant: BaseCounts,
    /// Distinct irrelevant base images.
    pub n_irrelevant: usize,
    /// Fraction of all generated records that are copies of a base.
    pub duplicate_rate: f64,
    /// Fraction of copies that are exact reposts with no edit.
    pub exact_share: f64,
    pub perturbations: Vec<PerturbationKind>,
    /// Pareto shape of base popularity; smaller is heavier-tailed.
    pub popularity_alpha: f64,
    /// Distance bound every copy must meet against its base, and that every
    /// pair from different groups must exceed.
    pub threshold: u32,
    /// Extra records whose files are written truncated.
    pub n_truncated: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_base_relevant: BaseCounts {
                severe: 200,
                mild: 100,
                none: 300,
            },
            n_irrelevant: 200,
            duplicate_rate: 0.4,
            exact_share: 0.9,
            perturbations: PerturbationKind::ALL.to_vec(),
            popularity_alpha: 2.0,
            threshold: 10,
            n_truncated: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.to_string()));
        if !(0.0..1.0).contains(&self.duplicate_rate) {
            return bad("duplicate_rate must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.exact_share) {
            return bad("exact_share must be in [0, 1]");
        }
        if self.popularity_alpha <= 0.0 || !self.popularity_alpha.is_finite() {
            return bad("popularity_alpha must be positive");
        }
        if self.threshold > 64 {
            return bad("threshold must be at most 64");
        }
        if self.exact_share < 1.0 && self.duplicate_rate > 0.0 && self.perturbations.is_empty() {
            return bad("perturbation set is empty but exact_share < 1");
        }
        Ok(())
    }

    pub fn n_bases(&self) -> usize {
        let b = &self.n_base_relevant;
        b.severe + b.mild + b.none + self.n_irrelevant
    }

    /// Copies needed so that they make up `duplicate_rate` of all records.
    pub fn n_copies(&self) -> usize {
        (self.duplicate_rate / (1.0 - self.duplicate_rate) * self.n_bases() as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecipe {
    pub base: BaseRecipe,
    pub perturbations: Vec<Perturbation>,
}

impl ImageRecipe {
    pub fn render(&self) -> Raster {
        self.perturbations
            .iter()
            .fold(render_base(&self.base), |img, p| p.apply(&img))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub record: ImageRecord,
    pub hash: PerceptualHash,
    pub features: FeatureVector,
    pub recipe: ImageRecipe,
    /// Id of the base this item copies.
    pub copy_of: Option<String>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub bases: usize,
    pub copies: usize,
    pub exact_copies: usize,
    pub base_redraws: usize,
    pub copy_redraws: usize,
    /// Copies that fell back to an exact repost after every edit failed.
    pub copy_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    CopyTooFar,
    CrossGroupTooClose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub a: String,
    pub b: String,
    pub distance: u32,
}

/// Generated records in arrival order, with their hashes, features and the
/// recipes needed to re-render them.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub items: Vec<CorpusItem>,
    pub stats: GenerationStats,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub post_id: String,
    pub received_at: i64,
    pub damage: DamageLabel,
    pub relevance: Relevance,
    pub dup_group: String,
    pub object_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_of: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<PerturbationKind>,
}

struct Draft {
    recipe: ImageRecipe,
    base_index: usize,
    is_copy: bool,
    truncated: bool,
    hash: PerceptualHash,
    features: FeatureVector,
}

fn mix(seed: u64, stream: u64, index: u64, attempt: u64) -> u64 {
    // SplitMix64 finalizer over the combined coordinates.
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ attempt.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn base_recipe(spec: &CorpusSpec, family: Family, index: usize, attempt: u64) -> BaseRecipe {
    let seed = mix(spec.seed, 1, index as u64, attempt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BaseRecipe {
        family,
        seed,
        width: rng.gen_range(64..=96),
        height: rng.gen_range(64..=96),
    }
}

/// Edits for copy `index`. Kinds, directions and the starting strength are
/// fixed per copy; each retry shrinks the strength linearly, so accepted
/// copies carry the strongest edit that stays within the threshold.
fn copy_recipe(spec: &CorpusSpec, base: &BaseRecipe, index: usize, attempt: u64, exact: bool) -> ImageRecipe {
    if exact || attempt >= MAX_ATTEMPTS {
        return ImageRecipe {
            base: *base,
            perturbations: Vec::new(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 2, index as u64, 0));
    let n = if spec.perturbations.len() > 1 && rng.gen_bool(0.3) { 2 } else { 1 };
    let kinds: Vec<PerturbationKind> = spec.perturbations.choose_multiple(&mut rng, n).copied().collect();
    let shrink = 1.0 - attempt as f64 / MAX_ATTEMPTS as f64;
    let perturbations = kinds
        .into_iter()
        .map(|k| {
            let t = rng.gen_range(MIN_INTENSITY..=1.0) * shrink;
            let mut params = ChaCha8Rng::seed_from_u64(rng.gen());
            Perturbation::sample(k, t, &mut params)
        })
        .collect();
    ImageRecipe {
        base: *base,
        perturbations,
    }
}

fn analyze(recipe: ImageRecipe) -> (ImageRecipe, PerceptualHash, FeatureVector) {
    let (features, hash) = extract_with_hash(&recipe.render());
    (recipe, hash, features)
}

fn families(spec: &CorpusSpec) -> Vec<Family> {
    let b = &spec.n_base_relevant;
    let mut out = Vec::with_capacity(spec.n_bases() + spec.n_truncated);
    out.extend(std::iter::repeat_n(Family::Severe, b.severe));
    out.extend(std::iter::repeat_n(Family::Mild, b.mild));
    out.extend(std::iter::repeat_n(Family::Intact, b.none));
    out.extend(std::iter::repeat_n(Family::Banner, spec.n_irrelevant));
    out
}

fn tags_for(family: Family, rng: &mut impl Rng) -> Vec<String> {
    let pool: &[&str] = match family {
        Family::Severe | Family::Mild => &["rubble", "building", "street", "vehicle"],
        Family::Intact => &["building", "park", "sky", "street", "tree"],
        Family::Banner => &DEFAULT_IRRELEVANT_CATEGORIES,
    };
    let n = rng.gen_range(1..=2);
    let mut tags: Vec<String> = pool.choose_multiple(rng, n).map(|s| s.to_string()).collect();
    tags.sort();
    tags
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, HarnessError> {
    spec.validate()?;
    let thr = spec.threshold;
    let mut stats = GenerationStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0, 0, 0));

    // Bases: render in parallel, then accept in order, redrawing any base
    // that lands within the threshold of an accepted one.
    let mut fams = families(spec);
    for _ in 0..spec.n_truncated {
        fams.push([Family::Severe, Family::Mild, Family::Intact][rng.gen_range(0..3)]);
    }
    let n_regular = spec.n_bases();
    let first: Vec<_> = (0..fams.len())
        .into_par_iter()
        .map(|i| {
            analyze(ImageRecipe {
                base: base_recipe(spec, fams[i], i, 0),
                perturbations: Vec::new(),
            })
        })
        .collect();
    let mut drafts: Vec<Draft> = Vec::with_capacity(fams.len() + spec.n_copies());
    for (i, mut cand) in first.into_iter().enumerate() {
        let mut attempt = 0;
        while drafts.iter().any(|d| hamming(d.hash, cand.1) <= thr) {
            attempt += 1;
            stats.base_redraws += 1;
            if attempt > 1000 {
                return Err(HarnessError::Spec("cannot draw enough distinct base images".into()));
            }
            cand = analyze(ImageRecipe {
                base: base_recipe(spec, fams[i], i, attempt),
                perturbations: Vec::new(),
            });
        }
        drafts.push(Draft {
            recipe: cand.0,
            base_index: i,
            is_copy: false,
            truncated: i >= n_regular,
            hash: cand.1,
            features: cand.2,
        });
    }
    stats.bases = n_regular;

    // Copies: parents drawn by heavy-tailed popularity; each copy must stay
    // within the threshold of its base and outside it for every other group.
    let n_copies = spec.n_copies();
    if n_copies > 0 && n_regular == 0 {
        return Err(HarnessError::Spec("duplicates requested without base images".into()));
    }
    let mut parents = Vec::with_capacity(n_copies);
    let mut exact = Vec::with_capacity(n_copies);
    if n_copies > 0 {
        let weights: Vec<f64> = (0..n_regular)
            .map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / spec.popularity_alpha))
            .collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        for _ in 0..n_copies {
            parents.push(dist.sample(&mut rng));
            exact.push(rng.gen_bool(spec.exact_share));
        }
    }
    let first: Vec<_> = (0..n_copies)
        .into_par_iter()
        .map(|c| analyze(copy_recipe(spec, &drafts[parents[c]].recipe.base, c, 0, exact[c])))
        .collect();
    for (c, mut cand) in first.into_iter().enumerate() {
        let parent = parents[c];
        let mut attempt = 0;
        loop {
            let ok = hamming(cand.1, drafts[parent].hash) <= thr
                && drafts
                    .iter()
                    .all(|d| d.base_index == parent || hamming(d.hash, cand.1) > thr);
            if ok {
                break;
            }
            attempt += 1;
            stats.copy_redraws += 1;
            cand = analyze(copy_recipe(spec, &drafts[parent].recipe.base, c, attempt, exact[c]));
        }
        if cand.0.perturbations.is_empty() {
            stats.exact_copies += 1;
            if !exact[c] {
                stats.copy_fallbacks += 1;
            }
        }
        drafts.push(Draft {
            recipe: cand.0,
            base_index: parent,
            is_copy: true,
            truncated: false,
            hash: cand.1,
            features: cand.2,
        });
    }
    stats.copies = n_copies;

    // Arrival times: bases spread over a day, reposts after their base.
    let mut times: Vec<i64> = Vec::with_capacity(drafts.len());
    for d in &drafts {
        let t = if d.is_copy {
            let delay = -(1.0 - rng.gen::<f64>()).ln() * MEAN_REPOST_DELAY_MS;
            times[d.base_index] + 1 + delay as i64
        } else {
            rng.gen_range(0..DAY_MS)
        };
        times.push(t);
    }
    let tags: Vec<Vec<String>> = drafts.iter().map(|d| tags_for(d.recipe.base.family, &mut rng)).collect();
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    order.sort_by_key(|&i| (times[i], i));
    let mut id_of = vec![String::new(); drafts.len()];
    for (pos, &i) in order.iter().enumerate() {
        id_of[i] = format!("img{pos:06}");
    }

    let mut slots: Vec<Option<Draft>> = drafts.into_iter().map(Some).collect();
    let items = order
        .iter()
        .map(|&i| {
            let d = slots[i].take().expect("each draft used once");
            let family = d.recipe.base.family;
            let id = id_of[i].clone();
            let record = ImageRecord {
                post_id: Some(format!("post{i:06}")),
                received_at: Some(times[i]),
                damage: Some(family.damage()),
                relevance: Some(if family.is_relevant() {
                    Relevance::Relevant
                } else {
                    Relevance::Irrelevant
                }),
                object_tags: tags[i].clone(),
                dup_group: Some(format!("g{:06}", d.base_index)),
                ..ImageRecord::new(id.clone(), format!("images/{id}.ppm"))
            };
            CorpusItem {
                record,
                hash: d.hash,
                features: d.features,
                recipe: d.recipe,
                copy_of: d.is_copy.then(|| id_of[d.base_index].clone()),
                truncated: d.truncated,
            }
        })
        .collect();
    Ok(Corpus {
        spec: spec.clone(),
        items,
        stats,
    })
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn records(&self) -> Vec<ImageRecord> {
        self.items.iter().map(|i| i.record.clone()).collect()
    }

    pub fn group(&self, i: usize) -> &str {
        self.items[i].record.dup_group.as_deref().unwrap_or_default()
    }

    /// Pairs breaking the duplicate-distance contract at `threshold`.
    pub fn violations(&self, threshold: u32) -> Vec<Violation> {
        let mut out = Vec::new();
        let by_id: IndexMap<&str, usize> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.record.id.as_str(), i))
            .collect();
        for it in &self.items {
            if let Some(base) = &it.copy_of {
                let d = hamming(it.hash, self.items[by_id[base.as_str()]].hash);
                if d > threshold {
                    out.push(Violation {
                        kind: ViolationKind::CopyTooFar,
                        a: base.clone(),
                        b: it.record.id.clone(),
                        distance: d,
                    });
                }
            }
        }
        for i in 0..self.items.len() {
            for j in i + 1..self.items.len() {
                let d = hamming(self.items[i].hash, self.items[j].hash);
                if d <= threshold && self.group(i) != self.group(j) {
                    out.push(Violation {
                        kind: ViolationKind::CrossGroupTooClose,
                        a: self.items[i].record.id.clone(),
                        b: self.items[j].record.id.clone(),
                        distance: d,
                    });
                }
            }
        }
        out
    }

    /// Retention counts a perfect filter would report for this stream in the
    /// default stage order.
    pub fn expected_retention(&self) -> RetentionReport {
        let mut rows: IndexMap<String, RetentionRow> = DamageLabel::ALL
            .iter()
            .map(|d| (d.as_str().to_string(), RetentionRow::default()))
            .collect();
        let mut seen = std::collections::HashSet::new();
        let mut total = RetentionRow::default();
        for (i, it) in self.items.iter().enumerate() {
            let key = it.record.damage.map_or("unlabeled", DamageLabel::as_str);
            let row = rows.entry(key.to_string()).or_default();
            for r in [&mut *row, &mut total] {
                r.raw += 1;
            }
            let relevant = it.record.relevance != Some(Relevance::Irrelevant);
            let (mut rel, mut kept, mut decode) = (0, 0, 0);
            if it.truncated {
                decode = 1;
            } else if relevant {
                rel = 1;
                kept = usize::from(seen.insert(self.group(i).to_string()));
            }
            for r in [row, &mut total] {
                r.decode_errors += decode;
                r.after_relevancy += rel;
                r.after_dedup += kept;
            }
        }
        rows.insert(ALL_ROW.to_string(), total);
        let overall_reduction = if total.raw == 0 {
            0.0
        } else {
            1.0 - total.after_dedup as f64 / total.raw as f64
        };
        RetentionReport {
            stage_order: vec![Stage::Relevancy, Stage::Dedup],
            rows,
            overall_reduction,
        }
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.items
            .iter()
            .map(|it| {
                let r = &it.record;
                ManifestEntry {
                    id: r.id.clone(),
                    path: r.url.clone(),
                    post_id: r.post_id.clone().unwrap_or_default(),
                    received_at: r.received_at.unwrap_or_default(),
                    damage: r.damage.unwrap_or(DamageLabel::None),
                    relevance: r.relevance.unwrap_or(Relevance::Relevant),
                    dup_group: r.dup_group.clone().unwrap_or_default(),
                    object_tags: r.object_tags.clone(),
                    copy_of: it.copy_of.clone(),
                    perturbations: it.recipe.perturbations.iter().map(Perturbation::kind).collect(),
                }
            })
            .collect()
    }

    /// Writes `manifest.jsonl` and one PPM per record under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(e.to_string());
        fs::create_dir_all(dir.join("images")).map_err(io)?;
        self.items.par_iter().try_for_each(|it| {
            let mut bytes = netpbm::encode(&it.recipe.render());
            if it.truncated {
                bytes.truncate(bytes.len() / 2);
            }
            fs::write(dir.join(&it.record.url), bytes).map_err(io)
        })?;
        let mut out = std::io::BufWriter::new(fs::File::create(dir.join("manifest.jsonl")).map_err(io)?);
        for entry in self.manifest() {
            serde_json::to_writer(&mut out, &entry).map_err(|e| HarnessError::Io(e.to_string()))?;
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
