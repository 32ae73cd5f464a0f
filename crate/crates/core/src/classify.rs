//! Entity-type classification harness.
//!
//! A majority classifier predicts the head and tail types of a test fact from
//! its relation label alone: the modal head and tail type seen with that label
//! in training, or the global modal types for unseen labels. This measures how
//! much type information a relation vocabulary carries.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{write_file, KnowledgeGraph, RelationId, Triple, TypeId, TypePolicy};

/// Train / test triple indices, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per relation with at least two facts, `ceil(fraction * count)` random facts
/// go to the test side, always leaving one for training; the rest (and
/// single-fact relations) train.
pub fn split_dataset(kg: &KnowledgeGraph, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if kg.triples().is_empty() {
        return Err(Error::InvalidInput("cannot split an empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in kg.relations() {
        let mut facts = kg.relation_fact_indices(r).to_vec();
        if facts.len() < 2 {
            train.extend(facts);
            continue;
        }
        // small slack so that e.g. 0.1 * 30 does not round up to 4
        let n_test = ((test_fraction * facts.len() as f64 - 1e-9).ceil() as usize).min(facts.len() - 1);
        facts.shuffle(&mut rng);
        test.extend_from_slice(&facts[..n_test]);
        train.extend_from_slice(&facts[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

fn modal(counts: &BTreeMap<TypeId, usize>) -> Option<TypeId> {
    // BTreeMap iterates by id, so `>` keeps the smallest id on ties
    counts
        .iter()
        .fold(None, |best: Option<(TypeId, usize)>, (&t, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((t, c)),
        })
        .map(|(t, _)| t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorityClassifier {
    per_relation: HashMap<RelationId, (TypeId, TypeId)>,
    global: (TypeId, TypeId),
}

impl MajorityClassifier {
    pub fn predict(&self, triple: &Triple) -> (TypeId, TypeId) {
        self.per_relation.get(&triple.relation).copied().unwrap_or(self.global)
    }

    pub fn for_relation(&self, relation: RelationId) -> Option<(TypeId, TypeId)> {
        self.per_relation.get(&relation).copied()
    }
}

type TypeCounts = BTreeMap<TypeId, usize>;

pub fn fit_majority_classifier(
    kg: &KnowledgeGraph,
    train: &[usize],
    policy: &TypePolicy,
) -> Result<MajorityClassifier> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let mut per: BTreeMap<RelationId, (TypeCounts, TypeCounts)> = BTreeMap::new();
    let mut global_head = BTreeMap::new();
    let mut global_tail = BTreeMap::new();
    for &i in train {
        let t = &kg.triples()[i];
        let pair = kg.type_pair(t, policy)?;
        let entry = per.entry(t.relation).or_default();
        *entry.0.entry(pair.head).or_default() += 1;
        *entry.1.entry(pair.tail).or_default() += 1;
        *global_head.entry(pair.head).or_default() += 1;
        *global_tail.entry(pair.tail).or_default() += 1;
    }
    let per_relation = per
        .into_iter()
        .map(|(r, (h, t))| (r, (modal(&h).expect("non-empty"), modal(&t).expect("non-empty"))))
        .collect();
    Ok(MajorityClassifier {
        per_relation,
        global: (
            modal(&global_head).expect("non-empty"),
            modal(&global_tail).expect("non-empty"),
        ),
    })
}

/// Support-weighted precision, recall and F1 over the classes present in
/// `truth`. Classes never predicted contribute zero precision.
pub fn weighted_prf(truth: &[TypeId], predicted: &[TypeId]) -> (f64, f64, f64) {
    assert_eq!(truth.len(), predicted.len());
    #[derive(Default)]
    struct Counts {
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut per: BTreeMap<TypeId, Counts> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            per.entry(t).or_default().tp += 1;
        } else {
            per.entry(t).or_default().fn_ += 1;
            per.entry(p).or_default().fp += 1;
        }
    }
    let total = truth.len() as f64;
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for c in per.values() {
        let support = (c.tp + c.fn_) as f64;
        if support == 0.0 {
            continue;
        }
        let p = if c.tp + c.fp > 0 {
            c.tp as f64 / (c.tp + c.fp) as f64
        } else {
            0.0
        };
        let r = c.tp as f64 / support;
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = support / total;
        precision += w * p;
        recall += w * r;
        f1 += w * f;
    }
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_run: Vec<RunMetrics>,
    pub runs: usize,
    pub seed: u64,
}

/// Runs `runs` split/fit/predict rounds with seeds `seed + run` and averages
/// the weighted metrics over the pooled head and tail predictions.
pub fn evaluate_classification(
    kg: &KnowledgeGraph,
    runs: usize,
    test_fraction: f64,
    seed: u64,
    policy: &TypePolicy,
) -> Result<ClassificationReport> {
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    let mut per_run = Vec::with_capacity(runs);
    for run in 0..runs {
        let split = split_dataset(kg, test_fraction, seed.wrapping_add(run as u64))?;
        let clf = fit_majority_classifier(kg, &split.train, policy)?;
        let mut truth = Vec::with_capacity(2 * split.test.len());
        let mut predicted = Vec::with_capacity(2 * split.test.len());
        for &i in &split.test {
            let t = &kg.triples()[i];
            let pair = kg.type_pair(t, policy)?;
            let (ph, pt) = clf.predict(t);
            truth.extend([pair.head, pair.tail]);
            predicted.extend([ph, pt]);
        }
        let (precision, recall, f1) = if truth.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            weighted_prf(&truth, &predicted)
        };
        per_run.push(RunMetrics { precision, recall, f1 });
    }
    let mean = |f: fn(&RunMetrics) -> f64| per_run.iter().map(f).sum::<f64>() / runs as f64;
    Ok(ClassificationReport {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_run,
        runs,
        seed,
    })
}

/// `variant precision recall f1` table, four decimals.
pub fn write_report(path: &Path, rows: &[(String, ClassificationReport)]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "variant\tprecision\trecall\tf1")?;
        for (name, r) in rows {
            writeln!(w, "{name}\t{:.4}\t{:.4}\t{:.4}", r.precision, r.recall, r.f1)?;
        }
        Ok(())
    })
}
