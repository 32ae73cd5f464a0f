//! Similarity-guided search for the sub-relations of one relation.
//!
//! The search starts from one group per type pair and repeatedly merges the
//! two most similar groups (average linkage over pair similarities). At every
//! level with `k >= 2` groups the relation vectors are clustered into `k`
//! clusters and scored by homogeneity against the group labels. The best
//! level wins; equal scores go to the smaller `k`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{homogeneity, ClustererSpec};
use crate::embeddings::DeltaSet;
use crate::error::{Error, Result};
use crate::kg::{SymbolTable, TypePair};
use crate::type_semantics::PairSimilarityMatrix;

pub const REFINEMENT_FORMAT: &str = "finegres-refinement v1";

/// Groups of type pairs. Groups hold indices into `pairs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pairs: Vec<TypePair>,
    groups: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates that `groups` partitions `0..pairs.len()` with no empty group.
    pub fn new(pairs: Vec<TypePair>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; pairs.len()];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("partition has an empty group".into()));
            }
            for &p in g {
                if p >= pairs.len() || std::mem::replace(&mut seen[p], true) {
                    return Err(Error::InvalidInput(
                        "partition groups overlap or are out of range".into(),
                    ));
                }
            }
        }
        if groups.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("partition does not cover every type pair".into()));
        }
        Ok(Self { pairs, groups })
    }

    pub fn pairs(&self) -> &[TypePair] {
        &self.pairs
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_pairs(&self, g: usize) -> impl Iterator<Item = TypePair> + '_ {
        self.groups[g].iter().map(|&i| self.pairs[i])
    }

    /// Pair -> group index, total over `pairs`.
    pub fn group_of_pair(&self) -> HashMap<TypePair, usize> {
        let mut out = HashMap::with_capacity(self.pairs.len());
        for (g, members) in self.groups.iter().enumerate() {
            for &i in members {
                out.insert(self.pairs[i], g);
            }
        }
        out
    }
}

/// One singleton group per pair, in pair order.
pub fn initial_partition(pairs: &[TypePair]) -> Partition {
    Partition {
        pairs: pairs.to_vec(),
        groups: (0..pairs.len()).map(|i| vec![i]).collect(),
    }
}

/// Mean similarity over all cross pairs of the two groups.
pub fn group_similarity(a: &[usize], b: &[usize], matrix: &PairSimilarityMatrix) -> f64 {
    let mut total = 0.0;
    for &p in a {
        for &q in b {
            total += matrix.get(p, q);
        }
    }
    total / (a.len() * b.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    /// Pair indices of the two merged groups.
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub similarity: f64,
}

/// Merges the most similar pair of groups. Ties go to the lexicographically
/// smallest `(i, j)`; the merged group takes index `i`.
pub fn merge_step(partition: &Partition, matrix: &PairSimilarityMatrix) -> Result<(Partition, MergeRecord)> {
    let g = partition.num_groups();
    if g < 2 {
        return Err(Error::InvalidInput("cannot merge a single group".into()));
    }
    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..g {
        for j in (i + 1)..g {
            let s = group_similarity(&partition.groups[i], &partition.groups[j], matrix);
            if s > best.2 {
                best = (i, j, s);
            }
        }
    }
    let (i, j, similarity) = best;
    let mut groups = partition.groups.clone();
    let right = groups.remove(j);
    let left = groups[i].clone();
    groups[i].extend_from_slice(&right);
    Ok((
        Partition {
            pairs: partition.pairs.clone(),
            groups,
        },
        MergeRecord {
            left,
            right,
            similarity,
        },
    ))
}

/// Ground-truth label of each relation vector: the group of its type pair.
pub fn ground_truth_labels(partition: &Partition, deltas: &DeltaSet) -> Result<Vec<usize>> {
    let group_of = partition.group_of_pair();
    deltas
        .pair_labels
        .iter()
        .map(|p| {
            group_of
                .get(p)
                .copied()
                .ok_or_else(|| Error::InvalidInput("relation vector has a type pair outside the partition".into()))
        })
        .collect()
}

/// Homogeneity of a `k`-clustering of the vectors against the partition's
/// labels, with `k` the number of groups. A single group scores 1.
pub fn evaluate_config(partition: &Partition, deltas: &DeltaSet, spec: &ClustererSpec) -> Result<f64> {
    let truth = ground_truth_labels(partition, deltas)?;
    let k = partition.num_groups();
    if k == 1 {
        return Ok(1.0);
    }
    if k > deltas.len() {
        return Err(Error::InvalidInput(format!(
            "{k} groups but only {} relation vectors",
            deltas.len()
        )));
    }
    let fit = spec.fit(&deltas.vectors, k)?;
    homogeneity(&truth, &fit.labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelScore {
    pub k: usize,
    pub partition: Partition,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    pub pairs: Vec<TypePair>,
    pub merge_trace: Vec<MergeRecord>,
    /// Scored levels, `k` descending from `L` to 2 (or the single trivial level).
    pub per_k: Vec<LevelScore>,
    chosen: usize,
}

impl RefinementResult {
    pub fn chosen(&self) -> &LevelScore {
        &self.per_k[self.chosen]
    }

    pub fn chosen_k(&self) -> usize {
        self.chosen().k
    }

    pub fn chosen_partition(&self) -> &Partition {
        &self.chosen().partition
    }

    pub fn objective(&self) -> f64 {
        self.chosen().score
    }
}

/// Runs the full merge trace and picks the best-scoring level with `k >= 2`.
/// A relation with a single type pair returns the trivial one-group result.
pub fn finegres_search(
    pairs: &[TypePair],
    deltas: &DeltaSet,
    matrix: &PairSimilarityMatrix,
    spec: &ClustererSpec,
) -> Result<RefinementResult> {
    let l = pairs.len();
    if l == 0 {
        return Err(Error::InvalidInput("relation has no type pairs".into()));
    }
    if matrix.size() != l {
        return Err(Error::InvalidInput(
            "similarity matrix does not match the type pairs".into(),
        ));
    }
    let mut partition = initial_partition(pairs);
    if l == 1 {
        return Ok(RefinementResult {
            pairs: pairs.to_vec(),
            merge_trace: Vec::new(),
            per_k: vec![LevelScore {
                k: 1,
                partition,
                score: 1.0,
            }],
            chosen: 0,
        });
    }
    if deltas.len() < l {
        return Err(Error::InvalidInput(format!(
            "{} relation vectors cannot be clustered into {l} groups",
            deltas.len()
        )));
    }

    let mut per_k = Vec::with_capacity(l - 1);
    let mut merge_trace = Vec::with_capacity(l - 1);
    loop {
        let k = partition.num_groups();
        let score = evaluate_config(&partition, deltas, spec)?;
        per_k.push(LevelScore {
            k,
            partition: partition.clone(),
            score,
        });
        let (next, record) = merge_step(&partition, matrix)?;
        merge_trace.push(record);
        partition = next;
        if partition.num_groups() == 1 {
            break;
        }
    }

    // per_k runs from large to small k, so `>=` hands ties to the smaller k
    let mut chosen = 0;
    for (i, level) in per_k.iter().enumerate() {
        if level.score >= per_k[chosen].score {
            chosen = i;
        }
    }
    Ok(RefinementResult {
        pairs: pairs.to_vec(),
        merge_trace,
        per_k,
        chosen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Max,
    Head,
    Tail,
}

/// `Max`: one group per pair. `Head` / `Tail`: pairs sharing a head / tail
/// type, groups in first-seen order.
pub fn baseline_partition(kind: Baseline, pairs: &[TypePair]) -> Partition {
    let key = |p: &TypePair| match kind {
        Baseline::Max => None,
        Baseline::Head => Some(p.head),
        Baseline::Tail => Some(p.tail),
    };
    if kind == Baseline::Max {
        return initial_partition(pairs);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = HashMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let g = *slot.entry(key(p)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    Partition {
        pairs: pairs.to_vec(),
        groups,
    }
}

/// Keeps at most about `cap` rows, sampling each type pair in proportion to
/// its size with at least one row per pair. Selected rows keep their order.
pub fn subsample_stratified(deltas: &DeltaSet, cap: usize, seed: u64) -> DeltaSet {
    let n = deltas.len();
    if n <= cap {
        return deltas.clone();
    }
    let mut by_pair: Vec<(TypePair, Vec<usize>)> = Vec::new();
    let mut slot = HashMap::new();
    for (i, p) in deltas.pair_labels.iter().enumerate() {
        let g = *slot.entry(*p).or_insert_with(|| {
            by_pair.push((*p, Vec::new()));
            by_pair.len() - 1
        });
        by_pair[g].1.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(cap + by_pair.len());
    for (_, rows) in &mut by_pair {
        let quota = ((rows.len() * cap) / n).max(1);
        rows.shuffle(&mut rng);
        keep.extend_from_slice(&rows[..quota.min(rows.len())]);
    }
    keep.sort_unstable();
    deltas.select(&keep)
}

/// Scores of the three baselines and the searched partition for one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub max: f64,
    pub head: f64,
    pub tail: f64,
    pub finegres: f64,
}

pub fn evaluate_all(
    pairs: &[TypePair],
    deltas: &DeltaSet,
    matrix: &PairSimilarityMatrix,
    spec: &ClustererSpec,
) -> Result<(ScoreRow, RefinementResult)> {
    let result = finegres_search(pairs, deltas, matrix, spec)?;
    let score = |b| evaluate_config(&baseline_partition(b, pairs), deltas, spec);
    let row = ScoreRow {
        max: score(Baseline::Max)?,
        head: score(Baseline::Head)?,
        tail: score(Baseline::Tail)?,
        finegres: result.objective(),
    };
    Ok((row, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub head: String,
    pub tail: String,
    pub facts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub k: usize,
    pub score: f64,
    pub groups: Vec<Vec<usize>>,
}

/// On-disk form of a [`RefinementResult`]. Groups are indices into
/// `unique_pairs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementDoc {
    pub format: String,
    pub relation: String,
    pub facts: usize,
    pub facts_clustered: usize,
    pub clusterer: String,
    pub unique_pairs: Vec<PairEntry>,
    pub merge_trace: Vec<MergeRecord>,
    pub per_k: Vec<LevelEntry>,
    pub chosen_k: usize,
    pub objective: f64,
    pub chosen_partition: Vec<Vec<usize>>,
    pub baselines: BaselineScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub max: f64,
    pub head: f64,
    pub tail: f64,
}

impl RefinementDoc {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        relation: &str,
        result: &RefinementResult,
        row: &ScoreRow,
        pair_counts: &[usize],
        facts_clustered: usize,
        clusterer: &str,
        symbols: &SymbolTable,
    ) -> Self {
        Self {
            format: REFINEMENT_FORMAT.to_string(),
            relation: relation.to_string(),
            facts: pair_counts.iter().sum(),
            facts_clustered,
            clusterer: clusterer.to_string(),
            unique_pairs: result
                .pairs
                .iter()
                .zip(pair_counts)
                .map(|(p, &facts)| PairEntry {
                    head: symbols.type_name(p.head).to_string(),
                    tail: symbols.type_name(p.tail).to_string(),
                    facts,
                })
                .collect(),
            merge_trace: result.merge_trace.clone(),
            per_k: result
                .per_k
                .iter()
                .map(|l| LevelEntry {
                    k: l.k,
                    score: l.score,
                    groups: l.partition.groups().to_vec(),
                })
                .collect(),
            chosen_k: result.chosen_k(),
            objective: result.objective(),
            chosen_partition: result.chosen_partition().groups().to_vec(),
            baselines: BaselineScores {
                max: row.max,
                head: row.head,
                tail: row.tail,
            },
        }
    }

    pub fn check_format(&self) -> Result<()> {
        if self.format != REFINEMENT_FORMAT {
            return Err(Error::InvalidInput(format!(
                "refinement for `{}` has format `{}`, expected `{REFINEMENT_FORMAT}`",
                self.relation, self.format
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{RelationId, TypeId};
    use crate::matrix::Matrix;

    fn pairs(n: u32) -> Vec<TypePair> {
        (0..n).map(|i| TypePair::new(TypeId(i), TypeId(100 + i))).collect()
    }

    fn sims(size: usize, entries: &[((usize, usize), f64)], default: f64) -> PairSimilarityMatrix {
        let table: HashMap<(usize, usize), f64> = entries.iter().copied().collect();
        PairSimilarityMatrix::from_fn(size, |i, j| *table.get(&(i, j)).unwrap_or(&default))
    }

    #[test]
    fn initial_partition_is_singletons() {
        let p = initial_partition(&pairs(3));
        assert_eq!(p.groups(), &[vec![0], vec![1], vec![2]]);
        assert_eq!(initial_partition(&pairs(1)).num_groups(), 1);
        assert_eq!(p.group_of_pair().len(), 3);
    }

    #[test]
    fn group_similarity_is_average() {
        let m = sims(3, &[((0, 2), 0.4), ((1, 2), 0.6), ((0, 1), 0.1)], 0.0);
        assert!((group_similarity(&[0], &[2], &m) - 0.4).abs() < 1e-15);
        assert!((group_similarity(&[0, 1], &[2], &m) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn merge_step_picks_most_similar() {
        let m = sims(3, &[((1, 2), 0.9)], 0.2);
        let (p, rec) = merge_step(&initial_partition(&pairs(3)), &m).unwrap();
        assert_eq!(p.groups(), &[vec![0], vec![1, 2]]);
        assert_eq!(rec.similarity, 0.9);
    }

    #[test]
    fn merge_step_tie_goes_to_first_pair() {
        let m = sims(3, &[], 0.5);
        let (p, _) = merge_step(&initial_partition(&pairs(3)), &m).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1], vec![2]]);
        let (p, _) = merge_step(&initial_partition(&pairs(2)), &sims(2, &[], 0.5)).unwrap();
        assert_eq!(p.num_groups(), 1);
        assert!(merge_step(&p, &sims(2, &[], 0.5)).is_err());
    }

    fn delta_set(labels: &[TypePair], rows: Vec<Vec<f64>>) -> DeltaSet {
        DeltaSet {
            relation: RelationId(0),
            vectors: Matrix::from_rows(&rows),
            pair_labels: labels.to_vec(),
            fact_indices: (0..labels.len()).collect(),
        }
    }

    #[test]
    fn ground_truth_follows_groups() {
        let ps = pairs(2);
        let d = delta_set(&[ps[0], ps[1], ps[1]], vec![vec![0.0]; 3]);
        assert_eq!(ground_truth_labels(&initial_partition(&ps), &d).unwrap(), vec![0, 1, 1]);
        let one = Partition::new(ps.clone(), vec![vec![0, 1]]).unwrap();
        assert_eq!(ground_truth_labels(&one, &d).unwrap(), vec![0, 0, 0]);
        assert_eq!(evaluate_config(&one, &d, &ClustererSpec::kmeans(1)).unwrap(), 1.0);
        let other = pairs(3);
        let d2 = delta_set(&[other[2]], vec![vec![0.0]]);
        assert!(ground_truth_labels(&initial_partition(&ps), &d2).is_err());
    }

    #[test]
    fn baselines() {
        let a = TypeId(0);
        let b = TypeId(1);
        let c = TypeId(2);
        let d = TypeId(3);
        let ps = vec![TypePair::new(a, b), TypePair::new(a, c), TypePair::new(d, b)];
        assert_eq!(baseline_partition(Baseline::Head, &ps).groups(), &[vec![0, 1], vec![2]]);
        assert_eq!(baseline_partition(Baseline::Tail, &ps).groups(), &[vec![0, 2], vec![1]]);
        assert_eq!(baseline_partition(Baseline::Max, &ps).num_groups(), 3);
    }

    #[test]
    fn search_trivial_and_two_pair_cases() {
        let ps = pairs(1);
        let d = delta_set(&[ps[0], ps[0]], vec![vec![0.0], vec![1.0]]);
        let r = finegres_search(&ps, &d, &sims(1, &[], 1.0), &ClustererSpec::kmeans(0)).unwrap();
        assert_eq!((r.chosen_k(), r.objective()), (1, 1.0));

        let ps = pairs(2);
        let d = delta_set(&[ps[0], ps[1], ps[0]], vec![vec![0.0], vec![5.0], vec![0.1]]);
        let r = finegres_search(&ps, &d, &sims(2, &[], 0.3), &ClustererSpec::kmeans(0)).unwrap();
        assert_eq!(r.per_k.iter().map(|l| l.k).collect::<Vec<_>>(), vec![2]);
        assert_eq!(r.merge_trace.len(), 1);
        assert_eq!(r.objective(), 1.0);

        let short = delta_set(&[ps[0]], vec![vec![0.0]]);
        assert!(finegres_search(&ps, &short, &sims(2, &[], 0.3), &ClustererSpec::kmeans(0)).is_err());
    }

    #[test]
    fn subsample_keeps_every_pair() {
        let ps = pairs(3);
        let mut labels = vec![ps[0]; 90];
        labels.extend(vec![ps[1]; 9]);
        labels.push(ps[2]);
        let d = delta_set(&labels, (0..100).map(|i| vec![i as f64]).collect());
        let s = subsample_stratified(&d, 20, 5);
        assert!(s.len() <= 22);
        for p in &ps {
            assert!(s.pair_labels.contains(p));
        }
        assert!(s.fact_indices.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_stratified(&d, 20, 5), s);
        assert_eq!(subsample_stratified(&d, 100, 5), d);
    }
}
