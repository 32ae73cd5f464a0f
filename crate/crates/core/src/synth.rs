//! Synthetic knowledge graphs with planted relation senses.
//!
//! Entities belong to leaf types, and leaf types to a shared pool of classes.
//! Every planted relation has a number of senses; a sense connects one head
//! class to one tail class, and its facts link entities of any head leaf to
//! entities of any tail leaf, so a sense covers `subtypes²` type pairs. The
//! senses of one relation use distinct classes, while classes recur across
//! relations. That reuse is what keeps a translation model from serving all
//! senses of a relation with one vector.
//!
//! An auxiliary `is_a` relation links every entity to `anchors` hub entities
//! of its class, which pulls the entities of a class together.
//!
//! Semantic type vectors are drawn independently of the graph: one random
//! axis per class, leaves jittered around it.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{write_file, KnowledgeGraph};

pub const TRUTH_FORMAT: &str = "finegres-synth v1";
pub const ANCHOR_RELATION: &str = "is_a";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub relations: usize,
    /// Size of the class pool senses draw their endpoints from.
    pub classes: usize,
    /// Senses of relation `i` are `senses[i % senses.len()]`.
    pub senses: Vec<usize>,
    /// Leaf types per class.
    pub subtypes: usize,
    pub entities_per_type: usize,
    pub facts_per_pair: usize,
    /// Hub entities per class; each entity links to all of its class hubs.
    pub anchors: usize,
    /// Probability that a fact's tail is taken from another sense.
    pub noise: f64,
    pub type_dim: usize,
    /// Spread of leaf type vectors around their class axis.
    pub type_jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            relations: 5,
            classes: 12,
            senses: vec![2, 3, 4],
            subtypes: 2,
            entities_per_type: 8,
            facts_per_pair: 10,
            anchors: 2,
            noise: 0.0,
            type_dim: 16,
            type_jitter: 0.1,
            seed: 7,
        }
    }
}

impl SynthConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.relations == 0 {
            return bad("relations must be at least 1");
        }
        if self.senses.is_empty() || self.senses.contains(&0) {
            return bad("every relation needs at least one sense");
        }
        if self.classes < 2 * self.senses.iter().copied().max().unwrap_or(0) {
            return bad("class pool too small for the largest sense count");
        }
        if self.subtypes == 0 || self.entities_per_type == 0 || self.facts_per_pair == 0 {
            return bad("subtypes, entities per type and facts per pair must be positive");
        }
        if self.facts_per_pair > self.entities_per_type * self.entities_per_type {
            return bad("more facts per pair than distinct entity pairs");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must be in [0, 1]");
        }
        if self.type_dim < 2 || !(self.type_jitter >= 0.0) {
            return bad("type vectors need dim >= 2 and a non-negative jitter");
        }
        Ok(())
    }

    pub fn senses_of(&self, relation: usize) -> usize {
        self.senses[relation % self.senses.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedSense {
    pub head_class: String,
    pub tail_class: String,
    /// `(head leaf, tail leaf)` pairs.
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRelation {
    pub relation: String,
    pub senses: Vec<PlantedSense>,
}

/// Sidecar describing the planted partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: String,
    pub seed: u64,
    pub noise: f64,
    pub relations: Vec<PlantedRelation>,
}

impl GroundTruth {
    pub fn relation(&self, name: &str) -> Option<&PlantedRelation> {
        self.relations.iter().find(|r| r.relation == name)
    }

    /// Planted sense of a `(head leaf, tail leaf)` pair, if any.
    pub fn sense_of(&self, relation: &str, head: &str, tail: &str) -> Option<usize> {
        self.relation(relation)?
            .senses
            .iter()
            .position(|s| s.pairs.iter().any(|(h, t)| h == head && t == tail))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, self).map_err(std::io::Error::from)?;
            w.write_all(b"\n")
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let truth: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if truth.format != TRUTH_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: format `{}`, expected `{TRUTH_FORMAT}`",
                path.display(),
                truth.format
            )));
        }
        Ok(truth)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticKg {
    pub triples_tsv: String,
    pub types_tsv: String,
    pub type_vectors_tsv: String,
    pub truth: GroundTruth,
}

impl SyntheticKg {
    pub fn graph(&self) -> Result<KnowledgeGraph> {
        let kg = KnowledgeGraph::from_readers(
            self.triples_tsv.as_bytes(),
            "synthetic triples",
            self.types_tsv.as_bytes(),
            "synthetic types",
        )?;
        kg.validate()?;
        Ok(kg)
    }

    pub fn write(&self, triples: &Path, types: &Path, type_vectors: &Path, truth: &Path) -> Result<()> {
        write_file(triples, |w| w.write_all(self.triples_tsv.as_bytes()))?;
        write_file(types, |w| w.write_all(self.types_tsv.as_bytes()))?;
        write_file(type_vectors, |w| w.write_all(self.type_vectors_tsv.as_bytes()))?;
        self.truth.save(truth)
    }
}

struct Class {
    name: String,
    leaves: Vec<String>,
}

fn entity_name(leaf: &str, i: usize) -> String {
    format!("{leaf}.{i}")
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticKg> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let classes: Vec<Class> = (0..config.classes)
        .map(|c| {
            let name = format!("c{c}");
            let leaves = (0..config.subtypes).map(|j| format!("{name}.{j}")).collect();
            Class { name, leaves }
        })
        .collect();
    let mut triples = String::new();
    let mut planted = Vec::with_capacity(config.relations);

    let mut order: Vec<usize> = (0..config.classes).collect();
    for r in 0..config.relations {
        let relation = format!("rel{r}");
        let k = config.senses_of(r);
        order.shuffle(&mut rng);
        // sense s runs from class order[s] to class order[k + s]
        let ends: Vec<(&Class, &Class)> = (0..k).map(|s| (&classes[order[s]], &classes[order[k + s]])).collect();
        let mut seen = HashSet::new();
        let mut senses = Vec::with_capacity(k);
        for (s, (head, tail)) in ends.iter().enumerate() {
            let mut pairs = Vec::new();
            for hl in &head.leaves {
                for tl in &tail.leaves {
                    pairs.push((hl.clone(), tl.clone()));
                    let mut made = 0;
                    while made < config.facts_per_pair {
                        let h = entity_name(hl, rng.gen_range(0..config.entities_per_type));
                        let t = if k > 1 && config.noise > 0.0 && rng.gen_bool(config.noise) {
                            let other = (s + rng.gen_range(1..k)) % k;
                            let leaf = ends[other].1.leaves.choose(&mut rng).expect("non-empty");
                            entity_name(leaf, rng.gen_range(0..config.entities_per_type))
                        } else {
                            entity_name(tl, rng.gen_range(0..config.entities_per_type))
                        };
                        if seen.insert((h.clone(), t.clone())) {
                            writeln!(triples, "{h}\t{relation}\t{t}").expect("string write");
                            made += 1;
                        }
                    }
                }
            }
            senses.push(PlantedSense {
                head_class: head.name.clone(),
                tail_class: tail.name.clone(),
                pairs,
            });
        }
        planted.push(PlantedRelation { relation, senses });
    }

    let mut types = String::new();
    for class in &classes {
        for leaf in &class.leaves {
            for i in 0..config.entities_per_type {
                let e = entity_name(leaf, i);
                writeln!(types, "{e}\t{leaf}").expect("string write");
                for a in 0..config.anchors {
                    writeln!(triples, "{e}\t{ANCHOR_RELATION}\t{}.hub{a}", class.name).expect("string write");
                }
            }
        }
        for a in 0..config.anchors {
            writeln!(types, "{}.hub{a}\t{}", class.name, class.name).expect("string write");
        }
    }

    let mut vectors = String::new();
    for class in &classes {
        let axis = unit_gaussian(config.type_dim, &mut rng);
        write_vector(&mut vectors, &class.name, &axis);
        for leaf in &class.leaves {
            let v: Vec<f64> = axis
                .iter()
                .map(|a| a + config.type_jitter * rng.sample::<f64, _>(StandardNormal))
                .collect();
            write_vector(&mut vectors, leaf, &v);
        }
    }

    Ok(SyntheticKg {
        triples_tsv: triples,
        types_tsv: types,
        type_vectors_tsv: vectors,
        truth: GroundTruth {
            format: TRUTH_FORMAT.to_string(),
            seed: config.seed,
            noise: config.noise,
            relations: planted,
        },
    })
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::matrix::norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn write_vector(out: &mut String, name: &str, v: &[f64]) {
    out.push_str(name);
    for x in v {
        write!(out, "\t{x:.17e}").expect("string write");
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TypePolicy;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            relations: 3,
            senses: vec![3],
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn three_by_three_plants_nine_groups() {
        let g = generate(&small(1)).unwrap();
        let groups: usize = g.truth.relations.iter().map(|r| r.senses.len()).sum();
        assert_eq!(groups, 9);
        assert!(g
            .truth
            .relations
            .iter()
            .all(|r| r.senses.iter().all(|s| s.pairs.len() == 4)));
    }

    #[test]
    fn without_noise_every_pair_is_planted() {
        let g = generate(&small(2)).unwrap();
        let kg = g.graph().unwrap();
        for planted in &g.truth.relations {
            let r = kg.symbols().relation_id(&planted.relation).unwrap();
            for &i in kg.relation_fact_indices(r) {
                let p = kg.type_pair(&kg.triples()[i], &TypePolicy::First).unwrap();
                let (h, t) = (kg.symbols().type_name(p.head), kg.symbols().type_name(p.tail));
                assert!(g.truth.sense_of(&planted.relation, h, t).is_some(), "{h} {t}");
            }
            assert_eq!(kg.relation_fact_indices(r).len(), planted.senses.len() * 4 * 10);
        }
    }

    #[test]
    fn noise_introduces_unplanted_pairs() {
        let g = generate(&SynthConfig { noise: 0.3, ..small(3) }).unwrap();
        let kg = g.graph().unwrap();
        let r = kg.symbols().relation_id("rel0").unwrap();
        let stray = kg
            .relation_fact_indices(r)
            .iter()
            .filter(|&&i| {
                let p = kg.type_pair(&kg.triples()[i], &TypePolicy::First).unwrap();
                g.truth
                    .sense_of("rel0", kg.symbols().type_name(p.head), kg.symbols().type_name(p.tail))
                    .is_none()
            })
            .count();
        assert!(stray > 0);
    }

    #[test]
    fn seeded_output_is_reproducible() {
        let a = generate(&small(4)).unwrap();
        let b = generate(&small(4)).unwrap();
        assert_eq!(a.triples_tsv, b.triples_tsv);
        assert_eq!(a.type_vectors_tsv, b.type_vectors_tsv);
        assert_ne!(a.triples_tsv, generate(&small(5)).unwrap().triples_tsv);
    }

    #[test]
    fn invalid_configs() {
        for c in [
            SynthConfig {
                relations: 0,
                ..SynthConfig::default()
            },
            SynthConfig {
                senses: vec![2, 0],
                ..SynthConfig::default()
            },
            SynthConfig {
                noise: 1.5,
                ..SynthConfig::default()
            },
            SynthConfig {
                facts_per_pair: 65,
                ..SynthConfig::default()
            },
        ] {
            assert!(matches!(generate(&c), Err(Error::InvalidConfig(_))));
        }
    }
}
