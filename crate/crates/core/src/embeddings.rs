//! TransE / DistMult embeddings trained with a margin ranking loss, and the
//! per-fact relation vectors derived from them.
//!
//! Training is plain minibatch SGD. Each positive triple is paired with
//! `negatives` corruptions that replace the head or the tail by a uniformly
//! drawn entity; a corruption that happens to be a known fact is redrawn.
//! Entity vectors are projected back onto the unit sphere after every epoch.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{write_file, KnowledgeGraph, RelationId, SymbolTable, Triple, TypePair, TypePolicy};
use crate::matrix::{norm, Matrix};

const MAGIC: &str = "finegres-emb";
const VERSION: &str = "v1";
const MAX_RESAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TransE,
    DistMult,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            other => Err(Error::InvalidConfig(format!(
                "unknown model `{other}` (expected transe or distmult)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub kind: ModelKind,
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    pub entity_vectors: Matrix,
    pub relation_vectors: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Ranking margin between a fact and its corruptions.
    pub margin: f64,
    pub negatives: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 200,
            learning_rate: 0.01,
            margin: 1.0,
            negatives: 2,
            batch_size: 64,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!("dim must be >= 2, got {}", self.dim)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig("margin must be positive".into()));
        }
        if self.negatives == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("negatives and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform initialisation in `[-6/sqrt(dim), 6/sqrt(dim)]`.
pub fn init_model(
    kind: ModelKind,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
) -> Result<EmbeddingModel> {
    if dim < 2 {
        return Err(Error::InvalidConfig(format!("dim must be >= 2, got {dim}")));
    }
    let bound = 6.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Matrix {
        let data = (0..n * dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        Matrix::from_vec(n, dim, data)
    };
    let entity_vectors = draw(num_entities);
    let relation_vectors = draw(num_relations);
    Ok(EmbeddingModel {
        kind,
        entity_names: (0..num_entities).map(|i| format!("e{i}")).collect(),
        relation_names: (0..num_relations).map(|i| format!("r{i}")).collect(),
        entity_vectors,
        relation_vectors,
    })
}

/// `init_model` sized and named after `kg`'s symbol table.
pub fn init_for_graph(kind: ModelKind, dim: usize, kg: &KnowledgeGraph, seed: u64) -> Result<EmbeddingModel> {
    let mut model = init_model(kind, dim, kg.num_entities(), kg.num_relations(), seed)?;
    model.entity_names = kg.symbols().entities.names().to_vec();
    model.relation_names = kg.symbols().relations.names().to_vec();
    Ok(model)
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.entity_vectors.cols()
    }

    /// Plausibility of a triple; higher is better.
    pub fn score(&self, t: &Triple) -> f64 {
        let h = self.entity_vectors.row(t.head.index());
        let r = self.relation_vectors.row(t.relation.index());
        let tl = self.entity_vectors.row(t.tail.index());
        match self.kind {
            ModelKind::TransE => -h
                .iter()
                .zip(r)
                .zip(tl)
                .map(|((h, r), t)| (h + r - t) * (h + r - t))
                .sum::<f64>()
                .sqrt(),
            ModelKind::DistMult => h.iter().zip(r).zip(tl).map(|((h, r), t)| h * r * t).sum(),
        }
    }

    /// Relation vector witnessed by one fact: `t - h` for TransE, `h * t`
    /// (elementwise) for DistMult.
    pub fn delta(&self, t: &Triple) -> Vec<f64> {
        let h = self.entity_vectors.row(t.head.index());
        let tl = self.entity_vectors.row(t.tail.index());
        match self.kind {
            ModelKind::TransE => tl.iter().zip(h).map(|(t, h)| t - h).collect(),
            ModelKind::DistMult => h.iter().zip(tl).map(|(h, t)| h * t).collect(),
        }
    }

    /// Reorders the vector tables to follow `symbols`' id order. Fails if an
    /// entity or relation of the graph has no vector.
    pub fn align_to(&self, symbols: &SymbolTable) -> Result<EmbeddingModel> {
        fn pick(names: &[String], table: &Matrix, wanted: &[String], kind: &str) -> Result<Matrix> {
            let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
            let mut rows = Vec::with_capacity(wanted.len());
            let mut missing = Vec::new();
            for w in wanted {
                match pos.get(w.as_str()) {
                    Some(&i) => rows.push(i),
                    None => missing.push(w.as_str()),
                }
            }
            if !missing.is_empty() {
                missing.truncate(10);
                return Err(Error::InvalidInput(format!(
                    "model has no vector for {kind}(s): {}",
                    missing.join(", ")
                )));
            }
            Ok(table.select_rows(&rows))
        }
        Ok(EmbeddingModel {
            kind: self.kind,
            entity_vectors: pick(
                &self.entity_names,
                &self.entity_vectors,
                symbols.entities.names(),
                "entity",
            )?,
            relation_vectors: pick(
                &self.relation_names,
                &self.relation_vectors,
                symbols.relations.names(),
                "relation",
            )?,
            entity_names: symbols.entities.names().to_vec(),
            relation_names: symbols.relations.names().to_vec(),
        })
    }

    fn normalize_entities(&mut self) {
        for i in 0..self.entity_vectors.rows() {
            let row = self.entity_vectors.row_mut(i);
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }

    /// Adds the score gradient of `t`, scaled by `sign`, into the accumulators.
    fn accumulate_score_grad(&self, t: &Triple, sign: f64, grads: &mut Gradients) {
        let dim = self.dim();
        let h = self.entity_vectors.row(t.head.index());
        let r = self.relation_vectors.row(t.relation.index());
        let tl = self.entity_vectors.row(t.tail.index());
        let (gh, gr, gt): (Vec<f64>, Vec<f64>, Vec<f64>) = match self.kind {
            ModelKind::TransE => {
                // d score / d h = -(h + r - t) / ||h + r - t||
                let diff: Vec<f64> = (0..dim).map(|i| h[i] + r[i] - tl[i]).collect();
                let d = norm(&diff);
                if d == 0.0 {
                    return;
                }
                let g: Vec<f64> = diff.iter().map(|x| -x / d).collect();
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                (g.clone(), g, neg)
            }
            ModelKind::DistMult => (
                (0..dim).map(|i| r[i] * tl[i]).collect(),
                (0..dim).map(|i| h[i] * tl[i]).collect(),
                (0..dim).map(|i| h[i] * r[i]).collect(),
            ),
        };
        grads.add_entity(t.head.index(), &gh, sign, dim);
        grads.add_relation(t.relation.index(), &gr, sign, dim);
        grads.add_entity(t.tail.index(), &gt, sign, dim);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, |w| self.write_to(w))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION} {} {}", self.kind, self.dim())?;
        for (tag, names, table) in [
            ("E", &self.entity_names, &self.entity_vectors),
            ("R", &self.relation_names, &self.relation_vectors),
        ] {
            for (i, name) in names.iter().enumerate() {
                write!(w, "{tag} {name}")?;
                for v in table.row(i) {
                    write!(w, " {v:.16e}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingModel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from<R: BufRead>(mut reader: R, path: &Path) -> Result<EmbeddingModel> {
        let bad = |message: String| Error::ModelFormat {
            path: path.to_path_buf(),
            message,
        };
        let mut text = String::new();
        reader.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(bad("file is truncated (no final newline)".into()));
        }
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 4 || parts[0] != MAGIC {
            return Err(bad(format!("bad header `{header}`")));
        }
        if parts[1] != VERSION {
            return Err(bad(format!("unsupported version `{}`", parts[1])));
        }
        let kind: ModelKind = parts[2].parse()?;
        let dim: usize = parts[3]
            .parse()
            .map_err(|_| bad(format!("bad dimension `{}`", parts[3])))?;
        if dim < 2 {
            return Err(bad(format!("dimension {dim} < 2")));
        }

        let mut entity_names = Vec::new();
        let mut entity_data = Vec::new();
        let mut relation_names = Vec::new();
        let mut relation_data = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (tag, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("line {lineno}: malformed row")))?;
            let mut fields: Vec<&str> = rest.rsplitn(dim + 1, ' ').collect();
            if fields.len() != dim + 1 {
                return Err(bad(format!("line {lineno}: expected {dim} values")));
            }
            let name = fields.pop().unwrap_or_default().to_string();
            fields.reverse();
            let mut values = Vec::with_capacity(dim);
            for f in fields {
                let v: f64 = f.parse().map_err(|_| bad(format!("line {lineno}: bad number `{f}`")))?;
                if !v.is_finite() {
                    return Err(bad(format!("line {lineno}: non-finite value")));
                }
                values.push(v);
            }
            match tag {
                "E" => {
                    if !relation_names.is_empty() {
                        return Err(bad(format!("line {lineno}: entity row after relation rows")));
                    }
                    entity_names.push(name);
                    entity_data.extend(values);
                }
                "R" => {
                    relation_names.push(name);
                    relation_data.extend(values);
                }
                other => return Err(bad(format!("line {lineno}: unknown row tag `{other}`"))),
            }
        }
        if entity_names.is_empty() || relation_names.is_empty() {
            return Err(bad("file is truncated (missing entity or relation rows)".into()));
        }
        Ok(EmbeddingModel {
            kind,
            entity_vectors: Matrix::from_vec(entity_names.len(), dim, entity_data),
            relation_vectors: Matrix::from_vec(relation_names.len(), dim, relation_data),
            entity_names,
            relation_names,
        })
    }
}

#[derive(Default)]
struct Gradients {
    entities: HashMap<usize, Vec<f64>>,
    relations: HashMap<usize, Vec<f64>>,
}

impl Gradients {
    fn add_entity(&mut self, i: usize, g: &[f64], sign: f64, dim: usize) {
        let acc = self.entities.entry(i).or_insert_with(|| vec![0.0; dim]);
        acc.iter_mut().zip(g).for_each(|(a, g)| *a += sign * g);
    }

    fn add_relation(&mut self, i: usize, g: &[f64], sign: f64, dim: usize) {
        let acc = self.relations.entry(i).or_insert_with(|| vec![0.0; dim]);
        acc.iter_mut().zip(g).for_each(|(a, g)| *a += sign * g);
    }

    /// Gradient ascent on the score difference, i.e. descent on the loss.
    fn apply(self, model: &mut EmbeddingModel, lr: f64) {
        for (i, g) in self.entities {
            model
                .entity_vectors
                .row_mut(i)
                .iter_mut()
                .zip(&g)
                .for_each(|(v, g)| *v += lr * g);
        }
        for (i, g) in self.relations {
            model
                .relation_vectors
                .row_mut(i)
                .iter_mut()
                .zip(&g)
                .for_each(|(v, g)| *v += lr * g);
        }
    }
}

/// Trains `model` on `kg` and returns it with the mean hinge loss of every
/// epoch.
pub fn train(
    mut model: EmbeddingModel,
    kg: &KnowledgeGraph,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    config.validate()?;
    let triples = kg.triples();
    if triples.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty graph".into()));
    }
    if model.entity_vectors.rows() != kg.num_entities() || model.relation_vectors.rows() != kg.num_relations() {
        return Err(Error::InvalidInput("model size does not match the graph".into()));
    }
    let known: HashSet<Triple> = triples.iter().copied().collect();
    let num_entities = kg.num_entities() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::default();
            for &i in batch {
                let pos = triples[i];
                let pos_score = model.score(&pos);
                for _ in 0..config.negatives {
                    let Some(neg) = corrupt(&pos, num_entities, &known, &mut rng) else {
                        continue;
                    };
                    let loss = config.margin - pos_score + model.score(&neg);
                    count += 1;
                    if loss > 0.0 {
                        total += loss;
                        model.accumulate_score_grad(&pos, 1.0, &mut grads);
                        model.accumulate_score_grad(&neg, -1.0, &mut grads);
                    }
                }
            }
            grads.apply(&mut model, config.learning_rate);
        }
        model.normalize_entities();
        trace.push(if count > 0 { total / count as f64 } else { 0.0 });
    }
    Ok((model, trace))
}

fn corrupt(pos: &Triple, num_entities: u32, known: &HashSet<Triple>, rng: &mut ChaCha8Rng) -> Option<Triple> {
    for _ in 0..MAX_RESAMPLES {
        let e = crate::kg::EntityId(rng.gen_range(0..num_entities));
        let cand = if rng.gen_bool(0.5) {
            Triple { head: e, ..*pos }
        } else {
            Triple { tail: e, ..*pos }
        };
        if !known.contains(&cand) {
            return Some(cand);
        }
    }
    None
}

/// Per-fact relation vectors of one relation, each labelled with its type pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSet {
    pub relation: RelationId,
    pub vectors: Matrix,
    pub pair_labels: Vec<TypePair>,
    pub fact_indices: Vec<usize>,
}

impl DeltaSet {
    pub fn len(&self) -> usize {
        self.pair_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_labels.is_empty()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> DeltaSet {
        DeltaSet {
            relation: self.relation,
            vectors: self.vectors.select_rows(rows),
            pair_labels: rows.iter().map(|&i| self.pair_labels[i]).collect(),
            fact_indices: rows.iter().map(|&i| self.fact_indices[i]).collect(),
        }
    }
}

/// `model` must be aligned with `kg` (see [`EmbeddingModel::align_to`]).
pub fn delta_set(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    relation: RelationId,
    policy: &TypePolicy,
) -> Result<DeltaSet> {
    let facts = kg.index_relation(relation, policy)?;
    let dim = model.dim();
    let mut data = Vec::with_capacity(facts.num_facts() * dim);
    for &i in &facts.fact_indices {
        data.extend(model.delta(&kg.triples()[i]));
    }
    Ok(DeltaSet {
        relation,
        vectors: Matrix::from_vec(facts.num_facts(), dim, data),
        pair_labels: facts.pair_of_fact,
        fact_indices: facts.fact_indices,
    })
}

/// Mean score of the true triples and of one uniform corruption per triple.
pub fn ranking_sanity(model: &EmbeddingModel, kg: &KnowledgeGraph, seed: u64) -> (f64, f64) {
    let known: HashSet<Triple> = kg.triples().iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = kg.num_entities() as u32;
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut negs = 0usize;
    for t in kg.triples() {
        pos += model.score(t);
        if let Some(c) = corrupt(t, n, &known, &mut rng) {
            neg += model.score(&c);
            negs += 1;
        }
    }
    (pos / kg.triples().len() as f64, neg / negs.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EntityId;

    fn tiny(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> EmbeddingModel {
        EmbeddingModel {
            kind,
            entity_names: vec!["h".into(), "t".into()],
            relation_names: vec!["r".into()],
            entity_vectors: Matrix::from_rows(&[h, t]),
            relation_vectors: Matrix::from_rows(&[r]),
        }
    }

    const T: Triple = Triple {
        head: EntityId(0),
        relation: RelationId(0),
        tail: EntityId(1),
    };

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(ModelKind::TransE, 4, 10, 2, 7).unwrap();
        let b = init_model(ModelKind::TransE, 4, 10, 2, 7).unwrap();
        assert_eq!(a, b);
        let bound = 6.0 / 2.0;
        assert!(a.entity_vectors.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(a.relation_vectors.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(init_model(ModelKind::TransE, 1, 10, 2, 7).is_err());
    }

    #[test]
    fn transe_score() {
        let m = tiny(ModelKind::TransE, &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(m.score(&T), 0.0);
        let m = tiny(ModelKind::TransE, &[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]);
        assert!((m.score(&T) + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distmult_score() {
        let m = tiny(ModelKind::DistMult, &[2.0, 3.0], &[1.0, 1.0], &[4.0, 5.0]);
        assert_eq!(m.score(&T), 23.0);
    }

    #[test]
    fn deltas() {
        let m = tiny(ModelKind::TransE, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]);
        assert_eq!(m.delta(&T), vec![-1.0, 1.0]);
        let m = tiny(ModelKind::DistMult, &[2.0, 3.0], &[1.0, 1.0], &[4.0, 5.0]);
        assert_eq!(m.delta(&T), vec![8.0, 15.0]);
        // h + r = t exactly => t - h = r
        let m = tiny(ModelKind::TransE, &[0.5, -0.25], &[0.25, 1.0], &[0.75, 0.75]);
        assert_eq!(m.delta(&T), m.relation_vectors.row(0));
    }

    #[test]
    fn model_file_roundtrip_is_exact() {
        let mut m = init_model(ModelKind::DistMult, 3, 4, 2, 11).unwrap();
        m.entity_names[1] = "name with spaces".into();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = EmbeddingModel::read_from(&buf[..], Path::new("m")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn model_file_errors() {
        let m = init_model(ModelKind::TransE, 3, 4, 2, 11).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let truncated = &text[..text.len() - 7];
        assert!(EmbeddingModel::read_from(truncated.as_bytes(), Path::new("m")).is_err());

        let wrong_magic = text.replacen("finegres-emb", "other-emb", 1);
        assert!(EmbeddingModel::read_from(wrong_magic.as_bytes(), Path::new("m")).is_err());

        let wrong_version = text.replacen(" v1 ", " v2 ", 1);
        assert!(EmbeddingModel::read_from(wrong_version.as_bytes(), Path::new("m")).is_err());

        let wrong_dim = text.replacen("transe 3", "transe 4", 1);
        assert!(EmbeddingModel::read_from(wrong_dim.as_bytes(), Path::new("m")).is_err());
    }
}
