//! Vectors for entity types and the type-pair similarity that drives merging.
//!
//! Two pairs are compared by the mean of the cosine between their head types
//! and the cosine between their tail types.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;

use crate::embeddings::EmbeddingModel;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, SymbolTable, TypeId, TypePair};
use crate::matrix::{cosine, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorSource {
    External,
    Centroid,
}

/// Type id -> vector. Types without a usable vector are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeVectorTable {
    pub source: VectorSource,
    dim: usize,
    vectors: Vec<Option<Vec<f64>>>,
}

impl TypeVectorTable {
    /// Table indexed by type id; `None` marks a type without a vector.
    pub fn from_vectors(source: VectorSource, vectors: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let dim = vectors.iter().flatten().map(Vec::len).next().unwrap_or(0);
        for v in vectors.iter().flatten() {
            if v.len() != dim {
                return Err(Error::TypeVectors(format!(
                    "inconsistent dimension: {} != {dim}",
                    v.len()
                )));
            }
            if norm(v) == 0.0 || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::TypeVectors("vectors must be finite and nonzero".into()));
            }
        }
        Ok(Self { source, dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, t: TypeId) -> Option<&[f64]> {
        self.vectors.get(t.index()).and_then(|v| v.as_deref())
    }

    pub fn len(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn vector(&self, t: TypeId, symbols: Option<&SymbolTable>) -> Result<&[f64]> {
        self.get(t).ok_or_else(|| {
            let name = symbols.map_or_else(|| format!("#{}", t.0), |s| s.type_name(t).to_string());
            Error::TypeVectors(format!("no vector for type `{name}`"))
        })
    }

    fn check_required(&self, required: &[TypeId], symbols: &SymbolTable) -> Result<()> {
        let missing: Vec<&str> = required
            .iter()
            .filter(|t| self.get(**t).is_none())
            .map(|t| symbols.type_name(*t))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::TypeVectors(format!(
                "missing vectors for types: {}",
                missing.join(", ")
            )))
        }
    }
}

/// Types occurring in the given pairs, sorted by id.
pub fn types_of_pairs<'a>(pairs: impl IntoIterator<Item = &'a TypePair>) -> Vec<TypeId> {
    let set: BTreeSet<TypeId> = pairs.into_iter().flat_map(|p| [p.head, p.tail]).collect();
    set.into_iter().collect()
}

/// Reads `type<TAB>v1<TAB>...<TAB>vd` lines. Types unknown to `symbols` are
/// ignored; every type in `required` must end up with a vector.
pub fn load_type_vectors<R: BufRead>(
    reader: R,
    source_name: &str,
    symbols: &SymbolTable,
    required: &[TypeId],
) -> Result<TypeVectorTable> {
    let mut dim = None;
    let mut vectors = vec![None; symbols.types.len()];
    let mut bad_dim = Vec::new();
    let mut zero = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(source_name, lineno, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::parse(source_name, lineno, "type has no vector components"));
        }
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            bad_dim.push(format!("{name} (line {lineno}: {} != {d})", values.len()));
            continue;
        }
        if norm(&values) == 0.0 {
            zero.push(name.to_string());
            continue;
        }
        if let Some(t) = symbols.type_id(name) {
            vectors[t.index()] = Some(values);
        }
    }
    if !bad_dim.is_empty() {
        return Err(Error::TypeVectors(format!(
            "inconsistent dimension: {}",
            bad_dim.join(", ")
        )));
    }
    if !zero.is_empty() {
        return Err(Error::TypeVectors(format!("zero vectors: {}", zero.join(", "))));
    }
    let table = TypeVectorTable {
        source: VectorSource::External,
        dim: dim.unwrap_or(0),
        vectors,
    };
    table.check_required(required, symbols)?;
    Ok(table)
}

/// Type vector = mean of the vectors of all entities assigned that type.
/// `model` must be aligned with `kg`.
pub fn centroid_type_vectors(
    model: &EmbeddingModel,
    kg: &KnowledgeGraph,
    required: &[TypeId],
) -> Result<TypeVectorTable> {
    let dim = model.dim();
    let num_types = kg.symbols().types.len();
    let mut sums = vec![vec![0.0; dim]; num_types];
    let mut counts = vec![0usize; num_types];
    let mut seen = HashSet::new();
    for &(e, t) in kg.type_lines() {
        if !seen.insert((e, t)) {
            continue;
        }
        counts[t.index()] += 1;
        for (s, v) in sums[t.index()].iter_mut().zip(model.entity_vectors.row(e.index())) {
            *s += v;
        }
    }
    let vectors = sums
        .into_iter()
        .zip(counts)
        .map(|(mut s, c)| {
            if c == 0 {
                return None;
            }
            s.iter_mut().for_each(|v| *v /= c as f64);
            (norm(&s) > 0.0).then_some(s)
        })
        .collect();
    let table = TypeVectorTable {
        source: VectorSource::Centroid,
        dim,
        vectors,
    };
    table.check_required(required, kg.symbols())?;
    Ok(table)
}

pub fn pair_similarity(p: &TypePair, q: &TypePair, table: &TypeVectorTable) -> Result<f64> {
    let head = cosine(table.vector(p.head, None)?, table.vector(q.head, None)?);
    let tail = cosine(table.vector(p.tail, None)?, table.vector(q.tail, None)?);
    Ok(0.5 * head + 0.5 * tail)
}

/// Symmetric L x L similarity matrix in the order of `pairs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSimilarityMatrix {
    size: usize,
    data: Vec<f64>,
}

impl PairSimilarityMatrix {
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            data[i * size + i] = 1.0;
            for j in (i + 1)..size {
                let v = f(i, j);
                data[i * size + j] = v;
                data[j * size + i] = v;
            }
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }
}

pub fn pair_similarity_matrix(pairs: &[TypePair], table: &TypeVectorTable) -> Result<PairSimilarityMatrix> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no type pairs".into()));
    }
    for t in types_of_pairs(pairs) {
        table.vector(t, None)?;
    }
    // Diagonal is fixed at 1; off-diagonal entries computed once per unordered pair.
    Ok(PairSimilarityMatrix::from_fn(pairs.len(), |i, j| {
        pair_similarity(&pairs[i], &pairs[j], table).expect("types checked above")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symbols(names: &[&str]) -> SymbolTable {
        let mut s = SymbolTable::default();
        for n in names {
            s.types.intern(n);
        }
        s
    }

    fn table(rows: &[&[f64]]) -> TypeVectorTable {
        TypeVectorTable {
            source: VectorSource::External,
            dim: rows[0].len(),
            vectors: rows.iter().map(|r| Some(r.to_vec())).collect(),
        }
    }

    fn pair(h: u32, t: u32) -> TypePair {
        TypePair::new(TypeId(h), TypeId(t))
    }

    #[test]
    fn load_two_types() {
        let s = symbols(&["a", "b"]);
        let t = load_type_vectors("a\t1\t0\t0\nb\t0\t1\t0\n".as_bytes(), "v", &s, &[TypeId(0), TypeId(1)]).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.source, VectorSource::External);
    }

    #[test]
    fn load_rejects_mixed_dimension_and_zero_vectors() {
        let s = symbols(&["a", "b"]);
        let err = load_type_vectors("a\t1\t0\t0\nb\t0\t1\n".as_bytes(), "v", &s, &[]).unwrap_err();
        assert!(err.to_string().contains("inconsistent dimension"), "{err}");
        let err = load_type_vectors("a\t0\t0\nb\t0\t1\n".as_bytes(), "v", &s, &[]).unwrap_err();
        assert!(err.to_string().contains("zero vectors: a"), "{err}");
        let err = load_type_vectors("a\t1\t0\n".as_bytes(), "v", &s, &[TypeId(1)]).unwrap_err();
        assert!(err.to_string().contains("b"), "{err}");
    }

    #[test]
    fn similarity_cases() {
        // heads orthogonal, tails identical
        let t = table(&[&[1.0, 0.0], &[0.0, 1.0], &[3.0, 4.0]]);
        let p = pair(0, 2);
        let q = pair(1, 2);
        assert_eq!(pair_similarity(&p, &p, &t).unwrap(), 1.0);
        assert!((pair_similarity(&p, &q, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(pair_similarity(&p, &pair(0, 9), &t).is_err());
    }

    #[test]
    fn matrix_single_pair() {
        let t = table(&[&[1.0, 0.0]]);
        let m = pair_similarity_matrix(&[pair(0, 0)], &t).unwrap();
        assert_eq!(m.size(), 1);
        assert_eq!(m.get(0, 0), 1.0);
    }
}
