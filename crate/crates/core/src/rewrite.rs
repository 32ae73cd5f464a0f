//! Replacing refined relations by their sub-relations.
//!
//! A fact is routed to the sub-relation whose group contains the fact's type
//! pair, so the rewrite is deterministic and needs no clustering at apply time.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{write_file, KnowledgeGraph, TypePolicy};
use crate::refine::Partition;

pub const MAP_FORMAT: &str = "finegres-map v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubRelation {
    pub name: String,
    /// Readable label built from the group's most frequent type pair.
    pub alias: String,
    /// `(head type, tail type)` names.
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSplit {
    pub relation: String,
    pub subrelations: Vec<SubRelation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubRelationMap {
    pub format: String,
    pub relations: Vec<RelationSplit>,
}

impl SubRelationMap {
    pub fn new() -> Self {
        Self {
            format: MAP_FORMAT.to_string(),
            relations: Vec::new(),
        }
    }

    pub fn push(&mut self, split: RelationSplit) {
        self.relations.push(split);
    }

    pub fn get(&self, relation: &str) -> Option<&RelationSplit> {
        self.relations.iter().find(|s| s.relation == relation)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, |w| {
            serde_json::to_writer_pretty(&mut *w, self).map_err(std::io::Error::from)?;
            w.write_all(b"\n")
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if map.format != MAP_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: format `{}`, expected `{MAP_FORMAT}`",
                path.display(),
                map.format
            )));
        }
        Ok(map)
    }
}

/// Names `relation#0`, `relation#1`, ... per group; a single group keeps the
/// original relation name. `pair_counts` is parallel to `partition.pairs()`.
pub fn subrelation_names(
    relation: &str,
    partition: &Partition,
    pair_counts: &[usize],
    type_name: impl Fn(crate::kg::TypeId) -> String,
) -> RelationSplit {
    let single = partition.num_groups() == 1;
    let subrelations = partition
        .groups()
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let top =
                members.iter().copied().fold(
                    members[0],
                    |best, i| if pair_counts[i] > pair_counts[best] { i } else { best },
                );
            let top = partition.pairs()[top];
            SubRelation {
                name: if single {
                    relation.to_string()
                } else {
                    format!("{relation}#{g}")
                },
                alias: format!("{relation}[{}->{}]", type_name(top.head), type_name(top.tail)),
                pairs: members
                    .iter()
                    .map(|&i| {
                        let p = partition.pairs()[i];
                        (type_name(p.head), type_name(p.tail))
                    })
                    .collect(),
            }
        })
        .collect();
    RelationSplit {
        relation: relation.to_string(),
        subrelations,
    }
}

/// Rewrites the relation of every fact covered by `map`. Triple order,
/// entities and type assignments are unchanged.
pub fn rewrite_graph(kg: &KnowledgeGraph, map: &SubRelationMap, policy: &TypePolicy) -> Result<KnowledgeGraph> {
    let symbols = kg.symbols();
    let mut routes: HashMap<&str, HashMap<(&str, &str), &str>> = HashMap::new();
    let mut new_names = HashSet::new();
    for split in &map.relations {
        let table = routes.entry(split.relation.as_str()).or_default();
        for sub in &split.subrelations {
            new_names.insert(sub.name.as_str());
            for (h, t) in &sub.pairs {
                if table.insert((h.as_str(), t.as_str()), sub.name.as_str()).is_some() {
                    return Err(Error::InvalidInput(format!(
                        "type pair <{h}, {t}> appears in two sub-relations of `{}`",
                        split.relation
                    )));
                }
            }
        }
    }
    for r in kg.relations() {
        let name = symbols.relation(r);
        if !routes.contains_key(name) && new_names.contains(name) {
            return Err(Error::InvalidInput(format!(
                "sub-relation name `{name}` collides with an existing relation"
            )));
        }
    }

    let mut names = Vec::with_capacity(kg.triples().len());
    for (i, t) in kg.triples().iter().enumerate() {
        let rel = symbols.relation(t.relation);
        match routes.get(rel) {
            None => names.push(rel),
            Some(table) => {
                let pair = kg.type_pair(t, policy)?;
                let key = (symbols.type_name(pair.head), symbols.type_name(pair.tail));
                let sub = table.get(&key).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "fact {} <{}, {rel}, {}> has type pair <{}, {}> outside every sub-relation",
                        i + 1,
                        symbols.entity(t.head),
                        symbols.entity(t.tail),
                        key.0,
                        key.1
                    ))
                })?;
                names.push(sub);
            }
        }
    }
    Ok(kg.with_relation_names(&names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TypePair;

    fn graph() -> KnowledgeGraph {
        let mut triples = String::new();
        for i in 0..6 {
            triples.push_str(&format!("w{i}\tcreated\tm{i}\n"));
        }
        for i in 0..4 {
            triples.push_str(&format!("c{i}\tcreated\tg{i}\n"));
        }
        triples.push_str("w0\tknows\tc0\n");
        let mut types = String::new();
        for i in 0..6 {
            types.push_str(&format!("w{i}\twriter\nm{i}\tmovie\n"));
        }
        for i in 0..4 {
            types.push_str(&format!("c{i}\tcompany\ng{i}\tgame\n"));
        }
        KnowledgeGraph::from_readers(triples.as_bytes(), "t", types.as_bytes(), "y").unwrap()
    }

    fn split_for(kg: &KnowledgeGraph, groups: Vec<Vec<usize>>) -> SubRelationMap {
        let r = kg.symbols().relation_id("created").unwrap();
        let facts = kg.index_relation(r, &TypePolicy::First).unwrap();
        let partition = Partition::new(facts.unique_pairs.clone(), groups).unwrap();
        let mut map = SubRelationMap::new();
        map.push(subrelation_names("created", &partition, &facts.pair_counts(), |t| {
            kg.symbols().type_name(t).to_string()
        }));
        map
    }

    #[test]
    fn names_and_aliases() {
        let kg = graph();
        let map = split_for(&kg, vec![vec![0], vec![1]]);
        let names: Vec<&str> = map.relations[0].subrelations.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["created#0", "created#1"]);
        assert_eq!(map.relations[0].subrelations[1].alias, "created[company->game]");

        let map = split_for(&kg, vec![vec![0, 1]]);
        assert_eq!(map.relations[0].subrelations[0].name, "created");
        assert_eq!(map.relations[0].subrelations[0].alias, "created[writer->movie]");
    }

    #[test]
    fn rewrite_routes_facts_by_type_pair() {
        let kg = graph();
        let out = rewrite_graph(&kg, &split_for(&kg, vec![vec![0], vec![1]]), &TypePolicy::First).unwrap();
        assert_eq!(out.triples().len(), kg.triples().len());
        let count = |name: &str| {
            let r = out.symbols().relation_id(name).unwrap();
            out.relation_fact_indices(r).len()
        };
        assert_eq!(count("created#0"), 6);
        assert_eq!(count("created#1"), 4);
        assert_eq!(count("knows"), 1);
        assert_eq!(out.type_lines(), kg.type_lines());
        assert_eq!(out.symbols().entities, kg.symbols().entities);
    }

    #[test]
    fn identity_partition_is_a_no_op() {
        let kg = graph();
        let out = rewrite_graph(&kg, &split_for(&kg, vec![vec![0, 1]]), &TypePolicy::First).unwrap();
        assert_eq!(out, kg);
    }

    #[test]
    fn uncovered_pair_is_an_error() {
        let kg = graph();
        let mut map = split_for(&kg, vec![vec![0], vec![1]]);
        map.relations[0].subrelations.pop();
        let err = rewrite_graph(&kg, &map, &TypePolicy::First).unwrap_err();
        assert!(err.to_string().contains("fact 7"), "{err}");
    }

    #[test]
    fn partition_validation() {
        let p = vec![TypePair::new(crate::kg::TypeId(0), crate::kg::TypeId(1)); 2];
        assert!(Partition::new(p.clone(), vec![vec![0]]).is_err());
        assert!(Partition::new(p.clone(), vec![vec![0, 1], vec![1]]).is_err());
        assert!(Partition::new(p, vec![vec![0], vec![]]).is_err());
    }
}
