//! Triples, entity-type assignments and per-relation type-pair indexing.
//!
//! Both input formats are tab-separated text without a header. Blank lines and
//! lines starting with `#` are skipped. Names are interned in first-seen
//! order, so ids are dense and stable for a given input.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(EntityId);
id_type!(RelationId);
id_type!(TypeId);

/// Bidirectional name <-> dense id map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    pub entities: Interner,
    pub relations: Interner,
    pub types: Interner,
}

impl SymbolTable {
    pub fn entity(&self, id: EntityId) -> &str {
        self.entities.name(id.0)
    }

    pub fn relation(&self, id: RelationId) -> &str {
        self.relations.name(id.0)
    }

    pub fn type_name(&self, id: TypeId) -> &str {
        self.types.name(id.0)
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.get(name).map(TypeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Ordered (head type, tail type) tuple: the semantic label of a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypePair {
    pub head: TypeId,
    pub tail: TypeId,
}

impl TypePair {
    pub fn new(head: TypeId, tail: TypeId) -> Self {
        Self { head, tail }
    }

    pub fn display<'a>(&self, symbols: &'a SymbolTable) -> TypePairDisplay<'a> {
        TypePairDisplay {
            head: symbols.type_name(self.head),
            tail: symbols.type_name(self.tail),
        }
    }
}

pub struct TypePairDisplay<'a> {
    head: &'a str,
    tail: &'a str,
}

impl fmt::Display for TypePairDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}>", self.head, self.tail)
    }
}

/// How an entity with several assigned types is mapped to a single one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TypePolicy {
    /// First type listed for the entity.
    #[default]
    First,
    /// First entry of this list that the entity carries, else its first type.
    Priority(Vec<String>),
}

impl TypePolicy {
    /// Parses `first` or `priority:A,B,C`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "first" {
            return Ok(TypePolicy::First);
        }
        if let Some(list) = s.strip_prefix("priority:") {
            let names: Vec<String> = list
                .split(',')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .map(str::to_string)
                .collect();
            if names.is_empty() {
                return Err(Error::InvalidConfig("empty type priority list".into()));
            }
            return Ok(TypePolicy::Priority(names));
        }
        Err(Error::InvalidConfig(format!(
            "type policy must be `first` or `priority:<types>`, got `{s}`"
        )))
    }
}

impl fmt::Display for TypePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypePolicy::First => f.write_str("first"),
            TypePolicy::Priority(names) => write!(f, "priority:{}", names.join(",")),
        }
    }
}

/// Entity-type assignment lines, kept in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeAssignments {
    lines: Vec<(String, String)>,
}

impl TypeAssignments {
    pub fn push(&mut self, entity: impl Into<String>, type_name: impl Into<String>) {
        self.lines.push((entity.into(), type_name.into()));
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Types of `entity` in file order.
    pub fn types_of(&self, entity: &str) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|(e, _)| e == entity)
            .map(|(_, t)| t.as_str())
            .collect()
    }

    /// Entity name -> ordered type names, entities in first-seen order.
    pub fn grouped(&self) -> Vec<(&str, Vec<&str>)> {
        let mut order: Vec<(&str, Vec<&str>)> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for (e, t) in &self.lines {
            let i = *slot.entry(e.as_str()).or_insert_with(|| {
                order.push((e.as_str(), Vec::new()));
                order.len() - 1
            });
            order[i].1.push(t.as_str());
        }
        order
    }
}

fn content_lines<'a, R: BufRead + 'a>(
    reader: R,
    source_name: &'a str,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let lineno = i + 1;
        match line {
            Err(e) => Some(Err(Error::parse(source_name, lineno, e.to_string()))),
            Ok(mut l) => {
                if l.ends_with('\r') {
                    l.pop();
                }
                if l.trim().is_empty() || l.starts_with('#') {
                    None
                } else {
                    Some(Ok((lineno, l)))
                }
            }
        }
    })
}

fn split_fields<'a>(line: &'a str, expected: usize, source_name: &str, lineno: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != expected {
        return Err(Error::parse(
            source_name,
            lineno,
            format!("expected {expected} tab-separated fields, found {}", fields.len()),
        ));
    }
    if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
        return Err(Error::parse(source_name, lineno, format!("field {} is empty", pos + 1)));
    }
    Ok(fields)
}

/// Parses `head<TAB>relation<TAB>tail` lines. Duplicate lines are kept.
pub fn parse_triples<R: BufRead>(reader: R, source_name: &str) -> Result<(Vec<Triple>, SymbolTable)> {
    let mut symbols = SymbolTable::default();
    let mut triples = Vec::new();
    for item in content_lines(reader, source_name) {
        let (lineno, line) = item?;
        let f = split_fields(&line, 3, source_name, lineno)?;
        let head = EntityId(symbols.entities.intern(f[0]));
        let relation = RelationId(symbols.relations.intern(f[1]));
        let tail = EntityId(symbols.entities.intern(f[2]));
        triples.push(Triple { head, relation, tail });
    }
    if triples.is_empty() {
        return Err(Error::EmptyInput(source_name.to_string()));
    }
    Ok((triples, symbols))
}

/// Parses `entity<TAB>type` lines; several lines per entity accumulate.
pub fn parse_type_assignments<R: BufRead>(reader: R, source_name: &str) -> Result<TypeAssignments> {
    let mut out = TypeAssignments::default();
    for item in content_lines(reader, source_name) {
        let (lineno, line) = item?;
        let f = split_fields(&line, 2, source_name, lineno)?;
        out.push(f[0], f[1]);
    }
    Ok(out)
}

/// Facts of one relation with the type pair of each fact.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationFacts {
    pub relation: RelationId,
    pub fact_indices: Vec<usize>,
    pub pair_of_fact: Vec<TypePair>,
    /// Distinct pairs in first-seen order.
    pub unique_pairs: Vec<TypePair>,
}

impl RelationFacts {
    pub fn num_pairs(&self) -> usize {
        self.unique_pairs.len()
    }

    pub fn num_facts(&self) -> usize {
        self.fact_indices.len()
    }

    /// Fact count per unique pair, parallel to `unique_pairs`.
    pub fn pair_counts(&self) -> Vec<usize> {
        let pos: HashMap<TypePair, usize> = self.unique_pairs.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut counts = vec![0; self.unique_pairs.len()];
        for p in &self.pair_of_fact {
            counts[pos[p]] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolysemyRow {
    pub relation: String,
    pub pair_count: usize,
    pub fact_count: usize,
}

/// Immutable knowledge graph: triples in ingestion order plus type assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    symbols: SymbolTable,
    type_lines: Vec<(EntityId, TypeId)>,
    types_of: Vec<Vec<TypeId>>,
    facts_by_relation: Vec<Vec<usize>>,
}

impl KnowledgeGraph {
    /// Assembles a graph. Entities that only occur in `assignments` are
    /// interned after the triple entities; types are interned in file order.
    pub fn new(triples: Vec<Triple>, mut symbols: SymbolTable, assignments: &TypeAssignments) -> Self {
        let mut type_lines = Vec::with_capacity(assignments.len());
        for (e, t) in assignments.lines() {
            let eid = EntityId(symbols.entities.intern(e));
            let tid = TypeId(symbols.types.intern(t));
            type_lines.push((eid, tid));
        }
        let mut types_of = vec![Vec::new(); symbols.entities.len()];
        for &(e, t) in &type_lines {
            types_of[e.index()].push(t);
        }
        let mut facts_by_relation = vec![Vec::new(); symbols.relations.len()];
        for (i, t) in triples.iter().enumerate() {
            facts_by_relation[t.relation.index()].push(i);
        }
        Self {
            triples,
            symbols,
            type_lines,
            types_of,
            facts_by_relation,
        }
    }

    pub fn from_readers<R1: BufRead, R2: BufRead>(
        triples: R1,
        triples_name: &str,
        types: R2,
        types_name: &str,
    ) -> Result<Self> {
        let (triples, symbols) = parse_triples(triples, triples_name)?;
        let assignments = parse_type_assignments(types, types_name)?;
        Ok(Self::new(triples, symbols, &assignments))
    }

    /// Reads and validates a graph from its two TSV files.
    pub fn load(triples_path: &Path, types_path: &Path) -> Result<Self> {
        let tf = File::open(triples_path).map_err(|e| Error::io(triples_path, e))?;
        let yf = File::open(types_path).map_err(|e| Error::io(types_path, e))?;
        let kg = Self::from_readers(
            BufReader::new(tf),
            &triples_path.display().to_string(),
            BufReader::new(yf),
            &types_path.display().to_string(),
        )?;
        kg.validate()?;
        Ok(kg)
    }

    /// Every entity that appears in a triple must carry at least one type.
    pub fn validate(&self) -> Result<()> {
        for t in &self.triples {
            for e in [t.head, t.tail] {
                if self.types_of[e.index()].is_empty() {
                    return Err(Error::UntypedEntity(self.symbols.entity(e).to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn num_entities(&self) -> usize {
        self.symbols.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.symbols.relations.len()
    }

    pub fn types_of(&self, entity: EntityId) -> &[TypeId] {
        &self.types_of[entity.index()]
    }

    /// Type assignment lines in their original order.
    pub fn type_lines(&self) -> &[(EntityId, TypeId)] {
        &self.type_lines
    }

    pub fn relation_fact_indices(&self, relation: RelationId) -> &[usize] {
        &self.facts_by_relation[relation.index()]
    }

    /// Relation ids that occur in at least one triple, in id order.
    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.facts_by_relation
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_empty())
            .map(|(i, _)| RelationId(i as u32))
    }

    pub fn resolve_type(&self, entity: EntityId, policy: &TypePolicy) -> Result<TypeId> {
        let types = self.types_of(entity);
        let first = *types
            .first()
            .ok_or_else(|| Error::UntypedEntity(self.symbols.entity(entity).to_string()))?;
        match policy {
            TypePolicy::First => Ok(first),
            TypePolicy::Priority(order) => Ok(order
                .iter()
                .filter_map(|name| self.symbols.type_id(name))
                .find(|t| types.contains(t))
                .unwrap_or(first)),
        }
    }

    pub fn type_pair(&self, triple: &Triple, policy: &TypePolicy) -> Result<TypePair> {
        Ok(TypePair::new(
            self.resolve_type(triple.head, policy)?,
            self.resolve_type(triple.tail, policy)?,
        ))
    }

    pub fn index_relation(&self, relation: RelationId, policy: &TypePolicy) -> Result<RelationFacts> {
        let facts = self
            .facts_by_relation
            .get(relation.index())
            .filter(|f| !f.is_empty())
            .ok_or_else(|| {
                let name = if relation.index() < self.num_relations() {
                    self.symbols.relation(relation).to_string()
                } else {
                    format!("#{}", relation.0)
                };
                Error::RelationAbsent(name)
            })?;
        let mut pair_of_fact = Vec::with_capacity(facts.len());
        let mut unique_pairs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for &i in facts {
            let pair = self.type_pair(&self.triples[i], policy)?;
            if seen.insert(pair) {
                unique_pairs.push(pair);
            }
            pair_of_fact.push(pair);
        }
        Ok(RelationFacts {
            relation,
            fact_indices: facts.clone(),
            pair_of_fact,
            unique_pairs,
        })
    }

    /// One row per relation: (name, distinct type pairs, facts), sorted by
    /// pair count descending then name.
    pub fn relation_polysemy_stats(&self, policy: &TypePolicy) -> Result<Vec<PolysemyRow>> {
        let mut rows = Vec::new();
        for r in self.relations() {
            let facts = self.index_relation(r, policy)?;
            rows.push(PolysemyRow {
                relation: self.symbols.relation(r).to_string(),
                pair_count: facts.num_pairs(),
                fact_count: facts.num_facts(),
            });
        }
        rows.sort_by(|a, b| {
            b.pair_count
                .cmp(&a.pair_count)
                .then_with(|| a.relation.cmp(&b.relation))
        });
        Ok(rows)
    }

    pub fn write_triples<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.symbols.entity(t.head),
                self.symbols.relation(t.relation),
                self.symbols.entity(t.tail)
            )?;
        }
        Ok(())
    }

    pub fn write_types<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for &(e, t) in &self.type_lines {
            writeln!(w, "{}\t{}", self.symbols.entity(e), self.symbols.type_name(t))?;
        }
        Ok(())
    }

    pub fn save(&self, triples_path: &Path, types_path: &Path) -> Result<()> {
        write_file(triples_path, |w| self.write_triples(w))?;
        write_file(types_path, |w| self.write_types(w))
    }

    /// Same entities and type assignments with the relation of each triple
    /// replaced by `relation_names[i]`.
    pub fn with_relation_names(&self, relation_names: &[&str]) -> Self {
        assert_eq!(relation_names.len(), self.triples.len());
        let mut symbols = SymbolTable {
            entities: self.symbols.entities.clone(),
            relations: Interner::default(),
            types: self.symbols.types.clone(),
        };
        let triples: Vec<Triple> = self
            .triples
            .iter()
            .zip(relation_names)
            .map(|(t, name)| Triple {
                head: t.head,
                relation: RelationId(symbols.relations.intern(name)),
                tail: t.tail,
            })
            .collect();
        let mut facts_by_relation = vec![Vec::new(); symbols.relations.len()];
        for (i, t) in triples.iter().enumerate() {
            facts_by_relation[t.relation.index()].push(i);
        }
        Self {
            triples,
            symbols,
            type_lines: self.type_lines.clone(),
            types_of: self.types_of.clone(),
            facts_by_relation,
        }
    }
}

pub(crate) fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
