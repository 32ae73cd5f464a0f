//! The end-to-end commands: stats, train, refine, rewrite, eval and synth.
//!
//! Each command reads its inputs from the config, writes into the work
//! directory and echoes the effective config as `<command>.config`. Output
//! bytes depend only on the config; `jobs` changes speed, not results.
//!
//! Work directory layout:
//!
//! ```text
//! stats.tsv                      relation, type pairs, facts
//! model.emb, loss.tsv            trained embedding and per-epoch loss
//! refine/<relation>.json         one refinement document per relation
//! scores.tsv                     baseline and searched scores per relation
//! rewrite/<variant>.triples.tsv  rewritten graph (finegres, max, head, tail)
//! rewrite/<variant>.map.json     sub-relation map of that variant
//! report.tsv                     classification metrics per variant
//! ```

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::classify::{evaluate_classification, write_report, ClassificationReport};
use crate::config::{RunConfig, TypeVectorSpec};
use crate::embeddings::{delta_set, init_for_graph, ranking_sanity, train as train_model, EmbeddingModel};
use crate::error::{Error, Result};
use crate::kg::{write_file, KnowledgeGraph, PolysemyRow, TypePair};
use crate::refine::{
    baseline_partition, evaluate_all, subsample_stratified, Baseline, Partition, RefinementDoc, ScoreRow,
};
use crate::rewrite::{rewrite_graph, subrelation_names, SubRelationMap};
use crate::synth::{generate, SyntheticKg};
use crate::type_semantics::{centroid_type_vectors, load_type_vectors, pair_similarity_matrix, types_of_pairs};

/// Rewrite variants in report order; `original` is the unrewritten graph.
pub const VARIANTS: [&str; 4] = ["max", "head", "tail", "finegres"];

pub fn model_path(config: &RunConfig) -> PathBuf {
    config.workdir.join("model.emb")
}

pub fn refine_dir(config: &RunConfig) -> PathBuf {
    config.workdir.join("refine")
}

pub fn rewrite_triples_path(config: &RunConfig, variant: &str) -> PathBuf {
    config.workdir.join("rewrite").join(format!("{variant}.triples.tsv"))
}

pub fn rewrite_map_path(config: &RunConfig, variant: &str) -> PathBuf {
    config.workdir.join("rewrite").join(format!("{variant}.map.json"))
}

/// File stem for a relation: bytes outside `[A-Za-z0-9._-]` become `%XX`,
/// so distinct relations never share a file.
pub fn relation_file_stem(relation: &str) -> String {
    let mut out = String::with_capacity(relation.len());
    for b in relation.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {} worker threads: {e}", config.jobs)))
}

fn echo(config: &RunConfig, command: &str) -> Result<()> {
    let path = config.workdir.join(format!("{command}.config"));
    write_file(&path, |w| w.write_all(config.echo().as_bytes()))
}

fn load_graph(config: &RunConfig) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load(&config.triples_path(), &config.types_path())
}

pub fn stats(config: &RunConfig) -> Result<Vec<PolysemyRow>> {
    config.validate()?;
    let kg = load_graph(config)?;
    let rows = kg.relation_polysemy_stats(&config.type_policy)?;
    write_file(&config.workdir.join("stats.tsv"), |w| {
        writeln!(w, "relation\tpairs\tfacts")?;
        for r in &rows {
            writeln!(w, "{}\t{}\t{}", r.relation, r.pair_count, r.fact_count)?;
        }
        Ok(())
    })?;
    echo(config, "stats")?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub losses: Vec<f64>,
    /// Mean score of true triples and of corrupted ones after training.
    pub true_score: f64,
    pub corrupted_score: f64,
}

pub fn train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let kg = load_graph(config)?;
    let tc = config.train_config();
    let model = init_for_graph(config.model, tc.dim, &kg, tc.seed)?;
    let (model, losses) = train_model(model, &kg, &tc)?;
    model.save(&model_path(config))?;
    write_file(&config.workdir.join("loss.tsv"), |w| {
        writeln!(w, "epoch\tloss")?;
        for (i, l) in losses.iter().enumerate() {
            writeln!(w, "{}\t{l:.10e}", i + 1)?;
        }
        Ok(())
    })?;
    echo(config, "train")?;
    let (true_score, corrupted_score) = ranking_sanity(&model, &kg, tc.seed);
    Ok(TrainOutcome {
        losses,
        true_score,
        corrupted_score,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationScores {
    pub relation: String,
    pub facts: usize,
    pub row: ScoreRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub rows: Vec<RelationScores>,
    /// Fact-weighted mean of every column.
    pub weighted: ScoreRow,
    pub docs: Vec<RefinementDoc>,
}

fn weighted_row(rows: &[RelationScores]) -> ScoreRow {
    let total: usize = rows.iter().map(|r| r.facts).sum();
    let mean = |f: fn(&ScoreRow) -> f64| {
        if total == 0 {
            return 0.0;
        }
        rows.iter().map(|r| r.facts as f64 * f(&r.row)).sum::<f64>() / total as f64
    };
    ScoreRow {
        max: mean(|r| r.max),
        head: mean(|r| r.head),
        tail: mean(|r| r.tail),
        finegres: mean(|r| r.finegres),
    }
}

fn select_relations(config: &RunConfig, kg: &KnowledgeGraph) -> Result<Vec<crate::kg::RelationId>> {
    if config.relations.is_empty() {
        return Ok(kg.relations().collect());
    }
    let mut out = Vec::with_capacity(config.relations.len());
    for name in &config.relations {
        let id = kg.symbols().relation_id(name).ok_or_else(|| Error::UnknownRelation {
            name: name.clone(),
            valid: kg
                .relations()
                .map(|r| kg.symbols().relation(r).to_string())
                .collect::<Vec<_>>()
                .join(", "),
        })?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out.sort();
    Ok(out)
}

/// Searches every selected relation, writes one JSON per relation (removing
/// documents left from earlier runs) and the score table.
pub fn refine(config: &RunConfig) -> Result<RefineOutcome> {
    config.validate()?;
    let kg = load_graph(config)?;
    let model = EmbeddingModel::load(&model_path(config))?.align_to(kg.symbols())?;
    let relations = select_relations(config, &kg)?;
    let policy = &config.type_policy;

    let facts = relations
        .iter()
        .map(|&r| kg.index_relation(r, policy))
        .collect::<Result<Vec<_>>>()?;
    let required = types_of_pairs(facts.iter().flat_map(|f| f.unique_pairs.iter()));
    let table = match &config.type_vectors {
        TypeVectorSpec::Centroid => centroid_type_vectors(&model, &kg, &required)?,
        TypeVectorSpec::File(path) => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            load_type_vectors(BufReader::new(f), &path.display().to_string(), kg.symbols(), &required)?
        }
    };
    let spec = config.clusterer_spec();

    let results = pool(config)?.install(|| {
        relations
            .par_iter()
            .zip(facts.par_iter())
            .map(|(&r, rf)| -> Result<(RelationScores, RefinementDoc)> {
                let name = kg.symbols().relation(r);
                let deltas = delta_set(&model, &kg, r, policy)?;
                let deltas = subsample_stratified(&deltas, config.cap, config.seed);
                let matrix = pair_similarity_matrix(&rf.unique_pairs, &table)?;
                let (row, result) = evaluate_all(&rf.unique_pairs, &deltas, &matrix, &spec)?;
                let doc = RefinementDoc::build(
                    name,
                    &result,
                    &row,
                    &rf.pair_counts(),
                    deltas.len(),
                    &spec.kind.to_string(),
                    kg.symbols(),
                );
                let scores = RelationScores {
                    relation: name.to_string(),
                    facts: rf.num_facts(),
                    row,
                };
                Ok((scores, doc))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let dir = refine_dir(config);
    if dir.is_dir() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "json") {
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    let (rows, docs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    for doc in &docs {
        let path = dir.join(format!("{}.json", relation_file_stem(&doc.relation)));
        write_file(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, doc).map_err(std::io::Error::from)?;
            w.write_all(b"\n")
        })?;
    }
    let weighted = weighted_row(&rows);
    write_file(&config.workdir.join("scores.tsv"), |w| {
        writeln!(w, "relation\tfacts\tc_max\tc_head\tc_tail\tc_finegres")?;
        let line = |w: &mut dyn Write, name: &str, facts: usize, r: &ScoreRow| {
            writeln!(
                w,
                "{name}\t{facts}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.max, r.head, r.tail, r.finegres
            )
        };
        for r in &rows {
            line(w, &r.relation, r.facts, &r.row)?;
        }
        line(w, "weighted_mean", rows.iter().map(|r| r.facts).sum(), &weighted)
    })?;
    echo(config, "refine")?;
    Ok(RefineOutcome { rows, weighted, docs })
}

/// Reads every refinement document of the work directory, in relation order
/// of `kg`.
pub fn load_refinements(config: &RunConfig, kg: &KnowledgeGraph) -> Result<Vec<RefinementDoc>> {
    let dir = refine_dir(config);
    let mut docs = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_none_or(|x| x != "json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let doc: RefinementDoc = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?;
            doc.check_format()?;
            docs.push(doc);
        }
    }
    if docs.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no refinement documents in {}; run `refine` first",
            dir.display()
        )));
    }
    let mut keyed = docs
        .into_iter()
        .map(|d| {
            let id = kg
                .symbols()
                .relation_id(&d.relation)
                .ok_or_else(|| Error::RelationAbsent(d.relation.clone()))?;
            Ok((id, d))
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by_key(|(id, _)| *id);
    Ok(keyed.into_iter().map(|(_, d)| d).collect())
}

fn doc_pairs(doc: &RefinementDoc, kg: &KnowledgeGraph) -> Result<Vec<TypePair>> {
    doc.unique_pairs
        .iter()
        .map(|p| {
            let id = |name: &str| {
                kg.symbols().type_id(name).ok_or_else(|| Error::UnknownSymbol {
                    kind: "type",
                    name: name.to_string(),
                })
            };
            Ok(TypePair::new(id(&p.head)?, id(&p.tail)?))
        })
        .collect()
}

/// Partition of `variant` ("finegres" or a baseline) for one document.
pub fn variant_partition(doc: &RefinementDoc, variant: &str, kg: &KnowledgeGraph) -> Result<Partition> {
    let pairs = doc_pairs(doc, kg)?;
    match variant {
        "finegres" => Partition::new(pairs, doc.chosen_partition.clone()),
        "max" => Ok(baseline_partition(Baseline::Max, &pairs)),
        "head" => Ok(baseline_partition(Baseline::Head, &pairs)),
        "tail" => Ok(baseline_partition(Baseline::Tail, &pairs)),
        other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
    }
}

pub fn variant_map(docs: &[RefinementDoc], variant: &str, kg: &KnowledgeGraph) -> Result<SubRelationMap> {
    let mut map = SubRelationMap::new();
    for doc in docs {
        let partition = variant_partition(doc, variant, kg)?;
        let counts: Vec<usize> = doc.unique_pairs.iter().map(|p| p.facts).collect();
        map.push(subrelation_names(&doc.relation, &partition, &counts, |t| {
            kg.symbols().type_name(t).to_string()
        }));
    }
    Ok(map)
}

/// Rewrites the graph once per variant and returns the maps in
/// [`VARIANTS`] order.
pub fn rewrite(config: &RunConfig) -> Result<Vec<(String, SubRelationMap)>> {
    config.validate()?;
    let kg = load_graph(config)?;
    let docs = load_refinements(config, &kg)?;
    let mut out = Vec::with_capacity(VARIANTS.len());
    for variant in VARIANTS {
        let map = variant_map(&docs, variant, &kg)?;
        let rewritten = rewrite_graph(&kg, &map, &config.type_policy)?;
        write_file(&rewrite_triples_path(config, variant), |w| rewritten.write_triples(w))?;
        map.save(&rewrite_map_path(config, variant))?;
        out.push((variant.to_string(), map));
    }
    echo(config, "rewrite")?;
    Ok(out)
}

/// Classification report rows: `original`, then every rewrite variant.
pub fn eval(config: &RunConfig) -> Result<Vec<(String, ClassificationReport)>> {
    config.validate()?;
    let types = config.types_path();
    let mut inputs: Vec<(String, PathBuf)> = vec![("original".into(), config.triples_path())];
    for v in VARIANTS {
        inputs.push((v.to_string(), rewrite_triples_path(config, v)));
    }
    let graphs = inputs
        .into_iter()
        .map(|(name, path)| Ok((name, KnowledgeGraph::load(&path, &types)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = pool(config)?.install(|| {
        graphs
            .par_iter()
            .map(|(name, kg)| {
                let report =
                    evaluate_classification(kg, config.runs, config.test_fraction, config.seed, &config.type_policy)?;
                Ok((name.clone(), report))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_report(&config.workdir.join("report.tsv"), &rows)?;
    echo(config, "eval")?;
    Ok(rows)
}

/// Generates the synthetic graph into the configured triples and types
/// paths, plus `type_vectors.tsv` and `truth.json` in the work directory.
pub fn synth(config: &RunConfig) -> Result<SyntheticKg> {
    config.validate()?;
    let g = generate(&config.synth_config())?;
    g.write(
        &config.triples_path(),
        &config.types_path(),
        &config.workdir.join("type_vectors.tsv"),
        &config.workdir.join("truth.json"),
    )?;
    echo(config, "synth")?;
    Ok(g)
}
