//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use finegres::clustering::{hac_fit, homogeneity, ClustererSpec};
use finegres::config::{RunConfig, TypeVectorSpec};
use finegres::embeddings::{init_for_graph, ranking_sanity, train, ModelKind, TrainConfig};
use finegres::kg::{KnowledgeGraph, TypePolicy};
use finegres::matrix::Matrix;
use finegres::pipeline;
use finegres::refine::Partition;
use finegres::rewrite::{rewrite_graph, subrelation_names, SubRelationMap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SWEEP_SEEDS: u64 = 20;
const FIXTURE_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

// ---------------------------------------------------------------- 1

fn entropy_homogeneity(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut class: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cluster: BTreeMap<usize, f64> = BTreeMap::new();
    for (&c, &k) in truth.iter().zip(pred) {
        *joint.entry((c, k)).or_default() += 1.0;
        *class.entry(c).or_default() += 1.0;
        *cluster.entry(k).or_default() += 1.0;
    }
    let h_c: f64 = class.values().map(|&x| -(x / n) * (x / n).ln()).sum();
    if h_c == 0.0 {
        return 1.0;
    }
    let h_ck: f64 = joint
        .iter()
        .map(|(&(_, k), &x)| -(x / n) * (x / cluster[&k]).ln())
        .sum();
    1.0 - h_ck / h_c
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=30);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let got = homogeneity(&truth, &pred).unwrap();
        worst = worst.max((got - entropy_homogeneity(&truth, &pred)).abs());
    }
    let worked = homogeneity(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
    outcome(
        worst <= 1e-9 && (worked - 0.3113).abs() <= 1e-4,
        format!("200 cases, max |diff| {worst:.2e}; worked case {worked:.4}"),
    )
}

// ---------------------------------------------------------------- 2, 3, 4

struct SeedResult {
    cases: Vec<(String, usize, usize, f64)>,
    dominant: bool,
    f1_original: f64,
    f1_max: f64,
    f1_finegres: f64,
    elapsed: Duration,
}

fn sweep_config(workdir: &Path, seed: u64) -> RunConfig {
    let mut c = RunConfig {
        workdir: workdir.to_path_buf(),
        seed,
        runs: 10,
        type_vectors: TypeVectorSpec::File(workdir.join("type_vectors.tsv")),
        ..RunConfig::default()
    };
    c.train.dim = 32;
    c.train.epochs = 200;
    c
}

fn run_seed(seed: u64) -> SeedResult {
    let dir = tempfile::tempdir().unwrap();
    let c = sweep_config(dir.path(), seed);
    let start = Instant::now();
    let g = pipeline::synth(&c).unwrap();
    pipeline::train(&c).unwrap();
    let refined = pipeline::refine(&c).unwrap();
    pipeline::rewrite(&c).unwrap();
    let report = pipeline::eval(&c).unwrap();
    let elapsed = start.elapsed();

    let cases = g
        .truth
        .relations
        .iter()
        .map(|planted| {
            let doc = refined.docs.iter().find(|d| d.relation == planted.relation).unwrap();
            (
                planted.relation.clone(),
                planted.senses.len(),
                doc.chosen_k,
                doc.objective,
            )
        })
        .collect();
    let w = &refined.weighted;
    let f1 = |name: &str| report.iter().find(|(v, _)| v == name).unwrap().1.f1;
    SeedResult {
        cases,
        dominant: w.finegres >= w.max && w.finegres >= w.head && w.finegres >= w.tail,
        f1_original: f1("original"),
        f1_max: f1("max"),
        f1_finegres: f1("finegres"),
        elapsed,
    }
}

fn criterion_2(sweep: &[SeedResult]) -> Outcome {
    let cases: Vec<_> = sweep.iter().flat_map(|s| &s.cases).collect();
    let recovered = cases.iter().filter(|(_, planted, chosen, _)| planted == chosen).count();
    let rate = recovered as f64 / cases.len() as f64;
    let mean_h = cases.iter().map(|c| c.3).sum::<f64>() / cases.len() as f64;
    let slowest = sweep.iter().map(|s| s.elapsed).max().unwrap();
    let misses: Vec<String> = sweep
        .iter()
        .enumerate()
        .flat_map(|(seed, s)| {
            s.cases
                .iter()
                .filter(|c| c.1 != c.2)
                .map(move |c| format!("seed {seed} {} {}->{}", c.0, c.1, c.2))
        })
        .collect();
    outcome(
        rate >= 0.8 && mean_h >= 0.9 && slowest < Duration::from_secs(120),
        format!(
            "chosen_k = planted k in {recovered}/{} ({:.1}%), mean homogeneity {mean_h:.4}, slowest seed {:.1}s; misses: {}",
            cases.len(),
            100.0 * rate,
            slowest.as_secs_f64(),
            if misses.is_empty() { "none".into() } else { misses.join(", ") }
        ),
    )
}

fn criterion_3(sweep: &[SeedResult]) -> Outcome {
    let dominant = sweep.iter().filter(|s| s.dominant).count();
    let rate = dominant as f64 / sweep.len() as f64;
    outcome(
        rate >= 0.9,
        format!(
            "weighted finegres score >= max, head and tail in {dominant}/{} seeds",
            sweep.len()
        ),
    )
}

fn criterion_4(sweep: &[SeedResult]) -> Outcome {
    let fixture = &sweep[FIXTURE_SEED as usize];
    let gain = fixture.f1_finegres - fixture.f1_original;
    let beats_max = sweep.iter().filter(|s| s.f1_finegres >= s.f1_max).count();
    let rate = beats_max as f64 / sweep.len() as f64;
    let mean_gap = sweep.iter().map(|s| s.f1_max - s.f1_finegres).sum::<f64>() / sweep.len() as f64;
    outcome(
        gain >= 0.05 && rate >= 0.7,
        format!(
            "fixture seed {FIXTURE_SEED}: F1 finegres {:.4} - original {:.4} = {gain:.4}; \
             finegres F1 >= max F1 in {beats_max}/{} seeds (mean max - finegres {mean_gap:.4})",
            fixture.f1_finegres,
            fixture.f1_original,
            sweep.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let kg = KnowledgeGraph::load(&fixture("tiny.triples.tsv"), &fixture("tiny.types.tsv")).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [ModelKind::TransE, ModelKind::DistMult] {
        let tc = TrainConfig {
            dim: 16,
            ..TrainConfig::default()
        };
        let model = init_for_graph(kind, tc.dim, &kg, tc.seed).unwrap();
        let (model, losses) = train(model, &kg, &tc).unwrap();
        let (first, last) = (losses[0], *losses.last().unwrap());
        let (pos, neg) = ranking_sanity(&model, &kg, tc.seed);
        pass &= pos > neg && last < 0.5 * first;
        details.push(format!(
            "{kind}: true {pos:.3} vs corrupted {neg:.3}, loss {first:.4} -> {last:.4}"
        ));
    }
    outcome(pass, details.join("; "))
}

// ---------------------------------------------------------------- 6

fn random_graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let entities = rng.gen_range(2..15);
    let types = rng.gen_range(1..5);
    let relations = rng.gen_range(1..4);
    let mut types_tsv = String::new();
    for e in 0..entities {
        types_tsv.push_str(&format!("e{e}\tt{}\n", rng.gen_range(0..types)));
    }
    let mut triples_tsv = String::new();
    for _ in 0..rng.gen_range(1..50) {
        triples_tsv.push_str(&format!(
            "e{}\tr{}\te{}\n",
            rng.gen_range(0..entities),
            rng.gen_range(0..relations),
            rng.gen_range(0..entities)
        ));
    }
    KnowledgeGraph::from_readers(triples_tsv.as_bytes(), "triples", types_tsv.as_bytes(), "types").unwrap()
}

fn refinement(kg: &KnowledgeGraph, rng: &mut ChaCha8Rng, identity: bool) -> SubRelationMap {
    let mut map = SubRelationMap::new();
    for r in kg.relations() {
        let facts = kg.index_relation(r, &TypePolicy::First).unwrap();
        let l = facts.num_pairs();
        let groups = if identity {
            vec![(0..l).collect()]
        } else {
            let k = rng.gen_range(1..=l);
            let mut order: Vec<usize> = (0..l).collect();
            order.shuffle(rng);
            let mut groups = vec![Vec::new(); k];
            for (i, p) in order.into_iter().enumerate() {
                // the first k pairs seed the groups so none is empty
                let g = if i < k { i } else { rng.gen_range(0..k) };
                groups[g].push(p);
            }
            groups
        };
        let partition = Partition::new(facts.unique_pairs.clone(), groups).unwrap();
        let name = kg.symbols().relation(r).to_string();
        map.push(subrelation_names(&name, &partition, &facts.pair_counts(), |t| {
            kg.symbols().type_name(t).to_string()
        }));
    }
    map
}

type PairMultisets = BTreeMap<String, Vec<(String, String)>>;

fn pair_multisets(kg: &KnowledgeGraph, map: Option<&SubRelationMap>) -> PairMultisets {
    let s = kg.symbols();
    let mut owner = BTreeMap::new();
    if let Some(map) = map {
        for split in &map.relations {
            for sub in &split.subrelations {
                owner.insert(sub.name.clone(), split.relation.clone());
            }
        }
    }
    let mut out = PairMultisets::new();
    for t in kg.triples() {
        let name = s.relation(t.relation).to_string();
        let rel = owner.get(&name).cloned().unwrap_or(name);
        let p = kg.type_pair(t, &TypePolicy::First).unwrap();
        out.entry(rel)
            .or_default()
            .push((s.type_name(p.head).to_string(), s.type_name(p.tail).to_string()));
    }
    out.values_mut().for_each(|v| v.sort());
    out
}

fn entity_set(kg: &KnowledgeGraph) -> Vec<String> {
    let mut names: Vec<String> = (0..kg.num_entities() as u32)
        .map(|i| kg.symbols().entity(finegres::kg::EntityId(i)).to_string())
        .collect();
    names.sort();
    names
}

fn triples_bytes(kg: &KnowledgeGraph) -> Vec<u8> {
    let mut out = Vec::new();
    kg.write_triples(&mut out).unwrap();
    out
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cases = 200;
    let mut failures = Vec::new();
    for case in 0..cases {
        let kg = random_graph(&mut rng);
        let map = refinement(&kg, &mut rng, false);
        let out = rewrite_graph(&kg, &map, &TypePolicy::First).unwrap();
        if out.triples().len() != kg.triples().len() {
            failures.push(format!("case {case}: triple count"));
        }
        if entity_set(&out) != entity_set(&kg) {
            failures.push(format!("case {case}: entity set"));
        }
        if pair_multisets(&out, Some(&map)) != pair_multisets(&kg, None) {
            failures.push(format!("case {case}: type-pair multisets"));
        }
        let identity = refinement(&kg, &mut rng, true);
        let same = rewrite_graph(&kg, &identity, &TypePolicy::First).unwrap();
        if triples_bytes(&same) != triples_bytes(&kg) {
            failures.push(format!("case {case}: identity rewrite changed the triples file"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases} random graphs with random and identity refinements")
        } else {
            failures.join(", ")
        },
    )
}

// ---------------------------------------------------------------- 7

/// Every output file of a full run, keyed by its path inside the work
/// directory. The directory is wiped first so runs share one path.
fn run_outputs(workdir: &Path, jobs: usize) -> BTreeMap<String, Vec<u8>> {
    if workdir.exists() {
        std::fs::remove_dir_all(workdir).unwrap();
    }
    let c = RunConfig {
        workdir: workdir.to_path_buf(),
        seed: FIXTURE_SEED,
        jobs,
        ..RunConfig::default()
    };
    pipeline::synth(&c).unwrap();
    pipeline::train(&c).unwrap();
    pipeline::refine(&c).unwrap();
    pipeline::rewrite(&c).unwrap();
    pipeline::eval(&c).unwrap();
    let mut files = BTreeMap::new();
    collect(workdir, workdir, &mut files);
    files
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect(root, &path, out);
        } else {
            let key = path.strip_prefix(root).unwrap().display().to_string();
            out.insert(key, std::fs::read(&path).unwrap());
        }
    }
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let workdir = dir.path().join("run");
    let a = run_outputs(&workdir, 1);
    let b = run_outputs(&workdir, 1);
    let c = run_outputs(&workdir, 4);
    let required = ["scores.tsv", "report.tsv"];
    let jsons = a
        .keys()
        .filter(|k| k.starts_with("refine") && k.ends_with(".json"))
        .count();
    let present = required.iter().all(|k| a.contains_key(*k)) && jsons > 0;
    let differing: std::collections::BTreeSet<&String> = a
        .keys()
        .chain(b.keys())
        .chain(c.keys())
        .filter(|k| a.get(*k) != b.get(*k) || a.get(*k) != c.get(*k))
        .collect();
    outcome(
        present && differing.is_empty(),
        format!(
            "{} files ({jsons} refinement documents) compared over two runs and jobs 1 vs 4; differing: {:?}",
            a.len(),
            differing
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let (n, d) = (200, 8);
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let mut direction: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
        let len = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        direction.iter_mut().for_each(|x| *x *= 10.0 / len);
        let mut rows = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let blob = i % 2;
            rows.push(
                (0..d)
                    .map(|j| blob as f64 * direction[j] + unit.sample(&mut rng))
                    .collect::<Vec<_>>(),
            );
            truth.push(blob);
        }
        let points = Matrix::from_rows(&rows);
        for spec in [ClustererSpec::kmeans(seed), ClustererSpec::hac()] {
            let got = spec.fit(&points, 2).unwrap();
            let h = homogeneity(&truth, &got.labels).unwrap();
            if h != 1.0 {
                failures.push(format!("seed {seed} {}: {h:.4}", spec.kind));
            }
        }
    }
    // points 0 and 1 sit closest; the oracle enumerates every 2-partition
    let pts = [0.0, 1.0, 10.0];
    let hac = hac_fit(&Matrix::from_rows(&pts.map(|x| [x])), 2, &ClustererSpec::hac()).unwrap();
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1u32..7 {
        let mut cost = 0.0;
        for i in 0..3 {
            for j in (i + 1)..3 {
                if (mask >> i) & 1 == (mask >> j) & 1 {
                    cost += (pts[i] - pts[j]).abs();
                }
            }
        }
        if cost < best.0 {
            best = (cost, mask);
        }
    }
    let same = |i: usize, j: usize| ((best.1 >> i) & 1 == (best.1 >> j) & 1) == (hac.labels[i] == hac.labels[j]);
    let hand = same(0, 1) && same(0, 2) && same(1, 2);
    if !hand {
        failures.push(format!("3-point HAC labels {:?}", hac.labels));
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "kmeans and hac homogeneity 1.0 on 10/10 seeds; 3-point case matches enumeration".to_string()
        } else {
            failures.join(", ")
        },
    )
}

fn main() {
    let started = Instant::now();
    let sweep: Vec<SeedResult> = (0..SWEEP_SEEDS).map(run_seed).collect();
    let results = [
        ("homogeneity oracle", criterion_1()),
        ("planted-sense recovery", criterion_2(&sweep)),
        ("baseline dominance", criterion_3(&sweep)),
        ("classification direction", criterion_4(&sweep)),
        ("embedding sanity", criterion_5()),
        ("rewrite integrity", criterion_6()),
        ("determinism", criterion_7()),
        ("clusterer correctness", criterion_8()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
