use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use finegres::config::RunConfig;
use finegres::pipeline;
use finegres::Error;

#[derive(Parser)]
#[command(
    name = "finegres",
    version,
    about = "Refine polysemous knowledge-graph relations into sub-relations"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Type pairs and facts per relation (stats.tsv)
    Stats,
    /// Train an embedding model (model.emb, loss.tsv)
    Train,
    /// Search sub-relations and score baselines (refine/*.json, scores.tsv)
    Refine,
    /// Rewrite the graph with sub-relations (rewrite/)
    Rewrite,
    /// Entity-type classification on every graph variant (report.tsv)
    Eval,
    /// Generate a synthetic graph with planted senses
    Synth,
}

/// Settings are applied in order: defaults, `--config`, `--set`, then the
/// dedicated flags.
#[derive(Args)]
struct Opts {
    /// key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Any config key, as KEY=VALUE; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[arg(long, global = true)]
    triples: Option<PathBuf>,
    #[arg(long, global = true)]
    types: Option<PathBuf>,
    /// transe or distmult
    #[arg(long, global = true)]
    model: Option<String>,
    /// kmeans or hac
    #[arg(long, global = true)]
    clusterer: Option<String>,
    /// centroid or file:<path>
    #[arg(long = "type-vectors", global = true)]
    type_vectors: Option<String>,
    /// Relation to refine; repeatable or comma-separated
    #[arg(long, global = true, value_delimiter = ',')]
    relation: Vec<String>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

fn build_config(opts: &Opts) -> finegres::Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &opts.config {
        config.apply_file(path)?;
    }
    for kv in &opts.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(k, v)?;
    }
    let flags = [
        ("seed", opts.seed.map(|s| s.to_string())),
        ("workdir", opts.workdir.as_ref().map(|p| p.display().to_string())),
        ("triples", opts.triples.as_ref().map(|p| p.display().to_string())),
        ("types", opts.types.as_ref().map(|p| p.display().to_string())),
        ("model", opts.model.clone()),
        ("clusterer", opts.clusterer.clone()),
        ("type_vectors", opts.type_vectors.clone()),
        ("jobs", opts.jobs.map(|j| j.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    if !opts.relation.is_empty() {
        config.relations = opts.relation.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> finegres::Result<()> {
    let config = build_config(&cli.opts)?;
    let wd = config.workdir.display();
    match cli.command {
        Command::Stats => {
            let rows = pipeline::stats(&config)?;
            let polysemous = rows.iter().filter(|r| r.pair_count > 1).count();
            println!(
                "{} relations, {polysemous} with several type pairs; wrote {wd}/stats.tsv",
                rows.len()
            );
        }
        Command::Train => {
            let out = pipeline::train(&config)?;
            if let (Some(first), Some(last)) = (out.losses.first(), out.losses.last()) {
                println!("{} epochs, loss {first:.4} -> {last:.4}", out.losses.len());
            }
            println!(
                "mean score: true {:.4}, corrupted {:.4}; wrote {}",
                out.true_score,
                out.corrupted_score,
                pipeline::model_path(&config).display()
            );
        }
        Command::Refine => {
            let out = pipeline::refine(&config)?;
            for d in &out.docs {
                println!(
                    "{}: {} type pairs -> {} sub-relations",
                    d.relation,
                    d.unique_pairs.len(),
                    d.chosen_k
                );
            }
            let w = &out.weighted;
            println!(
                "weighted mean: max {:.4}, head {:.4}, tail {:.4}, finegres {:.4}; wrote {wd}/scores.tsv",
                w.max, w.head, w.tail, w.finegres
            );
        }
        Command::Rewrite => {
            let maps = pipeline::rewrite(&config)?;
            for (variant, map) in &maps {
                let subs: usize = map.relations.iter().map(|r| r.subrelations.len()).sum();
                println!("{variant}: {} relations -> {subs} sub-relations", map.relations.len());
            }
            println!("wrote {wd}/rewrite/");
        }
        Command::Eval => {
            for (variant, r) in pipeline::eval(&config)? {
                println!("{variant}\tP {:.4}\tR {:.4}\tF1 {:.4}", r.precision, r.recall, r.f1);
            }
            println!("wrote {wd}/report.tsv");
        }
        Command::Synth => {
            let g = pipeline::synth(&config)?;
            let senses: usize = g.truth.relations.iter().map(|r| r.senses.len()).sum();
            println!(
                "{} planted relations, {senses} senses; wrote {} and {wd}/truth.json",
                g.truth.relations.len(),
                config.triples_path().display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
