use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use text2nosql::dataset::{
    finalize_dataset, run_builder, BuilderClients, BuilderConfig, CotDemos, ProgressLog, SeedExample, SeedProgress,
};
use text2nosql::engine::{execute_query_with, save_bundle, EngineError, ExecOptions};
use text2nosql::metrics::{EvalOptions, EvalPair, Evaluator, ExampleScores, MetricsError};
use text2nosql::provider::{ChatModel, ChatModelRegistry, ProviderSpec};
use text2nosql::query::parse_query;
use text2nosql::retrieval::{Embedder, EmbedderRegistry, ExampleRecord, LibraryBuilder, RetrievalError, VectorLibrary};
use text2nosql::smart::{run_smart, SmartClients, SmartConfig, SmartError, TestExample, TraceLog, TraceStatus};
use text2nosql::transform::{transform_database, RelationalDump, TransformError};

use crate::config::RunConfig;
use crate::csv_import::import_csv;
use crate::run::{load_databases, read_json, read_jsonl, read_text, write_json, write_jsonl, RunDir};
use crate::{Cli, CliError, Command, RunArgs};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    cli.overrides.apply(&mut config);
    config.validate()?;
    match cli.command {
        Command::TransformDb { input, out, run } => with_run(&config, &run, "transform-db", |rd| {
            transform_db(rd, &input, out.as_deref())
        }),
        Command::ImportCsv { dir, schema, out } => {
            let dump = import_csv(&dir, &schema)?;
            write_json(&out, &dump)?;
            println!("wrote {} tables to {}", dump.tables.len(), out.display());
            Ok(())
        }
        Command::Exec {
            db,
            query,
            query_file,
            lenient,
        } => {
            let text = match (query, query_file) {
                (Some(q), _) => q,
                (None, Some(f)) => read_text(&f)?,
                (None, None) => return Err(CliError::Usage("give --query or --query-file".into())),
            };
            exec(&db, &text, lenient)
        }
        Command::Eval {
            pairs,
            gold,
            pred,
            lenient,
            no_normalize,
            run,
        } => with_run(&config, &run, "eval", |rd| {
            let pairs = match (pairs, gold, pred) {
                (Some(p), _, _) => {
                    rd.input("pairs", &p);
                    read_jsonl(&p)?
                }
                (None, Some(g), Some(p)) => {
                    rd.input("gold", &g);
                    rd.input("pred", &p);
                    join_gold_pred(&g, &p)?
                }
                _ => return Err(CliError::Usage("give --pairs, or --gold with --pred".into())),
            };
            eval(rd, &config, pairs, lenient, !no_normalize)
        }),
        Command::BuildIndex { training, run } => with_run(&config, &run, "build-index", |rd| {
            build_index(rd, &config, &training, run.resume)
        }),
        Command::SmartRun {
            test,
            retry_failed,
            run,
        } => with_run(&config, &run, "smart-run", |rd| {
            smart_run(rd, &config, &test, run.resume, retry_failed)
        }),
        Command::DatasetBuild { seeds, demos, run } => with_run(&config, &run, "dataset-build", |rd| {
            dataset_build(rd, &config, &seeds, demos.as_deref(), run.resume)
        }),
    }
}

/// Open the run directory, run `body`, and record the outcome in the manifest.
fn with_run(
    config: &RunConfig,
    args: &RunArgs,
    command: &str,
    body: impl FnOnce(&mut RunDir) -> Result<serde_json::Value, CliError>,
) -> Result<(), CliError> {
    let mut rd = RunDir::open(&config.paths.output, args.run_id.as_deref(), args.resume, command)?;
    rd.write_manifest(config, None)?;
    let result = body(&mut rd);
    let outcome = match &result {
        Ok(summary) => (0, summary.clone()),
        Err(e) => (i32::from(e.code()), json!({ "error": e.to_string() })),
    };
    rd.write_manifest(config, Some(outcome))?;
    result.map(|_| eprintln!("run directory: {}", rd.path.display()))
}

fn transform_db(rd: &mut RunDir, input: &Path, out: Option<&Path>) -> Result<serde_json::Value, CliError> {
    rd.input("dump", input);
    let dump = RelationalDump::from_json_str(&read_text(input)?).map_err(|e| CliError::Usage(e.to_string()))?;
    let transformed = transform_database(&dump).map_err(|e| match e {
        TransformError::Cycle(cycles) => {
            for c in &cycles {
                eprintln!("cycle: {}", c.join(" -> "));
            }
            CliError::Cycle(e_text(&cycles))
        }
        other => CliError::Usage(other.to_string()),
    })?;
    let target = match out {
        Some(p) => p.to_path_buf(),
        None => rd.file("bundle").join(&dump.name),
    };
    save_bundle(&transformed.database, &target).map_err(|e| CliError::Failed(e.to_string()))?;
    write_json(&rd.file("warnings.json"), &transformed.warnings)?;
    let mut counts = IndexMap::new();
    for (name, docs) in &transformed.database.collections {
        println!("{name}: {} documents", docs.len());
        counts.insert(name.clone(), docs.len());
    }
    for w in &transformed.warnings {
        warn!("{:?} in {}.{} row {}", w.kind, w.table, w.column, w.row);
    }
    println!(
        "{} warnings; bundle written to {}",
        transformed.warnings.len(),
        target.display()
    );
    Ok(json!({ "bundle": target.display().to_string(), "collections": counts, "warnings": transformed.warnings.len() }))
}

fn e_text(cycles: &[Vec<String>]) -> String {
    let list: Vec<String> = cycles.iter().map(|c| c.join(" -> ")).collect();
    format!("foreign-key cycles: {}", list.join("; "))
}

fn exec(db_path: &Path, text: &str, lenient: bool) -> Result<(), CliError> {
    let db = text2nosql::engine::load_database(db_path).map_err(|e| match e {
        EngineError::Io { .. } => CliError::Missing(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    let ast = parse_query(text).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = if lenient {
        ExecOptions::lenient()
    } else {
        ExecOptions::default()
    };
    let result = execute_query_with(&db, &ast, &opts).map_err(|e| match e {
        EngineError::UnknownCollection(_) => CliError::Missing(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    let pretty = serde_json::to_string_pretty(&result.to_value().to_json()).expect("serializable");
    println!("{pretty}");
    Ok(())
}

/// A query line in gold or prediction files.
#[derive(Debug, Deserialize)]
struct QueryLine {
    id: String,
    #[serde(default)]
    db_id: String,
    #[serde(default)]
    nlq: String,
    #[serde(alias = "query", alias = "gold", alias = "pred", alias = "final_query")]
    nosql: String,
}

fn join_gold_pred(gold: &Path, pred: &Path) -> Result<Vec<EvalPair>, CliError> {
    let gold: Vec<QueryLine> = read_jsonl(gold)?;
    let pred: IndexMap<String, String> = read_jsonl::<QueryLine>(pred)?
        .into_iter()
        .map(|l| (l.id, l.nosql))
        .collect();
    Ok(gold
        .into_iter()
        .map(|g| {
            let p = pred.get(&g.id).cloned().unwrap_or_else(|| {
                warn!("no prediction for `{}`", g.id);
                String::new()
            });
            EvalPair {
                id: g.id,
                db_id: g.db_id,
                nlq: g.nlq,
                gold: g.nosql,
                pred: p,
            }
        })
        .collect())
}

fn eval(
    rd: &mut RunDir,
    config: &RunConfig,
    pairs: Vec<EvalPair>,
    lenient: bool,
    normalize: bool,
) -> Result<serde_json::Value, CliError> {
    rd.input("databases", &config.paths.databases);
    let dbs = load_databases(&config.paths.databases)?;
    let exec = if lenient {
        ExecOptions::lenient()
    } else {
        ExecOptions::default()
    };
    let evaluator = Evaluator {
        options: EvalOptions { normalize, exec },
        ..Default::default()
    };
    let report = evaluator
        .evaluate_corpus(&pairs, &dbs)
        .map_err(|e @ MetricsError::MissingDatabase(_)| CliError::Missing(e.to_string()))?;
    write_json(&rd.file("report.json"), &report)?;
    write_scores_csv(&rd.file("scores.csv"), &report.per_example)?;
    let c = &report.corpus;
    println!("N\tEM\tQSM\tQFC\tEX\tEFM\tEVM");
    println!(
        "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
        c.n,
        c.em * 100.0,
        c.qsm * 100.0,
        c.qfc * 100.0,
        c.ex * 100.0,
        c.efm * 100.0,
        c.evm * 100.0
    );
    Ok(serde_json::to_value(c).expect("serializable"))
}

fn write_scores_csv(path: &Path, rows: &[ExampleScores]) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["id", "em", "qsm", "qfc", "ex", "efm", "evm", "error"])
        .map_err(fail)?;
    for r in rows {
        let flags = [r.em, r.qsm, r.qfc, r.ex, r.efm, r.evm].map(|b| u8::from(b).to_string());
        let mut record = vec![r.id.clone()];
        record.extend(flags);
        record.push(r.error.clone().unwrap_or_default());
        w.write_record(&record).map_err(fail)?;
    }
    w.flush()
        .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn embedder(config: &RunConfig) -> Result<Arc<dyn Embedder>, CliError> {
    EmbedderRegistry::default()
        .build(&config.embedding)
        .map_err(|e| CliError::Usage(format!("embedding: {e}")))
}

fn chat(spec: &ProviderSpec, role: &str) -> Result<Arc<dyn ChatModel>, CliError> {
    if let Some(script) = spec.script.as_ref().filter(|s| !s.exists()) {
        return Err(CliError::Missing(format!(
            "{role} script {}: not found",
            script.display()
        )));
    }
    ChatModelRegistry::default()
        .build(spec)
        .map_err(|e| CliError::Usage(format!("{role}: {e}")))
}

fn build_index(
    rd: &mut RunDir,
    config: &RunConfig,
    training: &Path,
    resume: bool,
) -> Result<serde_json::Value, CliError> {
    rd.input("training", training);
    rd.input("library", &config.paths.library);
    let mut records: Vec<ExampleRecord> = read_jsonl(training)?;
    let dbs = if config.paths.databases.is_dir() {
        rd.input("databases", &config.paths.databases);
        load_databases(&config.paths.databases)?
    } else {
        IndexMap::new()
    };
    for r in &mut records {
        r.fill_field_channels(dbs.get(&r.db_id));
    }
    let embedder = embedder(config)?;
    let partial = if resume && config.paths.library.exists() {
        VectorLibrary::load(&config.paths.library).map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        VectorLibrary::empty(embedder.tag(), embedder.dimension())
    };
    let mut builder = LibraryBuilder::new(embedder.as_ref());
    builder.max_in_flight = config.max_in_flight;
    let save = |lib: &VectorLibrary| {
        lib.save(&config.paths.library)
            .map_err(|e| CliError::Failed(e.to_string()))
    };
    match builder.resume(&records, partial) {
        Ok(lib) => {
            save(&lib)?;
            println!("{} records embedded into {}", lib.len(), config.paths.library.display());
            Ok(json!({ "records": lib.len(), "provider_tag": lib.provider_tag, "dimension": lib.dimension }))
        }
        Err(interrupted) => {
            save(&interrupted.partial)?;
            let message = format!(
                "embedding stopped after {} of {} records: {}; rerun with --resume",
                interrupted.partial.len(),
                records.len(),
                interrupted.error
            );
            Err(match interrupted.error {
                RetrievalError::Provider(_) | RetrievalError::DimensionMismatch { .. } => CliError::Provider(message),
                _ => CliError::Failed(message),
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct Prediction<'a> {
    id: &'a str,
    db_id: &'a str,
    nlq: &'a str,
    nosql: &'a str,
}

fn smart_run(
    rd: &mut RunDir,
    config: &RunConfig,
    test: &Path,
    resume: bool,
    retry_failed: bool,
) -> Result<serde_json::Value, CliError> {
    rd.input("test", test);
    rd.input("databases", &config.paths.databases);
    rd.input("library", &config.paths.library);
    let examples: Vec<TestExample> = read_jsonl(test)?;
    let dbs = load_databases(&config.paths.databases)?;
    if !config.paths.library.exists() {
        return Err(CliError::Missing(format!(
            "library {} not found; run build-index first",
            config.paths.library.display()
        )));
    }
    let library = VectorLibrary::load(&config.paths.library).map_err(|e| CliError::Usage(e.to_string()))?;
    let embedder = embedder(config)?;
    let small = chat(&config.chat.small, "chat.small")?;
    let large = chat(&config.chat.large, "chat.large")?;
    let clients = SmartClients {
        schema: small.clone(),
        generator: small,
        refiner: large.clone(),
        optimizer: large,
    };
    let smart_config = SmartConfig {
        weights: config.weights,
        k: config.k,
        excerpt_rows: config.excerpt_rows,
        temperature: config.temperature,
        max_in_flight: config.max_in_flight,
        exec: ExecOptions::default(),
    };
    let events = rd.file("trace_events.jsonl");
    let mut previous = if resume {
        TraceLog::load(&events).map_err(smart_error)?
    } else {
        IndexMap::new()
    };
    if retry_failed {
        previous.retain(|_, t| t.status != TraceStatus::Failed);
    }
    let log = TraceLog::open(&events).map_err(smart_error)?;
    let traces = run_smart(
        &examples,
        &dbs,
        &library,
        embedder.as_ref(),
        &clients,
        &smart_config,
        Some(&log),
        &previous,
    )
    .map_err(smart_error)?;
    write_jsonl(&rd.file("traces.jsonl"), &traces)?;
    let predictions: Vec<Prediction> = traces
        .iter()
        .map(|t| Prediction {
            id: &t.id,
            db_id: &t.db_id,
            nlq: &t.nlq,
            nosql: t.final_query.as_deref().unwrap_or(""),
        })
        .collect();
    write_jsonl(&rd.file("predictions.jsonl"), &predictions)?;
    let failed = traces.iter().filter(|t| t.status == TraceStatus::Failed).count();
    for t in traces.iter().filter(|t| t.status == TraceStatus::Failed) {
        warn!("{}: {}", t.id, t.error.as_deref().unwrap_or("failed"));
    }
    println!(
        "{} examples, {} complete, {} failed",
        traces.len(),
        traces.len() - failed,
        failed
    );
    Ok(json!({ "examples": traces.len(), "complete": traces.len() - failed, "failed": failed }))
}

fn smart_error(e: SmartError) -> CliError {
    match e {
        SmartError::Provider(_) => CliError::Provider(e.to_string()),
        SmartError::Retrieval(RetrievalError::InvalidWeights(_)) => CliError::Usage(e.to_string()),
        SmartError::Retrieval(RetrievalError::Format { .. }) => CliError::Usage(e.to_string()),
        other => CliError::Failed(other.to_string()),
    }
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    seed_id: &'a str,
    db_id: &'a str,
    nlq: &'a str,
    nosql: &'a str,
    /// `seed` or `extension`.
    source: &'static str,
    provider: Option<&'a str>,
    debug_attempts: usize,
    escalated: bool,
}

fn dataset_build(
    rd: &mut RunDir,
    config: &RunConfig,
    seeds_path: &Path,
    demos_path: Option<&Path>,
    resume: bool,
) -> Result<serde_json::Value, CliError> {
    rd.input("seeds", seeds_path);
    rd.input("databases", &config.paths.databases);
    let seeds: Vec<SeedExample> = read_jsonl(seeds_path)?;
    let demos: CotDemos = match demos_path {
        Some(p) => {
            rd.input("demos", p);
            read_json(p)?
        }
        None => CotDemos::default(),
    };
    let dbs = load_databases(&config.paths.databases)?;
    let small = chat(&config.chat.small, "chat.small")?;
    let large = chat(&config.chat.large, "chat.large")?;
    let extenders = if config.chat.extenders.is_empty() {
        vec![small.clone(), large.clone()]
    } else {
        config
            .chat
            .extenders
            .iter()
            .map(|s| chat(s, "chat.extenders"))
            .collect::<Result<_, _>>()?
    };
    let clients = BuilderClients {
        second_tier: small.clone(),
        top_tier: large,
        inspector: small,
        extenders,
    };
    let builder_config = BuilderConfig {
        temperature: config.temperature,
        max_in_flight: config.max_in_flight,
        questions_per_query: config.questions_per_query,
        exec: ExecOptions::default(),
    };
    let progress_path = rd.file("progress.jsonl");
    let io = |e: text2nosql::dataset::DatasetError| CliError::Failed(e.to_string());
    let previous = if resume {
        ProgressLog::load(&progress_path).map_err(io)?
    } else {
        IndexMap::new()
    };
    let log = ProgressLog::open(&progress_path).map_err(io)?;
    let progress = run_builder(&seeds, &dbs, &clients, &demos, &builder_config, Some(&log), &previous).map_err(io)?;

    let mut dataset = Vec::new();
    let mut rejections = Vec::new();
    let mut provenance = Vec::new();
    for p in &progress {
        for (record, prov) in p.records().into_iter().zip(sources(p)) {
            let mut bundle = finalize_dataset(std::slice::from_ref(&record));
            rejections.append(&mut bundle.rejections);
            if let Some(r) = bundle.records.pop() {
                provenance.push((r.clone(), prov));
                dataset.push(r);
            }
        }
    }
    write_jsonl(&rd.file("dataset.jsonl"), &dataset)?;
    write_jsonl(&rd.file("rejections.jsonl"), &rejections)?;
    let rows: Vec<Provenance> = provenance
        .iter()
        .map(|(r, (p, source, provider))| Provenance {
            seed_id: &p.id,
            db_id: &r.db_id,
            nlq: &r.nlq,
            nosql: &r.nosql,
            source,
            provider: provider.as_deref(),
            debug_attempts: p.debug.as_ref().map_or(0, |d| d.attempts),
            escalated: p.debug.as_ref().is_some_and(|d| d.escalated),
        })
        .collect();
    write_jsonl(&rd.file("provenance.jsonl"), &rows)?;

    let verified = progress.iter().filter(|p| !p.records().is_empty()).count();
    let stopped: Vec<&SeedProgress> = progress.iter().filter(|p| p.error.is_some()).collect();
    println!(
        "{} seeds, {} verified, {} records, {} rejected, {} stopped",
        progress.len(),
        verified,
        dataset.len(),
        rejections.len(),
        stopped.len()
    );
    info!("outputs in {}", rd.path.display());
    if !stopped.is_empty() {
        for p in &stopped {
            eprintln!("{}: {}", p.id, p.error.as_deref().unwrap_or_default());
        }
        return Err(CliError::Provider(format!(
            "{} seeds stopped on provider errors; rerun with --run-id {} --resume",
            stopped.len(),
            rd.id
        )));
    }
    Ok(json!({
        "seeds": progress.len(),
        "verified": verified,
        "records": dataset.len(),
        "rejected": rejections.len(),
    }))
}

type Source<'a> = (&'a SeedProgress, &'static str, Option<String>);

/// Provenance for each entry of `p.records()`, in the same order.
fn sources(p: &SeedProgress) -> Vec<Source<'_>> {
    let mut out: Vec<Source<'_>> = vec![(p, "seed", None)];
    if let Some(ext) = &p.extension {
        out.extend(ext.questions.iter().map(|q| (p, "extension", Some(q.provider.clone()))));
    }
    out
}
