//! Query-side and execution-side evaluation metrics.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    compare_results, execute_query_with, field_multisets_match, value_multisets_match, Comparison, DocumentDatabase,
    ExecOptions, ResultSet,
};
use crate::query::{extract_field_profile, extract_stage_keywords, normalize_renames, parse_query, QueryAst};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no database named `{0}`")]
    MissingDatabase(String),
}

/// Exact match: structural equality, object keys compared without order.
pub fn exact_match(pred: &QueryAst, gold: &QueryAst) -> bool {
    pred.semantic_eq(gold)
}

/// Same stage keywords in the same order.
pub fn query_stages_match(pred: &QueryAst, gold: &QueryAst) -> bool {
    extract_stage_keywords(pred) == extract_stage_keywords(gold)
}

/// The prediction mentions every database and defined field of the gold query.
pub fn query_fields_coverage(pred: &QueryAst, gold: &QueryAst) -> bool {
    let (p, g) = (extract_field_profile(pred), extract_field_profile(gold));
    p.database_fields.is_superset(&g.database_fields) && p.defined_fields.is_superset(&g.defined_fields)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionScores {
    pub ex: bool,
    pub efm: bool,
    pub evm: bool,
}

impl ExecutionScores {
    pub fn from_results(pred: &ResultSet, gold: &ResultSet) -> Self {
        ExecutionScores {
            ex: compare_results(pred, gold) == Comparison::Equal,
            efm: field_multisets_match(&pred.docs, &gold.docs),
            evm: value_multisets_match(&pred.docs, &gold.docs),
        }
    }
}

/// Run both queries and compare their results. Any execution error scores
/// all-false and is returned alongside.
pub fn execution_metrics(
    pred: &QueryAst,
    gold: &QueryAst,
    db: &DocumentDatabase,
    opts: &ExecOptions,
) -> (ExecutionScores, Option<String>) {
    let gold_result = match execute_query_with(db, gold, opts) {
        Ok(r) => r,
        Err(e) => return (ExecutionScores::default(), Some(format!("gold: {e}"))),
    };
    match execute_query_with(db, pred, opts) {
        Ok(r) => (ExecutionScores::from_results(&r, &gold_result), None),
        Err(e) => (ExecutionScores::default(), Some(format!("pred: {e}"))),
    }
}

/// Everything a metric may look at for one prediction.
pub struct PairContext<'a> {
    pub pred: &'a QueryAst,
    pub gold: &'a QueryAst,
    /// Rename-normalized forms (equal to the raw ones when normalization is off).
    pub pred_normalized: &'a QueryAst,
    pub gold_normalized: &'a QueryAst,
    pub pred_result: Option<&'a ResultSet>,
    pub gold_result: Option<&'a ResultSet>,
}

pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, ctx: &PairContext<'_>) -> bool;
}

struct Em;
struct Qsm;
struct Qfc;
struct Ex;
struct Efm;
struct Evm;

impl Metric for Em {
    fn name(&self) -> &'static str {
        "em"
    }
    fn score(&self, ctx: &PairContext<'_>) -> bool {
        exact_match(ctx.pred_normalized, ctx.gold_normalized)
    }
}

impl Metric for Qsm {
    fn name(&self) -> &'static str {
        "qsm"
    }
    fn score(&self, ctx: &PairContext<'_>) -> bool {
        query_stages_match(ctx.pred, ctx.gold)
    }
}

impl Metric for Qfc {
    fn name(&self) -> &'static str {
        "qfc"
    }
    fn score(&self, ctx: &PairContext<'_>) -> bool {
        query_fields_coverage(ctx.pred_normalized, ctx.gold_normalized)
    }
}

fn with_results(ctx: &PairContext<'_>, f: impl Fn(&ResultSet, &ResultSet) -> bool) -> bool {
    match (ctx.pred_result, ctx.gold_result) {
        (Some(p), Some(g)) => f(p, g),
        _ => false,
    }
}

impl Metric for Ex {
    fn name(&self) -> &'static str {
        "ex"
    }
    fn score(&self, ctx: &PairContext<'_>) -> bool {
        with_results(ctx, |p, g| compare_results(p, g) == Comparison::Equal)
    }
}

impl Metric for Efm {
    fn name(&self) -> &'static str {
        "efm"
    }
    fn score(&self, ctx: &PairContext<'_>) -> bool {
        with_results(ctx, |p, g| field_multisets_match(&p.docs, &g.docs))
    }
}

impl Metric for Evm {
    fn name(&self) -> &'static str {
        "evm"
    }
    fn score(&self, ctx: &PairContext<'_>) -> bool {
        with_results(ctx, |p, g| value_multisets_match(&p.docs, &g.docs))
    }
}

/// Metrics by name, scored in registration order.
pub struct MetricRegistry {
    metrics: IndexMap<&'static str, Box<dyn Metric>>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        MetricRegistry {
            metrics: IndexMap::new(),
        }
    }

    pub fn register(&mut self, metric: Box<dyn Metric>) {
        self.metrics.insert(metric.name(), metric);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Metric> {
        self.metrics.get(name).map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.metrics.keys().copied().collect()
    }

    pub fn score_all(&self, ctx: &PairContext<'_>) -> IndexMap<&'static str, bool> {
        self.metrics.iter().map(|(name, m)| (*name, m.score(ctx))).collect()
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut r = MetricRegistry::empty();
        r.register(Box::new(Em));
        r.register(Box::new(Qsm));
        r.register(Box::new(Qfc));
        r.register(Box::new(Ex));
        r.register(Box::new(Efm));
        r.register(Box::new(Evm));
        r
    }
}

/// One line of an evaluation corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub db_id: String,
    #[serde(default)]
    pub nlq: String,
    pub gold: String,
    pub pred: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub em: bool,
    pub qsm: bool,
    pub qfc: bool,
    pub ex: bool,
    pub efm: bool,
    pub evm: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "EM")]
    pub em: f64,
    #[serde(rename = "QSM")]
    pub qsm: f64,
    #[serde(rename = "QFC")]
    pub qfc: f64,
    #[serde(rename = "EX")]
    pub ex: f64,
    #[serde(rename = "EFM")]
    pub efm: f64,
    #[serde(rename = "EVM")]
    pub evm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_example: Vec<ExampleScores>,
    pub corpus: CorpusScores,
}

impl EvalReport {
    pub fn from_examples(per_example: Vec<ExampleScores>) -> Self {
        let n = per_example.len();
        let ratio = |f: fn(&ExampleScores) -> bool| {
            if n == 0 {
                0.0
            } else {
                per_example.iter().filter(|e| f(e)).count() as f64 / n as f64
            }
        };
        let corpus = CorpusScores {
            n,
            em: ratio(|e| e.em),
            qsm: ratio(|e| e.qsm),
            qfc: ratio(|e| e.qfc),
            ex: ratio(|e| e.ex),
            efm: ratio(|e| e.efm),
            evm: ratio(|e| e.evm),
        };
        EvalReport { per_example, corpus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Apply rename normalization to both sides before EM and QFC.
    pub normalize: bool,
    pub exec: ExecOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            normalize: true,
            exec: ExecOptions::default(),
        }
    }
}

#[derive(Default)]
pub struct Evaluator {
    pub registry: MetricRegistry,
    pub options: EvalOptions,
}

impl Evaluator {
    pub fn score_pair(&self, id: &str, pred_text: &str, gold_text: &str, db: &DocumentDatabase) -> ExampleScores {
        let mut scores = ExampleScores {
            id: id.to_string(),
            ..Default::default()
        };
        let gold = match parse_query(gold_text) {
            Ok(g) => g,
            Err(e) => {
                scores.error = Some(format!("gold: {e}"));
                return scores;
            }
        };
        let pred = match parse_query(pred_text) {
            Ok(p) => p,
            Err(e) => {
                scores.error = Some(format!("pred: {e}"));
                return scores;
            }
        };
        self.score_parsed(&mut scores, &pred, &gold, db);
        scores
    }

    pub fn score_parsed(&self, scores: &mut ExampleScores, pred: &QueryAst, gold: &QueryAst, db: &DocumentDatabase) {
        let normalized = |q: &QueryAst| {
            if self.options.normalize {
                normalize_renames(q).unwrap_or_else(|_| q.clone())
            } else {
                q.clone()
            }
        };
        let (pred_n, gold_n) = (normalized(pred), normalized(gold));
        let gold_result = execute_query_with(db, gold, &self.options.exec);
        let pred_result = execute_query_with(db, pred, &self.options.exec);
        let mut errors = Vec::new();
        if let Err(e) = &gold_result {
            errors.push(format!("gold: {e}"));
        }
        if let Err(e) = &pred_result {
            errors.push(format!("pred: {e}"));
        }
        let ctx = PairContext {
            pred,
            gold,
            pred_normalized: &pred_n,
            gold_normalized: &gold_n,
            pred_result: pred_result.as_ref().ok(),
            gold_result: gold_result.as_ref().ok(),
        };
        for (name, value) in self.registry.score_all(&ctx) {
            match name {
                "em" => scores.em = value,
                "qsm" => scores.qsm = value,
                "qfc" => scores.qfc = value,
                "ex" => scores.ex = value,
                "efm" => scores.efm = value,
                "evm" => scores.evm = value,
                other => {
                    scores.extra.insert(other.to_string(), value);
                }
            }
        }
        if !errors.is_empty() {
            scores.error = Some(errors.join("; "));
        }
    }

    /// Score every pair in parallel; the report keeps input order.
    pub fn evaluate_corpus(
        &self,
        pairs: &[EvalPair],
        dbs: &IndexMap<String, DocumentDatabase>,
    ) -> Result<EvalReport, MetricsError> {
        if let Some(missing) = pairs.iter().find(|p| !dbs.contains_key(&p.db_id)) {
            return Err(MetricsError::MissingDatabase(missing.db_id.clone()));
        }
        let rows = pairs
            .par_iter()
            .map(|p| self.score_pair(&p.id, &p.pred, &p.gold, &dbs[&p.db_id]))
            .collect();
        Ok(EvalReport::from_examples(rows))
    }
}

pub fn evaluate_corpus(
    pairs: &[EvalPair],
    dbs: &IndexMap<String, DocumentDatabase>,
) -> Result<EvalReport, MetricsError> {
    Evaluator::default().evaluate_corpus(pairs, dbs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::DocValue;

    fn q(s: &str) -> QueryAst {
        parse_query(s).unwrap()
    }

    #[test]
    fn em_ignores_key_order() {
        let a = q(r#"db.train.find({},{"Name":1,"Time":1,"_id":0})"#);
        let b = q(r#"db.train.find({},{_id:0,Time:1,Name:1});"#);
        assert!(exact_match(&a, &b));
        assert!(!exact_match(&a, &q(r#"db.Train.find({},{"Name":1,"Time":1,"_id":0})"#)));
    }

    #[test]
    fn qsm_and_qfc() {
        let gold = q(r#"db.c.aggregate([{$match:{a:1}},{$sort:{a:1}}])"#);
        assert!(!query_stages_match(&q(r#"db.c.aggregate([{$match:{a:1}}])"#), &gold));
        let sup = q(r#"db.c.find({},{a:1,b:1})"#);
        assert!(query_fields_coverage(&sup, &q(r#"db.c.find({},{a:1})"#)));
        assert!(!query_fields_coverage(&q(r#"db.c.find({},{a:1})"#), &sup));
    }

    #[test]
    fn corpus_ratios() {
        let db = DocumentDatabase::from_value(
            "d",
            &DocValue::from_json(&serde_json::json!({"c": [{"a": 1}, {"a": 2}]})),
        )
        .unwrap();
        let mut dbs = IndexMap::new();
        dbs.insert("d".to_string(), db);
        let gold = "db.c.find({a:1})";
        let pairs: Vec<EvalPair> = ["db.c.find({a:1})", "db.c.find(", "nope", "db.c.aggregate([{$bad:1}])"]
            .iter()
            .enumerate()
            .map(|(i, p)| EvalPair {
                id: i.to_string(),
                db_id: "d".into(),
                nlq: String::new(),
                gold: gold.into(),
                pred: p.to_string(),
            })
            .collect();
        let report = evaluate_corpus(&pairs, &dbs).unwrap();
        assert_eq!(report.corpus.n, 4);
        assert_eq!(report.corpus.em, 0.25);
        assert_eq!(report.corpus.ex, 0.25);
        assert_eq!(report.corpus.qsm, 0.25);
        assert!(report.per_example[1].error.is_some());
        let missing = vec![EvalPair {
            db_id: "x".into(),
            ..pairs[0].clone()
        }];
        assert_eq!(
            evaluate_corpus(&missing, &dbs),
            Err(MetricsError::MissingDatabase("x".into()))
        );
        assert_eq!(EvalReport::from_examples(vec![]).corpus.em, 0.0);
    }
}
