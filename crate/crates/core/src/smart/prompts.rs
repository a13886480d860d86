//! Prompt templates for schema prediction, generation, refinement and
//! optimization.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::engine::DocumentDatabase;
use crate::provider::ChatMessage;
use crate::retrieval::ExampleRecord;
use crate::value::{DocValue, Document};

/// Collection names with the dotted field paths found in their documents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbSchema {
    pub collections: IndexMap<String, Vec<String>>,
}

impl DbSchema {
    /// Fields in order of first appearance; objects inside arrays contribute
    /// their keys under the array's path.
    pub fn from_database(db: &DocumentDatabase) -> Self {
        let mut collections = IndexMap::new();
        for (name, docs) in &db.collections {
            let mut fields: IndexMap<String, ()> = IndexMap::new();
            for doc in docs {
                collect_fields(doc, "", &mut fields);
            }
            collections.insert(name.clone(), fields.into_keys().collect());
        }
        DbSchema { collections }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, fields) in &self.collections {
            out.push_str(&format!("- {name}: {}\n", fields.join(", ")));
        }
        out.trim_end().to_string()
    }
}

fn collect_fields(doc: &Document, prefix: &str, out: &mut IndexMap<String, ()>) {
    for (key, value) in doc {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        out.insert(path.clone(), ());
        match value {
            DocValue::Obj(inner) => collect_fields(inner, &path, out),
            DocValue::Array(items) => {
                for item in items {
                    if let DocValue::Obj(inner) = item {
                        collect_fields(inner, &path, out);
                    }
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    DbFields,
    DefinedFields,
    ResultFields,
    Collections,
}

impl SchemaKind {
    pub const ALL: [SchemaKind; 4] = [
        SchemaKind::DbFields,
        SchemaKind::DefinedFields,
        SchemaKind::ResultFields,
        SchemaKind::Collections,
    ];

    pub fn stage(self) -> &'static str {
        match self {
            SchemaKind::DbFields => "schema_db_fields",
            SchemaKind::DefinedFields => "schema_defined_fields",
            SchemaKind::ResultFields => "schema_result_fields",
            SchemaKind::Collections => "schema_collections",
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            SchemaKind::DbFields => "# Given the natural language query, please predict the fields used in the query.",
            SchemaKind::DefinedFields => {
                "# Given the natural language query, please predict the fields defined or renamed in the query."
            }
            SchemaKind::ResultFields => {
                "# Given the natural language query, please predict the fields shown in the execution results of the query."
            }
            SchemaKind::Collections => {
                "# Given the natural language query, please predict the collections used in the query."
            }
        }
    }
}

pub const SCHEMA_SYSTEM_PROMPT: &str = "You are now the MongoDB natural language interface, responsible for converting user input natural language queries into MongoDB query statements based on the MongoDB Collection and their Fields, and parsing the features according to user requirements.";

pub const GENERATION_SYSTEM_PROMPT: &str = "You are now the MongoDB natural language interface, responsible for converting user input natural language queries into MongoDB query statements based on the MongoDB collections and their fields.";

pub const GENERATION_INSTRUCTION: &str =
    "# Given the MongoDB collections and their fields and natural language query, please generate final MongoDB query.";

pub const STEP_BY_STEP: &str = "A: Let's think step by step!";

fn nlq_and_schema(instruction: &str, nlq: &str, schema: &DbSchema) -> String {
    format!(
        "{instruction}\n## Natural Language Query: `{nlq}`\n## MongoDB Collection and their Fields\n{}",
        schema.render()
    )
}

pub fn schema_prediction_prompt(kind: SchemaKind, nlq: &str, schema: &DbSchema) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(SCHEMA_SYSTEM_PROMPT),
        ChatMessage::user(nlq_and_schema(kind.instruction(), nlq, schema)),
    ]
}

pub fn generation_prompt(nlq: &str, schema: &DbSchema) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(GENERATION_SYSTEM_PROMPT),
        ChatMessage::user(nlq_and_schema(GENERATION_INSTRUCTION, nlq, schema)),
    ]
}

/// Schema-prediction output, one list per kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedSchemas {
    pub db_fields: Vec<String>,
    pub defined_fields: Vec<String>,
    pub result_fields: Vec<String>,
    pub collections: Vec<String>,
}

impl PredictedSchemas {
    pub fn get(&self, kind: SchemaKind) -> &Vec<String> {
        match kind {
            SchemaKind::DbFields => &self.db_fields,
            SchemaKind::DefinedFields => &self.defined_fields,
            SchemaKind::ResultFields => &self.result_fields,
            SchemaKind::Collections => &self.collections,
        }
    }

    pub fn get_mut(&mut self, kind: SchemaKind) -> &mut Vec<String> {
        match kind {
            SchemaKind::DbFields => &mut self.db_fields,
            SchemaKind::DefinedFields => &mut self.defined_fields,
            SchemaKind::ResultFields => &mut self.result_fields,
            SchemaKind::Collections => &mut self.collections,
        }
    }

    fn render(&self) -> String {
        let line = |label: &str, v: &[String]| format!("   - {label}: `{}`\n", v.join(","));
        let mut out = String::from("## Predicted Schemas\n");
        out.push_str(&line("Collections", &self.collections));
        out.push_str(&line("Database fields", &self.db_fields));
        out.push_str(&line("Defined fields", &self.defined_fields));
        out.push_str(&line("Fields shown in the execution results", &self.result_fields));
        out
    }
}

pub const REFINE_INSTRUCTION: &str = "## Instruction\nCheck whether the original MongoDB query is reasonable for the natural language query and the collections above. If it is reasonable, keep it unchanged. Otherwise, adjust it using the reference examples and the predicted schemas. Give the final query in a ```javascript code block.";

pub const OPTIMIZE_INSTRUCTION: &str = "## Instruction\nCompare the execution results of the original MongoDB query with the fields that should be shown and with the reference examples and their results. If the results answer the natural language query, keep the query unchanged. Otherwise, fix the query. Give the final query in a ```javascript code block.";

fn render_reference(i: usize, record: &ExampleRecord) -> String {
    format!(
        "### Example {}\n   - Natural Language Query: `{}`\n   - MongoDB Query: `{}`\n",
        i + 1,
        record.nlq,
        record.nosql
    )
}

pub fn refine_prompt(
    nlq: &str,
    schema: &DbSchema,
    predicted: &PredictedSchemas,
    original: &str,
    examples: &[&ExampleRecord],
) -> Vec<ChatMessage> {
    let mut p = String::from("## Query Transformation Reference Examples\n");
    for (i, r) in examples.iter().enumerate() {
        p.push_str(&render_reference(i, r));
    }
    p.push_str("## MongoDB collections and their fields\n");
    p.push_str(&schema.render());
    p.push_str(&format!("\n## Natural Language Query\n   - `{nlq}`\n"));
    p.push_str(&format!("## Original MongoDB Query\n{original}\n"));
    p.push_str(&predicted.render());
    p.push_str(REFINE_INSTRUCTION);
    p.push('\n');
    p.push_str(STEP_BY_STEP);
    vec![ChatMessage::user(p)]
}

/// A retrieved example together with its rendered execution results.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleWithResults<'a> {
    pub record: &'a ExampleRecord,
    pub results: String,
}

pub fn optimize_prompt(
    nlq: &str,
    schema: &DbSchema,
    target_fields: &[String],
    original: &str,
    execution: &str,
    examples: &[ExampleWithResults<'_>],
) -> Vec<ChatMessage> {
    let mut p = String::from("## Reference Exampels:\n");
    for (i, e) in examples.iter().enumerate() {
        p.push_str(&render_reference(i, e.record));
        p.push_str(&format!("   - Execution Results:\n{}\n", e.results));
    }
    p.push_str("##  MongoDB collections and their fields\n");
    p.push_str(&schema.render());
    p.push_str(&format!("\n## Natural Language Query\n   - `{nlq}`\n"));
    p.push_str(&format!(
        "## Fields Shown in the Execution Results\n   - `{}`\n",
        target_fields.join(",")
    ));
    p.push_str(&format!("## Original MongoDB Query\n{original}\n"));
    p.push_str(&format!("### Execution Results\n{execution}\n"));
    p.push_str(OPTIMIZE_INSTRUCTION);
    p.push('\n');
    p.push_str(STEP_BY_STEP);
    vec![ChatMessage::user(p)]
}
