use std::sync::LazyLock;

use regex::Regex;

use super::SmartError;

static QUERY_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"db\.[A-Za-z_$][\w$]*\.(?:find|aggregate)\(.*\)").expect("valid regex"));

/// Pull the final query out of a model reply: the last fenced block that
/// mentions `db.`, else the last line that looks like a query. The result
/// always ends with `;`.
pub fn extract_query(reply: &str) -> Result<String, SmartError> {
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(body) => blocks.push(body.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(body) = current.as_mut() {
            body.push(line);
        }
    }
    let fenced = blocks.iter().rev().map(|b| b.trim()).find(|b| b.contains("db."));
    let found = match fenced {
        Some(b) => Some(b.to_string()),
        None => reply
            .lines()
            .rev()
            .find_map(|l| QUERY_LINE.find(l).map(|m| m.as_str().to_string())),
    };
    let query = found.ok_or(SmartError::NoQueryFound)?;
    let query = query.trim().trim_end_matches(';').trim_end();
    Ok(format!("{query};"))
}
