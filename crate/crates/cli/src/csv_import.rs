//! Build a relational dump from a directory of CSV exports.

use std::path::Path;

use text2nosql::transform::{Column, RelationalDump};

use crate::CliError;

/// `schema` lists tables with keys and column types; rows come from
/// `<table>.csv` in `dir`. Tables without listed columns take the CSV header
/// as `text` columns. Empty cells become null.
pub fn import_csv(dir: &Path, schema: &Path) -> Result<RelationalDump, CliError> {
    let text = std::fs::read_to_string(schema).map_err(|e| CliError::Missing(format!("{}: {e}", schema.display())))?;
    let mut dump: RelationalDump =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", schema.display())))?;
    for table in &mut dump.tables {
        let path = dir.join(format!("{}.csv", table.name));
        let mut reader =
            csv::Reader::from_path(&path).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        if table.columns.is_empty() {
            table.columns = header
                .iter()
                .map(|h| Column {
                    name: h.clone(),
                    type_tag: "text".into(),
                })
                .collect();
        }
        let positions: Vec<usize> = table
            .columns
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| *h == c.name)
                    .ok_or_else(|| CliError::Usage(format!("{}: no column `{}`", path.display(), c.name)))
            })
            .collect::<Result<_, _>>()?;
        table.rows.clear();
        for record in reader.records() {
            let record = record.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let row = positions
                .iter()
                .map(|&i| match record.get(i) {
                    Some("") | None => serde_json::Value::Null,
                    Some(s) => serde_json::Value::String(s.to_string()),
                })
                .collect();
            table.rows.push(row);
        }
    }
    dump.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(dump)
}
