use std::fmt::Write;

use super::schema::{Schema, TableDef};

/// A generated page: file name and its HTML text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub name: String,
    pub content: String,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// One page per table describing every column. Output depends only on the
/// schema.
pub fn generate_docs(schema: &Schema) -> Vec<Document> {
    schema.tables.iter().map(|t| table_page(schema, t)).collect()
}

fn table_page(schema: &Schema, t: &TableDef) -> Document {
    let mut h = String::new();
    let title = format!("{}.{}", schema.archive, t.name);
    writeln!(h, "<!DOCTYPE html>").unwrap();
    writeln!(h, "<html><head><meta charset=\"utf-8\"><title>{}</title></head><body>", escape(&title)).unwrap();
    writeln!(h, "<h1>{}</h1>", escape(&title)).unwrap();
    if !t.description.is_empty() {
        writeln!(h, "<p>{}</p>", escape(&t.description)).unwrap();
    }
    writeln!(h, "<p>Schema version {}. Primary key: <code>{}</code>.</p>", escape(&schema.version), escape(&t.primary_key)).unwrap();
    if let Some(s) = &t.spatial {
        writeln!(h, "<p>Spatially indexed on (<code>{}</code>, <code>{}</code>).</p>", escape(&s.ra), escape(&s.dec)).unwrap();
    }
    writeln!(h, "<table>").unwrap();
    writeln!(h, "<tr><th>name</th><th>kind</th><th>unit</th><th>UCD</th><th>description</th></tr>").unwrap();
    for c in &t.columns {
        writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape(&c.name),
            c.kind,
            escape(&c.unit),
            escape(&c.ucd),
            escape(&c.description)
        )
        .unwrap();
    }
    writeln!(h, "</table>").unwrap();
    if !t.foreign_keys.is_empty() {
        writeln!(h, "<h2>References</h2><ul>").unwrap();
        for fk in &t.foreign_keys {
            let target = format!("{}.html", fk.table);
            writeln!(
                h,
                "<li><code>{}</code> &rarr; <a href=\"{}\">{}.{}</a></li>",
                escape(&fk.column),
                escape(&target),
                escape(&fk.table),
                escape(&fk.target)
            )
            .unwrap();
        }
        writeln!(h, "</ul>").unwrap();
    }
    writeln!(h, "</body></html>").unwrap();
    Document { name: format!("{}.html", t.name), content: h }
}
