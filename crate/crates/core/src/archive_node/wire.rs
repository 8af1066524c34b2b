//! The tabular wire format: an XML document in the VOTable style, or an
//! equivalent JSON rendering.
//!
//! A null cell is an empty element (`<TD/>`); an empty string is an element
//! with no content (`<TD></TD>`). Both read back as written.

use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde_json::json;

use crate::catalog::{ColumnKind, ColumnMeta, Value};
use crate::query::TableResult;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDocument {
    pub code: String,
    pub message: String,
}

/// What a service sends back: a table or a structured error.
#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Table(TableResult),
    Error(ErrorDocument),
}

impl Document {
    pub fn error(code: &str, message: impl Into<String>) -> Document {
        Document::Error(ErrorDocument { code: code.to_string(), message: message.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireFormat {
    Xml,
    Json,
}

impl WireFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            WireFormat::Xml => "application/x-votable+xml",
            WireFormat::Json => "application/json",
        }
    }

    /// Picks a format from a `format=` parameter or an Accept header.
    pub fn negotiate(format: Option<&str>, accept: Option<&str>) -> WireFormat {
        match format {
            Some(f) if f.eq_ignore_ascii_case("json") => WireFormat::Json,
            Some(_) => WireFormat::Xml,
            None if accept.is_some_and(|a| a.contains("application/json")) => WireFormat::Json,
            None => WireFormat::Xml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed document: {0}")]
pub struct WireError(pub String);

fn bad(msg: impl Into<String>) -> WireError {
    WireError(msg.into())
}

pub fn encode(doc: &Document, format: WireFormat) -> String {
    match format {
        WireFormat::Xml => to_xml(doc),
        WireFormat::Json => to_json(doc),
    }
}

/// Reads either format, telling them apart by the first character.
pub fn decode(text: &str) -> Result<Document, WireError> {
    if text.trim_start().starts_with('{') {
        from_json(text)
    } else {
        from_xml(text)
    }
}

fn datatype(kind: ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Integer => "long",
        ColumnKind::Real => "double",
        ColumnKind::Text => "char",
        ColumnKind::Flag => "boolean",
    }
}

fn kind_of(datatype: &str) -> Option<ColumnKind> {
    Some(match datatype {
        "long" | "int" | "short" => ColumnKind::Integer,
        "double" | "float" => ColumnKind::Real,
        "char" | "unicodeChar" => ColumnKind::Text,
        "boolean" => ColumnKind::Flag,
        _ => return None,
    })
}

/// Escapes markup and every control character. NUL has no XML encoding and
/// becomes U+FFFD.
fn escape(s: &str, out: &mut String) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\0' => out.push('\u{FFFD}'),
            c if (c as u32) < 0x20 || c == '\u{7F}' => {
                let _ = write!(out, "&#{};", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn cell_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Flag(b) => Some(if *b { "true" } else { "false" }.to_string()),
        Value::Real(x) => Some(format!("{x:?}")),
        v => Some(v.render()),
    }
}

pub fn to_xml(doc: &Document) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<VOTABLE version=\"1.4\">\n");
    out.push_str("<RESOURCE type=\"results\">\n");
    match doc {
        Document::Error(e) => {
            out.push_str("<INFO name=\"QUERY_STATUS\" value=\"ERROR\" code=\"");
            escape(&e.code, &mut out);
            out.push_str("\">");
            escape(&e.message, &mut out);
            out.push_str("</INFO>\n");
        }
        Document::Table(t) => {
            out.push_str("<INFO name=\"QUERY_STATUS\" value=\"OK\"/>\n");
            let _ = writeln!(out, "<INFO name=\"TRUNCATED\" value=\"{}\"/>", t.truncated);
            let _ = writeln!(out, "<INFO name=\"ROWS\" value=\"{}\"/>", t.rows.len());
            out.push_str("<TABLE>\n");
            for c in &t.columns {
                out.push_str("<FIELD name=\"");
                escape(&c.name, &mut out);
                let _ = write!(out, "\" datatype=\"{}\"", datatype(c.kind));
                if c.kind == ColumnKind::Text {
                    out.push_str(" arraysize=\"*\"");
                }
                out.push_str(" unit=\"");
                escape(&c.unit, &mut out);
                out.push_str("\" ucd=\"");
                escape(&c.ucd, &mut out);
                out.push('"');
                if c.description.is_empty() {
                    out.push_str("/>\n");
                } else {
                    out.push_str("><DESCRIPTION>");
                    escape(&c.description, &mut out);
                    out.push_str("</DESCRIPTION></FIELD>\n");
                }
            }
            out.push_str("<DATA><TABLEDATA>\n");
            for row in &t.rows {
                out.push_str("<TR>");
                for v in row {
                    match cell_text(v) {
                        None => out.push_str("<TD/>"),
                        Some(s) => {
                            out.push_str("<TD>");
                            escape(&s, &mut out);
                            out.push_str("</TD>");
                        }
                    }
                }
                out.push_str("</TR>\n");
            }
            out.push_str("</TABLEDATA></DATA>\n</TABLE>\n");
        }
    }
    out.push_str("</RESOURCE>\n</VOTABLE>\n");
    out
}

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, WireError> {
    match e.try_get_attribute(name).map_err(|err| bad(err.to_string()))? {
        Some(a) => Ok(Some(a.unescape_value().map_err(|err| bad(err.to_string()))?.into_owned())),
        None => Ok(None),
    }
}

#[derive(Default)]
struct XmlState {
    status: Option<String>,
    code: String,
    code_message: Option<String>,
    truncated: bool,
    declared_rows: Option<usize>,
    columns: Vec<ColumnMeta>,
    rows: Vec<Vec<Value>>,
    /// Text being collected and the element it belongs to.
    text: Option<(Capture, String)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Capture {
    Message,
    Description,
    Cell,
}

impl XmlState {
    fn start(&mut self, e: &BytesStart<'_>, empty: bool) -> Result<(), WireError> {
        match e.local_name().as_ref() {
            b"INFO" => {
                let name = attr(e, "name")?.unwrap_or_default();
                let value = attr(e, "value")?.unwrap_or_default();
                match name.as_str() {
                    "QUERY_STATUS" => {
                        self.status = Some(value);
                        self.code = attr(e, "code")?.unwrap_or_default();
                        if !empty {
                            self.text = Some((Capture::Message, String::new()));
                        }
                    }
                    "TRUNCATED" => self.truncated = value == "true",
                    "ROWS" => self.declared_rows = Some(value.parse().map_err(|_| bad("bad ROWS count"))?),
                    _ => {}
                }
            }
            b"FIELD" => {
                let name = attr(e, "name")?.ok_or_else(|| bad("FIELD without name"))?;
                let dt = attr(e, "datatype")?.ok_or_else(|| bad("FIELD without datatype"))?;
                let kind = kind_of(&dt).ok_or_else(|| bad(format!("unknown datatype {dt}")))?;
                self.columns.push(ColumnMeta {
                    name,
                    kind,
                    unit: attr(e, "unit")?.unwrap_or_default(),
                    ucd: attr(e, "ucd")?.unwrap_or_default(),
                    description: String::new(),
                });
            }
            b"DESCRIPTION" if !empty => self.text = Some((Capture::Description, String::new())),
            b"TR" => {
                self.rows.push(Vec::new());
                if empty {
                    self.end_row()?;
                }
            }
            b"TD" => {
                if empty {
                    self.push_cell(None)?;
                } else {
                    self.text = Some((Capture::Cell, String::new()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn push_cell(&mut self, text: Option<String>) -> Result<(), WireError> {
        let row = self.rows.last_mut().ok_or_else(|| bad("TD outside TR"))?;
        let col = self.columns.get(row.len()).ok_or_else(|| bad("more cells than fields"))?;
        let v = match text {
            None => Value::Null,
            Some(s) if col.kind == ColumnKind::Text => Value::Text(s),
            Some(s) => Value::parse(col.kind, &s).map_err(|e| bad(e.to_string()))?,
        };
        row.push(v);
        Ok(())
    }

    fn end_row(&mut self) -> Result<(), WireError> {
        let n = self.rows.last().map_or(0, Vec::len);
        if n != self.columns.len() {
            return Err(bad(format!("row {} has {n} cells for {} fields", self.rows.len(), self.columns.len())));
        }
        Ok(())
    }

    fn end(&mut self, name: &[u8]) -> Result<(), WireError> {
        match name {
            b"TR" => self.end_row()?,
            b"TD" | b"DESCRIPTION" | b"INFO" => {
                if let Some((cap, s)) = self.text.take() {
                    match cap {
                        Capture::Cell => self.push_cell(Some(s))?,
                        Capture::Description => {
                            if let Some(c) = self.columns.last_mut() {
                                c.description = s;
                            }
                        }
                        Capture::Message => self.code_message = Some(s),
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn from_xml(text: &str) -> Result<Document, WireError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = true;
    let mut st = XmlState::default();
    let mut saw_root = false;
    loop {
        match reader.read_event().map_err(|e| bad(e.to_string()))? {
            Event::Start(e) => {
                saw_root |= e.local_name().as_ref() == b"VOTABLE";
                st.start(&e, false)?;
            }
            Event::Empty(e) => st.start(&e, true)?,
            Event::End(e) => st.end(e.local_name().as_ref())?,
            Event::Text(t) => {
                if let Some((_, s)) = &mut st.text {
                    s.push_str(&t.decode().map_err(|e| bad(e.to_string()))?);
                }
            }
            Event::CData(t) => {
                if let Some((_, s)) = &mut st.text {
                    s.push_str(&t.decode().map_err(|e| bad(e.to_string()))?);
                }
            }
            Event::GeneralRef(r) => {
                if let Some((_, s)) = &mut st.text {
                    if let Some(ch) = r.resolve_char_ref().map_err(|e| bad(e.to_string()))? {
                        s.push(ch);
                    } else {
                        let name = r.decode().map_err(|e| bad(e.to_string()))?;
                        s.push(match name.as_ref() {
                            "amp" => '&',
                            "lt" => '<',
                            "gt" => '>',
                            "quot" => '"',
                            "apos" => '\'',
                            other => return Err(bad(format!("unknown entity &{other};"))),
                        });
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root {
        return Err(bad("no VOTABLE element"));
    }
    match st.status.as_deref() {
        Some("OK") => {}
        Some("ERROR") => {
            return Ok(Document::Error(ErrorDocument {
                code: st.code,
                message: st.code_message.unwrap_or_default(),
            }))
        }
        Some(other) => return Err(bad(format!("unknown status {other}"))),
        None => return Err(bad("no QUERY_STATUS")),
    }
    if let Some(n) = st.declared_rows {
        if n != st.rows.len() {
            return Err(bad(format!("document declares {n} rows but carries {}", st.rows.len())));
        }
    }
    Ok(Document::Table(TableResult { columns: st.columns, rows: st.rows, truncated: st.truncated }))
}

fn json_cell(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Int(i) => json!(i),
        Value::Real(x) => json!(x),
        Value::Text(s) => json!(s),
        Value::Flag(b) => json!(b),
    }
}

pub fn to_json(doc: &Document) -> String {
    let v = match doc {
        Document::Error(e) => json!({ "status": "error", "code": e.code, "message": e.message }),
        Document::Table(t) => json!({
            "status": "ok",
            "truncated": t.truncated,
            "rows": t.rows.len(),
            "columns": t.columns,
            "data": t.rows.iter().map(|r| r.iter().map(json_cell).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }),
    };
    v.to_string()
}

fn from_json_cell(kind: ColumnKind, v: &serde_json::Value) -> Result<Value, WireError> {
    use serde_json::Value as J;
    Ok(match (kind, v) {
        (_, J::Null) => Value::Null,
        (ColumnKind::Integer, J::Number(n)) => Value::Int(n.as_i64().ok_or_else(|| bad(format!("{n} is not an integer")))?),
        (ColumnKind::Real, J::Number(n)) => Value::Real(n.as_f64().ok_or_else(|| bad("bad real"))?),
        (ColumnKind::Text, J::String(s)) => Value::Text(s.clone()),
        (ColumnKind::Flag, J::Bool(b)) => Value::Flag(*b),
        (k, other) => return Err(bad(format!("{other} is not a valid {k}"))),
    })
}

pub fn from_json(text: &str) -> Result<Document, WireError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let field = |k: &str| v.get(k).ok_or_else(|| bad(format!("missing {k}")));
    match field("status")?.as_str() {
        Some("error") => {
            let s = |k: &str| field(k).map(|x| x.as_str().unwrap_or_default().to_string());
            return Ok(Document::Error(ErrorDocument { code: s("code")?, message: s("message")? }));
        }
        Some("ok") => {}
        _ => return Err(bad("unknown status")),
    }
    let columns: Vec<ColumnMeta> = serde_json::from_value(field("columns")?.clone()).map_err(|e| bad(e.to_string()))?;
    let data = field("data")?.as_array().ok_or_else(|| bad("data is not an array"))?;
    let mut rows = Vec::with_capacity(data.len());
    for (i, r) in data.iter().enumerate() {
        let cells = r.as_array().ok_or_else(|| bad("row is not an array"))?;
        if cells.len() != columns.len() {
            return Err(bad(format!("row {} has {} cells for {} fields", i + 1, cells.len(), columns.len())));
        }
        rows.push(cells.iter().zip(&columns).map(|(c, m)| from_json_cell(m.kind, c)).collect::<Result<_, _>>()?);
    }
    if let Some(n) = v.get("rows").and_then(|n| n.as_u64()) {
        if n as usize != rows.len() {
            return Err(bad(format!("document declares {n} rows but carries {}", rows.len())));
        }
    }
    let truncated = v.get("truncated").and_then(|t| t.as_bool()).unwrap_or(false);
    Ok(Document::Table(TableResult { columns, rows, truncated }))
}
