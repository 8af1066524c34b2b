use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Integer,
    Real,
    Text,
    Flag,
}

impl ColumnKind {
    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Integer => "integer",
            ColumnKind::Real => "real",
            ColumnKind::Text => "text",
            ColumnKind::Flag => "flag",
        }
    }

    pub fn from_name(s: &str) -> Option<ColumnKind> {
        match s {
            "integer" => Some(ColumnKind::Integer),
            "real" => Some(ColumnKind::Real),
            "text" => Some(ColumnKind::Text),
            "flag" => Some(ColumnKind::Flag),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One cell. An empty field in delimited text is `Null` for every kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Flag(bool),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot read {text:?} as {kind}")]
pub struct ValueError {
    pub kind: ColumnKind,
    pub text: String,
}

impl Value {
    pub fn parse(kind: ColumnKind, text: &str) -> Result<Value, ValueError> {
        if text.is_empty() {
            return Ok(Value::Null);
        }
        let err = || ValueError { kind, text: text.to_string() };
        match kind {
            ColumnKind::Integer => text.parse().map(Value::Int).map_err(|_| err()),
            ColumnKind::Real => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Real(v)),
                _ => Err(err()),
            },
            ColumnKind::Text => Ok(Value::Text(text.to_string())),
            ColumnKind::Flag => match text {
                "1" | "true" => Ok(Value::Flag(true)),
                "0" | "false" => Ok(Value::Flag(false)),
                _ => Err(err()),
            },
        }
    }

    /// Delimited-text rendering; the inverse of [`Value::parse`].
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Int(v) => v.to_string(),
            Value::Real(v) => v.to_string(),
            Value::Text(s) => s.clone(),
            Value::Flag(b) => if *b { "1" } else { "0" }.to_string(),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn fits(&self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (Value::Null, _)
                | (Value::Int(_), ColumnKind::Integer)
                | (Value::Real(_), ColumnKind::Real)
                | (Value::Text(_), ColumnKind::Text)
                | (Value::Flag(_), ColumnKind::Flag)
        )
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// SQL-style comparison: `None` when either side is null or the kinds
    /// are incomparable. Integers and reals compare numerically.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Flag(a), Value::Flag(b)) => Some(a.cmp(b)),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    /// Bytes this value occupies in delimited text, used for quota
    /// accounting.
    pub fn encoded_len(&self) -> usize {
        match self {
            Value::Text(s) => s.len(),
            v => v.render().len(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_render_kinds() {
        assert_eq!(Value::parse(ColumnKind::Integer, "-12").unwrap(), Value::Int(-12));
        assert_eq!(Value::parse(ColumnKind::Real, "0.1").unwrap().render(), "0.1");
        assert_eq!(Value::parse(ColumnKind::Flag, "true").unwrap(), Value::Flag(true));
        assert_eq!(Value::parse(ColumnKind::Text, "").unwrap(), Value::Null);
        assert!(Value::parse(ColumnKind::Integer, "1.5").is_err());
        assert!(Value::parse(ColumnKind::Real, "inf").is_err());
        assert!(Value::parse(ColumnKind::Flag, "yes").is_err());
    }

    #[test]
    fn comparisons() {
        assert_eq!(Value::Int(2).compare(&Value::Real(2.5)), Some(Ordering::Less));
        assert_eq!(Value::Null.compare(&Value::Int(1)), None);
        assert_eq!(Value::Text("a".into()).compare(&Value::Int(1)), None);
    }
}
