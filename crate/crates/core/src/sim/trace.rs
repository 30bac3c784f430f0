use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// One line of the JSONL trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_us: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<usize>,
    pub kind: String,
    #[serde(flatten)]
    pub fields: Map<String, Value>,
}

impl TraceRecord {
    pub fn new(time_us: u64, node: Option<usize>, kind: impl Into<String>) -> Self {
        TraceRecord { time_us, node, kind: kind.into(), fields: Map::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.fields.insert(key.to_owned(), value.into());
        self
    }

    /// Builds a record from a serialisable value tagged with `kind`.
    pub fn from_tagged<T: Serialize>(time_us: u64, node: Option<usize>, value: &T) -> Self {
        let mut fields = match serde_json::to_value(value) {
            Ok(Value::Object(m)) => m,
            Ok(other) => Map::from_iter([("value".to_owned(), other)]),
            Err(e) => Map::from_iter([("error".to_owned(), Value::String(e.to_string()))]),
        };
        let kind = match fields.remove("kind") {
            Some(Value::String(k)) => k,
            _ => "event".to_owned(),
        };
        TraceRecord { time_us, node, kind, fields }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.fields.get(key).and_then(Value::as_u64)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.fields.get(key).and_then(Value::as_str)
    }
}

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    enum Sample {
        TsaSelect { data_slot: u16 },
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![
            TraceRecord::new(5, Some(1), "tx").with("bits", 520u64),
            TraceRecord::from_tagged(9, None, &Sample::TsaSelect { data_slot: 3 }),
        ];
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"time_us":5,"node":1,"kind":"tx","bits":520}"#);
        assert_eq!(read_jsonl(&text).unwrap(), recs);
        assert_eq!(recs[1].kind, "tsa_select");
        assert_eq!(recs[1].u64("data_slot"), Some(3));
    }
}
