//! Line-delimited choice records: one JSON object per trial.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::acquisition::SetFeatures;
use crate::error::{Error, Result};
use crate::task::BlockStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Normal,
    Safe,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Normal => "normal",
            Condition::Safe => "safe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// The provided initial point; not a choice.
    Start,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub subject: String,
    pub block: usize,
    /// 0 for the start observation, then 1, 2, ...
    pub trial: usize,
    pub kind: RecordKind,
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub chosen: usize,
    pub y: f64,
    /// Block status after this trial.
    pub status: BlockStatus,
    pub start_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Features at choice time, computed before the choice was made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<SetFeatures>,
}

impl ChoiceRecord {
    pub fn is_choice(&self) -> bool {
        self.kind == RecordKind::Choice
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

pub fn write_records<'a, W: Write>(mut out: W, records: impl IntoIterator<Item = &'a ChoiceRecord>) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Parse records, skipping blank lines. Errors carry the 1-based line number.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<ChoiceRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ChoiceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> ChoiceRecord {
        ChoiceRecord {
            subject: "s1".into(),
            block: 0,
            trial: 0,
            kind: RecordKind::Start,
            condition: Condition::Safe,
            agent: None,
            chosen: 4,
            y: 0.25,
            status: BlockStatus::Active,
            start_index: 4,
            threshold: Some(-0.1),
            features: None,
        }
    }

    #[test]
    fn lines_round_trip() {
        let recs = vec![start(), ChoiceRecord { trial: 1, kind: RecordKind::Choice, ..start() }];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"subject\":\"s1\""));
        assert_eq!(read_records(text.as_bytes()).unwrap(), recs);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n\nnot json\n", start().to_line());
        match read_records(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
