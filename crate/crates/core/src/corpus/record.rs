use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which body decided a case. Determinate decisions are treated as ground
/// truth; indeterminate ones could have been overturned on referral.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Authority {
    Determinate,
    Indeterminate,
}

impl Authority {
    pub const ALL: [Authority; 2] = [Authority::Determinate, Authority::Indeterminate];

    pub fn as_str(self) -> &'static str {
        match self {
            Authority::Determinate => "determinate",
            Authority::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Authority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Authority {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "determinate" => Ok(Authority::Determinate),
            "indeterminate" => Ok(Authority::Indeterminate),
            other => Err(Error::Config(format!("unknown authority `{other}`"))),
        }
    }
}

/// One case: facts text, judgment year, deciding authority, binary outcome
/// (1 = violation) and, optionally, the individual votes of the panel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub text: String,
    pub year: i32,
    pub authority: Authority,
    pub outcome: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<Vec<u8>>,
}

impl CaseRecord {
    pub fn is_violation(&self) -> bool {
        self.outcome == 1
    }

    /// Checks the per-record invariants: binary outcome, non-empty binary
    /// votes, and agreement between outcome and vote majority.
    pub fn validate(&self) -> Result<()> {
        if self.outcome > 1 {
            return Err(Error::InvalidVotes {
                id: self.id.clone(),
                reason: format!("outcome must be 0 or 1, got {}", self.outcome),
            });
        }
        let Some(votes) = &self.votes else {
            return Ok(());
        };
        if votes.is_empty() {
            return Err(Error::InvalidVotes {
                id: self.id.clone(),
                reason: "empty vote list".into(),
            });
        }
        if let Some(v) = votes.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidVotes {
                id: self.id.clone(),
                reason: format!("vote {v} is not 0 or 1"),
            });
        }
        let ones = votes.iter().filter(|&&v| v == 1).count();
        let zeros = votes.len() - ones;
        if ones == zeros {
            // A split panel has no majority to check against.
            if self.authority == Authority::Indeterminate {
                return Err(Error::TiedVotes(self.id.clone()));
            }
            return Ok(());
        }
        let majority = u8::from(ones > zeros);
        if majority != self.outcome {
            return Err(Error::MajorityMismatch {
                id: self.id.clone(),
                outcome: self.outcome,
            });
        }
        Ok(())
    }
}

/// Reads a JSON Lines corpus, one case per line, preserving file order.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_reader(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_corpus_reader(reader: impl BufRead) -> Result<Vec<CaseRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CaseRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate()?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
