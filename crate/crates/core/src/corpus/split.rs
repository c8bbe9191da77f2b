use serde::{Deserialize, Serialize};

use super::record::{Authority, CaseRecord};

/// Train/test partition by judgment year: years before the cutoff train,
/// the cutoff year and later test.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCorpus {
    pub train: Vec<CaseRecord>,
    pub test: Vec<CaseRecord>,
    pub cutoff_year: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthoritySummary {
    pub authority: Authority,
    pub train: usize,
    pub train_violation_rate: f64,
    pub test: usize,
    pub test_violation_rate: f64,
}

/// Case ids on each side of the split, written so a run can be replayed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub cutoff_year: i32,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn temporal_split(corpus: &[CaseRecord], cutoff_year: i32) -> SplitCorpus {
    let (train, test) = corpus.iter().cloned().partition(|c| c.year < cutoff_year);
    SplitCorpus {
        train,
        test,
        cutoff_year,
    }
}

fn violation_rate<'a>(cases: impl Iterator<Item = &'a CaseRecord>) -> (usize, f64) {
    let (n, v) = cases.fold((0usize, 0usize), |(n, v), c| (n + 1, v + usize::from(c.is_violation())));
    (n, if n == 0 { 0.0 } else { v as f64 / n as f64 })
}

impl SplitCorpus {
    pub fn train_of(&self, authority: Authority) -> impl Iterator<Item = &CaseRecord> {
        self.train.iter().filter(move |c| c.authority == authority)
    }

    pub fn test_of(&self, authority: Authority) -> impl Iterator<Item = &CaseRecord> {
        self.test.iter().filter(move |c| c.authority == authority)
    }

    /// Sizes and violation rates per authority.
    pub fn summary(&self) -> Vec<AuthoritySummary> {
        Authority::ALL
            .iter()
            .map(|&authority| {
                let (train, train_violation_rate) = violation_rate(self.train_of(authority));
                let (test, test_violation_rate) = violation_rate(self.test_of(authority));
                AuthoritySummary {
                    authority,
                    train,
                    train_violation_rate,
                    test,
                    test_violation_rate,
                }
            })
            .collect()
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            cutoff_year: self.cutoff_year,
            train: self.train.iter().map(|c| c.id.clone()).collect(),
            test: self.test.iter().map(|c| c.id.clone()).collect(),
        }
    }
}
