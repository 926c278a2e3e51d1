//! Cross-sectional trial data at a calendar time: per-subject exposures and
//! event times, either unblinded (group known) or blinded (group hidden),
//! plus the per-subject sufficient statistics the likelihood code consumes.

use crate::error::{Error, Result};
use crate::math::ln_factorial_table;
use crate::model::GroupLabel;

/// One subject in a cross-section: exposure so far, event study times up to
/// that exposure, and the group label unless the snapshot is blinded.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub exposure: f64,
    pub event_times: Vec<f64>,
    pub group: Option<GroupLabel>,
}

/// Cross-section of a trial at some calendar time. Subjects with zero
/// exposure are excluded; a subject with positive exposure and no events is
/// included and contributes through the zero-count term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub subjects: Vec<SubjectRecord>,
}

impl Snapshot {
    pub fn new(subjects: Vec<SubjectRecord>) -> Result<Self> {
        let snap = Snapshot { subjects };
        snap.validate()?;
        Ok(snap)
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, s) in self.subjects.iter().enumerate() {
            if !s.exposure.is_finite() || s.exposure <= 0.0 {
                return Err(Error::invalid(format!(
                    "subject {idx}: exposure must be positive and finite, got {}",
                    s.exposure
                )));
            }
            let mut prev = 0.0f64;
            for &t in &s.event_times {
                if !t.is_finite() || t < 0.0 {
                    return Err(Error::invalid(format!(
                        "subject {idx}: event time {t} is not a non-negative number"
                    )));
                }
                if t > s.exposure {
                    return Err(Error::invalid(format!(
                        "subject {idx}: event time {t} exceeds exposure {}",
                        s.exposure
                    )));
                }
                if t < prev {
                    return Err(Error::invalid(format!(
                        "subject {idx}: event times must be non-decreasing"
                    )));
                }
                prev = t;
            }
        }
        Ok(())
    }

    /// True when no subject carries a group label.
    pub fn is_blinded(&self) -> bool {
        self.subjects.iter().all(|s| s.group.is_none())
    }

    pub fn total_events(&self) -> u64 {
        self.subjects.iter().map(|s| s.event_times.len() as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Copy with all group labels hidden.
    pub fn blinded(&self) -> Snapshot {
        Snapshot {
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectRecord {
                    exposure: s.exposure,
                    event_times: s.event_times.clone(),
                    group: None,
                })
                .collect(),
        }
    }
}

/// Per-subject sufficient statistics of the trend likelihood: exposure,
/// event count and sum of event study times.
#[derive(Debug, Clone, Copy)]
pub struct SubjectStats {
    pub exposure: f64,
    pub count: u64,
    pub sum_times: f64,
    pub group: Option<GroupLabel>,
}

/// Snapshot reduced to sufficient statistics plus shared count tables.
#[derive(Debug, Clone)]
pub struct SnapshotStats {
    pub subjects: Vec<SubjectStats>,
    pub max_count: u64,
    /// `ln(n!)` for `n = 0..=max_count`.
    pub ln_fact: Vec<f64>,
}

impl SnapshotStats {
    pub fn from_subjects(subjects: Vec<SubjectStats>) -> Self {
        let max_count = subjects.iter().map(|s| s.count).max().unwrap_or(0);
        let ln_fact = ln_factorial_table(max_count as usize);
        SnapshotStats { subjects, max_count, ln_fact }
    }

    pub fn total_events(&self) -> u64 {
        self.subjects.iter().map(|s| s.count).sum()
    }

    pub fn total_exposure(&self) -> f64 {
        self.subjects.iter().map(|s| s.exposure).sum()
    }

    pub fn count_in_group(&self, group: GroupLabel) -> usize {
        self.subjects.iter().filter(|s| s.group == Some(group)).count()
    }

    pub fn events_in_group(&self, group: GroupLabel) -> u64 {
        self.subjects
            .iter()
            .filter(|s| s.group == Some(group))
            .map(|s| s.count)
            .sum()
    }
}

impl From<&Snapshot> for SnapshotStats {
    fn from(snap: &Snapshot) -> Self {
        let subjects = snap
            .subjects
            .iter()
            .map(|s| SubjectStats {
                exposure: s.exposure,
                count: s.event_times.len() as u64,
                sum_times: s.event_times.iter().sum(),
                group: s.group,
            })
            .collect();
        SnapshotStats::from_subjects(subjects)
    }
}
