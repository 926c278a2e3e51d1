//! Blinded event file I/O. The canonical format is UTF-8 comma-delimited
//! with header `subject_id,exposure_years,event_times`, where `event_times`
//! is a semicolon-joined list of study times (empty for zero events).
//!
//! Two optional columns are accepted: `entry_years` (calendar entry, needed
//! for information curves) after `subject_id`, and a trailing `group` column
//! with values `T`/`C` enabling unblinded fits.

use std::path::Path;

use crate::data::{Snapshot, SubjectRecord};
use crate::error::{Error, Result};
use crate::model::GroupLabel;

/// A loaded event dataset: a snapshot plus the optional calendar entries.
#[derive(Debug, Clone)]
pub struct EventData {
    pub ids: Vec<String>,
    pub snapshot: Snapshot,
    /// Calendar entry times, present only when the file has `entry_years`.
    pub entries: Option<Vec<f64>>,
    pub has_groups: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeaderShape {
    has_entry: bool,
    has_group: bool,
}

fn parse_header(line: &str) -> Result<HeaderShape> {
    let cols: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    let shapes = [
        (vec!["subject_id", "exposure_years", "event_times"], false, false),
        (vec!["subject_id", "entry_years", "exposure_years", "event_times"], true, false),
        (vec!["subject_id", "exposure_years", "event_times", "group"], false, true),
        (
            vec!["subject_id", "entry_years", "exposure_years", "event_times", "group"],
            true,
            true,
        ),
    ];
    for (expect, has_entry, has_group) in shapes {
        if cols == expect {
            return Ok(HeaderShape { has_entry, has_group });
        }
    }
    Err(Error::Parse {
        line: 1,
        msg: format!(
            "unrecognized header '{line}'; expected subject_id[,entry_years],exposure_years,event_times[,group]"
        ),
    })
}

/// Load a blinded (or group-annotated) event file.
pub fn load_blinded_events(path: impl AsRef<Path>) -> Result<EventData> {
    let text = std::fs::read_to_string(path)?;
    parse_blinded_events(&text)
}

pub fn parse_blinded_events(text: &str) -> Result<EventData> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse { line: 1, msg: "empty file".into() });
    };
    let shape = parse_header(header)?;
    let mut ids = Vec::new();
    let mut entries = Vec::new();
    let mut subjects = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected =
            2 + usize::from(shape.has_entry) + 1 + usize::from(shape.has_group);
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let mut it = fields.into_iter();
        let id = it.next().unwrap().to_string();
        if id.is_empty() {
            return Err(Error::Parse { line: line_no, msg: "empty subject_id".into() });
        }
        if ids.contains(&id) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate subject_id '{id}'"),
            });
        }
        let entry = if shape.has_entry {
            let v = it.next().unwrap();
            Some(v.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("entry_years '{v}' is not a number"),
            })?)
        } else {
            None
        };
        let exposure_str = it.next().unwrap();
        let exposure = exposure_str.parse::<f64>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("exposure_years '{exposure_str}' is not a number"),
        })?;
        if !(exposure > 0.0) || !exposure.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("exposure must be positive, got {exposure}"),
            });
        }
        let times_str = it.next().unwrap();
        let mut event_times = Vec::new();
        if !times_str.is_empty() {
            for piece in times_str.split(';') {
                let t = piece.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("event time '{piece}' is not a number"),
                })?;
                if !t.is_finite() || t < 0.0 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("event time {t} must be non-negative"),
                    });
                }
                if t > exposure {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("event time {t} exceeds exposure {exposure}"),
                    });
                }
                event_times.push(t);
            }
            event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let group = if shape.has_group {
            let g = it.next().unwrap();
            Some(match g {
                "T" => GroupLabel::Treatment,
                "C" => GroupLabel::Control,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("group must be T or C, got '{other}'"),
                    })
                }
            })
        } else {
            None
        };
        if let Some(e) = entry {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("entry_years must be non-negative, got {e}"),
                });
            }
            entries.push(e);
        }
        ids.push(id);
        subjects.push(SubjectRecord { exposure, event_times, group });
    }
    if subjects.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no subject rows: an event file must describe at least one subject".into(),
        });
    }
    let snapshot = Snapshot::new(subjects)?;
    Ok(EventData {
        ids,
        snapshot,
        entries: if shape.has_entry { Some(entries) } else { None },
        has_groups: shape.has_group,
    })
}

/// Write a snapshot (with optional entries) in the canonical format; used by
/// tests and the simulator export.
pub fn format_events(data: &EventData) -> String {
    let mut out = String::new();
    let has_entry = data.entries.is_some();
    let has_group = data.has_groups;
    out.push_str("subject_id");
    if has_entry {
        out.push_str(",entry_years");
    }
    out.push_str(",exposure_years,event_times");
    if has_group {
        out.push_str(",group");
    }
    out.push('\n');
    for (i, subj) in data.snapshot.subjects.iter().enumerate() {
        out.push_str(&data.ids[i]);
        if let Some(entries) = &data.entries {
            out.push_str(&format!(",{:.6}", entries[i]));
        }
        let times = subj
            .event_times
            .iter()
            .map(|t| format!("{t:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(",{:.6},{times}", subj.exposure));
        if has_group {
            out.push_str(match subj.group {
                Some(GroupLabel::Treatment) => ",T",
                Some(GroupLabel::Control) => ",C",
                None => ",",
            });
        }
        out.push('\n');
    }
    out
}
