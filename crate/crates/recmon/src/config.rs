//! Strict flat key-value scenario configuration: one `[scenario]` block per
//! scenario, keys mirroring the simulation-study table names. Unknown keys
//! are rejected with the offending line number.

use std::collections::HashSet;
use std::path::Path;

use crate::engine::{solve_alpha0, Scenario};
use crate::error::{Error, Result};
use crate::model::{AllocationWeights, ModelParams};
use crate::monitor::{target_information, MonitoringSpec, Procedure};
use crate::sim::TrialDesign;

/// Weekly grid in years; the default monitoring step.
pub const DEFAULT_MONITOR_STEP: f64 = 1.0 / 52.0;

const KNOWN_KEYS: &[&str] = &[
    "label",
    "procedure",
    "rate_ratio_h1",
    "rate_ratio_true",
    "trend_alpha1",
    "cum_rate_control_2y",
    "shape_phi",
    "n_total",
    "recruitment_years",
    "max_followup_years",
    "study_years",
    "monitor_start_years",
    "monitor_step_years",
    "alpha_one_sided",
    "power_target",
    "replications",
    "seed",
    "w_treatment",
    "allow_extension",
];

#[derive(Default, Clone)]
struct RawScenario {
    entries: Vec<(String, String, usize)>, // key, value, line
    header_line: usize,
}

impl RawScenario {
    fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Parse {
            line: self.header_line,
            msg: format!("scenario is missing required key '{key}'"),
        })
    }
}

fn parse_f64(raw: &RawScenario, key: &str) -> Result<f64> {
    let v = raw.require(key)?;
    let line = raw.entries.iter().find(|(k, _, _)| k == key).map(|e| e.2).unwrap_or(0);
    v.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("key '{key}': '{v}' is not a number"),
    })
}

fn parse_f64_or(raw: &RawScenario, key: &str, default: f64) -> Result<f64> {
    match raw.get(key) {
        Some(_) => parse_f64(raw, key),
        None => Ok(default),
    }
}

fn parse_u64(raw: &RawScenario, key: &str) -> Result<u64> {
    let v = raw.require(key)?;
    let line = raw.entries.iter().find(|(k, _, _)| k == key).map(|e| e.2).unwrap_or(0);
    v.parse::<u64>().map_err(|_| Error::Parse {
        line,
        msg: format!("key '{key}': '{v}' is not a non-negative integer"),
    })
}

/// Parse a scenario configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parse scenario configuration text. Empty input yields an empty list.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>> {
    let mut raws: Vec<RawScenario> = Vec::new();
    let mut current: Option<RawScenario> = None;
    for (idx, line_raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match line_raw.find('#') {
            Some(pos) => &line_raw[..pos],
            None => line_raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line == "[scenario]" {
            if let Some(done) = current.take() {
                raws.push(done);
            }
            current = Some(RawScenario { entries: Vec::new(), header_line: line_no });
            continue;
        }
        if line.starts_with('[') {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unknown section '{line}' (only [scenario] is allowed)"),
            });
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse { line: line_no, msg: format!("unknown key '{key}'") });
        }
        let Some(cur) = current.as_mut() else {
            return Err(Error::Parse {
                line: line_no,
                msg: "key outside of a [scenario] block".into(),
            });
        };
        if cur.entries.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::Parse { line: line_no, msg: format!("duplicate key '{key}'") });
        }
        cur.entries.push((key, value, line_no));
    }
    if let Some(done) = current.take() {
        raws.push(done);
    }

    let mut scenarios = Vec::with_capacity(raws.len());
    let mut labels = HashSet::new();
    for raw in &raws {
        let sc = build_scenario(raw, scenarios.len())?;
        if !labels.insert(sc.label.clone()) {
            return Err(Error::Parse {
                line: raw.header_line,
                msg: format!("duplicate scenario label '{}'", sc.label),
            });
        }
        scenarios.push(sc);
    }
    Ok(scenarios)
}

fn build_scenario(raw: &RawScenario, index: usize) -> Result<Scenario> {
    let procedure = Procedure::parse(raw.require("procedure")?).map_err(|e| Error::Parse {
        line: raw.header_line,
        msg: e.to_string(),
    })?;
    let rate_ratio_h1 = parse_f64(raw, "rate_ratio_h1")?;
    let rate_ratio_true = parse_f64_or(raw, "rate_ratio_true", 1.0)?;
    let trend_alpha1 = parse_f64(raw, "trend_alpha1")?;
    let cum_rate = parse_f64(raw, "cum_rate_control_2y")?;
    let shape_phi = parse_f64(raw, "shape_phi")?;
    let n_total = parse_u64(raw, "n_total")?;
    let recruitment = parse_f64(raw, "recruitment_years")?;
    let max_followup = parse_f64(raw, "max_followup_years")?;
    let study_years = parse_f64(raw, "study_years")?;
    let monitor_start = parse_f64(raw, "monitor_start_years")?;
    let monitor_step = parse_f64_or(raw, "monitor_step_years", DEFAULT_MONITOR_STEP)?;
    let alpha = parse_f64(raw, "alpha_one_sided")?;
    let power = parse_f64(raw, "power_target")?;
    let replications = parse_u64(raw, "replications")?;
    let seed = parse_u64(raw, "seed")?;
    let w_treatment = parse_f64_or(raw, "w_treatment", 0.5)?;
    let allow_extension = match raw.get("allow_extension") {
        None => false,
        Some("true") => true,
        Some("false") => false,
        Some(other) => {
            return Err(Error::Parse {
                line: raw.header_line,
                msg: format!("allow_extension must be true or false, got '{other}'"),
            })
        }
    };

    let fail = |msg: String| Error::Parse { line: raw.header_line, msg };
    if !(rate_ratio_h1 > 0.0) {
        return Err(fail(format!("rate_ratio_h1 must be positive, got {rate_ratio_h1}")));
    }
    if !(rate_ratio_true > 0.0) {
        return Err(fail(format!("rate_ratio_true must be positive, got {rate_ratio_true}")));
    }
    if replications == 0 {
        return Err(fail("replications must be at least 1".into()));
    }
    if n_total == 0 || n_total > u64::from(u32::MAX) {
        return Err(fail(format!("n_total out of range: {n_total}")));
    }

    let weights = AllocationWeights::new(w_treatment).map_err(|e| fail(e.to_string()))?;
    // The cumulative-rate anchor refers to the maximum follow-up horizon.
    let alpha0 =
        solve_alpha0(cum_rate, max_followup, trend_alpha1).map_err(|e| fail(e.to_string()))?;
    let true_params = ModelParams::new(alpha0, trend_alpha1, rate_ratio_true.ln(), shape_phi)
        .map_err(|e| fail(e.to_string()))?;
    let beta_h1 = rate_ratio_h1.ln();
    let target_info =
        target_information(alpha, power, beta_h1).map_err(|e| fail(e.to_string()))?;
    let design = TrialDesign {
        n_total: n_total as u32,
        weights,
        recruitment_period: recruitment,
        max_followup,
        study_duration: study_years,
        monitor_start,
        monitor_step,
    };
    design.validate().map_err(|e| fail(e.to_string()))?;
    let spec = MonitoringSpec {
        procedure,
        beta_h1,
        alpha,
        target_info,
        weights,
        allow_extension,
    };
    spec.validate().map_err(|e| fail(e.to_string()))?;
    let label = raw
        .get("label")
        .map(str::to_string)
        .unwrap_or_else(|| format!("scenario_{:02}", index + 1));
    let sc = Scenario {
        label,
        design,
        true_params,
        spec,
        replications: replications as u32,
        seed,
    };
    sc.validate().map_err(|e| fail(e.to_string()))?;
    Ok(sc)
}
