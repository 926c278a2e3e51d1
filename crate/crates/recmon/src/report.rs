//! Report emission: one CSV row per scenario plus a JSON sidecar carrying
//! the stopping-time histograms. Fixed-precision float formatting keeps the
//! files byte-identical for a given (config, seed) regardless of worker
//! count.

use std::io::Write;
use std::path::Path;

use crate::engine::ScenarioSummary;
use crate::error::Result;

pub const CSV_HEADER: &str = "label,replications,reject_rate,mc_error,mean_stop_time,sd_stop_time,mean_n,mean_beta_hat,bias_exp_beta,mean_stopped_early,skipped_fit_count,final_fit_failures,degraded";

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.6}")
    }
}

pub fn summaries_to_csv(summaries: &[ScenarioSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.label,
            s.replications,
            fmt(s.reject_rate),
            fmt(s.mc_error),
            fmt(s.mean_stop_time),
            fmt(s.sd_stop_time),
            fmt(s.mean_n),
            fmt(s.mean_beta_hat),
            fmt(s.bias_exp_beta),
            fmt(s.mean_stopped_early),
            s.skipped_fit_count,
            s.final_fit_failures,
            s.degraded,
        ));
    }
    out
}

#[derive(serde::Serialize)]
struct Sidecar<'a> {
    scenarios: &'a [ScenarioSummary],
}

pub fn summaries_to_json(summaries: &[ScenarioSummary]) -> Result<String> {
    let sidecar = Sidecar { scenarios: summaries };
    serde_json::to_string_pretty(&sidecar)
        .map_err(|e| crate::error::Error::Numerical(format!("json serialization: {e}")))
}

/// Write `report.csv` and `report.json` into `dir`.
pub fn write_reports(summaries: &[ScenarioSummary], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut csv = std::fs::File::create(dir.join("report.csv"))?;
    csv.write_all(summaries_to_csv(summaries).as_bytes())?;
    let mut json = std::fs::File::create(dir.join("report.json"))?;
    json.write_all(summaries_to_json(summaries)?.as_bytes())?;
    Ok(())
}
