//! Information curves over calendar time for a dataset with entry dates:
//! the four blinded monitoring procedures evaluated on a grid, emitted as
//! delimited text for external plotting.

use crate::blinded::{
    blinded_info_value, fit_blinded_lumping_stats, fit_blinded_mixture_stats, BlindedMethod,
    Nuisance,
};
use crate::constrate::{fit_const_blinded_stats, info_const_blinded};
use crate::data::{SnapshotStats, SubjectStats};
use crate::error::{Error, Result};
use crate::events::EventData;
use crate::model::{AllocationWeights, ModelParams};
use crate::monitor::Procedure;

/// Information trajectories per procedure; `None` marks a grid point where
/// the blinded fit failed.
#[derive(Debug, Clone)]
pub struct CurveTable {
    pub procedures: Vec<Procedure>,
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
}

impl CurveTable {
    /// Delimited text: `t,<proc>,...` with `NA` as the missing-value marker.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for p in &self.procedures {
            out.push(',');
            out.push_str(p.name());
        }
        out.push('\n');
        for (t, vals) in &self.rows {
            out.push_str(&format!("{t:.6}"));
            for v in vals {
                match v {
                    Some(x) => out.push_str(&format!(",{x:.6}")),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluate blinded information curves for `procedures` on `grid`.
///
/// The dataset must carry calendar entry times; the snapshot at time `t`
/// gives subject `j` the exposure `min(t - entry_j, exposure_j)` and the
/// events that fall inside it.
pub fn information_curve(
    data: &EventData,
    beta_h1: f64,
    weights: &AllocationWeights,
    procedures: &[Procedure],
    grid: &[f64],
) -> Result<CurveTable> {
    let Some(entries) = &data.entries else {
        return Err(Error::invalid(
            "information curves need calendar entry times (entry_years column)",
        ));
    };
    if procedures.iter().any(|p| p.is_fixed()) {
        return Err(Error::invalid("information curves are defined for monitored procedures"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty calendar grid"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut warm_trend: Vec<Option<Nuisance>> = vec![None; procedures.len()];
    let mut warm_const: Vec<Option<[f64; 2]>> = vec![None; procedures.len()];
    // per-subject prefix sums over event times
    let prefix: Vec<Vec<f64>> = data
        .snapshot
        .subjects
        .iter()
        .map(|s| {
            let mut acc = 0.0;
            let mut p = vec![0.0];
            for &e in &s.event_times {
                acc += e;
                p.push(acc);
            }
            p
        })
        .collect();
    for &t in grid {
        let mut subjects = Vec::new();
        for (j, subj) in data.snapshot.subjects.iter().enumerate() {
            if entries[j] >= t {
                continue;
            }
            let exposure = (t - entries[j]).min(subj.exposure);
            if exposure <= 0.0 {
                continue;
            }
            let cut = subj.event_times.partition_point(|&s| s <= exposure);
            subjects.push(SubjectStats {
                exposure,
                count: cut as u64,
                sum_times: prefix[j][cut],
                group: None,
            });
        }
        let stats = SnapshotStats::from_subjects(subjects);
        let exposures: Vec<f64> = stats.subjects.iter().map(|s| s.exposure).collect();
        let mut vals = Vec::with_capacity(procedures.len());
        for (pi, proc_) in procedures.iter().enumerate() {
            if stats.subjects.is_empty() || stats.total_events() == 0 {
                vals.push(None);
                continue;
            }
            let value = match proc_ {
                Procedure::TrendLump | Procedure::TrendMix => {
                    let method = proc_.blinded_method().expect("monitored");
                    let fit = match method {
                        BlindedMethod::Mixture => {
                            fit_blinded_mixture_stats(&stats, beta_h1, weights, warm_trend[pi])
                        }
                        BlindedMethod::Lumping => {
                            fit_blinded_lumping_stats(&stats, beta_h1, weights, warm_trend[pi])
                        }
                    };
                    match fit {
                        Ok(f) if f.converged => {
                            warm_trend[pi] = Some(Nuisance {
                                alpha0: f.alpha0_b,
                                alpha1: f.alpha1_b,
                                phi: f.phi_b,
                            });
                            let params = ModelParams {
                                alpha0: f.alpha0_b,
                                alpha1: f.alpha1_b,
                                beta: beta_h1,
                                phi: f.phi_b,
                            };
                            blinded_info_value(&params, weights, &exposures).ok()
                        }
                        _ => {
                            warm_trend[pi] = None;
                            None
                        }
                    }
                }
                Procedure::ConstLump | Procedure::ConstMix => {
                    let method = proc_.blinded_method().expect("monitored");
                    match fit_const_blinded_stats(&stats, beta_h1, weights, method, warm_const[pi])
                    {
                        Ok(f) if f.converged => {
                            warm_const[pi] = Some([f.mu_c_b.ln(), f.varphi_b]);
                            info_const_blinded(&f, weights, &exposures).ok()
                        }
                        _ => {
                            warm_const[pi] = None;
                            None
                        }
                    }
                }
                Procedure::FixedDesign => unreachable!(),
            };
            vals.push(value);
        }
        rows.push((t, vals));
    }
    Ok(CurveTable { procedures: procedures.to_vec(), rows })
}

/// All four monitored procedures, in output order.
pub fn all_monitored_procedures() -> Vec<Procedure> {
    vec![Procedure::TrendLump, Procedure::TrendMix, Procedure::ConstLump, Procedure::ConstMix]
}
