//! Trial simulation: accrual, frailty draws, non-homogeneous Poisson event
//! generation under the conditional-count construction, censoring at the
//! follow-up cap, and calendar-time snapshots.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::data::{Snapshot, SnapshotStats, SubjectRecord, SubjectStats};
use crate::error::{Error, Result};
use crate::model::{cumulative_rate_unchecked, AllocationWeights, GroupLabel, ModelParams};

/// Design of a trial: accrual, follow-up, duration and the monitoring grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDesign {
    pub n_total: u32,
    pub weights: AllocationWeights,
    /// Accrual window in years; entries are uniform on it.
    pub recruitment_period: f64,
    /// Cap on each subject's exposure, in years.
    pub max_followup: f64,
    /// Planned calendar duration in years.
    pub study_duration: f64,
    /// Calendar time at which information monitoring starts.
    pub monitor_start: f64,
    /// Monitoring grid step in years.
    pub monitor_step: f64,
}

impl TrialDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::invalid("n_total must be positive"));
        }
        for (name, v) in [
            ("recruitment_period", self.recruitment_period),
            ("max_followup", self.max_followup),
            ("study_duration", self.study_duration),
            ("monitor_start", self.monitor_start),
            ("monitor_step", self.monitor_step),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.max_followup <= 0.0 || self.study_duration <= 0.0 || self.monitor_step <= 0.0 {
            return Err(Error::invalid("max_followup, study_duration and monitor_step must be positive"));
        }
        if self.study_duration < self.recruitment_period {
            return Err(Error::invalid(format!(
                "study_duration {} shorter than recruitment_period {}",
                self.study_duration, self.recruitment_period
            )));
        }
        if self.monitor_start >= self.study_duration {
            return Err(Error::invalid(format!(
                "monitor_start {} must lie before study_duration {}",
                self.monitor_start, self.study_duration
            )));
        }
        Ok(())
    }
}

/// One simulated subject: arm, calendar entry, frailty and the full event
/// history on study time `[0, max_followup]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPath {
    pub group: GroupLabel,
    pub entry: f64,
    pub frailty: f64,
    /// Event study times, non-decreasing.
    pub events: Vec<f64>,
}

/// Draw a frailty from Gamma(1/phi, 1/phi): expectation 1, variance phi.
pub fn draw_frailty<R: Rng + ?Sized>(phi: f64, rng: &mut R) -> Result<f64> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::invalid(format!("frailty variance must be positive, got {phi}")));
    }
    let gamma = Gamma::new(1.0 / phi, phi)
        .map_err(|e| Error::invalid(format!("gamma frailty parameters: {e}")))?;
    Ok(gamma.sample(rng))
}

/// Simulate one subject's event times on `[0, exposure_cap]`.
///
/// The event count is Poisson with mean `frailty * Lambda_i(cap)`; given the
/// count, times are i.i.d. with CDF `(exp(a1 s)-1)/(exp(a1 cap)-1)`, inverted
/// in closed form (uniform when `a1 = 0`).
pub fn simulate_subject<R: Rng + ?Sized>(
    params: &ModelParams,
    group: GroupLabel,
    frailty: f64,
    exposure_cap: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(exposure_cap > 0.0) || !exposure_cap.is_finite() {
        return Err(Error::invalid(format!("exposure cap must be positive, got {exposure_cap}")));
    }
    if !(frailty > 0.0) || !frailty.is_finite() {
        return Err(Error::invalid(format!("frailty must be positive, got {frailty}")));
    }
    let mean = frailty * cumulative_rate_unchecked(params, group, exposure_cap);
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let pois = Poisson::new(mean)
        .map_err(|e| Error::Numerical(format!("poisson mean {mean}: {e}")))?;
    let k = pois.sample(rng) as usize;
    let mut times = Vec::with_capacity(k);
    let a1 = params.alpha1;
    let x_cap = a1 * exposure_cap;
    let denom = x_cap.exp_m1();
    for _ in 0..k {
        let u: f64 = rng.random();
        let t = if x_cap.abs() < 1e-8 {
            u * exposure_cap
        } else {
            (u * denom).ln_1p() / a1
        };
        times.push(t.clamp(0.0, exposure_cap));
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(times)
}

/// Simulate a full trial. Per subject, in a fixed draw order (group, entry,
/// frailty, events) so that a given RNG stream reproduces bit-identically.
pub fn simulate_trial<R: Rng + ?Sized>(
    design: &TrialDesign,
    params: &ModelParams,
    rng: &mut R,
) -> Result<Vec<SubjectPath>> {
    design.validate()?;
    params.validate()?;
    let mut trial = Vec::with_capacity(design.n_total as usize);
    for _ in 0..design.n_total {
        let group = if rng.random_bool(design.weights.treatment()) {
            GroupLabel::Treatment
        } else {
            GroupLabel::Control
        };
        let entry = if design.recruitment_period > 0.0 {
            rng.random::<f64>() * design.recruitment_period
        } else {
            0.0
        };
        let frailty = draw_frailty(params.phi, rng)?;
        let events = simulate_subject(params, group, frailty, design.max_followup, rng)?;
        trial.push(SubjectPath { group, entry, frailty, events });
    }
    Ok(trial)
}

/// Cross-section of a simulated trial at calendar time `t`. Subjects who have
/// entered before `t` are included with exposure `min(t - entry, cap)` and
/// their event list truncated to times within the exposure.
pub fn snapshot(trial: &[SubjectPath], design: &TrialDesign, t: f64, blinded: bool) -> Snapshot {
    let mut subjects = Vec::new();
    for subj in trial {
        if subj.entry >= t {
            continue;
        }
        let exposure = (t - subj.entry).min(design.max_followup);
        if exposure <= 0.0 {
            continue;
        }
        let cut = subj.events.partition_point(|&s| s <= exposure);
        subjects.push(SubjectRecord {
            exposure,
            event_times: subj.events[..cut].to_vec(),
            group: if blinded { None } else { Some(subj.group) },
        });
    }
    Snapshot { subjects }
}

/// Cursor over a trial that produces [`SnapshotStats`] at increasing calendar
/// times without re-copying event lists; used by the monitoring loop.
pub struct TrialCursor {
    entries: Vec<f64>,
    groups: Vec<GroupLabel>,
    events: Vec<Vec<f64>>,
    prefix_sums: Vec<Vec<f64>>,
    cap: f64,
}

impl TrialCursor {
    pub fn new(trial: &[SubjectPath], design: &TrialDesign) -> Self {
        let prefix_sums = trial
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                let mut p = Vec::with_capacity(s.events.len() + 1);
                p.push(0.0);
                for &e in &s.events {
                    acc += e;
                    p.push(acc);
                }
                p
            })
            .collect();
        TrialCursor {
            entries: trial.iter().map(|s| s.entry).collect(),
            groups: trial.iter().map(|s| s.group).collect(),
            events: trial.iter().map(|s| s.events.clone()).collect(),
            prefix_sums,
            cap: design.max_followup,
        }
    }

    /// Sufficient statistics of the snapshot at calendar time `t`.
    pub fn stats_at(&self, t: f64, blinded: bool) -> SnapshotStats {
        let mut subjects = Vec::with_capacity(self.entries.len());
        for i in 0..self.entries.len() {
            if self.entries[i] >= t {
                continue;
            }
            let exposure = (t - self.entries[i]).min(self.cap);
            if exposure <= 0.0 {
                continue;
            }
            let cut = self.events[i].partition_point(|&s| s <= exposure);
            subjects.push(SubjectStats {
                exposure,
                count: cut as u64,
                sum_times: self.prefix_sums[i][cut],
                group: if blinded { None } else { Some(self.groups[i]) },
            });
        }
        SnapshotStats::from_subjects(subjects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn design(n: u32) -> TrialDesign {
        TrialDesign {
            n_total: n,
            weights: AllocationWeights::equal(),
            recruitment_period: 2.0,
            max_followup: 2.0,
            study_duration: 4.0,
            monitor_start: 0.5,
            monitor_step: 1.0 / 52.0,
        }
    }

    fn params() -> ModelParams {
        ModelParams::new(0.55, -1.0, 0.5f64.ln(), 1.25).unwrap()
    }

    #[test]
    fn frailty_rejects_nonpositive_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(draw_frailty(0.0, &mut rng).is_err());
        assert!(draw_frailty(-1.0, &mut rng).is_err());
    }

    #[test]
    fn zero_intensity_gives_empty_event_list() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // beta = -60 makes Lambda_T underflow to ~0 after the frailty product.
        let p = ModelParams::new(-700.0, 0.0, 0.0, 1.0).unwrap();
        let events = simulate_subject(&p, GroupLabel::Control, 1.0, 2.0, &mut rng).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn instantaneous_accrual_puts_all_entries_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = design(50);
        d.recruitment_period = 0.0;
        let trial = simulate_trial(&d, &params(), &mut rng).unwrap();
        assert!(trial.iter().all(|s| s.entry == 0.0));
    }

    #[test]
    fn snapshot_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = design(40);
        let trial = simulate_trial(&d, &params(), &mut rng).unwrap();
        // Nobody enrolled at t = 0.
        assert!(snapshot(&trial, &d, 0.0, true).is_empty());
        // Administrative end: everyone fully exposed at the cap.
        let full = snapshot(&trial, &d, d.recruitment_period + d.max_followup, false);
        assert_eq!(full.len(), 40);
        assert!(full.subjects.iter().all(|s| s.exposure == d.max_followup));
    }

    #[test]
    fn snapshot_exposures_match_hand_computation() {
        let d = design(5);
        let trial = vec![
            SubjectPath { group: GroupLabel::Control, entry: 0.1, frailty: 1.0, events: vec![0.2, 1.9] },
            SubjectPath { group: GroupLabel::Treatment, entry: 1.0, frailty: 1.0, events: vec![0.5] },
            SubjectPath { group: GroupLabel::Control, entry: 1.45, frailty: 1.0, events: vec![] },
            SubjectPath { group: GroupLabel::Treatment, entry: 1.5, frailty: 1.0, events: vec![0.05] },
            SubjectPath { group: GroupLabel::Control, entry: 1.9, frailty: 1.0, events: vec![1.0] },
        ];
        let t = 1.5;
        let snap = snapshot(&trial, &d, t, false);
        // entry 1.5 and 1.9 excluded (entry >= t)
        assert_eq!(snap.len(), 3);
        assert_eq!(snap.subjects[0].exposure, (t - 0.1f64).min(2.0));
        assert_eq!(snap.subjects[0].event_times, vec![0.2]);
        assert_eq!(snap.subjects[1].exposure, 0.5);
        assert_eq!(snap.subjects[1].event_times, vec![0.5]);
        assert_eq!(snap.subjects[2].exposure, t - 1.45);
        // Late calendar time caps the first subject at max follow-up.
        let late = snapshot(&trial, &d, 3.0, false);
        assert_eq!(late.subjects[0].exposure, 2.0);
        assert_eq!(late.subjects[0].event_times, vec![0.2, 1.9]);
    }

    #[test]
    fn blinded_and_unblinded_snapshots_agree_on_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = design(30);
        let trial = simulate_trial(&d, &params(), &mut rng).unwrap();
        let open = snapshot(&trial, &d, 1.7, false);
        let blind = snapshot(&trial, &d, 1.7, true);
        assert_eq!(open.len(), blind.len());
        for (a, b) in open.subjects.iter().zip(&blind.subjects) {
            assert_eq!(a.exposure, b.exposure);
            assert_eq!(a.event_times, b.event_times);
            assert!(a.group.is_some());
            assert!(b.group.is_none());
        }
    }

    #[test]
    fn cursor_stats_match_snapshot_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = design(60);
        let trial = simulate_trial(&d, &params(), &mut rng).unwrap();
        let cursor = TrialCursor::new(&trial, &d);
        for &t in &[0.4, 0.9, 1.6, 2.5, 3.7, 4.0] {
            let direct = SnapshotStats::from(&snapshot(&trial, &d, t, true));
            let cursed = cursor.stats_at(t, true);
            assert_eq!(direct.subjects.len(), cursed.subjects.len());
            for (a, b) in direct.subjects.iter().zip(&cursed.subjects) {
                assert_eq!(a.exposure, b.exposure);
                assert_eq!(a.count, b.count);
                assert!((a.sum_times - b.sum_times).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_seed_reproduces_trial_bit_for_bit() {
        let d = design(80);
        let p = params();
        let t1 = simulate_trial(&d, &p, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let t2 = simulate_trial(&d, &p, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(t1, t2);
    }
}
