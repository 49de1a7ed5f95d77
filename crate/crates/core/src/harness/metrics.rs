//! Summary metrics over a run's logs.

use serde::Serialize;

use super::runner::StepLog;

/// Half-open tick range `[start, end)` during which the arm touches something.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Episode {
    pub start: usize,
    pub end: usize,
}

/// Maximal runs of ticks with at least one true contact.
pub fn contact_episodes(logs: &[StepLog]) -> Vec<Episode> {
    let mut episodes = Vec::new();
    let mut open: Option<usize> = None;
    for (i, log) in logs.iter().enumerate() {
        match (log.true_contacts > 0, open) {
            (true, None) => open = Some(i),
            (false, Some(start)) => {
                episodes.push(Episode { start, end: i });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        episodes.push(Episode {
            start,
            end: logs.len(),
        });
    }
    episodes
}

/// Largest true contact force more than `settle` seconds into any contact episode.
pub fn steady_peak_force(logs: &[StepLog], settle: f64) -> f64 {
    contact_episodes(logs)
        .iter()
        .flat_map(|ep| {
            let t0 = logs[ep.start].time;
            logs[ep.start..ep.end]
                .iter()
                .filter(move |l| l.time - t0 >= settle)
        })
        .fold(0.0, |m, l| m.max(l.true_force_max))
}

/// Largest `||v_q||` with `start <= time <= end`.
pub fn peak_velocity_in(logs: &[StepLog], window: [f64; 2]) -> f64 {
    logs.iter()
        .filter(|l| l.time >= window[0] && l.time <= window[1])
        .fold(0.0, |m, l| m.max(l.v_q_norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunMetrics {
    pub ticks: usize,
    pub peak_force: f64,
    /// Mean of the largest contact force over in-contact ticks.
    pub mean_contact_force: f64,
    pub tracking_rmse: f64,
    pub peak_velocity: f64,
    pub peak_separation_velocity: f64,
    pub contact_toggles: usize,
    pub mean_w: f64,
    pub max_w: f64,
    pub min_e_lambda: f64,
    pub max_e_lambda: f64,
    pub max_kkt_residual: f64,
    pub max_projection_gap: f64,
    /// Largest `release_drop - release_bound`; non-positive when every drop is within bound.
    pub max_release_excess: f64,
    pub min_signed_distance: f64,
    pub fault_ticks: usize,
}

fn finite_max(acc: f64, v: f64) -> f64 {
    if v.is_finite() {
        acc.max(v)
    } else {
        acc
    }
}

/// `separation_window` defaults to the whole run.
pub fn summarize(logs: &[StepLog], separation_window: Option<[f64; 2]>) -> RunMetrics {
    let n = logs.len().max(1) as f64;
    let in_contact: Vec<&StepLog> = logs.iter().filter(|l| l.true_contacts > 0).collect();
    let toggles = logs
        .windows(2)
        .filter(|w| (w[0].true_contacts > 0) != (w[1].true_contacts > 0))
        .count();
    let window = separation_window.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
    RunMetrics {
        ticks: logs.len(),
        peak_force: logs.iter().fold(0.0, |m, l| m.max(l.true_force_max)),
        mean_contact_force: if in_contact.is_empty() {
            0.0
        } else {
            in_contact.iter().map(|l| l.true_force_max).sum::<f64>() / in_contact.len() as f64
        },
        tracking_rmse: (logs.iter().map(|l| l.tracking_error.powi(2)).sum::<f64>() / n).sqrt(),
        peak_velocity: logs.iter().fold(0.0, |m, l| m.max(l.v_q_norm)),
        peak_separation_velocity: peak_velocity_in(logs, window),
        contact_toggles: toggles,
        mean_w: logs.iter().map(|l| l.w).sum::<f64>() / n,
        max_w: logs.iter().fold(0.0, |m, l| m.max(l.w)),
        min_e_lambda: logs.iter().fold(f64::INFINITY, |m, l| m.min(l.e_lambda)),
        max_e_lambda: logs
            .iter()
            .fold(f64::NEG_INFINITY, |m, l| m.max(l.e_lambda)),
        max_kkt_residual: logs.iter().map(|l| l.kkt_residual).fold(0.0, finite_max),
        max_projection_gap: logs.iter().fold(0.0, |m, l| m.max(l.projection_gap)),
        max_release_excess: logs.iter().fold(f64::NEG_INFINITY, |m, l| {
            m.max(l.release_drop - l.release_bound)
        }),
        min_signed_distance: logs
            .iter()
            .fold(f64::INFINITY, |m, l| m.min(l.min_signed_distance)),
        fault_ticks: logs.iter().filter(|l| l.fault).count(),
    }
}

/// Min / mean / max of a metric across repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Envelope {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len().max(1) as f64;
        Self {
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / n,
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-tick envelope of a logged series across runs, truncated to the shortest run.
pub fn series_envelope(runs: &[&[StepLog]], field: impl Fn(&StepLog) -> f64) -> Vec<Envelope> {
    let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| Envelope::of(runs.iter().map(|r| field(&r[i]))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::SolveStatus;

    fn log(tick: usize, contacts: usize, force: f64, v: f64) -> StepLog {
        StepLog {
            tick,
            time: (tick + 1) as f64 * 0.1,
            q: vec![0.0],
            q_cmd: vec![0.0],
            q_ref: vec![0.0],
            true_force_max: force,
            true_force_total: force,
            true_contacts: contacts,
            est_force_max: 0.0,
            est_contacts: 0,
            pred_force_max: 0.0,
            pred_contacts: 0,
            e_lambda: 0.5,
            w: 1.0,
            tracking_error: 2.0,
            v_q_norm: v,
            solver_status: SolveStatus::Direct,
            solver_iterations: 0,
            kkt_residual: f64::NAN,
            fault: false,
            projection_gap: 0.0,
            release_drop: 0.0,
            release_bound: 0.0,
            min_signed_distance: 0.1,
            sim_iterations: 1,
        }
    }

    #[test]
    fn episodes_and_steady_force() {
        let logs: Vec<StepLog> = [
            (0, 0.0),
            (1, 30.0),
            (1, 12.0),
            (1, 11.0),
            (0, 0.0),
            (1, 40.0),
            (1, 9.0),
        ]
        .iter()
        .enumerate()
        .map(|(i, &(c, f))| log(i, c, f, 0.0))
        .collect();
        let eps = contact_episodes(&logs);
        assert_eq!(
            eps,
            vec![Episode { start: 1, end: 4 }, Episode { start: 5, end: 7 }]
        );
        assert_eq!(steady_peak_force(&logs, 0.15), 11.0);
        assert_eq!(steady_peak_force(&logs, 0.05), 12.0);
        let m = summarize(&logs, None);
        assert_eq!(m.peak_force, 40.0);
        assert_eq!(m.contact_toggles, 3);
        assert_eq!(m.tracking_rmse, 2.0);
        assert_eq!(m.max_kkt_residual, 0.0);
    }

    #[test]
    fn separation_window_and_envelopes() {
        let logs: Vec<StepLog> = (0..10).map(|i| log(i, 0, 0.0, i as f64)).collect();
        assert_eq!(peak_velocity_in(&logs, [0.2, 0.5]), 4.0);
        let env = Envelope::of([1.0, 2.0, 6.0]);
        assert_eq!((env.min, env.mean, env.max), (1.0, 3.0, 6.0));
        let a = &logs[..3];
        let b = &logs[..5];
        let series = series_envelope(&[a, b], |l| l.v_q_norm);
        assert_eq!(series.len(), 3);
    }
}
