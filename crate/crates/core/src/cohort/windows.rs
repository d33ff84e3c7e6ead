use std::ops::Range;

use super::Cohort;
use crate::error::{Error, Result};
use crate::rolling::Schedule;

/// One evaluation period and the training data available before it.
///
/// Ranges index into `Cohort::consultations`, which is sorted by day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    /// 1-based, chronological.
    pub id: usize,
    pub eval_start: u32,
    pub eval_end: u32,
    pub train: Range<usize>,
    pub eval: Range<usize>,
}

impl Window {
    pub fn is_empty(&self) -> bool {
        self.eval.is_empty()
    }
}

pub fn split_windows(cohort: &Cohort, schedule: &Schedule) -> Result<Vec<Window>> {
    schedule.validate()?;
    let horizon = cohort.meta.horizon_days;
    if schedule.eval_start_day >= horizon {
        return Err(Error::config(
            "eval_start_day",
            format!("{} is not inside the horizon of {horizon} days", schedule.eval_start_day),
        ));
    }
    let n_windows = schedule.window_count(horizon);
    let end = schedule.eval_start_day as u64 + n_windows as u64 * schedule.tau_days as u64;
    if n_windows == 0 || end > horizon as u64 {
        return Err(Error::config(
            "n_windows",
            format!("{n_windows} windows of {} days from day {} exceed the horizon of {horizon} days",
                schedule.tau_days, schedule.eval_start_day),
        ));
    }
    let windows = (0..n_windows)
        .map(|w| {
            let eval_start = schedule.eval_start_day + w as u32 * schedule.tau_days;
            let eval_end = eval_start + schedule.tau_days;
            let train_from = schedule
                .train_days
                .map_or(0, |len| cohort.lower_bound(eval_start.saturating_sub(len)));
            let lo = cohort.lower_bound(eval_start);
            let hi = cohort.lower_bound(eval_end);
            let window = Window {
                id: w + 1,
                eval_start,
                eval_end,
                train: train_from..lo,
                eval: lo..hi,
            };
            if window.is_empty() {
                log::warn!("window {} (days {eval_start}..{eval_end}) has no consultations", w + 1);
            }
            window
        })
        .collect();
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate, CohortConfig};

    fn cohort() -> Cohort {
        generate(
            &CohortConfig {
                n_consultations: 2000,
                n_clinics: 20,
                ..CohortConfig::default()
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn twenty_four_monthly_windows() {
        let c = cohort();
        let schedule = Schedule {
            eval_start_day: 360,
            n_windows: None,
            ..Schedule::default()
        };
        let ws = split_windows(&c, &schedule).unwrap();
        assert_eq!(ws.len(), 24);
        for pair in ws.windows(2) {
            assert!(pair[1].train.end >= pair[0].train.end);
            assert_eq!(pair[1].train.start, pair[0].train.start);
            assert_eq!(pair[0].eval.end, pair[1].eval.start);
            assert_eq!(pair[0].eval_end, pair[1].eval_start);
        }
        for w in &ws {
            let max_train = c.consultations[w.train.clone()].iter().map(|x| x.day).max().unwrap();
            let min_eval = c.consultations[w.eval.clone()].iter().map(|x| x.day).min().unwrap();
            assert!(max_train < min_eval);
            assert!(c.consultations[w.eval.clone()]
                .iter()
                .all(|x| x.day >= w.eval_start && x.day < w.eval_end));
        }
    }

    #[test]
    fn exceeding_horizon_is_config_error() {
        let c = cohort();
        let schedule = Schedule {
            eval_start_day: 360,
            n_windows: Some(25),
            ..Schedule::default()
        };
        assert!(matches!(split_windows(&c, &schedule), Err(Error::Config { .. })));
    }

    #[test]
    fn empty_window_flagged() {
        let mut c = cohort();
        c.consultations.retain(|x| !(390..420).contains(&x.day));
        let ws = split_windows(&c, &Schedule::default()).unwrap();
        let w = ws.iter().find(|w| w.eval_start == 390).unwrap();
        assert!(w.is_empty());
        assert_eq!(ws.iter().filter(|w| w.is_empty()).count(), 1);
    }

    #[test]
    fn fixed_length_training() {
        let c = cohort();
        let schedule = Schedule {
            train_days: Some(360),
            ..Schedule::default()
        };
        let ws = split_windows(&c, &schedule).unwrap();
        let last = ws.last().unwrap();
        assert!(c.consultations[last.train.clone()]
            .iter()
            .all(|x| x.day >= last.eval_start - 360));
    }
}
