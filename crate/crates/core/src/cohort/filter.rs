//! Initial-consultation filter: a test is kept only when the patient had no
//! other test and no prescription in the preceding four weeks.

use std::collections::{BTreeMap, HashMap};

use super::{Cohort, CohortMeta, Consultation, COHORT_SCHEMA_VERSION};
use crate::error::Result;

pub const BLOCKING_DAYS: u32 = 28;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Test(Consultation),
    Prescription,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub patient_id: String,
    pub day: u32,
    pub kind: EventKind,
}

/// Keeps tests with no test or prescription event for the same patient in
/// `(day - 28, day)`. Every test, kept or not, blocks later tests. Same-day
/// duplicate tests keep the first in input order.
pub fn filter_initial(events: Vec<RawEvent>, n_features: usize, horizon_days: u32) -> Result<Cohort> {
    let mut by_patient: HashMap<String, Vec<RawEvent>> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for e in events {
        let list = by_patient.entry(e.patient_id.clone()).or_insert_with(|| {
            order.push(e.patient_id.clone());
            Vec::new()
        });
        list.push(e);
    }
    let mut kept = Vec::new();
    for pid in order {
        let mut list = by_patient.remove(&pid).unwrap_or_default();
        list.sort_by_key(|e| e.day);
        let mut last_event: Option<u32> = None;
        let mut last_test_day: Option<u32> = None;
        let mut i = 0;
        while i < list.len() {
            let day = list[i].day;
            let blocked = last_event.is_some_and(|d| d + BLOCKING_DAYS > day && d < day);
            let mut j = i;
            let mut first_test = true;
            while j < list.len() && list[j].day == day {
                if let EventKind::Test(c) = &list[j].kind {
                    if !blocked && first_test && last_test_day != Some(day) {
                        let mut c = c.clone();
                        c.day = day;
                        c.patient_id = pid.clone();
                        kept.push(c);
                        last_test_day = Some(day);
                    }
                    first_test = false;
                }
                j += 1;
            }
            last_event = Some(day);
            i = j;
        }
    }
    let meta = CohortMeta {
        schema_version: COHORT_SCHEMA_VERSION,
        source: "events".to_string(),
        seed: None,
        config: None,
        n_features,
        horizon_days,
        calibration: BTreeMap::new(),
        strongest_feature: None,
        noise_features: Vec::new(),
    };
    Cohort::new(kept, BTreeMap::new(), meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test(pid: &str, day: u32) -> RawEvent {
        RawEvent {
            patient_id: pid.into(),
            day,
            kind: EventKind::Test(Consultation {
                patient_id: pid.into(),
                clinic_id: "c".into(),
                day,
                covariates: vec![0.0],
                y: false,
                rho_j: false,
                post_test_rx: false,
                pregnant: false,
            }),
        }
    }

    fn rx(pid: &str, day: u32) -> RawEvent {
        RawEvent {
            patient_id: pid.into(),
            day,
            kind: EventKind::Prescription,
        }
    }

    fn days(c: &Cohort) -> Vec<(String, u32)> {
        c.consultations
            .iter()
            .map(|c| (c.patient_id.clone(), c.day))
            .collect()
    }

    #[test]
    fn repeat_test_within_four_weeks_dropped() {
        let c = filter_initial(vec![test("a", 10), test("a", 20)], 1, 100).unwrap();
        assert_eq!(days(&c), vec![("a".into(), 10)]);
    }

    #[test]
    fn old_prescription_does_not_block() {
        let c = filter_initial(vec![rx("a", 5), test("a", 40)], 1, 100).unwrap();
        assert_eq!(days(&c), vec![("a".into(), 40)]);
    }

    #[test]
    fn single_test_kept() {
        let c = filter_initial(vec![test("z", 0)], 1, 100).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn recent_prescription_blocks() {
        let c = filter_initial(vec![rx("a", 5), test("a", 20), test("b", 20)], 1, 100).unwrap();
        assert_eq!(days(&c), vec![("b".into(), 20)]);
    }

    #[test]
    fn same_day_prescription_does_not_block() {
        let c = filter_initial(vec![test("a", 7), rx("a", 7)], 1, 100).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn exactly_four_weeks_is_outside_window() {
        let c = filter_initial(vec![test("a", 10), test("a", 38)], 1, 100).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn dropped_tests_still_block() {
        // 20 is dropped because of 10, and 40 is dropped because of 20.
        let c = filter_initial(vec![test("a", 10), test("a", 20), test("a", 40)], 1, 100).unwrap();
        assert_eq!(days(&c), vec![("a".into(), 10)]);
    }

    proptest! {
        #[test]
        fn filter_soundness(evts in prop::collection::vec((0u8..4, 0u32..200, any::<bool>()), 0..60)) {
            let events: Vec<RawEvent> = evts
                .iter()
                .map(|(p, d, is_test)| {
                    let pid = format!("p{p}");
                    if *is_test { test(&pid, *d) } else { rx(&pid, *d) }
                })
                .collect();
            let out = filter_initial(events.clone(), 1, 200).unwrap();
            for c in &out.consultations {
                for e in &events {
                    if e.patient_id == c.patient_id && e.day < c.day {
                        prop_assert!(e.day + BLOCKING_DAYS <= c.day);
                    }
                }
            }
            for a in &out.consultations {
                for b in &out.consultations {
                    if a.patient_id == b.patient_id && a.day < b.day {
                        prop_assert!(a.day + BLOCKING_DAYS <= b.day);
                    }
                }
            }
        }
    }
}
