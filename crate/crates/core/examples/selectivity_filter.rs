//! Reduce a raw stream of tests and prescriptions to initial consultations:
//! a test counts only when the patient had no test or prescription in the
//! four weeks before it.
//!
//! cargo run --example selectivity_filter

use stewardsim::cohort::{filter_initial, Consultation, EventKind, RawEvent};

fn test(patient: &str, day: u32, y: bool) -> RawEvent {
    RawEvent {
        patient_id: patient.into(),
        day,
        kind: EventKind::Test(Consultation {
            patient_id: patient.into(),
            clinic_id: "C1".into(),
            day,
            covariates: vec![0.0],
            y,
            rho_j: false,
            post_test_rx: false,
            pregnant: false,
        }),
    }
}

fn rx(patient: &str, day: u32) -> RawEvent {
    RawEvent { patient_id: patient.into(), day, kind: EventKind::Prescription }
}

fn main() -> stewardsim::Result<()> {
    let events = vec![
        test("A", 10, true),
        test("A", 20, false), // repeat test 10 days later: dropped
        test("A", 60, false), // more than four weeks after the last event: kept
        rx("B", 5),
        test("B", 12, true), // prescription a week earlier: dropped
        rx("C", 1),
        test("C", 29, false), // exactly 28 days later: kept
        test("D", 100, true),
    ];
    let n_events = events.len();
    let cohort = filter_initial(events, 1, 365)?;
    println!("{n_events} raw events -> {} initial consultations", cohort.len());
    for c in &cohort.consultations {
        println!("  patient {} day {:>3} y={}", c.patient_id, c.day, c.y as u8);
    }
    Ok(())
}
