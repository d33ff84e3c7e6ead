//! Generate a desk-size synthetic cohort and write it in the CSV layout that
//! `ingest_csv` reads back.
//!
//! cargo run --release --example generate_cohort -- [seed] [out_dir]

use stewardsim::cohort::{generate, ingest_csv, ColumnMap, CohortConfig};

fn main() -> stewardsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "out-example".into()));

    let config = CohortConfig::default();
    let cohort = generate(&config, seed)?;
    println!("{} consultations over {} days in {} clinics", cohort.len(), config.horizon_days, cohort.clinics.len());
    println!(
        "positive rate {:.3}  prescription rate {:.3}  pregnant share {:.3}",
        cohort.positive_rate(),
        cohort.prescription_rate(),
        cohort.pregnant_share()
    );
    for (k, v) in &cohort.meta.calibration {
        println!("  {k:<18} {v:.4}");
    }

    let path = stewardsim::report::write_file(&out, "cohort.csv", &cohort.to_csv_string()?)?;
    let back = ingest_csv(&path, &ColumnMap { horizon_days: Some(config.horizon_days), ..ColumnMap::default() })?;
    assert_eq!(back.consultations, cohort.consultations);
    println!("wrote and re-read {}", path.display());
    Ok(())
}
