//! Evaluate a two-threshold rule against physician choices on a hand-made
//! sample, with and without the pregnancy exemption, and score it with the
//! policy-maker payoff.
//!
//! cargo run --example policy_evaluation

use stewardsim::policy::{
    evaluate, evaluate_exempt, evaluate_machine_only, evaluate_payoff_gain, PolicyParams, PolicyRecord, Preferences,
};

fn main() -> stewardsim::Result<()> {
    // (risk, physician prescribed, bacterial, pregnant)
    let sample = [
        (0.05, true, false, false),
        (0.12, true, false, true),
        (0.20, false, false, false),
        (0.35, true, true, false),
        (0.48, false, true, false),
        (0.55, false, false, false),
        (0.71, false, true, true),
        (0.86, false, true, false),
        (0.93, true, true, false),
    ];
    let records: Vec<PolicyRecord> = sample
        .iter()
        .map(|&(m, rho_j, y, pregnant)| PolicyRecord { m, rho_j, y, pregnant })
        .collect();

    let params = PolicyParams::new(0.15, 0.80)?;
    let prefs = Preferences::new(2.0, 1.0)?;
    for (label, o) in [
        ("identity", evaluate(&records, PolicyParams::IDENTITY)?),
        ("rule (0.15, 0.80)", evaluate(&records, params)?),
        ("rule, pregnant exempt", evaluate_exempt(&records, params)?),
        ("machine only k=0.5", evaluate_machine_only(&records, 0.5)?),
    ] {
        println!(
            "{label:<22} d_rho {:+}  d_buti {:+}  changed {}  pct_rho {:?}  pct_buti {:?}",
            o.delta_rho, o.delta_buti, o.changed, o.pct_delta_rho, o.pct_delta_buti
        );
    }
    println!("payoff gain with a=2, b=1: {:+.1}", evaluate_payoff_gain(&records, params, prefs)?);
    Ok(())
}
