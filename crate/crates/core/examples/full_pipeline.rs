//! The `run` subcommand driven from code: load a TOML configuration, run every
//! pipeline and read the aggregate report back.
//!
//! cargo run --release --example full_pipeline -- [config.toml]

use stewardsim::cli::cmd_run;
use stewardsim::config::RunConfig;

fn main() -> stewardsim::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/small.toml").into());
    let mut config = RunConfig::load(&path)?;
    config.variants.exempt_pregnant = true;
    config.variants.machine_only = true;
    let bundle = cmd_run(&config)?;
    let r = &bundle.report;
    println!("\nwrote the bundle to {}", config.out.display());
    println!("AUC {:?}; follow-up share {:?}", r.auc, r.followup.as_ref().and_then(|f| f.share));
    if let Some(m) = &r.machine_only {
        println!("machine-only dominating thresholds: {:?}", m.dominating_k);
    }
    Ok(())
}
