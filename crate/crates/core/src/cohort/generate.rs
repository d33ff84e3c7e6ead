//! Latent-factor generator for synthetic consultation cohorts.
//!
//! Patient risk is `sigmoid(intercept + beta . z + season(day) + trend(day))`
//! over a latent factor vector `z`. Covariates are noisy, quantized linear
//! proxies of `z` (plus pure-noise columns). Physicians see the true risk
//! logit, a clinic-weighted private signal `g = y + N(0, sigma_g)` and their
//! own decision noise, and prescribe when that sum clears the clinic's
//! leniency threshold.
//!
//! The intercept, the global prescribing threshold and the negative-result
//! follow-up probability are solved from the drawn population so the cohort
//! hits its configured marginal rates.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Clinic, Cohort, CohortMeta, Consultation, COHORT_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::seed::{self, stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_consultations: usize,
    pub n_features: usize,
    pub n_noise_features: usize,
    pub n_clinics: usize,
    pub horizon_days: u32,
    pub n_latent: usize,

    pub target_positive_rate: f64,
    pub target_rx_rate: f64,
    pub target_pregnant_share: f64,
    pub target_followup_share: f64,

    /// Standard deviation of `beta . z`. Zero gives covariates with no signal.
    pub risk_scale: f64,
    /// Geometric decay of factor weights; factor 0 is the strongest.
    pub factor_decay: f64,
    /// Noise sd of the first proxy of each factor.
    pub primary_noise: f64,
    /// Noise sd of the remaining proxies.
    pub secondary_noise: f64,
    pub covariate_resolution: f64,

    pub season_amplitude: f64,
    pub trend_per_year: f64,
    /// Ratio of consultation volume at the end of the horizon to the start.
    pub volume_growth: f64,
    pub pregnancy_risk_shift: f64,
    pub pregnancy_rx_shift: f64,

    pub leniency_sd: f64,
    pub expertise_mean: f64,
    pub expertise_sd: f64,
    pub private_signal_sd: f64,
    pub private_signal_spread: f64,
    pub physician_noise_sd: f64,

    /// Follow-up prescription probability after a positive result when untreated.
    pub followup_positive: f64,
    /// Share of patients, by latent risk, treated as "high risk" when
    /// calibrating the follow-up probability.
    pub high_risk_share: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_consultations: 20_000,
            n_features: 60,
            n_noise_features: 10,
            n_clinics: 120,
            horizon_days: 1080,
            n_latent: 8,
            target_positive_rate: 0.33,
            target_rx_rate: 0.31,
            target_pregnant_share: 0.28,
            target_followup_share: 0.70,
            risk_scale: 1.1,
            factor_decay: 0.75,
            primary_noise: 0.5,
            secondary_noise: 1.0,
            covariate_resolution: 0.1,
            season_amplitude: 0.15,
            trend_per_year: 0.05,
            volume_growth: 1.3,
            pregnancy_risk_shift: 0.2,
            pregnancy_rx_shift: 0.3,
            leniency_sd: 1.2,
            expertise_mean: 1.8,
            expertise_sd: 1.0,
            private_signal_sd: 1.0,
            private_signal_spread: 0.3,
            physician_noise_sd: 1.5,
            followup_positive: 0.85,
            high_risk_share: 0.2,
        }
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn check_nonneg(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be non-negative, got {v}")))
    }
}

fn check_rate(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in (0, 1), got {v}")))
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_consultations == 0 {
            return Err(Error::config("n_consultations", "must be positive"));
        }
        if self.n_features < 5 {
            return Err(Error::config("n_features", "must be at least 5"));
        }
        if self.n_noise_features >= self.n_features {
            return Err(Error::config(
                "n_noise_features",
                "must leave at least one informative feature",
            ));
        }
        if self.n_clinics == 0 {
            return Err(Error::config("n_clinics", "must be positive"));
        }
        if self.horizon_days == 0 {
            return Err(Error::config("horizon_days", "must be positive"));
        }
        if self.n_latent == 0 || self.n_latent > self.n_features - self.n_noise_features {
            return Err(Error::config(
                "n_latent",
                "must be positive and at most the number of informative features",
            ));
        }
        check_rate("target_positive_rate", self.target_positive_rate)?;
        check_rate("target_rx_rate", self.target_rx_rate)?;
        check_rate("target_pregnant_share", self.target_pregnant_share)?;
        check_rate("target_followup_share", self.target_followup_share)?;
        check_rate("factor_decay", self.factor_decay)?;
        check_rate("high_risk_share", self.high_risk_share)?;
        if !(0.0..=1.0).contains(&self.followup_positive) {
            return Err(Error::config("followup_positive", "must lie in [0, 1]"));
        }
        check_nonneg("risk_scale", self.risk_scale)?;
        check_positive("primary_noise", self.primary_noise)?;
        check_positive("secondary_noise", self.secondary_noise)?;
        check_positive("covariate_resolution", self.covariate_resolution)?;
        check_positive("volume_growth", self.volume_growth)?;
        check_positive("private_signal_sd", self.private_signal_sd)?;
        check_positive("physician_noise_sd", self.physician_noise_sd)?;
        check_nonneg("leniency_sd", self.leniency_sd)?;
        check_nonneg("expertise_sd", self.expertise_sd)?;
        check_nonneg("private_signal_spread", self.private_signal_spread)?;
        for (field, v) in [
            ("season_amplitude", self.season_amplitude),
            ("trend_per_year", self.trend_per_year),
            ("pregnancy_risk_shift", self.pregnancy_risk_shift),
            ("pregnancy_rx_shift", self.pregnancy_rx_shift),
            ("expertise_mean", self.expertise_mean),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        Ok(())
    }

    fn n_informative(&self) -> usize {
        self.n_features - self.n_noise_features
    }

    /// Factor weights scaled so that `sd(beta . z) = risk_scale`.
    fn factor_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_latent)
            .map(|k| self.factor_decay.powi(k as i32))
            .collect();
        let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
        raw.iter().map(|w| w * self.risk_scale / norm).collect()
    }
}

struct PatientDraw {
    day: u32,
    clinic: usize,
    pregnant: bool,
    covariates: Vec<f64>,
    /// Risk logit without the intercept.
    linear: f64,
    u_outcome: f64,
    signal_noise: f64,
    decision_noise: f64,
    u_followup: f64,
}

fn std_normal(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn quantize(v: f64, steps_per_unit: f64) -> f64 {
    (v * steps_per_unit).round() / steps_per_unit
}

fn draw_clinics(cfg: &CohortConfig, seed: u64) -> Result<(Vec<Clinic>, Vec<f64>)> {
    let physicians = Poisson::new(1.5).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut clinics = Vec::with_capacity(cfg.n_clinics);
    let mut weights = Vec::with_capacity(cfg.n_clinics);
    for c in 0..cfg.n_clinics {
        let mut rng = seed::rng(seed, &[stage::CLINIC, c as u64]);
        let n_physicians = 1.0 + physicians.sample(&mut rng);
        let z_age = std_normal(&mut rng);
        let z_ppp = std_normal(&mut rng);
        let z_tests = std_normal(&mut rng);
        let share_female: f64 = rng.random();
        let mean_age = 52.0 + 7.0 * z_age;
        let patients_per_physician = (40.0 + 12.0 * z_ppp).max(5.0);
        let tests_per_patient = (1.3 + 0.2 * z_tests).max(1.0);
        let z_phys = (n_physicians - 2.5) / 1.2;
        // Expertise loads on clinic size, patient exposure and testing intensity
        // and falls with physician age.
        let systematic = 0.35 * z_ppp - 0.35 * z_age + 0.2 * z_tests + 0.15 * z_phys;
        let idio = std_normal(&mut rng);
        let expertise =
            (cfg.expertise_mean + cfg.expertise_sd * (systematic + 0.8 * idio)).max(0.0);
        let leniency = cfg.leniency_sd * std_normal(&mut rng);
        weights.push(n_physicians * patients_per_physician);
        clinics.push(Clinic {
            clinic_id: format!("C{c:04}"),
            n_physicians,
            mean_age,
            share_female,
            patients_per_physician,
            tests_per_patient,
            leniency,
            expertise,
        });
    }
    Ok((clinics, weights))
}

fn draw_patient(
    cfg: &CohortConfig,
    seed: u64,
    i: usize,
    beta: &[f64],
    clinic_cdf: &[f64],
) -> PatientDraw {
    let mut rng = seed::rng(seed, &[stage::PATIENT, i as u64]);
    let horizon = cfg.horizon_days as f64;

    let u: f64 = rng.random();
    let b = cfg.volume_growth - 1.0;
    let frac = if b.abs() < 1e-12 {
        u
    } else {
        (-1.0 + (1.0 + 2.0 * b * u * (1.0 + b / 2.0)).sqrt()) / b
    };
    let day = ((frac * horizon).floor() as u32).min(cfg.horizon_days - 1);

    let u_clinic: f64 = rng.random::<f64>() * clinic_cdf[clinic_cdf.len() - 1];
    let clinic = clinic_cdf
        .partition_point(|&c| c <= u_clinic)
        .min(clinic_cdf.len() - 1);

    let pregnant = rng.random::<f64>() < cfg.target_pregnant_share;

    let z: Vec<f64> = (0..cfg.n_latent).map(|_| std_normal(&mut rng)).collect();
    let steps = 1.0 / cfg.covariate_resolution;
    let n_inf = cfg.n_informative();
    let mut covariates = Vec::with_capacity(cfg.n_features);
    for j in 0..cfg.n_features {
        let v = if j < n_inf {
            let k = j % cfg.n_latent;
            let sd = if j < cfg.n_latent {
                cfg.primary_noise
            } else {
                cfg.secondary_noise
            };
            z[k] + sd * std_normal(&mut rng)
        } else {
            std_normal(&mut rng)
        };
        covariates.push(quantize(v, steps));
    }

    let t = day as f64;
    let season = cfg.season_amplitude * (2.0 * std::f64::consts::PI * t / 360.0).sin();
    let trend = cfg.trend_per_year * t / 360.0;
    let linear = beta.iter().zip(&z).map(|(b, z)| b * z).sum::<f64>()
        + season
        + trend
        + if pregnant { cfg.pregnancy_risk_shift } else { 0.0 };

    PatientDraw {
        day,
        clinic,
        pregnant,
        covariates,
        linear,
        u_outcome: rng.random(),
        signal_noise: std_normal(&mut rng),
        decision_noise: std_normal(&mut rng),
        u_followup: rng.random(),
    }
}

/// Intercept making the mean latent risk equal `target`.
fn solve_intercept(linear: &[f64], target: f64) -> f64 {
    let mean_risk = |b0: f64| linear.iter().map(|l| sigmoid(l + b0)).sum::<f64>() / linear.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_risk(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Value `t` such that the share of `values` strictly above `t` is as close to
/// `target` as the sample allows.
fn upper_quantile_threshold(values: &[f64], target: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((1.0 - target) * n as f64).round() as usize;
    if k == 0 {
        sorted[0] - 1.0
    } else if k >= n {
        sorted[n - 1]
    } else {
        0.5 * (sorted[k - 1] + sorted[k])
    }
}

pub fn generate(config: &CohortConfig, seed: u64) -> Result<Cohort> {
    config.validate()?;
    let beta = config.factor_weights();
    let (clinics, weights) = draw_clinics(config, seed)?;
    let clinic_cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let draws: Vec<PatientDraw> = (0..config.n_consultations)
        .map(|i| draw_patient(config, seed, i, &beta, &clinic_cdf))
        .collect();

    let linear: Vec<f64> = draws.iter().map(|d| d.linear).collect();
    let intercept = solve_intercept(&linear, config.target_positive_rate);
    let mut sg_rng = seed::rng(seed, &[stage::STRUCTURE]);
    let signal_sd: Vec<f64> = (0..config.n_clinics)
        .map(|_| config.private_signal_sd * (config.private_signal_spread * std_normal(&mut sg_rng)).exp())
        .collect();

    let risk: Vec<f64> = linear.iter().map(|l| sigmoid(l + intercept)).collect();
    let y: Vec<bool> = draws
        .iter()
        .zip(&risk)
        .map(|(d, r)| d.u_outcome < *r)
        .collect();

    // Physician propensity net of clinic leniency; prescribing iff it clears the global threshold.
    let propensity: Vec<f64> = draws
        .iter()
        .zip(&risk)
        .zip(&y)
        .map(|((d, r), &yi)| {
            let c = &clinics[d.clinic];
            let logit = (r / (1.0 - r)).ln();
            let signal = if yi { 1.0 } else { 0.0 } + signal_sd[d.clinic] * d.signal_noise;
            logit + c.expertise * signal + config.physician_noise_sd * d.decision_noise
                + if d.pregnant { config.pregnancy_rx_shift } else { 0.0 }
                + c.leniency
        })
        .collect();
    let rx_threshold = upper_quantile_threshold(&propensity, config.target_rx_rate);
    let rho: Vec<bool> = propensity.iter().map(|p| *p > rx_threshold).collect();

    // Negative-result follow-up probability so that untreated high-risk patients
    // receive a follow-up prescription at the target share.
    let high_cut = upper_quantile_threshold(&risk, config.high_risk_share);
    let (mut n_high, mut n_high_pos) = (0usize, 0usize);
    for i in 0..draws.len() {
        if risk[i] > high_cut && !rho[i] {
            n_high += 1;
            n_high_pos += y[i] as usize;
        }
    }
    let followup_negative = if n_high == 0 || n_high_pos == n_high {
        config.target_followup_share
    } else {
        let pos = n_high_pos as f64 / n_high as f64;
        ((config.target_followup_share - config.followup_positive * pos) / (1.0 - pos)).clamp(0.0, 1.0)
    };

    let consultations: Vec<Consultation> = draws
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let post_test_rx = if rho[i] {
                y[i]
            } else if y[i] {
                d.u_followup < config.followup_positive
            } else {
                d.u_followup < followup_negative
            };
            Consultation {
                patient_id: format!("P{i:07}"),
                clinic_id: clinics[d.clinic].clinic_id.clone(),
                day: d.day,
                covariates: d.covariates,
                y: y[i],
                rho_j: rho[i],
                post_test_rx,
                pregnant: d.pregnant,
            }
        })
        .collect();

    // Realised share among the same high-risk untreated group.
    let followed = (0..consultations.len())
        .filter(|&i| risk[i] > high_cut && !rho[i] && consultations[i].post_test_rx)
        .count();

    let mut calibration = BTreeMap::new();
    if n_high > 0 {
        calibration.insert("followup_share".to_string(), followed as f64 / n_high as f64);
    }
    calibration.insert("risk_intercept".to_string(), intercept);
    calibration.insert("rx_threshold".to_string(), rx_threshold);
    calibration.insert("followup_negative".to_string(), followup_negative);

    let meta = CohortMeta {
        schema_version: COHORT_SCHEMA_VERSION,
        source: "generated".to_string(),
        seed: Some(seed),
        config: Some(config.clone()),
        n_features: config.n_features,
        horizon_days: config.horizon_days,
        calibration,
        strongest_feature: (config.risk_scale > 0.0).then_some(0),
        noise_features: (config.n_informative()..config.n_features).collect(),
    };
    let clinics = clinics
        .into_iter()
        .map(|c| (c.clinic_id.clone(), c))
        .collect();
    Cohort::new(consultations, clinics, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CohortConfig {
        CohortConfig {
            n_consultations: 3000,
            n_clinics: 30,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = generate(&small(), 11).unwrap();
        let b = generate(&small(), 11).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        let c = generate(&small(), 12).unwrap();
        assert_ne!(a.to_csv_string().unwrap(), c.to_csv_string().unwrap());
    }

    #[test]
    fn invariants_hold() {
        let cfg = small();
        let cohort = generate(&cfg, 3).unwrap();
        assert_eq!(cohort.len(), cfg.n_consultations);
        assert!(cohort.consultations.windows(2).all(|w| w[0].day <= w[1].day));
        for c in &cohort.consultations {
            assert_eq!(c.covariates.len(), cfg.n_features);
            assert!(c.day < cfg.horizon_days);
        }
        assert!((cohort.prescription_rate() - cfg.target_rx_rate).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_targets() {
        let cfg = CohortConfig {
            target_positive_rate: 1.5,
            ..small()
        };
        match generate(&cfg, 1) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "target_positive_rate"),
            other => panic!("expected config error, got {other:?}"),
        }
        let cfg = CohortConfig {
            n_features: 4,
            n_noise_features: 0,
            n_latent: 2,
            ..small()
        };
        assert!(matches!(generate(&cfg, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn covariates_are_quantized() {
        let cohort = generate(&small(), 5).unwrap();
        for c in cohort.consultations.iter().take(50) {
            for v in &c.covariates {
                assert_eq!(*v, quantize(*v, 10.0));
            }
        }
    }

    #[test]
    fn volume_grows_over_time() {
        let cohort = generate(&small(), 9).unwrap();
        let half = cohort.lower_bound(540);
        assert!(half < cohort.len() / 2);
    }
}
