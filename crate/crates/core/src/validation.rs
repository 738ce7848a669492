//! Monte Carlo check of the analytic SNR: random patterns, Strategy #n
//! wiring over the whole pattern, threshold-free simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, DetectorParams};
use crate::error::{param, Result};
use crate::lif::{
    measure_snr, measure_snr_traced, select_afferents, LifConfig, MeasurementProtocol, SnrMeasurement, Welford,
};
use crate::rng::domain_stream;
use crate::spikes::{freeze_pattern, FrozenPattern, JitterConfig, PoissonConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSetup {
    pub n_afferents: usize,
    /// Hz
    pub rate: f64,
    /// L = Δt, ms
    pub pattern_duration: f64,
    /// T, ms
    pub jitter_half_width: f64,
    pub n_patterns: usize,
    pub n_presentations: usize,
    /// ms
    pub period: f64,
    /// ms
    pub dt_bin: f64,
    pub seed: u64,
}

impl Default for ValidationSetup {
    fn default() -> Self {
        Self {
            n_afferents: 10_000,
            rate: 5.0,
            pattern_duration: 20.0,
            jitter_half_width: 0.0,
            n_patterns: 100,
            n_presentations: 1000,
            period: 400.0,
            dt_bin: 0.1,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub tau: f64,
    pub strategy: u32,
    pub snr_analytic: f64,
    pub snr_sim_mean: f64,
    /// standard deviation across patterns
    pub snr_sim_sd: f64,
    /// standard error of the mean across patterns
    pub snr_sim_se: f64,
    pub n_patterns: usize,
}

impl ValidationRow {
    /// Agreement within three standard errors or `rel_tol` of the analytic
    /// value, whichever is wider.
    pub fn agrees(&self, rel_tol: f64) -> bool {
        let tol = (3.0 * self.snr_sim_se).max(rel_tol * self.snr_analytic.abs());
        (self.snr_sim_mean - self.snr_analytic).abs() <= tol
    }
}

/// Pattern `index` of the setup and the protocol used to measure it.
pub fn pattern_inputs(setup: &ValidationSetup, index: u64) -> Result<(FrozenPattern, MeasurementProtocol)> {
    let pattern_cfg = PoissonConfig::new(setup.n_afferents, setup.rate, domain_stream(setup.seed, "pattern", index))?;
    let pattern = freeze_pattern(&pattern_cfg, setup.pattern_duration)?;
    let protocol = MeasurementProtocol {
        n_presentations: setup.n_presentations,
        period: setup.period,
        rate: setup.rate,
        jitter: JitterConfig::new(setup.jitter_half_width, domain_stream(setup.seed, "jitter", index))?,
        noise_seed: domain_stream(setup.seed, "noise", index),
    };
    Ok((pattern, protocol))
}

/// Full measurement of pattern `index` for one (strategy, τ), optionally
/// recording the potential at every bin.
pub fn measure_pattern(
    setup: &ValidationSetup,
    index: u64,
    strategy: u32,
    tau: f64,
    trace: Option<&mut Vec<f32>>,
) -> Result<SnrMeasurement> {
    let (pattern, protocol) = pattern_inputs(setup, index)?;
    let weights = select_afferents(&pattern, strategy, 0.0, setup.pattern_duration)?;
    let config = LifConfig { dt_bin: setup.dt_bin, ..LifConfig::threshold_free(tau) };
    measure_snr_traced(&pattern, &weights, &config, &protocol, trace)
}

/// Simulated SNR of one pattern for every (strategy, τ) pair, strategy-major.
pub fn pattern_snrs(setup: &ValidationSetup, index: u64, strategies: &[u32], taus: &[f64]) -> Result<Vec<f64>> {
    let (pattern, protocol) = pattern_inputs(setup, index)?;
    let mut out = Vec::with_capacity(strategies.len() * taus.len());
    for &n in strategies {
        let weights = select_afferents(&pattern, n, 0.0, setup.pattern_duration)?;
        for &tau in taus {
            let config = LifConfig { dt_bin: setup.dt_bin, ..LifConfig::threshold_free(tau) };
            out.push(measure_snr(&pattern, &weights, &config, &protocol)?.snr);
        }
    }
    Ok(out)
}

/// One row per (strategy, τ), strategy-major. Patterns run in parallel; the
/// result does not depend on the number of threads.
pub fn run_validation(setup: &ValidationSetup, strategies: &[u32], taus: &[f64]) -> Result<Vec<ValidationRow>> {
    if setup.n_patterns < 2 {
        return param("need at least two patterns for a spread estimate");
    }
    let per_pattern: Vec<Vec<f64>> = (0..setup.n_patterns as u64)
        .into_par_iter()
        .map(|p| pattern_snrs(setup, p, strategies, taus))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut column = 0;
    for &strategy in strategies {
        for &tau in taus {
            let mut stats = Welford::default();
            for snrs in &per_pattern {
                stats.push(snrs[column]);
            }
            column += 1;
            let n = stats.count() as f64;
            let sd = (stats.variance() * n / (n - 1.0)).sqrt();
            let report = analytic::snr(&DetectorParams {
                n_afferents: setup.n_afferents as f64,
                rate: setup.rate,
                jitter_half_width: setup.jitter_half_width,
                strategy,
                tau,
                window: setup.pattern_duration,
            })?;
            rows.push(ValidationRow {
                tau,
                strategy,
                snr_analytic: report.snr,
                snr_sim_mean: stats.mean(),
                snr_sim_sd: sd,
                snr_sim_se: sd / n.sqrt(),
                n_patterns: setup.n_patterns,
            });
        }
    }
    Ok(rows)
}
