//! Clock-driven leaky integrate-and-fire neuron with instantaneous synapses.
//!
//! Forward Euler with a fixed bin: within a bin the potential decays first,
//! then every spike arriving in the bin adds its synaptic weight, then the
//! threshold (if any) is tested.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::spikes::{FrozenPattern, JitterConfig, PoissonConfig, Spike, StreamPlan};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifConfig {
    /// τ, ms
    pub tau: f64,
    /// ms
    pub dt_bin: f64,
    /// `None` runs the neuron without spiking.
    pub threshold: Option<f64>,
    pub reset_potential: f64,
}

impl LifConfig {
    pub fn threshold_free(tau: f64) -> Self {
        Self { tau, dt_bin: 0.1, threshold: None, reset_potential: 0.0 }
    }

    pub fn with_threshold(tau: f64, threshold: f64) -> Self {
        Self { threshold: Some(threshold), ..Self::threshold_free(tau) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return param("tau must be positive");
        }
        if !(self.dt_bin > 0.0) {
            return param("time bin must be positive");
        }
        if self.dt_bin > self.tau / 10.0 * (1.0 + 1e-12) {
            return param(format!(
                "time bin {} ms too coarse for tau {} ms (need dt <= tau/10)",
                self.dt_bin, self.tau
            ));
        }
        if let Some(theta) = self.threshold {
            if !(theta > 0.0 && theta.is_finite()) {
                return param("threshold must be positive");
            }
        }
        Ok(())
    }

    /// Per-bin multiplicative decay of the potential.
    pub fn decay(&self) -> f64 {
        1.0 - self.dt_bin / self.tau
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub potential: f64,
    /// w_i in [0, 1]
    pub weights: Vec<f64>,
    /// ms, end of the last integrated bin
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub fired: bool,
    /// Sum of the weights delivered in this bin.
    pub injected: f64,
}

impl LifState {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return param(format!("weight {w} outside [0, 1]"));
        }
        Ok(Self { potential: 0.0, weights, time: 0.0 })
    }

    /// Integrates one bin given the afferents that spiked in it.
    pub fn step(&mut self, config: &LifConfig, afferents: &[u32]) -> StepOutcome {
        let injected: f64 = afferents.iter().map(|&i| self.weights[i as usize]).sum();
        self.potential = self.potential * config.decay() + injected;
        self.time += config.dt_bin;
        let fired = matches!(config.threshold, Some(theta) if self.potential >= theta);
        if fired {
            self.potential = config.reset_potential;
        }
        StepOutcome { fired, injected }
    }
}

/// Walks a [`StreamPlan`] bin by bin, generating periods on demand so a
/// long stream never has to be held in memory.
pub struct BinnedStream<'p, 'a> {
    plan: &'p StreamPlan<'a>,
    dt: f64,
    total_bins: u64,
    next_bin: u64,
    next_period: usize,
    loaded_until: f64,
    buffer: Vec<Spike>,
    cursor: usize,
}

impl<'p, 'a> BinnedStream<'p, 'a> {
    pub fn new(plan: &'p StreamPlan<'a>, dt: f64) -> Self {
        let total_bins = (plan.total_duration() / dt).round() as u64;
        Self {
            plan,
            dt,
            total_bins,
            next_bin: 0,
            next_period: 0,
            loaded_until: 0.0,
            buffer: Vec::new(),
            cursor: 0,
        }
    }

    pub fn total_bins(&self) -> u64 {
        self.total_bins
    }

    fn bin_of(&self, t: f64) -> u64 {
        ((t / self.dt).floor().max(0.0) as u64).min(self.total_bins.saturating_sub(1))
    }

    /// Fills `out` with the afferents spiking in the next bin and returns
    /// that bin's index, or `None` at the end of the stream.
    pub fn next_bin(&mut self, out: &mut Vec<u32>) -> Result<Option<u64>> {
        out.clear();
        let bin = self.next_bin;
        if bin >= self.total_bins {
            return Ok(None);
        }
        let horizon = (bin + 2) as f64 * self.dt;
        while self.loaded_until < horizon && self.next_period < self.plan.n_periods() {
            self.buffer.drain(..self.cursor);
            self.cursor = 0;
            let spikes = self.plan.period_spikes(self.next_period)?;
            self.buffer.extend(spikes);
            self.next_period += 1;
            self.loaded_until = self.next_period as f64 * self.plan.period();
        }
        while let Some(s) = self.buffer.get(self.cursor) {
            if self.bin_of(s.time) > bin {
                break;
            }
            out.push(s.afferent);
            self.cursor += 1;
        }
        self.next_bin += 1;
        Ok(Some(bin))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementProtocol {
    pub n_presentations: usize,
    /// ms between successive pattern onsets
    pub period: f64,
    /// Hz, background rate between presentations
    pub rate: f64,
    pub jitter: JitterConfig,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrMeasurement {
    /// mean over presentations of the per-presentation maximum
    pub v_max_mean: f64,
    pub v_max_std: f64,
    pub v_noise_mean: f64,
    pub v_noise_std: f64,
    pub snr: f64,
    pub n_presentations: usize,
    pub n_noise_bins: u64,
    pub presentation_maxima: Vec<f64>,
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

pub const MIN_NOISE_BINS: u64 = 10_000;

/// Threshold-free SNR measurement: presents the pattern repeatedly to a
/// detector with binary weights and compares the per-presentation maxima
/// with the potential statistics between presentations.
///
/// The maximum of presentation k is taken over
/// `[onset − T, onset + L + T + 3τ]`. Noise samples are the bins from
/// `5τ` after one presentation's last possible spike up to the next
/// presentation's first possible spike (and from `5τ` after the start of
/// the stream before the first one).
pub fn measure_snr(
    pattern: &FrozenPattern,
    weights: &[f64],
    config: &LifConfig,
    protocol: &MeasurementProtocol,
) -> Result<SnrMeasurement> {
    measure_snr_traced(pattern, weights, config, protocol, None)
}

/// [`measure_snr`], optionally recording the potential at every bin.
pub fn measure_snr_traced(
    pattern: &FrozenPattern,
    weights: &[f64],
    config: &LifConfig,
    protocol: &MeasurementProtocol,
    mut trace: Option<&mut Vec<f32>>,
) -> Result<SnrMeasurement> {
    config.validate()?;
    if config.threshold.is_some() {
        return param("SNR measurement needs a threshold-free neuron");
    }
    if weights.len() != pattern.n_afferents {
        return param("weight vector length differs from afferent count");
    }
    if weights.iter().any(|&w| w != 0.0 && w != 1.0) {
        return param("detector weights must be binary");
    }
    if protocol.n_presentations == 0 {
        return Err(Error::Measurement("no presentations, V_max undefined".into()));
    }
    let active: Vec<u32> = (0..weights.len() as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let noise = PoissonConfig::new(pattern.n_afferents, protocol.rate, protocol.noise_seed)?;
    let plan = StreamPlan::new(pattern, noise, protocol.jitter, protocol.period, protocol.n_presentations)?
        .restricted_to(active);

    let tau = config.tau;
    let n = protocol.n_presentations;
    let extent: Vec<(f64, f64)> = (0..n).map(|k| plan.presentation_extent(k)).collect();
    let peak_end = |k: usize| extent[k].1 + 3.0 * tau;
    let noise_from = |k: usize| if k == 0 { 5.0 * tau } else { extent[k - 1].1 + 5.0 * tau };

    let mut state = LifState::new(weights.to_vec())?;
    let mut stream = BinnedStream::new(&plan, config.dt_bin);
    let mut maxima = vec![f64::NEG_INFINITY; n];
    let mut noise_stats = Welford::default();
    let mut afferents = Vec::new();
    // earliest presentation whose peak window may still be open
    let mut first_open = 0usize;
    if let Some(t) = trace.as_deref_mut() {
        t.reserve(stream.total_bins() as usize);
    }
    while let Some(bin) = stream.next_bin(&mut afferents)? {
        state.step(config, &afferents);
        let t = (bin + 1) as f64 * config.dt_bin;
        let v = state.potential;
        if let Some(buf) = trace.as_deref_mut() {
            buf.push(v as f32);
        }
        while first_open < n && t > peak_end(first_open) {
            first_open += 1;
        }
        let mut k = first_open;
        while k < n && t >= extent[k].0 {
            if t <= peak_end(k) && v > maxima[k] {
                maxima[k] = v;
            }
            k += 1;
        }
        // k is now the next presentation that has not started
        if k < n && t >= noise_from(k) && t < extent[k].0 {
            noise_stats.push(v);
        }
    }

    if noise_stats.count() < MIN_NOISE_BINS {
        return Err(Error::Measurement(format!(
            "only {} noise bins (need {MIN_NOISE_BINS})",
            noise_stats.count()
        )));
    }
    let sigma = noise_stats.std();
    if !(sigma > 0.0) {
        return Err(Error::Measurement("noise potential has zero variance".into()));
    }
    let mut peaks = Welford::default();
    for &m in &maxima {
        peaks.push(m);
    }
    Ok(SnrMeasurement {
        v_max_mean: peaks.mean(),
        v_max_std: peaks.std(),
        v_noise_mean: noise_stats.mean(),
        v_noise_std: sigma,
        snr: (peaks.mean() - noise_stats.mean()) / sigma,
        n_presentations: n,
        n_noise_bins: noise_stats.count(),
        presentation_maxima: maxima,
    })
}

/// Strategy #n wiring: weight 1 for afferents with at least `strategy`
/// spikes in `[window_start, window_start + window)` of the pattern.
pub fn select_afferents(
    pattern: &FrozenPattern,
    strategy: u32,
    window_start: f64,
    window: f64,
) -> Result<Vec<f64>> {
    if strategy < 1 {
        return param("strategy number must be >= 1");
    }
    if !(window > 0.0) || window_start < 0.0 || window_start + window > pattern.duration * (1.0 + 1e-12) {
        return param(format!(
            "window [{window_start}, {}] not inside the pattern [0, {}]",
            window_start + window,
            pattern.duration
        ));
    }
    Ok(pattern
        .counts_in(window_start, window_start + window)
        .into_iter()
        .map(|c| if c >= strategy { 1.0 } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spikes::freeze_pattern;

    #[test]
    fn pure_decay_step() {
        let config = LifConfig::threshold_free(18.0);
        let mut s = LifState::new(vec![1.0]).unwrap();
        s.potential = 1.0;
        s.step(&config, &[]);
        assert!((s.potential - (1.0 - 0.1 / 18.0)).abs() < 1e-15);
        assert!((s.potential - 0.99444).abs() < 1e-5);
    }

    #[test]
    fn single_impulse_step() {
        let config = LifConfig::threshold_free(18.0);
        let mut s = LifState::new(vec![0.5, 1.0]).unwrap();
        let out = s.step(&config, &[0]);
        assert_eq!(s.potential, 0.5);
        assert_eq!(out.injected, 0.5);
        assert!(!out.fired);
    }

    #[test]
    fn threshold_and_reset() {
        let config = LifConfig::with_threshold(10.0, 1.5);
        let mut s = LifState::new(vec![1.0, 1.0]).unwrap();
        assert!(!s.step(&config, &[0]).fired);
        assert!(s.step(&config, &[1]).fired);
        assert_eq!(s.potential, 0.0);
    }

    #[test]
    fn config_checks() {
        assert!(LifConfig::threshold_free(1.0).validate().is_ok());
        assert!(LifConfig::threshold_free(0.5).validate().is_err());
        assert!(LifState::new(vec![1.2]).is_err());
    }

    #[test]
    fn select_whole_pattern() {
        let p = freeze_pattern(&PoissonConfig::new(2000, 5.0, 3).unwrap(), 20.0).unwrap();
        let w = select_afferents(&p, 1, 0.0, 20.0).unwrap();
        let mut fired = vec![false; 2000];
        for s in &p.spikes {
            fired[s.afferent as usize] = true;
        }
        for (i, &f) in fired.iter().enumerate() {
            assert_eq!(w[i] == 1.0, f);
        }
        let none = select_afferents(&p, 1, 0.0, 1e-9).unwrap();
        assert!(none.iter().sum::<f64>() <= 1.0);
        assert!(select_afferents(&p, 1, 5.0, 20.0).is_err());
        assert!(select_afferents(&p, 0, 0.0, 20.0).is_err());
    }

    #[test]
    fn strategy_two_count_concentrates() {
        // M = N(1 − e^{-λ}(1 + λ)), λ = 0.1: 46.79; binomial sd ≈ 6.8
        let p = freeze_pattern(&PoissonConfig::new(10_000, 5.0, 21).unwrap(), 20.0).unwrap();
        let m: f64 = select_afferents(&p, 2, 0.0, 20.0).unwrap().iter().sum();
        let expected = 1e4 * (1.0 - (-0.1f64).exp() * 1.1);
        let sd = (expected * (1.0 - expected / 1e4)).sqrt();
        assert!((m - expected).abs() <= 4.0 * sd, "{m} vs {expected}");
    }

    fn protocol(n: usize) -> MeasurementProtocol {
        MeasurementProtocol {
            n_presentations: n,
            period: 400.0,
            rate: 5.0,
            jitter: JitterConfig::new(0.0, 1).unwrap(),
            noise_seed: 2,
        }
    }

    #[test]
    fn measurement_error_paths() {
        let p = freeze_pattern(&PoissonConfig::new(500, 5.0, 3).unwrap(), 20.0).unwrap();
        let config = LifConfig::threshold_free(10.0);
        let zeros = vec![0.0; 500];
        assert!(matches!(measure_snr(&p, &zeros, &config, &protocol(50)), Err(Error::Measurement(_))));
        let ones = vec![1.0; 500];
        assert!(matches!(measure_snr(&p, &ones, &config, &protocol(0)), Err(Error::Measurement(_))));
        // too few noise bins
        assert!(matches!(measure_snr(&p, &ones, &config, &protocol(2)), Err(Error::Measurement(_))));
        let half = vec![0.5; 500];
        assert!(measure_snr(&p, &half, &config, &protocol(50)).is_err());
        let spiking = LifConfig::with_threshold(10.0, 5.0);
        assert!(measure_snr(&p, &ones, &spiking, &protocol(50)).is_err());
    }

    #[test]
    fn trace_has_one_sample_per_bin() {
        let p = freeze_pattern(&PoissonConfig::new(300, 5.0, 3).unwrap(), 20.0).unwrap();
        let w = select_afferents(&p, 1, 0.0, 20.0).unwrap();
        let mut trace = Vec::new();
        let m = measure_snr_traced(&p, &w, &LifConfig::threshold_free(10.0), &protocol(40), Some(&mut trace)).unwrap();
        assert_eq!(trace.len(), 40 * 4000);
        assert_eq!(m.presentation_maxima.len(), 40);
        let trace_max = trace.iter().cloned().fold(f32::MIN, f32::max) as f64;
        let meas_max = m.presentation_maxima.iter().cloned().fold(f64::MIN, f64::max);
        assert!(trace_max >= meas_max - 1e-3);
    }
}
