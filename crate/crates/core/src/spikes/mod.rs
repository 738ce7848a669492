//! Seeded Poisson spike trains, frozen patterns, jitter and input streams.
//!
//! Times are in milliseconds and rates in hertz throughout.

pub mod io;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rng::{rng_from, substream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub afferent: u32,
    /// ms
    pub time: f64,
}

impl Spike {
    pub fn new(afferent: u32, time: f64) -> Self {
        Self { afferent, time }
    }
}

/// Sorts by time, breaking ties by afferent index so the order is total.
pub(crate) fn sort_spikes(spikes: &mut [Spike]) {
    spikes.sort_unstable_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.afferent.cmp(&b.afferent))
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonConfig {
    pub n_afferents: usize,
    /// Hz
    pub rate: f64,
    pub seed: u64,
}

impl PoissonConfig {
    pub fn new(n_afferents: usize, rate: f64, seed: u64) -> Result<Self> {
        let config = Self { n_afferents, rate, seed };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_afferents == 0 {
            return param("need at least one afferent");
        }
        if self.n_afferents > u32::MAX as usize {
            return param("afferent count exceeds u32 index range");
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return param(format!("rate must be positive, got {}", self.rate));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration > 0.0 && duration.is_finite()) {
        return param(format!("duration must be positive, got {duration}"));
    }
    Ok(())
}

/// Appends the train of one afferent on `[0, duration)`. Each afferent owns
/// a substream of the config seed, so its train does not depend on N.
fn afferent_train(seed: u64, afferent: u32, exp: &Exp<f64>, duration: f64, out: &mut Vec<Spike>) {
    let mut rng = rng_from(substream(seed, afferent as u64));
    let mut t = exp.sample(&mut rng);
    while t < duration {
        out.push(Spike::new(afferent, t));
        t += exp.sample(&mut rng);
    }
}

/// Like [`afferent_train`], keeping a spike at `t` with probability `keep(t)`.
fn afferent_train_thinned(
    seed: u64,
    afferent: u32,
    exp: &Exp<f64>,
    duration: f64,
    keep: impl Fn(f64) -> f64,
    out: &mut Vec<Spike>,
) {
    let mut rng = rng_from(substream(seed, afferent as u64));
    let mut t = exp.sample(&mut rng);
    while t < duration {
        let p = keep(t);
        if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
            out.push(Spike::new(afferent, t));
        }
        t += exp.sample(&mut rng);
    }
}

/// Expected fraction of one afferent's pattern rate present at time `s`
/// (relative to the onset) after uniform jitter on `[-T, T]`. It is 1 on
/// `[T, L - T]`, ramps linearly at both edges and is 0 outside `[-T, L + T]`.
pub fn pattern_coverage(s: f64, length: f64, half_width: f64) -> f64 {
    if half_width <= 0.0 {
        return if (0.0..length).contains(&s) { 1.0 } else { 0.0 };
    }
    let covered = (length.min(s + half_width) - 0.0f64.max(s - half_width)).max(0.0);
    (covered / (2.0 * half_width)).min(1.0)
}

/// Homogeneous Poisson trains for every afferent on `[0, duration)`,
/// generated from exponential inter-spike intervals and merged by time.
pub fn generate_poisson(config: &PoissonConfig, duration: f64) -> Result<Vec<Spike>> {
    config.validate()?;
    check_duration(duration)?;
    let exp = Exp::new(config.rate / 1000.0).map_err(|e| crate::Error::Parameter(e.to_string()))?;
    let expected = config.n_afferents as f64 * config.rate * duration / 1000.0;
    let mut spikes = Vec::with_capacity((expected * 1.1) as usize + 16);
    for i in 0..config.n_afferents as u32 {
        afferent_train(config.seed, i, &exp, duration, &mut spikes);
    }
    sort_spikes(&mut spikes);
    Ok(spikes)
}

/// Same trains as [`generate_poisson`], restricted to the listed afferents.
pub fn generate_poisson_for(
    config: &PoissonConfig,
    duration: f64,
    afferents: &[u32],
) -> Result<Vec<Spike>> {
    config.validate()?;
    check_duration(duration)?;
    let exp = Exp::new(config.rate / 1000.0).map_err(|e| crate::Error::Parameter(e.to_string()))?;
    let mut spikes = Vec::new();
    for &i in afferents {
        if i as usize >= config.n_afferents {
            return param(format!("afferent {i} out of range"));
        }
        afferent_train(config.seed, i, &exp, duration, &mut spikes);
    }
    sort_spikes(&mut spikes);
    Ok(spikes)
}

/// One fixed realization of the Poisson process ("frozen noise").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenPattern {
    /// ms
    pub duration: f64,
    pub n_afferents: usize,
    /// Sorted by time, all within `[0, duration)`.
    pub spikes: Vec<Spike>,
}

impl FrozenPattern {
    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    /// Per-afferent spike counts within `[start, end)`.
    pub fn counts_in(&self, start: f64, end: f64) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_afferents];
        let first = self.spikes.partition_point(|s| s.time < start);
        for s in self.spikes[first..].iter().take_while(|s| s.time < end) {
            counts[s.afferent as usize] += 1;
        }
        counts
    }
}

pub fn freeze_pattern(config: &PoissonConfig, duration: f64) -> Result<FrozenPattern> {
    let spikes = generate_poisson(config, duration)?;
    Ok(FrozenPattern {
        duration,
        n_afferents: config.n_afferents,
        spikes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    /// T, ms: shifts are uniform on `[-T, T]`.
    pub half_width: f64,
    pub seed: u64,
}

impl JitterConfig {
    pub fn new(half_width: f64, seed: u64) -> Result<Self> {
        let config = Self { half_width, seed };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width >= 0.0 && self.half_width.is_finite()) {
            return param(format!("jitter half-width must be >= 0, got {}", self.half_width));
        }
        Ok(())
    }
}

/// Shifts every spike by an independent uniform draw on `[-T, T]` and
/// re-sorts. Shifted times may leave `[0, L)`; no spike is dropped.
pub fn jitter_pattern(pattern: &FrozenPattern, jitter: &JitterConfig) -> Vec<Spike> {
    let mut out = pattern.spikes.clone();
    let width = jitter.half_width;
    if width > 0.0 {
        let mut rng = rng_from(jitter.seed);
        for s in out.iter_mut() {
            s.time += rng.random_range(-width..=width);
        }
        sort_spikes(&mut out);
    }
    out
}

/// Lazily generated input stream: noise between presentations and one
/// jittered copy of the pattern per period.
///
/// Period `k` covers `[k·P, (k+1)·P)` and its pattern starts at `k·P + T`,
/// so the jittered copy stays inside the period. Noise is thinned by the
/// local density of the jittered copy: at every instant the expected input
/// rate is exactly `f`, with no transient at the pattern edges.
#[derive(Clone, Debug)]
pub struct StreamPlan<'a> {
    pattern: &'a FrozenPattern,
    noise: PoissonConfig,
    jitter: JitterConfig,
    period: f64,
    n_presentations: usize,
    subset: Option<Vec<u32>>,
}

impl<'a> StreamPlan<'a> {
    pub fn new(
        pattern: &'a FrozenPattern,
        noise: PoissonConfig,
        jitter: JitterConfig,
        period: f64,
        n_presentations: usize,
    ) -> Result<Self> {
        noise.validate()?;
        jitter.validate()?;
        check_duration(pattern.duration)?;
        if noise.n_afferents != pattern.n_afferents {
            return param(format!(
                "noise has {} afferents but pattern has {}",
                noise.n_afferents, pattern.n_afferents
            ));
        }
        let needed = pattern.duration + 2.0 * jitter.half_width;
        if !(period >= needed && period.is_finite()) {
            return param(format!(
                "period {period} ms shorter than pattern plus jitter ({needed} ms)"
            ));
        }
        Ok(Self {
            pattern,
            noise,
            jitter,
            period,
            n_presentations,
            subset: None,
        })
    }

    /// Only emit spikes of the listed afferents. The emitted spikes are
    /// exactly those the full stream would contain for these afferents.
    pub fn restricted_to(mut self, afferents: Vec<u32>) -> Self {
        let mut afferents = afferents;
        afferents.sort_unstable();
        afferents.dedup();
        self.subset = Some(afferents);
        self
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn n_presentations(&self) -> usize {
        self.n_presentations
    }

    pub fn pattern(&self) -> &FrozenPattern {
        self.pattern
    }

    pub fn jitter_half_width(&self) -> f64 {
        self.jitter.half_width
    }

    /// A stream with no presentations still spans one period of noise.
    pub fn n_periods(&self) -> usize {
        self.n_presentations.max(1)
    }

    pub fn total_duration(&self) -> f64 {
        self.n_periods() as f64 * self.period
    }

    fn onset_offset(&self) -> f64 {
        self.jitter.half_width
    }

    pub fn onset(&self, k: usize) -> f64 {
        k as f64 * self.period + self.onset_offset()
    }

    pub fn onsets(&self) -> Vec<f64> {
        (0..self.n_presentations).map(|k| self.onset(k)).collect()
    }

    /// Span that can hold jittered pattern spikes of presentation `k`.
    pub fn presentation_extent(&self, k: usize) -> (f64, f64) {
        let onset = self.onset(k);
        let t = self.jitter.half_width;
        (onset - t, onset + self.pattern.duration + t)
    }

    /// All spikes of period `k`, time-sorted, in absolute stream time.
    pub fn period_spikes(&self, k: usize) -> Result<Vec<Spike>> {
        let start = k as f64 * self.period;
        let presenting = k < self.n_presentations;
        let noise = self.noise.with_seed(substream(self.noise.seed, k as u64));
        let exp = Exp::new(noise.rate / 1000.0).map_err(|e| crate::Error::Parameter(e.to_string()))?;
        let offset = self.onset_offset();
        let length = self.pattern.duration;
        let width = self.jitter.half_width;
        let keep = |t: f64| {
            if presenting {
                1.0 - pattern_coverage(t - offset, length, width)
            } else {
                1.0
            }
        };
        let mut spikes = Vec::new();
        let mut add = |i: u32| afferent_train_thinned(noise.seed, i, &exp, self.period, keep, &mut spikes);
        match &self.subset {
            Some(list) => {
                for &i in list {
                    if i as usize >= noise.n_afferents {
                        return param(format!("afferent {i} out of range"));
                    }
                    add(i);
                }
            }
            None => (0..noise.n_afferents as u32).for_each(&mut add),
        }
        for s in spikes.iter_mut() {
            s.time += start;
        }
        if presenting {
            let jitter = JitterConfig {
                half_width: width,
                seed: substream(self.jitter.seed, k as u64),
            };
            let onset = start + offset;
            let shifted = jitter_pattern(self.pattern, &jitter);
            let keep = |s: &Spike| match &self.subset {
                Some(list) => list.binary_search(&s.afferent).is_ok(),
                None => true,
            };
            spikes.extend(
                shifted
                    .into_iter()
                    .filter(keep)
                    .map(|s| Spike::new(s.afferent, s.time + onset)),
            );
        }
        sort_spikes(&mut spikes);
        Ok(spikes)
    }

    pub fn build(&self) -> Result<InputStream> {
        let mut spikes = Vec::new();
        for k in 0..self.n_periods() {
            spikes.extend(self.period_spikes(k)?);
        }
        Ok(InputStream {
            total_duration: self.total_duration(),
            pattern_onsets: self.onsets(),
            spikes,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputStream {
    pub total_duration: f64,
    pub pattern_onsets: Vec<f64>,
    pub spikes: Vec<Spike>,
}

pub fn build_stream(
    pattern: &FrozenPattern,
    noise: PoissonConfig,
    jitter: JitterConfig,
    period: f64,
    n_presentations: usize,
) -> Result<InputStream> {
    StreamPlan::new(pattern, noise, jitter, period, n_presentations)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_sorted(spikes: &[Spike]) -> bool {
        spikes.windows(2).all(|w| w[0].time <= w[1].time)
    }

    #[test]
    fn total_count_within_poisson_bounds() {
        let config = PoissonConfig::new(10_000, 5.0, 11).unwrap();
        let spikes = generate_poisson(&config, 20.0).unwrap();
        // Poisson(1000): sd = sqrt(1000)
        let dev = (spikes.len() as f64 - 1000.0).abs();
        assert!(dev <= 4.0 * 1000f64.sqrt(), "count {}", spikes.len());
        assert!(is_sorted(&spikes));
        assert!(spikes.iter().all(|s| s.time >= 0.0 && s.time < 20.0));
    }

    #[test]
    fn vanishing_window_is_valid() {
        let config = PoissonConfig::new(1, 5.0, 3).unwrap();
        let spikes = generate_poisson(&config, 1e-4).unwrap();
        assert!(spikes.is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(PoissonConfig::new(10, 0.0, 1).is_err());
        assert!(PoissonConfig::new(0, 5.0, 1).is_err());
        let config = PoissonConfig { n_afferents: 3, rate: -1.0, seed: 0 };
        assert!(generate_poisson(&config, 10.0).is_err());
        let config = PoissonConfig::new(3, 5.0, 0).unwrap();
        assert!(generate_poisson(&config, 0.0).is_err());
        assert!(generate_poisson(&config, -3.0).is_err());
        assert!(JitterConfig::new(-1.0, 0).is_err());
    }

    #[test]
    fn seeds_reproduce() {
        let config = PoissonConfig::new(200, 20.0, 99).unwrap();
        let a = generate_poisson(&config, 500.0).unwrap();
        let b = generate_poisson(&config, 500.0).unwrap();
        assert_eq!(a, b);
        let c = generate_poisson(&config.with_seed(100), 500.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn afferent_train_invariant_to_population_size() {
        let small = generate_poisson(&PoissonConfig::new(5, 10.0, 4).unwrap(), 1000.0).unwrap();
        let large = generate_poisson(&PoissonConfig::new(50, 10.0, 4).unwrap(), 1000.0).unwrap();
        let pick = |v: &[Spike], i| v.iter().filter(|s| s.afferent == i).copied().collect::<Vec<_>>();
        for i in 0..5 {
            assert_eq!(pick(&small, i), pick(&large, i));
        }
        let subset = generate_poisson_for(&PoissonConfig::new(50, 10.0, 4).unwrap(), 1000.0, &[3, 17]).unwrap();
        let expected: Vec<_> = large.iter().filter(|s| s.afferent == 3 || s.afferent == 17).copied().collect();
        assert_eq!(subset, expected);
    }

    #[test]
    fn frozen_pattern_sizes() {
        let p = freeze_pattern(&PoissonConfig::new(10_000, 5.0, 1).unwrap(), 20.0).unwrap();
        assert!((p.len() as f64 - 1000.0).abs() < 4.0 * 1000f64.sqrt());
        let p = freeze_pattern(&PoissonConfig::new(10_000, 3.2, 1).unwrap(), 100.0).unwrap();
        assert!((p.len() as f64 - 3200.0).abs() < 4.0 * 3200f64.sqrt());
        assert!(p.spikes.iter().all(|s| s.time >= 0.0 && s.time < 100.0 && (s.afferent as usize) < 10_000));
        assert!(is_sorted(&p.spikes));
    }

    #[test]
    fn zero_jitter_is_identity() {
        let p = freeze_pattern(&PoissonConfig::new(500, 5.0, 8).unwrap(), 50.0).unwrap();
        assert_eq!(jitter_pattern(&p, &JitterConfig::new(0.0, 1).unwrap()), p.spikes);
    }

    #[test]
    fn jitter_bounded_and_count_preserving() {
        let p = freeze_pattern(&PoissonConfig::new(2000, 5.0, 8).unwrap(), 50.0).unwrap();
        let j = jitter_pattern(&p, &JitterConfig::new(3.2, 5).unwrap());
        assert_eq!(j.len(), p.len());
        assert!(is_sorted(&j));
        // match spikes per afferent: both lists sorted within afferent, and
        // |shift| <= T keeps the per-afferent order up to swaps of close spikes
        let mut orig: Vec<_> = p.spikes.iter().map(|s| (s.afferent, s.time)).collect();
        let mut shifted: Vec<_> = j.iter().map(|s| (s.afferent, s.time)).collect();
        orig.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        shifted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (a, b) in orig.iter().zip(&shifted) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() <= 3.2 + 1e-12);
        }
    }

    #[test]
    fn stream_layout() {
        let p = freeze_pattern(&PoissonConfig::new(100, 5.0, 1).unwrap(), 20.0).unwrap();
        let noise = PoissonConfig::new(100, 5.0, 2).unwrap();
        let plan = StreamPlan::new(&p, noise, JitterConfig::new(0.0, 3).unwrap(), 400.0, 1000).unwrap();
        assert_eq!(plan.total_duration(), 400_000.0);
        let onsets = plan.onsets();
        assert_eq!(onsets.len(), 1000);
        assert!(onsets.windows(2).all(|w| (w[1] - w[0] - 400.0).abs() < 1e-9));

        let short = StreamPlan::new(&p, noise, JitterConfig::new(5.0, 3).unwrap(), 25.0, 3);
        assert!(short.is_err());
    }

    #[test]
    fn stream_contains_pattern_copies() {
        let p = freeze_pattern(&PoissonConfig::new(300, 5.0, 1).unwrap(), 30.0).unwrap();
        let noise = PoissonConfig::new(300, 5.0, 2).unwrap();
        let plan = StreamPlan::new(&p, noise, JitterConfig::new(0.0, 3).unwrap(), 100.0, 4).unwrap();
        let stream = plan.build().unwrap();
        assert!(is_sorted(&stream.spikes));
        for &onset in &stream.pattern_onsets {
            let window: Vec<_> = stream
                .spikes
                .iter()
                .filter(|s| s.time >= onset && s.time < onset + 30.0)
                .map(|s| (s.afferent, s.time - onset))
                .collect();
            let expected: Vec<_> = p.spikes.iter().map(|s| (s.afferent, s.time)).collect();
            assert_eq!(window.len(), expected.len());
            for (a, b) in window.iter().zip(&expected) {
                assert_eq!(a.0, b.0);
                assert!((a.1 - b.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_presentations_is_pure_noise() {
        let p = freeze_pattern(&PoissonConfig::new(100, 5.0, 1).unwrap(), 20.0).unwrap();
        let noise = PoissonConfig::new(100, 5.0, 2).unwrap();
        let stream = build_stream(&p, noise, JitterConfig::new(1.0, 3).unwrap(), 400.0, 0).unwrap();
        assert!(stream.pattern_onsets.is_empty());
        assert_eq!(stream.total_duration, 400.0);
        assert!(is_sorted(&stream.spikes));
    }

    #[test]
    fn restricted_stream_matches_full_stream() {
        let p = freeze_pattern(&PoissonConfig::new(200, 8.0, 1).unwrap(), 40.0).unwrap();
        let noise = PoissonConfig::new(200, 8.0, 2).unwrap();
        let jitter = JitterConfig::new(2.0, 3).unwrap();
        let full = StreamPlan::new(&p, noise, jitter, 200.0, 5).unwrap().build().unwrap();
        let subset = vec![4, 77, 150];
        let part = StreamPlan::new(&p, noise, jitter, 200.0, 5)
            .unwrap()
            .restricted_to(subset.clone())
            .build()
            .unwrap();
        let expected: Vec<_> = full.spikes.iter().filter(|s| subset.contains(&s.afferent)).copied().collect();
        assert_eq!(part.spikes, expected);
    }
}
