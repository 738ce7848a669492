//! Closed-form SNR of a LIF coincidence detector wired with Strategy #n.
//!
//! Potentials are in units of one unitary-weight synaptic jump. Rates are in
//! Hz and times in ms, so `λ = f·Δt / 1000`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub n_afferents: f64,
    /// f, Hz
    pub rate: f64,
    /// T, ms
    pub jitter_half_width: f64,
    /// n: minimum spike count within the window for an afferent to be wired
    pub strategy: u32,
    /// τ, ms
    pub tau: f64,
    /// Δt, ms
    pub window: f64,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(self.n_afferents >= 1.0 && self.n_afferents.is_finite()) {
            return param("N must be >= 1");
        }
        if !positive(self.rate) {
            return param("rate must be positive");
        }
        if !(self.jitter_half_width >= 0.0 && self.jitter_half_width.is_finite()) {
            return param("jitter half-width must be >= 0");
        }
        if self.strategy < 1 {
            return param("strategy number must be >= 1");
        }
        if !positive(self.tau) {
            return param("tau must be positive");
        }
        if !positive(self.window) {
            return param("window must be positive");
        }
        Ok(())
    }

    /// Mean spike count of one afferent in the window.
    pub fn lambda(&self) -> f64 {
        self.rate * self.window / 1000.0
    }

    pub fn tau_seconds(&self) -> f64 {
        self.tau / 1000.0
    }
}

/// `λ^k e^{-λ} / k!`, built by repeated multiplication.
pub fn poisson_pmf(lambda: f64, k: u32) -> f64 {
    let mut term = (-lambda).exp();
    for j in 1..=k {
        term *= lambda / j as f64;
    }
    term
}

/// `P(X >= n)` for `X ~ Poisson(λ)`.
///
/// For `λ < n` the tail is summed directly, which keeps full relative
/// precision when the head sum is within rounding of 1.
pub fn poisson_tail(lambda: f64, n: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda < n as f64 {
        let mut term = poisson_pmf(lambda, n);
        let mut sum = 0.0;
        let mut k = n;
        while term > 0.0 {
            sum += term;
            k += 1;
            term *= lambda / k as f64;
            if term <= sum * 1e-17 {
                break;
            }
        }
        sum
    } else {
        let mut term = 1.0;
        let mut head = 0.0;
        for k in 0..n {
            head += term;
            term *= lambda / (k + 1) as f64;
        }
        (1.0 - (-lambda).exp() * head).max(0.0)
    }
}

/// Expected number M of afferents with at least n spikes in the window.
pub fn selected_count(params: &DetectorParams) -> f64 {
    params.n_afferents * poisson_tail(params.lambda(), params.strategy)
}

/// Expected input rate r (Hz) from the selected afferents during the window.
pub fn effective_rate(params: &DetectorParams) -> f64 {
    params.n_afferents * params.rate * poisson_tail(params.lambda(), params.strategy - 1)
}

/// Piece-wise linear input current produced by jittering a rectangular
/// window: rise of length `t1`, plateau `t2` at height `h`, fall `t3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidCurrent {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub h: f64,
}

impl TrapezoidCurrent {
    pub fn area(&self) -> f64 {
        self.h * (0.5 * self.t1 + self.t2 + 0.5 * self.t3)
    }

    pub fn duration(&self) -> f64 {
        self.t1 + self.t2 + self.t3
    }

    /// Current at `t` ms after the start of the rise.
    pub fn at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            0.0
        } else if t < self.t1 {
            self.h * t / self.t1
        } else if t <= self.t1 + self.t2 {
            self.h
        } else {
            self.h * (self.duration() - t) / self.t3
        }
    }
}

pub fn trapezoid(window: f64, jitter_half_width: f64) -> TrapezoidCurrent {
    let two_t = 2.0 * jitter_half_width;
    if jitter_half_width == 0.0 {
        return TrapezoidCurrent { t1: 0.0, t2: window, t3: 0.0, h: 1.0 };
    }
    let edge = window.min(two_t);
    TrapezoidCurrent {
        t1: edge,
        t2: (window - two_t).abs(),
        t3: edge,
        h: (window / two_t).min(1.0),
    }
}

/// Transient of the reduced potential `v` driven by the trapezoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transient {
    /// v at the end of the rise
    pub v1: f64,
    /// v at the end of the plateau
    pub v2: f64,
    /// time of the maximum, ms from the start of the rise
    pub t_max: f64,
    pub v_max: f64,
}

pub fn transient(tau: f64, window: f64, jitter_half_width: f64) -> Transient {
    let current = trapezoid(window, jitter_half_width);
    if jitter_half_width == 0.0 {
        // step response; the general expressions are 0/0 here
        let v = -(-window / tau).exp_m1();
        return Transient { v1: 0.0, v2: v, t_max: window, v_max: v };
    }
    let two_t = 2.0 * jitter_half_width;
    let TrapezoidCurrent { t1, t2, h, .. } = current;
    let v1 = (t1 + tau * (-t1 / tau).exp_m1()) / two_t;
    let v2 = h + (v1 - h) * (-t2 / tau).exp();
    let t_max = t1 + t2 + tau * (two_t * (h - v2) / tau).ln_1p();
    // log(1 − e^{-max/τ} + e^{-|Δt−2T|/τ}) written with ln_1p/exp_m1 so the
    // small-T limit keeps its precision
    let shortest = window.min(two_t);
    let excess = (-(window - two_t).abs() / tau).exp() * -(-shortest / tau).exp_m1();
    let v_max = h - tau / two_t * excess.ln_1p();
    debug_assert!(
        (-1e-9..=1.0 + 1e-9).contains(&v_max),
        "v_max out of range: {v_max}"
    );
    Transient { v1, v2, t_max, v_max: v_max.clamp(0.0, 1.0) }
}

pub fn v_max(params: &DetectorParams) -> Transient {
    transient(params.tau, params.window, params.jitter_half_width)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub params: DetectorParams,
    pub selected: f64,
    /// Hz
    pub effective_rate: f64,
    pub current: TrapezoidCurrent,
    pub v1: f64,
    pub v2: f64,
    pub t_max: f64,
    pub v_max: f64,
    /// τ·r, the plateau the potential would reach for an unbounded window
    pub v_inf: f64,
    pub v_noise_mean: f64,
    pub v_noise_std: f64,
    pub snr: f64,
}

/// SNR of the detector together with every intermediate quantity.
pub fn snr(params: &DetectorParams) -> Result<AnalyticReport> {
    params.validate()?;
    let lambda = params.lambda();
    let n = params.strategy;
    let tail = poisson_tail(lambda, n);
    let selected = params.n_afferents * tail;
    let rate = effective_rate(params);
    let tr = v_max(params);
    let tau_s = params.tau_seconds();
    let v_noise_mean = tau_s * params.rate * selected;
    let v_noise_std = (v_noise_mean / 2.0).sqrt();
    // (τr − τfM)/σ reduces to pmf(n−1)·sqrt(2τNf/P(X>=n)); this form stays
    // finite where M underflows
    let snr = if tail > 0.0 {
        tr.v_max
            * poisson_pmf(lambda, n - 1)
            * (2.0 * tau_s * params.n_afferents * params.rate / tail).sqrt()
    } else {
        0.0
    };
    Ok(AnalyticReport {
        params: *params,
        selected,
        effective_rate: rate,
        current: trapezoid(params.window, params.jitter_half_width),
        v1: tr.v1,
        v2: tr.v2,
        t_max: tr.t_max,
        v_max: tr.v_max,
        v_inf: tau_s * rate,
        v_noise_mean,
        v_noise_std,
        snr,
    })
}

/// Expected number of noise events within one membrane time constant,
/// `τ·f·M`. The optimizer keeps this at or above 10.
pub fn noise_events_per_tau(params: &DetectorParams) -> f64 {
    params.tau_seconds() * params.rate * selected_count(params)
}
