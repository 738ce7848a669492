//! Reference computations written independently of the library.
#![allow(dead_code)]

/// Input current of a window `[0, dt]` whose spikes are jittered uniformly
/// on `[-T, T]`, shifted so the current starts at 0: the fraction of the
/// jitter interval around `t - T` covered by the window.
pub fn jittered_current(t: f64, dt: f64, jitter: f64) -> f64 {
    if jitter == 0.0 {
        return if (0.0..dt).contains(&t) { 1.0 } else { 0.0 };
    }
    let lo = (t - 2.0 * jitter).max(0.0);
    let hi = t.min(dt);
    ((hi - lo) / (2.0 * jitter)).max(0.0)
}

/// Max of `v` solving `tau v' = -v + I(t)`, `v(0) = 0`, by classical RK4
/// with `steps` steps over the support of the current.
pub fn v_max_rk4(tau: f64, dt: f64, jitter: f64, steps: usize) -> f64 {
    let end = dt + 2.0 * jitter;
    let h = end / steps as f64;
    let rhs = |t: f64, v: f64| (-v + jittered_current(t, dt, jitter)) / tau;
    let (mut t, mut v, mut best) = (0.0, 0.0f64, 0.0f64);
    for _ in 0..steps {
        let k1 = rhs(t, v);
        let k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2);
        let k4 = rhs(t + h, v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        best = best.max(v);
    }
    best
}

/// Exact response to a linear current `a + b s` over one segment.
fn linear_segment(v0: f64, a: f64, b: f64, tau: f64, s: f64) -> f64 {
    let particular = |s: f64| a + b * (s - tau);
    particular(s) + (v0 - particular(0.0)) * (-s / tau).exp()
}

/// Peak of the exact piecewise response to the jittered window current,
/// located by ternary search on the falling edge.
pub fn v_max_exact(tau: f64, dt: f64, jitter: f64) -> f64 {
    if jitter == 0.0 {
        return 1.0 - (-dt / tau).exp();
    }
    let rise = dt.min(2.0 * jitter);
    let plateau = (dt - 2.0 * jitter).abs();
    let h = (dt / (2.0 * jitter)).min(1.0);
    let v1 = linear_segment(0.0, 0.0, h / rise, tau, rise);
    let v2 = h + (v1 - h) * (-plateau / tau).exp();
    let fall = |s: f64| linear_segment(v2, h, -h / rise, tau, s);
    let (mut lo, mut hi) = (0.0, rise);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if fall(m1) < fall(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    fall(0.5 * (lo + hi)).max(v2)
}

/// `P(X >= n)` for `X ~ Poisson(lambda)` by summing the upper tail.
pub fn poisson_upper(lambda: f64, n: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut term = (-lambda).exp();
    for k in 1..=n {
        term *= lambda / k as f64;
    }
    let mut total = 0.0;
    let mut k = n;
    while term > total * 1e-18 || k < n + 5 {
        total += term;
        k += 1;
        term *= lambda / k as f64;
        if k > n + 100_000 {
            break;
        }
    }
    total
}

/// SNR of strategy `n` from its definition: the pattern lifts the potential
/// from the noise mean `τfM` toward `τr` with shape factor `v_max`, and the
/// noise standard deviation is `sqrt(τfM/2)`. Also returns `τfM`.
pub fn snr_reference(n_afferents: f64, rate: f64, jitter: f64, n: u32, tau: f64, dt: f64) -> (f64, f64) {
    let lambda = rate * dt / 1000.0;
    let tau_s = tau / 1000.0;
    let m = n_afferents * poisson_upper(lambda, n);
    let r = n_afferents * rate * poisson_upper(lambda, n - 1);
    let noise_mean = tau_s * rate * m;
    if noise_mean <= 0.0 {
        return (0.0, noise_mean);
    }
    let sigma = (noise_mean / 2.0).sqrt();
    ((tau_s * r - noise_mean) * v_max_exact(tau, dt, jitter) / sigma, noise_mean)
}

/// Best feasible SNR over a `points × points` log grid of `(τ, Δt)` in
/// `[lo, hi]²` and strategies `1..=max_n`.
pub fn dense_grid_best(
    n_afferents: f64,
    rate: f64,
    jitter: f64,
    max_n: u32,
    lo: f64,
    hi: f64,
    points: usize,
) -> (f64, u32, f64, f64) {
    let axis: Vec<f64> = (0..points)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect();
    let mut best = (f64::MIN, 0, 0.0, 0.0);
    for n in 1..=max_n {
        for &tau in &axis {
            for &dt in &axis {
                let (snr, events) = snr_reference(n_afferents, rate, jitter, n, tau, dt);
                if events >= 10.0 && snr > best.0 {
                    best = (snr, n, tau, dt);
                }
            }
        }
    }
    best
}
