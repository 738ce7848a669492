//! Maximization of the analytic SNR over strategy, membrane time constant
//! and window length, under the continuity constraint `τ·f·M ≥ 10`.
//!
//! Each strategy is solved in `(ln τ, ln Δt)`: a coarse log grid picks a
//! start, then Nelder–Mead followed by a compass polish refines it. The
//! constraint is linear in τ at fixed Δt, so every trial point is projected
//! onto `τ ≥ τ_min(Δt)` before evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{poisson_pmf, poisson_tail, transient};
use crate::error::{param, Error, Result};

/// Minimum expected number of noise events per membrane time constant.
pub const MIN_EVENTS_PER_TAU: f64 = 10.0;

/// Shared physical inputs of one optimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Externals {
    /// Hz
    pub rate: f64,
    /// ms
    pub jitter_half_width: f64,
    pub n_afferents: f64,
}

impl Externals {
    pub fn new(rate: f64, jitter_half_width: f64, n_afferents: f64) -> Result<Self> {
        let ext = Self {
            rate,
            jitter_half_width,
            n_afferents,
        };
        ext.validate()?;
        Ok(ext)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return param(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.jitter_half_width >= 0.0 && self.jitter_half_width.is_finite()) {
            return param(format!(
                "jitter half-width must be non-negative, got {}",
                self.jitter_half_width
            ));
        }
        if !(self.n_afferents >= 1.0 && self.n_afferents.is_finite()) {
            return param(format!("need at least one afferent, got {}", self.n_afferents));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// ms, applies to both τ and Δt
    pub lower: f64,
    pub upper: f64,
    pub grid_points: usize,
    pub max_evaluations: usize,
    pub tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lower: 0.5,
            upper: 1000.0,
            grid_points: 40,
            max_evaluations: 500,
            tolerance: 1e-6,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.upper > self.lower && self.upper.is_finite()) {
            return param(format!("bad search bounds [{}, {}]", self.lower, self.upper));
        }
        if self.grid_points < 2 {
            return param("coarse grid needs at least 2 points per axis");
        }
        if !(self.tolerance > 0.0) {
            return param("tolerance must be positive");
        }
        Ok(())
    }
}

/// A feasible point of one strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// ms
    pub tau: f64,
    /// ms
    pub window: f64,
    pub snr: f64,
    /// `τ·f·M` at the solution
    pub events_per_tau: f64,
    pub constraint_active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: u32,
    /// `None` when the constraint cannot be met inside the bounds.
    pub solution: Option<Solution>,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub externals: Externals,
    pub best_strategy: u32,
    pub best_tau: f64,
    pub best_window: f64,
    pub best_snr: f64,
    pub constraint_active: bool,
    pub per_strategy: Vec<StrategyResult>,
}

/// SNR and `τ·f·M` of strategy `n` at `(τ, Δt)`.
pub fn evaluate(ext: &Externals, n: u32, tau: f64, window: f64) -> (f64, f64) {
    let lambda = ext.rate * window / 1000.0;
    let tail = poisson_tail(lambda, n);
    let tau_s = tau / 1000.0;
    let events = tau_s * ext.rate * ext.n_afferents * tail;
    if tail <= 0.0 {
        return (0.0, events);
    }
    let v_max = transient(tau, window, ext.jitter_half_width).v_max;
    let snr = v_max * poisson_pmf(lambda, n - 1) * (2.0 * tau_s * ext.n_afferents * ext.rate / tail).sqrt();
    (snr, events)
}

/// Smallest τ (ms) meeting the constraint for strategy `n` at window `Δt`.
pub fn min_feasible_tau(ext: &Externals, n: u32, window: f64) -> f64 {
    let tail = poisson_tail(ext.rate * window / 1000.0, n);
    let per_ms = ext.rate * ext.n_afferents * tail / 1000.0;
    if per_ms > 0.0 {
        MIN_EVENTS_PER_TAU / per_ms
    } else {
        f64::INFINITY
    }
}

struct Problem<'a> {
    ext: &'a Externals,
    n: u32,
    lo: f64,
    hi: f64,
    evaluations: usize,
}

impl Problem<'_> {
    /// Projects `(ln τ, ln Δt)` onto the feasible box. `None` if no τ in
    /// bounds satisfies the constraint at this Δt.
    fn project(&self, p: [f64; 2]) -> Option<(f64, f64)> {
        let window = p[1].clamp(self.lo, self.hi).exp();
        let floor = min_feasible_tau(self.ext, self.n, window).ln();
        if floor > self.hi {
            return None;
        }
        Some((p[0].clamp(self.lo, self.hi).max(floor).exp(), window))
    }

    /// Negative SNR at the projected point, `+∞` where infeasible.
    fn cost(&mut self, p: [f64; 2]) -> f64 {
        self.evaluations += 1;
        match self.project(p) {
            Some((tau, window)) => -evaluate(self.ext, self.n, tau, window).0,
            None => f64::INFINITY,
        }
    }

    fn budget_left(&self, max: usize) -> bool {
        self.evaluations < max
    }
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

fn nelder_mead(problem: &mut Problem, start: [f64; 2], step: f64, settings: &SolverSettings) -> ([f64; 2], f64) {
    let mut simplex = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut values = simplex.map(|p| problem.cost(p));
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    while problem.budget_left(settings.max_evaluations) {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (values[2] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|p| (p[0] - simplex[0][0]).abs().max((p[1] - simplex[0][1]).abs()))
            .fold(0.0, f64::max);
        if values[0].is_finite() && spread <= settings.tolerance * values[0].abs() && size < 1e-6 {
            break;
        }
        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = problem.cost(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = problem.cost(expanded);
            (simplex[2], values[2]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = problem.cost(contracted);
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = problem.cost(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    (simplex[best], values[best])
}

/// Coordinate search with step halving. Never worsens the start.
fn compass(problem: &mut Problem, mut best: [f64; 2], mut value: f64, mut step: f64, settings: &SolverSettings) -> ([f64; 2], f64) {
    const DIRS: [[f64; 2]; 8] = [
        [1.0, 0.0],
        [-1.0, 0.0],
        [0.0, 1.0],
        [0.0, -1.0],
        [1.0, 1.0],
        [-1.0, -1.0],
        [1.0, -1.0],
        [-1.0, 1.0],
    ];
    while step > 1e-9 && problem.budget_left(settings.max_evaluations) {
        let mut improved = false;
        for d in DIRS {
            if !problem.budget_left(settings.max_evaluations) {
                break;
            }
            let trial = [best[0] + step * d[0], best[1] + step * d[1]];
            let v = problem.cost(trial);
            if v < value {
                best = trial;
                value = v;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, value)
}

/// Solves one strategy.
pub fn optimize_strategy(ext: &Externals, n: u32, settings: &SolverSettings) -> Result<StrategyResult> {
    ext.validate()?;
    settings.validate()?;
    if n == 0 {
        return param("strategy must be at least 1");
    }
    let mut problem = Problem {
        ext,
        n,
        lo: settings.lower.ln(),
        hi: settings.upper.ln(),
        evaluations: 0,
    };
    let axis = log_grid(settings.lower, settings.upper, settings.grid_points);
    let mut start: Option<([f64; 2], f64)> = None;
    for &x in &axis {
        for &y in &axis {
            let (snr, events) = evaluate(ext, n, x.exp(), y.exp());
            problem.evaluations += 1;
            // grid points are filtered, not projected
            if events >= MIN_EVENTS_PER_TAU && start.is_none_or(|(_, best)| -snr < best) {
                start = Some(([x, y], -snr));
            }
        }
    }
    let Some((point, value)) = start else {
        return Ok(StrategyResult {
            strategy: n,
            solution: None,
            evaluations: problem.evaluations,
        });
    };
    let step = axis[1] - axis[0];
    let budget = SolverSettings {
        max_evaluations: problem.evaluations + settings.max_evaluations,
        ..*settings
    };
    let (refined, refined_value) = nelder_mead(&mut problem, point, step, &budget);
    let (mut best, mut best_value) = if refined_value < value {
        (refined, refined_value)
    } else {
        (point, value)
    };
    (best, best_value) = compass(&mut problem, best, best_value, step / 8.0, &budget);
    let (tau, window) = problem
        .project(best)
        .ok_or_else(|| Error::Measurement("refinement left the feasible set".into()))?;
    let (snr, events) = evaluate(ext, n, tau, window);
    debug_assert!((snr + best_value).abs() <= 1e-12 * snr.max(1.0));
    Ok(StrategyResult {
        strategy: n,
        solution: Some(Solution {
            tau,
            window,
            snr,
            events_per_tau: events,
            constraint_active: events < MIN_EVENTS_PER_TAU * (1.0 + 1e-6),
        }),
        evaluations: problem.evaluations,
    })
}

/// Best `(n, τ, Δt)` over strategies `1..=max_strategy` with default
/// settings. Ties go to the smaller `n`.
pub fn optimize(rate: f64, jitter_half_width: f64, n_afferents: f64, max_strategy: u32) -> Result<OptimizationResult> {
    optimize_with(
        &Externals::new(rate, jitter_half_width, n_afferents)?,
        max_strategy,
        &SolverSettings::default(),
    )
}

pub fn optimize_with(ext: &Externals, max_strategy: u32, settings: &SolverSettings) -> Result<OptimizationResult> {
    if max_strategy == 0 {
        return param("max_strategy must be at least 1");
    }
    let per_strategy = (1..=max_strategy)
        .map(|n| optimize_strategy(ext, n, settings))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(u32, Solution)> = None;
    for r in &per_strategy {
        if let Some(s) = r.solution {
            if best.is_none_or(|(_, b)| s.snr > b.snr) {
                best = Some((r.strategy, s));
            }
        }
    }
    let (n, s) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no strategy up to {max_strategy} reaches {MIN_EVENTS_PER_TAU} events per tau at f={} Hz",
            ext.rate
        ))
    })?;
    Ok(OptimizationResult {
        externals: *ext,
        best_strategy: n,
        best_tau: s.tau,
        best_window: s.window,
        best_snr: s.snr,
        constraint_active: s.constraint_active,
        per_strategy,
    })
}

/// True iff no feasible point on a 21×21 grid spanning ±20% around the
/// reported `(τ, Δt)` beats it by more than a relative `1e-6`. Points below
/// the constraint are projected onto it; the reported SNR is recomputed.
pub fn verify_optimum(result: &OptimizationResult) -> bool {
    let ext = &result.externals;
    let n = result.best_strategy;
    let (reference, events) = evaluate(ext, n, result.best_tau, result.best_window);
    if events < MIN_EVENTS_PER_TAU * (1.0 - 1e-6) {
        return false;
    }
    let settings = SolverSettings::default();
    let scale = |c: f64, i: usize| c * (0.8 + 0.4 * i as f64 / 20.0);
    for i in 0..21 {
        let window = scale(result.best_window, i);
        if !(settings.lower..=settings.upper).contains(&window) {
            continue;
        }
        let floor = min_feasible_tau(ext, n, window);
        for j in 0..21 {
            let tau = scale(result.best_tau, j).max(floor);
            if tau > settings.upper || tau < settings.lower {
                continue;
            }
            if evaluate(ext, n, tau, window).0 > reference * (1.0 + 1e-6) {
                return false;
            }
        }
    }
    true
}

/// `points` log-spaced values covering `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return param(format!("bad log grid [{lo}, {hi}] with {points} points"));
    }
    let mut v: Vec<f64> = log_grid(lo, hi, points).into_iter().map(f64::exp).collect();
    v[0] = lo;
    v[points - 1] = hi;
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Panel {
    Strategy,
    Tau,
    WindowOverTau,
    Snr,
}

impl Panel {
    pub const ALL: [Panel; 4] = [Panel::Strategy, Panel::Tau, Panel::WindowOverTau, Panel::Snr];

    pub fn name(self) -> &'static str {
        match self {
            Panel::Strategy => "strategy",
            Panel::Tau => "tau",
            Panel::WindowOverTau => "window_over_tau",
            Panel::Snr => "snr",
        }
    }

    fn value(self, r: &OptimizationResult) -> f64 {
        match self {
            Panel::Strategy => r.best_strategy as f64,
            Panel::Tau => r.best_tau,
            Panel::WindowOverTau => r.best_window / r.best_tau,
            Panel::Snr => r.best_snr,
        }
    }
}

/// Optimal parameters over a rate × jitter plane. `cells[i][j]` holds the
/// result for `f_grid[i]`, `t_grid[j]`; `None` marks an infeasible cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSweep {
    pub f_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub n_afferents: f64,
    pub max_strategy: u32,
    pub cells: Vec<Vec<Option<OptimizationResult>>>,
}

fn check_increasing(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return param(format!("{name} grid is empty"));
    }
    if !grid.windows(2).all(|w| w[1] > w[0]) || !grid.iter().all(|v| v.is_finite()) {
        return param(format!("{name} grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Solves every cell in parallel with identical settings. The output order
/// does not depend on scheduling.
pub fn sweep_plane(
    f_grid: &[f64],
    t_grid: &[f64],
    n_afferents: f64,
    max_strategy: u32,
    settings: &SolverSettings,
) -> Result<PlaneSweep> {
    check_increasing("rate", f_grid)?;
    check_increasing("jitter", t_grid)?;
    let cells = f_grid
        .par_iter()
        .map(|&f| {
            t_grid
                .iter()
                .map(|&t| match optimize_with(&Externals::new(f, t, n_afferents)?, max_strategy, settings) {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::Infeasible(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaneSweep {
        f_grid: f_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        n_afferents,
        max_strategy,
        cells,
    })
}

impl PlaneSweep {
    pub fn cell(&self, i: usize, j: usize) -> Option<&OptimizationResult> {
        self.cells.get(i)?.get(j)?.as_ref()
    }

    /// Rows of `panel` values indexed like `cells`; NaN for infeasible cells.
    pub fn panel(&self, panel: Panel) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.as_ref().map_or(f64::NAN, |r| panel.value(r)))
                    .collect()
            })
            .collect()
    }

    /// One line per cell: `f,T,n,tau,dt,snr,constraint_active`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_hz,t_ms,n,tau_ms,dt_ms,snr,constraint_active\n");
        for (i, &f) in self.f_grid.iter().enumerate() {
            for (j, &t) in self.t_grid.iter().enumerate() {
                match self.cell(i, j) {
                    Some(r) => writeln!(
                        out,
                        "{f},{t},{},{},{},{},{}",
                        r.best_strategy, r.best_tau, r.best_window, r.best_snr, r.constraint_active
                    ),
                    None => writeln!(out, "{f},{t},,,,,"),
                }
                .expect("writing to a String cannot fail");
            }
        }
        out
    }

    /// Gnuplot `splot` grid: `f T value` lines, one blank line between rows.
    pub fn to_gnuplot(&self, panel: Panel) -> String {
        let values = self.panel(panel);
        let mut out = format!("# f_hz t_ms {}\n", panel.name());
        for (i, &f) in self.f_grid.iter().enumerate() {
            for (j, &t) in self.t_grid.iter().enumerate() {
                writeln!(out, "{f} {t} {}", values[i][j]).expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_point() -> Externals {
        Externals::new(3.2, 3.2, 1e4).unwrap()
    }

    #[test]
    fn reproduces_reference_optimum() {
        let r = optimize(3.2, 3.2, 1e4, 5).unwrap();
        assert_eq!(r.best_strategy, 1);
        assert!((16.0..=20.0).contains(&r.best_tau), "tau {}", r.best_tau);
        assert!((20.0..=26.0).contains(&r.best_window), "dt {}", r.best_window);
        assert!((72.0..=88.0).contains(&r.best_snr), "snr {}", r.best_snr);
        assert!(!r.constraint_active);
        assert_eq!(r.per_strategy.len(), 5);
        let max = r
            .per_strategy
            .iter()
            .filter_map(|s| s.solution.map(|s| s.snr))
            .fold(f64::MIN, f64::max);
        assert_eq!(max, r.best_snr);
    }

    #[test]
    fn solution_respects_constraint_and_budget() {
        for (f, t) in [(0.3, 0.3), (3.2, 3.2), (30.0, 30.0), (0.1, 100.0)] {
            let r = optimize(f, t, 1e4, 5).unwrap();
            for s in &r.per_strategy {
                assert!(s.evaluations <= 40 * 40 + 500);
                if let Some(sol) = s.solution {
                    assert!(sol.events_per_tau >= MIN_EVENTS_PER_TAU - 1e-6);
                    assert!((0.5..=1000.0).contains(&sol.tau) && (0.5..=1000.0).contains(&sol.window));
                }
            }
        }
    }

    #[test]
    fn small_rate_and_jitter_hit_constraint() {
        let r = optimize(0.3, 0.3, 1e4, 5).unwrap();
        assert!(r.constraint_active);
        let (_, events) = evaluate(&r.externals, r.best_strategy, r.best_tau, r.best_window);
        assert!((events - MIN_EVENTS_PER_TAU).abs() < 1e-6);
    }

    #[test]
    fn infeasible_strategies_are_reported() {
        let ext = Externals::new(0.1, 1.0, 50.0).unwrap();
        let r = optimize_strategy(&ext, 5, &SolverSettings::default()).unwrap();
        assert!(r.solution.is_none());
        assert!(matches!(
            optimize_with(&Externals::new(0.01, 1.0, 1.0).unwrap(), 3, &SolverSettings::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(optimize(0.0, 1.0, 1e4, 5).is_err());
        assert!(optimize(1.0, -1.0, 1e4, 5).is_err());
        assert!(optimize(1.0, 1.0, 1e4, 0).is_err());
        assert!(sweep_plane(&[1.0, 1.0], &[1.0], 1e4, 1, &SolverSettings::default()).is_err());
        assert!(sweep_plane(&[], &[1.0], 1e4, 1, &SolverSettings::default()).is_err());
    }

    #[test]
    fn verification_accepts_optimum_and_rejects_perturbation() {
        let r = optimize(3.2, 3.2, 1e4, 5).unwrap();
        assert!(verify_optimum(&r));
        let mut moved = r.clone();
        moved.best_tau *= 1.5;
        assert!(!verify_optimum(&moved));
        let corner = optimize(0.3, 0.3, 1e4, 5).unwrap();
        assert!(corner.constraint_active);
        assert!(verify_optimum(&corner));
    }

    #[test]
    fn min_feasible_tau_meets_constraint_exactly() {
        let ext = table_point();
        for n in 1..=4 {
            let tau = min_feasible_tau(&ext, n, 30.0);
            let (_, events) = evaluate(&ext, n, tau, 30.0);
            assert!((events - MIN_EVENTS_PER_TAU).abs() < 1e-9);
        }
    }

    #[test]
    fn exports_have_one_line_per_cell() {
        let sweep = sweep_plane(&[1.0, 3.0], &[1.0, 2.0, 4.0], 1e4, 2, &SolverSettings::default()).unwrap();
        assert_eq!(sweep.to_csv().lines().count(), 1 + 6);
        let grid = sweep.to_gnuplot(Panel::Snr);
        assert_eq!(grid.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count(), 6);
        assert_eq!(sweep.panel(Panel::Strategy).len(), 2);
    }
}
