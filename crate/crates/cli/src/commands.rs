use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikesnr::optimizer::{self, Externals, Panel, SolverSettings};
use spikesnr::spikes::io::write_csv;
use spikesnr::stdp::{self, OptimalityCriterion, SweepExternals};
use spikesnr::validation::{self, ValidationSetup};

use crate::config::Common;
use crate::error::CliError;

/// Output directory of one command. Every file goes through here so I/O
/// errors carry their path.
pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn create(common: &Common, command: &str) -> Result<Self, CliError> {
        let dir = if common.out.is_empty() {
            Path::new("results").join(command)
        } else {
            PathBuf::from(&common.out)
        };
        fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Resolved configuration plus tool identity: enough to rerun.
    pub fn manifest<T: Serialize>(&self, command: &str, config: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            tool: &'a str,
            version: &'a str,
            command: &'a str,
            config: &'a T,
        }
        self.json(
            "manifest.json",
            &Manifest {
                tool: "spikesnr",
                version: env!("CARGO_PKG_VERSION"),
                command,
                config,
            },
        )?;
        Ok(())
    }
}

fn f32_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    #[serde(flatten)]
    pub common: Common,
    pub n_afferents: usize,
    /// Hz
    pub rate: f64,
    /// L = Δt, ms
    pub window: f64,
    /// T, ms
    pub jitter: f64,
    pub patterns: usize,
    pub presentations: usize,
    /// ms
    pub period: f64,
    /// ms
    pub dt: f64,
    pub taus: Vec<f64>,
    pub strategies: Vec<u32>,
    pub rel_tol: f64,
    /// dump the potential of the first pattern at the first (strategy, τ)
    pub trace: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            n_afferents: 10_000,
            rate: 5.0,
            window: 20.0,
            jitter: 0.0,
            patterns: 100,
            presentations: 1000,
            period: 400.0,
            dt: 0.1,
            taus: vec![5.0, 10.0, 18.0, 30.0, 60.0],
            strategies: vec![1, 2],
            rel_tol: 0.05,
            trace: false,
        }
    }
}

pub fn validate(config: &ValidateConfig) -> Result<(), CliError> {
    let out = Artifacts::create(&config.common, "validate")?;
    out.manifest("validate", config)?;
    let setup = ValidationSetup {
        n_afferents: config.n_afferents,
        rate: config.rate,
        pattern_duration: config.window,
        jitter_half_width: config.jitter,
        n_patterns: config.patterns,
        n_presentations: config.presentations,
        period: config.period,
        dt_bin: config.dt,
        seed: config.common.seed,
    };
    eprintln!(
        "validate: {} patterns x {} presentations, strategies {:?}, taus {:?}",
        config.patterns, config.presentations, config.strategies, config.taus
    );
    let rows = validation::run_validation(&setup, &config.strategies, &config.taus)?;
    let mut csv = String::from("tau_ms,strategy,snr_analytic,snr_sim_mean,snr_sim_sd,snr_sim_se,n_patterns,agrees\n");
    let mut failed = Vec::new();
    for r in &rows {
        let ok = r.agrees(config.rel_tol);
        if !ok {
            failed.push(format!("n={} tau={}", r.strategy, r.tau));
        }
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.tau, r.strategy, r.snr_analytic, r.snr_sim_mean, r.snr_sim_sd, r.snr_sim_se, r.n_patterns, ok
        )
        .expect("writing to a String cannot fail");
    }
    out.write("validation.csv", &csv)?;
    print!("{csv}");
    if config.trace {
        if let (Some(&n), Some(&tau)) = (config.strategies.first(), config.taus.first()) {
            let mut trace = Vec::new();
            let m = validation::measure_pattern(&setup, 0, n, tau, Some(&mut trace))?;
            out.write("trace.f32", f32_bytes(trace))?;
            let mut vmax = String::from("presentation_index,v_max\n");
            for (k, v) in m.presentation_maxima.iter().enumerate() {
                writeln!(vmax, "{k},{v}").expect("writing to a String cannot fail");
            }
            out.write("vmax.csv", vmax)?;
        }
    }
    eprintln!("validate: {} of {} points agree", rows.len() - failed.len(), rows.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("simulation disagrees with theory at {}", failed.join(", "))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    #[serde(flatten)]
    pub common: Common,
    /// Hz
    pub rate: f64,
    /// T, ms
    pub jitter: f64,
    pub n_afferents: f64,
    pub max_strategy: u32,
    pub grid_points: usize,
    pub max_evaluations: usize,
    pub tolerance: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            common: Common::default(),
            rate: 3.2,
            jitter: 3.2,
            n_afferents: 10_000.0,
            max_strategy: 5,
            grid_points: s.grid_points,
            max_evaluations: s.max_evaluations,
            tolerance: s.tolerance,
        }
    }
}

impl OptimizeConfig {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            grid_points: self.grid_points,
            max_evaluations: self.max_evaluations,
            tolerance: self.tolerance,
            ..SolverSettings::default()
        }
    }
}

pub fn optimize(config: &OptimizeConfig) -> Result<(), CliError> {
    let out = Artifacts::create(&config.common, "optimize")?;
    out.manifest("optimize", config)?;
    let ext = Externals::new(config.rate, config.jitter, config.n_afferents)?;
    let result = optimizer::optimize_with(&ext, config.max_strategy, &config.settings())?;
    out.json("optimize.json", &result)?;
    println!(
        "n={} tau_ms={} dt_ms={} snr={} constraint_active={}",
        result.best_strategy, result.best_tau, result.best_window, result.best_snr, result.constraint_active
    );
    if optimizer::verify_optimum(&result) {
        Ok(())
    } else {
        Err(CliError::Check("a neighbouring point beats the reported optimum".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    #[serde(flatten)]
    pub common: Common,
    /// Hz
    pub f_min: f64,
    pub f_max: f64,
    pub f_points: usize,
    /// ms
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub n_afferents: f64,
    pub max_strategy: u32,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            f_min: 0.1,
            f_max: 100.0,
            f_points: 25,
            t_min: 0.1,
            t_max: 100.0,
            t_points: 25,
            n_afferents: 10_000.0,
            max_strategy: 5,
        }
    }
}

/// Rows are rates, columns jitters; NaN marks infeasible cells.
fn matrix_csv(f_grid: &[f64], t_grid: &[f64], values: &[Vec<f64>]) -> String {
    let mut out = String::from("f_hz");
    for t in t_grid {
        write!(out, ",{t}").expect("writing to a String cannot fail");
    }
    out.push('\n');
    for (f, row) in f_grid.iter().zip(values) {
        write!(out, "{f}").expect("writing to a String cannot fail");
        for v in row {
            write!(out, ",{v}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

pub fn map(config: &MapConfig) -> Result<(), CliError> {
    let out = Artifacts::create(&config.common, "map")?;
    out.manifest("map", config)?;
    let f_grid = optimizer::log_space(config.f_min, config.f_max, config.f_points)?;
    let t_grid = optimizer::log_space(config.t_min, config.t_max, config.t_points)?;
    eprintln!("map: {} x {} cells", f_grid.len(), t_grid.len());
    let sweep = optimizer::sweep_plane(
        &f_grid,
        &t_grid,
        config.n_afferents,
        config.max_strategy,
        &SolverSettings::default(),
    )?;
    out.write("map.csv", sweep.to_csv())?;
    out.json("map.json", &sweep)?;
    for panel in Panel::ALL {
        let name = panel.name();
        out.write(&format!("{name}.csv"), matrix_csv(&f_grid, &t_grid, &sweep.panel(panel)))?;
        out.write(&format!("{name}.dat"), sweep.to_gnuplot(panel))?;
    }
    let infeasible = sweep.cells.iter().flatten().filter(|c| c.is_none()).count();
    eprintln!("map: done, {infeasible} infeasible cells");
    Ok(())
}

/// Fields shared by single runs and sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub n_afferents: usize,
    /// Hz
    pub rate: f64,
    /// T, ms
    pub jitter: f64,
    /// τ, ms
    pub tau: f64,
    /// ms
    pub dt: f64,
    /// L, ms
    pub pattern_duration: f64,
    /// ms
    pub period: f64,
    pub presentations: usize,
    pub trace_increment: f64,
    /// ms
    pub trace_tau: f64,
    /// optimal window the learned one is compared with, ms
    pub window: f64,
    pub margin: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        let ext = SweepExternals::default();
        Self {
            n_afferents: ext.n_afferents,
            rate: ext.rate,
            jitter: ext.jitter_half_width,
            tau: ext.tau,
            dt: ext.dt_bin,
            pattern_duration: ext.pattern_duration,
            period: ext.period,
            presentations: ext.n_presentations,
            trace_increment: ext.trace_increment,
            trace_tau: ext.trace_tau,
            window: ext.criterion.window,
            margin: ext.criterion.margin,
        }
    }
}

impl LearningParams {
    fn externals(&self, seed: u64, snapshot_every: Option<usize>) -> SweepExternals {
        SweepExternals {
            n_afferents: self.n_afferents,
            rate: self.rate,
            jitter_half_width: self.jitter,
            tau: self.tau,
            dt_bin: self.dt,
            pattern_duration: self.pattern_duration,
            period: self.period,
            n_presentations: self.presentations,
            trace_increment: self.trace_increment,
            trace_tau: self.trace_tau,
            criterion: OptimalityCriterion {
                window: self.window,
                margin: self.margin,
            },
            seed,
            snapshot_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdpRunConfig {
    #[serde(flatten)]
    pub common: Common,
    #[serde(flatten)]
    pub learning: LearningParams,
    pub theta: f64,
    pub w_out: f64,
    /// run index; selects pattern, noise and jitter under the master seed
    pub run: u64,
    /// store the weights every k presentations; 0 disables
    pub snapshot_every: usize,
}

impl Default for StdpRunConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            learning: LearningParams::default(),
            theta: 250.0,
            w_out: -1.6e-3,
            run: 0,
            snapshot_every: 0,
        }
    }
}

pub fn stdp_run(config: &StdpRunConfig) -> Result<(), CliError> {
    let out = Artifacts::create(&config.common, "stdp-run")?;
    out.manifest("stdp-run", config)?;
    let snapshots = (config.snapshot_every > 0).then_some(config.snapshot_every);
    let ext = config.learning.externals(config.common.seed, snapshots);
    eprintln!(
        "stdp-run: theta={} w_out={} run={} presentations={}",
        config.theta, config.w_out, config.run, config.learning.presentations
    );
    let (outcome, pattern) = stdp::run_seeded(&ext, config.theta, config.w_out, config.run)?;
    out.json("outcome.json", &outcome)?;
    let mut posts = String::from("time_ms\n");
    for t in &outcome.post_spike_times {
        writeln!(posts, "{t}").expect("writing to a String cannot fail");
    }
    out.write("post_spikes.csv", posts)?;
    let mut weights = String::from("afferent_index,weight\n");
    for (i, w) in outcome.final_weights.iter().enumerate() {
        writeln!(weights, "{i},{w}").expect("writing to a String cannot fail");
    }
    out.write("weights.csv", weights)?;
    let mut pattern_csv = Vec::new();
    write_csv(&pattern.spikes, &mut pattern_csv)?;
    out.write("pattern.csv", pattern_csv)?;
    if !outcome.snapshots.is_empty() {
        out.write("snapshots.f32", f32_bytes(outcome.snapshots.iter().flatten().copied()))?;
    }
    println!(
        "binarized={} optimal={} reinforced={} median_post_spikes={} divergent={}",
        outcome.binarized,
        outcome.is_optimal,
        outcome.reinforced_set.len(),
        outcome.median_post_spikes,
        outcome.divergent
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdpSweepConfig {
    #[serde(flatten)]
    pub common: Common,
    #[serde(flatten)]
    pub learning: LearningParams,
    pub theta_start: f64,
    pub theta_count: usize,
    pub w_out_start: f64,
    pub w_out_count: usize,
    /// geometric ratio of both grids
    pub ratio: f64,
    pub runs: usize,
}

impl Default for StdpSweepConfig {
    fn default() -> Self {
        Self {
            common: Common::default(),
            learning: LearningParams::default(),
            theta_start: 250.0,
            theta_count: 5,
            w_out_start: -1.6e-3,
            w_out_count: 9,
            ratio: 1.1,
            runs: 100,
        }
    }
}

pub fn stdp_sweep(config: &StdpSweepConfig) -> Result<(), CliError> {
    let out = Artifacts::create(&config.common, "stdp-sweep")?;
    out.manifest("stdp-sweep", config)?;
    let thetas = stdp::geometric_grid(config.theta_start, config.ratio, config.theta_count);
    let w_outs = stdp::geometric_grid(config.w_out_start, config.ratio, config.w_out_count);
    let ext = config.learning.externals(config.common.seed, None);
    eprintln!(
        "stdp-sweep: {} x {} cells, {} runs each",
        thetas.len(),
        w_outs.len(),
        config.runs
    );
    let result = stdp::sweep_modes(&thetas, &w_outs, config.runs, &ext)?;
    let mut csv = String::from("theta,w_out,p,mode,n_runs,n_divergent\n");
    for c in &result.cells {
        let mode = c.mode.map_or(String::new(), |m| m.to_string());
        writeln!(csv, "{},{},{},{},{},{}", c.theta, c.w_out, c.p, mode, c.n_runs, c.n_divergent)
            .expect("writing to a String cannot fail");
    }
    out.write("sweep.csv", &csv)?;
    out.json("sweep.json", &result)?;
    print!("{csv}");
    Ok(())
}
