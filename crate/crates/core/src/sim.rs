//! Fixed-step RK4 integration, limit classification and initial-condition
//! sweeps.
//!
//! A sweep is an estimator: a finite grid of initial conditions cannot
//! certify a statement about almost every initial condition, and isolated
//! exceptional cells (states sitting on a basin boundary) show up as such.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::BoxGrid;
use crate::iss_model::{region_a, region_b, region_contains, sublevel_radius, Subsystem, SystemModel};
use crate::scalar_fn::SgcAnalysis;
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 50.0;
pub const DEFAULT_CONV_TOL: f64 = 1e-3;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.1;
pub const DEFAULT_ESCAPE_BOUND: f64 = 1e6;

/// Header written at the top of every sweep report.
pub const SWEEP_NOTE: &str = "Grid-fraction estimate over finitely many initial conditions; \
it does not certify a property of almost every initial condition.";

/// One classical Runge–Kutta stepper with preallocated stages.
struct Rk4<'a> {
    model: &'a SystemModel,
    u: [f64; 2],
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(model: &'a SystemModel, u: [f64; 2]) -> Self {
        let n = model.state_dim();
        Rk4 { model, u, k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    fn step(&mut self, x: &mut [f64], dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        self.model.field(x, self.u, k1);
        for j in 0..x.len() {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        self.model.field(tmp, self.u, k2);
        for j in 0..x.len() {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        self.model.field(tmp, self.u, k3);
        for j in 0..x.len() {
            tmp[j] = x[j] + dt * k3[j];
        }
        self.model.field(tmp, self.u, k4);
        for j in 0..x.len() {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_step(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("need dt > 0 and t_end > 0, got dt = {dt}, t_end = {t_end}")));
    }
    let steps = (t_end / dt).round();
    if steps < 1.0 {
        return Err(Error::invalid("t_end is shorter than one step"));
    }
    Ok(steps as usize)
}

/// Integrates `steps` RK4 steps from `x0`, calling `visit(k, x)` after
/// every step `k = 1..=steps` (and once with `k = 0` for `x0`). Stops early
/// when the state leaves the escape ball or stops being finite; returns the
/// final state and the step at which that happened.
///
/// Once a step reproduces its input bit for bit the map has reached a
/// floating-point fixed point, so the remaining steps are visited without
/// being recomputed.
fn run<F>(
    model: &SystemModel,
    x0: &[f64],
    u: [f64; 2],
    dt: f64,
    steps: usize,
    escape: f64,
    mut visit: F,
) -> (Vec<f64>, Option<usize>)
where
    F: FnMut(usize, &[f64]),
{
    let mut x = x0.to_vec();
    let mut prev = x.clone();
    let mut rk = Rk4::new(model, u);
    visit(0, &x);
    for k in 1..=steps {
        prev.copy_from_slice(&x);
        rk.step(&mut x, dt);
        if x.iter().any(|v| !v.is_finite()) || norm(&x) > escape {
            return (x, Some(k));
        }
        if x == prev {
            for j in k..=steps {
                visit(j, &x);
            }
            break;
        }
        visit(k, &x);
    }
    (x, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Keep every `record_stride`-th state (the last one is always kept).
    pub record_stride: usize,
    pub escape_bound: f64,
    /// Repeat the run at `dt/2` and record the endpoint difference.
    pub error_estimate: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { record_stride: 1, escape_bound: DEFAULT_ESCAPE_BOUND, error_estimate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    ConvergedToEquilibrium { index: usize, point: Vec<f64> },
    EnteredBall { radius: f64 },
    Escaped { bound: f64 },
    Undecided,
}

impl Classification {
    pub fn tag(&self) -> String {
        match self {
            Classification::ConvergedToEquilibrium { index, .. } => format!("equilibrium_{index}"),
            Classification::EnteredBall { .. } => "entered_ball".into(),
            Classification::Escaped { .. } => "escaped".into(),
            Classification::Undecided => "undecided".into(),
        }
    }

    /// Converged or stayed bounded.
    pub fn is_settled(&self) -> bool {
        matches!(self, Classification::ConvergedToEquilibrium { .. } | Classification::EnteredBall { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim` values per time.
    pub states: Vec<f64>,
    pub u_bounds: [f64; 2],
    /// Time at which the state left the escape ball, if it did.
    pub escaped_at: Option<f64>,
    pub escape_bound: f64,
    /// Endpoint difference between the `dt` and `dt/2` runs, scaled by
    /// `16/15` (Richardson estimate of the `dt` error).
    pub error_estimate: Option<f64>,
    pub classification: Option<Classification>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "t,{}", cols.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self.state(k).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{:.16e},{}", self.times[k], row.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-step RK4 from `x0` over `[0, t_end]` with constant input bounds.
pub fn integrate(
    model: &SystemModel,
    x0: &[f64],
    u: [f64; 2],
    t_end: f64,
    dt: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    let steps = check_step(t_end, dt)?;
    if x0.len() != model.state_dim() {
        return Err(Error::invalid(format!("x0 has {} entries, expected {}", x0.len(), model.state_dim())));
    }
    let stride = opts.record_stride.max(1);
    let dim = x0.len();
    let mut times = Vec::with_capacity(steps / stride + 2);
    let mut states = Vec::with_capacity((steps / stride + 2) * dim);
    let mut last = (0, x0.to_vec());
    let (end, escaped) = run(model, x0, u, dt, steps, opts.escape_bound, |k, x| {
        if k % stride == 0 {
            times.push(k as f64 * dt);
            states.extend_from_slice(x);
        }
        last = (k, x.to_vec());
    });
    if last.0 % stride != 0 {
        times.push(last.0 as f64 * dt);
        states.extend_from_slice(&last.1);
    }
    let escaped_at = escaped.map(|k| k as f64 * dt);
    if let Some(t) = escaped_at {
        // Keep the offending state so the escape is visible in exports.
        if end.iter().all(|v| v.is_finite()) {
            times.push(t);
            states.extend_from_slice(&end);
        }
    }
    let error_estimate = if opts.error_estimate && escaped.is_none() {
        let (fine, esc) = run(model, x0, u, dt / 2.0, 2 * steps, opts.escape_bound, |_, _| {});
        esc.is_none().then(|| {
            let diff: Vec<f64> = fine.iter().zip(&end).map(|(a, b)| a - b).collect();
            norm(&diff) * 16.0 / 15.0
        })
    } else {
        None
    };
    Ok(Trajectory {
        dt,
        dim,
        times,
        states,
        u_bounds: u,
        escaped_at,
        escape_bound: opts.escape_bound,
        error_estimate,
        classification: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub conv_tol: f64,
    /// Trailing fraction of the time span that forms the window.
    pub window_fraction: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { conv_tol: DEFAULT_CONV_TOL, window_fraction: DEFAULT_WINDOW_FRACTION }
    }
}

/// Summary of the final window of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub samples: usize,
    pub max_norm: f64,
    /// Per equilibrium: largest distance over the window.
    pub max_dist: Vec<f64>,
    /// Per equilibrium: distance at the first and last window sample.
    pub first_dist: Vec<f64>,
    pub last_dist: Vec<f64>,
    /// `max_i V_i` at the first and last window sample.
    pub first_storage: f64,
    pub last_storage: f64,
}

impl WindowStats {
    fn new(equilibria: usize) -> Self {
        WindowStats {
            samples: 0,
            max_norm: 0.0,
            max_dist: vec![0.0; equilibria],
            first_dist: vec![f64::NAN; equilibria],
            last_dist: vec![f64::NAN; equilibria],
            first_storage: f64::NAN,
            last_storage: f64::NAN,
        }
    }

    fn observe(&mut self, model: &SystemModel, equilibria: &[Vec<f64>], x: &[f64]) {
        let first = self.samples == 0;
        self.samples += 1;
        self.max_norm = self.max_norm.max(norm(x));
        for (j, e) in equilibria.iter().enumerate() {
            let d = x.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            self.max_dist[j] = self.max_dist[j].max(d);
            if first {
                self.first_dist[j] = d;
            }
            self.last_dist[j] = d;
        }
        let [v1, v2] = model.storage_values(x);
        if first {
            self.first_storage = v1.max(v2);
        }
        self.last_storage = v1.max(v2);
    }

    /// Nearest equilibrium the window stays within `conv_tol` of while not
    /// moving away from it.
    fn converged(&self, conv_tol: f64) -> Option<usize> {
        (0..self.max_dist.len())
            .filter(|&j| self.max_dist[j] <= conv_tol && self.last_dist[j] <= self.first_dist[j])
            .min_by(|&a, &b| self.max_dist[a].total_cmp(&self.max_dist[b]))
    }
}

fn decide(
    stats: &WindowStats,
    equilibria: &[Vec<f64>],
    escaped: bool,
    escape_bound: f64,
    conv_tol: f64,
) -> Classification {
    if escaped {
        return Classification::Escaped { bound: escape_bound };
    }
    if stats.samples == 0 {
        return Classification::Undecided;
    }
    if let Some(j) = stats.converged(conv_tol) {
        return Classification::ConvergedToEquilibrium { index: j, point: equilibria[j].clone() };
    }
    if stats.max_norm < escape_bound {
        Classification::EnteredBall { radius: stats.max_norm }
    } else {
        Classification::Undecided
    }
}

fn window_start(len: usize, fraction: f64) -> usize {
    let w = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
    len - w
}

/// Window statistics of a recorded trajectory.
pub fn window_stats(
    traj: &Trajectory,
    model: &SystemModel,
    equilibria: &[Vec<f64>],
    window_fraction: f64,
) -> WindowStats {
    let mut stats = WindowStats::new(equilibria.len());
    if traj.is_empty() {
        return stats;
    }
    for k in window_start(traj.len(), window_fraction)..traj.len() {
        stats.observe(model, equilibria, traj.state(k));
    }
    stats
}

/// Classifies the limit behaviour from the final window.
pub fn classify(
    traj: &Trajectory,
    model: &SystemModel,
    equilibria: &[Vec<f64>],
    opts: ClassifyOptions,
) -> Classification {
    let stats = window_stats(traj, model, equilibria, opts.window_fraction);
    decide(&stats, equilibria, traj.escaped_at.is_some(), traj.escape_bound, opts.conv_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub t_end: f64,
    pub dt: f64,
    pub escape_bound: f64,
    pub classify: ClassifyOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            t_end: DEFAULT_T_END,
            dt: DEFAULT_DT,
            escape_bound: DEFAULT_ESCAPE_BOUND,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub x0: Vec<f64>,
    pub class: Classification,
    pub final_norm: f64,
    /// `max_i V_i` grew across the final window.
    pub storage_increased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub note: String,
    pub grid: BoxGrid,
    pub u_bounds: [f64; 2],
    pub options: SweepOptions,
    pub equilibria: Vec<Vec<f64>>,
    pub counts: BTreeMap<String, usize>,
    /// Cells that neither converged nor stayed bounded.
    pub nonconverging_fraction: f64,
    /// Largest final-window norm among settled cells.
    pub estimated_radius: f64,
    /// Settled cells whose `max_i V_i` grew across the final window.
    pub storage_increases: usize,
    pub cells: Vec<SweepCell>,
}

/// Integrates from one initial condition without recording the path.
pub fn simulate_cell(
    model: &SystemModel,
    x0: &[f64],
    u: [f64; 2],
    equilibria: &[Vec<f64>],
    opts: &SweepOptions,
) -> Result<SweepCell> {
    let steps = check_step(opts.t_end, opts.dt)?;
    let from = window_start(steps + 1, opts.classify.window_fraction);
    let mut stats = WindowStats::new(equilibria.len());
    let (end, escaped) = run(model, x0, u, opts.dt, steps, opts.escape_bound, |k, x| {
        if k >= from {
            stats.observe(model, equilibria, x);
        }
    });
    let class = decide(&stats, equilibria, escaped.is_some(), opts.escape_bound, opts.classify.conv_tol);
    let storage_increased = class.is_settled() && stats.last_storage > stats.first_storage + 1e-9;
    Ok(SweepCell { x0: x0.to_vec(), class, final_norm: norm(&end), storage_increased })
}

/// Integrates from every point of `grid` in parallel and aggregates the
/// classifications.
pub fn sweep(
    model: &SystemModel,
    grid: &BoxGrid,
    u: [f64; 2],
    equilibria: &[Vec<f64>],
    opts: SweepOptions,
) -> Result<SweepReport> {
    grid.validate()?;
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if grid.dim() != model.state_dim() {
        return Err(Error::invalid("sweep grid dimension does not match the model"));
    }
    check_step(opts.t_end, opts.dt)?;
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|flat| simulate_cell(model, &grid.point(flat), u, equilibria, &opts))
        .collect::<Result<Vec<_>>>()?;

    let mut counts = BTreeMap::new();
    let mut radius: f64 = 0.0;
    let mut unsettled = 0;
    let mut storage_increases = 0;
    for c in &cells {
        *counts.entry(c.class.tag()).or_insert(0) += 1;
        match &c.class {
            Classification::ConvergedToEquilibrium { point, .. } => radius = radius.max(norm(point)).max(c.final_norm),
            Classification::EnteredBall { radius: r } => radius = radius.max(*r),
            _ => unsettled += 1,
        }
        storage_increases += c.storage_increased as usize;
    }
    Ok(SweepReport {
        note: SWEEP_NOTE.into(),
        grid: grid.clone(),
        u_bounds: u,
        options: opts,
        equilibria: equilibria.to_vec(),
        counts,
        nonconverging_fraction: unsettled as f64 / cells.len() as f64,
        estimated_radius: radius,
        storage_increases,
        cells,
    })
}

impl SweepReport {
    /// Gridded CSV: `x1_0,x2_0,class,final_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let heads: Vec<String> = (1..=self.grid.dim()).map(|j| format!("x{j}_0")).collect();
        writeln!(w, "{},class,final_norm", heads.join(","))?;
        for c in &self.cells {
            let xs: Vec<String> = c.x0.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{},{},{:.16e}", xs.join(","), c.class.tag(), c.final_norm)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Offender {
    pub x0: Vec<f64>,
    pub x_end: Vec<f64>,
    /// Largest `V_i(x_i(t_end)) - cap_i` over `i`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub k: usize,
    pub u_bounds: [f64; 2],
    pub a_caps: [f64; 2],
    pub b_caps: [f64; 2],
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Samples ending in `A_k` inflated by `radius`.
    pub inside_fraction: f64,
    pub escaped: usize,
    pub worst: Option<Theorem1Offender>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Options {
    pub samples: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Inflation of the `A_k` caps (storage units).
    pub radius: f64,
    pub seed: u64,
}

/// Samples `B_k \ A_k` uniformly, integrates, and reports how many runs end
/// within the inflated `A_k`.
pub fn verify_theorem1_claim(
    model: &SystemModel,
    analysis: &SgcAnalysis,
    k: usize,
    u: [f64; 2],
    opts: Theorem1Options,
) -> Result<Theorem1Report> {
    let a = region_a(analysis, model, k)?;
    let b = region_b(analysis, model, k)?;
    if b.unbounded {
        return Err(Error::UnboundedRegion { k });
    }
    if opts.samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let steps = check_step(opts.t_end, opts.dt)?;
    let (n1, n2) = model.dims();
    let r1 = sublevel_radius(model, Subsystem::One, b.v1_cap)?;
    let r2 = sublevel_radius(model, Subsystem::Two, b.v2_cap)?;
    let half: Vec<f64> = std::iter::repeat_n(r1, n1).chain(std::iter::repeat_n(r2, n2)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.samples);
    let mut attempts = 0usize;
    while starts.len() < opts.samples {
        attempts += 1;
        if attempts > 1000 * opts.samples {
            return Err(Error::Construction(format!("B_{k} \\ A_{k} is too thin to sample")));
        }
        let x: Vec<f64> = half.iter().map(|&h| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 }).collect();
        if region_contains(&b, model, &x) && !region_contains(&a, model, &x) {
            starts.push(x);
        }
    }

    let caps = a.caps();
    let ends = starts
        .par_iter()
        .map(|x0| run(model, x0, u, opts.dt, steps, DEFAULT_ESCAPE_BOUND, |_, _| {}))
        .collect::<Vec<_>>();
    let mut inside = 0;
    let mut escaped = 0;
    let mut worst: Option<Theorem1Offender> = None;
    for (x0, (end, esc)) in starts.iter().zip(ends) {
        if esc.is_some() {
            escaped += 1;
        }
        let v = model.storage_values(&end);
        let excess = (v[0] - caps[0]).max(v[1] - caps[1]);
        let ok = esc.is_none() && excess <= opts.radius;
        inside += ok as usize;
        if worst.as_ref().is_none_or(|w| excess > w.excess) {
            worst = Some(Theorem1Offender { x0: x0.clone(), x_end: end, excess });
        }
    }
    Ok(Theorem1Report {
        k,
        u_bounds: u,
        a_caps: caps,
        b_caps: b.caps(),
        radius: opts.radius,
        samples: opts.samples,
        seed: opts.seed,
        inside_fraction: inside as f64 / opts.samples as f64,
        escaped,
        worst,
    })
}
