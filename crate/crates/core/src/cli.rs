//! Command-line front end.
//!
//! Every subcommand writes its artifacts into the output directory and
//! returns the list of checks it ran. The process exits with 0 when every
//! check passed, 1 when some check failed and 2 on errors.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{DensityChoice, Expectation, GateChoice, RegionRole, RunConfig, TermCount};
use crate::density::{
    check_density_propagation, derive_gamma_k_example, gap_shells, DensityCheckOptions, DensityCheckReport, DensityFn,
    GapShell, Gate,
};
use crate::example_system::{
    example_model, increasing_intervals, numerically_constant_regions, ClosedInterval, Example, Terms,
};
use crate::grid::BoxGrid;
use crate::iss_model::SystemModel;
use crate::output::{write_csv_rows, write_json};
use crate::scalar_fn::{compose, find_sgc_intervals, ScalarFn, SgcAnalysis};
use crate::sim::{classify, integrate, sweep, ClassifyOptions, IntegrateOptions, SweepOptions};
use crate::svg::{Circle, Plot, Series};

/// Grid step for the piecewise-linear lower bound inside `γ_k`.
const GAMMA_K_GRID_STEP: f64 = 1e-3;
/// Input bounds of the forced-response figure.
const FORCED_INPUTS: [f64; 2] = [3.0, 4.0];
/// Radius of the reference circle in the forced-response figure.
const FORCED_CIRCLE: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(name = "smallgain", version, about = "Interval-wise small-gain and density-propagation checks")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid scans and sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Number of summands, or "inf".
    #[arg(long, global = true)]
    pub n: Option<String>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub u1: Option<f64>,
    #[arg(long, global = true)]
    pub u2: Option<f64>,
    /// Precision threshold of the rounding model.
    #[arg(long, global = true)]
    pub precision: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate γ12, γ21 and γ12∘γ21 against the identity.
    Gains,
    /// Detect the increasing regions of g and scan the loop gain.
    Sgc,
    /// Density-propagation checks on the configured regions.
    Density,
    /// Trajectories and an initial-condition sweep.
    Simulate,
    /// Regenerate the three figures.
    Figures,
    /// Run every subcommand.
    CheckAll,
}

/// A named pass/fail outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

impl Cli {
    /// Loads the config file (if any) and applies flag overrides.
    pub fn resolve_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(n) = &self.n {
            cfg.n = n.parse::<TermCount>()?;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(u) = self.u1 {
            cfg.u1_bound = u;
        }
        if let Some(u) = self.u2 {
            cfg.u2_bound = u;
        }
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Shared state of one invocation.
pub struct Context {
    pub cfg: RunConfig,
    pub ex: Arc<Example>,
    pub model: SystemModel,
    pub scan_bound: f64,
    pub grid_step: f64,
}

impl Context {
    pub fn new(cfg: RunConfig) -> anyhow::Result<Self> {
        let ex = Arc::new(Example::new(cfg.example_params()?)?);
        let model = example_model(&ex, cfg.delta)?;
        let scan_bound = cfg.scan_bound.unwrap_or_else(|| ex.scan_bound());
        let grid_step = cfg.grid_step.unwrap_or(1e-3 * scan_bound);
        fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
        Ok(Context { cfg, ex, model, scan_bound, grid_step })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn u(&self) -> [f64; 2] {
        [self.cfg.u1_bound, self.cfg.u2_bound]
    }

    /// Origin followed by `(r_k, r_k)`.
    fn equilibria(&self) -> Vec<Vec<f64>> {
        std::iter::once(vec![0.0, 0.0]).chain(self.ex.equilibria().into_iter().map(|r| vec![r, r])).collect()
    }

    fn increasing(&self) -> anyhow::Result<SgcAnalysis> {
        Ok(increasing_intervals(&self.ex, self.scan_bound, self.grid_step, self.cfg.refine_tol)?)
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(checks) => {
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<Vec<Check>> {
    let cfg = cli.resolve_config()?;
    if let Some(k) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let ctx = Context::new(cfg)?;
    match cli.command {
        Command::Gains => cmd_gains(&ctx),
        Command::Sgc => cmd_sgc(&ctx),
        Command::Density => cmd_density(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Figures => cmd_figures(&ctx),
        Command::CheckAll => {
            let mut all = Vec::new();
            for f in [cmd_gains, cmd_sgc, cmd_density, cmd_simulate, cmd_figures] {
                all.extend(f(&ctx)?);
            }
            Ok(all)
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
}

pub fn cmd_gains(ctx: &Context) -> anyhow::Result<Vec<Check>> {
    let g12 = ctx.model.gamma_12();
    let g21 = ctx.model.gamma_21();
    let loop_gain = compose(g12, g21);
    let mut rows = Vec::with_capacity(ctx.cfg.gain_samples);
    for s in linspace(0.0, ctx.scan_bound, ctx.cfg.gain_samples) {
        rows.push(vec![s, g12.eval(s)?, g21.eval(s)?, loop_gain.eval(s)?, s]);
    }
    write_csv_rows(&ctx.path("gains.csv"), "s,g12,g21,comp,id", rows.iter().cloned())?;

    let mut plot = Plot::new(format!("Gains, delta = {}", ctx.cfg.delta), "s", "value");
    for (col, label, color) in [(1, "g12", "#1f77b4"), (3, "g12 o g21", "#d62728"), (4, "id", "#555555")] {
        plot.series.push(Series::line(label, color, rows.iter().map(|r| (r[0], r[col])).collect()));
    }
    fs::write(ctx.path("gains.svg"), plot.render())?;
    Ok(vec![Check::new("gains", true, format!("{} samples on [0, {}]", rows.len(), ctx.scan_bound))])
}

#[derive(Serialize)]
struct SgcDoc<'a> {
    #[serde(flatten)]
    analysis: &'a SgcAnalysis,
    source: &'static str,
    n: TermCount,
    a: f64,
    precision: f64,
    rounding_threshold: f64,
    numerically_constant_regions: Vec<ClosedInterval>,
    equilibria: Vec<f64>,
}

#[derive(Serialize)]
struct ScanDoc<'a> {
    #[serde(flatten)]
    analysis: &'a SgcAnalysis,
    source: &'static str,
    delta: f64,
    gamma_12: String,
    gamma_21: String,
    /// Equilibria `r_k` lying in no small-gain interval.
    equilibria_in_gaps: Vec<f64>,
}

pub fn cmd_sgc(ctx: &Context) -> anyhow::Result<Vec<Check>> {
    let inc = ctx.increasing()?;
    let constant = numerically_constant_regions(&ctx.ex, ctx.scan_bound, ctx.grid_step, ctx.cfg.refine_tol)?;
    let doc = SgcDoc {
        analysis: &inc,
        source: "increasing_regions_of_g",
        n: ctx.cfg.n.clone(),
        a: ctx.ex.a(),
        precision: ctx.cfg.precision,
        rounding_threshold: ctx.ex.threshold(),
        numerically_constant_regions: constant,
        equilibria: ctx.ex.equilibria(),
    };
    write_json(&ctx.path("sgc.json"), "sgc_analysis", &doc)?;

    let scan = find_sgc_intervals(
        ctx.model.gamma_12(),
        ctx.model.gamma_21(),
        ctx.scan_bound,
        ctx.grid_step,
        ctx.cfg.refine_tol,
    )?;
    let in_gaps = ctx
        .ex
        .equilibria()
        .into_iter()
        .filter(|&r| !scan.intervals.iter().any(|iv| r > iv.lo && (r < iv.hi || iv.right_open)))
        .collect();
    let scan_doc = ScanDoc {
        analysis: &scan,
        source: "loop_gain_sign_scan",
        delta: ctx.cfg.delta,
        gamma_12: ctx.model.gamma_12().label().to_string(),
        gamma_21: ctx.model.gamma_21().label().to_string(),
        equilibria_in_gaps: in_gaps,
    };
    write_json(&ctx.path("sgc_scan.json"), "sgc_analysis", &scan_doc)?;

    let mut checks = Vec::new();
    if let Terms::Finite(n) = ctx.ex.params().n {
        let want = n as usize + 2;
        checks.push(Check::new(
            "sgc.increasing_region_count",
            inc.len() == want,
            format!("{} increasing intervals, expected {want}", inc.len()),
        ));
    } else {
        checks.push(Check::new("sgc.increasing_region_count", true, format!("{} intervals (n = inf)", inc.len())));
    }
    Ok(checks)
}

#[derive(Serialize)]
struct RegionDoc<'a> {
    name: &'a str,
    role: RegionRole,
    expect: Expectation,
    passed: bool,
    /// Gap shells `D_k` the region meets.
    meets_shells: Vec<usize>,
    report: &'a DensityCheckReport,
}

#[derive(Serialize)]
struct DensitySummary {
    shells: Vec<GapShell>,
    regions: Vec<RegionSummary>,
}

#[derive(Serialize)]
struct RegionSummary {
    name: String,
    expect: Expectation,
    passed: bool,
    min_divergence: f64,
    violation_fraction: f64,
}

pub fn cmd_density(ctx: &Context) -> anyhow::Result<Vec<Check>> {
    let dc = &ctx.cfg.density;
    let analysis = ctx.increasing()?;
    let shells = gap_shells(&analysis, &ctx.model, dc.shell_margin)?;
    let opts = DensityCheckOptions { q_tol: dc.q_tol, measure_zero_budget: dc.measure_zero_budget };

    let mut grids = Vec::new();
    for region in &dc.regions {
        let grid = region.grid().with_context(|| format!("density region {}", region.name))?;
        let meets: Vec<usize> = shells.iter().filter(|s| s.meets(&ctx.model, &grid)).map(|s| s.k).collect();
        if region.role == RegionRole::Gap && meets.is_empty() {
            let listing: Vec<String> = analysis
                .intervals
                .iter()
                .map(|iv| format!("({:.6}, {:.6}{})", iv.lo, iv.hi, if iv.right_open { "+" } else { "" }))
                .collect();
            let shell_list: Vec<String> =
                shells.iter().map(|s| format!("D_{}: inner {:?}, outer {:?}", s.k, s.inner, s.outer)).collect();
            bail!(
                "density region {} meets no gap region; increasing intervals {}; gap shells [{}]",
                region.name,
                listing.join(" "),
                shell_list.join("; ")
            );
        }
        grids.push((grid, meets));
    }

    let mut checks = Vec::new();
    let mut summary = DensitySummary { shells, regions: Vec::new() };
    for (region, (grid, meets)) in dc.regions.iter().zip(grids) {
        let rho = match region.density {
            DensityChoice::ExpSum => DensityFn::exp_sum(),
            DensityChoice::ExpAbsSum => DensityFn::exp_abs_sum(),
        };
        let gate = match region.gate {
            GateChoice::MaxStorageIdentity => Gate::MaxStorage { gamma_k: ScalarFn::identity() },
            GateChoice::ComponentwiseExample => Gate::Componentwise {
                gamma_k: derive_gamma_k_example(
                    ctx.cfg.delta,
                    ctx.cfg.epsilon,
                    &ctx.ex,
                    ctx.scan_bound,
                    GAMMA_K_GRID_STEP,
                )?,
            },
        };
        let report = check_density_propagation(&rho, &ctx.model, &grid, &gate, region.u, opts)?;
        let passed = report.passed();
        let as_expected = passed == (region.expect == Expectation::Pass);
        write_json(
            &ctx.path(&format!("density_{}.json", region.name)),
            "density_check",
            &RegionDoc {
                name: &region.name,
                role: region.role,
                expect: region.expect,
                passed,
                meets_shells: meets,
                report: &report,
            },
        )?;
        checks.push(Check::new(
            format!("density.{}", region.name),
            as_expected,
            format!(
                "expect {:?}, min div {:.6e}, violation fraction {:.4e} ({} of {} gated)",
                region.expect, report.min_divergence, report.violation_fraction, report.violation_count, report.gated
            ),
        ));
        summary.regions.push(RegionSummary {
            name: region.name.clone(),
            expect: region.expect,
            passed,
            min_divergence: report.min_divergence,
            violation_fraction: report.violation_fraction,
        });
    }
    write_json(&ctx.path("density.json"), "density_summary", &summary)?;
    Ok(checks)
}

fn sim_options(ctx: &Context) -> SweepOptions {
    let s = &ctx.cfg.simulate;
    SweepOptions {
        t_end: s.t_end,
        dt: s.dt,
        escape_bound: s.escape_bound,
        classify: ClassifyOptions { conv_tol: s.conv_tol, window_fraction: s.window_fraction },
    }
}

pub fn cmd_simulate(ctx: &Context) -> anyhow::Result<Vec<Check>> {
    let s = &ctx.cfg.simulate;
    let opts = sim_options(ctx);
    let eq = ctx.equilibria();
    let u = ctx.u();
    let integ = IntegrateOptions { record_stride: s.record_stride, escape_bound: s.escape_bound, error_estimate: true };
    for (k, x0) in s.trajectories.iter().enumerate() {
        let mut traj = integrate(&ctx.model, x0, u, s.t_end, s.dt, integ)?;
        traj.classification = Some(classify(&traj, &ctx.model, &eq, opts.classify));
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        fs::write(ctx.path(&format!("traj_{k}.csv")), buf)?;
    }
    let grid = BoxGrid::square(s.sweep_lo, s.sweep_hi, s.sweep_steps)?;
    let report = sweep(&ctx.model, &grid, u, &eq, opts)?;
    write_json(&ctx.path("sweep.json"), "sweep_report", &report)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(ctx.path("sweep.csv"), buf)?;
    Ok(vec![Check::new(
        "simulate.sweep",
        report.nonconverging_fraction == 0.0,
        format!(
            "nonconverging fraction {}, estimated radius {:.6}, counts {:?}",
            report.nonconverging_fraction, report.estimated_radius, report.counts
        ),
    )])
}

type Polyline = Vec<(f64, f64)>;

/// Integrates each start and collects `(index, t, x1, x2)` rows plus the
/// polylines.
fn portrait(ctx: &Context, u: [f64; 2], starts: &[[f64; 2]]) -> anyhow::Result<(Vec<Vec<f64>>, Vec<Polyline>)> {
    let s = &ctx.cfg.simulate;
    let opts = IntegrateOptions { record_stride: s.record_stride, escape_bound: s.escape_bound, error_estimate: false };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (k, x0) in starts.iter().enumerate() {
        let traj = integrate(&ctx.model, x0, u, s.t_end, s.dt, opts)?;
        let mut line = Vec::with_capacity(traj.len());
        for j in 0..traj.len() {
            let x = traj.state(j);
            rows.push(vec![k as f64, traj.times[j], x[0], x[1]]);
            line.push((x[0], x[1]));
        }
        lines.push(line);
    }
    Ok((rows, lines))
}

fn write_portrait(path: &Path, mut plot: Plot, starts: &[[f64; 2]], lines: Vec<Polyline>) -> anyhow::Result<()> {
    for line in lines {
        plot.series.push(Series::line("", "#1f77b4", line));
    }
    plot.series.push(Series::dots("", "#000000", starts.iter().map(|p| (p[0], p[1])).collect()));
    plot.equal_aspect = true;
    fs::write(path, plot.render())?;
    Ok(())
}

pub fn cmd_figures(ctx: &Context) -> anyhow::Result<Vec<Check>> {
    let bound = ctx.scan_bound;
    let gh: Vec<Vec<f64>> = linspace(0.0, bound, 2001).map(|r| vec![r, ctx.ex.g(r), ctx.ex.h(r)]).collect();
    write_csv_rows(&ctx.path("fig1_gh.csv"), "r,g,h", gh.iter().cloned())?;
    let mut fig1 = Plot::new("g and h", "r", "value");
    fig1.series.push(Series::line("g", "#1f77b4", gh.iter().map(|r| (r[0], r[1])).collect()));
    fig1.series.push(Series::line("h", "#d62728", gh.iter().map(|r| (r[0], r[2])).collect()));
    fs::write(ctx.path("fig1_gh.svg"), fig1.render())?;

    let grid_starts: Vec<[f64; 2]> =
        [5.0, 20.0, 35.0, 50.0].iter().flat_map(|&a| [5.0, 20.0, 35.0, 50.0].map(|b| [a, b])).collect();
    let (rows, lines) = portrait(ctx, [0.0, 0.0], &grid_starts)?;
    write_csv_rows(&ctx.path("fig2_autonomous.csv"), "traj,t,x1,x2", rows)?;
    let mut fig2 = Plot::new("Autonomous interconnection (u = 0)", "x1", "x2");
    let r1 = 3.0 * PI * PI;
    fig2.series.push(Series::dots("(r1, r1)", "#d62728", vec![(r1, r1)]));
    write_portrait(&ctx.path("fig2_autonomous.svg"), fig2, &grid_starts, lines)?;

    let ring: Vec<[f64; 2]> = (0..12)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / 12.0;
            [20.0 * th.cos(), 20.0 * th.sin()]
        })
        .collect();
    let (rows, lines) = portrait(ctx, FORCED_INPUTS, &ring)?;
    write_csv_rows(&ctx.path("fig3_forced.csv"), "traj,t,x1,x2", rows)?;
    let mut fig3 = Plot::new("Forced interconnection (|u1| = 3, |u2| = 4)", "x1", "x2");
    fig3.circles.push(Circle { center: (0.0, 0.0), radius: FORCED_CIRCLE, color: "#000000".into() });
    write_portrait(&ctx.path("fig3_forced.svg"), fig3, &ring, lines)?;

    Ok(vec![Check::new("figures", true, "fig1_gh, fig2_autonomous, fig3_forced written")])
}
