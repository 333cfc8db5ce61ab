//! The interconnection of two subsystems together with its Lyapunov data.
//!
//! Subsystem `i` evolves as `ẋ_i = f_i(x_1, x_2, u_i)`. Inputs enter through
//! a nonnegative bound `u_i` (the sup-norm of the input signal), not through
//! a time signal.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::BoxGrid;
use crate::scalar_fn::{invert_unbounded, ScalarFn, SgcAnalysis};
use crate::{Error, Result};

/// Absolute slack separating real violations from rounding noise.
pub const DEFAULT_SLACK_TOL: f64 = 1e-9;
/// At most this many violating samples are kept in a report.
pub const VIOLATION_SAMPLE_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    One,
    Two,
}

impl Subsystem {
    pub fn index(self) -> usize {
        match self {
            Subsystem::One => 0,
            Subsystem::Two => 1,
        }
    }

    pub fn other(self) -> Subsystem {
        match self {
            Subsystem::One => Subsystem::Two,
            Subsystem::Two => Subsystem::One,
        }
    }

    pub fn both() -> [Subsystem; 2] {
        [Subsystem::One, Subsystem::Two]
    }
}

/// Right-hand side of the interconnection.
pub trait Dynamics: Send + Sync {
    /// State dimensions `(n1, n2)`.
    fn dims(&self) -> (usize, usize);

    /// Writes `f_i(x1, x2, u_i)` into `out` (length `n_i`).
    fn eval(&self, i: Subsystem, x1: &[f64], x2: &[f64], u_i: f64, out: &mut [f64]);

    /// `Σ_k ∂f_{i,k}/∂x_{i,k}` in closed form, if known. Used by the
    /// divergence in place of finite differences.
    fn self_divergence(&self, _i: Subsystem, _x1: &[f64], _x2: &[f64], _u_i: f64) -> Option<f64> {
        None
    }
}

/// Adapts a pair of closures to [`Dynamics`].
pub struct FnDynamics<F> {
    dims: (usize, usize),
    f: F,
}

impl<F> FnDynamics<F>
where
    F: Fn(Subsystem, &[f64], &[f64], f64, &mut [f64]) + Send + Sync,
{
    pub fn new(dims: (usize, usize), f: F) -> Self {
        FnDynamics { dims, f }
    }
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(Subsystem, &[f64], &[f64], f64, &mut [f64]) + Send + Sync,
{
    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn eval(&self, i: Subsystem, x1: &[f64], x2: &[f64], u_i: f64, out: &mut [f64]) {
        (self.f)(i, x1, x2, u_i, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageKind {
    /// Differentiable; gradients by central differences.
    Smooth,
    /// `V(x) = |x|` on a scalar state; derivative along `f` is `sign(x)·f`,
    /// and `|f|` at `x = 0`.
    AbsScalar,
}

type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A storage function `V_i: R^{n_i} -> R_{>=0}`.
#[derive(Clone)]
pub struct Storage {
    value: StateFn,
    kind: StorageKind,
    label: String,
}

impl fmt::Debug for Storage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Storage").field("label", &self.label).field("kind", &self.kind).finish()
    }
}

impl Storage {
    pub fn abs() -> Self {
        Storage { value: Arc::new(|x: &[f64]| x[0].abs()), kind: StorageKind::AbsScalar, label: "|x|".into() }
    }

    pub fn smooth<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Storage { value: Arc::new(f), kind: StorageKind::Smooth, label: label.into() }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn kind(&self) -> StorageKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Derivative of `V` along `fx` at `x`. The flag is set when the sample
    /// sat on a nonsmooth point and the one-sided form was used.
    pub fn derivative_along(&self, x: &[f64], fx: &[f64]) -> (f64, bool) {
        match self.kind {
            StorageKind::AbsScalar => {
                if x[0] == 0.0 {
                    (fx[0].abs(), true)
                } else {
                    (x[0].signum() * fx[0], false)
                }
            }
            StorageKind::Smooth => {
                let mut probe = x.to_vec();
                let mut acc = 0.0;
                for k in 0..x.len() {
                    let step = 1e-6 * (1.0 + x[k].abs());
                    probe[k] = x[k] + step;
                    let up = self.value(&probe);
                    probe[k] = x[k] - step;
                    let down = self.value(&probe);
                    probe[k] = x[k];
                    acc += (up - down) / (2.0 * step) * fx[k];
                }
                (acc, false)
            }
        }
    }
}

/// The interconnected system and its ISS-Lyapunov data.
///
/// Index 0 of each pair belongs to subsystem 1. `gamma_int[0]` is `γ12`
/// (acting on `V_2`), `gamma_int[1]` is `γ21`.
#[derive(Clone)]
pub struct SystemModel {
    pub dynamics: Arc<dyn Dynamics>,
    pub storage: [Storage; 2],
    pub alpha_lo: [ScalarFn; 2],
    pub alpha_hi: [ScalarFn; 2],
    pub gamma_int: [ScalarFn; 2],
    pub gamma_ext: [ScalarFn; 2],
    pub alpha: [ScalarFn; 2],
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("dims", &self.dims())
            .field("storage", &self.storage)
            .field("gamma_int", &self.gamma_int)
            .field("gamma_ext", &self.gamma_ext)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl SystemModel {
    pub fn dims(&self) -> (usize, usize) {
        self.dynamics.dims()
    }

    pub fn state_dim(&self) -> usize {
        let (a, b) = self.dims();
        a + b
    }

    pub fn gamma_12(&self) -> &ScalarFn {
        &self.gamma_int[0]
    }

    pub fn gamma_21(&self) -> &ScalarFn {
        &self.gamma_int[1]
    }

    /// Splits a full state into `(x1, x2)`.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.dims().0)
    }

    /// Full vector field `f = (f_1, f_2)` at the concatenated state `x`.
    pub fn field(&self, x: &[f64], u: [f64; 2], out: &mut [f64]) {
        let (x1, x2) = self.split(x);
        let (o1, o2) = out.split_at_mut(self.dims().0);
        self.dynamics.eval(Subsystem::One, x1, x2, u[0], o1);
        self.dynamics.eval(Subsystem::Two, x1, x2, u[1], o2);
    }

    pub fn storage_values(&self, x: &[f64]) -> [f64; 2] {
        let (x1, x2) = self.split(x);
        [self.storage[0].value(x1), self.storage[1].value(x2)]
    }

    /// Checks `f(0, 0, 0) = 0` and the storage sandwich
    /// `α̲_i(|x_i|) <= V_i(x_i) <= ᾱ_i(|x_i|)` on `samples` points per axis
    /// of `[-radius, radius]^{n_i}`.
    pub fn check_invariants(&self, radius: f64, samples: usize) -> Result<()> {
        let n = self.state_dim();
        let mut f0 = vec![0.0; n];
        self.field(&vec![0.0; n], [0.0, 0.0], &mut f0);
        if let Some(v) = f0.iter().find(|v| v.abs() > 1e-12) {
            return Err(Error::Construction(format!("f(0,0,0) = {v} is not zero")));
        }
        let (n1, n2) = self.dims();
        for (i, ni) in [(0, n1), (1, n2)] {
            let grid = BoxGrid::new(vec![-radius; ni], vec![radius; ni], vec![samples; ni])?;
            for x in grid.points() {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let v = self.storage[i].value(&x);
                let lo = self.alpha_lo[i].eval(norm)?;
                let hi = self.alpha_hi[i].eval(norm)?;
                if v < lo - 1e-12 || v > hi + 1e-12 {
                    return Err(Error::Construction(format!(
                        "storage bound fails for subsystem {} at {x:?}: {lo} <= {v} <= {hi}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sampling specification for [`check_iss_lyapunov`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssGrid {
    /// Box over `(x_i, x_j)` (own state first).
    pub states: BoxGrid,
    /// Input bound: samples are taken on `[0, u_bound]`.
    pub u_bound: f64,
    pub u_steps: usize,
    pub slack_tol: f64,
}

impl IssGrid {
    pub fn new(states: BoxGrid, u_bound: f64) -> Self {
        IssGrid { states, u_bound, u_steps: 1, slack_tol: DEFAULT_SLACK_TOL }
    }

    fn inputs(&self) -> Vec<f64> {
        if self.u_steps <= 1 || self.u_bound == 0.0 {
            return vec![self.u_bound];
        }
        (0..self.u_steps).map(|k| self.u_bound * k as f64 / (self.u_steps - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovViolation {
    pub x_i: Vec<f64>,
    pub x_j: Vec<f64>,
    pub u_i: f64,
    /// `dV_i + α_i(|x_i|)`, positive when the decay claim fails.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssLyapunovReport {
    pub subsystem: Subsystem,
    pub grid: IssGrid,
    pub samples: usize,
    /// Samples where the gain condition held.
    pub gated: usize,
    pub violation_count: usize,
    pub violations: Vec<LyapunovViolation>,
    /// Largest `dV_i + α_i(|x_i|)` over gated samples.
    pub worst_margin: f64,
    /// Gated samples evaluated with the one-sided derivative at `x_i = 0`.
    pub nonsmooth_samples: usize,
}

impl IssLyapunovReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Grid check of the ISS-Lyapunov implication for subsystem `i`:
///
/// `V_i(x_i) >= max{γ_ij(V_j(x_j)), γ_i(u_i)}  ⇒  ∇V_i·f_i <= -α_i(|x_i|)`.
pub fn check_iss_lyapunov(model: &SystemModel, i: Subsystem, grid: &IssGrid) -> Result<IssLyapunovReport> {
    let (n1, n2) = model.dims();
    let (ni, nj) = match i {
        Subsystem::One => (n1, n2),
        Subsystem::Two => (n2, n1),
    };
    if grid.states.dim() != ni + nj {
        return Err(Error::invalid(format!("grid has dimension {}, expected {}", grid.states.dim(), ni + nj)));
    }
    let j = i.other();
    let inputs = grid.inputs();
    let gamma_ij = &model.gamma_int[i.index()];
    let gamma_i = &model.gamma_ext[i.index()];
    let alpha_i = &model.alpha[i.index()];
    let storage_i = &model.storage[i.index()];
    let storage_j = &model.storage[j.index()];

    #[derive(Default)]
    struct Acc {
        samples: usize,
        gated: usize,
        count: usize,
        worst: f64,
        nonsmooth: usize,
        violations: Vec<LyapunovViolation>,
    }

    let chunk = 4096;
    let total = grid.states.len();
    let partials = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| -> Result<Acc> {
            let mut acc = Acc { worst: f64::NEG_INFINITY, ..Default::default() };
            let mut p = vec![0.0; ni + nj];
            let mut fx = vec![0.0; ni];
            for flat in c * chunk..((c + 1) * chunk).min(total) {
                grid.states.point_into(flat, &mut p);
                let (xi, xj) = p.split_at(ni);
                let vi = storage_i.value(xi);
                let gate_int = gamma_ij.eval(storage_j.value(xj))?;
                for &u in &inputs {
                    acc.samples += 1;
                    if vi < gate_int.max(gamma_i.eval(u)?) {
                        continue;
                    }
                    acc.gated += 1;
                    match i {
                        Subsystem::One => model.dynamics.eval(i, xi, xj, u, &mut fx),
                        Subsystem::Two => model.dynamics.eval(i, xj, xi, u, &mut fx),
                    }
                    let (dv, nonsmooth) = storage_i.derivative_along(xi, &fx);
                    acc.nonsmooth += nonsmooth as usize;
                    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let margin = dv + alpha_i.eval(norm)?;
                    acc.worst = acc.worst.max(margin);
                    if margin > grid.slack_tol {
                        acc.count += 1;
                        if acc.violations.len() < VIOLATION_SAMPLE_CAP {
                            acc.violations.push(LyapunovViolation {
                                x_i: xi.to_vec(),
                                x_j: xj.to_vec(),
                                u_i: u,
                                margin,
                            });
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Acc { worst: f64::NEG_INFINITY, ..Default::default() };
    for a in partials {
        out.samples += a.samples;
        out.gated += a.gated;
        out.count += a.count;
        out.nonsmooth += a.nonsmooth;
        out.worst = out.worst.max(a.worst);
        let room = VIOLATION_SAMPLE_CAP - out.violations.len();
        out.violations.extend(a.violations.into_iter().take(room));
    }
    Ok(IssLyapunovReport {
        subsystem: i,
        grid: grid.clone(),
        samples: out.samples,
        gated: out.gated,
        violation_count: out.count,
        violations: out.violations,
        worst_margin: out.worst,
        nonsmooth_samples: out.nonsmooth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    A,
    B,
    Custom,
}

/// Product of storage sublevel sets `{V_1 <= v1_cap} × {V_2 <= v2_cap}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub kind: RegionKind,
    pub k: usize,
    pub v1_cap: f64,
    pub v2_cap: f64,
    /// Built from a right-open interval: no upper cap applies.
    pub unbounded: bool,
}

impl Region {
    pub fn custom(v1_cap: f64, v2_cap: f64) -> Result<Self> {
        if !(v1_cap >= 0.0 && v2_cap >= 0.0) {
            return Err(Error::invalid("region caps must be nonnegative"));
        }
        Ok(Region { kind: RegionKind::Custom, k: 0, v1_cap, v2_cap, unbounded: false })
    }

    pub fn caps(&self) -> [f64; 2] {
        [self.v1_cap, self.v2_cap]
    }
}

/// `A_k`: caps `max{M̲_k, γ12(M̲_k)}` and `max{γ21(M̲_k), γ21(γ21(M̲_k))}`.
pub fn region_a(analysis: &SgcAnalysis, model: &SystemModel, k: usize) -> Result<Region> {
    let m = analysis.interval(k)?.lo;
    let g21 = model.gamma_21().eval(m)?;
    Ok(Region {
        kind: RegionKind::A,
        k,
        v1_cap: m.max(model.gamma_12().eval(m)?),
        v2_cap: g21.max(model.gamma_21().eval(g21)?),
        unbounded: false,
    })
}

/// `B_k`: caps `M̄_k` and `γ21(M̄_k)`; unbounded for a right-open interval.
pub fn region_b(analysis: &SgcAnalysis, model: &SystemModel, k: usize) -> Result<Region> {
    let iv = analysis.interval(k)?;
    Ok(Region {
        kind: RegionKind::B,
        k,
        v1_cap: iv.hi,
        v2_cap: model.gamma_21().eval(iv.hi)?,
        unbounded: iv.right_open,
    })
}

/// `x ∈ r` iff `V_1(x_1) <= v1_cap` and `V_2(x_2) <= v2_cap`.
pub fn region_contains(r: &Region, model: &SystemModel, x: &[f64]) -> bool {
    if r.unbounded {
        return true;
    }
    let [v1, v2] = model.storage_values(x);
    v1 <= r.v1_cap && v2 <= r.v2_cap
}

/// Half-width of the coordinate box enclosing `{V_i <= cap}`, from the
/// lower storage bound: `|x_i| <= α̲_i⁻¹(cap)`.
pub fn sublevel_radius(model: &SystemModel, i: Subsystem, cap: f64) -> Result<f64> {
    invert_unbounded(&model.alpha_lo[i.index()], cap, 1e-12)
}
