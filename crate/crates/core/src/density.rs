//! Divergence of `ρf` and the density-propagation check on gap regions.
//!
//! On a gap region `D_k` the small-gain condition fails, and the
//! certificate is instead a positive density `ρ_k` with
//!
//! ```text
//! max_i V_i(x_i) >= γ_k(|u|)  ⇒  div(ρ_k f)(x, u) >= q_k(x) > 0.
//! ```
//!
//! Grids cannot see measure-zero sets, so "almost every `x`" becomes a
//! violation budget over the sampled points, and every violating point is
//! listed.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::example_system::{Example, COUPLING};
use crate::grid::BoxGrid;
use crate::iss_model::{region_a, region_b, Subsystem, SystemModel};
use crate::scalar_fn::{Domain, ScalarFn, SgcAnalysis};
use crate::{Error, Result};

/// At most this many violating points are kept in a report.
pub const VIOLATION_CAP: usize = 100;
/// Relative dilation of a gap shell, as a fraction of its width.
pub const DEFAULT_SHELL_MARGIN: f64 = 0.05;
/// Dilation used along an axis where the shell has zero width.
pub const ZERO_WIDTH_MARGIN: f64 = 1e-6;

type DensityEval = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientEval = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A positive density `ρ` over the full state, optionally with its gradient.
#[derive(Clone)]
pub struct DensityFn {
    rho: Arc<DensityEval>,
    grad: Option<Arc<GradientEval>>,
    label: String,
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFn")
            .field("label", &self.label)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl DensityFn {
    pub fn new<F>(label: impl Into<String>, rho: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        DensityFn { rho: Arc::new(rho), grad: None, label: label.into() }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn constant(c: f64) -> Self {
        DensityFn::new(format!("{c}"), move |_| c).with_gradient(|_, out| out.fill(0.0))
    }

    /// `exp(-Σ x_j)`.
    pub fn exp_sum() -> Self {
        DensityFn::new("exp(-(x1+x2))", |x| (-x.iter().sum::<f64>()).exp()).with_gradient(|x, out| {
            let r = (-x.iter().sum::<f64>()).exp();
            out.fill(-r);
        })
    }

    /// `exp(-Σ |x_j|)`, with gradient `-sign(x_j) ρ` (zero on the axes).
    pub fn exp_abs_sum() -> Self {
        fn rho(x: &[f64]) -> f64 {
            (-x.iter().map(|v| v.abs()).sum::<f64>()).exp()
        }
        DensityFn::new("exp(-(|x1|+|x2|))", rho).with_gradient(|x, out| {
            let r = rho(x);
            for (o, v) in out.iter_mut().zip(x) {
                *o = if *v > 0.0 {
                    -r
                } else if *v < 0.0 {
                    r
                } else {
                    0.0
                };
            }
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.rho)(x)
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// `∇ρ(x)`, finite-differenced when no closed form was supplied.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.grad {
            g(x, out);
            return;
        }
        let mut p = x.to_vec();
        for j in 0..x.len() {
            let h = fd_step(x[j]);
            p[j] = x[j] + h;
            let up = (self.rho)(&p);
            p[j] = x[j] - h;
            let down = (self.rho)(&p);
            p[j] = x[j];
            out[j] = (up - down) / (2.0 * h);
        }
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// The two terms of `div(ρf) = ∇ρ·f + ρ div f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceParts {
    pub rho: f64,
    pub grad_dot_f: f64,
    pub div_f: f64,
}

impl DivergenceParts {
    pub fn value(&self) -> f64 {
        self.grad_dot_f + self.rho * self.div_f
    }
}

/// `div f` at `x`, using closed-form self-partials where the dynamics
/// provide them and central differences otherwise.
pub fn field_divergence(model: &SystemModel, x: &[f64], u: [f64; 2]) -> f64 {
    let (n1, _) = model.dims();
    let mut total = 0.0;
    for i in Subsystem::both() {
        let (x1, x2) = model.split(x);
        if let Some(d) = model.dynamics.self_divergence(i, x1, x2, u[i.index()]) {
            total += d;
            continue;
        }
        let (offset, ni) = match i {
            Subsystem::One => (0, n1),
            Subsystem::Two => (n1, x.len() - n1),
        };
        let mut p = x.to_vec();
        let mut up = vec![0.0; ni];
        let mut down = vec![0.0; ni];
        for k in 0..ni {
            let j = offset + k;
            let h = fd_step(x[j]);
            p[j] = x[j] + h;
            let (a, b) = p.split_at(n1);
            model.dynamics.eval(i, a, b, u[i.index()], &mut up);
            p[j] = x[j] - h;
            let (a, b) = p.split_at(n1);
            model.dynamics.eval(i, a, b, u[i.index()], &mut down);
            p[j] = x[j];
            total += (up[k] - down[k]) / (2.0 * h);
        }
    }
    total
}

pub fn divergence_parts(rho: &DensityFn, model: &SystemModel, x: &[f64], u: [f64; 2]) -> Result<DivergenceParts> {
    let r = rho.value(x);
    if !(r > 0.0) {
        return Err(Error::DensityNotPositive { point: x.to_vec(), value: r });
    }
    let n = x.len();
    let mut f = vec![0.0; n];
    model.field(x, u, &mut f);
    let mut grad = vec![0.0; n];
    rho.gradient(x, &mut grad);
    let grad_dot_f = grad.iter().zip(&f).map(|(a, b)| a * b).sum();
    Ok(DivergenceParts { rho: r, grad_dot_f, div_f: field_divergence(model, x, u) })
}

/// `div(ρf)(x, u) = ∇ρ(x)·f(x, u) + ρ(x) div f(x, u)`.
pub fn divergence(rho: &DensityFn, model: &SystemModel, x: &[f64], u: [f64; 2]) -> Result<f64> {
    divergence_parts(rho, model, x, u).map(|p| p.value())
}

/// Premise of the density implication.
#[derive(Debug, Clone)]
pub enum Gate {
    /// `max_i V_i(x_i) >= γ_k(|u|)`, `|u|` the Euclidean norm of the bounds.
    MaxStorage { gamma_k: ScalarFn },
    /// `V_i(x_i) >= γ_k(u_i)` for both `i`.
    Componentwise { gamma_k: ScalarFn },
}

impl Gate {
    pub fn label(&self) -> String {
        match self {
            Gate::MaxStorage { gamma_k } => format!("max_i V_i >= {}(|u|)", gamma_k.label()),
            Gate::Componentwise { gamma_k } => format!("V_i >= {}(u_i), i = 1,2", gamma_k.label()),
        }
    }

    /// Per-subsystem storage thresholds for the given input bounds.
    fn thresholds(&self, u: [f64; 2]) -> Result<[f64; 2]> {
        Ok(match self {
            Gate::MaxStorage { gamma_k } => {
                let t = gamma_k.eval(u[0].hypot(u[1]))?;
                [t, t]
            }
            Gate::Componentwise { gamma_k } => [gamma_k.eval(u[0])?, gamma_k.eval(u[1])?],
        })
    }

    fn passes(&self, v: [f64; 2], t: [f64; 2]) -> bool {
        match self {
            Gate::MaxStorage { .. } => v[0].max(v[1]) >= t[0],
            Gate::Componentwise { .. } => v[0] >= t[0] && v[1] >= t[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityCheckOptions {
    /// Constant standing in for `q_k(x)`: gated points need `div > q_tol`.
    pub q_tol: f64,
    /// Largest tolerated fraction of failing gated points.
    pub measure_zero_budget: f64,
}

impl Default for DensityCheckOptions {
    fn default() -> Self {
        DensityCheckOptions { q_tol: 0.0, measure_zero_budget: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityViolation {
    pub x: Vec<f64>,
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCheckReport {
    pub region: BoxGrid,
    pub density: String,
    pub gate: String,
    pub gamma_k: String,
    pub u_bounds: [f64; 2],
    /// Storage thresholds the gate compared against.
    pub thresholds: [f64; 2],
    pub options: DensityCheckOptions,
    pub samples: usize,
    pub gated: usize,
    /// Minimum over every sample, gated or not.
    pub min_divergence: f64,
    /// Minimum over the gated samples: the largest certified constant `q`.
    /// `+∞` when nothing was gated.
    pub q_floor: f64,
    pub violation_count: usize,
    /// Violations among gated samples, in `[0, 1]`.
    pub violation_fraction: f64,
    pub violations: Vec<DensityViolation>,
    /// No sample passed the gate; the check says nothing.
    pub inconclusive: bool,
}

impl DensityCheckReport {
    pub fn passed(&self) -> bool {
        !self.inconclusive && self.violation_fraction <= self.options.measure_zero_budget
    }
}

/// Evaluates the density implication on every point of `region`.
pub fn check_density_propagation(
    rho: &DensityFn,
    model: &SystemModel,
    region: &BoxGrid,
    gate: &Gate,
    u: [f64; 2],
    opts: DensityCheckOptions,
) -> Result<DensityCheckReport> {
    region.validate()?;
    if region.dim() != model.state_dim() {
        return Err(Error::invalid(format!(
            "region has dimension {}, model state has {}",
            region.dim(),
            model.state_dim()
        )));
    }
    if region.is_empty() {
        return Err(Error::invalid("density region grid is empty"));
    }
    let thresholds = gate.thresholds(u)?;

    struct Acc {
        gated: usize,
        count: usize,
        min_all: f64,
        min_gated: f64,
        violations: Vec<DensityViolation>,
    }
    let fresh = || Acc { gated: 0, count: 0, min_all: f64::INFINITY, min_gated: f64::INFINITY, violations: Vec::new() };

    let chunk = 2048;
    let total = region.len();
    let partials = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| -> Result<Acc> {
            let mut acc = fresh();
            let mut x = vec![0.0; region.dim()];
            for flat in c * chunk..((c + 1) * chunk).min(total) {
                region.point_into(flat, &mut x);
                let d = divergence(rho, model, &x, u)?;
                acc.min_all = acc.min_all.min(d);
                if !gate.passes(model.storage_values(&x), thresholds) {
                    continue;
                }
                acc.gated += 1;
                acc.min_gated = acc.min_gated.min(d);
                if !(d > opts.q_tol) {
                    acc.count += 1;
                    if acc.violations.len() < VIOLATION_CAP {
                        acc.violations.push(DensityViolation { x: x.clone(), divergence: d });
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = fresh();
    for a in partials {
        out.gated += a.gated;
        out.count += a.count;
        out.min_all = out.min_all.min(a.min_all);
        out.min_gated = out.min_gated.min(a.min_gated);
        let room = VIOLATION_CAP - out.violations.len();
        out.violations.extend(a.violations.into_iter().take(room));
    }
    let gamma_k = match gate {
        Gate::MaxStorage { gamma_k } | Gate::Componentwise { gamma_k } => gamma_k.label().to_string(),
    };
    Ok(DensityCheckReport {
        region: region.clone(),
        density: rho.label().to_string(),
        gate: gate.label(),
        gamma_k,
        u_bounds: u,
        thresholds,
        options: opts,
        samples: total,
        gated: out.gated,
        min_divergence: out.min_all,
        q_floor: out.min_gated,
        violation_count: out.count,
        violation_fraction: if out.gated == 0 { 0.0 } else { out.count as f64 / out.gated as f64 },
        violations: out.violations,
        inconclusive: out.gated == 0,
    })
}

/// A square `[-ε, ε]^n` on which `div(ρf) <= 0` at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonpositiveBox {
    pub eps: f64,
    pub steps_per_axis: usize,
    pub max_divergence: f64,
}

/// Largest `ε` among `eps_max · shrink^j` (`j = 0, 1, ...`, down to
/// `eps_min`) such that `div(ρf) <= 0` on a `steps_per_axis` grid over
/// `[-ε, ε]^n`.
pub fn certify_nonpositive_box(
    rho: &DensityFn,
    model: &SystemModel,
    u: [f64; 2],
    eps_max: f64,
    eps_min: f64,
    shrink: f64,
    steps_per_axis: usize,
) -> Result<Option<NonpositiveBox>> {
    if !(eps_max >= eps_min && eps_min > 0.0 && shrink > 0.0 && shrink < 1.0) {
        return Err(Error::invalid("need eps_max >= eps_min > 0 and shrink in (0, 1)"));
    }
    let n = model.state_dim();
    let mut eps = eps_max;
    while eps >= eps_min {
        let grid = BoxGrid::new(vec![-eps; n], vec![eps; n], vec![steps_per_axis; n])?;
        let max = (0..grid.len())
            .into_par_iter()
            .map(|flat| divergence(rho, model, &grid.point(flat), u))
            .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))?;
        if max <= 0.0 {
            return Ok(Some(NonpositiveBox { eps, steps_per_axis, max_divergence: max }));
        }
        eps *= shrink;
    }
    Ok(None)
}

/// Builds the input gate of the example's density argument.
///
/// With `m(r) = (25 + ε)|g(r)| - 25 h(r)` (worst sign of `r`), `κ` is the
/// running minimum of `m` from the right scaled by `s/(1+s)`: a strictly
/// increasing lower bound of `m` on the grid. The returned function maps an
/// input bound `u` to the threshold `κ⁻¹(c(u)² / (1 - δ))` on `|x_i|`, with
/// `c(u) = u/(a+1)`.
pub fn derive_gamma_k_example(
    delta: f64,
    epsilon: f64,
    ex: &Arc<Example>,
    scan_bound: f64,
    grid_step: f64,
) -> Result<ScalarFn> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(scan_bound > 0.0 && grid_step > 0.0 && scan_bound.is_finite()) {
        return Err(Error::invalid("scan_bound and grid_step must be positive"));
    }
    let m = |r: f64| (COUPLING + epsilon) * ex.g(r).abs() - COUPLING * ex.h(r).max(ex.h(-r));
    let count = (scan_bound / grid_step).ceil() as usize;
    let xs: Vec<f64> = (0..=count).map(|j| (j as f64 * grid_step).min(scan_bound)).collect();
    let ms: Vec<f64> = xs.par_iter().map(|&r| m(r)).collect();
    if let Some(j) = (1..xs.len()).find(|&j| !(ms[j] > 0.0)) {
        return Err(Error::Construction(format!(
            "m(r) = (25+{epsilon})|g| - 25h is not positive definite: m({}) = {}",
            xs[j], ms[j]
        )));
    }

    let mut kappa = vec![0.0; xs.len()];
    let mut running = f64::INFINITY;
    for j in (1..xs.len()).rev() {
        running = running.min(ms[j]);
        kappa[j] = running * xs[j] / (1.0 + xs[j]);
    }
    let inverse = ScalarFn::from_samples("kappa^-1", kappa, xs)?;
    let scale = (1.0 - delta) * (ex.a() + 1.0).powi(2);
    Ok(ScalarFn::fallible(format!("kappa^-1(u^2/({scale}))"), Domain::NONNEGATIVE, move |u| {
        inverse.eval(u * u / scale)
    })
    .with_class_k())
}

/// The dilated shell `A_k \ B_{k-1}` in storage coordinates.
///
/// `x` lies in the shell when `V_i(x_i) < outer[i]` for both `i` and
/// `V_i(x_i) > inner[i]` for some `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapShell {
    pub k: usize,
    pub inner: [f64; 2],
    pub outer: [f64; 2],
}

impl GapShell {
    pub fn contains(&self, model: &SystemModel, x: &[f64]) -> bool {
        let v = model.storage_values(x);
        v[0] < self.outer[0] && v[1] < self.outer[1] && (v[0] > self.inner[0] || v[1] > self.inner[1])
    }

    /// Whether any point of `grid` lies in the shell.
    pub fn meets(&self, model: &SystemModel, grid: &BoxGrid) -> bool {
        (0..grid.len()).into_par_iter().any(|flat| self.contains(model, &grid.point(flat)))
    }
}

/// Gap shells `D_k` for `k = 2..=ℓ`, dilated by `margin` times the width
/// of `A_k \ B_{k-1}` along each axis.
pub fn gap_shells(analysis: &SgcAnalysis, model: &SystemModel, margin: f64) -> Result<Vec<GapShell>> {
    if !(margin >= 0.0) {
        return Err(Error::invalid("shell margin must be nonnegative"));
    }
    let mut out = Vec::new();
    for k in 2..=analysis.len() {
        let a = region_a(analysis, model, k)?;
        let b = region_b(analysis, model, k - 1)?;
        let (ac, bc) = (a.caps(), b.caps());
        let mut inner = [0.0; 2];
        let mut outer = [0.0; 2];
        for i in 0..2 {
            let width = (ac[i] - bc[i]).abs();
            let d = if width > 0.0 { margin * width } else { ZERO_WIDTH_MARGIN };
            inner[i] = (bc[i].min(ac[i]) - d).max(0.0);
            outer[i] = bc[i].max(ac[i]) + d;
        }
        out.push(GapShell { k, inner, outer });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example_system::{example_model, ExampleParams};
    use crate::iss_model::{FnDynamics, Storage};

    fn linear_model() -> SystemModel {
        let id = ScalarFn::identity();
        SystemModel {
            dynamics: Arc::new(FnDynamics::new((1, 1), |i, x1, x2, _u, out: &mut [f64]| {
                out[0] = match i {
                    Subsystem::One => -x1[0],
                    Subsystem::Two => -x2[0],
                };
            })),
            storage: [Storage::abs(), Storage::abs()],
            alpha_lo: [id.clone(), id.clone()],
            alpha_hi: [id.clone(), id.clone()],
            gamma_int: [ScalarFn::zero(), ScalarFn::zero()],
            gamma_ext: [ScalarFn::zero(), ScalarFn::zero()],
            alpha: [id.clone(), id],
        }
    }

    fn example(n: u32, u: (f64, f64)) -> (Arc<Example>, SystemModel) {
        let ex = Arc::new(Example::new(ExampleParams::new(n).with_inputs(u.0, u.1)).unwrap());
        let m = example_model(&ex, 0.5).unwrap();
        (ex, m)
    }

    #[test]
    fn constant_density_linear_field() {
        let d = divergence(&DensityFn::constant(1.0), &linear_model(), &[1.0, 1.0], [0.0, 0.0]).unwrap();
        assert!((d + 2.0).abs() < 1e-8);
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let x = [0.3, -1.2];
        let analytic = DensityFn::exp_sum();
        let numeric = DensityFn::new("fd", |x| (-(x[0] + x[1])).exp());
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        analytic.gradient(&x, &mut a);
        numeric.gradient(&x, &mut b);
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn nonpositive_density_is_rejected() {
        let err = divergence(&DensityFn::constant(0.0), &linear_model(), &[0.0, 0.0], [0.0, 0.0]);
        assert!(matches!(err, Err(Error::DensityNotPositive { .. })));
    }

    #[test]
    fn fd_field_divergence_matches_closed_form() {
        let (_, m) = example(2, (3.0, 4.0));
        let mut plain = m.clone();
        // Same field, but without closed-form partials.
        let inner = Arc::clone(&m.dynamics);
        plain.dynamics =
            Arc::new(FnDynamics::new((1, 1), move |i, a, b, u, out: &mut [f64]| inner.eval(i, a, b, u, out)));
        for x in [[0.0, 0.0], [1.3, -2.0], [19.7, 5.0], [-40.0, 30.0]] {
            let a = field_divergence(&m, &x, [3.0, 4.0]);
            let b = field_divergence(&plain, &x, [3.0, 4.0]);
            assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "{x:?}: {a} vs {b}");
        }
    }

    #[test]
    fn origin_divergence_counts_both_subsystems() {
        let (_, m) = example(2, (0.0, 0.0));
        let p = divergence_parts(&DensityFn::exp_sum(), &m, &[0.0, 0.0], [0.0, 0.0]).unwrap();
        assert_eq!(p.grad_dot_f, 0.0);
        // -25 g'(0) from each subsystem.
        assert!((p.value() + 100.0).abs() < 1e-12);
    }

    #[test]
    fn gated_set_empty_is_inconclusive() {
        let m = linear_model();
        let grid = BoxGrid::square(-1.0, 1.0, 5).unwrap();
        let gate = Gate::MaxStorage { gamma_k: ScalarFn::linear(100.0) };
        let r = check_density_propagation(&DensityFn::constant(1.0), &m, &grid, &gate, [1.0, 0.0], Default::default())
            .unwrap();
        assert!(r.inconclusive);
        assert!(!r.passed());
        assert_eq!(r.q_floor, f64::INFINITY);
        assert!((r.min_divergence + 2.0).abs() < 1e-8);
    }

    #[test]
    fn origin_box_reports_violations() {
        let (_, m) = example(2, (0.0, 0.0));
        let grid = BoxGrid::square(-0.1, 0.1, 21).unwrap();
        let gate = Gate::MaxStorage { gamma_k: ScalarFn::identity() };
        let r =
            check_density_propagation(&DensityFn::exp_sum(), &m, &grid, &gate, [0.0, 0.0], Default::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.violation_count, r.gated);
        assert!(r.min_divergence < -50.0);
        assert!(r.q_floor >= r.min_divergence);
    }

    #[test]
    fn nonpositive_box_near_origin() {
        let (_, m) = example(2, (0.0, 0.0));
        let b = certify_nonpositive_box(&DensityFn::exp_sum(), &m, [0.0, 0.0], 0.5, 1e-3, 0.8, 41).unwrap().unwrap();
        assert!(b.eps >= 0.01);
        assert!(b.max_divergence <= 0.0);
    }

    #[test]
    fn gamma_k_thresholds() {
        let (ex, _) = example(2, (0.0, 0.0));
        let sb = 1.1 * ex.a();
        let gk = derive_gamma_k_example(0.5, 1.0, &ex, sb, 1e-3).unwrap();
        assert_eq!(gk.eval(0.0).unwrap(), 0.0);
        let t3 = gk.eval(3.0).unwrap();
        assert!(t3 > 0.0 && t3.is_finite());
        let c = 3.0 / (ex.a() + 1.0);
        let m = |r: f64| 26.0 * ex.g(r).abs() - 25.0 * ex.h(r).max(ex.h(-r));
        assert!(m(t3) >= c * c / 0.5 - 1e-12);
        let mut last = 0.0;
        for u in [0.5, 1.0, 2.0, 3.0, 4.0, 10.0] {
            let t = gk.eval(u).unwrap();
            assert!(t > last);
            last = t;
        }
        assert!(derive_gamma_k_example(0.5, -1.0, &ex, sb, 1e-3).is_err());
        assert!(derive_gamma_k_example(1.0, 1.0, &ex, sb, 1e-3).is_err());
    }

    #[test]
    fn gamma_k_needs_positive_definite_m() {
        // With ε = 0, m vanishes where the plateau of g meets a maximum of h.
        let (ex, _) = example(2, (0.0, 0.0));
        assert!(derive_gamma_k_example(0.5, 1e-300, &ex, 1.1 * ex.a(), 1e-4).is_err());
    }

    #[test]
    fn shells_from_toy_analysis() {
        use crate::scalar_fn::SgcInterval;
        let m = linear_model();
        let mut m = m;
        m.gamma_int = [ScalarFn::linear(0.5), ScalarFn::linear(0.5)];
        let analysis = SgcAnalysis {
            intervals: vec![
                SgcInterval { lo: 0.0, hi: 1.0, right_open: false },
                SgcInterval { lo: 2.0, hi: 5.0, right_open: false },
            ],
            scan_bound: 5.0,
            grid_step: 0.01,
            refine_tol: 1e-9,
            boundaries: vec![],
        };
        let shells = gap_shells(&analysis, &m, 0.05).unwrap();
        assert_eq!(shells.len(), 1);
        let s = shells[0];
        // A_2 caps (2, 1), B_1 caps (1, 0.5).
        assert!((s.outer[0] - 2.05).abs() < 1e-12 && (s.inner[0] - 0.95).abs() < 1e-12);
        assert!((s.outer[1] - 1.025).abs() < 1e-12 && (s.inner[1] - 0.475).abs() < 1e-12);
        assert!(s.contains(&m, &[1.5, 0.0]));
        assert!(!s.contains(&m, &[0.5, 0.2]));
        assert!(!s.contains(&m, &[3.0, 0.0]));
        assert!(s.meets(&m, &BoxGrid::square(-2.0, 2.0, 9).unwrap()));
        assert!(!s.meets(&m, &BoxGrid::square(-0.1, 0.1, 9).unwrap()));
    }
}
