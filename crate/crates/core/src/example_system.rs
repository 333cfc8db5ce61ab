//! The two-subsystem `tanh`/`sin²` example and its saturation model.
//!
//! For `n` summands, `a = (4π²n + 3π²)/2` and, with `c_i = 2π²i`,
//!
//! ```text
//! g(r) = tanh(2r) + Σ_{i=1}^{n} sign(r)(1 + sign(r) tanh(2(r - sign(r) c_i)))   |r| <= a
//! g(r) = sign(r)((2n + 1) + (r - sign(r) a)²)                                   |r| >  a
//! h(r) = sin²(r/2π) (1 + Σ_{i=1}^{n} (tanh(r - c_i) + 1))
//! ẋ_i  = -(25 + u_i/(a+1)) g(x_i) + 25 h(x_{3-i}) + (u_i/(a+1))²
//! ```
//!
//! Each `tanh` term of `g` flattens out once it is within the machine
//! precision `p` of `±1`. Where every term is flat (and `|r| <= a`) the
//! function is *numerically constant*; between those stretches it is
//! strictly increasing. The maxima `r_k = 2π²k + π²` of `h` fall inside the
//! flat stretches, which turns them into equilibria of the interconnection.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::iss_model::{Dynamics, Storage, Subsystem, SystemModel};
use crate::scalar_fn::{invert_unbounded, scan_runs, Domain, ScalarFn, SgcAnalysis};
use crate::{Error, Result};

/// Unit roundoff of `f64`, the default precision threshold.
pub const DOUBLE_PRECISION: f64 = f64::EPSILON;
/// Coupling constant of the example dynamics.
pub const COUPLING: f64 = 25.0;

const TWO_PI_SQ: f64 = 2.0 * PI * PI;

/// Number of summands in `g` and `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terms {
    Finite(u32),
    /// `n = ∞`, truncated so that every omitted summand stays below the
    /// precision threshold on `[0, range]`. `a` is infinite.
    Infinite {
        range: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleParams {
    pub n: Terms,
    /// `|u_1|_∞`.
    pub u1_bound: f64,
    /// `|u_2|_∞`.
    pub u2_bound: f64,
    /// Precision threshold `p` of the rounding model.
    pub precision: f64,
}

impl ExampleParams {
    pub fn new(n: u32) -> Self {
        ExampleParams { n: Terms::Finite(n), u1_bound: 0.0, u2_bound: 0.0, precision: DOUBLE_PRECISION }
    }

    pub fn with_inputs(mut self, u1: f64, u2: f64) -> Self {
        self.u1_bound = u1;
        self.u2_bound = u2;
        self
    }

    pub fn with_precision(mut self, p: f64) -> Self {
        self.precision = p;
        self
    }

    pub fn u_bounds(&self) -> [f64; 2] {
        [self.u1_bound, self.u2_bound]
    }
}

/// `a = (4π²n + 3π²)/2`.
pub fn a_value(n: u32) -> f64 {
    (4.0 * PI * PI * n as f64 + 3.0 * PI * PI) / 2.0
}

/// `artanh(1 - p)`: the smallest argument at which `tanh` is within `p` of 1.
pub fn rounding_threshold(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("precision must lie in (0, 1), got {p}")));
    }
    Ok(0.5 * ((2.0 - p) / p).ln())
}

/// `1 - |tanh(x)|`, without cancellation.
pub fn saturation_gap(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    2.0 * e / (1.0 + e)
}

/// The rounding model: values below `p` in magnitude round to zero.
pub fn round_to_precision(v: f64, p: f64) -> f64 {
    if v.abs() < p {
        0.0
    } else {
        v
    }
}

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sech²(x)` computed without overflow.
fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedInterval {
    pub lo: f64,
    pub hi: f64,
}

/// The example with its derived constants precomputed.
#[derive(Debug, Clone)]
pub struct Example {
    params: ExampleParams,
    a: f64,
    centers: Vec<f64>,
    threshold: f64,
}

impl Example {
    pub fn new(params: ExampleParams) -> Result<Self> {
        let threshold = rounding_threshold(params.precision)?;
        if !(params.u1_bound >= 0.0 && params.u2_bound >= 0.0) {
            return Err(Error::invalid("input bounds must be nonnegative"));
        }
        let (a, count) = match params.n {
            Terms::Finite(n) => (a_value(n), n as usize),
            Terms::Infinite { range } => {
                if !(range > 0.0 && range.is_finite()) {
                    return Err(Error::invalid("n = ∞ needs a positive finite evaluation range"));
                }
                // h's summands tanh(r - c) + 1 decay slowest; they fix the cutoff.
                (f64::INFINITY, ((range + threshold) / TWO_PI_SQ).ceil() as usize)
            }
        };
        let centers = (1..=count).map(|i| TWO_PI_SQ * i as f64).collect();
        Ok(Example { params, a, centers, threshold })
    }

    pub fn params(&self) -> &ExampleParams {
        &self.params
    }

    /// `a`; infinite for `n = ∞`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Summands actually evaluated (`n`, or the truncation for `n = ∞`).
    pub fn summands(&self) -> usize {
        self.centers.len()
    }

    /// `r*` for the configured precision.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Default scan range: `[0, 1.1a]`, or the evaluation range for `n = ∞`.
    pub fn scan_bound(&self) -> f64 {
        match self.params.n {
            Terms::Finite(_) => 1.1 * self.a,
            Terms::Infinite { range } => range,
        }
    }

    /// Top level of the `tanh` branch, `2n + 1`.
    fn plateau(&self) -> f64 {
        2.0 * self.centers.len() as f64 + 1.0
    }

    pub fn g(&self, r: f64) -> f64 {
        let s = sign(r);
        if r.abs() <= self.a {
            let mut v = (2.0 * r).tanh();
            for &c in &self.centers {
                v += s * (1.0 + s * (2.0 * (r - s * c)).tanh());
            }
            v
        } else {
            let d = r - s * self.a;
            s * (self.plateau() + d * d)
        }
    }

    /// `g'(r)`; even in `r`.
    pub fn g_prime(&self, r: f64) -> f64 {
        let m = r.abs();
        if m <= self.a {
            2.0 * sech2(2.0 * r) + self.centers.iter().map(|&c| 2.0 * sech2(2.0 * (m - c))).sum::<f64>()
        } else {
            2.0 * (m - self.a)
        }
    }

    pub fn h(&self, r: f64) -> f64 {
        let s = (r / (2.0 * PI)).sin();
        let s2 = s * s;
        let mut amp = 1.0;
        for &c in &self.centers {
            amp += (r - c).tanh() + 1.0;
        }
        s2 * amp
    }

    /// `u/(a+1)`; zero when `a` is infinite.
    pub fn input_scale(&self, u: f64) -> f64 {
        u / (self.a + 1.0)
    }

    /// `ẋ_i = -(25 + c) g(x_i) + 25 h(x_other) + c²` with `c = u_i/(a+1)`.
    pub fn field(&self, x_i: f64, x_other: f64, u_i: f64) -> f64 {
        let c = self.input_scale(u_i);
        -(COUPLING + c) * self.g(x_i) + COUPLING * self.h(x_other) + c * c
    }

    /// The input-free reduction `-25 g(x_i) + 25 h(x_other)`.
    pub fn field_unforced(&self, x_i: f64, x_other: f64) -> f64 {
        -COUPLING * self.g(x_i) + COUPLING * self.h(x_other)
    }

    /// `∂ẋ_i/∂x_i`.
    pub fn field_self_partial(&self, x_i: f64, u_i: f64) -> f64 {
        -(COUPLING + self.input_scale(u_i)) * self.g_prime(x_i)
    }

    /// Maxima `r_k = 2π²k + π²` of `h`, `k = 0..=n` (or up to the range).
    pub fn equilibria(&self) -> Vec<f64> {
        let count = match self.params.n {
            Terms::Finite(n) => n as usize + 1,
            Terms::Infinite { range } => ((range - PI * PI) / TWO_PI_SQ).floor().max(-1.0) as usize + 1,
        };
        (0..count).map(|k| TWO_PI_SQ * k as f64 + PI * PI).collect()
    }

    /// Arguments of the `tanh` terms of `g` at `r >= 0`.
    fn term_args(&self, r: f64) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(2.0 * r).chain(self.centers.iter().map(move |&c| 2.0 * (r - c)))
    }

    /// True when `g` is numerically constant at `r >= 0`: `r <= a` and every
    /// `tanh` term is within `p` of saturation.
    pub fn is_numerically_constant(&self, r: f64) -> bool {
        let r = r.abs();
        r <= self.a && self.term_args(r).all(|x| saturation_gap(x) < self.params.precision)
    }

    /// `round(|g(r1) - g(r2)|) = 0` under the rounding model, applied term by
    /// term (each term's increment is below `p`).
    pub fn increment_rounds_to_zero(&self, r1: f64, r2: f64) -> bool {
        let (r1, r2) = (r1.abs(), r2.abs());
        if r1 > self.a || r2 > self.a {
            return false;
        }
        self.term_args(r1).zip(self.term_args(r2)).all(|(x1, x2)| {
            let inc = if sign(x1) == sign(x2) {
                (saturation_gap(x1) - saturation_gap(x2)).abs()
            } else {
                (x1.tanh() - x2.tanh()).abs()
            };
            round_to_precision(inc, self.params.precision) == 0.0
        })
    }

    pub fn g_fn(self: &Arc<Self>) -> ScalarFn {
        let ex = Arc::clone(self);
        ScalarFn::new("g", Domain::NONNEGATIVE, move |r| ex.g(r))
    }

    pub fn h_fn(self: &Arc<Self>) -> ScalarFn {
        let ex = Arc::clone(self);
        ScalarFn::new("h", Domain::NONNEGATIVE, move |r| ex.h(r))
    }

    /// `g⁻¹` on `[0, ∞)`.
    pub fn g_inverse(self: &Arc<Self>) -> ScalarFn {
        let g = self.g_fn();
        ScalarFn::fallible("g^-1", Domain::NONNEGATIVE, move |y| invert_unbounded(&g, y, 1e-13)).with_class_k()
    }

    /// Interconnection gain `γ(s) = g⁻¹(h(s)/(1 - δ))` (both directions).
    pub fn interconnection_gain(self: &Arc<Self>, delta: f64) -> Result<ScalarFn> {
        check_delta(delta)?;
        let (ex, ginv) = (Arc::clone(self), self.g_inverse());
        Ok(ScalarFn::fallible(format!("g^-1(h/(1-{delta}))"), Domain::NONNEGATIVE, move |s| {
            ginv.eval(ex.h(s) / (1.0 - delta))
        }))
    }

    /// External gain `u ↦ g⁻¹((u/(a+1))² / (24δ))`.
    ///
    /// Once `|x_i|` dominates both gains, `sign(x_i)·ẋ_i <= -25δ g + c² <= -δ g`.
    pub fn external_gain(self: &Arc<Self>, delta: f64) -> Result<ScalarFn> {
        check_delta(delta)?;
        let (ex, ginv) = (Arc::clone(self), self.g_inverse());
        Ok(ScalarFn::fallible(format!("g^-1(c(u)^2/(24*{delta}))"), Domain::NONNEGATIVE, move |u| {
            let c = ex.input_scale(u);
            ginv.eval(c * c / ((COUPLING - 1.0) * delta))
        })
        .with_class_k())
    }

    /// Decay rate `α(s) = δ g(s)` for `s >= 0`.
    pub fn decay_rate(self: &Arc<Self>, delta: f64) -> Result<ScalarFn> {
        check_delta(delta)?;
        let ex = Arc::clone(self);
        Ok(ScalarFn::new(format!("{delta}*g"), Domain::NONNEGATIVE, move |s| delta * ex.g(s)))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// [`Dynamics`] of the example (scalar subsystems).
#[derive(Debug, Clone)]
pub struct ExampleDynamics(pub Arc<Example>);

impl Dynamics for ExampleDynamics {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn eval(&self, i: Subsystem, x1: &[f64], x2: &[f64], u_i: f64, out: &mut [f64]) {
        out[0] = match i {
            Subsystem::One => self.0.field(x1[0], x2[0], u_i),
            Subsystem::Two => self.0.field(x2[0], x1[0], u_i),
        };
    }

    fn self_divergence(&self, i: Subsystem, x1: &[f64], x2: &[f64], u_i: f64) -> Option<f64> {
        let x = match i {
            Subsystem::One => x1[0],
            Subsystem::Two => x2[0],
        };
        Some(self.0.field_self_partial(x, u_i))
    }
}

/// The example as a [`SystemModel`]: `V_i = |x_i|`, storage bounds `id`,
/// gains from [`Example::interconnection_gain`] and
/// [`Example::external_gain`], decay `δ g`.
pub fn example_model(ex: &Arc<Example>, delta: f64) -> Result<SystemModel> {
    let gain = ex.interconnection_gain(delta)?;
    let ext = ex.external_gain(delta)?;
    let alpha = ex.decay_rate(delta)?;
    let id = ScalarFn::identity();
    Ok(SystemModel {
        dynamics: Arc::new(ExampleDynamics(Arc::clone(ex))),
        storage: [Storage::abs(), Storage::abs()],
        alpha_lo: [id.clone(), id.clone()],
        alpha_hi: [id.clone(), id],
        gamma_int: [gain.clone(), gain],
        gamma_ext: [ext.clone(), ext],
        alpha: [alpha.clone(), alpha],
    })
}

/// Intervals of `[0, scan_bound]` on which `g` is not numerically constant,
/// as an [`SgcAnalysis`] (these are the intervals `M_k`).
///
/// The saturation predicate is sampled every `grid_step` and each change is
/// bisected to `refine_tol`.
pub fn increasing_intervals(ex: &Example, scan_bound: f64, grid_step: f64, refine_tol: f64) -> Result<SgcAnalysis> {
    let runs = scan_runs(|r| Ok(!ex.is_numerically_constant(r)), 0.0, scan_bound, grid_step, refine_tol)?;
    Ok(SgcAnalysis::from_runs(&runs, scan_bound, grid_step, refine_tol))
}

/// Closed stretches of `[0, scan_bound]` where `g` is numerically constant:
/// the complement of [`increasing_intervals`].
pub fn numerically_constant_regions(
    ex: &Example,
    scan_bound: f64,
    grid_step: f64,
    refine_tol: f64,
) -> Result<Vec<ClosedInterval>> {
    let inc = increasing_intervals(ex, scan_bound, grid_step, refine_tol)?;
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for iv in &inc.intervals {
        if iv.lo > cursor {
            out.push(ClosedInterval { lo: cursor, hi: iv.lo });
        }
        cursor = iv.hi;
    }
    if inc.intervals.last().is_some_and(|iv| !iv.right_open) && cursor < scan_bound {
        out.push(ClosedInterval { lo: cursor, hi: scan_bound });
    }
    if inc.intervals.is_empty() {
        out.push(ClosedInterval { lo: 0.0, hi: scan_bound });
    }
    Ok(out)
}

/// `ρ(x) = exp(-(x_1 + x_2))`.
pub fn rho_example(x: &[f64]) -> f64 {
    (-(x[0] + x[1])).exp()
}

/// `ρ(x) = exp(-(|x_1| + |x_2|))`, whose gradient `-sign(x_i)ρ` is the one
/// the quadrant-wise divergence bounds are written with.
pub fn rho_example_symmetric(x: &[f64]) -> f64 {
    (-(x[0].abs() + x[1].abs())).exp()
}
