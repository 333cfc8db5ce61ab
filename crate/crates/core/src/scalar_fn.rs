//! Scalar comparison functions and the small-gain interval scan.
//!
//! A [`ScalarFn`] is an evaluation callback plus a declared domain. Gains,
//! decay rates and storage bounds are all `ScalarFn`s; the example's `g`
//! and `h` are exposed the same way so the generic checks apply to them.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used when a check compares a function value against zero.
pub const FN_EQ_TOL: f64 = 1e-9;
/// Default bisection width for interval boundaries.
pub const DEFAULT_REFINE_TOL: f64 = 1e-9;

type EvalFn = dyn Fn(f64) -> Result<f64> + Send + Sync;

/// Closed interval `[lo, hi]`; `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const NONNEGATIVE: Domain = Domain { lo: 0.0, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || hi < lo || lo == f64::INFINITY {
            return Err(Error::invalid(format!("invalid domain [{lo}, {hi}]")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// A real function of one real variable on a declared domain.
///
/// Cloning is cheap (the callback is shared) and evaluation is pure, so a
/// `ScalarFn` can be evaluated from several threads at once.
#[derive(Clone)]
pub struct ScalarFn {
    eval: Arc<EvalFn>,
    domain: Domain,
    label: String,
    class_k: bool,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("class_k", &self.class_k)
            .finish()
    }
}

impl ScalarFn {
    pub fn new<F>(label: impl Into<String>, domain: Domain, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::fallible(label, domain, move |s| Ok(f(s)))
    }

    /// Like [`ScalarFn::new`] for callbacks that can fail (nested inversions,
    /// compositions).
    pub fn fallible<F>(label: impl Into<String>, domain: Domain, f: F) -> Self
    where
        F: Fn(f64) -> Result<f64> + Send + Sync + 'static,
    {
        ScalarFn { eval: Arc::new(f), domain, label: label.into(), class_k: false }
    }

    pub fn identity() -> Self {
        ScalarFn::new("id", Domain::NONNEGATIVE, |s| s).with_class_k()
    }

    pub fn linear(slope: f64) -> Self {
        let f = ScalarFn::new(format!("{slope}*s"), Domain::NONNEGATIVE, move |s| slope * s);
        if slope > 0.0 {
            f.with_class_k()
        } else {
            f
        }
    }

    pub fn zero() -> Self {
        ScalarFn::new("0", Domain::NONNEGATIVE, |_| 0.0)
    }

    /// Monotone piecewise-linear interpolant through `(xs[i], ys[i])`.
    ///
    /// `xs` must be strictly increasing and `ys` non-decreasing. Outside
    /// `[xs[0], xs[last]]` evaluation is a domain error.
    pub fn from_samples(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::invalid("need at least two samples of equal length"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sample abscissae must be strictly increasing"));
        }
        if ys.windows(2).any(|w| !(w[1] >= w[0])) || ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("sample ordinates must be finite and non-decreasing"));
        }
        let domain = Domain::new(xs[0], xs[xs.len() - 1])?;
        let xs: Arc<[f64]> = xs.into();
        let ys: Arc<[f64]> = ys.into();
        Ok(ScalarFn::new(label, domain, move |s| {
            let i = xs.partition_point(|&x| x <= s).clamp(1, xs.len() - 1);
            let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
            y0 + (y1 - y0) * (s - x0) / (x1 - x0)
        }))
    }

    /// Marks the function as claimed class-K; see [`is_class_k`] to check it.
    pub fn with_class_k(mut self) -> Self {
        self.class_k = true;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn claims_class_k(&self) -> bool {
        self.class_k
    }

    /// Same callback on the sub-domain `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let d = Domain::new(lo, hi)?;
        if !(self.domain.contains(lo) && self.domain.contains(hi)) {
            return Err(Error::invalid(format!(
                "{}: [{lo}, {hi}] is not inside [{}, {}]",
                self.label, self.domain.lo, self.domain.hi
            )));
        }
        let mut out = self.clone();
        out.domain = d;
        Ok(out)
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        if !self.domain.contains(s) {
            return Err(Error::Domain { label: self.label.clone(), point: s, lo: self.domain.lo, hi: self.domain.hi });
        }
        let v = (self.eval)(s)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { label: self.label.clone(), point: s });
        }
        Ok(v)
    }
}

/// `f ∘ g`: evaluates `f(g(s))` on the domain of `g`.
///
/// A value of `g` outside the domain of `f` is reported when the composite
/// is evaluated, carrying the offending point.
pub fn compose(f: &ScalarFn, g: &ScalarFn) -> ScalarFn {
    let (outer, inner) = (f.clone(), g.clone());
    let label = format!("{}∘{}", f.label, g.label);
    let mut h = ScalarFn::fallible(label, g.domain, move |s| outer.eval(inner.eval(s)?));
    h.class_k = f.class_k && g.class_k;
    h
}

/// Solves `f(x) = y` on `[lo, hi]` by bisection for non-decreasing `f`.
///
/// Returns `x` with `|f(x) - y| <= tol`, or the best bracket end once the
/// bracket can no longer be split in floating point (flat stretches).
pub fn invert_on_interval(f: &ScalarFn, interval: (f64, f64), y: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = interval;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("invalid bracket [{lo}, {hi}]")));
    }
    let mut flo = f.eval(lo)?;
    let mut fhi = f.eval(hi)?;
    if flo > fhi {
        return Err(Error::NonMonotone { at: lo });
    }
    if y < flo || y > fhi {
        return Err(Error::OutOfRange { target: y, lo: flo, hi: fhi });
    }
    loop {
        if (flo - y).abs() <= tol {
            return Ok(lo);
        }
        if (fhi - y).abs() <= tol {
            return Ok(hi);
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            return Ok(if (flo - y).abs() <= (fhi - y).abs() { lo } else { hi });
        }
        let fm = f.eval(mid)?;
        if fm < flo || fm > fhi {
            return Err(Error::NonMonotone { at: mid });
        }
        if fm < y {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
}

/// Inverse of a non-decreasing `f` on `[domain.lo, ∞)`, growing the bracket
/// by doubling until it covers `y`.
pub fn invert_unbounded(f: &ScalarFn, y: f64, tol: f64) -> Result<f64> {
    let lo = f.domain.lo;
    let mut width: f64 = 1.0;
    loop {
        let hi = (lo + width).min(f.domain.hi);
        if f.eval(hi)? >= y || hi >= f.domain.hi {
            return invert_on_interval(f, (lo, hi), y, tol);
        }
        width *= 2.0;
        if !width.is_finite() {
            return Err(Error::OutOfRange { target: y, lo: f.eval(lo)?, hi: f64::INFINITY });
        }
    }
}

/// Outcome of [`is_class_k`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassKVerdict {
    pub holds: bool,
    pub value_at_zero: f64,
    /// First consecutive grid pair `(s, s + step)` with `f(s + step) <= f(s)`.
    pub first_violation: Option<(f64, f64)>,
    pub grid_step: f64,
}

/// Grid check of the class-K property: `f(0) = 0` (within [`FN_EQ_TOL`])
/// and strict increase across consecutive samples of the domain.
pub fn is_class_k(f: &ScalarFn, grid_step: f64) -> Result<ClassKVerdict> {
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid_step must be positive"));
    }
    let d = f.domain();
    if !d.is_bounded() {
        return Err(Error::UnboundedDomain { label: f.label.clone() });
    }
    if d.lo != 0.0 {
        return Err(Error::invalid(format!("{}: class-K check needs a domain starting at 0", f.label)));
    }
    let value_at_zero = f.eval(0.0)?;
    let n = (d.hi / grid_step).ceil() as usize;
    let at = |j: usize| (j as f64 * grid_step).min(d.hi);
    let values = (0..=n).into_par_iter().map(|j| f.eval(at(j))).collect::<Result<Vec<_>>>()?;
    let first_violation = values.windows(2).position(|w| !(w[1] > w[0])).map(|j| (at(j), at(j + 1)));
    Ok(ClassKVerdict {
        holds: value_at_zero.abs() <= FN_EQ_TOL && first_violation.is_none(),
        value_at_zero,
        first_violation,
        grid_step,
    })
}

/// A maximal run of grid samples on which a predicate holds, with refined
/// endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    /// Left endpoint; the scan start when the predicate already holds there.
    pub lo: f64,
    pub hi: f64,
    /// Predicate still true at the right end of the scan range.
    pub right_open: bool,
    /// `lo` is a refined crossing rather than the scan start.
    pub lo_refined: bool,
}

/// Scans `pred` on the grid `lo, lo + step, ..., hi` and returns the maximal
/// true runs. Each change of truth value is bisected to a bracket of width
/// at most `refine_tol`; the reported endpoint is the bracket end on the
/// false side, so the runs are open intervals.
pub fn scan_runs<P>(pred: P, lo: f64, hi: f64, step: f64, refine_tol: f64) -> Result<Vec<Run>>
where
    P: Fn(f64) -> Result<bool> + Sync,
{
    if !(step > 0.0) || !(refine_tol > 0.0) {
        return Err(Error::invalid("grid step and refine_tol must be positive"));
    }
    if !(hi > lo) || !hi.is_finite() || !lo.is_finite() {
        return Err(Error::invalid(format!("scan range [{lo}, {hi}] is empty or unbounded")));
    }
    let n = ((hi - lo) / step).ceil() as usize;
    let at = |j: usize| (lo + j as f64 * step).min(hi);
    let truth = (0..=n).into_par_iter().map(|j| pred(at(j))).collect::<Result<Vec<bool>>>()?;

    let refine = |mut a: f64, mut b: f64, left_val: bool| -> Result<(f64, f64)> {
        while b - a > refine_tol {
            let m = a + 0.5 * (b - a);
            if m <= a || m >= b {
                break;
            }
            if pred(m)? == left_val {
                a = m;
            } else {
                b = m;
            }
        }
        Ok((a, b))
    };

    let mut runs = Vec::new();
    let mut open: Option<(f64, bool)> = truth[0].then_some((lo, false));
    for j in 0..n {
        match (truth[j], truth[j + 1]) {
            (false, true) => {
                let (a, _) = refine(at(j), at(j + 1), false)?;
                open = Some((a, true));
            }
            (true, false) => {
                let (_, b) = refine(at(j), at(j + 1), true)?;
                let (start, refined) = open.take().expect("run opened before closing");
                runs.push(Run { lo: start, hi: b, right_open: false, lo_refined: refined });
            }
            _ => {}
        }
    }
    if let Some((start, refined)) = open {
        runs.push(Run { lo: start, hi, right_open: true, lo_refined: refined });
    }
    Ok(runs)
}

/// One small-gain interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgcInterval {
    pub lo: f64,
    pub hi: f64,
    /// The condition still held at the scan bound, standing in for `hi = ∞`.
    pub right_open: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingKind {
    Continuous,
    /// `γ12∘γ21 - id` jumps across the refined bracket.
    Jump,
}

/// Diagnostics for a refined interval endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub at: f64,
    /// `|γ12(γ21(at)) - at|`.
    pub residual: f64,
    pub kind: CrossingKind,
}

/// The interval sequence on which `γ12(γ21(s)) < s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgcAnalysis {
    pub intervals: Vec<SgcInterval>,
    pub scan_bound: f64,
    pub grid_step: f64,
    pub refine_tol: f64,
    /// Refined interior endpoints in scan order; empty for analyses built
    /// from something other than a gain scan.
    #[serde(default)]
    pub boundaries: Vec<Boundary>,
}

impl SgcAnalysis {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Interval `k` (1-based, as `M_k`).
    pub fn interval(&self, k: usize) -> Result<SgcInterval> {
        if k == 0 || k > self.intervals.len() {
            return Err(Error::IndexOutOfRange { k, len: self.intervals.len() });
        }
        Ok(self.intervals[k - 1])
    }

    pub(crate) fn from_runs(runs: &[Run], scan_bound: f64, grid_step: f64, refine_tol: f64) -> Self {
        SgcAnalysis {
            intervals: runs.iter().map(|r| SgcInterval { lo: r.lo, hi: r.hi, right_open: r.right_open }).collect(),
            scan_bound,
            grid_step,
            refine_tol,
            boundaries: Vec::new(),
        }
    }
}

/// Locates the intervals where the small-gain condition `γ12(γ21(s)) < s`
/// holds on `(0, scan_bound]`.
///
/// `φ(s) = γ12(γ21(s)) - s` is sampled on a uniform grid; grid points with
/// `φ = 0` exactly are excluded. Sign changes are bisected to `refine_tol`.
/// Finding no interval is a valid result.
pub fn find_sgc_intervals(
    gamma_12: &ScalarFn,
    gamma_21: &ScalarFn,
    scan_bound: f64,
    grid_step: f64,
    refine_tol: f64,
) -> Result<SgcAnalysis> {
    if !(scan_bound > 0.0) || !scan_bound.is_finite() {
        return Err(Error::invalid(format!("scan_bound must be positive and finite, got {scan_bound}")));
    }
    let loop_gain = compose(gamma_12, gamma_21);
    let phi = |s: f64| loop_gain.eval(s).map(|v| v - s);
    let runs = scan_runs(|s| phi(s).map(|v| v < 0.0), 0.0, scan_bound, grid_step, refine_tol)?;

    let mut analysis = SgcAnalysis::from_runs(&runs, scan_bound, grid_step, refine_tol);
    for run in &runs {
        let mut ends = Vec::with_capacity(2);
        if run.lo_refined && run.lo > 0.0 {
            ends.push(run.lo);
        }
        if !run.right_open {
            ends.push(run.hi);
        }
        for at in ends {
            // The crossing bracket is [at - refine_tol, at + refine_tol] at most.
            let left = phi((at - refine_tol).max(0.0))?;
            let right = phi((at + refine_tol).min(scan_bound))?;
            let kind =
                if (left - right).abs() <= 1e-6 * (1.0 + at) { CrossingKind::Continuous } else { CrossingKind::Jump };
            analysis.boundaries.push(Boundary { at, residual: phi(at)?.abs(), kind });
        }
    }
    Ok(analysis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half() -> ScalarFn {
        ScalarFn::linear(0.5)
    }

    #[test]
    fn compose_trivial_cases() {
        let id = ScalarFn::identity();
        assert_eq!(compose(&id, &id).eval(3.0).unwrap(), 3.0);
        assert_eq!(compose(&half(), &half()).eval(4.0).unwrap(), 1.0);
        assert!(compose(&half(), &half()).claims_class_k());
    }

    #[test]
    fn compose_reports_offending_point() {
        let outer = ScalarFn::new("sqrt", Domain::new(0.0, 1.0).unwrap(), f64::sqrt);
        let inner = ScalarFn::new("double", Domain::NONNEGATIVE, |s| 2.0 * s);
        match compose(&outer, &inner).eval(3.0) {
            Err(Error::Domain { point, label, .. }) => {
                assert_eq!(point, 6.0);
                assert_eq!(label, "sqrt");
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn invert_known_roots() {
        let sq = ScalarFn::new("s^2", Domain::NONNEGATIVE, |s| s * s);
        let x = invert_on_interval(&sq, (0.0, 10.0), 4.0, 1e-10).unwrap();
        assert!((x - 2.0).abs() <= 1e-9);
        let x = invert_on_interval(&ScalarFn::identity(), (0.0, 1.0), 0.0, 1e-12).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn invert_errors() {
        let sq = ScalarFn::new("s^2", Domain::NONNEGATIVE, |s| s * s);
        assert!(matches!(invert_on_interval(&sq, (0.0, 1.0), 4.0, 1e-10), Err(Error::OutOfRange { .. })));
        // sin(0) <= 0.5 <= sin(7), but the first midpoint sin(3.5) < sin(0).
        let sin = ScalarFn::new("sin", Domain::NONNEGATIVE, f64::sin);
        let r = invert_on_interval(&sin, (0.0, 7.0), 0.5, 1e-12);
        assert!(matches!(r, Err(Error::NonMonotone { .. })), "{r:?}");
    }

    #[test]
    fn class_k_checks() {
        let id = ScalarFn::identity().restrict(0.0, 10.0).unwrap();
        assert!(is_class_k(&id, 1e-3).unwrap().holds);

        let sin = ScalarFn::new("sin", Domain::new(0.0, 10.0).unwrap(), f64::sin);
        let v = is_class_k(&sin, 1e-3).unwrap();
        assert!(!v.holds);
        let (a, b) = v.first_violation.unwrap();
        assert!(a <= std::f64::consts::FRAC_PI_2 + 1e-3 && b >= std::f64::consts::FRAC_PI_2 - 1e-3);

        assert!(matches!(is_class_k(&ScalarFn::identity(), 0.1), Err(Error::UnboundedDomain { .. })));
        assert!(is_class_k(&id, 0.0).is_err());
    }

    #[test]
    fn sgc_trivial_cases() {
        let a = find_sgc_intervals(&half(), &half(), 10.0, 0.01, 1e-9).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.intervals[0], SgcInterval { lo: 0.0, hi: 10.0, right_open: true });

        let id = ScalarFn::identity();
        let a = find_sgc_intervals(&id, &id, 10.0, 0.01, 1e-9).unwrap();
        assert!(a.is_empty());

        assert!(find_sgc_intervals(&id, &id, 0.0, 0.01, 1e-9).is_err());
    }

    #[test]
    fn sgc_refines_continuous_crossings() {
        // γ(s) = s^1.5 / 2, so γ∘γ(s) = s^2.25 / 2^2.5 < s  iff  s < 4.
        let g = ScalarFn::new("s^1.5/2", Domain::NONNEGATIVE, |s| s * s.sqrt() / 2.0);
        let loop_gain = compose(&g, &g);
        let a = find_sgc_intervals(&g, &g, 10.0, 0.07, 1e-10).unwrap();
        assert_eq!(a.len(), 1);
        let hi = a.intervals[0].hi;
        assert!(!a.intervals[0].right_open);
        assert_eq!(a.boundaries.len(), 1);
        assert_eq!(a.boundaries[0].kind, CrossingKind::Continuous);
        // Independent check: the root of φ by a dense scan.
        let phi = |s: f64| loop_gain.eval(s).unwrap() - s;
        assert!(phi(hi - 1e-6) < 0.0 && phi(hi + 1e-6) > 0.0);
        assert!(a.boundaries[0].residual <= 1e-8);
        assert!((hi - 4.0).abs() <= 1e-9);
    }

    #[test]
    fn sgc_zero_on_grid_point_is_excluded() {
        // φ ≡ 0 on [2, 3], negative elsewhere: samples inside the flat part are excluded.
        let g = ScalarFn::new("flat", Domain::NONNEGATIVE, |s| if (2.0..=3.0).contains(&s) { s } else { 0.5 * s });
        let id = ScalarFn::identity();
        let a = find_sgc_intervals(&g, &id, 5.0, 0.5, 1e-9).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.intervals[0].hi <= 2.0 + 1e-9);
        assert!(a.intervals[1].lo >= 3.0 - 1e-9);
    }

    #[test]
    fn piecewise_linear_samples() {
        let f = ScalarFn::from_samples("pl", vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.eval(2.0).unwrap(), 2.5);
        assert_eq!(f.eval(3.0).unwrap(), 3.0);
        assert!(f.eval(3.5).is_err());
        assert!(ScalarFn::from_samples("bad", vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    /// Strictly increasing polynomial on [0, 4]: positive coefficients.
    fn poly(coeffs: Vec<f64>) -> ScalarFn {
        ScalarFn::new("poly", Domain::new(0.0, 4.0).unwrap(), move |s| {
            coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn inversion_recovers_target(
            coeffs in prop::collection::vec(0.01f64..3.0, 2..6),
            t in 0.0f64..1.0,
        ) {
            let mut c = coeffs;
            c[0] = 0.0;
            let f = poly(c);
            let top = f.eval(4.0).unwrap();
            let y = t * top;
            let tol = 1e-10;
            let x = invert_on_interval(&f, (0.0, 4.0), y, tol).unwrap();
            prop_assert!((f.eval(x).unwrap() - y).abs() <= 2.0 * tol);
        }

        #[test]
        fn compose_is_associative(s in 0.0f64..3.0, a in 0.1f64..2.0, b in 0.1f64..2.0) {
            let f = ScalarFn::new("f", Domain::NONNEGATIVE, move |x| a * x + x * x);
            let g = ScalarFn::new("g", Domain::NONNEGATIVE, move |x| (b * x).sqrt());
            let h = ScalarFn::new("h", Domain::NONNEGATIVE, |x| x.exp() - 1.0);
            let left = compose(&compose(&f, &g), &h).eval(s).unwrap();
            let right = compose(&f, &compose(&g, &h)).eval(s).unwrap();
            prop_assert!((left - right).abs() <= 1e-12 * (1.0 + right.abs()));
        }
    }
}
