//! Run configuration, read from TOML or JSON with per-field defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::example_system::{ExampleParams, Terms, DOUBLE_PRECISION};
use crate::grid::BoxGrid;
use crate::scalar_fn::DEFAULT_REFINE_TOL;
use crate::sim::{DEFAULT_CONV_TOL, DEFAULT_DT, DEFAULT_ESCAPE_BOUND, DEFAULT_T_END, DEFAULT_WINDOW_FRACTION};
use crate::{Error, Result};

/// Evaluation range used for `n = "inf"` when no scan bound is given.
pub const DEFAULT_INFINITE_RANGE: f64 = 100.0;

/// `n` as written in a config: a count or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermCount {
    Count(u32),
    Word(String),
}

impl Default for TermCount {
    fn default() -> Self {
        TermCount::Count(2)
    }
}

impl std::str::FromStr for TermCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(TermCount::Word("inf".into())),
            t => t
                .parse()
                .map(TermCount::Count)
                .map_err(|_| Error::invalid(format!("n must be a nonnegative integer or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityChoice {
    /// `exp(-(x1 + x2))`.
    ExpSum,
    /// `exp(-(|x1| + |x2|))`.
    ExpAbsSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateChoice {
    /// `max_i |x_i| >= |u|`.
    MaxStorageIdentity,
    /// `|x_i| >= γ_k(u_i)` with the example's constructed `γ_k`.
    ComponentwiseExample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionRole {
    /// Must meet a gap shell `D_k`; otherwise the config is rejected.
    Gap,
    /// A comparison region; no overlap requirement.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRegion {
    pub name: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub steps: Vec<usize>,
    #[serde(default)]
    pub u: [f64; 2],
    pub density: DensityChoice,
    pub gate: GateChoice,
    pub role: RegionRole,
    pub expect: Expectation,
}

impl DensityRegion {
    pub fn grid(&self) -> Result<BoxGrid> {
        BoxGrid::new(self.lo.clone(), self.hi.clone(), self.steps.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityConfig {
    pub q_tol: f64,
    pub measure_zero_budget: f64,
    pub shell_margin: f64,
    pub regions: Vec<DensityRegion>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        let square = |name: &str, lo: f64, hi: f64, steps: usize| DensityRegion {
            name: name.into(),
            lo: vec![lo; 2],
            hi: vec![hi; 2],
            steps: vec![steps; 2],
            u: [0.0, 0.0],
            density: DensityChoice::ExpSum,
            gate: GateChoice::MaxStorageIdentity,
            role: RegionRole::Gap,
            expect: Expectation::Pass,
        };
        DensityConfig {
            q_tol: 0.0,
            measure_zero_budget: 0.0,
            shell_margin: crate::density::DEFAULT_SHELL_MARGIN,
            regions: vec![
                square("negative_quadrant", -60.0, -0.1, 200),
                DensityRegion {
                    role: RegionRole::Control,
                    expect: Expectation::Fail,
                    ..square("origin", -0.1, 0.1, 21)
                },
                DensityRegion {
                    u: [3.0, 4.0],
                    gate: GateChoice::ComponentwiseExample,
                    ..square("band_r1", 29.0, 30.2, 61)
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub conv_tol: f64,
    pub window_fraction: f64,
    pub escape_bound: f64,
    pub record_stride: usize,
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_steps: usize,
    /// Initial conditions exported as full trajectories.
    pub trajectories: Vec<[f64; 2]>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: DEFAULT_T_END,
            dt: DEFAULT_DT,
            conv_tol: DEFAULT_CONV_TOL,
            window_fraction: DEFAULT_WINDOW_FRACTION,
            escape_bound: DEFAULT_ESCAPE_BOUND,
            record_stride: 100,
            sweep_lo: 0.0,
            sweep_hi: 60.0,
            sweep_steps: 50,
            trajectories: vec![[1.0, 1.0], [3.0 * std::f64::consts::PI.powi(2); 2], [40.0, 10.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n: TermCount,
    pub u1_bound: f64,
    pub u2_bound: f64,
    pub precision: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Defaults to `1.1 a`, or the infinite-n range.
    pub scan_bound: Option<f64>,
    /// Defaults to `1e-3 · scan_bound`.
    pub grid_step: Option<f64>,
    pub refine_tol: f64,
    /// Samples along `[0, scan_bound]` in the gains table.
    pub gain_samples: usize,
    pub out_dir: PathBuf,
    pub density: DensityConfig,
    pub simulate: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: TermCount::default(),
            u1_bound: 0.0,
            u2_bound: 0.0,
            precision: DOUBLE_PRECISION,
            delta: 0.5,
            epsilon: 1.0,
            scan_bound: None,
            grid_step: None,
            refine_tol: DEFAULT_REFINE_TOL,
            gain_samples: 1001,
            out_dir: PathBuf::from("out"),
            density: DensityConfig::default(),
            simulate: SimConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn terms(&self) -> Result<Terms> {
        match &self.n {
            TermCount::Count(n) => Ok(Terms::Finite(*n)),
            TermCount::Word(w) if w == "inf" => {
                Ok(Terms::Infinite { range: self.scan_bound.unwrap_or(DEFAULT_INFINITE_RANGE) })
            }
            TermCount::Word(w) => Err(Error::invalid(format!("n must be an integer or \"inf\", got {w:?}"))),
        }
    }

    pub fn example_params(&self) -> Result<ExampleParams> {
        Ok(ExampleParams {
            n: self.terms()?,
            u1_bound: self.u1_bound,
            u2_bound: self.u2_bound,
            precision: self.precision,
        })
    }

    /// Checks ranges that do not depend on the example itself.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("refine_tol", self.refine_tol),
            ("epsilon", self.epsilon),
            ("simulate.dt", self.simulate.dt),
            ("simulate.t_end", self.simulate.t_end),
            ("simulate.conv_tol", self.simulate.conv_tol),
            ("simulate.escape_bound", self.simulate.escape_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("scan_bound", self.scan_bound), ("grid_step", self.grid_step)] {
            if v.is_some_and(|v| !(v > 0.0)) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.simulate.window_fraction > 0.0 && self.simulate.window_fraction <= 1.0) {
            return Err(Error::invalid("simulate.window_fraction must lie in (0, 1]"));
        }
        if self.gain_samples < 2 || self.simulate.sweep_steps < 1 {
            return Err(Error::invalid("gain_samples must be >= 2 and sweep_steps >= 1"));
        }
        if !(self.density.q_tol >= 0.0) || !(0.0..=1.0).contains(&self.density.measure_zero_budget) {
            return Err(Error::invalid("density.q_tol must be >= 0 and measure_zero_budget in [0, 1]"));
        }
        self.terms()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_with_inf() {
        let cfg: RunConfig = toml::from_str("n = \"inf\"\nscan_bound = 80.0\n[simulate]\nt_end = 5.0\n").unwrap();
        assert_eq!(cfg.terms().unwrap(), Terms::Infinite { range: 80.0 });
        assert_eq!(cfg.simulate.t_end, 5.0);
        assert_eq!(cfg.simulate.dt, DEFAULT_DT);
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig { n: TermCount::Count(0), delta: 0.25, ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig { delta: 0.0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { n: TermCount::Word("many".into()), ..Default::default() }.validate().is_err());
        assert!("x".parse::<TermCount>().is_err());
        assert_eq!("7".parse::<TermCount>().unwrap(), TermCount::Count(7));
    }
}
