//! Run configuration: one JSON document, every field required, unknown keys
//! rejected. Logarithmic and angular units (dBm, degrees) exist only here and
//! are converted once when the scenario is assembled.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{PathLossLaw, PowerSplit, ReflectionPhases, RfConstants, TargetPair};
use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::geometry::{ArrayLayout, Position3};
use crate::metrics::PebDomain;
use crate::optimizer::{discretize_region, OptSettings, PhaseBounds, Scenario, UncertaintyRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Genie,
    Robust,
    Heatmap,
    Tradeoff,
    Montecarlo,
    Validate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Genie => "genie",
            Mode::Robust => "robust",
            Mode::Heatmap => "heatmap",
            Mode::Tradeoff => "tradeoff",
            Mode::Montecarlo => "montecarlo",
            Mode::Validate => "validate",
        }
    }
}

/// Which design a heatmap or Monte Carlo run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Genie,
    Robust,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Genie => "genie",
            Scheme::Robust => "robust",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub hris: [f64; 3],
    pub ue: [f64; 3],
    pub eve: [f64; 3],
    /// Reflection phases ω of UE and Eve.
    pub omega_deg: [f64; 2],
    /// Half side of the square uncertainty regions.
    pub region_half_extent_m: f64,
    /// x and y ranges of the area (heatmap cells, Monte Carlo draws).
    pub area_x_m: [f64; 2],
    pub area_y_m: [f64; 2],
    /// Height of heatmap probes and Monte Carlo targets.
    pub target_z_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_tx: usize,
    pub n_rf: usize,
    pub n_e: usize,
    pub spacing_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfConfig {
    pub carrier_hz: f64,
    pub noise_dbm: f64,
    pub p_max_dbm: f64,
    pub block_len: usize,
    pub path_loss: PathLossLaw,
    pub power_split: PowerSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    /// Secrecy threshold in bps/Hz; `null` drops the constraint.
    #[serde(deserialize_with = "Option::deserialize")]
    pub r_th_bps: Option<f64>,
    pub rho: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub phase_bounds_deg: [f64; 2],
    /// Points per uncertainty region.
    pub k: usize,
    pub max_k: usize,
    pub reflection_max_iter: usize,
    pub reflection_grad_tol: f64,
    pub solver_tol: f64,
    pub solver_max_iter: u32,
    pub peb_domain: PebDomain,
    pub randomization_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub design: Scheme,
    pub trials: usize,
    pub seed: u64,
    pub grid_resolution_m: f64,
    pub out_dir: String,
    pub rho_grid: Vec<f64>,
    pub n_e_grid: Vec<usize>,
    /// Record wall time per row; off keeps outputs byte-reproducible.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub array: ArrayConfig,
    pub rf: RfConfig,
    pub opt: OptConfig,
    pub run: RunConfig,
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        for (name, p) in [("geometry.hris", g.hris), ("geometry.ue", g.ue), ("geometry.eve", g.eve)] {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(cfg_err(name, "coordinates must be finite"));
            }
        }
        if !g.omega_deg.iter().all(|v| v.is_finite()) {
            return Err(cfg_err("geometry.omega_deg", "must be finite"));
        }
        if !(g.region_half_extent_m.is_finite() && g.region_half_extent_m >= 0.0) {
            return Err(cfg_err("geometry.region_half_extent_m", "must be a finite non-negative length"));
        }
        for (name, r) in [("geometry.area_x_m", g.area_x_m), ("geometry.area_y_m", g.area_y_m)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(cfg_err(name, "range must be finite and ordered"));
            }
        }
        if !g.target_z_m.is_finite() {
            return Err(cfg_err("geometry.target_z_m", "must be finite"));
        }

        let rf = &self.rf;
        if !(rf.carrier_hz.is_finite() && rf.carrier_hz > 0.0) {
            return Err(cfg_err("rf.carrier_hz", "must be positive"));
        }
        if !rf.noise_dbm.is_finite() || !(dbm_to_watts(rf.noise_dbm) > 0.0) {
            return Err(cfg_err("rf.noise_dbm", "must convert to a positive power"));
        }
        if !rf.p_max_dbm.is_finite() || !(dbm_to_watts(rf.p_max_dbm) > 0.0) {
            return Err(cfg_err("rf.p_max_dbm", "must convert to a positive power"));
        }
        if rf.block_len == 0 {
            return Err(cfg_err("rf.block_len", "must be positive"));
        }

        let a = &self.array;
        ArrayLayout::with_spacing(a.n_tx, a.n_rf, a.n_e, a.spacing_wavelengths).map_err(|e| cfg_err("array", e.to_string()))?;

        let o = &self.opt;
        if let Some(r) = o.r_th_bps {
            if !(r.is_finite() && r >= 0.0) {
                return Err(cfg_err("opt.r_th_bps", "must be a non-negative rate"));
            }
        }
        if !(0.0..=1.0).contains(&o.rho) {
            return Err(cfg_err("opt.rho", "must lie in [0, 1]"));
        }
        if !(o.tol.is_finite() && o.tol > 0.0) {
            return Err(cfg_err("opt.tol", "must be positive"));
        }
        if o.max_iters == 0 {
            return Err(cfg_err("opt.max_iters", "must be positive"));
        }
        let [lo, hi] = o.phase_bounds_deg;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(cfg_err("opt.phase_bounds_deg", "need lo < hi"));
        }
        if o.k == 0 {
            return Err(cfg_err("opt.k", "must be at least 1"));
        }
        if o.k > 1 && g.region_half_extent_m == 0.0 {
            return Err(cfg_err("geometry.region_half_extent_m", "must be positive when opt.k > 1"));
        }
        if !(o.reflection_grad_tol.is_finite() && o.reflection_grad_tol > 0.0) {
            return Err(cfg_err("opt.reflection_grad_tol", "must be positive"));
        }
        if !(o.solver_tol.is_finite() && o.solver_tol > 0.0) {
            return Err(cfg_err("opt.solver_tol", "must be positive"));
        }
        if o.solver_max_iter == 0 {
            return Err(cfg_err("opt.solver_max_iter", "must be positive"));
        }

        let r = &self.run;
        if r.trials == 0 {
            return Err(cfg_err("run.trials", "must be at least 1"));
        }
        if !(r.grid_resolution_m.is_finite() && r.grid_resolution_m > 0.0) {
            return Err(cfg_err("run.grid_resolution_m", "must be positive"));
        }
        if let Some(i) = r.rho_grid.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(cfg_err(&format!("run.rho_grid[{i}]"), "must lie in [0, 1]"));
        }
        if let Some(i) = r.n_e_grid.iter().position(|&n| n == 0) {
            return Err(cfg_err(&format!("run.n_e_grid[{i}]"), "must be positive"));
        }
        if r.mode == Mode::Tradeoff && (r.rho_grid.is_empty() || r.n_e_grid.is_empty()) {
            return Err(cfg_err("run.rho_grid", "tradeoff mode needs non-empty rho_grid and n_e_grid"));
        }
        Ok(())
    }

    pub fn rf_constants(&self) -> Result<RfConstants> {
        let rf = &self.rf;
        let mut c = RfConstants::new(rf.carrier_hz, dbm_to_watts(rf.noise_dbm), rf.block_len, dbm_to_watts(rf.p_max_dbm))?;
        c.path_loss = rf.path_loss;
        c.power_split = rf.power_split;
        Ok(c)
    }

    pub fn layout(&self, n_e: usize) -> Result<ArrayLayout> {
        let a = &self.array;
        ArrayLayout::with_spacing(a.n_tx, a.n_rf, n_e, a.spacing_wavelengths)
    }

    pub fn omega(&self) -> ReflectionPhases {
        let [u, e] = self.geometry.omega_deg;
        ReflectionPhases { ue: u.to_radians(), eve: e.to_radians() }
    }

    pub fn eta(&self) -> TargetPair {
        TargetPair::new(Position3::from_array(self.geometry.ue), Position3::from_array(self.geometry.eve))
    }

    /// Scenario with the configured array, or `n_e` elements per column.
    pub fn scenario(&self, n_e: Option<usize>, omega: ReflectionPhases) -> Result<Scenario> {
        let mut scn = Scenario::new(
            self.layout(n_e.unwrap_or(self.array.n_e))?,
            self.rf_constants()?,
            Position3::from_array(self.geometry.hris),
            omega,
        );
        scn.domain = self.opt.peb_domain;
        Ok(scn)
    }

    pub fn opt_settings(&self) -> OptSettings {
        let o = &self.opt;
        let [lo, hi] = o.phase_bounds_deg;
        OptSettings {
            tol: o.tol,
            max_iters: o.max_iters,
            solver: SolverSettings { tolerance: o.solver_tol, max_iter: o.solver_max_iter },
            phase_bounds: PhaseBounds { lo: lo.to_radians(), hi: hi.to_radians() },
            reflection_max_iter: o.reflection_max_iter,
            reflection_grad_tol: o.reflection_grad_tol,
            skip_combiner: false,
            skip_reflection: false,
            max_k: o.max_k,
            randomization_seed: o.randomization_seed,
        }
    }

    /// Uncertainty regions around the given centers.
    pub fn regions(&self, eta: &TargetPair) -> Result<(UncertaintyRegion, UncertaintyRegion)> {
        let h = self.geometry.region_half_extent_m;
        Ok((discretize_region(eta.ue, h, self.opt.k)?, discretize_region(eta.eve, h, self.opt.k)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = include_str!("../../../../configs/fig2_body.json");

    #[test]
    fn sample_config_loads_and_converts_units() {
        let cfg = ScenarioConfig::from_json(SAMPLE).unwrap();
        let c = cfg.rf_constants().unwrap();
        assert!((c.noise_power_w - 1e-13).abs() < 1e-25);
        assert!((c.p_max_w - 0.1).abs() < 1e-15);
        assert!((cfg.opt_settings().phase_bounds.hi - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn missing_field_names_its_path() {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["rf"].as_object_mut().unwrap().remove("noise_dbm");
        let err = ScenarioConfig::from_json(&v.to_string()).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "rf");
                assert!(message.contains("noise_dbm"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["opt"]["typo"] = serde_json::json!(1);
        let err = ScenarioConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(&err, Error::Config { path, message } if path == "opt.typo" && message.contains("typo")), "{err}");
    }

    #[test]
    fn null_threshold_must_still_be_present() {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["opt"]["r_th_bps"] = serde_json::Value::Null;
        assert_eq!(ScenarioConfig::from_json(&v.to_string()).unwrap().opt.r_th_bps, None);
        v["opt"].as_object_mut().unwrap().remove("r_th_bps");
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn invalid_values_name_the_field() {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["run"]["rho_grid"] = serde_json::json!([0.1, 1.5]);
        let err = ScenarioConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "run.rho_grid[1]"), "{err}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioConfig::from_json(SAMPLE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
