//! Experiment configuration: JSON schema, defaults and validation.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wavelab::evolve::{EvolveConfig, SpongeConfig, MAX_CFL};
use wavelab::grid::CylGrid;
use wavelab::profiles::{ChiProfile, Localizer, SolitonConfig};
use wavelab::shooting::{Bootstrap, SearchMethod, SearchOptions, ShotSpec};

/// Configuration error naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x1_min: f64,
    pub x1_max: f64,
    pub rho_max: f64,
    pub n_x1: usize,
    pub n_rho: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            x1_min: -120.0,
            x1_max: 120.0,
            rho_max: 80.0,
            n_x1: 1200,
            n_rho: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    /// CFL number of the leapfrog step.
    pub dt_cfl: f64,
    /// Absorbing strip width as a fraction of the domain (0 disables the strip).
    pub sponge_width_frac: f64,
    pub sponge_strength: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub nonlinear: bool,
    /// Drive the frozen layers and the strip with the exact soliton sum.
    pub reference_boundary: bool,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            dt_cfl: 0.45,
            sponge_width_frac: 0.1,
            sponge_strength: 1.0,
            t_start: 0.0,
            t_end: 5.0,
            nonlinear: true,
            reference_boundary: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolitonSection {
    pub iota: f64,
    pub lambda: f64,
    pub y1: f64,
    pub ell: f64,
}

impl Default for SolitonSection {
    fn default() -> Self {
        SolitonSection {
            iota: 1.0,
            lambda: 1.0,
            y1: 0.0,
            ell: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChiSection {
    /// Transition fraction `σ`.
    pub sigma: f64,
}

impl Default for ChiSection {
    fn default() -> Self {
        ChiSection { sigma: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerSection {
    pub alpha: f64,
}

impl Default for LocalizerSection {
    fn default() -> Self {
        LocalizerSection { alpha: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    /// Ground-state eigenvalue tolerance.
    pub tol: f64,
    /// Speeds at which the identity suite runs.
    pub ells: Vec<f64>,
    /// Largest accepted relative identity residual.
    pub identity_tol: f64,
    /// Speeds at which coercivity is measured.
    pub coercivity_ells: Vec<f64>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            tol: 1e-10,
            ells: vec![0.0, 0.3, 0.6],
            identity_tol: 1e-5,
            coercivity_ells: vec![0.0, 0.5],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    pub param: Option<f64>,
    pub z: Option<f64>,
    pub eps_e: Option<f64>,
    pub eps_y: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub cstar: f64,
    pub thresholds: ThresholdSection,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            cstar: 10.0,
            thresholds: ThresholdSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// Number of targets in the landscape scan.
    pub points: usize,
    /// Half-width of the scan around the search result, in units of `S^(−5/2)`.
    pub half_width: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            points: 17,
            half_width: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootSection {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub monitor_interval: f64,
    /// Allowed `|ζ|` in units of `S^(−5/2)`.
    pub zeta_clamp: f64,
    pub search: SearchOptions,
    pub scan: ScanSection,
}

impl Default for ShootSection {
    fn default() -> Self {
        ShootSection {
            s: 40.0,
            t0: 10.0,
            monitor_interval: 1.0,
            zeta_clamp: 100.0,
            search: SearchOptions::default(),
            scan: ScanSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionsSection {
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
}

impl Default for InteractionsSection {
    fn default() -> Self {
        InteractionsSection {
            t_min: 20.0,
            t_max: 80.0,
            samples: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    /// Number of random admissible samples per coercivity probe.
    pub probe_samples: usize,
    /// Number of probe times spread over the run.
    pub probe_times: usize,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            probe_samples: 5,
            probe_times: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Steps between recorded samples.
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            stride: 10,
        }
    }
}

/// Full experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub grid: GridSection,
    pub time: TimeSection,
    pub solitons: Vec<SolitonSection>,
    pub chi: ChiSection,
    pub localizer: LocalizerSection,
    pub spectral: SpectralSection,
    pub bootstrap: BootstrapSection,
    pub shoot: ShootSection,
    pub interactions: InteractionsSection,
    pub energy: EnergySection,
    pub output: OutputSection,
    pub seed: u64,
    /// Worker threads (1 keeps every reduction in a fixed order).
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grid: GridSection::default(),
            time: TimeSection::default(),
            solitons: vec![SolitonSection::default()],
            chi: ChiSection::default(),
            localizer: LocalizerSection::default(),
            spectral: SpectralSection::default(),
            bootstrap: BootstrapSection::default(),
            shoot: ShootSection::default(),
            interactions: InteractionsSection::default(),
            energy: EnergySection::default(),
            output: OutputSection::default(),
            seed: 0,
            threads: 1,
        }
    }
}

/// Parse and validate a JSON document; every default is filled in the result.
pub fn parse_str(text: &str) -> Result<Config, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        err(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("<file>", format!("{}: {e}", path.display())))?;
    parse_str(&text)
}

impl Config {
    /// Validate every section and fill derived defaults.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        self.grid_checked()?;
        let t = &self.time;
        if !(t.dt_cfl > 0.0 && t.dt_cfl <= MAX_CFL) {
            return Err(err("time.dt_cfl", format!("must lie in (0, {MAX_CFL}], got {}", t.dt_cfl)));
        }
        if !(0.0..0.5).contains(&t.sponge_width_frac) {
            return Err(err("time.sponge_width_frac", format!("must lie in [0, 0.5), got {}", t.sponge_width_frac)));
        }
        if !(t.sponge_strength >= 0.0 && t.sponge_strength.is_finite()) {
            return Err(err("time.sponge_strength", "must be non-negative"));
        }
        if !(t.t_start.is_finite() && t.t_end.is_finite() && t.t_start != t.t_end) {
            return Err(err("time.t_end", "t_start and t_end must be finite and distinct"));
        }
        if self.solitons.is_empty() {
            return Err(err("solitons", "at least one soliton is required"));
        }
        self.soliton_configs()?;
        self.chi_profile()?;
        Localizer::new(self.localizer.alpha, 0.0, 1.0).map_err(|e| err("localizer.alpha", e.to_string()))?;
        let sp = &self.spectral;
        if !(sp.tol > 0.0 && sp.tol < 1e-3) {
            return Err(err("spectral.tol", format!("must lie in (0, 1e-3), got {}", sp.tol)));
        }
        for (k, l) in sp.ells.iter().chain(&sp.coercivity_ells).enumerate() {
            if !(l.abs() < 1.0) {
                return Err(err(format!("spectral.ells[{k}]"), "speed must lie in (−1,1)"));
            }
        }
        if !(sp.identity_tol > 0.0) {
            return Err(err("spectral.identity_tol", "must be positive"));
        }
        self.bootstrap().validate_positive()?;
        let sh = &self.shoot;
        if !(sh.t0 > 0.0 && sh.s > sh.t0) {
            return Err(err("shoot.T0", format!("need 0 < T0 < S, got T0 = {}, S = {}", sh.t0, sh.s)));
        }
        if !(sh.monitor_interval > 0.0) {
            return Err(err("shoot.monitor_interval", "must be positive"));
        }
        if !(sh.zeta_clamp > 0.0) {
            return Err(err("shoot.zeta_clamp", "must be positive"));
        }
        if sh.search.budget == 0 {
            return Err(err("shoot.search.budget", "must be positive"));
        }
        if !(sh.search.radius > 0.0) {
            return Err(err("shoot.search.radius", "must be positive"));
        }
        if !sh.search.centre.is_empty() && sh.search.centre.len() != self.solitons.len() {
            return Err(err("shoot.search.centre", "needs one entry per soliton"));
        }
        if sh.search.method == Some(SearchMethod::Bisection) && self.solitons.len() != 1 {
            return Err(err("shoot.search.method", "bisection needs exactly one soliton"));
        }
        if sh.scan.points < 2 || !(sh.scan.half_width > 0.0) {
            return Err(err("shoot.scan", "needs at least two points and a positive half_width"));
        }
        let it = &self.interactions;
        if !(it.t_min > 0.0 && it.t_max > it.t_min) || it.samples < 3 {
            return Err(err("interactions", "need 0 < t_min < t_max and at least three samples"));
        }
        if self.energy.probe_times == 0 {
            return Err(err("energy.probe_times", "must be positive"));
        }
        if self.output.stride == 0 {
            return Err(err("output.stride", "must be positive"));
        }
        if self.output.dir.is_empty() {
            return Err(err("output.dir", "must not be empty"));
        }
        if self.threads == 0 {
            return Err(err("threads", "must be positive"));
        }
        Ok(())
    }

    pub fn grid_checked(&self) -> Result<Arc<CylGrid>, ConfigError> {
        let g = &self.grid;
        CylGrid::new(g.x1_min, g.x1_max, g.rho_max, g.n_x1, g.n_rho).map_err(|e| err("grid", e.to_string()))
    }

    pub fn soliton_configs(&self) -> Result<Vec<SolitonConfig>, ConfigError> {
        self.solitons
            .iter()
            .enumerate()
            .map(|(k, s)| {
                SolitonConfig::new(s.iota, s.lambda, s.y1, s.ell).map_err(|e| {
                    let msg = e.to_string();
                    let key = if msg.contains("speed") {
                        "ell"
                    } else if msg.contains("lambda") || msg.contains("scale") {
                        "lambda"
                    } else {
                        "iota"
                    };
                    err(format!("solitons[{k}].{key}"), msg)
                })
            })
            .collect()
    }

    /// Soliton speeds in increasing order.
    pub fn speeds(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.solitons.iter().map(|s| s.ell).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn chi_profile(&self) -> Result<ChiProfile, ConfigError> {
        ChiProfile::new(self.speeds(), self.chi.sigma).map_err(|e| {
            err(
                "chi.sigma",
                format!("ChiProfile invariant 0 < sigma < (1/10)·min(ℓ_(k+1) − ℓ_k) violated: {e}"),
            )
        })
    }

    pub fn bootstrap(&self) -> Bootstrap {
        let t = &self.bootstrap.thresholds;
        Bootstrap {
            c_star: self.bootstrap.cstar,
            param: t.param,
            z: t.z,
            eps_e: t.eps_e,
            eps_y: t.eps_y,
        }
    }

    pub fn sponge(&self) -> Option<SpongeConfig> {
        (self.time.sponge_width_frac > 0.0).then_some(SpongeConfig {
            width_frac: self.time.sponge_width_frac,
            strength: self.time.sponge_strength,
        })
    }

    pub fn evolve_config(&self, stride: usize, snapshot_stride: Option<usize>) -> Result<EvolveConfig, ConfigError> {
        Ok(EvolveConfig {
            cfl: self.time.dt_cfl,
            nonlinear: self.time.nonlinear,
            sponge: self.sponge(),
            stride,
            snapshot_stride,
            reference: if self.time.reference_boundary { Some(self.soliton_configs()?) } else { None },
        })
    }

    pub fn shot_spec(&self) -> Result<ShotSpec, ConfigError> {
        let mut spec = ShotSpec::new(self.shoot.s, self.shoot.t0, self.soliton_configs()?);
        spec.bootstrap = self.bootstrap();
        spec.monitor_interval = self.shoot.monitor_interval;
        spec.cfl = self.time.dt_cfl;
        spec.sponge = self.sponge();
        spec.zeta_clamp = self.shoot.zeta_clamp;
        spec.validate().map_err(|e| err("shoot", e.to_string()))?;
        Ok(spec)
    }
}

trait PositiveCheck {
    fn validate_positive(&self) -> Result<(), ConfigError>;
}

impl PositiveCheck for Bootstrap {
    fn validate_positive(&self) -> Result<(), ConfigError> {
        if !(self.c_star > 0.0 && self.c_star.is_finite()) {
            return Err(err("bootstrap.cstar", "must be positive and finite"));
        }
        for (name, v) in [("param", self.param), ("z", self.z), ("eps_e", self.eps_e), ("eps_y", self.eps_y)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(err(format!("bootstrap.thresholds.{name}"), "must be positive and finite"));
                }
            }
        }
        Ok(())
    }
}
