//! Experiment specification files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    EnergyVsTime,
    LifetimeVsPanel,
    LifetimeVsE0,
    LifetimeVsM,
    OverheadVsRate,
    CfrVsGprs,
    D3PanelRequirement,
    TheoremValidation,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::EnergyVsTime,
        Family::LifetimeVsPanel,
        Family::LifetimeVsE0,
        Family::LifetimeVsM,
        Family::OverheadVsRate,
        Family::CfrVsGprs,
        Family::D3PanelRequirement,
        Family::TheoremValidation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::EnergyVsTime => "energy_vs_time",
            Family::LifetimeVsPanel => "lifetime_vs_panel",
            Family::LifetimeVsE0 => "lifetime_vs_e0",
            Family::LifetimeVsM => "lifetime_vs_m",
            Family::OverheadVsRate => "overhead_vs_rate",
            Family::CfrVsGprs => "cfr_vs_gprs",
            Family::D3PanelRequirement => "d3_panel_requirement",
            Family::TheoremValidation => "theorem_validation",
        }
    }

    /// What the grid values mean.
    pub fn sweep_name(self) -> &'static str {
        match self {
            Family::EnergyVsTime => "slot",
            Family::LifetimeVsPanel => "panel_cm2",
            Family::LifetimeVsE0 | Family::TheoremValidation => "e0_j",
            Family::LifetimeVsM => "bs_count",
            Family::OverheadVsRate | Family::D3PanelRequirement => "data_rate_pps",
            Family::CfrVsGprs => "gprs_interval_s",
        }
    }

    pub fn default_policies(self) -> Vec<PolicyName> {
        match self {
            Family::LifetimeVsPanel | Family::LifetimeVsE0 => {
                vec![PolicyName::Hef, PolicyName::Rr, PolicyName::Fixed, PolicyName::Opt]
            }
            Family::EnergyVsTime | Family::LifetimeVsM | Family::OverheadVsRate => {
                vec![PolicyName::Hef, PolicyName::Rr, PolicyName::Fixed]
            }
            Family::TheoremValidation => vec![PolicyName::Hef],
            Family::CfrVsGprs | Family::D3PanelRequirement => Vec::new(),
        }
    }

    pub fn uses_policies(self) -> bool {
        !matches!(self, Family::CfrVsGprs | Family::D3PanelRequirement)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PolicyName {
    #[serde(alias = "hef")]
    Hef,
    #[serde(alias = "rr")]
    Rr,
    #[serde(alias = "fixed")]
    Fixed,
    #[serde(alias = "opt")]
    Opt,
}

impl PolicyName {
    pub fn label(self) -> &'static str {
        match self {
            PolicyName::Hef => "HEF",
            PolicyName::Rr => "RR",
            PolicyName::Fixed => "FIXED",
            PolicyName::Opt => "OPT",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [PolicyName::Hef, PolicyName::Rr, PolicyName::Fixed, PolicyName::Opt].into_iter().find(|p| p.label() == s)
    }
}

/// Synthetic diurnal irradiance and per-station panel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarSpec {
    /// Clear-sky noon irradiance (W/m²).
    pub peak_w_m2: f64,
    pub daylight_h: f64,
    /// Daily weather factor, uniform on this range and shared by all stations.
    pub weather: [f64; 2],
    /// Conversion efficiency, uniform per station.
    pub eta: [f64; 2],
    /// Loss coefficient.
    pub gamma: f64,
}

impl Default for SolarSpec {
    fn default() -> Self {
        Self { peak_w_m2: 294.0, daylight_h: 12.0, weather: [0.8, 1.2], eta: [0.05, 0.15], gamma: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseScenario {
    /// All nodes, base stations included.
    pub nodes: usize,
    pub bs_count: usize,
    pub field_m: f64,
    pub range_m: f64,
    pub panel_cm2: f64,
    pub e0_j: f64,
    pub tau_s: f64,
    pub max_slots: usize,
    pub data_rate_pps: f64,
    pub gprs_interval_s: f64,
    pub beacon_period_s: f64,
    pub advert_period_s: f64,
    /// Random networks per grid point for the condition families.
    pub instances: usize,
    /// Monte-Carlo trials per grid point for theorem validation.
    pub trials: u64,
    /// Simulated hours per run for the overhead family.
    pub sim_hours: f64,
    /// Resample random networks until the passive-gain and cost-inverse
    /// conditions hold at the base panel size.
    pub require_conditions: bool,
    /// Irradiance trace (`slot,bs0,bs1,...`, W/m²) replacing the synthetic one.
    pub trace: Option<PathBuf>,
}

impl Default for BaseScenario {
    fn default() -> Self {
        Self {
            nodes: 40,
            bs_count: 5,
            field_m: 200.0,
            range_m: 40.0,
            panel_cm2: 50.0,
            e0_j: 14_400.0,
            tau_s: 7200.0,
            max_slots: 2400,
            data_rate_pps: 1.0,
            gprs_interval_s: 300.0,
            beacon_period_s: 30.0,
            advert_period_s: 300.0,
            instances: 50,
            trials: 500,
            sim_hours: 24.0,
            require_conditions: false,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorChoice {
    IidUniform,
    MartingaleAr,
}

/// Slot-level instance for the concentration study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSpec {
    pub cost: Vec<Vec<f64>>,
    pub sbar: Vec<f64>,
    pub bound_s: f64,
    pub tau: f64,
    pub delta: f64,
    /// Multiplier for the unbounded regime, `P(N > K e0)`.
    pub k_const: f64,
    pub generator: GeneratorChoice,
    pub persistence: f64,
}

impl Default for TheoremSpec {
    fn default() -> Self {
        Self {
            cost: vec![vec![4.0, 0.3, 0.25], vec![0.35, 5.0, 0.3], vec![0.2, 0.4, 4.5]],
            sbar: vec![1.2, 1.0, 1.1],
            bound_s: 2.4,
            tau: 10.0,
            delta: 0.1,
            k_const: 1.0,
            generator: GeneratorChoice::IidUniform,
            persistence: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub family: Family,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub policies: Vec<PolicyName>,
    #[serde(default)]
    pub base: BaseScenario,
    #[serde(default)]
    pub solar: SolarSpec,
    #[serde(default)]
    pub theorem: TheoremSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExperimentError::Validation(msg.into()))
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        bad(format!("{name} must be positive and finite, got {x}"))
    }
}

impl ExperimentSpec {
    pub fn new(family: Family, grid: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            name: family.label().into(),
            family,
            grid,
            seeds,
            policies: family.default_policies(),
            base: BaseScenario::default(),
            solar: SolarSpec::default(),
            theorem: TheoremSpec::default(),
            output: None,
        }
    }

    /// Parse and validate. An empty policy list takes the family default.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text)?;
        if spec.policies.is_empty() {
            spec.policies = spec.family.default_policies();
        }
        if spec.name.is_empty() {
            spec.name = spec.family.label().into();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// SHA-256 of the canonical JSON form; independent of file formatting.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return bad("sweep grid is empty");
        }
        if let Some(x) = self.grid.iter().find(|x| !x.is_finite()) {
            return bad(format!("grid value {x} is not finite"));
        }
        if self.seeds.is_empty() {
            return bad("no seeds");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds must be distinct");
        }
        if self.family.uses_policies() && self.policies.is_empty() {
            return bad("no policies");
        }
        let mut policies = self.policies.clone();
        policies.sort_unstable();
        if policies.windows(2).any(|w| w[0] == w[1]) {
            return bad("policies must be distinct");
        }
        self.validate_base()?;
        self.validate_grid()
    }

    fn validate_base(&self) -> Result<()> {
        let b = &self.base;
        if b.nodes == 0 {
            return bad("network needs at least one node");
        }
        if b.bs_count > b.nodes {
            return bad(format!("bs_count {} exceeds node count {}", b.bs_count, b.nodes));
        }
        for (name, x) in [
            ("field_m", b.field_m),
            ("range_m", b.range_m),
            ("tau_s", b.tau_s),
            ("gprs_interval_s", b.gprs_interval_s),
            ("beacon_period_s", b.beacon_period_s),
            ("advert_period_s", b.advert_period_s),
            ("sim_hours", b.sim_hours),
        ] {
            positive(name, x)?;
        }
        for (name, x) in [("panel_cm2", b.panel_cm2), ("e0_j", b.e0_j), ("data_rate_pps", b.data_rate_pps)] {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("{name} must be non-negative, got {x}"));
            }
        }
        if b.max_slots == 0 {
            return bad("max_slots must be at least 1");
        }
        if b.instances == 0 || b.trials == 0 {
            return bad("instances and trials must be at least 1");
        }
        let s = &self.solar;
        positive("peak_w_m2", s.peak_w_m2)?;
        if !(s.daylight_h > 0.0 && s.daylight_h <= 24.0) {
            return bad("daylight_h must lie in (0, 24]");
        }
        if !(s.weather[0] >= 0.0 && s.weather[0] <= s.weather[1] && s.weather[1].is_finite()) {
            return bad("weather range must satisfy 0 <= low <= high");
        }
        if !(s.eta[0] >= 0.0 && s.eta[0] <= s.eta[1] && s.eta[1] <= 1.0) {
            return bad("eta range must satisfy 0 <= low <= high <= 1");
        }
        if !(s.gamma >= 0.0 && s.gamma <= 1.0) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.family == Family::TheoremValidation {
            let t = &self.theorem;
            let m = t.cost.len();
            if m == 0 || t.cost.iter().any(|r| r.len() != m) || t.sbar.len() != m {
                return bad("theorem instance needs a square cost matrix and one mean rate per station");
            }
            positive("theorem tau", t.tau)?;
            positive("theorem delta", t.delta)?;
            positive("theorem k_const", t.k_const)?;
        }
        Ok(())
    }

    fn validate_grid(&self) -> Result<()> {
        let b = &self.base;
        for &x in &self.grid {
            let ok = match self.family {
                Family::EnergyVsTime => x.fract() == 0.0 && x >= 1.0 && x <= b.max_slots as f64,
                Family::LifetimeVsPanel | Family::OverheadVsRate | Family::D3PanelRequirement => x >= 0.0,
                Family::LifetimeVsE0 | Family::TheoremValidation | Family::CfrVsGprs => x > 0.0,
                Family::LifetimeVsM => x.fract() == 0.0 && x >= 0.0 && x <= b.nodes as f64,
            };
            if !ok {
                return bad(format!("grid value {x} is out of range for {}", self.family));
            }
        }
        if self.family == Family::OverheadVsRate && self.policies.contains(&PolicyName::Opt) {
            return bad("OPT has no protocol counterpart in overhead_vs_rate");
        }
        Ok(())
    }
}
