use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{RadioParams, TrafficParams};
use crate::error::{ProtocolError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Bs,
    Regular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub boot_s: f64,
    /// Overrides the scenario-wide initial battery.
    #[serde(default)]
    pub battery_j: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolPolicy {
    #[default]
    Hef,
    Rr,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Fail {
        node: u32,
    },
    Revive {
        node: u32,
    },
    /// Cut every link between different groups; unlisted nodes form one more group.
    Split {
        groups: Vec<Vec<u32>>,
    },
    Heal,
    /// Ask the current active BS(s) to hand over to `target` first.
    Handover {
        target: u32,
    },
    SetBattery {
        node: u32,
        joules: f64,
    },
}

/// Unknown keys are caught by `Action`; serde cannot deny them on a
/// flattening struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub at_s: f64,
    #[serde(flatten)]
    pub action: Action,
}

fn default_range() -> f64 {
    40.0
}
fn default_slot() -> f64 {
    7200.0
}
fn default_battery() -> f64 {
    14400.0
}
fn default_hop_delay() -> [f64; 2] {
    [2.0, 10.0]
}
fn default_duration() -> f64 {
    86_400.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_range")]
    pub range_m: f64,
    #[serde(default = "default_slot")]
    pub slot_s: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub policy: ProtocolPolicy,
    #[serde(default = "default_battery")]
    pub initial_battery_j: f64,
    /// Reference for battery quantization; defaults to the initial battery.
    #[serde(default)]
    pub capacity_j: Option<f64>,
    #[serde(default)]
    pub drop_prob: f64,
    /// Per-hop latency bounds in milliseconds.
    #[serde(default = "default_hop_delay")]
    pub hop_delay_ms: [f64; 2],
    #[serde(default)]
    pub traffic: TrafficParams,
    #[serde(default)]
    pub radio: RadioParams,
    /// Constant recharge power per BS (W), in ascending BS id order.
    #[serde(default)]
    pub recharge_w: Option<Vec<f64>>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub script: Vec<Directive>,
}

impl Scenario {
    pub fn new(nodes: Vec<NodeSpec>) -> Self {
        Self {
            seed: 0,
            range_m: default_range(),
            slot_s: default_slot(),
            duration_s: default_duration(),
            policy: ProtocolPolicy::default(),
            initial_battery_j: default_battery(),
            capacity_j: None,
            drop_prob: 0.0,
            hop_delay_ms: default_hop_delay(),
            traffic: TrafficParams::default(),
            radio: RadioParams::default(),
            recharge_w: None,
            nodes,
            script: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ProtocolError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn bs_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Bs).count()
    }

    pub fn capacity(&self) -> f64 {
        self.capacity_j.unwrap_or(self.initial_battery_j)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProtocolError::Scenario(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let mut ids: Vec<u32> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate node id".into());
        }
        for n in &self.nodes {
            if !(n.boot_s.is_finite() && n.boot_s >= 0.0) {
                return bad(format!("node {} has an invalid boot time", n.id));
            }
            if let Some(b) = n.battery_j {
                if !b.is_finite() {
                    return bad(format!("node {} has a non-finite battery", n.id));
                }
            }
        }
        if !(self.slot_s.is_finite() && self.slot_s > 0.0) {
            return bad("slot length must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return bad("duration must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad("drop probability must lie in [0, 1)".into());
        }
        let [lo, hi] = self.hop_delay_ms;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad("hop delay bounds must satisfy 0 < min <= max".into());
        }
        if !(self.initial_battery_j.is_finite() && self.capacity() > 0.0) {
            return bad("battery capacity must be positive".into());
        }
        if let Some(r) = &self.recharge_w {
            if r.len() != self.bs_count() {
                return bad(format!("recharge_w has {} entries for {} base stations", r.len(), self.bs_count()));
            }
            if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad("recharge must be finite and non-negative".into());
            }
        }
        self.traffic.validate()?;
        self.radio.validate()?;
        for d in &self.script {
            if !(d.at_s.is_finite() && d.at_s >= 0.0) {
                return bad("directive time must be non-negative".into());
            }
            let known = |id: &u32| ids.binary_search(id).is_ok();
            let check = |id: u32| if known(&id) { Ok(()) } else { Err(ProtocolError::UnknownNode(id)) };
            match &d.action {
                Action::Fail { node } | Action::Revive { node } | Action::SetBattery { node, .. } => check(*node)?,
                Action::Handover { target } => check(*target)?,
                Action::Split { groups } => {
                    for id in groups.iter().flatten() {
                        check(*id)?;
                    }
                }
                Action::Heal => {}
            }
        }
        Ok(())
    }
}
