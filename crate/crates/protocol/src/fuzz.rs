//! Random bootstrap scenarios and the convergence check applied to them.

use rand::Rng;

use crate::queue::{seconds, Micros, SECOND};
use crate::scenario::{NodeKind, NodeSpec, Scenario};
use crate::sim::{ComponentStatus, Simulator};

/// Liveness constant: convergence within `CONVERGENCE_FACTOR * max(D, 1)`
/// beacon periods, D the largest component hop diameter.
pub const CONVERGENCE_FACTOR: u64 = 4;

/// Up to `max_nodes` nodes (at least two) with up to `max_bs` base stations,
/// uniform in a square whose side is drawn so that both connected and split
/// layouts occur. Boot times are spread over two beacon periods.
pub fn random_bootstrap_scenario(rng: &mut impl Rng, max_nodes: usize, max_bs: usize) -> Scenario {
    let n = rng.random_range(2..=max_nodes.max(2));
    let bs = rng.random_range(1..=max_bs.clamp(1, n));
    let side = rng.random_range(40.0..=200.0);
    let mut ids: Vec<u32> = (1..=n as u32).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut scenario = Scenario::new(Vec::new());
    let period = scenario.traffic.beacon_period_s;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(n);
    while points.len() < n {
        let p = (rng.random_range(0.0..side), rng.random_range(0.0..side));
        if !points.contains(&p) {
            points.push(p);
        }
    }
    scenario.nodes = ids
        .iter()
        .zip(points)
        .enumerate()
        .map(|(k, (&id, (x, y)))| NodeSpec {
            id,
            kind: if k < bs { NodeKind::Bs } else { NodeKind::Regular },
            x,
            y,
            boot_s: rng.random_range(0.0..2.0 * period),
            battery_j: None,
        })
        .collect();
    scenario.seed = rng.random();
    // No slot boundary inside the run: pure bootstrap.
    scenario.slot_s = 1e7;
    scenario.duration_s = 1e7;
    scenario
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// Start of the measurement window (last boot or injected event).
    pub start: Micros,
    pub bound: Micros,
    /// Start of the final converged stretch.
    pub converged_at: Option<Micros>,
    pub components: usize,
    pub orphans: usize,
    pub cycles: u64,
    pub unsound: usize,
    /// Every component's active is the smallest-id BS that ever activated
    /// there.
    pub winner_is_min: bool,
}

impl BootstrapOutcome {
    pub fn within_bound(&self) -> bool {
        self.converged_at.is_some_and(|t| t <= self.start + self.bound)
    }
}

/// Convergence bound for the present topology of `sim`.
pub fn convergence_bound(sim: &Simulator) -> Micros {
    let present: Vec<bool> = sim.nodes().iter().map(|n| n.alive).collect();
    let d = sim.topology().components(&present).iter().map(|c| sim.topology().diameter(c, &present)).max().unwrap_or(0);
    CONVERGENCE_FACTOR * d.max(1) as u64 * sim.beacon_period()
}

/// Run from `start` until two bounds past it and report.
pub fn measure_convergence(sim: &mut Simulator, start: Micros) -> BootstrapOutcome {
    let bound = convergence_bound(sim);
    sim.run_until(start);
    let converged_at = sim.run_until_converged(start + 2 * bound, SECOND);
    sim.settle();
    let report = sim.convergence();
    let routes = sim.check_routes();
    let activated: Vec<u32> = sim.log().events("activate").map(|r| r.node).collect();
    let winner_is_min = report.components.iter().all(|c| match c.status {
        ComponentStatus::Converged { active } => {
            let min = c.members.iter().map(|&m| sim.id_of(m)).filter(|id| activated.contains(id)).min();
            min == Some(sim.id_of(active))
        }
        _ => true,
    });
    BootstrapOutcome {
        start,
        bound,
        converged_at,
        components: report.components.len(),
        orphans: report.orphans(),
        cycles: sim.stats().routing_cycles,
        unsound: routes.unsound,
        winner_is_min,
    }
}

/// Bootstrap a scenario and measure from the last boot.
pub fn run_bootstrap(scenario: &Scenario) -> crate::error::Result<BootstrapOutcome> {
    let mut sim = Simulator::new(scenario)?;
    let last_boot = scenario.nodes.iter().map(|n| seconds(n.boot_s)).max().unwrap_or(0);
    Ok(measure_convergence(&mut sim, last_boot))
}

/// Spatial split: every node joins the group of its nearest listed base
/// station (ties to the earlier group). `bs_groups` lists BS ids only.
pub fn split_by_nearest(sim: &Simulator, bs_groups: &[Vec<u32>]) -> crate::error::Result<Vec<Vec<u32>>> {
    let mut anchors = Vec::new();
    for (g, ids) in bs_groups.iter().enumerate() {
        for &id in ids {
            anchors.push((g, sim.node(id)?.position));
        }
    }
    let mut groups = vec![Vec::new(); bs_groups.len()];
    if anchors.is_empty() {
        return Ok(groups);
    }
    for node in sim.nodes() {
        let (g, _) = anchors
            .iter()
            .map(|(g, p)| (*g, p.distance(&node.position)))
            .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        groups[g].push(node.id);
    }
    Ok(groups)
}
