//! Steady-state power draw per node for a fixed active BS, used to build the
//! cost matrix of the slot-level energy model.

use std::collections::VecDeque;

use basehop_core::CostMatrix;

use crate::energy::EnergyParams;
use crate::error::{ProtocolError, Result};
use crate::topology::Topology;

/// Shortest-hop tree towards `root`; ties go to the lowest-index parent.
pub fn routing_tree(topo: &Topology, root: usize) -> Vec<Option<usize>> {
    let n = topo.len();
    let mut parent = vec![None; n];
    let mut dist = vec![usize::MAX; n];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in topo.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

/// Average power (W) of every node while `active` holds the role.
pub fn node_power(topo: &Topology, bs: &[usize], active: usize, params: &EnergyParams) -> Vec<f64> {
    let n = topo.len();
    let (radio, traffic) = (&params.radio, &params.traffic);
    let parent = routing_tree(topo, active);
    let reachable: Vec<bool> = (0..n).map(|i| i == active || parent[i].is_some()).collect();
    let mut power = vec![radio.sleep_watts(); n];

    let data_tx = radio.tx_joules(radio.data_bytes) * traffic.data_rate_pps;
    let data_rx = radio.rx_joules(radio.data_bytes) * traffic.data_rate_pps;
    let beacon_tx = radio.tx_joules(radio.beacon_bytes) / traffic.beacon_period_s;
    let beacon_rx = radio.rx_joules(radio.beacon_bytes) / traffic.beacon_period_s;

    for u in (0..n).filter(|&u| reachable[u]) {
        // Each reachable node forwards one flood per period.
        power[u] += beacon_tx;
        power[u] += beacon_rx * topo.neighbors(u).iter().filter(|&&v| reachable[v]).count() as f64;
        // Data of u crosses every edge on its way up.
        let mut w = u;
        while let Some(p) = parent[w] {
            power[w] += data_tx;
            power[p] += data_rx;
            w = p;
        }
    }

    for &b in bs.iter().filter(|&&b| b != active && reachable[b]) {
        let mut hops = 0usize;
        let mut w = b;
        while let Some(p) = parent[w] {
            hops += 1;
            let bytes = radio.route_bytes(hops);
            power[w] += radio.tx_joules(bytes) / traffic.advert_period_s;
            power[p] += radio.rx_joules(bytes) / traffic.advert_period_s;
            w = p;
        }
    }

    power[active] += radio.gprs_joules() / traffic.gprs_interval_s;
    power
}

/// `C[i][j]`: power of BS `bs[i]` while BS `bs[j]` is active.
pub fn cost_matrix_from_topology(topo: &Topology, bs: &[usize], params: &EnergyParams) -> Result<CostMatrix> {
    if bs.is_empty() {
        return Err(ProtocolError::Scenario("no base stations".into()));
    }
    if let Some(&b) = bs.iter().find(|&&b| b >= topo.len()) {
        return Err(ProtocolError::Scenario(format!("base station index {b} out of range")));
    }
    params.radio.validate()?;
    params.traffic.validate()?;
    let m = bs.len();
    let mut rows = vec![vec![0.0; m]; m];
    for (j, &active) in bs.iter().enumerate() {
        let p = node_power(topo, bs, active, params);
        for (i, &b) in bs.iter().enumerate() {
            rows[i][j] = p[b];
        }
    }
    Ok(CostMatrix::from_rows_relaxed(rows)?)
}
