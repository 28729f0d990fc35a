//! Unit-disk connectivity.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ProtocolError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Adjacency lists, sorted by node index. Links can be cut and restored
/// without losing the geometric graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<Position>,
    range: f64,
    geometric: Vec<Vec<usize>>,
    adjacency: Vec<Vec<usize>>,
}

/// Link iff Euclidean distance <= `range_m`.
pub fn build_topology(positions: &[Position], range_m: f64) -> Result<Topology> {
    if !(range_m.is_finite() && range_m > 0.0) {
        return Err(ProtocolError::Scenario(format!("radio range must be positive, got {range_m}")));
    }
    let n = positions.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        let p = positions[i];
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(ProtocolError::Scenario(format!("node {i} has a non-finite position")));
        }
        for j in (i + 1)..n {
            let d = p.distance(&positions[j]);
            if d == 0.0 {
                return Err(ProtocolError::DuplicatePosition(i, j));
            }
            if d <= range_m {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Ok(Topology { positions: positions.to_vec(), range: range_m, geometric: adjacency.clone(), adjacency })
}

impl Topology {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_linked(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn cut(&mut self, i: usize, j: usize) {
        self.adjacency[i].retain(|&k| k != j);
        self.adjacency[j].retain(|&k| k != i);
    }

    /// Remove every link whose endpoints fall in different groups. Nodes not
    /// listed in any group form one implicit extra group.
    pub fn partition(&mut self, groups: &[Vec<usize>]) {
        let mut label = vec![usize::MAX; self.len()];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                label[m] = g;
            }
        }
        for i in 0..self.len() {
            let li = label[i];
            self.adjacency[i].retain(|&j| label[j] == li);
        }
    }

    pub fn heal(&mut self) {
        self.adjacency = self.geometric.clone();
    }

    /// Hop counts from `src` over nodes with `alive[i]`.
    pub fn hops_from(&self, src: usize, alive: &[bool]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        if !alive[src] {
            return dist;
        }
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if alive[v] && dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components of the alive subgraph, each sorted, ordered by
    /// smallest member.
    pub fn components(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if seen[s] || !alive[s] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([s]);
            seen[s] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &v in &self.adjacency[u] {
                    if alive[v] && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Hop diameter of a connected node set.
    pub fn diameter(&self, component: &[usize], alive: &[bool]) -> usize {
        component.iter().map(|&s| self.hops_from(s, alive).into_iter().flatten().max().unwrap_or(0)).max().unwrap_or(0)
    }
}
