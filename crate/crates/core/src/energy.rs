//! Slot-level energy bookkeeping.
//!
//! Time is split into slots of length `tau` seconds. During slot `n` every base
//! station `m` harvests at rate `s_m(n)` watts and drains at rate `C[m][a]`
//! watts where `a` is the active base station of that slot, so
//!
//! ```text
//! e(n) = e(n-1) + tau * s(n) - tau * C * v(n)
//! ```
//!
//! Units are joules, watts and seconds throughout.

use std::fmt;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{expect_len, invalid, Error, Result};
use crate::tol::TOL;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotConfig {
    /// Slot length in seconds.
    pub tau: f64,
    /// Horizon after which a network is considered to live forever.
    pub max_slots: usize,
    /// Battery capacity in joules. `None` leaves energy unbounded above.
    #[serde(default)]
    pub capacity: Option<f64>,
}

impl SlotConfig {
    pub fn new(tau: f64, max_slots: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("slot length", format!("tau must be positive, got {tau}")));
        }
        if max_slots == 0 {
            return Err(invalid("slot horizon", "max_slots must be at least 1"));
        }
        Ok(Self { tau, max_slots, capacity: None })
    }

    pub fn with_capacity(mut self, capacity: f64) -> Result<Self> {
        if !(capacity > 0.0) {
            return Err(invalid("capacity", format!("must be positive, got {capacity}")));
        }
        self.capacity = Some(capacity);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let checked = Self::new(self.tau, self.max_slots)?;
        match self.capacity {
            Some(c) => checked.with_capacity(c).map(|_| ()),
            None => Ok(()),
        }
    }
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self { tau: 7200.0, max_slots: 2400, capacity: None }
    }
}

/// `M x M` consumption rates in watts; entry `(i, j)` is the drain of base
/// station `i` while base station `j` is active.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: DMatrix<f64>,
}

impl CostMatrix {
    /// Builds a cost matrix and checks that the active role costs more than the
    /// passive one in every row.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let c = Self::from_rows_relaxed(rows)?;
        if let Some((i, j)) = c.role_violation() {
            return Err(invalid(
                "cost matrix",
                format!("diagonal C[{i}][{i}]={} must exceed off-diagonal C[{i}][{j}]={}", c.get(i, i), c.get(i, j)),
            ));
        }
        Ok(c)
    }

    /// Only checks shape, finiteness and non-negativity. Analysis code uses
    /// this for matrices that are not physically meaningful cost models.
    pub fn from_rows_relaxed(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(invalid("cost matrix", "needs at least one base station"));
        }
        for row in &rows {
            expect_len("cost matrix row", m, row.len())?;
        }
        let entries = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        Self::from_matrix(entries)
    }

    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(invalid(
                "cost matrix",
                format!("must be square and nonempty, got {}x{}", entries.nrows(), entries.ncols()),
            ));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(invalid("cost matrix", format!("entries must be finite and >= 0, found {bad}")));
        }
        Ok(Self { entries })
    }

    pub fn bs_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.bs_count()).map(|i| self.entries.row(i).iter().copied().collect()).collect()
    }

    /// First `(i, j)` with `j != i` and `C[i][j] >= C[i][i]`, if any.
    pub fn role_violation(&self) -> Option<(usize, usize)> {
        let m = self.bs_count();
        (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).find(|&(i, j)| i != j && self.get(i, j) >= self.get(i, i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyVector(pub Vec<f64>);

impl EnergyVector {
    pub fn uniform(e0: f64, m: usize) -> Self {
        Self(vec![e0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True once any base station has gone below zero.
    pub fn is_depleted(&self) -> bool {
        self.0.iter().any(|&x| x < 0.0)
    }
}

/// Active base station of one slot. The one-hot vector form is available
/// through [`DecisionVector::one_hot`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionVector {
    active: usize,
}

impl DecisionVector {
    pub fn new(active: usize, m: usize) -> Result<Self> {
        if active >= m {
            return Err(invalid("decision", format!("active index {active} out of range for {m} base stations")));
        }
        Ok(Self { active })
    }

    pub(crate) fn unchecked(active: usize) -> Self {
        Self { active }
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn one_hot(&self, m: usize) -> Vec<f64> {
        let mut v = vec![0.0; m];
        v[self.active] = 1.0;
        v
    }
}

/// Per-slot recharge rates in watts, all within `[0, bound_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RechargeTrace {
    samples: Vec<Vec<f64>>,
    bound_s: f64,
    mean_sbar: Option<Vec<f64>>,
}

impl RechargeTrace {
    pub fn new(samples: Vec<Vec<f64>>, bound_s: f64) -> Result<Self> {
        if !(bound_s >= 0.0 && bound_s.is_finite()) {
            return Err(invalid("recharge bound", format!("S must be finite and >= 0, got {bound_s}")));
        }
        let m = samples.first().map(Vec::len).unwrap_or(0);
        for (idx, row) in samples.iter().enumerate() {
            expect_len("recharge sample", m, row.len())?;
            if let Some(x) = row.iter().find(|x| !(**x >= 0.0 && **x <= bound_s)) {
                return Err(invalid(
                    "recharge sample",
                    format!("slot {} has rate {x} outside [0, {bound_s}]", idx + 1),
                ));
            }
        }
        Ok(Self { samples, bound_s, mean_sbar: None })
    }

    /// Uses the largest sample as the bound.
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Result<Self> {
        let bound = samples.iter().flatten().copied().fold(0.0, f64::max);
        Self::new(samples, bound)
    }

    /// Attaches the known conditional mean of the process that produced the trace.
    pub fn with_mean(mut self, sbar: Vec<f64>) -> Result<Self> {
        if !self.samples.is_empty() {
            expect_len("mean recharge", self.bs_count(), sbar.len())?;
        }
        self.mean_sbar = Some(sbar);
        Ok(self)
    }

    /// Reads `slot,bs0,bs1,...` CSV. Slot numbers must be consecutive.
    pub fn from_csv_reader<R: Read>(reader: R, bound_s: Option<f64>) -> Result<Self> {
        let samples = read_slot_csv(reader)?;
        match bound_s {
            Some(s) => Self::new(samples, s),
            None => Self::from_samples(samples),
        }
    }

    pub fn from_csv_path(path: impl AsRef<Path>, bound_s: Option<f64>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file, bound_s)
    }

    pub fn bs_count(&self) -> usize {
        self.samples.first().map(Vec::len).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bound(&self) -> f64 {
        self.bound_s
    }

    pub fn mean(&self) -> Option<&[f64]> {
        self.mean_sbar.as_deref()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Rates of 1-based slot `n`.
    pub fn slot(&self, n: usize) -> Option<&[f64]> {
        n.checked_sub(1).and_then(|i| self.samples.get(i)).map(Vec::as_slice)
    }

    pub fn empirical_mean(&self) -> Vec<f64> {
        let m = self.bs_count();
        let mut acc = vec![0.0; m];
        for row in &self.samples {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        let n = self.samples.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Parses the `slot,bs0,bs1,...` layout shared by recharge and irradiance traces.
pub fn read_slot_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::TraceFormat { line: 1, detail: e.to_string() })?.clone();
    if header.get(0) != Some("slot") || header.len() < 2 {
        return Err(Error::TraceFormat { line: 1, detail: "header must be `slot,bs0,bs1,...`".into() });
    }
    for (k, name) in header.iter().skip(1).enumerate() {
        if name != format!("bs{k}") {
            return Err(Error::TraceFormat {
                line: 1,
                detail: format!("column {} must be named bs{k}, found `{name}`", k + 1),
            });
        }
    }
    let m = header.len() - 1;
    let mut samples = Vec::new();
    let mut prev_slot: Option<i64> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::TraceFormat {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            detail: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |detail: String| Error::TraceFormat { line, detail };
        if record.len() != m + 1 {
            return Err(bad(format!("expected {} fields, found {}", m + 1, record.len())));
        }
        let slot: i64 = record[0].parse().map_err(|_| bad(format!("slot `{}` is not an integer", &record[0])))?;
        if let Some(p) = prev_slot {
            if slot != p + 1 {
                return Err(bad(format!("slot {slot} does not follow slot {p}")));
            }
        }
        prev_slot = Some(slot);
        let row = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("`{f}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(row);
    }
    Ok(samples)
}

/// Something that can hand out recharge rates slot by slot.
pub trait RechargeSource {
    fn bs_count(&self) -> usize;
    /// Rates for 1-based `slot`. Callers request slots in increasing order.
    fn rates(&mut self, slot: usize) -> Option<&[f64]>;
}

impl RechargeSource for &RechargeTrace {
    fn bs_count(&self) -> usize {
        RechargeTrace::bs_count(self)
    }

    fn rates(&mut self, slot: usize) -> Option<&[f64]> {
        self.slot(slot)
    }
}

/// `R = C - sbar * u^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    entries: DMatrix<f64>,
}

impl ResidualMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(invalid("residual matrix", "must be square and nonempty"));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(invalid("residual matrix", "entries must be finite"));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        for row in &rows {
            expect_len("residual row", m, row.len())?;
        }
        Self::from_matrix(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    pub fn bs_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { entries: &self.entries * alpha }
    }
}

fn check_rates(s: &[f64]) -> Result<()> {
    match s.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        Some(x) => Err(invalid("recharge rate", format!("rates must be finite and >= 0, got {x}"))),
        None => Ok(()),
    }
}

/// One slot of the energy recursion.
pub fn step_energy(
    e: &EnergyVector,
    s: &[f64],
    v: DecisionVector,
    c: &CostMatrix,
    cfg: &SlotConfig,
) -> Result<EnergyVector> {
    step_energy_tracked(e, s, v, c, cfg).map(|(e, _)| e)
}

/// Like [`step_energy`], also returning the energy discarded at the capacity
/// limit for each base station (all zero when uncapped).
pub fn step_energy_tracked(
    e: &EnergyVector,
    s: &[f64],
    v: DecisionVector,
    c: &CostMatrix,
    cfg: &SlotConfig,
) -> Result<(EnergyVector, Vec<f64>)> {
    let m = c.bs_count();
    expect_len("energy vector", m, e.len())?;
    expect_len("recharge vector", m, s.len())?;
    if v.active_index() >= m {
        return Err(invalid("decision", format!("active index {} out of range", v.active_index())));
    }
    check_rates(s)?;
    let a = v.active_index();
    let tau = cfg.tau;
    let mut next = Vec::with_capacity(m);
    let mut overflow = vec![0.0; m];
    for i in 0..m {
        let mut x = e.0[i] + tau * s[i] - tau * c.get(i, a);
        if let Some(cap) = cfg.capacity {
            if x > cap {
                overflow[i] = x - cap;
                x = cap;
            }
        }
        next.push(x);
    }
    Ok((EnergyVector(next), overflow))
}

/// Closed-form energy after `decisions.len()` slots:
/// `e0 * u + tau * sum(s) - tau * C * sum(v)`. Ignores any capacity.
pub fn cumulative_energy(
    e0: f64,
    recharge: &[Vec<f64>],
    decisions: &[DecisionVector],
    c: &CostMatrix,
    cfg: &SlotConfig,
) -> Result<EnergyVector> {
    let m = c.bs_count();
    expect_len("recharge prefix", decisions.len(), recharge.len())?;
    let mut sum_s = DVector::<f64>::zeros(m);
    let mut counts = DVector::<f64>::zeros(m);
    for (s, v) in recharge.iter().zip(decisions) {
        expect_len("recharge vector", m, s.len())?;
        check_rates(s)?;
        if v.active_index() >= m {
            return Err(invalid("decision", format!("active index {} out of range", v.active_index())));
        }
        for (acc, x) in sum_s.iter_mut().zip(s) {
            *acc += x;
        }
        counts[v.active_index()] += 1.0;
    }
    let drain = c.as_matrix() * &counts;
    let e = (0..m).map(|i| e0 + cfg.tau * sum_s[i] - cfg.tau * drain[i]).collect();
    Ok(EnergyVector(e))
}

pub fn residual_matrix(c: &CostMatrix, sbar: &[f64]) -> Result<ResidualMatrix> {
    let m = c.bs_count();
    expect_len("mean recharge", m, sbar.len())?;
    let entries = DMatrix::from_fn(m, m, |i, j| c.get(i, j) - sbar[i]);
    ResidualMatrix::from_matrix(entries)
}

/// Every passive base station harvests more than it spends on average:
/// `C[i][j] - sbar[i] < 0` for all `i != j`.
pub fn check_d3(c: &CostMatrix, sbar: &[f64]) -> Result<bool> {
    let r = residual_matrix(c, sbar)?;
    let m = r.bs_count();
    Ok((0..m).all(|i| (0..m).all(|j| i == j || r.get(i, j) < 0.0)))
}

/// Outcome of the `(C^T)^-1 u > 0` test.
#[derive(Debug, Clone, PartialEq)]
pub struct D4Report {
    pub satisfied: bool,
    /// C was singular or too badly conditioned to trust the solve.
    pub singular: bool,
    /// `(C^T)^-1 u` when it could be computed.
    pub weights: Option<Vec<f64>>,
    pub condition_number: f64,
}

pub fn d4_report(c: &CostMatrix) -> D4Report {
    let cond = condition_number(c.as_matrix());
    let singular_report = D4Report { satisfied: false, singular: true, weights: None, condition_number: cond };
    if !(cond <= TOL.max_condition) {
        return singular_report;
    }
    let m = c.bs_count();
    let u = DVector::from_element(m, 1.0);
    match c.as_matrix().transpose().lu().solve(&u) {
        Some(w) => D4Report {
            satisfied: w.iter().all(|&x| x > TOL.singularity),
            singular: false,
            weights: Some(w.iter().copied().collect()),
            condition_number: cond,
        },
        None => singular_report,
    }
}

pub fn check_d4(c: &CostMatrix) -> bool {
    d4_report(c).satisfied
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Panel output in watts: efficiency * loss coefficient * irradiance (W/m^2) * area (m^2).
pub fn solar_recharge(eta: f64, gamma: f64, irradiance: f64, panel_area: f64) -> Result<f64> {
    for (name, x) in [("efficiency", eta), ("loss coefficient", gamma)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid("solar parameter", format!("{name} must lie in [0, 1], got {x}")));
        }
    }
    for (name, x) in [("irradiance", irradiance), ("panel area", panel_area)] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(invalid("solar parameter", format!("{name} must be finite and >= 0, got {x}")));
        }
    }
    Ok(eta * gamma * irradiance * panel_area)
}

/// Number of slots a network survived, or [`Lifetime::Capped`] when it
/// reached the simulation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lifetime {
    Finite(usize),
    Capped,
}

impl Lifetime {
    /// Numeric view with the horizon standing in for a capped lifetime.
    pub fn slots(self, max_slots: usize) -> usize {
        match self {
            Lifetime::Finite(n) => n,
            Lifetime::Capped => max_slots,
        }
    }

    pub fn is_capped(self) -> bool {
        matches!(self, Lifetime::Capped)
    }
}

impl fmt::Display for Lifetime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lifetime::Finite(n) => write!(f, "{n}"),
            Lifetime::Capped => f.write_str("capped"),
        }
    }
}

/// `history[k]` is `e(k)`. The lifetime is the last slot before some base
/// station first goes negative; histories that stay non-negative through
/// `max_slots` (or through their end) are capped.
pub fn lifetime_of(history: &[EnergyVector], max_slots: usize) -> Result<Lifetime> {
    if history.is_empty() {
        return Err(invalid("energy history", "must contain at least e(0)"));
    }
    let horizon = history.len().min(max_slots + 1);
    Ok(history[..horizon]
        .iter()
        .position(EnergyVector::is_depleted)
        .map(|k| Lifetime::Finite(k.saturating_sub(1)))
        .unwrap_or(Lifetime::Capped))
}
