//! Random recharge processes with a known conditional mean, the recharge
//! martingale, Azuma-Hoeffding tail bounds, and Monte-Carlo checks of the
//! HEF lifetime theorems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxiliary::{closed_form_solution, optimal_solution, predicted_lifetime, PredictedLifetime};
use crate::energy::residual_matrix;
use crate::energy::{
    check_d3, d4_report, CostMatrix, DecisionVector, Lifetime, RechargeSource, RechargeTrace, ResidualMatrix,
    SlotConfig,
};
use crate::error::{expect_len, invalid, Error, Result};
use crate::schedulers::hef_lifetime;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Independent, uniform on `[sbar - w, sbar + w]` with `w = min(sbar, S - sbar)`.
    IidUniform,
    /// Independent draws of whole rows from a fixed pool; the mean is the pool mean.
    IidTraceBootstrap { pool: Vec<Vec<f64>> },
    /// `s(n) = sbar + sigma(n) xi(n)` with `xi` symmetric on `[-1, 1]` and a
    /// spread `sigma(n)` that depends on the previous innovation. The
    /// conditional mean stays exactly `sbar` while samples are dependent.
    BoundedMartingaleAr { persistence: f64 },
}

/// Everything needed to spawn independent recharge generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub sbar: Vec<f64>,
    pub bound_s: f64,
}

impl GeneratorSpec {
    pub fn iid_uniform(sbar: Vec<f64>, bound_s: f64) -> Result<Self> {
        let spec = Self { kind: GeneratorKind::IidUniform, sbar, bound_s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bootstrap(pool: Vec<Vec<f64>>) -> Result<Self> {
        let first = pool.first().ok_or_else(|| invalid("bootstrap pool", "must not be empty"))?;
        let m = first.len();
        let mut sbar = vec![0.0; m];
        let mut bound: f64 = 0.0;
        for row in &pool {
            expect_len("bootstrap row", m, row.len())?;
            for (acc, &x) in sbar.iter_mut().zip(row) {
                *acc += x;
                bound = bound.max(x);
            }
        }
        sbar.iter_mut().for_each(|x| *x /= pool.len() as f64);
        let spec =
            Self { kind: GeneratorKind::IidTraceBootstrap { pool }, sbar, bound_s: bound.max(f64::MIN_POSITIVE) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn martingale_ar(sbar: Vec<f64>, bound_s: f64, persistence: f64) -> Result<Self> {
        let spec = Self { kind: GeneratorKind::BoundedMartingaleAr { persistence }, sbar, bound_s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bs_count(&self) -> usize {
        self.sbar.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sbar.is_empty() {
            return Err(invalid("generator", "mean recharge vector is empty"));
        }
        if !(self.bound_s.is_finite() && self.bound_s > 0.0) {
            return Err(invalid("generator", format!("bound S must be positive, got {}", self.bound_s)));
        }
        if let Some(x) = self.sbar.iter().find(|&&x| !(0.0..=self.bound_s).contains(&x)) {
            return Err(invalid("generator", format!("mean {x} outside [0, {}]", self.bound_s)));
        }
        match &self.kind {
            GeneratorKind::IidUniform => {}
            GeneratorKind::IidTraceBootstrap { pool } => {
                for row in pool {
                    expect_len("bootstrap row", self.sbar.len(), row.len())?;
                    if row.iter().any(|&x| !(0.0..=self.bound_s).contains(&x)) {
                        return Err(invalid("bootstrap pool", "sample outside [0, S]"));
                    }
                }
            }
            GeneratorKind::BoundedMartingaleAr { persistence } => {
                if !(0.0..1.0).contains(persistence) {
                    return Err(invalid("generator", format!("persistence must lie in [0, 1), got {persistence}")));
                }
            }
        }
        Ok(())
    }

    /// Generator for `trial` under `master_seed`: one ChaCha stream per trial.
    pub fn spawn(&self, master_seed: u64, trial: u64) -> RechargeGenerator {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trial);
        let m = self.bs_count();
        RechargeGenerator { spec: self.clone(), rng, current: vec![0.0; m], last_innovation: vec![0.0; m], produced: 0 }
    }
}

/// Unbounded source of recharge vectors.
#[derive(Debug, Clone)]
pub struct RechargeGenerator {
    spec: GeneratorSpec,
    rng: ChaCha8Rng,
    current: Vec<f64>,
    last_innovation: Vec<f64>,
    produced: usize,
}

impl RechargeGenerator {
    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    fn half_width(&self, i: usize) -> f64 {
        let s = self.spec.sbar[i];
        s.min(self.spec.bound_s - s)
    }

    /// Draws the next vector.
    pub fn next_sample(&mut self) -> &[f64] {
        let m = self.spec.bs_count();
        match &self.spec.kind {
            GeneratorKind::IidUniform => {
                for i in 0..m {
                    let w = self.half_width(i);
                    let xi: f64 = self.rng.random_range(-1.0..=1.0);
                    self.current[i] = (self.spec.sbar[i] + w * xi).clamp(0.0, self.spec.bound_s);
                }
            }
            GeneratorKind::IidTraceBootstrap { pool } => {
                let row = &pool[self.rng.random_range(0..pool.len())];
                self.current.copy_from_slice(row);
            }
            GeneratorKind::BoundedMartingaleAr { persistence } => {
                let rho = *persistence;
                for i in 0..m {
                    let w = self.half_width(i);
                    let sigma = w * ((1.0 - rho) + rho * self.last_innovation[i].abs());
                    let xi: f64 = self.rng.random_range(-1.0..=1.0);
                    self.last_innovation[i] = xi;
                    self.current[i] = (self.spec.sbar[i] + sigma * xi).clamp(0.0, self.spec.bound_s);
                }
            }
        }
        self.produced += 1;
        &self.current
    }

    /// Materializes `len` slots as a trace carrying the known mean.
    pub fn sample_trace(&mut self, len: usize) -> Result<RechargeTrace> {
        let samples = (0..len).map(|_| self.next_sample().to_vec()).collect();
        RechargeTrace::new(samples, self.spec.bound_s)?.with_mean(self.spec.sbar.clone())
    }
}

impl RechargeSource for RechargeGenerator {
    fn bs_count(&self) -> usize {
        self.spec.bs_count()
    }

    fn rates(&mut self, slot: usize) -> Option<&[f64]> {
        debug_assert_eq!(slot, self.produced + 1, "slots must be requested in order");
        Some(self.next_sample())
    }
}

/// `h(n) = e(0) + tau * sum_{t<=n} (s(t) - sbar)` for one base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePath {
    pub values: Vec<f64>,
}

pub fn martingale_path(e0_m: f64, recharge_m: &[f64], sbar_m: f64, tau: f64) -> MartingalePath {
    let mut values = Vec::with_capacity(recharge_m.len() + 1);
    let mut h = e0_m;
    values.push(h);
    for &s in recharge_m {
        h += tau * (s - sbar_m);
        values.push(h);
    }
    MartingalePath { values }
}

/// The same martingale rebuilt from a run: `h(n) = e_m(n) + tau * sum_{t<=n} (R v(t))_m`.
pub fn martingale_from_run(
    energy_m: &[f64],
    decisions: &[DecisionVector],
    r: &ResidualMatrix,
    m: usize,
    tau: f64,
) -> Result<MartingalePath> {
    expect_len("energy history", decisions.len() + 1, energy_m.len())?;
    let mut drain = 0.0;
    let mut values = Vec::with_capacity(energy_m.len());
    values.push(energy_m[0]);
    for (e, v) in energy_m[1..].iter().zip(decisions) {
        drain += r.get(m, v.active_index());
        values.push(e + tau * drain);
    }
    Ok(MartingalePath { values })
}

/// Upper bound on `P(h(n2) - h(n1) <= -(d1 + (n2 - n1) d2))`, and on the
/// matching upper tail.
pub fn azuma_tail_bound(delta1: f64, delta2: f64, n2_minus_n1: usize, tau: f64, bound_s: f64) -> Result<f64> {
    if delta1 < 0.0 || delta2 < 0.0 || tau <= 0.0 || bound_s <= 0.0 {
        return Err(invalid("tail bound", "deviations must be >= 0 and tau, S > 0"));
    }
    if n2_minus_n1 == 0 {
        return Err(invalid("tail bound", "slot gap must be at least 1"));
    }
    let g = n2_minus_n1 as f64;
    let dev = delta1 + g * delta2;
    Ok((-(dev * dev) / (2.0 * g * tau * tau * bound_s * bound_s)).exp().clamp(0.0, 1.0))
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremPoint {
    pub e0: f64,
    pub successes: u64,
    pub trials: u64,
    pub prob: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl TheoremPoint {
    fn new(e0: f64, successes: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials, Z95);
        Self { e0, successes, trials, prob: successes as f64 / trials.max(1) as f64, ci_low, ci_high }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremTrial {
    /// `delta` for the concentration check, `K` for the unbounded one.
    pub parameter: f64,
    pub f_star: f64,
    pub points: Vec<TheoremPoint>,
}

impl TheoremTrial {
    /// Probabilities never drop by more than one Wilson half-width between
    /// consecutive grid points.
    pub fn is_monotone_within_slack(&self) -> bool {
        self.points.windows(2).all(|w| {
            let slack = w[0].half_width().max(w[1].half_width());
            w[1].prob >= w[0].prob - slack
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("e0,prob,ci_low,ci_high,trials\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{},{}\n", p.e0, p.prob, p.ci_low, p.ci_high, p.trials));
        }
        out
    }
}

/// Checks the theorem preconditions and returns `f*`.
fn theorem_preconditions(c: &CostMatrix, generator: &GeneratorSpec) -> Result<f64> {
    generator.validate()?;
    expect_len("generator", c.bs_count(), generator.bs_count())?;
    if !check_d3(c, &generator.sbar)? {
        return Err(Error::Precondition("D3: some passive base station drains faster than it recharges".into()));
    }
    let d4 = d4_report(c);
    if !d4.satisfied {
        return Err(Error::Precondition(if d4.singular {
            "D4: cost matrix is singular".into()
        } else {
            "D4: (C^T)^-1 u is not positive".into()
        }));
    }
    let r = residual_matrix(c, &generator.sbar)?;
    Ok(optimal_solution(&r)?.f_star)
}

fn grid_ok(e0_grid: &[f64], trials: u64) -> Result<()> {
    if e0_grid.is_empty() || trials == 0 {
        return Err(invalid("theorem trial", "grid and trial count must be nonempty"));
    }
    if e0_grid.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
        return Err(invalid("theorem trial", "initial energies must be positive"));
    }
    Ok(())
}

/// Fraction of HEF runs whose lifetime lands within `(1 +- delta) e0 / (tau f*)`,
/// per initial energy.
pub fn validate_theorem2_concentration(
    c: &CostMatrix,
    generator: &GeneratorSpec,
    tau: f64,
    e0_grid: &[f64],
    delta: f64,
    trials: u64,
    master_seed: u64,
) -> Result<TheoremTrial> {
    grid_ok(e0_grid, trials)?;
    let f_star = theorem_preconditions(c, generator)?;
    let mut points = Vec::with_capacity(e0_grid.len());
    for (g, &e0) in e0_grid.iter().enumerate() {
        let predicted = match predicted_lifetime(e0, tau, f_star) {
            PredictedLifetime::Slots(p) => p,
            PredictedLifetime::UnboundedRegime => {
                return Err(Error::Precondition(format!("f* = {f_star} < 0; lifetime is not concentrated")));
            }
            PredictedLifetime::CriticalRegime => {
                return Err(Error::Precondition(format!("f* = {f_star} is too close to zero")));
            }
        };
        // Any run lasting past the interval counts as a miss, so the
        // horizon only needs to cover it.
        let cap = ((1.0 + delta) * predicted).ceil() as usize + 2;
        let cfg = SlotConfig::new(tau, cap)?;
        let seed = master_seed ^ (g as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let successes = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<u64> {
                let mut source = generator.spawn(seed, t);
                let (life, _) = hef_lifetime(e0, &mut source, c, &cfg, seed.wrapping_add(t))?;
                Ok(match life {
                    Lifetime::Finite(n) => u64::from((n as f64 / predicted - 1.0).abs() < delta),
                    Lifetime::Capped => 0,
                })
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        points.push(TheoremPoint::new(e0, successes, trials));
    }
    Ok(TheoremTrial { parameter: delta, f_star, points })
}

/// Fraction of HEF runs outliving `K e0` slots, per initial energy.
pub fn validate_theorem2_unbounded(
    c: &CostMatrix,
    generator: &GeneratorSpec,
    tau: f64,
    e0_grid: &[f64],
    k_const: f64,
    trials: u64,
    master_seed: u64,
) -> Result<TheoremTrial> {
    grid_ok(e0_grid, trials)?;
    if !(k_const > 0.0) {
        return Err(invalid("theorem trial", "K must be positive"));
    }
    let f_star = theorem_preconditions(c, generator)?;
    if predicted_lifetime(1.0, tau, f_star) != PredictedLifetime::UnboundedRegime {
        return Err(Error::Precondition(format!("f* = {f_star} is not negative")));
    }
    let mut points = Vec::with_capacity(e0_grid.len());
    for (g, &e0) in e0_grid.iter().enumerate() {
        let target = k_const * e0;
        let cfg = SlotConfig::new(tau, target.floor() as usize + 1)?;
        let seed = master_seed ^ (g as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let successes = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<u64> {
                let mut source = generator.spawn(seed, t);
                let (life, _) = hef_lifetime(e0, &mut source, c, &cfg, seed.wrapping_add(t))?;
                Ok(match life {
                    Lifetime::Finite(n) => u64::from(n as f64 > target),
                    Lifetime::Capped => 1,
                })
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        points.push(TheoremPoint::new(e0, successes, trials));
    }
    Ok(TheoremTrial { parameter: k_const, f_star, points })
}

/// `|| counts / n - v* ||_inf` with `v*` from the closed form.
pub fn decision_deviation_counts(counts: &[u64], r: &ResidualMatrix) -> Result<f64> {
    expect_len("activation counts", r.bs_count(), counts.len())?;
    let v_star = closed_form_solution(r)?.v_star;
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(invalid("decisions", "no slots recorded"));
    }
    Ok(counts.iter().zip(&v_star).map(|(&k, v)| (k as f64 / n as f64 - v).abs()).fold(0.0, f64::max))
}

pub fn decision_deviation(decisions: &[DecisionVector], r: &ResidualMatrix) -> Result<f64> {
    let mut counts = vec![0u64; r.bs_count()];
    for d in decisions {
        let slot = counts.get_mut(d.active_index()).ok_or_else(|| invalid("decision", "active index out of range"))?;
        *slot += 1;
    }
    decision_deviation_counts(&counts, r)
}

/// One `(delta1, delta2, gap)` triple checked against simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzumaCheck {
    pub delta1: f64,
    pub delta2: f64,
    pub gap: usize,
    pub bound: f64,
    pub lower_tail: f64,
    pub upper_tail: f64,
}

impl AzumaCheck {
    pub fn dominated(&self) -> bool {
        self.lower_tail <= self.bound && self.upper_tail <= self.bound
    }
}

/// Empirical tail frequencies of `h(n1 + gap) - h(n1)` for base station 0
/// over `paths` independent generator runs.
pub fn azuma_dominance(
    generator: &GeneratorSpec,
    tau: f64,
    n1: usize,
    triples: &[(f64, f64, usize)],
    paths: u64,
    master_seed: u64,
) -> Result<Vec<AzumaCheck>> {
    generator.validate()?;
    let max_gap = triples.iter().map(|t| t.2).max().unwrap_or(0);
    let len = n1 + max_gap;
    let sbar0 = generator.sbar[0];
    let counts = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut gen = generator.spawn(master_seed, p);
            let mut h = vec![0.0; len + 1];
            for n in 1..=len {
                h[n] = h[n - 1] + tau * (gen.next_sample()[0] - sbar0);
            }
            triples
                .iter()
                .map(|&(d1, d2, gap)| {
                    let diff = h[n1 + gap] - h[n1];
                    let dev = d1 + gap as f64 * d2;
                    (u64::from(diff <= -dev), u64::from(diff >= dev))
                })
                .collect::<Vec<_>>()
        })
        .reduce(|| vec![(0, 0); triples.len()], |a, b| a.iter().zip(&b).map(|(x, y)| (x.0 + y.0, x.1 + y.1)).collect());
    triples
        .iter()
        .zip(counts)
        .map(|(&(d1, d2, gap), (lo, hi))| {
            Ok(AzumaCheck {
                delta1: d1,
                delta2: d2,
                gap,
                bound: azuma_tail_bound(d1, d2, gap, tau, generator.bound_s)?,
                lower_tail: lo as f64 / paths as f64,
                upper_tail: hi as f64 / paths as f64,
            })
        })
        .collect()
}
