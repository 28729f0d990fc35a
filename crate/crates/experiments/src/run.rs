//! Sweep execution for every experiment family.

use basehop_core::auxiliary::optimal_solution;
use basehop_core::energy::{residual_matrix, RechargeTrace, SlotConfig};
use basehop_core::schedulers::{run_policy, Optimality, Policy};
use basehop_core::stochastic::{validate_theorem2_concentration, validate_theorem2_unbounded, GeneratorSpec};
use basehop_core::CostMatrix;
use basehop_protocol::message::MessageKind;
use basehop_protocol::scenario::ProtocolPolicy;
use basehop_protocol::sim::measure_overhead;
use basehop_protocol::Simulator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{d3_area_bisection, d3_area_closed_form, d4_holds};
use crate::error::{ExperimentError, Result};
use crate::instance::{energy_params, NetworkInstance};
use crate::solar::{mean_irradiance, recharge_trace, Irradiance};
use crate::spec::{ExperimentSpec, Family, GeneratorChoice, PolicyName};
use crate::stats::{mean_ci, proportion_ci};
use crate::table::{ResultTable, Row};

/// Policy label used for rows derived from the auxiliary LP.
pub const LP: &str = "LP";
/// Policy label for rows that belong to no scheduling policy.
pub const NONE: &str = "-";
/// Warm-up before overhead counting starts, so bootstrap traffic is excluded.
pub const OVERHEAD_WARMUP_S: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// A violated invariant; the run fails.
    Assertion,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub severity: Severity,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, severity: Severity, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), severity, passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: ResultTable,
    pub summary: Vec<SummaryRow>,
    pub checks: Vec<Check>,
}

impl ExperimentOutcome {
    pub fn failed_assertions(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.severity == Severity::Assertion && !c.passed).collect()
    }

    pub fn warnings(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.severity == Severity::Warning && !c.passed).collect()
    }

    pub fn summary_value(&self, policy: &str, metric: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.policy == policy && s.metric == metric).map(|s| s.value)
    }
}

/// Independent stream `k` of a seed.
fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let irradiance_file = match &spec.base.trace {
        Some(path) => Some(Irradiance::from_csv_path(path)?),
        None => None,
    };
    let ctx = Context { spec, irradiance_file };
    match spec.family {
        Family::LifetimeVsPanel | Family::LifetimeVsE0 | Family::LifetimeVsM => ctx.lifetime_sweep(),
        Family::EnergyVsTime => ctx.energy_vs_time(),
        Family::OverheadVsRate => ctx.overhead_vs_rate(),
        Family::CfrVsGprs => ctx.cfr_vs_gprs(),
        Family::D3PanelRequirement => ctx.d3_requirement(),
        Family::TheoremValidation => ctx.theorem_validation(),
    }
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    irradiance_file: Option<Irradiance>,
}

#[derive(Debug, Clone, Copy)]
struct LifeSample {
    slots: usize,
    capped: bool,
    exact: bool,
}

/// Per seed, per grid point: a sample per policy plus the LP rate.
struct SeedResult {
    cells: Vec<Option<(Vec<LifeSample>, f64)>>,
}

impl Context<'_> {
    fn irradiance(&self, seed: u64, slots: usize, m: usize) -> Result<Irradiance> {
        match &self.irradiance_file {
            Some(irr) => {
                let cols = irr.columns().unwrap_or(0);
                if cols < m {
                    let path = self.spec.base.trace.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
                    return Err(ExperimentError::Validation(format!(
                        "trace {path} has {cols} station columns, {m} needed"
                    )));
                }
                Ok(irr.clone())
            }
            None => Ok(Irradiance::synthetic(&self.spec.solar, self.spec.base.tau_s, slots, &mut stream(seed, 1))),
        }
    }

    fn policy(&self, p: PolicyName, seed: u64) -> Policy {
        match p {
            PolicyName::Hef => Policy::hef(seed),
            PolicyName::Rr => Policy::round_robin(),
            PolicyName::Fixed => Policy::fixed(0),
            PolicyName::Opt => Policy::opt(),
        }
    }

    fn lifetime_seed(&self, seed: u64) -> Result<SeedResult> {
        let spec = self.spec;
        let base = &spec.base;
        let max_m = match spec.family {
            Family::LifetimeVsM => spec.grid.iter().fold(0.0, |a: f64, &b| a.max(b)) as usize,
            _ => base.bs_count,
        };
        let mut gen_base = base.clone();
        gen_base.bs_count = base.bs_count.min(base.nodes);
        let instance = NetworkInstance::generate(&gen_base, &spec.solar, &mut stream(seed, 0))?;
        let irr = self.irradiance(seed, base.max_slots, max_m.max(base.bs_count))?;
        let params = energy_params(base);
        let cfg = SlotConfig::new(base.tau_s, base.max_slots)?;
        let fixed_cost = match spec.family {
            Family::LifetimeVsM => None,
            _ if base.bs_count == 0 => None,
            _ => Some(instance.cost_matrix(&params)?),
        };
        let mut cells = Vec::with_capacity(spec.grid.len());
        for &g in &spec.grid {
            let (inst, area, e0) = match spec.family {
                Family::LifetimeVsPanel => (instance.clone(), g, base.e0_j),
                Family::LifetimeVsE0 => (instance.clone(), base.panel_cm2, g),
                _ => (instance.with_bs_count(g as usize), base.panel_cm2, base.e0_j),
            };
            if inst.bs_count == 0 {
                cells.push(None);
                continue;
            }
            let c = match &fixed_cost {
                Some(c) => c.clone(),
                None => inst.cost_matrix(&params)?,
            };
            let trace = recharge_trace(&irr, inst.bs_eta(), spec.solar.gamma, area, base.max_slots)?;
            let samples = spec
                .policies
                .iter()
                .map(|&p| {
                    let r = run_policy(self.policy(p, seed), e0, &trace, &c, &cfg)?;
                    Ok(LifeSample {
                        slots: r.lifetime_slots(base.max_slots),
                        capped: r.lifetime.is_capped(),
                        exact: r.optimality == Optimality::Exact,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let f_star = lp_rate(&c, &trace)?;
            cells.push(Some((samples, f_star)));
        }
        Ok(SeedResult { cells })
    }

    fn lifetime_sweep(&self) -> Result<ExperimentOutcome> {
        let spec = self.spec;
        let base = &spec.base;
        let per_seed: Vec<SeedResult> =
            spec.seeds.par_iter().map(|&s| self.lifetime_seed(s)).collect::<Result<Vec<_>>>()?;
        let mut table = ResultTable::new();
        let n_seeds = spec.seeds.len() as u64;
        // means[g][p] of lifetime, None when the cell failed.
        let mut means: Vec<Vec<Option<f64>>> = Vec::new();
        let mut exact_opt: Vec<bool> = Vec::new();
        for (gi, &g) in spec.grid.iter().enumerate() {
            let cells: Vec<&(Vec<LifeSample>, f64)> = per_seed.iter().filter_map(|s| s.cells[gi].as_ref()).collect();
            let mut row_means = Vec::new();
            if cells.is_empty() {
                for p in &spec.policies {
                    table.push(Row::failed(g, p.label(), "lifetime_slots"));
                    table.push(Row::failed(g, p.label(), "capped_fraction"));
                    row_means.push(None);
                }
                table.push(Row::failed(g, LP, "f_star_w"));
                table.push(Row::failed(g, LP, "predicted_slots"));
                means.push(row_means);
                exact_opt.push(false);
                continue;
            }
            for (pi, p) in spec.policies.iter().enumerate() {
                let lives: Vec<f64> = cells.iter().map(|c| c.0[pi].slots as f64).collect();
                let capped = cells.iter().filter(|c| c.0[pi].capped).count() as u64;
                let stat = mean_ci(&lives);
                row_means.push(Some(stat.0));
                table.push(Row::new(g, p.label(), "lifetime_slots", stat, n_seeds));
                table.push(Row::new(g, p.label(), "capped_fraction", proportion_ci(capped, n_seeds), n_seeds));
                if *p == PolicyName::Opt {
                    let exact = cells.iter().filter(|c| c.0[pi].exact).count() as u64;
                    table.push(Row::new(g, p.label(), "exact_fraction", proportion_ci(exact, n_seeds), n_seeds));
                }
            }
            let opt_idx = spec.policies.iter().position(|&p| p == PolicyName::Opt);
            exact_opt.push(opt_idx.is_some_and(|i| cells.iter().all(|c| c.0[i].exact)));
            let f: Vec<f64> = cells.iter().map(|c| c.1).collect();
            table.push(Row::new(g, LP, "f_star_w", mean_ci(&f), n_seeds));
            let e0 = if spec.family == Family::LifetimeVsE0 { g } else { base.e0_j };
            let predicted: Vec<f64> =
                f.iter()
                    .map(|&f| {
                        if f > 0.0 {
                            (e0 / (base.tau_s * f)).min(base.max_slots as f64)
                        } else {
                            base.max_slots as f64
                        }
                    })
                    .collect();
            table.push(Row::new(g, LP, "predicted_slots", mean_ci(&predicted), n_seeds));
            means.push(row_means);
        }

        let mut checks = Vec::new();
        let mut summary = Vec::new();
        let idx = |p: PolicyName| spec.policies.iter().position(|&q| q == p);
        // Dominance at every grid point, on seed means.
        for (gi, &g) in spec.grid.iter().enumerate() {
            let m = &means[gi];
            let get = |p| idx(p).and_then(|i| m[i]);
            if let (Some(opt), Some(hef)) = (get(PolicyName::Opt), get(PolicyName::Hef)) {
                if exact_opt[gi] {
                    checks.push(Check::new(
                        format!("dominance OPT >= HEF at {g}"),
                        Severity::Assertion,
                        opt >= hef,
                        format!("OPT {opt}, HEF {hef}"),
                    ));
                }
            }
            if let (Some(hef), Some(rr), Some(fixed)) =
                (get(PolicyName::Hef), get(PolicyName::Rr), get(PolicyName::Fixed))
            {
                checks.push(Check::new(
                    format!("dominance HEF >= min(RR, FIXED) at {g}"),
                    Severity::Assertion,
                    hef >= rr.min(fixed),
                    format!("HEF {hef}, RR {rr}, FIXED {fixed}"),
                ));
            }
        }
        let mut order: Vec<usize> = (0..spec.grid.len()).collect();
        order.sort_by(|&a, &b| spec.grid[a].total_cmp(&spec.grid[b]));
        for (pi, p) in spec.policies.iter().enumerate() {
            let series: Vec<(f64, f64)> =
                order.iter().filter_map(|&gi| means[gi][pi].map(|v| (spec.grid[gi], v))).collect();
            match spec.family {
                Family::LifetimeVsM if *p == PolicyName::Fixed => {
                    let lo = series.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
                    let hi = series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
                    checks.push(Check::new(
                        "FIXED flat in station count",
                        Severity::Warning,
                        series.is_empty() || hi <= 1.05 * lo,
                        format!("range [{lo}, {hi}]"),
                    ));
                }
                _ => {
                    let bad: Vec<String> = series
                        .windows(2)
                        .filter(|w| w[1].1 < w[0].1)
                        .map(|w| format!("{} -> {}: {} -> {}", w[0].0, w[1].0, w[0].1, w[1].1))
                        .collect();
                    checks.push(Check::new(
                        format!("{} lifetime non-decreasing in {}", p.label(), spec.family.sweep_name()),
                        Severity::Warning,
                        bad.is_empty(),
                        bad.join("; "),
                    ));
                }
            }
            if spec.family == Family::LifetimeVsPanel {
                let area = order
                    .iter()
                    .find(|&&gi| table.get(spec.grid[gi], p.label(), "capped_fraction").is_some_and(|r| r.value == 1.0))
                    .map(|&gi| spec.grid[gi])
                    .unwrap_or(f64::INFINITY);
                summary.push(SummaryRow {
                    policy: p.label().into(),
                    metric: "min_capped_area_cm2".into(),
                    value: area,
                });
            }
        }
        if spec.family == Family::LifetimeVsE0 {
            if let Some(hi) = idx(PolicyName::Hef) {
                let xs: Vec<f64> = order.iter().filter(|&&g| means[g][hi].is_some()).map(|&g| spec.grid[g]).collect();
                let ys: Vec<f64> = order.iter().filter_map(|&g| means[g][hi]).collect();
                if let Some(fit) = crate::stats::linear_fit(&xs, &ys) {
                    summary.push(SummaryRow {
                        policy: "HEF".into(),
                        metric: "slope_slots_per_j".into(),
                        value: fit.slope,
                    });
                    summary.push(SummaryRow { policy: "HEF".into(), metric: "r_squared".into(), value: fit.r_squared });
                }
                // Mean over seeds of 1 / (tau f*), the slope predicted by the LP.
                let inv: Vec<f64> = per_seed
                    .iter()
                    .filter_map(|s| s.cells.first().and_then(|c| c.as_ref()).map(|c| c.1))
                    .map(|f| 1.0 / (base.tau_s * f))
                    .collect();
                if !inv.is_empty() {
                    let v = inv.iter().sum::<f64>() / inv.len() as f64;
                    summary.push(SummaryRow { policy: LP.into(), metric: "slope_slots_per_j".into(), value: v });
                }
            }
        }
        Ok(ExperimentOutcome { table, summary, checks })
    }

    fn energy_vs_time(&self) -> Result<ExperimentOutcome> {
        let spec = self.spec;
        let base = &spec.base;
        let horizon = spec.grid.iter().fold(0.0, |a: f64, &b| a.max(b)) as usize;
        let m = base.bs_count;
        if m == 0 {
            let mut table = ResultTable::new();
            for &g in &spec.grid {
                for p in &spec.policies {
                    table.push(Row::failed(g, p.label(), "e_min_j"));
                }
            }
            return Ok(ExperimentOutcome { table, summary: Vec::new(), checks: Vec::new() });
        }
        let cfg = SlotConfig::new(base.tau_s, horizon)?;
        let params = energy_params(base);
        // histories[seed][policy] = energy after each slot while alive.
        let histories: Vec<Vec<Vec<Vec<f64>>>> = spec
            .seeds
            .par_iter()
            .map(|&seed| -> Result<_> {
                let inst = NetworkInstance::generate(base, &spec.solar, &mut stream(seed, 0))?;
                let irr = self.irradiance(seed, horizon, m)?;
                let c = inst.cost_matrix(&params)?;
                let trace = recharge_trace(&irr, inst.bs_eta(), spec.solar.gamma, base.panel_cm2, horizon)?;
                spec.policies
                    .iter()
                    .map(|&p| {
                        let r = run_policy(self.policy(p, seed), base.e0_j, &trace, &c, &cfg)?;
                        Ok(r.energy_history.iter().map(|e| e.values().to_vec()).collect())
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut table = ResultTable::new();
        for &g in &spec.grid {
            let n = g as usize;
            for (pi, p) in spec.policies.iter().enumerate() {
                let alive: Vec<&Vec<f64>> =
                    histories.iter().filter_map(|h| h[pi].get(n)).filter(|e| e.iter().all(|x| *x >= 0.0)).collect();
                let k = alive.len() as u64;
                table.push(Row::new(
                    g,
                    p.label(),
                    "alive_fraction",
                    proportion_ci(k, spec.seeds.len() as u64),
                    spec.seeds.len() as u64,
                ));
                let mut names: Vec<String> = ["e_min_j", "e_max_j", "e_mean_j"].map(String::from).to_vec();
                names.extend((1..=m).map(|b| format!("e_bs{b}_j")));
                for (k_metric, name) in names.iter().enumerate() {
                    if alive.is_empty() {
                        table.push(Row::failed(g, p.label(), name));
                    } else {
                        let xs: Vec<f64> = alive.iter().map(|e| energy_metric(e, k_metric)).collect();
                        table.push(Row::new(g, p.label(), name, mean_ci(&xs), k));
                    }
                }
            }
        }
        Ok(ExperimentOutcome { table, summary: Vec::new(), checks: Vec::new() })
    }

    fn overhead_vs_rate(&self) -> Result<ExperimentOutcome> {
        let spec = self.spec;
        let base = &spec.base;
        let slots = ((OVERHEAD_WARMUP_S + base.sim_hours * 3600.0) / base.tau_s).ceil() as usize + 1;
        let tasks: Vec<(usize, u64)> =
            (0..spec.grid.len()).flat_map(|g| spec.seeds.iter().map(move |&s| (g, s))).collect();
        type Counts = Vec<Option<basehop_protocol::sim::OverheadReport>>;
        let results: Vec<Counts> = tasks
            .par_iter()
            .map(|&(gi, seed)| -> Result<Counts> {
                let mut b = base.clone();
                b.data_rate_pps = spec.grid[gi];
                let inst = NetworkInstance::generate(&b, &spec.solar, &mut stream(seed, 0))?;
                if inst.bs_count == 0 {
                    return Ok(vec![None; spec.policies.len()]);
                }
                let irr = self.irradiance(seed, slots, inst.bs_count)?;
                let trace = recharge_trace(&irr, inst.bs_eta(), spec.solar.gamma, b.panel_cm2, slots)?;
                spec.policies
                    .iter()
                    .map(|&p| {
                        let policy = match p {
                            PolicyName::Hef => ProtocolPolicy::Hef,
                            PolicyName::Rr => ProtocolPolicy::Rr,
                            _ => ProtocolPolicy::Fixed,
                        };
                        let s = inst.scenario(&b, policy, seed);
                        let mut sim = Simulator::new(&s)?.with_recharge(trace.clone())?.with_logging(false);
                        sim.run_until_s(OVERHEAD_WARMUP_S);
                        let before = sim.stats().clone();
                        sim.run_until_s(OVERHEAD_WARMUP_S + b.sim_hours * 3600.0);
                        Ok(Some(measure_overhead(&before, sim.stats(), b.sim_hours)))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;

        let mut table = ResultTable::new();
        let mut checks = Vec::new();
        let n_seeds = spec.seeds.len();
        for (gi, &g) in spec.grid.iter().enumerate() {
            let cell = &results[gi * n_seeds..(gi + 1) * n_seeds];
            let mut control_by_policy = Vec::new();
            for (pi, p) in spec.policies.iter().enumerate() {
                let reports: Vec<_> = cell.iter().filter_map(|r| r[pi].as_ref()).collect();
                if reports.is_empty() {
                    table.push(Row::failed(g, p.label(), "control_share_tx"));
                    continue;
                }
                let n = reports.len() as u64;
                for k in MessageKind::ALL {
                    let tx: Vec<f64> = reports.iter().map(|r| r.transmitted_per_hour[&k]).collect();
                    table.push(Row::new(g, p.label(), &format!("tx_per_hour_{}", k.label()), mean_ci(&tx), n));
                }
                for k in MessageKind::ALL {
                    let o: Vec<f64> = reports.iter().map(|r| r.originated_per_hour[&k]).collect();
                    table.push(Row::new(g, p.label(), &format!("originated_per_hour_{}", k.label()), mean_ci(&o), n));
                }
                let share = |c: f64, d: f64| if c + d > 0.0 { c / (c + d) } else { 0.0 };
                let tx: Vec<f64> =
                    reports.iter().map(|r| share(r.control_transmitted(), r.data_transmitted())).collect();
                let or: Vec<f64> = reports.iter().map(|r| share(r.control_originated(), r.data_originated())).collect();
                table.push(Row::new(g, p.label(), "control_share_tx", mean_ci(&tx), n));
                table.push(Row::new(g, p.label(), "control_share_originated", mean_ci(&or), n));
                let total: Vec<f64> = reports.iter().map(|r| r.transmitted_per_hour.values().sum()).collect();
                table.push(Row::new(g, p.label(), "packets_per_hour", mean_ci(&total), n));
                let control: f64 = reports.iter().map(|r| r.control_originated()).sum();
                control_by_policy.push((*p, control));
                if *p == PolicyName::Fixed {
                    let handover: f64 = reports
                        .iter()
                        .map(|r| {
                            [MessageKind::BsAdvert, MessageKind::BsUp, MessageKind::BsUpAck]
                                .iter()
                                .map(|k| r.originated_per_hour[k])
                                .sum::<f64>()
                        })
                        .sum();
                    checks.push(Check::new(
                        format!("FIXED sends no handover traffic at rate {g}"),
                        Severity::Warning,
                        handover == 0.0,
                        format!("{handover} per hour"),
                    ));
                }
            }
            let hef = control_by_policy.iter().find(|c| c.0 == PolicyName::Hef).map(|c| c.1);
            let rr = control_by_policy.iter().find(|c| c.0 == PolicyName::Rr).map(|c| c.1);
            if let (Some(h), Some(r)) = (hef, rr) {
                checks.push(Check::new(
                    format!("HEF and RR originate equal control traffic at rate {g}"),
                    Severity::Warning,
                    h == r,
                    format!("HEF {h}, RR {r}"),
                ));
            }
        }
        Ok(ExperimentOutcome { table, summary: Vec::new(), checks })
    }

    /// Random networks per seed, generated once and reused across the grid.
    fn condition_instances(&self, seed: u64) -> Result<Vec<NetworkInstance>> {
        let base = &self.spec.base;
        let mut rng = stream(seed, 0);
        let mut plain = base.clone();
        plain.require_conditions = false;
        (0..base.instances).map(|_| NetworkInstance::generate(&plain, &self.spec.solar, &mut rng)).collect()
    }

    fn cfr_vs_gprs(&self) -> Result<ExperimentOutcome> {
        let spec = self.spec;
        let per_seed: Vec<Vec<u64>> = spec
            .seeds
            .par_iter()
            .map(|&seed| -> Result<Vec<u64>> {
                let insts = self.condition_instances(seed)?;
                spec.grid
                    .iter()
                    .map(|&g| {
                        let mut b = spec.base.clone();
                        b.gprs_interval_s = g;
                        let params = energy_params(&b);
                        let mut ok = 0;
                        for inst in insts.iter().filter(|i| i.bs_count > 0) {
                            ok += u64::from(d4_holds(&inst.cost_matrix(&params)?));
                        }
                        Ok(ok)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let total = (spec.base.instances * spec.seeds.len()) as u64;
        let mut table = ResultTable::new();
        let mut cfr = Vec::new();
        for (gi, &g) in spec.grid.iter().enumerate() {
            if spec.base.bs_count == 0 {
                table.push(Row::failed(g, NONE, "cfr"));
                continue;
            }
            let ok: u64 = per_seed.iter().map(|s| s[gi]).sum();
            let stat = proportion_ci(ok, total);
            cfr.push((g, stat.0));
            table.push(Row::new(g, NONE, "cfr", stat, total));
        }
        cfr.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bad: Vec<String> =
            cfr.windows(2).filter(|w| w[1].1 > w[0].1).map(|w| format!("{} -> {}", w[0].0, w[1].0)).collect();
        let checks =
            vec![Check::new("CFR non-increasing in GPRS interval", Severity::Warning, bad.is_empty(), bad.join("; "))];
        Ok(ExperimentOutcome { table, summary: Vec::new(), checks })
    }

    fn d3_requirement(&self) -> Result<ExperimentOutcome> {
        let spec = self.spec;
        let irr_mean = |inst: &NetworkInstance| -> Vec<f64> {
            match &self.irradiance_file {
                Some(irr) => (0..inst.bs_count).map(|m| irr.mean(m)).collect(),
                None => vec![mean_irradiance(&spec.solar); inst.bs_count],
            }
        };
        // per seed, per grid point: (closed-form areas, largest disagreement)
        let per_seed: Vec<Vec<(Vec<f64>, f64)>> = spec
            .seeds
            .par_iter()
            .map(|&seed| -> Result<_> {
                let insts = self.condition_instances(seed)?;
                if let Some(irr) = &self.irradiance_file {
                    self.irradiance(seed, 1, spec.base.bs_count)?;
                    let _ = irr;
                }
                spec.grid
                    .iter()
                    .map(|&g| {
                        let mut b = spec.base.clone();
                        b.data_rate_pps = g;
                        let params = energy_params(&b);
                        let mut areas = Vec::new();
                        let mut gap: f64 = 0.0;
                        for inst in insts.iter().filter(|i| i.bs_count > 0) {
                            let c = inst.cost_matrix(&params)?;
                            let irr = irr_mean(inst);
                            // Per-station irradiance folds into the efficiency.
                            let eff: Vec<f64> = inst.bs_eta().iter().zip(&irr).map(|(e, i)| e * i).collect();
                            let closed = d3_area_closed_form(&c, &eff, spec.solar.gamma, 1.0);
                            let bisect = d3_area_bisection(&c, &eff, spec.solar.gamma, 1.0, 1e-10)?;
                            if closed.is_finite() || bisect.is_finite() {
                                gap = gap.max((closed - bisect).abs() / closed.max(1e-12));
                            }
                            areas.push(closed);
                        }
                        Ok((areas, gap))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut table = ResultTable::new();
        let mut checks = Vec::new();
        let mut means = Vec::new();
        for (gi, &g) in spec.grid.iter().enumerate() {
            let areas: Vec<f64> = per_seed.iter().flat_map(|s| s[gi].0.iter().copied()).collect();
            if areas.is_empty() {
                table.push(Row::failed(g, NONE, "min_area_cm2"));
                continue;
            }
            let stat = mean_ci(&areas);
            means.push((g, stat.0));
            table.push(Row::new(g, NONE, "min_area_cm2", stat, areas.len() as u64));
            let gap = per_seed.iter().map(|s| s[gi].1).fold(0.0, f64::max);
            table.push(Row::new(g, NONE, "bisection_rel_gap", (gap, gap, gap), areas.len() as u64));
            checks.push(Check::new(
                format!("bisection matches closed form at rate {g}"),
                Severity::Assertion,
                gap <= 1e-6,
                format!("largest relative gap {gap:e}"),
            ));
        }
        means.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bad: Vec<String> =
            means.windows(2).filter(|w| w[1].1 < w[0].1).map(|w| format!("{} -> {}", w[0].0, w[1].0)).collect();
        checks.push(Check::new(
            "required area non-decreasing in rate",
            Severity::Warning,
            bad.is_empty(),
            bad.join("; "),
        ));
        Ok(ExperimentOutcome { table, summary: Vec::new(), checks })
    }

    fn theorem_validation(&self) -> Result<ExperimentOutcome> {
        let spec = self.spec;
        let t = &spec.theorem;
        let c = CostMatrix::from_rows_relaxed(t.cost.clone())?;
        let generator = match t.generator {
            GeneratorChoice::IidUniform => GeneratorSpec::iid_uniform(t.sbar.clone(), t.bound_s)?,
            GeneratorChoice::MartingaleAr => GeneratorSpec::martingale_ar(t.sbar.clone(), t.bound_s, t.persistence)?,
        };
        let r = residual_matrix(&c, &t.sbar)?;
        let f_star = optimal_solution(&r)?.f_star;
        let trials = spec.base.trials;
        let runs = spec
            .seeds
            .iter()
            .map(|&seed| {
                if f_star > 0.0 {
                    validate_theorem2_concentration(&c, &generator, t.tau, &spec.grid, t.delta, trials, seed)
                } else {
                    validate_theorem2_unbounded(&c, &generator, t.tau, &spec.grid, t.k_const, trials, seed)
                }
            })
            .collect::<basehop_core::Result<Vec<_>>>()?;
        let metric = if f_star > 0.0 { "concentration_prob" } else { "unbounded_prob" };
        let mut table = ResultTable::new();
        let mut probs = Vec::new();
        for (gi, &g) in spec.grid.iter().enumerate() {
            let succ: u64 = runs.iter().map(|r| r.points[gi].successes).sum();
            let n = trials * runs.len() as u64;
            let stat = proportion_ci(succ, n);
            probs.push((g, stat));
            table.push(Row::new(g, "HEF", metric, stat, n));
        }
        probs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bad: Vec<String> = probs
            .windows(2)
            .filter(|w| {
                let (a, b) = (w[0].1, w[1].1);
                let slack = (a.2 - a.1).max(b.2 - b.1) / 2.0;
                b.0 + slack < a.0
            })
            .map(|w| format!("{} -> {}", w[0].0, w[1].0))
            .collect();
        let checks =
            vec![Check::new("probability non-decreasing in e0", Severity::Warning, bad.is_empty(), bad.join("; "))];
        let summary = vec![SummaryRow { policy: LP.into(), metric: "f_star".into(), value: f_star }];
        Ok(ExperimentOutcome { table, summary, checks })
    }
}

/// Minimum, maximum, mean, then station `k - 3` for `k >= 3`.
fn energy_metric(e: &[f64], k: usize) -> f64 {
    match k {
        0 => e.iter().copied().fold(f64::INFINITY, f64::min),
        1 => e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        2 => e.iter().sum::<f64>() / e.len() as f64,
        _ => e[k - 3],
    }
}

/// Optimal long-run drain rate of the slot model, recharge taken at its mean.
fn lp_rate(c: &CostMatrix, trace: &RechargeTrace) -> Result<f64> {
    let sbar = match trace.mean() {
        Some(m) => m.to_vec(),
        None => trace.empirical_mean(),
    };
    let r = residual_matrix(c, &sbar)?;
    Ok(optimal_solution(&r)?.f_star)
}
