//! Figure runners and the closed-form oracles.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotics::{asymptotic_sse, moment_set, BoundTable, MomentSet};
use crate::channel::{unit_channels, BlockKey, UnitChannels};
use crate::config::RunConfig;
use crate::error::{LisError, Result};
use crate::harness::engine::{Csi, Scope, UnitSample};
use crate::harness::stats::{mean, pairwise_sum, variance, Curve, Sample};
use crate::optimize::{bound_scheduling, maximize_pilot_length, optimal_num_devices};
use crate::rng::{substream, tag};
use crate::scenario::{place_devices, place_pool, AntennaLattice, Deployment, DeviceSnr, InterLisFading, SystemConfig};
use crate::sinr::{prelog, rate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig4,
    Fig5,
    Fig6,
    Fig6b,
    Fig7,
    Fig8,
    Fig9,
    Oracle,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::Fig4,
        ExperimentId::Fig5,
        ExperimentId::Fig6,
        ExperimentId::Fig6b,
        ExperimentId::Fig7,
        ExperimentId::Fig8,
        ExperimentId::Fig9,
        ExperimentId::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Fig5 => "fig5",
            ExperimentId::Fig6 => "fig6",
            ExperimentId::Fig6b => "fig6b",
            ExperimentId::Fig7 => "fig7",
            ExperimentId::Fig8 => "fig8",
            ExperimentId::Fig9 => "fig9",
            ExperimentId::Oracle => "oracle",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = LisError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| LisError::config("experiment", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub run: RunConfig,
}

impl ExperimentSpec {
    /// Default parameters of an experiment. Desk scale keeps each run within
    /// minutes on one core; `full` raises realization and placement counts.
    pub fn preset(id: ExperimentId, full: bool) -> ExperimentSpec {
        let mut run = RunConfig::default();
        let (s, e) = (&mut run.system, &mut run.experiment);
        e.antennas = vec![100, 400, 900];
        match id {
            ExperimentId::Fig4 => {
                s.devices = 8;
                e.antennas = vec![36, 100, 400, 900];
                e.placements = if full { 10 } else { 2 };
                e.blocks = if full { 2000 } else { 100 };
                e.analytic_blocks = Some(0);
            }
            ExperimentId::Fig5 | ExperimentId::Fig6 | ExperimentId::Fig6b => {
                if id != ExperimentId::Fig5 {
                    s.inter_lis = InterLisFading::Nlos;
                }
                if full {
                    e.antennas = vec![100, 196, 289, 400, 529, 676, 900];
                }
                e.placements = if full { 10 } else { 4 };
                e.blocks = if full { 50 } else { 5 };
                e.analytic_blocks = Some(if full { 10 } else { 2 });
            }
            ExperimentId::Fig7 => {
                s.devices = 8;
                e.placements = if full { 10 } else { 2 };
                e.blocks = if full { 50 } else { 5 };
                e.analytic_blocks = Some(2);
            }
            ExperimentId::Fig8 | ExperimentId::Fig9 => {
                s.coherence_len = 50;
                e.antennas = match (id, full) {
                    (ExperimentId::Fig8, _) => vec![400],
                    (_, false) => vec![100, 400],
                    (_, true) => vec![100, 400, 900],
                };
                e.placements = if full { 20 } else { 10 };
                e.blocks = if full { 10 } else { 3 };
            }
            ExperimentId::Oracle => {
                s.lis_count = 2;
                s.devices = 2;
                s.nlos_paths = 4;
                e.antennas = vec![16, 100];
                e.placements = 1;
                e.blocks = 1;
                e.oracle_samples = if full { 100_000 } else { 10_000 };
            }
        }
        ExperimentSpec { id, run }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if self.run.experiment.antennas.is_empty() {
            return Err(LisError::config("experiment.antennas", "at least one antenna count is required"));
        }
        Ok(())
    }
}

/// Curves and auxiliary results of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub id: ExperimentId,
    pub curves: Vec<Curve>,
    pub notes: BTreeMap<String, Value>,
}

impl ExperimentOutput {
    pub fn curve(&self, label: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.label == label)
    }
}

pub type WorkerPool = rayon::ThreadPool;

pub fn worker_pool(workers: usize) -> Result<WorkerPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LisError::Degenerate(format!("cannot start worker pool: {e}")))
}

/// Runs an experiment on a pool of `workers` threads. Results do not depend on `workers`.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentOutput> {
    spec.validate()?;
    worker_pool(workers)?.install(|| match spec.id {
        ExperimentId::Fig4 => run_se_variance(spec),
        ExperimentId::Fig5 | ExperimentId::Fig6 => run_ergodic_sse(spec),
        ExperimentId::Fig6b => run_csi_comparison(spec),
        ExperimentId::Fig7 => run_pilot_sweep(spec),
        ExperimentId::Fig8 | ExperimentId::Fig9 => run_k_sweep(spec),
        ExperimentId::Oracle => run_moment_oracle(spec),
    })
}

/// Channel context of one placement at one antenna count.
pub struct PlacementContext<'a> {
    pub cfg: SystemConfig,
    pub dep: &'a Deployment,
    pub snrs: Vec<Vec<DeviceSnr>>,
    pub lattice: AntennaLattice,
}

impl<'a> PlacementContext<'a> {
    pub fn new(cfg: SystemConfig, dep: &'a Deployment) -> Result<Self> {
        cfg.validate()?;
        let snrs = dep.snrs(&cfg)?;
        let lattice = AntennaLattice::new(&cfg)?;
        Ok(PlacementContext { cfg, dep, snrs, lattice })
    }

    pub fn unit(&self, key: BlockKey, n: usize, k: usize) -> Result<UnitChannels> {
        unit_channels(&self.cfg, self.dep, &self.snrs, &self.lattice, key, n, k)
    }
}

/// Placement `p` of a run with `K` devices per LIS.
pub fn placement(run: &RunConfig, p: u64) -> Result<Deployment> {
    place_devices(&run.system, &run.layout, &mut substream(run.system.seed, &[tag::PLACEMENT, p]))
}

fn block_key(run: &RunConfig, p: u64, b: u64) -> BlockKey {
    BlockKey { seed: run.system.seed, placement: p, block: b }
}

fn analytic_block(run: &RunConfig, b: u64) -> bool {
    run.experiment.analytic_blocks.is_none_or(|a| b < a)
}

/// `(placement, block)` pairs in output order.
fn tasks(run: &RunConfig) -> Vec<(u64, u64)> {
    let e = &run.experiment;
    (0..e.placements).flat_map(|p| (0..e.blocks).map(move |b| (p, b))).collect()
}

/// One block of LIS 0 at the configured pilot length.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockValues {
    /// SSE: multi imperfect, single imperfect, multi perfect, single perfect.
    pub mc: [f64; 4],
    /// Per-device SE, imperfect CSI: multi, single.
    pub se: [Vec<f64>; 2],
    /// Deterministic multi, single; bound multi, single (`+inf` if unbounded).
    pub analytic: Option<[f64; 4]>,
}

pub fn ergodic_block(ctx: &PlacementContext, key: BlockKey, analytic: bool) -> Result<BlockValues> {
    let devices = ctx.cfg.devices;
    let t = ctx.cfg.pilot_length() as f64;
    let pre = prelog(t, ctx.cfg.coherence_len as f64);
    let mut se = [Vec::with_capacity(devices), Vec::with_capacity(devices)];
    let mut perfect = [Vec::with_capacity(devices), Vec::with_capacity(devices)];
    let mut moments = [Vec::new(), Vec::new()];
    for k in 0..devices {
        let u = ctx.unit(key, 0, k)?;
        let s = UnitSample::keyed(&u, key);
        for (i, scope) in [Scope::Multi, Scope::Single].into_iter().enumerate() {
            se[i].push(pre * rate(s.evaluate(t, Csi::Imperfect, scope, devices).gamma));
            perfect[i].push(pre * rate(s.evaluate(t, Csi::Perfect, scope, devices).gamma));
        }
        if analytic {
            moments[0].push(moment_set(&u));
            moments[1].push(moment_set(&u.single_lis()));
        }
    }
    let analytic = if analytic {
        let multi = asymptotic_sse(&ctx.cfg, ctx.dep, &moments[0], t)?;
        let single = asymptotic_sse(&ctx.cfg, ctx.dep, &moments[1], t)?;
        Some([multi.sse_bar, single.sse_bar, multi.sse_hat, single.sse_hat])
    } else {
        None
    };
    Ok(BlockValues {
        mc: [pairwise_sum(&se[0]), pairwise_sum(&se[1]), pairwise_sum(&perfect[0]), pairwise_sum(&perfect[1])],
        se,
        analytic,
    })
}

/// Ergodic blocks of every `(placement, block)` at each antenna count.
fn ergodic_sweep(run: &RunConfig) -> Result<Vec<(usize, Vec<((u64, u64), BlockValues)>)>> {
    let deps: Vec<Deployment> = (0..run.experiment.placements).map(|p| placement(run, p)).collect::<Result<_>>()?;
    let jobs = tasks(run);
    let mut out = Vec::new();
    for &m in &run.experiment.antennas {
        let cfg = run.system.with_antennas(m);
        let ctxs: Vec<PlacementContext> = deps.iter().map(|d| PlacementContext::new(cfg.clone(), d)).collect::<Result<_>>()?;
        let blocks: Vec<BlockValues> = jobs
            .par_iter()
            .map(|&(p, b)| ergodic_block(&ctxs[p as usize], block_key(run, p, b), analytic_block(run, b)))
            .collect::<Result<_>>()?;
        out.push((m, jobs.iter().copied().zip(blocks).collect()));
    }
    Ok(out)
}

fn samples<F: Fn(&BlockValues) -> Option<f64>>(blocks: &[((u64, u64), BlockValues)], f: F) -> Vec<Sample> {
    blocks
        .iter()
        .filter_map(|((p, b), v)| f(v).map(|value| Sample { placement: *p, block: *b, value }))
        .collect()
}

/// Variance across realizations of each device's SE, single- and multi-LIS.
pub fn run_se_variance(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let sweep = ergodic_sweep(&spec.run)?;
    let mut curves = [Curve::new("multi-LIS"), Curve::new("single-LIS")];
    for (m, blocks) in &sweep {
        for (i, curve) in curves.iter_mut().enumerate() {
            let mut vals = Vec::new();
            for p in 0..spec.run.experiment.placements {
                let per: Vec<&BlockValues> = blocks.iter().filter(|((bp, _), _)| *bp == p).map(|(_, v)| v).collect();
                for k in 0..spec.run.system.devices {
                    let se: Vec<f64> = per.iter().map(|v| v.se[i][k]).collect();
                    vals.push(Sample { placement: p, block: k as u64, value: variance(&se) });
                }
            }
            curve.push(*m as f64, vals);
        }
    }
    Ok(ExperimentOutput { id: spec.id, curves: curves.to_vec(), notes: BTreeMap::new() })
}

/// Monte Carlo, deterministic and bound SSE of LIS 0 against `M`, single- and multi-LIS.
pub fn run_ergodic_sse(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let sweep = ergodic_sweep(&spec.run)?;
    let labels = [
        "multi-LIS Monte Carlo",
        "single-LIS Monte Carlo",
        "multi-LIS deterministic",
        "single-LIS deterministic",
        "multi-LIS LOS bound",
        "single-LIS LOS bound",
    ];
    let mut curves: Vec<Curve> = labels.iter().map(|l| Curve::new(l)).collect();
    let mut gaps = Vec::new();
    for (m, blocks) in &sweep {
        for i in 0..2 {
            curves[i].push(*m as f64, samples(blocks, |v| Some(v.mc[i])));
            curves[2 + i].push(*m as f64, samples(blocks, |v| v.analytic.map(|a| a[i])));
            curves[4 + i].push(*m as f64, samples(blocks, |v| v.analytic.map(|a| a[2 + i]).filter(|x| x.is_finite())));
        }
        let unbounded: Vec<usize> = (0..2)
            .map(|i| blocks.iter().filter(|(_, v)| v.analytic.is_some_and(|a| a[2 + i].is_infinite())).count())
            .collect();
        let at = |c: &Curve| c.points.last().map(|p| p.summary.mean).unwrap_or(f64::NAN);
        gaps.push(json!({
            "antennas": m,
            "monte_carlo_single_minus_multi": at(&curves[1]) - at(&curves[0]),
            "deterministic_single_minus_multi": at(&curves[3]) - at(&curves[2]),
            "bound_single_minus_multi": at(&curves[5]) - at(&curves[4]),
            "unbounded_blocks_multi_single": unbounded,
        }));
    }
    let mut notes = BTreeMap::new();
    notes.insert("gaps".to_string(), Value::Array(gaps));
    if spec.id == ExperimentId::Fig5 {
        notes.insert(
            "reference_gaps_m900_k20".to_string(),
            json!({"monte_carlo_single_minus_multi": 33.0, "bound_single_minus_multi": 36.0}),
        );
    }
    Ok(ExperimentOutput { id: spec.id, curves, notes })
}

/// Perfect- against imperfect-CSI ergodic SSE, single- and multi-LIS.
pub fn run_csi_comparison(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut run = spec.run.clone();
    run.experiment.analytic_blocks = Some(0);
    let sweep = ergodic_sweep(&run)?;
    let labels = [
        "multi-LIS imperfect CSI",
        "single-LIS imperfect CSI",
        "multi-LIS perfect CSI",
        "single-LIS perfect CSI",
    ];
    let mut curves: Vec<Curve> = labels.iter().map(|l| Curve::new(l)).collect();
    for (m, blocks) in &sweep {
        for (i, c) in curves.iter_mut().enumerate() {
            c.push(*m as f64, samples(blocks, |v| Some(v.mc[i])));
        }
    }
    let mut notes = BTreeMap::new();
    notes.insert("reference_level_m900_k20".to_string(), json!(110.0));
    Ok(ExperimentOutput { id: spec.id, curves, notes })
}

/// Pilot sweep summary at one antenna count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSweepSummary {
    pub antennas: usize,
    pub devices: usize,
    pub mc_at_k: f64,
    pub mc_max: f64,
    pub mc_argmax: usize,
    pub deterministic_at_k: f64,
    pub deterministic_max: f64,
    pub deterministic_argmax: usize,
    /// Golden-section optimum of the block-averaged deterministic SSE.
    pub t_opt: usize,
    pub t_opt_continuous: f64,
}

/// Ergodic SSE of LIS 0 against the pilot length, with the `t = K` point and `t_opt`.
pub fn run_pilot_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let run = &spec.run;
    let (k, tt) = (run.system.devices, run.system.coherence_len);
    let ts: Vec<usize> = if run.experiment.pilot_lengths.is_empty() {
        (k..=tt).collect()
    } else {
        run.experiment.pilot_lengths.clone()
    };
    if !ts.contains(&k) {
        return Err(LisError::config("experiment.pilot_lengths", "must include t = K"));
    }
    let deps: Vec<Deployment> = (0..run.experiment.placements).map(|p| placement(run, p)).collect::<Result<_>>()?;
    let jobs = tasks(run);
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    for &m in &run.experiment.antennas {
        let cfg = run.system.with_antennas(m);
        let ctxs: Vec<PlacementContext> = deps.iter().map(|d| PlacementContext::new(cfg.clone(), d)).collect::<Result<_>>()?;
        let blocks: Vec<(Vec<f64>, Option<Vec<MomentSet>>)> = jobs
            .par_iter()
            .map(|&(p, b)| {
                let ctx = &ctxs[p as usize];
                let key = block_key(run, p, b);
                let mut unit_samples = Vec::with_capacity(k);
                let mut moments = Vec::new();
                for d in 0..k {
                    let u = ctx.unit(key, 0, d)?;
                    unit_samples.push(UnitSample::keyed(&u, key));
                    if analytic_block(run, b) {
                        moments.push(moment_set(&u));
                    }
                }
                let mc = ts
                    .iter()
                    .map(|&t| {
                        let t = t as f64;
                        let rates: Vec<f64> =
                            unit_samples.iter().map(|s| rate(s.evaluate(t, Csi::Imperfect, Scope::Multi, k).gamma)).collect();
                        prelog(t, tt as f64) * pairwise_sum(&rates)
                    })
                    .collect();
                Ok((mc, analytic_block(run, b).then_some(moments)))
            })
            .collect::<Result<_>>()?;
        let analytic: Vec<(u64, &Vec<MomentSet>)> =
            jobs.iter().zip(&blocks).filter_map(|((p, _), (_, ms))| ms.as_ref().map(|ms| (*p, ms))).collect();
        let deterministic = |t: f64| -> f64 {
            let v: Vec<f64> = analytic
                .iter()
                .map(|(p, ms)| asymptotic_sse(&cfg, &deps[*p as usize], ms, t).map(|a| a.sse_bar).unwrap_or(f64::NAN))
                .collect();
            mean(&v)
        };
        let mut mc_curve = Curve::new(&format!("Monte Carlo M={m}"));
        let mut th_curve = Curve::new(&format!("deterministic M={m}"));
        for (i, &t) in ts.iter().enumerate() {
            let s: Vec<Sample> =
                jobs.iter().zip(&blocks).map(|(&(p, b), (mc, _))| Sample { placement: p, block: b, value: mc[i] }).collect();
            mc_curve.push(t as f64, s);
            let s: Vec<Sample> = jobs
                .iter()
                .zip(&blocks)
                .filter(|(_, (_, ms))| ms.is_some())
                .map(|(&(p, b), (_, ms))| Sample {
                    placement: p,
                    block: b,
                    value: asymptotic_sse(&cfg, &deps[p as usize], ms.as_ref().unwrap(), t as f64)
                        .map(|a| a.sse_bar)
                        .unwrap_or(f64::NAN),
                })
                .collect();
            th_curve.push(t as f64, s);
        }
        let argmax = |c: &Curve| {
            c.points
                .iter()
                .map(|p| (p.summary.sweep_value as usize, p.summary.mean))
                .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
        };
        let (mc_t, mc_max) = argmax(&mc_curve);
        let at_k = |c: &Curve| c.at(k as f64).map(|s| s.mean).unwrap_or(f64::NAN);
        let (th_t, th_max, t_opt, t_cont) = if analytic.is_empty() {
            (0, f64::NAN, 0, f64::NAN)
        } else {
            let sol = maximize_pilot_length(deterministic, k, tt)?;
            let grid = sol.curve.iter().fold((0, f64::MIN), |a, &(t, v)| if v > a.1 { (t, v) } else { a });
            (grid.0, grid.1, sol.t_opt, sol.t_opt_continuous)
        };
        summaries.push(PilotSweepSummary {
            antennas: m,
            devices: k,
            mc_at_k: at_k(&mc_curve),
            mc_max,
            mc_argmax: mc_t,
            deterministic_at_k: at_k(&th_curve),
            deterministic_max: th_max,
            deterministic_argmax: th_t,
            t_opt,
            t_opt_continuous: t_cont,
        });
        curves.push(mc_curve);
        if !analytic.is_empty() {
            curves.push(th_curve);
        }
    }
    let mut notes = BTreeMap::new();
    notes.insert("pilot".to_string(), serde_json::to_value(&summaries)?);
    Ok(ExperimentOutput { id: spec.id, curves, notes })
}

/// Scheduling results of one placement of the candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSchedule {
    pub antennas: usize,
    pub placement: u64,
    /// Candidate devices placed per LIS.
    pub pool: usize,
    /// Device count chosen from the bound objective.
    pub k_opt: usize,
    /// Bound objective for `K = 1..=pool`; `None` where unbounded.
    pub bound_curve: Vec<Option<f64>>,
    /// Monte Carlo network SSE per block for `K = 1..=pool`.
    pub mc_blocks: Vec<Vec<f64>>,
    /// Block average of `mc_blocks`.
    pub mc_curve: Vec<f64>,
    /// Argmax of `mc_curve`.
    pub mc_best_k: usize,
    /// Device count chosen with the mean interference instead of the bound.
    pub mean_interference_k: Option<usize>,
}

impl PlacementSchedule {
    pub fn mc_at(&self, k: usize) -> Option<f64> {
        (k >= 1).then(|| self.mc_curve.get(k - 1).copied()).flatten()
    }
}

/// Places the candidate pool of placement `p`, solves the scheduling problem on
/// the bound and evaluates the Monte Carlo network SSE for every `K` with `t = K`.
pub fn schedule_placement(run: &RunConfig, antennas: usize, p: u64) -> Result<PlacementSchedule> {
    let tt = run.system.coherence_len;
    let base = SystemConfig { antennas, devices: 1, pilot_len: None, ..run.system.clone() };
    let max = run.experiment.max_devices.unwrap_or(tt).min(tt);
    let dep = place_pool(&base, &run.layout, max, &mut substream(run.system.seed, &[tag::POOL, p]))?;
    let pool = dep.devices_per_lis();
    let n_lis = dep.lis_count();
    let ctx = PlacementContext::new(SystemConfig { devices: pool, ..base }, &dep)?;
    let units: Vec<(usize, usize)> = (0..n_lis).flat_map(|n| (0..pool).map(move |k| (n, k))).collect();
    let tables: Vec<BoundTable> = units
        .par_iter()
        .map(|&(n, k)| BoundTable::new(&ctx.cfg, &dep, &ctx.snrs, &ctx.lattice, n, k))
        .collect::<Result<_>>()?;
    let bound = bound_scheduling(&ctx.cfg, &tables, pool)?;

    let blocks = run.experiment.blocks;
    let jobs: Vec<(u64, usize, usize)> = (0..blocks).flat_map(|b| units.iter().map(move |&(n, k)| (b, n, k))).collect();
    let rates: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(b, n, k)| {
            let key = BlockKey { seed: run.system.seed, placement: p, block: b };
            let s = UnitSample::keyed(&ctx.unit(key, n, k)?, key);
            Ok((1..=pool)
                .map(|kk| if k < kk { rate(s.evaluate(kk as f64, Csi::Imperfect, Scope::Multi, kk).gamma) } else { 0.0 })
                .collect())
        })
        .collect::<Result<_>>()?;
    let per_block = units.len();
    let mc_blocks: Vec<Vec<f64>> = rates
        .chunks(per_block)
        .map(|unit_rates| {
            (1..=pool)
                .map(|kk| {
                    let col: Vec<f64> = unit_rates.iter().map(|r| r[kk - 1]).collect();
                    prelog(kk as f64, tt as f64) * pairwise_sum(&col) / n_lis as f64
                })
                .collect()
        })
        .collect();
    let mc_curve: Vec<f64> = (0..pool)
        .map(|i| mean(&mc_blocks.iter().map(|b| b[i]).collect::<Vec<_>>()))
        .collect();
    let mc_best_k = mc_curve.iter().enumerate().fold((0, f64::MIN), |a, (i, v)| if *v > a.1 { (i + 1, *v) } else { a }).0;

    let mean_interference_k = if run.experiment.cross_check {
        let key = BlockKey { seed: run.system.seed, placement: p, block: 0 };
        let moments: Vec<MomentSet> = units.par_iter().map(|&(n, k)| Ok(moment_set(&ctx.unit(key, n, k)?))).collect::<Result<_>>()?;
        let l = crate::asymptotics::effective_half_side(&ctx.cfg);
        let sol = optimal_num_devices(tt, n_lis, pool, |kk| {
            let mut g = vec![Vec::with_capacity(kk); n_lis];
            for ms in moments.iter().filter(|ms| ms.device < kk) {
                let pb = crate::asymptotics::p_bar(antennas, crate::asymptotics::p_nk(dep.device(ms.lis, ms.device)[2], l), l);
                g[ms.lis].push(ms.snr.data * pb / ms.mu_i_bar_limited(kk as f64, kk));
            }
            Ok(g)
        })?;
        Some(sol.k_opt)
    } else {
        None
    };

    Ok(PlacementSchedule {
        antennas,
        placement: p,
        pool,
        k_opt: bound.k_opt,
        bound_curve: bound.nse_curve.iter().map(|&(_, v)| v.is_finite().then_some(v)).collect(),
        mc_blocks,
        mc_curve,
        mc_best_k,
        mean_interference_k,
    })
}

/// Network SSE against `K` (per antenna count) and against `M` for the searched,
/// scheduled and fixed device counts.
pub fn run_k_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let run = &spec.run;
    let fixed = run.experiment.fixed_devices;
    let mut curves = Vec::new();
    let mut vs_m = [
        Curve::new("searched optimum K"),
        Curve::new("scheduled K_opt"),
        Curve::new(&format!("fixed K={fixed}")),
    ];
    let mut all = Vec::new();
    for &m in &run.experiment.antennas {
        let schedules: Vec<PlacementSchedule> =
            (0..run.experiment.placements).map(|p| schedule_placement(run, m, p)).collect::<Result<_>>()?;
        let common = schedules.iter().map(|s| s.pool).min().unwrap_or(0);
        if spec.id == ExperimentId::Fig8 {
            let mut mc = Curve::new(&format!("Monte Carlo NSE M={m}"));
            let mut bd = Curve::new(&format!("bound NSE M={m}"));
            for kk in 1..=common {
                let s: Vec<Sample> = schedules
                    .iter()
                    .flat_map(|s| {
                        s.mc_blocks
                            .iter()
                            .enumerate()
                            .map(move |(b, v)| Sample { placement: s.placement, block: b as u64, value: v[kk - 1] })
                    })
                    .collect();
                mc.push(kk as f64, s);
                let s: Vec<Sample> = schedules
                    .iter()
                    .filter_map(|s| s.bound_curve[kk - 1].map(|value| Sample { placement: s.placement, block: 0, value }))
                    .collect();
                bd.push(kk as f64, s);
            }
            curves.push(mc);
            curves.push(bd);
        }
        let per = |f: &dyn Fn(&PlacementSchedule) -> Option<f64>| -> Vec<Sample> {
            schedules.iter().filter_map(|s| f(s).map(|value| Sample { placement: s.placement, block: 0, value })).collect()
        };
        vs_m[0].push(m as f64, per(&|s| s.mc_at(s.mc_best_k)));
        vs_m[1].push(m as f64, per(&|s| s.mc_at(s.k_opt)));
        vs_m[2].push(m as f64, per(&|s| s.mc_at(fixed)));
        all.extend(schedules);
    }
    if spec.id == ExperimentId::Fig9 {
        curves.extend(vs_m);
    }
    let mut notes = BTreeMap::new();
    let brief: Vec<Value> = all
        .iter()
        .map(|s| {
            json!({"antennas": s.antennas, "placement": s.placement, "pool": s.pool, "k_opt": s.k_opt,
                   "mc_best_k": s.mc_best_k, "mean_interference_k": s.mean_interference_k})
        })
        .collect();
    notes.insert("schedules".to_string(), Value::Array(brief));
    Ok(ExperimentOutput { id: spec.id, curves, notes })
}

/// Monte Carlo SSE of every LIS at the configured parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSimulation {
    pub antennas: usize,
    pub devices: usize,
    pub pilot_len: usize,
    /// Ergodic SSE per LIS over all placements and blocks.
    pub per_lis: Vec<crate::harness::stats::StatSummary>,
    /// Mean of the per-LIS ergodic SSE.
    pub network_sse: f64,
}

pub fn simulate_network(run: &RunConfig) -> Result<NetworkSimulation> {
    run.validate()?;
    let cfg = run.system.clone();
    let deps: Vec<Deployment> = (0..run.experiment.placements).map(|p| placement(run, p)).collect::<Result<_>>()?;
    let ctxs: Vec<PlacementContext> = deps.iter().map(|d| PlacementContext::new(cfg.clone(), d)).collect::<Result<_>>()?;
    let t = cfg.pilot_length() as f64;
    let pre = prelog(t, cfg.coherence_len as f64);
    let jobs: Vec<(u64, u64, usize)> =
        tasks(run).into_iter().flat_map(|(p, b)| (0..cfg.lis_count).map(move |n| (p, b, n))).collect();
    let sse: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, b, n)| {
            let ctx = &ctxs[p as usize];
            let key = block_key(run, p, b);
            let rates: Vec<f64> = (0..cfg.devices)
                .map(|k| {
                    let s = UnitSample::keyed(&ctx.unit(key, n, k)?, key);
                    Ok(rate(s.evaluate(t, Csi::Imperfect, Scope::Multi, cfg.devices).gamma))
                })
                .collect::<Result<_>>()?;
            Ok(pre * pairwise_sum(&rates))
        })
        .collect::<Result<_>>()?;
    let per_lis: Vec<_> = (0..cfg.lis_count)
        .map(|n| {
            let s: Vec<Sample> = jobs
                .iter()
                .zip(&sse)
                .filter(|((_, _, l), _)| *l == n)
                .map(|(&(p, b, _), v)| Sample { placement: p, block: b, value: *v })
                .collect();
            crate::harness::stats::summarize(&format!("LIS {n}"), cfg.antennas as f64, &s)
        })
        .collect();
    let network_sse = mean(&per_lis.iter().map(|s| s.mean).collect::<Vec<_>>());
    Ok(NetworkSimulation { antennas: cfg.antennas, devices: cfg.devices, pilot_len: cfg.pilot_length(), per_lis, network_sse })
}

/// Sample statistics of one interference term against its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTerm {
    pub term: String,
    pub closed_form: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub inside_ci: bool,
    pub rel_err: f64,
    /// Whether the closed form is exact at finite `M` (otherwise asymptotic).
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub antennas: usize,
    pub samples: u64,
    pub pilot_len: usize,
    pub terms: Vec<OracleTerm>,
}

impl OracleReport {
    pub fn term(&self, name: &str) -> &OracleTerm {
        self.terms.iter().find(|t| t.term == name).expect("known oracle term")
    }

    /// All exact closed forms lie inside their confidence intervals.
    pub fn exact_terms_pass(&self) -> bool {
        self.terms.iter().filter(|t| t.exact).all(|t| t.inside_ci)
    }
}

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_548_901;
const ORACLE_CHUNK: u64 = 1000;

/// Samples `X`, `sum rho_j Y_j`, `Z` and `I / M^2` of unit (0, 0) in block 0 of
/// placement 0, redrawing fading and noise, and compares them with the closed forms.
pub fn moment_oracle(run: &RunConfig, antennas: usize) -> Result<OracleReport> {
    let cfg = run.system.with_antennas(antennas);
    let dep = placement(run, 0)?;
    let ctx = PlacementContext::new(cfg, &dep)?;
    let u = ctx.unit(block_key(run, 0, 0), 0, 0)?;
    let t = ctx.cfg.pilot_length();
    let devices = ctx.cfg.devices;
    let n = run.experiment.oracle_samples;
    let chunks: Vec<u64> = (0..n.div_ceil(ORACLE_CHUNK)).collect();
    let draws: Vec<[f64; 4]> = chunks
        .par_iter()
        .flat_map_iter(|&c| {
            let mut rng = substream(run.system.seed, &[tag::SAMPLE, antennas as u64, c]);
            let count = ORACLE_CHUNK.min(n - c * ORACLE_CHUNK);
            let u = &u;
            (0..count)
                .map(move |_| {
                    let e = UnitSample::draw(u, &mut rng).evaluate(t as f64, Csi::Imperfect, Scope::Multi, devices);
                    [e.x, e.y, e.z, e.i / (antennas * antennas) as f64]
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let ms = moment_set(&u);
    let tf = t as f64;
    let closed = [
        ms.x.mean(tf),
        ms.y.iter().map(|y| y.data_snr * y.mean(tf)).sum(),
        ms.z.mean(tf),
        ms.mu_i_bar(tf) / (antennas * antennas) as f64,
    ];
    let names = ["X", "Y", "Z", "I/M^2"];
    let exact = [true, false, true, false];
    let terms = (0..4)
        .map(|i| {
            let v: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let (mu, var) = (mean(&v), variance(&v));
            let se = (var / v.len() as f64).sqrt();
            let (lo, hi) = (mu - Z99 * se, mu + Z99 * se);
            OracleTerm {
                term: names[i].to_string(),
                closed_form: closed[i],
                sample_mean: mu,
                sample_variance: var,
                stderr: se,
                ci_low: lo,
                ci_high: hi,
                inside_ci: closed[i] >= lo && closed[i] <= hi,
                rel_err: (closed[i] - mu).abs() / mu.abs(),
                exact: exact[i],
            }
        })
        .collect();
    Ok(OracleReport { antennas, samples: n, pilot_len: t, terms })
}

/// Closed-form moments against sampling at each antenna count.
pub fn run_moment_oracle(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let reports: Vec<OracleReport> =
        spec.run.experiment.antennas.iter().map(|&m| moment_oracle(&spec.run, m)).collect::<Result<_>>()?;
    let mut curves = Vec::new();
    for name in ["X", "Y", "Z", "I/M^2"] {
        let mut sampled = Curve::new(&format!("{name} Monte Carlo"));
        let mut closed = Curve::new(&format!("{name} closed form"));
        for r in &reports {
            let t = r.term(name);
            sampled.points.push(crate::harness::stats::CurvePoint {
                summary: crate::harness::stats::StatSummary {
                    sweep_value: r.antennas as f64,
                    mean: t.sample_mean,
                    variance: t.sample_variance,
                    stderr: t.stderr,
                    count: r.samples as usize,
                    label: sampled.label.clone(),
                },
                samples: Vec::new(),
            });
            closed.push(r.antennas as f64, vec![Sample { placement: 0, block: 0, value: t.closed_form }]);
        }
        curves.push(sampled);
        curves.push(closed);
    }
    let mut notes = BTreeMap::new();
    notes.insert("all_exact_inside_ci".to_string(), json!(reports.iter().all(|r| r.exact_terms_pass())));
    notes.insert("reports".to_string(), serde_json::to_value(&reports)?);
    Ok(ExperimentOutput { id: spec.id, curves, notes })
}

/// How the interference spread shrinks with `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub antennas: Vec<usize>,
    /// Sample variance of `I / M^2`.
    pub variance: Vec<f64>,
    /// Sample means of `rho X / M^2`, `sum rho_j Y_j / M^2`, `Z / M^2`.
    pub term_means: Vec<[f64; 3]>,
    /// Least-squares slope of `ln var` against `ln M`.
    pub slope: f64,
    pub strictly_decreasing: bool,
}

/// Variance of `I / M^2` of the oracle unit over at least three antenna counts.
pub fn scaling_diagnostics(run: &RunConfig, antennas: &[usize]) -> Result<ScalingReport> {
    if antennas.len() < 3 {
        return Err(LisError::config("experiment.antennas", "scaling needs at least three antenna counts"));
    }
    let reports: Vec<OracleReport> = antennas.iter().map(|&m| moment_oracle(run, m)).collect::<Result<_>>()?;
    let rho = run.system.data_snr;
    let variance: Vec<f64> = reports.iter().map(|r| r.term("I/M^2").sample_variance).collect();
    let term_means = reports
        .iter()
        .map(|r| {
            let m2 = (r.antennas * r.antennas) as f64;
            [rho * r.term("X").sample_mean / m2, r.term("Y").sample_mean / m2, r.term("Z").sample_mean / m2]
        })
        .collect();
    let xs: Vec<f64> = antennas.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = variance.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ScalingReport {
        antennas: antennas.to_vec(),
        strictly_decreasing: variance.windows(2).all(|w| w[1] < w[0]),
        variance,
        term_means,
        slope: num / den,
    })
}
