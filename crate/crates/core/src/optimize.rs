//! Pilot-length and scheduled-device-count optimization.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{asymptotic_sse, effective_half_side, p_bar, p_nk, BoundTable, MomentSet};
use crate::error::{LisError, Result};
use crate::scenario::{Deployment, SystemConfig};
use crate::sinr::{prelog, rate};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// One golden-section step: bracket and the two interior probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoldenStep {
    pub lo: f64,
    pub hi: f64,
    pub x1: f64,
    pub f1: f64,
    pub x2: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    pub trace: Vec<GoldenStep>,
}

/// Maximizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than `tol`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<GoldenResult> {
    if !(lo <= hi) {
        return Err(LisError::Degenerate(format!("empty search interval [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut trace = Vec::new();
    while b - a > tol && trace.len() < 200 {
        if !(f1.is_finite() && f2.is_finite()) {
            return Err(LisError::NonFinite { at: if f1.is_finite() { x2 } else { x1 } });
        }
        trace.push(GoldenStep { lo: a, hi: b, x1, f1, x2, f2 });
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let (x, value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if !value.is_finite() {
        return Err(LisError::NonFinite { at: x });
    }
    Ok(GoldenResult { x, value, iterations: trace.len(), trace })
}

/// Optimal pilot length and the objective along the integer grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSolution {
    pub t_opt_continuous: f64,
    pub t_opt: usize,
    pub objective: f64,
    /// `(t, objective)` for every integer `t` in `[K, T]`.
    pub curve: Vec<(usize, f64)>,
    pub iterations: usize,
    pub trace: Vec<GoldenStep>,
}

/// Maximizes `objective(t)` over `t in [K, T]`: golden-section search on the
/// continuous relaxation, then the best of the neighbouring integers and the ends.
pub fn maximize_pilot_length<F: Fn(f64) -> f64>(objective: F, devices: usize, coherence_len: usize) -> Result<PilotSolution> {
    if devices == 0 || devices > coherence_len {
        return Err(LisError::config("devices", format!("need 1 <= K <= T, got K = {devices}, T = {coherence_len}")));
    }
    let (lo, hi) = (devices as f64, coherence_len as f64);
    let g = golden_section_max(&objective, lo, hi, 1e-6 * (hi - lo).max(1.0))?;
    let mut cands = vec![g.x.floor(), g.x.ceil(), lo, hi];
    cands.retain(|c| *c >= lo && *c <= hi);
    let mut best = (devices, objective(lo));
    for c in cands {
        let v = objective(c);
        if v > best.1 {
            best = (c as usize, v);
        }
    }
    let curve: Vec<(usize, f64)> = (devices..=coherence_len).map(|t| (t, objective(t as f64))).collect();
    if let Some((t, _)) = curve.iter().find(|(_, v)| !v.is_finite()) {
        return Err(LisError::NonFinite { at: *t as f64 });
    }
    Ok(PilotSolution {
        t_opt_continuous: g.x,
        t_opt: best.0,
        objective: best.1,
        curve,
        iterations: g.iterations,
        trace: g.trace,
    })
}

/// Pilot length maximizing the deterministic SSE of the LIS whose unit moments are given.
pub fn optimal_pilot_length(cfg: &SystemConfig, dep: &Deployment, moments: &[MomentSet]) -> Result<PilotSolution> {
    asymptotic_sse(cfg, dep, moments, moments.len() as f64)?;
    maximize_pilot_length(
        |t| asymptotic_sse(cfg, dep, moments, t).map(|a| a.sse_bar).unwrap_or(f64::NAN),
        moments.len(),
        cfg.coherence_len,
    )
}

/// Pilot length that maximizes the performance bound: the shortest admissible one.
pub fn corollary1_t(devices: usize) -> usize {
    devices
}

/// Number of scheduled devices and the network objective per candidate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingSolution {
    pub k_opt: usize,
    /// `(K, NSE)` with `t = K`; infinite where some SINR is unbounded.
    pub nse_curve: Vec<(usize, f64)>,
    /// Candidate counts skipped because their objective is unbounded.
    pub unbounded: Vec<usize>,
    /// Scheduling order of devices per LIS; the first `K` are served.
    pub priority_order: Vec<Vec<usize>>,
}

/// Network SSE per LIS with `t = K`: `(1 - K/T) sum_n sum_k log2(1 + gamma_nk) / N`.
pub fn network_objective(gammas: &[Vec<f64>], devices: usize, coherence_len: usize) -> f64 {
    let pre = prelog(devices as f64, coherence_len as f64);
    let total: f64 = gammas.iter().map(|g| g.iter().map(|v| rate(*v)).sum::<f64>()).sum();
    pre * total / gammas.len() as f64
}

/// Evaluates the network objective for `K = 1..=k_max` from per-LIS SINRs
/// supplied by `gammas(K)` and returns the best count. Counts whose objective
/// is `+inf` cannot be ranked and are left out of the search.
pub fn optimal_num_devices<F: FnMut(usize) -> Result<Vec<Vec<f64>>>>(
    coherence_len: usize,
    lis_count: usize,
    k_max: usize,
    mut gammas: F,
) -> Result<SchedulingSolution> {
    if k_max == 0 {
        return Err(LisError::Degenerate("empty candidate device pool".into()));
    }
    let k_max = k_max.min(coherence_len);
    let mut curve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let g = gammas(k)?;
        if g.len() != lis_count || g.iter().any(|v| v.len() != k) {
            return Err(LisError::DimensionMismatch(format!("SINR table for K = {k} has the wrong shape")));
        }
        curve.push((k, network_objective(&g, k, coherence_len)));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut unbounded = Vec::new();
    for &(k, v) in &curve {
        if v == f64::INFINITY {
            unbounded.push(k);
            continue;
        }
        if !v.is_finite() {
            return Err(LisError::NonFinite { at: k as f64 });
        }
        if best.is_none_or(|b| v > b.1) {
            best = Some((k, v));
        }
    }
    let best = best.ok_or_else(|| LisError::Degenerate("objective is unbounded for every device count".into()))?;
    Ok(SchedulingSolution {
        k_opt: best.0,
        nse_curve: curve,
        unbounded,
        priority_order: (0..lis_count).map(|_| (0..k_max).collect()).collect(),
    })
}

/// P2 on bound SINRs: `gamma_hat = rho p_bar / mu_hat_I(K)` from one table per unit,
/// searching `K = 1..=k_max` with `t = K`.
pub fn bound_scheduling(cfg: &SystemConfig, tables: &[BoundTable], k_max: usize) -> Result<SchedulingSolution> {
    let l = effective_half_side(cfg);
    let lis_count = tables.iter().map(|t| t.lis + 1).max().unwrap_or(0);
    optimal_num_devices(cfg.coherence_len, lis_count, k_max, |k| {
        let mut g = vec![Vec::with_capacity(k); lis_count];
        for tb in tables.iter().filter(|tb| tb.device < k) {
            let mu = tb.mu_i_hat(k);
            let s = tb.snr.data * p_bar(cfg.antennas, p_nk(tb.height, l), l);
            g[tb.lis].push(if mu > 0.0 { s / mu } else { f64::INFINITY });
        }
        Ok(g)
    })
}

/// Mean of per-LIS ergodic SSE values.
pub fn network_nse(sse: &[f64]) -> Result<f64> {
    if sse.is_empty() {
        return Err(LisError::Degenerate("no LIS values to average".into()));
    }
    Ok(sse.iter().sum::<f64>() / sse.len() as f64)
}
