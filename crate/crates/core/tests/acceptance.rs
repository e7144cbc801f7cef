//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. `ACCEPTANCE_ONLY=5,7` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use lis_core::asymptotics::{asymptotic_sse, moment_set};
use lis_core::channel::BlockKey;
use lis_core::estimation::{ls_estimate, pilot_book, received_pilot, PilotTransmitter};
use lis_core::harness::experiments::{
    moment_oracle, placement, run_experiment, scaling_diagnostics, schedule_placement, ExperimentId, ExperimentSpec,
    PilotSweepSummary, PlacementContext, PlacementSchedule,
};
use lis_core::harness::output::write_output;
use lis_core::harness::stats::{mean, variance};
use lis_core::optimize::optimal_pilot_length;
use lis_core::rng::{substream, StreamRng};
use lis_core::scenario::SystemConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn orthogonality_and_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for (t, k) in [(1, 1), (4, 4), (8, 3), (20, 20), (37, 11), (50, 50)] {
        let g = pilot_book(t, k).unwrap().gram();
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).norm());
            }
        }
    }
    let mut spec = ExperimentSpec::preset(ExperimentId::Oracle, false);
    spec.run.system = SystemConfig { antennas: 64, devices: 4, lis_count: 1, nlos_paths: 4, ..SystemConfig::default() };
    let dep = placement(&spec.run, 0).unwrap();
    let ctx = PlacementContext::new(spec.run.system.clone(), &dep).unwrap();
    let key = BlockKey { seed: 1, placement: 0, block: 0 };
    let book = pilot_book(4, 4).unwrap();
    let mut est_err: f64 = 0.0;
    for k in 0..4 {
        let u = ctx.unit(key, 0, k).unwrap();
        let others: Vec<Vec<_>> = u.links.iter().map(|l| l.realize(&vec![Default::default(); l.scatter.cols()])).collect();
        let mut txs = vec![PilotTransmitter { pilot: k, pilot_snr: u.snr.pilot, channel: &u.desired }];
        for (l, h) in u.links.iter().zip(&others) {
            txs.push(PilotTransmitter { pilot: l.device, pilot_snr: l.snr.pilot, channel: h });
        }
        let y = received_pilot(&book, &txs, 64, None::<&mut StreamRng>).unwrap();
        let e = ls_estimate(&y, &book, k, u.snr.pilot, &u.desired).unwrap();
        let rel = e.error.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
            / u.desired.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        est_err = est_err.max(rel);
    }
    outcome(
        worst <= 1e-12 && est_err <= 1e-12,
        format!("max |Psi^H Psi - I| = {worst:.2e}, max relative LS error without noise = {est_err:.2e}"),
    )
}

fn oracle_spec() -> ExperimentSpec {
    ExperimentSpec::preset(ExperimentId::Oracle, false)
}

fn exact_moment_oracle() -> Outcome {
    let spec = oracle_spec();
    let r = moment_oracle(&spec.run, 16).unwrap();
    let (x, z) = (r.term("X"), r.term("Z"));
    outcome(
        x.inside_ci && z.inside_ci && r.samples >= 10_000,
        format!(
            "M=16, {} draws: mu_X {:.5} in [{:.5}, {:.5}], mu_Z {:.5} in [{:.5}, {:.5}]",
            r.samples, x.closed_form, x.ci_low, x.ci_high, z.closed_form, z.ci_low, z.ci_high
        ),
    )
}

fn interferer_moment_agreement() -> Outcome {
    let spec = oracle_spec();
    let small = moment_oracle(&spec.run, 16).unwrap().term("Y").rel_err;
    let large = moment_oracle(&spec.run, 100).unwrap().term("Y").rel_err;
    outcome(large < small && large <= 0.05, format!("relative error of sum rho_j mu_Y: M=16 {small:.4}, M=100 {large:.4}"))
}

fn interference_scaling() -> Outcome {
    let spec = oracle_spec();
    let s = scaling_diagnostics(&spec.run, &[16, 64, 256]).unwrap();
    outcome(
        s.strictly_decreasing && s.slope <= -0.7,
        format!("var(I/M^2) = {:.3e}, {:.3e}, {:.3e}; log-log slope {:.2}", s.variance[0], s.variance[1], s.variance[2], s.slope),
    )
}

fn deterministic_sse_agreement() -> Outcome {
    let mut spec = ExperimentSpec::preset(ExperimentId::Fig5, false);
    spec.run.system.devices = 8;
    spec.run.experiment.antennas = vec![100, 400];
    spec.run.experiment.placements = 10;
    spec.run.experiment.blocks = 10;
    spec.run.experiment.analytic_blocks = None;
    let out = run_experiment(&spec, 1).unwrap();
    let mc = out.curve("multi-LIS Monte Carlo").unwrap().means();
    let th = out.curve("multi-LIS deterministic").unwrap().means();
    let gap: Vec<f64> = mc.iter().zip(&th).map(|(a, b)| (a - b).abs() / a).collect();
    outcome(
        gap[1] <= 0.05 && gap[1] < gap[0],
        format!(
            "K=8 multi-LIS: M=100 MC {:.2} vs {:.2} (rel {:.4}); M=400 MC {:.2} vs {:.2} (rel {:.4})",
            mc[0], th[0], gap[0], mc[1], th[1], gap[1]
        ),
    )
}

fn bound_ordering() -> Outcome {
    let mut spec = ExperimentSpec::preset(ExperimentId::Fig5, false);
    spec.run.system.devices = 8;
    let run = &spec.run;
    let k = 8;
    let ts = [8.0, 16.0, 50.0, 250.0, 499.0];
    let mut violations = 0;
    let mut checked = 0;
    let mut gaps = Vec::new();
    for m in [100, 400, 900] {
        let cfg = run.system.with_antennas(m);
        let mut g = Vec::new();
        for p in 0..3 {
            let dep = placement(run, p).unwrap();
            let ctx = PlacementContext::new(cfg.clone(), &dep).unwrap();
            for b in 0..2 {
                let key = BlockKey { seed: run.system.seed, placement: p, block: b };
                for single in [false, true] {
                    let ms: Vec<_> = (0..k)
                        .map(|d| {
                            let u = ctx.unit(key, 0, d).unwrap();
                            moment_set(&if single { u.single_lis() } else { u })
                        })
                        .collect();
                    for &t in &ts {
                        let a = asymptotic_sse(&cfg, &dep, &ms, t).unwrap();
                        checked += 1;
                        if !(a.unbounded || a.sse_hat >= a.sse_bar) {
                            violations += 1;
                        }
                        if !single && t == k as f64 && !a.unbounded {
                            g.push(a.sse_hat - a.sse_bar);
                        }
                    }
                }
            }
        }
        gaps.push(mean(&g));
    }
    outcome(
        violations == 0 && gaps[1] < gaps[0] && gaps[2] < gaps[1],
        format!(
            "{violations} ordering violations in {checked} checks; mean bound minus deterministic at t=K: {:.2}, {:.2}, {:.2} for M=100, 400, 900",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn csi_run(devices: usize, placements: u64, blocks: u64) -> Vec<Vec<f64>> {
    let mut spec = ExperimentSpec::preset(ExperimentId::Fig6b, false);
    spec.run.system.devices = devices;
    spec.run.experiment.antennas = vec![100, 400, 900];
    spec.run.experiment.placements = placements;
    spec.run.experiment.blocks = blocks;
    let out = run_experiment(&spec, 1).unwrap();
    ["multi-LIS imperfect CSI", "single-LIS imperfect CSI", "multi-LIS perfect CSI"]
        .iter()
        .map(|l| out.curve(l).unwrap().means())
        .collect()
}

fn nlos_vanishing() -> Outcome {
    let c = csi_run(8, 40, 10);
    let gap: Vec<f64> = (0..3).map(|i| c[1][i] - c[0][i]).collect();
    let csi_gap: Vec<f64> = (0..3).map(|i| c[2][i] - c[0][i]).collect();
    let ratio = gap[2] / gap[0];
    let pass = ratio <= 0.5 && csi_gap[1] < csi_gap[0] && csi_gap[2] < csi_gap[1];
    let big = csi_run(20, 10, 4);
    let big_ratio = (big[1][2] - big[0][2]) / (big[1][0] - big[0][0]);
    let level = big[0][2];
    let stretch = (level - 110.0).abs() <= 0.15 * 110.0;
    outcome(
        pass,
        format!(
            "K=8 single-multi gap {:.3}, {:.3}, {:.3} (ratio M=900/M=100 {:.3}, need <= 0.5); perfect-imperfect gap {:.2}, {:.2}, {:.2}. \
             Info K=20: gap ratio {:.3}; stretch level at M=900 {:.1} vs 110 +-15% {}",
            gap[0],
            gap[1],
            gap[2],
            ratio,
            csi_gap[0],
            csi_gap[1],
            csi_gap[2],
            big_ratio,
            level,
            if stretch { "PASS" } else { "FAIL" }
        ),
    )
}

fn pilot_length() -> Outcome {
    let mut spec = ExperimentSpec::preset(ExperimentId::Fig7, false);
    spec.run.experiment.antennas = vec![900];
    spec.run.experiment.placements = 2;
    spec.run.experiment.blocks = 4;
    spec.run.experiment.analytic_blocks = Some(1);
    let out = run_experiment(&spec, 1).unwrap();
    let s: Vec<PilotSweepSummary> = serde_json::from_value(out.notes["pilot"].clone()).unwrap();
    let s = &s[0];
    let ratio = s.mc_at_k / s.mc_max;

    let mut agree = 0;
    for i in 0..20u64 {
        let mut rng = substream(1000 + i, &[]);
        use rand::Rng;
        let devices = rng.random_range(1..=4usize);
        let coherence_len = rng.random_range(devices + 5..=80usize);
        let mut small = ExperimentSpec::preset(ExperimentId::Oracle, false);
        small.run.system = SystemConfig {
            antennas: 16,
            devices,
            lis_count: 2,
            coherence_len,
            nlos_paths: 4,
            seed: 1000 + i,
            ..SystemConfig::default()
        };
        let dep = placement(&small.run, 0).unwrap();
        let ctx = PlacementContext::new(small.run.system.clone(), &dep).unwrap();
        let key = BlockKey { seed: 1000 + i, placement: 0, block: 0 };
        let ms: Vec<_> = (0..devices).map(|d| moment_set(&ctx.unit(key, 0, d).unwrap())).collect();
        let sol = optimal_pilot_length(&ctx.cfg, &dep, &ms).unwrap();
        let grid = (devices..=coherence_len)
            .map(|t| (t, asymptotic_sse(&ctx.cfg, &dep, &ms, t as f64).unwrap().sse_bar))
            .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        if grid.0 == sol.t_opt {
            agree += 1;
        }
    }
    outcome(
        ratio >= 0.99 && agree == 20,
        format!(
            "M=900 K=8: SSE(t=K) {:.2}, max {:.2} at t={} (ratio {:.4}); golden section equals grid argmax on {agree}/20 instances",
            s.mc_at_k, s.mc_max, s.mc_argmax, ratio
        ),
    )
}

fn scheduling() -> Outcome {
    let mut spec = ExperimentSpec::preset(ExperimentId::Fig8, false);
    spec.run.experiment.placements = 10;
    spec.run.experiment.blocks = 8;
    let run = &spec.run;
    let schedules: Vec<PlacementSchedule> = (0..10).map(|p| schedule_placement(run, 400, p).unwrap()).collect();
    let common = schedules.iter().map(|s| s.pool).min().unwrap();
    let fixed = run.experiment.fixed_devices;

    let avg: Vec<f64> = (1..=common).map(|k| mean(&schedules.iter().map(|s| s.mc_at(k).unwrap()).collect::<Vec<_>>())).collect();
    let argmax = avg.iter().enumerate().fold((0, f64::MIN), |a, (i, v)| if *v > a.1 { (i + 1, *v) } else { a }).0;
    // Unimodality up to sampling noise: each step towards the peak may not drop,
    // and each step after it may not rise, by more than 2 standard errors of the
    // paired step across placements.
    let mut bumps = 0;
    for k in 1..common {
        let steps: Vec<f64> = schedules.iter().map(|s| s.mc_at(k + 1).unwrap() - s.mc_at(k).unwrap()).collect();
        let (d, se) = (mean(&steps), (variance(&steps) / steps.len() as f64).sqrt());
        let bad = if k < argmax { d < -2.0 * se } else { d > 2.0 * se };
        if bad {
            bumps += 1;
        }
    }

    let mut beats_fixed = 0;
    let mut beats_all = 0;
    let mut near_best = 0;
    let mut worst_ratio: f64 = 1.0;
    for s in &schedules {
        let v = s.mc_at(s.k_opt).unwrap();
        if s.mc_at(fixed).is_none_or(|f| v >= f) {
            beats_fixed += 1;
        }
        if s.mc_curve.iter().all(|f| v >= *f) {
            beats_all += 1;
        }
        let r = v / s.mc_at(s.mc_best_k).unwrap();
        worst_ratio = worst_ratio.min(r);
        if r >= 0.97 {
            near_best += 1;
        }
    }
    let k_opts: Vec<usize> = schedules.iter().map(|s| s.k_opt).collect();
    let n = schedules.len();
    let avg_opt = mean(&schedules.iter().map(|s| s.mc_at(s.k_opt).unwrap()).collect::<Vec<_>>());
    let avg_fixed = mean(&schedules.iter().filter_map(|s| s.mc_at(fixed)).collect::<Vec<_>>());
    outcome(
        bumps == 0 && beats_fixed == n && near_best == n && (10..=35).contains(&argmax),
        format!(
            "T=50 M=400, {n} placements (pools >= {common}): average NSE peaks at K={argmax}, {bumps} non-unimodal steps; \
             K_opt {k_opts:?}; NSE(K_opt) >= NSE(K={fixed}) on {beats_fixed}/{n}, >= every fixed K on {beats_all}/{n}; \
             worst NSE(K_opt)/brute-force optimum {worst_ratio:.4}; placement-averaged NSE {avg_opt:.2} with K_opt vs {avg_fixed:.2} with K={fixed}"
        ),
    )
}

fn reproducibility() -> Outcome {
    let mut identical = true;
    let mut files = 0;
    for id in [ExperimentId::Fig5, ExperimentId::Fig7, ExperimentId::Fig9, ExperimentId::Oracle] {
        let mut spec = ExperimentSpec::preset(id, false);
        let (s, e) = (&mut spec.run.system, &mut spec.run.experiment);
        s.nlos_paths = 4;
        if id == ExperimentId::Fig7 {
            s.coherence_len = 40;
        }
        if id != ExperimentId::Fig9 {
            s.devices = 4;
        }
        e.antennas = vec![16, 64];
        e.placements = 3;
        e.blocks = 4;
        e.max_devices = Some(6);
        e.oracle_samples = 2000;
        e.raw = true;
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_output(a.path(), &spec, &run_experiment(&spec, 1).unwrap()).unwrap();
        let written = write_output(b.path(), &spec, &run_experiment(&spec, 4).unwrap()).unwrap();
        for path in written {
            let name = path.file_name().unwrap();
            files += 1;
            if std::fs::read(a.path().join(name)).unwrap() != std::fs::read(&path).unwrap() {
                identical = false;
            }
        }
    }
    outcome(identical, format!("{files} output files compared between 1 and 4 workers"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "pilot orthogonality and LS identity", orthogonality_and_identity),
        (2, "contamination and noise moments against sampling", exact_moment_oracle),
        (3, "interferer moments converge", interferer_moment_agreement),
        (4, "interference variance scaling", interference_scaling),
        (5, "ergodic SSE matches the deterministic equivalent", deterministic_sse_agreement),
        (6, "bound ordering and convergence", bound_ordering),
        (7, "NLOS inter-LIS gap vanishing", nlos_vanishing),
        (8, "pilot length t=K and golden section", pilot_length),
        (9, "device scheduling", scheduling),
        (10, "worker-count reproducibility", reproducibility),
    ];
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("panicked: {}", e.downcast_ref::<String>().cloned().unwrap_or_else(|| format!("{:?}", e.downcast_ref::<&str>())))),
        };
        println!("criterion {n:>2} {} [{name}] {detail} ({secs:.1}s)", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
