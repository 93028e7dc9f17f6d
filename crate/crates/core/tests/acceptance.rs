use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use magsteer::control::{
    aggregate_chunks, blend_commands, AuthorityChunk, AuthorityPair, ChunkBuffer, IntentFilter, IntentParams,
    normalize_intent, PolicySpec, ALPHA_MAX,
};
use magsteer::geometry::Vec2;
use magsteer::harness::{run_batch_config, RunConfig, Tier};
use magsteer::haptics::{combined_haptic, repulsive_force, HapticParams};
use magsteer::metrics::{aggregate_report, normalized_jerk, score_trial, TrialMetrics};
use magsteer::phantom::{build_costmap, distance_transform, squared_edt, CostMap, CostParams, OccupancyGrid};
use magsteer::planner::{edge_cost_units, plan_centerline, ArmPair};
use magsteer::sim::{execute, run_trial, TrialLog};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn configs_dir() -> PathBuf {
    FsPath::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> OccupancyGrid {
    let occ = (0..w * h).map(|_| rng.random_bool(density)).collect();
    OccupancyGrid::new(w, h, 0.2, occ).unwrap()
}

fn edt_exactness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let (w, h) = (rng.random_range(2..=64), rng.random_range(2..=64));
        let density = rng.random_range(0.0..0.5);
        let g = random_grid(&mut rng, w, h, density);
        let occ: Vec<(i64, i64)> = (0..w * h)
            .filter(|&i| g.cells()[i])
            .map(|i| ((i % w) as i64, (i / w) as i64))
            .collect();
        let fast = squared_edt(g.cells(), w, h);
        for (i, &got) in fast.iter().enumerate() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let brute = occ.iter().map(|&(a, b)| (a - x).pow(2) + (b - y).pow(2)).min().unwrap();
            ensure(got == brute, format!("grid {case} ({w}x{h}) cell {i}: {got} vs {brute}"))?;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("100 grids exact in {secs:.2} s"))
}

fn dijkstra(cm: &CostMap, s: (usize, usize), g: (usize, usize)) -> Option<u64> {
    let w = cm.width();
    let mut best = vec![u64::MAX; w * cm.height()];
    let mut heap = BinaryHeap::new();
    best[s.1 * w + s.0] = 0;
    heap.push(Reverse((0u64, s)));
    while let Some(Reverse((d, c))) = heap.pop() {
        if c == g {
            return Some(d);
        }
        if d > best[c.1 * w + c.0] {
            continue;
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (c.0 as i64 + dx, c.1 as i64 + dy);
                if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= cm.height() {
                    continue;
                }
                let n = (nx as usize, ny as usize);
                if let Some(e) = edge_cost_units(cm, c, n) {
                    if d + e < best[n.1 * w + n.0] {
                        best[n.1 * w + n.0] = d + e;
                        heap.push(Reverse((d + e, n)));
                    }
                }
            }
        }
    }
    None
}

fn planner_optimality() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut solved = 0;
    for case in 0..100 {
        let g = random_grid(&mut rng, 32, 32, 0.3);
        let params = CostParams {
            base: rng.random_range(0.2..3.0),
            wall_weight: rng.random_range(0.0..30.0),
            decay_mm: rng.random_range(0.05..2.0),
        };
        let cm = build_costmap(&distance_transform(&g), params).unwrap();
        let free: Vec<usize> = (0..g.len()).filter(|&i| !g.cells()[i]).collect();
        if free.is_empty() {
            continue;
        }
        let s = g.cell_of_index(free[rng.random_range(0..free.len())]);
        let e = g.cell_of_index(free[rng.random_range(0..free.len())]);
        let oracle = dijkstra(&cm, s, e);
        match (plan_centerline(&cm, g.cell_center(s), g.cell_center(e)), oracle) {
            (Ok(p), Some(c)) => {
                ensure(p.cost_units == c, format!("map {case}: A* {} vs Dijkstra {c}", p.cost_units))?;
                ensure(
                    p.waypoints.iter().all(|w| g.is_free_at(*w)),
                    format!("map {case}: path leaves free space"),
                )?;
                solved += 1;
            }
            (Err(_), None) => {}
            (p, o) => return Err(format!("map {case}: planner {:?} vs oracle {o:?}", p.map(|p| p.cost_units))),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.2} s"))?;
    Ok(format!("{solved} reachable maps, all optimal, in {secs:.2} s"))
}

fn rod_conservation() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.params.goal_radius_mm = 1e-9;
    cfg.params.timeout_s = 10_000.0 * cfg.params.dt;
    let p = cfg.load_phantom().map_err(|e| e.to_string())?;
    let setup = cfg
        .setup(&p, Tier::Hard, &PolicySpec::Context(Default::default()), 3)
        .map_err(|e| e.to_string())?;
    let rod = setup.params.sim.rod_length;
    ensure(rod == 4.0, format!("rod length {rod}"))?;
    let log = run_trial(&setup).map_err(|e| e.to_string())?;
    ensure(log.records.len() >= 10_000, format!("only {} ticks", log.records.len()))?;
    let worst = log
        .records
        .iter()
        .map(|r| (r.robot.chord() - 4.0).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-6, format!("max deviation {worst:e} mm"))?;
    Ok(format!("{} ticks, max |chord - 4| = {worst:.1e} mm", log.records.len()))
}

fn blending_contract() -> Outcome {
    let v = || (-100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y)| Vec2::new(x, y));
    let a = || prop_oneof![Just(0.0), Just(ALPHA_MAX), 0.0..=ALPHA_MAX];
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (a(), a(), v(), v(), v(), v());
    runner
        .run(&strategy, |(al, ar, rl, rr, hl, hr)| {
            let alpha = AuthorityPair::new(al, ar).unwrap();
            let out = blend_commands(alpha, ArmPair::new(rl, rr), ArmPair::new(hl, hr)).unwrap();
            for (o, r, h, a) in [(out.left, rl, hl, al), (out.right, rr, hr, ar)] {
                for (oc, rc, hc) in [(o.x, r.x, h.x), (o.y, r.y, h.y)] {
                    prop_assert!(oc >= rc.min(hc) && oc <= rc.max(hc));
                    if a == 0.0 {
                        prop_assert_eq!(oc.to_bits(), hc.to_bits());
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    // aggregated authority under arbitrary chunk histories
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..2_000 {
        let c = rng.random_range(1..8);
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
        let sum: f64 = raw.iter().sum::<f64>().max(1e-12);
        let omega: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mut buf = ChunkBuffer::new(c).unwrap();
        for t in 0..rng.random_range(1..12u64) {
            let vals = (0..c).map(|_| [rng.random_range(0.0..=ALPHA_MAX), rng.random_range(0.0..=ALPHA_MAX)]).collect();
            buf.push(AuthorityChunk::new(vals, t).unwrap()).unwrap();
            if let Ok(p) = aggregate_chunks(&buf, &omega) {
                ensure(
                    (0.0..=ALPHA_MAX).contains(&p.left) && (0.0..=ALPHA_MAX).contains(&p.right),
                    format!("aggregated {p:?}"),
                )?;
            }
        }
    }
    Ok("10000 blend cases, aggregated alpha within [0, 0.9]".into())
}

fn haptic_field() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..1_000 {
        let p = HapticParams {
            d0: rng.random_range(0.1..5.0),
            k_rep: rng.random_range(0.01..5.0),
            k_guide: 0.5,
            f_cap: 1e9,
        };
        let n = Vec2::from_angle(rng.random_range(0.0..std::f64::consts::TAU));
        for d in [p.d0, p.d0 * (1.0 + 1e-9), p.d0 * rng.random_range(1.0..10.0)] {
            let f = repulsive_force(d, n, &p).map_err(|e| e.to_string())?;
            ensure(f == Vec2::ZERO, format!("force {f:?} at d = {d} >= d0 = {}", p.d0))?;
        }
        let near = repulsive_force(p.d0 * (1.0 - 1e-6), n, &p).map_err(|e| e.to_string())?;
        let bound = 1e-3 * p.k_rep / p.d0.powi(3);
        ensure(near.norm() < bound, format!("|F| {} not below {bound}", near.norm()))?;
        let g = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let a = rng.random_range(0.0..=ALPHA_MAX);
        let f = combined_haptic(Vec2::ZERO, g, a, 1e9).map_err(|e| e.to_string())?;
        ensure(f == g * (1.0 - a), format!("guidance {f:?} vs {:?}", g * (1.0 - a)))?;
    }
    let worked = HapticParams {
        d0: 2.0,
        k_rep: 1.0,
        k_guide: 0.5,
        f_cap: 10.0,
    };
    let f = repulsive_force(1.0, Vec2::new(1.0, 0.0), &worked).map_err(|e| e.to_string())?;
    ensure((f.norm() - 0.5).abs() <= 1e-12, format!("worked value {}", f.norm()))?;
    Ok(format!("cutoff, continuity and (1 - alpha) scaling hold; worked value {:.12} N", f.norm()))
}

fn chunk_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..1_000 {
        let c = rng.random_range(1..10);
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let omega: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let pair = AuthorityPair::new(rng.random_range(0.0..=ALPHA_MAX), rng.random_range(0.0..=ALPHA_MAX)).unwrap();
        let mut buf = ChunkBuffer::new(c).unwrap();
        for t in 0..(2 * c as u64 + 1) {
            buf.push(AuthorityChunk::constant(pair, c, t).unwrap()).unwrap();
            let got = aggregate_chunks(&buf, &omega).map_err(|e| e.to_string())?;
            ensure(
                got == pair,
                format!("constant {pair:?} aggregated to {got:?} at tick {t}"),
            )?;
        }
        // warm-up with varying chunks
        let mut buf = ChunkBuffer::new(c).unwrap();
        for t in 0..c as u64 {
            let vals = (0..c).map(|_| [rng.random_range(0.0..=ALPHA_MAX), rng.random_range(0.0..=ALPHA_MAX)]).collect();
            buf.push(AuthorityChunk::new(vals, t).unwrap()).unwrap();
            let got = aggregate_chunks(&buf, &omega).map_err(|e| e.to_string())?;
            ensure(
                (0.0..=ALPHA_MAX).contains(&got.left) && (0.0..=ALPHA_MAX).contains(&got.right),
                format!("warm-up {got:?}"),
            )?;
        }
    }
    let mut buf = ChunkBuffer::new(2).unwrap();
    buf.push(AuthorityChunk::new(vec![[0.3, 0.3], [0.1, 0.1]], 0).unwrap()).unwrap();
    buf.push(AuthorityChunk::new(vec![[0.5, 0.5], [0.2, 0.2]], 1).unwrap()).unwrap();
    let got = aggregate_chunks(&buf, &[0.7, 0.3]).map_err(|e| e.to_string())?;
    ensure((got.left - 0.38).abs() <= 1e-12 && (got.right - 0.38).abs() <= 1e-12, format!("C=2 example gave {got:?}"))?;
    Ok(format!("fixed point and warm-up bounds hold; C=2 example = {:.12}", got.left))
}

fn intent_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..1_000 {
        let b = rng.random_range(0.0..5.0);
        let o = b + rng.random_range(0.01..10.0);
        let lo = normalize_intent(b, b, o).map_err(|e| e.to_string())?;
        let hi = normalize_intent(o, b, o).map_err(|e| e.to_string())?;
        ensure(lo == 0.0 && hi == 1.0, format!("endpoints map to {lo}, {hi}"))?;
    }
    let params = IntentParams::default();
    ensure(params.window == 3, format!("default window {}", params.window))?;
    let mut f = IntentFilter::new(params).map_err(|e| e.to_string())?;
    for _ in 0..10 {
        ensure(f.update(params.f_baseline, 0.02).smoothed == 0.0, "baseline not 0")?;
    }
    let mut trace = Vec::new();
    for _ in 0..5 {
        trace.push(f.update(params.f_override, 0.02).smoothed);
    }
    ensure(trace[0] < 1.0 && trace[1] < 1.0, format!("settled early: {trace:?}"))?;
    ensure(trace[2..].iter().all(|&v| v == 1.0), format!("not settled after 3: {trace:?}"))?;
    ensure((trace[0] - 1.0 / 3.0).abs() < 1e-15 && (trace[1] - 2.0 / 3.0).abs() < 1e-15, format!("{trace:?}"))?;
    Ok(format!("endpoints exact; step response {:.4} {:.4} {:.4}", trace[0], trace[1], trace[2]))
}

fn with_noise(log: &TrialLog, std: f64, seed: u64) -> TrialLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, std).unwrap();
    let mut out = log.clone();
    for r in &mut out.records {
        let d = Vec2::new(n.sample(&mut rng), n.sample(&mut rng));
        r.robot.head = r.robot.head + d;
        r.robot.tail = r.robot.tail + d;
    }
    out
}

fn smoothness_metric() -> Outcome {
    let n = 301;
    let dt = 1.5 / (n - 1) as f64;
    let pts: Vec<Vec2> = (0..n)
        .map(|i| {
            let tau = i as f64 / (n - 1) as f64;
            let s = tau.powi(3) * (10.0 - 15.0 * tau + 6.0 * tau * tau);
            Vec2::new(2.0 + 5.0 * s, 1.0 + 2.0 * s)
        })
        .collect();
    let phi = normalized_jerk(&pts, dt).map_err(|e| e.to_string())?;
    let exact = 360f64.sqrt();
    ensure((phi - exact).abs() / exact < 0.02, format!("min-jerk phi {phi} vs {exact}"))?;

    let cfg = RunConfig::default();
    let p = cfg.load_phantom().map_err(|e| e.to_string())?;
    let setup = cfg
        .setup(&p, Tier::Easy, &PolicySpec::Context(Default::default()), 1)
        .map_err(|e| e.to_string())?;
    let clean = run_trial(&setup).map_err(|e| e.to_string())?;
    let seg = cfg.metrics.segment_ticks;
    let mut trials = vec![score_trial(&clean, "clean", seg).map_err(|e| e.to_string())?];
    for seed in 0..100 {
        for (label, std) in [("low", 0.005), ("high", 0.02)] {
            let noisy = with_noise(&clean, std, seed);
            trials.push(score_trial(&noisy, &format!("{label}{seed}"), seg).map_err(|e| e.to_string())?);
        }
    }
    let report = aggregate_report(trials, seg).map_err(|e| e.to_string())?;
    let s: Vec<f64> = report.trials.iter().map(|t| t.s).collect();
    for seed in 0..100 {
        let (lo, hi) = (s[1 + 2 * seed], s[2 + 2 * seed]);
        ensure(s[0] > lo && lo > hi, format!("seed {seed}: S clean {} low {lo} high {hi}", s[0]))?;
    }
    Ok(format!("min-jerk phi {phi:.3} (exact {exact:.3}); S drops with noise on all 100 seeds"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn trend_reproduction() -> Outcome {
    let t = Instant::now();
    let cfg = RunConfig::load(&configs_dir().join("batch.toml"), &[]).map_err(|e| e.to_string())?;
    let phantom = cfg.load_phantom().map_err(|e| e.to_string())?;
    let conditions = [("fixed", PolicySpec::Fixed), ("discrete", PolicySpec::Discrete), ("context", PolicySpec::Context(Default::default()))];
    let mut cells = Vec::new();
    for (label, policy) in &conditions {
        for seed in 0..50u64 {
            cells.push((*label, policy.clone(), Tier::ALL[(seed % 3) as usize], seed));
        }
    }
    let seg = cfg.metrics.segment_ticks;
    let scored: Vec<Result<TrialMetrics, String>> = execute(&cells, 4, |(label, policy, tier, seed)| {
        let setup = cfg.setup(&phantom, *tier, policy, *seed).map_err(|e| e.to_string())?;
        let log = run_trial(&setup).map_err(|e| e.to_string())?;
        score_trial(&log, label, seg).map_err(|e| e.to_string())
    });
    let trials = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = aggregate_report(trials, seg).map_err(|e| e.to_string())?;
    let med = |label: &str, f: &dyn Fn(&TrialMetrics) -> f64| {
        median(report.trials.iter().filter(|t| t.condition == label).map(f).collect())
    };
    let cc = |l: &str| med(l, &|t| t.cc as f64);
    let s = |l: &str| med(l, &|t| t.s);
    let (cc_f, cc_d, cc_c) = (cc("fixed"), cc("discrete"), cc("context"));
    let (s_d, s_c) = (s("discrete"), s("context"));
    let secs = t.elapsed().as_secs_f64();
    let summary = format!(
        "median CC fixed {cc_f} discrete {cc_d} context {cc_c}; median S discrete {s_d:.3} context {s_c:.3}; {secs:.1} s"
    );
    ensure(cc_c <= 0.5 * cc_f && cc_c <= 0.5 * cc_d, format!("CC trend not reproduced: {summary}"))?;
    ensure(s_c > s_d, format!("S trend not reproduced: {summary}"))?;
    ensure(secs < 120.0, format!("too slow: {summary}"))?;
    Ok(summary)
}

fn read_outputs(dir: &FsPath) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for name in ["report.csv", "report.json", "trials.csv", "manifest.json"] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).unwrap_or_default()));
    }
    let mut logs: Vec<_> = std::fs::read_dir(dir.join("logs"))
        .map(|d| d.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    logs.sort();
    for p in logs {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        files.push((name, std::fs::read(&p).unwrap()));
    }
    files
}

fn determinism() -> Outcome {
    let cfg = RunConfig::load(&configs_dir().join("batch.toml"), &[]).map_err(|e| e.to_string())?;
    let batch = cfg.batch.as_ref().ok_or("batch.toml has no [batch] table")?;
    ensure(
        batch.policies.len() == 4 && batch.tiers.len() == 3 && cfg.seeds.len() == 8,
        "batch.toml is not the 4 x 3 x 8 grid",
    )?;
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for (i, jobs) in [1usize, 1, 8].into_iter().enumerate() {
        let dir = root.path().join(format!("run{i}"));
        let out = run_batch_config(&cfg, &dir, Some(jobs)).map_err(|e| e.to_string())?;
        ensure(out.manifest.failures.is_empty(), format!("failures: {:?}", out.manifest.failures))?;
        ensure(out.log_paths.len() == 96, format!("{} logs", out.log_paths.len()))?;
        runs.push(read_outputs(&dir));
    }
    ensure(runs[0].len() == 100, format!("{} output files", runs[0].len()))?;
    for (i, run) in runs.iter().enumerate().skip(1) {
        for (a, b) in runs[0].iter().zip(run) {
            ensure(a == b, format!("run {i} differs in {}", a.0))?;
        }
    }
    Ok("96 logs; reports and logs byte-identical across 2 runs and parallelism 1 vs 8".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("distance transform exactness", edt_exactness),
        ("planner optimality", planner_optimality),
        ("rod conservation", rod_conservation),
        ("blending contract", blending_contract),
        ("haptic field", haptic_field),
        ("chunk aggregation", chunk_aggregation),
        ("intent pipeline", intent_pipeline),
        ("smoothness metric", smoothness_metric),
        ("trend reproduction", trend_reproduction),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
