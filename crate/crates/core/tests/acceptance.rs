//! Acceptance suite: one PASS/FAIL line per criterion, run in order by a
//! single test so the report reads top to bottom.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slicesched::cli::{self, SweepRow};
use slicesched::config::Config;
use slicesched::cost::{LagrangianParams, PowerModel};
use slicesched::first_level::complexity::{policy_op_count, vi_op_count};
use slicesched::first_level::decomposition::decomposition_gap;
use slicesched::first_level::policy::extract_policy;
use slicesched::first_level::{frame_value_iteration, stage_problem, SolverOptions, UpdateMode};
use slicesched::mdp_exact::{
    enumerate_states, finite_horizon_oracle, joint_value_iteration, DEFAULT_STATE_CAP,
};
use slicesched::problem::SchedulingProblem;
use slicesched::simulator::{
    generate_synthetic_trace, run_simulation, trace_gops_needed, SchedulerKind, Trace,
};
use slicesched::stochastic::{
    decode_prob, departure_pmf, sample_complexity, ComplexityKind, ComplexityModel,
    EmpiricalDistribution,
};
use slicesched::workload::{
    build_gop_schedule, enumerate_traffic_states, frame_state_count, frame_timing, ibpb_gop,
    joint_action_space_size, FrameRef, FrameSpec, FrameType,
};
use slicesched::Error;

type Outcome = Result<String, String>;

/// Proposed-scheduler rows, run length in seconds, and total-power slack.
type DeskSweep = Result<(Vec<SweepRow>, f64, f64), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn desk_config() -> Config {
    Config::load(&configs_dir().join("ibpb_desk.toml")).expect("desk config loads")
}

fn synthetic_trace(config: &Config) -> Trace {
    let gop = config.gop_structure().unwrap();
    let model = config.complexity_model(None).unwrap();
    let gops = trace_gops_needed(&gop, config.sim.gops.expect("config sets a run length"));
    Trace::new(generate_synthetic_trace(
        &gop,
        &model,
        gops,
        config.sim.seed,
    ))
    .unwrap()
}

/// Two-frame I→P GOP, one slice each, two slots per period, lowest and
/// highest frequencies of the default table.
fn tiny(lambda: f64, m: usize) -> SchedulingProblem {
    let gop = build_gop_schedule(
        vec![
            FrameSpec::new(1, FrameType::I, 1, vec![]),
            FrameSpec::new(2, FrameType::P, 1, vec![FrameRef::new(0, 1)]),
        ],
        vec![1, 1],
        2,
        0.01,
    )
    .unwrap();
    let d = PowerModel::default_table();
    let top = d.max_index();
    let power = PowerModel::new(
        vec![d.frequency_mhz(0), d.frequency_mhz(top)],
        vec![d.rho(0), d.rho(top)],
        vec![d.sigma_table()[0], d.sigma_table()[top]],
    )
    .unwrap();
    let complexity =
        ComplexityModel::new([2.0e6, 1.5e6, 1.0e6], ComplexityKind::Exponential).unwrap();
    let params = LagrangianParams::new(lambda, 0.0, 0.9).unwrap();
    SchedulingProblem::new(gop, power, complexity, params, m).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let r = FrameRef::new;
    let g = ibpb_gop(4, 1, 1.0 / 30.0).unwrap();
    let sets = [
        vec![r(0, 1), r(0, 2), r(0, 3)],
        vec![r(0, 2), r(0, 3), r(0, 4), r(1, 1)],
        vec![r(0, 3), r(0, 4), r(1, 1)],
        vec![r(0, 4), r(1, 1), r(1, 2), r(1, 3)],
    ];
    for (phase, want) in sets.iter().enumerate() {
        ensure(g.current_frame_set(phase) == want.as_slice(), || {
            format!("phase {phase}: {:?}", g.current_frame_set(phase))
        })?;
    }
    let timings = [
        (r(1, 1), (1, 3, 4)),
        (r(0, 2), (-1, 1, 1)),
        (r(0, 3), (-1, 1, 2)),
        (r(0, 4), (1, 3, 3)),
        (r(0, 1), (-3, -1, 0)),
    ];
    for (f, want) in timings {
        let t = frame_timing(&g, f);
        let got = (t.arrival_slot, t.decode_deadline, t.display_deadline);
        ensure(got == want, || {
            format!("{f:?}: timing {got:?}, expected {want:?}")
        })?;
    }
    ensure(enumerate_traffic_states(&g, None) == 640, || {
        "4-slice state count".into()
    })?;
    ensure(enumerate_traffic_states(&g, Some(8)) == 9216, || {
        "8-slice state count".into()
    })?;
    for (pos, l, want) in [
        (1, None, 32),
        (2, None, 24),
        (1, Some(8), 64),
        (2, Some(8), 48),
    ] {
        let got = frame_state_count(&g, pos, l);
        ensure(got == want, || format!("frame {pos} state count {got}"))?;
    }
    ensure(joint_action_space_size(4, 4) == 1 << 12, || {
        "4-core action count".into()
    })?;
    ensure(joint_action_space_size(8, 4) == 1 << 24, || {
        "8-core action count".into()
    })?;
    ensure(vi_op_count(17, 4, 12, 8, 4, 8, 2) == 15_275_520, || {
        "value iteration op count".into()
    })?;
    ensure(policy_op_count(4, 12, 8, 8, 4, 2) == 136_512, || {
        "policy op count".into()
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 1.0, || format!("took {elapsed:.3} s"))?;
    Ok(format!("{elapsed:.4} s"))
}

fn criterion_2() -> Outcome {
    let beta = 5e6;
    let theta = decode_prob(500e6, beta / 500e6, beta).map_err(|e| e.to_string())?;
    let want = 1.0 - (-1.0f64).exp();
    ensure((theta - want).abs() < 1e-9, || {
        format!("theta {theta} vs {want}")
    })?;

    for th in [0.0, 0.1, theta, 0.999, 1.0] {
        for scheduled in [false, true] {
            let p = departure_pmf(th, scheduled);
            ensure(
                (p.p0 + p.p1 - 1.0).abs() < 1e-15 && p.p0 >= 0.0 && p.p1 >= 0.0,
                || format!("pmf {p:?} for theta {th}"),
            )?;
        }
    }

    let e = EmpiricalDistribution::new(vec![2e6, 3e6, 3.5e6, 5e6, 8e6]).unwrap();
    let (f, dt) = (250e6, 0.004);
    let step = f * dt;
    for done in [0.0, 1e6, 2e6, 5e6, 7e6, 7.5e6] {
        let p = e
            .conditional_decode_prob(done, f, dt)
            .map_err(|x| x.to_string())?;
        let w = done + step;
        if w >= e.max() {
            ensure(p == 1.0, || {
                format!("w {w} at or above the maximum gives {p}")
            })?;
        }
        if w < e.min() {
            ensure(p == 0.0, || format!("w {w} below the minimum gives {p}"))?;
        }
    }
    ensure(
        matches!(
            e.conditional_decode_prob(8e6, f, dt),
            Err(Error::SliceAlreadyDone(_))
        ),
        || "finished slice was not rejected".into(),
    )?;

    let model = ComplexityModel::new([beta; 3], ComplexityKind::Exponential).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (s, t) = (beta, 0.5 * beta);
    let (mut survived_s, mut survived_st) = (0u64, 0u64);
    for _ in 0..1_000_000 {
        let w = sample_complexity(&model, FrameType::I, &mut rng);
        if w > s {
            survived_s += 1;
            if w > s + t {
                survived_st += 1;
            }
        }
    }
    let p = (-t / beta).exp();
    let estimate = survived_st as f64 / survived_s as f64;
    let sigma = (p * (1.0 - p) / survived_s as f64).sqrt();
    let z = (estimate - p).abs() / sigma;
    ensure(z <= 3.0, || format!("memorylessness off by {z:.2} sigma"))?;
    Ok(format!("memorylessness within {z:.2} sigma"))
}

fn criterion_3() -> Outcome {
    let p = tiny(50.0, 1);
    let eps = 1e-12;
    let (mdp, v) = joint_value_iteration(&p, eps).map_err(|e| e.to_string())?;
    let h = 60;
    let oracle = finite_horizon_oracle(&p, h, DEFAULT_STATE_CAP).map_err(|e| e.to_string())?;
    let gamma = p.params.discount;
    let delta0 = v.residual_history[0];
    let bound = gamma.powi(h as i32) * delta0 / (1.0 - gamma) + gamma * eps / (1.0 - gamma);
    let mut worst: f64 = 0.0;
    for (s, o) in &oracle {
        let x = mdp
            .value(&v, s)
            .ok_or("oracle state missing from the MDP")?;
        worst = worst.max((x - o).abs());
    }
    ensure(oracle.len() == mdp.states().len(), || {
        "oracle and MDP state sets differ".into()
    })?;
    ensure(worst <= bound, || {
        format!("oracle gap {worst:e} exceeds bound {bound:e}")
    })?;

    let solve = |p: &SchedulingProblem, mode| {
        frame_value_iteration(
            p,
            &SolverOptions {
                tolerance: 1e-12,
                mode,
                ..Default::default()
            },
        )
    };
    let dec = solve(&p, UpdateMode::Decomposed).map_err(|e| e.to_string())?;
    let mono = solve(&p, UpdateMode::Monolithic).map_err(|e| e.to_string())?;
    let mut m1_gap: f64 = 0.0;
    for f in p.gop.frames() {
        for phase in 0..p.gop.period_slots() {
            for x in 0..=f.num_slices {
                let a = dec.frame(f.position).value(phase, x, true);
                let b = mono.frame(f.position).value(phase, x, true);
                m1_gap = m1_gap.max((a - b).abs());
                if let Some(sp) = stage_problem(&p, &dec.frames, f.position, phase, x) {
                    let (mo, de) = decomposition_gap(&sp).map_err(|e| e.to_string())?;
                    m1_gap = m1_gap.max((mo - de).abs());
                }
            }
        }
    }
    ensure(m1_gap <= 1e-12, || {
        format!("single-processor updates differ by {m1_gap:e}")
    })?;

    let mut min_gap = f64::INFINITY;
    let mut checked = 0;
    for p2 in [tiny(50.0, 2), {
        let base = tiny(200.0, 2);
        SchedulingProblem::new(
            ibpb_gop(2, 3, 1.0 / 90.0).unwrap(),
            PowerModel::default_table(),
            ComplexityModel::new([6e6, 5e6, 4e6], ComplexityKind::Exponential).unwrap(),
            base.params,
            2,
        )
        .unwrap()
    }] {
        let v2 =
            frame_value_iteration(&p2, &SolverOptions::default()).map_err(|e| e.to_string())?;
        for f in p2.gop.frames() {
            for phase in 0..p2.gop.period_slots() {
                for x in 0..=f.num_slices {
                    if let Some(sp) = stage_problem(&p2, &v2.frames, f.position, phase, x) {
                        let (mo, de) = decomposition_gap(&sp).map_err(|e| e.to_string())?;
                        min_gap = min_gap.min(mo - de);
                        checked += 1;
                    }
                }
            }
        }
    }
    ensure(min_gap >= -1e-12, || {
        format!("two-processor gap {min_gap:e}")
    })?;
    Ok(format!(
        "oracle gap {worst:.1e} <= {bound:.1e}; M=1 diff {m1_gap:.1e}; M=2 min gap {min_gap:.1e} over {checked} states"
    ))
}

fn criterion_4() -> Outcome {
    for m in [1, 2] {
        let base = tiny(0.0, m);
        let p = base
            .with_params(base.params.with_power_scale(1.0).unwrap())
            .map_err(|e| e.to_string())?;
        let (_, v) = joint_value_iteration(&p, 1e-13).map_err(|e| e.to_string())?;
        let want = m as f64 * p.power.rho(0) / (1.0 - p.params.discount);
        for x in &v.values {
            ensure((x - want).abs() < 1e-9, || {
                format!("M={m}: value {x} vs {want}")
            })?;
        }
    }

    let mut config = desk_config();
    config.solver.lambda = 0.0;
    let trace = synthetic_trace(&config);
    let problem = config.problem(Some(&trace)).map_err(|e| e.to_string())?;
    let (policy, _) = cli::solve(&problem, &config).map_err(|e| e.to_string())?;
    let out = run_simulation(&problem, &config.sim_config(), &trace, Some(&policy))
        .map_err(|e| e.to_string())?;
    let m = &out.metrics;
    let rho = problem.power.rho(0);
    ensure(m.decoded_frame_rate_fps == 0.0, || {
        format!("frame rate {}", m.decoded_frame_rate_fps)
    })?;
    ensure((m.avg_power_per_core_w - rho).abs() <= 1e-12, || {
        format!("per-core power {} vs {rho}", m.avg_power_per_core_w)
    })?;
    Ok(format!(
        "per-core power {:.6} W at M={}",
        m.avg_power_per_core_w, problem.num_processors
    ))
}

/// Proposed-scheduler rows of the desk-scale sweep, shared by the miss-order
/// and frontier criteria.
fn desk_sweep() -> &'static DeskSweep {
    static SWEEP: OnceLock<DeskSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let config = desk_config();
        let trace = synthetic_trace(&config);
        let rows = cli::run_sweep(
            &config,
            &trace,
            &config.sweep.lambdas,
            &[1, 2, 4, 8],
            &[SchedulerKind::Proposed],
        )
        .map_err(|e| e.to_string())?;
        let gop = config.gop_structure().map_err(|e| e.to_string())?;
        let duration =
            config.sim.gops.unwrap() as f64 * gop.period_slots() as f64 * gop.slot_duration();
        // Energy of the costliest traced frame at its most expensive
        // frequency per cycle, spread over the run.
        let power = config.power_model().map_err(|e| e.to_string())?;
        let mut frame_energy: std::collections::HashMap<(u64, u32), f64> = Default::default();
        for r in trace.records() {
            let per_cycle = (0..power.num_frequencies())
                .map(|f| (power.rho(f) + power.sigma(f, r.frame_type)) / power.frequency_hz(f))
                .fold(0.0, f64::max);
            *frame_energy.entry((r.gop, r.frame_pos)).or_default() +=
                r.decode_cycles as f64 * per_cycle;
        }
        let max_frame = frame_energy.values().copied().fold(0.0, f64::max);
        Ok((rows, duration, max_frame / duration))
    })
}

fn criterion_5() -> Outcome {
    let (rows, _, _) = desk_sweep().as_ref().map_err(Clone::clone)?;
    ensure(rows.len() == 24, || format!("{} sweep rows", rows.len()))?;
    for r in rows {
        let [i, p, b] = r.miss;
        ensure(b >= p && p >= i, || {
            format!(
                "lambda {} M {}: miss I {i} P {p} B {b}",
                r.lambda, r.processors
            )
        })?;
    }
    Ok(format!("{} (M, lambda) points", rows.len()))
}

fn criterion_6() -> Outcome {
    let lambdas = desk_config().sweep.lambdas;
    let mut qualifying = Vec::new();
    for seed in 1..=3 {
        let mut config = desk_config();
        config.complexity.kind = "exponential".into();
        config.complexity.mean_cycles = [1.5e6, 1.2e6, 1.0e6];
        config.sim.gops = Some(50);
        config.sim.seed = seed;
        let trace = synthetic_trace(&config);
        let rows = cli::run_sweep(&config, &trace, &lambdas, &[4], &SchedulerKind::ALL)
            .map_err(|e| e.to_string())?;
        let at = |lambda: f64, s: SchedulerKind| {
            rows.iter()
                .find(|r| r.lambda == lambda && r.scheduler == s)
                .expect("every combination is swept")
        };
        let Some(&lambda) = lambdas
            .iter()
            .find(|&&l| at(l, SchedulerKind::Proposed).frame_rate_fps >= 30.0 - 1e-9)
        else {
            continue;
        };
        let (p, c, o) = (
            at(lambda, SchedulerKind::Proposed).total_power_w,
            at(lambda, SchedulerKind::ProposedCoordinated).total_power_w,
            at(lambda, SchedulerKind::OptMems).total_power_w,
        );
        ensure(p <= c && c <= o, || {
            format!("seed {seed} lambda {lambda}: proposed {p:.4} W, coordinated {c:.4} W, OPT-MEMS {o:.4} W")
        })?;
        qualifying.push(format!(
            "seed {seed} lambda {lambda}: {:.1}% below coordinated, {:.1}% below OPT-MEMS",
            100.0 * (c - p) / c,
            100.0 * (o - p) / o
        ));
    }
    ensure(!qualifying.is_empty(), || "no seed reached 30 fps".into())?;
    Ok(qualifying.join("; "))
}

fn criterion_7() -> Outcome {
    let (rows, duration, power_slack) = desk_sweep().as_ref().map_err(Clone::clone)?;
    let fps_slack = 1.0 / duration;
    for m in [1, 2, 4, 8] {
        let series: Vec<&SweepRow> = rows.iter().filter(|r| r.processors == m).collect();
        for w in series.windows(2) {
            let (a, b) = (w[0], w[1]);
            ensure(b.frame_rate_fps >= a.frame_rate_fps - fps_slack, || {
                format!(
                    "M={m}: rate {} at lambda {} after {} at {}",
                    b.frame_rate_fps, b.lambda, a.frame_rate_fps, a.lambda
                )
            })?;
            ensure(b.total_power_w >= a.total_power_w - power_slack, || {
                format!(
                    "M={m}: power {} at lambda {} after {} at {}",
                    b.total_power_w, b.lambda, a.total_power_w, a.lambda
                )
            })?;
        }
    }
    Ok(format!("slack {fps_slack:.3} fps, {power_slack:.4} W"))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = configs_dir().join("ibpb_small.toml");
    let run = |args: &[&str]| -> Result<(), String> {
        let code = cli::main_with_args(["slicesched"].iter().chain(args));
        ensure(code == 0, || format!("{args:?} exited with {code}"))
    };
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    let cfg = config.to_str().unwrap();
    let mut compared = 0;
    for s in SchedulerKind::ALL {
        let outs: Vec<PathBuf> = (0..2)
            .map(|i| dir.path().join(format!("{s}-{i}")))
            .collect();
        for o in &outs {
            run(&[
                "simulate",
                "--config",
                cfg,
                "--scheduler",
                s.as_str(),
                "--out",
                o.to_str().unwrap(),
            ])?;
        }
        for file in ["metrics.json", "slots.csv", "manifest.json"] {
            ensure(
                read(outs[0].join(file))? == read(outs[1].join(file))?,
                || format!("{s}: {file} differs"),
            )?;
            compared += 1;
        }
    }
    let sweeps: Vec<PathBuf> = ["1", "3"]
        .iter()
        .map(|j| dir.path().join(format!("sweep-{j}")))
        .collect();
    for (o, jobs) in sweeps.iter().zip(["1", "3"]) {
        run(&[
            "sweep",
            "--config",
            cfg,
            "--jobs",
            jobs,
            "--out",
            o.to_str().unwrap(),
        ])?;
    }
    ensure(
        read(sweeps[0].join("sweep.csv"))? == read(sweeps[1].join("sweep.csv"))?,
        || "sweep.csv depends on the thread count".into(),
    )?;
    Ok(format!("{} files identical across repeats", compared + 1))
}

fn criterion_9() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (
        common::gop_strategy(6, 4),
        1..=4usize,
        0..3usize,
        0..1000u64,
    );
    let cap = 4096;
    runner
        .run(&strategy, |(gop, m, li, seed)| {
            let fail = |s: String| TestCaseError::fail(s);
            for f in gop.frames() {
                for o in 0..2 {
                    let t = frame_timing(&gop, FrameRef::new(o, f.position));
                    if !(t.arrival_slot <= t.decode_deadline
                        && t.decode_deadline <= t.display_deadline)
                    {
                        return Err(fail(format!("frame {} timing {t:?}", f.position)));
                    }
                }
            }
            let problem = common::problem(gop, [0.0, 100.0, 800.0][li], m);

            let expected: u128 = problem
                .gop
                .current_frame_sets()
                .iter()
                .map(|set| {
                    set.iter()
                        .map(|r| {
                            let spec = problem.gop.frame(r.position);
                            (spec.num_slices as u128 + 1)
                                * if spec.parents.is_empty() { 1 } else { 2 }
                        })
                        .product::<u128>()
                })
                .sum();
            match enumerate_states(&problem, cap) {
                Ok(states) if expected <= cap && states.len() as u128 == expected => {}
                Err(Error::StateSpaceTooLarge { states, cap: c })
                    if expected > cap && states == expected && c == cap => {}
                other => {
                    return Err(fail(format!(
                        "guard: {expected} expected, got {:?}",
                        other.map(|s| s.len())
                    )))
                }
            }

            let values = frame_value_iteration(&problem, &SolverOptions::default())
                .map_err(|e| fail(e.to_string()))?;
            let policy = extract_policy(&values, &problem);
            common::check_policy_feasible(&problem, &policy).map_err(fail)?;
            for kind in SchedulerKind::ALL {
                common::check_simulation(&problem, &policy, kind, seed).map_err(fail)?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("48 random instances".into())
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("fixture parity", criterion_1),
        ("stochastic model", criterion_2),
        ("oracle equivalence", criterion_3),
        ("zero-multiplier closed forms", criterion_4),
        ("miss order B >= P >= I", criterion_5),
        ("power order at full rate", criterion_6),
        ("frontier monotone in lambda", criterion_7),
        ("determinism", criterion_8),
        ("property suites", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.2} s] {detail}", i + 1),
            Err(why) => {
                println!("criterion {} ({name}): FAIL [{secs:.2} s] {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
