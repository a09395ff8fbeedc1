//! Property tests over randomized GOPs (up to six frames and four slices per
//! frame) and up to four processors.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slicesched::cost::{
    lagrangian_stage_cost, LagrangianParams, PowerModel, ProcessorChoice, ScheduledSlice,
};
use slicesched::first_level::decomposition::decomposition_gap;
use slicesched::first_level::policy::{extract_policy, FixedPolicy, ProcAction};
use slicesched::first_level::{frame_value_iteration, stage_problem, SolverOptions};
use slicesched::mdp_exact::{enumerate_states, JointMdp};
use slicesched::second_level::{
    apply_stickiness, coordinate_frequencies, edf_assign, FrameClaim, InFlight, ProcessorState,
    SliceWork,
};
use slicesched::simulator::SchedulerKind;
use slicesched::stochastic::{decode_prob, EmpiricalDistribution};
use slicesched::workload::{frame_timing, FrameId, FrameRef, FrameType};
use slicesched::Error;

fn claims_strategy(m: usize) -> impl Strategy<Value = Vec<FrameClaim>> {
    proptest::collection::vec(
        (
            0..4i64,
            0..4u32,
            any::<bool>(),
            proptest::collection::vec((0..4usize, any::<bool>()), m),
        ),
        0..5,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (deadline, buffer, deps_met, actions))| FrameClaim {
                frame: FrameId {
                    gop: 0,
                    position: i as u32 + 1,
                },
                decode_deadline: deadline,
                buffer,
                deps_met,
                actions: actions
                    .into_iter()
                    .map(|(freq, scheduled)| ProcAction { freq, scheduled })
                    .collect(),
            })
            .collect()
    })
}

fn edf_case() -> impl Strategy<Value = (usize, Vec<FrameClaim>, u64)> {
    (1..=4usize).prop_flat_map(|m| (Just(m), claims_strategy(m), any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn deadlines_ordered_and_periodic(gop in common::gop_strategy(6, 4)) {
        let period = gop.period_slots() as i64;
        for f in gop.frames() {
            let t0 = frame_timing(&gop, FrameRef::new(0, f.position));
            let t1 = frame_timing(&gop, FrameRef::new(1, f.position));
            prop_assert!(t0.arrival_slot <= t0.decode_deadline);
            prop_assert!(t0.decode_deadline <= t0.display_deadline);
            prop_assert_eq!(t1.arrival_slot, t0.arrival_slot + period);
            prop_assert_eq!(t1.decode_deadline, t0.decode_deadline + period);
            prop_assert_eq!(t1.display_deadline, t0.display_deadline + period);
            for p in &f.parents {
                let pt = frame_timing(&gop, *p);
                prop_assert!(pt.decode_deadline <= t0.decode_deadline);
            }
        }
    }

    #[test]
    fn current_frames_are_live(gop in common::gop_strategy(6, 4)) {
        for phase in 0..gop.period_slots() {
            for &r in gop.current_frame_set(phase) {
                let t = frame_timing(&gop, r);
                prop_assert!(t.arrival_slot <= phase as i64 && phase as i64 <= t.display_deadline, "{r:?} at {phase}: {t:?}");
            }
        }
    }

    #[test]
    fn decode_prob_bounded_and_monotone(
        f1 in 1e6..2e9f64,
        f2 in 1e6..2e9f64,
        dt in 1e-4..0.1f64,
        beta in 1e3..1e8f64,
    ) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let a = decode_prob(lo, dt, beta).unwrap();
        let b = decode_prob(hi, dt, beta).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a <= b);
        prop_assert!(decode_prob(lo, dt, 2.0 * beta).unwrap() <= a);
    }

    #[test]
    fn empirical_cdf_and_conditional(
        samples in proptest::collection::vec(1.0..1e7f64, 1..50),
        a in 0.0..2e7f64,
        b in 0.0..2e7f64,
        done in 0.0..1e7f64,
        step in 0.0..1e7f64,
    ) {
        let e = EmpiricalDistribution::new(samples).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(e.cdf(lo) <= e.cdf(hi));
        prop_assert!((0.0..=1.0).contains(&e.cdf(lo)));
        match e.conditional_decode_prob(done, step, 1.0) {
            Ok(p) => {
                prop_assert!((0.0..=1.0).contains(&p));
                if done + step >= e.max() {
                    prop_assert_eq!(p, 1.0);
                }
                if done + step < e.min() {
                    prop_assert_eq!(p, 0.0);
                }
            }
            Err(Error::SliceAlreadyDone(_)) => prop_assert!(done >= e.max()),
            Err(other) => prop_assert!(false, "{other}"),
        }
    }

    #[test]
    fn stage_cost_falls_with_lambda(
        choices in proptest::collection::vec((0..4usize, proptest::option::of(0..3usize)), 1..=4),
        lambda in 0.0..1000.0f64,
    ) {
        let power = PowerModel::default_table();
        let choices: Vec<ProcessorChoice> = choices
            .into_iter()
            .map(|(freq, t)| ProcessorChoice {
                freq,
                slice: t.map(|t| ScheduledSlice { frame_type: FrameType::ALL[t], mean_cycles: 4e6 }),
            })
            .collect();
        let cost = |l| lagrangian_stage_cost(&power, &LagrangianParams::new(l, 0.0, 0.9).unwrap(), 0.01, &choices).unwrap();
        prop_assert!(cost(lambda) >= cost(lambda + 1.0));
        prop_assert!(cost(0.0) > 0.0);
    }

    #[test]
    fn edf_respects_buffers_dependencies_and_deadlines((m, claims, seed) in edf_case()) {
        let a = edf_assign(&claims, m, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a.processors.len(), m);
        for c in &claims {
            prop_assert!(a.count(c.frame) <= c.buffer);
            if !c.deps_met {
                prop_assert_eq!(a.count(c.frame), 0);
            }
        }
        for (j, p) in a.processors.iter().enumerate() {
            let Some(id) = p.frame else { continue };
            let c = claims.iter().find(|c| c.frame == id).unwrap();
            prop_assert!(c.actions[j].scheduled);
            prop_assert_eq!(p.freq, c.actions[j].freq);
            let earliest = claims
                .iter()
                .filter(|o| o.deps_met && o.buffer > 0 && o.actions[j].scheduled)
                .map(|o| o.decode_deadline)
                .min()
                .unwrap();
            prop_assert_eq!(c.decode_deadline, earliest);
        }
        let b = edf_assign(&claims, m, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stickiness_keeps_in_flight_slices(
        (m, claims, seed) in edf_case(),
        holders in proptest::collection::vec(proptest::option::of(0..5usize), 4),
    ) {
        let proposed = edf_assign(&claims, m, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut in_flight = vec![0u32; claims.len()];
        let previous: Vec<ProcessorState> = (0..m)
            .map(|j| {
                let held = holders[j].filter(|&i| i < claims.len() && in_flight[i] < claims[i].buffer);
                if let Some(i) = held {
                    in_flight[i] += 1;
                }
                ProcessorState {
                    freq: 0,
                    in_flight: held.map(|i| InFlight { frame: claims[i].frame, work: SliceWork::fresh(0, 1e6) }),
                }
            })
            .collect();
        let out = apply_stickiness(&previous, &proposed, &claims);
        for (j, st) in previous.iter().enumerate() {
            if let Some(inf) = st.in_flight {
                prop_assert_eq!(out.processors[j].frame, Some(inf.frame));
            }
        }
        for c in &claims {
            prop_assert!(out.count(c.frame) <= c.buffer);
        }
        let shared = coordinate_frequencies(&out);
        prop_assert!(shared.processors.windows(2).all(|w| w[0].freq == w[1].freq));
        prop_assert!(shared.processors.iter().zip(&out.processors).all(|(a, b)| a.frame == b.frame));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn processor_chain_never_beats_joint_minimum(
        gop in common::gop_strategy(6, 3),
        m in 1..=3usize,
        lambda in prop_oneof![Just(0.0), 10.0..1000.0f64],
    ) {
        let problem = common::problem(gop, lambda, m);
        let values = frame_value_iteration(&problem, &SolverOptions::default()).unwrap();
        for f in problem.gop.frames() {
            for phase in 0..problem.gop.period_slots() {
                for x in 0..=f.num_slices {
                    let Some(sp) = stage_problem(&problem, &values.frames, f.position, phase, x) else { continue };
                    let (mono, dec) = decomposition_gap(&sp).unwrap();
                    prop_assert!(mono - dec >= -1e-12 * mono.abs().max(1.0));
                    if m == 1 {
                        prop_assert!((mono - dec).abs() <= 1e-12 * mono.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn solved_policies_are_feasible(
        gop in common::gop_strategy(6, 4),
        m in 1..=4usize,
        lambda in 0.0..1000.0f64,
    ) {
        let problem = common::problem(gop, lambda, m);
        let values = frame_value_iteration(&problem, &SolverOptions::default()).unwrap();
        prop_assert!(values.residual < 1e-6);
        prop_assert!(values.residual_history.iter().all(|r| r.is_finite()));
        let policy = extract_policy(&values, &problem);
        prop_assert!(common::check_policy_feasible(&problem, &policy).is_ok());
        if lambda == 0.0 {
            let scheduled = problem.gop.frames().iter().any(|f| {
                (0..problem.gop.period_slots()).any(|ph| {
                    policy
                        .frame(f.position)
                        .and_then(|fp| fp.get(ph, f.num_slices, true))
                        .is_some_and(|a| a.iter().any(|a| a.scheduled))
                })
            });
            prop_assert!(!scheduled);
        }
    }

    #[test]
    fn simulations_conserve_slices(
        gop in common::gop_strategy(6, 4),
        m in 1..=4usize,
        lambda in 0.0..1000.0f64,
        seed in any::<u64>(),
    ) {
        let problem = common::problem(gop, lambda, m);
        let values = frame_value_iteration(&problem, &SolverOptions::default()).unwrap();
        let policy = extract_policy(&values, &problem);
        let eager = FixedPolicy::all_at(m, problem.power.max_index(), true);
        for kind in SchedulerKind::ALL {
            prop_assert!(common::check_simulation(&problem, &policy, kind, seed).is_ok());
        }
        let r = common::check_simulation(&problem, &eager, SchedulerKind::Proposed, seed);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn state_space_guard(gop in common::gop_strategy(6, 4), cap in 1..5000u128) {
        let problem = common::problem(gop, 100.0, 1);
        match enumerate_states(&problem, cap) {
            Ok(states) => prop_assert!(states.len() as u128 <= cap),
            Err(Error::StateSpaceTooLarge { states, cap: c }) => prop_assert!(states > c && c == cap),
            Err(e) => prop_assert!(false, "{e}"),
        }
        let built = matches!(JointMdp::build(&problem, cap), Ok(_) | Err(Error::StateSpaceTooLarge { .. }));
        prop_assert!(built);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn joint_lambda_zero_closed_form(gop in common::gop_strategy(3, 2), m in 1..=2usize) {
        let base = common::problem(gop, 0.0, m);
        let problem = base.with_params(base.params.with_power_scale(1.0).unwrap()).unwrap();
        let Ok(mdp) = JointMdp::build(&problem, 200) else { return Ok(()) };
        let v = mdp.value_iteration(1e-12, 10_000).unwrap();
        let want = m as f64 * problem.power.rho(0) / (1.0 - problem.params.discount);
        for x in &v.values {
            prop_assert!((x - want).abs() < 1e-9, "{} vs {}", x, want);
        }
        for w in v.residual_history.windows(2) {
            prop_assert!(w[1] <= problem.params.discount * w[0] + 1e-12);
        }
    }
}
