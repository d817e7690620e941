use motor_fep::canvas::{ArmConfig, EnvState};
use motor_fep::chaining::*;
use motor_fep::dataset::{build_class_filters, synthetic_trajectories, SYNTHETIC_LETTERS};
use motor_fep::learner::{train, Repertoire, TrainConfig};
use motor_fep::motor::MotorSystem;
use motor_fep::reservoir::ReservoirConfig;

fn filters() -> ClassFilterSet {
    let labels: Vec<String> = SYNTHETIC_LETTERS.iter().map(|s| s.to_string()).collect();
    let trajs = synthetic_trajectories(&labels, 20, 0).unwrap();
    build_class_filters(&trajs, &labels, 1e-3).unwrap()
}

fn setup(n: usize, seed: u64) -> (MotorSystem, Repertoire) {
    let res = ReservoirConfig {
        seed,
        ..Default::default()
    };
    let arm = ArmConfig::default();
    let motor = MotorSystem::new(res.clone(), arm.clone()).unwrap();
    let rep = random_repertoire(n, &res, &arm, seed).unwrap();
    (motor, rep)
}

#[test]
fn selection_leaves_environment_untouched() {
    let f = filters();
    let (motor, rep) = setup(8, 2);
    let cfg = ChainConfig::for_target(&f, "s", 5).unwrap();
    let mut env = EnvState::new(&motor.arm);
    for _ in 0..3 {
        let before = env.clone();
        let sel = select_primitive(&env.snapshot(), &motor, &rep, &f, &cfg).unwrap();
        assert_eq!(env, before);
        motor.draw(&rep.signals[sel.k], &mut env).unwrap();
        assert_eq!(env.observe(), sel.predicted);
    }
}

#[test]
fn predicted_equals_executed_and_strokes_accumulate() {
    let f = filters();
    let (motor, rep) = setup(6, 5);
    let cfg = ChainConfig::for_target(&f, "c", 5).unwrap();
    let mut env = EnvState::new(&motor.arm);
    let r = chain(&mut env, &motor, &rep, &f, &cfg).unwrap();
    assert_eq!(r.chosen.len(), 5);
    assert_eq!(r.predicted, r.executed);
    // ink never disappears from one slot to the next
    for w in r.executed.windows(2) {
        assert!(w[0]
            .values()
            .iter()
            .zip(w[1].values())
            .all(|(a, b)| *a <= *b));
    }
    assert_eq!(r.final_observation, env.observe());
    let s: f64 = r.final_q.probs().iter().sum();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn greedy_choice_is_table_minimum_and_shift_invariant() {
    let f = filters();
    let (motor, rep) = setup(10, 7);
    let cfg = ChainConfig::for_target(&f, "s", 1).unwrap();
    let env = EnvState::new(&motor.arm);
    let sel = select_primitive(&env.snapshot(), &motor, &rep, &f, &cfg).unwrap();
    let min = sel.table.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(sel.table[sel.k], min);
    assert_eq!(sel.table.iter().position(|&g| g == min), Some(sel.k));
    let shifted: Vec<f64> = sel.table.iter().map(|g| g + 123.0).collect();
    let k2 = shifted
        .iter()
        .enumerate()
        .fold(0, |b, (k, g)| if *g < shifted[b] { k } else { b });
    assert_eq!(k2, sel.k);
}

#[test]
fn random_repertoire_is_untrained_learner_output() {
    let res = ReservoirConfig {
        seed: 11,
        ..Default::default()
    };
    let arm = ArmConfig::default();
    let out = train(&TrainConfig::with_episodes(0), &res, &arm, 5, 11).unwrap();
    let rnd = random_repertoire(5, &res, &arm, 11).unwrap();
    assert_eq!(out.repertoire, rnd);
    assert_eq!(rnd, random_repertoire(5, &res, &arm, 11).unwrap());
}

#[test]
fn random_repertoire_entries_look_standard_normal() {
    let (_, rep) = setup(60, 1);
    let xs: Vec<f64> = rep.signals.concat();
    assert!(xs.len() >= 5000);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 0.1, "mean {mean}");
    assert!((0.8..=1.2).contains(&var), "var {var}");
}

#[test]
fn identical_arms_give_identical_means() {
    let f = filters();
    let (motor, rep) = setup(4, 3);
    let c = [
        Candidate {
            kind: RepertoireKind::Learned,
            seed: 3,
            motor: &motor,
            repertoire: &rep,
        },
        Candidate {
            kind: RepertoireKind::Random,
            seed: 3,
            motor: &motor,
            repertoire: &rep,
        },
    ];
    let letters = vec!["c".to_string(), "s".to_string()];
    let rows = evaluate_repertoires(&c, &f, &letters, 2, Default::default()).unwrap();
    let s = summarize(&rows);
    assert_eq!(s[0].2, s[1].2);
}
