use mbnav_core::policy::LinearPolicy;
use mbnav_core::trainer::{
    aggregate_update, ars_train, evaluate, ArsConfig, ArsTrainer, ArsVariant, TrainReport,
};
use mbnav_core::variation::{small_team_env, toy_env};

fn short(iterations: usize, variant: ArsVariant) -> ArsConfig {
    ArsConfig {
        n_iterations: iterations,
        variant,
        ..ArsConfig::default()
    }
}

#[test]
fn training_is_independent_of_thread_count() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ars_train(&small_team_env(), &short(6, ArsVariant::V2)).unwrap())
    };
    let (p1, r1) = run(1);
    let (p4, r4) = run(4);
    assert_eq!(p1.to_json(), p4.to_json());
    let rewards = |r: &TrainReport| r.iterations.iter().map(|i| i.mean_reward).collect::<Vec<_>>();
    assert_eq!(rewards(&r1), rewards(&r4));
}

#[test]
fn v2_collects_one_observation_per_step_and_v1_none() {
    let mut v2 = ArsTrainer::new(&toy_env(), short(1, ArsVariant::V2)).unwrap();
    let (rec, _) = v2.step().unwrap();
    assert_eq!(v2.policy().obs_count(), rec.iteration_timesteps);

    let mut v1 = ArsTrainer::new(&toy_env(), short(1, ArsVariant::V1)).unwrap();
    v1.step().unwrap();
    assert_eq!(v1.policy().obs_count(), 0);
    assert!(v1.policy().norm_mean().iter().all(|m| *m == 0.0));
}

#[test]
fn trace_is_consistent_with_a_fresh_rollout() {
    let mut trainer = ArsTrainer::new(&small_team_env(), short(2, ArsVariant::V2)).unwrap();
    trainer.step().unwrap();
    let snapshot = ArsTrainer::new(&small_team_env(), short(2, ArsVariant::V2))
        .unwrap()
        .with_policy(trainer.policy().clone())
        .unwrap();
    let (_, trace) = trainer.step().unwrap();
    let agg = aggregate_update(&trace.directions, &trace.r_plus, &trace.r_minus, 8, 0.019);
    assert_eq!(agg, trace.aggregate);
    let expected: Vec<f64> = match &agg.step {
        Some(step) => trace.weights_before.iter().zip(step).map(|(w, s)| w + s).collect(),
        None => trace.weights_before.clone(),
    };
    assert_eq!(expected, trace.weights_after);

    let (plus, minus) = snapshot.rollout_directions(&trace.directions).unwrap();
    let r: Vec<f64> = plus.iter().map(|e| e.reward).collect();
    assert_eq!(r, trace.r_plus);
    let r: Vec<f64> = minus.iter().map(|e| e.reward).collect();
    assert_eq!(r, trace.r_minus);
}

#[test]
fn trained_policy_survives_a_file_round_trip() {
    let (policy, report) = ars_train(&toy_env(), &short(40, ArsVariant::V2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    policy.save(&path).unwrap();
    let loaded = LinearPolicy::load(&path, 1).unwrap();
    assert_eq!(loaded.weights(), policy.weights());
    assert_eq!(loaded.norm_var(), policy.norm_var());
    let a = evaluate(&policy, &toy_env(), 5, 0).unwrap();
    let b = evaluate(&loaded, &toy_env(), 5, 0).unwrap();
    assert_eq!(a, b);

    let back = TrainReport::from_jsonl(&report.to_jsonl()).unwrap();
    assert_eq!(back, report);
    assert_eq!(report.iterations.len(), 40);
    assert!(report
        .iterations
        .windows(2)
        .all(|w| w[1].timesteps == w[0].timesteps + w[1].iteration_timesteps));
    assert_eq!(report.summary.total_timesteps, report.iterations[39].timesteps);
}

#[test]
fn wrong_team_size_is_rejected() {
    let (policy, _) = ars_train(&toy_env(), &short(1, ArsVariant::V1)).unwrap();
    let err = ArsTrainer::new(&small_team_env(), ArsConfig::default())
        .unwrap()
        .with_policy(policy);
    assert!(err.is_err());
}
