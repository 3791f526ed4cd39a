use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mbnav_core::env::{observation_vector, Action, Env, EnvError};
use mbnav_core::episodic::EpisodicEnv;
use mbnav_core::policy::ZeroPolicy;
use mbnav_core::trainer::evaluate_recorded;
use mbnav_core::variation::{generate_variation, preset, toy_env};

#[test]
fn advertised_spaces_follow_the_config() {
    for n in 1..=7 {
        let cfg = generate_variation(n as u64, n, 3, 1000.0).unwrap();
        let env = EpisodicEnv::new(cfg.clone()).unwrap();
        let obs = env.observation_space();
        let act = env.action_space();
        assert_eq!(obs.dim(), 4 * n + 1);
        assert_eq!(act.dim(), 2 * n);

        let (lo, hi) = cfg.position_bounds();
        assert_eq!(&obs.low[..2], &[lo.x, lo.y]);
        assert_eq!(&obs.high[..2], &[hi.x, hi.y]);
        assert_eq!(obs.low[2 * n], -cfg.v_clip);
        assert_eq!(obs.high[4 * n - 1], cfg.v_clip);
        assert_eq!(obs.high[4 * n], 7.0);
        let fb = cfg.force_bounds;
        assert_eq!(&act.low[..2], &[fb.f_x_min, fb.f_y_min]);
        assert_eq!(&act.high[..2], &[fb.f_x_max, fb.f_y_max]);
    }
}

#[test]
fn reset_returns_the_native_observation() {
    let cfg = preset(1).unwrap();
    let mut handle = EpisodicEnv::new(cfg.clone()).unwrap();
    let obs = handle.reset(9);
    assert_eq!(obs.len(), 13);
    let native = Env::reset(Arc::new(cfg), 9).unwrap();
    assert_eq!(obs, native.observation());
    assert!(handle.observation_space().contains(&obs));
}

/// Random action sequences through the flat API match the native env bitwise.
#[test]
fn random_rollouts_match_native() {
    for episode in 0..100u64 {
        let n = 1 + (episode as usize % 3);
        let mut cfg = generate_variation(episode, n, 2, 300.0).unwrap();
        cfg.max_episode_steps = 200;
        let cfg = Arc::new(cfg);
        let mut handle = EpisodicEnv::new((*cfg).clone()).unwrap();
        let mut native = Env::reset(cfg.clone(), episode).unwrap();
        let mut obs = handle.reset(episode);
        let mut rng = ChaCha8Rng::seed_from_u64(episode);
        loop {
            // out-of-range on purpose: clamping must agree too
            let flat: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r = handle.step(&flat).unwrap();
            let out = native.step(&Action::from_flat(&flat).unwrap()).unwrap();
            assert_eq!(r.observation, observation_vector(&out.next_state));
            assert_eq!(r.reward.to_bits(), out.reward.to_bits());
            assert_eq!(r.info.breakdown, out.breakdown);
            assert_eq!(r.info.cause, out.cause);
            assert_eq!(r.terminated || r.truncated, out.terminated);
            assert_ne!(r.observation, obs);
            obs = r.observation;
            if out.terminated {
                break;
            }
        }
        assert!(matches!(handle.step(&vec![0.0; 2 * n]), Err(EnvError::EpisodeFinished)));
    }
}

#[test]
fn zero_action_loop_equals_zero_policy_eval() {
    let cfg = toy_env();
    let (_, trajs) = evaluate_recorded(&ZeroPolicy { n_robots: 1 }, &cfg, 1, 4).unwrap();
    let traj = &trajs[0];
    let mut handle = EpisodicEnv::new(cfg).unwrap();
    handle.reset(4);
    for rec in &traj.steps {
        let r = handle.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.reward, rec.reward);
        assert_eq!(r.info.visited_mask, rec.mask);
        assert_eq!(r.info.cause, rec.cause);
        let pos: Vec<f64> = rec.positions.iter().flat_map(|p| [p.x, p.y]).collect();
        assert_eq!(&r.observation[..2], &pos[..]);
    }
    assert_eq!(traj.steps.len(), 1000);
}

#[test]
fn out_of_range_actions_clamp_like_native() {
    let cfg = toy_env();
    let mut big = EpisodicEnv::new(cfg.clone()).unwrap();
    let mut edge = EpisodicEnv::new(cfg).unwrap();
    big.reset(0);
    edge.reset(0);
    let a = big.step(&[50.0, -1e9]).unwrap();
    let b = edge.step(&[1.0, -1.0]).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        big.step(&[f64::NAN, 0.0]),
        Err(EnvError::NonFiniteAction)
    ));
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = toy_env();
    cfg.start_positions.clear();
    assert!(EpisodicEnv::new(cfg).is_err());
    assert!(EpisodicEnv::from_path("/nonexistent/env.json").is_err());
}
