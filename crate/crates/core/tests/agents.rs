mod common;

use coexlab::agents::{
    ddqn_target, gradient_step, q_forward, select_action, sync_target, td_target, train, AgentConfig, AgentKind,
    PolicySnapshot, QNetwork, ReplayBuffer, Transition,
};
use coexlab::env::Action;
use coexlab::rng::stream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{naive_forward, smooth_batch, DecreaseStub};

/// Largest per-layer relative error between analytic and central-difference
/// gradients.
fn finite_difference_error(net: &QNetwork<f64>, batch: &[(f64, Action)], targets: &[f64], h: f64) -> f64 {
    let (_, grad) = net.loss_and_gradient(batch, targets);
    let base = net.parameters();
    let mut probe = net.clone();
    let mut fd = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_parameters(&p);
        let up = probe.loss(batch, targets);
        p[i] = base[i] - h;
        probe.set_parameters(&p);
        let down = probe.loss(batch, targets);
        fd[i] = (up - down) / (2.0 * h);
    }
    let mut worst: f64 = 0.0;
    let mut offset = 0;
    for layer in &net.layers {
        for len in [layer.weights.len(), layer.biases.len()] {
            let range = offset..offset + len;
            let diff: f64 = range.clone().map(|i| (grad[i] - fd[i]).powi(2)).sum::<f64>().sqrt();
            let scale = range
                .clone()
                .map(|i| grad[i].powi(2))
                .sum::<f64>()
                .sqrt()
                .max(range.map(|i| fd[i].powi(2)).sum::<f64>().sqrt());
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
            offset += len;
        }
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20 {
        let hidden = [[8, 8], [16, 4], [64, 64], [5, 12]][trial % 4];
        let net = QNetwork::<f64>::random(&hidden, &mut rng);
        let n = rng.gen_range(1..=32);
        let (batch, targets) = smooth_batch(&net, n, 5.0, &mut rng);
        let err = finite_difference_error(&net, &batch, &targets, 1e-5);
        assert!(err < 1e-4, "trial {trial}: relative error {err}");
    }
}

#[test]
fn forward_matches_independent_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let net = QNetwork::<f64>::random(&[64, 64], &mut rng);
        let q = q_forward(&net, 0.7);
        let want = naive_forward(&net, 0.7);
        for k in 0..3 {
            assert!((q[k] - want[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn exploration_is_uniform_at_full_epsilon() {
    let net = QNetwork::<f64>::random(&[64, 64], &mut stream(1, 0));
    let mut rng = stream(1, 1);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[select_action(&net, 1.3, 1.0, &mut rng).index()] += 1;
    }
    let expected = n as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with two degrees of freedom.
    assert!(chi2 < 13.82, "{counts:?}");
    let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - expected).abs() < 3.0 * sigma));
}

#[test]
fn greedy_selection_is_deterministic() {
    let net = QNetwork::<f64>::random(&[16, 16], &mut stream(9, 0));
    let mut rng = stream(9, 1);
    let first = select_action(&net, 2.0, 0.0, &mut rng);
    assert!((0..100).all(|_| select_action(&net, 2.0, 0.0, &mut rng) == first));
}

#[test]
fn replay_evicts_oldest_first() {
    let mut buf = ReplayBuffer::new(5);
    for i in 0..12 {
        buf.push(Transition {
            s: i as f64,
            a: Action::Unchanged,
            r: 0.0,
            s_next: 0.0,
        });
        assert_eq!(buf.len(), (i + 1).min(5));
    }
    let kept: Vec<f64> = buf.iter().map(|t| t.s).collect();
    assert_eq!(kept, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
    assert!(buf.sample(6, &mut stream(0, 0)).is_none());
    let mut drawn: Vec<f64> = buf.sample(5, &mut stream(0, 0)).unwrap().iter().map(|t| t.s).collect();
    drawn.sort_by(f64::total_cmp);
    assert_eq!(drawn, kept);
}

#[test]
fn target_syncs_every_interval() {
    let mut rng = stream(4, 0);
    let mut online = QNetwork::<f64>::random(&[8, 8], &mut rng);
    let mut target = online.clone();
    let mut fired = Vec::new();
    for step in 1..=1000u64 {
        // Perturb the online net so a stale target is observable.
        let mut p = online.parameters();
        p[0] += 1e-3;
        online.set_parameters(&p);
        if sync_target(&online, &mut target, step, 100) {
            fired.push(step);
            assert_eq!(target, online);
        } else {
            assert_ne!(target, online);
        }
    }
    assert_eq!(fired, (1..=10).map(|k| k * 100).collect::<Vec<_>>());
}

#[test]
fn double_target_decouples_selection_from_evaluation() {
    // Online prefers action 0 at s = 2; the target rates action 0 low and
    // action 1 high. DQN takes the target max, DDQN the target value of the
    // online choice.
    let mut online = QNetwork::<f64>::zeros(&[1]);
    online.layers[0].biases[0] = 1.0;
    online.layers[1].biases = vec![5.0, 0.0, 0.0];
    let mut target = QNetwork::<f64>::zeros(&[1]);
    target.layers[1].biases = vec![1.0, 3.0, 0.0];
    let (r, gamma) = (0.5, 0.9);
    assert!((td_target(r, 2.0, &target, gamma) - (0.5 + 0.9 * 3.0)).abs() < 1e-12);
    assert!((ddqn_target(r, 2.0, &online, &target, gamma) - (0.5 + 0.9 * 1.0)).abs() < 1e-12);
}

#[test]
fn one_parameter_step_matches_hand_derivation() {
    // No hidden layer: q_a(s) = w_a (s - 1) + b_a. For one sample the loss is
    // (q - y)^2, so dL/dw_a = 2 (q - y)(s - 1) and dL/db_a = 2 (q - y).
    let mut net = QNetwork::<f64>::zeros(&[]);
    net.layers[0].weights = vec![0.5, -0.25, 0.0];
    net.layers[0].biases = vec![0.1, 0.2, 0.3];
    let (s, y, lr) = (3.0, 1.0, 0.1);
    let q = 0.5 * 2.0 + 0.1;
    let d = 2.0 * (q - y);
    gradient_step(&mut net, &[(s, Action::Increase)], &[y], lr).unwrap();
    assert!((net.layers[0].weights[0] - (0.5 - lr * d * 2.0)).abs() < 1e-15);
    assert!((net.layers[0].biases[0] - (0.1 - lr * d)).abs() < 1e-15);
    assert_eq!(net.layers[0].weights[1..], [-0.25, 0.0]);
    assert_eq!(net.layers[0].biases[1..], [0.2, 0.3]);
}

fn stub_config(episodes: usize) -> AgentConfig {
    AgentConfig {
        episodes,
        steps_per_episode: 50,
        ..AgentConfig::default()
    }
}

#[test]
fn dqn_learns_the_stub_optimum() {
    let log = train(&mut DecreaseStub::new(10), AgentKind::Dqn, &stub_config(120), 5).unwrap();
    let PolicySnapshot::Network(net) = &log.policy else {
        panic!("expected a network policy");
    };
    for i in 0..=88 {
        let s = 1.2 + 0.1 * i as f64;
        assert_eq!(
            log.policy.greedy(s),
            Action::Decrease,
            "s={s} q={:?}",
            q_forward(net, s)
        );
    }
    assert!(log.parameter_updates > 0);
    assert_eq!(log.target_syncs, log.parameter_updates / 100);
}

#[test]
fn baselines_and_tabular_behave_on_the_stub() {
    let cfg = stub_config(40);
    let fixed = train(&mut DecreaseStub::new(1), AgentKind::FixedLbt, &cfg, 1).unwrap();
    assert!(fixed.episodes.iter().all(|e| e.mean_reward == -1.0));
    assert_eq!(fixed.parameter_updates, 0);

    let mab = train(&mut DecreaseStub::new(1), AgentKind::Mab, &cfg, 1).unwrap();
    assert!(mab.tail(10).iter().all(|e| e.mean_reward > 1.5));

    let tab = train(&mut DecreaseStub::new(1), AgentKind::QLearning, &cfg, 1).unwrap();
    assert_eq!(tab.policy.greedy(3.0), Action::Decrease);
}

#[test]
fn training_is_deterministic_in_seed() {
    let cfg = stub_config(6);
    for kind in [AgentKind::Dqn, AgentKind::Ddqn, AgentKind::QLearning, AgentKind::Mab] {
        let a = train(&mut DecreaseStub::new(3), kind, &cfg, 42).unwrap();
        let b = train(&mut DecreaseStub::new(3), kind, &cfg, 42).unwrap();
        assert_eq!(a.rewards(), b.rewards(), "{kind:?}");
        assert_eq!(a.policy, b.policy, "{kind:?}");
    }
}

#[test]
fn batch_larger_than_replay_is_rejected() {
    let cfg = AgentConfig {
        batch_size: 128,
        replay_capacity: 64,
        ..AgentConfig::default()
    };
    let err = train(&mut DecreaseStub::new(0), AgentKind::Dqn, &cfg, 0).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("batch_size") && msg.contains("replay_capacity"), "{msg}");
}
