use countlab::langdata::{generate_training_set, DatasetConfig, Sample};
use countlab::training::*;
use countlab::{CellKind, Language, LstmOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [CellKind; 5] = [
    CellKind::Srnn,
    CellKind::Irnn,
    CellKind::Gru,
    CellKind::Lstm(LstmOutput::Tanh),
    CellKind::Lstm(LstmOutput::Identity),
];

fn random_sample(rng: &mut ChaCha8Rng, len: usize) -> Sample {
    let word = (0..len).map(|_| if rng.gen_bool(0.5) { 'a' } else { 'b' }).collect();
    Sample { word, label: rng.gen_bool(0.5) }
}

#[test]
fn srnn_loss_matches_a_hand_written_forward_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let r = init_recognizer(CellKind::Srnn, vec!['a', 'b'], 3, 0, 0.9, &mut rng).unwrap();
        let len = rng.gen_range(0..12);
        let s = random_sample(&mut rng, len);
        let g = r.cell.gate(0);
        let mut h = vec![0.0; 3];
        for &c in &s.word {
            let x = if c == 'a' { 0 } else { 1 };
            h = (0..3)
                .map(|i| (g.w.get(i, x) + (0..3).map(|j| g.u.get(i, j) * h[j]).sum::<f64>() + g.b[i]).tanh())
                .collect();
        }
        let score: f64 = (0..3).map(|i| r.readout.out_w[i] * h[i]).sum::<f64>() + r.readout.out_b;
        let z = score - r.threshold;
        let p = 1.0 / (1.0 + (-z).exp());
        let expected = if s.label { -p.ln() } else { -(1.0 - p).ln() };
        let got = loss(&r, &s).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn bce_is_stable_at_extreme_logits() {
    assert_eq!(bce_with_logit(800.0, true), 0.0);
    assert!((bce_with_logit(-800.0, true) - 800.0).abs() < 1e-9);
    assert!((bce_with_logit(0.0, false) - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in KINDS {
        for readout_hidden in [0, 3] {
            let mut worst: f64 = 0.0;
            for _ in 0..5 {
                let r = init_recognizer(kind, vec!['a', 'b'], 4, readout_hidden, 0.8, &mut rng).unwrap();
                let s = random_sample(&mut rng, 8);
                let rep = grad_check(&r, &s, 1e-5).unwrap();
                assert_eq!(rep.checked + rep.skipped_at_kinks, parameter_count(&r));
                worst = worst.max(rep.max_rel_error);
            }
            assert!(worst < 1e-4, "{} readout {readout_hidden}: {worst}", kind.name());
        }
    }
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let data = DatasetConfig { n_min: 1, n_max: 6, count: 200, dev_fraction: 0.2, seed: 1 };
    let (tr, dev) = generate_training_set(Language::AnBn, &data).unwrap();
    let cfg = TrainConfig { learning_rate: 0.1, max_epochs: 8, seed: 3, ..TrainConfig::default() };
    let a = train(CellKind::Lstm(LstmOutput::Tanh), 4, &['a', 'b'], &tr, &dev, &cfg).unwrap();
    let b = train(CellKind::Lstm(LstmOutput::Tanh), 4, &['a', 'b'], &tr, &dev, &cfg).unwrap();
    assert_eq!(a.final_model.to_json(), b.final_model.to_json());
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.loss_history.len(), a.epochs_run);
    assert!(a.loss_history.last().unwrap() < &a.loss_history[0], "{:?}", a.loss_history);
    assert_eq!(a.dev_accuracy_history[a.best_epoch - 1], a.best_dev_accuracy());
    if a.reached_full_dev {
        assert_eq!(a.best_dev_accuracy(), 1.0);
        assert_eq!(a.epochs_run, a.best_epoch);
    }
    let other = train(CellKind::Lstm(LstmOutput::Tanh), 4, &['a', 'b'], &tr, &dev, &TrainConfig { seed: 4, ..cfg })
        .unwrap();
    assert_ne!(other.final_model.to_json(), a.final_model.to_json());
}

#[test]
fn invalid_training_inputs() {
    let s = vec![Sample { word: vec!['a', 'b'], label: true }];
    let cfg = TrainConfig::default();
    assert!(train(CellKind::Srnn, 2, &['a', 'b'], &[], &s, &cfg).is_err());
    assert!(train(CellKind::Srnn, 2, &['a', 'b'], &s, &[], &cfg).is_err());
    assert!(train(CellKind::Srnn, 0, &['a', 'b'], &s, &s, &cfg).is_err());
    assert!(train(CellKind::Srnn, 2, &['a', 'b'], &s, &s, &TrainConfig { learning_rate: -1.0, ..cfg.clone() }).is_err());
    assert!(train(CellKind::Srnn, 2, &['a', 'b'], &s, &s, &TrainConfig { max_epochs: 0, ..cfg.clone() }).is_err());
    let bad = vec![Sample { word: vec!['z'], label: true }];
    assert!(train(CellKind::Srnn, 2, &['a', 'b'], &bad, &s, &cfg).is_err());
}
