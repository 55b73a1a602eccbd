use countlab::cells::*;
use countlab::constructions::build_counting_lstm;
use countlab::numerics::Matrix;
use countlab::{CellKind, Language, LstmOutput, Precision, Recognizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p23() -> Precision {
    Precision::state(23).unwrap()
}

fn random_srnn(rng: &mut ChaCha8Rng, d: usize, n: usize) -> CellParams {
    let mut m = |r, c| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let gate = Gate { w: m(n, d), u: m(n, n), b: m(n, 1).as_slice().to_vec() };
    CellParams::new(CellKind::Srnn, d, n, vec![gate]).unwrap()
}

fn trajectory(params: &CellParams, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut s = CellState::zeros(params);
    inputs
        .iter()
        .map(|x| {
            s = step(params, &s, x, p23()).unwrap();
            s.h.clone()
        })
        .collect()
}

#[test]
fn pinned_gru_and_lstm_follow_the_srnn() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut control_diverged = 0;
    for case in 0..100 {
        let d = 3;
        let n = if case == 0 { 6 } else { rng.gen_range(1..8) };
        let srnn = random_srnn(&mut rng, d, n);
        let len = if case == 0 { 20 } else { rng.gen_range(1..=50) };
        let inputs: Vec<Vec<f64>> = (0..len).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let reference = trajectory(&srnn, &inputs);
        for target in [PinTarget::Gru, PinTarget::Lstm] {
            let pinned = pin_to_srnn(&srnn, target).unwrap();
            let got = trajectory(&pinned, &inputs);
            for (a, b) in got.iter().flatten().zip(reference.iter().flatten()) {
                assert!((a - b).abs() <= 1e-6, "{target:?} case {case}: {a} vs {b}");
            }
        }
        // Negative control: a tanh output squashes twice.
        let lstm_tanh = with_lstm_output(&pin_to_srnn(&srnn, PinTarget::Lstm).unwrap(), LstmOutput::Tanh).unwrap();
        let got = trajectory(&lstm_tanh, &inputs);
        if got.iter().flatten().zip(reference.iter().flatten()).any(|(a, b)| (a - b).abs() > 1e-3) {
            control_diverged += 1;
        }
    }
    assert!(control_diverged > 90, "{control_diverged}");
}

#[test]
fn pinning_rejects_non_srnn_input() {
    let gru = CellParams::zeros(CellKind::Gru, 2, 2);
    assert!(pin_to_srnn(&gru, PinTarget::Lstm).is_err());
    let srnn = CellParams::zeros(CellKind::Srnn, 2, 2);
    assert!(pin_to_srnn(&srnn, PinTarget::Srnn).is_err());
}

#[test]
fn saturated_gates_copy_state() {
    let mut gru = CellParams::zeros(CellKind::Gru, 1, 2);
    gru.gate_mut(GRU_Z).b = vec![SATURATION; 2];
    gru.gate_mut(GRU_H).b = vec![0.9, -0.4];
    let s = CellState { h: vec![0.125, -0.75], c: None };
    assert_eq!(step(&gru, &s, &[1.0], p23()).unwrap(), s);
}

#[test]
fn counting_lstm_hand_simulation() {
    let r = build_counting_lstm(Language::AnBn, LstmOutput::Tanh).unwrap();
    let out = r.run_str("aabb", p23()).unwrap();
    assert_eq!(out.state.c.as_ref().unwrap()[0], 0.0);
    assert!(out.accept);
    let out = r.run_str("aab", p23()).unwrap();
    assert_eq!(out.state.c.as_ref().unwrap()[0], 1.0);
    assert!(!out.accept);
}

#[test]
fn empty_word_reads_the_zero_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = countlab::training::init_recognizer(CellKind::Gru, vec!['a', 'b'], 3, 2, 1.0, &mut rng).unwrap();
    let out = r.run(&[], p23()).unwrap();
    assert_eq!(out.score, r.readout.score(&[0.0; 3], p23()).unwrap());
    assert_eq!(out.state, CellState::zeros(&r.cell));
}

#[test]
fn errors_are_reported() {
    let params = CellParams::zeros(CellKind::Srnn, 2, 3);
    let s = CellState::zeros(&params);
    assert!(step(&params, &s, &[1.0], p23()).is_err());
    let r = Recognizer::one_hot(vec!['a', 'b'], params, Readout::linear(vec![0.0; 3], 0.0)).unwrap();
    assert!(r.run_str("abc", p23()).is_err());
    assert!(CellParams::new(CellKind::Gru, 2, 3, vec![Gate::zeros(2, 3)]).is_err());
    assert!(Recognizer::one_hot(vec!['a', 'a'], CellParams::zeros(CellKind::Srnn, 2, 1), Readout::linear(vec![0.0], 0.0))
        .is_err());
}

#[test]
fn lstm_tanh_output_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = countlab::training::init_recognizer(CellKind::Lstm(LstmOutput::Tanh), vec!['a', 'b'], 4, 0, 3.0, &mut rng)
        .unwrap();
    let word: Vec<char> = (0..300).map(|i| if i % 7 < 4 { 'a' } else { 'b' }).collect();
    for s in r.states(&word, p23()).unwrap() {
        assert!(s.h.iter().all(|v| v.abs() <= 1.0));
    }
}
