use countlab::acceptor::FnAcceptor;
use countlab::cells::{CellParams, Readout};
use countlab::constructions::{build_counting_irnn, build_counting_lstm};
use countlab::eval::*;
use countlab::langdata::{block_word, generate_eval_set, generate_training_set, oracle, DatasetConfig, EVAL_SET_SIZE};
use countlab::skcm::build_anbn;
use countlab::{CellKind, Error, Language, LstmOutput, Precision, Recognizer};

fn p23() -> Precision {
    Precision::state(23).unwrap()
}

#[test]
fn exact_machine_sweeps_clean() {
    let report = sweep(&build_anbn(), Language::AnBn, 300).unwrap();
    assert_eq!(report.max_correct_n, 300);
    assert!(report.anomalies.is_empty());
    let oracle_acceptor = FnAcceptor(|w: &[char]| -> std::result::Result<bool, Error> { Ok(oracle(Language::AnBnCn, w)?) });
    let report = sweep(&oracle_acceptor, Language::AnBnCn, 60).unwrap();
    assert_eq!(report.max_correct_n, 60);
}

#[test]
fn accept_all_fails_at_one() {
    let all = FnAcceptor(|_: &[char]| -> std::result::Result<bool, Error> { Ok(true) });
    let report = sweep(&all, Language::AnBn, 20).unwrap();
    assert_eq!(report.max_correct_n, 0);
    assert_eq!(report.anomalies[0].n, 1);
    assert!(report.anomalies.windows(2).all(|w| w[0].n <= w[1].n));
}

#[test]
fn sweep_reports_the_first_wrong_n() {
    // Wrong only on a^n b^(n+1) for n >= 17.
    let flawed = FnAcceptor(|w: &[char]| -> std::result::Result<bool, Error> {
        let a = w.iter().take_while(|&&c| c == 'a').count();
        let b = w.len() - a;
        let block = w[a..].iter().all(|&c| c == 'b');
        Ok((block && a > 0 && a == b) || (block && a >= 17 && b == a + 1))
    });
    let report = sweep(&flawed, Language::AnBn, 40).unwrap();
    assert_eq!(report.max_correct_n, 16);
    assert_eq!(report.anomalies[0].n, 17);
    assert!(report.anomalies.iter().all(|a| a.n >= 17));
}

#[test]
fn sweep_words_cover_perturbations() {
    let words = sweep_words(2, 5);
    assert!(words.iter().any(|(l, _)| l == &vec![5, 5]));
    assert!(words.iter().any(|(l, _)| l == &vec![3, 5]));
    assert!(words.iter().any(|(l, _)| l == &vec![5, 7]));
    assert!(words.iter().all(|(l, _)| l.len() == 2));
}

#[test]
fn constructions_sweep_clean() {
    let lstm = build_counting_lstm(Language::AnBn, LstmOutput::Tanh).unwrap();
    let report = sweep_recognizer(&lstm, Language::AnBn, 500, p23()).unwrap();
    assert_eq!((report.max_correct_n, report.anomalies.len()), (500, 0));
    let irnn = build_counting_irnn(Language::AnBnCn).unwrap();
    let report = sweep_recognizer(&irnn, Language::AnBnCn, 300, p23()).unwrap();
    assert_eq!((report.max_correct_n, report.anomalies.len()), (300, 0));
}

#[test]
fn traces_and_counting_dimensions() {
    let lstm = build_counting_lstm(Language::AnBn, LstmOutput::Tanh).unwrap();
    let word = block_word(&[100, 100]);
    let tr = trace(&lstm, &word, p23()).unwrap();
    assert_eq!(tr.len(), 200);
    assert_eq!(tr[0].t, 1);
    let ramp: Vec<f64> = tr.iter().map(|r| r.state[0]).collect();
    let expected: Vec<f64> = (1..=100).chain((0..100).rev()).map(|v| v as f64).collect();
    assert_eq!(ramp, expected);
    assert_eq!(detect_counting_dims(&tr, &word, COUNTING_THETA).unwrap(), vec![0]);
    assert!(trace(&lstm, &[], p23()).unwrap().is_empty());
    assert!(detect_counting_dims(&tr, &['a', 'b', 'a'], COUNTING_THETA).is_err());

    let lstm3 = build_counting_lstm(Language::AnBnCn, LstmOutput::Tanh).unwrap();
    let word3 = block_word(&[30, 30, 30]);
    let tr3 = trace(&lstm3, &word3, p23()).unwrap();
    assert_eq!(detect_counting_dims(&tr3, &word3, COUNTING_THETA).unwrap(), vec![0, 1]);

    let constant = Recognizer::one_hot(
        vec!['a', 'b'],
        CellParams::zeros(CellKind::Gru, 2, 3),
        Readout::linear(vec![0.0; 3], 0.0),
    )
    .unwrap();
    let tr = trace(&constant, &word, p23()).unwrap();
    assert!(detect_counting_dims(&tr, &word, COUNTING_THETA).unwrap().is_empty());
}

#[test]
fn trace_artifacts() {
    let lstm = build_counting_lstm(Language::AnBn, LstmOutput::Tanh).unwrap();
    let tr = trace(&lstm, &['a', 'a', 'b'], p23()).unwrap();
    let csv = trace_csv(&tr);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("t,symbol,d0,d1"));
    assert_eq!(parse_trace_csv(&csv).unwrap(), tr);

    // Values that need all 17 significant digits survive.
    let mut odd = tr.clone();
    odd[1].state[2] = 0.1 + 0.2;
    odd[2].state[0] = -1e-300 / 3.0;
    assert_eq!(parse_trace_csv(&trace_csv(&odd)).unwrap(), odd);

    let dir = tempfile::tempdir().unwrap();
    let (csv_path, svg_path) = emit_trace_artifacts(&tr, &dir.path().join("trace.out")).unwrap();
    assert_eq!(csv_path.extension().unwrap(), "csv");
    let svg = std::fs::read_to_string(svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), lstm.cell.hidden_dim());
    assert!(emit_trace_artifacts(&tr, &dir.path().join("missing/dir/x")).is_err());
    assert!(emit_trace_artifacts(&[], &dir.path().join("empty")).is_err());
}

#[test]
fn accuracy_bounds() {
    let set = generate_eval_set(Language::AnBn, EVAL_SET_SIZE, 8).unwrap();
    let truth = FnAcceptor(|w: &[char]| -> std::result::Result<bool, Error> { Ok(oracle(Language::AnBn, w)?) });
    let liar = FnAcceptor(|w: &[char]| -> std::result::Result<bool, Error> { Ok(!oracle(Language::AnBn, w)?) });
    assert_eq!(accuracy(&truth, &set).unwrap(), 1.0);
    assert_eq!(accuracy(&liar, &set).unwrap(), 0.0);
    assert!(accuracy(&truth, &[]).is_err());

    let lstm = build_counting_lstm(Language::AnBn, LstmOutput::Tanh).unwrap();
    assert_eq!(accuracy_at(&lstm, &set, p23()).unwrap(), 1.0);
    let (train, dev) = generate_training_set(Language::AnBn, &DatasetConfig::default()).unwrap();
    assert_eq!(accuracy(&build_anbn(), &train).unwrap(), 1.0);
    assert_eq!(accuracy(&build_anbn(), &dev).unwrap(), 1.0);
}
