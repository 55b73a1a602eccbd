use countlab::langdata::{oracle, Language};
use countlab::skcm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn w(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn all_words(alphabet: &[char], max_len: usize) -> Vec<Vec<char>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for word in &frontier {
            for &c in alphabet {
                let mut v: Vec<char> = word.clone();
                v.push(c);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn zero_mask_examples() {
    assert_eq!(zero_mask(&[0, 5]), vec![false, true]);
    assert_eq!(zero_mask(&[0, 0, 0]), vec![false, false, false]);
    assert_eq!(zero_mask(&[-3]), vec![true]);
}

#[test]
fn counter_op_examples() {
    use CounterOp::*;
    assert_eq!(apply_counter_ops(&[Inc, Reset, Keep], &[5, 2, 3]).unwrap(), vec![6, 0, 3]);
    assert_eq!(apply_counter_ops(&[Keep, Keep], &[-4, 9]).unwrap(), vec![-4, 9]);
    assert_eq!(apply_counter_ops(&[Dec], &[0]).unwrap(), vec![-1]);
    assert!(apply_counter_ops(&[Inc], &[i64::MAX]).is_err());
    assert!(apply_counter_ops(&[Inc, Inc], &[0]).is_err());
}

#[test]
fn machine_steps() {
    let m = build_anbn();
    let qa = m.state_index("q_a").unwrap();
    let qb = m.state_index("q_b").unwrap();
    let qr = m.state_index("q_r").unwrap();
    let c = m.step(&SkcmConfig { state: qa, counters: vec![0] }, 'a').unwrap();
    assert_eq!(c, SkcmConfig { state: qa, counters: vec![1] });
    let c = m.step(&SkcmConfig { state: qb, counters: vec![1] }, 'a').unwrap();
    assert_eq!(c, SkcmConfig { state: qr, counters: vec![2] });

    let m3 = build_anbncn();
    let c = m3.step(&SkcmConfig { state: m3.state_index("q_b").unwrap(), counters: vec![2, 1] }, 'c').unwrap();
    assert_eq!(c, SkcmConfig { state: m3.state_index("q_c").unwrap(), counters: vec![2, 0] });
}

#[test]
fn machine_shapes() {
    let m = build_anbn();
    assert_eq!((m.states().len(), m.counters()), (3, 1));
    assert_eq!(m.update('a').unwrap(), &[CounterOp::Inc]);
    assert_eq!(m.update('b').unwrap(), &[CounterOp::Dec]);
    let accepting: Vec<_> = m.accepting().collect();
    assert_eq!(accepting, vec![(m.state_index("q_b").unwrap(), vec![false])]);
    let m3 = build_anbncn();
    assert_eq!((m3.states().len(), m3.counters()), (4, 2));
    assert_eq!(m3.update('b').unwrap(), &[CounterOp::Dec, CounterOp::Inc]);
    assert!(m.is_counter_blind() && m3.is_counter_blind());
}

#[test]
fn membership_examples() {
    let m = build_anbn();
    assert!(m.accepts(&w("aabb")).unwrap());
    assert!(!m.accepts(&w("")).unwrap());
    let m3 = build_anbncn();
    assert!(m3.accepts(&w("abc")).unwrap());
    assert!(!m3.accepts(&w("abcc")).unwrap());
    assert!(m.accepts(&w("abz")).is_err());
}

#[test]
fn machines_match_oracles_exhaustively() {
    let anbn = build_anbn();
    let generic = build_a1_to_am(2).unwrap();
    let words = all_words(&['a', 'b'], 12);
    assert_eq!(words.len(), (1 << 13) - 1);
    for word in &words {
        let expected = oracle(Language::AnBn, word).unwrap();
        assert_eq!(anbn.accepts(word).unwrap(), expected);
        assert_eq!(generic.accepts(word).unwrap(), expected);
    }
    let m4 = build_a1_to_am(4).unwrap();
    for word in all_words(&['a', 'b', 'c', 'd'], 8) {
        assert_eq!(m4.accepts(&word).unwrap(), oracle(Language::Blocks(4), &word).unwrap());
    }
}

#[test]
fn config_bounds() {
    let m = build_anbn();
    assert_eq!(config_count_bound(&m, 5).unwrap(), 33);
    assert_eq!(config_count_bound(&m, 6).unwrap(), 39);
    let m3 = build_anbncn();
    assert_eq!(config_count_bound(&m3, 2).unwrap(), 4 * 25);
    assert!(config_count_bound(&build_a1_to_am(17).unwrap(), u64::MAX / 4).is_err());
}

#[test]
fn pigeonhole_pairs_are_indistinguishable() {
    let m = build_anbn();
    let (w1, w2) = pigeonhole_collision(&m, &['a', 'b'], 6, DEFAULT_ENUMERATION_CAP).unwrap().unwrap();
    assert_ne!(w1, w2);
    assert_eq!(m.run(&w1).unwrap(), m.run(&w2).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let len = rng.gen_range(0..15);
        let suffix: Vec<char> = (0..len).map(|_| if rng.gen_bool(0.5) { 'a' } else { 'b' }).collect();
        assert_eq!(
            m.accepts(&[w1.clone(), suffix.clone()].concat()).unwrap(),
            m.accepts(&[w2.clone(), suffix].concat()).unwrap()
        );
    }
    // Two words of length one reach different configurations.
    assert_eq!(pigeonhole_collision(&m, &['a', 'b'], 1, DEFAULT_ENUMERATION_CAP).unwrap(), None);
    assert!(pigeonhole_collision(&m, &['a', 'b'], 30, DEFAULT_ENUMERATION_CAP).is_err());
}

#[test]
fn machine_json_round_trips() {
    for m in [build_anbn(), build_anbncn(), build_a1_to_am(5).unwrap()] {
        let back = SkcmDef::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
    assert!(SkcmDef::from_json("{}").is_err());
}
