use std::collections::HashMap;

use bifree::bimatrix::{build_fock_matrix, word_moment, Factor, MomentValue, Stat, Variant};
use bifree::cumulants::{
    bi_poisson_cumulant, clt_moment, cumulant, moment_from_cumulants, moment_from_cumulants_cached, CovarianceSpec,
    Letter, Word,
};
use bifree::fock::{q_inner, vacuum_expectation, BasisLabel, FockOp};
use bifree::limits::{boolean_evaluate, boolean_limit, monotone_limit, monotone_word_value, MonotonePattern};
use bifree::partitions::{enumerate_bnc, is_bi_non_crossing, mobius_bnc, ChiMap, MobiusCache, SetPartition, Side};
use bifree::rational::{int, ratio, CheckedRational};
use bifree::Rational;
use proptest::prelude::*;

fn p(n: usize, blocks: &[&[usize]]) -> SetPartition {
    SetPartition::from_blocks(n, &blocks.iter().map(|b| b.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn permutation_and_crossing_examples() {
    let chi = ChiMap::parse("rllrrl").unwrap();
    assert_eq!(chi.s_chi(), vec![2, 3, 6, 5, 4, 1]);
    assert!(is_bi_non_crossing(&p(6, &[&[1, 4], &[2, 5], &[3, 6]]), &chi).unwrap());
    assert!(!is_bi_non_crossing(&p(4, &[&[1, 3], &[2, 4]]), &ChiMap::parse("llll").unwrap()).unwrap());
    let pairs = enumerate_bnc(&ChiMap::parse("llrr").unwrap(), true).unwrap();
    assert_eq!(pairs, vec![p(4, &[&[1, 2], &[3, 4]]), p(4, &[&[1, 3], &[2, 4]])]);
}

#[test]
fn mobius_of_the_full_interval_at_four_points() {
    let mut cache = MobiusCache::new();
    for chi in ChiMap::all_of_length(4) {
        assert_eq!(
            mobius_bnc(&SetPartition::singletons(4), &SetPartition::full(4), &chi, &mut cache).unwrap(),
            int(-5)
        );
    }
}

#[test]
fn semicircle_free_cumulants_vanish_beyond_second_order() {
    let catalan = [1, 0, 1, 0, 2, 0, 5];
    let f = |w: &Word| -> bifree::Result<Rational> { Ok(int(catalan[w.len()])) };
    let mut cache = MobiusCache::new();
    for n in 1..=6 {
        let w = Word::new(vec![Letter::new("s", Side::Left); n]);
        let k = cumulant(&w, &f, &mut cache).unwrap();
        assert_eq!(k, if n == 2 { int(1) } else { int(0) }, "n = {n}");
    }
}

#[test]
fn poisson_and_gaussian_oracles() {
    let (half, one) = (ratio(1, 2), int(1));
    let w = Word::parse("x.l x.r").unwrap();
    let m: Rational = moment_from_cumulants(&w, |chi, _| Ok(bi_poisson_cumulant(chi, &half, &one, &one))).unwrap();
    assert_eq!(m, ratio(3, 4));
    assert_eq!(bi_poisson_cumulant(&ChiMap::parse("lrr").unwrap(), &half, &int(2), &int(3)), int(9));
    let cov = CovarianceSpec::unit_pair(ratio(1, 3)).unwrap();
    let v = clt_moment(&ChiMap::parse("llrr").unwrap(), &cov, &["l", "l", "r", "r"]).unwrap();
    assert_eq!(v, ratio(10, 9));
}

#[test]
fn q_fock_examples() {
    let h = BasisLabel::Plain(0);
    let g = BasisLabel::Plain(1);
    let q = ratio(1, 3);
    assert_eq!(q_inner(&[h, h], &[h, h], &q).unwrap(), ratio(4, 3));
    assert_eq!(q_inner(&[h, g], &[h, g], &q).unwrap(), int(1));
    let s = [FockOp::CreateLeft(h), FockOp::AnnihilateLeft(h)];
    let fourth: Vec<FockOp> = (0..4).flat_map(|_| s).collect();
    let mut total = int(0);
    for mask in 0..16u32 {
        let ops: Vec<FockOp> = (0..4).map(|b| fourth[2 * b + ((mask >> b) & 1) as usize]).collect();
        total += vacuum_expectation(&q, &ops).unwrap();
    }
    assert_eq!(total, int(2) + q);
}

#[test]
fn free_fock_matrices_reproduce_the_vacuum_state() {
    let q = int(0);
    for n in [2, 3] {
        let l = build_fock_matrix(Side::Left, Variant::Plain, 1, n, &q).unwrap();
        let ls = build_fock_matrix(Side::Left, Variant::Star, 1, n, &q).unwrap();
        let r = build_fock_matrix(Side::Right, Variant::Plain, 1, n, &q).unwrap();
        let word = [Factor::Matrix(&ls), Factor::Matrix(&r), Factor::Matrix(&ls), Factor::Matrix(&l)];
        let MomentValue::Trace(v) = word_moment(&word, Stat::Trace).unwrap() else { unreachable!() };
        let h = BasisLabel::Plain(1);
        let ops = [FockOp::AnnihilateLeft(h), FockOp::CreateRight(h), FockOp::AnnihilateLeft(h), FockOp::CreateLeft(h)];
        assert_eq!(v, vacuum_expectation(&q, &ops).unwrap(), "N = {n}");
    }
}

#[test]
fn boolean_and_monotone_values() {
    assert_eq!(boolean_evaluate(&[1, 1], 10).unwrap().direct, ratio(4, 5));
    assert_eq!(boolean_evaluate(&[1, 2], 10).unwrap().direct, int(0));
    assert_eq!(boolean_limit(&[1, 1, 2, 2]), int(1));
    assert_eq!(boolean_limit(&[1, 2, 1, 2]), int(0));
    let p = MonotonePattern::new(vec![0, 0], vec![2]).unwrap();
    assert_eq!(monotone_word_value(&p, 10).unwrap(), ratio(4, 5));
    assert_eq!(monotone_limit(&MonotonePattern::parse("s1^4").unwrap()).unwrap(), int(2));
}

fn arb_dataset() -> impl Strategy<Value = (Vec<Side>, Vec<(i64, i64)>)> {
    (1usize..=5).prop_flat_map(|n| {
        (
            proptest::collection::vec(prop_oneof![Just(Side::Left), Just(Side::Right)], n),
            proptest::collection::vec((-9i64..=9, 1i64..=7), 1usize << n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_over_distinct_letters((sides, values) in arb_dataset()) {
        let n = sides.len();
        let letters: Vec<Letter> = sides.iter().enumerate().map(|(k, s)| Letter::new(format!("z{k}"), *s)).collect();
        let word = Word::new(letters.clone());
        let mut moments: HashMap<Word, Rational> = HashMap::new();
        for mask in 1..(1usize << n) {
            let positions: Vec<usize> = (1..=n).filter(|k| mask >> (k - 1) & 1 == 1).collect();
            let (a, b) = values[mask];
            moments.insert(word.subword(&positions), ratio(a, b));
        }
        let f = |w: &Word| -> bifree::Result<Rational> {
            Ok(if w.is_empty() { int(1) } else { moments[w].clone() })
        };
        let mut cache = MobiusCache::new();
        let mut kappas: HashMap<Word, Rational> = HashMap::new();
        for w in moments.keys() {
            kappas.insert(w.clone(), cumulant(w, &f, &mut cache).unwrap());
        }
        let back: Rational = moment_from_cumulants_cached(&word, &mut cache, |_, sub| Ok(kappas[sub].clone())).unwrap();
        prop_assert_eq!(&back, &moments[&word]);

        let g = |w: &Word| -> bifree::Result<CheckedRational> {
            Ok(CheckedRational::from_rational(&f(w)?))
        };
        let fast = cumulant(&word, &g, &mut cache).unwrap();
        prop_assert_eq!(fast.to_rational(), Some(kappas[&word].clone()));
    }
}
