mod support {
    pub mod naive_book;
}

use dealersim::ecn::OrderBook;
use dealersim::market::Side;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::naive_book::{apply_real, compare, random_ops, NaiveBook, Op};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_naive_reference(seed in any::<u64>(), len in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = random_ops(&mut rng, len);
        if let Err(e) = compare(&ops) {
            prop_assert!(false, "{e}");
        }
    }

    #[test]
    fn book_never_stays_crossed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut book = OrderBook::new(0.01);
        let mut naive = NaiveBook::new();
        for op in random_ops(&mut rng, 30) {
            let issued = naive.issued.clone();
            apply_real(&mut book, &issued, op);
            naive.apply(op);
            if let (Some(b), Some(a)) = (book.best_bid_tick(), book.best_ask_tick()) {
                prop_assert!(b < a);
            }
        }
    }

    #[test]
    fn executed_volume_is_conserved(seed in any::<u64>(), qty in 0.5f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut book = OrderBook::new(0.01);
        let mut naive = NaiveBook::new();
        for op in random_ops(&mut rng, 20) {
            let issued = naive.issued.clone();
            apply_real(&mut book, &issued, op);
            naive.apply(op);
        }
        let before = book.total_volume(Side::Sell);
        let ex = book.submit_market(Side::Buy, qty, dealersim::market::Counterparty::Ecn).unwrap();
        prop_assert!((ex.executed + ex.unfilled - qty).abs() < 1e-9);
        prop_assert!((before - book.total_volume(Side::Sell) - ex.executed).abs() < 1e-9);
        prop_assert!(ex.fills.windows(2).all(|w| w[0].price <= w[1].price));
    }
}

#[test]
fn same_level_fills_oldest_first() {
    let ops = [
        Op::Limit { side: Side::Sell, tick: 10001, qty: 1.0 },
        Op::Limit { side: Side::Sell, tick: 10001, qty: 2.0 },
        Op::Limit { side: Side::Sell, tick: 10000, qty: 1.0 },
        Op::Market { side: Side::Buy, qty: 2.5 },
    ];
    compare(&ops).unwrap();
    let mut book = OrderBook::new(0.01);
    for op in &ops[..3] {
        apply_real(&mut book, &[], *op);
    }
    let fills = apply_real(&mut book, &[], ops[3]);
    assert_eq!(fills, vec![(3, 10000, 1.0), (1, 10001, 1.0), (2, 10001, 0.5)]);
}
