use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dealersim::ecn::{EcnModel, OrderBook};
use dealersim::env::EnvConfig;
use dealersim::market::{Counterparty, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn filled_book(rng: &mut ChaCha8Rng) -> OrderBook {
    let mut book = OrderBook::new(0.01);
    for _ in 0..200 {
        let side = if rng.random() { Side::Buy } else { Side::Sell };
        let tick = match side {
            Side::Buy => rng.random_range(9950..10000),
            Side::Sell => rng.random_range(10001..10050),
        };
        let price = book.tick_to_price(tick);
        book.submit_limit(side, price, rng.random_range(0.5..4.0), Counterparty::Ecn).unwrap();
    }
    book
}

fn matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("book/market_sweep_25", |b| {
        b.iter_batched(
            || filled_book(&mut rng),
            |mut book| book.submit_market(Side::Buy, 25.0, Counterparty::Ecn).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("book/crossing_limit", |b| {
        b.iter_batched(
            || filled_book(&mut rng),
            |mut book| {
                let p = book.tick_to_price(9990);
                book.submit_limit(Side::Sell, p, 10.0, Counterparty::Ecn).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn evolve(c: &mut Criterion) {
    let cfg = EnvConfig::default();
    let engine = EcnModel::reference(&cfg.ecn).compile().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut book = engine.sample_initial_book(&mut rng).unwrap();
    c.bench_function("ecn/evolve_step", |b| {
        b.iter(|| {
            let m = book.mid_ticks2().unwrap();
            engine.evolve_book(&mut book, m, &mut rng);
            engine.refill_empty_sides(&mut book, m, &mut rng).unwrap();
        })
    });
}

criterion_group!(benches, matching, evolve);
criterion_main!(benches);
