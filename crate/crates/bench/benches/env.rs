use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use dealersim::agents::{LpAction, LtChoice};
use dealersim::ecn::EcnModel;
use dealersim::env::{Env, EnvConfig};

fn env_step(c: &mut Criterion) {
    let cfg = EnvConfig {
        n_lp: 3,
        n_lt_flow: 12,
        n_lt_pnl: 4,
        episode_len: 64,
        ..Default::default()
    };
    let engine = Arc::new(EcnModel::reference(&cfg.ecn).compile().unwrap());
    let mut env = Env::new(cfg.clone(), engine).unwrap();
    let quotes = vec![LpAction::default(); cfg.n_lp];
    let n_lt = env.n_lt();
    let choices: Vec<LtChoice> = (0..n_lt)
        .map(|j| if j % 2 == 0 { LtChoice::Buy } else { LtChoice::Sell })
        .collect();
    let mut episode = 0;
    env.reset(episode).unwrap();
    c.bench_function("env/step_3lp_16lt", |b| {
        b.iter(|| {
            env.quote(&quotes).unwrap();
            if env.trade(&choices).unwrap().done {
                episode += 1;
                env.reset(episode).unwrap();
            }
        })
    });
}

criterion_group!(benches, env_step);
criterion_main!(benches);
