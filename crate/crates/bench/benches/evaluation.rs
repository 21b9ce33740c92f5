use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpg_core::dynamics::{inpg_step, ipg_step};
use mpg_core::envs::{build_scg_with, CostDescriptor, DagSpec, ScgOptions, StateSpace};
use mpg_core::exact::evaluate;
use mpg_core::rng::stream_rng;
use mpg_core::sampled::{estimate_eval, SampleConfig};
use mpg_core::{Environment, Logits};

fn scg(agents: usize, space: StateSpace) -> Environment {
    let dag = DagSpec::layered(&[2, 2], CostDescriptor::InverseLoad { base: 1.0 });
    build_scg_with(&dag, &ScgOptions { state_space: space, ..ScgOptions::new(agents, 0.99) }).unwrap().env
}

fn logits(env: &Environment) -> Logits {
    Logits::random_normal(env.mdp().layout().clone(), 1.0, &mut stream_rng(0, 0, 0))
}

fn exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_eval");
    for agents in [2, 3, 4] {
        let env = scg(agents, StateSpace::Full);
        let pol = logits(&env).softmax();
        g.bench_with_input(BenchmarkId::from_parameter(agents), &env, |b, env| {
            b.iter(|| evaluate(env, black_box(&pol)).unwrap())
        });
    }
    g.finish();
}

fn sampled(c: &mut Criterion) {
    let mut g = c.benchmark_group("sampled_eval");
    for agents in [4, 8] {
        let env = scg(agents, StateSpace::Reachable);
        let pol = logits(&env).softmax();
        let cfg = SampleConfig::new(20, 20, 1);
        g.bench_with_input(BenchmarkId::from_parameter(agents), &env, |b, env| {
            b.iter(|| estimate_eval(env.mdp(), black_box(&pol), &cfg).unwrap())
        });
    }
    g.finish();
}

fn steps(c: &mut Criterion) {
    let env = scg(4, StateSpace::Full);
    let theta = logits(&env);
    let rep = evaluate(&env, &theta.softmax()).unwrap();
    c.bench_function("inpg_step", |b| b.iter(|| inpg_step(black_box(&theta), &rep, 1e-4, 0.99).unwrap()));
    c.bench_function("ipg_step", |b| b.iter(|| ipg_step(black_box(&theta), env.mdp(), &rep, 1e-4).unwrap()));
}

criterion_group!(benches, exact, sampled, steps);
criterion_main!(benches);
