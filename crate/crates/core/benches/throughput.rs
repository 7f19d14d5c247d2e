use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use netsac::environments::line_env;
use netsac::experiment::evaluate_policy;
use netsac::mdp::rollout;
use netsac::rng::SeedKey;
use netsac::sac::critic::critic_on_trajectory;
use netsac::sac::CriticSchedule;
use netsac::{Execution, LocalizedPolicyTable};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn critic(c: &mut Criterion) {
    let mdp = line_env(16, 0.7).unwrap();
    let policy = LocalizedPolicyTable::uniform(mdp.spaces());
    let schedule = CriticSchedule::new(200.0, 200.0, 10_000).unwrap();
    let traj = rollout(&mdp, &policy, schedule.horizon, SeedKey::new(1)).unwrap();
    let mut group = c.benchmark_group("critic_line16_T1e4");
    for (name, exec) in MODES {
        for kappa in [1, 3] {
            group.bench_with_input(BenchmarkId::new(name, kappa), &kappa, |b, &k| {
                b.iter(|| critic_on_trajectory(&mdp, &traj, k, &schedule, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let mdp = line_env(16, 0.7).unwrap();
    let policy = LocalizedPolicyTable::uniform(mdp.spaces());
    let mut group = c.benchmark_group("evaluate_line16_200_episodes");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| evaluate_policy(&mdp, &policy, 200, 1e-4, SeedKey::new(2), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = critic, evaluation
}
criterion_main!(benches);
