use leon_core::equivalence::PartitionSpec;
use leon_core::memory::Hyperparams;
use leon_core::optimizer::{evaluate_cohort, run_leon, Cohort, LeonConfig, LeonSetup, MethodSpec, RunConfig};
use leon_core::proposal::EngineSpec;
use leon_core::space::Context;
use leon_core::tasks::{Surrogate, SurrogateSpec, Task};

fn small_run(engine: EngineSpec) -> RunConfig {
    RunConfig {
        hyper: Hyperparams { budget: 96, batch_size: 16, ..Hyperparams::default() },
        leon: LeonConfig { engine, n_source: 64, partition: PartitionSpec::Random { n: 5 }, ..LeonConfig::default() },
    }
}

#[test]
fn runs_respect_budget_and_repeat_exactly() {
    let task = Task::dose();
    let s = Surrogate::new(&task, &SurrogateSpec::default(), 0).unwrap();
    let ctx = Context::reference(task.ctx_dim);
    for engine in [EngineSpec::Random {}, EngineSpec::default(), EngineSpec::HillClimb { step: 0.05 }] {
        let cfg = small_run(engine);
        let setup = LeonSetup::prepare(&task, &s, &cfg.leon, 4).unwrap();
        let a = run_leon(&setup, &s, &ctx, &cfg, 9).unwrap();
        let b = run_leon(&setup, &s, &ctx, &cfg, 9).unwrap();
        assert!(a.surrogate_evals <= 96);
        assert_eq!(a.memory.traces().len(), 6);
        assert_eq!(a.final_design, b.final_design);
        assert_eq!(a.memory.traces(), b.memory.traces());
        assert!(a.memory.traces().iter().all(|t| t.lambda >= 0.0 && t.mu_hat >= 0.0));
    }
}

#[test]
fn regimen_cohort_completes() {
    let task = Task::regimen(8, 1.0, 2);
    let s = Surrogate::new(&task, &SurrogateSpec::default(), 0).unwrap();
    let cohort = Cohort {
        hyper: Hyperparams { budget: 64, batch_size: 16, ..Hyperparams::default() },
        methods: vec![MethodSpec::Leon(small_run(EngineSpec::default()).leon), MethodSpec::SimulatedAnnealing, MethodSpec::SurrogateGreedy],
        n_patients: 3,
        seeds: vec![0, 1],
        context_seed: 1,
        jobs: 2,
    };
    let rep = evaluate_cohort(&task, &s, &cohort).unwrap();
    assert!(rep.failures.is_empty(), "{:?}", rep.failures);
    assert_eq!(rep.results.len(), 18);
    assert!(rep.summaries.iter().all(|m| m.n == 6 && m.mean.is_finite() && (1.0..=3.0).contains(&m.avg_rank)));
}

/// Live endpoint check; runs only when `CHAT_API_BASE` and `LEON_CHAT_MODEL` are set.
#[test]
fn chat_engine_against_live_endpoint() {
    let (Ok(_), Ok(model)) = (std::env::var("CHAT_API_BASE"), std::env::var("LEON_CHAT_MODEL")) else {
        eprintln!("skipped: CHAT_API_BASE / LEON_CHAT_MODEL not set");
        return;
    };
    let task = Task::dose();
    let s = Surrogate::new(&task, &SurrogateSpec::default(), 0).unwrap();
    let cfg = small_run(EngineSpec::ChatApi { endpoint: None, model, temperature: None, max_retries: 2 });
    let cfg = RunConfig { hyper: Hyperparams { budget: 16, batch_size: 8, ..cfg.hyper }, ..cfg };
    let setup = LeonSetup::prepare(&task, &s, &cfg.leon, 0).unwrap();
    let out = run_leon(&setup, &s, &Context::reference(task.ctx_dim), &cfg, 0).unwrap();
    assert!(out.surrogate_evals <= 16);
}
