use ssde::optim::{OptimConfig, RscoConfig};
use ssde::policy::{run_ssde, TrainConfig};
use ssde::problem::{builtin, dense_points, metric_lphy, recovery_check, sample_collocation};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "gamma01".into());
    let seed: u64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let spec = builtin(&name).expect("builtin problem");
    let colloc = sample_collocation(&spec, (256, 64, 64), seed);
    let tcfg = TrainConfig {
        batch: 500,
        max_epochs: 200,
        seed,
        ..Default::default()
    };
    let rcfg = RscoConfig {
        epsilon: 0.05,
        batch: 500,
    };
    let ocfg = OptimConfig::default();
    let t0 = std::time::Instant::now();
    let run = run_ssde(&spec, &colloc, &tcfg, &rcfg, &ocfg, true).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "{name}: epochs={} best_reward={:.9} evals={} stage2={} elapsed={dt:.1}s",
        run.log.len(),
        run.best_reward,
        run.total_evaluations,
        run.total_stage2
    );
    if let Some(best) = &run.best {
        let lphy = metric_lphy(best, &spec, &colloc);
        let dense = dense_points(&spec);
        let rec = recovery_check(best, &spec, &colloc, &dense);
        println!("best: {}", best.infix());
        println!("L_PHY = {lphy:.3e}  recovered = {rec}");
    }
    for rec in run.log.iter().take(3).chain(run.log.iter().rev().take(2)) {
        println!(
            "  epoch {:3}  best {:.6}  mean {:.4}  [{}]",
            rec.epoch, rec.best_reward, rec.mean_reward, rec.best_expression_infix
        );
    }
}
