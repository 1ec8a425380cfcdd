use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use ssde::diffeval::differentiate;
use ssde::expr::{build_tree, StructureLimits, Var};
use ssde::optim::{optimize_constants, OptimConfig};
use ssde::policy::{sample_skeleton, PolicyState};
use ssde::problem::{builtin, reward, sample_collocation, Candidate, LossKind};
use std::time::Instant;

fn main() {
    let spec = builtin("gamma01").unwrap();
    let colloc = sample_collocation(&spec, (256, 64, 64), 1);
    let lib = spec.library.clone();
    let limits = StructureLimits::default();
    let policy = PolicyState::new(lib.len(), 32, 7);
    let mut rng = ChaCha20Rng::seed_from_u64(1);

    let t = Instant::now();
    let records: Vec<_> = (0..500)
        .map(|_| sample_skeleton(&policy, &lib, &limits, &mut rng).unwrap())
        .collect();
    println!("sampling 500: {:.2}s", t.elapsed().as_secs_f64());

    let trees: Vec<_> = records
        .iter()
        .map(|r| build_tree(r.traversal.clone()).unwrap())
        .collect();

    // Derivative tree size distribution.
    let t = Instant::now();
    let mut sizes: Vec<usize> = trees
        .iter()
        .map(|tr| differentiate(tr, Var::X(1), 2).len())
        .collect();
    sizes.sort();
    println!(
        "d2 build 500: {:.2}s  sizes p50={} p90={} p99={} max={}",
        t.elapsed().as_secs_f64(),
        sizes[250],
        sizes[450],
        sizes[495],
        sizes[499]
    );

    let ocfg = OptimConfig::default();

    let t = Instant::now();
    let stage1: Vec<Candidate> = trees
        .iter()
        .enumerate()
        .map(|(j, tr)| {
            let init = Candidate::new(tr.clone(), vec![1.0; tr.n_slots()]);
            optimize_constants(&init, &spec, &colloc, LossKind::Bi, &ocfg, j as u64)
                .unwrap_or(init)
        })
        .collect();
    println!("stage1 bfgs 500: {:.2}s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let rewards: Vec<f64> = stage1.iter().map(|c| reward(c, &spec, &colloc)).collect();
    println!("cheap rewards 500: {:.2}s", t.elapsed().as_secs_f64());

    let mut order: Vec<usize> = (0..500).collect();
    order.sort_by(|&a, &b| rewards[b].partial_cmp(&rewards[a]).unwrap().then(a.cmp(&b)));

    let t = Instant::now();
    for &j in order.iter().take(25) {
        let tj = Instant::now();
        let _ = optimize_constants(&stage1[j], &spec, &colloc, LossKind::Full, &ocfg, j as u64);
        let dt = tj.elapsed().as_secs_f64();
        if dt > 1.0 {
            println!(
                "  slow stage2 cand {j}: {dt:.1}s len={} slots={} d2len={}",
                stage1[j].tree.len(),
                stage1[j].tree.n_slots(),
                differentiate(&stage1[j].tree, Var::X(1), 2).len()
            );
        }
    }
    println!("stage2 bfgs 25: {:.2}s", t.elapsed().as_secs_f64());
}
