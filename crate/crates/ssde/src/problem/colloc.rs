use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::spec::ProblemSpec;
use crate::diffeval::{evaluate, PointBatch};
use crate::expr::Var;

/// Sampled interior, boundary, and initial collocation points with their
/// Dirichlet/initial targets.
#[derive(Debug, Clone)]
pub struct CollocationSet {
    pub interior: PointBatch,
    pub boundary: PointBatch,
    pub boundary_targets: Vec<f64>,
    pub initial: Option<(PointBatch, Vec<f64>)>,
}

/// Default desk-scale collocation counts `(N_F, N_B, N_I)`.
pub const DEFAULT_COUNTS: (usize, usize, usize) = (256, 64, 64);

/// Uniform i.i.d. interior samples, boundary samples uniform over the faces
/// of the domain hyper-rectangle, and (for time-dependent problems) initial
/// samples at `t = 0`. Deterministic given the seed.
pub fn sample_collocation(
    spec: &ProblemSpec,
    counts: (usize, usize, usize),
    seed: u64,
) -> CollocationSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (n_f, n_b, n_i) = counts;

    let interior = sample_uniform(spec, &spec.variables, n_f, &mut rng);

    let spatial = spec.spatial_vars();
    let mut boundary_cols: Vec<(Var, Vec<f64>)> = spec
        .variables
        .iter()
        .map(|v| (*v, Vec::with_capacity(n_b)))
        .collect();
    for _ in 0..n_b {
        let face_var = spatial[rng.random_range(0..spatial.len())];
        let face_hi = rng.random::<bool>();
        for (v, col) in boundary_cols.iter_mut() {
            let (lo, hi) = spec.bounds(*v);
            let x = if *v == face_var {
                if face_hi {
                    hi
                } else {
                    lo
                }
            } else {
                rng.random_range(lo..hi)
            };
            col.push(x);
        }
    }
    let boundary = PointBatch::from_cols(boundary_cols).expect("equal columns");
    let boundary_targets = evaluate(&spec.boundary_target, &boundary, &[])
        .expect("boundary target evaluates")
        .values;

    let initial = if spec.is_time_dependent() {
        let mut cols: Vec<(Var, Vec<f64>)> = Vec::new();
        for v in &spec.variables {
            let (lo, hi) = spec.bounds(*v);
            let col = if *v == Var::T {
                vec![0.0; n_i]
            } else {
                (0..n_i).map(|_| rng.random_range(lo..hi)).collect()
            };
            cols.push((*v, col));
        }
        let pts = PointBatch::from_cols(cols).expect("equal columns");
        let target_tree = spec.initial_target.as_ref().expect("validated");
        let targets = evaluate(target_tree, &pts, &[])
            .expect("initial target evaluates")
            .values;
        Some((pts, targets))
    } else {
        None
    };

    CollocationSet {
        interior,
        boundary,
        boundary_targets,
        initial,
    }
}

/// Uniform samples over the (sub-)domain spanned by `vars`.
pub fn sample_uniform(
    spec: &ProblemSpec,
    vars: &[Var],
    n: usize,
    rng: &mut ChaCha20Rng,
) -> PointBatch {
    let mut cols: Vec<(Var, Vec<f64>)> = vars.iter().map(|v| (*v, Vec::with_capacity(n))).collect();
    for _ in 0..n {
        for (v, col) in cols.iter_mut() {
            let (lo, hi) = spec.bounds(*v);
            col.push(rng.random_range(lo..hi));
        }
    }
    PointBatch::from_cols(cols).expect("equal columns")
}

/// The fixed dense evaluation grid used by recovery checks and the relative
/// L2 metric: 10,000 uniform points under a constant seed.
pub fn dense_points(spec: &ProblemSpec) -> PointBatch {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5513_D00D);
    sample_uniform(spec, &spec.variables, 10_000, &mut rng)
}
