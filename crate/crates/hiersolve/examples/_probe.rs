use hiersolve::jmin::{minimize_j_warm, SolverParams};
use hiersolve::norms::{l2_norm, project_zero_mean};
use hiersolve::prox::DataTerm;
use hiersolve::{Field, NormSpec, OperatorSpec, TorusGrid};
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn main() {
    let ratio: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let n: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(64);
    let iters: usize = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(40_000);
    let g = TorusGrid::square(n).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let data: Vec<f64> = (0..g.num_points()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = project_zero_mean(&Field::new(g.clone(), 1, data).unwrap()).unwrap();
    let lambda1 = 0.3 / l2_norm(&f);
    let params = SolverParams { max_iters: iters, tol: 1e-9, step_ratio: ratio, ..Default::default() };
    let t0 = Instant::now();
    let (res, _) = minimize_j_warm(
        &f, OperatorSpec::Divergence, NormSpec::Linf,
        DataTerm::new(2.0, lambda1).unwrap(), &params, None,
    ).unwrap();
    println!(
        "ratio={ratio} n={n}: conv={} it={} ext={:.2e} dng={:?} res=({:.1e},{:.1e}) {:.2?}",
        res.converged, res.iterations, res.extremality_gap, res.dual_norm_gap,
        res.final_residuals.0, res.final_residuals.1, t0.elapsed()
    );
}
