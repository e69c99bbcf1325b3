//! The recursive refinement engine: starting from `r_0 = f`, each level
//! minimizes `J(r_j, lambda_{j+1})` on a geometrically increasing scale
//! ladder `lambda_j = lambda_1 zeta^{j-1}` and accumulates `x_k = sum u_j`,
//! with residuals always recomputed from `f` so the telescoping identity
//! `f = T x_k + r_k` is exact at every prefix.

use serde::Serialize;

use crate::dual::dual_norm;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::jmin::{minimize_j, JMinResult, SolverParams};
use crate::norms::{compute_norm, l2_norm, phi_energy, phi_map, NormSpec};
use crate::ops::{apply_forward, OperatorSpec};
use crate::prox::DataTerm;

/// The triple (operator, Banach norm, data exponent). The compatibility
/// projection is implied by the operator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProblemSpec {
    pub op: OperatorSpec,
    pub bnorm: NormSpec,
    pub p: f64,
}

impl ProblemSpec {
    pub fn new(op: OperatorSpec, bnorm: NormSpec, p: f64) -> Result<Self> {
        crate::norms::check_exponent(p)?;
        bnorm.validate()?;
        Ok(ProblemSpec { op, bnorm, p })
    }

    pub fn label(&self) -> String {
        format!("{}/{}/p={}", self.op.label(), self.bnorm.label(), self.p)
    }
}

/// Geometric scale ladder `lambda_j = lambda_1 zeta^{j-1}`, `j = 1..k_max`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleLadder {
    pub lambda1: f64,
    pub zeta: f64,
    pub k_max: usize,
}

impl ScaleLadder {
    pub fn new(lambda1: f64, zeta: f64, k_max: usize) -> Result<Self> {
        if !(lambda1.is_finite() && lambda1 > 0.0) {
            return Err(Error::InadmissibleLambda(format!("lambda1 = {lambda1}")));
        }
        if !(zeta.is_finite() && zeta > 1.0) {
            return Err(Error::InadmissibleLambda(format!(
                "zeta = {zeta} must exceed 1"
            )));
        }
        if k_max < 1 {
            return Err(Error::InadmissibleLambda("k_max must be >= 1".into()));
        }
        Ok(ScaleLadder {
            lambda1,
            zeta,
            k_max,
        })
    }

    /// `lambda_j` for 1-based level index `j`.
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambda1 * self.zeta.powi(j as i32 - 1)
    }

    /// The dyadic default `zeta = 2^{p-1}`.
    pub fn default_zeta(p: f64) -> f64 {
        2.0_f64.powf(p - 1.0)
    }
}

/// When to evaluate the residual dual norm per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualNormPolicy {
    /// Closed form and the G-norm continuation; skip the heavy
    /// inf-convolution estimator.
    Auto,
    /// Every supported pair, including the inf-convolution estimator.
    All,
    /// Never.
    Skip,
}

#[derive(Debug, Clone, Copy)]
pub struct HierarchyOptions {
    /// Stop when `||r_j||_p < stop_tol ||f||_p`.
    pub stop_tol: f64,
    pub dual_norms: DualNormPolicy,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            stop_tol: 1e-6,
            dual_norms: DualNormPolicy::Auto,
        }
    }
}

/// One refinement level.
#[derive(Debug, Clone)]
pub struct HierLevel {
    pub j: usize,
    pub lambda: f64,
    pub u: Field,
    pub b_norm: f64,
    pub residual_p_norm: f64,
    pub residual_dual_norm: Option<f64>,
    pub extremality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A hierarchical decomposition `f ~ T(sum u_j) + r_k` with per-level
/// diagnostics. Residuals are stored exactly as `f - T(sum u_j)`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub f: Field,
    pub problem: ProblemSpec,
    pub ladder: ScaleLadder,
    pub levels: Vec<HierLevel>,
    pub final_residual: Field,
}

/// Admissible default scale:
/// `max(beta / ||f||_p^{p-1}, 1.1 / ||T* phi(f)||_*)`.
pub fn default_lambda1(
    f: &Field,
    problem: &ProblemSpec,
    beta: f64,
    params: &SolverParams,
) -> Result<f64> {
    let fnorm = compute_norm(f, &NormSpec::Lp(problem.p))?;
    if fnorm == 0.0 {
        return Err(Error::UndefinedScale(
            "default_lambda1 undefined for f = 0".into(),
        ));
    }
    let first = beta / fnorm.powf(problem.p - 1.0);
    let dn = dual_norm(&problem.op, &problem.bnorm, &phi_map(f, problem.p), params)?;
    if dn == 0.0 {
        return Err(Error::UndefinedScale(
            "dual norm of phi(f) vanishes".into(),
        ));
    }
    Ok(first.max(1.1 / dn))
}

/// Run the hierarchy: `u_{j+1} = arginf J(r_j, lambda_{j+1})` with residuals
/// recomputed from scratch each level and re-projected onto the admissible
/// set as a numerical safety net before the next solve.
pub fn run_hierarchy(
    f: &Field,
    problem: &ProblemSpec,
    ladder: &ScaleLadder,
    params: &SolverParams,
    opts: &HierarchyOptions,
) -> Result<Decomposition> {
    problem.op.validate(f.grid())?;
    let compat = problem.op.compatibility();
    let incompat = compat.incompatibility(f)?;
    if incompat > 1e-10 {
        return Err(Error::IncompatibleRhs(format!(
            "relative incompatible part {incompat:.3e}"
        )));
    }

    let fnorm_p = compute_norm(f, &NormSpec::Lp(problem.p))?;
    if fnorm_p == 0.0 {
        return Ok(Decomposition {
            f: f.clone(),
            problem: *problem,
            ladder: *ladder,
            levels: Vec::new(),
            final_residual: f.clone(),
        });
    }

    // admissibility of lambda_1 (eq. threshold: lambda_1 ||T* phi(f)||_* > 1),
    // enforced when the dual norm is cheap to evaluate
    if problem.op == OperatorSpec::Divergence && problem.bnorm == NormSpec::Linf {
        let dn = dual_norm(&problem.op, &problem.bnorm, &phi_map(f, problem.p), params)?;
        if ladder.lambda1 * dn <= 1.0 {
            return Err(Error::InadmissibleLambda(format!(
                "lambda1 * ||T* phi(f)||_* = {:.4e} <= 1: every level returns u = 0",
                ladder.lambda1 * dn
            )));
        }
    }

    let mut levels: Vec<HierLevel> = Vec::new();
    let mut x = Field::zeros(f.grid(), problem.op.input_components(f.grid()));
    let mut residual = f.clone();

    for j in 1..=ladder.k_max {
        let lambda = ladder.lambda(j);
        let dt = DataTerm::new(problem.p, lambda)?;
        // safety re-projection of the solve input; the exact residual is kept
        let r_in = compat.make_admissible(&residual)?;
        let res: JMinResult = minimize_j(&r_in, problem.op, problem.bnorm, dt, params)?;

        x = x.add(&res.u)?;
        residual = f.sub(&apply_forward(&problem.op, &x)?)?;
        let res_p = compute_norm(&residual, &NormSpec::Lp(problem.p))?;

        let want_dual = match opts.dual_norms {
            DualNormPolicy::Skip => false,
            DualNormPolicy::All => true,
            DualNormPolicy::Auto => !matches!(problem.bnorm, NormSpec::LinfPlusW1d),
        };
        let residual_dual_norm = if want_dual && res.b_norm > 0.0 {
            let phi_r = phi_map(&residual, problem.p);
            match dual_norm(&problem.op, &problem.bnorm, &phi_r, params) {
                Ok(v) => Some(v),
                Err(Error::UnsupportedCombination(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        levels.push(HierLevel {
            j,
            lambda,
            u: res.u,
            b_norm: res.b_norm,
            residual_p_norm: res_p,
            residual_dual_norm,
            extremality_gap: res.extremality_gap,
            iterations: res.iterations,
            converged: res.converged,
        });

        if res_p < opts.stop_tol * fnorm_p {
            break;
        }
    }

    Ok(Decomposition {
        f: f.clone(),
        problem: *problem,
        ladder: *ladder,
        levels,
        final_residual: residual,
    })
}

/// Prefix sums: `x_k = sum_{j<=k} u_j` and the exact residual
/// `r_k = f - T x_k`; `f = T x_k + r_k` holds to machine precision by
/// construction.
pub fn reconstruct(d: &Decomposition, k: usize) -> Result<(Field, Field)> {
    if k < 1 || k > d.levels.len() {
        return Err(Error::ShapeMismatch(format!(
            "prefix {k} out of range 1..={}",
            d.levels.len()
        )));
    }
    let mut x = Field::zeros(d.f.grid(), d.problem.op.input_components(d.f.grid()));
    for level in &d.levels[..k] {
        x = x.add(&level.u)?;
    }
    let r = d.f.sub(&apply_forward(&d.problem.op, &x)?)?;
    Ok((x, r))
}

/// Per-level energy bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct LevelEnergy {
    pub j: usize,
    /// `(1/lambda_j) ||u_j||_B`
    pub weighted_b: f64,
    /// `||T u_j||_{L2}^2`
    pub tu_sq: f64,
}

/// Energy ledger: the scale-weighted B-norms, the forward energies, the
/// exact p = 2 energy identity and the universal energy inequality.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyLedger {
    pub per_level: Vec<LevelEnergy>,
    /// `[f]_Phi = ||f||_p^p` (equals `||f||_{L2}^2` when p = 2).
    pub rhs: f64,
    /// `sum (1/lambda_j)||u_j||_B`.
    pub weighted_b_total: f64,
    /// `sum ||T u_j||_{L2}^2`.
    pub tu_sq_total: f64,
    /// p = 2 only: relative gap of
    /// `sum (1/lambda_j)||u_j||_B + sum ||T u_j||^2 = ||f||^2`.
    pub equality_gap: Option<f64>,
    /// `weighted_b_total - rhs`; nonpositive up to solver tolerance.
    pub inequality_slack: f64,
    /// p > 2 only: strictly convex correction with
    /// `kappa = min Phi''` over the attained residual range.
    pub strict_convexity: Option<StrictConvexityCheck>,
    /// Present when some level did not converge.
    pub partial: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrictConvexityCheck {
    pub kappa: f64,
    /// `sum (1/lambda_j)||u_j||_B + (kappa/2) sum ||T u_j||^2 - [f]_Phi`;
    /// nonpositive up to solver tolerance.
    pub slack: f64,
}

pub fn energy_ledger(d: &Decomposition) -> Result<EnergyLedger> {
    let p = d.problem.p;
    let rhs = phi_energy(&d.f, p);
    let mut per_level = Vec::with_capacity(d.levels.len());
    let mut weighted_b_total = 0.0;
    let mut tu_sq_total = 0.0;
    let mut partial = false;
    let mut min_residual_mag = f64::INFINITY;

    let mut x = Field::zeros(d.f.grid(), d.problem.op.input_components(d.f.grid()));
    for level in &d.levels {
        let tu = apply_forward(&d.problem.op, &level.u)?;
        let tu_sq = l2_norm(&tu).powi(2);
        let weighted_b = level.b_norm / level.lambda;
        weighted_b_total += weighted_b;
        tu_sq_total += tu_sq;
        per_level.push(LevelEnergy {
            j: level.j,
            weighted_b,
            tu_sq,
        });
        partial |= !level.converged;

        if p > 2.0 {
            x = x.add(&level.u)?;
            let r = d.f.sub(&apply_forward(&d.problem.op, &x)?)?;
            let mags = crate::diff::pointwise_magnitude(&r);
            for v in mags {
                min_residual_mag = min_residual_mag.min(v);
            }
        }
    }

    let equality_gap = if p == 2.0 {
        Some((weighted_b_total + tu_sq_total - rhs).abs() / rhs.max(f64::MIN_POSITIVE))
    } else {
        None
    };
    let inequality_slack = weighted_b_total - rhs;
    let strict_convexity = if p > 2.0 && !d.levels.is_empty() {
        let kappa = p * (p - 1.0) * min_residual_mag.powf(p - 2.0);
        Some(StrictConvexityCheck {
            kappa,
            slack: weighted_b_total + 0.5 * kappa * tu_sq_total - rhs,
        })
    } else {
        None
    };

    Ok(EnergyLedger {
        per_level,
        rhs,
        weighted_b_total,
        tu_sq_total,
        equality_gap,
        inequality_slack,
        strict_convexity,
        partial,
    })
}

/// Serializable ledger document
/// (`{problem, ladder, levels: [...], energy: {...}}`).
#[derive(Debug, Serialize)]
pub struct LedgerDoc {
    pub problem: String,
    pub ladder: LadderDoc,
    pub levels: Vec<LevelDoc>,
    pub energy: EnergyDoc,
}

#[derive(Debug, Serialize)]
pub struct LadderDoc {
    pub lambda1: f64,
    pub zeta: f64,
    pub k: usize,
}

#[derive(Debug, Serialize)]
pub struct LevelDoc {
    pub j: usize,
    pub lambda: f64,
    pub b_norm: f64,
    pub res_p: f64,
    pub res_dual: Option<f64>,
    pub extremality_gap: f64,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct EnergyDoc {
    pub lhs_terms: Vec<LevelEnergy>,
    pub rhs: f64,
    pub equality_gap: Option<f64>,
    pub inequality_slack: f64,
}

impl Decomposition {
    pub fn ledger_doc(&self, energy: &EnergyLedger) -> LedgerDoc {
        LedgerDoc {
            problem: self.problem.label(),
            ladder: LadderDoc {
                lambda1: self.ladder.lambda1,
                zeta: self.ladder.zeta,
                k: self.levels.len(),
            },
            levels: self
                .levels
                .iter()
                .map(|l| LevelDoc {
                    j: l.j,
                    lambda: l.lambda,
                    b_norm: l.b_norm,
                    res_p: l.residual_p_norm,
                    res_dual: l.residual_dual_norm,
                    extremality_gap: l.extremality_gap,
                    iters: l.iterations,
                    converged: l.converged,
                })
                .collect(),
            energy: EnergyDoc {
                lhs_terms: energy.per_level.clone(),
                rhs: energy.rhs,
                equality_gap: energy.equality_gap,
                inequality_slack: energy.inequality_slack,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::project_zero_mean;
    use crate::grid::TorusGrid;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_zero_mean(grid: &TorusGrid, seed: u64) -> Field {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        project_zero_mean(&Field::new(grid.clone(), 1, data).unwrap()).unwrap()
    }

    fn div_linf() -> ProblemSpec {
        ProblemSpec::new(OperatorSpec::Divergence, NormSpec::Linf, 2.0).unwrap()
    }

    #[test]
    fn zero_field_gives_empty_decomposition() {
        let g = TorusGrid::square(8).unwrap();
        let f = Field::zeros(&g, 1);
        let ladder = ScaleLadder::new(1.0, 2.0, 4).unwrap();
        let d = run_hierarchy(
            &f,
            &div_linf(),
            &ladder,
            &SolverParams::default(),
            &HierarchyOptions::default(),
        )
        .unwrap();
        assert!(d.levels.is_empty());
        assert_eq!(d.final_residual.max_abs(), 0.0);
    }

    #[test]
    fn inadmissible_lambda1_is_an_immediate_error() {
        let g = TorusGrid::square(16).unwrap();
        let f = Field::from_fn(&g, |x| x[0].cos());
        // threshold is ~1/(16 pi); far below it every level returns zero
        let ladder = ScaleLadder::new(1e-4, 2.0, 4).unwrap();
        let err = run_hierarchy(
            &f,
            &div_linf(),
            &ladder,
            &SolverParams::default(),
            &HierarchyOptions::default(),
        );
        assert!(matches!(err, Err(Error::InadmissibleLambda(_))));
    }

    #[test]
    fn telescoping_dual_law_energy_and_monotone_residuals() {
        let g = TorusGrid::square(16).unwrap();
        let f = random_zero_mean(&g, 42);
        let problem = div_linf();
        let beta = 0.3; // conservative stand-in for the measured GN constant
        let params = SolverParams::with_tol(1e-9);
        let lambda1 = beta / l2_norm(&f);
        let ladder = ScaleLadder::new(lambda1, 2.0, 6).unwrap();
        let d = run_hierarchy(&f, &problem, &ladder, &params, &HierarchyOptions::default())
            .unwrap();
        assert_eq!(d.levels.len(), 6);

        let mut prev_res = f64::INFINITY;
        for k in 1..=d.levels.len() {
            let (x, r) = reconstruct(&d, k).unwrap();
            // exact telescoping at every prefix
            let drift = l2_norm(
                &d.f.sub(&apply_forward(&problem.op, &x).unwrap())
                    .unwrap()
                    .sub(&r)
                    .unwrap(),
            );
            assert!(drift <= 1e-12 * l2_norm(&d.f));
            // monotone residuals
            let rp = compute_norm(&r, &NormSpec::Lp(2.0)).unwrap();
            assert!(rp <= prev_res * (1.0 + 1e-12));
            prev_res = rp;
        }
        // the stored final residual is the same computation as reconstruct
        let (_, r_full) = reconstruct(&d, d.levels.len()).unwrap();
        assert_eq!(r_full.data(), d.final_residual.data());

        // residual dual-norm law on every converged level with u != 0
        for level in &d.levels {
            assert!(level.converged, "level {} unconverged", level.j);
            if level.b_norm > 1e-10 {
                let dn = level.residual_dual_norm.unwrap();
                let law = level.lambda * dn;
                assert!(
                    (0.98..=1.02).contains(&law),
                    "level {}: lambda * dual = {law}",
                    level.j
                );
            }
        }

        // energy identity and inequality
        let ledger = energy_ledger(&d).unwrap();
        assert!(!ledger.partial);
        assert!(ledger.equality_gap.unwrap() < 0.01, "{:?}", ledger.equality_gap);
        assert!(ledger.inequality_slack <= 1e-9, "{}", ledger.inequality_slack);
    }

    #[test]
    fn hierarchy_is_degree_one_homogeneous() {
        let g = TorusGrid::square(8).unwrap();
        let f = random_zero_mean(&g, 7);
        let problem = div_linf();
        let params = SolverParams::with_tol(1e-9);
        let lambda1 = 0.3 / l2_norm(&f);
        let d1 = run_hierarchy(
            &f,
            &problem,
            &ScaleLadder::new(lambda1, 2.0, 3).unwrap(),
            &params,
            &HierarchyOptions::default(),
        )
        .unwrap();
        let alpha = 2.0;
        let d2 = run_hierarchy(
            &f.scale(alpha),
            &problem,
            &ScaleLadder::new(lambda1 / alpha, 2.0, 3).unwrap(),
            &params,
            &HierarchyOptions::default(),
        )
        .unwrap();
        for (l1, l2) in d1.levels.iter().zip(&d2.levels) {
            if l1.b_norm < 1e-10 {
                continue;
            }
            let dev = l2.u.sub(&l1.u.scale(alpha)).unwrap().max_abs()
                / l2.u.max_abs().max(1e-300);
            assert!(dev < 1e-9, "level {}: dev {dev}", l1.j);
        }
    }

    #[test]
    fn default_lambda1_picks_the_admissible_branch() {
        let g = TorusGrid::square(64).unwrap();
        let f = Field::from_fn(&g, |x| x[0].cos());
        let problem = div_linf();
        let params = SolverParams::default();

        // small beta: the dual-norm branch 1.1/(16 pi) wins
        let lam = default_lambda1(&f, &problem, 0.01, &params).unwrap();
        let target = 1.1 / (16.0 * PI);
        assert!((lam - target).abs() / target < 0.01, "{lam} vs {target}");

        // large beta: the first branch is 1-homogeneous in 1/||f||
        let lam1 = default_lambda1(&f, &problem, 10.0, &params).unwrap();
        let lam2 = default_lambda1(&f.scale(2.0), &problem, 10.0, &params).unwrap();
        assert!((lam2 - lam1 / 2.0).abs() < 1e-12 * lam1);

        let z = Field::zeros(&g, 1);
        assert!(default_lambda1(&z, &problem, 1.0, &params).is_err());
    }

    #[test]
    fn early_stop_truncates_ladder() {
        // single-mode data is captured almost entirely by the first levels
        let g = TorusGrid::square(16).unwrap();
        let f = Field::from_fn(&g, |x| x[0].cos());
        let problem = div_linf();
        let params = SolverParams::with_tol(1e-9);
        let lambda1 = 10.0 / l2_norm(&f);
        let ladder = ScaleLadder::new(lambda1, 8.0, 30).unwrap();
        let d = run_hierarchy(&f, &problem, &ladder, &params, &HierarchyOptions::default())
            .unwrap();
        assert!(d.levels.len() < 30, "stopped at {}", d.levels.len());
        let rel = compute_norm(&d.final_residual, &NormSpec::Lp(2.0)).unwrap()
            / compute_norm(&f, &NormSpec::Lp(2.0)).unwrap();
        assert!(rel < 1e-6);
    }
}
