//! Proximal maps and ball projections used by the primal-dual solver.
//!
//! Everything here works in the h^d-weighted inner product; with uniform
//! weights the data-term prox is pointwise and weight-free, while ball radii
//! carry the weight explicitly.

use serde::{Deserialize, Serialize};

use crate::diff::{jacobian, jacobian_adjoint, pointwise_magnitude};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::norms::{check_exponent, NormSpec};

/// Data term `lambda * || . ||_p^p` with 1 < p < infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataTerm {
    pub p: f64,
    pub lambda: f64,
}

impl DataTerm {
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        check_exponent(p)?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::UndefinedScale(format!("lambda = {lambda}")));
        }
        Ok(DataTerm { p, lambda })
    }
}

/// Solve the scalar optimality equation `rho + a p rho^{p-1} = z`, z >= 0,
/// by safeguarded Newton to 1e-12 absolute.
fn solve_scalar_shrink(z: f64, a: f64, p: f64) -> Result<f64> {
    if z == 0.0 || a == 0.0 {
        return Ok(if a == 0.0 { z } else { 0.0 });
    }
    if p == 2.0 {
        return Ok(z / (1.0 + 2.0 * a));
    }
    let ap = a * p;
    let mut lo = 0.0;
    let mut hi = z;
    let mut rho = z / (1.0 + ap * z.powf(p - 2.0)).max(1.0);
    if !(rho.is_finite() && rho > 0.0 && rho < z) {
        rho = 0.5 * z;
    }
    for _ in 0..100 {
        let g = rho + ap * rho.powf(p - 1.0) - z;
        if g.abs() <= 1e-12 * (1.0 + z) {
            return Ok(rho);
        }
        if g > 0.0 {
            hi = rho;
        } else {
            lo = rho;
        }
        let dg = 1.0 + ap * (p - 1.0) * rho.powf(p - 2.0);
        let mut next = rho - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        rho = next;
    }
    Err(Error::SolverFailure(format!(
        "scalar shrink did not converge: z={z}, a={a}, p={p}"
    )))
}

/// Proximal map of `w -> a * Phi(|f - w|)` with `a = tau * lambda`,
/// evaluated pointwise: closed form for p = 2, safeguarded Newton otherwise.
/// Monotone in `v`; `tau = 0` returns `v` unchanged.
pub fn prox_data_power(v: &Field, f: &Field, dt: &DataTerm, tau: f64) -> Result<Field> {
    v.check_same_shape(f)?;
    check_exponent(dt.p)?;
    let a = tau * dt.lambda;
    if a == 0.0 {
        return Ok(v.clone());
    }
    let npts = v.grid().num_points();
    let m = v.components();
    let mut out = v.clone();
    if m == 1 {
        let data = out.data_mut();
        for (w, fv) in data.iter_mut().zip(f.data()) {
            let z = *w - fv;
            let rho = solve_scalar_shrink(z.abs(), a, dt.p)?;
            *w = fv + z.signum() * rho;
        }
    } else {
        let diff = v.sub(f)?;
        let mag = pointwise_magnitude(&diff);
        let data = out.data_mut();
        for idx in 0..npts {
            let z = mag[idx];
            let scale = if z > 0.0 {
                solve_scalar_shrink(z, a, dt.p)? / z
            } else {
                0.0
            };
            for c in 0..m {
                data[c * npts + idx] = f.data()[c * npts + idx] + scale * diff.data()[c * npts + idx];
            }
        }
    }
    Ok(out)
}

/// Euclidean projection (in the weighted metric) onto the weighted L1 ball
/// `{ y : h^d sum |y(x)| <= radius }` with pointwise Euclidean magnitudes.
/// Exact O(N log N) sort-based thresholding.
pub fn project_l1_ball(v: &Field, radius: f64) -> Field {
    let w0 = v.grid().cell_volume();
    let npts = v.grid().num_points();
    let m = v.components();
    let mag = pointwise_magnitude(v);
    let total: f64 = mag.iter().sum::<f64>() * w0;
    if total <= radius {
        return v.clone();
    }
    // threshold theta with sum max(mag - theta, 0) = radius / w0
    let target = radius / w0;
    let mut sorted = mag.clone();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &mu) in sorted.iter().enumerate() {
        cumsum += mu;
        let cand = (cumsum - target) / (k + 1) as f64;
        if mu > cand {
            theta = cand;
        } else {
            break;
        }
    }
    let theta = theta.max(0.0);
    let mut out = v.clone();
    let data = out.data_mut();
    for idx in 0..npts {
        let mu = mag[idx];
        let scale = if mu > theta { (mu - theta) / mu } else { 0.0 };
        for c in 0..m {
            data[c * npts + idx] *= scale;
        }
    }
    out
}

/// Scalar solve of `rho + kappa rho^{q-1} = z` for the Lq-ball projection.
fn lq_shrink(z: f64, kappa: f64, q: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    if kappa == 0.0 {
        return z;
    }
    if q == 2.0 {
        return z / (1.0 + kappa);
    }
    if (q - 1.5).abs() < 1e-12 {
        // rho + kappa sqrt(rho) = z: quadratic in sqrt(rho), stable form
        let s = 2.0 * z / (kappa + (kappa * kappa + 4.0 * z).sqrt());
        return s * s;
    }
    if (q - 3.0).abs() < 1e-12 {
        // rho + kappa rho^2 = z, stable form
        return 2.0 * z / (1.0 + (1.0 + 4.0 * kappa * z).sqrt());
    }
    // general monotone scalar equation
    let mut lo = 0.0;
    let mut hi = z;
    let mut rho = 0.5 * z;
    for _ in 0..80 {
        let g = rho + kappa * rho.powf(q - 1.0) - z;
        if g.abs() <= 1e-14 * (1.0 + z) {
            return rho;
        }
        if g > 0.0 {
            hi = rho;
        } else {
            lo = rho;
        }
        let dg = 1.0 + kappa * (q - 1.0) * rho.powf(q - 2.0);
        let mut next = rho - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        rho = next;
    }
    rho
}

/// Euclidean projection (weighted metric) onto the weighted Lq ball
/// `{ V : (h^d sum |V(x)|^q)^{1/q} <= radius }`, 1 < q < infinity.
/// Solved by a safeguarded search on the scalar multiplier.
pub fn project_lq_ball(v: &Field, q: f64, radius: f64) -> Result<Field> {
    check_exponent(q)?;
    let w0 = v.grid().cell_volume();
    let npts = v.grid().num_points();
    let m = v.components();
    let mag = pointwise_magnitude(v);
    let norm_q = (w0 * mag.iter().map(|z| z.powf(q)).sum::<f64>()).powf(1.0 / q);
    if norm_q <= radius || radius == 0.0 {
        return Ok(if radius == 0.0 {
            Field::zeros(v.grid(), m)
        } else {
            v.clone()
        });
    }
    if q == 2.0 {
        return Ok(v.scale(radius / norm_q));
    }
    // find kappa with ||rho(kappa)||_q = radius by bisection
    let target = radius.powf(q) / w0;
    let eval = |kappa: f64| -> f64 {
        mag.iter()
            .map(|&z| lq_shrink(z, kappa, q).powf(q))
            .sum::<f64>()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while eval(hi) > target {
        hi *= 4.0;
        if hi > 1e18 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = eval(mid);
        if s > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    let kappa = 0.5 * (lo + hi);
    let mut out = v.clone();
    let data = out.data_mut();
    for idx in 0..npts {
        let z = mag[idx];
        let scale = if z > 0.0 { lq_shrink(z, kappa, q) / z } else { 0.0 };
        for c in 0..m {
            data[c * npts + idx] *= scale;
        }
    }
    Ok(out)
}

/// Clamp every pointwise group of `group` consecutive components to the unit
/// Euclidean ball (the TV dual constraint).
pub fn clamp_pointwise_unit(v: &Field, group: usize) -> Field {
    let npts = v.grid().num_points();
    let m = v.components();
    debug_assert_eq!(m % group, 0);
    let mut out = v.clone();
    let data = out.data_mut();
    for g in 0..m / group {
        for idx in 0..npts {
            let mut s = 0.0;
            for c in 0..group {
                let x = data[(g * group + c) * npts + idx];
                s += x * x;
            }
            let s = s.sqrt();
            if s > 1.0 {
                for c in 0..group {
                    data[(g * group + c) * npts + idx] /= s;
                }
            }
        }
    }
    out
}

/// TV-proximal map `argmin 1/2 ||u - v||^2 + tau ||grad u||_{L1}` via the
/// dual projection fixed-point loop, per scalar component, to `inner_tol`.
pub fn tv_prox(v: &Field, tau: f64, inner_tol: f64, max_iters: usize) -> Result<Field> {
    if tau == 0.0 {
        return Ok(v.clone());
    }
    let grid = v.grid().clone();
    let d = grid.dim();
    let h_min = (0..d).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let gamma = h_min * h_min / (4.0 * d as f64);
    let mut parts = Vec::with_capacity(v.components());
    for c in 0..v.components() {
        let vc = v.component_field(c);
        let mut p = Field::zeros(&grid, d);
        let mut last_residual = f64::INFINITY;
        for _ in 0..max_iters {
            // u = v - tau J* p ; steepest step on the dual, then reproject
            let u = vc.sub(&jacobian_adjoint(&p, 1)?.scale(tau))?;
            let grad = jacobian(&u)?;
            let p_next = clamp_pointwise_unit(&p.axpy(gamma / tau, &grad)?, d);
            last_residual = p_next.sub(&p)?.max_abs();
            p = p_next;
            if last_residual <= inner_tol {
                break;
            }
        }
        if last_residual > inner_tol.max(1e-8) {
            return Err(Error::SolverFailure(format!(
                "tv_prox fixed point stalled at residual {last_residual:.3e}"
            )));
        }
        parts.push(vc.sub(&jacobian_adjoint(&p, 1)?.scale(tau))?);
    }
    Field::from_components(&parts)
}

/// Proximal map of `tau ||.||_B` for the supported Banach norms.
/// `LinfPlusW1d` is handled by operator splitting in the solver (each term
/// gets its own dual variable), so it is rejected here.
pub fn prox_banach(v: &Field, bspec: &NormSpec, tau: f64) -> Result<Field> {
    match bspec {
        NormSpec::Linf => {
            // Moreau: v minus the projection onto the dual (weighted L1) ball
            let proj = project_l1_ball(v, tau);
            v.sub(&proj)
        }
        NormSpec::Bv => tv_prox(v, tau, 1e-10, 200_000),
        other => Err(Error::UnsupportedCombination(format!(
            "prox_banach does not support {}",
            other.label()
        ))),
    }
}
