//! Discrete norms, inner products and the zero-mean projection.
//!
//! All integrals are plain Riemann sums with weight h^d; on the torus these
//! are spectrally exact for trigonometric polynomials and consistent with the
//! FFT conventions elsewhere in the crate. Pointwise vector magnitudes are
//! Euclidean.

use serde::{Deserialize, Serialize};

use crate::diff::{jacobian, pointwise_magnitude};
use crate::error::{Error, Result};
use crate::grid::Field;

/// Banach norm selector for the regularizer `||u||_B` and for measurements.
///
/// `LinfPlusW1d` realizes the intersection norm as the sum
/// `||u||_inf + ||grad u||_{L^d}` with d the grid dimension; the sum is
/// equivalent as a norm and splits into two proximable terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormSpec {
    /// `L^p` norm, 1 < p < infinity.
    Lp(f64),
    /// Sup norm of the pointwise Euclidean magnitude.
    Linf,
    /// Isotropic total variation: `L^1` of the forward-difference gradient,
    /// computed per component and summed for vector fields.
    Bv,
    /// `||u||_inf + ||grad u||_{L^d}`.
    LinfPlusW1d,
    /// Homogeneous Sobolev seminorm `||grad u||_{L^p}`.
    W1p(f64),
}

impl NormSpec {
    /// Reject the end cases p = 1, infinity for the power-family norms.
    pub fn validate(&self) -> Result<()> {
        match self {
            NormSpec::Lp(p) | NormSpec::W1p(p) => check_exponent(*p),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            NormSpec::Lp(p) => format!("L{p}"),
            NormSpec::Linf => "Linf".into(),
            NormSpec::Bv => "BV".into(),
            NormSpec::LinfPlusW1d => "Linf+W1d".into(),
            NormSpec::W1p(p) => format!("W1,{p}"),
        }
    }
}

pub fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::IllegalExponent(p));
    }
    Ok(())
}

/// Zero-mean projection `f - mean(f)` of a scalar field. Linear, idempotent.
pub fn project_zero_mean(f: &Field) -> Result<Field> {
    let mean = f.mean()?;
    let mut out = f.clone();
    for v in out.data_mut() {
        *v -= mean;
    }
    Ok(out)
}

/// Weighted inner product `sum h^d f . g` with the pointwise dot product.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.check_same_shape(g)?;
    let w0 = f.grid().cell_volume();
    let s: f64 = f.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
    Ok(w0 * s)
}

/// Weighted L2 norm.
pub fn l2_norm(f: &Field) -> f64 {
    let w0 = f.grid().cell_volume();
    (w0 * f.data().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// `[f]_Phi = sum h^d |f(x)|^p`, the data-term energy for `Phi(t) = t^p`.
pub fn phi_energy(f: &Field, p: f64) -> f64 {
    let w0 = f.grid().cell_volume();
    if f.components() == 1 {
        w0 * f.data().iter().map(|v| v.abs().powf(p)).sum::<f64>()
    } else {
        let mag = pointwise_magnitude(f);
        w0 * mag.iter().map(|v| v.powf(p)).sum::<f64>()
    }
}

/// Pointwise data-term gradient `phi(r) = p |r|^{p-2} r` (equals
/// `p sgn(r) |r|^{p-1}` for scalars).
pub fn phi_map(r: &Field, p: f64) -> Field {
    let npts = r.grid().num_points();
    let m = r.components();
    let mut out = r.clone();
    if m == 1 {
        for v in out.data_mut() {
            let a = v.abs();
            *v = if a > 0.0 { p * v.signum() * a.powf(p - 1.0) } else { 0.0 };
        }
    } else {
        let mag = pointwise_magnitude(r);
        let data = out.data_mut();
        for c in 0..m {
            for idx in 0..npts {
                let a = mag[idx];
                let scale = if a > 0.0 { p * a.powf(p - 2.0) } else { 0.0 };
                data[c * npts + idx] *= scale;
            }
        }
    }
    out
}

/// Evaluate `||f||` for the given [`NormSpec`]. Homogeneous of degree one.
pub fn compute_norm(f: &Field, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let w0 = f.grid().cell_volume();
    match spec {
        NormSpec::Lp(p) => {
            let mag = pointwise_magnitude(f);
            Ok((w0 * mag.iter().map(|v| v.powf(*p)).sum::<f64>()).powf(1.0 / p))
        }
        NormSpec::Linf => Ok(f.max_abs()),
        NormSpec::Bv => {
            // per component: L1 of the forward-difference gradient,
            // Euclidean over the d derivative directions
            let d = f.grid().dim();
            let jac = jacobian(f)?;
            let npts = f.grid().num_points();
            let mut total = 0.0;
            for c in 0..f.components() {
                for idx in 0..npts {
                    let mut s = 0.0;
                    for a in 0..d {
                        let v = jac.component(c * d + a)[idx];
                        s += v * v;
                    }
                    total += s.sqrt();
                }
            }
            Ok(w0 * total)
        }
        NormSpec::W1p(p) => {
            let jac = jacobian(f)?;
            let mag = pointwise_magnitude(&jac);
            Ok((w0 * mag.iter().map(|v| v.powf(*p)).sum::<f64>()).powf(1.0 / p))
        }
        NormSpec::LinfPlusW1d => {
            let d = f.grid().dim() as f64;
            let sup = compute_norm(f, &NormSpec::Linf)?;
            let w1d = compute_norm(f, &NormSpec::W1p(d))?;
            Ok(sup + w1d)
        }
    }
}
