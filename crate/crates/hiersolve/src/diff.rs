//! First-order periodic difference operators.
//!
//! The forward difference `D_a u(x) = (u(x + h e_a) - u(x)) / h_a` and the
//! backward difference are exact negative adjoints of each other under the
//! uniform quadrature weight, so every operator built here pairs exactly with
//! its dual. This exact discrete duality is what the minimizer certificates
//! rely on.

use crate::error::Result;
use crate::grid::Field;

/// Forward difference of every component along `axis`.
pub fn forward_diff(f: &Field, axis: usize) -> Field {
    let grid = f.grid().clone();
    let npts = grid.num_points();
    let h_inv = 1.0 / grid.spacing(axis);
    let mut out = Field::zeros(&grid, f.components());
    let src = f.data();
    let dst = out.data_mut();
    for c in 0..f.components() {
        let base = c * npts;
        for idx in 0..npts {
            let up = grid.next(axis, idx);
            dst[base + idx] = (src[base + up] - src[base + idx]) * h_inv;
        }
    }
    out
}

/// Backward difference of every component along `axis`.
pub fn backward_diff(f: &Field, axis: usize) -> Field {
    let grid = f.grid().clone();
    let npts = grid.num_points();
    let h_inv = 1.0 / grid.spacing(axis);
    let mut out = Field::zeros(&grid, f.components());
    let src = f.data();
    let dst = out.data_mut();
    for c in 0..f.components() {
        let base = c * npts;
        for idx in 0..npts {
            let dn = grid.prev(axis, idx);
            dst[base + idx] = (src[base + idx] - src[base + dn]) * h_inv;
        }
    }
    out
}

/// Forward-difference gradient of a scalar field: d components.
pub fn gradient(f: &Field) -> Result<Field> {
    debug_assert!(f.is_scalar());
    let d = f.grid().dim();
    let parts: Vec<Field> = (0..d).map(|a| forward_diff(f, a)).collect();
    Field::from_components(&parts)
}

/// Backward-difference divergence of a d-component field; the exact negative
/// adjoint of [`gradient`].
pub fn divergence(u: &Field) -> Result<Field> {
    let grid = u.grid().clone();
    let d = grid.dim();
    let npts = grid.num_points();
    let mut out = Field::zeros(&grid, 1);
    for a in 0..d {
        let comp = u.component_field(a);
        let dcomp = backward_diff(&comp, a);
        let dst = out.data_mut();
        for idx in 0..npts {
            dst[idx] += dcomp.data()[idx];
        }
    }
    Ok(out)
}

/// Forward-difference Jacobian of an m-component field, laid out as
/// m*d components with derivative axis fastest: component (c, a) -> c*d + a.
pub fn jacobian(u: &Field) -> Result<Field> {
    let d = u.grid().dim();
    let mut parts = Vec::with_capacity(u.components() * d);
    for c in 0..u.components() {
        let comp = u.component_field(c);
        for a in 0..d {
            parts.push(forward_diff(&comp, a));
        }
    }
    Field::from_components(&parts)
}

/// Adjoint of [`jacobian`]: maps an (m*d)-component field back to m components,
/// (J* V)_c = -sum_a D^b_a V_{c,a}.
pub fn jacobian_adjoint(v: &Field, m: usize) -> Result<Field> {
    let grid = v.grid().clone();
    let d = grid.dim();
    debug_assert_eq!(v.components(), m * d);
    let npts = grid.num_points();
    let mut out = Field::zeros(&grid, m);
    for c in 0..m {
        for a in 0..d {
            let comp = v.component_field(c * d + a);
            let dcomp = backward_diff(&comp, a);
            let dst = out.data_mut();
            let base = c * npts;
            for idx in 0..npts {
                dst[base + idx] -= dcomp.data()[idx];
            }
        }
    }
    Ok(out)
}

/// Pointwise Euclidean magnitudes |f(x)| over the components.
pub fn pointwise_magnitude(f: &Field) -> Vec<f64> {
    let npts = f.grid().num_points();
    let m = f.components();
    let mut mag = vec![0.0; npts];
    for c in 0..m {
        let comp = f.component(c);
        for idx in 0..npts {
            mag[idx] += comp[idx] * comp[idx];
        }
    }
    for v in mag.iter_mut() {
        *v = v.sqrt();
    }
    mag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::norms::inner_product;

    fn random_field(grid: &TorusGrid, m: usize, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..m * grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Field::new(grid.clone(), m, data).unwrap()
    }

    #[test]
    fn gradient_divergence_exact_negative_adjoint() {
        let g = TorusGrid::new(&[8, 6]).unwrap();
        let phi = random_field(&g, 1, 1);
        let v = random_field(&g, 2, 2);
        let lhs = inner_product(&gradient(&phi).unwrap(), &v).unwrap();
        let rhs = -inner_product(&phi, &divergence(&v).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0));
    }

    #[test]
    fn jacobian_adjoint_pairs_exactly() {
        let g = TorusGrid::new(&[6, 4, 4]).unwrap();
        let u = random_field(&g, 3, 3);
        let v = random_field(&g, 9, 4);
        let lhs = inner_product(&jacobian(&u).unwrap(), &v).unwrap();
        let rhs = inner_product(&u, &jacobian_adjoint(&v, 3).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0));
    }

    #[test]
    fn forward_diff_of_constant_vanishes() {
        let g = TorusGrid::square(8).unwrap();
        let c = Field::from_fn(&g, |_| 3.25);
        let d = forward_diff(&c, 0);
        assert!(d.data().iter().all(|v| v.abs() < 1e-14));
    }
}
