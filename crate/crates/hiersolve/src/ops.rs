//! The linear operators T (divergence, curl, identity), their exact discrete
//! duals, the compatibility projections whose kernels are the admissible
//! right-hand sides, and the spectral utilities (inverse Laplacian, Riesz
//! transforms, Hodge projection, classical solutions).
//!
//! Divergence is the backward-difference divergence, the exact negative
//! adjoint of the forward-difference gradient, so first-order solvers get
//! machine-precision adjoint pairs. Curl is spectral (and self-adjoint);
//! its residuals are then measured by the same spectral operator.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diff;
use crate::error::{Error, Result};
use crate::fft::{self, Spectrum};
use crate::grid::{Field, TorusGrid};

/// The equation operator `T` in `T x = f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorSpec {
    /// Backward-difference divergence: d components -> scalar.
    Divergence,
    /// Spectral curl on a 3D torus: 3 components -> 3 components.
    Curl3,
    /// Identity on scalars.
    Identity,
}

impl OperatorSpec {
    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        if *self == OperatorSpec::Curl3 && grid.dim() != 3 {
            return Err(Error::InvalidGrid("Curl3 requires a 3D grid".into()));
        }
        Ok(())
    }

    /// Component count of the unknown `u`.
    pub fn input_components(&self, grid: &TorusGrid) -> usize {
        match self {
            OperatorSpec::Divergence => grid.dim(),
            OperatorSpec::Curl3 => 3,
            OperatorSpec::Identity => 1,
        }
    }

    /// Component count of the data `f = T u`.
    pub fn output_components(&self, _grid: &TorusGrid) -> usize {
        match self {
            OperatorSpec::Divergence => 1,
            OperatorSpec::Curl3 => 3,
            OperatorSpec::Identity => 1,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OperatorSpec::Divergence => "div",
            OperatorSpec::Curl3 => "curl",
            OperatorSpec::Identity => "id",
        }
    }

    /// The compatibility projection matching this operator's range.
    pub fn compatibility(&self) -> CompatibilityProjection {
        match self {
            OperatorSpec::Divergence | OperatorSpec::Identity => CompatibilityProjection::ZeroMean,
            OperatorSpec::Curl3 => CompatibilityProjection::HodgeIrrotational,
        }
    }
}

/// Apply `T`.
pub fn apply_forward(op: &OperatorSpec, u: &Field) -> Result<Field> {
    op.validate(u.grid())?;
    let want = op.input_components(u.grid());
    if u.components() != want {
        return Err(Error::ComponentMismatch {
            expected: want,
            got: u.components(),
        });
    }
    match op {
        OperatorSpec::Divergence => diff::divergence(u),
        OperatorSpec::Identity => Ok(u.clone()),
        OperatorSpec::Curl3 => Ok(spectral_curl(u)),
    }
}

/// Apply the exact discrete adjoint `T*`:
/// `<T u, g> = <u, T* g>` to machine precision.
pub fn apply_dual(op: &OperatorSpec, g: &Field) -> Result<Field> {
    op.validate(g.grid())?;
    let want = op.output_components(g.grid());
    if g.components() != want {
        return Err(Error::ComponentMismatch {
            expected: want,
            got: g.components(),
        });
    }
    match op {
        OperatorSpec::Divergence => Ok(diff::gradient(g)?.scale(-1.0)),
        OperatorSpec::Identity => Ok(g.clone()),
        // the spectral curl is self-adjoint
        OperatorSpec::Curl3 => Ok(spectral_curl(g)),
    }
}

/// Compatibility operator `P` whose kernel is the set of admissible
/// right-hand sides; `range(T)` lies in `Ker(P)` to machine precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompatibilityProjection {
    /// `P g = mean(g)`: admissible scalars have zero mean.
    ZeroMean,
    /// Spectral irrotational-plus-mean part: admissible 3-vector fields are
    /// divergence-free with zero mean.
    HodgeIrrotational,
}

impl CompatibilityProjection {
    /// The incompatible part `P g`. Idempotent.
    pub fn apply(&self, g: &Field) -> Result<Field> {
        match self {
            CompatibilityProjection::ZeroMean => {
                let mean = g.mean()?;
                let mut out = g.clone();
                for v in out.data_mut() {
                    *v = mean;
                }
                Ok(out)
            }
            CompatibilityProjection::HodgeIrrotational => {
                if g.components() != 3 || g.grid().dim() != 3 {
                    return Err(Error::ComponentMismatch {
                        expected: 3,
                        got: g.components(),
                    });
                }
                // irrotational part of the nonzero modes, plus the mean mode
                let mut spec = fft::fft_forward(g);
                hodge_multiplier(&mut spec, true);
                Ok(fft::fft_inverse(&spec))
            }
        }
    }

    /// Project onto the admissible set: `g - P g`.
    pub fn make_admissible(&self, g: &Field) -> Result<Field> {
        let bad = self.apply(g)?;
        g.sub(&bad)
    }

    /// Relative size of the incompatible part.
    pub fn incompatibility(&self, g: &Field) -> Result<f64> {
        let bad = self.apply(g)?;
        let num = crate::norms::l2_norm(&bad);
        let den = crate::norms::l2_norm(g);
        Ok(if den > 0.0 { num / den } else { 0.0 })
    }
}

/// In-place spectral map keeping the irrotational portion `xi (xi . g)/|xi|^2`
/// of the nonzero modes; `keep_mean` controls whether the zero mode survives.
fn hodge_multiplier(spec: &mut Spectrum, keep_mean: bool) {
    let grid = spec.grid.clone();
    let npts = grid.num_points();
    for idx in 0..npts {
        let k = fft::wavevector(&grid, idx);
        let k2: f64 = k.iter().map(|&ki| (ki * ki) as f64).sum();
        if k2 == 0.0 {
            if !keep_mean {
                for c in 0..3 {
                    spec.data[c * npts + idx] = Complex64::new(0.0, 0.0);
                }
            }
            continue;
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for c in 0..3 {
            dot += spec.data[c * npts + idx] * k[c] as f64;
        }
        for c in 0..3 {
            spec.data[c * npts + idx] = dot * (k[c] as f64 / k2);
        }
    }
}

/// Spectral curl of a 3-vector field: `(curl u)^ = i xi x u^`, with Nyquist
/// modes dropped to keep the output real.
pub fn spectral_curl(u: &Field) -> Field {
    let grid = u.grid().clone();
    let npts = grid.num_points();
    let spec = fft::fft_forward(u);
    let mut out = Spectrum::zeros(&grid, 3);
    for idx in 0..npts {
        if fft::touches_nyquist(&grid, idx) {
            continue;
        }
        let k = fft::wavevector(&grid, idx);
        let ux = spec.data[idx];
        let uy = spec.data[npts + idx];
        let uz = spec.data[2 * npts + idx];
        let i = Complex64::new(0.0, 1.0);
        out.data[idx] = i * (k[1] as f64 * uz - k[2] as f64 * uy);
        out.data[npts + idx] = i * (k[2] as f64 * ux - k[0] as f64 * uz);
        out.data[2 * npts + idx] = i * (k[0] as f64 * uy - k[1] as f64 * ux);
    }
    fft::fft_inverse(&out)
}

/// Spectral divergence of a d-vector field (verification utility).
pub fn spectral_divergence(u: &Field) -> Field {
    let grid = u.grid().clone();
    let d = grid.dim();
    let npts = grid.num_points();
    let spec = fft::fft_forward(u);
    let mut out = Spectrum::zeros(&grid, 1);
    for idx in 0..npts {
        if fft::touches_nyquist(&grid, idx) {
            continue;
        }
        let k = fft::wavevector(&grid, idx);
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..d {
            acc += Complex64::new(0.0, k[a] as f64) * spec.data[a * npts + idx];
        }
        out.data[idx] = acc;
    }
    fft::fft_inverse(&out)
}

fn require_zero_mean(f: &Field) -> Result<()> {
    if !f.is_scalar() {
        return Err(Error::ComponentMismatch {
            expected: 1,
            got: f.components(),
        });
    }
    let mean = f.mean()?;
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    if mean.abs() > 1e-10 * scale {
        return Err(Error::IncompatibleRhs(format!(
            "mean {mean:.3e} exceeds tolerance relative to max {scale:.3e}"
        )));
    }
    Ok(())
}

/// Spectral inverse Laplacian on zero-mean scalars; the zero mode maps to 0.
pub fn inv_laplacian(f: &Field) -> Result<Field> {
    require_zero_mean(f)?;
    Ok(fft::apply_multiplier(f, |k| {
        let k2: f64 = k.iter().map(|&ki| (ki * ki) as f64).sum();
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(-1.0 / k2, 0.0)
        }
    }))
}

/// Composition of Riesz transforms `R_i R_j`: spectral multiplier
/// `xi_i xi_j / |xi|^2`, zero at the zero mode. Axes are 0-based.
pub fn riesz_apply(f: &Field, i: usize, j: usize) -> Result<Field> {
    require_zero_mean(f)?;
    let d = f.grid().dim();
    if i >= d || j >= d {
        return Err(Error::ShapeMismatch(format!(
            "axes ({i},{j}) out of range for dim {d}"
        )));
    }
    Ok(fft::apply_multiplier(f, |k| {
        let k2: f64 = k.iter().map(|&ki| (ki * ki) as f64).sum();
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new((k[i] * k[j]) as f64 / k2, 0.0)
        }
    }))
}

/// Classical irrotational solution of `div x = f`: `x = grad inv_laplacian f`
/// (spectral; Nyquist modes dropped).
pub fn classical_solution(f: &Field) -> Result<Field> {
    require_zero_mean(f)?;
    let grid = f.grid().clone();
    let d = grid.dim();
    let npts = grid.num_points();
    let spec = fft::fft_forward(f);
    let mut out = Spectrum::zeros(&grid, d);
    for idx in 0..npts {
        if fft::touches_nyquist(&grid, idx) {
            continue;
        }
        let k = fft::wavevector(&grid, idx);
        let k2: f64 = k.iter().map(|&ki| (ki * ki) as f64).sum();
        if k2 == 0.0 {
            continue;
        }
        // (grad inv_laplacian f)^ = -i xi fhat / |xi|^2
        for a in 0..d {
            out.data[a * npts + idx] =
                Complex64::new(0.0, -k[a] as f64 / k2) * spec.data[idx];
        }
    }
    Ok(fft::fft_inverse(&out))
}

/// Irrotational Hodge projection `P* g = grad inv_laplacian div g - mean(g)`.
pub fn hodge_project(g: &Field) -> Result<Field> {
    if g.grid().dim() != 3 || g.components() != 3 {
        return Err(Error::ComponentMismatch {
            expected: 3,
            got: g.components(),
        });
    }
    let mut spec = fft::fft_forward(g);
    let npts = g.grid().num_points();
    // negate the mean mode, keep the irrotational rest
    hodge_multiplier(&mut spec, true);
    for c in 0..3 {
        spec.data[c * npts] = -spec.data[c * npts];
    }
    Ok(fft::fft_inverse(&spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{inner_product, l2_norm};
    use rand::{Rng, SeedableRng};

    fn random_field(grid: &TorusGrid, m: usize, seed: u64) -> Field {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..m * grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Field::new(grid.clone(), m, data).unwrap()
    }

    /// Band-limited random zero-mean scalar (no Nyquist content).
    fn random_bandlimited(grid: &TorusGrid, seed: u64) -> Field {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, 1);
        for _ in 0..8 {
            let kx = rng.random_range(-3i64..=3);
            let ky = rng.random_range(-3i64..=3);
            if kx == 0 && ky == 0 {
                continue;
            }
            let amp: f64 = rng.random_range(-1.0..1.0);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let g = Field::from_fn(grid, |x| {
                amp * (kx as f64 * x[0] + ky as f64 * x[1] + phase).cos()
            });
            f = f.add(&g).unwrap();
        }
        f
    }

    #[test]
    fn divergence_of_sin_close_to_cos() {
        let grid = TorusGrid::square(64).unwrap();
        let u = Field::vector_from_fn(&grid, 2, |x, c| if c == 0 { x[0].sin() } else { 0.0 });
        let div = apply_forward(&OperatorSpec::Divergence, &u).unwrap();
        let target = Field::from_fn(&grid, |x| x[0].cos());
        let h = grid.spacing(0);
        let err = div.sub(&target).unwrap().max_abs();
        assert!(err < h, "err {err} not O(h) = {h}");
    }

    #[test]
    fn divergence_of_constant_is_zero_and_zero_mean() {
        let grid = TorusGrid::square(8).unwrap();
        let u = Field::vector_from_fn(&grid, 2, |_, c| if c == 0 { 1.5 } else { -0.5 });
        let div = apply_forward(&OperatorSpec::Divergence, &u).unwrap();
        assert!(div.max_abs() < 1e-14);

        let v = random_field(&grid, 2, 5);
        let dv = apply_forward(&OperatorSpec::Divergence, &v).unwrap();
        assert!(dv.mean().unwrap().abs() < 1e-14);
    }

    #[test]
    fn curl_of_single_mode_is_exact() {
        let grid = TorusGrid::cube(8).unwrap();
        let u = Field::vector_from_fn(&grid, 3, |x, c| if c == 1 { x[0].sin() } else { 0.0 });
        let curl = apply_forward(&OperatorSpec::Curl3, &u).unwrap();
        let target = Field::vector_from_fn(&grid, 3, |x, c| if c == 2 { x[0].cos() } else { 0.0 });
        let err = curl.sub(&target).unwrap().max_abs();
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn adjoint_identity_holds_for_all_operators() {
        let grid2 = TorusGrid::new(&[8, 6]).unwrap();
        let grid3 = TorusGrid::cube(6).unwrap();
        // (op, grid, input comps, output comps)
        let cases = vec![
            (OperatorSpec::Divergence, grid2.clone(), 2, 1),
            (OperatorSpec::Identity, grid2, 1, 1),
            (OperatorSpec::Divergence, grid3.clone(), 3, 1),
            (OperatorSpec::Curl3, grid3, 3, 3),
        ];
        for (op, grid, mi, mo) in cases {
            let u = random_field(&grid, mi, 21);
            let g = random_field(&grid, mo, 22);
            let lhs = inner_product(&apply_forward(&op, &u).unwrap(), &g).unwrap();
            let rhs = inner_product(&u, &apply_dual(&op, &g).unwrap()).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()),
                "{op:?}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn dual_of_constant_is_zero_for_divergence() {
        let grid = TorusGrid::square(8).unwrap();
        let g = Field::from_fn(&grid, |_| 2.0);
        let d = apply_dual(&OperatorSpec::Divergence, &g).unwrap();
        assert!(d.max_abs() < 1e-14);
    }

    #[test]
    fn range_compatibility_machine_precision() {
        let grid2 = TorusGrid::square(8).unwrap();
        let u = random_field(&grid2, 2, 31);
        let f = apply_forward(&OperatorSpec::Divergence, &u).unwrap();
        let p = OperatorSpec::Divergence.compatibility();
        assert!(p.incompatibility(&f).unwrap() < 1e-12);

        let grid3 = TorusGrid::cube(6).unwrap();
        let v = random_field(&grid3, 3, 32);
        let c = apply_forward(&OperatorSpec::Curl3, &v).unwrap();
        let p = OperatorSpec::Curl3.compatibility();
        assert!(p.incompatibility(&c).unwrap() < 1e-12);
    }

    #[test]
    fn hodge_keeps_gradients_and_kills_solenoidal() {
        let grid = TorusGrid::cube(8).unwrap();
        // g = grad(cos x cos y cos z), a zero-mean gradient field
        let g = Field::vector_from_fn(&grid, 3, |x, c| {
            let (cx, cy, cz) = (x[0].cos(), x[1].cos(), x[2].cos());
            let (sx, sy, sz) = (x[0].sin(), x[1].sin(), x[2].sin());
            match c {
                0 => -sx * cy * cz,
                1 => -cx * sy * cz,
                _ => -cx * cy * sz,
            }
        });
        let proj = hodge_project(&g).unwrap();
        assert!(proj.sub(&g).unwrap().max_abs() < 1e-10);

        let sol = Field::vector_from_fn(&grid, 3, |x, c| if c == 1 { x[0].sin() } else { 0.0 });
        let proj = hodge_project(&sol).unwrap();
        assert!(proj.max_abs() < 1e-10);

        // linearity: gradient + solenoidal -> gradient
        let sum = g.add(&sol).unwrap();
        let proj = hodge_project(&sum).unwrap();
        assert!(proj.sub(&g).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn riesz_single_modes() {
        let grid = TorusGrid::square(16).unwrap();
        let f = Field::from_fn(&grid, |x| (x[0] + x[1]).cos());
        let r = riesz_apply(&f, 0, 1).unwrap();
        let err = r.sub(&f.scale(0.5)).unwrap().max_abs();
        assert!(err < 1e-12, "err {err}");

        let g = Field::from_fn(&grid, |x| x[0].cos());
        let r = riesz_apply(&g, 0, 1).unwrap();
        assert!(r.max_abs() < 1e-12);
    }

    #[test]
    fn riesz_is_l2_contraction() {
        let grid = TorusGrid::square(12).unwrap();
        let f = crate::norms::project_zero_mean(&random_field(&grid, 1, 41)).unwrap();
        let r = riesz_apply(&f, 0, 1).unwrap();
        // Parseval oracle: compare energies mode by mode
        let sf = fft::fft_forward(&f);
        let sr = fft::fft_forward(&r);
        let ef: f64 = sf.data.iter().map(|z| z.norm_sqr()).sum();
        let er: f64 = sr.data.iter().map(|z| z.norm_sqr()).sum();
        assert!(er <= ef * (1.0 + 1e-12));
        assert!(l2_norm(&r) <= l2_norm(&f) * (1.0 + 1e-12));
        assert!(r.mean().unwrap().abs() < 1e-12);
    }

    #[test]
    fn riesz_squares_sum_to_identity_2d() {
        let grid = TorusGrid::square(12).unwrap();
        let f = crate::norms::project_zero_mean(&random_field(&grid, 1, 43)).unwrap();
        let r11 = riesz_apply(&f, 0, 0).unwrap();
        let r22 = riesz_apply(&f, 1, 1).unwrap();
        let sum = r11.add(&r22).unwrap();
        let err = sum.sub(&f).unwrap().max_abs();
        assert!(err < 1e-12 * (1.0 + f.max_abs()), "err {err}");
    }

    #[test]
    fn riesz_rejects_nonzero_mean() {
        let grid = TorusGrid::square(8).unwrap();
        let f = Field::from_fn(&grid, |_| 1.0);
        assert!(riesz_apply(&f, 0, 1).is_err());
    }

    #[test]
    fn classical_solution_single_mode() {
        let grid = TorusGrid::square(16).unwrap();
        let f = Field::from_fn(&grid, |x| x[0].cos());
        let x = classical_solution(&f).unwrap();
        let target = Field::vector_from_fn(&grid, 2, |p, c| if c == 0 { p[0].sin() } else { 0.0 });
        assert!(x.sub(&target).unwrap().max_abs() < 1e-12);

        let z = Field::zeros(&grid, 1);
        assert!(classical_solution(&z).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn classical_solution_inverts_spectral_divergence() {
        let grid = TorusGrid::square(16).unwrap();
        let f = crate::norms::project_zero_mean(&random_bandlimited(&grid, 51)).unwrap();
        let x = classical_solution(&f).unwrap();
        let div = spectral_divergence(&x);
        let rel = l2_norm(&div.sub(&f).unwrap()) / l2_norm(&f);
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn finite_difference_divergence_of_classical_solution_is_first_order() {
        let grid = TorusGrid::square(64).unwrap();
        let f = Field::from_fn(&grid, |x| x[0].cos() + (x[0] + x[1]).sin());
        let x = classical_solution(&f).unwrap();
        let div = apply_forward(&OperatorSpec::Divergence, &x).unwrap();
        let rel = l2_norm(&div.sub(&f).unwrap()) / l2_norm(&f);
        assert!(rel < 0.1, "rel {rel}");
    }
}
