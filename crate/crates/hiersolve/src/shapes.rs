//! Test shapes: indicators and bumps centered at (pi, ..., pi).
//!
//! Discs and balls are rasterized with supersampled cell coverage so the
//! isotropic discrete TV converges to the Euclidean perimeter; axis-aligned
//! squares are exact as plain binary indicators.

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};

fn check_extent(_grid: &TorusGrid, extent: f64) -> Result<()> {
    // periodic wrap: the shape must fit well inside half the period
    if extent >= std::f64::consts::PI {
        return Err(Error::ShapeMismatch(format!(
            "shape extent {extent:.3} exceeds half the torus period"
        )));
    }
    Ok(())
}

/// Binary indicator of the centered axis-aligned square (2D) or cube (3D)
/// with the given side length.
pub fn square_indicator(grid: &TorusGrid, side: f64) -> Result<Field> {
    check_extent(grid, side / 2.0)?;
    let half = side / 2.0;
    let c = std::f64::consts::PI;
    Ok(Field::from_fn(grid, |x| {
        if x.iter().all(|&xi| xi >= c - half && xi < c + half) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Antialiased indicator of the centered disc (2D) or ball (3D): a cosine
/// edge profile over `ramp_cells` grid cells. The smooth symmetric profile
/// keeps the coarea mass exact, so the isotropic discrete TV converges to
/// the Euclidean perimeter with error ~ (1/ramp_cells)^2.
pub fn disc_indicator(grid: &TorusGrid, radius: f64, ramp_cells: f64) -> Result<Field> {
    check_extent(grid, radius)?;
    let c = std::f64::consts::PI;
    let h = (0..grid.dim())
        .map(|a| grid.spacing(a))
        .fold(0.0f64, f64::max);
    let w = ramp_cells.max(1.0) * h;
    Ok(Field::from_fn(grid, |x| {
        let dist: f64 = x
            .iter()
            .map(|&xi| (xi - c) * (xi - c))
            .sum::<f64>()
            .sqrt();
        let t = ((radius + w / 2.0 - dist) / w).clamp(0.0, 1.0);
        0.5 * (1.0 - (std::f64::consts::PI * t).cos())
    }))
}

/// Smooth Gaussian bump `exp(-|x - c|^2 / (2 sigma^2))`.
pub fn smooth_bump(grid: &TorusGrid, sigma: f64) -> Result<Field> {
    check_extent(grid, 3.0 * sigma)?;
    let c = std::f64::consts::PI;
    Ok(Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|&xi| (xi - c) * (xi - c)).sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    }))
}

/// Deterministic synthetic cartoon image in [0, 1]: plateau shapes over a
/// gentle background ramp. Used by the image pipeline tests and examples.
pub fn synthetic_cartoon(grid: &TorusGrid) -> Result<Field> {
    let pi = std::f64::consts::PI;
    let disc = disc_indicator(grid, 0.9, 6.0)?;
    let square = square_indicator(grid, 1.2)?;
    let base = Field::from_fn(grid, |x| {
        let ramp = 0.15 + 0.2 * (0.5 - (x[0] - pi).abs() / (2.0 * pi));
        // small off-center plateau disc
        let dx = (x[0] - pi - 1.1).rem_euclid(2.0 * pi) - 0.0;
        let dy = (x[1] - pi + 0.9).rem_euclid(2.0 * pi);
        let dxc = if dx > pi { dx - 2.0 * pi } else { dx };
        let dyc = if dy > pi { dy - 2.0 * pi } else { dy };
        if dxc * dxc + dyc * dyc < 0.36 {
            ramp + 0.35
        } else {
            ramp
        }
    });
    let mut img = base.add(&disc.scale(0.45))?.add(&square.scale(0.25))?;
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{compute_norm, NormSpec};
    use std::f64::consts::PI;

    #[test]
    fn square_bv_is_perimeter() {
        let g = TorusGrid::square(256).unwrap();
        let f = square_indicator(&g, PI).unwrap();
        let bv = compute_norm(&f, &NormSpec::Bv).unwrap();
        assert!(((bv - 4.0 * PI) / (4.0 * PI)).abs() < 0.005, "bv {bv}");
    }

    #[test]
    fn disc_coverage_bv_is_near_perimeter() {
        let g = TorusGrid::square(256).unwrap();
        let r = PI / 2.0;
        let f = disc_indicator(&g, r, 6.0).unwrap();
        let bv = compute_norm(&f, &NormSpec::Bv).unwrap();
        let target = 2.0 * PI * r;
        assert!(
            ((bv - target) / target).abs() < 0.02,
            "bv {bv} vs {target}"
        );
    }

    #[test]
    fn oversized_shapes_are_rejected() {
        let g = TorusGrid::square(64).unwrap();
        assert!(disc_indicator(&g, PI, 4).is_err());
        assert!(square_indicator(&g, 2.0 * PI).is_err());
    }

    #[test]
    fn cartoon_in_unit_range() {
        let g = TorusGrid::square(64).unwrap();
        let img = synthetic_cartoon(&g).unwrap();
        assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // genuinely non-constant
        let mean = img.mean().unwrap();
        assert!(img.data().iter().any(|&v| (v - mean).abs() > 0.1));
    }
}
