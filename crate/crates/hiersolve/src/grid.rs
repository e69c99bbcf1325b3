//! Periodic uniform grids on the d-dimensional torus `[0, 2π)^d` and the
//! scalar/vector sample fields living on them.
//!
//! Conventions used throughout the crate:
//! * samples are stored row-major with the last axis contiguous,
//!   component-major for vector fields (all of component 0, then component 1, ...);
//! * the quadrature weight is the uniform cell volume `h^d = prod(2π/n_i)`,
//!   which is spectrally exact for trigonometric polynomials;
//! * fields are immutable value types; every operation returns a new field.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Uniform periodic grid with even per-axis sizes.
#[derive(Debug, Clone)]
pub struct TorusGrid {
    n: Vec<usize>,
    strides: Vec<usize>,
    // next[a][i] / prev[a][i]: flat index of the periodic neighbour of flat
    // index i along axis a. Precomputed so the difference operators are plain
    // indexed loops.
    neighbors: Arc<NeighborTables>,
}

#[derive(Debug)]
struct NeighborTables {
    next: Vec<Vec<u32>>,
    prev: Vec<Vec<u32>>,
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}
impl Eq for TorusGrid {}

impl TorusGrid {
    /// Build a grid from per-axis sample counts. Each count must be even and
    /// at least 4 so that Nyquist handling is unambiguous.
    pub fn new(n: &[usize]) -> Result<Self> {
        if n.len() < 2 || n.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3, got {}",
                n.len()
            )));
        }
        for &ni in n {
            if ni < 4 || ni % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis size {ni} must be even and >= 4"
                )));
            }
        }
        let d = n.len();
        let mut strides = vec![1usize; d];
        for a in (0..d - 1).rev() {
            strides[a] = strides[a + 1] * n[a + 1];
        }
        let npts: usize = n.iter().product();
        if npts > u32::MAX as usize {
            return Err(Error::InvalidGrid("grid too large".into()));
        }

        let mut next = Vec::with_capacity(d);
        let mut prev = Vec::with_capacity(d);
        for a in 0..d {
            let mut nx = vec![0u32; npts];
            let mut pv = vec![0u32; npts];
            for idx in 0..npts {
                let coord = (idx / strides[a]) % n[a];
                let up = if coord + 1 == n[a] {
                    idx + strides[a] - n[a] * strides[a]
                } else {
                    idx + strides[a]
                };
                let dn = if coord == 0 {
                    idx + (n[a] - 1) * strides[a]
                } else {
                    idx - strides[a]
                };
                nx[idx] = up as u32;
                pv[idx] = dn as u32;
            }
            next.push(nx);
            prev.push(pv);
        }

        Ok(TorusGrid {
            n: n.to_vec(),
            strides,
            neighbors: Arc::new(NeighborTables { next, prev }),
        })
    }

    /// Square 2D grid.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(&[n, n])
    }

    /// Cubic 3D grid.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new(&[n, n, n])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.n
    }

    pub fn size(&self, axis: usize) -> usize {
        self.n[axis]
    }

    /// Per-axis spacing h = 2π/n.
    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.n[axis] as f64
    }

    pub fn num_points(&self) -> usize {
        self.n.iter().product()
    }

    /// Uniform quadrature weight h^d (the cell volume).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Total measure of the torus, (2π)^d.
    pub fn volume(&self) -> f64 {
        (2.0 * std::f64::consts::PI).powi(self.dim() as i32)
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Flat index of the periodic neighbour one step forward along `axis`.
    #[inline(always)]
    pub fn next(&self, axis: usize, idx: usize) -> usize {
        self.neighbors.next[axis][idx] as usize
    }

    /// Flat index of the periodic neighbour one step backward along `axis`.
    #[inline(always)]
    pub fn prev(&self, axis: usize, idx: usize) -> usize {
        self.neighbors.prev[axis][idx] as usize
    }

    /// Coordinates of flat index `idx`, each in `[0, 2π)`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let c = (idx / self.strides[a]) % self.n[a];
            x.push(c as f64 * self.spacing(a));
        }
        x
    }
}

/// Scalar or m-component vector samples on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    components: usize,
    data: Vec<f64>,
}

impl Field {
    /// Wrap raw data. The layout is component-major, row-major per component.
    pub fn new(grid: TorusGrid, components: usize, data: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::ComponentMismatch {
                expected: 1,
                got: 0,
            });
        }
        if data.len() != components * grid.num_points() {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != components {} * points {}",
                data.len(),
                components,
                grid.num_points()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample value {v}")));
        }
        Ok(Field {
            grid,
            components,
            data,
        })
    }

    pub fn zeros(grid: &TorusGrid, components: usize) -> Self {
        Field {
            grid: grid.clone(),
            components,
            data: vec![0.0; components * grid.num_points()],
        }
    }

    /// Scalar field sampled from a function of the grid point.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let npts = grid.num_points();
        let mut data = Vec::with_capacity(npts);
        for idx in 0..npts {
            data.push(f(&grid.point(idx)));
        }
        Field {
            grid: grid.clone(),
            components: 1,
            data,
        }
    }

    /// Vector field sampled componentwise from a function of the grid point.
    pub fn vector_from_fn(
        grid: &TorusGrid,
        components: usize,
        f: impl Fn(&[f64], usize) -> f64,
    ) -> Self {
        let npts = grid.num_points();
        let mut data = Vec::with_capacity(components * npts);
        for c in 0..components {
            for idx in 0..npts {
                data.push(f(&grid.point(idx), c));
            }
        }
        Field {
            grid: grid.clone(),
            components,
            data,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// View of component `c`.
    pub fn component(&self, c: usize) -> &[f64] {
        let npts = self.grid.num_points();
        &self.data[c * npts..(c + 1) * npts]
    }

    /// Extract component `c` as a scalar field.
    pub fn component_field(&self, c: usize) -> Field {
        Field {
            grid: self.grid.clone(),
            components: 1,
            data: self.component(c).to_vec(),
        }
    }

    /// Stack scalar fields into one vector field.
    pub fn from_components(parts: &[Field]) -> Result<Field> {
        let grid = parts[0].grid.clone();
        let mut data = Vec::with_capacity(parts.len() * grid.num_points());
        for p in parts {
            if p.grid != grid || p.components != 1 {
                return Err(Error::ShapeMismatch(
                    "stacking requires scalar fields on one grid".into(),
                ));
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Field {
            grid,
            components: parts.len(),
            data,
        })
    }

    /// Mean of a scalar field over the torus.
    pub fn mean(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::ComponentMismatch {
                expected: 1,
                got: self.components,
            });
        }
        Ok(self.data.iter().sum::<f64>() / self.data.len() as f64)
    }

    /// Per-component means.
    pub fn component_means(&self) -> Vec<f64> {
        let npts = self.grid.num_points();
        (0..self.components)
            .map(|c| self.component(c).iter().sum::<f64>() / npts as f64)
            .collect()
    }

    pub fn scale(&self, alpha: f64) -> Field {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= alpha;
        }
        out
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        Ok(out)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Result<Field> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += alpha * w;
        }
        Ok(out)
    }

    /// Largest pointwise Euclidean magnitude over the samples.
    pub fn max_abs(&self) -> f64 {
        let npts = self.grid.num_points();
        let mut m: f64 = 0.0;
        for idx in 0..npts {
            let mut s = 0.0;
            for c in 0..self.components {
                let v = self.data[c * npts + idx];
                s += v * v;
            }
            m = m.max(s);
        }
        m.sqrt()
    }

    pub(crate) fn check_same_shape(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::ShapeMismatch(format!(
                "{:?}/{} vs {:?}/{}",
                self.grid.sizes(),
                self.components,
                other.grid.sizes(),
                other.components
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_odd_and_small_sizes() {
        assert!(TorusGrid::new(&[5, 8]).is_err());
        assert!(TorusGrid::new(&[2, 8]).is_err());
        assert!(TorusGrid::new(&[8]).is_err());
        assert!(TorusGrid::new(&[8, 8, 8, 8]).is_err());
        assert!(TorusGrid::new(&[8, 6]).is_ok());
    }

    #[test]
    fn spacing_times_size_is_two_pi() {
        let g = TorusGrid::new(&[16, 32]).unwrap();
        for a in 0..2 {
            let prod = g.spacing(a) * g.size(a) as f64;
            assert!((prod - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        }
    }

    #[test]
    fn neighbor_tables_wrap() {
        let g = TorusGrid::new(&[4, 6]).unwrap();
        // last point of axis 1 in row 0 wraps to index 0
        assert_eq!(g.next(1, 5), 0);
        assert_eq!(g.prev(1, 0), 5);
        // axis 0 stride is 6
        assert_eq!(g.next(0, 0), 6);
        assert_eq!(g.prev(0, 0), 3 * 6);
    }

    #[test]
    fn field_rejects_nan_and_bad_length() {
        let g = TorusGrid::square(4).unwrap();
        assert!(Field::new(g.clone(), 1, vec![0.0; 15]).is_err());
        let mut data = vec![0.0; 16];
        data[3] = f64::NAN;
        assert!(Field::new(g, 1, data).is_err());
    }

    #[test]
    fn component_extraction_round_trips() {
        let g = TorusGrid::square(4).unwrap();
        let v = Field::vector_from_fn(&g, 2, |x, c| if c == 0 { x[0] } else { -x[1] });
        let parts = vec![v.component_field(0), v.component_field(1)];
        let back = Field::from_components(&parts).unwrap();
        assert_eq!(v, back);
    }
}
