//! Multidimensional FFT on torus grids, plus the wavenumber bookkeeping the
//! spectral operators need.
//!
//! Forward transforms are unnormalized sums; the inverse divides by the point
//! count. Real fields round-trip to ~1e-15 relative. Integer wavenumbers per
//! axis follow the usual convention `0, 1, ..., n/2, -(n/2-1), ..., -1`; odd
//! multipliers must zero the Nyquist mode to keep outputs real.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::{Field, TorusGrid};

fn plan_cache() -> &'static Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan_for(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = plan_cache().lock().unwrap();
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            planner.plan_fft(
                len,
                if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                },
            )
        })
        .clone()
}

/// Complex Fourier coefficients of a field, same layout as [`Field`].
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub grid: TorusGrid,
    pub components: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: &TorusGrid, components: usize) -> Self {
        Spectrum {
            grid: grid.clone(),
            components,
            data: vec![Complex64::new(0.0, 0.0); components * grid.num_points()],
        }
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let npts = self.grid.num_points();
        &self.data[c * npts..(c + 1) * npts]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let npts = self.grid.num_points();
        &mut self.data[c * npts..(c + 1) * npts]
    }
}

/// Transform along one axis of a flattened complex volume, in place.
fn fft_axis(grid: &TorusGrid, data: &mut [Complex64], axis: usize, inverse: bool) {
    let n = grid.size(axis);
    let stride = grid.strides()[axis];
    let npts = grid.num_points();
    let plan = plan_for(n, inverse);
    let mut line = vec![Complex64::new(0.0, 0.0); n];

    // Enumerate the start index of every 1D line along `axis`.
    let block = stride * n;
    let nblocks = npts / block;
    for b in 0..nblocks {
        for off in 0..stride {
            let start = b * block + off;
            for i in 0..n {
                line[i] = data[start + i * stride];
            }
            plan.process(&mut line);
            for i in 0..n {
                data[start + i * stride] = line[i];
            }
        }
    }
}

/// Unnormalized forward transform of every component.
pub fn fft_forward(f: &Field) -> Spectrum {
    let grid = f.grid().clone();
    let npts = grid.num_points();
    let mut spec = Spectrum::zeros(&grid, f.components());
    for c in 0..f.components() {
        let src = f.component(c);
        let dst = spec.component_mut(c);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = Complex64::new(*s, 0.0);
        }
    }
    for c in 0..f.components() {
        let dst = spec.component_mut(c);
        for a in 0..grid.dim() {
            fft_axis(&grid, dst, a, false);
        }
    }
    debug_assert_eq!(spec.data.len(), f.components() * npts);
    spec
}

/// Inverse transform; divides by the point count and keeps the real part.
pub fn fft_inverse(spec: &Spectrum) -> Field {
    let grid = spec.grid.clone();
    let npts = grid.num_points();
    let mut work = spec.data.clone();
    for c in 0..spec.components {
        let dst = &mut work[c * npts..(c + 1) * npts];
        for a in 0..grid.dim() {
            fft_axis(&grid, dst, a, true);
        }
    }
    let scale = 1.0 / npts as f64;
    let mut out = Field::zeros(&grid, spec.components);
    for (d, s) in out.data_mut().iter_mut().zip(&work) {
        *d = s.re * scale;
    }
    out
}

/// Integer wavenumber along `axis` for coefficient index `i`.
#[inline]
pub fn wavenumber(n: usize, i: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Whether index `i` is the (unpaired) Nyquist mode of an even axis.
#[inline]
pub fn is_nyquist(n: usize, i: usize) -> bool {
    i == n / 2
}

/// Integer wavenumber vector of flat coefficient index `idx`.
pub fn wavevector(grid: &TorusGrid, idx: usize) -> Vec<i64> {
    let mut k = Vec::with_capacity(grid.dim());
    for a in 0..grid.dim() {
        let i = (idx / grid.strides()[a]) % grid.size(a);
        k.push(wavenumber(grid.size(a), i));
    }
    k
}

/// Whether any axis of the flat coefficient index sits on its Nyquist mode.
pub fn touches_nyquist(grid: &TorusGrid, idx: usize) -> bool {
    (0..grid.dim()).any(|a| {
        let i = (idx / grid.strides()[a]) % grid.size(a);
        is_nyquist(grid.size(a), i)
    })
}

/// Apply a scalar spectral multiplier `m(k)` to every component.
pub fn apply_multiplier(f: &Field, m: impl Fn(&[i64]) -> Complex64) -> Field {
    let mut spec = fft_forward(f);
    let grid = spec.grid.clone();
    let npts = grid.num_points();
    for idx in 0..npts {
        let k = wavevector(&grid, idx);
        let mult = m(&k);
        for c in 0..spec.components {
            spec.data[c * npts + idx] *= mult;
        }
    }
    fft_inverse(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::l2_norm;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_identity() {
        let grid = TorusGrid::new(&[8, 6, 4]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..2 * grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = Field::new(grid, 2, data).unwrap();
        let back = fft_inverse(&fft_forward(&f));
        let num: f64 = f
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = f.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 1e-12);
    }

    #[test]
    fn cos_x_has_two_modes() {
        let grid = TorusGrid::square(16).unwrap();
        let f = Field::from_fn(&grid, |x| x[0].cos());
        let spec = fft_forward(&f);
        let npts = grid.num_points();
        let mut nonzero = 0;
        for idx in 0..npts {
            let mag = spec.data[idx].norm();
            if mag > 1e-8 * npts as f64 {
                nonzero += 1;
                let k = wavevector(&grid, idx);
                assert_eq!(k[0].abs(), 1);
                assert_eq!(k[1], 0);
                // coefficient n^2/2 for amplitude 1/2 at each of +-1
                assert!((mag - npts as f64 / 2.0).abs() < 1e-6 * npts as f64);
            }
        }
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn parseval_consistent_with_inner_product() {
        let grid = TorusGrid::square(12).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..grid.num_points())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = Field::new(grid.clone(), 1, data).unwrap();
        let spec = fft_forward(&f);
        let npts = grid.num_points() as f64;
        // ||f||_{L2}^2 = (w0/N) * sum |fhat|^2  (direct-sum oracle)
        let coeff_energy: f64 = spec.data.iter().map(|z| z.norm_sqr()).sum();
        let lhs = l2_norm(&f).powi(2);
        let rhs = grid.cell_volume() / npts * coeff_energy;
        assert!((lhs - rhs).abs() < 1e-10 * lhs.max(1.0));
    }
}
