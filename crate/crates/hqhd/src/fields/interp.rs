//! Off-grid evaluation of periodic fields.
//!
//! Two schemes are provided: a separable periodic cubic (four-point Lagrange
//! stencil per axis, fourth-order accurate, cheap enough for inner loops) and
//! exact trigonometric evaluation from the field's DFT (spectrally accurate,
//! cost proportional to the grid size per point).

use num_complex::Complex64;

use super::field::{ScalarField, VectorField};
use super::grid::Grid;
use super::spectral::forward_all;

/// Off-grid evaluation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    /// Separable periodic cubic interpolation (default).
    Tricubic,
    /// Exact evaluation of the trigonometric interpolant.
    Fourier,
}

impl Default for Interpolation {
    fn default() -> Self {
        Interpolation::Tricubic
    }
}

/// Lagrange cubic weights on the stencil {-1, 0, 1, 2} at parameter `t` in [0, 1).
pub(crate) fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t * t - 1.0) * (t - 2.0) / 2.0,
        -t * (t + 1.0) * (t - 2.0) / 2.0,
        t * (t * t - 1.0) / 6.0,
    ]
}

struct AxisStencil {
    idx: [usize; 4],
    w: [f64; 4],
}

fn axis_stencil(grid: &Grid, axis: usize, x: f64) -> AxisStencil {
    let n = grid.dims()[axis] as i64;
    let h = grid.spacing(axis);
    let u = (x - grid.origin(axis)) / h;
    let base = u.floor();
    let t = u - base;
    let b = base as i64;
    let mut idx = [0usize; 4];
    for (s, o) in (-1i64..=2).enumerate() {
        idx[s] = (b + o).rem_euclid(n) as usize;
    }
    AxisStencil {
        idx,
        w: cubic_weights(t),
    }
}

pub(crate) fn tricubic_values(grid: &Grid, vals: &[f64], point: &[f64; 3]) -> f64 {
    let axes = grid.axes();
    let stencils: Vec<AxisStencil> = (0..axes)
        .map(|a| axis_stencil(grid, a, point[a]))
        .collect();
    let strides = grid.strides();
    let mut acc = 0.0;
    match axes {
        1 => {
            let s = &stencils[0];
            for i in 0..4 {
                acc += s.w[i] * vals[s.idx[i]];
            }
        }
        2 => {
            let (s0, s1) = (&stencils[0], &stencils[1]);
            for i in 0..4 {
                let row = s0.idx[i] * strides[0];
                let mut inner = 0.0;
                for j in 0..4 {
                    inner += s1.w[j] * vals[row + s1.idx[j] * strides[1]];
                }
                acc += s0.w[i] * inner;
            }
        }
        _ => {
            let (s0, s1, s2) = (&stencils[0], &stencils[1], &stencils[2]);
            for i in 0..4 {
                let base0 = s0.idx[i] * strides[0];
                let mut mid = 0.0;
                for j in 0..4 {
                    let base1 = base0 + s1.idx[j] * strides[1];
                    let mut inner = 0.0;
                    for k in 0..4 {
                        inner += s2.w[k] * vals[base1 + s2.idx[k] * strides[2]];
                    }
                    mid += s1.w[j] * inner;
                }
                acc += s0.w[i] * mid;
            }
        }
    }
    acc
}

/// Evaluates a scalar field at an arbitrary point (periodic in every axis);
/// unused trailing coordinates are ignored.
pub fn interpolate(f: &ScalarField, point: &[f64; 3], mode: Interpolation) -> f64 {
    match mode {
        Interpolation::Tricubic => tricubic_values(f.grid(), f.values(), point),
        Interpolation::Fourier => FourierEvaluator::scalar(f).eval_scalar(point),
    }
}

/// Evaluates a vector field at an arbitrary point; unused components are zero.
pub fn interpolate_vector(v: &VectorField, point: &[f64; 3], mode: Interpolation) -> [f64; 3] {
    match mode {
        Interpolation::Tricubic => {
            let mut out = [0.0; 3];
            for c in 0..v.ncomp() {
                out[c] = tricubic_values(v.grid(), v.comp(c), point);
            }
            out
        }
        Interpolation::Fourier => FourierEvaluator::vector(v).eval(point),
    }
}

/// Cached trigonometric interpolant of a real field.
///
/// Construction takes one full DFT; each evaluation contracts the whole
/// spectrum (cost proportional to the grid size), so reuse one evaluator for
/// many points. The unpaired Nyquist mode is evaluated as a cosine, which
/// keeps values real and reproduces the nodes exactly.
#[derive(Clone, Debug)]
pub struct FourierEvaluator {
    grid: Grid,
    spectra: Vec<Vec<Complex64>>,
}

impl FourierEvaluator {
    /// Evaluator for a scalar field.
    pub fn scalar(f: &ScalarField) -> FourierEvaluator {
        let grid = f.grid().clone();
        let mut spec: Vec<Complex64> = f
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        forward_all(&grid, &mut spec);
        FourierEvaluator {
            grid,
            spectra: vec![spec],
        }
    }

    /// Evaluator for every component of a vector field.
    pub fn vector(v: &VectorField) -> FourierEvaluator {
        let grid = v.grid().clone();
        let n = grid.len();
        let spectra = (0..v.ncomp())
            .map(|c| {
                let mut spec: Vec<Complex64> = v.values()[c * n..(c + 1) * n]
                    .iter()
                    .map(|&x| Complex64::new(x, 0.0))
                    .collect();
                forward_all(&grid, &mut spec);
                spec
            })
            .collect();
        FourierEvaluator { grid, spectra }
    }

    fn phase_tables(&self, point: &[f64; 3]) -> Vec<Vec<Complex64>> {
        let grid = &self.grid;
        (0..grid.axes())
            .map(|a| {
                let rel = point[a] - grid.origin(a);
                (0..grid.dims()[a])
                    .map(|j| {
                        let arg = grid.wavenumber(a, j) * rel;
                        if grid.is_nyquist(a, j) {
                            Complex64::new(arg.cos(), 0.0)
                        } else {
                            Complex64::new(arg.cos(), arg.sin())
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn eval_component(&self, c: usize, tables: &[Vec<Complex64>]) -> f64 {
        let grid = &self.grid;
        let spec = &self.spectra[c];
        let axes = grid.axes();
        // Contract the last axis first, then fold the remaining axes.
        let mut current: Vec<Complex64> = spec.clone();
        for a in (0..axes).rev() {
            let n = grid.dims()[a];
            let rows = current.len() / n;
            let table = &tables[a];
            let mut next = vec![Complex64::ZERO; rows];
            for (r, out) in next.iter_mut().enumerate() {
                let row = &current[r * n..(r + 1) * n];
                let mut acc = Complex64::ZERO;
                for (v, p) in row.iter().zip(table) {
                    acc += v * p;
                }
                *out = acc;
            }
            current = next;
        }
        current[0].re / grid.len() as f64
    }

    /// Value of the (first component of the) field at `point`.
    pub fn eval_scalar(&self, point: &[f64; 3]) -> f64 {
        let tables = self.phase_tables(point);
        self.eval_component(0, &tables)
    }

    /// Vector value at `point`; unused components are zero.
    pub fn eval(&self, point: &[f64; 3]) -> [f64; 3] {
        let tables = self.phase_tables(point);
        let mut out = [0.0; 3];
        for c in 0..self.spectra.len() {
            out[c] = self.eval_component(c, &tables);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn both_modes_reproduce_nodes() {
        let g = Grid::new(&[8, 6], &[2.0, 3.0]).unwrap();
        let f = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0] / 2.0).sin() + p[1] * 0.0 + 1.0);
        for flat in [0usize, 5, 17, 40] {
            let p = g.position(flat);
            let v = f.values()[flat];
            assert!((interpolate(&f, &p, Interpolation::Tricubic) - v).abs() < 1e-12);
            assert!((interpolate(&f, &p, Interpolation::Fourier) - v).abs() < 1e-11);
        }
    }

    #[test]
    fn fourier_exact_on_plane_wave() {
        let g = Grid::new(&[16, 16], &[4.0, 4.0]).unwrap();
        let kx = 2.0 * PI * 3.0 / 4.0;
        let ky = 2.0 * PI * 2.0 / 4.0;
        let f = ScalarField::from_fn(&g, |p| (kx * p[0] + ky * p[1]).cos());
        let ev = FourierEvaluator::scalar(&f);
        let pts = [[0.13, -0.77, 0.0], [1.9, 1.01, 0.0], [-1.3, 0.333, 0.0]];
        for p in pts {
            let exact = (kx * p[0] + ky * p[1]).cos();
            assert!(
                (ev.eval_scalar(&p) - exact).abs() < 1e-6,
                "fourier interpolation must resolve a plane wave"
            );
            assert!((ev.eval_scalar(&p) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn tricubic_fourth_order() {
        let errs: Vec<f64> = [16usize, 32]
            .iter()
            .map(|&n| {
                let g = Grid::new(&[n], &[2.0 * PI]).unwrap();
                let f = ScalarField::from_fn(&g, |p| (2.0 * p[0]).sin());
                let mut worst = 0.0f64;
                for s in 0..50 {
                    let x = -PI + 2.0 * PI * (s as f64 + 0.31) / 50.0;
                    let e = (interpolate(&f, &[x, 0.0, 0.0], Interpolation::Tricubic)
                        - (2.0 * x).sin())
                    .abs();
                    worst = worst.max(e);
                }
                worst
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.5, "observed order {order}, errors {errs:?}");
    }

    #[test]
    fn periodic_wrap() {
        let g = Grid::new(&[16], &[2.0]).unwrap();
        let f = ScalarField::from_fn(&g, |p| (PI * p[0]).sin());
        let a = interpolate(&f, &[0.97, 0.0, 0.0], Interpolation::Tricubic);
        let b = interpolate(&f, &[0.97 - 2.0, 0.0, 0.0], Interpolation::Tricubic);
        let c = interpolate(&f, &[0.97 + 4.0, 0.0, 0.0], Interpolation::Tricubic);
        assert!((a - b).abs() < 1e-13);
        assert!((a - c).abs() < 1e-13);
    }

    #[test]
    fn vector_interpolation_components() {
        let g = Grid::new(&[12, 12], &[3.0, 3.0]).unwrap();
        let v = VectorField::from_fn(&g, 3, |p| {
            [
                (2.0 * PI * p[0] / 3.0).cos(),
                (2.0 * PI * p[1] / 3.0).sin(),
                1.5,
            ]
        });
        let p = [0.4, -0.9, 0.0];
        for (mode, tol) in [
            (Interpolation::Tricubic, 5e-3),
            (Interpolation::Fourier, 1e-10),
        ] {
            let out = interpolate_vector(&v, &p, mode);
            assert!((out[0] - (2.0 * PI * p[0] / 3.0).cos()).abs() < tol);
            assert!((out[1] - (2.0 * PI * p[1] / 3.0).sin()).abs() < tol);
            assert!((out[2] - 1.5).abs() < 1e-10);
        }
    }
}
