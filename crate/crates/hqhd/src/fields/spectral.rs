//! Spectral (FFT-based) differential operators on periodic fields.
//!
//! First derivatives zero the unpaired Nyquist mode so differentiation maps
//! real fields to real fields; the Laplacian and its inverse keep the Nyquist
//! mode so that their composition round-trips every representable mode.
//!
//! Axis passes run in three stages (gather lines into contiguous buffers,
//! transform lines, scatter back); each stage parallelizes over disjoint
//! chunks, so results are bitwise reproducible for any thread count.

use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

use super::field::{ComplexField, ScalarField, VectorField};
use super::grid::Grid;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

pub(crate) fn plan(len: usize, forward: bool) -> std::sync::Arc<dyn Fft<f64>> {
    let mut p = planner().lock().unwrap();
    if forward {
        p.plan_fft_forward(len)
    } else {
        p.plan_fft_inverse(len)
    }
}

/// What a single-axis pass does to each line after the forward transform.
enum AxisOp<'a> {
    /// Leave the spectrum (forward only).
    Forward,
    /// Inverse transform with 1/n scaling (input is a spectrum).
    Inverse,
    /// Forward, multiply per bin, inverse, 1/n scaling.
    Multiply(&'a [Complex64]),
}

/// Applies `op` along `axis` of `data` (row-major over `grid`).
fn axis_pass(grid: &Grid, data: &mut [Complex64], axis: usize, op: AxisOp) {
    let n = grid.dims()[axis];
    let inner = grid.strides()[axis];
    let total = grid.len();
    debug_assert_eq!(data.len(), total);
    let block = n * inner;

    // Stage 1: gather lines contiguously, line-major within each outer block.
    let mut lines = vec![Complex64::ZERO; total];
    lines
        .par_chunks_mut(block)
        .enumerate()
        .for_each(|(o, chunk)| {
            let base = o * block;
            for i in 0..inner {
                for j in 0..n {
                    chunk[i * n + j] = data[base + j * inner + i];
                }
            }
        });

    // Stage 2: transform each line in place.
    let fwd = plan(n, true);
    let inv = plan(n, false);
    let scale = 1.0 / n as f64;
    let scratch_len = fwd
        .get_inplace_scratch_len()
        .max(inv.get_inplace_scratch_len());
    lines.par_chunks_mut(n).for_each_init(
        || vec![Complex64::ZERO; scratch_len],
        |scratch, line| match &op {
            AxisOp::Forward => fwd.process_with_scratch(line, scratch),
            AxisOp::Inverse => {
                inv.process_with_scratch(line, scratch);
                for v in line.iter_mut() {
                    *v *= scale;
                }
            }
            AxisOp::Multiply(mult) => {
                fwd.process_with_scratch(line, scratch);
                for (v, m) in line.iter_mut().zip(mult.iter()) {
                    *v *= m;
                }
                inv.process_with_scratch(line, scratch);
                for v in line.iter_mut() {
                    *v *= scale;
                }
            }
        },
    );

    // Stage 3: scatter lines back into row-major order.
    data.par_chunks_mut(block)
        .enumerate()
        .for_each(|(o, chunk)| {
            let base = o * block;
            for i in 0..inner {
                for j in 0..n {
                    chunk[j * inner + i] = lines[base + i * n + j];
                }
            }
        });
}

/// Forward DFT along every axis (unnormalized).
pub(crate) fn forward_all(grid: &Grid, data: &mut [Complex64]) {
    for a in 0..grid.axes() {
        axis_pass(grid, data, a, AxisOp::Forward);
    }
}

/// Inverse DFT along every axis, including 1/N normalization.
pub(crate) fn inverse_all(grid: &Grid, data: &mut [Complex64]) {
    for a in 0..grid.axes() {
        axis_pass(grid, data, a, AxisOp::Inverse);
    }
}

/// Applies a pointwise multiplier in the full spectral domain; the closure
/// receives the DFT bin multi-index (unused trailing entries zero).
fn apply_mode_multiplier(
    grid: &Grid,
    data: &mut [Complex64],
    f: impl Fn(&[usize; 3]) -> Complex64 + Sync,
) {
    forward_all(grid, data);
    let last = grid.axes() - 1;
    let row = grid.dims()[last];
    data.par_chunks_mut(row).enumerate().for_each(|(r, chunk)| {
        let mut idx = grid.unravel(r * row);
        for (j, v) in chunk.iter_mut().enumerate() {
            idx[last] = j;
            *v *= f(&idx);
        }
    });
    inverse_all(grid, data);
}

fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

fn to_real(grid: &Grid, data: Vec<Complex64>) -> ScalarField {
    ScalarField::from_values(grid, data.into_iter().map(|v| v.re).collect())
}

fn derivative_multiplier(grid: &Grid, axis: usize) -> Vec<Complex64> {
    (0..grid.dims()[axis])
        .map(|j| Complex64::new(0.0, grid.wavenumber_deriv(axis, j)))
        .collect()
}

/// Spectral partial derivative of a real field along one axis.
pub fn derivative(f: &ScalarField, axis: usize) -> ScalarField {
    let grid = f.grid();
    let mut buf = to_complex(f.values());
    let mult = derivative_multiplier(grid, axis);
    axis_pass(grid, &mut buf, axis, AxisOp::Multiply(&mult));
    to_real(grid, buf)
}

/// Spectral partial derivative of each component of a complex field.
pub fn derivative_complex(f: &ComplexField, axis: usize) -> ComplexField {
    let grid = f.grid();
    let mult = derivative_multiplier(grid, axis);
    let mut out = f.clone();
    for c in 0..f.ncomp() {
        axis_pass(grid, out.comp_mut(c), axis, AxisOp::Multiply(&mult));
    }
    out
}

/// Spectral gradient; one component per axis.
pub fn gradient(f: &ScalarField) -> VectorField {
    let comps: Vec<ScalarField> = (0..f.grid().axes()).map(|a| derivative(f, a)).collect();
    VectorField::from_components(comps)
}

/// Spectral gradient of a complex field, one [`ComplexField`] per axis.
pub fn gradient_complex(f: &ComplexField) -> Vec<ComplexField> {
    (0..f.grid().axes())
        .map(|a| derivative_complex(f, a))
        .collect()
}

/// Spectral divergence of a spatial vector field (one component per axis).
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    assert_eq!(
        v.ncomp(),
        grid.axes(),
        "divergence needs one component per axis"
    );
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.axes() {
        let comp = ScalarField::from_values(grid, v.comp(a).to_vec());
        out.scaled_add(1.0, &derivative(&comp, a));
    }
    out
}

/// Spectral curl on a three-axis grid.
pub fn curl(v: &VectorField) -> Result<VectorField> {
    let grid = v.grid();
    if grid.axes() != 3 || v.ncomp() != 3 {
        return Err(Error::Dimensionality(
            "curl requires a three-axis grid with three components".into(),
        ));
    }
    let comp_field =
        |c: usize| -> ScalarField { ScalarField::from_values(grid, v.comp(c).to_vec()) };
    let d = |c: usize, a: usize| derivative(&comp_field(c), a);
    let mut cx = d(2, 1);
    cx.scaled_add(-1.0, &d(1, 2));
    let mut cy = d(0, 2);
    cy.scaled_add(-1.0, &d(2, 0));
    let mut cz = d(1, 0);
    cz.scaled_add(-1.0, &d(0, 1));
    Ok(VectorField::from_components(vec![cx, cy, cz]))
}

/// In-plane curl `d(v_y)/dx - d(v_x)/dy` on a grid with at least two axes.
pub fn planar_curl(v: &VectorField) -> Result<ScalarField> {
    let grid = v.grid();
    if grid.axes() < 2 || v.ncomp() < 2 {
        return Err(Error::Dimensionality(
            "planar curl requires at least two axes and two components".into(),
        ));
    }
    let vx = ScalarField::from_values(grid, v.comp(0).to_vec());
    let vy = ScalarField::from_values(grid, v.comp(1).to_vec());
    let mut out = derivative(&vy, 0);
    out.scaled_add(-1.0, &derivative(&vx, 1));
    Ok(out)
}

fn ksq_tables(grid: &Grid) -> Vec<Vec<f64>> {
    (0..grid.axes())
        .map(|a| {
            (0..grid.dims()[a])
                .map(|j| {
                    let k = grid.wavenumber(a, j);
                    k * k
                })
                .collect()
        })
        .collect()
}

/// Spectral Laplacian (Nyquist mode kept).
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let tables = ksq_tables(grid);
    let mut buf = to_complex(f.values());
    apply_mode_multiplier(grid, &mut buf, |idx| {
        let mut ksq = 0.0;
        for (a, t) in tables.iter().enumerate() {
            ksq += t[idx[a]];
        }
        Complex64::new(-ksq, 0.0)
    });
    to_real(grid, buf)
}

/// Spectral Laplacian of each component of a complex field.
pub fn laplacian_complex(f: &ComplexField) -> ComplexField {
    let grid = f.grid();
    let tables = ksq_tables(grid);
    let mut out = f.clone();
    for c in 0..f.ncomp() {
        apply_mode_multiplier(grid, out.comp_mut(c), |idx| {
            let mut ksq = 0.0;
            for (a, t) in tables.iter().enumerate() {
                ksq += t[idx[a]];
            }
            Complex64::new(-ksq, 0.0)
        });
    }
    out
}

/// Spectral inverse Laplacian with the zero mode projected out; the result has
/// zero mean and satisfies `laplacian(inverse_laplacian(f)) = f - mean(f)`.
pub fn inverse_laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let tables = ksq_tables(grid);
    let mut buf = to_complex(f.values());
    apply_mode_multiplier(grid, &mut buf, |idx| {
        let mut ksq = 0.0;
        for (a, t) in tables.iter().enumerate() {
            ksq += t[idx[a]];
        }
        if ksq == 0.0 {
            Complex64::ZERO
        } else {
            Complex64::new(-1.0 / ksq, 0.0)
        }
    });
    to_real(grid, buf)
}

/// Gaussian smoothing: convolution with an isotropic normalized Gaussian of
/// width `sigma0` (spectral multiplier `exp(-k^2 sigma0^2 / 2)`).
pub fn smooth_scalar(f: &ScalarField, sigma0: f64) -> ScalarField {
    let grid = f.grid();
    let tables = ksq_tables(grid);
    let half_s2 = 0.5 * sigma0 * sigma0;
    let mut buf = to_complex(f.values());
    apply_mode_multiplier(grid, &mut buf, |idx| {
        let mut ksq = 0.0;
        for (a, t) in tables.iter().enumerate() {
            ksq += t[idx[a]];
        }
        Complex64::new((-half_s2 * ksq).exp(), 0.0)
    });
    to_real(grid, buf)
}

/// Componentwise Gaussian smoothing of a vector field.
pub fn smooth_vector(v: &VectorField, sigma0: f64) -> VectorField {
    let comps: Vec<ScalarField> = (0..v.ncomp())
        .map(|c| {
            let f = ScalarField::from_values(v.grid(), v.comp(c).to_vec());
            smooth_scalar(&f, sigma0)
        })
        .collect();
    VectorField::from_components(comps)
}

/// Projects a spatial vector field onto its divergence-free part in place.
/// Bins containing a Nyquist mode are zeroed so the projected field is
/// divergence-free under every discrete convention used here.
pub(crate) fn coulomb_project(v: &mut VectorField) {
    let grid = v.grid().clone();
    let axes = grid.axes();
    assert_eq!(v.ncomp(), axes, "projection needs one component per axis");
    let n = grid.len();
    let mut spectra: Vec<Vec<Complex64>> = (0..axes).map(|c| to_complex(v.comp(c))).collect();
    for s in spectra.iter_mut() {
        forward_all(&grid, s);
    }
    let ktab: Vec<Vec<f64>> = (0..axes)
        .map(|a| (0..grid.dims()[a]).map(|j| grid.wavenumber(a, j)).collect())
        .collect();
    let nyq: Vec<usize> = (0..axes).map(|a| grid.dims()[a] / 2).collect();
    for flat in 0..n {
        let idx = grid.unravel(flat);
        let mut k = [0.0f64; 3];
        let mut ksq = 0.0;
        let mut has_nyquist = false;
        for a in 0..axes {
            if idx[a] == nyq[a] {
                has_nyquist = true;
            }
            k[a] = ktab[a][idx[a]];
            ksq += k[a] * k[a];
        }
        if has_nyquist {
            for s in spectra.iter_mut() {
                s[flat] = Complex64::ZERO;
            }
        } else if ksq > 0.0 {
            let mut kdotv = Complex64::ZERO;
            for (a, s) in spectra.iter().enumerate() {
                kdotv += k[a] * s[flat];
            }
            let factor = kdotv / ksq;
            for (a, s) in spectra.iter_mut().enumerate() {
                s[flat] -= k[a] * factor;
            }
        }
    }
    for (c, mut s) in spectra.into_iter().enumerate() {
        inverse_all(&grid, &mut s);
        for (o, z) in v.comp_mut(c).iter_mut().zip(&s) {
            *o = z.re;
        }
    }
}
