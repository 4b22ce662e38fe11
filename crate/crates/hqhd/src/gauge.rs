//! The internal gauge potential Lambda: Biot-Savart construction from vortex
//! filaments, Helmholtz decomposition, curvature, and Stokes-flux holonomy.
//!
//! Filaments source Lambda through a Gaussian-regularized Biot-Savart kernel:
//! the free-space Green function -1/(4*pi*r) is replaced by
//! `-erf(r/(sqrt(2)*reg))/(4*pi*r)`, which removes the curve self-singularity.
//! Grid fields are periodized by evaluating the kernel at minimum-image
//! displacements under a smooth radial taper that vanishes before the
//! minimum-image seam, then projected spectrally onto the Coulomb gauge.

use rayon::prelude::*;

use crate::fields::{
    curl, divergence, gradient, inverse_laplacian, Grid, Loop, ScalarField, VectorField,
};
use crate::filament::FilamentCurve;
use crate::{Error, Result};

/// The internal gauge potential and an optional external vector potential.
#[derive(Clone, Debug)]
pub struct GaugeField {
    /// Internal gauge potential Lambda (units 1/length), divergence-free.
    pub lambda: VectorField,
    /// Optional external magnetic vector potential A (momentum units).
    pub external_a: Option<VectorField>,
}

impl GaugeField {
    /// Gauge field with Lambda = 0 and no external potential.
    pub fn zero(grid: &Grid) -> GaugeField {
        GaugeField {
            lambda: VectorField::zeros(grid, grid.axes()),
            external_a: None,
        }
    }

    /// Wraps an existing Lambda.
    pub fn new(lambda: VectorField) -> GaugeField {
        GaugeField {
            lambda,
            external_a: None,
        }
    }

    /// Adds an external vector potential.
    pub fn with_external_a(mut self, a: VectorField) -> GaugeField {
        self.external_a = Some(a);
        self
    }
}

/// Helmholtz decomposition of a momentum field `nubar`:
/// `nubar = gradient(s_potential) + hbar * curl(beta) + uniform`.
///
/// The uniform component carries the spatial mean, which neither the gradient
/// nor the curl part can represent on a periodic box.
#[derive(Clone, Debug)]
pub struct HelmholtzParts {
    /// Single-valued phase potential s (units of action).
    pub s_potential: ScalarField,
    /// Solenoidal vector potential beta of the circulation-carrying part.
    pub beta: VectorField,
    /// Spatial mean of the input field.
    pub uniform: [f64; 3],
}

impl HelmholtzParts {
    /// Reassembles `gradient(s) + hbar * curl(beta) + uniform`.
    pub fn reconstruct(&self, hbar: f64) -> Result<VectorField> {
        let mut out = gradient(&self.s_potential);
        let mut cb = curl(&self.beta)?;
        cb.scale(hbar);
        out.scaled_add(1.0, &cb);
        for c in 0..out.ncomp() {
            let u = self.uniform[c];
            for v in out.comp_mut(c) {
                *v += u;
            }
        }
        Ok(out)
    }
}

/// Radial taper: identically 1 inside 0.8*r1 and identically 0 beyond
/// r1 = 0.499 * min extent, with a smooth bridge between. The kernel therefore
/// vanishes before any minimum-image seam, keeping the periodized sum smooth.
fn taper(r: f64, r1: f64) -> f64 {
    let r0 = 0.8 * r1;
    if r <= r0 {
        return 1.0;
    }
    if r >= r1 {
        return 0.0;
    }
    let rho = (r - r0) / (r1 - r0);
    let f = |x: f64| (-1.0 / x).exp();
    let a = f(1.0 - rho);
    let b = f(rho);
    a / (a + b)
}

/// d/dr of the regularized Green function divided by r:
/// `G_reg(r) = -erf(r / (sqrt(2) reg)) / (4 pi r)`, so
/// `G'(r)/r = [erf(u) - sqrt(2/pi) (r/reg) exp(-r^2/(2 reg^2))] / (4 pi r^3)`
/// with `u = r/(sqrt(2) reg)`; a series expansion handles small `u` where the
/// direct form cancels catastrophically. Finite (and nonzero) at r = 0.
fn g_prime_over_r(r: f64, reg: f64) -> f64 {
    let u = r / (std::f64::consts::SQRT_2 * reg);
    if u < 0.01 {
        let c0 = 3.0 * (2.0 * std::f64::consts::PI).powf(1.5) * reg * reg * reg;
        (1.0 - 0.6 * u * u) / c0
    } else {
        let erf_u = libm::erf(u);
        let gauss = (2.0 / std::f64::consts::PI).sqrt() * (r / reg) * (-0.5 * (r / reg).powi(2)).exp();
        (erf_u - gauss) / (4.0 * std::f64::consts::PI * r * r * r)
    }
}

/// Unregularized `G'(r)/r = 1/(4 pi r^3)` for grid-free holonomy quadrature.
fn g_prime_over_r_free(r: f64) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * r * r * r)
}

fn check_three_axes(grid: &Grid, what: &str) -> Result<()> {
    if grid.axes() != 3 {
        return Err(Error::Dimensionality(format!(
            "{what} requires a three-axis grid"
        )));
    }
    Ok(())
}

fn check_filament_in_box(fil: &FilamentCurve, grid: &Grid) -> Result<()> {
    for (i, p) in fil.nodes().iter().enumerate() {
        for a in 0..3 {
            let half = 0.5 * grid.extents()[a];
            if p[a].abs() > 0.8 * half {
                return Err(Error::Geometry(format!(
                    "filament node {i} at {:.3} exceeds the 10% box margin on axis {a}",
                    p[a]
                )));
            }
        }
    }
    Ok(())
}

/// Builds the internal gauge potential sourced by a closed filament:
/// `Lambda(x) = (m/hbar) * Gamma * sum_j G'(|r_j|) (r_j_hat x dR_j)` with
/// `r_j` the minimum-image displacement from segment midpoints, followed by a
/// spectral projection onto the Coulomb gauge.
pub fn biot_savart_lambda(
    fil: &FilamentCurve,
    grid: &Grid,
    m: f64,
    hbar: f64,
    reg: f64,
) -> Result<GaugeField> {
    check_three_axes(grid, "biot_savart_lambda")?;
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::parameter("reg", "must be finite and positive"));
    }
    if !(m > 0.0) || !(hbar > 0.0) {
        return Err(Error::parameter("m/hbar", "must be positive"));
    }
    check_filament_in_box(fil, grid)?;
    let segs = fil.segments();
    let r1 = 0.499 * grid.min_extent();
    let scale = m / hbar * fil.strength();
    let n = grid.len();
    let mut comps = vec![vec![0.0f64; n]; 3];
    {
        let (cx, rest) = comps.split_at_mut(1);
        let (cy, cz) = rest.split_at_mut(1);
        cx[0]
            .par_iter_mut()
            .zip(cy[0].par_iter_mut())
            .zip(cz[0].par_iter_mut())
            .enumerate()
            .for_each(|(flat, ((ox, oy), oz))| {
                let x = grid.position(flat);
                let mut acc = [0.0f64; 3];
                for (mid, dr) in &segs {
                    let rv = [
                        grid.min_image(x[0] - mid[0], 0),
                        grid.min_image(x[1] - mid[1], 1),
                        grid.min_image(x[2] - mid[2], 2),
                    ];
                    let r = (rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2]).sqrt();
                    let w = taper(r, r1);
                    if w == 0.0 {
                        continue;
                    }
                    let g = g_prime_over_r(r, reg) * w;
                    acc[0] += g * (rv[1] * dr[2] - rv[2] * dr[1]);
                    acc[1] += g * (rv[2] * dr[0] - rv[0] * dr[2]);
                    acc[2] += g * (rv[0] * dr[1] - rv[1] * dr[0]);
                }
                *ox = scale * acc[0];
                *oy = scale * acc[1];
                *oz = scale * acc[2];
            });
    }
    let mut lambda = VectorField::from_components(
        comps
            .into_iter()
            .map(|c| ScalarField::from_values(grid, c))
            .collect(),
    );
    crate::fields::coulomb_project(&mut lambda);
    Ok(GaugeField::new(lambda))
}

/// Mollified filament vorticity
/// `omega(x) = Gamma * sum_i (dR/dsigma)(sigma_i) * N(x - R_i; moll^2) * dsigma`
/// with an isotropic Gaussian mollifier of width `moll`.
pub fn filament_vorticity(fil: &FilamentCurve, grid: &Grid, moll: f64) -> Result<VectorField> {
    check_three_axes(grid, "filament_vorticity")?;
    let min_h = grid.min_spacing();
    if !(moll >= 2.0 * min_h) {
        return Err(Error::parameter(
            "moll",
            format!("must be at least twice the grid spacing ({:.3e})", 2.0 * min_h),
        ));
    }
    check_filament_in_box(fil, grid)?;
    let tangents = fil.tangents();
    let nodes = fil.nodes();
    let dsigma = 2.0 * std::f64::consts::PI / fil.len() as f64;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * moll * moll * moll);
    let scale = fil.strength() * dsigma * norm;
    let inv2m2 = 1.0 / (2.0 * moll * moll);
    let n = grid.len();
    let mut comps = vec![vec![0.0f64; n]; 3];
    {
        let (cx, rest) = comps.split_at_mut(1);
        let (cy, cz) = rest.split_at_mut(1);
        cx[0]
            .par_iter_mut()
            .zip(cy[0].par_iter_mut())
            .zip(cz[0].par_iter_mut())
            .enumerate()
            .for_each(|(flat, ((ox, oy), oz))| {
                let x = grid.position(flat);
                let mut acc = [0.0f64; 3];
                for (p, t) in nodes.iter().zip(&tangents) {
                    let rv = [
                        grid.min_image(x[0] - p[0], 0),
                        grid.min_image(x[1] - p[1], 1),
                        grid.min_image(x[2] - p[2], 2),
                    ];
                    let r2 = rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2];
                    let g = (-r2 * inv2m2).exp();
                    acc[0] += g * t[0];
                    acc[1] += g * t[1];
                    acc[2] += g * t[2];
                }
                *ox = scale * acc[0];
                *oy = scale * acc[1];
                *oz = scale * acc[2];
            });
    }
    Ok(VectorField::from_components(
        comps
            .into_iter()
            .map(|c| ScalarField::from_values(grid, c))
            .collect(),
    ))
}

/// Helmholtz decomposition `nubar = grad(s) + hbar * curl(beta) + uniform`
/// via spectral inversion; `beta` is divergence-free by construction.
pub fn helmholtz_decompose(nubar: &VectorField, hbar: f64) -> Result<HelmholtzParts> {
    check_three_axes(nubar.grid(), "helmholtz_decompose")?;
    if !(hbar > 0.0) {
        return Err(Error::parameter("hbar", "must be positive"));
    }
    let s_potential = inverse_laplacian(&divergence(nubar));
    let c = curl(nubar)?;
    let beta_comps: Vec<ScalarField> = (0..3)
        .map(|i| {
            let comp = ScalarField::from_values(nubar.grid(), c.comp(i).to_vec());
            let mut b = inverse_laplacian(&comp);
            b.scale(-1.0 / hbar);
            b
        })
        .collect();
    let beta = VectorField::from_components(beta_comps);
    let mut uniform = [0.0f64; 3];
    for i in 0..3 {
        let comp = ScalarField::from_values(nubar.grid(), nubar.comp(i).to_vec());
        uniform[i] = comp.mean();
    }
    Ok(HelmholtzParts {
        s_potential,
        beta,
        uniform,
    })
}

/// Curvature of the gauge connection: `curl(Lambda)`.
pub fn curvature(gf: &GaugeField) -> Result<VectorField> {
    curl(&gf.lambda)
}

/// Stokes-flux holonomy `-hbar * loop integral of Lambda` for the
/// unregularized free-space kernel, evaluated by direct quadrature at the loop
/// points; equals `m * Gamma * (signed crossings through any spanning
/// surface)` up to quadrature error.
pub fn stokes_holonomy(fil: &FilamentCurve, c: &Loop, hbar: f64, m: f64) -> Result<f64> {
    if !(m > 0.0) || !(hbar > 0.0) {
        return Err(Error::parameter("m/hbar", "must be positive"));
    }
    // Quadrature breaks down when the loop approaches the filament closer
    // than the discretization scale of either curve.
    let mean_chord = fil.total_length() / fil.len() as f64;
    let mut min_dist = f64::INFINITY;
    for p in c.points() {
        for q in fil.nodes() {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if min_dist <= mean_chord {
        return Err(Error::Proximity(format!(
            "loop approaches the filament to {min_dist:.3e}, below the node spacing {mean_chord:.3e}"
        )));
    }
    let segs = fil.segments();
    let scale = m / hbar * fil.strength();
    let tangents = c.tangents();
    let terms: Vec<f64> = c
        .points()
        .iter()
        .zip(&tangents)
        .map(|(p, t)| {
            let mut lam = [0.0f64; 3];
            for (mid, dr) in &segs {
                let rv = [p[0] - mid[0], p[1] - mid[1], p[2] - mid[2]];
                let r = (rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2]).sqrt();
                let g = g_prime_over_r_free(r);
                lam[0] += g * (rv[1] * dr[2] - rv[2] * dr[1]);
                lam[1] += g * (rv[2] * dr[0] - rv[0] * dr[2]);
                lam[2] += g * (rv[0] * dr[1] - rv[1] * dr[0]);
            }
            scale * (lam[0] * t[0] + lam[1] * t[1] + lam[2] * t[2])
        })
        .collect();
    let integral = crate::fields::pairwise_sum(&terms) / c.len() as f64;
    Ok(-hbar * integral)
}

/// Direct (grid-free) evaluation of the regularized Biot-Savart Lambda at one
/// point, without periodization or projection; the quadrature oracle for the
/// gridded construction.
pub fn biot_savart_direct(
    fil: &FilamentCurve,
    point: &[f64; 3],
    m: f64,
    hbar: f64,
    reg: f64,
) -> [f64; 3] {
    let segs = fil.segments();
    let scale = m / hbar * fil.strength();
    let mut acc = [0.0f64; 3];
    for (mid, dr) in &segs {
        let rv = [point[0] - mid[0], point[1] - mid[1], point[2] - mid[2]];
        let r = (rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2]).sqrt();
        let g = g_prime_over_r(r, reg);
        acc[0] += g * (rv[1] * dr[2] - rv[2] * dr[1]);
        acc[1] += g * (rv[2] * dr[0] - rv[0] * dr[2]);
        acc[2] += g * (rv[0] * dr[1] - rv[1] * dr[0]);
    }
    [scale * acc[0], scale * acc[1], scale * acc[2]]
}
