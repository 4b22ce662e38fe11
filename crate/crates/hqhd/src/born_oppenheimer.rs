//! Two-level electronic structure, Gaussian-smoothed energy surfaces and
//! gauge potentials, and classical nuclear trajectories with magnetic-type
//! geometric forces.
//!
//! The electronic Hamiltonian is `H_e(r) = a(r) 1 + b(r) . sigma` with
//! surfaces `a(r) +- |b(r)|`; the nucleus is a point particle whose frozen
//! Gaussian density `D0` of width `sigma0` convolves every surface it moves
//! on, so eigenvalue degeneracies (`|b| = 0`) never produce singular forces.
//! The equation of motion is
//!
//! ```text
//! M qddot = hbar qdot x curl(Lambda_bar) - qdot x curl(A_bar) - grad(eps_bar)
//! ```
//!
//! where bars denote `D0` convolution, `A` is the Berry connection of the
//! lower eigenstate, `Lambda` is the internal gauge potential (typically the
//! Biot-Savart field of a vortex filament), and
//! `eps_bar = smooth(E + second-order coupling) - |A_bar|^2 / (2M)`.
//!
//! Eigenvector-derived fields (`A`, the second-order coupling) are sampled
//! from the model closures with short centered stencils rather than from
//! grid-wide spectral derivatives: the models need not be box-periodic, and
//! the gauge-fixed section is only piecewise smooth near degeneracies, so
//! local stencils keep those defects local.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::fields::{
    curl, derivative, gradient, line_integral, smooth_scalar, smooth_vector, FourierEvaluator,
    Grid, Interpolation, Loop, ScalarField, VectorField,
};
use crate::filament::{filament_velocity_bo, nodes_add_scaled, FilamentCurve};
use crate::gauge::biot_savart_lambda;
use crate::{Error, Result};

/// Relative `|b|` threshold below which a sampled point counts as a
/// degeneracy (conical intersection) for reporting.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Stencil step for eigenvector derivatives, as a fraction of grid spacing.
const EIGEN_FD_FRACTION: f64 = 1e-3;

/// Relative threshold at which the eigenvector gauge switches to the
/// second-component branch.
const GAUGE_POLE_TOL: f64 = 1e-12;

/// Margin, in units of `sigma0`, the nucleus must keep from the box edge.
const DOMAIN_MARGIN_SIGMAS: f64 = 4.0;

type ScalarMap = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
type VectorMap = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Approximation switches for the effective electronic potential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApproximationFlags {
    /// Drop the second-order coupling `(hbar^2 / 2M) ||grad phi||^2`.
    pub neglect_second_order_coupling: bool,
    /// Treat the eigenstate as real; the Berry-connection term vanishes.
    pub real_eigenstate: bool,
    /// Drop the nuclear quantum potential. The point-particle closure already
    /// eliminates it from the dynamics, so this flag is bookkeeping for
    /// scenario reports.
    pub neglect_quantum_potential: bool,
}

impl ApproximationFlags {
    /// All three approximations enabled: the nucleus sees the bare lower
    /// surface.
    pub fn classical() -> ApproximationFlags {
        ApproximationFlags {
            neglect_second_order_coupling: true,
            real_eigenstate: true,
            neglect_quantum_potential: true,
        }
    }
}

/// Two-level electronic Hamiltonian `H_e(r) = a(r) 1 + b(r) . sigma`.
#[derive(Clone)]
pub struct ElectronicModel {
    a: ScalarMap,
    b: VectorMap,
    /// Approximation level applied when assembling effective potentials.
    pub flags: ApproximationFlags,
}

impl fmt::Debug for ElectronicModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ElectronicModel")
            .field("flags", &self.flags)
            .finish_non_exhaustive()
    }
}

impl ElectronicModel {
    /// Model from closures for the scalar part `a` and the coupling vector
    /// `b`.
    pub fn new(
        a: impl Fn([f64; 3]) -> f64 + Send + Sync + 'static,
        b: impl Fn([f64; 3]) -> [f64; 3] + Send + Sync + 'static,
        flags: ApproximationFlags,
    ) -> ElectronicModel {
        ElectronicModel {
            a: Arc::new(a),
            b: Arc::new(b),
            flags,
        }
    }

    /// Spin-boson model: `a(r) = M omega^2 |r|^2 / 2` and
    /// `b(r) = (d, 0, c . r) / 2`. The gap `sqrt(d^2 + (c . r)^2)` closes on
    /// the plane `c . r = 0` when `d = 0`.
    pub fn spin_boson(
        mass: f64,
        omega: f64,
        d: f64,
        c: [f64; 3],
        flags: ApproximationFlags,
    ) -> Result<ElectronicModel> {
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::parameter("mass", "must be finite and positive"));
        }
        if !omega.is_finite() || omega < 0.0 {
            return Err(Error::parameter("omega", "must be finite and non-negative"));
        }
        if !d.is_finite() || !c.iter().all(|x| x.is_finite()) {
            return Err(Error::parameter("d/c", "must be finite"));
        }
        let half_k = 0.5 * mass * omega * omega;
        Ok(ElectronicModel::new(
            move |r| half_k * (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]),
            move |r| {
                [
                    0.5 * d,
                    0.0,
                    0.5 * (c[0] * r[0] + c[1] * r[1] + c[2] * r[2]),
                ]
            },
            flags,
        ))
    }

    /// Scalar part `a(r)`.
    pub fn a(&self, r: [f64; 3]) -> f64 {
        (self.a)(r)
    }

    /// Coupling vector `b(r)`.
    pub fn b(&self, r: [f64; 3]) -> [f64; 3] {
        (self.b)(r)
    }

    /// Eigenvalue gap `2 |b(r)|`.
    pub fn gap(&self, r: [f64; 3]) -> f64 {
        let b = self.b(r);
        2.0 * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
    }
}

/// Pointwise eigen decomposition of the two-level Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct EigenPair {
    /// Lower eigenvalue `a - |b|`.
    pub e_minus: f64,
    /// Upper eigenvalue `a + |b|`.
    pub e_plus: f64,
    /// Gauge-fixed lower eigenvector.
    pub phi_minus: [Complex64; 2],
    /// Gauge-fixed upper eigenvector.
    pub phi_plus: [Complex64; 2],
    /// Set when `|b| = 0` and the returned pair is an arbitrary basis.
    pub degenerate: bool,
}

/// Eigenvalues and gauge-fixed eigenvectors of `H_e` at `r`.
///
/// The gauge makes the first component real and non-negative, switching to a
/// real non-negative second component where the first one vanishes (`b`
/// aligned with `+z` for the lower state, `-z` for the upper one).
pub fn electronic_eigen(model: &ElectronicModel, r: [f64; 3]) -> EigenPair {
    eigen_at(model.a(r), model.b(r))
}

fn eigen_at(a: f64, b: [f64; 3]) -> EigenPair {
    let beta = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if beta == 0.0 {
        return EigenPair {
            e_minus: a,
            e_plus: a,
            phi_minus: [zero, one],
            phi_plus: [one, zero],
            degenerate: true,
        };
    }
    let bperp = Complex64::new(b[0], b[1]);
    let phi_minus = if beta - b[2] > GAUGE_POLE_TOL * beta {
        let n = (2.0 * beta * (beta - b[2])).sqrt();
        [Complex64::new((beta - b[2]) / n, 0.0), -bperp / n]
    } else {
        let n = (2.0 * beta * (beta + b[2])).sqrt();
        [-bperp.conj() / n, Complex64::new((beta + b[2]) / n, 0.0)]
    };
    let phi_plus = if beta + b[2] > GAUGE_POLE_TOL * beta {
        let n = (2.0 * beta * (beta + b[2])).sqrt();
        [Complex64::new((beta + b[2]) / n, 0.0), bperp / n]
    } else {
        let n = (2.0 * beta * (beta - b[2])).sqrt();
        [bperp.conj() / n, Complex64::new((beta - b[2]) / n, 0.0)]
    };
    EigenPair {
        e_minus: a - beta,
        e_plus: a + beta,
        phi_minus,
        phi_plus,
        degenerate: false,
    }
}

/// Grid scan of the lower surface.
#[derive(Clone, Debug)]
pub struct SurfaceScan {
    /// Lower eigenvalue `E(r) = a(r) - |b(r)|` at every node.
    pub energy: ScalarField,
    /// Eigenvalue gap `2 |b(r)|` at every node.
    pub gap: ScalarField,
    /// Nodes where `|b| < DEGENERACY_THRESHOLD * max |b|`.
    pub degenerate: Vec<bool>,
}

/// Samples the lower surface, the gap, and the degeneracy mask on `grid`.
pub fn surface_scan(model: &ElectronicModel, grid: &Grid) -> Result<SurfaceScan> {
    let n = grid.len();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = electronic_eigen(model, grid.position(i));
            (p.e_minus, p.e_plus - p.e_minus)
        })
        .collect();
    if rows.iter().any(|(e, g)| !e.is_finite() || !g.is_finite()) {
        return Err(Error::Numerical(
            "electronic model produced a non-finite value on the grid".into(),
        ));
    }
    let energy = ScalarField::from_values(grid, rows.iter().map(|r| r.0).collect());
    let gap = ScalarField::from_values(grid, rows.iter().map(|r| r.1).collect());
    let max_gap = gap.values().iter().fold(0.0f64, |m, &g| m.max(g));
    let degenerate = gap
        .values()
        .iter()
        .map(|&g| g < DEGENERACY_THRESHOLD * max_gap)
        .collect();
    Ok(SurfaceScan {
        energy,
        gap,
        degenerate,
    })
}

/// Lower-eigenvector derivatives along the grid axes at `r`, by a fourth-order
/// centered stencil of width `EIGEN_FD_FRACTION * spacing` on the model
/// closures.
fn eigvec_derivatives(
    model: &ElectronicModel,
    grid: &Grid,
    r: [f64; 3],
) -> ([Complex64; 2], Vec<[Complex64; 2]>) {
    let center = electronic_eigen(model, r);
    let mut grads = Vec::with_capacity(grid.axes());
    for a in 0..grid.axes() {
        let d = EIGEN_FD_FRACTION * grid.spacing(a);
        let phi = |offset: f64| -> [Complex64; 2] {
            let mut p = r;
            p[a] += offset;
            electronic_eigen(model, p).phi_minus
        };
        let (m2, m1, p1, p2) = (phi(-2.0 * d), phi(-d), phi(d), phi(2.0 * d));
        let mut g = [Complex64::new(0.0, 0.0); 2];
        for c in 0..2 {
            g[c] = (m2[c] - 8.0 * m1[c] + 8.0 * p1[c] - p2[c]) / (12.0 * d);
        }
        grads.push(g);
    }
    (center.phi_minus, grads)
}

/// Berry connection `A(r) = hbar Im <phi | grad phi>` of the gauge-fixed
/// lower eigenstate, sampled on `grid`. Always three components, vanishing
/// ones included. Nodes where the model is exactly degenerate report zero.
pub fn berry_connection_surface(
    model: &ElectronicModel,
    grid: &Grid,
    hbar: f64,
) -> Result<VectorField> {
    if !hbar.is_finite() || hbar <= 0.0 {
        return Err(Error::parameter("hbar", "must be finite and positive"));
    }
    let n = grid.len();
    let rows: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = grid.position(i);
            if electronic_eigen(model, r).degenerate {
                return [0.0; 3];
            }
            let (phi, grads) = eigvec_derivatives(model, grid, r);
            let mut a = [0.0; 3];
            for (axis, g) in grads.iter().enumerate() {
                a[axis] = hbar * (phi[0].conj() * g[0] + phi[1].conj() * g[1]).im;
            }
            a
        })
        .collect();
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "Berry connection is non-finite on the grid".into(),
        ));
    }
    let mut out = VectorField::zeros(grid, 3);
    for c in 0..3 {
        let dst = out.comp_mut(c);
        for (i, row) in rows.iter().enumerate() {
            dst[i] = row[c];
        }
    }
    Ok(out)
}

/// Second-order coupling density `||grad phi||^2` of the gauge-fixed lower
/// eigenstate.
fn grad_eigvec_norm2(model: &ElectronicModel, grid: &Grid) -> Result<ScalarField> {
    let n = grid.len();
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = grid.position(i);
            if electronic_eigen(model, r).degenerate {
                return 0.0;
            }
            let (_, grads) = eigvec_derivatives(model, grid, r);
            grads
                .iter()
                .map(|g| g[0].norm_sqr() + g[1].norm_sqr())
                .sum()
        })
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "second-order coupling is non-finite on the grid".into(),
        ));
    }
    Ok(ScalarField::from_values(grid, vals))
}

/// Effective electronic potential on `grid` per the model's approximation
/// flags:
///
/// ```text
/// eps = E  [+ (hbar^2 / 2M) ||grad phi||^2]  [- |A|^2 / 2M]
/// ```
///
/// The second-order term is dropped under `neglect_second_order_coupling`,
/// the connection term under `real_eigenstate`. The quantum-potential flag
/// concerns the nuclear density and does not enter the electronic potential.
pub fn effective_potential(
    model: &ElectronicModel,
    grid: &Grid,
    mass: f64,
    hbar: f64,
) -> Result<ScalarField> {
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::parameter("mass", "must be finite and positive"));
    }
    if !hbar.is_finite() || hbar <= 0.0 {
        return Err(Error::parameter("hbar", "must be finite and positive"));
    }
    let mut eps = surface_scan(model, grid)?.energy;
    if !model.flags.neglect_second_order_coupling {
        let g2 = grad_eigvec_norm2(model, grid)?;
        let w = 0.5 * hbar * hbar / mass;
        for (e, g) in eps.values_mut().iter_mut().zip(g2.values()) {
            *e += w * g;
        }
    }
    if !model.flags.real_eigenstate {
        let conn = berry_connection_surface(model, grid, hbar)?;
        let n = grid.len();
        for i in 0..n {
            let a2 = conn.comp(0)[i] * conn.comp(0)[i]
                + conn.comp(1)[i] * conn.comp(1)[i]
                + conn.comp(2)[i] * conn.comp(2)[i];
            eps.values_mut()[i] -= 0.5 * a2 / mass;
        }
    }
    Ok(eps)
}

fn validate_sigma0(grid: &Grid, sigma0: f64) -> Result<()> {
    if !sigma0.is_finite() || sigma0 <= 0.0 {
        return Err(Error::parameter("sigma0", "must be finite and positive"));
    }
    let hmax = (0..grid.axes()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    if sigma0 < 2.0 * hmax {
        return Err(Error::parameter(
            "sigma0",
            format!("must be at least twice the grid spacing ({:.6e})", 2.0 * hmax),
        ));
    }
    Ok(())
}

/// Periodic Gaussian convolution `D0 * f` with `D0` of width `sigma0`, by
/// spectral multiplication with `exp(-k^2 sigma0^2 / 2)`.
pub fn smooth(f: &ScalarField, sigma0: f64) -> Result<ScalarField> {
    validate_sigma0(f.grid(), sigma0)?;
    Ok(smooth_scalar(f, sigma0))
}

/// Curl of a three-component field on a grid of any dimensionality;
/// derivatives along absent axes vanish.
fn curl3(v: &VectorField) -> Result<VectorField> {
    let grid = v.grid();
    if v.ncomp() != 3 {
        return Err(Error::Dimensionality(
            "curl needs a three-component field".into(),
        ));
    }
    if grid.axes() == 3 {
        return curl(v);
    }
    let comp = |c: usize| ScalarField::from_values(grid, v.comp(c).to_vec());
    let d = |c: usize, a: usize| -> Vec<f64> {
        if a < grid.axes() {
            derivative(&comp(c), a).values().to_vec()
        } else {
            vec![0.0; grid.len()]
        }
    };
    let mut out = VectorField::zeros(grid, 3);
    let pairs = [(1usize, 2usize), (2, 0), (0, 1)];
    for (c, (j, k)) in pairs.iter().enumerate() {
        let left = d(*k, *j);
        let right = d(*j, *k);
        let dst = out.comp_mut(c);
        for i in 0..left.len() {
            dst[i] = left[i] - right[i];
        }
    }
    Ok(out)
}

fn check_layout(grid: &Grid, v: &VectorField, what: &str) -> Result<()> {
    if v.grid() != grid {
        return Err(Error::Grid(format!("{what} grid differs from surface grid")));
    }
    if v.ncomp() != 3 {
        return Err(Error::Dimensionality(format!(
            "{what} needs three components"
        )));
    }
    Ok(())
}

/// Gaussian-smoothed surfaces driving a nuclear trajectory.
///
/// Every stored field is finite and smooth even when the unsmoothed model has
/// conical intersections. Spectral caches of the force fields make off-grid
/// evaluation exactly consistent with the stored potentials, so the
/// magnetic-type terms do no work and `M |qdot|^2 / 2 + eps_bar(q)` is a
/// conserved energy of the continuous dynamics.
#[derive(Clone, Debug)]
pub struct SmoothedSurfaces {
    grid: Grid,
    /// Width of the frozen Gaussian `D0`.
    pub sigma0: f64,
    /// Nuclear mass.
    pub mass: f64,
    /// Planck constant.
    pub hbar: f64,
    /// Smoothed lower surface.
    pub e_bar: ScalarField,
    /// Smoothed Berry connection (zero under the real-eigenstate flag).
    pub a_bar: VectorField,
    /// Smoothed internal gauge potential.
    pub lambda_bar: VectorField,
    /// Effective potential `smooth(E [+ so]) - |A_bar|^2 / 2M`.
    pub eps_bar: ScalarField,
    /// Curl of the smoothed gauge potential.
    pub curl_lambda_bar: VectorField,
    /// Curl of the smoothed Berry connection.
    pub curl_a_bar: VectorField,
    eval_eps: FourierEvaluator,
    eval_grad_eps: FourierEvaluator,
    eval_curl_lambda: FourierEvaluator,
    eval_curl_a: FourierEvaluator,
}

impl SmoothedSurfaces {
    /// Builds every smoothed field for `model`, with an optional internal
    /// gauge potential `lambda`, on `grid`.
    pub fn build(
        model: &ElectronicModel,
        grid: &Grid,
        lambda: Option<&VectorField>,
        mass: f64,
        hbar: f64,
        sigma0: f64,
    ) -> Result<SmoothedSurfaces> {
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::parameter("mass", "must be finite and positive"));
        }
        if !hbar.is_finite() || hbar <= 0.0 {
            return Err(Error::parameter("hbar", "must be finite and positive"));
        }
        validate_sigma0(grid, sigma0)?;
        if let Some(l) = lambda {
            check_layout(grid, l, "gauge potential")?;
        }
        let scan = surface_scan(model, grid)?;
        let e_bar = smooth_scalar(&scan.energy, sigma0);
        let mut inner = scan.energy;
        if !model.flags.neglect_second_order_coupling {
            let g2 = grad_eigvec_norm2(model, grid)?;
            let w = 0.5 * hbar * hbar / mass;
            for (e, g) in inner.values_mut().iter_mut().zip(g2.values()) {
                *e += w * g;
            }
        }
        let a_bar = if model.flags.real_eigenstate {
            VectorField::zeros(grid, 3)
        } else {
            smooth_vector(&berry_connection_surface(model, grid, hbar)?, sigma0)
        };
        let lambda_bar = match lambda {
            Some(l) => smooth_vector(l, sigma0),
            None => VectorField::zeros(grid, 3),
        };
        let mut eps_bar = smooth_scalar(&inner, sigma0);
        for i in 0..grid.len() {
            let a2 = a_bar.comp(0)[i] * a_bar.comp(0)[i]
                + a_bar.comp(1)[i] * a_bar.comp(1)[i]
                + a_bar.comp(2)[i] * a_bar.comp(2)[i];
            eps_bar.values_mut()[i] -= 0.5 * a2 / mass;
        }
        let curl_lambda_bar = curl3(&lambda_bar)?;
        let curl_a_bar = curl3(&a_bar)?;
        let grad_eps = gradient(&eps_bar);
        Ok(SmoothedSurfaces {
            grid: grid.clone(),
            sigma0,
            mass,
            hbar,
            eval_eps: FourierEvaluator::scalar(&eps_bar),
            eval_grad_eps: FourierEvaluator::vector(&grad_eps),
            eval_curl_lambda: FourierEvaluator::vector(&curl_lambda_bar),
            eval_curl_a: FourierEvaluator::vector(&curl_a_bar),
            e_bar,
            a_bar,
            lambda_bar,
            eps_bar,
            curl_lambda_bar,
            curl_a_bar,
        })
    }

    /// Same surfaces with the internal gauge potential replaced by `lambda`.
    pub fn with_lambda(&self, lambda: &VectorField) -> Result<SmoothedSurfaces> {
        check_layout(&self.grid, lambda, "gauge potential")?;
        let lambda_bar = smooth_vector(lambda, self.sigma0);
        let curl_lambda_bar = curl3(&lambda_bar)?;
        let eval_curl_lambda = FourierEvaluator::vector(&curl_lambda_bar);
        Ok(SmoothedSurfaces {
            lambda_bar,
            curl_lambda_bar,
            eval_curl_lambda,
            ..self.clone()
        })
    }

    /// Grid the surfaces live on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Effective potential at an off-grid point.
    pub fn eps_at(&self, q: [f64; 3]) -> f64 {
        self.eval_eps.eval_scalar(&q)
    }

    /// Force `hbar qdot x curl(Lambda_bar) - qdot x curl(A_bar) -
    /// grad(eps_bar)` at `q`.
    pub fn force(&self, q: [f64; 3], qdot: [f64; 3]) -> [f64; 3] {
        let ge = self.eval_grad_eps.eval(&q);
        let cl = self.eval_curl_lambda.eval(&q);
        let ca = self.eval_curl_a.eval(&q);
        let w = [
            self.hbar * cl[0] - ca[0],
            self.hbar * cl[1] - ca[1],
            self.hbar * cl[2] - ca[2],
        ];
        let f = cross(qdot, w);
        [f[0] - ge[0], f[1] - ge[1], f[2] - ge[2]]
    }

    /// Verifies `q` keeps a `4 sigma0` margin from the box edge on every
    /// sampled axis and sits exactly on the grid plane for absent axes.
    pub fn check_domain(&self, q: [f64; 3]) -> Result<()> {
        let margin = DOMAIN_MARGIN_SIGMAS * self.sigma0;
        for a in 0..3 {
            if a < self.grid.axes() {
                let limit = 0.5 * self.grid.extents()[a] - margin;
                if !(q[a].abs() <= limit) {
                    return Err(Error::Geometry(format!(
                        "nuclear position component {a} = {:.6e} leaves the \
                         sampled domain (limit {limit:.6e} after the 4 sigma0 \
                         margin)",
                        q[a]
                    )));
                }
            } else if q[a] != 0.0 {
                return Err(Error::Dimensionality(format!(
                    "nuclear position has a component on unsampled axis {a}"
                )));
            }
        }
        Ok(())
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add_scaled(a: [f64; 3], s: f64, b: [f64; 3]) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// One recorded trajectory row.
#[derive(Clone, Copy, Debug)]
pub struct TrajectorySample {
    /// Sample time.
    pub time: f64,
    /// Position.
    pub q: [f64; 3],
    /// Velocity.
    pub qdot: [f64; 3],
    /// Kinetic energy `M |qdot|^2 / 2`.
    pub kinetic: f64,
    /// Effective potential `eps_bar(q)`.
    pub potential: f64,
    /// Local eigenvalue gap `2 |b(q)|`.
    pub gap: f64,
}

/// Classical nuclear state with sampled history.
#[derive(Clone, Debug)]
pub struct NuclearTrajectory {
    /// Position.
    pub q: [f64; 3],
    /// Velocity.
    pub qdot: [f64; 3],
    /// Nuclear mass.
    pub mass: f64,
    /// Elapsed time.
    pub time: f64,
    /// Recorded samples.
    pub history: Vec<TrajectorySample>,
}

impl NuclearTrajectory {
    /// Trajectory at `q` with velocity `qdot` and mass `mass`, at time zero
    /// with empty history.
    pub fn new(q: [f64; 3], qdot: [f64; 3], mass: f64) -> Result<NuclearTrajectory> {
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::parameter("mass", "must be finite and positive"));
        }
        if !q.iter().chain(qdot.iter()).all(|x| x.is_finite()) {
            return Err(Error::parameter("q/qdot", "must be finite"));
        }
        Ok(NuclearTrajectory {
            q,
            qdot,
            mass,
            time: 0.0,
            history: Vec::new(),
        })
    }

    /// Kinetic energy `M |qdot|^2 / 2`.
    pub fn kinetic(&self) -> f64 {
        0.5 * self.mass
            * (self.qdot[0] * self.qdot[0]
                + self.qdot[1] * self.qdot[1]
                + self.qdot[2] * self.qdot[2])
    }

    /// Appends a history row sampling the surfaces and the local gap.
    pub fn record(&mut self, surf: &SmoothedSurfaces, model: &ElectronicModel) {
        self.history.push(TrajectorySample {
            time: self.time,
            q: self.q,
            qdot: self.qdot,
            kinetic: self.kinetic(),
            potential: surf.eps_at(self.q),
            gap: model.gap(self.q),
        });
    }

    /// History as CSV rows
    /// `time,qx,qy,qz,vx,vy,vz,kinetic,potential,total,gap`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("time,qx,qy,qz,vx,vy,vz,kinetic,potential,total,gap\n");
        for s in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                s.time,
                s.q[0],
                s.q[1],
                s.q[2],
                s.qdot[0],
                s.qdot[1],
                s.qdot[2],
                s.kinetic,
                s.potential,
                s.kinetic + s.potential,
                s.gap
            ));
        }
        out
    }
}

fn check_trajectory(traj: &NuclearTrajectory, surf: &SmoothedSurfaces) -> Result<()> {
    if (traj.mass - surf.mass).abs() > 1e-12 * surf.mass {
        return Err(Error::parameter(
            "mass",
            "trajectory and surfaces disagree on the nuclear mass",
        ));
    }
    for a in surf.grid.axes()..3 {
        if traj.qdot[a] != 0.0 {
            return Err(Error::Dimensionality(format!(
                "nuclear velocity has a component on unsampled axis {a}"
            )));
        }
    }
    surf.check_domain(traj.q)
}

/// Advances the trajectory by one RK4 step of size `dt` under the smoothed
/// force law. Every stage position must respect the domain margin.
pub fn nuclear_step(
    traj: &NuclearTrajectory,
    surf: &SmoothedSurfaces,
    dt: f64,
) -> Result<NuclearTrajectory> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::parameter("dt", "must be finite and positive"));
    }
    check_trajectory(traj, surf)?;
    let inv_m = 1.0 / traj.mass;
    let rate = |q: [f64; 3], v: [f64; 3]| -> Result<([f64; 3], [f64; 3])> {
        surf.check_domain(q)?;
        let f = surf.force(q, v);
        Ok((v, [f[0] * inv_m, f[1] * inv_m, f[2] * inv_m]))
    };
    let (q0, v0) = (traj.q, traj.qdot);
    let (k1q, k1v) = rate(q0, v0)?;
    let (k2q, k2v) = rate(add_scaled(q0, 0.5 * dt, k1q), add_scaled(v0, 0.5 * dt, k1v))?;
    let (k3q, k3v) = rate(add_scaled(q0, 0.5 * dt, k2q), add_scaled(v0, 0.5 * dt, k2v))?;
    let (k4q, k4v) = rate(add_scaled(q0, dt, k3q), add_scaled(v0, dt, k3v))?;
    let sixth = dt / 6.0;
    let mut q = q0;
    let mut v = v0;
    for a in 0..3 {
        q[a] += sixth * (k1q[a] + 2.0 * k2q[a] + 2.0 * k3q[a] + k4q[a]);
        v[a] += sixth * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a]);
    }
    if !q.iter().chain(v.iter()).all(|x| x.is_finite()) {
        return Err(Error::Numerical(
            "nuclear state became non-finite during a step".into(),
        ));
    }
    surf.check_domain(q)?;
    Ok(NuclearTrajectory {
        q,
        qdot: v,
        mass: traj.mass,
        time: traj.time + dt,
        history: traj.history.clone(),
    })
}

/// Smoothed loop phase `-hbar * integral of Lambda_bar along c`.
pub fn smoothed_geometric_phase(lambda_bar: &VectorField, c: &Loop, hbar: f64) -> Result<f64> {
    if !hbar.is_finite() || hbar <= 0.0 {
        return Err(Error::parameter("hbar", "must be finite and positive"));
    }
    if lambda_bar.ncomp() != 3 {
        return Err(Error::Dimensionality(
            "smoothed gauge potential needs three components".into(),
        ));
    }
    Ok(-hbar * line_integral(lambda_bar, c, Interpolation::Tricubic))
}

/// Joint nuclear-trajectory-plus-filament state.
///
/// The invariant maintained by the constructor and by [`step_bo_coupled`] is
/// that `surfaces.lambda_bar` is the smoothed Biot-Savart potential of
/// `filament` at regularization width `reg`.
#[derive(Clone, Debug)]
pub struct BoCoupledSystem {
    /// Nuclear trajectory.
    pub traj: NuclearTrajectory,
    /// Vortex filament sourcing the gauge potential.
    pub filament: FilamentCurve,
    /// Electronic model behind the surfaces.
    pub model: ElectronicModel,
    /// Smoothed surfaces; `lambda_bar` tracks the filament.
    pub surfaces: SmoothedSurfaces,
    /// Biot-Savart regularization width.
    pub reg: f64,
}

impl BoCoupledSystem {
    /// Couples `traj` and `filament` through the smoothed Biot-Savart
    /// potential on `grid`.
    pub fn new(
        traj: NuclearTrajectory,
        filament: FilamentCurve,
        model: ElectronicModel,
        grid: &Grid,
        hbar: f64,
        sigma0: f64,
        reg: f64,
    ) -> Result<BoCoupledSystem> {
        if !reg.is_finite() || reg <= 0.0 {
            return Err(Error::parameter("reg", "must be finite and positive"));
        }
        let gf = biot_savart_lambda(&filament, grid, traj.mass, hbar, reg)?;
        let surfaces =
            SmoothedSurfaces::build(&model, grid, Some(&gf.lambda), traj.mass, hbar, sigma0)?;
        let sys = BoCoupledSystem {
            traj,
            filament,
            model,
            surfaces,
            reg,
        };
        sys.check_clearance(&sys.filament)?;
        check_trajectory(&sys.traj, &sys.surfaces)?;
        Ok(sys)
    }

    fn check_clearance(&self, fil: &FilamentCurve) -> Result<()> {
        let d = fil.min_self_distance();
        if d < self.reg {
            return Err(Error::Geometry(format!(
                "filament self-distance {d:.6e} fell below the \
                 regularization width {:.6e}",
                self.reg
            )));
        }
        Ok(())
    }

    /// Surfaces with the gauge potential regenerated from `fil`.
    fn surfaces_for(&self, fil: &FilamentCurve) -> Result<SmoothedSurfaces> {
        let gf = biot_savart_lambda(
            fil,
            &self.surfaces.grid,
            self.traj.mass,
            self.surfaces.hbar,
            self.reg,
        )?;
        self.surfaces.with_lambda(&gf.lambda)
    }

    #[allow(clippy::type_complexity)]
    fn stage_rates(
        &self,
        surf: &SmoothedSurfaces,
        q: [f64; 3],
        v: [f64; 3],
        fil: &FilamentCurve,
    ) -> Result<([f64; 3], [f64; 3], Vec<[f64; 3]>)> {
        surf.check_domain(q)?;
        let inv_m = 1.0 / self.traj.mass;
        let f = surf.force(q, v);
        let w = filament_velocity_bo(q, v, surf.sigma0, self.traj.mass, fil)?;
        Ok((v, [f[0] * inv_m, f[1] * inv_m, f[2] * inv_m], w))
    }

    #[allow(clippy::type_complexity)]
    fn stage_state(
        &self,
        h: f64,
        kq: [f64; 3],
        kv: [f64; 3],
        w: &[[f64; 3]],
    ) -> Result<([f64; 3], [f64; 3], FilamentCurve, SmoothedSurfaces)> {
        let q = add_scaled(self.traj.q, h, kq);
        let v = add_scaled(self.traj.qdot, h, kv);
        if !q.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numerical(
                "nuclear state became non-finite during a coupled step".into(),
            ));
        }
        let fil = self
            .filament
            .with_nodes(nodes_add_scaled(self.filament.nodes(), h, w)?)?;
        let surf = self.surfaces_for(&fil)?;
        Ok((q, v, fil, surf))
    }
}

/// Advances the joint nuclear-plus-filament state by one RK4 step of size
/// `dt`, regenerating the smoothed gauge potential from the filament at every
/// stage.
pub fn step_bo_coupled(sys: &BoCoupledSystem, dt: f64) -> Result<BoCoupledSystem> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::parameter("dt", "must be finite and positive"));
    }
    sys.check_clearance(&sys.filament)?;
    check_trajectory(&sys.traj, &sys.surfaces)?;
    let (k1q, k1v, w1) = sys.stage_rates(&sys.surfaces, sys.traj.q, sys.traj.qdot, &sys.filament)?;
    let (q2, v2, f2, s2) = sys.stage_state(0.5 * dt, k1q, k1v, &w1)?;
    let (k2q, k2v, w2) = sys.stage_rates(&s2, q2, v2, &f2)?;
    let (q3, v3, f3, s3) = sys.stage_state(0.5 * dt, k2q, k2v, &w2)?;
    let (k3q, k3v, w3) = sys.stage_rates(&s3, q3, v3, &f3)?;
    let (q4, v4, f4, s4) = sys.stage_state(dt, k3q, k3v, &w3)?;
    let (k4q, k4v, w4) = sys.stage_rates(&s4, q4, v4, &f4)?;
    let sixth = dt / 6.0;
    let mut q = sys.traj.q;
    let mut v = sys.traj.qdot;
    for a in 0..3 {
        q[a] += sixth * (k1q[a] + 2.0 * k2q[a] + 2.0 * k3q[a] + k4q[a]);
        v[a] += sixth * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a]);
    }
    if !q.iter().chain(v.iter()).all(|x| x.is_finite()) {
        return Err(Error::Numerical(
            "nuclear state became non-finite during a coupled step".into(),
        ));
    }
    let n = sys.filament.nodes().len();
    let mut wsum = vec![[0.0f64; 3]; n];
    for i in 0..n {
        for a in 0..3 {
            wsum[i][a] =
                (w1[i][a] + 2.0 * w2[i][a] + 2.0 * w3[i][a] + w4[i][a]) / 6.0;
        }
    }
    let filament = sys
        .filament
        .with_nodes(nodes_add_scaled(sys.filament.nodes(), dt, &wsum)?)?;
    let traj = NuclearTrajectory {
        q,
        qdot: v,
        mass: sys.traj.mass,
        time: sys.traj.time + dt,
        history: sys.traj.history.clone(),
    };
    let next = BoCoupledSystem {
        surfaces: sys.surfaces_for(&filament)?,
        traj,
        filament,
        model: sys.model.clone(),
        reg: sys.reg,
    };
    next.check_clearance(&next.filament)?;
    next.surfaces.check_domain(next.traj.q)?;
    Ok(next)
}
