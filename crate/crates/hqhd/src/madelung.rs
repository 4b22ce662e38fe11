//! Hydrodynamic (Madelung) diagnostics of wavefunctions: density, gauge-aware
//! velocity, quantum potential, circulation and holonomy, helicity, energy,
//! spin fields, and finite-difference residuals of the transport equations.
//!
//! The central object is the momentum field
//! `nubar = hbar*Im(psi* grad psi)/|psi|^2 - hbar*Lambda - A` (the external
//! `A` only when present), with fluid velocity `nubar/m`. Points where the
//! density drops below `1e-10 * max(D)` are node-masked; every off-node
//! identity in this module excludes them.

use num_complex::Complex64;

use crate::fields::{
    derivative, gradient, gradient_complex, laplacian, line_integral, pairwise_sum, ComplexField,
    Grid, Interpolation, Loop, ScalarField, VectorField,
};
use crate::gauge::GaugeField;
use crate::propagator::{rhs, PropagatorParams, WaveField};
use crate::{Error, Result};

/// Relative density threshold below which a point counts as a node.
pub const NODE_THRESHOLD: f64 = 1e-10;

/// Hydrodynamic state derived from a wavefunction snapshot.
#[derive(Clone, Debug)]
pub struct HydroState {
    /// Probability density `D = |psi|^2`.
    pub density: ScalarField,
    /// Fluid velocity `nubar / m`.
    pub velocity: VectorField,
    /// Gauge-covariant momentum field.
    pub nubar: VectorField,
    /// Local phase rate `xi_bar = |nubar|^2/2m + V_Q + V`.
    pub phase_rate: ScalarField,
    /// Quantum potential `V_Q = -(hbar^2/2m) laplacian(sqrt D)/sqrt D`.
    pub quantum_potential: ScalarField,
    /// Spin density `s_tilde = D*s` for spinor states.
    pub spin_density: Option<VectorField>,
    /// Marks points with `D < 1e-10 * max(D)`.
    pub node_mask: Vec<bool>,
}

impl HydroState {
    /// Number of node-masked points.
    pub fn node_count(&self) -> usize {
        self.node_mask.iter().filter(|&&b| b).count()
    }
}

/// Polar split `psi = amplitude * phase_factor`.
#[derive(Clone, Debug)]
pub struct MadelungDecomposition {
    /// Amplitude `R = sqrt(D)`.
    pub amplitude: ScalarField,
    /// Unit-modulus factor `psi/|psi|` (unit spinor for two components);
    /// set to the reference section `(1, 0)` at node-masked points.
    pub phase_factor: ComplexField,
}

impl MadelungDecomposition {
    /// Splits a wavefunction into amplitude and unit factor.
    pub fn from_wave(psi: &ComplexField) -> MadelungDecomposition {
        let density = psi.density();
        let mask = node_mask(&density);
        let n = psi.grid().len();
        let mut amplitude = ScalarField::zeros(psi.grid());
        for (a, d) in amplitude.values_mut().iter_mut().zip(density.values()) {
            *a = d.sqrt();
        }
        let mut phase_factor = ComplexField::zeros(psi.grid(), psi.ncomp());
        for c in 0..psi.ncomp() {
            let src = psi.comp(c);
            let amp = amplitude.values().to_vec();
            let dst = phase_factor.comp_mut(c);
            for i in 0..n {
                dst[i] = if mask[i] {
                    if c == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                } else {
                    src[i] / amp[i]
                };
            }
        }
        MadelungDecomposition {
            amplitude,
            phase_factor,
        }
    }

    /// Reassembles `amplitude * phase_factor`.
    pub fn reconstruct(&self) -> ComplexField {
        let mut out = self.phase_factor.clone();
        let n = self.amplitude.grid().len();
        for c in 0..out.ncomp() {
            let amp = self.amplitude.values().to_vec();
            let dst = out.comp_mut(c);
            for i in 0..n {
                dst[i] *= amp[i];
            }
        }
        out
    }
}

/// Node mask of a density field: `D < 1e-10 * max(D)`.
pub fn node_mask(density: &ScalarField) -> Vec<bool> {
    let cutoff = NODE_THRESHOLD * density.max();
    density.values().iter().map(|&d| d < cutoff).collect()
}

/// Quantum potential `-(hbar^2/2m) laplacian(sqrt D)/sqrt D`, zeroed at
/// node-masked points.
pub fn quantum_potential(density: &ScalarField, m: f64, hbar: f64) -> ScalarField {
    let mask = node_mask(density);
    let mut root = ScalarField::zeros(density.grid());
    for (r, d) in root.values_mut().iter_mut().zip(density.values()) {
        *r = d.max(0.0).sqrt();
    }
    let lap = laplacian(&root);
    let mut out = ScalarField::zeros(density.grid());
    let c = -hbar * hbar / (2.0 * m);
    for i in 0..out.grid().len() {
        out.values_mut()[i] = if mask[i] {
            0.0
        } else {
            c * lap.values()[i] / root.values()[i]
        };
    }
    out
}

/// Derives the full hydrodynamic state from a wavefunction.
///
/// `potential` enters only the phase rate `xi_bar`; pass `None` for free
/// evolution. Spinor inputs additionally populate `spin_density`.
pub fn to_hydrodynamic(
    psi: &WaveField,
    gf: &GaugeField,
    potential: Option<&ScalarField>,
    m: f64,
    hbar: f64,
) -> Result<HydroState> {
    if !(m > 0.0) || !(hbar > 0.0) {
        return Err(Error::parameter("m/hbar", "must be positive"));
    }
    let grid = psi.grid();
    if !grid.same_layout(gf.lambda.grid()) {
        return Err(Error::Grid("gauge field grid differs from psi grid".into()));
    }
    if let Some(v) = potential {
        if !grid.same_layout(v.grid()) {
            return Err(Error::Grid("potential grid differs from psi grid".into()));
        }
    }
    let axes = grid.axes();
    let n = grid.len();
    let density = psi.density();
    let mask = node_mask(&density);

    // Gauge-covariant momentum: hbar Im(psi* d_a psi)/D - hbar Lambda_a - A_a.
    let grads = gradient_complex(psi);
    let mut nubar = VectorField::zeros(grid, axes);
    for a in 0..axes {
        let ga = &grads[a];
        let lam = gf.lambda.comp(a);
        let ext = gf.external_a.as_ref().map(|f| f.comp(a));
        let out = nubar.comp_mut(a);
        for i in 0..n {
            if mask[i] {
                out[i] = 0.0;
                continue;
            }
            let mut im = 0.0;
            for c in 0..psi.ncomp() {
                im += (psi.comp(c)[i].conj() * ga.comp(c)[i]).im;
            }
            out[i] = hbar * im / density.values()[i] - hbar * lam[i]
                - ext.map_or(0.0, |e| e[i]);
        }
    }
    let mut velocity = nubar.clone();
    velocity.scale(1.0 / m);

    let vq = quantum_potential(&density, m, hbar);
    let mut phase_rate = ScalarField::zeros(grid);
    for i in 0..n {
        if mask[i] {
            continue;
        }
        let nu = nubar.at(i);
        let mut xi = (nu[0] * nu[0] + nu[1] * nu[1] + nu[2] * nu[2]) / (2.0 * m)
            + vq.values()[i];
        if let Some(v) = potential {
            xi += v.values()[i];
        }
        phase_rate.values_mut()[i] = xi;
    }

    let spin_density = if psi.ncomp() == 2 {
        let (_, s_tilde, _) = spin_density_fields(psi, hbar);
        Some(s_tilde)
    } else {
        None
    };

    Ok(HydroState {
        density,
        velocity,
        nubar,
        phase_rate,
        quantum_potential: vq,
        spin_density,
        node_mask: mask,
    })
}

/// Spin fields of a spinor: unit-magnitude spin `s = hbar (Psi^dag sigma Psi)
/// / (2 D)`, spin density `s_tilde = D*s`, and the Bloch vector `n = 2s/hbar`.
/// `s` and `bloch` are zeroed at node-masked points.
pub fn spin_density_fields(
    psi: &ComplexField,
    hbar: f64,
) -> (VectorField, VectorField, VectorField) {
    assert_eq!(psi.ncomp(), 2, "spin fields need a two-component spinor");
    let grid = psi.grid();
    let n = grid.len();
    let density = psi.density();
    let mask = node_mask(&density);
    let mut s = VectorField::zeros(grid, 3);
    let mut s_tilde = VectorField::zeros(grid, 3);
    let mut bloch = VectorField::zeros(grid, 3);
    let up = psi.comp(0).to_vec();
    let dn = psi.comp(1).to_vec();
    for i in 0..n {
        let cross = up[i].conj() * dn[i];
        let sig = [
            2.0 * cross.re,
            2.0 * cross.im,
            up[i].norm_sqr() - dn[i].norm_sqr(),
        ];
        let d = density.values()[i];
        for c in 0..3 {
            s_tilde.comp_mut(c)[i] = 0.5 * hbar * sig[c];
            if !mask[i] {
                s.comp_mut(c)[i] = 0.5 * hbar * sig[c] / d;
                bloch.comp_mut(c)[i] = sig[c] / d;
            }
        }
    }
    (s, s_tilde, bloch)
}

fn loop_avoids_nodes(state: &HydroState, c: &Loop) -> Result<()> {
    // A loop point is too close to a node when interpolated density falls
    // under the mask threshold.
    let cutoff = NODE_THRESHOLD * state.density.max();
    for p in c.points() {
        let d = crate::fields::interpolate(&state.density, p, Interpolation::Tricubic);
        if d < cutoff {
            return Err(Error::Proximity(format!(
                "loop passes through a density node at ({:.3}, {:.3}, {:.3})",
                p[0], p[1], p[2]
            )));
        }
    }
    Ok(())
}

/// Velocity circulation around a loop, guarded against node crossings.
pub fn circulation(state: &HydroState, c: &Loop, mode: Interpolation) -> Result<f64> {
    loop_avoids_nodes(state, c)?;
    Ok(line_integral(&state.velocity, c, mode))
}

/// Holonomy phase factor `exp(-i * loop integral of Lambda)`; unit modulus by
/// construction. `hbar` does not enter: the loop integral of `Lambda` is
/// already the accumulated phase.
pub fn holonomy_phase(gf: &GaugeField, c: &Loop, mode: Interpolation) -> Complex64 {
    let integral = line_integral(&gf.lambda, c, mode);
    Complex64::from_polar(1.0, -integral)
}

/// Hydrodynamic helicity `integral of v . curl(v)`. Planar and line fields
/// carry none: the curl is orthogonal to the velocity by construction.
pub fn helicity(v: &VectorField) -> f64 {
    if v.grid().axes() < 3 {
        return 0.0;
    }
    let c = crate::fields::curl(v).expect("three-axis grid");
    let n = v.grid().len();
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let a = v.at(i);
            let b = c.at(i);
            a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
        })
        .collect();
    pairwise_sum(&terms) * v.grid().node_volume()
}

/// Total energy `Re integral of psi^dag H psi` with the full minimally
/// coupled Hamiltonian of `params` (Zeeman term included for spinors).
pub fn total_energy(psi: &WaveField, params: &PropagatorParams) -> Result<f64> {
    let dpsi = rhs(psi, params)?;
    // H psi = i hbar dpsi/dt.
    let n = psi.grid().len();
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for c in 0..psi.ncomp() {
                let h_psi = Complex64::new(0.0, params.hbar) * dpsi.comp(c)[i];
                acc += (psi.comp(c)[i].conj() * h_psi).re;
            }
            acc
        })
        .collect();
    Ok(pairwise_sum(&terms) * psi.grid().node_volume())
}

/// Berry connection `A = <phi| -i hbar grad phi>` of a pointwise-normalized
/// spinor section.
pub fn berry_connection(phi: &ComplexField, hbar: f64) -> Result<VectorField> {
    let grid = phi.grid();
    let n = grid.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut norm = 0.0;
        for c in 0..phi.ncomp() {
            norm += phi.comp(c)[i].norm_sqr();
        }
        worst = worst.max((norm - 1.0).abs());
    }
    if worst > 1e-8 {
        return Err(Error::parameter(
            "phi",
            format!("must be pointwise normalized; worst deviation {worst:.3e}"),
        ));
    }
    let grads = gradient_complex(phi);
    let mut out = VectorField::zeros(grid, grid.axes());
    for a in 0..grid.axes() {
        let ga = &grads[a];
        let dst = out.comp_mut(a);
        for i in 0..n {
            let mut im = 0.0;
            for c in 0..phi.ncomp() {
                im += (phi.comp(c)[i].conj() * ga.comp(c)[i]).im;
            }
            dst[i] = hbar * im;
        }
    }
    Ok(out)
}

/// Takabayasi vector of a unit Bloch field: the cyclic sum over components of
/// `n_x grad(n_y) x grad(n_z)`, normalized so that
/// `curl(berry_connection) = (hbar/2) T`. Always three components, vanishing
/// ones included.
pub fn takabayasi_vector(n_field: &VectorField) -> Result<VectorField> {
    if n_field.ncomp() != 3 {
        return Err(Error::Dimensionality(
            "takabayasi_vector needs a three-component field".into(),
        ));
    }
    let grid = n_field.grid();
    let n = grid.len();
    for i in 0..n {
        let v = n_field.at(i);
        let mag = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (mag - 1.0).abs() > 1e-6 {
            return Err(Error::parameter(
                "n",
                format!("must be a unit field; |n| = {mag:.8} found"),
            ));
        }
    }
    // grads[j][b] = d_b n_j, zero along absent axes.
    let axes = grid.axes();
    let mut grads: Vec<Vec<ScalarField>> = Vec::with_capacity(3);
    for j in 0..3 {
        let comp = ScalarField::from_values(grid, n_field.comp(j).to_vec());
        let row: Vec<ScalarField> = (0..axes).map(|b| derivative(&comp, b)).collect();
        grads.push(row);
    }
    let grad_at = |j: usize, b: usize, i: usize| -> f64 {
        if b < axes {
            grads[j][b].values()[i]
        } else {
            0.0
        }
    };
    let mut out = VectorField::zeros(grid, 3);
    for i in 0..n {
        let nv = n_field.at(i);
        let g = [
            [grad_at(0, 0, i), grad_at(0, 1, i), grad_at(0, 2, i)],
            [grad_at(1, 0, i), grad_at(1, 1, i), grad_at(1, 2, i)],
            [grad_at(2, 0, i), grad_at(2, 1, i), grad_at(2, 2, i)],
        ];
        let cross = |a: &[f64; 3], b: &[f64; 3]| -> [f64; 3] {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let c12 = cross(&g[1], &g[2]);
        let c20 = cross(&g[2], &g[0]);
        let c01 = cross(&g[0], &g[1]);
        for a in 0..3 {
            out.comp_mut(a)[i] = nv[0] * c12[a] + nv[1] * c20[a] + nv[2] * c01[a];
        }
    }
    Ok(out)
}

/// Relative L2 residual norms of the hydrodynamic equations of motion between
/// two snapshots.
#[derive(Clone, Copy, Debug)]
pub struct HydroResiduals {
    /// Continuity `d_t D + div(D v) = 0`.
    pub continuity: f64,
    /// Momentum transport (bracket form for scalars, density-weighted Pauli
    /// form for spinors).
    pub momentum: f64,
    /// Spin transport, spinor states only.
    pub spin_transport: Option<f64>,
}

fn masked_l2(values: &[f64], mask: &[bool], node_volume: f64) -> f64 {
    let terms: Vec<f64> = values
        .iter()
        .zip(mask)
        .map(|(v, &m)| if m { 0.0 } else { v * v })
        .collect();
    (pairwise_sum(&terms) * node_volume).sqrt()
}

fn masked_l2_vec(v: &VectorField, mask: &[bool], node_volume: f64) -> f64 {
    let mut acc = 0.0;
    for c in 0..v.ncomp() {
        let l = masked_l2(v.comp(c), mask, node_volume);
        acc += l * l;
    }
    acc.sqrt()
}

/// Pointwise average of two scalar fields.
fn average(a: &ScalarField, b: &ScalarField) -> ScalarField {
    let mut out = a.clone();
    out.scale(0.5);
    out.scaled_add(0.5, b);
    out
}

fn average_vec(a: &VectorField, b: &VectorField) -> VectorField {
    let mut out = a.clone();
    out.scale(0.5);
    out.scaled_add(0.5, b);
    out
}

/// Flat index shifted by `off` nodes along `axis`, with periodic wrap.
fn shifted(grid: &Grid, flat: usize, axis: usize, off: isize) -> usize {
    let n = grid.dims()[axis] as isize;
    let stride = grid.strides()[axis];
    let i = (flat / stride) as isize % n;
    let j = (i + off).rem_euclid(n);
    (flat as isize + (j - i) * stride as isize) as usize
}

/// Fourth-order centered difference along `axis`, periodic. Residual spatial
/// terms use local stencils rather than the spectral operators: fields built
/// from near-node states carry O(1) jumps at the mask boundary, and spectral
/// derivatives would smear that error over the whole box.
fn fd_derivative(values: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    let w = 1.0 / (12.0 * h);
    (0..grid.len())
        .map(|i| {
            let p1 = values[shifted(grid, i, axis, 1)];
            let m1 = values[shifted(grid, i, axis, -1)];
            let p2 = values[shifted(grid, i, axis, 2)];
            let m2 = values[shifted(grid, i, axis, -2)];
            w * (8.0 * (p1 - m1) - (p2 - m2))
        })
        .collect()
}

fn fd_divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.axes() {
        let d = fd_derivative(v.comp(a), grid, a);
        for (dst, x) in out.values_mut().iter_mut().zip(&d) {
            *dst += x;
        }
    }
    out
}

fn fd_gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let mut out = VectorField::zeros(grid, grid.axes());
    for a in 0..grid.axes() {
        let d = fd_derivative(f.values(), grid, a);
        out.comp_mut(a).copy_from_slice(&d);
    }
    out
}

/// Marks every node within `radius` cells (per axis, iterated) of a marked
/// node, so values whose finite-difference stencils reach into the masked
/// region are excluded too.
fn dilate_mask(grid: &Grid, mask: &[bool], radius: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..radius {
        let mut next = cur.clone();
        for a in 0..grid.axes() {
            for i in 0..grid.len() {
                if cur[i] {
                    next[shifted(grid, i, a, 1)] = true;
                    next[shifted(grid, i, a, -1)] = true;
                }
            }
        }
        cur = next;
    }
    cur
}

/// `(v . grad) w` componentwise, finite differences.
fn advect(v: &VectorField, w: &VectorField) -> VectorField {
    let grid = v.grid();
    let axes = grid.axes();
    let mut out = VectorField::zeros(grid, w.ncomp());
    for a in 0..w.ncomp() {
        for b in 0..axes {
            let d = fd_derivative(w.comp(a), grid, b);
            let vb = v.comp(b);
            let dst = out.comp_mut(a);
            for i in 0..grid.len() {
                dst[i] += vb[i] * d[i];
            }
        }
    }
    out
}

/// `v x curl(w)` for spatial `v`, `w`; dimension-aware (the curl of a planar
/// field points out of the plane).
fn cross_with_curl(v: &VectorField, w: &VectorField) -> Result<VectorField> {
    let grid = v.grid();
    let axes = grid.axes();
    let mut out = VectorField::zeros(grid, axes);
    match axes {
        1 => {}
        2 => {
            if w.ncomp() < 2 {
                return Err(Error::Dimensionality(
                    "planar curl needs two components".into(),
                ));
            }
            let dxwy = fd_derivative(w.comp(1), grid, 0);
            let dywx = fd_derivative(w.comp(0), grid, 1);
            for i in 0..grid.len() {
                let vv = v.at(i);
                let om = dxwy[i] - dywx[i];
                out.comp_mut(0)[i] = vv[1] * om;
                out.comp_mut(1)[i] = -vv[0] * om;
            }
        }
        _ => {
            if w.ncomp() != 3 {
                return Err(Error::Dimensionality("curl needs three components".into()));
            }
            let d = |c: usize, a: usize| fd_derivative(w.comp(c), grid, a);
            let (dyz, dzy) = (d(2, 1), d(1, 2));
            let (dzx, dxz) = (d(0, 2), d(2, 0));
            let (dxy, dyx) = (d(1, 0), d(0, 1));
            for i in 0..grid.len() {
                let vv = v.at(i);
                let cc = [dyz[i] - dzy[i], dzx[i] - dxz[i], dxy[i] - dyx[i]];
                out.comp_mut(0)[i] = vv[1] * cc[2] - vv[2] * cc[1];
                out.comp_mut(1)[i] = vv[2] * cc[0] - vv[0] * cc[2];
                out.comp_mut(2)[i] = vv[0] * cc[1] - vv[1] * cc[0];
            }
        }
    }
    Ok(out)
}

/// Finite-difference residuals of the continuity, momentum, and (spinor)
/// spin-transport equations between two consecutive snapshots `dt` apart.
/// Time derivatives are centered at the midpoint; spatial terms use the
/// averaged state. Each norm is relative to the largest constituent term.
pub fn hydro_residuals(
    state_t0: &HydroState,
    state_t1: &HydroState,
    dt: f64,
    params: &PropagatorParams,
) -> Result<HydroResiduals> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::parameter("dt", "must be finite and positive"));
    }
    let grid = state_t0.density.grid();
    if !grid.same_layout(state_t1.density.grid()) {
        return Err(Error::Grid("snapshot grids differ".into()));
    }
    let axes = grid.axes();
    let n = grid.len();
    let vol = grid.node_volume();
    let raw_mask: Vec<bool> = state_t0
        .node_mask
        .iter()
        .zip(&state_t1.node_mask)
        .map(|(&a, &b)| a || b)
        .collect();
    // Norms exclude anything a chain of two stencils can reach from a node.
    let mask = dilate_mask(grid, &raw_mask, 4);
    let m = params.mass;

    // Continuity: d_t D + div(J), J averaged across the step.
    let mut dtd = state_t1.density.clone();
    dtd.scaled_add(-1.0, &state_t0.density);
    dtd.scale(1.0 / dt);
    let mut flux = VectorField::zeros(grid, axes);
    for a in 0..axes {
        let dst = flux.comp_mut(a);
        for i in 0..n {
            dst[i] = 0.5
                * (state_t0.density.values()[i] * state_t0.velocity.comp(a)[i]
                    + state_t1.density.values()[i] * state_t1.velocity.comp(a)[i]);
        }
    }
    let divj = fd_divergence(&flux);
    let mut rc = dtd.clone();
    rc.scaled_add(1.0, &divj);
    let freq_scale = state_t0
        .phase_rate
        .max_abs()
        .max(state_t1.phase_rate.max_abs())
        / params.hbar;
    let nc = masked_l2(dtd.values(), &mask, vol)
        .max(masked_l2(divj.values(), &mask, vol))
        .max(masked_l2(state_t0.density.values(), &mask, vol) * freq_scale);
    let continuity = if nc > 0.0 {
        masked_l2(rc.values(), &mask, vol) / nc
    } else {
        0.0
    };

    // Midpoint fields.
    let d_mid = average(&state_t0.density, &state_t1.density);
    let v_mid = average_vec(&state_t0.velocity, &state_t1.velocity);
    let vq_mid = average(&state_t0.quantum_potential, &state_t1.quantum_potential);

    let mut dtv = state_t1.velocity.clone();
    dtv.scaled_add(-1.0, &state_t0.velocity);
    dtv.scale(1.0 / dt);
    let adv = advect(&v_mid, &v_mid);

    let spinor = state_t0.spin_density.is_some();
    let (momentum, spin_transport) = if !spinor {
        // Bracket form: m(d_t + v.grad)v + v x curl(nubar) + grad(V) + grad(V_Q).
        // The potential gradients stay separate in the normalizer: stationary
        // states balance grad(V) against grad(V_Q), and the residual is
        // relative to those forces, not to their cancellation.
        let nubar_mid = average_vec(&state_t0.nubar, &state_t1.nubar);
        let lorentz = cross_with_curl(&v_mid, &nubar_mid)?;
        let mut res = VectorField::zeros(grid, axes);
        let mut terms: Vec<VectorField> = Vec::new();
        let mut t1 = dtv.clone();
        t1.scale(m);
        let mut t2 = adv.clone();
        t2.scale(m);
        terms.push(t1);
        terms.push(t2);
        terms.push(lorentz);
        terms.push(fd_gradient(&vq_mid));
        if let Some(v) = &params.potential {
            terms.push(fd_gradient(v));
        }
        for t in &terms {
            res.scaled_add(1.0, t);
        }
        let norm = terms
            .iter()
            .map(|t| masked_l2_vec(t, &mask, vol))
            .fold(0.0f64, f64::max);
        let momentum = if norm > 0.0 {
            masked_l2_vec(&res, &mask, vol) / norm
        } else {
            0.0
        };
        (momentum, None)
    } else {
        // Density-weighted Pauli form:
        // M D (d_t + v.grad) v = D v x curl(hbar Lambda + A) - D grad(V)
        //   + M^-1 (grad B).s_tilde + M^-1 d_j (s_tilde . grad(D^-1 d_j s_tilde)).
        let s0 = state_t0.spin_density.as_ref().unwrap();
        let s1 = state_t1.spin_density.as_ref().unwrap();
        let s_mid = average_vec(s0, s1);

        let mut coupling = params.gauge.lambda.clone();
        coupling.scale(params.hbar);
        if let Some(a) = &params.gauge.external_a {
            coupling.scaled_add(1.0, a);
        }
        let lorentz_raw = cross_with_curl(&v_mid, &coupling)?;

        let mut lhs = VectorField::zeros(grid, axes);
        let mut t_inertia = VectorField::zeros(grid, axes);
        for a in 0..axes {
            let dst = t_inertia.comp_mut(a);
            for i in 0..n {
                dst[i] =
                    m * d_mid.values()[i] * (dtv.comp(a)[i] + adv.comp(a)[i]);
            }
        }
        lhs.scaled_add(1.0, &t_inertia);

        let mut t_lorentz = VectorField::zeros(grid, axes);
        for a in 0..axes {
            let dst = t_lorentz.comp_mut(a);
            for i in 0..n {
                dst[i] = d_mid.values()[i] * lorentz_raw.comp(a)[i];
            }
        }

        let mut t_pot = VectorField::zeros(grid, axes);
        if let Some(v) = &params.potential {
            let gv = gradient(v);
            for a in 0..axes {
                let dst = t_pot.comp_mut(a);
                for i in 0..n {
                    dst[i] = -d_mid.values()[i] * gv.comp(a)[i];
                }
            }
        }

        // Zeeman force (grad B).s_tilde / M, component i = (d_i B_j) s_j / M.
        let mut t_zeeman = VectorField::zeros(grid, axes);
        if let Some(b) = &params.magnetic_b {
            for j in 0..3 {
                for a in 0..axes {
                    let d = fd_derivative(b.comp(j), grid, a);
                    let dst = t_zeeman.comp_mut(a);
                    for i in 0..n {
                        dst[i] += d[i] * s_mid.comp(j)[i] / m;
                    }
                }
            }
        }

        // Spin stress: W[j][k] = D^-1 d_j s_k; T_i = d_j(s_k d_i W[j][k]) / M.
        let mut w = vec![vec![vec![0.0f64; n]; 3]; axes];
        for k in 0..3 {
            for j in 0..axes {
                let mut d = fd_derivative(s_mid.comp(k), grid, j);
                for (i, x) in d.iter_mut().enumerate() {
                    *x = if raw_mask[i] {
                        0.0
                    } else {
                        *x / d_mid.values()[i]
                    };
                }
                w[j][k] = d;
            }
        }
        let mut t_stress = VectorField::zeros(grid, axes);
        for i_ax in 0..axes {
            let mut div_term = vec![0.0f64; n];
            for j in 0..axes {
                let mut u = vec![0.0f64; n];
                for k in 0..3 {
                    let diw = fd_derivative(&w[j][k], grid, i_ax);
                    for i in 0..n {
                        u[i] += s_mid.comp(k)[i] * diw[i];
                    }
                }
                let dj = fd_derivative(&u, grid, j);
                for i in 0..n {
                    div_term[i] += dj[i];
                }
            }
            let dst = t_stress.comp_mut(i_ax);
            for i in 0..n {
                dst[i] = div_term[i] / m;
            }
        }

        let mut res = lhs.clone();
        res.scaled_add(-1.0, &t_lorentz);
        res.scaled_add(-1.0, &t_pot);
        res.scaled_add(-1.0, &t_zeeman);
        res.scaled_add(-1.0, &t_stress);
        let norm = [&t_inertia, &t_lorentz, &t_pot, &t_zeeman, &t_stress]
            .iter()
            .map(|t| masked_l2_vec(t, &mask, vol))
            .fold(0.0f64, f64::max);
        let momentum = if norm > 0.0 {
            masked_l2_vec(&res, &mask, vol) / norm
        } else {
            0.0
        };

        // Spin transport: M(d_t s + div(v s)) = s x (div(D^-1 grad s) + B).
        let mut dts = s1.clone();
        dts.scaled_add(-1.0, s0);
        dts.scale(m / dt);
        let mut t_adv = VectorField::zeros(grid, 3);
        for k in 0..3 {
            let mut fl = VectorField::zeros(grid, axes);
            for a in 0..axes {
                let dst = fl.comp_mut(a);
                for i in 0..n {
                    dst[i] = 0.5
                        * (state_t0.velocity.comp(a)[i] * s0.comp(k)[i]
                            + state_t1.velocity.comp(a)[i] * s1.comp(k)[i]);
                }
            }
            let d = fd_divergence(&fl);
            let dst = t_adv.comp_mut(k);
            for i in 0..n {
                dst[i] = m * d.values()[i];
            }
        }
        // Exchange torque: s x div(D^-1 grad s), using W from above.
        let mut exch = VectorField::zeros(grid, 3);
        for k in 0..3 {
            let dst = exch.comp_mut(k);
            for j in 0..axes {
                let dj = fd_derivative(&w[j][k], grid, j);
                for i in 0..n {
                    dst[i] += dj[i];
                }
            }
        }
        let mut t_torque = VectorField::zeros(grid, 3);
        for i in 0..n {
            let sv = s_mid.at(i);
            let mut f = exch.at(i);
            if let Some(b) = &params.magnetic_b {
                let bv = b.at(i);
                f = [f[0] + bv[0], f[1] + bv[1], f[2] + bv[2]];
            }
            let c = [
                sv[1] * f[2] - sv[2] * f[1],
                sv[2] * f[0] - sv[0] * f[2],
                sv[0] * f[1] - sv[1] * f[0],
            ];
            for k in 0..3 {
                t_torque.comp_mut(k)[i] = c[k];
            }
        }
        let mut sres = dts.clone();
        sres.scaled_add(1.0, &t_adv);
        sres.scaled_add(-1.0, &t_torque);
        let snorm = [&dts, &t_adv, &t_torque]
            .iter()
            .map(|t| masked_l2_vec(t, &mask, vol))
            .fold(0.0f64, f64::max);
        let spin = if snorm > 0.0 {
            masked_l2_vec(&sres, &mask, vol) / snorm
        } else {
            0.0
        };
        (momentum, Some(spin))
    };

    Ok(HydroResiduals {
        continuity,
        momentum,
        spin_transport,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{circle_loop, planar_curl, Grid};
    use crate::filament::circle_filament;
    use crate::gauge::biot_savart_lambda;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    #[test]
    fn plane_wave_velocity() {
        let g = Grid::new(&[32], &[8.0]).unwrap();
        let k = 3.0 * TAU / 8.0;
        let vol = 8.0f64;
        let psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::from_polar(1.0 / vol.sqrt(), k * p[0])
        });
        let (m, hbar) = (1.3, 0.7);
        let gf = GaugeField::zero(&g);
        let st = to_hydrodynamic(&psi, &gf, None, m, hbar).unwrap();
        let expect = hbar * k / m;
        for &v in st.velocity.comp(0) {
            assert!((v - expect).abs() < 1e-10 * expect.abs());
        }
        assert_eq!(st.node_count(), 0);

        // Constant Lambda shifts the velocity by -hbar*lambda/m.
        let lam = 1.0 * TAU / 8.0;
        let lambda = VectorField::from_fn(&g, 1, |_| [lam, 0.0, 0.0]);
        let gf = GaugeField::new(lambda);
        let st = to_hydrodynamic(&psi, &gf, None, m, hbar).unwrap();
        let expect = (hbar * k - hbar * lam) / m;
        for &v in st.velocity.comp(0) {
            assert!((v - expect).abs() < 1e-10 * expect.abs());
        }
    }

    #[test]
    fn real_gaussian_is_static() {
        let g = Grid::new(&[64, 64], &[16.0, 16.0]).unwrap();
        let mut psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::new((-(p[0] * p[0] + p[1] * p[1]) / 4.0).exp(), 0.0)
        });
        psi.normalize(1.0);
        let gf = GaugeField::zero(&g);
        let st = to_hydrodynamic(&psi, &gf, None, 1.0, 1.0).unwrap();
        // Roundoff in Im(psi* grad psi) is amplified by 1/D near the node
        // cutoff, so the bound is tiered by density.
        let dmax = st.density.values().iter().cloned().fold(0.0f64, f64::max);
        let mut core = 0.0f64;
        for i in 0..g.len() {
            let v = st.velocity.at(i);
            let mag = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if st.density.values()[i] > 1e-4 * dmax {
                core = core.max(mag);
            }
        }
        assert!(core < 1e-10, "core velocity {core:.3e}");
        assert!(st.velocity.max_magnitude() < 1e-6);
    }

    #[test]
    fn quantum_potential_gaussian_oracle() {
        let g = Grid::new(&[256], &[24.0]).unwrap();
        let sigma = 1.0;
        let (m, hbar) = (0.9, 1.1);
        let d = ScalarField::from_fn(&g, |p| (-p[0] * p[0] / (2.0 * sigma * sigma)).exp());
        let vq = quantum_potential(&d, m, hbar);
        let c = -hbar * hbar / (2.0 * m);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..g.len() {
            let x = g.position(i)[0];
            if x.abs() > 5.0 * sigma {
                continue;
            }
            let expect = c * (x * x / (4.0 * sigma.powi(4)) - 1.0 / (2.0 * sigma * sigma));
            worst = worst.max((vq.values()[i] - expect).abs());
            scale = scale.max(expect.abs());
        }
        assert!(worst < 1e-6 * scale, "worst {worst:.3e} scale {scale:.3e}");
    }

    #[test]
    fn harmonic_ground_state_is_stationary() {
        // xi_bar must be spatially constant (= hbar*omega/2) off-node.
        let g = Grid::new(&[256], &[28.0]).unwrap();
        let (m, hbar, omega) = (1.0, 1.0, 1.0);
        let mut psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::new((-m * omega * p[0] * p[0] / (2.0 * hbar)).exp(), 0.0)
        });
        psi.normalize(1.0);
        let v = ScalarField::from_fn(&g, |p| 0.5 * m * omega * omega * p[0] * p[0]);
        let gf = GaugeField::zero(&g);
        let st = to_hydrodynamic(&psi, &gf, Some(&v), m, hbar).unwrap();
        let e = 0.5 * hbar * omega;
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            if st.node_mask[i] {
                continue;
            }
            worst = worst.max((st.phase_rate.values()[i] - e).abs());
        }
        assert!(worst < 1e-6 * e, "xi_bar deviation {worst:.3e}");
        assert!(st.node_count() > 0, "far tail should be masked");
    }

    #[test]
    fn madelung_decomposition_roundtrip() {
        let g = Grid::new(&[32, 32], &[6.0, 6.0]).unwrap();
        let mut psi = ComplexField::from_fn(&g, 2, |p, c| {
            let ph = if c == 0 { 0.4 * p[0] } else { -0.3 * p[1] };
            Complex64::from_polar((-(p[0] * p[0] + p[1] * p[1]) / 3.0).exp() + 0.2, ph + c as f64)
        });
        psi.normalize(1.0);
        let dec = MadelungDecomposition::from_wave(&psi);
        let mask = node_mask(&psi.density());
        for i in 0..g.len() {
            if mask[i] {
                continue;
            }
            let mut norm = 0.0;
            for c in 0..2 {
                norm += dec.phase_factor.comp(c)[i].norm_sqr();
            }
            assert!((norm - 1.0).abs() < 1e-10);
        }
        let rec = dec.reconstruct();
        assert!(rec.l2_distance(&psi) < 1e-10);
    }

    #[test]
    fn spin_eigenstates() {
        let g = Grid::new(&[8], &[4.0]).unwrap();
        let hbar = 2.0;
        let up = ComplexField::from_fn(&g, 2, |_, c| {
            Complex64::new(if c == 0 { 0.5 } else { 0.0 }, 0.0)
        });
        let (s, _, bloch) = spin_density_fields(&up, hbar);
        for i in 0..g.len() {
            let sv = s.at(i);
            assert!((sv[2] - 0.5 * hbar).abs() < 1e-12);
            assert!(sv[0].abs() < 1e-12 && sv[1].abs() < 1e-12);
            assert!((bloch.at(i)[2] - 1.0).abs() < 1e-12);
        }
        let x = ComplexField::from_fn(&g, 2, |_, _| Complex64::new(0.3, 0.0));
        let (s, _, _) = spin_density_fields(&x, hbar);
        for i in 0..g.len() {
            let sv = s.at(i);
            assert!((sv[0] - 0.5 * hbar).abs() < 1e-12);
            assert!(sv[1].abs() < 1e-12 && sv[2].abs() < 1e-12);
        }
    }

    #[test]
    fn spin_magnitude_is_half_hbar() {
        let g = Grid::new(&[16, 16], &[5.0, 5.0]).unwrap();
        let hbar = 0.9;
        let psi = ComplexField::from_fn(&g, 2, |p, c| {
            let a = (TAU / 5.0) * p[0] + c as f64 * 0.7;
            let b = (TAU / 5.0) * p[1] * (c as f64 + 0.5);
            Complex64::new(a.cos() + 1.5 + c as f64, b.sin() * 0.4)
        });
        let (s, s_tilde, _) = spin_density_fields(&psi, hbar);
        let d = psi.density();
        for i in 0..g.len() {
            let sv = s.at(i);
            let mag = (sv[0] * sv[0] + sv[1] * sv[1] + sv[2] * sv[2]).sqrt();
            assert!((mag - 0.5 * hbar).abs() < 1e-10, "point {i}: |s| = {mag}");
            let st = s_tilde.at(i);
            for c in 0..3 {
                assert!((st[c] - d.values()[i] * sv[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn circulation_of_gradient_vanishes() {
        let g = Grid::new(&[32, 32, 32], &[6.0, 6.0, 6.0]).unwrap();
        let f = ScalarField::from_fn(&g, |p| {
            ((TAU / 6.0) * p[0]).sin() + ((TAU / 6.0) * (p[1] + p[2])).cos()
        });
        let grad = gradient(&f);
        let psi = ComplexField::from_fn(&g, 1, |_, _| Complex64::new(1.0, 0.0));
        let gf = GaugeField::zero(&g);
        let mut st = to_hydrodynamic(&psi, &gf, None, 1.0, 1.0).unwrap();
        st.velocity = grad;
        let c = circle_loop([0.3, -0.2, 0.1], 1.3, 2, 128);
        let circ = circulation(&st, &c, Interpolation::Fourier).unwrap();
        assert!(circ.abs() < 1e-8, "circulation {circ:.3e}");
    }

    #[test]
    fn circulation_and_holonomy_from_ring_lambda() {
        let g = Grid::new(&[48, 48, 48], &[12.0, 12.0, 12.0]).unwrap();
        let (m, hbar, gamma) = (1.0, 1.0, 1.0);
        let fil = circle_filament([0.0; 3], 1.5, 2, 128, gamma, 0.0).unwrap();
        let gf = biot_savart_lambda(&fil, &g, m, hbar, 0.35).unwrap();
        let psi = ComplexField::from_fn(&g, 1, |_, _| {
            Complex64::new(1.0 / (12.0f64.powi(3)).sqrt(), 0.0)
        });
        let st = to_hydrodynamic(&psi, &gf, None, m, hbar).unwrap();
        // Loop around the vortex core.
        let c = circle_loop([1.5, 0.0, 0.0], 1.2, 1, 256);
        let circ = circulation(&st, &c, Interpolation::Fourier).unwrap();
        let lam_int = line_integral(&gf.lambda, &c, Interpolation::Fourier);
        assert!(
            (circ + hbar / m * lam_int).abs() < 1e-6 * circ.abs().max(1.0),
            "circulation {circ} vs lambda integral {lam_int}"
        );
        // Holonomy phase matches the quantized Stokes flux within 1%.
        let h = holonomy_phase(&gf, &c, Interpolation::Fourier);
        let expect = m * gamma / hbar;
        let phase = h.arg();
        assert!(
            (phase - expect).abs() < 0.01 * expect.abs(),
            "phase {phase} vs {expect}"
        );
        assert!((h.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn helicity_cases() {
        let g = Grid::new(&[24, 24, 24], &[TAU, TAU, TAU]).unwrap();
        // Gradient field: zero helicity.
        let f = ScalarField::from_fn(&g, |p| (p[0]).sin() * (2.0 * p[1]).cos() + (p[2]).sin());
        let grad = gradient(&f);
        assert!(helicity(&grad).abs() < 1e-9);
        // Beltrami field with curl(v) = v: helicity = integral |v|^2.
        let v = VectorField::from_fn(&g, 3, |p| {
            [
                p[2].sin() + p[1].cos(),
                p[0].sin() + p[2].cos(),
                p[1].sin() + p[0].cos(),
            ]
        });
        let c = crate::fields::curl(&v).unwrap();
        let mut diff = c.clone();
        diff.scaled_add(-1.0, &v);
        assert!(diff.max_magnitude() < 1e-10, "not Beltrami");
        let h = helicity(&v);
        let e = v.l2_norm().powi(2);
        assert!((h - e).abs() < 1e-8 * e, "helicity {h} vs {e}");
    }

    #[test]
    fn berry_connection_cases() {
        let g = Grid::new(&[32, 32], &[8.0, 8.0]).unwrap();
        let hbar = 0.8;
        // Real section: zero connection.
        let phi = ComplexField::from_fn(&g, 2, |p, c| {
            let th = 0.7 * ((TAU / 8.0) * p[0]).sin();
            Complex64::new(if c == 0 { (th / 2.0).cos() } else { (th / 2.0).sin() }, 0.0)
        });
        let a = berry_connection(&phi, hbar).unwrap();
        assert!(a.max_magnitude() < 1e-10);
        // Pure phase: A = hbar grad(chi).
        let phi = ComplexField::from_fn(&g, 2, |p, c| {
            let chi = ((TAU / 8.0) * p[0]).sin() + 0.5 * ((TAU / 8.0) * p[1]).cos();
            if c == 0 {
                Complex64::from_polar(1.0, chi)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let a = berry_connection(&phi, hbar).unwrap();
        let chi = ScalarField::from_fn(&g, |p| {
            ((TAU / 8.0) * p[0]).sin() + 0.5 * ((TAU / 8.0) * p[1]).cos()
        });
        let expect = gradient(&chi);
        let mut worst = 0.0f64;
        for c in 0..2 {
            for (x, y) in a.comp(c).iter().zip(expect.comp(c)) {
                worst = worst.max((x - hbar * y).abs());
            }
        }
        assert!(worst < 1e-8, "worst {worst:.3e}");
        // Unnormalized input is rejected.
        let bad = ComplexField::from_fn(&g, 2, |_, _| Complex64::new(1.0, 0.0));
        assert!(berry_connection(&bad, hbar).is_err());
    }

    /// Smooth degree-zero texture: polar angle peaks at theta_max on the ring
    /// r = r0 and decays to zero at the origin and at infinity.
    fn texture_spinor(g: &Grid, theta_max: f64, r0: f64) -> ComplexField {
        ComplexField::from_fn(g, 2, |p, c| {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let theta = theta_max * (r / r0) * ((1.0 - (r / r0).powi(4)) / 4.0).exp();
            if c == 0 {
                Complex64::new((theta / 2.0).cos(), 0.0)
            } else if r < 1e-300 {
                Complex64::new(0.0, 0.0)
            } else {
                // sin(theta/2) e^{i phi} = sin(theta/2) (x + iy)/r, smooth
                // because theta ~ r near the origin.
                Complex64::new(
                    (theta / 2.0).sin() * p[0] / r,
                    (theta / 2.0).sin() * p[1] / r,
                )
            }
        })
    }

    #[test]
    fn mermin_ho_identity() {
        let g = Grid::new(&[128, 128], &[16.0, 16.0]).unwrap();
        let hbar = 1.0;
        let phi = texture_spinor(&g, 2.8, 1.6);
        let a = berry_connection(&phi, hbar).unwrap();
        let curl_a = planar_curl(&a).unwrap();
        let (_, _, bloch) = spin_density_fields(&phi, hbar);
        let t = takabayasi_vector(&bloch).unwrap();
        // curl(A) = (hbar/2) T, z-component in the plane.
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..g.len() {
            let expect = 0.5 * hbar * t.comp(2)[i];
            worst = worst.max((curl_a.values()[i] - expect).abs());
            scale = scale.max(t.comp(2)[i].abs());
        }
        assert!(worst < 1e-4 * scale, "worst {worst:.3e} scale {scale:.3e}");
        // Uniform and single-axis textures carry no Takabayasi vector.
        let uni = VectorField::from_fn(&g, 3, |_| [0.0, 0.6, 0.8]);
        assert!(takabayasi_vector(&uni).unwrap().max_magnitude() < 1e-14);
        let one_axis = VectorField::from_fn(&g, 3, |p| {
            let th = 0.8 * ((TAU / 16.0) * p[0]).sin();
            [th.sin(), 0.0, th.cos()]
        });
        assert!(takabayasi_vector(&one_axis).unwrap().max_magnitude() < 1e-10);
    }

    /// Freely spreading Gaussian packet in closed form.
    fn free_gaussian(g: &Grid, t: f64, sigma: f64, m: f64, hbar: f64) -> ComplexField {
        let c = Complex64::new(1.0, t * hbar / (m * sigma * sigma));
        ComplexField::from_fn(g, 1, |p, _| {
            let pref = Complex64::new(PI.sqrt() * sigma, 0.0) * c;
            (-p[0] * p[0] / (2.0 * sigma * sigma * c)).exp() / pref.sqrt()
        })
    }

    #[test]
    fn residuals_converge_quadratically() {
        let g = Grid::new(&[512], &[40.0]).unwrap();
        let (m, hbar, sigma) = (1.0, 1.0, 1.5);
        let gf = GaugeField::zero(&g);
        let params = PropagatorParams::new(m, hbar, 2e-3, 1.0, gf.clone()).unwrap();
        let t0 = 0.4;
        let run = |dt: f64| -> HydroResiduals {
            let p0 = free_gaussian(&g, t0, sigma, m, hbar);
            let p1 = free_gaussian(&g, t0 + dt, sigma, m, hbar);
            let s0 = to_hydrodynamic(&p0, &gf, None, m, hbar).unwrap();
            let s1 = to_hydrodynamic(&p1, &gf, None, m, hbar).unwrap();
            hydro_residuals(&s0, &s1, dt, &params).unwrap()
        };
        let coarse = run(0.1);
        let fine = run(0.05);
        for (rc, rf) in [
            (coarse.continuity, fine.continuity),
            (coarse.momentum, fine.momentum),
        ] {
            assert!(rc > 0.0 && rf > 0.0);
            let ratio = rc / rf;
            assert!(
                (3.0..5.0).contains(&ratio),
                "expected quadratic decay, got ratio {ratio} ({rc:.3e} -> {rf:.3e})"
            );
        }
    }

    #[test]
    fn stationary_state_has_tiny_residuals() {
        let g = Grid::new(&[128], &[24.0]).unwrap();
        let (m, hbar, omega) = (1.0, 1.0, 1.0);
        let mut psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::new((-m * omega * p[0] * p[0] / (2.0 * hbar)).exp(), 0.0)
        });
        psi.normalize(1.0);
        let v = ScalarField::from_fn(&g, |p| 0.5 * m * omega * omega * p[0] * p[0]);
        let gf = GaugeField::zero(&g);
        let params = PropagatorParams::new(m, hbar, 0.001, 1.0, gf.clone())
            .unwrap()
            .with_potential(v.clone())
            .unwrap();
        let dt = 0.01;
        // The eigenstate only rotates its global phase; the hydro state is
        // identical at both times.
        let s0 = to_hydrodynamic(&psi, &gf, Some(&v), m, hbar).unwrap();
        let mut psi1 = psi.clone();
        psi1.scale(Complex64::from_polar(1.0, -0.5 * hbar * omega * dt / hbar));
        let s1 = to_hydrodynamic(&psi1, &gf, Some(&v), m, hbar).unwrap();
        let r = hydro_residuals(&s0, &s1, dt, &params).unwrap();
        assert!(r.continuity < 1e-6, "continuity {:.3e}", r.continuity);
        assert!(r.momentum < 1e-6, "momentum {:.3e}", r.momentum);
        assert!(r.spin_transport.is_none());
    }

    #[test]
    fn total_energy_cases() {
        // Harmonic ground state: E = hbar omega / 2.
        let g = Grid::new(&[128], &[24.0]).unwrap();
        let (m, hbar, omega) = (1.0, 1.0, 1.0);
        let mut psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::new((-m * omega * p[0] * p[0] / (2.0 * hbar)).exp(), 0.0)
        });
        psi.normalize(1.0);
        let v = ScalarField::from_fn(&g, |p| 0.5 * m * omega * omega * p[0] * p[0]);
        let params = PropagatorParams::new(m, hbar, 0.001, 1.0, GaugeField::zero(&g))
            .unwrap()
            .with_potential(v)
            .unwrap();
        let e = total_energy(&psi, &params).unwrap();
        let expect = 0.5 * hbar * omega;
        assert!((e - expect).abs() < 1e-6 * expect, "E = {e}");

        // Plane wave with constant Lambda: E = (hbar k - hbar lambda)^2 / 2m.
        let g = Grid::new(&[32], &[8.0]).unwrap();
        let k = 3.0 * TAU / 8.0;
        let lam = 1.0 * TAU / 8.0;
        let psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::from_polar(1.0 / 8.0f64.sqrt(), k * p[0])
        });
        let lambda = VectorField::from_fn(&g, 1, |_| [lam, 0.0, 0.0]);
        let params = PropagatorParams::new(m, hbar, 0.001, 1.0, GaugeField::new(lambda)).unwrap();
        let e = total_energy(&psi, &params).unwrap();
        let expect = (hbar * k - hbar * lam).powi(2) / (2.0 * m);
        assert!((e - expect).abs() < 1e-8 * expect, "E = {e} vs {expect}");

        // Gauge covariance: constant Lambda energy equals the Lambda = 0
        // energy of the phase-shifted state.
        let shifted = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::from_polar(1.0 / 8.0f64.sqrt(), (k - lam) * p[0])
        });
        let params0 = PropagatorParams::new(m, hbar, 0.001, 1.0, GaugeField::zero(&g)).unwrap();
        let e0 = total_energy(&shifted, &params0).unwrap();
        assert!((e - e0).abs() < 1e-10 * expect.max(1.0), "E = {e} vs {e0}");
    }
}
