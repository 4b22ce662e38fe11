//! Method-of-lines propagation of the Schrödinger equation with holonomy
//! (scalar) and the Pauli equation (spinor): spectral spatial derivatives,
//! classical RK4 in time.
//!
//! Both equations share the minimally coupled kinetic operator built from
//! `C = hbar*Lambda + A`; the spinor adds the Zeeman term `-(hbar/2M) B.sigma`.
//! The Appendix-style reconstruction identity, which re-derives the kinetic
//! operator from hydrodynamic variables, doubles as a runtime self-test.

use num_complex::Complex64;

use crate::fields::{
    derivative_complex, divergence, gradient_complex, laplacian, laplacian_complex, ComplexField,
    Grid, ScalarField, VectorField,
};
use crate::gauge::GaugeField;
use crate::{Error, Result};

/// Wavefunction on a grid: one component (scalar) or two (spinor).
pub type WaveField = ComplexField;

/// Physical constants, external fields, and integrator controls for a run.
#[derive(Clone, Debug)]
pub struct PropagatorParams {
    /// Reduced action quantum.
    pub hbar: f64,
    /// Particle mass (m for scalar runs, M for spinor runs).
    pub mass: f64,
    /// External scalar potential V; `None` means free.
    pub potential: Option<ScalarField>,
    /// Internal gauge potential Lambda and optional external A.
    pub gauge: GaugeField,
    /// Magnetic field B for the Pauli spin term.
    pub magnetic_b: Option<VectorField>,
    /// Time step.
    pub dt: f64,
    /// Total simulated time.
    pub t_end: f64,
    /// Snapshot emission period in steps.
    pub output_stride: usize,
    /// Safety factor C in the stability bound `dt <= C * m / (hbar sum h_a^-2)`.
    pub stability_factor: f64,
}

impl PropagatorParams {
    /// Parameters with no potential, no magnetic field, stride 1, and the
    /// default stability factor 0.5.
    pub fn new(mass: f64, hbar: f64, dt: f64, t_end: f64, gauge: GaugeField) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::parameter("mass", "must be finite and positive"));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::parameter("hbar", "must be finite and positive"));
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::parameter("t_end", "must be finite and positive"));
        }
        let p = PropagatorParams {
            hbar,
            mass,
            potential: None,
            gauge,
            magnetic_b: None,
            dt,
            t_end,
            output_stride: 1,
            stability_factor: 0.5,
        };
        p.validate_dt()?;
        Ok(p)
    }

    /// Grid shared by all fields of the run.
    pub fn grid(&self) -> &Grid {
        self.gauge.lambda.grid()
    }

    /// Largest stable time step `C * m / (hbar * sum_a h_a^-2)`.
    pub fn stability_bound(&self) -> f64 {
        let g = self.grid();
        let mut inv_h2 = 0.0;
        for a in 0..g.axes() {
            inv_h2 += 1.0 / (g.spacing(a) * g.spacing(a));
        }
        self.stability_factor * self.mass / (self.hbar * inv_h2)
    }

    fn validate_dt(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::parameter("dt", "must be finite and positive"));
        }
        let bound = self.stability_bound();
        if self.dt > bound {
            return Err(Error::parameter(
                "dt",
                format!("{} exceeds the stability bound {bound:.6e}", self.dt),
            ));
        }
        Ok(())
    }

    /// Adds an external potential sampled on the run grid.
    pub fn with_potential(mut self, v: ScalarField) -> Result<Self> {
        if !self.grid().same_layout(v.grid()) {
            return Err(Error::Grid("potential grid differs from run grid".into()));
        }
        self.potential = Some(v);
        Ok(self)
    }

    /// Adds the magnetic field for the Pauli spin term. When an external
    /// vector potential is also present, `curl(A)` must reproduce `B`; a
    /// uniform B with no representable periodic A is accepted on its own.
    pub fn with_magnetic_b(mut self, b: VectorField) -> Result<Self> {
        if b.ncomp() != 3 {
            return Err(Error::parameter("magnetic_b", "must have three components"));
        }
        if !self.grid().same_layout(b.grid()) {
            return Err(Error::Grid("magnetic field grid differs from run grid".into()));
        }
        if let Some(a) = &self.gauge.external_a {
            let scale = b.max_magnitude().max(a.max_magnitude()).max(1.0);
            match self.grid().axes() {
                3 => {
                    let mut c = crate::fields::curl(a)?;
                    c.scaled_add(-1.0, &b);
                    if c.max_magnitude() > 1e-8 * scale {
                        return Err(Error::parameter(
                            "magnetic_b",
                            "curl(external_a) does not reproduce magnetic_b",
                        ));
                    }
                }
                2 => {
                    let c = crate::fields::planar_curl(a)?;
                    let mut worst = 0.0f64;
                    for i in 0..self.grid().len() {
                        let bv = b.at(i);
                        worst = worst
                            .max((c.values()[i] - bv[2]).abs())
                            .max(bv[0].abs())
                            .max(bv[1].abs());
                    }
                    if worst > 1e-8 * scale {
                        return Err(Error::parameter(
                            "magnetic_b",
                            "planar curl(external_a) does not reproduce magnetic_b",
                        ));
                    }
                }
                _ => {}
            }
        }
        self.magnetic_b = Some(b);
        Ok(self)
    }

    /// Sets the snapshot emission period.
    pub fn with_output_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::parameter("output_stride", "must be at least 1"));
        }
        self.output_stride = stride;
        Ok(self)
    }

    /// Overrides the stability safety factor and revalidates dt.
    pub fn with_stability_factor(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::parameter(
                "stability_factor",
                "must be finite and positive",
            ));
        }
        self.stability_factor = c;
        self.validate_dt()?;
        Ok(self)
    }

    /// Number of RK4 steps covering `t_end`.
    pub fn step_count(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

/// Precomputed coupling fields shared by every right-hand-side evaluation
/// under a fixed gauge: `C = hbar*Lambda + A`, its divergence, and `|C|^2`.
pub(crate) struct Coupling {
    c: VectorField,
    div_c: ScalarField,
    c_abs2: ScalarField,
}

impl Coupling {
    pub(crate) fn build(gauge: &GaugeField, hbar: f64) -> Coupling {
        let mut c = gauge.lambda.clone();
        c.scale(hbar);
        if let Some(a) = &gauge.external_a {
            c.scaled_add(1.0, a);
        }
        let div_c = divergence(&c);
        let grid = c.grid().clone();
        let mut c_abs2 = ScalarField::zeros(&grid);
        for i in 0..grid.len() {
            let v = c.at(i);
            c_abs2.values_mut()[i] = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        }
        Coupling { c, div_c, c_abs2 }
    }
}

/// `H psi` for the scalar minimally coupled Hamiltonian; shared by both
/// equations (the spinor applies it componentwise).
fn apply_kinetic_and_potential(
    psi: &WaveField,
    p: &PropagatorParams,
    coup: &Coupling,
) -> WaveField {
    let grid = psi.grid();
    let n = grid.len();
    let axes = grid.axes();
    let kin = -p.hbar * p.hbar / (2.0 * p.mass);
    let mut h = laplacian_complex(psi);
    h.scale(Complex64::new(kin, 0.0));
    // Cross term (i hbar/m) C . grad(psi).
    for a in 0..axes {
        let da = derivative_complex(psi, a);
        let ca = coup.c.comp(a);
        for c in 0..psi.ncomp() {
            let dst = h.comp_mut(c);
            let src = da.comp(c);
            for i in 0..n {
                dst[i] += Complex64::new(0.0, p.hbar / p.mass) * ca[i] * src[i];
            }
        }
    }
    // Local terms: (i hbar/2m) div(C) + |C|^2/2m + V.
    for c in 0..psi.ncomp() {
        let dst = h.comp_mut(c);
        let src = psi.comp(c);
        for i in 0..n {
            let mut mult = Complex64::new(
                coup.c_abs2.values()[i] / (2.0 * p.mass),
                p.hbar * coup.div_c.values()[i] / (2.0 * p.mass),
            );
            if let Some(v) = &p.potential {
                mult.re += v.values()[i];
            }
            dst[i] += mult * src[i];
        }
    }
    h
}

pub(crate) fn rhs_with(psi: &WaveField, p: &PropagatorParams, coup: &Coupling) -> WaveField {
    let mut h = apply_kinetic_and_potential(psi, p, coup);
    if psi.ncomp() == 2 {
        if let Some(b) = &p.magnetic_b {
            // Zeeman: -(hbar/2M) B.sigma.
            let zc = -p.hbar / (2.0 * p.mass);
            let n = psi.grid().len();
            let up = psi.comp(0).to_vec();
            let dn = psi.comp(1).to_vec();
            for i in 0..n {
                let bv = b.at(i);
                let bz = Complex64::new(bv[2], 0.0);
                let bm = Complex64::new(bv[0], -bv[1]);
                let bp = Complex64::new(bv[0], bv[1]);
                h.comp_mut(0)[i] += zc * (bz * up[i] + bm * dn[i]);
                h.comp_mut(1)[i] += zc * (bp * up[i] - bz * dn[i]);
            }
        }
    }
    // dpsi/dt = -(i/hbar) H psi.
    h.scale(Complex64::new(0.0, -1.0 / p.hbar));
    h
}

/// Time derivative of a scalar wavefunction under the minimally coupled
/// Schrödinger equation.
pub fn rhs_schrodinger(psi: &WaveField, p: &PropagatorParams) -> Result<WaveField> {
    if psi.ncomp() != 1 {
        return Err(Error::Dimensionality(
            "rhs_schrodinger expects a one-component field".into(),
        ));
    }
    check_grids(psi, p)?;
    let coup = Coupling::build(&p.gauge, p.hbar);
    Ok(rhs_with(psi, p, &coup))
}

/// Time derivative of a spinor wavefunction under the Pauli equation.
pub fn rhs_pauli(psi: &WaveField, p: &PropagatorParams) -> Result<WaveField> {
    if psi.ncomp() != 2 {
        return Err(Error::Dimensionality(
            "rhs_pauli expects a two-component spinor".into(),
        ));
    }
    check_grids(psi, p)?;
    let coup = Coupling::build(&p.gauge, p.hbar);
    Ok(rhs_with(psi, p, &coup))
}

/// Dispatches on the component count.
pub fn rhs(psi: &WaveField, p: &PropagatorParams) -> Result<WaveField> {
    match psi.ncomp() {
        1 => rhs_schrodinger(psi, p),
        2 => rhs_pauli(psi, p),
        _ => Err(Error::Dimensionality("wavefields have 1 or 2 components".into())),
    }
}

fn check_grids(psi: &WaveField, p: &PropagatorParams) -> Result<()> {
    if !psi.grid().same_layout(p.grid()) {
        return Err(Error::Grid("psi grid differs from parameter grid".into()));
    }
    Ok(())
}

pub(crate) fn step_with(
    psi: &WaveField,
    p: &PropagatorParams,
    coup: &Coupling,
) -> Result<WaveField> {
    let dt = p.dt;
    let k1 = rhs_with(psi, p, coup);
    let mut y = psi.clone();
    y.scaled_add(0.5 * dt, &k1);
    let k2 = rhs_with(&y, p, coup);
    let mut y = psi.clone();
    y.scaled_add(0.5 * dt, &k2);
    let k3 = rhs_with(&y, p, coup);
    let mut y = psi.clone();
    y.scaled_add(dt, &k3);
    let k4 = rhs_with(&y, p, coup);
    let mut out = psi.clone();
    out.scaled_add(dt / 6.0, &k1);
    out.scaled_add(dt / 3.0, &k2);
    out.scaled_add(dt / 3.0, &k3);
    out.scaled_add(dt / 6.0, &k4);
    if out.has_non_finite() {
        return Err(Error::Numerical(
            "non-finite wavefunction after RK4 step".into(),
        ));
    }
    Ok(out)
}

/// One RK4 step of size `p.dt`.
pub fn step(psi: &WaveField, p: &PropagatorParams) -> Result<WaveField> {
    check_grids(psi, p)?;
    rhs(psi, p)?; // validates component count
    let coup = Coupling::build(&p.gauge, p.hbar);
    step_with(psi, p, &coup)
}

/// Propagates to `t_end`, emitting `(step_index, time, state)` at step 0,
/// every `output_stride` steps, and at the final step. Returns the terminal
/// state.
pub fn run<F>(psi0: &WaveField, p: &PropagatorParams, mut on_output: F) -> Result<WaveField>
where
    F: FnMut(usize, f64, &WaveField) -> Result<()>,
{
    check_grids(psi0, p)?;
    rhs(psi0, p)?;
    let n_steps = p.step_count();
    on_output(0, 0.0, psi0)?;
    let coup = Coupling::build(&p.gauge, p.hbar);
    let mut psi = psi0.clone();
    for i in 1..=n_steps {
        psi = step_with(&psi, p, &coup)?;
        if i % p.output_stride == 0 || i == n_steps {
            on_output(i, i as f64 * p.dt, &psi)?;
        }
    }
    Ok(psi)
}

/// Relative L2 residual of the kinetic reconstruction identity: the operator
/// assembled from hydrodynamic variables,
/// `[-(i hbar/m)(grad R / R . nubar) - (i hbar/2m) div(nubar) + |nubar|^2/2m
/// + V_Q] psi`, against the direct form
/// `-(hbar^2/2m) lap(psi) + (i hbar^2/m) Lambda . grad(psi)
/// + (hbar^2/2m)|Lambda|^2 psi`. Concerns the internal gauge potential only;
/// any external A in `gf` is ignored.
pub fn appendix_a_identity(
    psi: &WaveField,
    gf: &GaugeField,
    m: f64,
    hbar: f64,
) -> Result<f64> {
    if psi.ncomp() != 1 {
        return Err(Error::Dimensionality(
            "the reconstruction identity concerns scalar wavefunctions".into(),
        ));
    }
    let grid = psi.grid();
    if !grid.same_layout(gf.lambda.grid()) {
        return Err(Error::Grid("gauge grid differs from psi grid".into()));
    }
    let n = grid.len();
    let axes = grid.axes();
    let density = psi.density();
    let mask = crate::madelung::node_mask(&density);
    if mask.iter().any(|&b| b) {
        return Err(Error::Proximity(
            "wavefunction has density nodes inside the evaluation region".into(),
        ));
    }

    // Hydrodynamic ingredients: R, nubar (Lambda only), V_Q.
    let mut root = ScalarField::zeros(grid);
    for (r, d) in root.values_mut().iter_mut().zip(density.values()) {
        *r = d.sqrt();
    }
    let grads = gradient_complex(psi);
    let mut nubar = VectorField::zeros(grid, axes);
    for a in 0..axes {
        let ga = &grads[a];
        let lam = gf.lambda.comp(a);
        let dst = nubar.comp_mut(a);
        for i in 0..n {
            let im = (psi.comp(0)[i].conj() * ga.comp(0)[i]).im;
            dst[i] = hbar * im / density.values()[i] - hbar * lam[i];
        }
    }
    let grad_root = crate::fields::gradient(&root);
    let div_nu = divergence(&nubar);
    let lap_root = laplacian(&root);

    let mut lhs = vec![Complex64::ZERO; n];
    for i in 0..n {
        let mut grr_nu = 0.0;
        let mut nu2 = 0.0;
        for a in 0..axes {
            grr_nu += grad_root.comp(a)[i] / root.values()[i] * nubar.comp(a)[i];
            nu2 += nubar.comp(a)[i] * nubar.comp(a)[i];
        }
        let vq = -hbar * hbar / (2.0 * m) * lap_root.values()[i] / root.values()[i];
        let mult = Complex64::new(
            nu2 / (2.0 * m) + vq,
            -hbar / m * grr_nu - hbar / (2.0 * m) * div_nu.values()[i],
        );
        lhs[i] = mult * psi.comp(0)[i];
    }

    let mut rhs_field = laplacian_complex(psi);
    rhs_field.scale(Complex64::new(-hbar * hbar / (2.0 * m), 0.0));
    for a in 0..axes {
        let da = derivative_complex(psi, a);
        let lam = gf.lambda.comp(a);
        let dst = rhs_field.comp_mut(0);
        for i in 0..n {
            dst[i] += Complex64::new(0.0, hbar * hbar / m) * lam[i] * da.comp(0)[i];
        }
    }
    {
        let dst = rhs_field.comp_mut(0);
        for i in 0..n {
            let mut lam2 = 0.0;
            for a in 0..axes {
                lam2 += gf.lambda.comp(a)[i] * gf.lambda.comp(a)[i];
            }
            dst[i] += Complex64::new(hbar * hbar / (2.0 * m) * lam2, 0.0) * psi.comp(0)[i];
        }
    }

    let mut diff2 = 0.0;
    let mut l2 = 0.0;
    let mut r2 = 0.0;
    for i in 0..n {
        let r = rhs_field.comp(0)[i];
        diff2 += (lhs[i] - r).norm_sqr();
        l2 += lhs[i].norm_sqr();
        r2 += r.norm_sqr();
    }
    let denom = l2.max(r2).sqrt();
    Ok(if denom > 0.0 { diff2.sqrt() / denom } else { 0.0 })
}
