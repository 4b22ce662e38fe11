//! Closed vortex filaments: geometry, resampling, CSV exchange, and coupled
//! dynamics with the wavefunction through the gauge potential.
//!
//! A filament is a closed oriented space curve sampled at `n` nodes, node `i`
//! sitting at the uniform parameter `sigma_i = 2*pi*i/n`. The curve carries a
//! circulation strength and an optional local-induction coefficient `kappa`
//! that adds a tangential drift used by regularized dynamics.

use rayon::prelude::*;

use crate::fields::{interpolate, FourierEvaluator, Interpolation, VectorField};
use crate::gauge::{biot_savart_lambda, GaugeField};
use crate::madelung::NODE_THRESHOLD;
use crate::propagator::{rhs, PropagatorParams, WaveField};
use crate::{Error, Result};

/// Minimum number of filament nodes.
pub const MIN_FILAMENT_NODES: usize = 16;
/// Allowed chord-length band around the mean (lower factor).
const SPACING_MIN_FACTOR: f64 = 0.25;
/// Allowed chord-length band around the mean (upper factor).
const SPACING_MAX_FACTOR: f64 = 4.0;

/// Closed oriented vortex filament with uniform-parameter nodes.
#[derive(Clone, Debug)]
pub struct FilamentCurve {
    nodes: Vec<[f64; 3]>,
    strength: f64,
    kappa: f64,
}

impl FilamentCurve {
    /// Builds a filament after validating node count, finiteness, and chord
    /// spacing (every chord within [0.25, 4] times the mean).
    pub fn new(nodes: Vec<[f64; 3]>, strength: f64, kappa: f64) -> Result<FilamentCurve> {
        if nodes.len() < MIN_FILAMENT_NODES {
            return Err(Error::Topology(format!(
                "a filament needs at least {MIN_FILAMENT_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        for (i, p) in nodes.iter().enumerate() {
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::Topology(format!("filament node {i} is not finite")));
            }
        }
        if !strength.is_finite() {
            return Err(Error::parameter("strength", "must be finite"));
        }
        if !kappa.is_finite() {
            return Err(Error::parameter("kappa", "must be finite"));
        }
        let fil = FilamentCurve {
            nodes,
            strength,
            kappa,
        };
        fil.check_spacing()?;
        Ok(fil)
    }

    fn check_spacing(&self) -> Result<()> {
        let chords = self.chord_lengths();
        let mean = chords.iter().sum::<f64>() / chords.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::Topology("filament has zero length".into()));
        }
        for (i, &c) in chords.iter().enumerate() {
            if c < SPACING_MIN_FACTOR * mean || c > SPACING_MAX_FACTOR * mean {
                return Err(Error::Topology(format!(
                    "chord {i} has length {c:.6e}, outside [{}, {}] times the mean {mean:.6e}",
                    SPACING_MIN_FACTOR, SPACING_MAX_FACTOR
                )));
            }
        }
        Ok(())
    }

    /// Node positions in traversal order.
    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    /// Circulation strength.
    pub fn strength(&self) -> f64 {
        self.strength
    }

    /// Local-induction coefficient.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false for a validated filament.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Replaces the node set, revalidating the geometry.
    pub fn with_nodes(&self, nodes: Vec<[f64; 3]>) -> Result<FilamentCurve> {
        FilamentCurve::new(nodes, self.strength, self.kappa)
    }

    fn chord_lengths(&self) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| dist(&self.nodes[i], &self.nodes[(i + 1) % n]))
            .collect()
    }

    /// Total polygonal length.
    pub fn total_length(&self) -> f64 {
        self.chord_lengths().iter().sum()
    }

    /// Tangent vectors `dR/dsigma` by centered differences,
    /// `(R_{i+1} - R_{i-1}) / (2 * dsigma)`; their sum telescopes to zero.
    pub fn tangents(&self) -> Vec<[f64; 3]> {
        let n = self.nodes.len();
        let dsigma = 2.0 * std::f64::consts::PI / n as f64;
        (0..n)
            .map(|i| {
                let next = &self.nodes[(i + 1) % n];
                let prev = &self.nodes[(i + n - 1) % n];
                [
                    (next[0] - prev[0]) / (2.0 * dsigma),
                    (next[1] - prev[1]) / (2.0 * dsigma),
                    (next[2] - prev[2]) / (2.0 * dsigma),
                ]
            })
            .collect()
    }

    /// Segment midpoints and difference vectors `(mid_j, dR_j)` for
    /// Biot-Savart quadrature.
    pub fn segments(&self) -> Vec<([f64; 3], [f64; 3])> {
        let n = self.nodes.len();
        (0..n)
            .map(|j| {
                let a = &self.nodes[j];
                let b = &self.nodes[(j + 1) % n];
                (
                    [
                        0.5 * (a[0] + b[0]),
                        0.5 * (a[1] + b[1]),
                        0.5 * (a[2] + b[2]),
                    ],
                    [b[0] - a[0], b[1] - a[1], b[2] - a[2]],
                )
            })
            .collect()
    }

    /// Evaluates the periodic cubic interpolant of the node sequence at
    /// parameter `sigma` (radians along one traversal).
    pub fn eval(&self, sigma: f64) -> [f64; 3] {
        let n = self.nodes.len();
        let dsigma = 2.0 * std::f64::consts::PI / n as f64;
        let u = (sigma / dsigma).rem_euclid(n as f64);
        let base = u.floor();
        let t = u - base;
        let b = base as i64;
        let w = crate::fields::cubic_weights(t);
        let mut out = [0.0f64; 3];
        for (s, o) in (-1i64..=2).enumerate() {
            let idx = (b + o).rem_euclid(n as i64) as usize;
            for c in 0..3 {
                out[c] += w[s] * self.nodes[idx][c];
            }
        }
        out
    }

    /// Smallest distance between non-neighboring nodes; used to detect
    /// imminent self-intersection.
    pub fn min_self_distance(&self) -> f64 {
        let n = self.nodes.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue; // closing neighbors
                }
                best = best.min(dist(&self.nodes[i], &self.nodes[j]));
            }
        }
        best
    }

    /// Resamples to nodes equally spaced in arc length at approximately
    /// `target_spacing`, choosing `round(length / target_spacing)` nodes (at
    /// least [`MIN_FILAMENT_NODES`]).
    ///
    /// A curve whose non-adjacent nodes approach within `target_spacing`
    /// is rejected: distinct passes could no longer be told apart at the
    /// sampling scale.
    pub fn resample(&self, target_spacing: f64) -> Result<FilamentCurve> {
        if !(target_spacing > 0.0) || !target_spacing.is_finite() {
            return Err(Error::parameter(
                "target_spacing",
                "must be finite and positive",
            ));
        }
        let clearance = self.min_self_distance();
        if clearance < target_spacing {
            return Err(Error::Geometry(format!(
                "curve approaches itself within {clearance:.6e}, \
                 below the target spacing {target_spacing:.6e}"
            )));
        }
        let n = (self.total_length() / target_spacing).round() as usize;
        self.resample_to_count(n.max(MIN_FILAMENT_NODES))
    }

    /// Resamples to exactly `n` nodes equally spaced in arc length.
    ///
    /// A dense traversal of the cubic interpolant (32 subdivisions per
    /// segment) builds the arc-length table, which is then inverted at the
    /// uniform targets.
    fn resample_to_count(&self, n: usize) -> Result<FilamentCurve> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let dense = 32 * self.nodes.len();
        let pts: Vec<[f64; 3]> = (0..=dense)
            .map(|k| self.eval(two_pi * k as f64 / dense as f64))
            .collect();
        let mut cum = Vec::with_capacity(dense + 1);
        cum.push(0.0);
        for k in 0..dense {
            cum.push(cum[k] + dist(&pts[k], &pts[k + 1]));
        }
        let total = *cum.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::Topology("cannot resample a zero-length curve".into()));
        }
        let mut nodes = Vec::with_capacity(n);
        let mut k = 0usize;
        for i in 0..n {
            let target = total * i as f64 / n as f64;
            while k + 1 < cum.len() - 1 && cum[k + 1] < target {
                k += 1;
            }
            let seg = cum[k + 1] - cum[k];
            let f = if seg > 0.0 { (target - cum[k]) / seg } else { 0.0 };
            let sigma = two_pi * (k as f64 + f) / dense as f64;
            nodes.push(self.eval(sigma));
        }
        FilamentCurve::new(nodes, self.strength, self.kappa)
    }

    /// Parses a filament from CSV rows of `x,y,z` node coordinates (the curve
    /// closes implicitly); a non-numeric first row is treated as a header.
    pub fn from_csv(text: &str, strength: f64, kappa: f64) -> Result<FilamentCurve> {
        let mut nodes = Vec::new();
        let mut offset = 0u64;
        for (lineno, line) in text.lines().enumerate() {
            let line_len = line.len() as u64 + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                offset += line_len;
                continue;
            }
            let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if cells.len() != 3 {
                return Err(Error::Format {
                    offset,
                    message: format!(
                        "line {}: expected 3 comma-separated values, got {}",
                        lineno + 1,
                        cells.len()
                    ),
                });
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                cells.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(xyz) => {
                    if !xyz.iter().all(|v| v.is_finite()) {
                        return Err(Error::Format {
                            offset,
                            message: format!("line {}: non-finite coordinate", lineno + 1),
                        });
                    }
                    nodes.push([xyz[0], xyz[1], xyz[2]]);
                }
                Err(_) if lineno == 0 && nodes.is_empty() => {
                    // Header row.
                }
                Err(e) => {
                    return Err(Error::Format {
                        offset,
                        message: format!("line {}: {e}", lineno + 1),
                    });
                }
            }
            offset += line_len;
        }
        FilamentCurve::new(nodes, strength, kappa)
    }

    /// Serializes the nodes as CSV rows of `x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z\n");
        for p in &self.nodes {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], p[2]));
        }
        out
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Builds a circular filament of `n` nodes perpendicular to `normal_axis`.
pub fn circle_filament(
    center: [f64; 3],
    radius: f64,
    normal_axis: usize,
    n: usize,
    strength: f64,
    kappa: f64,
) -> Result<FilamentCurve> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::parameter("radius", "must be finite and positive"));
    }
    let (u, v) = match normal_axis {
        0 => (1, 2),
        1 => (2, 0),
        2 => (0, 1),
        _ => return Err(Error::parameter("normal_axis", "must be 0, 1, or 2")),
    };
    let nodes = (0..n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let mut p = center;
            p[u] += radius * th.cos();
            p[v] += radius * th.sin();
            p
        })
        .collect();
    FilamentCurve::new(nodes, strength, kappa)
}

/// Distance from `p` to the segment `a`-`b`.
fn point_segment_dist(p: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dist(p, &q)
}

/// Symmetric Hausdorff distance between two closed curves, measured from
/// dense (16x) resamplings of each to the closed polyline through the other's
/// dense samples.
pub fn hausdorff_distance(a: &FilamentCurve, b: &FilamentCurve) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let densify = |c: &FilamentCurve| -> Vec<[f64; 3]> {
        let m = 16 * c.len();
        (0..m).map(|k| c.eval(two_pi * k as f64 / m as f64)).collect()
    };
    let pa = densify(a);
    let pb = densify(b);
    let one_sided = |xs: &[[f64; 3]], ys: &[[f64; 3]]| -> f64 {
        xs.par_iter()
            .map(|x| {
                (0..ys.len())
                    .map(|j| point_segment_dist(x, &ys[j], &ys[(j + 1) % ys.len()]))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    one_sided(&pa, &pb).max(one_sided(&pb, &pa))
}

/// Current density `J_a = sum_c Im(psi_c* d_a psi_c)` as a grid field.
fn current_density(psi: &WaveField) -> VectorField {
    let grid = psi.grid();
    let grads = crate::fields::gradient_complex(psi);
    let mut j = VectorField::zeros(grid, grid.axes());
    for a in 0..grid.axes() {
        let dst = j.comp_mut(a);
        for (i, slot) in dst.iter_mut().enumerate() {
            let mut im = 0.0;
            for c in 0..psi.ncomp() {
                im += (psi.comp(c)[i].conj() * grads[a].comp(c)[i]).im;
            }
            *slot = im;
        }
    }
    j
}

/// Shared node-velocity kernel: `v_i = W(R_i) + kappa dR/dsigma|_i` with the
/// advection field `W = hbar J - D (hbar Lambda [+ A])` assembled on the grid
/// and evaluated off-grid through its trigonometric interpolant.
///
/// The smooth (spectral) off-grid evaluation keeps the coupled integrator at
/// its design order; the density guard instead uses the local cubic scheme,
/// since the trigonometric interpolant of a localized density rings globally.
fn wave_node_velocities(
    psi: &WaveField,
    gf: &GaugeField,
    fil: &FilamentCurve,
    hbar: f64,
    include_external: bool,
) -> Result<Vec<[f64; 3]>> {
    let grid = psi.grid();
    if grid.axes() != 3 {
        return Err(Error::Dimensionality(
            "filament velocities need a three-axis grid".into(),
        ));
    }
    if !grid.same_layout(gf.lambda.grid()) {
        return Err(Error::Grid(
            "wavefunction and gauge field live on different grids".into(),
        ));
    }
    let d = psi.density();
    let dmax = d.values().iter().fold(0.0f64, |m, &v| m.max(v));
    let cutoff = NODE_THRESHOLD * dmax;
    let j = current_density(psi);
    let mut w = VectorField::zeros(grid, 3);
    for a in 0..3 {
        let lam = gf.lambda.comp(a);
        let ext = if include_external {
            gf.external_a.as_ref().map(|f| f.comp(a))
        } else {
            None
        };
        let jc = j.comp(a);
        let dv = d.values();
        let dst = w.comp_mut(a);
        for i in 0..dst.len() {
            let mut shift = hbar * lam[i];
            if let Some(e) = ext {
                shift += e[i];
            }
            dst[i] = hbar * jc[i] - dv[i] * shift;
        }
    }
    let w_eval = FourierEvaluator::vector(&w);
    let tans = fil.tangents();
    let kappa = fil.kappa();
    fil.nodes()
        .par_iter()
        .enumerate()
        .map(|(i, node)| {
            let dn = interpolate(&d, node, Interpolation::Tricubic);
            if dn < cutoff {
                return Err(Error::Proximity(format!(
                    "filament node {i} sits in a density trough \
                     ({dn:.3e} below the cutoff {cutoff:.3e})"
                )));
            }
            let wn = w_eval.eval(node);
            let t = &tans[i];
            Ok([
                wn[0] + kappa * t[0],
                wn[1] + kappa * t[1],
                wn[2] + kappa * t[2],
            ])
        })
        .collect()
}

/// Node velocities for a scalar wavefunction:
/// `dR/dt = hbar (Im(psi* grad psi) - |psi|^2 Lambda)|_R + kappa dR/dsigma`.
///
/// The current and density are interpolated tricubically at the nodes;
/// `params` supplies `hbar` while the gauge field is passed separately
/// because coupled stepping rebuilds it at every stage.
pub fn filament_velocity_schrodinger(
    psi: &WaveField,
    gf: &GaugeField,
    fil: &FilamentCurve,
    params: &PropagatorParams,
) -> Result<Vec<[f64; 3]>> {
    if psi.ncomp() != 1 {
        return Err(Error::Dimensionality(
            "filament_velocity_schrodinger expects a one-component wavefunction".into(),
        ));
    }
    wave_node_velocities(psi, gf, fil, params.hbar, false)
}

/// Node velocities for a spinor wavefunction:
/// `dR/dt = hbar (Im(Psi^dag grad Psi) - |Psi|^2 (Lambda + A/hbar))|_R
/// + kappa dR/dsigma`.
pub fn filament_velocity_pauli(
    psi: &WaveField,
    gf: &GaugeField,
    fil: &FilamentCurve,
    params: &PropagatorParams,
) -> Result<Vec<[f64; 3]>> {
    if psi.ncomp() != 2 {
        return Err(Error::Dimensionality(
            "filament_velocity_pauli expects a two-component wavefunction".into(),
        ));
    }
    wave_node_velocities(psi, gf, fil, params.hbar, true)
}

/// Node velocities for a nuclear-trajectory source:
/// `dR/dt = M D0(R - q) qdot + kappa dR/dsigma` with the normalized Gaussian
/// profile `D0(x) = (2 pi sigma^2)^(-3/2) exp(-|x|^2 / (2 sigma^2))`.
pub fn filament_velocity_bo(
    q: [f64; 3],
    qdot: [f64; 3],
    d0_sigma: f64,
    mass: f64,
    fil: &FilamentCurve,
) -> Result<Vec<[f64; 3]>> {
    if !(d0_sigma > 0.0) || !d0_sigma.is_finite() {
        return Err(Error::parameter("d0_sigma", "must be finite and positive"));
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::parameter("mass", "must be finite and positive"));
    }
    if !q.iter().chain(qdot.iter()).all(|x| x.is_finite()) {
        return Err(Error::parameter("q/qdot", "must be finite"));
    }
    let two_sigma2 = 2.0 * d0_sigma * d0_sigma;
    let norm = (std::f64::consts::PI * two_sigma2).powf(-1.5);
    let tans = fil.tangents();
    let kappa = fil.kappa();
    Ok(fil
        .nodes()
        .iter()
        .zip(&tans)
        .map(|(r, t)| {
            let dx = [r[0] - q[0], r[1] - q[1], r[2] - q[2]];
            let r2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2];
            let w = mass * norm * (-r2 / two_sigma2).exp();
            [
                w * qdot[0] + kappa * t[0],
                w * qdot[1] + kappa * t[1],
                w * qdot[2] + kappa * t[2],
            ]
        })
        .collect())
}

/// Joint state of a wavefunction and the filament sourcing its gauge
/// potential.
///
/// The invariant maintained by the constructor and by [`step_coupled`] is
/// that `params.gauge.lambda` is the Biot-Savart potential of `filament` at
/// regularization width `reg` (any external vector potential is preserved).
#[derive(Clone, Debug)]
pub struct CoupledSystem {
    /// Scalar or spinor wavefunction.
    pub psi: WaveField,
    /// Vortex filament sourcing the gauge potential.
    pub filament: FilamentCurve,
    /// Propagator controls; `params.gauge` tracks the filament.
    pub params: PropagatorParams,
    /// Biot-Savart regularization width, also the self-intersection scale.
    pub reg: f64,
}

impl CoupledSystem {
    /// Assembles a coupled state, rebuilding the gauge potential from the
    /// filament.
    pub fn new(
        psi: WaveField,
        filament: FilamentCurve,
        params: PropagatorParams,
        reg: f64,
    ) -> Result<CoupledSystem> {
        if psi.ncomp() > 2 {
            return Err(Error::Dimensionality(
                "coupled dynamics expects one or two wavefunction components".into(),
            ));
        }
        if !psi.grid().same_layout(params.grid()) {
            return Err(Error::Grid(
                "wavefunction and parameters live on different grids".into(),
            ));
        }
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::parameter("reg", "must be finite and positive"));
        }
        let mut sys = CoupledSystem {
            psi,
            filament,
            params,
            reg,
        };
        sys.check_clearance(&sys.filament)?;
        sys.params = sys.rebuilt_params(&sys.filament)?;
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

    /// Parameter block with the gauge potential regenerated from `fil`.
    fn rebuilt_params(&self, fil: &FilamentCurve) -> Result<PropagatorParams> {
        let mut gf = biot_savart_lambda(
            fil,
            self.params.grid(),
            self.params.mass,
            self.params.hbar,
            self.reg,
        )?;
        gf.external_a = self.params.gauge.external_a.clone();
        let mut params = self.params.clone();
        params.gauge = gf;
        Ok(params)
    }

    /// Time derivatives of both state halves under a given stage state.
    fn stage_rates(
        &self,
        psi: &WaveField,
        fil: &FilamentCurve,
        params: &PropagatorParams,
    ) -> Result<(WaveField, Vec<[f64; 3]>)> {
        let dpsi = rhs(psi, params)?;
        let v = match psi.ncomp() {
            1 => filament_velocity_schrodinger(psi, &params.gauge, fil, params)?,
            _ => filament_velocity_pauli(psi, &params.gauge, fil, params)?,
        };
        Ok((dpsi, v))
    }

    /// Intermediate stage state displaced by `h` along the given rates, with
    /// the gauge potential rebuilt for the displaced filament.
    fn stage_state(
        &self,
        h: f64,
        k: &WaveField,
        v: &[[f64; 3]],
    ) -> Result<(WaveField, FilamentCurve, PropagatorParams)> {
        let mut psi = self.psi.clone();
        psi.scaled_add(h, k);
        let fil = self.filament.with_nodes(nodes_add_scaled(
            self.filament.nodes(),
            h,
            v,
        )?)?;
        let params = self.rebuilt_params(&fil)?;
        Ok((psi, fil, params))
    }
}

pub(crate) fn nodes_add_scaled(
    base: &[[f64; 3]],
    scale: f64,
    v: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(base.len());
    for (b, w) in base.iter().zip(v) {
        let p = [
            b[0] + scale * w[0],
            b[1] + scale * w[1],
            b[2] + scale * w[2],
        ];
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical(
                "filament node update is not finite".into(),
            ));
        }
        out.push(p);
    }
    Ok(out)
}

/// Advances the joint wavefunction-plus-filament state by one RK4 step of
/// size `dt`, recomputing the gauge potential from the filament at every
/// stage.
pub fn step_coupled(sys: &CoupledSystem, dt: f64) -> Result<CoupledSystem> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::parameter("dt", "must be finite and positive"));
    }
    let bound = sys.params.stability_bound();
    if dt > bound {
        return Err(Error::parameter(
            "dt",
            format!("{dt:.6e} exceeds the stability bound {bound:.6e}"),
        ));
    }
    sys.check_clearance(&sys.filament)?;

    let (k1, v1) = sys.stage_rates(&sys.psi, &sys.filament, &sys.params)?;
    let (p2, f2, pr2) = sys.stage_state(0.5 * dt, &k1, &v1)?;
    let (k2, v2) = sys.stage_rates(&p2, &f2, &pr2)?;
    let (p3, f3, pr3) = sys.stage_state(0.5 * dt, &k2, &v2)?;
    let (k3, v3) = sys.stage_rates(&p3, &f3, &pr3)?;
    let (p4, f4, pr4) = sys.stage_state(dt, &k3, &v3)?;
    let (k4, v4) = sys.stage_rates(&p4, &f4, &pr4)?;

    let mut psi = sys.psi.clone();
    psi.scaled_add(dt / 6.0, &k1);
    psi.scaled_add(dt / 3.0, &k2);
    psi.scaled_add(dt / 3.0, &k3);
    psi.scaled_add(dt / 6.0, &k4);
    if psi.has_non_finite() {
        return Err(Error::Numerical(
            "wavefunction became non-finite during a coupled step".into(),
        ));
    }
    let mut vsum = vec![[0.0f64; 3]; sys.filament.len()];
    for (i, slot) in vsum.iter_mut().enumerate() {
        for c in 0..3 {
            slot[c] =
                (v1[i][c] + 2.0 * v2[i][c] + 2.0 * v3[i][c] + v4[i][c]) / 6.0;
        }
    }
    let filament = sys
        .filament
        .with_nodes(nodes_add_scaled(sys.filament.nodes(), dt, &vsum)?)?;
    sys.check_clearance(&filament)?;
    let params = sys.rebuilt_params(&filament)?;
    Ok(CoupledSystem {
        psi,
        filament,
        params,
        reg: sys.reg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{interpolate_vector, ComplexField, Grid};
    use crate::madelung::to_hydrodynamic;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn test_grid(n: usize, l: f64) -> Grid {
        Grid::new(&[n, n, n], &[l, l, l]).unwrap()
    }

    fn constant_wave(grid: &Grid, vals: &[Complex64]) -> ComplexField {
        let mut psi = ComplexField::zeros(grid, vals.len());
        for (c, &v) in vals.iter().enumerate() {
            psi.comp_mut(c).fill(v);
        }
        psi
    }

    fn free_params(grid: &Grid, mass: f64, hbar: f64, dt: f64) -> PropagatorParams {
        PropagatorParams::new(mass, hbar, dt, 1.0, GaugeField::zero(grid)).unwrap()
    }

    #[test]
    fn rejects_bad_curves() {
        assert!(FilamentCurve::new(vec![[0.0; 3]; 8], 1.0, 0.0).is_err());
        let mut nodes: Vec<[f64; 3]> = (0..32)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / 32.0;
                [th.cos(), th.sin(), 0.0]
            })
            .collect();
        assert!(FilamentCurve::new(nodes.clone(), 1.0, 0.0).is_ok());
        // Collapse two nodes to break the spacing band.
        nodes[5] = nodes[4];
        assert!(FilamentCurve::new(nodes, 1.0, 0.0).is_err());
    }

    #[test]
    fn tangents_sum_to_zero_and_match_circle() {
        let fil = circle_filament([0.0; 3], 2.0, 2, 64, 1.0, 0.0).unwrap();
        let tans = fil.tangents();
        let mut sum = [0.0f64; 3];
        for t in &tans {
            for c in 0..3 {
                sum[c] += t[c];
            }
        }
        assert!(sum.iter().all(|s| s.abs() < 1e-12));
        // dR/dsigma for a circle of radius r has magnitude r (second-order
        // centered differences underestimate by sin(ds)/ds).
        let ds = 2.0 * PI / 64.0;
        let expect = 2.0 * (ds).sin() / ds;
        for t in &tans {
            let mag = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
            assert!((mag - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_convergence_is_second_order() {
        // Ellipse tangents: compare centered differences against the analytic
        // derivative and check the order of accuracy under refinement.
        let tangent_err = |n: usize| -> f64 {
            let nodes: Vec<[f64; 3]> = (0..n)
                .map(|i| {
                    let th = 2.0 * PI * i as f64 / n as f64;
                    [2.0 * th.cos(), th.sin(), 0.3 * (2.0 * th).sin()]
                })
                .collect();
            let fil = FilamentCurve::new(nodes, 1.0, 0.0).unwrap();
            let tans = fil.tangents();
            let mut worst = 0.0f64;
            for (i, t) in tans.iter().enumerate() {
                let th = 2.0 * PI * i as f64 / n as f64;
                let exact = [-2.0 * th.sin(), th.cos(), 0.6 * (2.0 * th).cos()];
                for c in 0..3 {
                    worst = worst.max((t[c] - exact[c]).abs());
                }
            }
            worst
        };
        let e1 = tangent_err(64);
        let e2 = tangent_err(128);
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "tangent order {order} (errors {e1:.3e}, {e2:.3e})");
    }

    #[test]
    fn resample_circle_accuracy() {
        // Slightly uneven (but smooth and periodic) starting parametrization.
        let n = 100;
        let nodes: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let s = 2.0 * PI * i as f64 / n as f64;
                let th = s + 0.002 * (3.0 * s).sin();
                [th.cos(), th.sin(), 0.0]
            })
            .collect();
        let fil = FilamentCurve::new(nodes, 1.0, 0.0).unwrap();
        let res = fil.resample(fil.total_length() / 128.0).unwrap();
        assert_eq!(res.len(), 128);
        for p in res.nodes() {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-6, "radius error {}", (r - 1.0).abs());
        }
        // Arc-length spacing is uniform after resampling.
        let chords = res.chord_lengths();
        let mean: f64 = chords.iter().sum::<f64>() / chords.len() as f64;
        for (i, c) in chords.iter().enumerate() {
            assert!(
                (c - mean).abs() < 1e-6 * mean,
                "chord {i}: {c:.12e} vs mean {mean:.12e}, rel {:.3e}",
                (c - mean).abs() / mean
            );
        }
    }

    #[test]
    fn resample_uniform_input_is_idempotent() {
        let fil = circle_filament([0.2, -0.1, 0.4], 1.5, 1, 64, 1.0, 0.0).unwrap();
        let res = fil.resample(fil.total_length() / 64.0).unwrap();
        assert_eq!(res.len(), 64);
        for (a, b) in fil.nodes().iter().zip(res.nodes()) {
            assert!(dist(a, b) < 1e-10);
        }
    }

    #[test]
    fn resample_ellipse_spacing_uniformity() {
        let n = 100;
        let nodes: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                [2.0 * th.cos(), th.sin(), 0.0]
            })
            .collect();
        let fil = FilamentCurve::new(nodes, 1.0, 0.0).unwrap();
        let res = fil.resample(fil.total_length() / 128.0).unwrap();
        let chords = res.chord_lengths();
        let mean: f64 = chords.iter().sum::<f64>() / chords.len() as f64;
        let var: f64 = chords.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
            / chords.len() as f64;
        let cv = var.sqrt() / mean;
        assert!(cv < 1e-3, "chord coefficient of variation {cv:.3e}");
    }

    /// Stadium curve (two straight sides plus semicircular caps) sampled
    /// uniformly in arc length; the slab gap `2 * radius` is the closest
    /// approach between the sides.
    fn stadium_nodes(half_len: f64, radius: f64, n: usize) -> Vec<[f64; 3]> {
        let total = 4.0 * half_len + 2.0 * PI * radius;
        (0..n)
            .map(|i| {
                let mut s = total * i as f64 / n as f64;
                if s < 2.0 * half_len {
                    return [-half_len + s, -radius, 0.0];
                }
                s -= 2.0 * half_len;
                if s < PI * radius {
                    let a = s / radius;
                    return [half_len + radius * a.sin(), -radius * a.cos(), 0.0];
                }
                s -= PI * radius;
                if s < 2.0 * half_len {
                    return [half_len - s, radius, 0.0];
                }
                s -= 2.0 * half_len;
                let a = s / radius;
                [-half_len - radius * a.sin(), radius * a.cos(), 0.0]
            })
            .collect()
    }

    #[test]
    fn resample_rejects_self_touching() {
        let fil = FilamentCurve::new(stadium_nodes(1.0, 0.025, 96), 1.0, 0.0).unwrap();
        let gap = fil.min_self_distance();
        assert!(gap > 0.049 && gap < 0.056, "slab gap {gap}");
        match fil.resample(0.06) {
            Err(Error::Geometry(_)) => {}
            other => panic!("expected a geometry error, got {other:?}"),
        }
        assert!(fil.resample(0.035).is_ok());
    }

    #[test]
    fn csv_roundtrip() {
        let fil = circle_filament([0.0; 3], 1.0, 2, 32, 2.0, 0.5).unwrap();
        let csv = fil.to_csv();
        let back = FilamentCurve::from_csv(&csv, 2.0, 0.5).unwrap();
        assert_eq!(back.len(), 32);
        for (a, b) in fil.nodes().iter().zip(back.nodes()) {
            assert!(dist(a, b) < 1e-12);
        }
        assert!(FilamentCurve::from_csv("x,y\n1,2\n", 1.0, 0.0).is_err());
        assert!(FilamentCurve::from_csv("1,2,nan\n", 1.0, 0.0).is_err());
    }

    #[test]
    fn hausdorff_of_shifted_circles() {
        let a = circle_filament([0.0; 3], 1.0, 2, 64, 1.0, 0.0).unwrap();
        let b = circle_filament([0.0, 0.0, 0.25], 1.0, 2, 64, 1.0, 0.0).unwrap();
        let d = hausdorff_distance(&a, &b);
        assert!((d - 0.25).abs() < 1e-3, "hausdorff {d}");
        assert!(hausdorff_distance(&a, &a) < 1e-12);
    }

    #[test]
    fn min_self_distance_of_circle() {
        let fil = circle_filament([0.0; 3], 1.0, 2, 32, 1.0, 0.0).unwrap();
        // Non-adjacent nodes are at least two chords apart on a circle.
        let chord = 2.0 * (PI / 32.0).sin();
        let expect = 2.0 * (2.0 * PI / 32.0).sin();
        let d = fil.min_self_distance();
        assert!(d > chord);
        assert!((d - expect).abs() < 1e-12);
    }

    #[test]
    fn velocity_schrodinger_zero_current_and_slide() {
        let grid = test_grid(16, 8.0);
        let psi = constant_wave(&grid, &[Complex64::new(0.35, 0.0)]);
        let gf = GaugeField::zero(&grid);
        let params = free_params(&grid, 1.0, 1.0, 0.02);
        let fil = circle_filament([0.0; 3], 1.5, 2, 32, 1.0, 0.0).unwrap();
        let v = filament_velocity_schrodinger(&psi, &gf, &fil, &params).unwrap();
        for w in &v {
            assert!(w.iter().all(|x| x.abs() < 1e-13));
        }
        // A nonzero kappa turns the velocity into a pure tangential slide.
        let fil = circle_filament([0.0; 3], 1.5, 2, 32, 1.0, 0.7).unwrap();
        let v = filament_velocity_schrodinger(&psi, &gf, &fil, &params).unwrap();
        for (w, t) in v.iter().zip(fil.tangents()) {
            for c in 0..3 {
                assert!((w[c] - 0.7 * t[c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn velocity_schrodinger_plane_wave_translates_rigidly() {
        let grid = test_grid(16, 8.0);
        let hbar = 1.3;
        let k = 2.0 * (2.0 * PI / 8.0);
        let mut psi = ComplexField::zeros(&grid, 1);
        for (i, v) in psi.comp_mut(0).iter_mut().enumerate() {
            *v = Complex64::from_polar(1.0, k * grid.position(i)[0]);
        }
        let gf = GaugeField::zero(&grid);
        let params = free_params(&grid, 1.0, hbar, 0.01);
        let fil = circle_filament([0.0; 3], 1.2, 0, 24, 1.0, 0.0).unwrap();
        let v = filament_velocity_schrodinger(&psi, &gf, &fil, &params).unwrap();
        // hbar * Im(psi* d_x psi) = hbar * k for a unit-amplitude plane wave.
        let expect = hbar * k;
        for w in &v {
            assert!((w[0] - expect).abs() < 1e-10, "vx {} vs {expect}", w[0]);
            assert!(w[1].abs() < 1e-10 && w[2].abs() < 1e-10);
        }
    }

    #[test]
    fn velocity_aborts_near_wave_nodes() {
        let grid = test_grid(32, 16.0);
        let mut psi = ComplexField::zeros(&grid, 1);
        let two_sigma2 = 2.0 * 0.8 * 0.8;
        for (i, v) in psi.comp_mut(0).iter_mut().enumerate() {
            let p = grid.position(i);
            let r2 = (p[0] + 4.0) * (p[0] + 4.0) + p[1] * p[1] + p[2] * p[2];
            *v = Complex64::new((-r2 / two_sigma2).exp(), 0.0);
        }
        let gf = GaugeField::zero(&grid);
        let params = free_params(&grid, 1.0, 1.0, 0.02);
        // The circle sits many widths away from the density bump.
        let fil = circle_filament([4.5, 0.0, 0.0], 0.8, 2, 32, 1.0, 0.0).unwrap();
        match filament_velocity_schrodinger(&psi, &gf, &fil, &params) {
            Err(Error::Proximity(_)) => {}
            other => panic!("expected a proximity error, got {other:?}"),
        }
    }

    #[test]
    fn velocity_pauli_embeds_scalar_and_shifts_by_a() {
        let grid = test_grid(16, 8.0);
        let k = 2.0 * PI / 8.0;
        let mut scalar = ComplexField::zeros(&grid, 1);
        for (i, v) in scalar.comp_mut(0).iter_mut().enumerate() {
            let p = grid.position(i);
            *v = Complex64::from_polar(0.8 + 0.3 * (k * p[0]).cos(), k * p[1]);
        }
        let mut spinor = ComplexField::zeros(&grid, 2);
        spinor.comp_mut(0).copy_from_slice(scalar.comp(0));
        let mut lam = VectorField::zeros(&grid, 3);
        for (i, v) in lam.comp_mut(0).iter_mut().enumerate() {
            *v = 0.4 * (k * grid.position(i)[1]).sin();
        }
        let gf = GaugeField::new(lam);
        let params = free_params(&grid, 1.0, 1.1, 0.01);
        let fil = circle_filament([0.0; 3], 1.4, 2, 32, 1.0, 0.2).unwrap();
        let va = filament_velocity_schrodinger(&scalar, &gf, &fil, &params).unwrap();
        let vb = filament_velocity_pauli(&spinor, &gf, &fil, &params).unwrap();
        for (a, b) in va.iter().zip(&vb) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-14);
            }
        }

        // A uniform spinor in a constant external potential drifts at
        // -|Psi|^2 A per node.
        let spinor = constant_wave(
            &grid,
            &[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.3)],
        );
        let d = 0.6 * 0.6 + 0.3 * 0.3;
        let a_const = [0.4, -0.2, 0.1];
        let mut a = VectorField::zeros(&grid, 3);
        for c in 0..3 {
            a.comp_mut(c).fill(a_const[c]);
        }
        let mut gf = GaugeField::zero(&grid);
        gf.external_a = Some(a);
        let fil = circle_filament([0.0; 3], 1.4, 2, 32, 1.0, 0.0).unwrap();
        let v = filament_velocity_pauli(&spinor, &gf, &fil, &params).unwrap();
        for w in &v {
            for c in 0..3 {
                assert!((w[c] + d * a_const[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn velocity_pauli_matches_hydrodynamic_current() {
        let grid = test_grid(16, 8.0);
        let k = 2.0 * PI / 8.0;
        let (mass, hbar) = (1.4, 0.9);
        let mut spinor = ComplexField::zeros(&grid, 2);
        for i in 0..grid.len() {
            let p = grid.position(i);
            spinor.comp_mut(0)[i] =
                Complex64::from_polar(0.9 + 0.2 * (k * p[0]).cos(), k * p[1]);
            spinor.comp_mut(1)[i] =
                Complex64::from_polar(0.4 + 0.1 * (k * p[1]).sin(), 0.3 - k * p[2]);
        }
        let a_const = [0.3, -0.5, 0.2];
        let mut a = VectorField::zeros(&grid, 3);
        for c in 0..3 {
            a.comp_mut(c).fill(a_const[c]);
        }
        let mut lam = VectorField::zeros(&grid, 3);
        for (i, v) in lam.comp_mut(0).iter_mut().enumerate() {
            *v = 0.3 * (k * grid.position(i)[1]).sin();
        }
        let mut gf = GaugeField::new(lam);
        gf.external_a = Some(a);
        let params = PropagatorParams::new(mass, hbar, 0.01, 1.0, gf.clone()).unwrap();
        let fil = circle_filament([0.0; 3], 1.3, 2, 24, 1.0, 0.0).unwrap();
        let v_fil = filament_velocity_pauli(&spinor, &gf, &fil, &params).unwrap();

        // The same bracket through the hydrodynamic route: mass * D * v.
        let hydro = to_hydrodynamic(&spinor, &gf, None, mass, hbar).unwrap();
        let mut mdv = VectorField::zeros(&grid, 3);
        for c in 0..3 {
            for (i, slot) in mdv.comp_mut(c).iter_mut().enumerate() {
                *slot = mass * hydro.density.values()[i] * hydro.velocity.comp(c)[i];
            }
        }
        for (node, w) in fil.nodes().iter().zip(&v_fil) {
            let m_dv = interpolate_vector(&mdv, node, Interpolation::Fourier);
            for c in 0..3 {
                assert!(
                    (w[c] - m_dv[c]).abs() < 1e-6,
                    "component {c}: {} vs {}",
                    w[c],
                    m_dv[c]
                );
            }
        }
    }

    #[test]
    fn velocity_bo_profile() {
        let fil = circle_filament([0.0; 3], 1.0, 2, 32, 1.0, 0.4).unwrap();
        let tans = fil.tangents();
        let (mass, sigma) = (2.0, 0.5);
        let qdot = [0.3, 0.2, -0.1];

        // A source many widths away leaves only the slide.
        let v = filament_velocity_bo([10.0, 0.0, 0.0], qdot, sigma, mass, &fil).unwrap();
        for (w, t) in v.iter().zip(&tans) {
            for c in 0..3 {
                assert!((w[c] - 0.4 * t[c]).abs() < 1e-10);
            }
        }

        // A resting source contributes nothing anywhere.
        let v = filament_velocity_bo([0.2, 0.0, 0.0], [0.0; 3], sigma, mass, &fil).unwrap();
        for (w, t) in v.iter().zip(&tans) {
            for c in 0..3 {
                assert!((w[c] - 0.4 * t[c]).abs() < 1e-14);
            }
        }

        // A source sitting on a node drags it with the full profile height.
        let q = fil.nodes()[0];
        let v = filament_velocity_bo(q, qdot, sigma, mass, &fil).unwrap();
        let d0 = (2.0 * PI * sigma * sigma).powf(-1.5);
        for c in 0..3 {
            let expect = mass * d0 * qdot[c] + 0.4 * tans[0][c];
            assert!((v[0][c] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_zero_current_state_is_static() {
        let grid = test_grid(16, 8.0);
        let psi = constant_wave(&grid, &[Complex64::new(0.25, 0.0)]);
        let params = free_params(&grid, 1.0, 1.0, 0.04);
        let fil = circle_filament([0.0; 3], 1.2, 2, 32, 0.0, 0.0).unwrap();
        let mut sys = CoupledSystem::new(psi.clone(), fil.clone(), params, 0.3).unwrap();
        for _ in 0..25 {
            sys = step_coupled(&sys, 0.04).unwrap();
        }
        assert!(sys.psi.l2_distance(&psi) < 1e-8);
        for (a, b) in sys.filament.nodes().iter().zip(fil.nodes()) {
            assert!(dist(a, b) < 1e-8);
        }
    }

    #[test]
    fn coupled_kappa_slide_preserves_point_set() {
        let grid = test_grid(12, 8.0);
        let psi = constant_wave(&grid, &[Complex64::new(0.2, 0.0)]);
        let kappa = 0.5;
        let period = 2.0 * PI / kappa;
        let steps = 100;
        let dt = period / steps as f64;
        let params =
            PropagatorParams::new(2.0, 1.0, dt, period, GaugeField::zero(&grid)).unwrap();
        let fil = circle_filament([0.0; 3], 1.0, 2, 128, 0.0, kappa).unwrap();
        let mut sys = CoupledSystem::new(psi, fil.clone(), params, 0.08).unwrap();
        for _ in 0..steps {
            sys = step_coupled(&sys, dt).unwrap();
        }
        let d = hausdorff_distance(&sys.filament, &fil);
        assert!(d < 1e-5, "hausdorff over one slide period {d:.3e}");
        // The parameterization itself moved: nodes do not coincide.
        assert!(dist(&sys.filament.nodes()[0], &fil.nodes()[0]) > 1e-3);
    }

    #[test]
    fn coupled_step_is_fourth_order() {
        let grid = test_grid(16, 8.0);
        let k = 2.0 * PI / 8.0;
        let mut psi = ComplexField::zeros(&grid, 1);
        for (i, v) in psi.comp_mut(0).iter_mut().enumerate() {
            let p = grid.position(i);
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            *v = Complex64::from_polar(0.7 + 0.4 * (-r2 / 2.88).exp(), k * p[0]);
        }
        let fil = circle_filament([0.0; 3], 1.5, 2, 32, 0.4, 0.3).unwrap();
        let run = |dt: f64, steps: usize| -> CoupledSystem {
            let params =
                PropagatorParams::new(1.0, 1.0, dt, 0.08, GaugeField::zero(&grid)).unwrap();
            let mut sys = CoupledSystem::new(psi.clone(), fil.clone(), params, 0.5).unwrap();
            for _ in 0..steps {
                sys = step_coupled(&sys, dt).unwrap();
            }
            sys
        };
        let joint_dist = |a: &CoupledSystem, b: &CoupledSystem| -> f64 {
            let mut node = 0.0f64;
            for (p, q) in a.filament.nodes().iter().zip(b.filament.nodes()) {
                node = node.max(dist(p, q));
            }
            a.psi.l2_distance(&b.psi) + node
        };
        let s1 = run(0.02, 4);
        let s2 = run(0.01, 8);
        let s3 = run(0.005, 16);
        let e1 = joint_dist(&s1, &s2);
        let e2 = joint_dist(&s2, &s3);
        let ratio = e1 / e2;
        assert!(
            (12.0..20.0).contains(&ratio),
            "dt-halving ratio {ratio:.2} (errors {e1:.3e}, {e2:.3e})"
        );
    }

    #[test]
    fn coupled_guards() {
        let grid = test_grid(16, 8.0);
        let psi = constant_wave(&grid, &[Complex64::new(0.2, 0.0)]);
        let params = free_params(&grid, 1.0, 1.0, 0.02);
        let fil = circle_filament([0.0; 3], 1.2, 2, 32, 0.1, 0.0).unwrap();
        // A regularization width above the node clearance is rejected.
        match CoupledSystem::new(psi.clone(), fil.clone(), params.clone(), 1.0) {
            Err(Error::Geometry(_)) => {}
            other => panic!("expected a geometry error, got {other:?}"),
        }
        let sys = CoupledSystem::new(psi, fil, params, 0.3).unwrap();
        match step_coupled(&sys, 1.0) {
            Err(Error::Parameter { .. }) => {}
            other => panic!("expected a parameter error, got {other:?}"),
        }
    }
}
