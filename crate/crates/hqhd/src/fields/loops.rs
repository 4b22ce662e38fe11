//! Closed oriented loops and circulation integrals.

use num_complex::Complex64;

use crate::{Error, Result};

use super::field::pairwise_sum;
use super::interp::{interpolate_vector, Interpolation};
use super::field::VectorField;
use super::spectral::plan;

/// Closed oriented polyline sampled at uniformly spaced parameter values.
///
/// The `i`-th point sits at parameter `s_i = i / n` of one full traversal;
/// the curve closes from the last point back to the first.
#[derive(Clone, Debug)]
pub struct Loop {
    points: Vec<[f64; 3]>,
}

impl Loop {
    /// Builds a loop from at least eight finite points.
    pub fn new(points: Vec<[f64; 3]>) -> Result<Loop> {
        if points.len() < 8 {
            return Err(Error::Topology(format!(
                "a loop needs at least 8 points, got {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::Topology(format!("loop point {i} is not finite")));
            }
        }
        Ok(Loop { points })
    }

    /// Loop points in traversal order.
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Number of sample points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed loop.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tangent vectors `dR/ds` at each sample, computed by differentiating the
    /// trigonometric interpolant of the point sequence; their sum is zero
    /// because the curve is closed.
    pub fn tangents(&self) -> Vec<[f64; 3]> {
        let n = self.points.len();
        let fwd = plan(n, true);
        let inv = plan(n, false);
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut out = vec![[0.0f64; 3]; n];
        let mut scratch = vec![
            Complex64::ZERO;
            fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())
        ];
        for c in 0..3 {
            let mut buf: Vec<Complex64> = self
                .points
                .iter()
                .map(|p| Complex64::new(p[c], 0.0))
                .collect();
            fwd.process_with_scratch(&mut buf, &mut scratch);
            for (j, v) in buf.iter_mut().enumerate() {
                let m = if 2 * j < n {
                    j as i64
                } else if 2 * j == n {
                    0 // unpaired Nyquist mode carries no odd derivative
                } else {
                    j as i64 - n as i64
                };
                *v *= Complex64::new(0.0, two_pi * m as f64);
            }
            inv.process_with_scratch(&mut buf, &mut scratch);
            let scale = 1.0 / n as f64;
            for (o, v) in out.iter_mut().zip(&buf) {
                o[c] = v.re * scale;
            }
        }
        out
    }
}

/// Builds a planar circle of `n` points perpendicular to `normal_axis`,
/// oriented counterclockwise when viewed from the positive axis side.
pub fn circle_loop(center: [f64; 3], radius: f64, normal_axis: usize, n: usize) -> Loop {
    assert!(normal_axis < 3, "normal axis must be 0, 1 or 2");
    assert!(radius > 0.0 && radius.is_finite());
    let (u, v) = match normal_axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let points = (0..n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let mut p = center;
            p[u] += radius * th.cos();
            p[v] += radius * th.sin();
            p
        })
        .collect();
    Loop::new(points).expect("circle loops always satisfy the point-count bound")
}

/// Circulation of a vector field around a closed loop.
///
/// Uses the trapezoid rule in the uniform loop parameter with spectral
/// tangents: `(1/n) * sum_i v(p_i) . (dR/ds)(s_i)`, which converges
/// spectrally for smooth fields and loops.
pub fn line_integral(v: &VectorField, lp: &Loop, mode: Interpolation) -> f64 {
    let tangents = lp.tangents();
    let terms: Vec<f64> = match mode {
        Interpolation::Tricubic => lp
            .points()
            .iter()
            .zip(&tangents)
            .map(|(p, t)| {
                let val = interpolate_vector(v, p, Interpolation::Tricubic);
                val[0] * t[0] + val[1] * t[1] + val[2] * t[2]
            })
            .collect(),
        Interpolation::Fourier => {
            let ev = super::interp::FourierEvaluator::vector(v);
            lp.points()
                .iter()
                .zip(&tangents)
                .map(|(p, t)| {
                    let val = ev.eval(p);
                    val[0] * t[0] + val[1] * t[1] + val[2] * t[2]
                })
                .collect()
        }
    };
    pairwise_sum(&terms) / lp.len() as f64
}
