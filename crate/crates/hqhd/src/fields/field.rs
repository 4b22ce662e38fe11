//! Real scalar, real vector, and complex multi-component fields on a [`Grid`].
//!
//! Storage is component-major: each component is a contiguous row-major block,
//! so spectral passes and reductions stream linearly. Vector fields carry
//! either one component per grid axis (spatial vectors) or exactly three
//! components (internal-space vectors such as spin or magnetic fields, which
//! keep three components even on one- and two-axis grids).

use num_complex::Complex64;

use super::grid::Grid;

/// Deterministic pairwise summation; accurate to a few ulps independent of
/// length and free of data races by construction.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 64 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Real scalar field over all grid nodes.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    /// Zero-initialized field.
    pub fn zeros(grid: &Grid) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            data: vec![0.0; grid.len()],
        }
    }

    /// Field from explicit node values in row-major order.
    pub fn from_values(grid: &Grid, data: Vec<f64>) -> ScalarField {
        assert_eq!(data.len(), grid.len(), "value count must match grid size");
        ScalarField {
            grid: grid.clone(),
            data,
        }
    }

    /// Field sampled from a function of position; unused trailing coordinates
    /// are zero.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64; 3]) -> f64 + Sync) -> ScalarField {
        use rayon::prelude::*;
        let mut data = vec![0.0; grid.len()];
        data.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v = f(&grid.position(i));
        });
        ScalarField {
            grid: grid.clone(),
            data,
        }
    }

    /// Grid the field lives on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Node values in row-major order.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Mutable node values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Consumes the field, returning its raw values.
    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    /// Largest value.
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest value.
    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Integral over the box (node sum times cell volume).
    pub fn integral(&self) -> f64 {
        pairwise_sum(&self.data) * self.grid.node_volume()
    }

    /// Mean node value.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    /// L2 norm `sqrt(integral of f^2)`.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.data.iter().map(|v| v * v).collect();
        (pairwise_sum(&sq) * self.grid.node_volume()).sqrt()
    }

    /// In-place `self += a * other`.
    pub fn scaled_add(&mut self, a: f64, other: &ScalarField) {
        assert!(self.grid.same_layout(&other.grid), "grid mismatch");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// In-place multiplication by a constant.
    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    /// True when any node is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

/// Real vector field; `ncomp` is either the axis count (spatial vectors) or 3
/// (internal-space vectors on any grid).
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Grid,
    ncomp: usize,
    data: Vec<f64>,
}

impl VectorField {
    fn check_ncomp(grid: &Grid, ncomp: usize) {
        assert!(
            ncomp == grid.axes() || ncomp == 3,
            "vector fields carry one component per axis or exactly 3, got {ncomp} on {} axes",
            grid.axes()
        );
    }

    /// Zero-initialized vector field with `ncomp` components.
    pub fn zeros(grid: &Grid, ncomp: usize) -> VectorField {
        Self::check_ncomp(grid, ncomp);
        VectorField {
            grid: grid.clone(),
            ncomp,
            data: vec![0.0; ncomp * grid.len()],
        }
    }

    /// Vector field sampled from a function returning up to three components;
    /// entries beyond `ncomp` are ignored.
    pub fn from_fn(
        grid: &Grid,
        ncomp: usize,
        f: impl Fn(&[f64; 3]) -> [f64; 3] + Sync,
    ) -> VectorField {
        use rayon::prelude::*;
        Self::check_ncomp(grid, ncomp);
        let n = grid.len();
        let mut data = vec![0.0; ncomp * n];
        data.par_chunks_mut(n).enumerate().for_each(|(c, slice)| {
            for (i, v) in slice.iter_mut().enumerate() {
                *v = f(&grid.position(i))[c];
            }
        });
        VectorField {
            grid: grid.clone(),
            ncomp,
            data,
        }
    }

    /// Builds a vector field from per-component scalar fields.
    pub fn from_components(comps: Vec<ScalarField>) -> VectorField {
        assert!(!comps.is_empty());
        let grid = comps[0].grid().clone();
        for c in &comps {
            assert!(grid.same_layout(c.grid()), "grid mismatch");
        }
        Self::check_ncomp(&grid, comps.len());
        let ncomp = comps.len();
        let mut data = Vec::with_capacity(ncomp * grid.len());
        for c in comps {
            data.extend_from_slice(c.values());
        }
        VectorField { grid, ncomp, data }
    }

    /// Grid the field lives on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Component count.
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Component `c` as a contiguous slice.
    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Mutable component `c`.
    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// All components flattened, component-major.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Mutable flattened values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Vector value at a flat node index; unused components are zero.
    pub fn at(&self, flat: usize) -> [f64; 3] {
        let n = self.grid.len();
        let mut out = [0.0; 3];
        for c in 0..self.ncomp {
            out[c] = self.data[c * n + flat];
        }
        out
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for c in 0..self.ncomp {
            let comp = self.comp(c);
            for (o, v) in out.iter_mut().zip(comp) {
                *o += v * v;
            }
        }
        for o in &mut out {
            *o = o.sqrt();
        }
        ScalarField::from_values(&self.grid, out)
    }

    /// Pointwise dot product with another field of the same shape.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert!(self.grid.same_layout(&other.grid), "grid mismatch");
        assert_eq!(self.ncomp, other.ncomp, "component mismatch");
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for c in 0..self.ncomp {
            let a = self.comp(c);
            let b = other.comp(c);
            for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
                *o += x * y;
            }
        }
        ScalarField::from_values(&self.grid, out)
    }

    /// L2 norm `sqrt(integral of |v|^2)`.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.data.iter().map(|v| v * v).collect();
        (pairwise_sum(&sq) * self.grid.node_volume()).sqrt()
    }

    /// Largest pointwise magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.magnitude().max()
    }

    /// In-place `self += a * other`.
    pub fn scaled_add(&mut self, a: f64, other: &VectorField) {
        assert!(self.grid.same_layout(&other.grid), "grid mismatch");
        assert_eq!(self.ncomp, other.ncomp, "component mismatch");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// In-place multiplication by a constant.
    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    /// True when any entry is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

/// Complex field with one (scalar wavefunction) or two (spinor) components.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Grid,
    ncomp: usize,
    data: Vec<Complex64>,
}

impl ComplexField {
    fn check_ncomp(ncomp: usize) {
        assert!(
            ncomp == 1 || ncomp == 2,
            "complex fields carry 1 or 2 components, got {ncomp}"
        );
    }

    /// Zero-initialized complex field.
    pub fn zeros(grid: &Grid, ncomp: usize) -> ComplexField {
        Self::check_ncomp(ncomp);
        ComplexField {
            grid: grid.clone(),
            ncomp,
            data: vec![Complex64::ZERO; ncomp * grid.len()],
        }
    }

    /// Complex field sampled from a function of position and component.
    pub fn from_fn(
        grid: &Grid,
        ncomp: usize,
        f: impl Fn(&[f64; 3], usize) -> Complex64 + Sync,
    ) -> ComplexField {
        use rayon::prelude::*;
        Self::check_ncomp(ncomp);
        let n = grid.len();
        let mut field = ComplexField::zeros(grid, ncomp);
        for c in 0..ncomp {
            field.data[c * n..(c + 1) * n]
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, v)| {
                    *v = f(&grid.position(i), c);
                });
        }
        field
    }

    /// Grid the field lives on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Component count (1 or 2).
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Component `c` as a contiguous slice.
    pub fn comp(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Mutable component `c`.
    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// All components flattened, component-major.
    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    /// Mutable flattened values.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Pointwise density `sum_c |psi_c|^2`.
    pub fn density(&self) -> ScalarField {
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for c in 0..self.ncomp {
            let comp = self.comp(c);
            for (o, v) in out.iter_mut().zip(comp) {
                *o += v.norm_sqr();
            }
        }
        ScalarField::from_values(&self.grid, out)
    }

    /// Total norm `integral of sum_c |psi_c|^2`.
    pub fn total_norm(&self) -> f64 {
        self.density().integral()
    }

    /// Rescales so the total norm equals `target`.
    pub fn normalize(&mut self, target: f64) {
        let norm = self.total_norm();
        assert!(norm > 0.0, "cannot normalize a zero field");
        let s = (target / norm).sqrt();
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// In-place `self += a * other` with a real coefficient.
    pub fn scaled_add(&mut self, a: f64, other: &ComplexField) {
        assert!(self.grid.same_layout(&other.grid), "grid mismatch");
        assert_eq!(self.ncomp, other.ncomp, "component mismatch");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// In-place multiplication by a complex constant.
    pub fn scale(&mut self, a: Complex64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    /// L2 distance to another field, `sqrt(integral of |a-b|^2)`.
    pub fn l2_distance(&self, other: &ComplexField) -> f64 {
        assert!(self.grid.same_layout(&other.grid), "grid mismatch");
        assert_eq!(self.ncomp, other.ncomp, "component mismatch");
        let sq: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .collect();
        (pairwise_sum(&sq) * self.grid.node_volume()).sqrt()
    }

    /// L2 norm `sqrt(integral of |psi|^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.total_norm().sqrt()
    }

    /// True when any entry is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Grid {
        Grid::new(&[4, 6], &[2.0, 3.0]).unwrap()
    }

    #[test]
    fn scalar_integral_and_norm() {
        let g = grid2();
        let f = ScalarField::from_fn(&g, |_| 2.0);
        assert!((f.integral() - 2.0 * g.volume()).abs() < 1e-12);
        assert!((f.l2_norm() - (4.0 * g.volume()).sqrt()).abs() < 1e-12);
        assert!((f.mean() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn vector_components_and_dot() {
        let g = grid2();
        let v = VectorField::from_fn(&g, 2, |p| [p[0], p[1], 0.0]);
        assert_eq!(v.ncomp(), 2);
        let d = v.dot(&v);
        let m = v.magnitude();
        for (a, b) in d.values().iter().zip(m.values()) {
            assert!((a - b * b).abs() < 1e-12);
        }
        let v3 = VectorField::zeros(&g, 3);
        assert_eq!(v3.ncomp(), 3);
    }

    #[test]
    #[should_panic]
    fn vector_rejects_bad_ncomp() {
        let g = grid2();
        let _ = VectorField::zeros(&g, 1);
    }

    #[test]
    fn complex_norm_and_normalize() {
        let g = grid2();
        let mut psi = ComplexField::from_fn(&g, 1, |p, _| {
            Complex64::new(p[0].cos(), p[1].sin())
        });
        psi.normalize(1.0);
        assert!((psi.total_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_simple_sum() {
        let vals: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let naive: f64 = vals.iter().sum();
        assert!((pairwise_sum(&vals) - naive).abs() < 1e-9);
    }
}
