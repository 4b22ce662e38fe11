//! Uniform periodic Cartesian grids with one to three axes.

use crate::{Error, Result};

/// Uniform periodic grid on a box centered at the origin.
///
/// Axis `a` holds `dims[a]` nodes at `x_i = -extents[a]/2 + i * spacing(a)`;
/// the node at `x = +extents[a]/2` is identified with the first one. Flat
/// storage is row-major (C order) with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    extents: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    /// Builds a grid after validating axis count (1 to 3), dimensions (even,
    /// at least 4) and extents (finite, strictly positive).
    pub fn new(dims: &[usize], extents: &[f64]) -> Result<Grid> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Grid(format!(
                "expected 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.len() != extents.len() {
            return Err(Error::Grid(format!(
                "{} dims but {} extents",
                dims.len(),
                extents.len()
            )));
        }
        for (a, &n) in dims.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Grid(format!(
                    "axis {a} has {n} nodes; each axis needs an even count of at least 4"
                )));
            }
        }
        for (a, &ext) in extents.iter().enumerate() {
            if !ext.is_finite() || ext <= 0.0 {
                return Err(Error::Grid(format!(
                    "axis {a} extent {ext} must be finite and positive"
                )));
            }
        }
        let mut len: usize = 1;
        for &n in dims {
            len = len.checked_mul(n).ok_or_else(|| {
                Error::Grid("grid size overflows the address space".into())
            })?;
        }
        let mut strides = vec![0usize; dims.len()];
        let mut acc = 1usize;
        for a in (0..dims.len()).rev() {
            strides[a] = acc;
            acc *= dims[a];
        }
        Ok(Grid {
            dims: dims.to_vec(),
            extents: extents.to_vec(),
            strides,
            len,
        })
    }

    /// Number of axes (1 to 3).
    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    /// Node counts per axis.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Box side lengths per axis.
    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    /// True when the grid has no nodes; never true for a validated grid.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Row-major strides per axis.
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Node spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.dims[axis] as f64
    }

    /// Smallest node spacing across axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.axes())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest box extent across axes.
    pub fn min_extent(&self) -> f64 {
        self.extents.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Coordinate of the first node along `axis` (the box is centered at 0).
    pub fn origin(&self, axis: usize) -> f64 {
        -0.5 * self.extents[axis]
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin(axis) + i as f64 * self.spacing(axis)
    }

    /// Volume (length/area/volume) of one grid cell.
    pub fn node_volume(&self) -> f64 {
        (0..self.axes()).map(|a| self.spacing(a)).product()
    }

    /// Total box volume.
    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Flat index of a multi-index (one entry per axis).
    pub fn ravel(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.axes());
        idx.iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    /// Multi-index of a flat index; unused trailing entries are zero.
    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = flat;
        for a in 0..self.axes() {
            out[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
        out
    }

    /// Physical position of a node; unused trailing entries are zero.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut out = [0.0f64; 3];
        for a in 0..self.axes() {
            out[a] = self.coord(a, idx[a]);
        }
        out
    }

    /// Signed integer mode number of DFT bin `j` along `axis`, in
    /// `[-n/2, n/2)`; the Nyquist bin maps to `-n/2`.
    pub fn mode(&self, axis: usize, j: usize) -> i64 {
        let n = self.dims[axis];
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Angular wavenumber `2*pi*mode/extent` of DFT bin `j` along `axis`.
    pub fn wavenumber(&self, axis: usize, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.mode(axis, j) as f64 / self.extents[axis]
    }

    /// True when DFT bin `j` along `axis` is the unpaired Nyquist mode.
    pub fn is_nyquist(&self, axis: usize, j: usize) -> bool {
        j == self.dims[axis] / 2
    }

    /// Wavenumber used for first derivatives: the Nyquist bin is zeroed so
    /// real fields stay real under differentiation.
    pub fn wavenumber_deriv(&self, axis: usize, j: usize) -> f64 {
        if self.is_nyquist(axis, j) {
            0.0
        } else {
            self.wavenumber(axis, j)
        }
    }

    /// Wraps a displacement along `axis` into `[-extent/2, extent/2)`.
    pub fn min_image(&self, delta: f64, axis: usize) -> f64 {
        let ext = self.extents[axis];
        let mut d = delta - ext * (delta / ext).round();
        if d >= 0.5 * ext {
            d -= ext;
        } else if d < -0.5 * ext {
            d += ext;
        }
        d
    }

    /// Wraps an absolute coordinate along `axis` into `[origin, origin+extent)`.
    pub fn wrap_coord(&self, x: f64, axis: usize) -> f64 {
        let ext = self.extents[axis];
        let o = self.origin(axis);
        let mut y = (x - o).rem_euclid(ext) + o;
        if y >= o + ext {
            y = o;
        }
        y
    }

    /// Checks another grid for identical layout, for operator compatibility.
    pub fn same_layout(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.extents == other.extents
    }
}
