//! Discretized functional data, basis systems, and quadrature projections.
//!
//! Curves live on a common strictly increasing grid in `[0, 1]`. A
//! [`BasisMatrix`] holds `k` basis functions evaluated on that grid together
//! with trapezoid quadrature weights, so that projecting a curve onto the
//! basis is a single weighted matrix product.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Ordered evaluation points `t_1 < … < t_G` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        for w in points.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput(format!(
                    "grid points must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if points[0] < 0.0 || *points.last().unwrap() > 1.0 || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("grid points must lie in [0, 1]".into()));
        }
        Ok(Grid { points })
    }

    /// `size` equispaced points spanning `[0, 1]`.
    pub fn equispaced(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidDimension("equispaced grid needs size >= 2".into()));
        }
        let h = 1.0 / (size - 1) as f64;
        Grid::new((0..size).map(|i| (i as f64 * h).min(1.0)).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least two points
    }

    /// Trapezoid quadrature weights; they sum to the grid span.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let g = self.points.len();
        let mut w = vec![0.0; g];
        for i in 0..g - 1 {
            let h = 0.5 * (self.points[i + 1] - self.points[i]);
            w[i] += h;
            w[i + 1] += h;
        }
        w
    }

    /// `∫ f` by the trapezoid rule for `f` given on this grid.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::IncompatibleGrid(format!(
                "integrand has {} values for a {}-point grid",
                values.len(),
                self.len()
            )));
        }
        Ok(self
            .trapezoid_weights()
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum())
    }
}

/// `n` curves sampled on a shared grid; row `i` holds `X_i(t_1..t_G)`.
#[derive(Debug, Clone)]
pub struct CurveSet {
    pub grid: Grid,
    pub values: DMatrix<f64>,
}

impl CurveSet {
    pub fn new(grid: Grid, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::IncompatibleGrid(format!(
                "curves have {} columns but the grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("curve values must be finite".into()));
        }
        Ok(CurveSet { grid, values })
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }
}

/// Curves paired with binary responses.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub curves: CurveSet,
    pub responses: Vec<u8>,
}

impl LabeledSample {
    pub fn new(curves: CurveSet, responses: Vec<u8>) -> Result<Self> {
        if responses.len() != curves.n_curves() {
            return Err(Error::InvalidDimension(format!(
                "{} responses for {} curves",
                responses.len(),
                curves.n_curves()
            )));
        }
        if responses.iter().any(|&y| y > 1) {
            return Err(Error::InvalidInput("responses must be 0 or 1".into()));
        }
        Ok(LabeledSample { curves, responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// Basis family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisFamily {
    /// B-splines of the given order (cubic = 4) with equally spaced knots.
    BSpline { order: usize },
    /// Half-range cosine system: `1, √2 cos(πt), √2 cos(2πt), …`,
    /// orthonormal on `[0, 1]`.
    Fourier,
}

/// `k` basis functions evaluated on a grid, plus quadrature weights.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub grid: Grid,
    pub k: usize,
    pub family: BasisFamily,
    /// `k × G` matrix of `B_j(t_g)`.
    pub evals: DMatrix<f64>,
    pub quad_weights: Vec<f64>,
}

impl BasisMatrix {
    /// Quadrature Gram matrix `⟨B_i, B_j⟩` (`k × k`).
    pub fn gram(&self) -> DMatrix<f64> {
        let mut weighted = self.evals.clone();
        for (g, w) in self.quad_weights.iter().enumerate() {
            weighted.column_mut(g).scale_mut(*w);
        }
        &weighted * self.evals.transpose()
    }

    /// Builds this basis family on another grid with the same `k`.
    pub fn rebuild_on(&self, grid: &Grid) -> Result<BasisMatrix> {
        match self.family {
            BasisFamily::BSpline { order } => bspline_design(grid, self.k, order),
            BasisFamily::Fourier => fourier_design(grid, self.k),
        }
    }
}

/// Builds a basis of the given family on the grid.
pub fn design(grid: &Grid, k: usize, family: BasisFamily) -> Result<BasisMatrix> {
    match family {
        BasisFamily::BSpline { order } => bspline_design(grid, k, order),
        BasisFamily::Fourier => fourier_design(grid, k),
    }
}

/// `k` B-splines of the given order on `[0, 1]`, with `k - order` equally
/// spaced interior knots and boundary knots of multiplicity `order`,
/// evaluated by the Cox–de Boor recursion.
pub fn bspline_design(grid: &Grid, k: usize, order: usize) -> Result<BasisMatrix> {
    if order < 2 {
        return Err(Error::InvalidDimension(format!("spline order must be >= 2, got {order}")));
    }
    if k < order {
        return Err(Error::InvalidDimension(format!(
            "basis dimension k = {k} must be at least the spline order {order}"
        )));
    }
    let n_interior = k - order;
    // knot vector: `order` copies of 0, interior knots, `order` copies of 1
    let mut knots = Vec::with_capacity(k + order);
    knots.extend(std::iter::repeat(0.0).take(order));
    for i in 1..=n_interior {
        knots.push(i as f64 / (n_interior + 1) as f64);
    }
    knots.extend(std::iter::repeat(1.0).take(order));

    let g = grid.len();
    let mut evals = DMatrix::zeros(k, g);
    let n_spans = knots.len() - 1;
    for (gi, &t) in grid.points().iter().enumerate() {
        // order-1 indicators; the right boundary point belongs to the last
        // nonempty span so that the final spline reaches 1 at t = 1
        let mut b = vec![0.0; n_spans];
        let span = if t >= 1.0 {
            order + n_interior - 1
        } else {
            // knots[span] <= t < knots[span + 1]
            let mut s = order - 1;
            while s + 1 < n_spans && t >= knots[s + 1] {
                s += 1;
            }
            s
        };
        b[span] = 1.0;
        for m in 2..=order {
            for j in 0..=n_spans - m {
                let d1 = knots[j + m - 1] - knots[j];
                let d2 = knots[j + m] - knots[j + 1];
                let left = if d1 > 0.0 { (t - knots[j]) / d1 * b[j] } else { 0.0 };
                let right = if d2 > 0.0 { (knots[j + m] - t) / d2 * b[j + 1] } else { 0.0 };
                b[j] = left + right;
            }
        }
        for j in 0..k {
            evals[(j, gi)] = b[j];
        }
    }

    debug_assert!((0..g).all(|gi| ((0..k).map(|j| evals[(j, gi)]).sum::<f64>() - 1.0).abs() < 1e-10));

    Ok(BasisMatrix {
        grid: grid.clone(),
        k,
        family: BasisFamily::BSpline { order },
        evals,
        quad_weights: grid.trapezoid_weights(),
    })
}

/// Half-range cosine basis: row 1 is the constant 1, row `j` is
/// `√2 cos((j-1)πt)`.
pub fn fourier_design(grid: &Grid, k: usize) -> Result<BasisMatrix> {
    if k < 1 {
        return Err(Error::InvalidDimension("fourier basis needs k >= 1".into()));
    }
    let g = grid.len();
    let sqrt2 = 2f64.sqrt();
    let mut evals = DMatrix::zeros(k, g);
    for (gi, &t) in grid.points().iter().enumerate() {
        evals[(0, gi)] = 1.0;
        for j in 1..k {
            evals[(j, gi)] = sqrt2 * (j as f64 * std::f64::consts::PI * t).cos();
        }
    }
    Ok(BasisMatrix {
        grid: grid.clone(),
        k,
        family: BasisFamily::Fourier,
        evals,
        quad_weights: grid.trapezoid_weights(),
    })
}

/// Projected scores `x_ij = ⟨X_i, B_j⟩` by trapezoid quadrature (`n × k`).
pub fn project(curves: &CurveSet, basis: &BasisMatrix) -> Result<DMatrix<f64>> {
    if curves.grid != basis.grid {
        return Err(Error::IncompatibleGrid(
            "curves and basis are sampled on different grids".into(),
        ));
    }
    let mut weighted = basis.evals.clone();
    for (g, w) in basis.quad_weights.iter().enumerate() {
        weighted.column_mut(g).scale_mut(*w);
    }
    Ok(&curves.values * weighted.transpose())
}

/// Evaluates `Σ_j coeffs_j B_j` on the basis grid.
pub fn evaluate_slope(coeffs: &[f64], basis: &BasisMatrix) -> Result<Vec<f64>> {
    if coeffs.len() != basis.k {
        return Err(Error::InvalidDimension(format!(
            "{} coefficients for a basis of dimension {}",
            coeffs.len(),
            basis.k
        )));
    }
    let c = DVector::from_column_slice(coeffs);
    let curve = basis.evals.transpose() * c;
    Ok(curve.iter().copied().collect())
}
