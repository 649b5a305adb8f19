//! Regular grids on the unit square, nodal and edge fields, forward
//! differences and the boundary parametrization used for Dirichlet data.
//!
//! Nodes are indexed row-major: node `(row, col)` has index `row * n + col`
//! and sits at `(col * h, row * h)`. Horizontal edges join `(row, col)` and
//! `(row, col + 1)`; vertical edges join `(row, col)` and `(row + 1, col)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n_per_side: usize) -> Result<Self> {
        if n_per_side < 3 {
            return Err(Error::GridTooSmall(n_per_side));
        }
        Ok(Self { n: n_per_side })
    }

    pub fn n_per_side(&self) -> usize {
        self.n
    }

    /// Cell width `1 / (N - 1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    pub fn interior_count(&self) -> usize {
        (self.n - 2) * (self.n - 2)
    }

    pub fn boundary_count(&self) -> usize {
        4 * (self.n - 1)
    }

    pub fn node(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    pub fn row_col(&self, node: usize) -> (usize, usize) {
        (node / self.n, node % self.n)
    }

    /// Physical coordinates `(x, y)` of a node.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        let (row, col) = self.row_col(node);
        (col as f64 * self.h(), row as f64 * self.h())
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let (r, c) = self.row_col(node);
        r == 0 || c == 0 || r == self.n - 1 || c == self.n - 1
    }

    /// Position of an interior node `(row, col)` in the interior ordering.
    pub fn interior_index(&self, row: usize, col: usize) -> Option<usize> {
        let n = self.n;
        if row == 0 || col == 0 || row >= n - 1 || col >= n - 1 {
            return None;
        }
        Some((row - 1) * (n - 2) + (col - 1))
    }

    /// Grid node of every interior unknown, in interior order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        let n = self.n;
        (1..n - 1).flat_map(|r| (1..n - 1).map(move |c| r * n + c)).collect()
    }

    pub fn horizontal_edge_count(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn vertical_edge_count(&self) -> usize {
        (self.n - 1) * self.n
    }

    /// Endpoints of horizontal edge `e`.
    pub fn horizontal_edge(&self, e: usize) -> (usize, usize) {
        let (row, col) = (e / (self.n - 1), e % (self.n - 1));
        let p = self.node(row, col);
        (p, p + 1)
    }

    /// Endpoints of vertical edge `e`.
    pub fn vertical_edge(&self, e: usize) -> (usize, usize) {
        (e, e + self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Self {
            values: vec![value; grid.node_count()],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: (0..grid.node_count())
                .map(|p| {
                    let (x, y) = grid.coords(p);
                    f(x, y)
                })
                .collect(),
        }
    }

    pub fn check(&self, grid: &GridSpec) -> Result<()> {
        check_len(grid.node_count(), self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Values on horizontal (`dx`) and vertical (`dy`) edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            dx: vec![0.0; grid.horizontal_edge_count()],
            dy: vec![0.0; grid.vertical_edge_count()],
        }
    }

    pub fn check(&self, grid: &GridSpec) -> Result<()> {
        check_len(grid.horizontal_edge_count(), self.dx.len())?;
        check_len(grid.vertical_edge_count(), self.dy.len())
    }

    pub fn dot(&self, other: &EdgeField) -> f64 {
        crate::linalg::dot(&self.dx, &other.dx) + crate::linalg::dot(&self.dy, &other.dy)
    }
}

/// Values on the boundary nodes in [`boundary_parametrization`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn check(&self, grid: &GridSpec) -> Result<()> {
        check_len(grid.boundary_count(), self.values.len())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Boundary nodes with their arclength fraction `t ∈ [0, 1)`, starting at
/// the corner `(0, 0)` and running counterclockwise.
pub fn boundary_parametrization(grid: &GridSpec) -> Vec<(usize, f64)> {
    let n = grid.n_per_side();
    let total = grid.boundary_count();
    let mut nodes = Vec::with_capacity(total);
    // bottom, right, top, left
    nodes.extend((0..n - 1).map(|c| grid.node(0, c)));
    nodes.extend((0..n - 1).map(|r| grid.node(r, n - 1)));
    nodes.extend((1..n).rev().map(|c| grid.node(n - 1, c)));
    nodes.extend((1..n).rev().map(|r| grid.node(r, 0)));
    nodes
        .into_iter()
        .enumerate()
        .map(|(k, p)| (p, k as f64 / total as f64))
        .collect()
}

/// Boundary datum `f_i` for condition index `i ≥ 1`: `cos(2πjt)` for
/// `i = 2j - 1` and `sin(2πjt)` for `i = 2j`.
pub fn boundary_value(i: usize, t: f64) -> f64 {
    assert!(i >= 1, "boundary condition indices start at 1");
    let j = i.div_ceil(2) as f64;
    let arg = 2.0 * PI * j * t;
    if i % 2 == 1 {
        arg.cos()
    } else {
        arg.sin()
    }
}

pub fn boundary_data(grid: &GridSpec, i: usize) -> BoundaryTrace {
    BoundaryTrace {
        values: boundary_parametrization(grid)
            .into_iter()
            .map(|(_, t)| boundary_value(i, t))
            .collect(),
    }
}

/// Forward differences from nodes to edges, scaled by `scale`.
pub fn gradient_scaled(grid: &GridSpec, f: &[f64], scale: f64) -> EdgeField {
    let mut out = EdgeField::zeros(grid);
    gradient_scaled_into(grid, f, scale, &mut out);
    out
}

pub fn gradient_scaled_into(grid: &GridSpec, f: &[f64], scale: f64, out: &mut EdgeField) {
    let n = grid.n_per_side();
    debug_assert_eq!(f.len(), n * n);
    for row in 0..n {
        for col in 0..n - 1 {
            let p = row * n + col;
            out.dx[row * (n - 1) + col] = scale * (f[p + 1] - f[p]);
        }
    }
    for row in 0..n - 1 {
        for col in 0..n {
            let p = row * n + col;
            out.dy[p] = scale * (f[p + n] - f[p]);
        }
    }
}

/// Negative adjoint of [`gradient_scaled`] with the same scale.
pub fn divergence_scaled(grid: &GridSpec, e: &EdgeField, scale: f64) -> Vec<f64> {
    let n = grid.n_per_side();
    let mut div = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n - 1 {
            let p = row * n + col;
            let v = scale * e.dx[row * (n - 1) + col];
            div[p] += v;
            div[p + 1] -= v;
        }
    }
    for row in 0..n - 1 {
        for col in 0..n {
            let p = row * n + col;
            let v = scale * e.dy[p];
            div[p] += v;
            div[p + n] -= v;
        }
    }
    div
}

/// Grid gradient with physical scaling `1/h`.
pub fn gradient(grid: &GridSpec, f: &GridFunction) -> Result<EdgeField> {
    f.check(grid)?;
    Ok(gradient_scaled(grid, &f.values, 1.0 / grid.h()))
}

/// Exact negative adjoint of [`gradient`].
pub fn divergence(grid: &GridSpec, e: &EdgeField) -> Result<GridFunction> {
    e.check(grid)?;
    Ok(GridFunction {
        values: divergence_scaled(grid, e, 1.0 / grid.h()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_counts() {
        let g = GridSpec::new(51).unwrap();
        assert_eq!(g.node_count(), 2601);
        assert_eq!(g.interior_count(), 49 * 49);
        assert_eq!(g.boundary_count(), 200);
        assert!((g.h() * 50.0 - 1.0).abs() <= f64::EPSILON);
        assert!(GridSpec::new(2).is_err());
    }

    #[test]
    fn parametrization_small_grid() {
        let g = GridSpec::new(3).unwrap();
        let bp = boundary_parametrization(&g);
        assert_eq!(bp.len(), 8);
        for (k, (_, t)) in bp.iter().enumerate() {
            assert_eq!(*t, k as f64 / 8.0);
        }
        assert_eq!(bp[0], (g.node(0, 0), 0.0));
        // counterclockwise: next node is along the bottom edge
        assert_eq!(bp[1].0, g.node(0, 1));
        assert_eq!(bp[2].0, g.node(0, 2));
        assert_eq!(bp[4].0, g.node(2, 2));
        assert_eq!(bp[6].0, g.node(2, 0));
    }

    #[test]
    fn parametrization_is_bijection() {
        for n in [3, 4, 7, 51] {
            let g = GridSpec::new(n).unwrap();
            let bp = boundary_parametrization(&g);
            assert_eq!(bp.len(), 4 * (n - 1));
            let mut nodes: Vec<usize> = bp.iter().map(|(p, _)| *p).collect();
            nodes.sort_unstable();
            nodes.dedup();
            assert_eq!(nodes.len(), bp.len());
            assert!(nodes.iter().all(|&p| g.is_boundary(p)));
            let boundary_total = (0..g.node_count()).filter(|&p| g.is_boundary(p)).count();
            assert_eq!(boundary_total, bp.len());
        }
        let g = GridSpec::new(51).unwrap();
        let bp = boundary_parametrization(&g);
        assert_eq!(bp[1].1, 1.0 / 200.0);
    }

    #[test]
    fn boundary_formula_values() {
        assert_eq!(boundary_value(1, 0.0), 1.0);
        assert!((boundary_value(2, 0.25) - 1.0).abs() < 1e-15);
        assert!((boundary_value(6, 1.0 / 12.0) - 1.0).abs() < 1e-15);
        let g = GridSpec::new(3).unwrap();
        let f1 = boundary_data(&g, 1);
        assert_eq!(f1.values[0], 1.0);
        assert_eq!(f1.values.len(), 8);
    }

    proptest! {
        #[test]
        fn boundary_data_is_periodic(i in 1usize..12, t in 0.0f64..1.0) {
            let a = boundary_value(i, t);
            let b = boundary_value(i, t + 1.0);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = GridSpec::new(6).unwrap();
        let e = gradient(&g, &GridFunction::constant(&g, 3.5)).unwrap();
        assert!(e.dx.iter().chain(&e.dy).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_x() {
        let g = GridSpec::new(3).unwrap();
        let f = GridFunction::from_fn(&g, |x, _| 2.0 * x);
        let e = gradient(&g, &f).unwrap();
        for &v in &e.dx {
            assert!((v - 2.0).abs() < 1e-14);
        }
        for &v in &e.dy {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 5, 9] {
            let g = GridSpec::new(n).unwrap();
            let f = GridFunction {
                values: (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let e = EdgeField {
                dx: (0..g.horizontal_edge_count())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
                dy: (0..g.vertical_edge_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let lhs = gradient(&g, &f).unwrap().dot(&e);
            let rhs = dot(&f.values, &divergence(&g, &e).unwrap().values);
            assert!((lhs + rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let g = GridSpec::new(4).unwrap();
        let f = GridFunction { values: vec![0.0; 3] };
        assert!(matches!(gradient(&g, &f), Err(Error::DimensionMismatch { .. })));
    }
}
