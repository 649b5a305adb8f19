//! Discrete Dirichlet problems `-∇·(a∇u_i) + c u_i = 0`, `u_i = f_i` on the
//! boundary, for `i = 1..m`.
//!
//! Boundary values are eliminated, so the unknowns are the interior nodes and
//! the operator `A_x = Dᵀ diag(a_e) D + c I` is symmetric positive definite.
//! Edge coefficients `a_e` are arithmetic means of the endpoint nodal values
//! (`a ≡ 1` for the scalar-reaction family). The eliminated boundary terms
//! form the right-hand sides `b_i(x)`, which depend on `a`.

use crate::error::{Error, Result};
use crate::grid::{boundary_parametrization, gradient_scaled, BoundaryTrace, GridFunction, GridSpec};
use crate::linalg::{dot, BandedCholesky, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeFamily {
    /// `-Δu + c u = 0` with unknown scalar `c`.
    ScalarReaction,
    /// `-∇·(a∇u) + c u = 0` with unknown nodal field `a` and scalar `c`.
    DiffusionReaction,
}

impl PdeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PdeFamily::ScalarReaction => "scalar-reaction",
            PdeFamily::DiffusionReaction => "diffusion-reaction",
        }
    }
}

/// The control `x`: an optional nodal diffusion field and a scalar reaction
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParam {
    pub a: Option<GridFunction>,
    pub c: f64,
}

/// Riesz representation of `B_x(u, w; ·)`; same layout as the control.
pub type ControlGradient = ControlParam;

impl ControlParam {
    pub fn scalar(c: f64) -> Self {
        Self { a: None, c }
    }

    pub fn diffusion(a: GridFunction, c: f64) -> Self {
        Self { a: Some(a), c }
    }

    pub fn family(&self) -> PdeFamily {
        if self.a.is_some() {
            PdeFamily::DiffusionReaction
        } else {
            PdeFamily::ScalarReaction
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            a: self.a.as_ref().map(|a| GridFunction {
                values: vec![0.0; a.len()],
            }),
            c: 0.0,
        }
    }

    pub fn check_family(&self, family: PdeFamily) -> Result<()> {
        if self.family() == family {
            Ok(())
        } else {
            Err(Error::FamilyMismatch(family.name()))
        }
    }

    /// Applies `f` to every component (nodal entries of `a`, then `c`).
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            a: self.a.as_ref().map(|a| GridFunction {
                values: a.values.iter().map(|&v| f(v)).collect(),
            }),
            c: f(self.c),
        }
    }

    /// Componentwise `f(self_j, other_j)`.
    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let a = match (&self.a, &other.a) {
            (Some(a), Some(b)) => {
                assert_eq!(a.len(), b.len(), "control fields differ in size");
                Some(GridFunction {
                    values: a.values.iter().zip(&b.values).map(|(&p, &q)| f(p, q)).collect(),
                })
            }
            (None, None) => None,
            _ => panic!("control parameters of different families"),
        };
        Self {
            a,
            c: f(self.c, other.c),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let field = match (&self.a, &other.a) {
            (Some(a), Some(b)) => dot(&a.values, &b.values),
            _ => 0.0,
        };
        field + self.c * other.c
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.a
            .iter()
            .flat_map(|a| a.values.iter().copied())
            .chain(std::iter::once(self.c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleRole {
    Primal,
    Adjoint,
}

/// `m` nodal fields: `u_i` (boundary values `f_i`) or `w_i` (zero on the
/// boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct StateBundle {
    pub grid: GridSpec,
    pub role: BundleRole,
    pub fields: Vec<GridFunction>,
}

impl StateBundle {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Interior values of every field, in interior order.
    pub fn interior(&self) -> Vec<Vec<f64>> {
        let nodes = self.grid.interior_nodes();
        self.fields
            .iter()
            .map(|f| nodes.iter().map(|&p| f.values[p]).collect())
            .collect()
    }
}

/// Synthetic measurements `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub z: Vec<GridFunction>,
    pub noise_std: Vec<f64>,
    pub seed: u64,
}

impl MeasurementSet {
    /// `β / (2‖z̄‖²)` with `z̄` the mean of the measurements.
    pub fn beta_hat(&self, beta: f64) -> f64 {
        let m = self.z.len() as f64;
        let len = self.z.first().map_or(0, GridFunction::len);
        let mut norm_sq = 0.0;
        for p in 0..len {
            let mean = self.z.iter().map(|z| z.values[p]).sum::<f64>() / m;
            norm_sq += mean * mean;
        }
        beta / (2.0 * norm_sq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub grid: GridSpec,
    pub matrix: CsrMatrix,
    pub rhs: Vec<Vec<f64>>,
    pub boundary: Vec<BoundaryTrace>,
}

#[derive(Debug, Clone, Copy)]
struct Neighbor {
    node: usize,
    // position in the CSR values when the neighbour is an interior unknown
    slot: Option<usize>,
    // index into the full-grid boundary value tables otherwise
    boundary: Option<usize>,
}

/// Assembles `A_x` and `b_i(x)` on a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct Assembler {
    family: PdeFamily,
    grid: GridSpec,
    boundary: Vec<BoundaryTrace>,
    // per boundary position: grid node
    boundary_nodes: Vec<usize>,
    interior_nodes: Vec<usize>,
    pattern: CsrMatrix,
    diag_slots: Vec<usize>,
    neighbors: Vec<[Neighbor; 4]>,
    // scalar family: Laplacian values and its x-independent right-hand sides
    laplacian: Option<(Vec<f64>, Vec<Vec<f64>>)>,
}

impl Assembler {
    pub fn new(family: PdeFamily, grid: GridSpec, boundary: Vec<BoundaryTrace>) -> Result<Self> {
        for b in &boundary {
            b.check(&grid)?;
        }
        let n = grid.n_per_side();
        let interior_nodes = grid.interior_nodes();
        let mut boundary_pos = vec![usize::MAX; grid.node_count()];
        let boundary_nodes: Vec<usize> = boundary_parametrization(&grid)
            .into_iter()
            .enumerate()
            .map(|(k, (p, _))| {
                boundary_pos[p] = k;
                p
            })
            .collect();

        let mut trip = Vec::with_capacity(5 * interior_nodes.len());
        for (row, &p) in interior_nodes.iter().enumerate() {
            trip.push((row, row, 0.0));
            for q in [p - n, p - 1, p + 1, p + n] {
                let (qr, qc) = grid.row_col(q);
                if let Some(col) = grid.interior_index(qr, qc) {
                    trip.push((row, col, 0.0));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(interior_nodes.len(), interior_nodes.len(), &trip);
        let diag_slots: Vec<usize> = pattern
            .diagonal_positions()
            .into_iter()
            .map(|s| s.expect("diagonal is in the pattern"))
            .collect();
        let neighbors = interior_nodes
            .iter()
            .enumerate()
            .map(|(row, &p)| {
                [p - n, p - 1, p + 1, p + n].map(|q| {
                    let (qr, qc) = grid.row_col(q);
                    match grid.interior_index(qr, qc) {
                        Some(col) => {
                            let range = pattern.row_ptr()[row]..pattern.row_ptr()[row + 1];
                            let pos = pattern.col_idx()[range.clone()]
                                .binary_search(&col)
                                .expect("neighbour in pattern");
                            Neighbor {
                                node: q,
                                slot: Some(range.start + pos),
                                boundary: None,
                            }
                        }
                        None => Neighbor {
                            node: q,
                            slot: None,
                            boundary: Some(boundary_pos[q]),
                        },
                    }
                })
            })
            .collect();

        let mut asm = Self {
            family,
            grid,
            boundary,
            boundary_nodes,
            interior_nodes,
            pattern,
            diag_slots,
            neighbors,
            laplacian: None,
        };
        if family == PdeFamily::ScalarReaction {
            let mut values = asm.pattern.values().to_vec();
            let mut rhs = vec![vec![0.0; asm.interior_nodes.len()]; asm.boundary.len()];
            asm.fill(&|_| 1.0, &mut values, &mut rhs);
            asm.laplacian = Some((values, rhs));
        }
        Ok(asm)
    }

    pub fn family(&self) -> PdeFamily {
        self.family
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn boundary(&self) -> &[BoundaryTrace] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn conditions(&self) -> usize {
        self.boundary.len()
    }

    // Writes the stiffness part `Dᵀ diag(a_e) D` and eliminated boundary terms.
    fn fill(&self, edge_coef: &dyn Fn((usize, usize)) -> f64, values: &mut [f64], rhs: &mut [Vec<f64>]) {
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        values.iter_mut().for_each(|v| *v = 0.0);
        for r in rhs.iter_mut() {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        for (row, (&p, nbrs)) in self.interior_nodes.iter().zip(&self.neighbors).enumerate() {
            let mut diag = 0.0;
            for nb in nbrs {
                let k = edge_coef((p, nb.node)) * inv_h2;
                diag += k;
                match (nb.slot, nb.boundary) {
                    (Some(slot), _) => values[slot] = -k,
                    (None, Some(bpos)) => {
                        for (r, f) in rhs.iter_mut().zip(&self.boundary) {
                            r[row] += k * f.values[bpos];
                        }
                    }
                    (None, None) => unreachable!(),
                }
            }
            values[self.diag_slots[row]] = diag;
        }
    }

    fn check_control(&self, x: &ControlParam) -> Result<()> {
        x.check_family(self.family)?;
        if let Some(a) = &x.a {
            a.check(&self.grid)?;
            if let Some((index, &value)) = a.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::Coercivity { index, value });
            }
        }
        if !(x.c >= 0.0) || !x.c.is_finite() {
            return Err(Error::Coercivity {
                index: self.grid.node_count(),
                value: x.c,
            });
        }
        Ok(())
    }

    pub fn assemble(&self, x: &ControlParam) -> Result<AssembledSystem> {
        let mut sys = AssembledSystem {
            grid: self.grid,
            matrix: self.pattern.clone(),
            rhs: vec![vec![0.0; self.interior_nodes.len()]; self.boundary.len()],
            boundary: self.boundary.clone(),
        };
        self.reassemble(x, &mut sys)?;
        Ok(sys)
    }

    /// Refreshes `sys` in place for a new control. `sys` must come from
    /// [`Assembler::assemble`] on this assembler.
    pub fn reassemble(&self, x: &ControlParam, sys: &mut AssembledSystem) -> Result<()> {
        self.check_control(x)?;
        match (&self.laplacian, &x.a) {
            (Some((lap, rhs)), None) => {
                sys.matrix.values_mut().copy_from_slice(lap);
                if sys.rhs != *rhs {
                    sys.rhs.clone_from(rhs);
                }
            }
            (_, Some(a)) => {
                let a = &a.values;
                self.fill(&|(p, q)| 0.5 * (a[p] + a[q]), sys.matrix.values_mut(), &mut sys.rhs);
            }
            (None, None) => unreachable!("scalar assembler always caches the Laplacian"),
        }
        let values = sys.matrix.values_mut();
        for &slot in &self.diag_slots {
            values[slot] += x.c;
        }
        Ok(())
    }

    /// Full-grid field from interior values; boundary nodes get `boundary`.
    pub fn embed(&self, interior: &[f64], boundary: Option<&BoundaryTrace>) -> GridFunction {
        let mut values = vec![0.0; self.grid.node_count()];
        for (&p, &v) in self.interior_nodes.iter().zip(interior) {
            values[p] = v;
        }
        if let Some(b) = boundary {
            for (&p, &v) in self.boundary_nodes.iter().zip(&b.values) {
                values[p] = v;
            }
        }
        GridFunction { values }
    }

    pub fn primal_bundle<'a>(&self, interior: impl IntoIterator<Item = &'a [f64]>) -> StateBundle {
        StateBundle {
            grid: self.grid,
            role: BundleRole::Primal,
            fields: interior
                .into_iter()
                .zip(&self.boundary)
                .map(|(u, f)| self.embed(u, Some(f)))
                .collect(),
        }
    }

    pub fn adjoint_bundle<'a>(&self, interior: impl IntoIterator<Item = &'a [f64]>) -> StateBundle {
        StateBundle {
            grid: self.grid,
            role: BundleRole::Adjoint,
            fields: interior.into_iter().map(|w| self.embed(w, None)).collect(),
        }
    }
}

/// One-shot assembly; see [`Assembler`] for repeated assembly on one grid.
pub fn assemble(
    family: PdeFamily,
    grid: GridSpec,
    x: &ControlParam,
    boundary: Vec<BoundaryTrace>,
) -> Result<AssembledSystem> {
    Assembler::new(family, grid, boundary)?.assemble(x)
}

/// Solves `A u_i = b_i` for every condition by Cholesky factorization and
/// returns the primal bundle with boundary values attached.
pub fn solve_exact(system: &AssembledSystem) -> Result<StateBundle> {
    let chol = BandedCholesky::factor(&system.matrix)?;
    let grid = system.grid;
    let interior = grid.interior_nodes();
    let boundary_nodes: Vec<usize> = boundary_parametrization(&grid).into_iter().map(|(p, _)| p).collect();
    let fields = system
        .rhs
        .iter()
        .zip(&system.boundary)
        .map(|(b, f)| {
            let u = chol.solve(b);
            let mut values = vec![0.0; grid.node_count()];
            for (&p, v) in interior.iter().zip(u) {
                values[p] = v;
            }
            for (&p, &v) in boundary_nodes.iter().zip(&f.values) {
                values[p] = v;
            }
            GridFunction { values }
        })
        .collect();
    Ok(StateBundle {
        grid,
        role: BundleRole::Primal,
        fields,
    })
}

/// Right-hand side `-∇Q(u) = -2β̂(u_i - z_i)` restricted to interior nodes.
pub fn adjoint_rhs(u: &StateBundle, z: &MeasurementSet, beta_hat: f64) -> Result<Vec<Vec<f64>>> {
    if u.len() != z.z.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: z.z.len(),
        });
    }
    let interior = u.grid.interior_nodes();
    u.fields
        .iter()
        .zip(&z.z)
        .map(|(ui, zi)| {
            zi.check(&u.grid)?;
            Ok(interior
                .iter()
                .map(|&p| -2.0 * beta_hat * (ui.values[p] - zi.values[p]))
                .collect())
        })
        .collect()
}

/// Riesz representation of the control derivative of
/// `B(u, w; x) = Σ_i ⟨A_x u_i - b_i(x), w_i⟩`.
///
/// The scalar part is `Σ_i Σ_p u_i w_i`; the nodal part is the transpose of
/// the edge averaging applied to `Σ_i (D u_i)_e (D w_i)_e`. Reductions run in
/// index order.
pub fn riesz_gradient(family: PdeFamily, u: &StateBundle, w: &StateBundle) -> Result<ControlGradient> {
    if u.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: w.len(),
        });
    }
    let grid = u.grid;
    let mut c = 0.0;
    for (ui, wi) in u.fields.iter().zip(&w.fields) {
        ui.check(&grid)?;
        wi.check(&grid)?;
        c += dot(&ui.values, &wi.values);
    }
    let a = match family {
        PdeFamily::ScalarReaction => None,
        PdeFamily::DiffusionReaction => {
            let inv_h = 1.0 / grid.h();
            let mut g = vec![0.0; grid.node_count()];
            for (ui, wi) in u.fields.iter().zip(&w.fields) {
                let du = gradient_scaled(&grid, &ui.values, inv_h);
                let dw = gradient_scaled(&grid, &wi.values, inv_h);
                for (e, (p, q)) in (0..du.dx.len()).map(|e| (e, grid.horizontal_edge(e))) {
                    let s = 0.5 * du.dx[e] * dw.dx[e];
                    g[p] += s;
                    g[q] += s;
                }
                for (e, (p, q)) in (0..du.dy.len()).map(|e| (e, grid.vertical_edge(e))) {
                    let s = 0.5 * du.dy[e] * dw.dy[e];
                    g[p] += s;
                    g[q] += s;
                }
            }
            Some(GridFunction { values: g })
        }
    };
    Ok(ControlGradient { a, c })
}
