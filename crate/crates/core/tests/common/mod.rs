#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use pdpap::grid::gradient_scaled;
use pdpap::linalg::CsrMatrix;
use pdpap::pde::Assembler;
use pdpap::splitting::{split_step, SplitterState, SplittingKind};
use pdpap::{ControlParam, GridFunction, GridSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random symmetric, strictly diagonally dominant matrix with positive
/// diagonal (hence SPD). `fill` is the off-diagonal density and `margin`
/// the diagonal excess over the off-diagonal row sum.
pub fn random_spd(n: usize, fill: f64, margin: f64, rng: &mut ChaCha8Rng) -> CsrMatrix {
    let mut a = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..i {
            if rng.gen_bool(fill) {
                let v = rng.gen_range(-1.0..1.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
    }
    for i in 0..n {
        let off: f64 = a[i].iter().map(|v| v.abs()).sum();
        a[i][i] = off + margin * rng.gen_range(0.5..1.5);
    }
    CsrMatrix::from_dense(&a)
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn to_nalgebra(a: &CsrMatrix) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| d[i][j])
}

pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let m = to_nalgebra(a);
    let x = m
        .lu()
        .solve(&nalgebra::DVector::from_column_slice(b))
        .expect("nonsingular");
    x.iter().copied().collect()
}

/// Iteration matrix `u ↦ split_step(u)` with zero right-hand side.
pub fn iteration_matrix(kind: SplittingKind, a: &CsrMatrix) -> DMatrix<f64> {
    let n = a.nrows();
    let zero = vec![0.0; n];
    let mut t = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let next = split_step(kind, a, &zero, &SplitterState::new(kind, e)).unwrap();
        for i in 0..n {
            t[(i, j)] = next.u[i];
        }
    }
    t
}

/// Dense matrix of the unit-step gradient, rows ordered `dx` then `dy`.
pub fn dense_k(grid: &GridSpec) -> DMatrix<f64> {
    let n = grid.node_count();
    let rows = grid.horizontal_edge_count() + grid.vertical_edge_count();
    let mut k = DMatrix::zeros(rows, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let g = gradient_scaled(grid, &e, 1.0);
        for (i, v) in g.dx.iter().chain(&g.dy).enumerate() {
            k[(i, j)] = *v;
        }
    }
    k
}

pub fn random_field(grid: &GridSpec, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> GridFunction {
    GridFunction {
        values: (0..grid.node_count()).map(|_| rng.gen_range(lo..hi)).collect(),
    }
}

/// `Σ_i ⟨A_x u_i − b_i(x), w_i⟩` on interior unknowns.
pub fn lagrangian_term(asm: &Assembler, x: &ControlParam, u: &[Vec<f64>], w: &[Vec<f64>]) -> f64 {
    let sys = asm.assemble(x).unwrap();
    u.iter()
        .zip(w)
        .zip(&sys.rhs)
        .map(|((ui, wi), bi)| {
            let au = sys.matrix.mul_vec(ui);
            au.iter().zip(bi).zip(wi).map(|((a, b), w)| (a - b) * w).sum::<f64>()
        })
        .sum()
}

/// Brute-force minimizer of `(t - v)² / (2τ) + α t² / 2` over `[λ, 1/λ]`
/// on a uniform grid with spacing `step`, refined locally.
pub fn prox_f_oracle(v: f64, tau: f64, alpha: f64, lambda: f64, step: f64) -> f64 {
    let obj = |t: f64| (t - v).powi(2) / (2.0 * tau) + alpha * t * t / 2.0;
    let (lo, hi) = (lambda, 1.0 / lambda);
    let coarse = 1e-3;
    let mut best = lo;
    let mut t = lo;
    while t <= hi {
        if obj(t) < obj(best) {
            best = t;
        }
        t += coarse;
    }
    if obj(hi) < obj(best) {
        best = hi;
    }
    let (a, b) = ((best - coarse).max(lo), (best + coarse).min(hi));
    let mut t = a;
    while t <= b {
        if obj(t) < obj(best) {
            best = t;
        }
        t += step;
    }
    best
}
