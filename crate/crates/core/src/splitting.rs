//! One-step linear-system updates `N u⁺ = b - M u` for a splitting
//! `A = N + M`, and numerical estimates of the splitting constants.
//!
//! The outer optimization loop advances every system by exactly one of these
//! steps per iteration while `A` changes with the control, so a step never
//! iterates to convergence on its own.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, BandedCholesky, CsrMatrix};

/// Relative energy threshold below which a quasi-CG direction is reset.
pub const CG_RESET_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SorBase {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplittingKind {
    /// `N = A`: exact solve.
    Full,
    /// `N = diag(A)`.
    Jacobi,
    /// `N` = lower triangle of `A` including the diagonal.
    GaussSeidel,
    /// `Ñ = (1 + r) N`, `M̃ = M - r N` over a base splitting.
    Sor { r: f64, base: SorBase },
    /// One quasi-conjugate-gradient update with an iterate-local direction.
    QuasiCg,
}

impl SplittingKind {
    pub fn sor(r: f64) -> Self {
        SplittingKind::Sor {
            r,
            base: SorBase::GaussSeidel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SplittingKind::Sor { r, .. } if !(*r > 0.0) || !r.is_finite() => {
                Err(Error::Config(format!("SOR parameter must be positive, got {r}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for SplittingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplittingKind::Full => write!(f, "full"),
            SplittingKind::Jacobi => write!(f, "jacobi"),
            SplittingKind::GaussSeidel => write!(f, "gauss-seidel"),
            SplittingKind::Sor {
                r,
                base: SorBase::GaussSeidel,
            } => write!(f, "sor:{r}"),
            SplittingKind::Sor {
                r,
                base: SorBase::Jacobi,
            } => write!(f, "sor-jacobi:{r}"),
            SplittingKind::QuasiCg => write!(f, "quasi-cg"),
        }
    }
}

impl std::str::FromStr for SplittingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_r = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad SOR parameter {v:?}")))
        };
        let kind = match s {
            "full" | "none" => SplittingKind::Full,
            "jacobi" => SplittingKind::Jacobi,
            "gauss-seidel" | "gs" => SplittingKind::GaussSeidel,
            "quasi-cg" | "cg" => SplittingKind::QuasiCg,
            _ => {
                if let Some(r) = s.strip_prefix("sor-jacobi:") {
                    SplittingKind::Sor {
                        r: parse_r(r)?,
                        base: SorBase::Jacobi,
                    }
                } else if let Some(r) = s.strip_prefix("sor:") {
                    SplittingKind::sor(parse_r(r)?)
                } else {
                    return Err(Error::Config(format!("unknown splitting {s:?}")));
                }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Iterate of one linear system, plus the search direction for quasi-CG.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitterState {
    pub u: Vec<f64>,
    pub p: Option<Vec<f64>>,
    pub fresh: bool,
}

impl SplitterState {
    pub fn new(kind: SplittingKind, u: Vec<f64>) -> Self {
        let p = (kind == SplittingKind::QuasiCg).then(|| vec![0.0; u.len()]);
        Self { u, p, fresh: true }
    }
}

/// A splitting bound to one matrix, with any factorization computed once so
/// that all systems sharing the matrix can be stepped cheaply.
#[derive(Debug)]
pub struct PreparedSplitting<'a> {
    kind: SplittingKind,
    matrix: &'a CsrMatrix,
    factor: Option<BandedCholesky>,
    diag: Vec<f64>,
}

impl<'a> PreparedSplitting<'a> {
    pub fn new(kind: SplittingKind, matrix: &'a CsrMatrix) -> Result<Self> {
        kind.validate()?;
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let mut factor = None;
        let mut diag = Vec::new();
        match kind {
            SplittingKind::Full => factor = Some(BandedCholesky::factor(matrix)?),
            SplittingKind::Jacobi | SplittingKind::GaussSeidel | SplittingKind::Sor { .. } => {
                diag = matrix.diagonal();
                if let Some((row, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
                    return Err(Error::NonPositiveDiagonal { row, value });
                }
            }
            SplittingKind::QuasiCg => {}
        }
        Ok(Self {
            kind,
            matrix,
            factor,
            diag,
        })
    }

    pub fn kind(&self) -> SplittingKind {
        self.kind
    }

    /// Advances `state` by one update for the system `A u = rhs`.
    pub fn step(&self, rhs: &[f64], state: &mut SplitterState) -> Result<()> {
        let n = self.matrix.nrows();
        if rhs.len() != n || state.u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if rhs.len() != n { rhs.len() } else { state.u.len() },
            });
        }
        match self.kind {
            SplittingKind::Full => {
                let chol = self.factor.as_ref().expect("factor computed for Full");
                state.u.copy_from_slice(rhs);
                chol.solve_in_place(&mut state.u);
            }
            SplittingKind::Jacobi => self.jacobi(rhs, &mut state.u, 0.0),
            SplittingKind::GaussSeidel => self.gauss_seidel(rhs, &mut state.u, 0.0),
            SplittingKind::Sor { r, base } => match base {
                SorBase::Jacobi => self.jacobi(rhs, &mut state.u, r),
                SorBase::GaussSeidel => self.gauss_seidel(rhs, &mut state.u, r),
            },
            SplittingKind::QuasiCg => quasi_cg_in_place(self.matrix, rhs, state)?,
        }
        Ok(())
    }

    // (1 + r) D u⁺ = b - (A - D) u + r D u
    fn jacobi(&self, rhs: &[f64], u: &mut [f64], r: f64) {
        let a = self.matrix;
        let (rp, ci, va) = (a.row_ptr(), a.col_idx(), a.values());
        let prev = u.to_vec();
        for i in 0..u.len() {
            let mut s = rhs[i];
            for k in rp[i]..rp[i + 1] {
                let j = ci[k];
                if j != i {
                    s -= va[k] * prev[j];
                }
            }
            let base = s / self.diag[i];
            u[i] = (base + r * prev[i]) / (1.0 + r);
        }
    }

    // Forward substitution with the lower triangle, rows in index order.
    fn gauss_seidel(&self, rhs: &[f64], u: &mut [f64], r: f64) {
        let a = self.matrix;
        let (rp, ci, va) = (a.row_ptr(), a.col_idx(), a.values());
        if r == 0.0 {
            for i in 0..u.len() {
                let mut s = rhs[i];
                for k in rp[i]..rp[i + 1] {
                    let j = ci[k];
                    if j != i {
                        s -= va[k] * u[j];
                    }
                }
                u[i] = s / self.diag[i];
            }
            return;
        }
        // Ñ u⁺ = b - M u + r N u; with N lower, solve N v = b - M u, then
        // blend u⁺ = (v + r u) / (1 + r).
        let prev = u.to_vec();
        let mut v = vec![0.0; u.len()];
        for i in 0..u.len() {
            let mut s = rhs[i];
            for k in rp[i]..rp[i + 1] {
                let j = ci[k];
                if j < i {
                    s -= va[k] * v[j];
                } else if j > i {
                    s -= va[k] * prev[j];
                }
            }
            v[i] = s / self.diag[i];
        }
        for ((ui, vi), pi) in u.iter_mut().zip(&v).zip(&prev) {
            *ui = (vi + r * pi) / (1.0 + r);
        }
    }
}

/// Functional form: one update of `state` for `A u = rhs`.
pub fn split_step(kind: SplittingKind, a: &CsrMatrix, rhs: &[f64], state: &SplitterState) -> Result<SplitterState> {
    let mut next = state.clone();
    PreparedSplitting::new(kind, a)?.step(rhs, &mut next)?;
    Ok(next)
}

/// One quasi-conjugate-gradient update.
///
/// `r = b - A u`; the direction is `p⁺ = r + z p` with `z` chosen so that
/// `⟨A p⁺, p⟩ = 0`, or `p⁺ = r` on a fresh state or when the previous
/// direction has negligible energy; then `u⁺ = u + t p⁺` with the exact line
/// search step `t = ⟨p⁺, r⟩ / ‖p⁺‖²_A`.
pub fn quasi_cg_step(a: &CsrMatrix, rhs: &[f64], state: &SplitterState) -> Result<SplitterState> {
    let mut next = state.clone();
    quasi_cg_in_place(a, rhs, &mut next)?;
    Ok(next)
}

fn quasi_cg_in_place(a: &CsrMatrix, rhs: &[f64], state: &mut SplitterState) -> Result<()> {
    let r = a.residual(rhs, &state.u);
    if r.iter().all(|&v| v == 0.0) {
        return Ok(());
    }
    let ar = a.mul_vec(&r);
    let r_energy = dot(&r, &ar);
    if !(r_energy > 0.0) {
        return Err(Error::CgBreakdown);
    }
    let mut direction = None;
    if let (false, Some(p)) = (state.fresh, state.p.as_ref()) {
        let ap = a.mul_vec(p);
        let p_energy = dot(p, &ap);
        let p_ar = dot(p, &ar);
        if p_energy > CG_RESET_EPS * dot(&r, &r) && p_ar.is_finite() {
            let z = -p_ar / p_energy;
            let pn: Vec<f64> = r.iter().zip(p).map(|(ri, pi)| ri + z * pi).collect();
            let apn: Vec<f64> = ar.iter().zip(&ap).map(|(ari, api)| ari + z * api).collect();
            let pn_energy = dot(&pn, &apn);
            if pn_energy > CG_RESET_EPS * r_energy {
                direction = Some((pn, pn_energy));
            }
        }
    }
    let (p_next, p_energy) = direction.unwrap_or((r.clone(), r_energy));
    let t = dot(&p_next, &r) / p_energy;
    if !t.is_finite() {
        return Err(Error::CgBreakdown);
    }
    for (ui, pi) in state.u.iter_mut().zip(&p_next) {
        *ui += t * pi;
    }
    state.p = Some(p_next);
    state.fresh = false;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsReport {
    /// Smallest singular value of `N`; `None` where `N` is not a fixed matrix.
    pub gamma_n: Option<f64>,
    /// Spectral radius of `N⁻¹ M`; `None` where `N` is not a fixed matrix.
    pub alpha: Option<f64>,
    pub diag_dominant: bool,
    pub spd: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnoseOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

pub fn diagnose(kind: SplittingKind, a: &CsrMatrix) -> DiagnosticsReport {
    diagnose_with(kind, a, DiagnoseOptions::default())
}

/// Best-effort estimates of the splitting constants. `alpha` comes from
/// power iteration on `N⁻¹M` with a two-term recurrence fit, so ± pairs and
/// complex-conjugate dominant pairs are handled; `gamma_n` from inverse
/// power iteration on `NᵀN`.
pub fn diagnose_with(kind: SplittingKind, a: &CsrMatrix, opts: DiagnoseOptions) -> DiagnosticsReport {
    let spd = is_spd(a);
    let diag_dominant = is_strictly_diag_dominant(a);
    let diag = a.diagonal();
    let invertible_diag = diag.iter().all(|d| *d != 0.0);
    let (alpha, gamma_n) = match kind {
        SplittingKind::QuasiCg => (None, None),
        SplittingKind::Full => {
            let gamma = BandedCholesky::factor(a)
                .ok()
                .map(|chol| smallest_singular(a.nrows(), |v| chol.solve(&chol.solve(v)), opts));
            (Some(0.0), gamma)
        }
        _ if !invertible_diag => (None, None),
        SplittingKind::Jacobi => {
            let gamma = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
            let alpha = spectral_radius(a.nrows(), |v| iteration_operator(a, &diag, v, false, 0.0), opts);
            (Some(alpha), Some(gamma))
        }
        SplittingKind::GaussSeidel => {
            let alpha = spectral_radius(a.nrows(), |v| iteration_operator(a, &diag, v, true, 0.0), opts);
            let gamma = smallest_singular(a.nrows(), |v| lower_solve(a, &upper_t_solve(a, v)), opts);
            (Some(alpha), Some(gamma))
        }
        SplittingKind::Sor { r, base } => {
            let lower = base == SorBase::GaussSeidel;
            let alpha = spectral_radius(a.nrows(), |v| iteration_operator(a, &diag, v, lower, r), opts);
            let gamma = if lower {
                smallest_singular(a.nrows(), |v| lower_solve(a, &upper_t_solve(a, v)), opts)
            } else {
                diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()))
            };
            (Some(alpha), Some((1.0 + r) * gamma))
        }
    };
    DiagnosticsReport {
        gamma_n,
        alpha,
        diag_dominant,
        spd,
    }
}

fn is_spd(a: &CsrMatrix) -> bool {
    let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.nrows() == a.ncols() && a.asymmetry() <= 1e-12 * scale.max(1.0) && BandedCholesky::factor(a).is_ok()
}

fn is_strictly_diag_dominant(a: &CsrMatrix) -> bool {
    (0..a.nrows()).all(|i| {
        let mut off = 0.0;
        let mut d = 0.0;
        for (j, v) in a.row(i) {
            if i == j {
                d = v.abs();
            } else {
                off += v.abs();
            }
        }
        d > off
    })
}

// N⁻¹ M v for the (possibly relaxed) Jacobi or Gauss–Seidel splitting:
// Ñ⁻¹ M̃ v = N⁻¹ A v / (1 + r) - v.
fn iteration_operator(a: &CsrMatrix, diag: &[f64], v: &[f64], lower: bool, r: f64) -> Vec<f64> {
    let av = a.mul_vec(v);
    let ninv_av = if lower {
        lower_solve(a, &av)
    } else {
        av.iter().zip(diag).map(|(x, d)| x / d).collect()
    };
    ninv_av.iter().zip(v).map(|(x, vi)| x / (1.0 + r) - vi).collect()
}

/// Solves `(D + L) x = b` by forward substitution.
pub fn lower_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    for i in 0..b.len() {
        let mut s = b[i];
        let mut d = 0.0;
        for (j, v) in a.row(i) {
            if j < i {
                s -= v * x[j];
            } else if j == i {
                d = v;
            }
        }
        x[i] = s / d;
    }
    x
}

// Solves (D + L)ᵀ x = b by back substitution, scattering column-wise.
fn upper_t_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..b.len()).rev() {
        let d = a.get(i, i);
        x[i] /= d;
        let xi = x[i];
        for (j, v) in a.row(i) {
            if j < i {
                x[j] -= v * xi;
            }
        }
    }
    x
}

fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.into_iter().map(|x| x / nv).collect()
}

// Fits `x₂ ≈ p x₁ + q x₀` to three consecutive power iterates and returns
// the largest root modulus of `z² − p z − q`. This recovers a dominant real
// eigenvalue, a ± pair, or a complex-conjugate pair alike.
fn dominant_pair_modulus(x0: &[f64], x1: &[f64], x2: &[f64]) -> Option<f64> {
    let (g00, g01, g11) = (dot(x0, x0), dot(x0, x1), dot(x1, x1));
    let (b0, b1) = (dot(x0, x2), dot(x1, x2));
    let det = g00 * g11 - g01 * g01;
    if !(det > 1e-10 * g00 * g11) {
        return None;
    }
    let p = (g00 * b1 - g01 * b0) / det;
    let q = (g11 * b0 - g01 * b1) / det;
    let disc = p * p + 4.0 * q;
    Some(if disc >= 0.0 {
        let r = disc.sqrt();
        ((p + r) / 2.0).abs().max(((p - r) / 2.0).abs())
    } else {
        (-q).sqrt()
    })
}

fn spectral_radius(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>, opts: DiagnoseOptions) -> f64 {
    let mut v = start_vector(n, opts.seed);
    let mut est = f64::NAN;
    for _ in 0..opts.max_iters {
        let x1 = apply(&v);
        let x2 = apply(&x1);
        let n2 = norm(&x2);
        if n2 == 0.0 {
            return 0.0;
        }
        let next = dominant_pair_modulus(&v, &x1, &x2).unwrap_or_else(|| (n2 / norm(&v)).sqrt());
        let done = (next - est).abs() <= opts.rel_tol * next;
        est = next;
        v = x2.into_iter().map(|x| x / n2).collect();
        if done {
            break;
        }
    }
    est
}

fn smallest_singular(n: usize, apply_inv_ntn: impl Fn(&[f64]) -> Vec<f64>, opts: DiagnoseOptions) -> f64 {
    let mut v = start_vector(n, opts.seed);
    let mut est = f64::NAN;
    for _ in 0..opts.max_iters {
        let w = apply_inv_ntn(&v);
        let nw = norm(&w);
        let next = 1.0 / nw.sqrt();
        let done = (next - est).abs() <= opts.rel_tol * next;
        est = next;
        v = w.into_iter().map(|x| x / nw).collect();
        if done {
            break;
        }
    }
    est
}
