//! Proximal maps of the regularizers and the coupling operator `K`.
//!
//! `F(x) = (α/2)‖x‖² + δ_[λ, 1/λ](x)` acts componentwise on the control.
//! `G(Kx) = γ Σ_p |(∇a)_p|₂` is isotropic total variation of the diffusion
//! field with unit-step forward differences; its conjugate prox is a
//! pointwise projection onto the ball of radius `γ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{divergence_scaled, gradient_scaled, EdgeField, GridFunction, GridSpec};
use crate::pde::{ControlParam, PdeFamily};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegConfig {
    /// Tikhonov weight.
    pub alpha: f64,
    /// Box `[λ, 1/λ]` for every control component.
    pub lambda: f64,
    /// TV weight; zero disables `G`.
    pub gamma: f64,
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config("alpha and gamma must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        self.lambda
    }

    pub fn upper(&self) -> f64 {
        1.0 / self.lambda
    }

    pub fn is_feasible(&self, x: &ControlParam) -> bool {
        x.components().all(|v| v >= self.lower() && v <= self.upper())
    }

    /// `F(x)`, or `+∞` outside the box.
    pub fn f_value(&self, x: &ControlParam) -> f64 {
        if !self.is_feasible(x) {
            return f64::INFINITY;
        }
        0.5 * self.alpha * x.dot(x)
    }
}

/// Dual variable on the edges of the diffusion field; `None` when `G ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVar {
    pub y: Option<EdgeField>,
}

impl DualVar {
    pub fn empty() -> Self {
        Self { y: None }
    }

    pub fn dim(&self) -> usize {
        self.y.as_ref().map_or(0, |e| e.dx.len() + e.dy.len())
    }

    pub fn norm(&self) -> f64 {
        self.y.as_ref().map_or(0.0, |e| e.dot(e).sqrt())
    }

    /// Largest per-node magnitude `|(dx, dy)|₂`.
    pub fn max_pointwise_norm(&self, grid: &GridSpec) -> f64 {
        match &self.y {
            None => 0.0,
            Some(e) => node_groups(grid).map(|(h, v)| pair_norm(e, h, v)).fold(0.0, f64::max),
        }
    }
}

/// Proximal map of `τF`: `clamp(v / (1 + τα), λ, 1/λ)` per component.
pub fn prox_f(x: &ControlParam, tau: f64, cfg: &RegConfig) -> ControlParam {
    let shrink = 1.0 / (1.0 + tau * cfg.alpha);
    let (lo, hi) = (cfg.lower(), cfg.upper());
    x.map(|v| (v * shrink).clamp(lo, hi))
}

// Each node owns its outgoing horizontal and vertical edge, when present.
fn node_groups(grid: &GridSpec) -> impl Iterator<Item = (Option<usize>, Option<usize>)> + '_ {
    let n = grid.n_per_side();
    (0..n * n).map(move |p| {
        let (row, col) = (p / n, p % n);
        let h = (col + 1 < n).then(|| row * (n - 1) + col);
        let v = (row + 1 < n).then_some(p);
        (h, v)
    })
}

fn pair_norm(e: &EdgeField, h: Option<usize>, v: Option<usize>) -> f64 {
    let a = h.map_or(0.0, |i| e.dx[i]);
    let b = v.map_or(0.0, |i| e.dy[i]);
    a.hypot(b)
}

/// Proximal map of `σG*`: projection of every per-node pair onto the ball of
/// radius `γ`. Independent of `σ`.
pub fn prox_gstar(y: &DualVar, _sigma: f64, cfg: &RegConfig, grid: &GridSpec) -> DualVar {
    let Some(e) = &y.y else {
        return DualVar::empty();
    };
    let mut out = e.clone();
    for (h, v) in node_groups(grid) {
        let nrm = pair_norm(e, h, v);
        if nrm > cfg.gamma {
            let s = if nrm > 0.0 { cfg.gamma / nrm } else { 0.0 };
            if let Some(i) = h {
                out.dx[i] *= s;
            }
            if let Some(i) = v {
                out.dy[i] *= s;
            }
        }
    }
    DualVar { y: Some(out) }
}

/// The linear operator `K` of `G(Kx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// `G ≡ 0`; the dual space is empty.
    Zero,
    /// Unit-step forward-difference gradient of the diffusion field.
    Gradient(GridSpec),
}

impl Coupling {
    pub fn for_problem(family: PdeFamily, grid: GridSpec, cfg: &RegConfig) -> Result<Self> {
        match (family, cfg.gamma > 0.0) {
            (_, false) => Ok(Coupling::Zero),
            (PdeFamily::DiffusionReaction, true) => Ok(Coupling::Gradient(grid)),
            (PdeFamily::ScalarReaction, true) => Err(Error::Config(
                "total variation needs a diffusion field; the scalar family requires gamma = 0".into(),
            )),
        }
    }

    pub fn apply(&self, x: &ControlParam) -> Result<DualVar> {
        match self {
            Coupling::Zero => Ok(DualVar::empty()),
            Coupling::Gradient(grid) => {
                let a = x.a.as_ref().ok_or(Error::FamilyMismatch("diffusion-reaction"))?;
                a.check(grid)?;
                Ok(DualVar {
                    y: Some(gradient_scaled(grid, &a.values, 1.0)),
                })
            }
        }
    }

    /// `K*y`, shaped like `like`.
    pub fn adjoint(&self, y: &DualVar, like: &ControlParam) -> Result<ControlParam> {
        let mut out = like.zeros_like();
        if let (Coupling::Gradient(grid), Some(e)) = (self, &y.y) {
            e.check(grid)?;
            let a = out.a.as_mut().ok_or(Error::FamilyMismatch("diffusion-reaction"))?;
            for (o, d) in a.values.iter_mut().zip(divergence_scaled(grid, e, 1.0)) {
                *o = -d;
            }
        }
        Ok(out)
    }

    /// `G(Kx) = γ Σ_p |(Kx)_p|₂`.
    pub fn g_value(&self, x: &ControlParam, cfg: &RegConfig) -> Result<f64> {
        match self {
            Coupling::Zero => Ok(0.0),
            Coupling::Gradient(grid) => {
                let kx = self.apply(x)?;
                let e = kx.y.as_ref().expect("gradient coupling yields a field");
                Ok(cfg.gamma * node_groups(grid).map(|(h, v)| pair_norm(e, h, v)).sum::<f64>())
            }
        }
    }

    pub fn initial_dual(&self, x: &ControlParam) -> Result<DualVar> {
        self.apply(x)
    }

    /// Power-iteration estimate of `‖K‖` to relative tolerance `1e-6`.
    pub fn estimate_norm(&self) -> f64 {
        match self {
            Coupling::Zero => 0.0,
            Coupling::Gradient(grid) => estimate_k_norm(grid),
        }
    }
}

/// `‖∇‖` for the unit-step forward-difference gradient on `grid`.
pub fn estimate_k_norm(grid: &GridSpec) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b6e);
    let mut v: Vec<f64> = (0..grid.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut est = 0.0;
    for _ in 0..100_000 {
        let nv = crate::linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let kv = gradient_scaled(grid, &v, 1.0);
        let ktkv: Vec<f64> = divergence_scaled(grid, &kv, 1.0).into_iter().map(|d| -d).collect();
        // ‖K v‖² = ⟨v, KᵀK v⟩ for unit v
        let next = kv.dot(&kv).sqrt();
        let done = (next - est).abs() <= 1e-12 * next;
        est = next;
        v = ktkv;
        if done {
            break;
        }
    }
    est
}

/// Builds a diffusion control with every nodal value set to `a`.
pub fn constant_diffusion(grid: &GridSpec, a: f64, c: f64) -> ControlParam {
    ControlParam::diffusion(GridFunction::constant(grid, a), c)
}
