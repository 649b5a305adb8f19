//! The outer primal-dual loop with one inner splitting step per PDE solve.
//!
//! Each iteration advances the state PDEs and then the adjoint PDEs by one
//! splitting step at the current control, takes a proximal gradient step on
//! the control, extrapolates it, and updates the dual variable of `G(Kx)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{boundary_data, GridSpec};
use crate::linalg::norm;
use crate::pde::{
    adjoint_rhs, riesz_gradient, solve_exact, AssembledSystem, Assembler, ControlParam, MeasurementSet, PdeFamily,
    StateBundle,
};
use crate::prox::{prox_f, prox_gstar, Coupling, DualVar, RegConfig};
use crate::splitting::{PreparedSplitting, SplitterState, SplittingKind};

/// Step length and over-relaxation schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Constant {
        tau: f64,
        sigma: f64,
        omega: f64,
    },
    /// `ω_k = 1/√(1 + 2γ̃τ_k)`, `τ_{k+1} = τ_k ω_k`, `σ_{k+1} = σ_k / ω_k`.
    Accelerated {
        tau0: f64,
        sigma0: f64,
        gamma_f: f64,
    },
    /// Constant `τ`, `σ = γ̃_F τ / γ̃_{G*}`, `ω = 1/(1 + 2γ̃_F τ)`.
    LinearRate {
        tau: f64,
        gamma_f: f64,
        gamma_gstar: f64,
    },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepRule::Constant { tau, sigma, omega } => tau > 0.0 && sigma > 0.0 && omega > 0.0 && omega <= 1.0,
            StepRule::Accelerated { tau0, sigma0, gamma_f } => tau0 > 0.0 && sigma0 > 0.0 && gamma_f > 0.0,
            StepRule::LinearRate {
                tau,
                gamma_f,
                gamma_gstar,
            } => tau > 0.0 && gamma_f > 0.0 && gamma_gstar > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step rule {self:?}")))
        }
    }

    /// `(τ_0, σ_0)`.
    pub fn initial(&self) -> (f64, f64) {
        match *self {
            StepRule::Constant { tau, sigma, .. } => (tau, sigma),
            StepRule::Accelerated { tau0, sigma0, .. } => (tau0, sigma0),
            StepRule::LinearRate {
                tau,
                gamma_f,
                gamma_gstar,
            } => (tau, gamma_f * tau / gamma_gstar),
        }
    }
}

/// Returns `(τ_{k+1}, σ_{k+1}, ω_k)` from `(τ_k, σ_k)`.
pub fn advance_step_rule(rule: &StepRule, tau: f64, sigma: f64) -> (f64, f64, f64) {
    match *rule {
        StepRule::Constant { omega, .. } => (tau, sigma, omega),
        StepRule::Accelerated { gamma_f, .. } => {
            let omega = 1.0 / (1.0 + 2.0 * gamma_f * tau).sqrt();
            (tau * omega, sigma / omega, omega)
        }
        StepRule::LinearRate {
            tau,
            gamma_f,
            gamma_gstar,
        } => (tau, gamma_f * tau / gamma_gstar, 1.0 / (1.0 + 2.0 * gamma_f * tau)),
    }
}

/// Full iterate `(u, w, x, y)` with solver states and step parameters.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: ControlParam,
    pub x_prev: ControlParam,
    pub y: DualVar,
    pub solver_u: Vec<SplitterState>,
    pub solver_w: Vec<SplitterState>,
    pub k: usize,
    /// `τ_k` for the next iteration.
    pub tau: f64,
    /// `σ_k`; the next dual step uses `σ_{k+1}` derived from it.
    pub sigma: f64,
    /// `ω` used by the most recent iteration.
    pub omega: f64,
    system: AssembledSystem,
}

impl IterateState {
    /// System assembled at the control of the most recent inner solve.
    pub fn system(&self) -> &AssembledSystem {
        &self.system
    }
}

/// Norms of the optimality-system residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub pde: f64,
    pub adjoint: f64,
    pub control: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub k: usize,
    pub wall_clock_seconds: f64,
    pub c_value: f64,
    pub rel_error: Option<f64>,
    pub j_exact: Option<f64>,
    pub j_inexact: Option<f64>,
    pub residuals: Option<Residuals>,
}

#[derive(Debug, Clone, Default)]
pub struct SolverOptions {
    /// Threads for the independent per-condition solves; 1 runs inline.
    pub threads: usize,
    /// Keeps the control at its initial value (the PDE iterations still run).
    pub freeze_control: bool,
}

/// A discrete coefficient inverse problem: PDE family, data, regularizers.
pub struct Problem {
    family: PdeFamily,
    grid: GridSpec,
    reg: RegConfig,
    beta_hat: f64,
    data: MeasurementSet,
    assembler: Assembler,
    coupling: Coupling,
    options: SolverOptions,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("family", &self.family)
            .field("grid", &self.grid)
            .field("reg", &self.reg)
            .field("beta_hat", &self.beta_hat)
            .field("conditions", &self.data.z.len())
            .finish()
    }
}

impl Problem {
    /// Builds the problem with boundary data `f_1..f_m`, `m` = number of
    /// measurements, and `β̂ = β / (2‖z̄‖²)`.
    pub fn new(family: PdeFamily, grid: GridSpec, data: MeasurementSet, beta: f64, reg: RegConfig) -> Result<Self> {
        reg.validate()?;
        for z in &data.z {
            z.check(&grid)?;
        }
        let boundary = (1..=data.z.len()).map(|i| boundary_data(&grid, i)).collect();
        let assembler = Assembler::new(family, grid, boundary)?;
        let coupling = Coupling::for_problem(family, grid, &reg)?;
        let beta_hat = data.beta_hat(beta);
        Ok(Self {
            family,
            grid,
            reg,
            beta_hat,
            data,
            assembler,
            coupling,
            options: SolverOptions {
                threads: 1,
                freeze_control: false,
            },
            pool: None,
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Result<Self> {
        self.pool = if options.threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(options.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        self.options = options;
        Ok(self)
    }

    pub fn family(&self) -> PdeFamily {
        self.family
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn reg(&self) -> &RegConfig {
        &self.reg
    }

    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }

    pub fn data(&self) -> &MeasurementSet {
        &self.data
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn conditions(&self) -> usize {
        self.data.z.len()
    }

    /// `Q(u) = β̂ Σ_i ‖u_i - z_i‖²` over all nodes.
    pub fn data_misfit(&self, u: &StateBundle) -> f64 {
        let mut acc = 0.0;
        for (ui, zi) in u.fields.iter().zip(&self.data.z) {
            for (a, b) in ui.values.iter().zip(&zi.values) {
                acc += (a - b) * (a - b);
            }
        }
        self.beta_hat * acc
    }

    /// `J(x) = F(x) + Q(S(x)) + G(Kx)` with an exact PDE solve; `+∞` when `x`
    /// leaves the box.
    pub fn objective(&self, x: &ControlParam) -> Result<f64> {
        if !self.reg.is_feasible(x) {
            return Ok(f64::INFINITY);
        }
        let u = solve_exact(&self.assembler.assemble(x)?)?;
        self.objective_at(x, &u)
    }

    /// `J` evaluated with a given (possibly inexact) state bundle.
    pub fn objective_at(&self, x: &ControlParam, u: &StateBundle) -> Result<f64> {
        Ok(self.reg.f_value(x) + self.data_misfit(u) + self.coupling.g_value(x, &self.reg)?)
    }

    pub fn primal_bundle(&self, state: &IterateState) -> StateBundle {
        self.assembler
            .primal_bundle(state.solver_u.iter().map(|s| s.u.as_slice()))
    }

    pub fn adjoint_bundle(&self, state: &IterateState) -> StateBundle {
        self.assembler
            .adjoint_bundle(state.solver_w.iter().map(|s| s.u.as_slice()))
    }

    /// Exact state and adjoint solves at `x0`, `y⁰ = K x⁰`.
    pub fn initialize(&self, x0: ControlParam, rule: &StepRule, kind: SplittingKind) -> Result<IterateState> {
        rule.validate()?;
        kind.validate()?;
        x0.check_family(self.family)?;
        if !self.reg.is_feasible(&x0) {
            return Err(Error::Infeasible);
        }
        let system = self.assembler.assemble(&x0)?;
        let exact = PreparedSplitting::new(SplittingKind::Full, &system.matrix)?;
        let mut solver_u: Vec<SplitterState> = system
            .rhs
            .iter()
            .map(|_| SplitterState::new(kind, vec![0.0; system.matrix.nrows()]))
            .collect();
        for (s, b) in solver_u.iter_mut().zip(&system.rhs) {
            exact.step(b, s)?;
            s.fresh = true;
        }
        let u = self.assembler.primal_bundle(solver_u.iter().map(|s| s.u.as_slice()));
        let rhs_w = adjoint_rhs(&u, &self.data, self.beta_hat)?;
        let mut solver_w: Vec<SplitterState> = rhs_w
            .iter()
            .map(|_| SplitterState::new(kind, vec![0.0; system.matrix.nrows()]))
            .collect();
        for (s, b) in solver_w.iter_mut().zip(&rhs_w) {
            exact.step(b, s)?;
            s.fresh = true;
        }
        let y = self.coupling.initial_dual(&x0)?;
        let (tau, sigma) = rule.initial();
        Ok(IterateState {
            x_prev: x0.clone(),
            x: x0,
            y,
            solver_u,
            solver_w,
            k: 0,
            tau,
            sigma,
            omega: f64::NAN,
            system,
        })
    }

    fn step_all(&self, prepared: &PreparedSplitting<'_>, rhs: &[Vec<f64>], states: &mut [SplitterState]) -> Result<()> {
        match &self.pool {
            Some(pool) if states.len() > 1 => pool.install(|| {
                states
                    .par_iter_mut()
                    .zip(rhs.par_iter())
                    .map(|(s, b)| prepared.step(b, s))
                    .collect::<Result<Vec<()>>>()
                    .map(|_| ())
            }),
            _ => states.iter_mut().zip(rhs).try_for_each(|(s, b)| prepared.step(b, s)),
        }
    }

    /// One outer iteration.
    pub fn iterate(&self, state: &mut IterateState, rule: &StepRule, kind: SplittingKind) -> Result<()> {
        let k = state.k;
        self.iterate_inner(state, rule, kind).map_err(|e| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        })
    }

    fn iterate_inner(&self, state: &mut IterateState, rule: &StepRule, kind: SplittingKind) -> Result<()> {
        // A_{x^k}, b(x^k)
        self.assembler.reassemble(&state.x, &mut state.system)?;
        let prepared = PreparedSplitting::new(kind, &state.system.matrix)?;

        // split state and adjoint steps
        self.step_all(&prepared, &state.system.rhs, &mut state.solver_u)?;
        let u = self.primal_bundle(state);
        let rhs_w = adjoint_rhs(&u, &self.data, self.beta_hat)?;
        self.step_all(&prepared, &rhs_w, &mut state.solver_w)?;
        let w = self.adjoint_bundle(state);

        let (tau_next, sigma_next, omega) = advance_step_rule(rule, state.tau, state.sigma);
        let tau = state.tau;

        let x_next = if self.options.freeze_control {
            state.x.clone()
        } else {
            let grad = riesz_gradient(self.family, &u, &w)?;
            let kty = self.coupling.adjoint(&state.y, &state.x)?;
            let trial = state
                .x
                .zip_map(&grad, |x, g| x - tau * g)
                .zip_map(&kty, |v, d| v - tau * d);
            prox_f(&trial, tau, &self.reg)
        };

        if self.coupling != Coupling::Zero {
            let x_bar = x_next.zip_map(&state.x, |n, o| n + omega * (n - o));
            let kx = self.coupling.apply(&x_bar)?;
            let y_trial = match (&state.y.y, &kx.y) {
                (Some(y), Some(d)) => {
                    let mut t = y.clone();
                    for (a, b) in t.dx.iter_mut().zip(&d.dx) {
                        *a += sigma_next * b;
                    }
                    for (a, b) in t.dy.iter_mut().zip(&d.dy) {
                        *a += sigma_next * b;
                    }
                    DualVar { y: Some(t) }
                }
                _ => DualVar::empty(),
            };
            state.y = prox_gstar(&y_trial, sigma_next, &self.reg, &self.grid);
        }

        state.x_prev = std::mem::replace(&mut state.x, x_next);
        state.tau = tau_next;
        state.sigma = sigma_next;
        state.omega = omega;
        state.k += 1;
        Ok(())
    }

    /// Residual norms of the optimality system at the current iterate: state
    /// and adjoint equations at `x^k`, and fixed-point residuals of the
    /// control and dual prox steps with unit step lengths.
    pub fn optimality_residuals(&self, state: &IterateState) -> Result<Residuals> {
        let sys = self.assembler.assemble(&state.x)?;
        let mut pde = 0.0;
        for (s, b) in state.solver_u.iter().zip(&sys.rhs) {
            let r = sys.matrix.residual(b, &s.u);
            pde += norm(&r).powi(2);
        }
        let u = self.primal_bundle(state);
        let rhs_w = adjoint_rhs(&u, &self.data, self.beta_hat)?;
        let mut adjoint = 0.0;
        for (s, b) in state.solver_w.iter().zip(&rhs_w) {
            let r = sys.matrix.residual(b, &s.u);
            adjoint += norm(&r).powi(2);
        }
        let w = self.adjoint_bundle(state);
        let grad = riesz_gradient(self.family, &u, &w)?;
        let kty = self.coupling.adjoint(&state.y, &state.x)?;
        let trial = state.x.zip_map(&grad, |x, g| x - g).zip_map(&kty, |v, d| v - d);
        let control = state.x.zip_map(&prox_f(&trial, 1.0, &self.reg), |a, b| a - b).norm();
        let dual = match (&state.y.y, self.coupling.apply(&state.x)?.y) {
            (Some(y), Some(kx)) => {
                let mut t = y.clone();
                t.dx.iter_mut().zip(&kx.dx).for_each(|(a, b)| *a += b);
                t.dy.iter_mut().zip(&kx.dy).for_each(|(a, b)| *a += b);
                let p = prox_gstar(&DualVar { y: Some(t) }, 1.0, &self.reg, &self.grid);
                let p = p.y.expect("projection keeps the field");
                let dx = y.dx.iter().zip(&p.dx).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let dy = y.dy.iter().zip(&p.dy).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                (dx + dy).sqrt()
            }
            _ => 0.0,
        };
        Ok(Residuals {
            pde: pde.sqrt(),
            adjoint: adjoint.sqrt(),
            control,
            dual,
        })
    }
}

/// Scalar family: `|c - c̃| / |c̃|`. Diffusion family: the scale-invariant
/// `‖(c̃/c) a - ã‖ / ‖ã‖`.
pub fn relative_error(x: &ControlParam, x_ref: &ControlParam) -> Result<f64> {
    match (&x.a, &x_ref.a) {
        (None, None) => {
            if x_ref.c == 0.0 {
                return Err(Error::ZeroReference);
            }
            Ok((x.c - x_ref.c).abs() / x_ref.c.abs())
        }
        (Some(a), Some(a_ref)) => {
            let ref_norm = norm(&a_ref.values);
            if ref_norm == 0.0 || x.c == 0.0 {
                return Err(Error::ZeroReference);
            }
            let s = x_ref.c / x.c;
            let diff: f64 = a
                .values
                .iter()
                .zip(&a_ref.values)
                .map(|(v, r)| (s * v - r).powi(2))
                .sum();
            Ok(diff.sqrt() / ref_norm)
        }
        _ => Err(Error::FamilyMismatch("matching reference")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;

    #[test]
    fn accelerated_rule_keeps_product() {
        let rule = StepRule::Accelerated {
            tau0: 1.0,
            sigma0: 0.3,
            gamma_f: 0.5,
        };
        let (t1, s1, w0) = advance_step_rule(&rule, 1.0, 0.3);
        assert!((w0 - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((t1 - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((t1 * s1 - 0.3).abs() < 1e-15);
        let (mut t, mut s) = (t1, s1);
        for _ in 0..100 {
            let (tn, sn, w) = advance_step_rule(&rule, t, s);
            assert!(w > 0.0 && w < 1.0);
            assert!((tn * sn - t * s).abs() <= 1e-14 * t * s);
            assert!(tn < t);
            (t, s) = (tn, sn);
        }
    }

    #[test]
    fn constant_and_linear_rules_are_stationary() {
        let c = StepRule::Constant {
            tau: 0.025,
            sigma: 1.0,
            omega: 1.0,
        };
        assert_eq!(advance_step_rule(&c, 0.025, 1.0), (0.025, 1.0, 1.0));
        let l = StepRule::LinearRate {
            tau: 0.1,
            gamma_f: 2.0,
            gamma_gstar: 4.0,
        };
        let (t0, s0) = l.initial();
        assert_eq!((t0, s0), (0.1, 0.05));
        let (t1, s1, w) = advance_step_rule(&l, t0, s0);
        assert_eq!((t1, s1), (t0, s0));
        assert!((w - 1.0 / 1.4).abs() < 1e-15);
        assert!(StepRule::Accelerated {
            tau0: 1.0,
            sigma0: 1.0,
            gamma_f: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn relative_error_cases() {
        let e = relative_error(&ControlParam::scalar(4.0), &ControlParam::scalar(1.0)).unwrap();
        assert!((e - 3.0).abs() < 1e-15);
        assert_eq!(
            relative_error(&ControlParam::scalar(2.0), &ControlParam::scalar(2.0)).unwrap(),
            0.0
        );
        assert!(relative_error(&ControlParam::scalar(2.0), &ControlParam::scalar(0.0)).is_err());
        let g = GridSpec::new(4).unwrap();
        let a_ref = GridFunction::from_fn(&g, |x, y| 1.0 + x * y);
        let x_ref = ControlParam::diffusion(a_ref.clone(), 1.3);
        for t in [0.5, 1.0, 3.0] {
            let scaled = ControlParam::diffusion(
                GridFunction {
                    values: a_ref.values.iter().map(|v| t * v).collect(),
                },
                t * 1.3,
            );
            assert!(relative_error(&scaled, &x_ref).unwrap() < 1e-15);
        }
    }
}
