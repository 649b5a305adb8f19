mod common;

use common::*;
use pdpap::grid::{divergence_scaled, gradient_scaled, EdgeField};
use pdpap::pde::{riesz_gradient, Assembler};
use pdpap::prox::{estimate_k_norm, prox_f, prox_gstar};
use pdpap::{ControlParam, DualVar, GridSpec, PdeFamily, RegConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reg(alpha: f64, lambda: f64, gamma: f64) -> RegConfig {
    RegConfig { alpha, lambda, gamma }
}

fn edge_field(grid: &GridSpec, seed: u64, scale: f64) -> EdgeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = EdgeField::zeros(grid);
    for v in e.dx.iter_mut().chain(e.dy.iter_mut()) {
        *v = scale * rand::Rng::gen_range(&mut rng, -1.0..1.0);
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prox_f_matches_brute_force(
        v in -15.0..15.0f64,
        tau in 1e-3..2.0f64,
        alpha in 0.0..2.0f64,
        lambda in 0.1..0.9f64,
    ) {
        let got = prox_f(&ControlParam::scalar(v), tau, &reg(alpha, lambda, 0.0)).c;
        let want = prox_f_oracle(v, tau, alpha, lambda, 1e-6);
        prop_assert!((got - want).abs() <= 1e-5, "{got} vs {want}");
    }

    #[test]
    fn prox_f_is_firmly_nonexpansive(
        a in proptest::collection::vec(-5.0..5.0f64, 16),
        b in proptest::collection::vec(-5.0..5.0f64, 16),
        tau in 1e-3..1.0f64,
        alpha in 0.0..1.0f64,
    ) {
        let cfg = reg(alpha, 0.2, 0.0);
        let x = ControlParam::diffusion(pdpap::GridFunction { values: a }, 1.0);
        let y = ControlParam::diffusion(pdpap::GridFunction { values: b }, 3.0);
        let (px, py) = (prox_f(&x, tau, &cfg), prox_f(&y, tau, &cfg));
        let dp = px.zip_map(&py, |p, q| p - q);
        let dx = x.zip_map(&y, |p, q| p - q);
        prop_assert!(dp.dot(&dp) <= dp.dot(&dx) + 1e-12);
    }

    #[test]
    fn prox_gstar_projects_onto_ball(seed in any::<u64>(), n in 3usize..12, gamma in 1e-3..2.0f64, scale in 0.0..5.0f64) {
        let g = GridSpec::new(n).unwrap();
        let cfg = reg(0.0, 0.1, gamma);
        let y = DualVar { y: Some(edge_field(&g, seed, scale)) };
        let p = prox_gstar(&y, 1.0, &cfg, &g);
        prop_assert!(p.max_pointwise_norm(&g) <= gamma + 1e-12);
        let pp = prox_gstar(&p, 1.0, &cfg, &g);
        let (e1, e2) = (p.y.unwrap(), pp.y.unwrap());
        for (a, b) in e1.dx.iter().chain(&e1.dy).zip(e2.dx.iter().chain(&e2.dy)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_and_divergence_are_negative_adjoints(seed in any::<u64>(), n in 3usize..15) {
        let g = GridSpec::new(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_vec(g.node_count(), &mut rng);
        let e = edge_field(&g, seed ^ 0xabc, 1.0);
        let lhs = gradient_scaled(&g, &f, 1.0).dot(&e);
        let rhs: f64 = -divergence_scaled(&g, &e, 1.0).iter().zip(&f).map(|(d, v)| d * v).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn riesz_gradient_is_affine_exact(seed in any::<u64>(), n in 4usize..9, m in 1usize..4, diffusion in any::<bool>()) {
        let family = if diffusion { PdeFamily::DiffusionReaction } else { PdeFamily::ScalarReaction };
        let g = GridSpec::new(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let asm = Assembler::new(family, g, (1..=m).map(|i| pdpap::grid::boundary_data(&g, i)).collect()).unwrap();
        let u: Vec<Vec<f64>> = (0..m).map(|_| random_vec(g.interior_count(), &mut rng)).collect();
        let w: Vec<Vec<f64>> = (0..m).map(|_| random_vec(g.interior_count(), &mut rng)).collect();
        let (x, dx) = if diffusion {
            (
                ControlParam::diffusion(random_field(&g, 0.5, 2.0, &mut rng), 1.2),
                ControlParam::diffusion(random_field(&g, -0.4, 0.4, &mut rng), 0.3),
            )
        } else {
            (ControlParam::scalar(1.7), ControlParam::scalar(-0.6))
        };
        let xp = x.zip_map(&dx, |a, b| a + b);
        let diff = lagrangian_term(&asm, &xp, &u, &w) - lagrangian_term(&asm, &x, &u, &w);
        let ub = asm.primal_bundle(u.iter().map(Vec::as_slice));
        let wb = asm.adjoint_bundle(w.iter().map(Vec::as_slice));
        let pred = riesz_gradient(family, &ub, &wb).unwrap().dot(&dx);
        prop_assert!((pred - diff).abs() <= 1e-11 * diff.abs().max(1.0), "{pred} vs {diff}");
    }
}

#[test]
fn k_norm_on_three_by_three_matches_svd() {
    let g = GridSpec::new(3).unwrap();
    let k = dense_k(&g);
    let sv = k.singular_values();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    assert!((estimate_k_norm(&g) - largest).abs() <= 1e-9);
    assert!((largest * largest - 6.0).abs() <= 1e-10);
}

#[test]
fn k_norm_squared_on_coarse_grid() {
    let g = GridSpec::new(51).unwrap();
    let k2 = estimate_k_norm(&g).powi(2);
    assert!((7.9..=8.0).contains(&k2), "{k2}");
}
