//! Property tests for the module invariants. Random inputs are drawn from a
//! seeded generator so that shrinking operates on seeds and dimensions.

use certlab::certificates::TargetSplit;
use certlab::experiments::{records_csv, run_experiment, ExperimentConfig};
use certlab::gaussian::lambda_n;
use certlab::linalg::{dot, norm2, norm_inf, sub, svd, DenseMatrix};
use certlab::losses::{convexity_ratio_gamma, GlmFamily, LossSpec};
use certlab::regularizers::{GroupStructure, RegularizerSpec};
use certlab::rng::{derive_seed, normal_vec, seeded};
use certlab::rsc::{rsc_estimate, sparse_eigs, ConeSpec};
use certlab::solvers::{solve_regularized, SolveOptions, SolveStatus};
use proptest::prelude::*;
use rand::Rng;

fn matrix(seed: u64, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_row_major(rows, cols, normal_vec(&mut seeded(seed), rows * cols)).unwrap()
}

fn vector(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    normal_vec(&mut seeded(seed), n).iter().map(|v| scale * v).collect()
}

/// Lasso, group (3 groups of 2), nuclear (3 × 2) and mixed, all on dimension 6.
fn regularizer(kind: usize, lambda: f64, lg: f64) -> RegularizerSpec {
    let groups = GroupStructure::contiguous(3, 2).unwrap();
    match kind {
        0 => RegularizerSpec::Lasso { lambda },
        1 => RegularizerSpec::Group { lambda, groups },
        2 => RegularizerSpec::Nuclear { lambda, rows: 3, cols: 2 },
        _ => RegularizerSpec::Mixed { lambda1: lambda, lambda_group: lg, groups },
    }
}

fn loss(seed: u64, family: usize, n: usize, p: usize) -> LossSpec {
    let x = matrix(seed, n, p);
    let mut rng = seeded(seed ^ 0xabcd);
    match family {
        0 => LossSpec::quadratic(x, normal_vec(&mut rng, n)).unwrap(),
        1 => LossSpec::glm(x, GlmFamily::Logistic, (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .unwrap(),
        _ => LossSpec::glm(x, GlmFamily::Poisson, (0..n).map(|_| rng.random_range(0..4) as f64).collect()).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(seed in any::<u64>(), rows in 1usize..=20, cols in 1usize..=20) {
        let a = matrix(seed, rows, cols);
        let f = svd(&a).unwrap();
        let err = f.reconstruct().sub(&a).frobenius_norm();
        prop_assert!(err <= 1e-8 * a.frobenius_norm().max(1.0));
        let k = f.s.len();
        prop_assert!(f.u.gram().sub(&DenseMatrix::identity(k)).max_abs() <= 1e-10);
        prop_assert!(f.v.gram().sub(&DenseMatrix::identity(k)).max_abs() <= 1e-10);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]) && f.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn regularizer_is_homogeneous(seed in any::<u64>(), kind in 0usize..4, c in -5.0f64..5.0) {
        let r = regularizer(kind, 0.7, 1.1);
        let b = vector(seed, 6, 1.0);
        let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
        let (v, vc) = (r.value(&b).unwrap(), r.value(&cb).unwrap());
        prop_assert!(v >= 0.0);
        prop_assert!((vc - c.abs() * v).abs() <= 1e-9 * (1.0 + vc.abs()));
    }

    #[test]
    fn holder_inequality(seed in any::<u64>(), kind in 0usize..4) {
        let r = regularizer(kind, 0.8, 1.3);
        let b = vector(seed, 6, 1.0);
        let u = vector(seed.wrapping_add(1), 6, 2.0);
        prop_assert!(dot(&u, &b) <= r.dual_norm(&u).unwrap() * r.value(&b).unwrap() + 1e-10);
    }

    #[test]
    fn prox_satisfies_subgradient_inclusion(seed in any::<u64>(), kind in 0usize..4, t in 0.05f64..3.0, lambda in 0.1f64..2.0) {
        let r = regularizer(kind, lambda, 1.5 * lambda);
        let v = vector(seed, 6, 2.0);
        let x = r.prox(&v, t).unwrap();
        let u: Vec<f64> = sub(&v, &x).iter().map(|d| d / t).collect();
        prop_assert!(r.is_subgradient(&x, &u).unwrap().residual() <= 1e-8);
    }

    #[test]
    fn lasso_and_group_shrinkage_identity(seed in any::<u64>(), t in 0.05f64..3.0, lambda in 0.1f64..2.0) {
        let v = vector(seed, 6, 2.0);
        // Lasso: v − prox(v) is the clip of v to [−tλ, tλ].
        let x = RegularizerSpec::Lasso { lambda }.prox(&v, t).unwrap();
        for i in 0..6 {
            prop_assert!((v[i] - x[i] - v[i].clamp(-t * lambda, t * lambda)).abs() <= 1e-15 * (1.0 + v[i].abs()));
        }
        // Group: v_G − prox(v)_G is v_G projected onto the radius-tλ ball.
        let groups = GroupStructure::contiguous(3, 2).unwrap();
        let x = RegularizerSpec::Group { lambda, groups: groups.clone() }.prox(&v, t).unwrap();
        for j in 0..3 {
            let vg = groups.gather(j, &v);
            let s = (t * lambda / norm2(&vg)).min(1.0);
            for (k, &i) in groups.group(j).iter().enumerate() {
                prop_assert!((v[i] - x[i] - s * vg[k]).abs() <= 1e-14 * (1.0 + v[i].abs()));
            }
        }
    }

    #[test]
    fn tangent_projector_is_idempotent(seed in any::<u64>(), kind in 0usize..4) {
        let r = regularizer(kind, 1.0, 1.2);
        let mut anchor = vector(seed, 6, 1.0);
        anchor[1] = 0.0;
        anchor[4] = 0.0;
        let frame = r.certificate_frame(&anchor, 0.5).unwrap();
        let t = frame.tangent();
        let v = vector(seed.wrapping_add(9), 6, 1.0);
        let pv = t.project_t(&v);
        let ppv = t.project_t(&pv);
        prop_assert!(norm_inf(&sub(&pv, &ppv)) <= 1e-10);
        let perp = t.project_perp(&v);
        prop_assert!(dot(&pv, &perp).abs() <= 1e-10 * (1.0 + dot(&v, &v)));
        // The sign element lives on the tangent part.
        prop_assert!(norm_inf(&t.project_perp(&frame.sign)) <= 1e-10);
    }

    #[test]
    fn bregman_triple_is_consistent(seed in any::<u64>(), family in 0usize..3) {
        let l = loss(seed, family, 6, 3);
        let a = vector(seed.wrapping_add(1), 3, 0.7);
        let b = vector(seed.wrapping_add(2), 3, 0.7);
        let t = l.bregman(&a, &b).unwrap();
        prop_assert!(t.forward >= -1e-12 && t.reverse >= -1e-12);
        let sym: f64 = dot(&sub(&l.gradient(&a).unwrap(), &l.gradient(&b).unwrap()), &sub(&a, &b));
        prop_assert!((t.symmetric - sym).abs() <= 1e-10 * (1.0 + sym.abs()));
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), family in 0usize..3) {
        let l = loss(seed, family, 6, 3);
        let b = vector(seed.wrapping_add(5), 3, 0.5);
        let g = l.gradient(&b).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let (mut up, mut dn) = (b.clone(), b.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (l.value(&up).unwrap() - l.value(&dn).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "coordinate {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn logistic_convexity_ratio(seed in any::<u64>(), amp in 0.5f64..4.0) {
        let l = loss(seed, 1, 8, 3);
        let x = matrix(seed, 8, 3);
        let row_max = (0..8).map(|i| x.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        // Points in the box where every |⟨x_i, β⟩| ≤ amp.
        let scale = amp / row_max;
        let mut rng = seeded(seed ^ 7);
        let a: Vec<f64> = (0..3).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let gamma = convexity_ratio_gamma(&l, amp).unwrap();
        let lhs = l.bregman_divergence(&a, &b).unwrap();
        let rhs = gamma * l.bregman_divergence(&b, &a).unwrap();
        prop_assert!(lhs - rhs >= -1e-8);
    }

    #[test]
    fn target_split_reconstructs_gradient(seed in any::<u64>(), kind in 0usize..4) {
        let r = regularizer(kind, 1.0, 1.2);
        let l = loss(seed, 0, 8, 6);
        let beta = vector(seed.wrapping_add(3), 6, 1.0);
        let frame = r.certificate_frame(&beta, 0.5).unwrap();
        let s = TargetSplit::at(&l, &frame, &beta).unwrap();
        let g = l.gradient(&beta).unwrap();
        for i in 0..6 {
            prop_assert_eq!(s.a_tilde[i] + s.b_tilde[i], g[i]);
        }
        prop_assert!(norm_inf(&frame.tangent().project_t(&s.b_tilde)) <= 1e-10 * (1.0 + norm_inf(&g)));
    }

    #[test]
    fn converged_solves_meet_kkt_tolerance(seed in any::<u64>(), kind in 0usize..4) {
        let r = regularizer(kind, 0.5, 0.8);
        let l = loss(seed, 0, 10, 6);
        let opts = SolveOptions::default();
        let sol = solve_regularized(&l, &r, &opts).unwrap();
        if sol.status == SolveStatus::Converged {
            prop_assert!(sol.kkt_residual <= opts.kkt_tol);
        }
    }

    #[test]
    fn curvature_scales_with_design(seed in any::<u64>(), c in 0.3f64..3.0) {
        let x = matrix(seed, 8, 4);
        let anchor = [1.0, 0.0, -1.0, 0.0];
        let frame = RegularizerSpec::Lasso { lambda: 1.0 }.certificate_frame(&anchor, 0.5).unwrap();
        let split = TargetSplit { beta_star: anchor.to_vec(), a_tilde: vec![0.0; 4], b_tilde: vec![0.0; 4], eta_tilde: 0.0 };
        let cone = ConeSpec::new(frame, split);
        let base = rsc_estimate(&LossSpec::quadratic(x.clone(), vec![0.0; 8]).unwrap(), &cone, 300, 1).unwrap();
        let scaled = rsc_estimate(&LossSpec::quadratic(x.scaled(c), vec![0.0; 8]).unwrap(), &cone, 300, 1).unwrap();
        // The search is grid based, so covariance holds between the bracketing bounds.
        let c2 = c * c;
        prop_assert!(scaled.lower <= c2 * base.upper + 1e-9 * (1.0 + c2 * base.upper));
        prop_assert!(c2 * base.lower <= scaled.upper + 1e-9 * (1.0 + scaled.upper));
        prop_assert!((scaled.upper - c2 * base.upper).abs() <= 1e-2 * (1.0 + scaled.upper));
    }

    #[test]
    fn sparse_eigenvalues_are_monotone(seed in any::<u64>()) {
        let groups = GroupStructure::contiguous(4, 2).unwrap();
        let x = matrix(seed, 10, 8);
        let e: Vec<_> = (1..=4).map(|k| sparse_eigs(&x, &groups, k, &[0]).unwrap()).collect();
        prop_assert!(e.windows(2).all(|w| w[0].rho_plus <= w[1].rho_plus + 1e-12));
        prop_assert!(e.windows(2).all(|w| w[0].gamma_sk + 1e-12 >= w[1].gamma_sk));
    }

    #[test]
    fn experiment_config_round_trips(seed in any::<u64>(), trials in 1usize..50, eta in 0.05f64..1.0, lambda in proptest::option::of(0.1f64..10.0)) {
        let mut cfg = ExperimentConfig::from_json(
            r#"{"schema_version":1,"kind":"oracle_audit","regularizer":"group","n_grid":[10,20],"p":8,"q":4,"m":2,"support":1,"sigma":0.5,"trials":1,"seed":0}"#,
        ).unwrap();
        cfg.seed = seed;
        cfg.trials = trials;
        cfg.eta = eta;
        cfg.lambda = lambda;
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn csv_rows_carry_replayable_seeds(seed in any::<u64>()) {
        let cfg = ExperimentConfig::from_json(&format!(
            r#"{{"schema_version":1,"kind":"phase","regularizer":"lasso","n_grid":[8,16],"p":16,"support":2,"sigma":0.0,"trials":3,"seed":{seed}}}"#
        )).unwrap();
        let a = run_experiment(&cfg).unwrap();
        for r in a.records() {
            prop_assert_eq!(r.seed, derive_seed(seed, r.trial as u64));
        }
        let b = run_experiment(&cfg).unwrap();
        prop_assert_eq!(records_csv(a.records()).unwrap(), records_csv(b.records()).unwrap());
    }
}

#[test]
fn lambda_n_is_increasing() {
    assert!((1..2000).all(|n| lambda_n(n) < lambda_n(n + 1)));
}
