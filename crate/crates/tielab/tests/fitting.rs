use proptest::prelude::*;
use tielab::datagen::{sample_strict_batch, FeatureLawSpec, PreferenceBatch, Provenance, Regime, TeacherSpec};
use tielab::equilibrium::linearized_equilibrium;
use tielab::trainer::{
    dpo_loss_grad, fit_ridge_mle, local_regime_margin, sgd_trajectory, BatchSource, LrSchedule, TrainConfig,
};
use tielab::BlockVector;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

proptest! {
    #[test]
    fn loss_gradient_matches_central_differences(
        t in prop::collection::vec(-2.0f64..2.0, 5),
        x in prop::collection::vec(-2.0f64..2.0, 5),
        beta in 0.1f64..2.0,
    ) {
        let theta = BlockVector::from_slice(&t, 2);
        let diff = BlockVector::from_slice(&x, 2);
        let (_, g) = dpo_loss_grad(&theta, &diff, beta).unwrap();
        let g = g.to_vec();
        let h = 1e-5;
        let loss = |v: &[f64]| -> f64 {
            let z: f64 = beta * v.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            if z > 0.0 { (-z).exp().ln_1p() } else { -z + z.exp().ln_1p() }
        };
        let fd: Vec<f64> = (0..5).map(|i| {
            let mut p = t.clone();
            let mut m = t.clone();
            p[i] += h;
            m[i] -= h;
            (loss(&p) - loss(&m)) / (2.0 * h)
        }).collect();
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        prop_assume!(den > 1e-6);
        prop_assert!(num / den <= 1e-6, "rel {}", num / den);
    }

    #[test]
    fn full_batch_objective_never_increases(
        rows in prop::collection::vec(-2.0f64..2.0, 6..60),
        beta in 0.1f64..2.0,
        lambda in 0.0f64..0.5,
        radius in 0.2f64..5.0,
    ) {
        let d = 3;
        let mut b = PreferenceBatch::empty(2, 1, 0, 0);
        for r in rows.chunks_exact(d) {
            b.push(r, Provenance::Strict);
        }
        let mut cfg = TrainConfig::new(beta, 2, 1);
        cfg.ridge_lambda = lambda;
        cfg.ball_radius = radius;
        match fit_ridge_mle(&b, &cfg) {
            Ok(r) => {
                // accepted steps decrease f; evaluations may differ by rounding
                let slack = |f: f64| 4.0 * f64::EPSILON * f.abs().max(1.0);
                prop_assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0] + slack(w[0])));
                prop_assert!(r.grad_norm <= 1e-8);
                prop_assert!(r.theta_tilde_hat.norm() <= radius + 1e-9);
            }
            Err(tielab::LabError::NotConverged { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn margin_monitor_is_homogeneous(t in prop::collection::vec(-2.0f64..2.0, 2), c in 0.0f64..10.0) {
        let mut b = PreferenceBatch::empty(1, 1, 0, 0);
        b.push(&[0.5, -1.0], Provenance::Strict);
        b.push(&[-2.0, 0.25], Provenance::Strict);
        let theta = BlockVector::from_slice(&t, 1);
        let one = local_regime_margin(&theta, &b, 0.8).unwrap();
        let scaled = local_regime_margin(&theta.scaled(c), &b, 0.8).unwrap();
        prop_assert!((scaled - c * one).abs() <= 1e-12 * (1.0 + c * one));
    }
}

/// Root of the 1-D stationarity condition by bisection then Newton polish.
fn scalar_oracle(xs: &[f64], beta: f64, lambda: f64) -> f64 {
    let n = xs.len() as f64;
    let grad = |t: f64| -> f64 {
        -beta * xs.iter().map(|x| logistic(-beta * t * x) * x).sum::<f64>() / n + lambda * t
    };
    let hess = |t: f64| -> f64 {
        beta * beta
            * xs.iter()
                .map(|x| {
                    let s = logistic(beta * t * x);
                    s * (1.0 - s) * x * x
                })
                .sum::<f64>()
            / n
            + lambda
    };
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if grad(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..5 {
        t -= grad(t) / hess(t);
    }
    t
}

#[test]
fn three_record_fit_matches_scalar_oracle() {
    let xs = [1.0, -0.5, 2.0];
    for (beta, lambda) in [(0.8, 0.1), (1.5, 0.0), (0.3, 0.02)] {
        let mut b = PreferenceBatch::empty(1, 0, 0, 0);
        for x in xs {
            b.push(&[x], Provenance::Strict);
        }
        let mut cfg = TrainConfig::new(beta, 1, 0);
        cfg.ridge_lambda = lambda;
        let fit = fit_ridge_mle(&b, &cfg).unwrap();
        let oracle = scalar_oracle(&xs, beta, lambda);
        assert!((fit.theta_tilde_hat.causal[0] - oracle).abs() <= 1e-8, "{beta} {lambda}");
    }
}

#[test]
fn local_regime_fit_agrees_with_linearization() {
    let law = FeatureLawSpec::isotropic(Regime::BtFull, 5, 5, 1.0, 0.0);
    let teacher = TeacherSpec {
        theta_dagger: BlockVector::new(vec![0.03; 5], vec![0.02; 5]).unwrap(),
        beta_teacher: 1.0,
    };
    let batch = sample_strict_batch(&law, &teacher, 100_000, 21, 0).unwrap();
    let lin = linearized_equilibrium(&batch.moments().unwrap(), 0.1).unwrap();
    let fit = fit_ridge_mle(&batch, &TrainConfig::new(0.1, 5, 5)).unwrap();
    let margin = local_regime_margin(&fit.theta_tilde_hat, &batch.prefix(1000), 0.1).unwrap();
    assert!(margin <= 0.5, "margin {margin}");
    let rel = fit.theta_tilde_hat.sub(&lin.theta_tilde).norm() / lin.theta_tilde.norm();
    assert!(rel <= 0.1, "rel {rel}");
}

#[test]
fn decaying_sgd_reaches_full_batch_solution() {
    let rows = [[0.9, -0.3], [-0.4, 1.1], [1.5, 0.2], [0.3, 0.8], [-1.0, -0.6]];
    let mut b = PreferenceBatch::empty(1, 1, 0, 0);
    for r in rows {
        b.push(&r, Provenance::Strict);
    }
    let mut cfg = TrainConfig::new(1.0, 1, 1);
    cfg.ridge_lambda = 0.05;
    let mle = fit_ridge_mle(&b, &cfg).unwrap();
    cfg.learning_rate = 1.0;
    cfg.iterations = 20_000;
    cfg.batch_size = rows.len();
    cfg.schedule = LrSchedule::InverseTime { t0: 1000.0 };
    cfg.record_every = 1000;
    let sgd = sgd_trajectory(&mut BatchSource::new(&b), &cfg).unwrap();
    let gap = sgd.theta_tilde_hat.sub(&mle.theta_tilde_hat).norm();
    assert!(gap <= 1e-4, "gap {gap}");
}

#[test]
fn sgd_is_deterministic() {
    let law = FeatureLawSpec::isotropic(Regime::BtFull, 2, 2, 1.0, 0.0);
    let teacher = TeacherSpec {
        theta_dagger: BlockVector::new(vec![0.5; 2], vec![0.3; 2]).unwrap(),
        beta_teacher: 1.0,
    };
    let mut cfg = TrainConfig::new(0.5, 2, 2);
    cfg.iterations = 300;
    cfg.seed = 5;
    let run = || {
        let mut s = tielab::datagen::StrictSampler::new(&law, &teacher).unwrap();
        sgd_trajectory(&mut s, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.theta_tilde_hat, b.theta_tilde_hat);
    assert_eq!(a.trajectory, b.trajectory);
}
