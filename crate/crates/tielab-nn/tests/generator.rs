use tielab::rng::stream_rng;
use tielab::stats::pearson;
use tielab_nn::latent::{generate_latent_pairs, latent_correlation, sample_items, training_set};
use tielab_nn::{generate_nonlinear_pairs, LatentSpec, Mixer, MixerSpec, Mode};

#[test]
fn zero_rho_spurious_block_is_independent_of_quality() {
    let spec = LatentSpec {
        rho: 0.0,
        ..Default::default()
    };
    let n = 50_000;
    let (q, z) = sample_items(&spec, Mode::P, n, &mut stream_rng(1, 0));
    // projection onto the spurious-block mean direction
    let proj: Vec<f64> = z
        .rows()
        .into_iter()
        .map(|r| (spec.d_c_latent..spec.d_c_latent + spec.d_s_latent).map(|j| r[j]).sum())
        .collect();
    let c = pearson(&q, &proj);
    assert!(c.abs() <= 3.0 / (n as f64).sqrt(), "{c}");
}

#[test]
fn adversarial_mode_flips_shortcut_correlation() {
    let spec = LatentSpec::default();
    let n = 100_000;
    let col = spec.dim() - 1;
    let (qp, zp) = sample_items(&spec, Mode::P, n, &mut stream_rng(2, 0));
    let (qq, zq) = sample_items(&spec, Mode::QAdv, n, &mut stream_rng(2, 1));
    let cp = latent_correlation(&qp, &zp, col);
    let cq = latent_correlation(&qq, &zq, col);
    assert!(cp > 0.0 && cq < 0.0, "{cp} {cq}");
    assert!((cp.abs() - cq.abs()).abs() <= 0.05, "{cp} {cq}");
}

#[test]
fn identical_seeds_give_identical_batches() {
    let spec = LatentSpec::default();
    let mixer: Mixer<f32> = Mixer::new(&MixerSpec::default(), spec.dim());
    let a = generate_nonlinear_pairs(&spec, &mixer, Mode::P, 500, 7, 3);
    let b = generate_nonlinear_pairs(&spec, &mixer, Mode::P, 500, 7, 3);
    assert_eq!(a, b);
    let c = generate_nonlinear_pairs(&spec, &mixer, Mode::P, 500, 7, 4);
    assert_ne!(a.q_a, c.q_a);
}

#[test]
fn teacher_labels_follow_quality_difference() {
    let spec = LatentSpec::default();
    let p = generate_latent_pairs(&spec, Mode::P, 40_000, 3, 0);
    let agree = p
        .q_a
        .iter()
        .zip(&p.q_b)
        .zip(&p.a_wins)
        .filter(|((a, b), w)| (a > b) == **w)
        .count() as f64
        / 40_000.0;
    // E[σ(|Δq|)] for Δq ~ N(0, 2) is about 0.74
    assert!(agree > 0.7 && agree < 0.78, "{agree}");
}

#[test]
fn tie_rows_differ_only_in_spurious_coordinates() {
    let spec = LatentSpec::default();
    let set = training_set(&spec, &Mixer::<f64>::identity(spec.dim()), 0.6, 1000, 5, 0);
    assert_eq!(set.strict_count, 600);
    for i in 600..1000 {
        let (w, l) = (set.winners.row(i), set.losers.row(i));
        for j in 0..spec.d_c_latent {
            assert_eq!(w[j], l[j]);
        }
        for j in spec.spurious_range() {
            assert_eq!(w[j], -l[j]);
        }
    }
}

#[test]
fn mixer_is_deterministic_in_its_seed() {
    let a: Mixer<f32> = Mixer::new(&MixerSpec::default(), 21);
    let b: Mixer<f32> = Mixer::new(&MixerSpec::default(), 21);
    let c: Mixer<f32> = Mixer::new(&MixerSpec { seed: 1, ..Default::default() }, 21);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
