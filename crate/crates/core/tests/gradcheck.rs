//! Central finite differences against the analytic backward pass.

use ndarray::Array2;
use pvrnn_hri::encoding::EncodedSequence;
use pvrnn_hri::pvrnn::{
    bptt_grads, elbo, posterior_rollout, AdaptiveSequence, Carry, GradScope, LayerConfig, NetworkConfig,
    NetworkParams, Noise,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

struct Case {
    config: NetworkConfig,
    params: NetworkParams,
    adaptive: AdaptiveSequence,
    noise: Noise,
    targets: EncodedSequence,
    w: f64,
}

fn small_case(seed: u64, w: f64) -> Case {
    let config = NetworkConfig {
        layers: vec![
            LayerConfig { d_units: 4, z_units: 2, timescale: 2.0 },
            LayerConfig { d_units: 2, z_units: 1, timescale: 5.0 },
        ],
        output_dims: 2,
        bins_per_dim: 5,
        meta_w: w,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::init(&config).unwrap();
    params.for_each_tensor_mut(|_, t| {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    });
    let steps = 5;
    let mut adaptive = AdaptiveSequence::zeros(&config, steps);
    for s in &mut adaptive.steps {
        for v in s.mu.iter_mut().chain(s.sigma.iter_mut()).flatten() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let noise = Noise::sample(&config, steps, &mut rng);
    let mut data = Array2::zeros((steps, 10));
    for mut row in data.rows_mut() {
        for chunk in row.as_slice_mut().unwrap().chunks_mut(5) {
            let raw: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (c, r) in chunk.iter_mut().zip(raw) {
                *c = r / total;
            }
        }
    }
    Case {
        config,
        params,
        adaptive,
        noise,
        targets: EncodedSequence { dims: 2, bins: 5, data },
        w,
    }
}

fn objective(c: &Case, params: &NetworkParams, adaptive: &AdaptiveSequence) -> f64 {
    let r = posterior_rollout(params, &c.config, &Carry::zeros(&c.config), &adaptive.steps, &c.noise).unwrap();
    elbo(&r, &c.targets, c.w).unwrap().total
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Returns the worst relative error per parameter group, plus the adaptive terms.
fn check(c: &Case) -> Vec<(String, f64)> {
    let r = posterior_rollout(&c.params, &c.config, &Carry::zeros(&c.config), &c.adaptive.steps, &c.noise).unwrap();
    let g = bptt_grads(&r, &c.targets, c.w, &c.params, &c.config, GradScope::All).unwrap();
    let analytic = g.params.unwrap();

    let mut names = Vec::new();
    let mut grads = Vec::new();
    analytic.for_each_tensor(|name, t| {
        names.push(name.to_string());
        grads.push(t.to_vec());
    });
    let mut out = Vec::new();
    for (gi, name) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..grads[gi].len() {
            let eval = |delta: f64| {
                let mut p = c.params.clone();
                let mut seen = 0;
                p.for_each_tensor_mut(|_, t| {
                    if seen == gi {
                        t[idx] += delta;
                    }
                    seen += 1;
                });
                objective(c, &p, &c.adaptive)
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            worst = worst.max(rel_err(grads[gi][idx], numeric));
        }
        out.push((name.clone(), worst));
    }

    for which in ["a_mu", "a_sigma"] {
        let mut worst: f64 = 0.0;
        for t in 0..c.adaptive.len() {
            for k in 0..c.config.layers.len() {
                for i in 0..c.config.layers[k].z_units {
                    let eval = |delta: f64| {
                        let mut a = c.adaptive.clone();
                        if which == "a_mu" {
                            a.steps[t].mu[k][i] += delta;
                        } else {
                            a.steps[t].sigma[k][i] += delta;
                        }
                        objective(c, &c.params, &a)
                    };
                    let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
                    let an = if which == "a_mu" { g.adaptive[t].mu[k][i] } else { g.adaptive[t].sigma[k][i] };
                    worst = worst.max(rel_err(an, numeric));
                }
            }
        }
        out.push((which.to_string(), worst));
    }
    out
}

#[test]
fn analytic_gradients_match_finite_differences_over_ten_seeds() {
    for seed in 0..10 {
        let c = small_case(seed, 0.7);
        for (name, err) in check(&c) {
            assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
        }
    }
}

#[test]
fn adaptive_only_scope_matches_full_scope() {
    let c = small_case(3, 0.2);
    let r = posterior_rollout(&c.params, &c.config, &Carry::zeros(&c.config), &c.adaptive.steps, &c.noise).unwrap();
    let full = bptt_grads(&r, &c.targets, c.w, &c.params, &c.config, GradScope::All).unwrap();
    let only = bptt_grads(&r, &c.targets, c.w, &c.params, &c.config, GradScope::AdaptiveOnly).unwrap();
    assert!(only.params.is_none());
    assert_eq!(full.adaptive, only.adaptive);
}

#[test]
fn adaptive_gradient_is_causal() {
    // Truncating the targets after step t must not change ∂L/∂a_t.
    let c = small_case(5, 0.3);
    let init = Carry::zeros(&c.config);
    let r = posterior_rollout(&c.params, &c.config, &init, &c.adaptive.steps, &c.noise).unwrap();
    let full = bptt_grads(&r, &c.targets, c.w, &c.params, &c.config, GradScope::AdaptiveOnly).unwrap();

    // Perturbing the target at the last step leaves a_0..a_{T-1} sensitive only via future losses;
    // so changing target at step 2 must leave gradients at steps 3 and 4 untouched.
    let mut t2 = c.targets.clone();
    t2.data.row_mut(2).mapv_inplace(|_| 0.2);
    let g2 = bptt_grads(&r, &t2, c.w, &c.params, &c.config, GradScope::AdaptiveOnly).unwrap();
    assert_eq!(full.adaptive[3], g2.adaptive[3]);
    assert_eq!(full.adaptive[4], g2.adaptive[4]);
    assert_ne!(full.adaptive[2], g2.adaptive[2]);
}

#[test]
fn sigma_gradient_without_kl_comes_from_reconstruction_only() {
    // With w = 0 the a_σ gradient equals the reconstruction path alone: check against
    // finite differences of the reconstruction term.
    let c = small_case(8, 0.0);
    let init = Carry::zeros(&c.config);
    let r = posterior_rollout(&c.params, &c.config, &init, &c.adaptive.steps, &c.noise).unwrap();
    let g = bptt_grads(&r, &c.targets, 0.0, &c.params, &c.config, GradScope::AdaptiveOnly).unwrap();
    let rec = |a: &AdaptiveSequence| {
        let r = posterior_rollout(&c.params, &c.config, &init, &a.steps, &c.noise).unwrap();
        elbo(&r, &c.targets, 0.0).unwrap().reconstruction
    };
    let mut nonzero = 0;
    for t in 0..5 {
        let mut plus = c.adaptive.clone();
        plus.steps[t].sigma[0][1] += STEP;
        let mut minus = c.adaptive.clone();
        minus.steps[t].sigma[0][1] -= STEP;
        let numeric = (rec(&plus) - rec(&minus)) / (2.0 * STEP);
        assert!(rel_err(g.adaptive[t].sigma[0][1], numeric) < 1e-4);
        if g.adaptive[t].sigma[0][1].abs() > 1e-9 {
            nonzero += 1;
        }
    }
    assert!(nonzero > 0);

    // With ε = 0 the reconstruction does not depend on σ at all.
    let mut zero_noise = c.noise.clone();
    zero_noise.steps.iter_mut().flatten().flatten().for_each(|e| *e = 0.0);
    let r0 = posterior_rollout(&c.params, &c.config, &init, &c.adaptive.steps, &zero_noise).unwrap();
    let g0 = bptt_grads(&r0, &c.targets, 0.0, &c.params, &c.config, GradScope::AdaptiveOnly).unwrap();
    assert!(g0.adaptive.iter().flat_map(|s| s.sigma.iter().flatten()).all(|&v| v == 0.0));
}
