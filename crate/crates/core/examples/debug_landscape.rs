//! Scratch: single-restart cost trace of the optimiser.

use colalign_core::calibrate::{optimisation_cost, OptimParams};
use colalign_core::emor::EmorCoefficients;
use colalign_core::synth::{
    derive_inverse_emor, generate_scene, scene_intensity_ccps, synthetic_dorf, trial_scene_spec,
    RecoveryTemplate,
};
use colalign_core::BoldParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let db = synthetic_dorf(201, 2024).unwrap();
    let basis = derive_inverse_emor(&db, 5).unwrap();
    let mean_norm = basis.mean_curve().unwrap().normalised(1e-6).unwrap();
    let forward = mean_norm.inverted().unwrap();

    let template = RecoveryTemplate {
        noise_sigma: 0.0,
        seed: 3,
        ..RecoveryTemplate::default()
    };
    let (mut spec, _) = trial_scene_spec(&db, &template, 0);
    spec.crf = forward.clone();
    spec.noise_sigma = 0.0;
    let scene = generate_scene(&spec).unwrap();
    let ccps = scene_intensity_ccps(&scene).unwrap();

    let opt = OptimParams {
        psi1: 0.03,
        psi2: 0.03,
        seed: 11,
        ..OptimParams::default()
    };
    let bold = BoldParams { lambda1: 0.0, ..BoldParams::default() };

    let cost_of = |theta: &[f64]| {
        optimisation_cost(
            &EmorCoefficients { theta: theta.to_vec() },
            &basis,
            &ccps,
            &bold,
            &opt,
        )
        .unwrap()
        .0
    };
    println!("cost(0) = {:.6}", cost_of(&[0.0; 5]));

    // Manual Adam trace replicating the optimiser's update rule.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    println!("theta0 = {theta:?}, cost = {:.6}", cost_of(&theta));
    let (mut m, mut v) = (vec![0.0; 5], vec![0.0; 5]);
    let mut prev = cost_of(&theta);
    let fd = 1e-4;
    for epoch in 0..600 {
        let mut grad = vec![0.0; 5];
        for j in 0..5 {
            let s = theta[j];
            theta[j] = s + fd;
            let up = cost_of(&theta);
            theta[j] = s - fd;
            let dn = cost_of(&theta);
            theta[j] = s;
            grad[j] = (up - dn) / (2.0 * fd);
        }
        let lr = 0.5 * 0.9f64.powf(epoch as f64 / 1000.0);
        let t = (epoch + 1) as f64;
        for j in 0..5 {
            m[j] = 0.9 * m[j] + 0.1 * grad[j];
            v[j] = 0.999 * v[j] + 0.001 * grad[j] * grad[j];
            let mh = m[j] / (1.0 - 0.9f64.powf(t));
            let vh = v[j] / (1.0 - 0.999f64.powf(t));
            theta[j] -= lr * mh / (vh.sqrt() + 1e-8);
        }
        let c = cost_of(&theta);
        if epoch < 12 || epoch % 50 == 0 {
            println!("epoch {epoch:>3}: cost {c:.6}  |dcost| {:.6}", (c - prev).abs());
        }
        if (c - prev).abs() < 1e-3 {
            println!("STOP at epoch {epoch}: cost {c:.6} (|dcost| < tol)");
            break;
        }
        prev = c;
    }
}
