//! Analytic gradients of the training losses against central finite
//! differences in f64, on small random networks.

use pursuit_core::nn::{EncoderSpec, JointArch, JointQNet, RecurrentArch, RecurrentQNet, SeqInput};
use pursuit_core::qlearning::{joint_loss_and_grads, recurrent_loss_and_grads, JointBatch, SeqBatch};
use pursuit_core::{rng_for, Stream};
use rand::Rng;

const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Denominator floor: coordinates whose gradients are both below this are compared absolutely.
const FLOOR: f64 = 1e-6;

pub fn max_rel_error(analytic: &[f64], loss: impl Fn(&[f64]) -> f64, params: &[f64]) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + STEP;
        let up = loss(&p);
        p[i] = orig - STEP;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

fn small_encoder(channels: usize, rows: usize, cols: usize) -> EncoderSpec {
    EncoderSpec { channels, rows, cols, maps1: 2, maps2: 3 }
}

/// Worst relative gradient error of the recurrent loss for network `seed`.
pub fn recurrent_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, Stream::Init);
    let net = RecurrentQNet::new(RecurrentArch {
        encoder: small_encoder(5, 5, 6),
        report_width: 2,
        hidden: 4,
        actions: 5,
    });
    assert!(net.param_count() <= 5000);
    let params: Vec<f64> = net.layout.init(&mut rng);
    let (batch, steps) = (2, 3);
    let slots = batch * steps;
    let obs = (0..slots * net.arch.encoder.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let reports = (0..slots * 2).map(|_| f64::from(rng.random_range(0..2u8))).collect();
    let sb = SeqBatch {
        input: SeqInput { batch, steps, obs, reports },
        actions: (0..slots).map(|_| rng.random_range(0..5)).collect(),
        targets: (0..slots).map(|_| rng.random_range(-1.5..1.5)).collect(),
        mask: (0..slots).map(|i| i != slots - 1).collect(),
    };
    let (_, grads) = recurrent_loss_and_grads(&net, &params, &sb, 1.0).unwrap();
    max_rel_error(&grads, |p| recurrent_loss_and_grads(&net, p, &sb, 1.0).unwrap().0, &params)
}

/// Worst relative gradient error of the joint loss for network `seed`.
pub fn joint_case(seed: u64) -> f64 {
    let mut rng = rng_for(seed, Stream::Init);
    let net = JointQNet::new(JointArch {
        encoder: small_encoder(4, 5, 5),
        hidden: 6,
        n_agents: 2,
        actions_per_agent: 3,
    });
    assert!(net.param_count() <= 5000);
    let params: Vec<f64> = net.layout.init(&mut rng);
    let n = 3;
    let batch = JointBatch {
        n,
        inputs: (0..n * net.arch.encoder.input_len()).map(|_| rng.random_range(0.0..1.0)).collect(),
        actions: (0..n).map(|_| rng.random_range(0..9)).collect(),
        targets: (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
    };
    let (_, grads) = joint_loss_and_grads(&net, &params, &batch, 1.0).unwrap();
    max_rel_error(&grads, |p| joint_loss_and_grads(&net, p, &batch, 1.0).unwrap().0, &params)
}
