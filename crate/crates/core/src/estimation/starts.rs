use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{logit, ModelSpec, ThetaVector};

/// Constant-term centers: branching fractions BM, BP, MP then hazards M, P.
const CENTER_RHO: [f64; 3] = [0.3, 0.05, 0.3];
const CENTER_GAMMA: [f64; 2] = [0.4, 0.15];
const CENTER_LAMBDA_RAW: f64 = -5.0;
/// Standard deviation of the perturbation applied to non-center starts.
pub const START_SPREAD: f64 = 0.5;

/// Heuristic center: plausible constant levels, flat trends, negligible forcing.
pub fn heuristic_center(spec: &ModelSpec) -> ThetaVector {
    let block = |level: f64, len: usize| {
        let mut v = vec![0.0; len];
        v[0] = logit(level);
        v
    };
    let rho = CENTER_RHO.map(|l| block(l, spec.rho_block_len()));
    let gamma = CENTER_GAMMA.map(|l| block(l, spec.gamma_block_len()));
    ThetaVector::from_blocks(
        spec,
        [&rho[0], &rho[1], &rho[2]],
        [&gamma[0], &gamma[1]],
        spec.forcing().then_some(CENTER_LAMBDA_RAW),
    )
    .expect("blocks sized from the spec")
}

/// `n_starts` optimizer starts: the heuristic center, then seeded Gaussian
/// perturbations of it. Returns an empty list for `n_starts == 0`.
pub fn default_starts(spec: &ModelSpec, n_starts: usize, seed: u64) -> Vec<ThetaVector> {
    let center = heuristic_center(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, START_SPREAD).expect("positive spread");
    let mut out = Vec::with_capacity(n_starts);
    if n_starts == 0 {
        return out;
    }
    out.push(center.clone());
    for _ in 1..n_starts {
        let v = center.as_slice().iter().map(|c| c + noise.sample(&mut rng)).collect();
        out.push(ThetaVector::new(v));
    }
    out
}
