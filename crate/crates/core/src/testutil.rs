//! Shared helpers for unit tests. Compiled only for `cfg(test)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, Uniform};

use crate::data::Dataset;

/// Count data with constant coefficients, standard-normal covariates and a
/// cycling offset.
pub(crate) fn synthetic_global(
    n: usize,
    beta: &[f64],
    offset_scale: f64,
    seed: u64,
) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = beta.len() - 1;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    let mut coords = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    for i in 0..n {
        coords.push([
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
        ]);
        let mut eta = beta[0];
        for c in 0..k {
            let x: f64 = StandardNormal.sample(&mut rng);
            eta += beta[c + 1] * x;
            cols[c].push(x);
        }
        let o = offset_scale * (1.0 + (i % 3) as f64);
        offset.push(o);
        let draw: f64 = Poisson::new(o * eta.exp()).unwrap().sample(&mut rng);
        y.push(draw);
    }
    Dataset::from_parts(coords, y, Some(offset), &cols, &[]).unwrap()
}

/// Count data with smoothly varying coefficients on `[-2, 2]^2`, one
/// covariate, unit offsets. `spread` scales the spatial variation.
pub(crate) fn synthetic_spatial(n: usize, mu0: f64, spread: f64, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = Uniform::new(-2.0f64, 2.0).unwrap();
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [unif.sample(&mut rng), unif.sample(&mut rng)])
        .collect();
    let mut xcol = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let b0 = mu0 + spread * (0.9 * coords[i][0]).sin();
        let b1 = 0.8 + spread * (0.7 * coords[i][1]).cos();
        let x: f64 = StandardNormal.sample(&mut rng);
        xcol.push(x);
        let lam = (b0 + b1 * x).exp();
        let draw: f64 = Poisson::new(lam).unwrap().sample(&mut rng);
        y.push(draw);
    }
    Dataset::from_parts(coords, y, None, &[xcol], &[]).unwrap()
}

/// Dense grid-refinement maximizer for 2-parameter log-likelihoods,
/// independent of any IRLS code path.
pub(crate) fn grid_maximize_loglik(
    loglik: &dyn Fn(&[f64]) -> f64,
    center: [f64; 2],
    mut half_width: f64,
    rounds: usize,
) -> [f64; 2] {
    let mut c = center;
    for _ in 0..rounds {
        let step = half_width / 20.0;
        let mut best = f64::NEG_INFINITY;
        let mut best_pt = c;
        for i in -20..=20i32 {
            for j in -20..=20i32 {
                let pt = [c[0] + step * i as f64, c[1] + step * j as f64];
                let ll = loglik(&pt);
                if ll > best {
                    best = ll;
                    best_pt = pt;
                }
            }
        }
        c = best_pt;
        half_width = step * 2.0;
    }
    c
}
