use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::nn::{Real, Tensor};

/// Orthogonal matrix of shape `rows x cols` scaled by `gain`.
///
/// Columns (or rows, whichever is shorter) are orthonormalised with modified
/// Gram-Schmidt in f64 from a standard-normal draw.
pub fn orthogonal<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<T> {
    let long = rows.max(cols);
    let short = rows.min(cols);
    // `basis[j]` is the j-th orthonormal vector of length `long`
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if rows >= cols { basis[c][r] } else { basis[r][c] };
            out[r * cols + c] = T::from_f64(gain * v);
        }
    }
    out
}

pub fn orthogonal_tensor<T: Real, R: Rng + ?Sized>(shape: &[usize], gain: f64, rng: &mut R) -> Tensor<T> {
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    Tensor::from_vec(shape, orthogonal(rows, cols, gain, rng)).expect("shape product matches")
}

pub fn uniform_tensor<T: Real, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..n).map(|_| T::from_f64(dist.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}
