//! Parameter-free sinusoidal encoding of real-valued distances.

use ndarray::Array2;

use crate::config::ENCODING_BASE;
use crate::tape::Mat;

/// `φ(r)` with `sin` at even and `cos` at odd indices; pair `2i, 2i+1`
/// shares the frequency `base^(-2i/d)`.
pub fn encode_distance(r: f64, d: usize, base: f64) -> Vec<f64> {
    assert!(d % 2 == 0, "encoding dimension must be even");
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let angle = r / base.powf(2.0 * i as f64 / d as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    out
}

/// One encoded row per value.
pub fn encoding_table(values: &[f64], d: usize) -> Mat {
    let mut m = Array2::zeros((values.len(), d));
    for (mut row, &v) in m.rows_mut().into_iter().zip(values) {
        for (dst, x) in row.iter_mut().zip(encode_distance(v, d, ENCODING_BASE)) {
            *dst = x;
        }
    }
    m
}

/// The four pairwise score terms of absolute-position attention when inputs
/// `E + Φ` are projected by `W_q`, `W_k` (`d × d_k`, applied on the right):
/// content-content, content-position, position-content, position-position.
pub fn decomposition_terms(e: &Mat, phi: &Mat, w_q: &Mat, w_k: &Mat) -> [Mat; 4] {
    let qe = e.dot(w_q);
    let qp = phi.dot(w_q);
    let ke = e.dot(w_k);
    let kp = phi.dot(w_k);
    [qe.dot(&ke.t()), qe.dot(&kp.t()), qp.dot(&ke.t()), qp.dot(&kp.t())]
}

/// Largest absolute difference between the unfactored absolute-position
/// scores and the sum of the four terms of [`decomposition_terms`].
pub fn verify_decomposition(e: &Mat, phi: &Mat, w_q: &Mat, w_k: &Mat) -> f64 {
    let x = e + phi;
    let full = x.dot(w_q).dot(&x.dot(w_k).t());
    let [a, b, c, d] = decomposition_terms(e, phi, w_q, w_k);
    let sum = a + b + c + d;
    full.iter()
        .zip(sum.iter())
        .map(|(f, s)| (f - s).abs())
        .fold(0.0, f64::max)
}
