use rand::Rng;

use crate::error::{Error, Result};

/// Sample depths and interval lengths along `[t_near, t_far]`.
///
/// The range is split into `n` equal segments; each sample is a uniform
/// draw within its segment when `stratified`, the midpoint otherwise.
/// `δ_i = t_{i+1} − t_i` and the last interval runs to `t_far`.
pub fn stratified_samples<R: Rng + ?Sized>(t_near: f64, t_far: f64, n: usize, stratified: bool, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let seg = (t_far - t_near) / n as f64;
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let u = if stratified { rng.random::<f64>() } else { 0.5 };
            t_near + seg * (i as f64 + u)
        })
        .collect();
    let mut delta: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    delta.push(t_far - t[n - 1]);
    (t, delta)
}

/// Result of compositing one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    /// `w_i = T_i (1 − exp(−σ_i δ_i))`
    pub weights: Vec<f64>,
    /// `T_i = exp(−Σ_{j<i} σ_j δ_j)`
    pub transmittance: Vec<f64>,
    /// `Σ w_i`
    pub opacity: f64,
}

/// `Ĉ = Σ T_i (1 − exp(−σ_i δ_i)) c_i + T_{N+1}·background`.
pub fn composite(colors: &[[f64; 3]], sigmas: &[f64], deltas: &[f64], background: [f64; 3]) -> Result<Composite> {
    if colors.len() != sigmas.len() || sigmas.len() != deltas.len() {
        return Err(Error::dim("composite inputs differ in length"));
    }
    let mut color = [0.0; 3];
    let mut weights = Vec::with_capacity(sigmas.len());
    let mut transmittance = Vec::with_capacity(sigmas.len());
    let mut optical = 0.0f64;
    for i in 0..sigmas.len() {
        if sigmas[i] < 0.0 || sigmas[i].is_nan() {
            return Err(Error::Numerical(format!("negative density {} at sample {i}", sigmas[i])));
        }
        let t = (-optical).exp();
        let tau = sigmas[i] * deltas[i];
        let w = t * -(-tau).exp_m1();
        for k in 0..3 {
            color[k] += w * colors[i][k];
        }
        transmittance.push(t);
        weights.push(w);
        optical += tau;
    }
    let rest = (-optical).exp();
    for k in 0..3 {
        color[k] += rest * background[k];
    }
    Ok(Composite { color, weights, transmittance, opacity: 1.0 - rest })
}

/// Gradients of the composited color with respect to each sample's color
/// and density, given `∂L/∂Ĉ`.
pub fn composite_backward(
    colors: &[[f64; 3]],
    deltas: &[f64],
    comp: &Composite,
    background: [f64; 3],
    grad_color: [f64; 3],
) -> (Vec<[f64; 3]>, Vec<f64>) {
    let n = colors.len();
    let mut dc = Vec::with_capacity(n);
    for &w in &comp.weights {
        dc.push([w * grad_color[0], w * grad_color[1], w * grad_color[2]]);
    }
    // ∂Ĉ/∂σ_k = δ_k (T_{k+1} c_k − Σ_{i>k} w_i c_i − T_{N+1} bg)
    let t_end = 1.0 - comp.opacity;
    let mut suffix = [t_end * background[0], t_end * background[1], t_end * background[2]];
    let mut ds = vec![0.0; n];
    for k in (0..n).rev() {
        let t_next = comp.transmittance[k] - comp.weights[k];
        let mut g = 0.0;
        for c in 0..3 {
            g += grad_color[c] * (t_next * colors[k][c] - suffix[c]);
        }
        ds[k] = deltas[k] * g;
        for c in 0..3 {
            suffix[c] += comp.weights[k] * colors[k][c];
        }
    }
    (dc, ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn midpoints() {
        let mut r = rng::stream(0, 0);
        assert_eq!(stratified_samples(2.0, 6.0, 1, false, &mut r).0, vec![4.0]);
        let (t, d) = stratified_samples(0.0, 1.0, 4, false, &mut r);
        assert_eq!(t, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(d, vec![0.25, 0.25, 0.25, 0.125]);
    }

    #[test]
    fn stratified_draws_stay_in_segments() {
        let mut r = rng::stream(1, 0);
        for _ in 0..10_000 {
            let (t, d) = stratified_samples(2.0, 6.0, 8, true, &mut r);
            for (i, v) in t.iter().enumerate() {
                assert!(*v >= 2.0 + 0.5 * i as f64 && *v < 2.0 + 0.5 * (i + 1) as f64);
            }
            assert!(d.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn empty_and_opaque_limits() {
        let bg = [1.0, 1.0, 1.0];
        let c = composite(&[[0.2, 0.3, 0.4]; 3], &[0.0; 3], &[0.5; 3], bg).unwrap();
        assert_eq!(c.color, bg);
        assert_eq!(c.opacity, 0.0);
        let c = composite(&[[0.2, 0.3, 0.4], [0.9; 3]], &[100.0, 1.0], &[0.5, 0.5], bg).unwrap();
        for k in 0..3 {
            assert!((c.color[k] - [0.2, 0.3, 0.4][k]).abs() < 1e-9);
        }
        assert!(composite(&[[0.0; 3]], &[-1.0], &[1.0], bg).is_err());
        assert!(composite(&[[0.0; 3]], &[1.0, 2.0], &[1.0], bg).is_err());
    }

    #[test]
    fn constant_medium_matches_analytic_integral() {
        let (sigma, len, col) = (0.7, 3.0, 0.6);
        let mut r = rng::stream(0, 0);
        let (_, d) = stratified_samples(0.0, len, 4096, false, &mut r);
        let c = composite(&vec![[col; 3]; 4096], &vec![sigma; 4096], &d, [0.0; 3]).unwrap();
        let exact = col * (1.0 - (-sigma * len).exp());
        assert!((c.color[0] - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::stream(4, 0);
        let n = 6;
        let cols: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
        let sig: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 2.0).collect();
        let del: Vec<f64> = (0..n).map(|_| 0.1 + r.random::<f64>() * 0.3).collect();
        let bg = [1.0, 0.5, 0.2];
        let g = [0.3, -0.7, 1.1];
        let f = |s: &[f64]| {
            let c = composite(&cols, s, &del, bg).unwrap().color;
            g[0] * c[0] + g[1] * c[1] + g[2] * c[2]
        };
        let comp = composite(&cols, &sig, &del, bg).unwrap();
        let (dc, ds) = composite_backward(&cols, &del, &comp, bg, g);
        for k in 0..n {
            let mut p = sig.clone();
            p[k] += 1e-6;
            let up = f(&p);
            p[k] -= 2e-6;
            let fd = (up - f(&p)) / 2e-6;
            assert!((fd - ds[k]).abs() < 1e-6, "{fd} vs {}", ds[k]);
            assert!((dc[k][1] - comp.weights[k] * g[1]).abs() < 1e-15);
        }
    }
}
