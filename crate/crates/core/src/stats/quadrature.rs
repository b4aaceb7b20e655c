use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights for ∫ f(η) φ(η) dη with φ the standard normal density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Orthonormal probabilists' Hermite polynomial p_n and its derivative at `x`,
/// together with Σ_{k<n} p_k(x)² (the reciprocal Christoffel weight).
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0;
    let mut d_prev = 0.0;
    let mut d = 0.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += p * p;
        let kf = k as f64;
        let next = (x * p - kf.sqrt() * p_prev) / (kf + 1.0).sqrt();
        let d_next = (p + x * d - kf.sqrt() * d_prev) / (kf + 1.0).sqrt();
        p_prev = p;
        p = next;
        d_prev = d;
        d = d_next;
    }
    (p, d, sum_sq)
}

/// Gauss–Hermite rule under the standard normal weight, exact for
/// polynomials of degree ≤ 2n−1.
///
/// Nodes come from the symmetric Jacobi matrix (Golub–Welsch), are polished
/// by Newton steps on the orthonormal recurrence, and weights use the
/// Christoffel formula, which stays stable up to n = 64.
pub fn gauss_hermite(n: usize) -> Result<GaussHermite> {
    if !(1..=64).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "Gauss-Hermite node count must lie in [1, 64], got {n}"
        )));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..4 {
            let (p, dp, _) = orthonormal_hermite(n, *x);
            if dp == 0.0 {
                break;
            }
            *x -= p / dp;
        }
        let (_, _, sum_sq) = orthonormal_hermite(n, *x);
        weights.push(1.0 / sum_sq);
    }
    // exact symmetry about zero
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(GaussHermite { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_moment_two_nodes() {
        let gh = gauss_hermite(2).unwrap();
        assert!((gh.integrate(|x| x * x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fourth_moment_three_nodes() {
        let gh = gauss_hermite(3).unwrap();
        assert!((gh.integrate(|x| x.powi(4)) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn lognormal_mean_sixteen_nodes() {
        let gh = gauss_hermite(16).unwrap();
        assert!((gh.integrate(|x| (0.5 * x).exp()) - 0.125_f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn exact_up_to_degree_2n_minus_1() {
        // E[η^{2k}] = (2k-1)!!
        for n in [4usize, 10, 32, 64] {
            let gh = gauss_hermite(n).unwrap();
            let mut dfact = 1.0;
            for k in 1..n.min(12) {
                dfact *= (2 * k - 1) as f64;
                let m = gh.integrate(|x| x.powi(2 * k as i32));
                assert!((m - dfact).abs() / dfact < 1e-9, "n={n} k={k} got {m}");
                assert!(gh.integrate(|x| x.powi(2 * k as i32 - 1)).abs() < 1e-9 * dfact);
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(gauss_hermite(0).is_err());
        assert!(gauss_hermite(65).is_err());
    }
}
