//! Gauss–Hermite quadrature for integrals against `exp(-t^2)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and log-weights of an `n`-point Gauss–Hermite rule, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub ln_weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence, started from
    /// the eigenvalues of the Jacobi matrix.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 512 {
            return Err(Error::Domain(format!(
                "Gauss-Hermite order must be in 1..=512, got {n}"
            )));
        }
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let nf = n as f64;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        guesses.sort_by(f64::total_cmp);
        let mut nodes = vec![0.0; n];
        let mut ln_weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = guesses[n - 1 - i].abs();
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numerical(format!(
                    "Gauss-Hermite root {i} of order {n} did not converge"
                )));
            }
            let lw = 2f64.ln() - 2.0 * pp.abs().ln();
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            ln_weights[n - 1 - i] = lw;
            ln_weights[i] = lw;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, ln_weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Approximates `∫ exp(-t^2) f(t) dt`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        crate::numeric::stable_sum(
            self.nodes
                .iter()
                .zip(&self.ln_weights)
                .map(|(&t, &lw)| lw.exp() * f(t)),
        )
    }
}
