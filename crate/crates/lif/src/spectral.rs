//! Principal eigenpairs of small pairwise-reward matrices.
//!
//! Soft rigidity scoring reduces each neighborhood to a symmetric matrix of
//! pairwise rewards in [0, 1] with unit diagonal; its dominant eigenvalue
//! measures how consistently the neighborhood moves. Matrices are tiny
//! (neighborhood size plus one), so the solver favors predictable accuracy
//! over asymptotics: power iteration first, cyclic Jacobi sweeps when the
//! spectral gap is too small for power iteration to make progress.

use crate::error::{Error, Result};

/// Power steps attempted before switching to Jacobi sweeps. Block-structured
/// reward matrices can have eigenvalue ratios near 1, where power iteration
/// needs thousands of steps to hit the residual bound.
const POWER_FALLBACK: usize = 96;

const MAX_JACOBI_SWEEPS: usize = 64;

/// Symmetric matrix of pairwise rigidity rewards with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RewardMatrix {
    /// Identity rewards: every point agrees only with itself.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        RewardMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets the reward for an unordered pair, keeping the matrix symmetric.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Empty {
                context: "reward matrix",
            });
        }
        if self.data.len() != self.n * self.n {
            return Err(Error::LengthMismatch {
                what: "reward matrix storage",
                expected: self.n * self.n,
                got: self.data.len(),
            });
        }
        for i in 0..self.n {
            for j in 0..self.n {
                let x = self.get(i, j);
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        context: "reward matrix entry",
                    });
                }
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::InvalidParam {
                        msg: format!("reward {x} at ({i}, {j}) outside [0, 1]"),
                    });
                }
                if (x - self.get(j, i)).abs() > 1e-12 {
                    return Err(Error::InvalidParam {
                        msg: format!("reward matrix asymmetric at ({i}, {j})"),
                    });
                }
            }
            if (self.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParam {
                    msg: format!("reward matrix diagonal {} at ({i}, {i})", self.get(i, i)),
                });
            }
        }
        Ok(())
    }

    fn mul(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigConfig {
    /// Residual bound is `tol * dim`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for EigConfig {
    fn default() -> Self {
        EigConfig {
            tol: 1e-10,
            max_iterations: 1000,
        }
    }
}

/// A converged dominant eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct Eig {
    pub value: f64,
    /// Unit eigenvector; its largest-magnitude component is non-negative.
    pub vector: Vec<f64>,
    /// Power steps plus Jacobi sweeps spent.
    pub iterations: usize,
    /// Final `‖Av - λv‖`.
    pub residual: f64,
}

fn residual_norm(av: &[f64], value: f64, v: &[f64]) -> f64 {
    av.iter()
        .zip(v)
        .map(|(a, x)| {
            let d = a - value * x;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Flips the vector so its largest-magnitude component (lowest index on
/// ties) is non-negative.
fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

/// Full eigendecomposition by cyclic Jacobi rotations; returns the largest
/// eigenvalue, its eigenvector, and the sweeps used.
fn jacobi_principal(matrix: &RewardMatrix) -> (f64, Vec<f64>, usize) {
    let n = matrix.n;
    let mut a = matrix.data.clone();
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }
    let mut sweeps = 0;
    for sweep in 1..=MAX_JACOBI_SWEEPS {
        sweeps = sweep;
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= 1e-14 * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[k * n + p];
                    let vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..n {
        if a[i * n + i] > a[best * n + best] {
            best = i;
        }
    }
    let mut v: Vec<f64> = (0..n).map(|k| vecs[k * n + best]).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    (a[best * n + best], v, sweeps)
}

/// Dominant eigenpair of a validated reward matrix.
///
/// Starts power iteration from the normalized all-ones vector with the
/// Rayleigh quotient as the eigenvalue estimate, accepting once
/// `‖Av - λv‖ <= tol * dim`. If the gap is too small for power iteration
/// it finishes with Jacobi sweeps and re-checks the residual against the
/// original matrix.
pub fn principal_eig(matrix: &RewardMatrix, config: &EigConfig) -> Result<Eig> {
    matrix.validate()?;
    let n = matrix.n;
    let thresh = config.tol * n as f64;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut iterations = 0;
    let mut power_residual = f64::INFINITY;
    for it in 1..=config.max_iterations.min(POWER_FALLBACK) {
        iterations = it;
        let av = matrix.mul(&v);
        let value: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
        power_residual = residual_norm(&av, value, &v);
        if power_residual <= thresh {
            return Ok(Eig {
                value,
                vector: fix_sign(v),
                iterations,
                residual: power_residual,
            });
        }
        let norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            break;
        }
        v = av.into_iter().map(|x| x / norm).collect();
    }
    let (value, vector, sweeps) = jacobi_principal(matrix);
    let av = matrix.mul(&vector);
    let residual = residual_norm(&av, value, &vector);
    iterations += sweeps;
    if residual <= thresh {
        return Ok(Eig {
            value,
            vector: fix_sign(vector),
            iterations,
            residual,
        });
    }
    Err(Error::EigNotConverged {
        iterations,
        residual: residual.min(power_residual),
    })
}

/// Solves every matrix in order, tagging failures with their index.
pub fn batch_principal_eig(matrices: &[RewardMatrix], config: &EigConfig) -> Result<Vec<Eig>> {
    matrices
        .iter()
        .enumerate()
        .map(|(index, m)| {
            principal_eig(m, config).map_err(|e| Error::BatchEig {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
