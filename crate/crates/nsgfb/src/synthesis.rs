//! Least-squares synthesis bank G_l = H^{-1} H_l', its exponential
//! off-diagonal decay certificate, and the contraction factor that picks
//! the radius for the distributed solver.
//!
//! H = H0'H0 + H1'H1 is kept sparse (bandwidth at most 2 sigma); it is
//! only inverted through a dense Cholesky in the oracle mode, which is
//! the ground truth the distributed module is checked against.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::filterbank::{extremal_eigenvalues, AnalysisBank, CheckOptions, KappaSource};
use crate::graph::{Graph, GrowthProfile};

pub struct LsSynthesis {
    bank: AnalysisBank,
    kappa: f64,
    theta: f64,
    lambda_min: f64,
    lambda_max: f64,
    kappa_source: KappaSource,
    dense: Option<DenseOracle>,
}

struct DenseOracle {
    chol: Cholesky<f64, Dyn>,
    g0: DMatrix<f64>,
    g1: DMatrix<f64>,
}

impl LsSynthesis {
    pub fn bank(&self) -> &AnalysisBank {
        &self.bank
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// theta = ln(kappa/(kappa-1)); +inf when kappa = 1.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn kappa_source(&self) -> KappaSource {
        self.kappa_source
    }

    /// ||H^{-1}||_B2 = 1/lambda_min(H).
    pub fn norm_h_inv(&self) -> f64 {
        1.0 / self.lambda_min
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// Explicit dense G_l, available in oracle mode.
    pub fn dense_g(&self, l: usize) -> Option<&DMatrix<f64>> {
        self.dense
            .as_ref()
            .map(|d| if l == 0 { &d.g0 } else { &d.g1 })
    }

    /// x~ = G0 z0 + G1 z1 through the explicit dense filters.
    pub fn apply(&self, z0: &[f64], z1: &[f64]) -> Result<Vec<f64>> {
        let d = self.dense.as_ref().ok_or(Error::BudgetExceeded {
            what: "dense LS application",
            size: self.bank.graph().vertex_count(),
            budget: 0,
        })?;
        let y = &d.g0 * DVector::from_column_slice(z0) + &d.g1 * DVector::from_column_slice(z1);
        Ok(y.as_slice().to_vec())
    }

    /// Solve H y = H0' z0 + H1' z1; algebraically identical to `apply`.
    pub fn solve(&self, z0: &[f64], z1: &[f64]) -> Result<Vec<f64>> {
        let d = self.dense.as_ref().ok_or(Error::BudgetExceeded {
            what: "dense LS solve",
            size: self.bank.graph().vertex_count(),
            budget: 0,
        })?;
        let rhs = ls_rhs(&self.bank, z0, z1)?;
        let y = d.chol.solve(&DVector::from_vec(rhs));
        Ok(y.as_slice().to_vec())
    }
}

/// Right-hand side H0' z0 + H1' z1 of the global least-squares problem.
pub fn ls_rhs(bank: &AnalysisBank, z0: &[f64], z1: &[f64]) -> Result<Vec<f64>> {
    let n = bank.graph().vertex_count();
    if z0.len() != n || z1.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z0.len().min(z1.len()),
        });
    }
    let a = bank.h0().matrix().transpose().matvec_alloc(z0);
    let b = bank.h1().matrix().transpose().matvec_alloc(z1);
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

pub const LS_DENSE_CEILING: usize = 5000;

/// Dense-oracle least-squares synthesis: explicit G_l = H^{-1} H_l'.
pub fn ls_synthesis_dense(bank: &AnalysisBank) -> Result<LsSynthesis> {
    ls_synthesis_with(bank, LS_DENSE_CEILING, true)
}

/// Build LS synthesis metadata, optionally materializing the dense oracle
/// when the graph is at most `ceiling` vertices (and `want_dense`).
pub fn ls_synthesis_with(
    bank: &AnalysisBank,
    ceiling: usize,
    want_dense: bool,
) -> Result<LsSynthesis> {
    let n = bank.graph().vertex_count();
    let eig_opts = CheckOptions::default();
    let (lambda_min, lambda_max, kappa_source) = extremal_eigenvalues(bank.h_matrix(), &eig_opts)?;
    if lambda_min <= 1e-12 * lambda_max.max(1.0) {
        return Err(Error::NotPositiveDefinite { lambda_min });
    }
    let kappa = lambda_max / lambda_min;
    let theta = if kappa <= 1.0 + 1e-12 {
        f64::INFINITY
    } else {
        (kappa / (kappa - 1.0)).ln()
    };

    let dense = if want_dense {
        if n > ceiling {
            return Err(Error::BudgetExceeded {
                what: "dense LS synthesis",
                size: n,
                budget: ceiling,
            });
        }
        let h = bank.h_matrix().to_dense();
        let chol = Cholesky::new(h).ok_or(Error::NotPositiveDefinite { lambda_min })?;
        let g0 = chol.solve(&bank.h0().matrix().transpose().to_dense());
        let g1 = chol.solve(&bank.h1().matrix().transpose().to_dense());
        Some(DenseOracle { chol, g0, g1 })
    } else {
        None
    };

    Ok(LsSynthesis {
        bank: bank.clone(),
        kappa,
        theta,
        lambda_min,
        lambda_max,
        kappa_source,
        dense,
    })
}

/// LS synthesis for the spline bank of order n. H = H0^2 + H1^2 since the
/// spline filters are symmetric; kappa <= 2^{2n-1}.
pub fn spline_ls_synthesis(
    g: &std::sync::Arc<Graph>,
    n: usize,
    ceiling: usize,
) -> Result<LsSynthesis> {
    let bank = crate::filterbank::spline_analysis(g, n)?;
    let want_dense = g.vertex_count() <= ceiling;
    ls_synthesis_with(&bank, ceiling, want_dense)
}

/// One sampled pair of the decay certificate.
#[derive(Debug, Clone, Copy)]
pub struct DecaySample {
    pub filter: usize,
    pub i: usize,
    pub j: usize,
    pub rho: u32,
    pub abs_g: f64,
    pub bound: f64,
}

/// Verification record for the exponential off-diagonal decay of the LS
/// synthesis filters: |g_l(i,j)| <= C_l exp(-theta rho(i,j)/(2 sigma))
/// with C_l = D1 (sigma+1)^d (1-1/kappa)^{-1/2} ||H^{-1}||_B2 ||H_l||_inf.
#[derive(Debug)]
pub struct DecayCertificate {
    pub sigma: usize,
    pub theta: f64,
    pub constant: [f64; 2],
    pub samples: Vec<DecaySample>,
    pub violations: Vec<DecaySample>,
    pub kappa_source: KappaSource,
}

const DECAY_SLACK: f64 = 1e-12;

pub struct CertificateOptions {
    /// Check every (i, j) pair up to this vertex count, then subsample.
    pub exhaustive_ceiling: usize,
    /// Rows sampled (deterministic stride) above the ceiling.
    pub sample_rows: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            exhaustive_ceiling: 1000,
            sample_rows: 64,
        }
    }
}

/// Check the decay bound over all (or a deterministic subsample of)
/// vertex pairs. Requires the dense oracle; errors with KappaOne when the
/// bound is vacuous because H is perfectly conditioned.
pub fn decay_certificate(
    ls: &LsSynthesis,
    growth: &GrowthProfile,
    opts: &CertificateOptions,
) -> Result<DecayCertificate> {
    if ls.kappa() <= 1.0 + 1e-12 {
        return Err(Error::KappaOne(
            "decay certificate is vacuous; off-diagonal entries vanish beyond the bandwidth",
        ));
    }
    let g = ls.bank().graph();
    let n = g.vertex_count();
    let sigma = ls.bank().bandwidth().max(1);
    let theta = ls.theta();
    let prefactor = growth.density
        * ((sigma + 1) as f64).powf(growth.dimension)
        * (1.0 - 1.0 / ls.kappa()).powf(-0.5)
        * ls.norm_h_inv();
    let constant = [
        prefactor * ls.bank().h0().matrix().max_abs_entry(),
        prefactor * ls.bank().h1().matrix().max_abs_entry(),
    ];

    let rows: Vec<usize> = if n <= opts.exhaustive_ceiling {
        (0..n).collect()
    } else {
        let stride = (n / opts.sample_rows).max(1);
        (0..n).step_by(stride).collect()
    };

    let mut samples = Vec::new();
    let mut violations = Vec::new();
    for &i in &rows {
        let dist = g.bfs_distances(i);
        for l in 0..2 {
            let gm = ls.dense_g(l).ok_or(Error::BudgetExceeded {
                what: "decay certificate needs the dense oracle",
                size: n,
                budget: 0,
            })?;
            for j in 0..n {
                let rho = dist[j];
                let abs_g = gm[(i, j)].abs();
                let bound = constant[l] * (-theta * rho as f64 / (2.0 * sigma as f64)).exp();
                let sample = DecaySample {
                    filter: l,
                    i,
                    j,
                    rho,
                    abs_g,
                    bound,
                };
                if abs_g > bound + DECAY_SLACK {
                    violations.push(sample);
                }
                samples.push(sample);
            }
        }
    }
    Ok(DecayCertificate {
        sigma,
        theta,
        constant,
        samples,
        violations,
        kappa_source: ls.kappa_source(),
    })
}

/// delta_{r,sigma} = D1^2 (2 sigma + 1)^d kappa^2/(kappa-1)
///                   exp(-theta r/(2 sigma)) (3r + 2 sigma + 1)^d.
/// Zero when kappa = 1 (the local solves are already exact).
pub fn contraction_factor(
    growth: &GrowthProfile,
    sigma: usize,
    kappa: f64,
    r: usize,
) -> Result<f64> {
    assert!(sigma >= 1, "bandwidth must be >= 1");
    if kappa < 1.0 {
        return Err(Error::Degenerate("condition number below one"));
    }
    if kappa <= 1.0 + 1e-12 {
        return Ok(0.0);
    }
    let theta = (kappa / (kappa - 1.0)).ln();
    let d = growth.dimension;
    Ok(growth.density.powi(2) * ((2 * sigma + 1) as f64).powf(d) * kappa.powi(2) / (kappa - 1.0)
        * (-theta * r as f64 / (2.0 * sigma as f64)).exp()
        * ((3 * r + 2 * sigma + 1) as f64).powf(d))
}

/// Smallest radius with delta_{r,sigma} below `threshold`; the factor is
/// not monotone in r, so scan upward.
pub fn smallest_radius_below(
    growth: &GrowthProfile,
    sigma: usize,
    kappa: f64,
    threshold: f64,
) -> Result<usize> {
    for r in 1..100_000 {
        if contraction_factor(growth, sigma, kappa, r)? < threshold {
            return Ok(r);
        }
    }
    Err(Error::Degenerate(
        "no radius meets the contraction threshold",
    ))
}
