//! Analysis filter banks and algebraic (Bezout) synthesis design.
//!
//! An analysis bank (H0, H1) is kept both as explicit sparse filters and,
//! when it is polynomial in L_sym, as the polynomial pair (P0, P1). The
//! bank is expected to have bandwidth sigma >= 1, to pass/block the
//! normalized constant signal D^{1/2} 1, and to be stable on l2, i.e.
//! H = H0'H0 + H1'H1 positive definite. `check_assumptions` verifies all
//! three and reports stability constants.
//!
//! Bezout synthesis solves P0 Q0 + P1 Q1 = 1, giving a synthesis bank
//! whose bandwidth does not exceed the analysis bandwidth.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GrowthProfile};
use crate::sparse::CsrMatrix;
use crate::spectral::{
    apply_polynomial, laplacian_sym, materialize_polynomial, normalized_constant, GraphFilter,
    Polynomial,
};

/// Analysis pair (H0, H1) with cached H = H0'H0 + H1'H1.
#[derive(Debug, Clone)]
pub struct AnalysisBank {
    graph: Arc<Graph>,
    laplacian: GraphFilter,
    h0: GraphFilter,
    h1: GraphFilter,
    polynomials: Option<(Polynomial, Polynomial)>,
    bandwidth: usize,
    h_matrix: CsrMatrix,
}

impl AnalysisBank {
    /// Bank defined by polynomials of L_sym; filters are materialized.
    pub fn from_polynomials(g: &Arc<Graph>, p0: Polynomial, p1: Polynomial) -> Result<Self> {
        let laplacian = laplacian_sym(g);
        let h0 = materialize_polynomial(&laplacian, &p0)?;
        let h1 = materialize_polynomial(&laplacian, &p1)?;
        Ok(Self::assemble(g, laplacian, h0, h1, Some((p0, p1))))
    }

    /// Bank from explicit filters (no polynomial structure assumed).
    pub fn from_filters(h0: GraphFilter, h1: GraphFilter) -> Self {
        let g = Arc::clone(h0.graph());
        let laplacian = laplacian_sym(&g);
        Self::assemble(&g, laplacian, h0, h1, None)
    }

    fn assemble(
        g: &Arc<Graph>,
        laplacian: GraphFilter,
        h0: GraphFilter,
        h1: GraphFilter,
        polynomials: Option<(Polynomial, Polynomial)>,
    ) -> Self {
        let bandwidth = h0.bandwidth().max(h1.bandwidth());
        let h_matrix = h0
            .matrix()
            .transpose()
            .matmul(h0.matrix())
            .add(&h1.matrix().transpose().matmul(h1.matrix()));
        Self {
            graph: Arc::clone(g),
            laplacian,
            h0,
            h1,
            polynomials,
            bandwidth,
            h_matrix,
        }
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn laplacian(&self) -> &GraphFilter {
        &self.laplacian
    }

    pub fn h0(&self) -> &GraphFilter {
        &self.h0
    }

    pub fn h1(&self) -> &GraphFilter {
        &self.h1
    }

    pub fn polynomials(&self) -> Option<(&Polynomial, &Polynomial)> {
        self.polynomials.as_ref().map(|(a, b)| (a, b))
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// H = H0'H0 + H1'H1, sparse with bandwidth at most 2 sigma.
    pub fn h_matrix(&self) -> &CsrMatrix {
        &self.h_matrix
    }

    /// Subband outputs z0 = H0 x, z1 = H1 x.
    pub fn analyze(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.h0.apply(x)?, self.h1.apply(x)?))
    }
}

/// Spline analysis bank of order n: H0 = (I - L_sym/2)^n, H1 = (L_sym/2)^n.
pub fn spline_analysis(g: &Arc<Graph>, n: usize) -> Result<AnalysisBank> {
    assert!(n >= 1, "spline order must be >= 1");
    let (p0, p1) = spline_polynomials(n);
    AnalysisBank::from_polynomials(g, p0, p1)
}

/// (P0, P1) = ((1 - t/2)^n, (t/2)^n).
pub fn spline_polynomials(n: usize) -> (Polynomial, Polynomial) {
    let low = Polynomial::new(vec![1.0, -0.5]);
    let high = Polynomial::new(vec![0.0, 0.5]);
    (low.pow(n), high.pow(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisProvenance {
    Bezout,
    LiftedBezout,
    LeastSquares,
}

/// Polynomial synthesis bank G_l = Q_l(L_sym).
#[derive(Debug, Clone)]
pub struct SynthesisBank {
    pub q0: Polynomial,
    pub q1: Polynomial,
    pub provenance: SynthesisProvenance,
    pub bandwidth: usize,
}

impl SynthesisBank {
    /// x~ = G0 z0 + G1 z1.
    pub fn synthesize(&self, lap: &GraphFilter, z0: &[f64], z1: &[f64]) -> Result<Vec<f64>> {
        let a = apply_polynomial(lap, &self.q0, z0)?;
        let b = apply_polynomial(lap, &self.q1, z1)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut num = 1.0f64;
    for i in 0..k {
        num = num * (n - i) as f64 / (i + 1) as f64;
    }
    num
}

/// Bezout synthesis for the spline bank of order n, from the closed-form
/// binomial expansion of ((1-u) + u)^{2n-1} = 1 with u = t/2. By
/// construction Q0(0) = 1 and Q1(0) = 0, and the bandwidth equals n.
pub fn bezout_synthesis_spline(n: usize) -> SynthesisBank {
    assert!(n >= 1, "spline order must be >= 1");
    let u = Polynomial::new(vec![0.0, 0.5]);
    let one_minus_u = Polynomial::new(vec![1.0, -0.5]);

    let mut q0 = Polynomial::zero();
    let mut q1 = Polynomial::zero();
    for l in 0..n {
        let c = binomial(2 * n - 1, l);
        q0 = q0.add(&one_minus_u.pow(n - 1 - l).mul(&u.pow(l)).scale(c));
        q1 = q1.add(&u.pow(n - 1 - l).mul(&one_minus_u.pow(l)).scale(c));
    }
    let c = binomial(2 * n - 1, n - 1);
    q0 = q0.add(&u.pow(n).scale(c));
    q1 = q1.sub(&one_minus_u.pow(n).scale(c));

    SynthesisBank {
        q0,
        q1,
        provenance: SynthesisProvenance::Bezout,
        bandwidth: n,
    }
}

/// |resultant| of two polynomials after max-abs coefficient normalization;
/// zero (within tolerance) signals a common root.
pub fn normalized_resultant(p0: &Polynomial, p1: &Polynomial) -> f64 {
    let norm = |p: &Polynomial| {
        let m = p.coeffs().iter().fold(0.0f64, |a, c| a.max(c.abs()));
        Polynomial::new(p.coeffs().iter().map(|c| c / m).collect())
    };
    let a = norm(p0);
    let b = norm(p1);
    let (m, n) = (a.degree(), b.degree());
    if m == 0 && n == 0 {
        return 1.0;
    }
    // Sylvester matrix determinant
    let size = m + n;
    let mut s = nalgebra::DMatrix::<f64>::zeros(size, size);
    for row in 0..n {
        for (k, c) in a.coeffs().iter().rev().enumerate() {
            s[(row, row + k)] = *c;
        }
    }
    for row in 0..m {
        for (k, c) in b.coeffs().iter().rev().enumerate() {
            s[(n + row, row + k)] = *c;
        }
    }
    s.lu().determinant().abs()
}

const RESULTANT_TOL: f64 = 1e-12;

/// General Bezout synthesis via the extended Euclidean algorithm. Returns
/// the unique pair with deg Q0 <= deg P1, deg Q1 <= deg P0 normalized (when
/// P0(0) != 0) so that Q0(0) = 1 and Q1(0) = 0. An optional residual
/// polynomial R maps the pair to (Q0 + R P1, Q1 - R P0).
pub fn bezout_synthesis_general(
    p0: &Polynomial,
    p1: &Polynomial,
    residual: Option<&Polynomial>,
) -> Result<SynthesisBank> {
    if p0.is_zero() || p1.is_zero() {
        return Err(Error::Degenerate("zero analysis polynomial"));
    }
    let resultant = normalized_resultant(p0, p1);
    if resultant < RESULTANT_TOL {
        return Err(Error::CommonRoot { resultant });
    }

    let (gcd, mut q0, mut q1) = extended_euclid(p0, p1);
    // gcd is a nonzero constant here; scale the certificate to gcd = 1
    let c = gcd.coeffs()[0];
    q0 = q0.scale(1.0 / c);
    q1 = q1.scale(1.0 / c);

    // reduce to the minimal-degree pair: q0 mod p1 (strict), adjusting q1
    if q0.degree() >= p1.degree() && !q0.is_zero() && p1.degree() >= 1 {
        let (quot, rem) = q0.divmod(p1);
        q0 = rem;
        q1 = q1.add(&quot.mul(p0));
    }
    // normalize Q1(0) = 0 where possible
    if p0.eval(0.0) != 0.0 {
        let shift = q1.eval(0.0) / p0.eval(0.0);
        if shift != 0.0 {
            q0 = q0.add(&p1.scale(shift));
            q1 = q1.sub(&p0.scale(shift));
        }
    }
    if let Some(r) = residual {
        q0 = q0.add(&r.mul(p1));
        q1 = q1.sub(&r.mul(p0));
    }

    let bandwidth = q0.degree().max(q1.degree());
    Ok(SynthesisBank {
        q0,
        q1,
        provenance: SynthesisProvenance::Bezout,
        bandwidth,
    })
}

/// Extended Euclid: returns (g, s, t) with s p0 + t p1 = g.
fn extended_euclid(p0: &Polynomial, p1: &Polynomial) -> (Polynomial, Polynomial, Polynomial) {
    let (mut r0, mut r1) = (p0.clone(), p1.clone());
    let (mut s0, mut s1) = (Polynomial::constant(1.0), Polynomial::zero());
    let (mut t0, mut t1) = (Polynomial::zero(), Polynomial::constant(1.0));
    while !r1.is_zero() && r1.degree() > 0 {
        let (q, r) = r0.divmod(&r1);
        let s = s0.sub(&q.mul(&s1));
        let t = t0.sub(&q.mul(&t1));
        r0 = r1;
        r1 = r;
        s0 = s1;
        s1 = s;
        t0 = t1;
        t1 = t;
    }
    if r1.is_zero() {
        (r0, s0, t0)
    } else {
        (r1, s1, t1)
    }
}

/// Lifting: G0~ = G0 + Q1(0) H1, G1~ = G1 - Q1(0) H0. Preserves perfect
/// reconstruction and makes G1~ block the normalized constant signal.
pub fn lift(bank: &SynthesisBank, h: &AnalysisBank) -> Result<SynthesisBank> {
    let (p0, p1) = h
        .polynomials()
        .ok_or(Error::Degenerate("lifting needs a polynomial analysis bank"))?;
    let q1_at_zero = bank.q1.eval(0.0);
    let q0 = bank.q0.add(&p1.scale(q1_at_zero));
    let q1 = bank.q1.sub(&p0.scale(q1_at_zero));
    let bandwidth = q0.degree().max(q1.degree());
    Ok(SynthesisBank {
        q0,
        q1,
        provenance: SynthesisProvenance::LiftedBezout,
        bandwidth,
    })
}

/// How the extremal eigenvalues of H were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KappaSource {
    DenseEigen,
    Iterative,
}

/// Stability constants and certified l^p bounds of an analysis bank.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub sigma: usize,
    /// Assumption on bandwidth: sigma >= 1.
    pub bandwidth_ok: bool,
    /// H0 passes and H1 blocks D^{1/2} 1 (within tolerance).
    pub passes_constant: bool,
    pub blocks_constant: bool,
    /// Exact l2 stability bounds: c2 = lambda_min(H)^{1/2}, d2 = lambda_max(H)^{1/2}.
    pub c2: f64,
    pub d2: f64,
    pub kappa: f64,
    /// ln(kappa / (kappa - 1)); +inf when kappa = 1.
    pub theta: f64,
    pub kappa_source: KappaSource,
    pub schur_h0: f64,
    pub schur_h1: f64,
    /// Certified lower/upper l^p stability bounds from the bandwidth
    /// theorem; bounds, not optimal constants, for p != 2.
    pub lp_lower_bound: f64,
    pub lp_upper_bound: f64,
}

pub struct CheckOptions {
    pub dense_ceiling: usize,
    pub iter_tol: f64,
    pub constant_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            dense_ceiling: 2000,
            iter_tol: 1e-6,
            constant_tol: 1e-9,
        }
    }
}

/// Verify the analysis assumptions and compute stability constants.
/// Errors with NotPositiveDefinite when H fails the l2 stability test.
pub fn check_assumptions(
    h: &AnalysisBank,
    growth: &GrowthProfile,
    opts: &CheckOptions,
) -> Result<StabilityReport> {
    let g = h.graph();
    let c = normalized_constant(g);
    let h0c = h.h0().apply(&c)?;
    let h1c = h.h1().apply(&c)?;
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let passes_constant = h0c
        .iter()
        .zip(&c)
        .all(|(a, b)| (a - b).abs() <= opts.constant_tol * scale.max(1.0));
    let blocks_constant = h1c
        .iter()
        .all(|a| a.abs() <= opts.constant_tol * scale.max(1.0));

    let (lambda_min, lambda_max, kappa_source) = extremal_eigenvalues(h.h_matrix(), opts)?;
    if lambda_min <= 1e-12 * lambda_max.max(1.0) {
        return Err(Error::NotPositiveDefinite { lambda_min });
    }
    let kappa = lambda_max / lambda_min;
    let theta = if kappa <= 1.0 + 1e-12 {
        f64::INFINITY
    } else {
        (kappa / (kappa - 1.0)).ln()
    };

    let sigma = h.bandwidth();
    // the bound formulas assume sigma >= 1; they stay valid for wider sigma
    let sigma_eff = sigma.max(1);
    let d = growth.dimension;
    let d1 = growth.density;
    let norm_h = lambda_max;
    let d_fact = (1..=(d.round() as u64).max(1))
        .map(|k| k as f64)
        .product::<f64>();
    let lp_upper = 2.0 * d1 * ((sigma_eff + 1) as f64).powf(d) * norm_h.sqrt();
    let lp_lower = norm_h.sqrt()
        / (d_fact
            * 2.0f64.powf(d + 1.0)
            * d1
            * d1
            * ((sigma_eff + 1) as f64).powf(2.0 * d)
            * kappa.powf(d + 2.0));

    Ok(StabilityReport {
        sigma,
        bandwidth_ok: sigma >= 1,
        passes_constant,
        blocks_constant,
        c2: lambda_min.sqrt(),
        d2: lambda_max.sqrt(),
        kappa,
        theta,
        kappa_source,
        schur_h0: crate::spectral::schur_norm(h.h0()),
        schur_h1: crate::spectral::schur_norm(h.h1()),
        lp_lower_bound: lp_lower,
        lp_upper_bound: lp_upper,
    })
}

/// (lambda_min, lambda_max) of a symmetric positive semidefinite sparse
/// matrix: dense eigendecomposition up to the ceiling, otherwise power
/// iteration for lambda_max and inverse iteration (CG inner solves) for
/// lambda_min.
pub fn extremal_eigenvalues(m: &CsrMatrix, opts: &CheckOptions) -> Result<(f64, f64, KappaSource)> {
    let n = m.nrows();
    if n <= opts.dense_ceiling {
        let eig = nalgebra::SymmetricEigen::try_new(m.to_dense(), 1e-13, 0)
            .ok_or_else(|| Error::ConvergenceFailure("symmetric QR did not converge".into()))?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &l in eig.eigenvalues.iter() {
            lo = lo.min(l);
            hi = hi.max(l);
        }
        return Ok((lo, hi, KappaSource::DenseEigen));
    }

    let cap = 10 * n;
    let lambda_max = power_iteration(m, opts.iter_tol, cap);
    let lambda_min = inverse_iteration_min(m, lambda_max, opts.iter_tol, cap)?;
    Ok((lambda_min, lambda_max, KappaSource::Iterative))
}

fn deterministic_start(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 + ((i as f64 * 0.7368).sin()) * 0.37)
        .collect()
}

fn power_iteration(m: &CsrMatrix, tol: f64, cap: usize) -> f64 {
    let n = m.nrows();
    let mut x = deterministic_start(n);
    let mut y = vec![0.0; n];
    let mut lambda = 0.0f64;
    for _ in 0..cap {
        m.matvec(&x, &mut y);
        let num: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        let next = num / den;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if (next - lambda).abs() <= tol * next.abs().max(1e-300) {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Smallest eigenvalue via inverse iteration with a CG inner solver; the
/// Rayleigh quotient of the iterate is the estimate.
fn inverse_iteration_min(m: &CsrMatrix, lambda_max: f64, tol: f64, cap: usize) -> Result<f64> {
    let n = m.nrows();
    let mut x = deterministic_start(n);
    normalize(&mut x);
    let mut lambda = lambda_max;
    for _ in 0..cap.min(400) {
        let mut y = cg_solve(m, &x, 1e-12, 4 * n)?;
        normalize(&mut y);
        let my = m.matvec_alloc(&y);
        let next: f64 = y.iter().zip(&my).map(|(a, b)| a * b).sum();
        x = y;
        if (next - lambda).abs() <= tol * next.abs().max(1e-300) {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x {
            *v /= norm;
        }
    }
}

fn cg_solve(m: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let b_norm = rs.sqrt().max(1e-300);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        m.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite { lambda_min: pap });
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Ok(x)
}
