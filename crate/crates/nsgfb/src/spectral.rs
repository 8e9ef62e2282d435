//! Symmetric normalized Laplacian, polynomial filters applied through
//! sparse matrix-vector products, and a dense eigendecomposition oracle.
//!
//! The Laplacian here is L_sym = D^{-1/2} (D - A) D^{-1/2}; its spectrum
//! lies in [0, 2] with eigenvalue 0 on the normalized constant signal
//! D^{1/2} 1. A polynomial filter P(L_sym) = p_0 I + sum_l p_l L_sym^l has
//! bandwidth at most deg P and is evaluated Horner style, never forming
//! matrix powers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{geodesic_ball, Graph};
use crate::sparse::CsrMatrix;

/// Real polynomial in ascending coefficient order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Construct from ascending coefficients; trailing zeros are trimmed.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(&c) if c == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Self::new(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::constant(1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Euclidean division: self = q * divisor + r with deg r < deg divisor.
    pub fn divmod(&self, divisor: &Self) -> (Self, Self) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let mut rem = self.coeffs.clone();
        let d = divisor.degree();
        let lead = *divisor.coeffs.last().unwrap();
        if rem.len() <= d {
            return (Self::zero(), Self::new(rem));
        }
        let mut quot = vec![0.0; rem.len() - d];
        for k in (d..rem.len()).rev() {
            let factor = rem[k] / lead;
            quot[k - d] = factor;
            if factor != 0.0 {
                for (i, c) in divisor.coeffs.iter().enumerate() {
                    rem[k - d + i] -= factor * c;
                }
            }
            rem[k] = 0.0;
        }
        (Self::new(quot), Self::new(rem))
    }
}

/// Sparse graph filter with bandwidth metadata: entries a(i,j) vanish
/// whenever rho(i,j) exceeds the bandwidth.
#[derive(Debug, Clone)]
pub struct GraphFilter {
    graph: Arc<Graph>,
    matrix: CsrMatrix,
    bandwidth: usize,
}

impl GraphFilter {
    pub fn new(graph: Arc<Graph>, matrix: CsrMatrix, bandwidth: usize) -> Self {
        assert_eq!(matrix.nrows(), graph.vertex_count());
        assert_eq!(matrix.ncols(), graph.vertex_count());
        Self {
            graph,
            matrix,
            bandwidth,
        }
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.graph.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: self.graph.vertex_count(),
                got: x.len(),
            });
        }
        Ok(self.matrix.matvec_alloc(x))
    }
}

/// L_sym as a bandwidth-1 sparse filter: diagonal 1, off-diagonal
/// -1/sqrt(deg_i deg_j) on edges.
pub fn laplacian_sym(g: &Arc<Graph>) -> GraphFilter {
    let n = g.vertex_count();
    let mut triplets = Vec::with_capacity(n + 2 * g.edge_count());
    for i in 0..n {
        triplets.push((i, i, 1.0));
        let di = g.degree(i) as f64;
        for &j in g.neighbors(i) {
            let dj = g.degree(j as usize) as f64;
            triplets.push((i, j as usize, -1.0 / (di * dj).sqrt()));
        }
    }
    GraphFilter::new(
        Arc::clone(g),
        CsrMatrix::from_triplets(n, n, &triplets),
        1,
    )
}

/// P(L_sym) x via Horner recursion on sparse matvecs.
pub fn apply_polynomial(lap: &GraphFilter, p: &Polynomial, x: &[f64]) -> Result<Vec<f64>> {
    let n = lap.graph().vertex_count();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let coeffs = p.coeffs();
    if coeffs.is_empty() {
        return Ok(vec![0.0; n]);
    }
    let mut y: Vec<f64> = x.iter().map(|xi| coeffs[coeffs.len() - 1] * xi).collect();
    let mut scratch = vec![0.0; n];
    for &c in coeffs.iter().rev().skip(1) {
        lap.matrix().matvec(&y, &mut scratch);
        for i in 0..n {
            y[i] = scratch[i] + c * x[i];
        }
    }
    Ok(y)
}

/// Budget for materialized filters, in stored entries.
pub const MATERIALIZE_BUDGET: usize = 50_000_000;

/// Explicit sparse form of P(L_sym). Columns are computed independently on
/// the ball B(j, deg P), which is the exact support of column j.
pub fn materialize_polynomial(lap: &GraphFilter, p: &Polynomial) -> Result<GraphFilter> {
    let g = lap.graph();
    let n = g.vertex_count();
    let deg = p.degree();
    if p.is_zero() {
        return Ok(GraphFilter::new(
            Arc::clone(g),
            CsrMatrix::from_triplets(n, n, &[]),
            0,
        ));
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..n {
        let ball = geodesic_ball(g, j, deg);
        let ids = &ball.members;
        if triplets.len() + ids.len() > MATERIALIZE_BUDGET {
            return Err(Error::BudgetExceeded {
                what: "materialized filter entries",
                size: triplets.len() + ids.len(),
                budget: MATERIALIZE_BUDGET,
            });
        }
        // local Horner on the ball's induced submatrix
        let m = ids.len();
        let local = ids.binary_search(&(j as u32)).expect("source in own ball");
        let coeffs = p.coeffs();
        let mut y = vec![0.0; m];
        y[local] = coeffs[coeffs.len() - 1];
        let mut scratch = vec![0.0; m];
        for &c in coeffs.iter().rev().skip(1) {
            for (a, &i) in ids.iter().enumerate() {
                let (cols, vals) = lap.matrix().row(i as usize);
                let mut acc = 0.0;
                for (col, v) in cols.iter().zip(vals) {
                    if let Ok(b) = ids.binary_search(col) {
                        acc += v * y[b];
                    }
                }
                scratch[a] = acc;
            }
            y.copy_from_slice(&scratch);
            y[local] += c;
        }
        for (a, &i) in ids.iter().enumerate() {
            if y[a] != 0.0 {
                triplets.push((i as usize, j, y[a]));
            }
        }
    }
    Ok(GraphFilter::new(
        Arc::clone(g),
        CsrMatrix::from_triplets(n, n, &triplets),
        deg,
    ))
}

/// Eigendecomposition of L_sym with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

pub const DENSE_ORACLE_CEILING: usize = 5000;

/// Dense symmetric eigendecomposition of L_sym. Diagnostic path: the main
/// pipelines never require it. Eigenvalues slightly outside [0, 2] from
/// round-off are clamped; drift beyond 1e-8 is logged.
pub fn eigendecompose(lap: &GraphFilter) -> Result<Spectrum> {
    eigendecompose_with(lap, DENSE_ORACLE_CEILING)
}

pub fn eigendecompose_with(lap: &GraphFilter, ceiling: usize) -> Result<Spectrum> {
    let n = lap.graph().vertex_count();
    if n > ceiling {
        return Err(Error::BudgetExceeded {
            what: "dense eigendecomposition",
            size: n,
            budget: ceiling,
        });
    }
    let dense = lap.matrix().to_dense();
    let eig = nalgebra::SymmetricEigen::try_new(dense, 1e-13, 0)
        .ok_or_else(|| Error::ConvergenceFailure("symmetric QR did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (k, &idx) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[idx];
        if !(0.0..=2.0).contains(&lambda) {
            let clamped = lambda.clamp(0.0, 2.0);
            if (lambda - clamped).abs() > 1e-8 {
                log::warn!("eigenvalue {lambda} clamped to [0,2]");
            }
            lambda = clamped;
        }
        eigenvalues.push(lambda);
        eigenvectors
            .column_mut(k)
            .copy_from(&eig.eigenvectors.column(idx));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

impl Spectrum {
    /// U^T P(Lambda) U x; the dense spectral route used as an oracle for
    /// `apply_polynomial`.
    pub fn apply_polynomial(&self, p: &Polynomial, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let ux = self.eigenvectors.transpose() * xv;
        let scaled = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues
                .iter()
                .zip(ux.iter())
                .map(|(l, u)| p.eval(*l) * u),
        );
        (&self.eigenvectors * scaled).as_slice().to_vec()
    }

    /// sup_m |P(lambda_m)|, the exact l2 filter bound of P(L_sym).
    pub fn filter_bound_l2(&self, p: &Polynomial) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| p.eval(*l).abs())
            .fold(0.0, f64::max)
    }
}

/// Schur norm: max of maximal absolute row and column sums. Dominates the
/// filter bound on every l^p.
pub fn schur_norm(f: &GraphFilter) -> f64 {
    f.matrix()
        .max_abs_row_sum()
        .max(f.matrix().max_abs_col_sum())
}

/// D^{1/2} 1, the normalized constant signal.
pub fn normalized_constant(g: &Graph) -> Vec<f64> {
    g.degrees().iter().map(|&d| (d as f64).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, generate_rgg, path_graph};

    fn single_edge() -> Arc<Graph> {
        path_graph(2)
    }

    #[test]
    fn laplacian_single_edge() {
        let lap = laplacian_sym(&single_edge());
        let m = lap.matrix();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 1.0);
    }

    #[test]
    fn laplacian_p3() {
        let lap = laplacian_sym(&path_graph(3));
        let m = lap.matrix();
        for i in 0..3 {
            assert_eq!(m.get(i, i), 1.0);
        }
        let inv_sqrt2 = -1.0 / 2.0f64.sqrt();
        assert!((m.get(0, 1) - inv_sqrt2).abs() < 1e-15);
        assert!((m.get(2, 1) - inv_sqrt2).abs() < 1e-15);
    }

    #[test]
    fn apply_constant_is_identity() {
        let lap = laplacian_sym(&path_graph(4));
        let x = vec![1.0, -2.0, 3.0, 0.5];
        let y = apply_polynomial(&lap, &Polynomial::constant(1.0), &x).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn apply_t_on_single_edge() {
        let lap = laplacian_sym(&single_edge());
        let y = apply_polynomial(&lap, &Polynomial::new(vec![0.0, 1.0]), &[1.0, 0.0]).unwrap();
        assert_eq!(y, vec![1.0, -1.0]);
    }

    #[test]
    fn apply_matches_spectral_oracle() {
        let g = generate_rgg(64, 2).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let spec = eigendecompose(&lap).unwrap();
        let p = Polynomial::new(vec![0.3, -1.2, 0.07, 0.9, -0.25]);
        let x: Vec<f64> = (0..g.vertex_count())
            .map(|i| ((i * 37 % 17) as f64 - 8.0) / 8.0)
            .collect();
        let fast = apply_polynomial(&lap, &p, &x).unwrap();
        let oracle = spec.apply_polynomial(&p, &x);
        let err = fast
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "spectral route mismatch {err}");
    }

    #[test]
    fn eigenvalues_in_range_and_orthogonal() {
        let g = generate_rgg(64, 4).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let spec = eigendecompose(&lap).unwrap();
        assert!(spec.eigenvalues[0].abs() < 1e-9);
        assert!(spec.eigenvalues.iter().all(|&l| (0.0..=2.0).contains(&l)));
        let n = g.vertex_count();
        let uut = &spec.eigenvectors * spec.eigenvectors.transpose();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((uut[(i, j)] - expect).abs() < 1e-9);
            }
        }
        // L reconstructed from the spectrum
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(spec.eigenvalues.clone()));
        let rec = &spec.eigenvectors * lambda * spec.eigenvectors.transpose();
        let dense = lap.matrix().to_dense();
        assert!((rec - dense).amax() < 1e-9);
    }

    #[test]
    fn single_edge_spectrum() {
        let lap = laplacian_sym(&single_edge());
        let spec = eigendecompose(&lap).unwrap();
        assert!((spec.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((spec.eigenvalues[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k3_spectrum() {
        let lap = laplacian_sym(&complete_graph(3));
        let spec = eigendecompose(&lap).unwrap();
        assert!((spec.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((spec.eigenvalues[1] - 1.5).abs() < 1e-12);
        assert!((spec.eigenvalues[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_eigenvector_parallel_to_constant() {
        let g = generate_rgg(64, 9).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let spec = eigendecompose(&lap).unwrap();
        let c = normalized_constant(&g);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = c.iter().map(|v| v / norm).collect();
        let dot: f64 = spec
            .eigenvectors
            .column(0)
            .iter()
            .zip(&unit)
            .map(|(a, b)| a * b)
            .sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn materialize_constant_and_affine() {
        let e = single_edge();
        let lap = laplacian_sym(&e);
        // p(t) = 1 - t/2 on a single edge -> all entries 1/2
        let f = materialize_polynomial(&lap, &Polynomial::new(vec![1.0, -0.5])).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((f.matrix().get(i, j) - 0.5).abs() < 1e-15);
            }
        }
        // degree 0: c I
        let c = materialize_polynomial(&lap, &Polynomial::constant(2.5)).unwrap();
        assert_eq!(c.matrix().get(0, 0), 2.5);
        assert_eq!(c.matrix().get(0, 1), 0.0);
        assert_eq!(c.bandwidth(), 0);
    }

    #[test]
    fn materialize_squares_like_product() {
        // spline n=2 lowpass equals the square of the n=1 lowpass
        let g = path_graph(3);
        let lap = laplacian_sym(&g);
        let p1 = Polynomial::new(vec![1.0, -0.5]);
        let f1 = materialize_polynomial(&lap, &p1).unwrap();
        let f2 = materialize_polynomial(&lap, &p1.mul(&p1)).unwrap();
        let prod = f1.matrix().matmul(f1.matrix());
        for i in 0..3 {
            for j in 0..3 {
                assert!((f2.matrix().get(i, j) - prod.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn materialize_then_apply_equals_apply() {
        let g = generate_rgg(64, 13).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let p = Polynomial::new(vec![0.2, 0.4, -0.3, 0.05]);
        let f = materialize_polynomial(&lap, &p).unwrap();
        let x: Vec<f64> = (0..g.vertex_count()).map(|i| (i as f64).sin()).collect();
        let a = f.apply(&x).unwrap();
        let b = apply_polynomial(&lap, &p, &x).unwrap();
        let err = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn schur_norm_cases() {
        let e = single_edge();
        let lap = laplacian_sym(&e);
        assert_eq!(schur_norm(&lap), 2.0);
        let id = GraphFilter::new(Arc::clone(&e), CsrMatrix::identity(2), 0);
        assert_eq!(schur_norm(&id), 1.0);
    }

    #[test]
    fn schur_dominates_l2_bound() {
        let g = generate_rgg(64, 21).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let spec = eigendecompose(&lap).unwrap();
        let p = Polynomial::new(vec![1.0, -0.5]); // spline n=1 lowpass
        let f = materialize_polynomial(&lap, &p).unwrap();
        assert!(schur_norm(&f) >= spec.filter_bound_l2(&p) - 1e-12);
    }

    #[test]
    fn l2_bound_below_sup_on_interval() {
        let g = generate_rgg(64, 22).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let spec = eigendecompose(&lap).unwrap();
        let p = Polynomial::new(vec![0.1, 0.7, -0.4]);
        let sup = (0..=2000)
            .map(|k| p.eval(2.0 * k as f64 / 2000.0).abs())
            .fold(0.0f64, f64::max);
        assert!(spec.filter_bound_l2(&p) <= sup + 1e-9);
    }

    #[test]
    fn normalization_invariant() {
        // P(L) applied to D^{1/2} 1 scales it by P(0)
        let g = generate_rgg(64, 30).unwrap();
        let g = Arc::new(g);
        let lap = laplacian_sym(&g);
        let p = Polynomial::new(vec![0.6, 1.1, -0.8]);
        let c = normalized_constant(&g);
        let y = apply_polynomial(&lap, &p, &c).unwrap();
        for (yi, ci) in y.iter().zip(&c) {
            assert!((yi - p.eval(0.0) * ci).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_detected() {
        let lap = laplacian_sym(&path_graph(3));
        let err = apply_polynomial(&lap, &Polynomial::constant(1.0), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn poly_divmod_identity() {
        let a = Polynomial::new(vec![1.0, 2.0, 3.0, 4.0]);
        let b = Polynomial::new(vec![-1.0, 1.0]);
        let (q, r) = a.divmod(&b);
        let back = q.mul(&b).add(&r);
        for (x, y) in back.coeffs().iter().zip(a.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(r.degree() < b.degree() || r.is_zero());
    }
}
