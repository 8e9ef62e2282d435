//! End-to-end experiment harness: test signals, bounded noise, hard
//! thresholding of the high-pass subband, l^p signal-to-noise ratios and
//! the reconstruction/denoising table drivers.
//!
//! Denoising keeps the low-pass subband and thresholds the high-pass one:
//! x~ = G0 z0 + G1 T_tau(z1) with T_tau(t) = sgn(t)(|t|-tau)_+. Synthesis
//! runs through the banded Bezout filters or through the least-squares
//! bank; the latter uses the distributed solver above the dense ceiling,
//! with the radius picked as the smallest one giving a contraction factor
//! below 1/2.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributed::{AgentSystem, DivergencePolicy, ExecMode, RunOptions};
use crate::error::{Error, Result};
use crate::filterbank::{
    bezout_synthesis_spline, spline_analysis, AnalysisBank, SynthesisBank,
};
use crate::graph::{estimate_growth, generate_rgg, Graph, GrowthProfile};
use crate::io;
use crate::spectral::materialize_polynomial;
use crate::synthesis::{ls_synthesis_with, smallest_radius_below, LsSynthesis};

/// l^p norms used by the SNR metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

pub fn norm(x: &[f64], p: Norm) -> f64 {
    match p {
        Norm::L1 => x.iter().map(|v| v.abs()).sum(),
        Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Norm::LInf => x.iter().fold(0.0f64, |a, v| a.max(v.abs())),
    }
}

/// Output SNR in dB: 20 log10(||x_o||_p / ||x_hat - x_o||_p).
/// +inf when the reconstruction is exact.
pub fn snr(x_o: &[f64], x_hat: &[f64], p: Norm) -> Result<f64> {
    let reference = norm(x_o, p);
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err: Vec<f64> = x_hat.iter().zip(x_o).map(|(a, b)| a - b).collect();
    let e = norm(&err, p);
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (reference / e).log10())
}

/// T_tau(t) = sgn(t) (|t| - tau)_+, applied componentwise.
pub fn hard_threshold(z: &[f64], tau: f64) -> Vec<f64> {
    threshold(z, tau, Thresholding::Shrink)
}

/// High-pass thresholding variants. `Keep` zeroes coefficients at or
/// below tau and passes the rest unchanged; it is what reproduces the
/// reported denoising tables. `Shrink` is sgn(t)(|t|-tau)_+.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Thresholding {
    Keep,
    Shrink,
}

pub fn threshold(z: &[f64], tau: f64, mode: Thresholding) -> Vec<f64> {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    match mode {
        Thresholding::Shrink => z
            .iter()
            .map(|&t| t.signum() * (t.abs() - tau).max(0.0))
            .collect(),
        Thresholding::Keep => z
            .iter()
            .map(|&t| if t.abs() > tau { t } else { 0.0 })
            .collect(),
    }
}

/// Bounded i.i.d. noise, uniform on [-eta, eta].
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub eta: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn sample(&self, n: usize) -> Vec<f64> {
        assert!(self.eta > 0.0, "noise level must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| rng.random_range(-self.eta..=self.eta))
            .collect()
    }
}

/// Strip rule used by the blockwise-polynomial test signal; kept in the
/// experiment metadata so results stay interpretable.
pub const STRIP_RULE: &str = "four diagonal strips by c_x+c_y quartiles numbered from the (1,1) \
     corner; 0.5-2*c_x on strips 1,3 and 0.5+c_x^2+c_y^2 on strips 2,4";

/// Test signal constructions.
#[derive(Debug, Clone)]
pub enum SignalSpec {
    /// +1 on even-labelled blocks, -1 on odd ones.
    BlockwiseConstant { labels: Vec<u32> },
    /// Blockwise polynomial over vertex coordinates, see [`STRIP_RULE`].
    BlockwisePolynomial,
    /// i.i.d. uniform on [-1, 1].
    RandomUniform { seed: u64 },
    /// Explicit values.
    Values(Vec<f64>),
}

pub fn blockwise_polynomial_value(cx: f64, cy: f64) -> f64 {
    let s = cx + cy;
    let linear_strip = s >= 1.5 || (0.5..1.0).contains(&s);
    if linear_strip {
        0.5 - 2.0 * cx
    } else {
        0.5 + cx * cx + cy * cy
    }
}

pub fn make_signal(g: &Graph, spec: &SignalSpec) -> Result<Vec<f64>> {
    let n = g.vertex_count();
    match spec {
        SignalSpec::BlockwiseConstant { labels } => {
            if labels.len() != n {
                return Err(Error::MissingLabels);
            }
            Ok(labels
                .iter()
                .map(|&b| if b % 2 == 0 { 1.0 } else { -1.0 })
                .collect())
        }
        SignalSpec::BlockwisePolynomial => {
            let coords = g.coords().ok_or(Error::MissingCoordinates)?;
            Ok(coords
                .iter()
                .map(|c| blockwise_polynomial_value(c[0], c[1]))
                .collect())
        }
        SignalSpec::RandomUniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
        }
        SignalSpec::Values(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            Ok(v.clone())
        }
    }
}

/// Three-block labelling for graphs without published blocks: two halves
/// by BFS order plus one singleton block at the last-reached vertex.
pub fn synthetic_three_blocks(g: &Graph) -> Vec<u32> {
    let n = g.vertex_count();
    let dist = g.bfs_distances(0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (dist[v], v));
    let mut labels = vec![0u32; n];
    for (pos, &v) in order.iter().enumerate() {
        labels[v] = if pos >= n / 2 { 1 } else { 0 };
    }
    labels[*order.last().expect("nonempty graph")] = 2;
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankKind {
    /// Banded Bezout synthesis (NSGFB-Bn).
    Bezout,
    /// Least-squares synthesis (NSGFB-Ln).
    LeastSquares,
}

/// Denoising configuration for one bank.
#[derive(Debug, Clone)]
pub struct DenoiseConfig {
    pub kind: BankKind,
    pub order: usize,
    pub tau: f64,
    /// Radius for the distributed least-squares synthesis; None picks the
    /// smallest radius with contraction factor below 1/2.
    pub radius: Option<usize>,
    pub trials: usize,
    /// Least-squares synthesis solves densely at or below this size.
    pub ls_dense_ceiling: usize,
    pub thresholding: Thresholding,
}

impl DenoiseConfig {
    pub fn new(kind: BankKind, order: usize, tau: f64) -> Self {
        Self {
            kind,
            order,
            tau,
            radius: None,
            trials: 1,
            ls_dense_ceiling: 2000,
            thresholding: Thresholding::Keep,
        }
    }
}

enum DenoiseSynth {
    Bezout(SynthesisBank),
    LsDense(LsSynthesis),
    LsDistributed { system: AgentSystem, delta: f64 },
}

/// Prebuilt denoising machinery, reusable across trials and noise levels.
///
/// The bank is fed the degree-weighted signal D^{1/2} x and the output is
/// unweighted again: locally constant content of x then sits in the span
/// of the normalized constant signal the low-pass filter passes, so the
/// high-pass subband of a blockwise signal is small away from block
/// boundaries.
pub struct DenoisePipeline {
    bank: AnalysisBank,
    synth: DenoiseSynth,
    growth: GrowthProfile,
    thresholding: Thresholding,
    /// sqrt(deg_i) weights applied before analysis and inverted after
    /// synthesis.
    weights: Vec<f64>,
    /// Subband-error amplification constant of the synthesis bank.
    error_constant: f64,
}

impl DenoisePipeline {
    pub fn build(g: &Arc<Graph>, cfg: &DenoiseConfig) -> Result<Self> {
        let bank = spline_analysis(g, cfg.order)?;
        let growth = estimate_growth(g, 10.min(g.vertex_count() - 1).max(1), 2.0);
        let d = growth.dimension;
        let d1 = growth.density;
        let (synth, error_constant) = match cfg.kind {
            BankKind::Bezout => {
                let s = bezout_synthesis_spline(cfg.order);
                let g0 = materialize_polynomial(bank.laplacian(), &s.q0)?;
                let g1 = materialize_polynomial(bank.laplacian(), &s.q1)?;
                let g_inf = g0.matrix().max_abs_entry() + g1.matrix().max_abs_entry();
                let k = d1 * ((s.bandwidth + 1) as f64).powf(d) * g_inf;
                (DenoiseSynth::Bezout(s), k)
            }
            BankKind::LeastSquares => {
                let n = g.vertex_count();
                let dense = n <= cfg.ls_dense_ceiling;
                let ls = ls_synthesis_with(&bank, cfg.ls_dense_ceiling, dense)?;
                let sigma = bank.bandwidth().max(1);
                let h_inf = bank.h0().matrix().max_abs_entry()
                    + bank.h1().matrix().max_abs_entry();
                let k = if ls.kappa() <= 1.0 + 1e-12 {
                    // H diagonal: the synthesis keeps bandwidth sigma
                    d1 * ((sigma + 1) as f64).powf(d) * ls.norm_h_inv() * h_inf
                } else {
                    let d_fact = (1..=(d.round() as u64).max(1))
                        .map(|k| k as f64)
                        .product::<f64>();
                    d_fact
                        * 2.0f64.powf(d)
                        * d1.powi(2)
                        * ((sigma + 1) as f64).powf(2.0 * d)
                        * ls.kappa().powf(d + 1.0)
                        * (1.0 - 1.0 / ls.kappa()).powf(-0.5)
                        * ls.norm_h_inv()
                        * h_inf
                };
                if dense {
                    (DenoiseSynth::LsDense(ls), k)
                } else {
                    let radius = match cfg.radius {
                        Some(r) => r,
                        None => {
                            let mut r = smallest_radius_below(&growth, sigma, ls.kappa(), 0.5)?;
                            // When the truncation balls would already be
                            // near-global, round the radius up so every
                            // ball covers the graph: the contraction
                            // factor only shrinks, and the agents share a
                            // single factorization instead of holding
                            // per-agent dense factors of almost-full size.
                            let est_cover =
                                d1 * ((2 * r + 1) as f64).powf(growth.dimension);
                            if est_cover >= 0.5 * n as f64 {
                                let full_r = g.diameter().div_ceil(2);
                                if full_r > r
                                    && crate::synthesis::contraction_factor(
                                        &growth,
                                        sigma,
                                        ls.kappa(),
                                        full_r,
                                    )? < 0.5
                                {
                                    r = full_r;
                                }
                            }
                            r
                        }
                    };
                    let delta =
                        crate::synthesis::contraction_factor(&growth, sigma, ls.kappa(), radius)?;
                    let system = AgentSystem::build(&bank, radius)?;
                    (DenoiseSynth::LsDistributed { system, delta }, k)
                }
            }
        };
        let weights = crate::spectral::normalized_constant(g);
        Ok(Self {
            bank,
            synth,
            growth,
            thresholding: cfg.thresholding,
            weights,
            error_constant,
        })
    }

    pub fn bank(&self) -> &AnalysisBank {
        &self.bank
    }

    pub fn growth(&self) -> &GrowthProfile {
        &self.growth
    }

    /// Constant K with ||x~ - x||_inf <= K eps for subband errors <= eps.
    pub fn error_constant(&self) -> f64 {
        self.error_constant
    }

    /// Chosen radius of the distributed synthesis, if that path is active.
    pub fn distributed_radius(&self) -> Option<usize> {
        match &self.synth {
            DenoiseSynth::LsDistributed { system, .. } => Some(system.radius()),
            _ => None,
        }
    }

    /// Contraction factor at the chosen radius (distributed path only).
    pub fn contraction_delta(&self) -> Option<f64> {
        match &self.synth {
            DenoiseSynth::LsDistributed { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    pub fn denoise(&self, x_noisy: &[f64], tau: f64) -> Result<Vec<f64>> {
        if x_noisy.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x_noisy.len(),
            });
        }
        let y: Vec<f64> = x_noisy
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .collect();
        let (z0, z1) = self.bank.analyze(&y)?;
        let z1t = threshold(&z1, tau, self.thresholding);
        let yt = match &self.synth {
            DenoiseSynth::Bezout(s) => s.synthesize(self.bank.laplacian(), &z0, &z1t)?,
            DenoiseSynth::LsDense(ls) => ls.solve(&z0, &z1t)?,
            DenoiseSynth::LsDistributed { system, .. } => {
                let opts = RunOptions {
                    stop_eps: 1e-10,
                    max_iter: 200,
                    oracle: None,
                    divergence_factor: 1e6,
                    policy: DivergencePolicy::Fail,
                    mode: ExecMode::Global,
                };
                let (x, _) = system.run(&z0, &z1t, &opts)?;
                x
            }
        };
        Ok(yt.iter().zip(&self.weights).map(|(v, w)| v / w).collect())
    }
}

/// One-shot denoising run.
pub fn denoise(g: &Arc<Graph>, cfg: &DenoiseConfig, x_noisy: &[f64]) -> Result<Vec<f64>> {
    DenoisePipeline::build(g, cfg)?.denoise(x_noisy, cfg.tau)
}

/// Where the experiment graph comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphSource {
    Rgg { n: usize, seed: u64 },
    EdgeList { path: String },
}

impl GraphSource {
    pub fn build(&self) -> Result<Arc<Graph>> {
        match self {
            GraphSource::Rgg { n, seed } => Ok(Arc::new(generate_rgg(*n, *seed)?)),
            GraphSource::EdgeList { path } => {
                let (g, _) = io::load_edge_list(std::path::Path::new(path))?;
                Ok(g)
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            GraphSource::Rgg { n, seed } => format!("rgg n={n} seed={seed}"),
            GraphSource::EdgeList { path } => format!("edge-list {path}"),
        }
    }
}

/// Which test signal a denoising experiment uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentSignal {
    BlockwisePolynomial,
    /// Blockwise constant; labels read from the file when given, else the
    /// synthetic three-block split.
    BlockwiseConstant { labels: Option<String> },
}

/// Full experiment description (TOML-serializable).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// 2 or 3: reconstruction error tables; 4, 5 or 6: denoising tables.
    pub which: u8,
    pub graph: GraphSource,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    /// Reconstruction: radii of the distributed solver.
    pub radii: Option<Vec<usize>>,
    /// Reconstruction: iteration counts to report.
    pub iterations: Option<Vec<usize>>,
    /// Denoising: noise levels.
    pub etas: Option<Vec<f64>>,
    #[serde(default = "default_tau_multiplier")]
    pub tau_multiplier: f64,
    pub trials: usize,
    pub seed: u64,
    pub signal: Option<ExperimentSignal>,
    /// Denoising: radius override for the distributed L-bank synthesis.
    pub radius: Option<usize>,
    #[serde(default = "default_ls_ceiling")]
    pub ls_dense_ceiling: usize,
}

fn default_orders() -> Vec<usize> {
    vec![1, 2]
}

fn default_tau_multiplier() -> f64 {
    3.0
}

fn default_ls_ceiling() -> usize {
    2000
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::BankFormat(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Rendered experiment output plus the raw numbers.
#[derive(Debug, Clone)]
pub struct TableReport {
    pub csv: String,
    pub text: String,
}

/// Reconstruction experiment results: E[order][iteration][radius] is the
/// trial-averaged relative l-inf error.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub orders: Vec<usize>,
    pub radii: Vec<usize>,
    pub iterations: Vec<usize>,
    pub e: Vec<Vec<Vec<f64>>>,
    pub report: TableReport,
}

/// Average E_{m,r} of ||x^(m) - x||_inf / ||x||_inf over random signals.
pub fn run_reconstruction_experiment(cfg: &ExperimentConfig) -> Result<ReconstructionResult> {
    let g = cfg.graph.build()?;
    let radii = cfg.radii.clone().unwrap_or_else(|| vec![0, 1, 2, 3]);
    let iterations = cfg
        .iterations
        .clone()
        .unwrap_or_else(|| vec![1, 2, 3, 4, 5, 10]);
    let max_iter = *iterations.iter().max().expect("nonempty iterations");
    let n = g.vertex_count();

    let mut e = vec![vec![vec![0.0f64; radii.len()]; iterations.len()]; cfg.orders.len()];
    for (oi, &order) in cfg.orders.iter().enumerate() {
        let bank = spline_analysis(&g, order)?;
        for (ri, &r) in radii.iter().enumerate() {
            let system = AgentSystem::build(&bank, r)?;
            let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let x = make_signal(
                        &g,
                        &SignalSpec::RandomUniform {
                            seed: cfg.seed.wrapping_add(trial as u64),
                        },
                    )
                    .expect("random signal");
                    let (z0, z1) = bank.analyze(&x).expect("analysis");
                    let opts = RunOptions {
                        stop_eps: 0.0,
                        max_iter,
                        oracle: Some(&x),
                        divergence_factor: f64::INFINITY,
                        policy: DivergencePolicy::Record,
                        mode: ExecMode::Global,
                    };
                    let (_, trace) = system.run(&z0, &z1, &opts).expect("run");
                    iterations
                        .iter()
                        .map(|&m| {
                            let rec = &trace.records[m - 1];
                            rec.rel_err_inf(&trace).unwrap_or(f64::NAN)
                        })
                        .collect()
                })
                .collect();
            for (mi, _) in iterations.iter().enumerate() {
                let sum: f64 = per_trial.iter().map(|t| t[mi]).sum();
                e[oi][mi][ri] = sum / cfg.trials as f64;
            }
        }
    }

    // render
    let mut csv = String::new();
    csv.push_str(&format!(
        "# reconstruction graph={} vertices={} trials={} seed={}\n",
        cfg.graph.describe(),
        n,
        cfg.trials,
        cfg.seed
    ));
    csv.push_str("order,m,r,E\n");
    let mut text = String::new();
    for (oi, &order) in cfg.orders.iter().enumerate() {
        text.push_str(&format!("n = {order}\n"));
        text.push_str(&format!("{:>4} |", "m\\r"));
        for &r in &radii {
            text.push_str(&format!(" {r:>9}"));
        }
        text.push('\n');
        text.push_str(&"-".repeat(6 + 10 * radii.len()));
        text.push('\n');
        for (mi, &m) in iterations.iter().enumerate() {
            text.push_str(&format!("{m:>4} |"));
            for (ri, &r) in radii.iter().enumerate() {
                let val = e[oi][mi][ri];
                csv.push_str(&format!("{order},{m},{r},{val}\n"));
                text.push_str(&format!(" {val:>9.4}"));
            }
            text.push('\n');
        }
        text.push('\n');
    }
    Ok(ReconstructionResult {
        orders: cfg.orders.clone(),
        radii,
        iterations,
        e,
        report: TableReport { csv, text },
    })
}

/// One synthesis bank's row in the denoising tables.
#[derive(Debug, Clone)]
pub struct DenoiseRow {
    pub name: String,
    pub out_l2: Vec<f64>,
    pub out_linf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenoisingResult {
    pub etas: Vec<f64>,
    pub input_l2: Vec<f64>,
    pub input_linf: Vec<f64>,
    pub rows: Vec<DenoiseRow>,
    /// Runs violating the output-vs-input error bound
    /// ||x~ - x_o||_inf <= eta + K tau (with fp slack).
    pub bound_violations: usize,
    pub report: TableReport,
}

/// Average input/output SNRs over noise trials, per noise level and bank.
pub fn run_denoising_experiment(cfg: &ExperimentConfig) -> Result<DenoisingResult> {
    let g = cfg.graph.build()?;
    let n = g.vertex_count();
    let etas = cfg.etas.clone().unwrap_or_else(|| {
        vec![1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0]
    });
    let signal_spec = match cfg.signal.clone().unwrap_or(ExperimentSignal::BlockwisePolynomial) {
        ExperimentSignal::BlockwisePolynomial => SignalSpec::BlockwisePolynomial,
        ExperimentSignal::BlockwiseConstant { labels } => {
            let labels = match labels {
                Some(path) => io::read_labels(std::path::Path::new(&path), n)?,
                None => synthetic_three_blocks(&g),
            };
            SignalSpec::BlockwiseConstant { labels }
        }
    };
    let x_o = make_signal(&g, &signal_spec)?;

    // banks: NSGFB-Bn then NSGFB-Ln for each order
    let mut pipelines: Vec<(String, DenoisePipeline)> = Vec::new();
    for &order in &cfg.orders {
        for (kind, tag) in [(BankKind::Bezout, "B"), (BankKind::LeastSquares, "L")] {
            let dn_cfg = DenoiseConfig {
                kind,
                order,
                tau: 0.0,
                radius: cfg.radius,
                trials: cfg.trials,
                ls_dense_ceiling: cfg.ls_dense_ceiling,
                thresholding: Thresholding::Keep,
            };
            pipelines.push((
                format!("NSGFB-{tag}{order}"),
                DenoisePipeline::build(&g, &dn_cfg)?,
            ));
        }
    }

    let mut input_l2 = Vec::with_capacity(etas.len());
    let mut input_linf = Vec::with_capacity(etas.len());
    let mut rows: Vec<DenoiseRow> = pipelines
        .iter()
        .map(|(name, _)| DenoiseRow {
            name: name.clone(),
            out_l2: Vec::new(),
            out_linf: Vec::new(),
        })
        .collect();
    let mut bound_violations = 0usize;

    for (ei, &eta) in etas.iter().enumerate() {
        let tau = cfg.tau_multiplier * eta;
        struct TrialOut {
            in_l2: f64,
            in_linf: f64,
            out: Vec<(f64, f64)>,
            violations: usize,
        }
        let trials: Vec<TrialOut> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let noise = NoiseModel {
                    eta,
                    seed: cfg
                        .seed
                        .wrapping_add((ei * cfg.trials + trial) as u64),
                }
                .sample(n);
                let x: Vec<f64> = x_o.iter().zip(&noise).map(|(a, b)| a + b).collect();
                let in_l2 = snr(&x_o, &x, Norm::L2).expect("nonzero reference");
                let in_linf = snr(&x_o, &x, Norm::LInf).expect("nonzero reference");
                let mut out = Vec::with_capacity(pipelines.len());
                let mut violations = 0usize;
                for (_, pipe) in &pipelines {
                    let xt = pipe.denoise(&x, tau).expect("denoise");
                    let e_inf = xt
                        .iter()
                        .zip(&x_o)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    let bound = eta + pipe.error_constant() * tau;
                    if e_inf > bound * (1.0 + 1e-9) + 1e-9 {
                        violations += 1;
                    }
                    out.push((
                        snr(&x_o, &xt, Norm::L2).expect("nonzero reference"),
                        snr(&x_o, &xt, Norm::LInf).expect("nonzero reference"),
                    ));
                }
                TrialOut {
                    in_l2,
                    in_linf,
                    out,
                    violations,
                }
            })
            .collect();

        let avg = |f: &dyn Fn(&TrialOut) -> f64| {
            trials.iter().map(|t| f(t)).sum::<f64>() / cfg.trials as f64
        };
        input_l2.push(avg(&|t| t.in_l2));
        input_linf.push(avg(&|t| t.in_linf));
        for (bi, row) in rows.iter_mut().enumerate() {
            row.out_l2.push(avg(&|t| t.out[bi].0));
            row.out_linf.push(avg(&|t| t.out[bi].1));
        }
        bound_violations += trials.iter().map(|t| t.violations).sum::<usize>();
    }

    // render
    let signal_desc = match &signal_spec {
        SignalSpec::BlockwisePolynomial => format!("blockwise polynomial ({STRIP_RULE})"),
        SignalSpec::BlockwiseConstant { .. } => "blockwise constant (+/-1 on blocks)".into(),
        _ => unreachable!(),
    };
    let mut csv = String::new();
    csv.push_str(&format!(
        "# denoising graph={} vertices={} trials={} seed={} tau={}*eta signal={}\n",
        cfg.graph.describe(),
        n,
        cfg.trials,
        cfg.seed,
        cfg.tau_multiplier,
        signal_desc
    ));
    csv.push_str("eta,p,bank,snr\n");
    let mut text = String::new();
    for (p_name, input, sel) in [
        ("2", &input_l2, 0usize),
        ("inf", &input_linf, 1usize),
    ] {
        text.push_str(&format!("l{p_name}-SNR (dB)\n"));
        text.push_str(&format!("{:>12} |", "eta"));
        for &eta in &etas {
            text.push_str(&format!(" {eta:>8.4}"));
        }
        text.push('\n');
        text.push_str(&"-".repeat(14 + 9 * etas.len()));
        text.push('\n');
        text.push_str(&format!("{:>12} |", "input"));
        for (ei, &eta) in etas.iter().enumerate() {
            csv.push_str(&format!("{eta},{p_name},input,{}\n", input[ei]));
            text.push_str(&format!(" {:>8.2}", input[ei]));
        }
        text.push('\n');
        for row in &rows {
            text.push_str(&format!("{:>12} |", row.name));
            let vals = if sel == 0 { &row.out_l2 } else { &row.out_linf };
            for (ei, &eta) in etas.iter().enumerate() {
                csv.push_str(&format!("{eta},{p_name},{},{}\n", row.name, vals[ei]));
                text.push_str(&format!(" {:>8.2}", vals[ei]));
            }
            text.push('\n');
        }
        text.push('\n');
    }

    Ok(DenoisingResult {
        etas,
        input_l2,
        input_linf,
        rows,
        bound_violations,
        report: TableReport { csv, text },
    })
}

/// Dispatch on the table id: 2 and 3 run the reconstruction experiment,
/// 4, 5 and 6 the denoising experiment.
pub fn run_table_experiment(cfg: &ExperimentConfig) -> Result<TableReport> {
    match cfg.which {
        2 | 3 => Ok(run_reconstruction_experiment(cfg)?.report),
        4 | 5 | 6 => Ok(run_denoising_experiment(cfg)?.report),
        other => Err(Error::BankFormat(format!("unknown table id {other}"))),
    }
}
