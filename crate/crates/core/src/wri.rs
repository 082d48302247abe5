//! The outer splitting loop of (IR-)WRI: wavefield reconstruction, the dual
//! half-steps on the data and source right-hand sides, the bound and TV
//! regularized model update, and per-iteration metrics.
//!
//! Batched quantities are indexed `[frequency][source]`. The model lives on
//! the physical grid and is extended into the absorbing layers by edge
//! replication; wavefields and duals live on the padded grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{sample, source_vectors, DataSet, Discretization, NodeMap, Survey};
use crate::continuation::{gamma_schedule, stopping_check, BatchSchedule, Decision};
use crate::error::{Error, Result};
use crate::grid::{Bounds, Grid, Model};
use crate::helmholtz::HelmholtzOperator;
use crate::scalar::{diff_norm2, norm2};
use crate::solver::{factor, power_iteration_xi, solve_model_normal, Backend, WavefieldNormalSystem};
use crate::sparse::CsrMatrix;
use crate::tv::{self, GammaWeights, SplitState, ThresholdPolicy};

pub type WavefieldBatch = Vec<Vec<Vec<Complex64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Penalty method: the right-hand sides are never updated.
    Wri,
    Irwri,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    pub bounds_on: bool,
    pub tv_on: bool,
}

/// What the diagonal damping of the model system pulls towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingTarget {
    /// Damped normal equations: the damping enters the matrix only.
    #[default]
    Zero,
    /// Proximal step: the damping also adds `damping * m_prev` to the
    /// right-hand side.
    Current,
}

/// Penalty weights and their schedules. Every weight except `alpha` is
/// relative: `lambda_frac` to the spectral estimate `xi`, the gamma and
/// damping entries to `zeta * lambda1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    /// `lambda1 / lambda0` as a fraction of `xi`.
    pub lambda_frac: f64,
    pub gamma_over_lambda1_init: f64,
    pub gamma_floor: f64,
    /// Iterations between gamma decays; 0 keeps gamma constant.
    pub gamma_decay_every: usize,
    pub gamma_decay_factor: f64,
    /// Diagonal damping added to the model system.
    pub damping_frac: f64,
    pub damping_target: DampingTarget,
    /// Relaxation of the outer dual half-steps.
    pub alpha: f64,
    /// Soft-threshold level of the TV proximity step.
    pub threshold: ThresholdPolicy,
    /// Power iterations estimating `xi` at the start of each batch.
    pub xi_iterations: usize,
    /// Completed iterations before the bound constraint switches on.
    pub bounds_delay: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda_frac: 1e-5,
            gamma_over_lambda1_init: 0.01,
            gamma_floor: 0.01,
            gamma_decay_every: 0,
            gamma_decay_factor: 1.0,
            damping_frac: 0.0,
            damping_target: DampingTarget::Zero,
            alpha: 0.5,
            threshold: ThresholdPolicy::default(),
            xi_iterations: 30,
            bounds_delay: 0,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidConfig(format!("{what} out of range: {v}"));
        if !(self.lambda_frac > 0.0 && self.lambda_frac.is_finite()) {
            return Err(bad("lambda_frac", self.lambda_frac));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(bad("alpha", self.alpha));
        }
        if !(self.gamma_decay_factor >= 1.0 && self.gamma_decay_factor.is_finite()) {
            return Err(bad("gamma_decay_factor", self.gamma_decay_factor));
        }
        for (what, v) in [
            ("gamma_over_lambda1_init", self.gamma_over_lambda1_init),
            ("gamma_floor", self.gamma_floor),
            ("damping_frac", self.damping_frac),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(what, v));
            }
        }
        match self.threshold {
            ThresholdPolicy::FractionOfMax(v) | ThresholdPolicy::Absolute(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(bad("threshold", v));
            }
            _ => {}
        }
        if self.xi_iterations == 0 {
            return Err(Error::InvalidConfig("xi_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Gamma in units of `zeta * lambda1` after `iter` completed iterations.
    pub fn gamma_factor(&self, iter: usize) -> f64 {
        gamma_schedule(
            iter,
            self.gamma_over_lambda1_init,
            self.gamma_decay_every,
            self.gamma_decay_factor,
            self.gamma_floor,
        )
    }
}

/// Running sums of the data and source residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub d_dual: WavefieldBatch,
    pub b_dual: WavefieldBatch,
}

impl DualState {
    pub fn zeros(n_freq: usize, n_src: usize, n_rec: usize, n: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            d_dual: vec![vec![vec![zero; n_rec]; n_src]; n_freq],
            b_dual: vec![vec![vec![zero; n]; n_src]; n_freq],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d_dual
            .iter()
            .chain(&self.b_dual)
            .flatten()
            .flatten()
            .all(|v| v.re == 0.0 && v.im == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub data_residual: f64,
    pub wave_residual: f64,
    pub model_error: Option<f64>,
    pub wavefield_error: Option<f64>,
    pub tv: f64,
    pub objective_j: f64,
    /// Absolute TV weight of the model system.
    pub gamma: f64,
    pub lambda1: f64,
    pub zeta: f64,
    pub threshold: f64,
}

/// Everything about one frequency batch that stays fixed while iterating.
#[derive(Debug, Clone)]
pub struct Batch {
    /// The padded grid of the wavefields.
    pub grid: Grid,
    /// The grid of the model.
    pub physical: Grid,
    /// Absorbing cells on each side of the physical domain.
    pub pad: usize,
    pub frequencies: Vec<f64>,
    pub ops: Vec<HelmholtzOperator>,
    pub sources: WavefieldBatch,
    pub data: WavefieldBatch,
    pub receivers: Vec<usize>,
    pub backend: Backend,
    /// `grad1^T grad1 + grad2^T grad2` on the physical grid.
    grad_gram: CsrMatrix<f64>,
    /// Edge replication `E` from the physical to the padded grid, and `E^T`.
    extension: CsrMatrix<f64>,
    extension_t: CsrMatrix<f64>,
}

impl Batch {
    /// Gathers the operators, sources and observed data of `freqs`, which
    /// must all be present in `data`.
    pub fn new(
        physical: Grid,
        disc: &Discretization,
        survey: &Survey,
        data: &DataSet,
        freqs: &[f64],
        backend: Backend,
    ) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::InvalidConfig("empty frequency batch".into()));
        }
        if data.n_sources != survey.n_sources() || data.n_receivers != survey.n_receivers() {
            return Err(Error::InvalidInput(format!(
                "data holds {} sources x {} receivers, survey {} x {}",
                data.n_sources,
                data.n_receivers,
                survey.n_sources(),
                survey.n_receivers()
            )));
        }
        let pad = disc.pml.n_pml;
        let grid = physical.padded(pad);
        let nodes = NodeMap::new(survey, &grid, pad)?;
        let mut ops = Vec::with_capacity(freqs.len());
        let mut sources = Vec::with_capacity(freqs.len());
        let mut gathers = Vec::with_capacity(freqs.len());
        for &hz in freqs {
            let fi = data
                .frequency_index(hz)
                .ok_or_else(|| Error::InvalidConfig(format!("no data recorded at {hz} Hz")))?;
            let op = disc.operator(grid, hz)?;
            sources.push(source_vectors(&op, hz, survey, &nodes));
            ops.push(op);
            gathers.push(data.gathers[fi].clone());
        }
        let extension = extension_matrix(&physical, pad)?;
        Ok(Self {
            grid,
            physical,
            pad,
            frequencies: freqs.to_vec(),
            ops,
            sources,
            data: gathers,
            receivers: nodes.receivers,
            backend,
            grad_gram: gradient_gram(&physical)?,
            extension_t: extension.transpose(),
            extension,
        })
    }

    pub fn n_freq(&self) -> usize {
        self.frequencies.len()
    }

    pub fn n_src(&self) -> usize {
        self.sources.first().map_or(0, Vec::len)
    }

    pub fn zero_duals(&self) -> DualState {
        DualState::zeros(self.n_freq(), self.n_src(), self.receivers.len(), self.grid.len())
    }

    /// The model extended over the absorbing layers.
    pub fn extend(&self, m: &[f64]) -> Vec<f64> {
        self.extension.mul_vec(m)
    }

    /// `E^T v`: padded-grid values summed onto the physical nodes they copy.
    pub fn fold(&self, v: &[f64]) -> Vec<f64> {
        self.extension_t.mul_vec(v)
    }

    /// Wavefields `A(m)^{-1} b`.
    pub fn simulate(&self, m: &[f64]) -> Result<WavefieldBatch> {
        self.physical.check_len("model", m.len())?;
        let m = &self.extend(m);
        self.ops
            .par_iter()
            .zip(&self.sources)
            .zip(&self.frequencies)
            .map(|((op, srcs), &hz)| {
                let lu = factor(&op.assemble_a_values(m)?).map_err(|e| gather_error(0, hz, e))?;
                Ok(srcs.par_iter().map(|b| lu.solve(b)).collect())
            })
            .collect()
    }

    /// `max_f xi_f`, the largest eigenvalue of `A^{-H} P^T P A^{-1}` over the batch.
    pub fn xi(&self, m: &[f64], iters: usize, seed: u64) -> Result<f64> {
        self.physical.check_len("model", m.len())?;
        let m = &self.extend(m);
        let per_freq: Vec<f64> = self
            .ops
            .par_iter()
            .zip(&self.frequencies)
            .map(|(op, &hz)| {
                let lu = factor(&op.assemble_a_values(m)?).map_err(|e| gather_error(0, hz, e))?;
                power_iteration_xi(&lu, &self.receivers, iters, seed)
            })
            .collect::<Result<_>>()?;
        Ok(per_freq.into_iter().fold(0.0, f64::max))
    }
}

fn gather_error(source_index: usize, frequency: f64, inner: Error) -> Error {
    Error::GatherSolve {
        source_index,
        frequency,
        inner: Box::new(inner),
    }
}

fn extension_matrix(physical: &Grid, pad: usize) -> Result<CsrMatrix<f64>> {
    let padded = physical.padded(pad);
    let t: Vec<_> = (0..padded.len())
        .map(|i| {
            let (iz, ix) = padded.coords(i);
            let sz = iz.saturating_sub(pad).min(physical.nz - 1);
            let sx = ix.saturating_sub(pad).min(physical.nx - 1);
            (i, physical.index(sz, sx), 1.0)
        })
        .collect();
    CsrMatrix::from_triplets(padded.len(), physical.len(), &t)
}

fn gradient_gram(grid: &Grid) -> Result<CsrMatrix<f64>> {
    let n = grid.len();
    let nz = grid.nz;
    let mut t = Vec::with_capacity(8 * n);
    // each nonzero difference couples i and j with the stencil [1 -1; -1 1]
    let mut pair = |i: usize, j: usize| {
        t.extend_from_slice(&[(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)]);
    };
    for i in 0..nz * (grid.nx - 1) {
        pair(i, i + nz);
    }
    for ix in 0..grid.nx {
        for iz in 0..nz - 1 {
            pair(ix * nz + iz, ix * nz + iz + 1);
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

fn add(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn check_duals(batch: &Batch, duals: &DualState) -> Result<()> {
    let ok = duals.d_dual.len() == batch.n_freq()
        && duals.b_dual.len() == batch.n_freq()
        && duals.d_dual.iter().zip(&duals.b_dual).all(|(d, b)| {
            d.len() == batch.n_src()
                && b.len() == batch.n_src()
                && d.iter().all(|v| v.len() == batch.receivers.len())
                && b.iter().all(|v| v.len() == batch.grid.len())
        });
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput("dual state does not match the batch".into()))
    }
}

/// Minimizers of `lambda0 |P u - (d + d_dual)|^2 + lambda1 |A(m) u - (b + b_dual)|^2`,
/// with one factorization per frequency shared by its sources.
pub fn reconstruct_wavefields(
    batch: &Batch,
    m: &[f64],
    duals: &DualState,
    lambda0: f64,
    lambda1: f64,
) -> Result<WavefieldBatch> {
    batch.physical.check_len("model", m.len())?;
    check_duals(batch, duals)?;
    let m = &batch.extend(m);
    (0..batch.n_freq())
        .into_par_iter()
        .map(|f| {
            let hz = batch.frequencies[f];
            let a = batch.ops[f].assemble_a_values(m)?;
            let system = WavefieldNormalSystem::new(&a, &batch.receivers, lambda0, lambda1, batch.backend)
                .map_err(|e| gather_error(0, hz, e))?;
            (0..batch.n_src())
                .into_par_iter()
                .map(|s| {
                    let rhs_d = add(&batch.data[f][s], &duals.d_dual[f][s]);
                    let rhs_b = add(&batch.sources[f][s], &duals.b_dual[f][s]);
                    system.solve(&rhs_d, &rhs_b).map_err(|e| gather_error(s, hz, e))
                })
                .collect()
        })
        .collect()
}

/// `d_dual += alpha (d - P u)` and `b_dual += alpha (b - A(m) u)`.
pub fn update_outer_duals(batch: &Batch, duals: &mut DualState, m: &[f64], u: &WavefieldBatch, alpha: f64) {
    let m = &batch.extend(m);
    let upd = |acc: &mut [Complex64], target: &[Complex64], model: &[Complex64]| {
        for ((a, t), y) in acc.iter_mut().zip(target).zip(model) {
            *a += (t - y) * alpha;
        }
    };
    for f in 0..batch.n_freq() {
        for s in 0..batch.n_src() {
            let pu = sample(&u[f][s], &batch.receivers);
            upd(&mut duals.d_dual[f][s], &batch.data[f][s], &pu);
            let au = batch.ops[f].apply_a(m, &u[f][s]);
            upd(&mut duals.b_dual[f][s], &batch.sources[f][s], &au);
        }
    }
}

/// Mean over the physical cells of the diagonal of `sum L(u)^H L(u)`.
pub fn compute_zeta(batch: &Batch, u: &WavefieldBatch) -> Result<f64> {
    let mut diag = vec![0.0; batch.grid.len()];
    for (op, fields) in batch.ops.iter().zip(u) {
        for uf in fields {
            for (_, c, v) in op.apply_l(uf)?.iter() {
                diag[c] += v.norm_sqr();
            }
        }
    }
    let (g, pad) = (batch.grid, batch.pad);
    let mut sum = 0.0;
    for ix in pad..g.nx - pad {
        for iz in pad..g.nz - pad {
            sum += diag[g.index(iz, ix)];
        }
    }
    Ok(sum / batch.physical.len() as f64)
}

/// The real symmetric model system `H m = g`.
#[derive(Debug, Clone)]
pub struct ModelSystem {
    pub h: CsrMatrix<f64>,
    pub g: Vec<f64>,
}

/// Assembles
/// `H = lambda1 E^T sum Re(L^H L) E + (damping + gamma0) I + gamma (grad1^T grad1 + grad2^T grad2)`
/// and
/// `g = lambda1 E^T sum Re(L^H (b + b_dual - Lap u)) + damping anchor + gamma0 (p0 + q0)
///      + gamma (grad1^T (p1 + q1) + grad2^T (p2 + q2))`
/// on the physical grid, `E` being the edge extension and `anchor` the
/// model the damping pulls towards.
#[allow(clippy::too_many_arguments)]
pub fn assemble_model_system(
    batch: &Batch,
    anchor: &[f64],
    u: &WavefieldBatch,
    duals: &DualState,
    split: &SplitState,
    gw: GammaWeights,
    lambda1: f64,
    damping: f64,
) -> Result<ModelSystem> {
    let n = batch.physical.len();
    batch.physical.check_len("damping anchor", anchor.len())?;
    batch.physical.check_len("split state", split.len())?;
    check_duals(batch, duals)?;
    let pieces: Vec<(CsrMatrix<f64>, Vec<f64>)> = (0..batch.n_freq())
        .flat_map(|f| (0..batch.n_src()).map(move |s| (f, s)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(f, s)| {
            let op = &batch.ops[f];
            let uf = &u[f][s];
            let l = op.apply_l(uf)?;
            let lap_u = op.laplacian.mul_vec(uf);
            let y: Vec<Complex64> = batch.sources[f][s]
                .iter()
                .zip(&duals.b_dual[f][s])
                .zip(&lap_u)
                .map(|((b, bd), lu)| b + bd - lu)
                .collect();
            let rhs: Vec<f64> = l.conj_transpose_mul_vec(&y).iter().map(|v| v.re).collect();
            Ok((l.gram().real_part(), rhs))
        })
        .collect::<Result<_>>()?;

    let nc = batch.grid.len();
    let mut h = CsrMatrix::<f64>::zeros(nc, nc);
    let mut g = vec![0.0; nc];
    for (hp, gp) in &pieces {
        h = h.add_scaled(1.0, hp, 1.0)?;
        g.iter_mut().zip(gp).for_each(|(a, b)| *a += b);
    }
    let h = batch.extension_t.matmul(&h)?.matmul(&batch.extension)?;
    let mut g = batch.fold(&g);
    let mut h = h.scaled(lambda1).add_diagonal(&vec![damping + gw.gamma0; n])?;
    g.iter_mut().for_each(|v| *v *= lambda1);
    for i in 0..n {
        g[i] += damping * anchor[i] + gw.gamma0 * (split.p0[i] + split.q0[i]);
    }
    if gw.gamma != 0.0 {
        h = h.add_scaled(1.0, &batch.grad_gram, gw.gamma)?;
        let w1: Vec<f64> = split.p1.iter().zip(&split.q1).map(|(p, q)| p + q).collect();
        let w2: Vec<f64> = split.p2.iter().zip(&split.q2).map(|(p, q)| p + q).collect();
        let t1 = tv::grad1_adjoint(&batch.physical, &w1);
        let t2 = tv::grad2_adjoint(&batch.physical, &w2);
        for i in 0..n {
            g[i] += gw.gamma * (t1[i] + t2[i]);
        }
    }
    Ok(ModelSystem { h, g })
}

/// Solves the model system. The result is not projected; bounds act
/// through `p0`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_model(
    batch: &Batch,
    anchor: &[f64],
    u: &WavefieldBatch,
    duals: &DualState,
    split: &SplitState,
    gw: GammaWeights,
    lambda1: f64,
    damping: f64,
) -> Result<Vec<f64>> {
    let sys = assemble_model_system(batch, anchor, u, duals, split, gw, lambda1, damping)?;
    let m = solve_model_normal(&sys.h, &sys.g, batch.backend)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    Ok(m)
}

/// Norms `(|P u - d|, |A(m) u - b|)` stacked over the batch.
pub fn residuals(batch: &Batch, m: &[f64], u: &WavefieldBatch) -> (f64, f64) {
    let m = &batch.extend(m);
    let mut dsq = 0.0;
    let mut bsq = 0.0;
    for f in 0..batch.n_freq() {
        for s in 0..batch.n_src() {
            dsq += diff_norm2(&sample(&u[f][s], &batch.receivers), &batch.data[f][s]).powi(2);
            bsq += diff_norm2(&batch.ops[f].apply_a(m, &u[f][s]), &batch.sources[f][s]).powi(2);
        }
    }
    (dsq.sqrt(), bsq.sqrt())
}

/// `|P A(m)^{-1} b - d|` stacked over the batch.
pub fn data_misfit(batch: &Batch, m: &[f64]) -> Result<f64> {
    let u = batch.simulate(m)?;
    Ok(residuals(batch, m, &u).0)
}

/// True model and wavefields for error metrics.
#[derive(Debug, Clone)]
pub struct Reference {
    pub m: Vec<f64>,
    pub u: WavefieldBatch,
}

impl Reference {
    pub fn new(batch: &Batch, m_true: &[f64]) -> Result<Self> {
        Ok(Self {
            m: m_true.to_vec(),
            u: batch.simulate(m_true)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct InversionState {
    pub m: Vec<f64>,
    pub duals: DualState,
    pub split: SplitState,
    /// Completed outer iterations over the whole run.
    pub iter: usize,
    pub lambda0: f64,
    pub lambda1: f64,
}

impl InversionState {
    /// Zero duals and a split state matching `m`.
    pub fn start(batch: &Batch, m: Vec<f64>, lambda1: f64, iter: usize) -> Self {
        let split = SplitState::from_model(&batch.physical, &m, None);
        Self {
            duals: batch.zero_duals(),
            split,
            m,
            iter,
            lambda0: 1.0,
            lambda1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepSettings<'a> {
    pub mode: Mode,
    pub flags: Flags,
    pub penalty: &'a PenaltyConfig,
    pub bounds: Option<&'a Bounds>,
}

fn relative_error(x: &[f64], reference: &[f64]) -> f64 {
    diff_norm2(x, reference) / norm2(reference)
}

/// One outer iteration: wavefield solve, dual half-step, model solve, the
/// split updates with their two half-steps on `q`, and the second dual
/// half-step at the new model.
pub fn irwri_iterate(
    batch: &Batch,
    state: &mut InversionState,
    settings: &StepSettings,
    reference: Option<&Reference>,
) -> Result<IterationMetrics> {
    let grid = batch.physical;
    let pen = settings.penalty;
    let (lambda0, lambda1) = (state.lambda0, state.lambda1);
    let k = state.iter;

    let u = reconstruct_wavefields(batch, &state.m, &state.duals, lambda0, lambda1)?;
    if settings.mode == Mode::Irwri {
        update_outer_duals(batch, &mut state.duals, &state.m, &u, pen.alpha);
    }

    let zeta = compute_zeta(batch, &u)?;
    let scale = zeta * lambda1;
    let bounds = match settings.bounds {
        Some(b) if settings.flags.bounds_on && k >= pen.bounds_delay => Some(b),
        _ => None,
    };
    let tv_on = settings.flags.tv_on;
    let c = pen.gamma_factor(k);
    let gw = GammaWeights {
        gamma0: if bounds.is_some() { c * scale } else { 0.0 },
        gamma: if tv_on { c * scale } else { 0.0 },
    };
    let damping = pen.damping_frac * scale;
    let zeros;
    let anchor = match pen.damping_target {
        DampingTarget::Zero => {
            zeros = vec![0.0; state.m.len()];
            &zeros
        }
        DampingTarget::Current => &state.m,
    };
    let m_new = estimate_model(batch, anchor, &u, &state.duals, &state.split, gw, lambda1, damping)?;

    // split variables of inactive constraints track the model with zero duals
    let mut split = tv::update_q(&grid, &state.split, &m_new, 0.5);
    let [_, z1, z2] = tv::prox_arguments(&grid, &m_new, &split);
    let threshold = if tv_on { pen.threshold.resolve(&z1, &z2) } else { 0.0 };
    split = tv::update_p(&grid, &m_new, &split, bounds, threshold);
    split = tv::update_q(&grid, &split, &m_new, 0.5);
    if bounds.is_none() {
        split.p0 = m_new.clone();
        split.q0.iter_mut().for_each(|v| *v = 0.0);
    }
    if !tv_on {
        split.p1 = tv::grad1(&grid, &m_new);
        split.p2 = tv::grad2(&grid, &m_new);
        split.q1.iter_mut().for_each(|v| *v = 0.0);
        split.q2.iter_mut().for_each(|v| *v = 0.0);
    }

    // J at (m^{k+1}, p^{k+1}) with the right-hand sides of the model solve
    let mut fit = 0.0;
    let m_ext = batch.extend(&m_new);
    for f in 0..batch.n_freq() {
        for s in 0..batch.n_src() {
            let target = add(&batch.sources[f][s], &state.duals.b_dual[f][s]);
            fit += diff_norm2(&batch.ops[f].apply_a(&m_ext, &u[f][s]), &target).powi(2);
        }
    }
    let tv_p: f64 = split.p1.iter().zip(&split.p2).map(|(a, b)| a.hypot(*b)).sum();
    let objective_j = tv_p + 0.5 * lambda1 * fit;

    if settings.mode == Mode::Irwri {
        update_outer_duals(batch, &mut state.duals, &m_new, &u, pen.alpha);
    }
    let (data_residual, wave_residual) = residuals(batch, &m_new, &u);

    let (model_error, wavefield_error) = match reference {
        Some(r) => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (uf, rf) in u.iter().flatten().zip(r.u.iter().flatten()) {
                num += diff_norm2(uf, rf).powi(2);
                den += norm2(rf).powi(2);
            }
            (
                Some(relative_error(&m_new, &r.m)),
                Some((num / den).sqrt()),
            )
        }
        None => (None, None),
    };

    let tv = tv::tv_norm(&grid, &m_new);
    state.m = m_new;
    state.split = split;
    state.iter += 1;

    Ok(IterationMetrics {
        iter: state.iter,
        data_residual,
        wave_residual,
        model_error,
        wavefield_error,
        tv,
        objective_j,
        gamma: gw.gamma,
        lambda1,
        zeta,
        threshold,
    })
}

/// Fixed inputs of an inversion run.
#[derive(Debug, Clone)]
pub struct InversionSetup {
    pub mode: Mode,
    pub flags: Flags,
    pub penalty: PenaltyConfig,
    pub schedule: BatchSchedule,
    pub disc: Discretization,
    pub backend: Backend,
    /// Required when `flags.bounds_on`.
    pub bounds: Option<Bounds>,
    /// True model enabling the error metrics.
    pub truth: Option<Model>,
    /// Data tolerance per batch from the injected noise instead of `eps_d`.
    pub noise_tolerance: bool,
    /// Seeds the power iteration.
    pub seed: u64,
}

impl InversionSetup {
    pub fn validate(&self, initial: &Model, data: &DataSet, survey: &Survey) -> Result<()> {
        self.penalty.validate()?;
        self.schedule.validate()?;
        self.disc.pml.validate(&initial.grid.padded(self.disc.pml.n_pml))?;
        survey.validate(&initial.grid)?;
        if self.flags.bounds_on {
            match &self.bounds {
                Some(b) => initial.grid.check_len("bounds", b.len())?,
                None => return Err(Error::InvalidConfig("bounds_on requires bounds".into())),
            }
        }
        if let Some(t) = &self.truth {
            if t.grid != initial.grid {
                return Err(Error::InvalidConfig("truth model grid differs from the initial model".into()));
            }
        }
        for hz in self.schedule.batches.iter().flatten() {
            if data.frequency_index(*hz).is_none() {
                return Err(Error::InvalidConfig(format!("no data recorded at {hz} Hz")));
            }
        }
        if self.noise_tolerance {
            for batch in &self.schedule.batches {
                if data.noise_level(batch).is_none() {
                    return Err(Error::InvalidConfig(
                        "noise tolerance requested but the data carries no noise record".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-batch summary in addition to the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub frequencies: Vec<f64>,
    pub xi: f64,
    pub lambda1: f64,
    pub iterations: usize,
    pub eps_d: f64,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub model: Model,
    pub metrics: Vec<IterationMetrics>,
    pub batches: Vec<BatchRecord>,
}

/// Sweeps the schedule's batches. Each batch starts from the previous model
/// with zero duals, a fresh split state and `lambda1` rescaled from `xi` at
/// its starting model; gamma decays over the iterations of the whole run.
pub fn run_inversion(setup: &InversionSetup, initial: &Model, data: &DataSet, survey: &Survey) -> Result<InversionResult> {
    setup.validate(initial, data, survey)?;
    let grid = initial.grid;
    let mut m = initial.values.clone();
    let mut iter = 0;
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let settings = StepSettings {
        mode: setup.mode,
        flags: setup.flags,
        penalty: &setup.penalty,
        bounds: setup.bounds.as_ref(),
    };
    for freqs in &setup.schedule.batches {
        let batch = Batch::new(grid, &setup.disc, survey, data, freqs, setup.backend)?;
        let reference = match &setup.truth {
            Some(t) => Some(Reference::new(&batch, &t.values)?),
            None => None,
        };
        let xi = batch.xi(&m, setup.penalty.xi_iterations, setup.seed)?;
        let lambda1 = setup.penalty.lambda_frac * xi;
        let mut sched = setup.schedule.clone();
        if setup.noise_tolerance {
            sched.eps_d = data.noise_level(freqs).unwrap_or(sched.eps_d);
        }
        let mut state = InversionState::start(&batch, std::mem::take(&mut m), lambda1, iter);
        let mut in_batch = 0;
        loop {
            let rec = irwri_iterate(&batch, &mut state, &settings, reference.as_ref())?;
            in_batch += 1;
            let stop = stopping_check(rec.data_residual, rec.wave_residual, in_batch, &sched);
            metrics.push(rec);
            if stop == Decision::Stop {
                break;
            }
        }
        iter = state.iter;
        m = state.m;
        records.push(BatchRecord {
            frequencies: freqs.clone(),
            xi,
            lambda1,
            iterations: in_batch,
            eps_d: sched.eps_d,
        });
    }
    Ok(InversionResult {
        model: Model::unchecked(grid, m),
        metrics,
        batches: records,
    })
}

/// Runs the passes in order, each restarting the schedule at its start
/// frequency from the final model of the previous pass.
pub fn run_paths(
    setup: &InversionSetup,
    paths: &[crate::continuation::Path],
    initial: &Model,
    data: &DataSet,
    survey: &Survey,
) -> Result<Vec<InversionResult>> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("no paths given".into()));
    }
    let mut current = initial.clone();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let mut pass = setup.clone();
        pass.schedule = setup.schedule.starting_at(p.start_hz);
        if pass.schedule.batches.is_empty() {
            return Err(Error::InvalidConfig(format!("no batch starts at or above {} Hz", p.start_hz)));
        }
        let res = run_inversion(&pass, &current, data, survey)?;
        current = res.model.clone();
        out.push(res);
    }
    Ok(out)
}
