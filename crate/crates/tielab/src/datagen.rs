//! Synthetic preference pairs: Gaussian feature laws, Bradley–Terry labels,
//! ties, deployment shifts and strict/tie mixtures.
//!
//! Labels are never stored as bits. A record keeps its draw when the first
//! item wins and is negated otherwise, so every batch holds winner-minus-loser
//! differences only.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LabError, Result};
use crate::moments::{check_psd, dot, psd_sqrt, BlockMatrix, BlockMoments, BlockVector};
use crate::rng::{stream_rng, substream, LabRng};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bradley–Terry annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub theta_dagger: BlockVector,
    pub beta_teacher: f64,
}

/// How a feature difference and its label are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Oriented differences drawn directly from `N(mean, covariance)`; no annotator.
    NoBt,
    /// Raw features with a Gaussian copula of strength `rho` between matched
    /// causal/spurious coordinates; labels depend on the causal block only.
    BtCausal,
    /// Raw features from `N(mean, covariance)`; labels use the full teacher.
    BtFull,
    /// Same sampling as `NoBt`, used for the tie-mixing experiments.
    DirectDiff,
    /// Causal features drive the label; the spurious block is shifted by
    /// `y · mean.spurious` after the label is drawn, so the oriented
    /// spurious mean equals `mean.spurious` exactly.
    LabelCoupled,
}

/// Data-generating law of one record before labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLawSpec {
    pub regime: Regime,
    pub mean: BlockVector,
    /// Centered covariance of the raw draw.
    pub covariance: BlockMatrix,
    pub rho: f64,
    pub lambda0: f64,
}

impl FeatureLawSpec {
    /// Zero-mean law with `cc = I`, `ss = λ₀ I`, `cs = 0`.
    pub fn isotropic(regime: Regime, dc: usize, ds: usize, lambda0: f64, rho: f64) -> Self {
        let mut cov = BlockMatrix::identity(dc, ds);
        cov.ss *= lambda0;
        Self {
            regime,
            mean: BlockVector::zeros(dc, ds),
            covariance: cov,
            rho,
            lambda0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.covariance.dc(), self.covariance.ds())
    }

    /// Covariance actually used for the raw draw (the copula fills `cs` for
    /// `BtCausal`; `LabelCoupled` subtracts the coupling from `ss`).
    pub fn effective_covariance(&self) -> BlockMatrix {
        let mut cov = self.covariance.clone();
        match self.regime {
            Regime::BtCausal => {
                cov.cs.fill(0.0);
                for i in 0..cov.dc().min(cov.ds()) {
                    cov.cs[(i, i)] = self.rho * (cov.cc[(i, i)] * cov.ss[(i, i)]).sqrt();
                }
            }
            Regime::LabelCoupled => {
                cov.cs.fill(0.0);
                let m = DVector::from_column_slice(&self.mean.spurious);
                cov.ss -= &m * m.transpose();
            }
            _ => {}
        }
        cov
    }

    pub fn validate(&self) -> Result<()> {
        let (dc, ds) = self.dims();
        if self.mean.dims() != (dc, ds) {
            return Err(dim_err(format!("({dc}, {ds})"), format!("{:?}", self.mean.dims())));
        }
        check_psd(&self.effective_covariance().assemble(), "feature covariance")
    }

    /// Exact moments of the oriented difference when they are available in
    /// closed form (annotator-free regimes).
    pub fn population_moments(&self) -> Option<BlockMoments> {
        match self.regime {
            Regime::NoBt | Regime::DirectDiff => {
                let mu = self.mean.to_dvector();
                let sigma = self.covariance.assemble() + &mu * mu.transpose();
                let (dc, _) = self.dims();
                Some(BlockMoments {
                    mean: self.mean.clone(),
                    second_moment: BlockMatrix::from_full(&sigma, dc).ok()?,
                    sample_count: 0,
                })
            }
            _ => None,
        }
    }

    /// Law with the spurious mean set so that the uncentered second moment
    /// equals `target` exactly (`covariance = target − μμᵀ`).
    pub fn direct_with_second_moment(mean: BlockVector, target: &BlockMatrix) -> Result<Self> {
        let mu = mean.to_dvector();
        let cov = target.assemble() - &mu * mu.transpose();
        check_psd(&cov, "target minus mean outer product")?;
        let (dc, _) = mean.dims();
        Ok(Self {
            regime: Regime::DirectDiff,
            mean,
            covariance: BlockMatrix::from_full(&cov, dc)?,
            rho: 0.0,
            lambda0: target.ss[(0, 0)],
        })
    }
}

/// Origin of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Strict,
    Tie,
    NearTie,
}

/// Oriented feature differences stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceBatch {
    pub dc: usize,
    pub ds: usize,
    pub data: Vec<f64>,
    pub provenance: Vec<Provenance>,
    pub seed: u64,
    pub stream: u64,
}

impl PreferenceBatch {
    pub fn empty(dc: usize, ds: usize, seed: u64, stream: u64) -> Self {
        Self {
            dc,
            ds,
            data: Vec::new(),
            provenance: Vec::new(),
            seed,
            stream,
        }
    }

    pub fn dim(&self) -> usize {
        self.dc + self.ds
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim())
    }

    pub fn record(&self, i: usize) -> BlockVector {
        BlockVector::from_slice(self.row(i), self.dc)
    }

    pub fn push(&mut self, row: &[f64], tag: Provenance) {
        debug_assert_eq!(row.len(), self.dim());
        self.data.extend_from_slice(row);
        self.provenance.push(tag);
    }

    pub fn moments(&self) -> Result<BlockMoments> {
        if self.is_empty() {
            return Err(LabError::DegenerateInput("empty batch".into()));
        }
        BlockMoments::from_rows(&self.data, self.dc, self.ds)
    }

    /// First `n` records.
    pub fn prefix(&self, n: usize) -> PreferenceBatch {
        let n = n.min(self.len());
        PreferenceBatch {
            dc: self.dc,
            ds: self.ds,
            data: self.data[..n * self.dim()].to_vec(),
            provenance: self.provenance[..n].to_vec(),
            seed: self.seed,
            stream: self.stream,
        }
    }

    /// Distinct rows with multiplicities, in order of first appearance.
    pub fn compress(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for r in self.rows() {
            let key: Vec<u64> = r.iter().map(|x| x.to_bits()).collect();
            match index.get(&key) {
                Some(&k) => counts[k] += 1.0,
                None => {
                    index.insert(key, counts.len());
                    rows.extend_from_slice(r);
                    counts.push(1.0);
                }
            }
        }
        debug_assert_eq!(rows.len(), counts.len() * d);
        (rows, counts)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, tag) in self.rows().zip(&self.provenance) {
            let rec = JsonlRecord {
                dc: self.dc,
                ds: self.ds,
                diff: r.to_vec(),
                tag: *tag,
                seed: self.seed,
                stream: self.stream,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<PreferenceBatch> {
        let mut batch: Option<PreferenceBatch> = None;
        for line in r.lines() {
            let line = line.map_err(|e| LabError::DegenerateInput(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: JsonlRecord = serde_json::from_str(&line)
                .map_err(|e| LabError::DegenerateInput(format!("bad record: {e}")))?;
            let b = batch.get_or_insert_with(|| PreferenceBatch::empty(rec.dc, rec.ds, rec.seed, rec.stream));
            if rec.dc != b.dc || rec.ds != b.ds || rec.diff.len() != b.dim() {
                return Err(dim_err(
                    format!("({}, {})", b.dc, b.ds),
                    format!("({}, {}) with {} values", rec.dc, rec.ds, rec.diff.len()),
                ));
            }
            b.push(&rec.diff, rec.tag);
        }
        batch.ok_or_else(|| LabError::DegenerateInput("no records".into()))
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    dc: usize,
    ds: usize,
    diff: Vec<f64>,
    tag: Provenance,
    seed: u64,
    stream: u64,
}

/// Precomputed sampler for one law/teacher pair.
pub struct StrictSampler {
    law: FeatureLawSpec,
    teacher: TeacherSpec,
    root: DMatrix<f64>,
    mean: Vec<f64>,
    coupling: Vec<f64>,
    labeled: bool,
    label_weights: Vec<f64>,
    z: Vec<f64>,
}

impl StrictSampler {
    pub fn new(law: &FeatureLawSpec, teacher: &TeacherSpec) -> Result<Self> {
        law.validate()?;
        let (dc, ds) = law.dims();
        if teacher.theta_dagger.dims() != (dc, ds) {
            return Err(dim_err(format!("teacher dims ({dc}, {ds})"), format!("{:?}", teacher.theta_dagger.dims())));
        }
        let root = psd_sqrt(&law.effective_covariance().assemble(), "feature covariance")?;
        let mut mean = law.mean.to_vec();
        let mut coupling = vec![0.0; dc + ds];
        let mut label_weights: Vec<f64> = teacher
            .theta_dagger
            .to_vec()
            .iter()
            .map(|t| t * teacher.beta_teacher)
            .collect();
        match law.regime {
            Regime::BtCausal => label_weights[dc..].fill(0.0),
            Regime::LabelCoupled => {
                label_weights[dc..].fill(0.0);
                coupling[dc..].copy_from_slice(&law.mean.spurious);
                mean[dc..].fill(0.0);
            }
            _ => {}
        }
        let labeled = !matches!(law.regime, Regime::NoBt | Regime::DirectDiff);
        Ok(Self {
            law: law.clone(),
            teacher: teacher.clone(),
            root,
            mean,
            coupling,
            labeled,
            label_weights,
            z: vec![0.0; dc + ds],
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.law.dims()
    }

    pub fn teacher(&self) -> &TeacherSpec {
        &self.teacher
    }

    /// Draw one oriented difference into `out`.
    pub fn draw(&mut self, rng: &mut LabRng, out: &mut [f64]) {
        let d = self.mean.len();
        for z in self.z.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..d {
                acc += self.root[(i, j)] * self.z[j];
            }
            out[i] = acc;
        }
        if !self.labeled {
            return;
        }
        let p = sigmoid(dot(&self.label_weights, out));
        let u: f64 = rng.random();
        let y = if u < p { 1.0 } else { -1.0 };
        for i in 0..d {
            out[i] = y * (out[i] + y * self.coupling[i]);
        }
    }
}

/// Strict pairs labeled by the teacher.
pub fn sample_strict_batch(
    law: &FeatureLawSpec,
    teacher: &TeacherSpec,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<PreferenceBatch> {
    if n == 0 {
        return Err(LabError::DegenerateInput("n must be >= 1".into()));
    }
    let mut sampler = StrictSampler::new(law, teacher)?;
    let mut rng = stream_rng(seed, stream);
    let (dc, ds) = law.dims();
    let mut batch = PreferenceBatch::empty(dc, ds, seed, stream);
    batch.data.reserve(n * (dc + ds));
    let mut row = vec![0.0; dc + ds];
    for _ in 0..n {
        sampler.draw(&mut rng, &mut row);
        batch.push(&row, Provenance::Strict);
    }
    Ok(batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieKind {
    Exact,
    Near,
    SpuriousFlip,
}

impl TieKind {
    fn name(self) -> &'static str {
        match self {
            TieKind::Exact => "exact",
            TieKind::Near => "near",
            TieKind::SpuriousFlip => "spurious_flip",
        }
    }
}

/// Tie law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieSpec {
    pub kind: TieKind,
    /// Causal margin threshold used by generators that select ties.
    pub tau: f64,
    /// Causal variance of near ties.
    pub tau_sq: f64,
    /// Spurious variance of tie differences.
    pub sigma_sq: f64,
}

impl TieSpec {
    pub fn exact(sigma_sq: f64) -> Self {
        Self {
            kind: TieKind::Exact,
            tau: 0.0,
            tau_sq: 0.0,
            sigma_sq,
        }
    }

    pub fn near(tau_sq: f64, sigma_sq: f64) -> Self {
        Self {
            kind: TieKind::Near,
            tau: 0.0,
            tau_sq,
            sigma_sq,
        }
    }

    /// Uncentered second moment of the tie difference.
    pub fn second_moment(&self, dc: usize, ds: usize) -> BlockMatrix {
        let causal = if self.kind == TieKind::Near { self.tau_sq } else { 0.0 };
        BlockMatrix {
            cc: DMatrix::identity(dc, dc) * causal,
            cs: DMatrix::zeros(dc, ds),
            ss: DMatrix::identity(ds, ds) * self.sigma_sq,
        }
    }
}

fn wrong_kind(expected: TieKind, got: TieKind) -> LabError {
    LabError::WrongKind {
        expected: expected.name().into(),
        got: got.name().into(),
    }
}

/// Exact ties: zero causal difference, spurious difference `±δ_s` with
/// `δ_s ~ N(0, σ² I)` and a fair-coin sign.
pub fn sample_tie_batch(
    spec: &TieSpec,
    dims: (usize, usize),
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<PreferenceBatch> {
    if spec.kind != TieKind::Exact {
        return Err(wrong_kind(TieKind::Exact, spec.kind));
    }
    tie_like_batch(0.0, spec.sigma_sq, dims, n, seed, stream, Provenance::Tie)
}

/// Near ties: `Δφ_c ~ N(0, τ² I)`, `Δφ_s ~ N(0, σ² I)`, whole-record coin flip.
pub fn sample_near_tie_batch(
    spec: &TieSpec,
    dims: (usize, usize),
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<PreferenceBatch> {
    if spec.kind != TieKind::Near {
        return Err(wrong_kind(TieKind::Near, spec.kind));
    }
    if spec.tau_sq < 0.0 {
        return Err(LabError::DegenerateInput("tau_sq must be >= 0".into()));
    }
    tie_like_batch(spec.tau_sq, spec.sigma_sq, dims, n, seed, stream, Provenance::NearTie)
}

fn tie_like_batch(
    causal_var: f64,
    spurious_var: f64,
    (dc, ds): (usize, usize),
    n: usize,
    seed: u64,
    stream: u64,
    tag: Provenance,
) -> Result<PreferenceBatch> {
    if n == 0 {
        return Err(LabError::DegenerateInput("n must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, stream);
    let (sc, ss) = (causal_var.sqrt(), spurious_var.sqrt());
    let mut batch = PreferenceBatch::empty(dc, ds, seed, stream);
    let mut row = vec![0.0; dc + ds];
    for _ in 0..n {
        for (i, x) in row.iter_mut().enumerate() {
            let g: f64 = rng.sample(StandardNormal);
            *x = if i < dc { sc * g } else { ss * g };
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        row.iter_mut().for_each(|x| *x *= sign);
        batch.push(&row, tag);
    }
    Ok(batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Identity,
    Suppression,
    Adversarial,
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub scenario: Scenario,
    pub rotation_cos: f64,
}

impl ShiftSpec {
    pub fn of(scenario: Scenario) -> Self {
        Self {
            scenario,
            rotation_cos: 1.0,
        }
    }
}

/// Deployment law `Q` obtained from `P` by transforming the spurious mean.
///
/// Causal statistics are copied verbatim. For `BtCausal` the spurious mean
/// is induced by the copula, so suppression and adversarial shifts act on
/// `rho` instead.
pub fn shifted_distribution(base: &FeatureLawSpec, shift: &ShiftSpec) -> Result<FeatureLawSpec> {
    let mut q = base.clone();
    let ds = base.dims().1;
    if matches!(shift.scenario, Scenario::Adversarial | Scenario::Rotation)
        && base.mean.spurious.iter().all(|&x| x == 0.0)
        && base.regime != Regime::BtCausal
    {
        tracing::warn!("shift {:?} applied to a law with zero spurious mean", shift.scenario);
    }
    match (shift.scenario, base.regime) {
        (Scenario::Identity, _) => {}
        (Scenario::Suppression, Regime::BtCausal) => q.rho = 0.0,
        (Scenario::Adversarial, Regime::BtCausal) => q.rho = -base.rho,
        (Scenario::Suppression, _) => q.mean.spurious = vec![0.0; ds],
        (Scenario::Adversarial, _) => q.mean.spurious = base.mean.spurious.iter().map(|x| -x).collect(),
        (Scenario::Rotation, _) => q.mean.spurious = rotate_at_fixed_norm(&base.mean.spurious, shift.rotation_cos)?,
    }
    Ok(q)
}

/// Rotate `v` to angle `ψ` (given by `cos ψ`) inside the plane spanned by `v`
/// and the lowest-index coordinate axis not parallel to it, keeping `‖v‖`.
pub fn rotate_at_fixed_norm(v: &[f64], cos: f64) -> Result<Vec<f64>> {
    let ds = v.len();
    if !(-1.0..=1.0).contains(&cos) {
        return Err(LabError::DegenerateInput(format!("cos {cos} outside [-1, 1]")));
    }
    if cos == 1.0 {
        return Ok(v.to_vec());
    }
    if cos == -1.0 {
        return Ok(v.iter().map(|x| -x).collect());
    }
    if ds < 2 {
        return Err(LabError::InfeasibleRotation { ds, cos });
    }
    let norm = dot(v, v).sqrt();
    if norm == 0.0 {
        return Ok(v.to_vec());
    }
    let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let k = (0..ds)
        .find(|&k| u[k].abs() < 1.0 - 1e-12)
        .ok_or(LabError::InfeasibleRotation { ds, cos })?;
    let mut w: Vec<f64> = u.iter().map(|x| -u[k] * x).collect();
    w[k] += 1.0;
    let wn = dot(&w, &w).sqrt();
    w.iter_mut().for_each(|x| *x /= wn);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    Ok(u.iter().zip(&w).map(|(a, b)| norm * (cos * a + sin * b)).collect())
}

/// Strict/tie mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub alpha: f64,
    pub law: FeatureLawSpec,
    pub teacher: TeacherSpec,
    pub tie: TieSpec,
}

/// Each record is strict with probability `alpha`, otherwise a tie.
///
/// Strict records are drawn in order from `(seed, stream)` itself, so the
/// strict part of any mixture is a prefix of `sample_strict_batch` with the
/// same key, and `alpha = 1` reproduces it exactly. Coins and ties use
/// derived streams.
pub fn sample_mixture(mix: &MixtureSpec, n: usize, seed: u64, stream: u64) -> Result<PreferenceBatch> {
    if !(mix.alpha > 0.0 && mix.alpha <= 1.0) {
        return Err(LabError::InvalidMixing(mix.alpha));
    }
    if n == 0 {
        return Err(LabError::DegenerateInput("n must be >= 1".into()));
    }
    if mix.tie.kind == TieKind::SpuriousFlip {
        return Err(LabError::WrongKind {
            expected: "exact or near".into(),
            got: "spurious_flip".into(),
        });
    }
    let (dc, ds) = mix.law.dims();
    let mut coin_rng = stream_rng(seed, substream(stream, 0));
    let strict: Vec<bool> = (0..n).map(|_| coin_rng.random::<f64>() < mix.alpha).collect();
    let k = strict.iter().filter(|&&s| s).count();

    let mut sampler = StrictSampler::new(&mix.law, &mix.teacher)?;
    let mut strict_rng = stream_rng(seed, stream);
    let ties = if k < n {
        match mix.tie.kind {
            TieKind::Exact => sample_tie_batch(&mix.tie, (dc, ds), n - k, seed, substream(stream, 1))?,
            _ => sample_near_tie_batch(&mix.tie, (dc, ds), n - k, seed, substream(stream, 1))?,
        }
    } else {
        PreferenceBatch::empty(dc, ds, seed, stream)
    };

    let mut batch = PreferenceBatch::empty(dc, ds, seed, stream);
    batch.data.reserve(n * (dc + ds));
    let mut row = vec![0.0; dc + ds];
    let mut next_tie = 0;
    for s in strict {
        if s {
            sampler.draw(&mut strict_rng, &mut row);
            batch.push(&row, Provenance::Strict);
        } else {
            batch.push(ties.row(next_tie), ties.provenance[next_tie]);
            next_tie += 1;
        }
    }
    Ok(batch)
}
