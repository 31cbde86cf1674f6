//! Block-partitioned vectors, matrices and uncentered moment statistics.
//!
//! Every vector in the lab is split into a causal block of length `d_c`
//! followed by a spurious block of length `d_s`. Second moments are always
//! uncentered, `E[x xᵀ]`; centered covariances only appear transiently in
//! PSD checks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LabError, Result};

/// Eigenvalue floor below which a symmetric matrix is declared not PSD.
pub const PSD_FLOOR: f64 = -1e-10;
/// Smallest admissible eigenvalue for a factorized block.
pub const SPD_MIN_EIG: f64 = 1e-12;
/// Diagonal jitter added once before giving up on a factorization.
pub const JITTER: f64 = 1e-12;

/// `[causal; spurious]` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVector {
    pub causal: Vec<f64>,
    pub spurious: Vec<f64>,
}

impl BlockVector {
    pub fn new(causal: Vec<f64>, spurious: Vec<f64>) -> Result<Self> {
        if causal.len() + spurious.len() == 0 {
            return Err(LabError::DegenerateInput(
                "block vector needs d_c + d_s >= 1".into(),
            ));
        }
        Ok(Self { causal, spurious })
    }

    pub fn zeros(dc: usize, ds: usize) -> Self {
        Self {
            causal: vec![0.0; dc],
            spurious: vec![0.0; ds],
        }
    }

    /// Split a concatenated slice at `dc`.
    pub fn from_slice(v: &[f64], dc: usize) -> Self {
        Self {
            causal: v[..dc].to_vec(),
            spurious: v[dc..].to_vec(),
        }
    }

    pub fn from_dvector(v: &DVector<f64>, dc: usize) -> Self {
        Self::from_slice(v.as_slice(), dc)
    }

    pub fn dc(&self) -> usize {
        self.causal.len()
    }

    pub fn ds(&self) -> usize {
        self.spurious.len()
    }

    pub fn dim(&self) -> usize {
        self.dc() + self.ds()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dc(), self.ds())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.causal);
        v.extend_from_slice(&self.spurious);
        v
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_vec(self.to_vec())
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        dot(&self.causal, &other.causal) + dot(&self.spurious, &other.spurious)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn causal_norm(&self) -> f64 {
        dot(&self.causal, &self.causal).sqrt()
    }

    pub fn spurious_norm(&self) -> f64 {
        dot(&self.spurious, &self.spurious).sqrt()
    }

    pub fn scaled(&self, a: f64) -> BlockVector {
        BlockVector {
            causal: self.causal.iter().map(|x| a * x).collect(),
            spurious: self.spurious.iter().map(|x| a * x).collect(),
        }
    }

    pub fn sub(&self, other: &BlockVector) -> BlockVector {
        BlockVector {
            causal: self.causal.iter().zip(&other.causal).map(|(a, b)| a - b).collect(),
            spurious: self
                .spurious
                .iter()
                .zip(&other.spurious)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &BlockVector) -> BlockVector {
        self.sub(&other.scaled(-1.0))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric matrix stored as its `cc`, `cs` and `ss` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub cc: DMatrix<f64>,
    pub cs: DMatrix<f64>,
    pub ss: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn new(cc: DMatrix<f64>, cs: DMatrix<f64>, ss: DMatrix<f64>) -> Result<Self> {
        let (dc, ds) = (cc.nrows(), ss.nrows());
        if cc.ncols() != dc || ss.ncols() != ds || cs.shape() != (dc, ds) {
            return Err(dim_err(
                format!("cc {dc}x{dc}, cs {dc}x{ds}, ss {ds}x{ds}"),
                format!("cc {:?}, cs {:?}, ss {:?}", cc.shape(), cs.shape(), ss.shape()),
            ));
        }
        for (name, m) in [("cc", &cc), ("ss", &ss)] {
            let scale = m.amax().max(1.0);
            if (m - m.transpose()).amax() > 1e-12 * scale {
                return Err(LabError::DegenerateInput(format!("block {name} is not symmetric")));
            }
        }
        Ok(Self { cc, cs, ss })
    }

    pub fn zeros(dc: usize, ds: usize) -> Self {
        Self {
            cc: DMatrix::zeros(dc, dc),
            cs: DMatrix::zeros(dc, ds),
            ss: DMatrix::zeros(ds, ds),
        }
    }

    pub fn identity(dc: usize, ds: usize) -> Self {
        Self {
            cc: DMatrix::identity(dc, dc),
            cs: DMatrix::zeros(dc, ds),
            ss: DMatrix::identity(ds, ds),
        }
    }

    /// Split a symmetric `(dc+ds)`-square matrix.
    pub fn from_full(m: &DMatrix<f64>, dc: usize) -> Result<Self> {
        let d = m.nrows();
        if m.ncols() != d || dc > d {
            return Err(dim_err(format!("square matrix with dim >= {dc}"), format!("{:?}", m.shape())));
        }
        let ds = d - dc;
        Self::new(
            m.view((0, 0), (dc, dc)).into_owned(),
            m.view((0, dc), (dc, ds)).into_owned(),
            m.view((dc, dc), (ds, ds)).into_owned(),
        )
    }

    pub fn dc(&self) -> usize {
        self.cc.nrows()
    }

    pub fn ds(&self) -> usize {
        self.ss.nrows()
    }

    pub fn sc(&self) -> DMatrix<f64> {
        self.cs.transpose()
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let (dc, ds) = (self.dc(), self.ds());
        let mut m = DMatrix::zeros(dc + ds, dc + ds);
        m.view_mut((0, 0), (dc, dc)).copy_from(&self.cc);
        m.view_mut((0, dc), (dc, ds)).copy_from(&self.cs);
        m.view_mut((dc, 0), (ds, dc)).copy_from(&self.cs.transpose());
        m.view_mut((dc, dc), (ds, ds)).copy_from(&self.ss);
        m
    }

    pub fn scaled(&self, a: f64) -> BlockMatrix {
        BlockMatrix {
            cc: &self.cc * a,
            cs: &self.cs * a,
            ss: &self.ss * a,
        }
    }

    pub fn add(&self, other: &BlockMatrix) -> BlockMatrix {
        BlockMatrix {
            cc: &self.cc + &other.cc,
            cs: &self.cs + &other.cs,
            ss: &self.ss + &other.ss,
        }
    }
}

/// Mean and uncentered second moment of a set of feature differences.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMoments {
    pub mean: BlockVector,
    pub second_moment: BlockMatrix,
    pub sample_count: usize,
}

impl BlockMoments {
    /// Population moments supplied directly (sample_count 0).
    pub fn population(mean: BlockVector, second_moment: BlockMatrix) -> Result<Self> {
        if mean.dims() != (second_moment.dc(), second_moment.ds()) {
            return Err(dim_err(
                format!("({}, {})", second_moment.dc(), second_moment.ds()),
                format!("{:?}", mean.dims()),
            ));
        }
        Ok(Self {
            mean,
            second_moment,
            sample_count: 0,
        })
    }

    /// Moments of row-major records of width `dc + ds`, weighted per row.
    pub fn from_weighted_rows(rows: &[f64], weights: &[f64], dc: usize, ds: usize) -> Result<Self> {
        let d = dc + ds;
        if d == 0 || rows.len() != weights.len() * d {
            return Err(dim_err(format!("{} rows of width {d}", weights.len()), rows.len()));
        }
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || total <= 0.0 {
            return Err(LabError::DegenerateInput("no samples".into()));
        }
        let mut mean = vec![0.0; d];
        let mut sec = vec![0.0; d * d];
        for (x, &w) in rows.chunks_exact(d).zip(weights) {
            for i in 0..d {
                let wx = w * x[i];
                mean[i] += wx;
                let row = &mut sec[i * d..i * d + d];
                for j in i..d {
                    row[j] += wx * x[j];
                }
            }
        }
        let mut full = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = sec[i * d + j] / total;
                full[(i, j)] = v;
                full[(j, i)] = v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        Ok(Self {
            mean: BlockVector::from_slice(&mean, dc),
            second_moment: BlockMatrix::from_full(&full, dc)?,
            sample_count: total.round() as usize,
        })
    }

    /// Moments of row-major records of width `dc + ds`.
    pub fn from_rows(rows: &[f64], dc: usize, ds: usize) -> Result<Self> {
        let d = dc + ds;
        if d == 0 || rows.len() % d != 0 {
            return Err(dim_err(format!("multiple of {d}"), rows.len()));
        }
        let w = vec![1.0; rows.len() / d];
        Self::from_weighted_rows(rows, &w, dc, ds)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mean.dims()
    }

    /// Count-weighted pooling of two sample moment sets.
    pub fn combine(&self, other: &BlockMoments) -> Result<BlockMoments> {
        if self.dims() != other.dims() {
            return Err(dim_err(format!("{:?}", self.dims()), format!("{:?}", other.dims())));
        }
        let n = self.sample_count + other.sample_count;
        if n == 0 {
            return Err(LabError::DegenerateInput("pooling two empty moment sets".into()));
        }
        let (wa, wb) = (
            self.sample_count as f64 / n as f64,
            other.sample_count as f64 / n as f64,
        );
        Ok(BlockMoments {
            mean: self.mean.scaled(wa).add(&other.mean.scaled(wb)),
            second_moment: self.second_moment.scaled(wa).add(&other.second_moment.scaled(wb)),
            sample_count: n,
        })
    }

    /// Checks that Σ and Σ − μμᵀ are PSD up to the eigenvalue floor.
    pub fn validate(&self) -> Result<()> {
        let sigma = self.second_moment.assemble();
        check_psd(&sigma, "second moment")?;
        let mu = self.mean.to_dvector();
        check_psd(&(sigma - &mu * mu.transpose()), "covariance")
    }
}

/// Moments of a sequence of block vectors.
pub fn estimate_block_moments(samples: &[BlockVector]) -> Result<BlockMoments> {
    let first = samples
        .first()
        .ok_or_else(|| LabError::DegenerateInput("no samples".into()))?;
    let (dc, ds) = first.dims();
    let mut rows = Vec::with_capacity(samples.len() * (dc + ds));
    for s in samples {
        if s.dims() != (dc, ds) {
            return Err(dim_err(format!("({dc}, {ds})"), format!("{:?}", s.dims())));
        }
        rows.extend_from_slice(&s.causal);
        rows.extend_from_slice(&s.spurious);
    }
    BlockMoments::from_rows(&rows, dc, ds)
}

/// `S_c = Σ_cc − Σ_cs Σ_ss⁻¹ Σ_sc` together with `Σ_ss⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurParts {
    pub schur_c: DMatrix<f64>,
    pub ss_inverse: DMatrix<f64>,
}

pub fn schur_complement(m: &BlockMoments) -> Result<SchurParts> {
    schur_of(&m.second_moment)
}

pub fn schur_of(sigma: &BlockMatrix) -> Result<SchurParts> {
    let ss_inverse = spd_inverse(&sigma.ss, "ss")?;
    let schur_c = &sigma.cc - &sigma.cs * &ss_inverse * sigma.sc();
    let schur_c = symmetrize(&schur_c);
    Ok(SchurParts {
        schur_c,
        ss_inverse,
    })
}

/// `√(vᵀ a v)`.
pub fn weighted_norm(v: &[f64], a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != v.len() || a.ncols() != v.len() {
        return Err(dim_err(format!("{0}x{0}", v.len()), format!("{:?}", a.shape())));
    }
    let v = DVector::from_column_slice(v);
    let q = v.dot(&(a * &v));
    if q < PSD_FLOOR {
        return Err(LabError::NotPSD {
            what: "weighting matrix".into(),
            min_eig: q,
        });
    }
    Ok(q.max(0.0).sqrt())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix (+∞ for an empty matrix).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Largest eigenvalue of a symmetric matrix (−∞ for an empty matrix).
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

pub fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let e = min_eigenvalue(m);
    if e < PSD_FLOOR {
        return Err(LabError::NotPSD {
            what: what.into(),
            min_eig: e,
        });
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive-definite block.
///
/// The factorization is attempted on the matrix itself and then once more
/// with `JITTER` on the diagonal; in both attempts the smallest eigenvalue
/// must exceed `SPD_MIN_EIG`.
pub fn spd_cholesky(m: &DMatrix<f64>, block: &str) -> Result<Cholesky<f64, Dyn>> {
    let base = symmetrize(m);
    for jitter in [0.0, JITTER] {
        let a = &base + DMatrix::<f64>::identity(base.nrows(), base.ncols()) * jitter;
        if min_eigenvalue(&a) > SPD_MIN_EIG {
            if let Some(ch) = a.cholesky() {
                return Ok(ch);
            }
        }
    }
    Err(LabError::SingularBlock {
        block: block.into(),
    })
}

pub fn spd_inverse(m: &DMatrix<f64>, block: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    Ok(symmetrize(&spd_cholesky(m, block)?.inverse()))
}

pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, block: &str) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    Ok(spd_cholesky(m, block)?.solve(rhs))
}

/// Symmetric square root `V diag(√λ) Vᵀ` of a PSD matrix, used to draw
/// correlated Gaussians even when the covariance is singular.
pub fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.min();
    if min < PSD_FLOOR {
        return Err(LabError::NotPSD {
            what: what.into(),
            min_eig: min,
        });
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(c: &[f64], s: &[f64]) -> BlockVector {
        BlockVector::new(c.to_vec(), s.to_vec()).unwrap()
    }

    #[test]
    fn single_sample_moments() {
        let m = estimate_block_moments(&[bv(&[1.0], &[0.0])]).unwrap();
        assert_eq!(m.mean, bv(&[1.0], &[0.0]));
        assert_eq!(m.second_moment.assemble(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.sample_count, 1);
    }

    #[test]
    fn symmetric_pair_moments() {
        let m = estimate_block_moments(&[bv(&[1.0], &[0.0]), bv(&[-1.0], &[0.0])]).unwrap();
        assert_eq!(m.mean, bv(&[0.0], &[0.0]));
        assert_eq!(m.second_moment.assemble(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(estimate_block_moments(&[]), Err(LabError::DegenerateInput(_))));
        let r = estimate_block_moments(&[bv(&[1.0], &[0.0]), bv(&[1.0, 2.0], &[0.0])]);
        assert!(matches!(r, Err(LabError::DimensionMismatch { .. })));
    }

    #[test]
    fn schur_examples() {
        let m = BlockMoments::population(
            bv(&[0.0], &[0.0]),
            BlockMatrix::from_full(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]), 1).unwrap(),
        )
        .unwrap();
        let s = schur_complement(&m).unwrap();
        assert!((s.schur_c[(0, 0)] - 1.0).abs() < 1e-15);

        let diag = BlockMatrix::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]),
            DMatrix::zeros(2, 1),
            DMatrix::from_element(1, 1, 4.0),
        )
        .unwrap();
        assert_eq!(schur_of(&diag).unwrap().schur_c, diag.cc);

        let singular = BlockMatrix::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        match schur_of(&singular) {
            Err(LabError::SingularBlock { block }) => assert_eq!(block, "ss"),
            other => panic!("expected SingularBlock, got {other:?}"),
        }
    }

    #[test]
    fn weighted_norm_examples() {
        assert_eq!(weighted_norm(&[3.0, 4.0], &DMatrix::identity(2, 2)).unwrap(), 5.0);
        assert_eq!(weighted_norm(&[0.0, 0.0], &DMatrix::identity(2, 2)).unwrap(), 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        assert!((weighted_norm(&[1.0, 1.0], &a).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(weighted_norm(&[1.0], &neg), Err(LabError::NotPSD { .. })));
    }

    #[test]
    fn jitter_rescues_tiny_negative_rounding_only() {
        let nearly = DMatrix::from_row_slice(1, 1, &[5e-13]);
        assert!(spd_cholesky(&nearly, "x").is_ok());
        let zero = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(spd_cholesky(&zero, "x").is_err());
    }
}
