//! Cluster partitions and the clustered Archimax model specification.

use crate::error::{Error, Result, ValidationCode};
use crate::generator::ArchimedeanGenerator;
use crate::stdf::Stdf;

/// Partition of {0, …, d−1} into ordered blocks of size at least two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    blocks: Vec<Vec<usize>>,
    dim: usize,
    // variable -> (cluster, position in block)
    owner: Vec<(usize, usize)>,
}

impl ClusterPartition {
    /// Zero-based blocks. Validation failures carry a JSON pointer into the
    /// `blocks` array.
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::with_pointer(blocks, "/clusters", "/indices", 0)
    }

    /// One-based blocks, as written in configuration files.
    pub fn from_one_based(blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_one_based_at(blocks, "/clusters", "/indices")
    }

    /// One-based blocks located at `{root}/{k}{leaf}/{j}` in a document.
    pub fn from_one_based_at(blocks: Vec<Vec<usize>>, root: &str, leaf: &str) -> Result<Self> {
        for (k, b) in blocks.iter().enumerate() {
            for (j, &i) in b.iter().enumerate() {
                if i == 0 {
                    return Err(Error::validation(ValidationCode::IndexOutOfRange, format!("{root}/{k}{leaf}/{j}"), "variable indices are 1-based"));
                }
            }
        }
        Self::with_pointer(blocks.into_iter().map(|b| b.into_iter().map(|i| i - 1).collect()).collect(), root, leaf, 1)
    }

    /// Blocks with 1-based indices.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.iter().map(|i| i + 1).collect()).collect()
    }

    fn with_pointer(blocks: Vec<Vec<usize>>, root: &str, leaf: &str, base: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::validation(ValidationCode::Malformed, root, "at least one cluster is required"));
        }
        let dim: usize = blocks.iter().map(Vec::len).sum();
        let mut owner = vec![None; dim];
        for (k, b) in blocks.iter().enumerate() {
            if b.len() < 2 {
                return Err(Error::validation(
                    ValidationCode::SingletonCluster,
                    format!("{root}/{k}{leaf}"),
                    format!("cluster {} has {} variable(s); at least 2 are required", k + base, b.len()),
                ));
            }
            for (j, &i) in b.iter().enumerate() {
                if i >= dim {
                    return Err(Error::validation(
                        ValidationCode::IndexOutOfRange,
                        format!("{root}/{k}{leaf}/{j}"),
                        format!("index {} exceeds the dimension {dim}", i + base),
                    ));
                }
                if let Some((k0, _)) = owner[i] {
                    return Err(Error::validation(
                        ValidationCode::OverlappingBlocks,
                        format!("{root}/{k}{leaf}/{j}"),
                        format!("variable {} already belongs to cluster {}", i + base, k0 + base),
                    ));
                }
                owner[i] = Some((k, j));
            }
        }
        // With dim = Σ|block| and no overlaps, every index is covered.
        let owner = owner.into_iter().map(|o| o.expect("cover")).collect();
        Ok(Self { blocks, dim, owner })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.blocks[k]
    }

    pub fn n_clusters(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cluster index and in-block position of variable `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        self.owner[i]
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.owner[i].0
    }

    /// Blocks with indices sorted increasingly (the ordering used for
    /// pair enumeration).
    pub fn sorted_blocks(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut b = b.clone();
                b.sort_unstable();
                b
            })
            .collect()
    }
}

/// Copula Q̄ of the radial vector used in simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialCopulaSpec {
    Independence,
    /// Correlation matrix, row-major K×K.
    GaussianSurvival(Vec<Vec<f64>>),
    GumbelSurvival(f64),
}

impl RadialCopulaSpec {
    /// Exchangeable Gaussian correlation.
    pub fn gaussian_exchangeable(k: usize, rho: f64) -> Self {
        let corr = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { rho }).collect()).collect();
        RadialCopulaSpec::GaussianSurvival(corr)
    }

    pub(crate) fn validate(&self, k: usize, pointer: &str) -> Result<()> {
        match self {
            RadialCopulaSpec::Independence => Ok(()),
            RadialCopulaSpec::GumbelSurvival(t) => {
                if *t >= 1.0 && t.is_finite() {
                    Ok(())
                } else {
                    Err(Error::validation(ValidationCode::OutOfDomain, format!("{pointer}/vartheta"), format!("Gumbel parameter must be >= 1, got {t}")))
                }
            }
            RadialCopulaSpec::GaussianSurvival(c) => {
                if c.len() != k || c.iter().any(|r| r.len() != k) {
                    return Err(Error::validation(
                        ValidationCode::DimensionMismatch,
                        format!("{pointer}/corr"),
                        format!("correlation matrix must be {k}x{k}"),
                    ));
                }
                for i in 0..k {
                    if c[i][i] != 1.0 {
                        return Err(Error::validation(ValidationCode::OutOfDomain, format!("{pointer}/corr/{i}/{i}"), "diagonal entries must equal 1"));
                    }
                    for j in 0..k {
                        if !c[i][j].is_finite() || (c[i][j] - c[j][i]).abs() > 1e-12 || c[i][j].abs() > 1.0 {
                            return Err(Error::validation(
                                ValidationCode::OutOfDomain,
                                format!("{pointer}/corr/{i}/{j}"),
                                "correlation matrix must be symmetric with entries in [-1, 1]",
                            ));
                        }
                    }
                }
                if cholesky(c).is_none() {
                    return Err(Error::validation(ValidationCode::NotPositiveDefinite, format!("{pointer}/corr"), "correlation matrix is not positive definite"));
                }
                Ok(())
            }
        }
    }

    /// Restriction to the listed radial coordinates.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        match self {
            RadialCopulaSpec::GaussianSurvival(c) => RadialCopulaSpec::GaussianSurvival(keep.iter().map(|&i| keep.iter().map(|&j| c[i][j]).collect()).collect()),
            other => other.clone(),
        }
    }
}

/// Lower Cholesky factor, `None` unless strictly positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 1e-14) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Partition, per-cluster generator and stdf, and radial copula.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredModelSpec {
    pub partition: ClusterPartition,
    pub generators: Vec<ArchimedeanGenerator>,
    pub stdfs: Vec<Stdf>,
    pub radial: RadialCopulaSpec,
}

impl ClusteredModelSpec {
    pub fn new(partition: ClusterPartition, generators: Vec<ArchimedeanGenerator>, stdfs: Vec<Stdf>, radial: RadialCopulaSpec) -> Result<Self> {
        let k = partition.n_clusters();
        if generators.len() != k {
            return Err(Error::validation(ValidationCode::DimensionMismatch, "/clusters", format!("{} generators for {k} clusters", generators.len())));
        }
        if stdfs.len() != k {
            return Err(Error::validation(ValidationCode::DimensionMismatch, "/clusters", format!("{} stdfs for {k} clusters", stdfs.len())));
        }
        for (j, (s, b)) in stdfs.iter().zip(partition.blocks()).enumerate() {
            if s.dim() != b.len() {
                return Err(Error::validation(
                    ValidationCode::DimensionMismatch,
                    format!("/clusters/{j}/stdf/dim"),
                    format!("stdf dimension {} does not match cluster size {}", s.dim(), b.len()),
                ));
            }
        }
        radial.validate(k, "/radial")?;
        Ok(Self { partition, generators, stdfs, radial })
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn n_clusters(&self) -> usize {
        self.partition.n_clusters()
    }

    /// Model made of the listed clusters only, variables re-indexed
    /// consecutively in the order of `clusters` and, within a cluster, in
    /// increasing original index. Returns the new model and the original
    /// index of each new variable.
    pub fn restrict(&self, clusters: &[usize]) -> Result<(Self, Vec<usize>)> {
        let mut blocks = Vec::new();
        let mut origin = Vec::new();
        for &k in clusters {
            if k >= self.n_clusters() {
                return Err(Error::domain(format!("cluster {k} does not exist")));
            }
            let mut b = self.partition.block(k).to_vec();
            b.sort_unstable();
            let start = origin.len();
            origin.extend_from_slice(&b);
            blocks.push((start..start + b.len()).collect());
        }
        let spec = Self::new(
            ClusterPartition::new(blocks)?,
            clusters.iter().map(|&k| self.generators[k]).collect(),
            clusters.iter().map(|&k| self.stdfs[k].clone()).collect(),
            self.radial.restrict(clusters),
        )?;
        Ok((spec, origin))
    }
}

/// Reference configurations: three trivariate clusters
/// {1,2,3} Clayton(1.5)/logistic(1.25), {4,5,6} Joe(1.5)/logistic(2),
/// {7,8,9} Joe(2)/logistic(1.5).
pub mod presets {
    use super::*;

    fn clusters() -> (ClusterPartition, Vec<ArchimedeanGenerator>, Vec<Stdf>) {
        let p = ClusterPartition::new(vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]).expect("valid partition");
        let g = vec![
            ArchimedeanGenerator::clayton(1.5).expect("valid"),
            ArchimedeanGenerator::joe(1.5).expect("valid"),
            ArchimedeanGenerator::joe(2.0).expect("valid"),
        ];
        let s = vec![
            Stdf::logistic(1.25, 3).expect("valid"),
            Stdf::logistic(2.0, 3).expect("valid"),
            Stdf::logistic(1.5, 3).expect("valid"),
        ];
        (p, g, s)
    }

    /// Exchangeable Gaussian radial copula with correlation 0.5.
    pub fn model_a() -> ClusteredModelSpec {
        let (p, g, s) = clusters();
        ClusteredModelSpec::new(p, g, s, RadialCopulaSpec::gaussian_exchangeable(3, 0.5)).expect("valid model")
    }

    /// Gumbel radial copula with parameter 4.
    pub fn model_b() -> ClusteredModelSpec {
        let (p, g, s) = clusters();
        ClusteredModelSpec::new(p, g, s, RadialCopulaSpec::GumbelSurvival(4.0)).expect("valid model")
    }

    /// Same clusters with independent radial variables.
    pub fn model_independent() -> ClusteredModelSpec {
        let (p, g, s) = clusters();
        ClusteredModelSpec::new(p, g, s, RadialCopulaSpec::Independence).expect("valid model")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(e: Error) -> (ValidationCode, String) {
        match e {
            Error::Validation { code, pointer, .. } => (code, pointer),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partition_validation_codes() {
        assert_eq!(code(ClusterPartition::from_one_based(vec![vec![1, 2], vec![3]]).unwrap_err()), (ValidationCode::SingletonCluster, "/clusters/1/indices".into()));
        assert_eq!(code(ClusterPartition::from_one_based(vec![vec![1, 2], vec![2, 3]]).unwrap_err()).0, ValidationCode::OverlappingBlocks);
        assert_eq!(code(ClusterPartition::from_one_based(vec![vec![1, 2], vec![3, 7]]).unwrap_err()), (ValidationCode::IndexOutOfRange, "/clusters/1/indices/1".into()));
        let p = ClusterPartition::from_one_based(vec![vec![3, 1], vec![2, 4]]).unwrap();
        assert_eq!(p.locate(2), (0, 0));
        assert_eq!(p.locate(1), (1, 0));
        assert_eq!(p.sorted_blocks(), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn radial_spec_validation() {
        let bad = RadialCopulaSpec::gaussian_exchangeable(3, -0.6);
        assert_eq!(code(bad.validate(3, "/radial").unwrap_err()).0, ValidationCode::NotPositiveDefinite);
        assert!(RadialCopulaSpec::GumbelSurvival(0.5).validate(2, "/radial").is_err());
        assert!(RadialCopulaSpec::gaussian_exchangeable(2, 0.5).validate(3, "/radial").is_err());
    }

    #[test]
    fn restriction_reindexes() {
        let m = presets::model_a();
        let (sub, origin) = m.restrict(&[2, 0]).unwrap();
        assert_eq!(origin, vec![6, 7, 8, 0, 1, 2]);
        assert_eq!(sub.generators[0], m.generators[2]);
        assert_eq!(sub.dim(), 6);
    }
}
