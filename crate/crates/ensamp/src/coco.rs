//! Complementary-coordinates analysis: PCA in configuration space, a
//! sampled/unsampled occupancy grid over the projected ensemble, iterative
//! generation of points in the unsampled bin furthest from any sampled
//! one, and back-projection of those points to configuration space as
//! fresh simulation start points.
//!
//! Each analysis call is agglomerative (it consumes every frame produced
//! so far) and adaptive (the PCA is recomputed from scratch each time).

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CocoError {
    #[error("rank deficiency: {requested} projection dimensions requested, achievable rank is {achievable}")]
    RankDeficient { requested: usize, achievable: usize },
    #[error("no samples to analyze")]
    Empty,
    #[error("sample {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
}

/// PCA of a sample cloud: column means, the top eigenvectors of the sample
/// covariance as an orthonormal `dim x projection_dims` basis (descending
/// eigenvalue order, each vector's largest-magnitude component positive),
/// and the full covariance spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

pub fn pca(samples: &[Vec<f64>], projection_dims: usize) -> Result<Pca, CocoError> {
    let m = samples.len();
    if m == 0 {
        return Err(CocoError::Empty);
    }
    let dim = samples[0].len();
    for (index, s) in samples.iter().enumerate() {
        if s.len() != dim {
            return Err(CocoError::DimensionMismatch {
                index,
                got: s.len(),
                expected: dim,
            });
        }
    }
    let achievable = (m - 1).min(dim);
    if projection_dims > achievable {
        return Err(CocoError::RankDeficient {
            requested: projection_dims,
            achievable,
        });
    }

    let mut mean = vec![0.0; dim];
    for s in samples {
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }

    // Sample covariance (1/(m-1) normalization).
    let mut cov: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for s in samples {
        for i in 0..dim {
            let di = s[i] - mean[i];
            for j in i..dim {
                cov[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let raw_eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| raw_eigenvalues[b].partial_cmp(&raw_eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| raw_eigenvalues[i]).collect();

    let mut basis: DMatrix<f64> = DMatrix::zeros(dim, projection_dims);
    for (col, &src) in order.iter().take(projection_dims).enumerate() {
        let v = eig.eigenvectors.column(src);
        let mut best = 0usize;
        for i in 0..dim {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        let sign = if v[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            basis[(i, col)] = sign * v[i];
        }
    }

    Ok(Pca {
        mean,
        basis,
        eigenvalues,
    })
}

/// Project a configuration onto the PCA basis: `basis^T (x - mean)`.
pub fn project(config: &[f64], mean: &[f64], basis: &DMatrix<f64>) -> Vec<f64> {
    (0..basis.ncols())
        .map(|c| {
            config
                .iter()
                .zip(mean)
                .enumerate()
                .map(|(i, (x, mu))| basis[(i, c)] * (x - mu))
                .sum()
        })
        .collect()
}

/// Map a projected point back to configuration space: `mean + basis p`.
/// Projecting the result recovers the point (orthonormal basis).
pub fn back_project(points: &[Vec<f64>], mean: &[f64], basis: &DMatrix<f64>) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            (0..basis.nrows())
                .map(|i| {
                    mean[i]
                        + (0..basis.ncols())
                            .map(|c| basis[(i, c)] * p[c])
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Axis-aligned occupancy grid over the bounding box of a projected
/// sample cloud, expanded by half a bin on each side: with `B` bins per
/// axis the bin width is `range/(B-1)`, bin centers run from the data
/// minimum to the data maximum, and every sample lands in exactly one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub dims: usize,
    pub bins_per_dim: usize,
    /// Center of bin 0 along each axis.
    pub origin: Vec<f64>,
    /// Bin width along each axis (1.0 on axes with zero data range).
    pub width: Vec<f64>,
    sampled: Vec<bool>,
}

impl OccupancyGrid {
    pub fn total_bins(&self) -> usize {
        self.sampled.len()
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled.iter().filter(|&&s| s).count()
    }

    pub fn is_sampled(&self, idx: &[usize]) -> bool {
        self.sampled[self.flat(idx)]
    }

    pub fn mark_sampled(&mut self, idx: &[usize]) {
        let f = self.flat(idx);
        self.sampled[f] = true;
    }

    /// Bin index tuple of a point (clamped to the grid).
    pub fn bin_of(&self, point: &[f64]) -> Vec<usize> {
        point
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let raw = ((x - self.origin[d]) / self.width[d] + 0.5).floor();
                (raw.max(0.0) as usize).min(self.bins_per_dim - 1)
            })
            .collect()
    }

    /// Real-space center of a bin.
    pub fn center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(d, &i)| self.origin[d] + i as f64 * self.width[d])
            .collect()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims);
        idx.iter().fold(0, |acc, &i| acc * self.bins_per_dim + i)
    }

    fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims];
        for d in (0..self.dims).rev() {
            idx[d] = flat % self.bins_per_dim;
            flat /= self.bins_per_dim;
        }
        idx
    }

    /// Sampled bin index tuples in lexicographic order.
    pub fn sampled_indices(&self) -> Vec<Vec<usize>> {
        self.sampled
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(f, _)| self.unflat(f))
            .collect()
    }
}

/// Mark the bin of every projected sample in a fresh grid over the
/// samples' bounding box.
pub fn bin_occupancy(projections: &[Vec<f64>], bins_per_dim: usize) -> OccupancyGrid {
    assert!(bins_per_dim >= 2, "need at least 2 bins per dimension");
    assert!(!projections.is_empty(), "need at least one sample");
    let dims = projections[0].len();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for p in projections {
        for d in 0..dims {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let width: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let range = h - l;
            if range > 0.0 {
                range / (bins_per_dim - 1) as f64
            } else {
                1.0
            }
        })
        .collect();
    let mut grid = OccupancyGrid {
        dims,
        bins_per_dim,
        origin: lo,
        width,
        sampled: vec![false; bins_per_dim.pow(dims as u32)],
    };
    for p in projections {
        let idx = grid.bin_of(p);
        grid.mark_sampled(&idx);
    }
    grid
}

/// Centers of up to `n_new` generated bins plus a flag telling whether the
/// grid ran out of unsampled bins before `n_new` points were produced.
///
/// Each round emits the center of the unsampled bin whose Euclidean
/// distance (between bin centers) to the nearest sampled bin is largest —
/// ties break toward the lexicographically smallest index — and marks it
/// sampled, so coverage grows by exactly one bin per point.
pub fn generate_points(grid: &mut OccupancyGrid, n_new: usize) -> (Vec<Vec<f64>>, bool) {
    assert!(n_new >= 1, "must request at least one point");
    let total = grid.total_bins();

    // Distance from every bin to its nearest sampled bin, maintained
    // incrementally as emitted bins become sampled.
    let mut nearest = vec![f64::INFINITY; total];
    for f in 0..total {
        if grid.sampled[f] {
            nearest[f] = 0.0;
        }
    }
    let centers: Vec<Vec<f64>> = (0..total).map(|f| grid.center(&grid.unflat(f))).collect();
    for f in 0..total {
        if grid.sampled[f] {
            for (u, dist) in nearest.iter_mut().enumerate() {
                if *dist > 0.0 {
                    *dist = dist.min(center_distance(&centers[u], &centers[f]));
                }
            }
        }
    }

    let mut points = Vec::new();
    for _ in 0..n_new {
        let mut best: Option<usize> = None;
        for f in 0..total {
            if grid.sampled[f] {
                continue;
            }
            // Strict > keeps the lexicographically smallest argmax.
            if best.map_or(true, |b| nearest[f] > nearest[b]) {
                best = Some(f);
            }
        }
        let Some(chosen) = best else {
            return (points, true);
        };
        points.push(centers[chosen].clone());
        grid.sampled[chosen] = true;
        nearest[chosen] = 0.0;
        for (u, dist) in nearest.iter_mut().enumerate() {
            if *dist > 0.0 {
                *dist = dist.min(center_distance(&centers[u], &centers[chosen]));
            }
        }
    }
    (points, false)
}

fn center_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One full complementary-coordinates analysis over an accumulated frame
/// store.
#[derive(Debug, Clone)]
pub struct CocoModel {
    pub mean: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub projections: Vec<Vec<f64>>,
    pub grid: OccupancyGrid,
    pub generated: Vec<Vec<f64>>,
    /// True when the grid ran out of unsampled bins before the requested
    /// number of points was generated.
    pub exhausted: bool,
}

/// PCA, bin occupancy, furthest-bin point generation and back-projection
/// in one call. The PCA is recomputed from the full sample set every time.
/// Returns the model and the generated points as configuration-space
/// start points.
pub fn coco_analyze(
    all_frames: &[Vec<f64>],
    projection_dims: usize,
    bins_per_dim: usize,
    n_new: usize,
) -> Result<(CocoModel, Vec<Vec<f64>>), CocoError> {
    let p = pca(all_frames, projection_dims)?;
    let projections: Vec<Vec<f64>> = all_frames
        .iter()
        .map(|f| project(f, &p.mean, &p.basis))
        .collect();
    let mut grid = bin_occupancy(&projections, bins_per_dim);
    let (generated, exhausted) = generate_points(&mut grid, n_new);
    let configs = back_project(&generated, &p.mean, &p.basis);
    let model = CocoModel {
        mean: p.mean,
        basis: p.basis,
        eigenvalues: p.eigenvalues,
        projections,
        grid,
        generated,
        exhausted,
    };
    Ok((model, configs))
}

/// CSV export: spectrum row, basis rows, sampled-bin index rows, generated
/// point rows, each prefixed with a section label.
pub fn coco_to_csv(model: &CocoModel) -> String {
    let mut out = String::new();
    let spec: Vec<String> = model.eigenvalues.iter().map(|v| v.to_string()).collect();
    writeln!(out, "spectrum,{}", spec.join(",")).unwrap();
    for i in 0..model.basis.nrows() {
        let row: Vec<String> = (0..model.basis.ncols())
            .map(|c| model.basis[(i, c)].to_string())
            .collect();
        writeln!(out, "basis,{}", row.join(",")).unwrap();
    }
    for idx in model.grid.sampled_indices() {
        let row: Vec<String> = idx.iter().map(|v| v.to_string()).collect();
        writeln!(out, "sampled,{}", row.join(",")).unwrap();
    }
    for p in &model.generated {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(out, "generated,{}", row.join(",")).unwrap();
    }
    out
}
