//! Locally scaled diffusion maps and diffusion-map-directed replica
//! selection.
//!
//! The analysis pipeline is: pairwise Euclidean distances between replica
//! configurations, per-replica local scales from the k-th nearest
//! neighbor, a locally scaled Gaussian kernel
//! `K_ij = exp(-d_ij^2 / (2 e_i e_j))`, density normalization
//! `K~ = D^-1 K D^-1` with `D = diag(row sums)`, and the Markov matrix
//! `P = row-normalized K~`. The spectrum comes from the symmetric
//! conjugate `S = D~^(1/2) P D~^(-1/2)`, whose eigenvalues are real and
//! whose eigenvectors map back to the right eigenvectors of `P`. Diffusion
//! coordinates are the eigenvalue-scaled non-trivial right eigenvectors;
//! distances between them drive the selection step: crowded replicas are
//! merged (weight transferred to the survivor), isolated ones duplicated
//! (weight split), so the ensemble keeps covering configuration space
//! without destroying its statistical weights.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::core::{Ensemble, Replica, ReplicaId};

/// Non-trivial diffusion coordinates kept by default.
pub const DEFAULT_RETAINED: usize = 2;

/// Relative floor applied to local scales so duplicate points cannot
/// produce a zero bandwidth.
const SCALE_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LsdmapError {
    #[error("neighbor count k={k} out of range: need 1 <= k < {n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("non-finite kernel entry between replicas {i} and {j}")]
    NonFiniteKernel { i: usize, j: usize },
    #[error("selection target must be at least 2, got {0}")]
    TargetTooSmall(usize),
    #[error("local scales must be strictly positive")]
    NonPositiveScale,
}

/// Spectral summary of one ensemble: local scales, the Markov spectrum in
/// descending order, and the eigenvalue-scaled diffusion coordinates
/// (one row per replica, trivial eigenvector excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMap {
    pub local_scales: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub dmap_coords: Vec<Vec<f64>>,
}

impl DiffusionMap {
    pub fn n(&self) -> usize {
        self.dmap_coords.len()
    }

    /// Euclidean distance between two replicas in diffusion coordinates.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dmap_coords[i]
            .iter()
            .zip(&self.dmap_coords[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Median over all distinct-pair diffusion distances; the unit in which
    /// merge and spawn thresholds are expressed.
    pub fn median_pairwise_distance(&self) -> f64 {
        let n = self.n();
        let mut dists = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                dists.push(self.distance(i, j));
            }
        }
        median(&mut dists)
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Symmetric matrix of Euclidean distances between replica configurations.
pub fn pairwise_distances(ensemble: &Ensemble) -> DMatrix<f64> {
    let n = ensemble.len();
    let mut d: DMatrix<f64> = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = euclidean(
                &ensemble.replicas()[i].config,
                &ensemble.replicas()[j].config,
            );
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Local scale of replica i: its distance to the k-th nearest other
/// replica, floored at `1e-12 * max distance` so duplicates never yield a
/// zero scale. When every distance is zero the scales fall back to one,
/// which makes the kernel uniform.
pub fn local_scales(distances: &DMatrix<f64>, k: usize) -> Result<Vec<f64>, LsdmapError> {
    let n = distances.nrows();
    if k < 1 || k >= n {
        return Err(LsdmapError::KOutOfRange { k, n });
    }
    let max_d = distances.iter().cloned().fold(0.0, f64::max);
    if max_d == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let floor = SCALE_FLOOR_REL * max_d;
    let scales = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| distances[(i, j)]).collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row[k - 1].max(floor)
        })
        .collect();
    Ok(scales)
}

/// Diffusion map with the default number of retained coordinates.
pub fn diffusion_map(
    distances: &DMatrix<f64>,
    local_scales: &[f64],
) -> Result<DiffusionMap, LsdmapError> {
    diffusion_map_retained(distances, local_scales, DEFAULT_RETAINED)
}

/// Diffusion map retaining `retained` non-trivial coordinates (clamped to
/// n-1). Eigenvectors have unit norm with the sign fixed so their
/// largest-magnitude component is positive; coordinates are the
/// eigenvectors scaled by their eigenvalues.
pub fn diffusion_map_retained(
    distances: &DMatrix<f64>,
    local_scales: &[f64],
    retained: usize,
) -> Result<DiffusionMap, LsdmapError> {
    let n = distances.nrows();
    assert_eq!(local_scales.len(), n, "one scale per replica");
    if local_scales.iter().any(|&e| !(e > 0.0)) {
        return Err(LsdmapError::NonPositiveScale);
    }

    let mut kernel: DMatrix<f64> = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = distances[(i, j)];
            let v = (-d * d / (2.0 * local_scales[i] * local_scales[j])).exp();
            if !v.is_finite() {
                return Err(LsdmapError::NonFiniteKernel { i, j });
            }
            kernel[(i, j)] = v;
        }
    }

    // Density normalization (alpha = 1): K~ = D^-1 K D^-1.
    let density: DVector<f64> = DVector::from_iterator(n, kernel.row_iter().map(|r| r.sum()));
    let mut k_tilde = kernel;
    for i in 0..n {
        for j in 0..n {
            k_tilde[(i, j)] /= density[i] * density[j];
        }
    }

    // Markov matrix P = D~^-1 K~; spectrum via its symmetric conjugate
    // S = D~^-1/2 K~ D~^-1/2.
    let d_tilde: DVector<f64> = DVector::from_iterator(n, k_tilde.row_iter().map(|r| r.sum()));
    let d_inv_sqrt: Vec<f64> = d_tilde.iter().map(|&v| 1.0 / v.sqrt()).collect();
    let mut sym = k_tilde;
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] *= d_inv_sqrt[i] * d_inv_sqrt[j];
        }
    }
    // Force exact symmetry before the eigensolve.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = avg;
            sym[(j, i)] = avg;
        }
    }

    let eig = SymmetricEigen::new(sym);
    let raw_eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw_eigenvalues[b].partial_cmp(&raw_eigenvalues[a]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| raw_eigenvalues[i]).collect();

    // Right eigenvectors of P: v = D~^-1/2 u, unit-normalized, sign fixed.
    let retained = retained.min(n.saturating_sub(1));
    let mut dmap_coords = vec![vec![0.0; retained]; n];
    for (col, &src) in order.iter().skip(1).take(retained).enumerate() {
        let u = eig.eigenvectors.column(src);
        let mut v: Vec<f64> = (0..n).map(|i| d_inv_sqrt[i] * u[i]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = dominant_sign(&v);
        let lambda = eigenvalues[col + 1];
        for (i, value) in v.iter_mut().enumerate() {
            *value *= sign / norm;
            dmap_coords[i][col] = lambda * *value;
        }
    }

    Ok(DiffusionMap {
        local_scales: local_scales.to_vec(),
        eigenvalues,
        dmap_coords,
    })
}

/// +1 or -1 so that the largest-magnitude component ends up positive.
fn dominant_sign(v: &[f64]) -> f64 {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Selection thresholds, in units of the median pairwise diffusion
/// distance of the analyzed ensemble.
#[derive(Debug, Clone, Copy)]
pub struct SelectionParams {
    pub n_target: usize,
    pub merge_threshold: f64,
    pub spawn_threshold: f64,
}

/// What happened during one selection, in order. Every event either moves
/// weight to a named survivor or splits it with a named copy, so the
/// transcript replays to the output ensemble exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionEvent {
    /// Crowded pair under the merge threshold: `removed` deleted, its
    /// weight added to `into` (the nearest survivor).
    Merged {
        removed: ReplicaId,
        into: ReplicaId,
        distance: f64,
    },
    /// Count still above target after threshold merging: closest pair
    /// merged regardless of threshold.
    ForcedMerge {
        removed: ReplicaId,
        into: ReplicaId,
        distance: f64,
    },
    /// Isolated replica duplicated, weight split equally.
    Spawned {
        source: ReplicaId,
        new_id: ReplicaId,
        isolation: f64,
    },
    /// Count still short of target with no isolated candidates left:
    /// highest-weight replica duplicated, weight split equally.
    TopUp { source: ReplicaId, new_id: ReplicaId },
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub ensemble: Ensemble,
    pub events: Vec<SelectionEvent>,
    /// Median pairwise diffusion distance used to scale the thresholds.
    pub distance_unit: f64,
}

struct Walker {
    replica: Replica,
    coords: Vec<f64>,
}

/// Delete-then-duplicate replica selection in diffusion coordinates.
///
/// Deletion: while any pair sits closer than the merge threshold, the
/// closest pair merges — the higher id is deleted and its weight moves to
/// the survivor (which at that moment is its nearest survivor). If the
/// count still exceeds `n_target`, closest pairs keep merging without the
/// threshold. Duplication: the most isolated replica whose nearest
/// neighbor is farther than the spawn threshold is duplicated with its
/// weight split, until the count reaches `n_target` or candidates run out;
/// any remaining shortfall is covered by duplicating the highest-weight
/// replicas. Ties everywhere break toward the lower replica id. Total
/// weight is conserved and the output size is exactly `n_target`.
pub fn select_replicas(
    ensemble: &Ensemble,
    dmap: &DiffusionMap,
    params: &SelectionParams,
) -> Result<Selection, LsdmapError> {
    if params.n_target < 2 {
        return Err(LsdmapError::TargetTooSmall(params.n_target));
    }
    assert_eq!(ensemble.len(), dmap.n(), "map and ensemble must match");

    let unit = dmap.median_pairwise_distance();
    let merge_below = params.merge_threshold * unit;
    let spawn_above = params.spawn_threshold * unit;

    let mut walkers: Vec<Walker> = ensemble
        .replicas()
        .iter()
        .enumerate()
        .map(|(i, r)| Walker {
            replica: r.clone(),
            coords: dmap.dmap_coords[i].clone(),
        })
        .collect();
    let mut next_id = ensemble.max_id() + 1;
    let mut events = Vec::new();

    // Threshold-driven merging, closest pair first.
    while walkers.len() > 1 {
        let (i, j, d) = closest_pair(&walkers);
        if !should_merge(d, merge_below) {
            break;
        }
        merge_pair(&mut walkers, i, j, d, &mut events, false);
    }

    // Forced reduction when the target is below the survivor count.
    while walkers.len() > params.n_target {
        let (i, j, d) = closest_pair(&walkers);
        merge_pair(&mut walkers, i, j, d, &mut events, true);
    }

    // Isolation-driven duplication.
    while walkers.len() < params.n_target && walkers.len() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..walkers.len() {
            let iso = isolation(&walkers, i);
            if iso <= spawn_above {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, biso)) => {
                    iso > biso || (iso == biso && walkers[i].replica.id < walkers[bi].replica.id)
                }
            };
            if better {
                best = Some((i, iso));
            }
        }
        let Some((idx, iso)) = best else { break };
        let new_id = duplicate(&mut walkers, idx, next_id);
        events.push(SelectionEvent::Spawned {
            source: walkers[idx].replica.id,
            new_id,
            isolation: iso,
        });
        next_id += 1;
    }

    // Weight-driven top-up.
    while walkers.len() < params.n_target {
        let idx = walkers
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.replica
                    .weight
                    .partial_cmp(&b.replica.weight)
                    .unwrap()
                    .then(b.replica.id.cmp(&a.replica.id))
            })
            .map(|(i, _)| i)
            .expect("non-empty");
        let new_id = duplicate(&mut walkers, idx, next_id);
        events.push(SelectionEvent::TopUp {
            source: walkers[idx].replica.id,
            new_id,
        });
        next_id += 1;
    }

    let ensemble = Ensemble::new(walkers.into_iter().map(|w| w.replica).collect())
        .expect("selection preserves ensemble validity");
    Ok(Selection {
        ensemble,
        events,
        distance_unit: unit,
    })
}

/// Survivor count after threshold merging plus the number of
/// spawn-eligible isolated replicas, clamped to `[min_target, max_target]`
/// (and never below 2): the per-iteration instance count the selection
/// geometry asks for. The floor keeps the walker population from bleeding
/// away in merge-heavy rounds; counts grow when isolated frontiers appear
/// and settle once exploration saturates.
pub fn dynamic_target(
    dmap: &DiffusionMap,
    ensemble: &Ensemble,
    merge_threshold: f64,
    spawn_threshold: f64,
    min_target: usize,
    max_target: usize,
) -> usize {
    let unit = dmap.median_pairwise_distance();
    let merge_below = merge_threshold * unit;
    let spawn_above = spawn_threshold * unit;

    let mut walkers: Vec<Walker> = ensemble
        .replicas()
        .iter()
        .enumerate()
        .map(|(i, r)| Walker {
            replica: r.clone(),
            coords: dmap.dmap_coords[i].clone(),
        })
        .collect();
    let mut scratch = Vec::new();
    while walkers.len() > 1 {
        let (i, j, d) = closest_pair(&walkers);
        if !should_merge(d, merge_below) {
            break;
        }
        merge_pair(&mut walkers, i, j, d, &mut scratch, false);
    }
    let candidates = (0..walkers.len())
        .filter(|&i| walkers.len() > 1 && isolation(&walkers, i) > spawn_above)
        .count();
    let lo = min_target.max(2);
    (walkers.len() + candidates).clamp(lo, max_target.max(lo))
}

/// Coincident replicas always merge; beyond that the threshold decides.
/// The zero-distance case matters when the whole ensemble has collapsed,
/// where the median distance (and hence the absolute threshold) is zero.
fn should_merge(distance: f64, merge_below: f64) -> bool {
    distance == 0.0 || distance < merge_below
}

/// Closest pair by coordinate distance; ties break on (lower id, lower id).
fn closest_pair(walkers: &[Walker]) -> (usize, usize, f64) {
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..walkers.len() {
        for j in (i + 1)..walkers.len() {
            let d = euclidean(&walkers[i].coords, &walkers[j].coords);
            let (lo_i, hi_i) = ordered_ids(&walkers[i], &walkers[j]);
            let (cur_lo, cur_hi) = if best.2.is_finite() {
                ordered_ids(&walkers[best.0], &walkers[best.1])
            } else {
                (ReplicaId::MAX, ReplicaId::MAX)
            };
            if d < best.2 || (d == best.2 && (lo_i, hi_i) < (cur_lo, cur_hi)) {
                best = (i, j, d);
            }
        }
    }
    best
}

fn ordered_ids(a: &Walker, b: &Walker) -> (ReplicaId, ReplicaId) {
    let (x, y) = (a.replica.id, b.replica.id);
    (x.min(y), x.max(y))
}

/// Remove the higher-id member of the pair and move its weight onto the
/// survivor.
fn merge_pair(
    walkers: &mut Vec<Walker>,
    i: usize,
    j: usize,
    distance: f64,
    events: &mut Vec<SelectionEvent>,
    forced: bool,
) {
    let (keep, drop) = if walkers[i].replica.id < walkers[j].replica.id {
        (i, j)
    } else {
        (j, i)
    };
    let removed = walkers[drop].replica.id;
    let into = walkers[keep].replica.id;
    let w = walkers[drop].replica.weight;
    walkers[keep].replica.weight += w;
    walkers.remove(drop);
    events.push(if forced {
        SelectionEvent::ForcedMerge {
            removed,
            into,
            distance,
        }
    } else {
        SelectionEvent::Merged {
            removed,
            into,
            distance,
        }
    });
}

fn isolation(walkers: &[Walker], i: usize) -> f64 {
    walkers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, w)| euclidean(&walkers[i].coords, &w.coords))
        .fold(f64::INFINITY, f64::min)
}

fn duplicate(walkers: &mut Vec<Walker>, idx: usize, new_id: ReplicaId) -> ReplicaId {
    let half = walkers[idx].replica.weight / 2.0;
    walkers[idx].replica.weight = half;
    let copy = Walker {
        replica: Replica {
            id: new_id,
            config: walkers[idx].replica.config.clone(),
            weight: half,
            parent: Some(walkers[idx].replica.id),
        },
        coords: walkers[idx].coords.clone(),
    };
    walkers.push(copy);
    new_id
}

/// CSV export: first row the eigenvalues, then one row per replica with
/// its local scale followed by its diffusion coordinates.
pub fn dmap_to_csv(dmap: &DiffusionMap) -> String {
    let mut out = String::new();
    let evs: Vec<String> = dmap.eigenvalues.iter().map(|v| v.to_string()).collect();
    writeln!(out, "{}", evs.join(",")).unwrap();
    for (scale, coords) in dmap.local_scales.iter().zip(&dmap.dmap_coords) {
        let mut row = vec![scale.to_string()];
        row.extend(coords.iter().map(|v| v.to_string()));
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}
