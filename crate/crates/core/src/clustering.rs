//! Part discovery from motion maps: spectral clustering of the most
//! important pixels, cluster aggregation, and temporal matching of the
//! resulting detections into part trajectories.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{exp_map, Twist, Vec3};
use crate::rng::{stream_rng, STREAM_KMEANS};
use crate::synth::MotionMap;

pub const DEFAULT_TOP_PIXELS: usize = 256;
pub const DEFAULT_SIGMA_A: f64 = 0.05;
pub const DEFAULT_MAX_PARTS: usize = 9;
pub const ALPHA_SAMPLES: usize = 100;
pub const KMEANS_MAX_ITERS: usize = 50;
pub const KMEANS_TOL: f64 = 1e-9;

/// One selected pixel and its motion features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelFeature {
    /// Row-major pixel index in the source map.
    pub index: usize,
    pub beta: f64,
    pub center: Vec3,
    pub delta: Twist,
}

impl PixelFeature {
    /// Center advanced by the pixel's own delta, `Exp(delta) c`.
    pub fn advanced_center(&self) -> Vec3 {
        exp_map(&self.delta).transform_point(&self.center)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartDetection {
    pub center: Vec3,
    pub delta: Twist,
    pub support: usize,
    pub mean_importance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartTrajectory {
    pub centers: Vec<Vec3>,
    pub deltas: Vec<Twist>,
    /// Timesteps filled in by the static assumption.
    pub missing_count: usize,
}

impl PartTrajectory {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// `Exp(delta) c` of the latest entry.
    pub fn predicted_center(&self) -> Option<Vec3> {
        let c = self.centers.last()?;
        let d = self.deltas.last()?;
        Some(exp_map(d).transform_point(c))
    }

    /// Trace of the sample covariance of the centers.
    pub fn center_variance(&self) -> f64 {
        let n = self.centers.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.centers.iter().sum::<Vec3>() / n as f64;
        self.centers.iter().map(|c| (c - mean).norm_squared()).sum::<f64>() / (n - 1) as f64
    }
}

/// The `n` highest-importance pixels, ties broken by row-major index.
pub fn select_top_pixels(map: &MotionMap, n: usize) -> Result<Vec<PixelFeature>> {
    if n == 0 || n > map.len() {
        return Err(Error::InvalidArgument(format!("cannot select {n} of {} pixels", map.len())));
    }
    let mut order: Vec<usize> = (0..map.len()).collect();
    order.sort_by(|&a, &b| map.beta[b].total_cmp(&map.beta[a]).then(a.cmp(&b)));
    Ok(order[..n]
        .iter()
        .map(|&i| PixelFeature { index: i, beta: map.beta[i], center: map.center[i], delta: map.delta[i] })
        .collect())
}

/// Sum of Gaussian kernels on current and delta-advanced centers.
pub fn build_affinity(pixels: &[PixelFeature], sigma_a: f64) -> Result<DMatrix<f64>> {
    if !(sigma_a.is_finite() && sigma_a > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_A must be positive, got {sigma_a}")));
    }
    let n = pixels.len();
    let advanced: Vec<Vec3> = pixels.iter().map(PixelFeature::advanced_center).collect();
    let denom = -2.0 * sigma_a * sigma_a;
    let mut a = DMatrix::from_element(n, n, 2.0);
    for i in 0..n {
        for j in i + 1..n {
            let d0 = (pixels[i].center - pixels[j].center).norm_squared();
            let d1 = (advanced[i] - advanced[j]).norm_squared();
            let v = (d0 / denom).exp() + (d1 / denom).exp();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// Singular values in descending order with matching left singular vectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<f64>,
}

pub fn spectrum(a: &DMatrix<f64>) -> Result<Spectrum> {
    if a.is_empty() || !a.is_square() {
        return Err(Error::Clustering("affinity must be a non-empty square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Clustering("affinity has non-finite entries".into()));
    }
    if a.iter().all(|x| *x == 0.0) {
        return Err(Error::Clustering("affinity is all zeros".into()));
    }
    if a.iter().zip(a.transpose().iter()).any(|(x, y)| x != y) {
        return Err(Error::Clustering("affinity is not symmetric".into()));
    }
    // For a symmetric matrix the singular values are |lambda| and the
    // eigenvectors serve as left singular vectors.
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()).then(i.cmp(&j)));
    let singular_values = order.iter().map(|&i| eig.eigenvalues[i].abs()).collect();
    let u = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum { singular_values, u })
}

/// The `i`-th threshold fraction: log-uniform midpoints over `[1e-4, 1]`.
pub fn alpha_grid() -> Vec<f64> {
    (0..ALPHA_SAMPLES).map(|i| 10f64.powf(-4.0 + 4.0 * (i as f64 + 0.5) / ALPHA_SAMPLES as f64)).collect()
}

/// Mode of `K(alpha)` over the alpha grid, with ties going to the smaller
/// K. `K(alpha)` is floored at one.
pub fn num_clusters_from_spectrum(singular_values: &[f64], m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let total: f64 = singular_values.iter().take(m).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Clustering("no positive singular values".into()));
    }
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for alpha in alpha_grid() {
        let k = singular_values.iter().filter(|s| **s > alpha * total).count().max(1);
        *hist.entry(k).or_insert(0) += 1;
    }
    let mut best = (0, 0);
    for (k, count) in hist {
        if count > best.1 {
            best = (k, count);
        }
    }
    Ok(best.0)
}

pub fn estimate_num_clusters(a: &DMatrix<f64>, m: usize) -> Result<usize> {
    num_clusters_from_spectrum(&spectrum(a)?.singular_values, m)
}

/// k-means (k-means++ seeding) on the rows of the first `k` columns of `u`.
pub fn cluster_pixels(u: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = u.nrows();
    if k == 0 || k > n || k > u.ncols() {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters from {n} points")));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|j| u[(i, j)]).collect()).collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut rng = stream_rng(seed, STREAM_KMEANS);

    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d: Vec<f64> =
            points.iter().map(|p| centroids.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                acc += di;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
    }

    let nearest = |p: &[f64], cs: &[Vec<f64>]| {
        let mut best = (0, f64::INFINITY);
        for (j, c) in cs.iter().enumerate() {
            let d = dist2(p, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    };
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; k]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(dist2(&next, &centroids[j]).sqrt());
            centroids[j] = next;
        }
        assign = points.iter().map(|p| nearest(p, &centroids)).collect();
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok(assign)
}

/// Importance-weighted cluster means, one detection per non-empty label in
/// ascending label order.
pub fn aggregate_clusters(assignment: &[usize], pixels: &[PixelFeature]) -> Result<Vec<PartDetection>> {
    if assignment.len() != pixels.len() {
        return Err(Error::InvalidArgument("assignment and pixel counts differ".into()));
    }
    let mut groups: BTreeMap<usize, Vec<&PixelFeature>> = BTreeMap::new();
    for (&a, p) in assignment.iter().zip(pixels) {
        groups.entry(a).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let wsum: f64 = members.iter().map(|p| p.beta).sum();
            if wsum.is_nan() || wsum <= 0.0 {
                return Err(Error::Clustering(format!("cluster {label} has zero total importance")));
            }
            let center = members.iter().map(|p| p.center * p.beta).sum::<Vec3>() / wsum;
            let mut delta = [0.0; 6];
            for p in &members {
                for (d, x) in delta.iter_mut().zip(p.delta.to_array()) {
                    *d += p.beta * x;
                }
            }
            Ok(PartDetection {
                center,
                delta: Twist::from_array(delta.map(|d| d / wsum)),
                support: members.len(),
                mean_importance: wsum / members.len() as f64,
            })
        })
        .collect()
}

/// Parameters of per-map detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub top_pixels: usize,
    pub sigma_a: f64,
    pub max_parts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { top_pixels: DEFAULT_TOP_PIXELS, sigma_a: DEFAULT_SIGMA_A, max_parts: DEFAULT_MAX_PARTS }
    }
}

/// Detections in one map together with the estimated cluster count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDetections {
    pub k: usize,
    pub detections: Vec<PartDetection>,
}

pub fn detect_parts(map: &MotionMap, cfg: &ClusterConfig, seed: u64) -> Result<MapDetections> {
    let pixels = select_top_pixels(map, cfg.top_pixels.min(map.len()))?;
    let a = build_affinity(&pixels, cfg.sigma_a)?;
    let spec = spectrum(&a)?;
    let k = num_clusters_from_spectrum(&spec.singular_values, cfg.max_parts)?;
    let assignment = cluster_pixels(&spec.u, k, seed)?;
    Ok(MapDetections { k, detections: aggregate_clusters(&assignment, &pixels)? })
}

/// Appends timestep `t` to every trajectory, each of which must already hold
/// `t` entries. Detections claim the trajectory with the nearest predicted
/// center, greedily in ascending distance; leftovers start new back-filled
/// trajectories and unmatched trajectories repeat their last center with a
/// zero delta.
pub fn match_detections(trajectories: &mut Vec<PartTrajectory>, t: usize, detections: &[PartDetection]) {
    debug_assert!(trajectories.iter().all(|tr| tr.len() == t), "trajectories must hold {t} timesteps");
    let predicted: Vec<Vec3> =
        trajectories.iter().map(|tr| tr.predicted_center().unwrap_or_else(Vec3::zeros)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(detections.len() * trajectories.len());
    for (k, d) in detections.iter().enumerate() {
        for (l, p) in predicted.iter().enumerate() {
            pairs.push(((p - d.center).norm(), k, l));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_of: Vec<Option<usize>> = vec![None; trajectories.len()];
    let mut used = vec![false; detections.len()];
    for (_, k, l) in pairs {
        if !used[k] && det_of[l].is_none() {
            used[k] = true;
            det_of[l] = Some(k);
        }
    }
    for (tr, det) in trajectories.iter_mut().zip(&det_of) {
        match det {
            Some(k) => {
                tr.centers.push(detections[*k].center);
                tr.deltas.push(detections[*k].delta);
            }
            None => {
                let c = *tr.centers.last().expect("trajectories are never empty");
                tr.centers.push(c);
                tr.deltas.push(Twist::zero());
                tr.missing_count += 1;
            }
        }
    }
    for (k, d) in detections.iter().enumerate() {
        if used[k] {
            continue;
        }
        let mut deltas = vec![Twist::zero(); t];
        deltas.push(d.delta);
        trajectories.push(PartTrajectory { centers: vec![d.center; t + 1], deltas, missing_count: t });
    }
}

/// `(base, mover)`: the lowest-variance trajectory, then the one with the
/// fewest missing detections among the rest. Ties go to the lower index.
pub fn select_base_and_mover(trajectories: &[PartTrajectory]) -> Result<(usize, usize)> {
    if trajectories.len() < 2 {
        return Err(Error::Clustering(format!("need two trajectories, found {}", trajectories.len())));
    }
    let mut base = 0;
    for (i, tr) in trajectories.iter().enumerate().skip(1) {
        if tr.center_variance() < trajectories[base].center_variance() {
            base = i;
        }
    }
    let mover = (0..trajectories.len())
        .filter(|&i| i != base)
        .min_by_key(|&i| (trajectories[i].missing_count, i))
        .expect("at least one other trajectory");
    Ok((base, mover))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(index: usize, beta: f64, center: [f64; 3]) -> PixelFeature {
        PixelFeature { index, beta, center: Vec3::from(center), delta: Twist::zero() }
    }

    fn det(center: [f64; 3], delta: Twist) -> PartDetection {
        PartDetection { center: Vec3::from(center), delta, support: 1, mean_importance: 1.0 }
    }

    fn map_with_betas(beta: Vec<f64>) -> MotionMap {
        let n = beta.len();
        MotionMap {
            width: n,
            height: 1,
            beta,
            center: (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
            delta: vec![Twist::zero(); n],
            label: vec![None; n],
            missing: vec![],
        }
    }

    fn block_affinity(sizes: &[usize]) -> DMatrix<f64> {
        let n: usize = sizes.iter().sum();
        let mut label = Vec::new();
        for (b, s) in sizes.iter().enumerate() {
            label.extend(std::iter::repeat_n(b, *s));
        }
        DMatrix::from_fn(n, n, |i, j| if label[i] == label[j] { 2.0 } else { 0.0 })
    }

    #[test]
    fn top_pixels_order_and_ties() {
        let m = map_with_betas(vec![0.5, 0.0, 1.0, 0.5, 0.5]);
        let idx: Vec<usize> = select_top_pixels(&m, 3).unwrap().iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![2, 0, 3]);
        let flat = map_with_betas(vec![0.3; 6]);
        let idx: Vec<usize> = select_top_pixels(&flat, 4).unwrap().iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(select_top_pixels(&flat, 6).unwrap().len(), 6);
        assert!(select_top_pixels(&flat, 0).is_err());
        assert!(select_top_pixels(&flat, 7).is_err());
    }

    #[test]
    fn affinity_values() {
        let px = [pixel(0, 1.0, [0.0, 0.0, 0.0]), pixel(1, 1.0, [1.0, 0.0, 0.0]), pixel(2, 1.0, [0.01, 0.0, 0.0])];
        let a = build_affinity(&px, 0.05).unwrap();
        for i in 0..3 {
            assert_eq!(a[(i, i)], 2.0);
        }
        assert!(a[(0, 1)] < 1e-80);
        let near = 2.0 * (-0.0001f64 / 0.005).exp();
        assert!((a[(0, 2)] - near).abs() < 1e-15);
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn advanced_center_uses_delta() {
        let mut p = pixel(0, 1.0, [0.0, 0.0, 0.0]);
        p.delta = Twist::new(Vec3::new(0.1, 0.0, 0.0), Vec3::zeros());
        let q = pixel(1, 1.0, [0.0, 0.0, 0.0]);
        let a = build_affinity(&[p, q], 0.05).unwrap();
        assert!((a[(0, 1)] - (1.0 + (-0.01f64 / 0.005).exp())).abs() < 1e-15);
    }

    #[test]
    fn cluster_count_on_blocks() {
        assert_eq!(estimate_num_clusters(&block_affinity(&[30, 20]), 9).unwrap(), 2);
        assert_eq!(estimate_num_clusters(&block_affinity(&[25]), 9).unwrap(), 1);
        assert_eq!(estimate_num_clusters(&block_affinity(&[10, 12, 14]), 9).unwrap(), 3);
        assert!(estimate_num_clusters(&DMatrix::zeros(4, 4), 9).is_err());
    }

    #[test]
    fn alpha_grid_is_log_uniform() {
        let g = alpha_grid();
        assert_eq!(g.len(), 100);
        assert!((g[0] - 10f64.powf(-3.98)).abs() < 1e-15);
        assert!(g[99] < 1.0 && g[99] > 0.9);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - 10f64.powf(0.04)).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_ties_prefer_smaller_k() {
        // 50 alphas below 1e-2 and 50 above: sigma_2 / total = 1e-2 splits the grid in half.
        let sv = [1.0 - 1e-2, 1e-2];
        assert_eq!(num_clusters_from_spectrum(&sv, 9).unwrap(), 1);
    }

    #[test]
    fn spectrum_of_blocks() {
        let a = block_affinity(&[7, 5, 9]);
        let spec = spectrum(&a).unwrap();
        for (s, want) in spec.singular_values.iter().zip([18.0, 14.0, 10.0, 0.0]) {
            assert!((s - want).abs() < 1e-9);
        }
        let mut r = DMatrix::zeros(21, 21);
        for k in 0..3 {
            let c = spec.u.column(k);
            r += spec.singular_values[k] * c * c.transpose();
        }
        assert!((r - a).amax() < 1e-9);
    }

    #[test]
    fn kmeans_recovers_blocks() {
        let a = block_affinity(&[7, 5, 9]);
        let spec = spectrum(&a).unwrap();
        let labels = cluster_pixels(&spec.u, 3, 11).unwrap();
        let blocks = [0..7, 7..12, 12..21];
        for b in &blocks {
            assert!(labels[b.clone()].iter().all(|l| *l == labels[b.start]));
        }
        assert_ne!(labels[0], labels[7]);
        assert_ne!(labels[0], labels[12]);
        assert_ne!(labels[7], labels[12]);
        assert_eq!(labels, cluster_pixels(&spec.u, 3, 11).unwrap());
        assert_eq!(cluster_pixels(&spec.u, 1, 3).unwrap(), vec![0; 21]);
        assert!(cluster_pixels(&spec.u, 22, 3).is_err());
    }

    #[test]
    fn weighted_aggregation() {
        let px = [pixel(0, 1.0, [0.0, 0.0, 0.0]), pixel(1, 3.0, [4.0, 0.0, 0.0])];
        let d = aggregate_clusters(&[0, 0], &px).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].center, Vec3::new(3.0, 0.0, 0.0));
        assert_eq!(d[0].support, 2);
        assert_eq!(d[0].mean_importance, 2.0);
        let single = aggregate_clusters(&[4], &px[1..]).unwrap();
        assert_eq!(single[0].center, px[1].center);
        assert!(aggregate_clusters(&[0], &[pixel(0, 0.0, [1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn static_part_single_trajectory() {
        let mut tr = Vec::new();
        for t in 0..4 {
            match_detections(&mut tr, t, &[det([1.0, 2.0, 3.0], Twist::zero())]);
        }
        assert_eq!(tr.len(), 1);
        assert_eq!(tr[0].len(), 4);
        assert!(tr[0].deltas.iter().all(|d| *d == Twist::zero()));
        assert_eq!(tr[0].missing_count, 0);
    }

    #[test]
    fn dropout_is_filled_statically() {
        let step = Twist::new(Vec3::new(0.1, 0.0, 0.0), Vec3::zeros());
        let mut tr = Vec::new();
        match_detections(&mut tr, 0, &[det([0.0, 0.0, 0.0], Twist::zero()), det([1.0, 0.0, 0.0], step)]);
        match_detections(&mut tr, 1, &[det([0.0, 0.0, 0.0], Twist::zero())]);
        match_detections(&mut tr, 2, &[det([0.0, 0.0, 0.0], Twist::zero()), det([1.1, 0.0, 0.0], step)]);
        assert_eq!(tr.len(), 2);
        assert!(tr.iter().all(|t| t.len() == 3));
        assert_eq!(tr[1].missing_count, 1);
        assert_eq!(tr[1].centers[1], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(tr[1].deltas[1], Twist::zero());
        assert_eq!(tr[1].centers[2], Vec3::new(1.1, 0.0, 0.0));
    }

    #[test]
    fn late_detection_is_backfilled() {
        let mut tr = Vec::new();
        match_detections(&mut tr, 0, &[det([0.0, 0.0, 0.0], Twist::zero())]);
        match_detections(&mut tr, 1, &[det([0.0, 0.0, 0.0], Twist::zero())]);
        let d = Twist::new(Vec3::new(0.0, 0.2, 0.0), Vec3::zeros());
        match_detections(&mut tr, 2, &[det([0.0, 0.0, 0.0], Twist::zero()), det([2.0, 0.0, 0.0], d)]);
        assert_eq!(tr.len(), 2);
        assert_eq!(tr[1].centers, vec![Vec3::new(2.0, 0.0, 0.0); 3]);
        assert_eq!(tr[1].deltas, vec![Twist::zero(), Twist::zero(), d]);
        assert_eq!(tr[1].missing_count, 2);
    }

    #[test]
    fn empty_first_map_still_counts() {
        let mut tr = Vec::new();
        match_detections(&mut tr, 0, &[]);
        match_detections(&mut tr, 1, &[det([1.0, 0.0, 0.0], Twist::zero())]);
        assert_eq!(tr.len(), 1);
        assert_eq!(tr[0].len(), 2);
        assert_eq!(tr[0].missing_count, 1);
    }

    #[test]
    fn predicted_centers_keep_identities_through_crossing() {
        // Parts swap sides between frames; raw proximity would swap labels.
        let right = Twist::new(Vec3::new(0.3, 0.0, 0.0), Vec3::zeros());
        let left = Twist::new(Vec3::new(-0.3, 0.0, 0.0), Vec3::zeros());
        let mut tr = Vec::new();
        match_detections(&mut tr, 0, &[det([0.0, 0.0, 0.0], right), det([0.2, 0.0, 0.0], left)]);
        match_detections(&mut tr, 1, &[det([-0.1, 0.0, 0.0], left), det([0.3, 0.0, 0.0], right)]);
        assert_eq!(tr[0].centers[1], Vec3::new(0.3, 0.0, 0.0));
        assert_eq!(tr[1].centers[1], Vec3::new(-0.1, 0.0, 0.0));
    }

    fn traj(centers: &[[f64; 3]], missing: usize) -> PartTrajectory {
        PartTrajectory {
            centers: centers.iter().map(|c| Vec3::from(*c)).collect(),
            deltas: vec![Twist::zero(); centers.len()],
            missing_count: missing,
        }
    }

    #[test]
    fn base_and_mover_selection() {
        let stat = traj(&[[0.0; 3], [0.0; 3], [0.0; 3]], 0);
        let mv = traj(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0);
        assert_eq!(select_base_and_mover(&[mv.clone(), stat.clone()]).unwrap(), (1, 0));
        let wobble = traj(&[[0.0; 3], [0.01, 0.0, 0.0], [0.0; 3]], 0);
        assert_eq!(select_base_and_mover(&[wobble, stat.clone()]).unwrap(), (1, 0));
        let flaky = traj(&[[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 2);
        assert_eq!(select_base_and_mover(&[stat.clone(), flaky, mv]).unwrap(), (0, 2));
        assert!(select_base_and_mover(&[stat]).is_err());
    }
}
