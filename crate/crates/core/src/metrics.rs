//! Evaluation metrics, metric traces and the k-means / V-measure pipeline.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, orthonormalize, Mat};
use crate::rng;

/// Default angular tolerance for the eigenvector streak.
pub const STREAK_THRESHOLD: f64 = std::f64::consts::PI / 8.0;

/// Eigenvalue gap below which per-vector comparisons are ill-posed.
pub const DEGENERATE_GAP: f64 = 1e-6;

/// Sign-invariant angle between two nonzero vectors, in `[0, π/2]`.
pub fn angular_error(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("angular error of vectors with different lengths"));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("angular error of a zero vector".into()));
    }
    let c = (dot(u, v).abs() / (nu * nv)).clamp(0.0, 1.0);
    Ok(c.acos())
}

/// Number of leading columns of `estimate` within `threshold` radians of the
/// matching columns of `truth`.
pub fn longest_streak(estimate: &Mat, truth: &Mat, threshold: f64) -> Result<usize> {
    if estimate.shape() != truth.shape() {
        return Err(Error::shape(format!(
            "streak compares {:?} against {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let mut streak = 0;
    for i in 0..estimate.cols() {
        if angular_error(&estimate.col(i), &truth.col(i))? >= threshold {
            break;
        }
        streak += 1;
    }
    Ok(streak)
}

/// `1 − Tr(U*P)/k` with `U*`, `P` the projectors onto the spans of `truth`
/// and `estimate`.
pub fn subspace_distance(estimate: &Mat, truth: &Mat) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::shape(format!(
            "subspace distance compares {:?} against {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let k = estimate.cols();
    if k == 0 {
        return Ok(0.0);
    }
    let q = orthonormalize(estimate)?;
    let u = orthonormalize(truth)?;
    // Tr(UUᵀQQᵀ) = ‖UᵀQ‖²_F
    let overlap = u.transpose().matmul(&q)?.frobenius_norm();
    Ok((1.0 - overlap * overlap / k as f64).clamp(0.0, 1.0))
}

/// Logs a warning when the leading `k` eigenvalues are too close for
/// per-vector metrics to be meaningful. Returns whether a warning was issued.
pub fn warn_if_degenerate(eigenvalues: &[f64], k: usize) -> bool {
    let upto = (k + 1).min(eigenvalues.len());
    for i in 1..upto {
        let gap = (eigenvalues[i - 1] - eigenvalues[i]).abs();
        if gap < DEGENERATE_GAP {
            log::warn!(
                "eigenvalues {} and {} differ by {gap:e}; per-vector streaks are ill-posed",
                i,
                i + 1
            );
            return true;
        }
    }
    false
}

/// One evaluation row of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    pub wall_ms: f64,
    /// `None` without ground truth.
    pub streak: Option<usize>,
    pub subspace_distance: Option<f64>,
    pub utilities: Vec<f64>,
    /// Player steps skipped since the previous row.
    pub skipped_players: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTrace {
    pub rows: Vec<MetricRow>,
}

impl MetricTrace {
    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    /// CSV with header `iteration,wall_ms,streak,subspace_distance,u_1..u_k,skipped_players`;
    /// missing metrics are written as `NaN`.
    pub fn write_csv<W: Write>(&self, w: &mut W, k: usize) -> std::io::Result<()> {
        let mut header = vec![
            "iteration".to_string(),
            "wall_ms".into(),
            "streak".into(),
            "subspace_distance".into(),
        ];
        header.extend((1..=k).map(|i| format!("u_{i}")));
        header.push("skipped_players".into());
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut cells = vec![
                row.iteration.to_string(),
                format!("{:.3}", row.wall_ms),
                row.streak.map_or("NaN".into(), |s| s.to_string()),
                row.subspace_distance.map_or("NaN".into(), |d| format!("{d:e}")),
            ];
            cells.extend(row.utilities.iter().map(|u| format!("{u:e}")));
            cells.push(row.skipped_players.to_string());
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Cluster assignment for each sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    assignments: Vec<usize>,
    num_clusters: usize,
}

impl Labeling {
    pub fn new(assignments: Vec<usize>, num_clusters: usize) -> Result<Self> {
        if let Some(&bad) = assignments.iter().find(|&&a| a >= num_clusters) {
            return Err(Error::config(format!(
                "label {bad} out of range for {num_clusters} clusters"
            )));
        }
        Ok(Labeling {
            assignments,
            num_clusters,
        })
    }

    /// Labeling whose cluster count is one more than the largest label.
    pub fn from_labels(assignments: Vec<usize>) -> Self {
        let num_clusters = assignments.iter().max().map_or(0, |m| m + 1);
        Labeling {
            assignments,
            num_clusters,
        }
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct KMeans {
    pub labeling: Labeling,
    /// `c x dim` cluster centers.
    pub centers: Mat,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

pub const KMEANS_RESTARTS: usize = 10;

/// k-means with k-means++ seeding, best of [`KMEANS_RESTARTS`] by WCSS.
pub fn kmeans(points: &Mat, clusters: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    let n = points.rows();
    if clusters == 0 || clusters > n {
        return Err(Error::config(format!(
            "cannot form {clusters} clusters from {n} points"
        )));
    }
    let mut rng = rng::stream(seed, rng::streams::KMEANS);
    let mut best: Option<KMeans> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = plus_plus_seeds(points, clusters, &mut rng);
        let run = lloyd(points, init, max_iters);
        if best.as_ref().is_none_or(|b| run.result.wcss < b.wcss) {
            best = Some(run.result);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Mat) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &Mat, clusters: usize, rng: &mut rng::Rng) -> Mat {
    let n = points.rows();
    let mut centers = Mat::zeros(clusters, points.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|p| sq_dist(points.row(p), centers.row(0))).collect();
    for c in 1..clusters {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (p, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = p;
                    break;
                }
                target -= w;
            }
            // Rounding can run past the end; fall back to the last weighted point.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (p, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(points.row(p), centers.row(c)));
        }
    }
    centers
}

pub(crate) struct LloydRun {
    pub result: KMeans,
    /// WCSS after each Lloyd iteration.
    #[cfg_attr(not(test), allow(dead_code))]
    pub history: Vec<f64>,
}

pub(crate) fn lloyd(points: &Mat, mut centers: Mat, max_iters: usize) -> LloydRun {
    let (n, dim) = points.shape();
    let c = centers.rows();
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for p in 0..n {
            let (best, _) = nearest(points.row(p), &centers);
            if labels[p] != best {
                labels[p] = best;
                changed = true;
            }
        }
        let mut sums = Mat::zeros(c, dim);
        let mut counts = vec![0usize; c];
        for p in 0..n {
            counts[labels[p]] += 1;
            crate::linalg::axpy(1.0, points.row(p), sums.row_mut(labels[p]));
        }
        for k in 0..c {
            if counts[k] > 0 {
                let inv = 1.0 / counts[k] as f64;
                for (dst, s) in centers.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *dst = s * inv;
                }
            }
        }
        // Empty clusters move to the point farthest from its own center.
        for k in 0..c {
            if counts[k] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&p| counts[labels[p]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(points.row(a), centers.row(labels[a]))
                        .total_cmp(&sq_dist(points.row(b), centers.row(labels[b])))
                });
            if let Some(p) = far {
                counts[labels[p]] -= 1;
                counts[k] = 1;
                labels[p] = k;
                let row = points.row(p).to_vec();
                centers.row_mut(k).copy_from_slice(&row);
                changed = true;
            }
        }
        history.push(wcss(points, &centers, &labels));
        if !changed {
            break;
        }
    }
    let total = *history.last().expect("at least one iteration");
    LloydRun {
        result: KMeans {
            labeling: Labeling {
                assignments: labels,
                num_clusters: c,
            },
            centers,
            wcss: total,
        },
        history,
    }
}

fn wcss(points: &Mat, centers: &Mat, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(p, &l)| sq_dist(points.row(p), centers.row(l)))
        .sum()
}

/// Homogeneity, completeness and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn v_measure_parts(truth: &Labeling, pred: &Labeling) -> Result<VMeasure> {
    if truth.len() != pred.len() {
        return Err(Error::shape(format!(
            "{} true labels against {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    let n = truth.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut class_counts: HashMap<usize, usize> = HashMap::new();
    let mut cluster_counts: HashMap<usize, usize> = HashMap::new();
    for (&c, &k) in truth.assignments().iter().zip(pred.assignments()) {
        *joint.entry((c, k)).or_default() += 1;
        *class_counts.entry(c).or_default() += 1;
        *cluster_counts.entry(k).or_default() += 1;
    }
    let h_c = entropy(class_counts.values().copied(), n);
    let h_k = entropy(cluster_counts.values().copied(), n);
    // H(C|K) = −Σ n_ck/n · ln(n_ck / n_k), and symmetrically for H(K|C).
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (&(c, k), &count) in &joint {
        let p = count as f64 / n;
        h_c_given_k -= p * (count as f64 / cluster_counts[&k] as f64).ln();
        h_k_given_c -= p * (count as f64 / class_counts[&c] as f64).ln();
    }
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        v_measure,
    })
}

pub fn v_measure(truth: &Labeling, pred: &Labeling) -> Result<f64> {
    Ok(v_measure_parts(truth, pred)?.v_measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn angular_error_examples() {
        assert_eq!(angular_error(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(angular_error(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        let h = 0.5f64.sqrt();
        assert!((angular_error(&[1.0, 0.0], &[h, h]).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(angular_error(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn rotated_basis(angles: &[f64]) -> (Mat, Mat) {
        let d = angles.len() + 1;
        let truth = Mat::identity(d).leading_cols(angles.len());
        let mut est = Mat::zeros(d, angles.len());
        for (i, &a) in angles.iter().enumerate() {
            est[(i, i)] = a.cos();
            est[(d - 1, i)] = a.sin();
        }
        (est, truth)
    }

    #[test]
    fn streak_examples() {
        let t = Mat::identity(3);
        assert_eq!(longest_streak(&t, &t, STREAK_THRESHOLD).unwrap(), 3);
        let (est, truth) = rotated_basis(&[FRAC_PI_2, 0.0, 0.0]);
        assert_eq!(longest_streak(&est, &truth, STREAK_THRESHOLD).unwrap(), 0);
        let (est, truth) = rotated_basis(&[0.1, 0.5, 0.1]);
        assert_eq!(longest_streak(&est, &truth, STREAK_THRESHOLD).unwrap(), 1);
        assert!(longest_streak(&Mat::identity(2), &t, 0.1).is_err());
    }

    #[test]
    fn streak_ignores_signs() {
        let (mut est, truth) = rotated_basis(&[0.1, 0.2]);
        let flipped: Vec<f64> = est.col(1).iter().map(|x| -x).collect();
        est.set_col(1, &flipped).unwrap();
        assert_eq!(longest_streak(&est, &truth, STREAK_THRESHOLD).unwrap(), 2);
    }

    #[test]
    fn subspace_distance_examples() {
        let t = Mat::identity(3).leading_cols(2);
        assert!(subspace_distance(&t, &t).unwrap().abs() < 1e-15);
        let v = Mat::from_cols(&[[1.0, 0.0]]).unwrap();
        let perp = Mat::from_cols(&[[0.0, 1.0]]).unwrap();
        assert!((subspace_distance(&perp, &v).unwrap() - 1.0).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        let diag = Mat::from_cols(&[[h, h]]).unwrap();
        assert!((subspace_distance(&diag, &v).unwrap() - 0.5).abs() < 1e-15);
        let rank1 = Mat::from_cols(&[[1.0, 0.0], [2.0, 0.0]]).unwrap();
        assert!(matches!(
            subspace_distance(&rank1, &Mat::identity(2)),
            Err(Error::Rank { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn degenerate_spectrum_warning() {
        assert!(warn_if_degenerate(&[3.0, 2.0, 2.0 + 1e-9], 2));
        assert!(!warn_if_degenerate(&[3.0, 2.0, 1.0], 2));
        // Gap beyond the k+1 window is irrelevant.
        assert!(!warn_if_degenerate(&[3.0, 2.0, 1.0, 1.0], 2));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = MetricTrace {
            rows: vec![
                MetricRow {
                    iteration: 10,
                    wall_ms: 1.5,
                    streak: Some(2),
                    subspace_distance: Some(0.25),
                    utilities: vec![1.0, 0.5],
                    skipped_players: 0,
                },
                MetricRow {
                    iteration: 20,
                    wall_ms: 3.0,
                    streak: None,
                    subspace_distance: None,
                    utilities: vec![1.0, 0.5],
                    skipped_players: 1,
                },
            ],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,wall_ms,streak,subspace_distance,u_1,u_2,skipped_players");
        assert_eq!(lines[1], "10,1.500,2,2.5e-1,1e0,5e-1,0");
        assert_eq!(lines[2], "20,3.000,NaN,NaN,1e0,5e-1,1");
    }

    fn blobs() -> (Mat, Vec<usize>) {
        let offsets = [[0.01, 0.0], [-0.01, 0.0], [0.0, 0.02], [0.0, -0.02]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (label, center) in [[0.0, 0.0], [10.0, 10.0]].iter().enumerate() {
            for o in &offsets {
                rows.push(vec![center[0] + o[0], center[1] + o[1]]);
                labels.push(label);
            }
        }
        (Mat::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn kmeans_separable_blobs() {
        let (points, labels) = blobs();
        let km = kmeans(&points, 2, 0, 100).unwrap();
        let mut centers = vec![km.centers.row(0).to_vec(), km.centers.row(1).to_vec()];
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(centers[0].iter().all(|x| x.abs() < 1e-9), "{centers:?}");
        assert!(centers[1].iter().all(|x| (x - 10.0).abs() < 1e-9), "{centers:?}");
        let truth = Labeling::from_labels(labels);
        assert_eq!(v_measure(&truth, &km.labeling).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_degenerate_counts() {
        let (points, _) = blobs();
        let km = kmeans(&points, points.rows(), 3, 100).unwrap();
        assert_eq!(km.wcss, 0.0);
        let mut seen = km.labeling.assignments().to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), points.rows());

        let km = kmeans(&points, 1, 3, 100).unwrap();
        for c in 0..2 {
            let mean: f64 = points.col(c).iter().sum::<f64>() / points.rows() as f64;
            assert!((km.centers[(0, c)] - mean).abs() < 1e-12);
        }
        assert!(kmeans(&points, points.rows() + 1, 0, 10).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let (points, _) = blobs();
        let a = kmeans(&points, 3, 9, 50).unwrap();
        let b = kmeans(&points, 3, 9, 50).unwrap();
        assert_eq!(a.labeling, b.labeling);
        assert_eq!(a.centers, b.centers);
    }

    #[test]
    fn lloyd_wcss_never_increases() {
        let mut rng = rng::stream(4, rng::streams::TEST);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0).collect())
            .collect();
        let points = Mat::from_rows(&rows).unwrap();
        for restart in 0..5 {
            let init = plus_plus_seeds(&points, 5, &mut rng);
            let run = lloyd(&points, init, 100);
            for w in run.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "restart {restart}: {:?}", run.history);
            }
        }
    }

    #[test]
    fn v_measure_examples() {
        let truth = Labeling::from_labels(vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(v_measure(&truth, &truth).unwrap(), 1.0);
        let permuted = Labeling::from_labels(vec![2, 2, 0, 0, 1, 1]);
        assert!((v_measure(&truth, &permuted).unwrap() - 1.0).abs() < 1e-15);

        let two = Labeling::from_labels(vec![0, 0, 1, 1]);
        let lumped = Labeling::from_labels(vec![0, 0, 0, 0]);
        let parts = v_measure_parts(&two, &lumped).unwrap();
        assert_eq!(parts.homogeneity, 0.0);
        assert_eq!(parts.completeness, 1.0);
        assert_eq!(parts.v_measure, 0.0);

        assert!(v_measure(&two, &truth).is_err());
        assert!(Labeling::new(vec![0, 3], 2).is_err());
    }

    #[test]
    fn v_measure_partial_agreement() {
        // Hand-computed: classes {0,0,1,1}, clusters {0,0,0,1}.
        let truth = Labeling::from_labels(vec![0, 0, 1, 1]);
        let pred = Labeling::from_labels(vec![0, 0, 0, 1]);
        let parts = v_measure_parts(&truth, &pred).unwrap();
        let ln = f64::ln;
        let h_c = ln(2.0);
        let h_c_given_k = -(0.5 * ln(2.0 / 3.0) + 0.25 * ln(1.0 / 3.0));
        let h_k = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
        let h_k_given_c = -(0.25 * ln(0.5) + 0.25 * ln(0.5));
        assert!((parts.homogeneity - (1.0 - h_c_given_k / h_c)).abs() < 1e-15);
        assert!((parts.completeness - (1.0 - h_k_given_c / h_k)).abs() < 1e-15);
    }
}
