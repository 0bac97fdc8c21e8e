use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iter: 300,
            n_restarts: 10,
            seed: 0,
        }
    }
}

/// Best of several Lloyd runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step of the winning run.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// k-means with k-means++ seeding, Lloyd iterations until the assignment
/// stops changing (or `max_iter`), and the lowest-inertia run kept.
///
/// A centroid that loses all its points is moved onto the point farthest
/// from its own centroid, which then forms a singleton cluster.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if k > n {
        return Err(Error::Input(format!("k = {k} exceeds the {n} points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("points contain non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let norms: Array1<f64> = points.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.n_restarts.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let run = lloyd(points, &norms, init, cfg.max_iter);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points.rows().into_iter().map(|r| sq_dist(r, points.row(first))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Every point coincides with a chosen centroid.
            Err(_) => rng.gen_range(0..n),
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, r) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, points.row(pick)));
        }
    }
    centroids
}

/// Nearest centroid per point, ties to the lower index.
fn assign(points: ArrayView2<'_, f64>, norms: &Array1<f64>, centroids: &Array2<f64>) -> Vec<usize> {
    let cross = points.dot(&centroids.t());
    let c_norms: Vec<f64> = centroids.rows().into_iter().map(|r| r.dot(&r)).collect();
    cross
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| {
            let mut best = (0, f64::INFINITY);
            for (j, &dot) in row.iter().enumerate() {
                let d = norms[i] - 2.0 * dot + c_norms[j];
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

fn inertia(points: ArrayView2<'_, f64>, centroids: &Array2<f64>, assignments: &[usize]) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(assignments)
        .map(|(r, &a)| sq_dist(r, centroids.row(a)))
        .sum()
}

fn update(points: ArrayView2<'_, f64>, assignments: &mut [usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    let mut counts = vec![0usize; k];
    for (r, &a) in points.rows().into_iter().zip(assignments.iter()) {
        sums.row_mut(a).scaled_add(1.0, &r);
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        // Farthest point among clusters that can spare one.
        let far = points
            .rows()
            .into_iter()
            .enumerate()
            .filter(|&(i, _)| counts[assignments[i]] > 1)
            .map(|(i, r)| (i, sq_dist(r, centroids.row(assignments[i]))))
            .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            let old = assignments[i];
            counts[old] -= 1;
            counts[c] = 1;
            assignments[i] = c;
            centroids.row_mut(c).assign(&points.row(i));
            let mut mean = Array1::zeros(points.ncols());
            for (r, _) in points.rows().into_iter().zip(assignments.iter()).filter(|(_, &a)| a == old) {
                mean += &r;
            }
            mean /= counts[old] as f64;
            centroids.row_mut(old).assign(&mean);
        }
    }
}

fn lloyd(points: ArrayView2<'_, f64>, norms: &Array1<f64>, mut centroids: Array2<f64>, max_iter: usize) -> KMeansResult {
    let k = centroids.nrows();
    let mut assignments = assign(points, norms, &centroids);
    let mut trace = vec![inertia(points, &centroids, &assignments)];
    update(points, &mut assignments, &mut centroids);
    let mut iterations = 1;
    while iterations < max_iter.max(1) {
        let next = assign(points, norms, &centroids);
        iterations += 1;
        if next == assignments {
            break;
        }
        assignments = next;
        trace.push(inertia(points, &centroids, &assignments));
        update(points, &mut assignments, &mut centroids);
    }
    let final_inertia = inertia(points, &centroids, &assignments);
    trace.push(final_inertia);
    KMeansResult {
        k,
        assignments,
        centroids,
        inertia: final_inertia,
        iterations,
        inertia_trace: trace,
    }
}
