//! Lloyd k-means with random or k-means++ seeding, nearest-to-center query
//! extraction, and the silhouette coefficient.

use std::collections::HashSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, sq_dist};
use crate::seed;

pub const DEFAULT_MAX_ITER: usize = 10;

/// Lloyd initialization. The default is k-means++ seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Init {
    /// k distinct points chosen uniformly.
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "kmeans++")]
    #[default]
    KMeansPlusPlus,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Init::Random),
            "kmeans++" | "k-means++" => Ok(Init::KMeansPlusPlus),
            other => Err(Error::InvalidArgument(format!(
                "unknown k-means init `{other}` (expected random or kmeans++)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Vec<f64>>,
    /// Point index to center index.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Number of center updates performed.
    pub iterations_run: usize,
    /// Inertia after each assignment step, final assignment last.
    pub inertia_trace: Vec<f64>,
}

fn point_key(p: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 compare equal
    p.iter().map(|x| (x + 0.0).to_bits()).collect()
}

pub fn count_distinct(points: &[Vec<f64>]) -> usize {
    points.iter().map(|p| point_key(p)).collect::<HashSet<_>>().len()
}

fn check_dims(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map_or(0, Vec::len);
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: p.len(),
            });
        }
    }
    Ok(d)
}

fn check_k(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    check_dims(points)?;
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::TooFewDistinctPoints { k, distinct });
    }
    Ok(())
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut assignment = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (j, d) = nearest(p, centers);
        assignment.push(j);
        dists.push(d);
    }
    let inertia = dists.iter().sum();
    (assignment, dists, inertia)
}

/// Pick k distinct-valued points uniformly at random.
fn random_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(rng);
    let mut seen = HashSet::new();
    order
        .into_iter()
        .filter(|&i| seen.insert(point_key(&points[i])))
        .take(k)
        .collect()
}

/// D² sampling of up to `k` distinct point indices. When every remaining
/// weight is zero, the next index is drawn uniformly from the unchosen ones.
pub(crate) fn d2_sample(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut taken = vec![false; n];
    taken[chosen[0]] = true;
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight has a positive entry")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        taken[next] = true;
        chosen.push(next);
        for (w, p) in d2.iter_mut().zip(points) {
            let d = sq_dist(p, &points[next]);
            if d < *w {
                *w = d;
            }
        }
    }
    chosen
}

/// k-means++ seeding: indices of the chosen points.
pub fn kmeanspp_indices(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    check_k(points, k)?;
    Ok(d2_sample(points, k, &mut seed::rng(seed)))
}

/// k-means++ seeding: the chosen center vectors.
pub fn kmeanspp_init(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(kmeanspp_indices(points, k, seed)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    init: Init,
    max_iter: usize,
    seed: u64,
) -> Result<Clustering> {
    check_k(points, k)?;
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let dim = points[0].len();
    let mut rng = seed::rng(seed);
    let start = match init {
        Init::Random => random_init(points, k, &mut rng),
        Init::KMeansPlusPlus => d2_sample(points, k, &mut rng),
    };
    let mut centers: Vec<Vec<f64>> = start.iter().map(|&i| points[i].clone()).collect();

    let mut trace = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    let mut iterations_run = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        let (assignment, dists, inertia) = assign(points, &centers);
        trace.push(inertia);
        if prev.as_ref() == Some(&assignment) {
            converged = true;
            break;
        }
        centers = update_centers(points, &assignment, &dists, k, dim);
        iterations_run += 1;
        prev = Some(assignment);
    }
    let (assignment, _, inertia) = assign(points, &centers);
    if !converged {
        trace.push(inertia);
    }
    Ok(Clustering {
        centers,
        assignment,
        inertia,
        iterations_run,
        inertia_trace: trace,
    })
}

/// Means in point-index order. Empty clusters take the point farthest from
/// its assigned center.
fn update_centers(
    points: &[Vec<f64>],
    assignment: &[usize],
    dists: &[f64],
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &j) in points.iter().zip(assignment) {
        counts[j] += 1;
        for (s, x) in sums[j].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut used = vec![false; points.len()];
    for j in 0..k {
        if counts[j] > 0 {
            let n = counts[j] as f64;
            sums[j].iter_mut().for_each(|s| *s /= n);
        } else {
            let mut far = None;
            for (i, &d) in dists.iter().enumerate() {
                if used[i] {
                    continue;
                }
                if far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                used[i] = true;
                sums[j] = points[i].clone();
            }
        }
    }
    sums
}

/// For each center in order, the nearest point not already taken.
pub fn nearest_to_centers(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centers.is_empty() {
        return Err(Error::InvalidArgument("no centers".into()));
    }
    if points.len() < centers.len() {
        return Err(Error::InvalidArgument(format!(
            "{} point(s) cannot cover {} centers",
            points.len(),
            centers.len()
        )));
    }
    let mut taken = vec![false; points.len()];
    let mut out = Vec::with_capacity(centers.len());
    for c in centers {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(p, c);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("enough points remain");
        taken[i] = true;
        out.push(i);
    }
    Ok(out)
}

/// Mean silhouette coefficient. Points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], assignment: &[usize]) -> Result<f64> {
    if points.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            actual: assignment.len(),
        });
    }
    check_dims(points)?;
    let n_labels = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    for &a in assignment {
        sizes[a] += 1;
    }
    let clusters: Vec<usize> = (0..n_labels).filter(|&c| sizes[c] > 0).collect();
    if clusters.len() < 2 {
        return Err(Error::InvalidArgument(
            "silhouette needs at least two nonempty clusters".into(),
        ));
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; n_labels];
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += dist(&points[i], &points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != own)
            .map(|&c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
