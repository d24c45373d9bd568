//! Standard hard clustering applied directly to intensity vectors.
//!
//! These are the reference methods the incremental approach is compared
//! against: average-linkage agglomerative clustering under several vector
//! metrics (including a 1D earth mover's distance) and k-means. The sweep
//! scores each setting against planted ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap for Lloyd's algorithm.
pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    Cosine,
    Seuclidean,
    Correlation,
    Emd,
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MetricKind::Euclidean),
            "cosine" => Ok(MetricKind::Cosine),
            "seuclidean" => Ok(MetricKind::Seuclidean),
            "correlation" => Ok(MetricKind::Correlation),
            "emd" => Ok(MetricKind::Emd),
            _ => Err(Error::param(format!("unknown metric {s:?}"))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Cosine => "cosine",
            MetricKind::Seuclidean => "seuclidean",
            MetricKind::Correlation => "correlation",
            MetricKind::Emd => "emd",
        })
    }
}

/// A vector metric ready to evaluate. `Seuclidean` carries the per-feature
/// variances of the dataset it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Euclidean,
    Cosine,
    Seuclidean { variances: Vec<f64> },
    Correlation,
}

impl Metric {
    /// Builds the metric for `kind`, computing dataset-level state where
    /// needed. Zero variances are replaced by 1.
    pub fn fit(kind: MetricKind, vectors: &[Vec<f64>]) -> Result<Self> {
        Ok(match kind {
            MetricKind::Euclidean => Metric::Euclidean,
            MetricKind::Cosine => Metric::Cosine,
            MetricKind::Correlation => Metric::Correlation,
            MetricKind::Seuclidean => Metric::Seuclidean {
                variances: feature_variances(vectors)?,
            },
            MetricKind::Emd => return Err(Error::param("emd is evaluated by emd_1d")),
        })
    }
}

/// Sample variance (n - 1 denominator) of each feature; zero becomes 1.
pub fn feature_variances(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, Vec::len);
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::param("vectors differ in length"));
    }
    Ok((0..dim)
        .map(|k| {
            if n < 2 {
                return 1.0;
            }
            let mean = vectors.iter().map(|v| v[k]).sum::<f64>() / n as f64;
            let var = vectors.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            if var > 0.0 {
                var
            } else {
                1.0
            }
        })
        .collect())
}

fn one_minus_cosine(a: impl Iterator<Item = f64> + Clone, b: impl Iterator<Item = f64> + Clone) -> f64 {
    let dot: f64 = a.clone().zip(b.clone()).map(|(x, y)| x * y).sum();
    let na: f64 = a.map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        log::debug!("zero-norm vector in cosine/correlation distance; using 1");
        return 1.0;
    }
    // rounding can push identical directions just below zero
    (1.0 - dot / (na * nb)).max(0.0)
}

pub fn vector_distance(a: &[f64], b: &[f64], metric: &Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        Metric::Seuclidean { variances } => {
            if variances.len() != a.len() {
                return Err(Error::param("variance vector has the wrong length"));
            }
            a.iter()
                .zip(b)
                .zip(variances)
                .map(|((x, y), v)| (x - y).powi(2) / v)
                .sum::<f64>()
                .sqrt()
        }
        Metric::Cosine => one_minus_cosine(a.iter().copied(), b.iter().copied()),
        Metric::Correlation => {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            one_minus_cosine(a.iter().map(move |x| x - ma), b.iter().map(move |y| y - mb))
        }
    })
}

/// Earth mover's distance between two histograms on a common unit-spaced
/// grid, after normalizing each to unit mass.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param("histograms must be finite and non-negative"));
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::param("histogram has zero mass"));
    }
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        cdf_gap += x / sa - y / sb;
        total += cdf_gap.abs();
    }
    Ok(total)
}

/// Full pairwise distance matrix of `vectors` under `kind`.
pub fn distance_matrix(vectors: &[Vec<f64>], kind: MetricKind) -> Result<Vec<Vec<f64>>> {
    let metric = match kind {
        MetricKind::Emd => None,
        other => Some(Metric::fit(other, vectors)?),
    };
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return Ok(0.0);
                    }
                    match &metric {
                        Some(m) => vector_distance(&vectors[i], &vectors[j], m),
                        None => emd_1d(&vectors[i], &vectors[j]),
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    // Symmetrize against rounding differences between (i, j) and (j, i).
    let mut m = rows;
    for i in 0..n {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    /// Smallest original point index in each merged cluster.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Stepwise dendrogram over `n` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub steps: Vec<MergeStep>,
}

impl Dendrogram {
    /// Flat clusters from merges with height at most `cutoff`; labels are
    /// numbered by first appearance.
    pub fn cut(&self, cutoff: f64) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for s in self.steps.iter().filter(|s| s.height <= cutoff) {
            let (a, b) = (find(&mut parent, s.left), find(&mut parent, s.right));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut labels = Vec::with_capacity(self.n);
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for i in 0..self.n {
            let root = find(&mut parent, i);
            let next = seen.len();
            labels.push(*seen.entry(root).or_insert(next));
        }
        labels
    }
}

fn validate_matrix(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::param("distance matrix is not square"));
        }
        if row[i] != 0.0 {
            return Err(Error::param("distance matrix diagonal must be zero"));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(format!("invalid distance at ({i}, {j})")));
            }
            let w = d[j][i];
            if (v - w).abs() > 1e-12 * v.abs().max(w.abs()).max(1.0) {
                return Err(Error::param(format!("distance matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Average-linkage agglomeration (Lance-Williams updates).
///
/// At each step the closest pair of active clusters is merged; ties go to
/// the pair with the lowest (left, right) smallest-member indices.
pub fn average_linkage(d: &[Vec<f64>]) -> Result<Dendrogram> {
    validate_matrix(d)?;
    let n = d.len();
    let mut dist: Vec<Vec<f64>> = d.to_vec();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if best.is_none_or(|(b, _, _)| dist[i][j] < b) {
                    best = Some((dist[i][j], i, j));
                }
            }
        }
        let (h, i, j) = best.expect("at least two active clusters");
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let v = (si * dist[i][k] + sj * dist[j][k]) / (si + sj);
            dist[i][k] = v;
            dist[k][i] = v;
        }
        active[j] = false;
        size[i] += size[j];
        steps.push(MergeStep {
            left: i,
            right: j,
            height: h,
            size: size[i],
        });
    }
    Ok(Dendrogram { n, steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Average,
}

/// Average-linkage clustering cut at a distance threshold.
pub fn agglomerative_cluster(d: &[Vec<f64>], linkage: Linkage, cutoff: f64) -> Result<Vec<usize>> {
    match linkage {
        Linkage::Average => Ok(average_linkage(d)?.cut(cutoff)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Objective after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest_centroid(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cent) in centroids.iter().enumerate() {
        let d = sq_dist(v, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or [`KMEANS_MAX_ITERATIONS`] is reached.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::param(format!("k must be in 1..={n}, got {k}")));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::param("vectors differ in length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &vectors[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v, &vectors[next]));
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| vectors[i].clone()).collect();

    let mut labels: Vec<usize> = Vec::new();
    let mut objective = Vec::new();
    let mut iterations = 0;
    loop {
        let assigned: Vec<(usize, f64)> = vectors.par_iter().map(|v| nearest_centroid(v, &centroids)).collect();
        let next: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        objective.push(assigned.iter().map(|a| a.1).sum());
        if next == labels || iterations >= KMEANS_MAX_ITERATIONS {
            labels = next;
            break;
        }
        labels = next;
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            // an empty cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        objective,
        iterations,
    })
}

/// `count` values starting at `start`, each divided by `factor`.
pub fn geometric_grid(start: f64, factor: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start / factor.powi(i as i32)).collect()
}

/// Agreement of a labelling with planted ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub purity: f64,
    pub adjusted_rand: f64,
    /// Planted mixed samples placed in a cluster distinct from every
    /// constituent's cluster.
    pub mixed_recall: f64,
    /// Planted mixed samples whose predicted membership is exactly their
    /// constituents' clusters (always 0 for hard clustering).
    pub dual_membership_recall: f64,
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

fn adjusted_rand<T: std::hash::Hash + Eq + Clone, U: std::hash::Hash + Eq + Clone>(a: &[T], b: &[U]) -> f64 {
    let n = a.len();
    let mut table: HashMap<(T, U), usize> = HashMap::new();
    let mut rows: HashMap<T, usize> = HashMap::new();
    let mut cols: HashMap<U, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x.clone(), y.clone())).or_default() += 1;
        *rows.entry(x.clone()).or_default() += 1;
        *cols.entry(y.clone()).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Scores predicted membership sets against truth sets. Hard clusterings
/// pass singleton sets.
pub fn score(predicted: &[BTreeSet<usize>], truth: &[BTreeSet<usize>]) -> Result<Scores> {
    if predicted.len() != truth.len() {
        return Err(Error::param("prediction and truth differ in length"));
    }
    let n = truth.len();
    if n == 0 {
        return Ok(Scores {
            purity: 1.0,
            adjusted_rand: 1.0,
            mixed_recall: 0.0,
            dual_membership_recall: 0.0,
        });
    }

    let mut clusters: BTreeMap<&BTreeSet<usize>, HashMap<&BTreeSet<usize>, usize>> = BTreeMap::new();
    for (p, t) in predicted.iter().zip(truth) {
        *clusters.entry(p).or_default().entry(t).or_default() += 1;
    }
    let purity = clusters
        .values()
        .map(|c| c.values().copied().max().unwrap_or(0))
        .sum::<usize>() as f64
        / n as f64;
    let adjusted_rand = adjusted_rand(predicted, truth);

    // majority predicted label among samples planted purely in each phase
    let mut votes: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (p, t) in predicted.iter().zip(truth) {
        if t.len() == 1 {
            let phase = *t.iter().next().unwrap();
            for &l in p {
                *votes.entry(phase).or_default().entry(l).or_default() += 1;
            }
        }
    }
    let cluster_of: BTreeMap<usize, usize> = votes
        .iter()
        .filter_map(|(phase, v)| {
            v.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(l, _)| (*phase, *l))
        })
        .collect();

    let mut mixed = 0usize;
    let mut distinct = 0usize;
    let mut dual = 0usize;
    for (p, t) in predicted.iter().zip(truth).filter(|(_, t)| t.len() >= 2) {
        mixed += 1;
        let expected: BTreeSet<usize> = t.iter().filter_map(|c| cluster_of.get(c).copied()).collect();
        if p.is_disjoint(&expected) {
            distinct += 1;
        }
        if p.len() >= 2 && expected.len() == t.len() && *p == expected {
            dual += 1;
        }
    }
    let frac = |k: usize| if mixed == 0 { 0.0 } else { k as f64 / mixed as f64 };
    Ok(Scores {
        purity,
        adjusted_rand,
        mixed_recall: frac(distinct),
        dual_membership_recall: frac(dual),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SweepMethod {
    Hierarchical { metric: MetricKind, cutoffs: Vec<f64> },
    Kmeans { ks: Vec<usize>, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub metric: String,
    pub param: f64,
    pub clusters: usize,
    /// Samples given more than one label.
    pub dual_memberships: usize,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

impl SweepReport {
    /// Adds a row for a set-valued labelling, such as the incremental
    /// method's memberships.
    pub fn push_memberships(
        &mut self,
        method: &str,
        param: f64,
        predicted: &[BTreeSet<usize>],
        truth: &[BTreeSet<usize>],
    ) -> Result<()> {
        let labels: BTreeSet<usize> = predicted.iter().flatten().copied().collect();
        self.rows.push(SweepRow {
            method: method.to_string(),
            metric: String::new(),
            param,
            clusters: labels.len(),
            dual_memberships: predicted.iter().filter(|p| p.len() >= 2).count(),
            scores: score(predicted, truth)?,
        });
        Ok(())
    }
}

fn singletons(labels: &[usize]) -> Vec<BTreeSet<usize>> {
    labels.iter().map(|&l| [l].into()).collect()
}

/// Runs each configured clusterer over its parameter grid and scores every
/// setting against `truth` (one planted membership set per vector).
pub fn sweep(vectors: &[Vec<f64>], truth: &[BTreeSet<usize>], methods: &[SweepMethod]) -> Result<SweepReport> {
    let mut report = SweepReport {
        rows: Vec::new(),
        notes: vec!["dynamic time warping is not evaluated".to_string()],
    };
    for method in methods {
        match method {
            SweepMethod::Hierarchical { metric, cutoffs } => {
                if cutoffs.is_empty() {
                    continue;
                }
                let d = distance_matrix(vectors, *metric)?;
                let dendrogram = average_linkage(&d)?;
                for &c in cutoffs {
                    let labels = dendrogram.cut(c);
                    let predicted = singletons(&labels);
                    report.rows.push(SweepRow {
                        method: "hierarchical".into(),
                        metric: metric.to_string(),
                        param: c,
                        clusters: labels.iter().max().map_or(0, |m| m + 1),
                        dual_memberships: 0,
                        scores: score(&predicted, truth)?,
                    });
                }
            }
            SweepMethod::Kmeans { ks, seed } => {
                for &k in ks {
                    let r = kmeans(vectors, k, *seed)?;
                    let predicted = singletons(&r.labels);
                    report.rows.push(SweepRow {
                        method: "kmeans".into(),
                        metric: "euclidean".into(),
                        param: k as f64,
                        clusters: r.labels.iter().collect::<BTreeSet<_>>().len(),
                        dual_memberships: 0,
                        scores: score(&predicted, truth)?,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn metric_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(vector_distance(&a, &a, &Metric::Euclidean).unwrap(), 0.0);
        assert!((vector_distance(&[1.0, 0.0], &[0.0, 1.0], &Metric::Cosine).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(vector_distance(&[0.0, 0.0], &[0.0, 1.0], &Metric::Cosine).unwrap(), 1.0);
        assert_eq!(
            vector_distance(&[2.0, 2.0], &[0.0, 1.0], &Metric::Correlation).unwrap(),
            1.0
        );
        assert!(vector_distance(&[1.0], &[1.0, 2.0], &Metric::Euclidean).is_err());
    }

    #[test]
    fn metrics_match_literal_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..10).map(|_| rng.random::<f64>() * 10.0).collect())
            .collect();
        let (a, b) = (&data[0], &data[1]);
        let euclid = (0..10).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>().sqrt();
        let dot = (0..10).map(|i| a[i] * b[i]).sum::<f64>();
        let na = (0..10).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
        let nb = (0..10).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
        let cosine = 1.0 - dot / (na * nb);
        let ma = a.iter().sum::<f64>() / 10.0;
        let mb = b.iter().sum::<f64>() / 10.0;
        let cov = (0..10).map(|i| (a[i] - ma) * (b[i] - mb)).sum::<f64>();
        let sa = (0..10).map(|i| (a[i] - ma).powi(2)).sum::<f64>().sqrt();
        let sb = (0..10).map(|i| (b[i] - mb).powi(2)).sum::<f64>().sqrt();
        let corr = 1.0 - cov / (sa * sb);
        let var: Vec<f64> = (0..10)
            .map(|k| {
                let m = data.iter().map(|v| v[k]).sum::<f64>() / 6.0;
                data.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / 5.0
            })
            .collect();
        let seu = (0..10).map(|i| (a[i] - b[i]).powi(2) / var[i]).sum::<f64>().sqrt();

        let check = |kind: MetricKind, expected: f64| {
            let m = Metric::fit(kind, &data).unwrap();
            let got = vector_distance(a, b, &m).unwrap();
            assert!((got - expected).abs() < 1e-12, "{kind}: {got} vs {expected}");
        };
        check(MetricKind::Euclidean, euclid);
        check(MetricKind::Cosine, cosine);
        check(MetricKind::Correlation, corr);
        check(MetricKind::Seuclidean, seu);
    }

    #[test]
    fn zero_variance_becomes_one() {
        let v = feature_variances(&[vec![1.0, 2.0], vec![1.0, 4.0]]).unwrap();
        assert_eq!(v, vec![1.0, 2.0]);
    }

    #[test]
    fn emd_examples() {
        let a = [0.2, 0.3, 0.5];
        assert_eq!(emd_1d(&a, &a).unwrap(), 0.0);
        let mut p = [0.0; 5];
        let mut q = [0.0; 5];
        p[0] = 1.0;
        q[4] = 1.0;
        assert!((emd_1d(&p, &q).unwrap() - 4.0).abs() < 1e-15);
        assert!(emd_1d(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(emd_1d(&[-1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn two_point_cutoffs() {
        let d = vec![vec![0.0, 5.0], vec![5.0, 0.0]];
        assert_eq!(agglomerative_cluster(&d, Linkage::Average, 10.0).unwrap(), vec![0, 0]);
        assert_eq!(agglomerative_cluster(&d, Linkage::Average, 2.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn malformed_matrices() {
        assert!(average_linkage(&[vec![0.0, 1.0]]).is_err());
        assert!(average_linkage(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(average_linkage(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(average_linkage(&[]).unwrap().steps.is_empty());
    }

    #[test]
    fn kmeans_trivial_cases() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let one = kmeans(&pts, 1, 3).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let all = kmeans(&pts, 7, 3).unwrap();
        let distinct: BTreeSet<_> = all.labels.iter().collect();
        assert_eq!(distinct.len(), 7);
        assert_eq!(*all.objective.last().unwrap(), 0.0);
        assert!(kmeans(&pts, 8, 3).is_err());
    }

    #[test]
    fn kmeans_recovers_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for c in [0.0, 100.0] {
            for _ in 0..30 {
                pts.push(vec![c + rng.random::<f64>(), c + rng.random::<f64>()]);
            }
        }
        let r = kmeans(&pts, 2, 42).unwrap();
        assert!(r.labels[..30].iter().all(|&l| l == r.labels[0]));
        assert!(r.labels[30..].iter().all(|&l| l == r.labels[30]));
        assert_ne!(r.labels[0], r.labels[30]);
        assert_eq!(kmeans(&pts, 2, 42).unwrap(), r);
    }

    #[test]
    fn score_hard_versus_sets() {
        let truth: Vec<BTreeSet<usize>> = vec![[0].into(), [0].into(), [1].into(), [1].into(), [0, 1].into()];
        let hard = singletons(&[0, 0, 1, 1, 2]);
        let s = score(&hard, &truth).unwrap();
        assert_eq!(s.purity, 1.0);
        assert_eq!(s.mixed_recall, 1.0);
        assert_eq!(s.dual_membership_recall, 0.0);
        let sets: Vec<BTreeSet<usize>> = vec![[4].into(), [4].into(), [9].into(), [9].into(), [4, 9].into()];
        let s = score(&sets, &truth).unwrap();
        assert_eq!(s.mixed_recall, 0.0);
        assert_eq!(s.dual_membership_recall, 1.0);
        assert_eq!(s.adjusted_rand, 1.0);
    }

    #[test]
    fn empty_sweep() {
        let r = sweep(&[], &[], &[]).unwrap();
        assert!(r.rows.is_empty());
    }

    #[test]
    fn geometric_grid_halves() {
        assert_eq!(geometric_grid(1000.0, 2.0, 3), vec![1000.0, 500.0, 250.0]);
        assert_eq!(geometric_grid(1000.0, 2.0, 50).len(), 50);
    }

    fn arb_hist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter("mass", |v| v.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn emd_symmetric_and_triangular(a in arb_hist(8), b in arb_hist(8), c in arb_hist(8)) {
            let ab = emd_1d(&a, &b).unwrap();
            prop_assert!((ab - emd_1d(&b, &a).unwrap()).abs() < 1e-12);
            let ac = emd_1d(&a, &c).unwrap();
            let cb = emd_1d(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn cluster_count_non_increasing(pts in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 2..15), c1 in 0.0f64..15.0, dc in 0.0f64..5.0) {
            let v: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![x, y]).collect();
            let d = distance_matrix(&v, MetricKind::Euclidean).unwrap();
            let den = average_linkage(&d).unwrap();
            let count = |c: f64| den.cut(c).into_iter().max().unwrap() + 1;
            prop_assert!(count(c1 + dc) <= count(c1));
        }

        #[test]
        fn kmeans_objective_non_increasing(pts in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 3..30), k in 1usize..4, seed in 0u64..100) {
            let v: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![x, y]).collect();
            let r = kmeans(&v, k.min(v.len()), seed).unwrap();
            for w in r.objective.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }
}
