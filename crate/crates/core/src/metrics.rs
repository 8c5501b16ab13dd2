//! Sample-quality metrics: k-NN differential entropy, verifier validity and
//! the VENDI diversity score.

use alloc::string::String;
use alloc::vec::Vec;

use crate::diffcore::Tensor;
use crate::error::bail;
use crate::math::{digamma, exp, lgamma, ln, sqrt, PI};
use crate::rng::{tags, Rng};
use crate::verifier::Verifier;
use crate::{Error, Result};

/// Points drawn from a model together with where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Tensor,
    pub seed: Option<u64>,
    pub source: String,
}

impl SampleSet {
    pub fn new(points: Tensor, seed: Option<u64>, source: impl Into<String>) -> Result<Self> {
        if points.shape().len() != 2 || points.rows() < 2 {
            bail!(Dimension, "a sample set needs at least two rows, got shape {:?}", points.shape());
        }
        if !points.is_finite() {
            bail!(Domain, "sample set contains non-finite coordinates");
        }
        Ok(SampleSet { points, seed, source: source.into() })
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Static kd-tree over the rows of a point matrix.
struct KdTree<'a> {
    data: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

const LEAF_SIZE: usize = 12;

impl<'a> KdTree<'a> {
    fn build(data: &'a [f64], dim: usize) -> Self {
        let n = data.len() / dim;
        let mut tree = KdTree { data, dim, order: (0..n).collect(), nodes: Vec::new() };
        tree.build_node(0, n);
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        // split on the axis of largest spread
        let (data, dim) = (self.data, self.dim);
        let axis = (0..dim)
            .map(|a| {
                let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = data[i * dim + a];
                    (lo.min(v), hi.max(v))
                });
                (a, hi - lo)
            })
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        let mid = start + (end - start) / 2;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&i, &j| data[i * dim + axis].total_cmp(&data[j * dim + axis]));
        let value = data[self.order[mid] * dim + axis];
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = KdNode::Split { axis, value, left, right };
        id
    }

    /// Squared distances to the k nearest other points of row `i`, ascending.
    fn knn_excluding(&self, i: usize, k: usize, best: &mut Vec<f64>) {
        best.clear();
        self.search(0, i, k, best);
    }

    fn search(&self, node: usize, i: usize, k: usize, best: &mut Vec<f64>) {
        let q = self.point(i);
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == i {
                        continue;
                    }
                    let d = dist_sq(q, self.point(j));
                    if best.len() < k {
                        let pos = best.partition_point(|&b| b <= d);
                        best.insert(pos, d);
                    } else if d < best[k - 1] {
                        best.pop();
                        let pos = best.partition_point(|&b| b <= d);
                        best.insert(pos, d);
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let delta = q[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, i, k, best);
                if best.len() < k || delta * delta < best[k - 1] {
                    self.search(far, i, k, best);
                }
            }
        }
    }
}

/// log of the volume of the d-dimensional unit ball.
pub fn log_unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * ln(PI) - lgamma(h + 1.0)
}

/// Indices of rows that exactly repeat an earlier row.
fn duplicate_rows(points: &Tensor) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.rows()).collect();
    let cmp = |a: &usize, b: &usize| {
        points.row(*a).iter().zip(points.row(*b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
    };
    idx.sort_by(cmp);
    idx.windows(2).filter(|w| points.row(w[0]) == points.row(w[1])).map(|w| w[1]).collect()
}

/// Kozachenko–Leonenko estimate (nats):
/// ψ(n) − ψ(k) + log V_d + (d/n) Σ log r_i, with r_i the distance from point
/// i to its k-th nearest neighbor.
///
/// Exact duplicate rows are nudged by uniform noise of size 1e-9 (relative to
/// the coordinate magnitude) before the search, deterministically from `seed`.
pub fn knn_entropy(samples: &Tensor, k: usize) -> Result<f64> {
    knn_entropy_seeded(samples, k, 0)
}

pub fn knn_entropy_seeded(samples: &Tensor, k: usize, seed: u64) -> Result<f64> {
    if samples.shape().len() != 2 {
        bail!(Dimension, "samples must be an n × d matrix");
    }
    let (n, d) = (samples.rows(), samples.cols());
    if k == 0 || n <= k {
        bail!(Domain, "k-NN entropy needs n > k ≥ 1 (n = {n}, k = {k})");
    }
    if !samples.is_finite() {
        bail!(Domain, "samples contain non-finite coordinates");
    }
    let dups = duplicate_rows(samples);
    let jittered;
    let points = if dups.is_empty() {
        samples
    } else {
        log::warn!("{} duplicate samples jittered before k-NN entropy", dups.len());
        let mut copy = samples.clone();
        let mut rng = Rng::stream(seed, tags::JITTER);
        for &r in &dups {
            for v in copy.row_mut(r) {
                *v += 1e-9 * v.abs().max(1.0) * rng.uniform_in(-1.0, 1.0);
            }
        }
        jittered = copy;
        &jittered
    };
    let tree = KdTree::build(points.data(), d);
    let mut best = Vec::with_capacity(k + 1);
    let mut log_r_sum = 0.0;
    for i in 0..n {
        tree.knn_excluding(i, k, &mut best);
        let r2 = best[k - 1];
        if r2 == 0.0 {
            bail!(Domain, "zero neighbor distance at row {i} after jitter");
        }
        log_r_sum += 0.5 * ln(r2);
    }
    let nf = n as f64;
    Ok(digamma(nf) - digamma(k as f64) + log_unit_ball_volume(d) + d as f64 * log_r_sum / nf)
}

/// Fraction of rows the hard verifier accepts.
pub fn validity(samples: &Tensor, verifier: &Verifier) -> f64 {
    let n = samples.rows();
    if n == 0 {
        return 0.0;
    }
    (0..n).filter(|&i| verifier.accepts(samples.row(i))).count() as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// exp(−‖x − y‖² / (2h²)).
    Rbf { bandwidth: f64 },
    /// exp(−‖x − y‖ / scale).
    NegDistExp { scale: f64 },
}

impl KernelSpec {
    pub fn new_rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
            bail!(Domain, "rbf bandwidth must be finite and non-negative");
        }
        Ok(KernelSpec::Rbf { bandwidth })
    }

    pub fn new_neg_dist_exp(scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            bail!(Domain, "kernel scale must be finite and non-negative");
        }
        Ok(KernelSpec::NegDistExp { scale })
    }

    /// Rbf kernel whose bandwidth is the median pairwise distance.
    pub fn median_rbf(samples: &Tensor) -> Self {
        KernelSpec::Rbf { bandwidth: median_pairwise_distance(samples) }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2 = dist_sq(a, b);
        if d2 == 0.0 {
            return 1.0;
        }
        match *self {
            KernelSpec::Rbf { bandwidth } => exp(-d2 / (2.0 * bandwidth * bandwidth)),
            KernelSpec::NegDistExp { scale } => exp(-sqrt(d2) / scale),
        }
    }
}

pub fn median_pairwise_distance(samples: &Tensor) -> f64 {
    let n = samples.rows();
    let mut d: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sqrt(dist_sq(samples.row(i), samples.row(j))));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

pub fn kernel_matrix(samples: &Tensor, kernel: &KernelSpec) -> Tensor {
    let n = samples.rows();
    let mut k = Tensor::zeros(&[n, n]);
    for i in 0..n {
        k.data_mut()[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = kernel.eval(samples.row(i), samples.row(j));
            k.data_mut()[i * n + j] = v;
            k.data_mut()[j * n + i] = v;
        }
    }
    k
}

/// exp of the von Neumann entropy of K/n. Eigenvalues that are negative or
/// below round-off relative to the largest are treated as zero, and the rest
/// are renormalized to sum to one.
pub fn vendi(samples: &Tensor, kernel: &KernelSpec) -> Result<f64> {
    let n = samples.rows();
    if n == 0 {
        bail!(Domain, "VENDI needs at least one sample");
    }
    let mut k = kernel_matrix(samples, kernel);
    let inv = 1.0 / n as f64;
    k.data_mut().iter_mut().for_each(|v| *v *= inv);
    let eig = symmetric_eigenvalues(&k)?;
    Ok(exp(spectral_entropy(&eig)))
}

fn spectral_entropy(eigenvalues: &[f64]) -> f64 {
    let top = eigenvalues.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-13 * top;
    let kept: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > cutoff).collect();
    let total: f64 = kept.iter().sum();
    -kept.iter().map(|l| l / total).map(|p| if p == 1.0 { 0.0 } else { p * ln(p) }).sum::<f64>()
}

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations. Returns the
/// eigenvalues ascending and the matching unit eigenvectors as columns.
pub fn symmetric_eigen(matrix: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    jacobi(matrix, true).map(|(v, e)| (v, e.unwrap_or_else(|| Tensor::zeros(&[0, 0]))))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(matrix: &Tensor) -> Result<Vec<f64>> {
    jacobi(matrix, false).map(|(v, _)| v)
}

fn jacobi(matrix: &Tensor, want_vectors: bool) -> Result<(Vec<f64>, Option<Tensor>)> {
    if matrix.shape().len() != 2 || matrix.rows() != matrix.cols() {
        bail!(Dimension, "eigensolver needs a square matrix, got {:?}", matrix.shape());
    }
    let n = matrix.rows();
    let mut a = matrix.data().to_vec();
    for i in 0..n {
        for j in i + 1..n {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-10 {
                bail!(Domain, "matrix is not symmetric at ({i}, {j})");
            }
        }
    }
    let mut v = if want_vectors { Some(Tensor::identity(n).into_data()) } else { None };
    let frob: f64 = a.iter().map(|x| x * x).sum();
    let tol = 1e-24 * frob.max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    loop {
        let off: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| a[i * n + j] * a[i * n + j]).sum();
        if off <= tol {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical { sweeps, detail: alloc::format!("off-diagonal mass {off:e} remains") });
        }
        sweeps += 1;
        // entries this small cannot move the off-diagonal mass past the tolerance
        let negligible = tol / (n * n) as f64;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq * apq <= negligible {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut a, n, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = v.map(|v| {
        let mut sorted = Tensor::zeros(&[n, n]);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                sorted.data_mut()[k * n + col] = v[k * n + src];
            }
        }
        sorted
    });
    Ok((values, vectors))
}

/// A ← JᵀAJ for the Givens rotation in the (p, q) plane that zeroes a_pq.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (app, aqq, apq) = (a[p * n + p], a[q * n + q], a[p * n + q]);
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let (akp, akq) = (a[k * n + p], a[k * n + q]);
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        a[k * n + p] = new_p;
        a[p * n + k] = new_p;
        a[k * n + q] = new_q;
        a[q * n + k] = new_q;
    }
    a[p * n + p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    a[q * n + q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::ellipse_verifier;

    fn det_lu(m: &Tensor) -> f64 {
        let n = m.rows();
        let mut a = m.data().to_vec();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
            if p != c {
                for k in 0..n {
                    a.swap(c * n + k, p * n + k);
                }
                det = -det;
            }
            det *= a[c * n + c];
            for r in c + 1..n {
                let f = a[r * n + c] / a[c * n + c];
                for k in c..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
            }
        }
        det
    }

    fn random_symmetric(n: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let mut m = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in i..n {
                let v = rng.normal();
                m.data_mut()[i * n + j] = v;
                m.data_mut()[j * n + i] = v;
            }
        }
        m
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        assert_eq!(symmetric_eigenvalues(&Tensor::identity(4)).unwrap(), vec![1.0; 4]);
        let d = Tensor::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(symmetric_eigenvalues(&d).unwrap(), vec![1.0, 2.0, 3.0]);
        let asym = Tensor::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(symmetric_eigenvalues(&asym), Err(Error::Domain(_))));
    }

    #[test]
    fn eigen_trace_determinant_and_residuals() {
        for seed in 0..5 {
            let m = random_symmetric(8, seed);
            let (vals, vecs) = symmetric_eigen(&m).unwrap();
            let trace: f64 = (0..8).map(|i| m.get(i, i)).sum();
            assert!((vals.iter().sum::<f64>() - trace).abs() < 1e-10);
            let det = det_lu(&m);
            assert!((vals.iter().product::<f64>() - det).abs() < 1e-8 * det.abs());
            for (c, &l) in vals.iter().enumerate() {
                let r: f64 = (0..8)
                    .map(|i| {
                        let av: f64 = (0..8).map(|k| m.get(i, k) * vecs.get(k, c)).sum();
                        (av - l * vecs.get(i, c)).powi(2)
                    })
                    .sum();
                assert!(r.sqrt() < 1e-8);
            }
        }
    }

    #[test]
    fn vendi_reference_values() {
        let same = Tensor::filled(&[7, 2], 0.3);
        let k = KernelSpec::median_rbf(&same);
        assert_eq!(vendi(&same, &k).unwrap(), 1.0);

        let far = Tensor::from_rows(&[&[0.0, 0.0], &[100.0, 0.0], &[0.0, 100.0], &[100.0, 100.0]]).unwrap();
        let v = vendi(&far, &KernelSpec::Rbf { bandwidth: 1.0 }).unwrap();
        assert!((v - 4.0).abs() < 1e-12);

        // rbf value 0.5 between two points: ‖x−y‖² = 2h² ln 2
        let h = 0.7;
        let two = Tensor::from_rows(&[&[0.0], &[sqrt(2.0 * h * h * ln(2.0))]]).unwrap();
        let kernel = KernelSpec::Rbf { bandwidth: h };
        assert!((kernel.eval(two.row(0), two.row(1)) - 0.5).abs() < 1e-15);
        let expected = exp(-(0.75 * ln(0.75) + 0.25 * ln(0.25)));
        assert!((vendi(&two, &kernel).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.7548).abs() < 1e-4);
        let one = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        assert_eq!(vendi(&one, &kernel).unwrap(), 1.0);
    }

    #[test]
    fn vendi_bounds_and_normalization() {
        let mut rng = Rng::new(2);
        let mut pts = Tensor::zeros(&[40, 2]);
        rng.fill_normal(pts.data_mut());
        let kernel = KernelSpec::median_rbf(&pts);
        let mut k = kernel_matrix(&pts, &kernel);
        k.data_mut().iter_mut().for_each(|v| *v /= 40.0);
        let eig = symmetric_eigenvalues(&k).unwrap();
        assert!((eig.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let v = vendi(&pts, &kernel).unwrap();
        assert!((1.0..=40.0).contains(&v));
        let mut dup = pts.data().to_vec();
        dup.extend_from_slice(pts.row(0));
        let dup = Tensor::matrix(41, 2, dup).unwrap();
        assert!(vendi(&dup, &kernel).unwrap() <= v + 1e-9);
    }

    #[test]
    fn knn_entropy_properties() {
        let mut rng = Rng::new(9);
        let mut pts = Tensor::zeros(&[3000, 2]);
        rng.fill_normal(pts.data_mut());
        let base = knn_entropy(&pts, 5).unwrap();
        let shifted = Tensor::matrix(3000, 2, pts.data().iter().map(|v| v + 3.5).collect()).unwrap();
        assert!((knn_entropy(&shifted, 5).unwrap() - base).abs() < 1e-9);
        let scaled = Tensor::matrix(3000, 2, pts.data().iter().map(|v| v * 2.0).collect()).unwrap();
        assert!((knn_entropy(&scaled, 5).unwrap() - base - 2.0 * ln(2.0)).abs() < 1e-9);
        assert!((base - ln(2.0 * PI) - 1.0).abs() < 0.15);
        assert!(matches!(knn_entropy(&pts, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = Rng::new(4);
        let mut pts = Tensor::zeros(&[300, 3]);
        rng.fill_normal(pts.data_mut());
        let tree = KdTree::build(pts.data(), 3);
        let mut best = Vec::new();
        for i in 0..300 {
            tree.knn_excluding(i, 4, &mut best);
            let mut all: Vec<f64> = (0..300).filter(|&j| j != i).map(|j| dist_sq(pts.row(i), pts.row(j))).collect();
            all.sort_by(f64::total_cmp);
            assert_eq!(&best[..], &all[..4]);
        }
    }

    #[test]
    fn duplicates_are_jittered() {
        let mut rng = Rng::new(5);
        let mut pts = Tensor::zeros(&[200, 2]);
        pts.data_mut().iter_mut().for_each(|v| *v = rng.uniform());
        let mut data = pts.data().to_vec();
        for _ in 0..10 {
            data.extend_from_slice(&[0.5, 0.5]);
        }
        let with_dups = Tensor::matrix(210, 2, data).unwrap();
        assert!(knn_entropy(&with_dups, 5).unwrap().is_finite());
    }

    #[test]
    fn validity_values() {
        let v = ellipse_verifier(vec![0.0, 0.0], vec![2.0, 1.0], 0.3).unwrap();
        assert_eq!(validity(&Tensor::zeros(&[10, 2]), &v), 1.0);
        assert_eq!(validity(&Tensor::filled(&[10, 2], 20.0), &v), 0.0);
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((exp(log_unit_ball_volume(1)) - 2.0).abs() < 1e-14);
        assert!((exp(log_unit_ball_volume(2)) - PI).abs() < 1e-14);
        assert!((exp(log_unit_ball_volume(3)) - 4.0 * PI / 3.0).abs() < 1e-13);
    }
}
