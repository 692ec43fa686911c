//! Clustering-validity scores on labelled point clouds.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense relabelling `0..k` in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

fn check<T: Scalar>(x: ArrayView2<'_, T>, labels: &[usize]) -> Result<(Vec<usize>, usize)> {
    if labels.len() != x.nrows() {
        return Err(Error::argument(format!("{} labels for {} points", labels.len(), x.nrows())));
    }
    let (dense, k) = compact(labels);
    if k < 2 {
        return Err(Error::argument("clustering scores need at least two clusters"));
    }
    Ok((dense, k))
}

fn distance<T: Scalar>(x: ArrayView2<'_, T>, i: usize, j: usize) -> T {
    x.row(i)
        .iter()
        .zip(x.row(j).iter())
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<T>()
        .sqrt()
}

/// Mean silhouette `(b − a) / max(a, b)` with Euclidean distances. Points
/// in singleton clusters score 0, as do points with `a = b = 0`.
pub fn silhouette<T: Scalar>(x: ArrayView2<'_, T>, labels: &[usize]) -> Result<T> {
    let (y, k) = check(x, labels)?;
    let n = y.len();
    let mut size = vec![0usize; k];
    for &c in &y {
        size[c] += 1;
    }
    let mut total = T::zero();
    let mut sums = vec![T::zero(); k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = T::zero());
        for j in 0..n {
            if j != i {
                sums[y[j]] += distance(x, i, j);
            }
        }
        let own = y[i];
        if size[own] < 2 {
            continue;
        }
        let a = sums[own] / T::of_usize(size[own] - 1);
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / T::of_usize(size[c]))
            .fold(T::infinity(), T::min);
        let m = a.max(b);
        if m > T::zero() {
            total += (b - a) / m;
        }
    }
    Ok(total / T::of_usize(n))
}

/// Calinski-Harabasz index `[tr(B)/(k−1)] / [tr(W)/(n−k)]`.
pub fn chi<T: Scalar>(x: ArrayView2<'_, T>, labels: &[usize]) -> Result<T> {
    let (y, k) = check(x, labels)?;
    let n = y.len();
    if n <= k {
        return Err(Error::argument("Calinski-Harabasz needs more points than clusters"));
    }
    let d = x.ncols();
    let mut size = vec![0usize; k];
    let mut centroid = vec![vec![T::zero(); d]; k];
    let mut grand = vec![T::zero(); d];
    for (i, &c) in y.iter().enumerate() {
        size[c] += 1;
        for j in 0..d {
            centroid[c][j] += x[[i, j]];
            grand[j] += x[[i, j]];
        }
    }
    for c in 0..k {
        centroid[c].iter_mut().for_each(|v| *v /= T::of_usize(size[c]));
    }
    grand.iter_mut().for_each(|v| *v /= T::of_usize(n));
    let mut between = T::zero();
    for c in 0..k {
        let d2: T = centroid[c].iter().zip(&grand).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        between += T::of_usize(size[c]) * d2;
    }
    let mut within = T::zero();
    for (i, &c) in y.iter().enumerate() {
        within += (0..d).map(|j| (x[[i, j]] - centroid[c][j]) * (x[[i, j]] - centroid[c][j])).sum::<T>();
    }
    if within <= T::zero() {
        return Err(Error::domain("all clusters have zero spread"));
    }
    Ok((between / T::of_usize(k - 1)) / (within / T::of_usize(n - k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn separated_blobs() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [10.0, 10.0], [10.1, 10.0], [10.0, 10.1]];
        let y = [0, 0, 0, 1, 1, 1];
        assert!(silhouette(x.view(), &y).unwrap() > 0.9);
        assert!(chi(x.view(), &y).unwrap() > 1000.0);
    }

    #[test]
    fn hand_example() {
        // 1-D points: cluster 0 = {0, 1}, cluster 1 = {4, 6}
        let x = array![[0.0], [1.0], [4.0], [6.0]];
        let y = [0, 0, 1, 1];
        let s = [
            (5.0 - 1.0) / 5.0, // a=1, b=(4+6)/2
            (4.0 - 1.0) / 4.0, // a=1, b=(3+5)/2
            (3.5 - 2.0) / 3.5, // a=2, b=(4+3)/2
            (5.5 - 2.0) / 5.5, // a=2, b=(6+5)/2
        ];
        let expect = s.iter().sum::<f64>() / 4.0;
        assert!((silhouette(x.view(), &y).unwrap() - expect).abs() < 1e-12);
        // grand mean 2.75; B = 2·(0.5−2.75)² + 2·(5−2.75)²; W = 0.5 + 2
        let b = 2.0 * 2.25f64.powi(2) * 2.0;
        let expect_chi = (b / 1.0) / (2.5 / 2.0);
        assert!((chi(x.view(), &y).unwrap() - expect_chi).abs() < 1e-9);
    }

    #[test]
    fn singleton_cluster_scores_zero_and_single_cluster_errors() {
        let x = array![[0.0f64], [1.0], [9.0]];
        let s = silhouette(x.view(), &[0, 0, 1]).unwrap();
        let expect = ((9.0 - 1.0) / 9.0 + (8.0 - 1.0) / 8.0) / 3.0;
        assert!((s - expect).abs() < 1e-12);
        assert!(silhouette(x.view(), &[4, 4, 4]).is_err());
        assert!(chi(Array2::<f64>::zeros((3, 1)).view(), &[0, 1, 1]).is_err());
    }
}
