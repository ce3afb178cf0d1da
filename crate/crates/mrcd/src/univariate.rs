//! Robust univariate and pairwise statistics: median, Qn scale, Kendall tau.

use crate::error::{Error, Result};

/// Asymptotic consistency constant of the Qn estimator at the normal model.
pub const QN_CONSTANT: f64 = 2.2219;

/// A nonnegative scale estimate in the units of the input variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub value: f64,
}

/// Kendall rank correlation with a degeneracy marker for constant inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallTau {
    pub value: f64,
    /// True when either input is constant, in which case `value` is 0.
    pub degenerate: bool,
}

/// Sample median; for even n, the midpoint of the two central order statistics.
pub fn median(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut v = x.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let hi = *hi;
    if n % 2 == 1 {
        Ok(hi)
    } else {
        let lo = v[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((lo + hi) / 2.0)
    }
}

/// Finite-sample correction factor c_n for the Qn estimator.
///
/// Small-sample constants for n <= 9 from Croux & Rousseeuw (1992);
/// for n > 9 the asymptotic series n/(n + 1.4) (odd) or n/(n + 3.8) (even).
fn qn_correction(n: usize) -> f64 {
    const SMALL: [f64; 10] = [
        f64::NAN,
        f64::NAN,
        0.399,
        0.994,
        0.512,
        0.844,
        0.611,
        0.857,
        0.669,
        0.872,
    ];
    if n <= 9 {
        SMALL[n]
    } else if n % 2 == 1 {
        n as f64 / (n as f64 + 1.4)
    } else {
        n as f64 / (n as f64 + 3.8)
    }
}

/// Qn scale estimator: d * c_n * k-th order statistic of the pairwise
/// absolute differences, with k = C(floor(n/2)+1, 2).
pub fn qn_scale(x: &[f64]) -> Result<ScaleEstimate> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations {
            required: 2,
            actual: n,
        });
    }
    let mut sorted = x.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let half = n / 2;
    let k = (half + 1) * half / 2; // C(half + 1, 2)
    let stat = kth_smallest_pairwise_diff(&sorted, k);
    Ok(ScaleEstimate {
        value: QN_CONSTANT * qn_correction(n) * stat,
    })
}

/// Number of pairs i < j with sorted[j] - sorted[i] <= t.
fn count_diffs_le(sorted: &[f64], t: f64) -> usize {
    let mut count = 0usize;
    let mut i = 0usize;
    for j in 0..sorted.len() {
        while sorted[j] - sorted[i] > t {
            i += 1;
        }
        count += j - i;
    }
    count
}

/// Exact k-th smallest pairwise difference of a sorted sample (1-based k),
/// by bisection over the f64 bit lattice with an O(n) counting pass.
fn kth_smallest_pairwise_diff(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    debug_assert!(k >= 1 && k <= n * (n - 1) / 2);
    if count_diffs_le(sorted, 0.0) >= k {
        return 0.0;
    }
    // Invariant: count(lo) < k <= count(hi). Nonnegative f64 order matches
    // the order of their bit patterns, so integer bisection terminates.
    let mut lo_bits = 0u64;
    let mut hi_bits = (sorted[n - 1] - sorted[0]).to_bits();
    while hi_bits - lo_bits > 1 {
        let mid_bits = lo_bits + (hi_bits - lo_bits) / 2;
        let mid = f64::from_bits(mid_bits);
        if count_diffs_le(sorted, mid) >= k {
            hi_bits = mid_bits;
        } else {
            lo_bits = mid_bits;
        }
    }
    // The k-th statistic is the smallest realized difference above lo.
    let lo = f64::from_bits(lo_bits);
    let mut best = f64::INFINITY;
    let mut i = 0usize;
    for j in 0..n {
        while sorted[j] - sorted[i] > lo {
            i += 1;
        }
        if i > 0 {
            let d = sorted[j] - sorted[i - 1];
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Kendall tau-b of two equal-length samples, computed with the
/// O(n log n) sort-and-merge scheme.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallTau> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations {
            required: 2,
            actual: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let n0 = n * (n - 1) / 2;
    // Ties in x and joint ties in (x, y).
    let mut n1 = 0usize;
    let mut n3 = 0usize;
    {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && x[idx[j]] == x[idx[i]] {
                j += 1;
            }
            let t = j - i;
            n1 += t * (t - 1) / 2;
            let mut a = i;
            while a < j {
                let mut b = a + 1;
                while b < j && y[idx[b]] == y[idx[a]] {
                    b += 1;
                }
                let u = b - a;
                n3 += u * (u - 1) / 2;
                a = b;
            }
            i = j;
        }
    }
    // Discordant pairs = inversions of y in x-order.
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0f64; n];
    let swaps = merge_count_inversions(&mut ys, &mut buf);
    // Ties in y.
    let mut n2 = 0usize;
    {
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && ys[j] == ys[i] {
                j += 1;
            }
            let t = j - i;
            n2 += t * (t - 1) / 2;
            i = j;
        }
    }
    let denom = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Ok(KendallTau {
            value: 0.0,
            degenerate: true,
        });
    }
    let numerator = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok(KendallTau {
        // The square-root denominator can round the ratio past 1 by an ulp.
        value: (numerator / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Sorts `v` while counting strict inversions (v[i] > v[j] for i < j).
fn merge_count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = v.split_at_mut(mid);
    let mut inv = merge_count_inversions(left, buf) + merge_count_inversions(right, buf);
    let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            buf[k] = right[j];
            inv += (left.len() - i) as u64;
            j += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    inv
}
