//! Cosine similarity and one-to-one association of detections to containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent partial sums in [`dot`]; enough to hide add latency.
const LANES: usize = 16;

/// Dot product with independent accumulators so the loop vectorizes.
/// Summation order is fixed, so results are reproducible and identical on
/// every instruction set.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { dot_avx2(a, b) };
    }
    dot_kernel(a, b)
}

/// Same operations as [`dot_kernel`], compiled with wider vectors. No fused
/// multiply-add, so every lane rounds exactly as the portable path does.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f64], b: &[f64]) -> f64 {
    dot_kernel(a, b)
}

#[inline(always)]
fn dot_kernel(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    // pairwise fold in a fixed order
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for k in 0..width {
            acc[k] += acc[k + width];
        }
    }
    acc[0] + tail
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(unit_cosine(a, b))
}

#[inline]
pub(crate) fn unit_cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// Dense row-major matrix of detection (row) × container (column) similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_features(rows: &[&[f64]], cols: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for r in rows {
            for c in cols {
                data.push(unit_cosine(r, c));
            }
        }
        Self { rows: rows.len(), cols: cols.len(), data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged similarity matrix");
        Self { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// How detections are paired with containers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    /// Highest similarity first, each side used at most once.
    #[default]
    Greedy,
    /// Maximum total similarity over admissible pairs.
    Optimal,
}

/// Greedy one-to-one matching.
///
/// Candidates with similarity `>= tau` are taken in descending similarity;
/// ties go to the lower column key, then the lower row key. Returns
/// `(row, col)` index pairs in selection order.
pub fn greedy_assign(m: &SimilarityMatrix, tau: f64, row_keys: &[u64], col_keys: &[u64]) -> Vec<(usize, usize)> {
    debug_assert_eq!(row_keys.len(), m.rows);
    debug_assert_eq!(col_keys.len(), m.cols);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..m.rows {
        for c in 0..m.cols {
            let s = m.get(r, c);
            if s >= tau {
                candidates.push((s, r, c));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(col_keys[a.2].cmp(&col_keys[b.2]))
            .then(row_keys[a.1].cmp(&row_keys[b.1]))
    });
    let mut row_used = vec![false; m.rows];
    let mut col_used = vec![false; m.cols];
    let mut out = Vec::new();
    for (_, r, c) in candidates {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            out.push((r, c));
        }
    }
    out
}

/// Maximum-weight one-to-one matching restricted to pairs with similarity
/// `>= tau` (Hungarian method on the padded square matrix). Pairs are
/// returned sorted by row.
pub fn optimal_assign(m: &SimilarityMatrix, tau: f64) -> Vec<(usize, usize)> {
    let n = m.rows.max(m.cols);
    if n == 0 {
        return Vec::new();
    }
    // Inadmissible and padding cells weigh 0; an admissible pair with
    // non-positive similarity can only tie with leaving both sides free.
    let weight = |r: usize, c: usize| -> f64 {
        if r < m.rows && c < m.cols {
            let s = m.get(r, c);
            if s >= tau {
                return s;
            }
        }
        0.0
    };

    // Minimise cost = -weight with row/column potentials (1-indexed, column 0
    // is the virtual start).
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let (r, c) = (p[j] - 1, j - 1);
            (r < m.rows && c < m.cols && m.get(r, c) >= tau && m.get(r, c) > 0.0).then_some((r, c))
        })
        .collect();
    out.sort_unstable();
    out
}
