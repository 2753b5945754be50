//! Normalised matching-blocks ratio over token sequences.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("similarity needs two non-empty token sequences")]
    Empty,
}

/// Longest common contiguous block in `a[alo..ahi]` and `b[blo..bhi]`,
/// earliest in `a` then earliest in `b` on ties. Returns `(i, j, size)`.
fn longest_match<T: PartialEq>(
    a: &[T],
    b: &[T],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut bi, mut bj, mut best) = (alo, blo, 0);
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let k = j - blo + 1;
            cur[k] = if a[i] == b[j] { prev[k - 1] + 1 } else { 0 };
            if cur[k] > best {
                best = cur[k];
                bi = i + 1 - best;
                bj = j + 1 - best;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.iter_mut().for_each(|v| *v = 0);
    }
    (bi, bj, best)
}

/// Matching blocks `(i, j, size)` found by recursive longest-match
/// splitting, sorted by position.
pub fn matching_blocks<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize, usize)> {
    let mut queue = vec![(0, a.len(), 0, b.len())];
    let mut blocks = Vec::new();
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        blocks.push((i, j, k));
        queue.push((alo, i, blo, j));
        queue.push((i + k, ahi, j + k, bhi));
    }
    blocks.sort_unstable();
    blocks
}

/// `2 * matched / (len a + len b)`. Block search is order dependent, so
/// the larger of the two directions is used.
pub fn similarity<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, SimilarityError> {
    if a.is_empty() || b.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let size = |x: &[T], y: &[T]| matching_blocks(x, y).iter().map(|m| m.2).sum::<usize>();
    let matched = size(a, b).max(size(b, a));
    Ok(2.0 * matched as f64 / (a.len() + b.len()) as f64)
}
