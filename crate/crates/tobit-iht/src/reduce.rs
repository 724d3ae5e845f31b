//! Fixed-shape pairwise (tree) reductions.
//!
//! Every data-dependent sum in this crate — objective values, gradients,
//! Hessians, gradient aggregation across machines — runs through these
//! helpers. The reduction tree's shape depends only on the number of terms,
//! so a given multiset of contributions in a given order always produces the
//! bit-identical result, regardless of threading or call site. Pairwise
//! summation also keeps rounding error at O(log n) ulps instead of O(n).

/// Terms per leaf; leaves accumulate sequentially, interior nodes add
/// pairwise. 64 keeps recursion shallow without hurting accuracy.
const LEAF: usize = 64;

/// Sum `term(i)` for `i` in `0..n` with the fixed pairwise tree.
pub(crate) fn pairwise_sum(n: usize, term: &mut impl FnMut(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, term: &mut impl FnMut(usize) -> f64) -> f64 {
        if hi - lo <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, n, term)
}

/// Sum vector-valued contributions of length `len` for `i` in `0..n`.
///
/// `add_term(i, buf)` must add term `i` into `buf` elementwise. The leaf
/// blocks and the combining tree mirror [`pairwise_sum`] exactly.
pub(crate) fn pairwise_sum_vec(
    n: usize,
    len: usize,
    add_term: &mut impl FnMut(usize, &mut [f64]),
) -> Vec<f64> {
    fn rec(
        lo: usize,
        hi: usize,
        len: usize,
        add_term: &mut impl FnMut(usize, &mut [f64]),
    ) -> Vec<f64> {
        if hi - lo <= LEAF {
            let mut acc = vec![0.0; len];
            for i in lo..hi {
                add_term(i, &mut acc);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            let mut left = rec(lo, mid, len, add_term);
            let right = rec(mid, hi, len, add_term);
            for (l, r) in left.iter_mut().zip(&right) {
                *l += r;
            }
            left
        }
    }
    rec(0, n, len, add_term)
}
