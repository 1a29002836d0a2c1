//! Causal order search on an estimated connection matrix.

use crate::model::{CausalOrder, ConnectionMatrix};

/// Largest dimension searched exhaustively; larger problems use greedy elimination.
pub const EXHAUSTIVE_MAX_VARS: usize = 8;

/// Sum of squared entries that `order` places strictly above the diagonal.
pub fn upper_mass(b: &ConnectionMatrix, order: &[usize]) -> f64 {
    let mut s = 0.0;
    for (k, &row) in order.iter().enumerate() {
        for &col in &order[k + 1..] {
            s += b.get(row, col).powi(2);
        }
    }
    s
}

/// Rearranges `p` into its lexicographic successor; false when `p` was the last.
pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Permutation that makes `b` as close to strictly lower triangular as
/// possible. Exhaustive for up to [`EXHAUSTIVE_MAX_VARS`] variables with ties
/// going to the lexicographically smallest order; greedy beyond that.
pub fn find_causal_order(b: &ConnectionMatrix) -> CausalOrder {
    let m = b.dim();
    let order = if m <= EXHAUSTIVE_MAX_VARS {
        exhaustive_order(b)
    } else {
        greedy_order(b)
    };
    CausalOrder::new(order).expect("search yields a permutation")
}

fn exhaustive_order(b: &ConnectionMatrix) -> Vec<usize> {
    let m = b.dim();
    let sq: Vec<f64> = (0..m * m).map(|t| b.get(t / m, t % m).powi(2)).collect();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = perm.clone();
    let mut best_mass = f64::INFINITY;
    loop {
        let mut mass = 0.0;
        'outer: for k in 0..m {
            let row = perm[k] * m;
            for &col in &perm[k + 1..] {
                mass += sq[row + col];
            }
            if mass >= best_mass {
                break 'outer;
            }
        }
        if mass < best_mass {
            best_mass = mass;
            best.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best
}

/// Repeatedly takes the remaining variable whose row, restricted to the
/// remaining variables, has the smallest squared norm.
fn greedy_order(b: &ConnectionMatrix) -> Vec<usize> {
    let m = b.dim();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let norm: f64 = remaining.iter().map(|&j| b.get(i, j).powi(2)).sum();
                (pos, norm)
            })
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        order.push(remaining.remove(pos));
    }
    order
}
