use crate::error::{Error, Result};

use super::MAX_MATCHING_SIZE;

/// Number of perfect matchings of the bipartite graph with adjacency
/// `compat`, i.e. the permanent of the 0/1 matrix, by Ryser's formula with
/// Gray-code subset enumeration.
pub fn count_perfect_matchings(compat: &[Vec<bool>]) -> Result<u64> {
    let n = compat.len();
    if n > MAX_MATCHING_SIZE {
        return Err(Error::Size(n));
    }
    if compat.iter().any(|row| row.len() != n) {
        return Err(Error::domain("compatibility matrix must be square"));
    }
    if n == 0 {
        return Ok(1);
    }

    // perm(A) = (-1)^n sum_{S} (-1)^{|S|} prod_i sum_{j in S} a_ij
    let mut row_sums = vec![0i64; n];
    let mut total: i128 = 0;
    let mut gray: u32 = 0;
    for step in 1u32..(1 << n) {
        let next = step ^ (step >> 1);
        let column = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << column) != 0;
        for (sum, row) in row_sums.iter_mut().zip(compat) {
            if row[column] {
                *sum += if added { 1 } else { -1 };
            }
        }
        gray = next;
        let product: i128 = row_sums.iter().map(|&s| s as i128).product();
        if gray.count_ones().is_multiple_of(2) {
            total += product;
        } else {
            total -= product;
        }
    }
    if n % 2 == 1 {
        total = -total;
    }
    Ok(total as u64)
}
