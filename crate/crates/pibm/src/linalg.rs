//! Determinants and permanents of small dense matrices.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Determinant of a real square matrix given row-major.
pub fn det_real(n: usize, entries: &[f64]) -> f64 {
    DMatrix::from_row_slice(n, n, entries).determinant()
}

/// Determinant of a complex square matrix given row-major.
pub fn det_complex(n: usize, entries: &[C64]) -> C64 {
    DMatrix::from_row_slice(n, n, entries).determinant()
}

/// Permanent by Ryser's inclusion-exclusion formula.
pub fn permanent(n: usize, entries: &[f64]) -> f64 {
    assert_eq!(entries.len(), n * n, "matrix must be square");
    if n == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for subset in 1u64..(1u64 << n) {
        let mut prod = 1.0;
        for i in 0..n {
            let row = &entries[i * n..(i + 1) * n];
            let s: f64 = (0..n)
                .filter(|j| subset >> j & 1 == 1)
                .map(|j| row[j])
                .sum();
            prod *= s;
        }
        let sign = if (n - subset.count_ones() as usize) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        total += sign * prod;
    }
    total
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // Next permutation in lexicographic order.
        let Some(i) = (0..n.saturating_sub(1))
            .rev()
            .find(|&i| current[i] < current[i + 1])
        else {
            break;
        };
        let j = (i + 1..n)
            .rev()
            .find(|&j| current[j] > current[i])
            .expect("successor exists");
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_permanent(n: usize, a: &[f64]) -> f64 {
        permutations(n)
            .iter()
            .map(|s| (0..n).map(|i| a[i * n + s[i]]).product::<f64>())
            .sum()
    }

    #[test]
    fn permanent_matches_brute_force() {
        let a: Vec<f64> = (0..16).map(|k| ((k * 7 % 11) as f64 - 3.0) / 4.0).collect();
        for n in 1..=4 {
            let m: Vec<f64> = (0..n * n).map(|k| a[k]).collect();
            assert!((permanent(n, &m) - brute_permanent(n, &m)).abs() < 1e-12);
        }
        assert_eq!(permanent(2, &[1.0, 2.0, 3.0, 4.0]), 10.0);
    }

    #[test]
    fn permutation_count_and_order() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p[0], vec![0, 1, 2, 3]);
        assert_eq!(p[23], vec![3, 2, 1, 0]);
    }

    #[test]
    fn determinants() {
        assert!((det_real(2, &[1.0, 2.0, 3.0, 4.0]) + 2.0).abs() < 1e-14);
        let i = C64::i();
        let d = det_complex(2, &[i, C64::new(1.0, 0.0), C64::new(2.0, 0.0), i]);
        assert!((d - C64::new(-3.0, 0.0)).norm() < 1e-14);
    }
}
