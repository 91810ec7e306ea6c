use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};

/// Number of labeled acyclic digraphs on `n` nodes with at most `m` edges
/// (Rodionov's recurrence, with `A(0, ·) = A(1, ·) = 1`).
pub fn count_dags(n: usize, m: usize) -> BigUint {
    let mut memo = HashMap::new();
    let v = count(n, m, &mut memo);
    v.to_biguint().expect("DAG counts are non-negative")
}

fn count(n: usize, m: usize, memo: &mut HashMap<(usize, usize), BigInt>) -> BigInt {
    if n <= 1 {
        return BigInt::from(1);
    }
    if let Some(v) = memo.get(&(n, m)) {
        return v.clone();
    }
    let mut total = BigInt::from(0);
    for i in 1..=n {
        let outer = binomial(n, i);
        let cross = i * (n - i);
        for j in 0..=m {
            let edges = m - j;
            if edges > cross {
                continue;
            }
            let term = &outer * binomial(cross, edges) * count(n - i, j, memo);
            if i % 2 == 1 {
                total += term;
            } else {
                total -= term;
            }
        }
    }
    memo.insert((n, m), total.clone());
    total
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::from(1);
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Enumerates all edge subsets of the complete digraph on `n` labeled
    /// nodes and counts the acyclic ones with at most `m` edges.
    fn brute_force(n: usize, m: usize) -> u64 {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
        let mut total = 0;
        for mask in 0u64..(1 << pairs.len()) {
            if mask.count_ones() as usize > m {
                continue;
            }
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, e)| *e).collect();
            let mut indeg = vec![0; n];
            for &(_, b) in &edges {
                indeg[b] += 1;
            }
            let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
            let mut seen = 0;
            while let Some(v) = ready.pop() {
                seen += 1;
                for &(a, b) in &edges {
                    if a == v {
                        indeg[b] -= 1;
                        if indeg[b] == 0 {
                            ready.push(b);
                        }
                    }
                }
            }
            if seen == n {
                total += 1;
            }
        }
        total
    }

    #[test]
    fn matches_enumeration() {
        for n in 1..=4 {
            for m in 0..=12 {
                assert_eq!(count_dags(n, m), BigUint::from(brute_force(n, m)), "A({n},{m})");
            }
        }
    }

    #[test]
    fn anchors() {
        for m in 0..20 {
            assert_eq!(count_dags(1, m), BigUint::from(1u32));
        }
        assert_eq!(count_dags(2, 1), BigUint::from(3u32));
        assert_eq!(count_dags(3, 6), BigUint::from(25u32));
        // all labeled DAGs on 5 nodes (OEIS A003024)
        assert_eq!(count_dags(5, 20), BigUint::from(29281u32));
    }
}
