//! Greedy graph growing.
//!
//! Parts are grown one after the other by breadth-first search from a seed
//! vertex. The seed is the unassigned vertex with the fewest unassigned
//! neighbours (lowest index on ties), which starts each part on the
//! periphery of what is left. A part whose frontier runs dry before reaching
//! its target size is re-seeded the same way, so every vertex is assigned.

use std::collections::VecDeque;

use super::PartitionError;

/// Target part sizes: `n / p` each, remainder spread over the first parts.
pub fn balanced_sizes(n: usize, p: usize) -> Vec<usize> {
    (0..p).map(|k| n / p + usize::from(k < n % p)).collect()
}

/// Assigns every vertex of `adjacency` to one of `p` parts.
///
/// `adjacency[v]` lists the neighbours of `v` and must be symmetric.
pub fn greedy_graph_growing(adjacency: &[Vec<usize>], p: usize) -> Result<Vec<usize>, PartitionError> {
    let n = adjacency.len();
    if p == 0 {
        return Err(PartitionError::ZeroParts);
    }
    if p > n {
        return Err(PartitionError::TooManyParts { parts: p, available: n });
    }
    let mut part = vec![usize::MAX; n];
    let mut free_degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let assign = |v: usize, k: usize, part: &mut Vec<usize>, free_degree: &mut Vec<usize>| {
        part[v] = k;
        for &w in &adjacency[v] {
            free_degree[w] = free_degree[w].saturating_sub(1);
        }
    };

    for (k, target) in balanced_sizes(n, p).into_iter().enumerate() {
        let mut count = 0;
        let mut queue = VecDeque::new();
        while count < target {
            let Some(v) = queue.pop_front() else {
                let seed = (0..n)
                    .filter(|&v| part[v] == usize::MAX)
                    .min_by_key(|&v| (free_degree[v], v))
                    .expect("unassigned vertices remain while a target is unmet");
                assign(seed, k, &mut part, &mut free_degree);
                count += 1;
                queue.push_back(seed);
                continue;
            };
            for &w in &adjacency[v] {
                if count == target {
                    break;
                }
                if part[w] == usize::MAX {
                    assign(w, k, &mut part, &mut free_degree);
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(balanced_sizes(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(balanced_sizes(5, 1), vec![5]);
    }

    #[test]
    fn path_is_split_into_contiguous_runs() {
        assert_eq!(greedy_graph_growing(&path(4), 2).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(greedy_graph_growing(&path(7), 3).unwrap(), vec![0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn disconnected_graph_is_fully_assigned() {
        let adj = vec![vec![1], vec![0], vec![], vec![4], vec![3]];
        let part = greedy_graph_growing(&adj, 2).unwrap();
        assert!(part.iter().all(|&k| k < 2));
        assert_eq!(part.iter().filter(|&&k| k == 0).count(), 3);
    }

    #[test]
    fn errors() {
        assert_eq!(greedy_graph_growing(&path(3), 0), Err(PartitionError::ZeroParts));
        assert!(matches!(
            greedy_graph_growing(&path(3), 4),
            Err(PartitionError::TooManyParts { parts: 4, available: 3 })
        ));
    }
}
