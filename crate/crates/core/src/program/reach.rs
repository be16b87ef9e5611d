use super::{BranchAnnotation, BranchId};

/// For every branch, the sum of `local_labels` over all branches reachable
/// from it in the successor graph, the branch itself included.
///
/// Reachable sets are propagated as bitsets in DFS post-order until a
/// fixpoint, so joins are not double counted and cycles are handled.
pub fn reachable_label_table(branches: &[BranchAnnotation], successors: &[Vec<BranchId>]) -> Vec<u32> {
    let n = branches.len();
    let words = n.div_ceil(64);
    let mut reach = vec![0u64; n * words];
    for b in 0..n {
        reach[b * words + b / 64] |= 1 << (b % 64);
    }

    let order = post_order(successors);
    let mut scratch = vec![0u64; words];
    loop {
        let mut changed = false;
        for &b in &order {
            scratch.copy_from_slice(&reach[b * words..(b + 1) * words]);
            for s in &successors[b] {
                let s = s.index();
                let src = &reach[s * words..(s + 1) * words];
                for (d, w) in scratch.iter_mut().zip(src) {
                    *d |= *w;
                }
            }
            let row = &mut reach[b * words..(b + 1) * words];
            if row != scratch.as_slice() {
                row.copy_from_slice(&scratch);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    (0..n)
        .map(|b| {
            let row = &reach[b * words..(b + 1) * words];
            let mut total = 0u32;
            for (wi, &word) in row.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let bit = bits.trailing_zeros() as usize;
                    total += branches[wi * 64 + bit].local_labels;
                    bits &= bits - 1;
                }
            }
            total
        })
        .collect()
}

fn post_order(successors: &[Vec<BranchId>]) -> Vec<usize> {
    let n = successors.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push((start, 0));
        while let Some((node, next)) = stack.last_mut() {
            if let Some(s) = successors[*node].get(*next) {
                *next += 1;
                let s = s.index();
                if !visited[s] {
                    visited[s] = true;
                    stack.push((s, 0));
                }
            } else {
                order.push(*node);
                stack.pop();
            }
        }
    }
    order
}
