//! Small directed-graph utilities over adjacency lists with `usize` vertices.

use std::collections::VecDeque;

/// Strongly connected components (iterative Tarjan).
///
/// Components come out in reverse topological order of the condensation; the
/// vertices inside a component are sorted ascending.
pub fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        while let Some(&(v, pos)) = call.last() {
            if pos == 0 && index[v] == UNSEEN {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(pos) {
                if let Some(top) = call.last_mut() {
                    top.1 += 1;
                }
                if index[w] == UNSEEN {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Whether a component carries at least one cycle (size > 1, or a self-loop).
pub fn has_cycle(adj: &[Vec<usize>], comp: &[usize]) -> bool {
    comp.len() > 1 || adj[comp[0]].contains(&comp[0])
}

/// BFS tree from `root`. Successors are visited in the order they appear in
/// `adj`, so sorted adjacency lists give smallest-index tie-breaking.
/// Returns `(dist, parent)`; unreachable vertices have `dist == usize::MAX`.
pub fn bfs_tree(adj: &[Vec<usize>], root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![None; n];
    let mut queue = VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                parent[w] = Some(v);
                queue.push_back(w);
            }
        }
    }
    (dist, parent)
}

/// Reverse an adjacency list; successor lists of the result are sorted.
pub fn reverse(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); adj.len()];
    for (v, succ) in adj.iter().enumerate() {
        for &w in succ {
            rev[w].push(v);
        }
    }
    rev
}

/// Greatest common divisor of all cycle lengths of a strongly connected graph.
pub fn period(adj: &[Vec<usize>]) -> usize {
    if adj.is_empty() {
        return 1;
    }
    if adj.iter().enumerate().any(|(v, s)| s.contains(&v)) {
        return 1;
    }
    let (level, _) = bfs_tree(adj, 0);
    let mut g = 0usize;
    for (u, succ) in adj.iter().enumerate() {
        if level[u] == usize::MAX {
            continue;
        }
        for &v in succ {
            if level[v] == usize::MAX {
                continue;
            }
            let diff = (level[u] + 1).abs_diff(level[v]);
            g = gcd(g, diff);
            if g == 1 {
                return 1;
            }
        }
    }
    g.max(1)
}

pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}
