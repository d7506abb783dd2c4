use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::WeightMatrix;
use crate::error::{Error, Result};

/// A strongly connected set of flattened indices. `closed` means no positive
/// weight points from inside the set to outside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub indices: Vec<usize>,
    pub closed: bool,
}

/// Graph with an edge `r -> c` for every positive `w_rc`.
pub(crate) fn adjacency(w: &WeightMatrix) -> Vec<Vec<usize>> {
    (0..w.dim())
        .map(|r| w.row(r).filter(|&(_, v)| v > 0.0).map(|(c, _)| c).collect())
        .collect()
}

pub(crate) fn components_of(adj: &[Vec<usize>]) -> Vec<Component> {
    let mut g = DiGraph::<(), ()>::with_capacity(adj.len(), 0);
    let nodes: Vec<NodeIndex> = (0..adj.len()).map(|_| g.add_node(())).collect();
    for (r, cs) in adj.iter().enumerate() {
        for &c in cs {
            g.add_edge(nodes[r], nodes[c], ());
        }
    }
    let mut label = vec![0usize; adj.len()];
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|scc| {
            let mut v: Vec<usize> = scc.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    for (id, comp) in comps.iter().enumerate() {
        for &i in comp {
            label[i] = id;
        }
    }
    comps
        .into_iter()
        .enumerate()
        .map(|(id, indices)| {
            let closed = indices
                .iter()
                .all(|&r| adj[r].iter().all(|&c| label[c] == id));
            Component { indices, closed }
        })
        .collect()
}

/// Partitions the `N^2` indices into strongly connected components, ordered
/// by smallest member.
pub fn strongly_connected_closed_groups(w: &WeightMatrix) -> Vec<Component> {
    components_of(&adjacency(w))
}

/// BFS levels from `root` using only edges that stay inside `member`.
fn levels(adj: &[Vec<usize>], member: &[bool], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let next = level[u].map(|l| l + 1);
        for &v in &adj[u] {
            if member[v] && level[v].is_none() {
                level[v] = next;
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Period of a strongly connected index set: the gcd of its directed cycle
/// lengths, computed as the gcd of `level(u) + 1 - level(v)` over internal
/// edges `u -> v` of a BFS tree. `None` when the set has no cycle (a single
/// index without a self-loop).
pub(crate) fn period_in(adj: &[Vec<usize>], component: &[usize]) -> Result<Option<usize>> {
    let Some(&root) = component.first() else {
        return Err(Error::Precondition("empty component".into()));
    };
    let mut member = vec![false; adj.len()];
    for &i in component {
        if i >= adj.len() {
            return Err(Error::DimensionMismatch {
                expected: adj.len(),
                found: i + 1,
            });
        }
        member[i] = true;
    }
    let forward = levels(adj, &member, root);
    let mut reverse_adj = vec![Vec::new(); adj.len()];
    for &u in component {
        for &v in &adj[u] {
            if member[v] {
                reverse_adj[v].push(u);
            }
        }
    }
    let backward = levels(&reverse_adj, &member, root);
    if component
        .iter()
        .any(|&i| forward[i].is_none() || backward[i].is_none())
    {
        return Err(Error::Precondition(
            "index set is not strongly connected".into(),
        ));
    }
    let mut g = 0;
    for &u in component {
        let lu = forward[u].expect("reachable");
        for &v in adj[u].iter().filter(|&&v| member[v]) {
            let lv = forward[v].expect("reachable");
            g = gcd(g, lu + 1 - lv);
        }
    }
    Ok((g > 0).then_some(g))
}

pub fn period(component: &[usize], w: &WeightMatrix) -> Result<Option<usize>> {
    period_in(&adjacency(w), component)
}

/// True iff the cycle lengths inside `component` have gcd 1.
pub fn is_aperiodic(component: &[usize], w: &WeightMatrix) -> Result<bool> {
    Ok(period(component, w)? == Some(1))
}
