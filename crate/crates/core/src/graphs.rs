//! Undirected graphs and vertex-separator search.
//!
//! Minimum vertex separators are found with node-splitting max-flow (Menger's
//! theorem). Among all minimum separators the lexicographically smallest sorted
//! node set is returned, so certificates are reproducible.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    p: usize,
    adj: Vec<BTreeSet<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    p: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(repr: GraphRepr) -> Result<Self> {
        Graph::from_edges(repr.p, repr.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            p: g.p,
            edges: g.edges().into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

impl Graph {
    pub fn empty(p: usize) -> Self {
        Graph {
            p,
            adj: vec![BTreeSet::new(); p],
        }
    }

    pub fn from_edges<I>(p: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(p);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn complete(p: usize) -> Self {
        let mut g = Graph::empty(p);
        for a in 0..p {
            for b in a + 1..p {
                g.adj[a].insert(b);
                g.adj[b].insert(a);
            }
        }
        g
    }

    pub fn num_nodes(&self) -> usize {
        self.p
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::InvalidConfig(format!("self-loop at node {a}")));
        }
        if a >= self.p || b >= self.p {
            return Err(Error::OutOfRange(format!(
                "edge ({a},{b}) in graph with {} nodes",
                self.p
            )));
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a);
        Ok(())
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        if a < self.p && b < self.p {
            self.adj[a].remove(&b);
            self.adj[b].remove(&a);
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.p && self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Edges as sorted `(a, b)` pairs with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (a, nbrs) in self.adj.iter().enumerate() {
            for &b in nbrs.range(a + 1..) {
                out.push((a, b));
            }
        }
        out
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.p).filter(|&v| self.adj[v].is_empty()).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    /// True when the graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let mut seen = vec![false; self.p];
        let mut components = 0;
        for s in 0..self.p {
            if seen[s] {
                continue;
            }
            components += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                for &w in &self.adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        self.num_edges() + components == self.p
    }

    /// Graph on the same node set keeping only edges with both endpoints in `keep`.
    pub fn restrict_edges(&self, keep: &BTreeSet<usize>) -> Graph {
        let mut g = Graph::empty(self.p);
        for (a, b) in self.edges() {
            if keep.contains(&a) && keep.contains(&b) {
                g.adj[a].insert(b);
                g.adj[b].insert(a);
            }
        }
        g
    }

    /// Graphviz DOT rendering, nodes labelled by index.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "graph {name} {{");
        for v in 0..self.p {
            let _ = writeln!(s, "  {v};");
        }
        for (a, b) in self.edges() {
            let _ = writeln!(s, "  {a} -- {b};");
        }
        s.push_str("}\n");
        s
    }
}

pub fn union_graph(graphs: &[Graph]) -> Result<Graph> {
    let p = match graphs.first() {
        Some(g) => g.p,
        None => return Err(Error::InvalidConfig("union of zero graphs".into())),
    };
    let mut out = Graph::empty(p);
    for g in graphs {
        if g.p != p {
            return Err(Error::InvalidConfig(format!(
                "graphs have mismatched node counts {} and {}",
                p, g.p
            )));
        }
        for (a, b) in g.edges() {
            out.add_edge(a, b)?;
        }
    }
    Ok(out)
}

/// Nodes within graph distance `gamma` of `v` (including `v`).
pub fn ball(g: &Graph, v: usize, gamma: usize) -> BTreeSet<usize> {
    let mut dist = vec![usize::MAX; g.p];
    let mut out = BTreeSet::new();
    let mut queue = VecDeque::new();
    dist[v] = 0;
    queue.push_back(v);
    while let Some(x) = queue.pop_front() {
        out.insert(x);
        if dist[x] == gamma {
            continue;
        }
        for &y in &g.adj[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparatorKind {
    Exact,
    Local { gamma: usize },
}

/// A vertex set whose removal disconnects `side_a` from `side_b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatorCertificate {
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
    pub separator: Vec<usize>,
    pub kind: SeparatorKind,
}

/// Reachability check: does removing `s` leave no path from `a` to `b`?
pub fn separates(g: &Graph, a: &[usize], b: &[usize], s: &[usize]) -> bool {
    let mut blocked = vec![false; g.p];
    for &x in s {
        blocked[x] = true;
    }
    let target: BTreeSet<usize> = b.iter().copied().collect();
    let mut seen = vec![false; g.p];
    let mut stack: Vec<usize> = Vec::new();
    for &x in a {
        if !blocked[x] && !seen[x] {
            seen[x] = true;
            stack.push(x);
        }
    }
    while let Some(x) = stack.pop() {
        if target.contains(&x) {
            return false;
        }
        for &y in &g.adj[x] {
            if !blocked[y] && !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    true
}

fn check_sides(g: &Graph, a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidConfig("separator sides must be nonempty".into()));
    }
    for &x in a.iter().chain(b) {
        if x >= g.p {
            return Err(Error::OutOfRange(format!("node {x} in graph with {} nodes", g.p)));
        }
    }
    for &x in a {
        if b.contains(&x) {
            return Err(Error::InvalidConfig(format!("node {x} on both sides")));
        }
        if b.iter().any(|&y| g.has_edge(x, y)) {
            return Err(Error::Adjacent);
        }
    }
    Ok(())
}

/// Minimum-cardinality vertex separator between `a` and `b`, or `None` when
/// the minimum exceeds `cap`. Ties are broken towards the lexicographically
/// smallest sorted node set.
pub fn min_vertex_separator(
    g: &Graph,
    a: &[usize],
    b: &[usize],
    cap: usize,
) -> Result<Option<SeparatorCertificate>> {
    check_sides(g, a, b)?;
    let mut terminal = vec![false; g.p];
    for &x in a.iter().chain(b) {
        terminal[x] = true;
    }
    let mut removed = vec![false; g.p];
    let mut remaining = vertex_cut_size(g, a, b, &terminal, &removed, cap + 1);
    if remaining > cap {
        return Ok(None);
    }
    let mut separator = Vec::with_capacity(remaining);
    for x in 0..g.p {
        if remaining == 0 {
            break;
        }
        if terminal[x] {
            continue;
        }
        removed[x] = true;
        if vertex_cut_size(g, a, b, &terminal, &removed, remaining) + 1 == remaining {
            separator.push(x);
            remaining -= 1;
        } else {
            removed[x] = false;
        }
    }
    debug_assert!(separates(g, a, b, &separator));
    let mut side_a = a.to_vec();
    let mut side_b = b.to_vec();
    side_a.sort_unstable();
    side_b.sort_unstable();
    Ok(Some(SeparatorCertificate {
        side_a,
        side_b,
        separator,
        kind: SeparatorKind::Exact,
    }))
}

/// Minimum separator of `u` and `v` inside the ball subgraph around `u`
/// (edges leaving the radius-`gamma` ball dropped, all nodes retained).
pub fn local_separator(
    g: &Graph,
    u: usize,
    v: usize,
    gamma: usize,
    cap: usize,
) -> Result<Option<SeparatorCertificate>> {
    if g.has_edge(u, v) {
        return Err(Error::Adjacent);
    }
    let local = g.restrict_edges(&ball(g, u, gamma));
    Ok(min_vertex_separator(&local, &[u], &[v], cap)?.map(|mut cert| {
        cert.kind = SeparatorKind::Local { gamma };
        cert
    }))
}

/// Size of the minimum vertex cut between `a` and `b` after deleting
/// `removed`, saturating at `limit`.
fn vertex_cut_size(
    g: &Graph,
    a: &[usize],
    b: &[usize],
    terminal: &[bool],
    removed: &[bool],
    limit: usize,
) -> usize {
    // node x -> (2x in, 2x+1 out); source = 2p, sink = 2p+1
    let n = 2 * g.p + 2;
    let source = 2 * g.p;
    let sink = source + 1;
    let inf = i32::MAX / 4;
    let mut cap = vec![vec![0i32; n]; n];
    for x in 0..g.p {
        if removed[x] {
            continue;
        }
        cap[2 * x][2 * x + 1] = if terminal[x] { inf } else { 1 };
        for &y in &g.adj[x] {
            if !removed[y] {
                cap[2 * x + 1][2 * y] = inf;
            }
        }
    }
    for &x in a {
        cap[source][2 * x] = inf;
    }
    for &x in b {
        cap[2 * x + 1][sink] = inf;
    }

    let mut flow = 0;
    let mut parent = vec![usize::MAX; n];
    while flow < limit {
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(x) = queue.pop_front() {
            if x == sink {
                break;
            }
            for y in 0..n {
                if parent[y] == usize::MAX && cap[x][y] > 0 {
                    parent[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck = inf;
        let mut y = sink;
        while y != source {
            let x = parent[y];
            bottleneck = bottleneck.min(cap[x][y]);
            y = x;
        }
        if bottleneck >= inf {
            // a path of terminal-only nodes: sides are adjacent
            return limit;
        }
        let mut y = sink;
        while y != source {
            let x = parent[y];
            cap[x][y] -= bottleneck;
            cap[y][x] += bottleneck;
            y = x;
        }
        flow += bottleneck as usize;
    }
    flow.min(limit)
}
