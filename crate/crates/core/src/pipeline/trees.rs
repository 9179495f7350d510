//! Mutual information and maximum-weight spanning trees.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// `I(X;Y)` in nats for a joint table, renormalised; `0 log 0 = 0`.
pub fn mutual_information(joint: &DMatrix<f64>) -> f64 {
    let total: f64 = joint.iter().map(|x| x.max(0.0)).sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let p = joint.map(|x| x.max(0.0) / total);
    let row: Vec<f64> = (0..p.nrows()).map(|i| p.row(i).sum()).collect();
    let col: Vec<f64> = (0..p.ncols()).map(|j| p.column(j).sum()).collect();
    let h = |v: &mut dyn Iterator<Item = f64>| -> f64 {
        v.filter(|&x| x > 0.0).map(|x| -x * x.ln()).sum()
    };
    let hx = h(&mut row.iter().copied());
    let hy = h(&mut col.iter().copied());
    let hxy = h(&mut p.iter().copied());
    (hx + hy - hxy).max(0.0)
}

/// Pairwise mutual information over a node set, with an availability mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutualInformationTable {
    pub nodes: Vec<usize>,
    #[serde(with = "entries")]
    values: BTreeMap<(usize, usize), f64>,
}

/// Serialized as a list of `[a, b, mi]` triples.
mod entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<(usize, usize), f64>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().map(|(&(a, b), &w)| (a, b, w)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), f64>, D::Error> {
        let list = Vec::<(usize, usize, f64)>::deserialize(d)?;
        Ok(list.into_iter().map(|(a, b, w)| ((a.min(b), a.max(b)), w)).collect())
    }
}

impl MutualInformationTable {
    pub fn new(nodes: Vec<usize>) -> Self {
        MutualInformationTable {
            nodes,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, a: usize, b: usize, mi: f64) {
        self.values.insert((a.min(b), a.max(b)), mi);
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn available(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.values.iter().map(|(&e, &w)| (e, w))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub edges: Vec<(usize, usize)>,
    /// false when the availability graph was disconnected and a forest was returned
    pub complete: bool,
    /// an accepted edge tied in weight with a rejected one
    pub ties: bool,
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Kruskal on the available pairs (optionally restricted to `candidates`),
/// heaviest first, ties broken by lexicographic edge order.
pub fn chow_liu(mi: &MutualInformationTable, candidates: Option<&[(usize, usize)]>) -> SpanningTree {
    let mut edges: Vec<((usize, usize), f64)> = mi
        .available()
        .filter(|(e, _)| mi.nodes.contains(&e.0) && mi.nodes.contains(&e.1))
        .filter(|(e, _)| candidates.is_none_or(|c| c.iter().any(|&(a, b)| (a.min(b), a.max(b)) == *e)))
        .collect();
    edges.sort_by(|(ea, wa), (eb, wb)| wb.total_cmp(wa).then(ea.cmp(eb)));
    let max_node = mi.nodes.iter().copied().max().map_or(0, |x| x + 1);
    let mut parent: Vec<usize> = (0..max_node).collect();
    let mut chosen = Vec::new();
    let mut rejected = Vec::new();
    for &((a, b), w) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            rejected.push(w);
        } else {
            parent[ra] = rb;
            chosen.push(((a, b), w));
        }
    }
    let ties = chosen
        .iter()
        .any(|(_, w)| rejected.iter().any(|x| (x - w).abs() <= 1e-12 * w.abs().max(1.0)));
    let complete = mi.nodes.len() <= 1 || chosen.len() + 1 == mi.nodes.len();
    let mut tree: Vec<(usize, usize)> = chosen.into_iter().map(|(e, _)| e).collect();
    tree.sort();
    SpanningTree {
        edges: tree,
        complete,
        ties,
    }
}

fn tree_path(edges: &[(usize, usize)], a: usize, b: usize) -> Option<Vec<(usize, usize)>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(x, y) in edges {
        adj.entry(x).or_default().push(y);
        adj.entry(y).or_default().push(x);
    }
    let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([a]);
    prev.insert(a, a);
    while let Some(x) = queue.pop_front() {
        if x == b {
            break;
        }
        for &y in adj.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
            if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(y) {
                e.insert(x);
                queue.push_back(y);
            }
        }
    }
    prev.get(&b)?;
    let mut path = Vec::new();
    let mut cur = b;
    while cur != a {
        let p = prev[&cur];
        path.push((p.min(cur), p.max(cur)));
        cur = p;
    }
    Some(path)
}

/// `min` over tree non-edges `(a,b)` and path edges `(u,v)` of `I(u,v) − I(a,b)`;
/// `+∞` when the tree has no non-edges.
pub fn tree_separation_margin(tree: &[(usize, usize)], mi: &MutualInformationTable) -> f64 {
    let mut margin = f64::INFINITY;
    for (i, &a) in mi.nodes.iter().enumerate() {
        for &b in &mi.nodes[i + 1..] {
            let e = (a.min(b), a.max(b));
            if tree.contains(&e) {
                continue;
            }
            let (Some(iab), Some(path)) = (mi.get(a, b), tree_path(tree, a, b)) else {
                continue;
            };
            for (u, v) in path {
                if let Some(iuv) = mi.get(u, v) {
                    margin = margin.min(iuv - iab);
                }
            }
        }
    }
    margin
}
