//! Directed road networks, origin-destination pairs and their simple paths.
//!
//! Edges and paths carry stable integer indices. Paths of OD pair `i` are
//! stored as edge-index sequences in traversal order and sorted
//! lexicographically, so every run sees the same ordering. Downstream
//! vectors (allocations, losses) concatenate the per-OD path blocks in OD
//! order; [`PathSet::block`] gives the index range of one block.

use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of simple paths enumerated per OD pair.
pub const DEFAULT_PATH_CAP: usize = 10_000;

/// JSON form of a network: `{"nodes":[...], "edges":[[u,v],...], "od_pairs":[[o,d],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub od_pairs: Vec<(String, String)>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A validated directed graph with OD pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_names: Vec<String>,
    /// `(tail, head)` node indices, indexed by edge id.
    edges: Vec<(usize, usize)>,
    od_pairs: Vec<(usize, usize)>,
    /// Outgoing edge ids per node, ascending.
    out_edges: Vec<Vec<usize>>,
}

impl Network {
    /// Validates `spec` and builds the network.
    ///
    /// Fails on duplicate node names, edges touching unknown nodes,
    /// self-loops, and OD pairs whose destination is unreachable.
    pub fn build(spec: &NetworkSpec) -> Result<Self> {
        let mut index = HashMap::with_capacity(spec.nodes.len());
        for (i, name) in spec.nodes.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::DuplicateNode(name.clone()));
            }
        }
        let lookup = |name: &str, on_missing: &dyn Fn() -> Error| {
            index.get(name).copied().ok_or_else(on_missing)
        };

        let mut edges = Vec::with_capacity(spec.edges.len());
        let mut out_edges = vec![Vec::new(); spec.nodes.len()];
        for (e, (u, v)) in spec.edges.iter().enumerate() {
            let tail = lookup(u, &|| Error::DanglingEdge {
                index: e,
                node: u.clone(),
            })?;
            let head = lookup(v, &|| Error::DanglingEdge {
                index: e,
                node: v.clone(),
            })?;
            if tail == head {
                return Err(Error::SelfLoop {
                    index: e,
                    node: u.clone(),
                });
            }
            edges.push((tail, head));
            out_edges[tail].push(e);
        }

        let mut od_pairs = Vec::with_capacity(spec.od_pairs.len());
        for (i, (o, d)) in spec.od_pairs.iter().enumerate() {
            let origin = lookup(o, &|| Error::UnknownOdNode {
                index: i,
                node: o.clone(),
            })?;
            let destination = lookup(d, &|| Error::UnknownOdNode {
                index: i,
                node: d.clone(),
            })?;
            od_pairs.push((origin, destination));
        }
        if od_pairs.is_empty() {
            return Err(Error::InvalidArgument("network has no OD pairs".into()));
        }

        let net = Network {
            node_names: spec.nodes.clone(),
            edges,
            od_pairs,
            out_edges,
        };
        for (i, &(o, d)) in net.od_pairs.iter().enumerate() {
            if o == d || !net.reachable(o, d) {
                return Err(Error::UnreachableOd {
                    index: i,
                    origin: net.node_names[o].clone(),
                    destination: net.node_names[d].clone(),
                });
            }
        }
        Ok(net)
    }

    fn reachable(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.node_names.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            if u == to {
                return true;
            }
            for &e in &self.out_edges[u] {
                let v = self.edges[e].1;
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        false
    }

    pub fn num_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_od(&self) -> usize {
        self.od_pairs.len()
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.node_names[node]
    }

    /// `(tail, head)` of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn od_pair(&self, i: usize) -> (usize, usize) {
        self.od_pairs[i]
    }

    /// Human-readable `tail -> head` label for edge `e`.
    pub fn edge_label(&self, e: usize) -> String {
        let (u, v) = self.edges[e];
        format!("{} -> {}", self.node_names[u], self.node_names[v])
    }
}

/// Dense 0/1 edge-path incidence matrix, `|E|` rows by `|P_i|` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Incidence {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, edge: usize, path: usize) -> f64 {
        self.data[edge * self.cols + path]
    }

    /// `M v` for a path-indexed `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(v).map(|(m, x)| m * x).sum()
            })
            .collect()
    }

    /// `Mᵀ w` for an edge-indexed `w`.
    pub fn tr_mul_vec(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, wr) in w.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, m) in out.iter_mut().zip(row) {
                *o += m * wr;
            }
        }
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.tr_mul_vec(&vec![1.0; self.rows])
    }
}

/// Enumerated simple paths per OD pair with their incidence matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    num_edges: usize,
    paths: Vec<Vec<Vec<usize>>>,
    offsets: Vec<usize>,
    incidence: Vec<Incidence>,
}

impl PathSet {
    pub fn num_od(&self) -> usize {
        self.paths.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Paths of OD pair `i`, each an edge-index sequence in traversal order.
    pub fn paths(&self, i: usize) -> &[Vec<usize>] {
        &self.paths[i]
    }

    pub fn block_len(&self, i: usize) -> usize {
        self.paths[i].len()
    }

    /// Index range of OD block `i` in concatenated path vectors.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Total number of paths, `Σ_i |P_i|`.
    pub fn total_paths(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn incidence(&self, i: usize) -> &Incidence {
        &self.incidence[i]
    }

    /// Iterates over `(od, global path index, edges)`.
    pub fn iter_paths(&self) -> impl Iterator<Item = (usize, usize, &[usize])> + '_ {
        self.paths.iter().enumerate().flat_map(move |(i, ps)| {
            let base = self.offsets[i];
            ps.iter()
                .enumerate()
                .map(move |(j, p)| (i, base + j, p.as_slice()))
        })
    }
}

/// Enumerates all simple paths with the default per-OD cap.
pub fn enumerate_paths(net: &Network) -> Result<PathSet> {
    enumerate_paths_capped(net, DEFAULT_PATH_CAP)
}

/// Exhaustive depth-first enumeration of simple `o_i -> d_i` paths.
///
/// Returns [`Error::PathCapExceeded`] as soon as an OD pair produces more
/// than `cap` paths; the result is never silently truncated.
pub fn enumerate_paths_capped(net: &Network, cap: usize) -> Result<PathSet> {
    let mut paths = Vec::with_capacity(net.num_od());
    for (i, &(o, d)) in net.od_pairs.iter().enumerate() {
        let mut found = Vec::new();
        let mut on_path = vec![false; net.num_nodes()];
        let mut stack = Vec::new();
        on_path[o] = true;
        dfs(net, o, d, &mut on_path, &mut stack, &mut found, cap)
            .map_err(|()| Error::PathCapExceeded { index: i, cap })?;
        if found.is_empty() {
            return Err(Error::UnreachableOd {
                index: i,
                origin: net.node_names[o].clone(),
                destination: net.node_names[d].clone(),
            });
        }
        found.sort();
        paths.push(found);
    }

    let mut offsets = Vec::with_capacity(paths.len() + 1);
    offsets.push(0);
    for ps in &paths {
        offsets.push(offsets.last().unwrap() + ps.len());
    }

    let num_edges = net.num_edges();
    let incidence = paths
        .iter()
        .map(|ps: &Vec<Vec<usize>>| {
            let cols = ps.len();
            let mut data = vec![0.0; num_edges * cols];
            for (j, p) in ps.iter().enumerate() {
                for &e in p {
                    data[e * cols + j] = 1.0;
                }
            }
            Incidence {
                rows: num_edges,
                cols,
                data,
            }
        })
        .collect();

    Ok(PathSet {
        num_edges,
        paths,
        offsets,
        incidence,
    })
}

fn dfs(
    net: &Network,
    node: usize,
    target: usize,
    on_path: &mut [bool],
    stack: &mut Vec<usize>,
    found: &mut Vec<Vec<usize>>,
    cap: usize,
) -> std::result::Result<(), ()> {
    if node == target {
        if found.len() == cap {
            return Err(());
        }
        found.push(stack.clone());
        return Ok(());
    }
    for &e in &net.out_edges[node] {
        let next = net.edges[e].1;
        if on_path[next] {
            continue;
        }
        on_path[next] = true;
        stack.push(e);
        let res = dfs(net, next, target, on_path, stack, found, cap);
        stack.pop();
        on_path[next] = false;
        res?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nodes: &[&str], edges: &[(&str, &str)], ods: &[(&str, &str)]) -> NetworkSpec {
        NetworkSpec {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(u, v)| (u.to_string(), v.to_string()))
                .collect(),
            od_pairs: ods
                .iter()
                .map(|(u, v)| (u.to_string(), v.to_string()))
                .collect(),
        }
    }

    #[test]
    fn pigou_network_has_identity_incidence() {
        let net = Network::build(&spec(&["s", "t"], &[("s", "t"), ("s", "t")], &[("s", "t")]))
            .unwrap();
        assert_eq!(net.num_edges(), 2);
        let ps = enumerate_paths(&net).unwrap();
        assert_eq!(ps.paths(0), &[vec![0], vec![1]]);
        let m = ps.incidence(0);
        for e in 0..2 {
            for p in 0..2 {
                assert_eq!(m.get(e, p), if e == p { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn triangle_incidence_columns() {
        let net = Network::build(&spec(
            &["s", "a", "t"],
            &[("s", "a"), ("a", "t"), ("s", "t")],
            &[("s", "t")],
        ))
        .unwrap();
        let ps = enumerate_paths(&net).unwrap();
        let m = ps.incidence(0);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|p| (0..3).map(|e| m.get(e, p)).collect())
            .collect();
        assert_eq!(cols, vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            Network::build(&spec(&["s", "s"], &[], &[("s", "s")])),
            Err(Error::DuplicateNode("s".into()))
        );
        assert!(matches!(
            Network::build(&spec(&["s", "t"], &[("s", "x")], &[("s", "t")])),
            Err(Error::DanglingEdge { index: 0, .. })
        ));
        assert!(matches!(
            Network::build(&spec(&["s", "t"], &[("s", "s")], &[("s", "t")])),
            Err(Error::SelfLoop { .. })
        ));
        let err = Network::build(&spec(&["s", "t"], &[("s", "t"), ("s", "t")], &[("t", "s")]))
            .unwrap_err();
        assert!(err.to_string().contains("unreachable OD pair"), "{err}");
    }

    #[test]
    fn path_cap_is_an_error() {
        // Complete DAG on 6 nodes: 2^4 = 16 paths from n0 to n5.
        let nodes: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let mut edges = Vec::new();
        for u in 0..6 {
            for v in u + 1..6 {
                edges.push((nodes[u].clone(), nodes[v].clone()));
            }
        }
        let s = NetworkSpec {
            nodes: nodes.clone(),
            edges,
            od_pairs: vec![("n0".into(), "n5".into())],
        };
        let net = Network::build(&s).unwrap();
        assert_eq!(enumerate_paths_capped(&net, 16).unwrap().total_paths(), 16);
        assert_eq!(
            enumerate_paths_capped(&net, 15),
            Err(Error::PathCapExceeded { index: 0, cap: 15 })
        );
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let ok = r#"{"nodes":["s","t"],"edges":[["s","t"]],"od_pairs":[["s","t"]]}"#;
        assert!(NetworkSpec::from_json(ok).is_ok());
        let bad = r#"{"nodes":["s","t"],"edges":[],"od_pairs":[],"extra":1}"#;
        assert!(NetworkSpec::from_json(bad).is_err());
    }
}
