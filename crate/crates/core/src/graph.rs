//! Channel description and the bipartite factor graph built from it.
//!
//! Variable nodes are the receive filters `U_i` and precoders `V_j`; function
//! nodes are the per-receiver leakage terms `f_i` and the per-transmitter
//! leakage terms `g_j`. Indices are zero-based in code and printed one-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{random_gaussian_matrix, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    /// Receive filter variable.
    U,
    /// Precoder variable.
    V,
    /// Leakage seen at receiver `i`.
    F,
    /// Leakage caused by transmitter `j`.
    G,
}

impl NodeKind {
    pub fn is_variable(self) -> bool {
        matches!(self, NodeKind::U | NodeKind::V)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            NodeKind::U => "U",
            NodeKind::V => "V",
            NodeKind::F => "f",
            NodeKind::G => "g",
        }
    }
}

/// A node of the factor graph. Ordered by kind (U, V, f, g), then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub const fn u(index: usize) -> Self {
        NodeId {
            kind: NodeKind::U,
            index,
        }
    }

    pub const fn v(index: usize) -> Self {
        NodeId {
            kind: NodeKind::V,
            index,
        }
    }

    pub const fn f(index: usize) -> Self {
        NodeId {
            kind: NodeKind::F,
            index,
        }
    }

    pub const fn g(index: usize) -> Self {
        NodeId {
            kind: NodeKind::G,
            index,
        }
    }

    pub fn is_variable(self) -> bool {
        self.kind.is_variable()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind.symbol(), self.index + 1)
    }
}

/// Which cross links `H_ij` (receiver `i`, transmitter `j`) are present.
///
/// The diagonal is always set: direct links never enter the leakage, and the
/// graph always connects `f_i` to `U_i` and `g_j` to `V_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connectivity {
    users: usize,
    links: Vec<bool>,
}

impl Connectivity {
    pub fn full(users: usize) -> Self {
        Connectivity {
            users,
            links: vec![true; users * users],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let users = rows.len();
        if users == 0 || rows.iter().any(|r| r.len() != users) {
            return Err(Error::Dimension(format!(
                "connectivity mask must be square and non-empty, got {users} rows"
            )));
        }
        let mut links: Vec<bool> = rows.iter().flatten().copied().collect();
        for i in 0..users {
            links[i * users + i] = true;
        }
        Ok(Connectivity { users, links })
    }

    /// Parses `K` whitespace-separated rows of `0`/`1` entries. Blank lines
    /// and `#` comments are ignored.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    other => Err(Error::Parse {
                        source_name: source_name.to_string(),
                        line: lineno + 1,
                        msg: format!("expected 0 or 1, found {other:?}"),
                    }),
                })
                .collect::<Result<Vec<bool>>>()?;
            rows.push(row);
        }
        Connectivity::from_rows(&rows)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn is_connected(&self, rx: usize, tx: usize) -> bool {
        self.links[rx * self.users + tx]
    }

    /// Removes the cross link from transmitter `tx` to receiver `rx`.
    pub fn disconnect(&mut self, rx: usize, tx: usize) {
        if rx != tx {
            self.links[rx * self.users + tx] = false;
        }
    }

    pub fn is_full(&self) -> bool {
        self.links.iter().all(|&b| b)
    }
}

/// All `K²` channel matrices plus the system dimensions.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    users: usize,
    rx_antennas: usize,
    tx_antennas: usize,
    streams: usize,
    /// Row-major `K × K`; entry `(i, j)` is `H_ij`, receiver `i`, transmitter `j`.
    h: Vec<CMat>,
    mask: Connectivity,
}

impl ChannelSet {
    pub fn new(
        rx_antennas: usize,
        tx_antennas: usize,
        streams: usize,
        h: Vec<Vec<CMat>>,
        mask: Connectivity,
    ) -> Result<Self> {
        let users = h.len();
        if users == 0 || rx_antennas == 0 || tx_antennas == 0 || streams == 0 {
            return Err(Error::Dimension("all dimensions must be positive".into()));
        }
        if streams > rx_antennas.min(tx_antennas) {
            return Err(Error::Dimension(format!(
                "d={streams} exceeds min(N, M) = {}",
                rx_antennas.min(tx_antennas)
            )));
        }
        if mask.users() != users {
            return Err(Error::Dimension(format!(
                "mask is for {} users, channels for {users}",
                mask.users()
            )));
        }
        let mut flat = Vec::with_capacity(users * users);
        for (i, row) in h.into_iter().enumerate() {
            if row.len() != users {
                return Err(Error::Dimension(format!(
                    "channel row {i} has {} entries, expected {users}",
                    row.len()
                )));
            }
            for (j, hij) in row.into_iter().enumerate() {
                if hij.shape() != (rx_antennas, tx_antennas) {
                    return Err(Error::Dimension(format!(
                        "H[{i}][{j}] is {:?}, expected {rx_antennas}x{tx_antennas}",
                        hij.shape()
                    )));
                }
                if !mask.is_connected(i, j) && hij.iter().any(|z| z.norm() != 0.0) {
                    return Err(Error::Dimension(format!(
                        "H[{i}][{j}] is masked out but not zero"
                    )));
                }
                flat.push(hij);
            }
        }
        Ok(ChannelSet {
            users,
            rx_antennas,
            tx_antennas,
            streams,
            h: flat,
            mask,
        })
    }

    /// I.i.d. unit-variance circularly symmetric Gaussian channels, drawn
    /// row-major over `(i, j)`; masked links are drawn and then zeroed so the
    /// stream consumption does not depend on the mask.
    pub fn sample<R: Rng + ?Sized>(
        users: usize,
        rx_antennas: usize,
        tx_antennas: usize,
        streams: usize,
        mask: Connectivity,
        rng: &mut R,
    ) -> Result<Self> {
        let mut h = Vec::with_capacity(users);
        for i in 0..users {
            let mut row = Vec::with_capacity(users);
            for j in 0..users {
                let hij = random_gaussian_matrix(rx_antennas, tx_antennas, rng)?;
                row.push(if mask.is_connected(i, j) {
                    hij
                } else {
                    CMat::zeros(rx_antennas, tx_antennas)
                });
            }
            h.push(row);
        }
        ChannelSet::new(rx_antennas, tx_antennas, streams, h, mask)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn mask(&self) -> &Connectivity {
        &self.mask
    }

    /// `H_ij`: receiver `i`, transmitter `j`.
    pub fn h(&self, i: usize, j: usize) -> &CMat {
        &self.h[i * self.users + j]
    }
}

/// Bipartite graph of `2K` variable nodes and `2K` function nodes.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    users: usize,
    rx_antennas: usize,
    tx_antennas: usize,
    streams: usize,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl FactorGraph {
    /// Builds the graph from the connectivity mask alone; channel values never
    /// influence the topology.
    pub fn from_mask(
        mask: &Connectivity,
        rx_antennas: usize,
        tx_antennas: usize,
        streams: usize,
    ) -> Self {
        let k = mask.users();
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for i in 0..k {
            for node in [NodeId::u(i), NodeId::v(i), NodeId::f(i), NodeId::g(i)] {
                adjacency.entry(node).or_default();
            }
        }
        let mut link = |a: NodeId, b: NodeId| {
            adjacency.get_mut(&a).expect("node registered").insert(b);
            adjacency.get_mut(&b).expect("node registered").insert(a);
        };
        for i in 0..k {
            link(NodeId::f(i), NodeId::u(i));
            link(NodeId::g(i), NodeId::v(i));
        }
        for i in 0..k {
            for j in 0..k {
                if i != j && mask.is_connected(i, j) {
                    link(NodeId::f(i), NodeId::v(j));
                    link(NodeId::g(j), NodeId::u(i));
                }
            }
        }
        FactorGraph {
            users: k,
            rx_antennas,
            tx_antennas,
            streams,
            adjacency,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.adjacency.contains_key(&node)
    }

    pub fn neighbors(&self, node: NodeId) -> Result<&BTreeSet<NodeId>> {
        self.adjacency.get(&node).ok_or(Error::UnknownNode(node))
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    /// Undirected edges as `(variable, function)` pairs, in node order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adjacency
            .iter()
            .filter(|(a, _)| a.is_variable())
            .flat_map(|(&a, ns)| ns.iter().map(move |&b| (a, b)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Size of the message matrices on edges incident to `var`: `N` for a
    /// receive filter, `M` for a precoder.
    pub fn message_dim(&self, var: NodeId) -> Result<usize> {
        match var.kind {
            NodeKind::U => Ok(self.rx_antennas),
            NodeKind::V => Ok(self.tx_antennas),
            _ => Err(Error::UnknownNode(var)),
        }
    }

    /// Message dimension of the edge `a`-`b`, whichever end is the variable.
    pub fn edge_dim(&self, a: NodeId, b: NodeId) -> Result<usize> {
        if !self.has_edge(a, b) {
            return Err(Error::UnknownEdge(a, b));
        }
        self.message_dim(if a.is_variable() { a } else { b })
    }
}

pub fn build_graph(channels: &ChannelSet) -> FactorGraph {
    FactorGraph::from_mask(
        channels.mask(),
        channels.rx_antennas(),
        channels.tx_antennas(),
        channels.streams(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_stream;

    fn set(nodes: &[NodeId]) -> BTreeSet<NodeId> {
        nodes.iter().copied().collect()
    }

    #[test]
    fn three_user_full_graph() {
        let g = FactorGraph::from_mask(&Connectivity::full(3), 4, 4, 2);
        assert_eq!(g.edge_count(), 18);
        assert_eq!(
            g.neighbors(NodeId::f(0)).unwrap(),
            &set(&[NodeId::u(0), NodeId::v(1), NodeId::v(2)])
        );
        assert_eq!(
            g.neighbors(NodeId::u(0)).unwrap(),
            &set(&[NodeId::f(0), NodeId::g(1), NodeId::g(2)])
        );
        assert_eq!(
            g.neighbors(NodeId::g(0)).unwrap(),
            &set(&[NodeId::v(0), NodeId::u(1), NodeId::u(2)])
        );
        for i in 0..3 {
            assert_eq!(g.neighbors(NodeId::f(i)).unwrap().len(), 3);
            assert_eq!(g.neighbors(NodeId::g(i)).unwrap().len(), 3);
            assert!(!g.has_edge(NodeId::f(i), NodeId::v(i)));
            assert!(!g.has_edge(NodeId::g(i), NodeId::u(i)));
        }
    }

    #[test]
    fn partial_connectivity_drops_both_edges() {
        let mut mask = Connectivity::full(3);
        mask.disconnect(0, 1);
        let g = FactorGraph::from_mask(&mask, 4, 4, 2);
        assert_eq!(g.edge_count(), 16);
        assert!(!g.has_edge(NodeId::f(0), NodeId::v(1)));
        assert!(!g.has_edge(NodeId::g(1), NodeId::u(0)));
    }

    #[test]
    fn two_user_graph() {
        let g = FactorGraph::from_mask(&Connectivity::full(2), 2, 2, 1);
        assert_eq!(g.edge_count(), 8);
        assert_eq!(
            g.neighbors(NodeId::f(0)).unwrap(),
            &set(&[NodeId::u(0), NodeId::v(1)])
        );
    }

    #[test]
    fn isolated_receiver() {
        let mut mask = Connectivity::full(3);
        mask.disconnect(0, 1);
        mask.disconnect(0, 2);
        let g = FactorGraph::from_mask(&mask, 4, 4, 2);
        assert_eq!(g.neighbors(NodeId::f(0)).unwrap(), &set(&[NodeId::u(0)]));
    }

    #[test]
    fn unknown_node_lookup_fails() {
        let g = FactorGraph::from_mask(&Connectivity::full(2), 2, 2, 1);
        assert!(matches!(
            g.neighbors(NodeId::u(5)),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn adjacency_is_symmetric_and_bipartite() {
        for k in 2..6 {
            let g = FactorGraph::from_mask(&Connectivity::full(k), 3, 3, 1);
            assert_eq!(g.edge_count(), 2 * k * k);
            for a in g.nodes() {
                for &b in g.neighbors(a).unwrap() {
                    assert!(g.neighbors(b).unwrap().contains(&a));
                    assert_ne!(a.is_variable(), b.is_variable());
                }
            }
        }
    }

    #[test]
    fn message_dims_follow_variable_kind() {
        let g = FactorGraph::from_mask(&Connectivity::full(2), 3, 5, 1);
        assert_eq!(g.edge_dim(NodeId::f(0), NodeId::u(0)).unwrap(), 3);
        assert_eq!(g.edge_dim(NodeId::v(1), NodeId::f(0)).unwrap(), 5);
        assert!(g.edge_dim(NodeId::v(0), NodeId::f(0)).is_err());
    }

    #[test]
    fn masked_channels_are_zero_and_validated() {
        let mut mask = Connectivity::full(3);
        mask.disconnect(2, 0);
        let ch = ChannelSet::sample(3, 4, 4, 2, mask.clone(), &mut seeded_stream(1, 0)).unwrap();
        assert_eq!(ch.h(2, 0).norm(), 0.0);
        assert!(ch.h(0, 2).norm() > 0.0);

        let mut h: Vec<Vec<CMat>> = (0..3)
            .map(|i| (0..3).map(|j| ch.h(i, j).clone()).collect())
            .collect();
        h[2][0] = CMat::identity(4, 4);
        assert!(ChannelSet::new(4, 4, 2, h, mask).is_err());
    }

    #[test]
    fn channel_set_rejects_bad_dims() {
        let h = vec![vec![CMat::zeros(4, 4); 2]; 2];
        assert!(ChannelSet::new(4, 4, 5, h.clone(), Connectivity::full(2)).is_err());
        assert!(ChannelSet::new(4, 3, 2, h, Connectivity::full(2)).is_err());
    }

    #[test]
    fn mask_parsing() {
        let mask = Connectivity::parse("# comment\n1 0 1\n1 1 1\n0 1 1\n", "mask.txt").unwrap();
        assert!(!mask.is_connected(0, 1));
        assert!(!mask.is_connected(2, 0));
        assert!(mask.is_connected(1, 0));
        let err = Connectivity::parse("1 2\n1 1\n", "mask.txt").unwrap_err();
        assert!(err.to_string().contains("mask.txt:1"));
        assert!(Connectivity::parse("1 1\n1\n", "m").is_err());
    }

    #[test]
    fn node_display_is_one_based() {
        assert_eq!(NodeId::u(0).to_string(), "U_1");
        assert_eq!(NodeId::g(2).to_string(), "g_3");
    }
}
