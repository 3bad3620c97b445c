//! Rooted trees with edge lengths.
//!
//! Leaves are the modeled objects; every root-to-leaf path has total length
//! one, so a column marginal stays interpretable as a per-object probability.
//! Nodes live in a flat arena indexed by `NodeId`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type NodeId = usize;

/// Tolerance on the root-to-leaf depth-one requirement.
pub const DEPTH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Length of the edge to the parent; 0 for the root.
    pub edge_length: f64,
    pub name: Option<String>,
    /// Object index for leaves.
    pub leaf_index: Option<usize>,
}

/// A validated rooted tree: one root, unit root-to-leaf depths, named leaves.
#[derive(Debug, Clone)]
pub struct PhyloTree {
    nodes: Vec<Node>,
    root: NodeId,
    /// Object index -> leaf node, in first-appearance order.
    leaves: Vec<NodeId>,
    /// Children-before-parents order, used by message passing.
    postorder: Vec<NodeId>,
}

/// The union of root-to-leaf paths for a set of prior leaves plus one new
/// leaf, split into the new leaf's private segment and everything else.
#[derive(Debug, Clone)]
pub struct MinimalSubtreeView {
    pub included_nodes: Vec<NodeId>,
    /// Length of the path from the new leaf up to the first node already
    /// covered by the prior leaves (the full depth when there are none).
    pub pendant_length: f64,
    /// Total edge length of the rest of the view.
    pub rest_length: f64,
}

impl PhyloTree {
    /// Validate an arena of nodes and build the tree.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let roots: Vec<NodeId> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.parent.is_none())
            .map(|(id, _)| id)
            .collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];

        for (id, n) in nodes.iter().enumerate() {
            if !(n.edge_length >= 0.0) || !n.edge_length.is_finite() {
                return Err(Error::InvalidTree(format!(
                    "node {id} has invalid edge length {}",
                    n.edge_length
                )));
            }
            for &c in &n.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return Err(Error::InvalidTree(format!(
                        "inconsistent child link {id} -> {c}"
                    )));
                }
            }
        }

        // Reachability doubles as the cycle check.
        let mut postorder = Vec::with_capacity(nodes.len());
        let mut stack = vec![(root, 0usize)];
        let mut seen = vec![false; nodes.len()];
        seen[root] = true;
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            if *next < nodes[id].children.len() {
                let c = nodes[id].children[*next];
                *next += 1;
                if seen[c] {
                    return Err(Error::InvalidTree(format!("node {c} reached twice")));
                }
                seen[c] = true;
                stack.push((c, 0));
            } else {
                postorder.push(id);
                stack.pop();
            }
        }
        if postorder.len() != nodes.len() {
            return Err(Error::InvalidTree(
                "tree contains unreachable nodes".into(),
            ));
        }

        let mut leaves = Vec::new();
        let mut leaf_ids: Vec<(usize, NodeId)> = Vec::new();
        for (id, n) in nodes.iter().enumerate() {
            if n.children.is_empty() {
                let name = n.name.as_deref().unwrap_or("");
                if name.is_empty() {
                    return Err(Error::InvalidTree(format!("leaf node {id} has no name")));
                }
                let ix = n.leaf_index.ok_or_else(|| {
                    Error::InvalidTree(format!("leaf node {id} has no object index"))
                })?;
                leaf_ids.push((ix, id));
            } else if n.leaf_index.is_some() {
                return Err(Error::InvalidTree(format!(
                    "internal node {id} carries an object index"
                )));
            }
        }
        leaf_ids.sort_unstable();
        for (expect, &(ix, id)) in leaf_ids.iter().enumerate() {
            if ix != expect {
                return Err(Error::InvalidTree(format!(
                    "leaf indices are not 0..N-1 (found {ix})"
                )));
            }
            leaves.push(id);
        }
        if leaves.is_empty() {
            return Err(Error::InvalidTree("tree has no leaves".into()));
        }
        let mut names = std::collections::HashSet::new();
        for &l in &leaves {
            if !names.insert(nodes[l].name.clone().unwrap()) {
                return Err(Error::InvalidTree(format!(
                    "duplicate leaf name '{}'",
                    nodes[l].name.clone().unwrap()
                )));
            }
        }

        let tree = Self {
            nodes,
            root,
            leaves,
            postorder,
        };
        tree.check_depths()?;
        Ok(tree)
    }

    fn check_depths(&self) -> Result<()> {
        for i in 0..self.n_leaves() {
            let d = self.leaf_depth(i);
            if (d - 1.0).abs() > DEPTH_TOLERANCE {
                return Err(Error::DepthViolation {
                    leaf: self.leaf_name(i).to_string(),
                    depth: d,
                });
            }
        }
        Ok(())
    }

    /// Star tree: `n` leaves hanging off the root by unit edges.
    pub fn star(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTree("star tree needs at least one leaf".into()));
        }
        let mut nodes = vec![Node {
            parent: None,
            children: (1..=n).collect(),
            edge_length: 0.0,
            name: None,
            leaf_index: None,
        }];
        for i in 0..n {
            nodes.push(Node {
                parent: Some(0),
                children: vec![],
                edge_length: 1.0,
                name: Some(format!("o{i}")),
                leaf_index: Some(i),
            });
        }
        Self::from_nodes(nodes)
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn leaf_node(&self, object: usize) -> Result<NodeId> {
        self.leaves
            .get(object)
            .copied()
            .ok_or(Error::UnknownLeaf(object))
    }

    pub fn leaf_name(&self, object: usize) -> &str {
        self.nodes[self.leaves[object]].name.as_deref().unwrap()
    }

    /// Children-before-parents traversal order (root last).
    pub fn postorder(&self) -> &[NodeId] {
        &self.postorder
    }

    pub fn leaf_depth(&self, object: usize) -> f64 {
        let mut d = 0.0;
        let mut id = self.leaves[object];
        while let Some(p) = self.nodes[id].parent {
            d += self.nodes[id].edge_length;
            id = p;
        }
        d
    }

    /// Sum of all edge lengths.
    pub fn total_edge_length(&self) -> f64 {
        self.nodes.iter().map(|n| n.edge_length).sum()
    }

    /// Split the view spanned by `prior_leaves` + `new_leaf` into the new
    /// leaf's private pendant segment and the remaining covered length.
    pub fn minimal_subtree(
        &self,
        prior_leaves: &[usize],
        new_leaf: usize,
    ) -> Result<MinimalSubtreeView> {
        let new_node = self.leaf_node(new_leaf)?;
        if prior_leaves.contains(&new_leaf) {
            return Err(Error::Domain(format!(
                "leaf {new_leaf} is already among the prior leaves"
            )));
        }
        let mut covered = vec![false; self.nodes.len()];
        let mut rest_length = 0.0;
        for &l in prior_leaves {
            let mut id = self.leaf_node(l)?;
            loop {
                if covered[id] {
                    break;
                }
                covered[id] = true;
                match self.nodes[id].parent {
                    Some(p) => {
                        rest_length += self.nodes[id].edge_length;
                        id = p;
                    }
                    None => break,
                }
            }
        }
        let mut pendant_length = 0.0;
        let mut included = Vec::new();
        let mut id = new_node;
        while !covered[id] {
            included.push(id);
            match self.nodes[id].parent {
                Some(p) => {
                    pendant_length += self.nodes[id].edge_length;
                    id = p;
                }
                None => break,
            }
        }
        if !included.contains(&id) && !covered[id] {
            included.push(id);
        }
        included.extend((0..self.nodes.len()).filter(|&v| covered[v]));
        Ok(MinimalSubtreeView {
            included_nodes: included,
            pendant_length,
            rest_length,
        })
    }

    /// Pendant and rest lengths for object `i` against all other leaves;
    /// the quantities driving the new-column birth rate during inference.
    pub fn birth_lengths(&self, object: usize) -> Result<(f64, f64)> {
        let others: Vec<usize> = (0..self.n_leaves()).filter(|&l| l != object).collect();
        let view = self.minimal_subtree(&others, object)?;
        Ok((view.pendant_length, view.rest_length))
    }

    /// Serialize to Newick with branch lengths (round-trips exactly).
    pub fn to_newick(&self) -> String {
        fn write_node(tree: &PhyloTree, id: NodeId, out: &mut String) {
            let n = &tree.nodes[id];
            if n.children.is_empty() {
                out.push_str(n.name.as_deref().unwrap());
            } else {
                out.push('(');
                for (k, &c) in n.children.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    write_node(tree, c, out);
                }
                out.push(')');
                if let Some(name) = &n.name {
                    out.push_str(name);
                }
            }
            if n.parent.is_some() {
                out.push(':');
                out.push_str(&format!("{}", n.edge_length));
            }
        }
        let mut out = String::new();
        write_node(self, self.root, &mut out);
        out.push(';');
        out
    }

    /// Debug-oriented JSON view of the node/edge structure.
    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            root: self.root,
            n_leaves: self.n_leaves(),
            total_edge_length: self.total_edge_length(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeJson {
                    id,
                    name: n.name.clone(),
                    parent: n.parent,
                    edge_length: n.edge_length,
                    children: n.children.clone(),
                    object_index: n.leaf_index,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeJson {
    pub root: NodeId,
    pub n_leaves: usize,
    pub total_edge_length: f64,
    pub nodes: Vec<NodeJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub name: Option<String>,
    pub parent: Option<NodeId>,
    pub edge_length: f64,
    pub children: Vec<NodeId>,
    pub object_index: Option<usize>,
}

/// Parse a Newick string with mandatory branch lengths on every non-root
/// node. Leaf order is assigned by first appearance.
pub fn parse_newick(text: &str) -> Result<PhyloTree> {
    Parser {
        bytes: text.as_bytes(),
        pos: 0,
        nodes: Vec::new(),
        n_leaves: 0,
    }
    .parse()
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
    n_leaves: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::NewickSyntax {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<PhyloTree> {
        let root = self.subtree(None)?;
        // A root branch length is tolerated only when it is zero.
        if self.peek() == Some(b':') {
            self.pos += 1;
            let len = self.number()?;
            if len != 0.0 {
                return self.err("root must not carry a nonzero branch length");
            }
        }
        match self.peek() {
            Some(b';') => self.pos += 1,
            _ => return self.err("expected ';'"),
        }
        if self.peek().is_some() {
            return self.err("trailing characters after ';'");
        }
        self.nodes[root].parent = None;
        PhyloTree::from_nodes(self.nodes)
    }

    fn subtree(&mut self, parent: Option<NodeId>) -> Result<NodeId> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let id = self.nodes.len();
                self.nodes.push(Node {
                    parent,
                    children: vec![],
                    edge_length: 0.0,
                    name: None,
                    leaf_index: None,
                });
                loop {
                    let child = self.subtree(Some(id))?;
                    match self.peek() {
                        Some(b':') => {
                            self.pos += 1;
                            let len = self.number()?;
                            self.nodes[child].edge_length = len;
                        }
                        _ => return self.err("missing branch length"),
                    }
                    self.nodes[id].children.push(child);
                    match self.peek() {
                        Some(b',') => {
                            self.pos += 1;
                        }
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return self.err("expected ',' or ')'"),
                    }
                }
                if let Some(name) = self.name()? {
                    self.nodes[id].name = Some(name);
                }
                Ok(id)
            }
            Some(_) => {
                let name = match self.name()? {
                    Some(n) => n,
                    None => return self.err("expected leaf name or '('"),
                };
                let id = self.nodes.len();
                self.nodes.push(Node {
                    parent,
                    children: vec![],
                    edge_length: 0.0,
                    name: Some(name),
                    leaf_index: Some(self.n_leaves),
                });
                self.n_leaves += 1;
                Ok(id)
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn name(&mut self) -> Result<Option<String>> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-' | b'|' | b'/') {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            Ok(None)
        } else {
            Ok(Some(
                std::str::from_utf8(&self.bytes[start..self.pos])
                    .unwrap()
                    .to_string(),
            ))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-') {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return self.err("missing branch length");
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse::<f64>()
            .map_err(|e| Error::NewickSyntax {
                position: start,
                message: format!("bad number: {e}"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_star_parses() {
        let t = parse_newick("(a:1.0,b:1.0);").unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.leaf_name(0), "a");
        assert!((t.leaf_depth(0) - 1.0).abs() < 1e-15);
        assert!((t.total_edge_length() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn three_triple_tree_parses() {
        let t = parse_newick(
            "((a:0.1,b:0.1,c:0.1):0.9,(d:0.1,e:0.1,f:0.1):0.9,(g:0.1,h:0.1,i:0.1):0.9);",
        )
        .unwrap();
        assert_eq!(t.n_leaves(), 9);
        for i in 0..9 {
            assert!((t.leaf_depth(i) - 1.0).abs() < 1e-12);
        }
        assert!((t.total_edge_length() - 3.6).abs() < 1e-12);
    }

    #[test]
    fn depth_violation_reports_leaf() {
        let err = parse_newick("(a:0.5,b:1.0);").unwrap_err();
        match err {
            Error::DepthViolation { leaf, depth } => {
                assert_eq!(leaf, "a");
                assert!((depth - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_branch_length_is_syntax_error() {
        let err = parse_newick("(a,b:1.0);").unwrap_err();
        assert!(matches!(err, Error::NewickSyntax { .. }), "{err:?}");
    }

    #[test]
    fn unbalanced_paren_reports_position() {
        let err = parse_newick("((a:1.0,b:1.0);").unwrap_err();
        match err {
            Error::NewickSyntax { position, .. } => assert!(position > 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn star_tree_geometry() {
        let t = PhyloTree::star(9).unwrap();
        assert_eq!(t.n_leaves(), 9);
        assert!((t.total_edge_length() - 9.0).abs() < 1e-15);
        assert!(PhyloTree::star(0).is_err());
        let single = PhyloTree::star(1).unwrap();
        assert!((single.leaf_depth(0) - 1.0).abs() < 1e-15);
        assert!((single.total_edge_length() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn star_minimal_subtree_lengths() {
        let t = PhyloTree::star(5).unwrap();
        let v = t.minimal_subtree(&[0, 1], 2).unwrap();
        assert!((v.pendant_length - 1.0).abs() < 1e-15);
        assert!((v.rest_length - 2.0).abs() < 1e-15);
        // i-th diner on the star: pendant 1, rest i-1.
        for i in 0..5 {
            let prior: Vec<usize> = (0..i).collect();
            let v = t.minimal_subtree(&prior, i).unwrap();
            assert!((v.pendant_length - 1.0).abs() < 1e-15);
            assert!((v.rest_length - i as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn figure_tree_minimal_subtree() {
        let t = parse_newick(
            "((a:0.1,b:0.1,c:0.1):0.9,(d:0.1,e:0.1,f:0.1):0.9,(g:0.1,h:0.1,i:0.1):0.9);",
        )
        .unwrap();
        // Sibling within a triple: pendant 0.1, rest covers 0.9 + 0.1.
        let v = t.minimal_subtree(&[0], 1).unwrap();
        assert!((v.pendant_length - 0.1).abs() < 1e-12);
        assert!((v.rest_length - 1.0).abs() < 1e-12);
        // Across triples: full depth pendant.
        let v = t.minimal_subtree(&[0], 3).unwrap();
        assert!((v.pendant_length - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_diner_gets_full_pendant() {
        let t = parse_newick("((a:0.25,b:0.25):0.75,c:1.0);").unwrap();
        let v = t.minimal_subtree(&[], 1).unwrap();
        assert!((v.pendant_length - 1.0).abs() < 1e-12);
        assert_eq!(v.rest_length, 0.0);
    }

    #[test]
    fn minimal_subtree_rejects_duplicate_leaf() {
        let t = PhyloTree::star(3).unwrap();
        assert!(t.minimal_subtree(&[0, 1], 1).is_err());
        assert!(t.minimal_subtree(&[0], 7).is_err());
    }

    #[test]
    fn birth_lengths_match_terminal_edges() {
        let t = parse_newick(
            "((a:0.1,b:0.1,c:0.1):0.9,(d:0.1,e:0.1,f:0.1):0.9,(g:0.1,h:0.1,i:0.1):0.9);",
        )
        .unwrap();
        for i in 0..9 {
            let (pendant, rest) = t.birth_lengths(i).unwrap();
            assert!((pendant - 0.1).abs() < 1e-12);
            assert!((rest - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn newick_round_trip() {
        let src = "((a:0.1,b:0.1,c:0.1):0.9,(d:0.25,e:0.75):0.25);";
        let t = parse_newick(src).unwrap_err();
        // d is at depth 0.5: construction must fail, keeping the invariant.
        assert!(matches!(t, Error::DepthViolation { .. }));

        let src = "((a:0.1,b:0.1,c:0.1):0.9,(d:0.75,e:0.75):0.25);";
        let t = parse_newick(src).unwrap();
        let round = parse_newick(&t.to_newick()).unwrap();
        assert_eq!(t.n_leaves(), round.n_leaves());
        for i in 0..t.n_leaves() {
            assert_eq!(t.leaf_name(i), round.leaf_name(i));
            assert!((t.leaf_depth(i) - round.leaf_depth(i)).abs() < 1e-12);
        }
        assert_eq!(t.to_newick(), round.to_newick());
    }

    #[test]
    fn zero_length_edges_allowed() {
        let t = parse_newick("((a:1.0,b:1.0):0.0,c:1.0);").unwrap();
        assert_eq!(t.n_leaves(), 3);
    }

    #[test]
    fn unary_root_child_allowed() {
        let t = parse_newick("((a:0.1,b:0.1):0.9);").unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert!((t.total_edge_length() - 1.1).abs() < 1e-12);
    }

    #[test]
    fn duplicate_leaf_names_rejected() {
        assert!(parse_newick("(a:1.0,a:1.0);").is_err());
    }
}
