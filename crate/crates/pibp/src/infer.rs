//! Exact inference for one feature column on the tree.
//!
//! A column is generated by an absorbing 0→1 change process from the root
//! (clamped to zero) toward the leaves: over an edge of length `t` a zero
//! flips to one with probability 1 − (1−π)^t, and a one never flips back.
//! Conditionals over leaf values are computed by sum-product. All message
//! arithmetic is in log space with a two-term log-sum-exp; (1−π)^Σt
//! underflows in linear space on long trees.
//!
//! Message schedule: one upward pass (children before parents) followed by
//! one downward pass; after both, every leaf's full conditional is a
//! constant-time read. A bit flip re-runs the upward path to the root and
//! the downward pass, O(N) total.

use crate::error::{Error, Result};
use crate::special::{log1mexp, lse2};
use crate::tree::{NodeId, PhyloTree};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Child-given-parent transition probabilities over one edge.
/// State one is absorbing: p10 = 0 and p11 = 1 always.
#[derive(Debug, Clone, Copy)]
pub struct EdgeTransition {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

/// (ln p00, ln p01) for an edge of length `t` at column parameter `pi`.
fn log_edge(pi: f64, t: f64) -> (f64, f64) {
    if t == 0.0 || pi == 0.0 {
        return (0.0, NEG_INF);
    }
    if pi == 1.0 {
        return (NEG_INF, 0.0);
    }
    let lq = t * (-pi).ln_1p();
    (lq, log1mexp(lq))
}

/// Transition matrix over an edge: p01 = 1 − (1−pi)^t.
pub fn edge_transition(pi: f64, t: f64) -> Result<EdgeTransition> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::Domain(format!("pi={pi} outside [0,1]")));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!("edge length t={t} must be >= 0")));
    }
    let (lp00, lp01) = log_edge(pi, t);
    Ok(EdgeTransition {
        p00: lp00.exp(),
        p01: lp01.exp(),
        p10: 0.0,
        p11: 1.0,
    })
}

fn check_pi(pi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::Domain(format!("pi={pi} outside [0,1]")));
    }
    Ok(())
}

/// ln P(observed leaves | root = 0) by one upward pass. Unobserved leaves
/// are marginalized. Returns the node-visit count alongside.
fn log_joint<F: Fn(usize) -> Option<bool>>(
    tree: &PhyloTree,
    pi: f64,
    obs: F,
    up: &mut Vec<[f64; 2]>,
) -> (f64, usize) {
    let n = tree.n_nodes();
    up.clear();
    up.resize(n, [0.0, 0.0]);
    let mut ops = 0usize;
    for &v in tree.postorder() {
        ops += 1;
        let node = tree.node(v);
        if node.children.is_empty() {
            up[v] = match obs(node.leaf_index.unwrap()) {
                Some(true) => [NEG_INF, 0.0],
                Some(false) => [0.0, NEG_INF],
                None => [0.0, 0.0],
            };
        } else {
            let mut acc = [0.0, 0.0];
            for &c in &node.children {
                let (lp00, lp01) = log_edge(pi, tree.node(c).edge_length);
                let m = up[c];
                acc[0] += lse2(lp00 + m[0], lp01 + m[1]);
                acc[1] += m[1];
            }
            up[v] = acc;
        }
    }
    (up[tree.root()][0], ops)
}

fn validate_conditioning(
    tree: &PhyloTree,
    column: &[Option<bool>],
    i: usize,
) -> Result<()> {
    if column.len() != tree.n_leaves() {
        return Err(Error::Domain(format!(
            "conditioning slice has length {}, tree has {} leaves",
            column.len(),
            tree.n_leaves()
        )));
    }
    if i >= tree.n_leaves() {
        return Err(Error::UnknownLeaf(i));
    }
    if column[i].is_some() {
        return Err(Error::LeafInConditioningSet(i));
    }
    Ok(())
}

/// p(z_i = 1 | observed leaves, π), with the root clamped to zero and
/// unobserved leaves marginalized. `column[i]` must be `None`.
pub fn leaf_conditional(
    tree: &PhyloTree,
    column: &[Option<bool>],
    pi: f64,
    i: usize,
) -> Result<f64> {
    leaf_conditional_counted(tree, column, pi, i).map(|(p, _)| p)
}

/// As [`leaf_conditional`], also reporting the number of node visits so
/// tests can pin the linear-time bound.
pub fn leaf_conditional_counted(
    tree: &PhyloTree,
    column: &[Option<bool>],
    pi: f64,
    i: usize,
) -> Result<(f64, usize)> {
    check_pi(pi)?;
    validate_conditioning(tree, column, i)?;
    if pi == 0.0 {
        return Ok((0.0, 0));
    }
    if pi == 1.0 {
        return Ok((1.0, 0));
    }
    let mut up = Vec::new();
    let with = |bit: bool| move |l: usize| if l == i { Some(bit) } else { column[l] };
    let (lj1, ops1) = log_joint(tree, pi, with(true), &mut up);
    let (lj0, ops0) = log_joint(tree, pi, with(false), &mut up);
    let norm = lse2(lj0, lj1);
    if norm == NEG_INF {
        return Err(Error::Domain(
            "conditioning assignment has probability zero".into(),
        ));
    }
    Ok(((lj1 - norm).exp().clamp(0.0, 1.0), ops0 + ops1))
}

/// ln p(z_{−i} | z_i, π) for a fully assigned column `bits`, anchored at
/// leaf `i`: the joint over all leaves divided by the unit-depth marginal.
pub fn log_leaves_given_leaf(
    tree: &PhyloTree,
    bits: &[bool],
    pi: f64,
    i: usize,
) -> Result<f64> {
    check_pi(pi)?;
    if bits.len() != tree.n_leaves() {
        return Err(Error::Domain("assignment length mismatch".into()));
    }
    if i >= tree.n_leaves() {
        return Err(Error::UnknownLeaf(i));
    }
    let zi = bits[i];
    if (pi == 0.0 && zi) || (pi == 1.0 && !zi) {
        return Err(Error::Domain(format!(
            "conditioning on z_i={} has zero marginal at pi={pi}",
            zi as u8
        )));
    }
    if pi == 0.0 {
        // All-zero is the only possible column.
        return Ok(if bits.iter().all(|&b| !b) { 0.0 } else { NEG_INF });
    }
    if pi == 1.0 {
        return Ok(if bits.iter().all(|&b| b) { 0.0 } else { NEG_INF });
    }
    let mut up = Vec::new();
    let (lj, _) = log_joint(tree, pi, |l| Some(bits[l]), &mut up);
    let lmarg = if zi { pi.ln() } else { (-pi).ln_1p() };
    Ok((lj - lmarg).min(0.0))
}

/// p(z_{−i} | z_i = zi, π) with `column[i] = None` and every other leaf
/// assigned; the probability-space form of [`log_leaves_given_leaf`].
pub fn leaves_given_leaf(
    tree: &PhyloTree,
    column: &[Option<bool>],
    pi: f64,
    i: usize,
    zi: bool,
) -> Result<f64> {
    leaves_given_leaf_counted(tree, column, pi, i, zi).map(|(p, _)| p)
}

/// As [`leaves_given_leaf`], also reporting node visits.
pub fn leaves_given_leaf_counted(
    tree: &PhyloTree,
    column: &[Option<bool>],
    pi: f64,
    i: usize,
    zi: bool,
) -> Result<(f64, usize)> {
    validate_conditioning(tree, column, i)?;
    for (l, b) in column.iter().enumerate() {
        if l != i && b.is_none() {
            return Err(Error::Domain(format!(
                "leaf {l} unassigned; all leaves except {i} must be observed"
            )));
        }
    }
    let mut bits: Vec<bool> = column.iter().map(|b| b.unwrap_or(zi)).collect();
    bits[i] = zi;
    let n = tree.n_nodes();
    log_leaves_given_leaf(tree, &bits, pi, i).map(|lp| (lp.exp().clamp(0.0, 1.0), n))
}

/// Cached sum-product messages for one column under a fixed assignment.
///
/// After construction (or any refresh) the cavity conditional of every leaf
/// — its full conditional given all *other* leaves — is an O(1) read.
#[derive(Debug, Clone)]
pub struct MessageCache {
    pi: f64,
    bits: Vec<bool>,
    lp00: Vec<f64>,
    lp01: Vec<f64>,
    log_up: Vec<[f64; 2]>,
    /// Message from node to its parent, indexed by the parent's state.
    log_msg: Vec<[f64; 2]>,
    log_down: Vec<[f64; 2]>,
    scratch: Vec<[f64; 2]>,
}

impl MessageCache {
    pub fn new(tree: &PhyloTree, bits: Vec<bool>, pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Domain(format!(
                "cached columns require pi in (0,1), got {pi}"
            )));
        }
        if bits.len() != tree.n_leaves() {
            return Err(Error::Domain("assignment length mismatch".into()));
        }
        let n = tree.n_nodes();
        let mut cache = Self {
            pi,
            bits,
            lp00: vec![0.0; n],
            lp01: vec![0.0; n],
            log_up: vec![[0.0; 2]; n],
            log_msg: vec![[0.0; 2]; n],
            log_down: vec![[0.0; 2]; n],
            scratch: Vec::new(),
        };
        cache.recompute_edges(tree);
        cache.full_refresh(tree);
        Ok(cache)
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Replace the column parameter and rebuild all messages.
    pub fn set_pi(&mut self, tree: &PhyloTree, pi: f64) -> Result<()> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Domain(format!(
                "cached columns require pi in (0,1), got {pi}"
            )));
        }
        self.pi = pi;
        self.recompute_edges(tree);
        self.full_refresh(tree);
        Ok(())
    }

    fn recompute_edges(&mut self, tree: &PhyloTree) {
        for v in 0..tree.n_nodes() {
            let (a, b) = log_edge(self.pi, tree.node(v).edge_length);
            self.lp00[v] = a;
            self.lp01[v] = b;
        }
    }

    fn leaf_up(bit: bool) -> [f64; 2] {
        if bit {
            [NEG_INF, 0.0]
        } else {
            [0.0, NEG_INF]
        }
    }

    fn fold_edge(&self, v: NodeId) -> [f64; 2] {
        let m = self.log_up[v];
        [
            lse2(self.lp00[v] + m[0], self.lp01[v] + m[1]),
            m[1],
        ]
    }

    fn full_refresh(&mut self, tree: &PhyloTree) {
        for &v in tree.postorder() {
            let node = tree.node(v);
            self.log_up[v] = if node.children.is_empty() {
                Self::leaf_up(self.bits[node.leaf_index.unwrap()])
            } else {
                let mut acc = [0.0, 0.0];
                for &c in &node.children {
                    acc[0] += self.log_msg[c][0];
                    acc[1] += self.log_msg[c][1];
                }
                acc
            };
            self.log_msg[v] = self.fold_edge(v);
        }
        self.downward_pass(tree);
    }

    fn downward_pass(&mut self, tree: &PhyloTree) {
        self.log_down[tree.root()] = [0.0, NEG_INF];
        for &v in tree.postorder().iter().rev() {
            let children = &tree.node(v).children;
            if children.is_empty() {
                continue;
            }
            self.scratch.clear();
            // prefix[j] = sum of sibling messages before child j.
            let mut run = [0.0, 0.0];
            for &c in children {
                self.scratch.push(run);
                run[0] += self.log_msg[c][0];
                run[1] += self.log_msg[c][1];
            }
            let mut suffix = [0.0, 0.0];
            for j in (0..children.len()).rev() {
                let c = children[j];
                let prefix = self.scratch[j];
                let a0 = self.log_down[v][0] + prefix[0] + suffix[0];
                let a1 = self.log_down[v][1] + prefix[1] + suffix[1];
                self.log_down[c] = [a0 + self.lp00[c], lse2(a0 + self.lp01[c], a1)];
                suffix[0] += self.log_msg[c][0];
                suffix[1] += self.log_msg[c][1];
            }
        }
    }

    /// Set leaf `i` to `bit` and restore message consistency. A no-op when
    /// the bit already has that value.
    pub fn refresh_after_flip(&mut self, tree: &PhyloTree, i: usize, bit: bool) {
        if self.bits[i] == bit {
            return;
        }
        self.bits[i] = bit;
        let leaf = tree.leaf_node(i).expect("leaf index validated at build");
        self.log_up[leaf] = Self::leaf_up(bit);
        self.log_msg[leaf] = self.fold_edge(leaf);
        let mut v = leaf;
        while let Some(p) = tree.node(v).parent {
            let mut acc = [0.0, 0.0];
            for &c in &tree.node(p).children {
                acc[0] += self.log_msg[c][0];
                acc[1] += self.log_msg[c][1];
            }
            self.log_up[p] = acc;
            self.log_msg[p] = self.fold_edge(p);
            v = p;
        }
        self.downward_pass(tree);
    }

    /// Cavity conditional p(z_i = 1 | all other leaves) in O(1): the
    /// downward message into leaf `i` excludes exactly i's own evidence.
    pub fn leaf_conditional(&self, tree: &PhyloTree, i: usize) -> f64 {
        let leaf = tree.leaf_node(i).expect("valid leaf");
        let d = self.log_down[leaf];
        let norm = lse2(d[0], d[1]);
        if norm == NEG_INF {
            debug_assert!(false, "conditioning state has probability zero");
            return 0.0;
        }
        (d[1] - norm).exp().clamp(0.0, 1.0)
    }

    /// ln P(current assignment | root = 0).
    pub fn log_joint(&self, tree: &PhyloTree) -> f64 {
        self.log_up[tree.root()][0]
    }

    /// Compare every cached quantity against a from-scratch rebuild.
    pub fn assert_consistent(&self, tree: &PhyloTree, tol: f64) {
        let fresh = MessageCache::new(tree, self.bits.clone(), self.pi).unwrap();
        let a = self.log_joint(tree);
        let b = fresh.log_joint(tree);
        assert!(
            (a - b).abs() <= tol || (a == NEG_INF && b == NEG_INF),
            "stale joint: cached {a} vs fresh {b}"
        );
        for i in 0..tree.n_leaves() {
            let pa = self.leaf_conditional(tree, i);
            let pb = fresh.leaf_conditional(tree, i);
            assert!(
                (pa - pb).abs() <= tol,
                "stale conditional at leaf {i}: cached {pa} vs fresh {pb}"
            );
        }
    }
}
