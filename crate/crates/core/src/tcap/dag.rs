use std::collections::HashMap;

use super::{validate, ColRef, Program, TcapError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DagNode {
    Source(ColRef),
    /// Index into the program's statements.
    Stmt(usize),
}

/// Def-use graph of a program. Sources come first, then statements in
/// program order.
#[derive(Clone, Debug)]
pub struct Dag {
    pub nodes: Vec<DagNode>,
    names: Vec<String>,
    /// For each node, the distinct nodes it reads, in argument order.
    pub producers: Vec<Vec<usize>>,
    /// For each node, the distinct statements reading it, in program order.
    pub consumers: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Dag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn consumer_count(&self, name: &str) -> usize {
        self.node(name).map_or(0, |n| self.consumers[n].len())
    }

    pub fn stmt_node(&self, stmt: usize) -> usize {
        self.nodes
            .iter()
            .position(|n| *n == DagNode::Stmt(stmt))
            .expect("statement node")
    }

    pub fn sources(&self) -> impl Iterator<Item = &ColRef> {
        self.nodes.iter().filter_map(|n| match n {
            DagNode::Source(c) => Some(c),
            DagNode::Stmt(_) => None,
        })
    }

    /// Nodes in a topological order that keeps program order where it can.
    pub fn topo_order(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.producers.iter().map(|p| p.len()).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..self.len()).filter(|&n| indeg[n] == 0).collect();
        let mut out = Vec::with_capacity(self.len());
        while let Some(n) = ready.pop_first() {
            out.push(n);
            for &c in &self.consumers[n] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        out
    }

    /// Whether `anc` reaches `desc` along def-use edges.
    pub fn is_ancestor(&self, anc: usize, desc: usize) -> bool {
        let mut stack = vec![desc];
        let mut seen = vec![false; self.len()];
        while let Some(n) = stack.pop() {
            for &p in &self.producers[n] {
                if p == anc {
                    return true;
                }
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        false
    }
}

/// Builds the def-use graph of a valid program.
pub fn build_dag(p: &Program) -> Result<Dag, TcapError> {
    let diags = validate(p);
    if !diags.is_empty() {
        return Err(TcapError::Invalid(diags));
    }
    let mut nodes: Vec<DagNode> = p.sources().into_iter().map(DagNode::Source).collect();
    nodes.extend((0..p.stmts.len()).map(DagNode::Stmt));
    let names: Vec<String> = nodes
        .iter()
        .map(|n| match n {
            DagNode::Source(c) => c.list.clone(),
            DagNode::Stmt(i) => p.stmts[*i].out.clone(),
        })
        .collect();
    let index: HashMap<String, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let mut producers = vec![Vec::new(); nodes.len()];
    let mut consumers = vec![Vec::new(); nodes.len()];
    for (node, n) in nodes.iter().enumerate() {
        if let DagNode::Stmt(i) = n {
            for list in p.stmts[*i].op.input_lists() {
                let src = index[list];
                producers[node].push(src);
                consumers[src].push(node);
            }
        }
    }
    Ok(Dag {
        nodes,
        names,
        producers,
        consumers,
        index,
    })
}
