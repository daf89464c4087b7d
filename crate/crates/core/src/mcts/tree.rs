use crate::env::ContactState;
use crate::robot::RobotState;

pub type NodeId = usize;

/// A node and the statistics of the edge leading into it.
#[derive(Debug, Clone)]
pub struct Node {
    pub state: ContactState,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub children: Vec<NodeId>,
    pub expanded: bool,
    /// Mean backed-up reward of the incoming edge.
    pub q: f64,
    /// Backups through the incoming edge.
    pub n: u32,
    /// Heuristic of the incoming transition (goal term only at the root).
    pub h: f64,
    pub logit: Option<f64>,
    pub delta_res: Option<f64>,
    /// Predicted full robot state after reaching this node.
    pub predicted: Option<RobotState>,
}

/// Arena-allocated search tree.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<Node>,
    root_visits: u32,
    goal: ContactState,
}

impl SearchTree {
    pub fn new(root: ContactState, goal: ContactState, h_root: f64, predicted: Option<RobotState>) -> Self {
        SearchTree {
            nodes: vec![Node {
                state: root,
                parent: None,
                depth: 0,
                children: Vec::new(),
                expanded: false,
                q: 0.0,
                n: 0,
                h: h_root,
                logit: None,
                delta_res: None,
                predicted,
            }],
            root_visits: 0,
            goal,
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn goal(&self) -> &ContactState {
        &self.goal
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_goal(&self, id: NodeId) -> bool {
        self.nodes[id].state == self.goal
    }

    /// Visit count of a node: backups through its incoming edge, or the
    /// number of iterations for the root.
    pub fn visits(&self, id: NodeId) -> u32 {
        if id == 0 {
            self.root_visits
        } else {
            self.nodes[id].n
        }
    }

    pub(crate) fn add_child(&mut self, parent: NodeId, mut node: Node) -> NodeId {
        let id = self.nodes.len();
        node.parent = Some(parent);
        node.depth = self.nodes[parent].depth + 1;
        self.nodes.push(node);
        self.nodes[parent].children.push(id);
        id
    }

    pub(crate) fn mark_expanded(&mut self, id: NodeId) {
        self.nodes[id].expanded = true;
    }

    /// Node ids from the root to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// UCB score of the edge into `child`; unvisited edges score `+inf`.
    pub fn ucb(&self, child: NodeId, c: f64) -> f64 {
        let node = &self.nodes[child];
        if node.n == 0 {
            return f64::INFINITY;
        }
        let parent = node.parent.expect("child has a parent");
        let np = self.visits(parent).max(1) as f64;
        node.q + c * (np.ln() / node.n as f64).sqrt()
    }

    /// Child with the largest UCB, lowest index on ties.
    pub fn best_child(&self, id: NodeId, c: f64) -> Option<NodeId> {
        let mut best: Option<(NodeId, f64)> = None;
        for &ch in &self.nodes[id].children {
            let u = self.ucb(ch, c);
            if best.is_none_or(|(_, b)| u > b) {
                best = Some((ch, u));
            }
        }
        best.map(|b| b.0)
    }

    /// Incremental-mean update of every edge on `path` (the root has no
    /// incoming edge; its visit counter is bumped instead).
    pub fn backpropagate(&mut self, path: &[NodeId], r: f64) {
        for &id in path {
            if id == 0 {
                self.root_visits += 1;
                continue;
            }
            let n = &mut self.nodes[id];
            n.n += 1;
            n.q += (r - n.q) / n.n as f64;
        }
    }
}
