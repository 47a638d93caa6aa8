//! Radial feeder model in per-unit.
//!
//! A feeder is a spanning tree rooted at the head node (substation or
//! regulator-controlled boundary bus). The head has a fixed voltage magnitude
//! and is excluded from all length-`n` state vectors; non-head nodes are
//! addressed by their 0-based position in declaration order, which also fixes
//! the ordering of the reduced generator vector everywhere downstream.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// What a node does: draws power, hosts an inverter, or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Load,
    Generator,
    Junction,
}

impl NodeRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeRole::Load => "load",
            NodeRole::Generator => "generator",
            NodeRole::Junction => "junction",
        }
    }
}

/// A non-head node.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: String,
    pub role: NodeRole,
    /// Base voltage of the node's level in kV, when the source file declared one.
    pub base_kv: Option<f64>,
}

/// Series branch feeding a node from its parent (per-unit impedance).
#[derive(Debug, Clone, Copy)]
pub struct BranchImpedance {
    pub r: f64,
    pub x: f64,
}

/// Raw branch description consumed by [`FeederBuilder`].
#[derive(Debug, Clone)]
pub struct BranchDesc {
    pub from: String,
    pub to: String,
    pub r_pu: f64,
    pub x_pu: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetworkError {
    #[error("feeder has no nodes")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("branch references undeclared node `{0}`")]
    UnknownNode(String),
    #[error("no unique head node: every id appears as a branch target or ids {0:?} never do")]
    NoUniqueHead(Vec<String>),
    #[error("node `{0}` has multiple parent branches")]
    MultipleParents(String),
    #[error("node `{0}` is not reachable from the head node")]
    Disconnected(String),
    #[error("branch into `{0}` has negative resistance {1}")]
    NegativeResistance(String, f64),
    #[error("branch into `{0}` has non-positive reactance {1} (inductive lines assumed)")]
    NonPositiveReactance(String, f64),
    #[error("head voltage must be positive, got {0}")]
    BadHeadVoltage(f64),
    #[error("base MVA must be positive, got {0}")]
    BadBaseMva(f64),
    #[error("non-finite impedance on branch into `{0}`")]
    NonFiniteImpedance(String),
}

/// Immutable per-unit feeder model. Construct through [`FeederBuilder`].
#[derive(Debug, Clone)]
pub struct NetworkModel {
    head_id: String,
    head_voltage: f64,
    base_mva: f64,
    base_kv_levels: Vec<f64>,
    nodes: Vec<NodeRecord>,
    /// Parent per node; `None` means the head node.
    parent: Vec<Option<usize>>,
    /// Impedance of the branch from the parent into each node.
    impedance: Vec<BranchImpedance>,
    children: Vec<Vec<usize>>,
    /// Node positions in breadth-first order from the head.
    bfs_order: Vec<usize>,
    /// Branch count between each node and the head.
    depth: Vec<usize>,
    /// Ascending positions of generator nodes.
    generator_set: Vec<usize>,
}

/// Collects a feeder description and validates it into a [`NetworkModel`].
///
/// The head node is detected structurally: it is the unique id that feeds
/// branches but is never fed by one. It may optionally appear in the node
/// list (its role is ignored); all other nodes are indexed in declaration
/// order.
#[derive(Debug, Clone)]
pub struct FeederBuilder {
    pub base_mva: f64,
    pub head_voltage: f64,
    pub nodes: Vec<NodeRecord>,
    pub branches: Vec<BranchDesc>,
}

impl FeederBuilder {
    pub fn new(base_mva: f64, head_voltage: f64) -> Self {
        FeederBuilder {
            base_mva,
            head_voltage,
            nodes: Vec::new(),
            branches: Vec::new(),
        }
    }

    pub fn node(mut self, id: &str, role: NodeRole) -> Self {
        self.nodes.push(NodeRecord {
            id: String::from(id),
            role,
            base_kv: None,
        });
        self
    }

    pub fn node_kv(mut self, id: &str, role: NodeRole, base_kv: f64) -> Self {
        self.nodes.push(NodeRecord {
            id: String::from(id),
            role,
            base_kv: Some(base_kv),
        });
        self
    }

    pub fn branch(mut self, from: &str, to: &str, r_pu: f64, x_pu: f64) -> Self {
        self.branches.push(BranchDesc {
            from: String::from(from),
            to: String::from(to),
            r_pu,
            x_pu,
        });
        self
    }

    pub fn build(self) -> Result<NetworkModel, NetworkError> {
        if self.nodes.is_empty() && self.branches.is_empty() {
            return Err(NetworkError::Empty);
        }
        if !(self.head_voltage > 0.0) || !self.head_voltage.is_finite() {
            return Err(NetworkError::BadHeadVoltage(self.head_voltage));
        }
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(NetworkError::BadBaseMva(self.base_mva));
        }

        for (i, a) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|b| b.id == a.id) {
                return Err(NetworkError::DuplicateNodeId(a.id.clone()));
            }
        }

        // Head detection: the unique branch source that is never a target.
        let is_target = |id: &str| self.branches.iter().any(|b| b.to == id);
        let mut head_candidates: Vec<String> = Vec::new();
        for b in &self.branches {
            if !is_target(&b.from) && !head_candidates.iter().any(|h| *h == b.from) {
                head_candidates.push(b.from.clone());
            }
        }
        if head_candidates.len() != 1 {
            return Err(NetworkError::NoUniqueHead(head_candidates));
        }
        let head_id = head_candidates.remove(0);

        let nodes: Vec<NodeRecord> = self
            .nodes
            .into_iter()
            .filter(|r| r.id != head_id)
            .collect();
        if nodes.is_empty() {
            return Err(NetworkError::Empty);
        }
        let n = nodes.len();
        let index_of = |id: &str| nodes.iter().position(|r| r.id == id);

        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut impedance = vec![BranchImpedance { r: 0.0, x: 0.0 }; n];
        let mut has_parent = vec![false; n];
        for b in &self.branches {
            let to = index_of(&b.to).ok_or_else(|| NetworkError::UnknownNode(b.to.clone()))?;
            if has_parent[to] {
                return Err(NetworkError::MultipleParents(b.to.clone()));
            }
            has_parent[to] = true;
            parent[to] = if b.from == head_id {
                None
            } else {
                Some(index_of(&b.from).ok_or_else(|| NetworkError::UnknownNode(b.from.clone()))?)
            };
            if !b.r_pu.is_finite() || !b.x_pu.is_finite() {
                return Err(NetworkError::NonFiniteImpedance(b.to.clone()));
            }
            if b.r_pu < 0.0 {
                return Err(NetworkError::NegativeResistance(b.to.clone(), b.r_pu));
            }
            if b.x_pu <= 0.0 {
                return Err(NetworkError::NonPositiveReactance(b.to.clone(), b.x_pu));
            }
            impedance[to] = BranchImpedance { r: b.r_pu, x: b.x_pu };
        }
        if let Some(i) = has_parent.iter().position(|h| !h) {
            return Err(NetworkError::Disconnected(nodes[i].id.clone()));
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut roots: Vec<usize> = Vec::new();
        for (i, p) in parent.iter().enumerate() {
            match p {
                Some(j) => children[*j].push(i),
                None => roots.push(i),
            }
        }

        // Breadth-first walk from the head; anything left over sits on a
        // cycle detached from the head.
        let mut bfs_order = Vec::with_capacity(n);
        let mut depth = vec![0usize; n];
        let mut frontier = roots;
        for i in &frontier {
            depth[*i] = 1;
        }
        while let Some(i) = frontier.pop() {
            bfs_order.push(i);
            for &c in &children[i] {
                depth[c] = depth[i] + 1;
                frontier.push(c);
            }
        }
        if bfs_order.len() != n {
            let seen: Vec<usize> = bfs_order.clone();
            let missing = (0..n).find(|i| !seen.contains(i)).unwrap_or(0);
            return Err(NetworkError::Disconnected(nodes[missing].id.clone()));
        }
        // pop() above gives depth-first order; sort by depth for a true BFS
        // ordering so sweeps can just iterate forwards/backwards.
        bfs_order.sort_by_key(|&i| depth[i]);

        let generator_set: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.role == NodeRole::Generator)
            .map(|(i, _)| i)
            .collect();

        let mut base_kv_levels: Vec<f64> = Vec::new();
        for r in &nodes {
            if let Some(kv) = r.base_kv {
                if !base_kv_levels.iter().any(|v| (*v - kv).abs() < 1e-9) {
                    base_kv_levels.push(kv);
                }
            }
        }
        base_kv_levels.sort_by(|a, b| a.partial_cmp(b).unwrap());

        Ok(NetworkModel {
            head_id,
            head_voltage: self.head_voltage,
            base_mva: self.base_mva,
            base_kv_levels,
            nodes,
            parent,
            impedance,
            children,
            bfs_order,
            depth,
            generator_set,
        })
    }
}

impl NetworkModel {
    /// Node count excluding the head.
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn head_id(&self) -> &str {
        &self.head_id
    }

    pub fn head_voltage(&self) -> f64 {
        self.head_voltage
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn base_kv_levels(&self) -> &[f64] {
        &self.base_kv_levels
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &NodeRecord {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|r| r.id == id)
    }

    /// Ascending node positions that host inverters.
    pub fn generator_set(&self) -> &[usize] {
        &self.generator_set
    }

    pub fn n_g(&self) -> usize {
        self.generator_set.len()
    }

    /// Parent position of a node; `None` means it hangs off the head.
    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    /// Impedance of the branch from the parent into `idx`.
    pub fn branch_into(&self, idx: usize) -> BranchImpedance {
        self.impedance[idx]
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    /// Node positions in breadth-first order from the head.
    pub fn bfs_order(&self) -> &[usize] {
        &self.bfs_order
    }

    /// Branch count between a node and the head.
    pub fn depth(&self, idx: usize) -> usize {
        self.depth[idx]
    }

    pub fn depths(&self) -> &[usize] {
        &self.depth
    }

    /// Node positions on the path from `idx` up to (excluding) the head,
    /// starting at `idx` itself.
    pub fn path_to_head(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path
    }

    /// Structural hash of the per-unit model, used to pair derived artifacts
    /// (models, designs, scenario sets) with the feeder they came from.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(self.head_id.as_bytes());
        h.write_f64(self.head_voltage);
        h.write_f64(self.base_mva);
        for (i, r) in self.nodes.iter().enumerate() {
            h.write(r.id.as_bytes());
            h.write(&[match r.role {
                NodeRole::Load => 1,
                NodeRole::Generator => 2,
                NodeRole::Junction => 3,
            }]);
            match r.base_kv {
                Some(kv) => {
                    h.write(&[1]);
                    h.write_f64(kv);
                }
                None => h.write(&[0]),
            }
            h.write_usize(match self.parent[i] {
                Some(p) => p + 1,
                None => 0,
            });
            h.write_f64(self.impedance[i].r);
            h.write_f64(self.impedance[i].x);
        }
        h.finish()
    }
}

/// Per-invariant result of [`validate_radial`]. Failures are reported, not
/// thrown; a model built through [`FeederBuilder`] always passes.
#[derive(Debug, Clone)]
pub struct TopologyReport {
    /// Branch count to the head, per node position.
    pub depths: Vec<usize>,
    /// Parent position per node (`None` = head).
    pub parents: Vec<Option<usize>>,
    pub spanning_tree: bool,
    pub impedances_ok: bool,
    pub generator_set_ok: bool,
    pub head_voltage_ok: bool,
}

impl TopologyReport {
    pub fn pass(&self) -> bool {
        self.spanning_tree && self.impedances_ok && self.generator_set_ok && self.head_voltage_ok
    }
}

/// Recompute the radiality invariants of a model and report per-node depth
/// and parent structure.
pub fn validate_radial(net: &NetworkModel) -> TopologyReport {
    let n = net.n();
    let mut reached = vec![false; n];
    let mut count = 0usize;
    for &i in net.bfs_order() {
        let ok = match net.parent(i) {
            None => true,
            Some(p) => reached[p],
        };
        if ok && !reached[i] {
            reached[i] = true;
            count += 1;
        }
    }
    let spanning_tree = count == n;
    let impedances_ok = (0..n).all(|i| {
        let z = net.branch_into(i);
        z.r >= 0.0 && z.x > 0.0 && z.r.is_finite() && z.x.is_finite()
    });
    let gens = net.generator_set();
    let generator_set_ok = gens.windows(2).all(|w| w[0] < w[1]) && gens.iter().all(|&g| g < n);
    TopologyReport {
        depths: net.depths().to_vec(),
        parents: (0..n).map(|i| net.parent(i)).collect(),
        spanning_tree,
        impedances_ok,
        generator_set_ok,
        head_voltage_ok: net.head_voltage() > 0.0,
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_f64(&mut self, v: f64) {
        self.write(&v.to_bits().to_le_bytes());
    }

    fn write_usize(&mut self, v: usize) {
        self.write(&(v as u64).to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
