//! Breadth-first exploration of the enactments of a universe of discourse.
//!
//! Ticks are assigned Lamport-style: an emission follows its sender's last
//! observation, a reception follows both the receiver's last observation
//! and the emission. Commitment windows are scaled so that many such steps
//! fit inside one time point, and time only passes in bulk through lapse
//! moves that jump to the next pending window boundary. States are
//! identified by their observations, the number of lapses preceding each,
//! and which boundaries have lapsed when; exact ticks are forgotten.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::commitment::{CommitmentSpec, EventExpr, TimeRef};
use crate::enactment::{
    check_key_integrity, deliverable, enabled_emissions, project_model, Bindings, Delivery,
    Direction, HistoryVector, MessageInstance, ValuePool,
};
use crate::protocol::Uod;
use crate::semantics::{resolve_bound, EvaluationContext};
use crate::synthesis::ForwardingRegistry;

/// How observations are compared when deduplicating states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupMode {
    /// Each role's observations as an ordered list.
    Ordered,
    /// Each role's observations as a set; interleavings that reach the same
    /// knowledge in the same time epochs are merged.
    #[default]
    Commutative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Move {
    Emit(Arc<MessageInstance>),
    Receive(Arc<MessageInstance>),
    /// Time passes up to the given tick.
    Lapse(u64),
}

/// A window boundary as resolved in one role's model for one key binding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundaryId {
    pub role: String,
    pub commitment: usize,
    pub window: usize,
    pub upper: bool,
    pub key: Bindings,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub vector: HistoryVector,
    /// The time reached by each lapse so far.
    pub floors: Vec<u64>,
    pub lapsed: BTreeMap<BoundaryId, u16>,
    /// Whether key integrity holds. States where it fails are not expanded.
    pub viable: bool,
    pub depth: usize,
    signature: Vec<Vec<(u32, u16)>>,
}

impl Node {
    pub fn floor(&self) -> u64 {
        self.floors.last().copied().unwrap_or(0)
    }

    /// The global time of this state.
    pub fn now(&self) -> u64 {
        self.vector.clock.max(self.floor())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct StateKey {
    roles: Vec<Vec<(u32, u16)>>,
    lapsed: Vec<(u32, u16)>,
}

#[derive(Debug, Default)]
pub struct StateGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Vec<(Move, usize)>>,
    pub parent: Vec<Option<usize>>,
    /// Set when `max_states` stopped the search.
    pub exceeded: bool,
    /// Set when some state at the step limit was left unexpanded.
    pub truncated: bool,
    /// The first state satisfying the search goal, if one was given.
    pub found: Option<usize>,
}

impl StateGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn complete(&self) -> bool {
        !self.exceeded && !self.truncated
    }

    /// Moves leading from the initial state to `id`.
    pub fn path_to(&self, id: usize) -> Vec<Move> {
        let mut moves = Vec::new();
        let mut at = id;
        while let Some(p) = self.parent[at] {
            let m = self.edges[p]
                .iter()
                .find(|(_, t)| *t == at)
                .map(|(m, _)| m.clone())
                .expect("parent edge recorded");
            moves.push(m);
            at = p;
        }
        moves.reverse();
        moves
    }

    /// States from which some state in `targets` is reachable.
    pub fn co_reachable(&self, targets: &[bool]) -> Vec<bool> {
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (from, out) in self.edges.iter().enumerate() {
            for (_, to) in out {
                reverse[*to].push(from);
            }
        }
        let mut seen = targets.to_vec();
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|i| targets[*i]).collect();
        while let Some(n) = queue.pop_front() {
            for &p in &reverse[n] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// The nearest state reachable from `from` that satisfies `target`.
    pub fn nearest(&self, from: usize, target: impl Fn(usize) -> bool) -> Option<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            if target(n) {
                return Some(n);
            }
            for (_, t) in &self.edges[n] {
                if !seen[*t] {
                    seen[*t] = true;
                    queue.push_back(*t);
                }
            }
        }
        None
    }
}

/// Settings shared by every exploration.
#[derive(Debug, Clone)]
pub struct Settings {
    pub pool: ValuePool,
    pub delivery: Delivery,
    pub dedup: DedupMode,
    pub max_states: usize,
    pub max_steps: Option<usize>,
    pub time_scale: u64,
    pub punctual: bool,
    /// Expand the most recently discovered state first.
    pub depth_first: bool,
}

type Window = (TimeRef, TimeRef);

/// Stopping condition for [`Explorer::explore`]; the flag tells whether the
/// state has no allowed moves.
pub type Goal<'a> = &'a dyn Fn(&Node, bool) -> bool;

pub struct Explorer<'a> {
    uod: &'a Uod,
    settings: Settings,
    fwd: ForwardingRegistry,
    commitments: Vec<CommitmentSpec>,
    windows: Vec<Vec<Window>>,
    observations: HashMap<(Arc<MessageInstance>, Direction), u32>,
    boundaries: HashMap<BoundaryId, u32>,
    roles: Vec<String>,
}

fn collect_windows(e: &EventExpr, out: &mut Vec<Window>) {
    match e {
        EventExpr::Base(_) => {}
        EventExpr::Lifecycle { commitment, .. } => {
            for part in [
                &commitment.create,
                &commitment.detach,
                &commitment.discharge,
            ] {
                collect_windows(part, out);
            }
        }
        EventExpr::Window { inner, from, to } => {
            if !out.contains(&(from.clone(), to.clone())) {
                out.push((from.clone(), to.clone()));
            }
            collect_windows(inner, out);
            for t in [from, to] {
                if let TimeRef::After { event, .. } = t {
                    collect_windows(event, out);
                }
            }
        }
        EventExpr::And(l, r) | EventExpr::Or(l, r) | EventExpr::Except(l, r) => {
            collect_windows(l, out);
            collect_windows(r, out);
        }
    }
}

impl<'a> Explorer<'a> {
    /// `commitments` must already be scaled to the tick resolution.
    pub fn new(uod: &'a Uod, settings: Settings, commitments: Vec<CommitmentSpec>) -> Self {
        let windows = commitments
            .iter()
            .map(|c| {
                let mut w = Vec::new();
                for part in [&c.create, &c.detach, &c.discharge] {
                    collect_windows(part, &mut w);
                }
                w
            })
            .collect();
        Explorer {
            uod,
            fwd: ForwardingRegistry::from_uod(uod),
            settings,
            commitments,
            windows,
            observations: HashMap::new(),
            boundaries: HashMap::new(),
            roles: uod.roles.clone(),
        }
    }

    pub fn forwarding(&self) -> &ForwardingRegistry {
        &self.fwd
    }

    pub fn commitments(&self) -> &[CommitmentSpec] {
        &self.commitments
    }

    fn intern_observation(&mut self, inst: &Arc<MessageInstance>, dir: Direction) -> u32 {
        let next = self.observations.len() as u32;
        *self.observations.entry((inst.clone(), dir)).or_insert(next)
    }

    fn key(&mut self, node: &Node) -> StateKey {
        let mut roles = node.signature.clone();
        if self.settings.dedup == DedupMode::Commutative {
            for r in &mut roles {
                r.sort_unstable();
            }
        }
        let mut lapsed = Vec::with_capacity(node.lapsed.len());
        for (b, at) in &node.lapsed {
            let next = self.boundaries.len() as u32;
            let id = *self.boundaries.entry(b.clone()).or_insert(next);
            lapsed.push((id, *at));
        }
        lapsed.sort_unstable();
        StateKey { roles, lapsed }
    }

    fn root(&self) -> Node {
        Node {
            vector: HistoryVector::for_uod(self.uod),
            floors: Vec::new(),
            lapsed: BTreeMap::new(),
            viable: true,
            depth: 0,
            signature: vec![Vec::new(); self.roles.len()],
        }
    }

    fn role_index(&self, role: &str) -> usize {
        self.roles
            .iter()
            .position(|r| r == role)
            .expect("instance roles belong to the universe of discourse")
    }

    fn apply(&mut self, node: &Node, m: &Move) -> Node {
        let mut next = node.clone();
        next.depth += 1;
        let floor = node.floor();
        match m {
            Move::Emit(inst) => {
                let h = &node.vector.histories[&inst.sender];
                let tick = (h.last_tick().unwrap_or(0) + 1).max(floor + 1);
                next.vector
                    .emit(inst.clone(), tick)
                    .expect("generated emissions extend the sender's history");
                let id = self.intern_observation(inst, Direction::Emit);
                let r = self.role_index(&inst.sender);
                next.signature[r].push((id, node.floors.len() as u16));
                next.viable = check_key_integrity(&next.vector).is_ok();
            }
            Move::Receive(inst) => {
                let h = &node.vector.histories[&inst.receiver];
                let sent = node
                    .vector
                    .emission_tick(inst)
                    .expect("only in-flight messages are received");
                let tick = (h.last_tick().unwrap_or(0) + 1)
                    .max(sent + 1)
                    .max(floor + 1);
                next.vector
                    .receive(inst.clone(), tick)
                    .expect("only in-flight messages are received");
                let id = self.intern_observation(inst, Direction::Receive);
                let r = self.role_index(&inst.receiver);
                next.signature[r].push((id, node.floors.len() as u16));
            }
            Move::Lapse(to) => {
                next.floors.push(*to);
                let index = next.floors.len() as u16;
                for (b, at) in self.boundaries_of(node) {
                    if at <= *to {
                        next.lapsed.entry(b).or_insert(index);
                    }
                }
            }
        }
        next
    }

    /// Finite window boundaries as resolved in the debtor's and creditor's
    /// models of every commitment.
    fn boundaries_of(&self, node: &Node) -> Vec<(BoundaryId, u64)> {
        let mut out = Vec::new();
        let now = node.now();
        for (ci, c) in self.commitments.iter().enumerate() {
            for role in [&c.debtor, &c.creditor] {
                let Ok(model) = project_model(&node.vector, role, &self.fwd) else {
                    continue;
                };
                let ctx = EvaluationContext::new(&model, now);
                let mut keys: Vec<&Bindings> =
                    model.entries.iter().map(|e| &e.key_binding).collect();
                keys.sort();
                keys.dedup();
                for (wi, (from, to)) in self.windows[ci].iter().enumerate() {
                    for key in &keys {
                        for (upper, bound) in [(false, from), (true, to)] {
                            if let Ok(Some(at)) = resolve_bound(bound, key, &ctx) {
                                if at != u64::MAX && at != 0 {
                                    out.push((
                                        BoundaryId {
                                            role: role.clone(),
                                            commitment: ci,
                                            window: wi,
                                            upper,
                                            key: (*key).clone(),
                                        },
                                        at,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Every move available in `node`, in a fixed order: emissions by role,
    /// then receptions, then a lapse.
    pub fn moves(&self, node: &Node) -> Vec<Move> {
        if !node.viable {
            return Vec::new();
        }
        let mut moves = Vec::new();
        let mut forward_enabled = false;
        let mut base_enabled = false;
        for role in &self.roles {
            for inst in enabled_emissions(&node.vector, self.uod, role, &self.settings.pool) {
                if self.fwd.is_forward(&inst.schema) {
                    forward_enabled = true;
                } else {
                    base_enabled = true;
                }
                moves.push(Move::Emit(Arc::new(inst)));
            }
        }
        let flying = deliverable(&node.vector, self.settings.delivery);
        let quiet = (flying.is_empty() && !forward_enabled)
            || (!self.settings.punctual
                && !base_enabled
                && node
                    .vector
                    .in_flight()
                    .iter()
                    .all(|i| self.fwd.is_forward(&i.schema)));
        moves.extend(flying.into_iter().map(Move::Receive));
        if !self.commitments.is_empty() && quiet {
            let now = node.now();
            let pending: Vec<u64> = self
                .boundaries_of(node)
                .into_iter()
                .map(|(_, at)| at)
                .filter(|at| *at > now)
                .collect();
            if let Some(&first) = pending.iter().min() {
                let reach = first + self.settings.time_scale / 2;
                let to = pending
                    .iter()
                    .copied()
                    .filter(|at| *at <= reach)
                    .max()
                    .unwrap_or(first);
                moves.push(Move::Lapse(to));
            }
        }
        moves
    }

    /// Explores from the empty vector. `allow` filters moves; exploration
    /// stops at the first state satisfying `goal`, which is also told
    /// whether the state has no allowed moves.
    pub fn explore(
        &mut self,
        allow: &dyn Fn(&Node, &Move) -> bool,
        goal: Option<Goal<'_>>,
    ) -> StateGraph {
        let mut graph = StateGraph::default();
        let mut index: HashMap<StateKey, usize> = HashMap::new();
        let root = self.root();
        let key = self.key(&root);
        index.insert(key, 0);
        graph.nodes.push(root);
        graph.edges.push(Vec::new());
        graph.parent.push(None);

        let mut queue = VecDeque::from([0usize]);
        loop {
            let next = if self.settings.depth_first {
                queue.pop_back()
            } else {
                queue.pop_front()
            };
            let Some(id) = next else { break };
            let node = graph.nodes[id].clone();
            let moves: Vec<Move> = self
                .moves(&node)
                .into_iter()
                .filter(|m| allow(&node, m))
                .collect();
            if let Some(goal) = goal {
                if goal(&node, moves.is_empty()) {
                    graph.found = Some(id);
                    return graph;
                }
            }
            if self
                .settings
                .max_steps
                .is_some_and(|limit| node.depth >= limit)
            {
                graph.truncated |= !moves.is_empty();
                continue;
            }
            for m in moves {
                let next = self.apply(&node, &m);
                let key = self.key(&next);
                let target = match index.get(&key) {
                    Some(&t) => t,
                    None => {
                        if graph.nodes.len() >= self.settings.max_states {
                            graph.exceeded = true;
                            return graph;
                        }
                        let t = graph.nodes.len();
                        index.insert(key, t);
                        graph.nodes.push(next);
                        graph.edges.push(Vec::new());
                        graph.parent.push(Some(id));
                        queue.push_back(t);
                        t
                    }
                };
                if !graph.edges[id].iter().any(|(_, t)| *t == target) {
                    graph.edges[id].push((m, target));
                }
            }
        }
        graph
    }
}
