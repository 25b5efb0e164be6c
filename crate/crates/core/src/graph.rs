//! Social graphs, opinion graphs and profiles.
//!
//! A dynamic social graph is a [`GraphSchedule`]: a pure function of the time
//! step (and, for random graphs, a seed), so every trial replays exactly.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentId, ModelParams, Norm, OpinionState};

/// Undirected simple edge set, kept sorted as `(min, max)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct EdgeSet {
    edges: Vec<(AgentId, AgentId)>,
}

impl EdgeSet {
    pub fn empty() -> Self {
        EdgeSet::default()
    }

    /// Normalizes, sorts and deduplicates; rejects self-loops and ids `>= n`.
    pub fn from_pairs<I>(pairs: I, n: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (AgentId, AgentId)>,
    {
        let mut edges = Vec::new();
        for (i, j) in pairs {
            if i == j {
                return Err(Error::config(format!("self-loop ({i}, {i}) in edge set")));
            }
            if i >= n || j >= n {
                return Err(Error::config(format!(
                    "edge ({i}, {j}) out of range for {n} agents"
                )));
            }
            edges.push((i.min(j), i.max(j)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(EdgeSet { edges })
    }

    /// Every pair of distinct agents.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        EdgeSet { edges }
    }

    pub fn path(n: usize) -> Self {
        EdgeSet {
            edges: (1..n).map(|i| (i - 1, i)).collect(),
        }
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((0, n - 1));
        }
        edges.sort_unstable();
        EdgeSet { edges }
    }

    /// Agent 0 joined to everyone else.
    pub fn star(n: usize) -> Self {
        EdgeSet {
            edges: (1..n).map(|i| (0, i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn as_slice(&self) -> &[(AgentId, AgentId)] {
        &self.edges
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, i: AgentId, j: AgentId) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Largest vertex id mentioned, if any.
    pub fn max_vertex(&self) -> Option<AgentId> {
        self.edges.iter().map(|&(_, j)| j).max()
    }

    /// Sorted-merge intersection.
    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        let (a, b) = (&self.edges, &other.edges);
        let mut out = Vec::with_capacity(a.len().min(b.len()));
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[x]);
                    x += 1;
                    y += 1;
                }
            }
        }
        EdgeSet { edges: out }
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.iter().all(|&(i, j)| other.contains(i, j))
    }
}

impl FromIterator<(AgentId, AgentId)> for EdgeSet {
    /// Unchecked against `n`; self-loops are dropped.
    fn from_iter<T: IntoIterator<Item = (AgentId, AgentId)>>(iter: T) -> Self {
        let mut edges: Vec<_> = iter
            .into_iter()
            .filter(|(i, j)| i != j)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        EdgeSet { edges }
    }
}

impl Serialize for EdgeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[AgentId; 2]> = self.edges.iter().map(|&(i, j)| [i, j]).collect();
        pairs.serialize(s)
    }
}

/// Pairs `(i, j)` with `|x_i - x_j| <= epsilon`.
pub fn opinion_graph(state: &OpinionState, params: &ModelParams) -> EdgeSet {
    let n = state.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if state.distance(i, j, params.norm) <= params.epsilon {
                edges.push((i, j));
            }
        }
    }
    EdgeSet { edges }
}

/// Edges that are both socially and opinion connected at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub time: u64,
    pub edges: EdgeSet,
}

/// Intersection of a social and an opinion edge set.
pub fn profile(social: &EdgeSet, opinion: &EdgeSet, time: u64) -> Profile {
    Profile {
        time,
        edges: social.intersection(opinion),
    }
}

/// Profile of `state` under `social`, filtering social edges by distance
/// directly instead of building the opinion graph.
pub fn profile_of(state: &OpinionState, social: &EdgeSet, params: &ModelParams) -> Profile {
    let edges = social
        .iter()
        .filter(|&(i, j)| state.distance(i, j, params.norm) <= params.epsilon)
        .collect::<Vec<_>>();
    Profile {
        time: state.time(),
        edges: EdgeSet { edges },
    }
}

/// Longest profile edge of `state` under `social`, or `None` for an empty profile.
pub fn longest_profile_edge(
    state: &OpinionState,
    social: &EdgeSet,
    params: &ModelParams,
) -> Option<f64> {
    social
        .iter()
        .map(|(i, j)| state.distance(i, j, params.norm))
        .filter(|d| *d <= params.epsilon)
        .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
}

/// Union-find with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    sets: usize,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Returns `true` if two distinct sets were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }
}

/// Partition of `[0, n)` into connected components. Blocks are sorted
/// internally and ordered by their smallest member.
pub fn connected_components(edges: &EdgeSet, n: usize) -> Vec<Vec<AgentId>> {
    let mut dsu = DisjointSet::new(n);
    for (i, j) in edges.iter() {
        dsu.union(i, j);
    }
    let mut block_of_root: Vec<Option<usize>> = vec![None; n];
    let mut blocks: Vec<Vec<AgentId>> = Vec::new();
    for v in 0..n {
        let r = dsu.find(v);
        match block_of_root[r] {
            Some(b) => blocks[b].push(v),
            None => {
                block_of_root[r] = Some(blocks.len());
                blocks.push(vec![v]);
            }
        }
    }
    blocks
}

/// Whether the graph on `[0, n)` is connected. A graph on at most one vertex is.
pub fn is_connected(edges: &EdgeSet, n: usize) -> bool {
    if n <= 1 {
        return true;
    }
    let mut dsu = DisjointSet::new(n);
    for (i, j) in edges.iter() {
        dsu.union(i, j);
        if dsu.set_count() == 1 {
            return true;
        }
    }
    dsu.set_count() == 1
}

/// Pairs checked by [`is_delta_trivial`].
#[derive(Debug, Clone, Copy)]
pub enum Pairs<'a> {
    All,
    Edges(&'a EdgeSet),
}

/// True iff every listed pair is within `delta`.
pub fn is_delta_trivial(state: &OpinionState, pairs: Pairs<'_>, delta: f64, norm: Norm) -> Result<bool> {
    if !(delta > 0.0) {
        return Err(Error::usage(format!("delta must be positive, got {delta}")));
    }
    Ok(match pairs {
        Pairs::All => {
            let n = state.len();
            (0..n).all(|i| (i + 1..n).all(|j| state.distance(i, j, norm) <= delta))
        }
        Pairs::Edges(e) => e.iter().all(|(i, j)| state.distance(i, j, norm) <= delta),
    })
}

/// Time-indexed social edge sets `E(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSchedule {
    Constant(EdgeSet),
    /// `members[t mod members.len()]`.
    Cyclic(Vec<EdgeSet>),
    /// Every pair kept independently with probability `p`, resampled each step
    /// from a stream keyed by `(seed, t)`.
    ErdosRenyi { p: f64, seed: u64 },
    /// Step-keyed sets; the latest entry at or before `t` applies.
    FromFile(BTreeMap<u64, EdgeSet>),
}

impl GraphSchedule {
    pub fn complete(n: usize) -> Self {
        GraphSchedule::Constant(EdgeSet::complete(n))
    }

    pub fn path(n: usize) -> Self {
        GraphSchedule::Constant(EdgeSet::path(n))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |e: &EdgeSet| match e.max_vertex() {
            Some(v) if v >= n => Err(Error::config(format!(
                "schedule mentions agent {v} but there are only {n} agents"
            ))),
            _ => Ok(()),
        };
        match self {
            GraphSchedule::Constant(e) => check(e),
            GraphSchedule::Cyclic(list) => {
                if list.is_empty() {
                    return Err(Error::config("cyclic schedule needs at least one member"));
                }
                list.iter().try_for_each(check)
            }
            GraphSchedule::ErdosRenyi { p, .. } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::config(format!("edge probability {p} outside [0, 1]")))
                }
            }
            GraphSchedule::FromFile(map) => {
                if !map.contains_key(&0) {
                    return Err(Error::config("schedule file has no entry for step 0"));
                }
                map.values().try_for_each(check)
            }
        }
    }

    /// `E(t)` for `n` agents.
    pub fn edges_at(&self, t: u64, n: usize) -> Cow<'_, EdgeSet> {
        match self {
            GraphSchedule::Constant(e) => Cow::Borrowed(e),
            GraphSchedule::Cyclic(list) => Cow::Borrowed(&list[(t % list.len() as u64) as usize]),
            GraphSchedule::ErdosRenyi { p, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(t);
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < *p {
                            edges.push((i, j));
                        }
                    }
                }
                Cow::Owned(EdgeSet { edges })
            }
            GraphSchedule::FromFile(map) => Cow::Borrowed(
                map.range(..=t)
                    .next_back()
                    .map(|(_, e)| e)
                    .expect("validated schedule has an entry for step 0"),
            ),
        }
    }

    /// Declared capability: the social graph is connected at infinitely many
    /// steps. File schedules never claim it.
    pub fn connected_infinitely_often(&self, n: usize) -> bool {
        match self {
            GraphSchedule::Constant(e) => is_connected(e, n),
            GraphSchedule::Cyclic(list) => list.iter().any(|e| is_connected(e, n)),
            GraphSchedule::ErdosRenyi { p, .. } => *p > 0.0 || n <= 1,
            GraphSchedule::FromFile(_) => false,
        }
    }

    /// Same schedule with its random stream rekeyed; deterministic schedules
    /// are returned unchanged.
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            GraphSchedule::ErdosRenyi { p, .. } => GraphSchedule::ErdosRenyi { p: *p, seed },
            other => other.clone(),
        }
    }
}

/// Insertion-ordered `step -> [[i, j], ...]` entries of a schedule file.
struct OrderedEntries(Vec<(String, Vec<[AgentId; 2]>)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping step numbers to lists of [i, j] pairs")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Vec<[AgentId; 2]>>()? {
                    out.push((k, v));
                }
                Ok(OrderedEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Parses a schedule file: a JSON object from step to a list of `[i, j]`
/// pairs, with strictly increasing steps starting at 0.
pub fn parse_schedule_file(json: &str, n: usize) -> Result<GraphSchedule> {
    let entries: OrderedEntries =
        serde_json::from_str(json).map_err(|e| Error::config(format!("schedule file: {e}")))?;
    let mut map = BTreeMap::new();
    let mut last: Option<u64> = None;
    for (key, pairs) in entries.0 {
        let step: u64 = key
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("schedule file: step key {key:?} is not an integer")))?;
        if let Some(prev) = last {
            if step <= prev {
                return Err(Error::config(format!(
                    "schedule file: steps must be strictly increasing ({step} after {prev})"
                )));
            }
        }
        last = Some(step);
        map.insert(step, EdgeSet::from_pairs(pairs.into_iter().map(|[i, j]| (i, j)), n)?);
    }
    let schedule = GraphSchedule::FromFile(map);
    schedule.validate(n)?;
    Ok(schedule)
}

/// Serializes a step-keyed schedule in the file format read by [`parse_schedule_file`].
pub fn schedule_file_json(map: &BTreeMap<u64, EdgeSet>) -> String {
    let parts: Vec<String> = map
        .iter()
        .map(|(k, e)| {
            format!(
                "\"{k}\":{}",
                serde_json::to_string(e).expect("edge set serializes")
            )
        })
        .collect();
    format!("{{{}}}", parts.join(","))
}
