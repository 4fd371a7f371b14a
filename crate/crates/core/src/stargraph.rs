//! Star-graph path-planning instances.
//!
//! A star graph G(d, n) has a start node with `d` outgoing arms, each a
//! simple chain of `n - 1` nodes. The goal is the tail of exactly one arm, so
//! the start->goal path is unique and the only real decision is the first
//! step off the start node.
//!
//! Linearized form (tokens concatenated without spaces):
//! `u,v|u,v|.../start,goal=` followed by the completion `start,v1,...,goal`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::example::Example;
use crate::seed;

pub type Node = u32;

pub const DEFAULT_LABEL_POOL: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StarError {
    #[error("invalid star graph parameters: {0}")]
    Params(String),
    #[error("label pool of {pool} is too small for G({degree},{path_len}); need at least {need}")]
    PoolTooSmall { pool: usize, degree: usize, path_len: usize, need: usize },
    #[error("cannot parse star-graph example: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StarParams {
    pub degree: usize,
    pub path_len: usize,
    pub label_pool: usize,
}

impl StarParams {
    pub fn new(degree: usize, path_len: usize) -> Self {
        Self { degree, path_len, label_pool: DEFAULT_LABEL_POOL }
    }

    pub fn node_count(&self) -> usize {
        self.degree * (self.path_len - 1) + 1
    }

    pub fn validate(&self) -> Result<(), StarError> {
        if self.degree < 1 {
            return Err(StarError::Params(format!("degree must be >= 1, got {}", self.degree)));
        }
        if self.path_len < 2 {
            return Err(StarError::Params(format!("path_len must be >= 2, got {}", self.path_len)));
        }
        let need = self.node_count();
        if self.label_pool < need {
            return Err(StarError::PoolTooSmall {
                pool: self.label_pool,
                degree: self.degree,
                path_len: self.path_len,
                need,
            });
        }
        Ok(())
    }

    /// Task id as shown in reports, e.g. `G(2,5)`.
    pub fn task_id(&self) -> String {
        format!("G({},{})", self.degree, self.path_len)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarGraphInstance {
    pub degree: usize,
    pub path_len: usize,
    /// Directed edges in presentation order.
    pub edges: Vec<(Node, Node)>,
    pub start: Node,
    pub goal: Node,
    /// `path[0] == start`, `path[1]` is the hard node, last is the goal.
    pub path: Vec<Node>,
}

pub fn generate_star(params: StarParams, rng_seed: u64) -> Result<StarGraphInstance, StarError> {
    params.validate()?;
    let StarParams { degree, path_len, label_pool } = params;
    let mut rng = seed::rng(rng_seed);
    let labels: Vec<Node> = rand::seq::index::sample(&mut rng, label_pool, params.node_count())
        .into_iter()
        .map(|x| x as Node)
        .collect();
    let start = labels[0];
    let arm_len = path_len - 1;
    let arms: Vec<&[Node]> = labels[1..].chunks(arm_len).collect();
    let goal_arm = rng.random_range(0..degree);

    let mut edges = Vec::with_capacity(degree * arm_len);
    for arm in &arms {
        edges.push((start, arm[0]));
        edges.extend(arm.windows(2).map(|w| (w[0], w[1])));
    }
    edges.shuffle(&mut rng);

    let mut path = Vec::with_capacity(path_len);
    path.push(start);
    path.extend_from_slice(arms[goal_arm]);
    let goal = *path.last().unwrap();

    Ok(StarGraphInstance { degree, path_len, edges, start, goal, path })
}

impl StarGraphInstance {
    pub fn nodes(&self) -> BTreeSet<Node> {
        self.edges.iter().flat_map(|&(u, v)| [u, v]).collect()
    }

    /// First node of every arm, in edge presentation order.
    pub fn arm_heads(&self) -> Vec<Node> {
        self.edges.iter().filter(|(u, _)| *u == self.start).map(|&(_, v)| v).collect()
    }

    pub fn successors(&self) -> BTreeMap<Node, Vec<Node>> {
        let mut succ: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
        for &(u, v) in &self.edges {
            succ.entry(u).or_default().push(v);
        }
        succ
    }

    /// Checks every structural invariant of a generated instance.
    pub fn check_invariants(&self) -> Result<(), String> {
        let succ = self.successors();
        let nodes = self.nodes();
        if nodes.len() != self.degree * (self.path_len - 1) + 1 {
            return Err(format!("expected {} distinct nodes, found {}", self.degree * (self.path_len - 1) + 1, nodes.len()));
        }
        let start_out = succ.get(&self.start).map_or(0, Vec::len);
        if start_out != self.degree {
            return Err(format!("start out-degree {start_out} != {}", self.degree));
        }
        let mut tails = 0;
        for n in &nodes {
            if *n == self.start {
                continue;
            }
            match succ.get(n).map_or(0, Vec::len) {
                0 => tails += 1,
                1 => {}
                k => return Err(format!("node {n} has out-degree {k}")),
            }
        }
        if tails != self.degree {
            return Err(format!("expected {} arm ends, found {tails}", self.degree));
        }
        for head in self.arm_heads() {
            let mut len = 1;
            let mut cur = head;
            while let Some(next) = succ.get(&cur) {
                cur = next[0];
                len += 1;
            }
            if len != self.path_len - 1 {
                return Err(format!("arm starting at {head} has {len} nodes"));
            }
        }
        let paths = all_simple_paths(&self.edges, self.start, self.goal);
        if paths != vec![self.path.clone()] {
            return Err(format!("start->goal paths {paths:?} do not equal the stored path"));
        }
        Ok(())
    }
}

/// Exhaustive DFS enumeration of every simple directed path `start -> goal`.
pub fn all_simple_paths(edges: &[(Node, Node)], start: Node, goal: Node) -> Vec<Vec<Node>> {
    let mut succ: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    for &(u, v) in edges {
        succ.entry(u).or_default().push(v);
    }
    let mut out = Vec::new();
    let mut path = vec![start];
    let mut on_path = BTreeSet::from([start]);
    fn dfs(
        succ: &BTreeMap<Node, Vec<Node>>,
        goal: Node,
        path: &mut Vec<Node>,
        on_path: &mut BTreeSet<Node>,
        out: &mut Vec<Vec<Node>>,
    ) {
        let cur = *path.last().unwrap();
        if cur == goal {
            out.push(path.clone());
            return;
        }
        for &next in succ.get(&cur).map(Vec::as_slice).unwrap_or(&[]) {
            if on_path.insert(next) {
                path.push(next);
                dfs(succ, goal, path, on_path, out);
                path.pop();
                on_path.remove(&next);
            }
        }
    }
    dfs(&succ, goal, &mut path, &mut on_path, &mut out);
    out
}

pub fn linearize_star(inst: &StarGraphInstance) -> Example {
    let mut prefix = Vec::with_capacity(inst.edges.len() * 4 + 5);
    for (i, (u, v)) in inst.edges.iter().enumerate() {
        if i > 0 {
            prefix.push("|".to_string());
        }
        prefix.extend([u.to_string(), ",".to_string(), v.to_string()]);
    }
    prefix.extend([
        "/".to_string(),
        inst.start.to_string(),
        ",".to_string(),
        inst.goal.to_string(),
        "=".to_string(),
    ]);
    Example::new(prefix, path_tokens(&inst.path))
}

/// `[a, b, c]` -> `a , b , c` as tokens.
pub fn path_tokens(path: &[Node]) -> Vec<String> {
    let mut out = Vec::with_capacity(path.len() * 2);
    for (i, n) in path.iter().enumerate() {
        if i > 0 {
            out.push(",".to_string());
        }
        out.push(n.to_string());
    }
    out
}

/// Parses a comma-separated node list. Returns `None` on any malformed token.
pub fn parse_path<S: AsRef<str>>(tokens: &[S]) -> Option<Vec<Node>> {
    if tokens.is_empty() || tokens.len().is_multiple_of(2) {
        return None;
    }
    let mut out = Vec::with_capacity(tokens.len() / 2 + 1);
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        if i % 2 == 0 {
            out.push(t.parse().ok()?);
        } else if t != "," {
            return None;
        }
    }
    Some(out)
}

fn parse_node(tok: &str) -> Result<Node, StarError> {
    tok.parse().map_err(|_| StarError::Parse(format!("expected node label, found {tok:?}")))
}

/// Inverse of [`linearize_star`]. Degree and path length are read off the
/// parsed structure.
pub fn parse_star(example: &Example) -> Result<StarGraphInstance, StarError> {
    let p = &example.prefix;
    let slash = p
        .iter()
        .position(|t| t == "/")
        .ok_or_else(|| StarError::Parse("missing '/' separator".into()))?;
    let (edge_toks, tail) = (&p[..slash], &p[slash + 1..]);
    let mut edges = Vec::new();
    for group in edge_toks.split(|t| t == "|") {
        match group {
            [u, c, v] if c == "," => edges.push((parse_node(u)?, parse_node(v)?)),
            _ => return Err(StarError::Parse(format!("bad edge group {group:?}"))),
        }
    }
    let (start, goal) = match tail {
        [s, c, g, e] if c == "," && e == "=" => (parse_node(s)?, parse_node(g)?),
        _ => return Err(StarError::Parse(format!("bad query {tail:?}"))),
    };
    let path = parse_path(&example.completion)
        .ok_or_else(|| StarError::Parse(format!("bad completion {:?}", example.completion)))?;
    let degree = edges.iter().filter(|(u, _)| *u == start).count();
    Ok(StarGraphInstance { degree, path_len: path.len(), edges, start, goal, path })
}

/// Exact match against the unique ground-truth path.
pub fn verify_path(inst: &StarGraphInstance, candidate: &[Node]) -> bool {
    candidate == inst.path.as_slice()
}
