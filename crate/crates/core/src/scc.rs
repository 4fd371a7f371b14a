//! Strongly connected components with an execution trace.
//!
//! Tarjan's algorithm runs over the adjacency matrix with roots and
//! neighbours visited in ascending order. After every DFS node-finish event
//! the current `scc_id` array is recorded; when a component root pops its
//! component, every member is relabelled with the smallest member index. The
//! first finish event can never change a label, so the first snapshot is
//! always the identity labelling `[0 1 .. n-1]`.

use rand::Rng as _;
use thiserror::Error;

use crate::example::Example;
use crate::seed;

pub const SCC_TASK_NAME: &str = "strongly_connected_components";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SccError {
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("cannot parse scc example: {0}")]
    Parse(String),
}

/// Square 0/1 adjacency matrix. Self loops are allowed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Digraph {
    n: usize,
    adj: Vec<u8>,
}

impl Digraph {
    pub fn empty(n: usize) -> Self {
        Self { n, adj: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, SccError> {
        let n = rows.len();
        let mut g = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SccError::Graph(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            for (j, &x) in row.iter().enumerate() {
                if x > 1 {
                    return Err(SccError::Graph(format!("entry ({i},{j}) = {x} is not binary")));
                }
                g.adj[i * n + j] = x;
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] == 1
    }

    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        self.adj[i * self.n + j] = u8::from(on);
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.adj
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.has_edge(i, j) {
                    g.set_edge(perm[i], perm[j], true);
                }
            }
        }
        g
    }
}

/// Every entry (diagonal included) is an independent Bernoulli(edge_prob).
pub fn generate_digraph(n: usize, edge_prob: f64, rng_seed: u64) -> Result<Digraph, SccError> {
    if n == 0 {
        return Err(SccError::Graph("graph must have at least one node".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(SccError::Graph(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut rng = seed::rng(rng_seed);
    let mut g = Digraph::empty(n);
    for i in 0..n {
        for j in 0..n {
            g.set_edge(i, j, rng.random_bool(edge_prob));
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SccTrace {
    /// One `scc_id` array per DFS finish event.
    pub snapshots: Vec<Vec<usize>>,
    pub final_labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SccInstance {
    pub graph: Digraph,
    pub trace: SccTrace,
}

impl SccInstance {
    pub fn new(graph: Digraph) -> Self {
        let trace = run_tarjan_with_trace(&graph);
        Self { graph, trace }
    }

    pub fn task_id(&self) -> String {
        format!("scc-{}", self.graph.n())
    }
}

struct Tarjan<'g> {
    graph: &'g Digraph,
    next_index: usize,
    index: Vec<Option<usize>>,
    low: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<usize>,
    scc_id: Vec<usize>,
    snapshots: Vec<Vec<usize>>,
}

impl Tarjan<'_> {
    fn visit(&mut self, v: usize) {
        self.index[v] = Some(self.next_index);
        self.low[v] = self.next_index;
        self.next_index += 1;
        self.stack.push(v);
        self.on_stack[v] = true;

        for w in 0..self.graph.n() {
            if !self.graph.has_edge(v, w) {
                continue;
            }
            match self.index[w] {
                None => {
                    self.visit(w);
                    self.low[v] = self.low[v].min(self.low[w]);
                }
                Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                Some(_) => {}
            }
        }

        if Some(self.low[v]) == self.index[v] {
            let mut members = Vec::new();
            loop {
                let w = self.stack.pop().expect("component root must be on the stack");
                self.on_stack[w] = false;
                members.push(w);
                if w == v {
                    break;
                }
            }
            let rep = *members.iter().min().unwrap();
            for m in members {
                self.scc_id[m] = rep;
            }
        }
        self.snapshots.push(self.scc_id.clone());
    }
}

pub fn run_tarjan_with_trace(graph: &Digraph) -> SccTrace {
    let n = graph.n();
    let mut t = Tarjan {
        graph,
        next_index: 0,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        scc_id: (0..n).collect(),
        snapshots: Vec::with_capacity(n),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    let final_labels = t.scc_id;
    SccTrace { snapshots: t.snapshots, final_labels }
}

/// Reachability-closure labelling: `label[i] = min { j : i ~> j and j ~> i }`.
pub fn scc_oracle(graph: &Digraph) -> Vec<usize> {
    let n = graph.n();
    let mut reach = vec![false; n * n];
    for i in 0..n {
        reach[i * n + i] = true;
        for j in 0..n {
            if graph.has_edge(i, j) {
                reach[i * n + j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if !reach[i * n + k] {
                continue;
            }
            for j in 0..n {
                if reach[k * n + j] {
                    reach[i * n + j] = true;
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..n).find(|&j| reach[i * n + j] && reach[j * n + i]).unwrap())
        .collect()
}

fn push_array(out: &mut Vec<String>, values: impl IntoIterator<Item = String>) {
    out.push("[".into());
    out.extend(values);
    out.push("]".into());
}

/// Tokens of one `scc_id` array, `[ a b c ]`.
pub fn labels_tokens(labels: &[usize]) -> Vec<String> {
    let mut out = Vec::with_capacity(labels.len() + 2);
    push_array(&mut out, labels.iter().map(usize::to_string));
    out
}

/// Token offset of snapshot `i` inside a linearized completion.
pub fn snapshot_offset(n: usize, i: usize) -> usize {
    i * (n + 3)
}

/// Number of tokens one snapshot occupies (brackets included).
pub fn snapshot_width(n: usize) -> usize {
    n + 2
}

pub fn linearize_scc(inst: &SccInstance) -> Example {
    let g = &inst.graph;
    let n = g.n();
    let mut prefix: Vec<String> = vec![SCC_TASK_NAME.into(), ":".into(), "A".into(), ":".into(), "[".into()];
    for i in 0..n {
        if i > 0 {
            prefix.push(",".into());
        }
        push_array(&mut prefix, g.row(i).iter().map(u8::to_string));
    }
    prefix.extend(["]".into(), ",".into(), "initial_trace".into(), ":".into()]);
    push_array(&mut prefix, (0..n).map(|i| i.to_string()));
    prefix.extend(["trace".into(), "|".into(), "scc_id".into(), ":".into()]);

    let mut completion = Vec::new();
    for (i, snap) in inst.trace.snapshots.iter().enumerate() {
        if i > 0 {
            completion.push(",".into());
        }
        completion.extend(labels_tokens(snap));
    }
    completion.push("|".into());
    completion.extend(labels_tokens(&inst.trace.final_labels));
    Example::new(prefix, completion)
}

struct Cursor<'a> {
    toks: &'a [String],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn expect(&mut self, want: &str) -> Result<(), SccError> {
        match self.toks.get(self.pos) {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            other => Err(SccError::Parse(format!("expected {want:?} at token {}, found {other:?}", self.pos))),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn array(&mut self) -> Result<Vec<usize>, SccError> {
        self.expect("[")?;
        let mut out = Vec::new();
        while let Some(t) = self.peek() {
            if t == "]" {
                self.pos += 1;
                return Ok(out);
            }
            out.push(t.parse().map_err(|_| SccError::Parse(format!("expected integer, found {t:?}")))?);
            self.pos += 1;
        }
        Err(SccError::Parse("unterminated array".into()))
    }

    fn done(&self) -> bool {
        self.pos == self.toks.len()
    }
}

/// Parses the `[a b c]` label array after the last `|` of a completion.
pub fn parse_final_labels<S: AsRef<str>>(completion: &[S]) -> Option<Vec<usize>> {
    let bar = completion.iter().rposition(|t| t.as_ref() == "|")?;
    let toks: Vec<String> = completion[bar + 1..].iter().map(|t| t.as_ref().to_string()).collect();
    let mut c = Cursor { toks: &toks, pos: 0 };
    let labels = c.array().ok()?;
    c.done().then_some(labels)
}

/// Inverse of [`linearize_scc`].
pub fn parse_scc(example: &Example) -> Result<SccInstance, SccError> {
    let mut c = Cursor { toks: &example.prefix, pos: 0 };
    for t in [SCC_TASK_NAME, ":", "A", ":", "["] {
        c.expect(t)?;
    }
    let mut rows = Vec::new();
    loop {
        let row = c.array()?;
        rows.push(row.into_iter().map(|x| x as u8).collect::<Vec<u8>>());
        match c.peek() {
            Some(",") => c.pos += 1,
            Some("]") => {
                c.pos += 1;
                break;
            }
            other => return Err(SccError::Parse(format!("unexpected {other:?} in matrix"))),
        }
    }
    let graph = Digraph::from_rows(&rows)?;
    c.expect(",")?;
    c.expect("initial_trace")?;
    c.expect(":")?;
    let initial = c.array()?;
    if initial != (0..graph.n()).collect::<Vec<_>>() {
        return Err(SccError::Parse(format!("initial_trace {initial:?} is not the identity")));
    }
    for t in ["trace", "|", "scc_id", ":"] {
        c.expect(t)?;
    }
    if !c.done() {
        return Err(SccError::Parse("trailing tokens after prefix".into()));
    }

    let mut c = Cursor { toks: &example.completion, pos: 0 };
    let mut snapshots = Vec::new();
    loop {
        snapshots.push(c.array()?);
        match c.peek() {
            Some(",") => c.pos += 1,
            Some("|") => {
                c.pos += 1;
                break;
            }
            other => return Err(SccError::Parse(format!("unexpected {other:?} in trace"))),
        }
    }
    let final_labels = c.array()?;
    if !c.done() {
        return Err(SccError::Parse("trailing tokens after final labels".into()));
    }
    Ok(SccInstance { graph, trace: SccTrace { snapshots, final_labels } })
}
