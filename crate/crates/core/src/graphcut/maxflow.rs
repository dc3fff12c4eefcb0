//! Max-flow by augmenting paths with search-tree reuse.
//!
//! Two search trees grow from the terminals; once they touch, the path is
//! augmented and the trees are repaired by re-adopting orphaned nodes instead
//! of being rebuilt. Terminal arcs are folded into a single signed residual
//! per node: positive means remaining source capacity, negative remaining sink
//! capacity.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;

#[derive(Clone, Copy)]
struct Arc {
    head: usize,
    next: usize,
    r_cap: f64,
}

#[derive(Clone, Copy)]
struct Node {
    first: usize,
    parent: usize,
    tr_cap: f64,
    is_sink: bool,
    active: bool,
    ts: u64,
    dist: u32,
}

/// Which side of the minimum cut a node ended on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Sink,
}

/// A flow network with terminal capacities folded into the nodes.
pub struct Graph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    time: u64,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
}

#[inline]
fn sister(a: usize) -> usize {
    a ^ 1
}

impl Graph {
    pub fn new(num_nodes: usize, arc_hint: usize) -> Self {
        Self {
            nodes: vec![
                Node {
                    first: NONE,
                    parent: NONE,
                    tr_cap: 0.0,
                    is_sink: false,
                    active: false,
                    ts: 0,
                    dist: 0,
                };
                num_nodes
            ],
            arcs: Vec::with_capacity(2 * arc_hint),
            flow: 0.0,
            time: 0,
            active: VecDeque::new(),
            orphans: VecDeque::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Adds capacity `source` on `s -> i` and `sink` on `i -> t`.
    pub fn add_tweights(&mut self, i: usize, source: f64, sink: f64) {
        debug_assert!(source >= 0.0 && sink >= 0.0);
        let delta = self.nodes[i].tr_cap;
        let (source, sink) = if delta > 0.0 {
            (source + delta, sink)
        } else {
            (source, sink - delta)
        };
        // Flow min(source, sink) goes straight through i.
        self.flow += source.min(sink);
        self.nodes[i].tr_cap = source - sink;
    }

    /// Adds arc `i -> j` with capacity `cap` and `j -> i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j && cap >= 0.0 && rev_cap >= 0.0);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.nodes[i].first = a;
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[j].first = a + 1;
    }

    fn set_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != NONE {
                return Some(i);
            }
        }
        None
    }

    fn set_orphan_front(&mut self, i: usize) {
        self.nodes[i].parent = ORPHAN;
        self.orphans.push_front(i);
    }

    fn set_orphan_rear(&mut self, i: usize) {
        self.nodes[i].parent = ORPHAN;
        self.orphans.push_back(i);
    }

    fn init(&mut self) {
        self.active.clear();
        self.orphans.clear();
        self.time = 0;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.active = false;
            n.ts = 0;
            if n.tr_cap > 0.0 {
                n.is_sink = false;
                n.parent = TERMINAL;
                n.dist = 1;
            } else if n.tr_cap < 0.0 {
                n.is_sink = true;
                n.parent = TERMINAL;
                n.dist = 1;
            } else {
                n.parent = NONE;
            }
            if self.nodes[i].parent == TERMINAL {
                self.set_active(i);
            }
        }
    }

    /// Grows the tree containing `i`; returns an arc crossing from the source
    /// tree into the sink tree, if one is found.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let from_sink = self.nodes[i].is_sink;
        let (ts_i, dist_i) = (self.nodes[i].ts, self.nodes[i].dist);
        let mut a = self.nodes[i].first;
        while a != NONE {
            // Residual capacity in the direction of growth.
            let cap = if from_sink {
                self.arcs[sister(a)].r_cap
            } else {
                self.arcs[a].r_cap
            };
            if cap > 0.0 {
                let j = self.arcs[a].head;
                let nj = self.nodes[j];
                if nj.parent == NONE {
                    let n = &mut self.nodes[j];
                    n.is_sink = from_sink;
                    n.parent = sister(a);
                    n.ts = ts_i;
                    n.dist = dist_i + 1;
                    self.set_active(j);
                } else if nj.is_sink != from_sink {
                    return Some(if from_sink { sister(a) } else { a });
                } else if nj.ts <= ts_i && nj.dist > dist_i {
                    let n = &mut self.nodes[j];
                    n.parent = sister(a);
                    n.ts = ts_i;
                    n.dist = dist_i + 1;
                }
            }
            a = self.arcs[a].next;
        }
        None
    }

    fn augment(&mut self, middle: usize) {
        let mut bottleneck = self.arcs[middle].r_cap;
        // Source side: walk toward s along parent arcs.
        let mut i = self.arcs[sister(middle)].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[sister(a)].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        // Sink side.
        let mut i = self.arcs[middle].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);

        self.arcs[sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[sister(middle)].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a].r_cap += bottleneck;
            self.arcs[sister(a)].r_cap -= bottleneck;
            if self.arcs[sister(a)].r_cap <= 0.0 {
                self.arcs[sister(a)].r_cap = 0.0;
                self.set_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.nodes[i].tr_cap -= bottleneck;
        if self.nodes[i].tr_cap <= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[sister(a)].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            if self.arcs[a].r_cap <= 0.0 {
                self.arcs[a].r_cap = 0.0;
                self.set_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.nodes[i].tr_cap += bottleneck;
        if self.nodes[i].tr_cap >= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        self.flow += bottleneck;
    }

    /// Distance from `j` to its terminal through valid parents, or `None` if
    /// the chain hits an orphan.
    fn origin_distance(&mut self, mut j: usize) -> Option<u32> {
        let mut d = 0u32;
        loop {
            if self.nodes[j].ts == self.time {
                return Some(d + self.nodes[j].dist);
            }
            let a = self.nodes[j].parent;
            d += 1;
            if a == TERMINAL {
                self.nodes[j].ts = self.time;
                self.nodes[j].dist = 1;
                return Some(d);
            }
            if a == ORPHAN || a == NONE {
                return None;
            }
            j = self.arcs[a].head;
        }
    }

    fn process_orphan(&mut self, i: usize) {
        let sink = self.nodes[i].is_sink;
        let mut best_arc = NONE;
        let mut best_d = u32::MAX;
        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            // Capacity from the candidate parent toward i.
            let cap = if sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[sister(a0)].r_cap
            };
            let j = self.arcs[a0].head;
            if cap > 0.0 && self.nodes[j].is_sink == sink && self.nodes[j].parent != NONE {
                if let Some(d) = self.origin_distance(j) {
                    if d < best_d {
                        best_arc = a0;
                        best_d = d;
                    }
                    // Stamp the checked path with exact distances.
                    let mut dd = d;
                    let mut j = j;
                    while self.nodes[j].ts != self.time {
                        self.nodes[j].ts = self.time;
                        self.nodes[j].dist = dd;
                        dd -= 1;
                        j = self.arcs[self.nodes[j].parent].head;
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }

        if best_arc != NONE {
            let n = &mut self.nodes[i];
            n.parent = best_arc;
            n.ts = self.time;
            n.dist = best_d + 1;
            return;
        }

        self.nodes[i].parent = NONE;
        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            let j = self.arcs[a0].head;
            let pj = self.nodes[j].parent;
            if self.nodes[j].is_sink == sink && pj != NONE {
                let cap = if sink {
                    self.arcs[a0].r_cap
                } else {
                    self.arcs[sister(a0)].r_cap
                };
                if cap > 0.0 {
                    self.set_active(j);
                }
                if pj != TERMINAL && pj != ORPHAN && self.arcs[pj].head == i {
                    self.set_orphan_rear(j);
                }
            }
            a0 = self.arcs[a0].next;
        }
    }

    /// Runs max-flow and returns its value.
    pub fn maxflow(&mut self) -> f64 {
        self.init();
        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(i) if self.nodes[i].parent != NONE => i,
                _ => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            match self.grow(i) {
                Some(middle) => {
                    self.augment(middle);
                    self.time += 1;
                    while let Some(o) = self.orphans.pop_front() {
                        self.process_orphan(o);
                    }
                    // Keep expanding the same node: it may touch the other tree again.
                    current = Some(i);
                }
                None => {}
            }
        }
        self.flow
    }

    /// Minimum-cut side of every node, choosing the smallest possible sink
    /// set: a node is on the sink side iff it can still reach `t` through
    /// residual arcs. Call after [`Graph::maxflow`].
    pub fn min_cut(&self) -> Vec<Side> {
        let n = self.nodes.len();
        let mut side = vec![Side::Source; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tr_cap < 0.0 {
                side[i] = Side::Sink;
                queue.push_back(i);
            }
        }
        while let Some(j) = queue.pop_front() {
            let mut a = self.nodes[j].first;
            while a != NONE {
                let k = self.arcs[a].head;
                // Arc k -> j is the sister of j -> k.
                if side[k] == Side::Source && self.arcs[sister(a)].r_cap > 0.0 {
                    side[k] = Side::Sink;
                    queue.push_back(k);
                }
                a = self.arcs[a].next;
            }
        }
        side
    }
}
