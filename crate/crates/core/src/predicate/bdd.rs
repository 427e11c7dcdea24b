//! Reduced ordered binary decision diagrams with complement edges.
//!
//! The store is a single shared node pool. Levels are fixed at allocation
//! time (level `k` is the `k`-th bit allocated by the owning context), so no
//! reordering ever happens. Nodes are hash-consed through an open-addressing
//! unique table; binary and quantifier operations are memoized in a lossy
//! direct-mapped computed table.
//!
//! Canonical form: the `hi` edge of every stored node is regular. Negation is
//! a bit flip on the edge.

use std::collections::HashMap;

pub(crate) type Level = u32;

const TERMINAL_LEVEL: Level = u32::MAX;
const FREE_LEVEL: Level = u32::MAX - 1;

#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub(crate) struct Edge(u32);

impl Edge {
    pub const ONE: Edge = Edge(0);
    pub const ZERO: Edge = Edge(1);

    #[inline]
    fn index(self) -> usize {
        (self.0 >> 1) as usize
    }
    #[inline]
    fn is_complement(self) -> bool {
        self.0 & 1 == 1
    }
    #[inline]
    fn regular(self) -> Edge {
        Edge(self.0 & !1)
    }
    #[inline]
    pub fn not(self) -> Edge {
        Edge(self.0 ^ 1)
    }
    #[inline]
    pub fn is_const(self) -> bool {
        self.0 < 2
    }
    #[inline]
    fn flip_if(self, c: bool) -> Edge {
        Edge(self.0 ^ c as u32)
    }
    pub fn raw(self) -> u32 {
        self.0
    }
}

#[derive(Copy, Clone, Debug)]
struct Node {
    level: Level,
    lo: Edge,
    hi: Edge,
}

/// Raised when an operation would grow the live node count past the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NodeLimit;

type Res = Result<Edge, NodeLimit>;

#[derive(Copy, Clone)]
struct CacheEntry {
    op: u32,
    a: u32,
    b: u32,
    c: u32,
    res: u32,
}

const EMPTY_ENTRY: CacheEntry = CacheEntry {
    op: 0,
    a: 0,
    b: 0,
    c: 0,
    res: 0,
};

const OP_AND: u32 = 1;
const OP_EXISTS: u32 = 2;
const OP_AND_EXISTS: u32 = 3;
const OP_ITE: u32 = 4;

const MIN_CACHE_BITS: u32 = 16;
const MAX_CACHE_BITS: u32 = 23;

pub(crate) struct Manager {
    nodes: Vec<Node>,
    ext_refs: Vec<u32>,
    free: Vec<u32>,
    unique: Vec<u32>,
    unique_len: usize,
    cache: Vec<CacheEntry>,
    cache_bits: u32,
    max_nodes: usize,
    gc_threshold: usize,
    peak_live: usize,
}

#[inline]
fn mix(a: u32, b: u32, c: u32) -> u64 {
    let mut h = (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h = h.rotate_left(29);
    h ^= (c as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^ (h >> 32)
}

impl Manager {
    pub fn new(max_nodes: usize) -> Self {
        let terminal = Node {
            level: TERMINAL_LEVEL,
            lo: Edge::ONE,
            hi: Edge::ONE,
        };
        Manager {
            nodes: vec![terminal],
            ext_refs: vec![0],
            free: Vec::new(),
            unique: vec![0; 1 << 12],
            unique_len: 0,
            cache: vec![EMPTY_ENTRY; 1 << MIN_CACHE_BITS],
            cache_bits: MIN_CACHE_BITS,
            max_nodes,
            gc_threshold: 1 << 20,
            peak_live: 1,
        }
    }

    pub fn live_nodes(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    pub fn peak_nodes(&self) -> usize {
        self.peak_live
    }


    #[inline]
    pub fn level(&self, e: Edge) -> Level {
        self.nodes[e.index()].level
    }

    /// Cofactors of `e` with respect to `level` (which must be ≤ the top level of `e`).
    #[inline]
    fn cofactors(&self, e: Edge, level: Level) -> (Edge, Edge) {
        let n = &self.nodes[e.index()];
        if n.level == level {
            let c = e.is_complement();
            (n.lo.flip_if(c), n.hi.flip_if(c))
        } else {
            (e, e)
        }
    }

    /// Children of a non-terminal edge with complement applied.
    pub fn children(&self, e: Edge) -> (Level, Edge, Edge) {
        let n = &self.nodes[e.index()];
        let c = e.is_complement();
        (n.level, n.lo.flip_if(c), n.hi.flip_if(c))
    }

    // ---- reference management -------------------------------------------------

    pub fn inc_ref(&mut self, e: Edge) {
        let i = e.index();
        if i != 0 {
            self.ext_refs[i] += 1;
        }
    }

    pub fn dec_ref(&mut self, e: Edge) {
        let i = e.index();
        if i != 0 {
            debug_assert!(self.ext_refs[i] > 0);
            self.ext_refs[i] -= 1;
        }
    }

    /// Collects garbage when the live count has grown past the adaptive threshold.
    pub fn maybe_gc(&mut self) {
        if self.live_nodes() > self.gc_threshold {
            self.gc();
            self.gc_threshold = (self.live_nodes() * 2).max(1 << 20);
        }
    }

    pub fn gc(&mut self) {
        let n = self.nodes.len();
        let mut marked = vec![false; n];
        marked[0] = true;
        let mut stack: Vec<usize> = (1..n)
            .filter(|&i| self.ext_refs[i] > 0 && self.nodes[i].level != FREE_LEVEL)
            .collect();
        while let Some(i) = stack.pop() {
            if marked[i] {
                continue;
            }
            marked[i] = true;
            let node = self.nodes[i];
            for child in [node.lo.index(), node.hi.index()] {
                if !marked[child] {
                    stack.push(child);
                }
            }
        }
        self.free.clear();
        for (i, &alive) in marked.iter().enumerate().skip(1) {
            if !alive {
                self.nodes[i] = Node {
                    level: FREE_LEVEL,
                    lo: Edge::ONE,
                    hi: Edge::ONE,
                };
                self.free.push(i as u32);
            }
        }
        // Reuse low indices first.
        self.free.reverse();
        self.rebuild_unique();
        self.cache.iter_mut().for_each(|e| *e = EMPTY_ENTRY);
    }

    fn rebuild_unique(&mut self) {
        let live = self.live_nodes();
        let mut cap = 1usize << 12;
        while cap < live * 2 {
            cap <<= 1;
        }
        self.unique = vec![0; cap];
        self.unique_len = 0;
        for i in 1..self.nodes.len() {
            let node = self.nodes[i];
            if node.level == FREE_LEVEL {
                continue;
            }
            self.unique_insert(i as u32, node);
        }
    }

    fn unique_insert(&mut self, idx: u32, node: Node) {
        let mask = self.unique.len() - 1;
        let mut slot = mix(node.level, node.lo.0, node.hi.0) as usize & mask;
        while self.unique[slot] != 0 {
            slot = (slot + 1) & mask;
        }
        self.unique[slot] = idx;
        self.unique_len += 1;
    }

    fn grow_cache_if_needed(&mut self) {
        let live = self.live_nodes();
        while self.cache_bits < MAX_CACHE_BITS && (1usize << self.cache_bits) < live {
            self.cache_bits += 1;
            self.cache = vec![EMPTY_ENTRY; 1 << self.cache_bits];
        }
    }

    // ---- node construction ----------------------------------------------------

    pub fn mk(&mut self, level: Level, lo: Edge, hi: Edge) -> Res {
        if lo == hi {
            return Ok(lo);
        }
        if hi.is_complement() {
            return self.mk_regular(level, lo.not(), hi.not()).map(Edge::not);
        }
        self.mk_regular(level, lo, hi)
    }

    fn mk_regular(&mut self, level: Level, lo: Edge, hi: Edge) -> Res {
        debug_assert!(level < self.level(lo) && level < self.level(hi));
        let mask = self.unique.len() - 1;
        let mut slot = mix(level, lo.0, hi.0) as usize & mask;
        loop {
            let idx = self.unique[slot];
            if idx == 0 {
                break;
            }
            let n = &self.nodes[idx as usize];
            if n.level == level && n.lo == lo && n.hi == hi {
                return Ok(Edge(idx << 1));
            }
            slot = (slot + 1) & mask;
        }
        if self.live_nodes() >= self.max_nodes {
            return Err(NodeLimit);
        }
        let node = Node { level, lo, hi };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                self.ext_refs[i as usize] = 0;
                i
            }
            None => {
                self.nodes.push(node);
                self.ext_refs.push(0);
                (self.nodes.len() - 1) as u32
            }
        };
        self.unique[slot] = idx;
        self.unique_len += 1;
        let live = self.live_nodes();
        if live > self.peak_live {
            self.peak_live = live;
        }
        if self.unique_len * 2 > self.unique.len() {
            self.rebuild_unique();
            self.grow_cache_if_needed();
        }
        Ok(Edge(idx << 1))
    }

    pub fn var(&mut self, level: Level) -> Res {
        self.mk(level, Edge::ZERO, Edge::ONE)
    }

    // ---- computed table -------------------------------------------------------

    #[inline]
    fn cache_slot(&self, op: u32, a: u32, b: u32, c: u32) -> usize {
        (mix(a ^ op.rotate_left(28), b, c) as usize) & ((1 << self.cache_bits) - 1)
    }

    #[inline]
    fn cache_get(&self, op: u32, a: Edge, b: Edge, c: Edge) -> Option<Edge> {
        let e = &self.cache[self.cache_slot(op, a.0, b.0, c.0)];
        if e.op == op && e.a == a.0 && e.b == b.0 && e.c == c.0 {
            Some(Edge(e.res))
        } else {
            None
        }
    }

    #[inline]
    fn cache_put(&mut self, op: u32, a: Edge, b: Edge, c: Edge, r: Edge) {
        let slot = self.cache_slot(op, a.0, b.0, c.0);
        self.cache[slot] = CacheEntry {
            op,
            a: a.0,
            b: b.0,
            c: c.0,
            res: r.0,
        };
    }

    // ---- boolean operations ---------------------------------------------------

    pub fn and(&mut self, f: Edge, g: Edge) -> Res {
        if f == Edge::ZERO || g == Edge::ZERO || f == g.not() {
            return Ok(Edge::ZERO);
        }
        if f == Edge::ONE || f == g {
            return Ok(g);
        }
        if g == Edge::ONE {
            return Ok(f);
        }
        let (f, g) = if f.0 < g.0 { (f, g) } else { (g, f) };
        if let Some(r) = self.cache_get(OP_AND, f, g, Edge::ONE) {
            return Ok(r);
        }
        let top = self.level(f).min(self.level(g));
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let lo = self.and(f0, g0)?;
        let hi = self.and(f1, g1)?;
        let r = self.mk(top, lo, hi)?;
        self.cache_put(OP_AND, f, g, Edge::ONE, r);
        Ok(r)
    }

    pub fn or(&mut self, f: Edge, g: Edge) -> Res {
        self.and(f.not(), g.not()).map(Edge::not)
    }

    pub fn ite(&mut self, f: Edge, g: Edge, h: Edge) -> Res {
        if f == Edge::ONE {
            return Ok(g);
        }
        if f == Edge::ZERO {
            return Ok(h);
        }
        if g == h {
            return Ok(g);
        }
        if g == Edge::ONE && h == Edge::ZERO {
            return Ok(f);
        }
        if g == Edge::ZERO && h == Edge::ONE {
            return Ok(f.not());
        }
        if g == Edge::ZERO {
            return self.and(f.not(), h);
        }
        if h == Edge::ZERO {
            return self.and(f, g);
        }
        if g == Edge::ONE {
            return self.or(f, h);
        }
        if h == Edge::ONE {
            return self.or(f.not(), g);
        }
        // Normalize: regular condition, regular then-branch.
        let (f, g, h) = if f.is_complement() {
            (f.not(), h, g)
        } else {
            (f, g, h)
        };
        let negate = g.is_complement();
        let (g, h) = if negate { (g.not(), h.not()) } else { (g, h) };
        if let Some(r) = self.cache_get(OP_ITE, f, g, h) {
            return Ok(r.flip_if(negate));
        }
        let top = self.level(f).min(self.level(g)).min(self.level(h));
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let (h0, h1) = self.cofactors(h, top);
        let lo = self.ite(f0, g0, h0)?;
        let hi = self.ite(f1, g1, h1)?;
        let r = self.mk(top, lo, hi)?;
        self.cache_put(OP_ITE, f, g, h, r);
        Ok(r.flip_if(negate))
    }

    /// Positive cube over the given levels.
    pub fn cube(&mut self, levels: &[Level]) -> Res {
        let mut sorted = levels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut acc = Edge::ONE;
        for &l in sorted.iter().rev() {
            acc = self.mk(l, Edge::ZERO, acc)?;
        }
        Ok(acc)
    }

    /// Skips cube levels strictly above `level`.
    #[inline]
    fn cube_advance(&self, mut cube: Edge, level: Level) -> Edge {
        while !cube.is_const() && self.level(cube) < level {
            cube = self.nodes[cube.index()].hi;
        }
        cube
    }

    pub fn exists(&mut self, f: Edge, cube: Edge) -> Res {
        if f.is_const() {
            return Ok(f);
        }
        let top = self.level(f);
        let cube = self.cube_advance(cube, top);
        if cube.is_const() {
            return Ok(f);
        }
        if let Some(r) = self.cache_get(OP_EXISTS, f, cube, Edge::ONE) {
            return Ok(r);
        }
        let (f0, f1) = self.cofactors(f, top);
        let r = if self.level(cube) == top {
            let rest = self.nodes[cube.index()].hi;
            let lo = self.exists(f0, rest)?;
            if lo == Edge::ONE {
                Edge::ONE
            } else {
                let hi = self.exists(f1, rest)?;
                self.or(lo, hi)?
            }
        } else {
            let lo = self.exists(f0, cube)?;
            let hi = self.exists(f1, cube)?;
            self.mk(top, lo, hi)?
        };
        self.cache_put(OP_EXISTS, f, cube, Edge::ONE, r);
        Ok(r)
    }

    #[cfg(test)]
    pub fn forall(&mut self, f: Edge, cube: Edge) -> Res {
        self.exists(f.not(), cube).map(Edge::not)
    }

    /// `∃cube (f ∧ g)` without materializing the conjunction.
    pub fn and_exists(&mut self, f: Edge, g: Edge, cube: Edge) -> Res {
        if f == Edge::ZERO || g == Edge::ZERO || f == g.not() {
            return Ok(Edge::ZERO);
        }
        if f == Edge::ONE && g == Edge::ONE {
            return Ok(Edge::ONE);
        }
        if f == Edge::ONE || f == g {
            return self.exists(g, cube);
        }
        if g == Edge::ONE {
            return self.exists(f, cube);
        }
        let (f, g) = if f.0 < g.0 { (f, g) } else { (g, f) };
        let top = self.level(f).min(self.level(g));
        let cube = self.cube_advance(cube, top);
        if cube.is_const() {
            return self.and(f, g);
        }
        if let Some(r) = self.cache_get(OP_AND_EXISTS, f, g, cube) {
            return Ok(r);
        }
        let (f0, f1) = self.cofactors(f, top);
        let (g0, g1) = self.cofactors(g, top);
        let r = if self.level(cube) == top {
            let rest = self.nodes[cube.index()].hi;
            let lo = self.and_exists(f0, g0, rest)?;
            if lo == Edge::ONE {
                Edge::ONE
            } else {
                let hi = self.and_exists(f1, g1, rest)?;
                self.or(lo, hi)?
            }
        } else {
            let lo = self.and_exists(f0, g0, cube)?;
            let hi = self.and_exists(f1, g1, cube)?;
            self.mk(top, lo, hi)?
        };
        self.cache_put(OP_AND_EXISTS, f, g, cube, r);
        Ok(r)
    }

    /// Substitutes levels according to `map` (old level → new level).
    pub fn rename(&mut self, f: Edge, map: &HashMap<Level, Level>) -> Res {
        let mut memo = HashMap::new();
        self.rename_rec(f.regular(), map, &mut memo)
            .map(|r| r.flip_if(f.is_complement()))
    }

    fn rename_rec(
        &mut self,
        f: Edge,
        map: &HashMap<Level, Level>,
        memo: &mut HashMap<Edge, Edge>,
    ) -> Res {
        if f.is_const() {
            return Ok(f);
        }
        if let Some(&r) = memo.get(&f) {
            return Ok(r);
        }
        let (level, lo, hi) = self.children(f);
        let lo = self.rename_rec(lo, map, memo)?;
        let hi = self.rename_rec(hi, map, memo)?;
        let target = map.get(&level).copied().unwrap_or(level);
        let v = self.var(target)?;
        let r = self.ite(v, hi, lo)?;
        memo.insert(f, r);
        Ok(r)
    }

    /// Restricts `f` by the partial assignment `level → value`.
    pub fn restrict(&mut self, f: Edge, assignment: &HashMap<Level, bool>) -> Res {
        let mut memo = HashMap::new();
        self.restrict_rec(f, assignment, &mut memo)
    }

    fn restrict_rec(
        &mut self,
        f: Edge,
        assignment: &HashMap<Level, bool>,
        memo: &mut HashMap<Edge, Edge>,
    ) -> Res {
        if f.is_const() {
            return Ok(f);
        }
        if let Some(&r) = memo.get(&f) {
            return Ok(r);
        }
        let (level, lo, hi) = self.children(f);
        let r = match assignment.get(&level) {
            Some(true) => self.restrict_rec(hi, assignment, memo)?,
            Some(false) => self.restrict_rec(lo, assignment, memo)?,
            None => {
                let lo = self.restrict_rec(lo, assignment, memo)?;
                let hi = self.restrict_rec(hi, assignment, memo)?;
                self.mk(level, lo, hi)?
            }
        };
        memo.insert(f, r);
        Ok(r)
    }

    // ---- queries --------------------------------------------------------------

    /// Evaluates `f` under a total assignment given as a level-indexed lookup.
    pub fn eval(&self, mut f: Edge, bit: impl Fn(Level) -> bool) -> bool {
        while !f.is_const() {
            let (level, lo, hi) = self.children(f);
            f = if bit(level) { hi } else { lo };
        }
        f == Edge::ONE
    }

    /// Levels that `f` depends on, ascending.
    pub fn support(&self, f: Edge) -> Vec<Level> {
        let mut seen = std::collections::HashSet::new();
        let mut levels = std::collections::BTreeSet::new();
        let mut stack = vec![f.regular()];
        while let Some(e) = stack.pop() {
            if e.is_const() || !seen.insert(e.index()) {
                continue;
            }
            let n = self.nodes[e.index()];
            levels.insert(n.level);
            stack.push(n.lo.regular());
            stack.push(n.hi.regular());
        }
        levels.into_iter().collect()
    }

    /// Number of distinct nodes reachable from `f`, terminal included.
    pub fn node_count(&self, f: Edge) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![f.index()];
        while let Some(i) = stack.pop() {
            if !seen.insert(i) || i == 0 {
                continue;
            }
            let n = self.nodes[i];
            stack.push(n.lo.index());
            stack.push(n.hi.index());
        }
        seen.len()
    }

    /// Number of satisfying assignments over the given ascending level list.
    ///
    /// Every level in the support of `f` must be listed. Returns `None` on
    /// overflow of `u128`.
    pub fn sat_count(&self, f: Edge, levels: &[Level]) -> Option<u128> {
        let n = levels.len();
        if n > 127 {
            return None;
        }
        let pos: HashMap<Level, usize> = levels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let mut memo: HashMap<usize, u128> = HashMap::new();
        // Counts over levels[p..] for an edge whose top sits at or below position p.
        fn count(
            m: &Manager,
            e: Edge,
            p: usize,
            n: usize,
            pos: &HashMap<Level, usize>,
            memo: &mut HashMap<usize, u128>,
        ) -> u128 {
            let idx = e.index();
            let (q, regular) = if idx == 0 {
                (n, 1u128)
            } else {
                let q = pos[&m.nodes[idx].level];
                let v = if let Some(&v) = memo.get(&idx) {
                    v
                } else {
                    let node = m.nodes[idx];
                    let v = count(m, node.lo, q + 1, n, pos, memo)
                        + count(m, node.hi, q + 1, n, pos, memo);
                    memo.insert(idx, v);
                    v
                };
                (q, v)
            };
            let own = if e.is_complement() {
                (1u128 << (n - q)) - regular
            } else {
                regular
            };
            own << (q - p)
        }
        Some(count(self, f, 0, n, &pos, &mut memo))
    }

    /// Serializes the sub-graph rooted at `roots` as a topologically ordered node list.
    ///
    /// Node `k` of the output refers to children by output index (0 is the
    /// terminal) with the complement bit in the low position.
    pub fn export(&self, roots: &[Edge]) -> (Vec<(Level, u32, u32)>, Vec<u32>) {
        let mut order: Vec<usize> = Vec::new();
        let mut index_of: HashMap<usize, u32> = HashMap::new();
        index_of.insert(0, 0);
        for &r in roots {
            let mut stack = vec![(r.index(), false)];
            while let Some((i, expanded)) = stack.pop() {
                if index_of.contains_key(&i) {
                    continue;
                }
                let n = self.nodes[i];
                if expanded {
                    index_of.insert(i, (order.len() + 1) as u32);
                    order.push(i);
                } else {
                    stack.push((i, true));
                    stack.push((n.hi.index(), false));
                    stack.push((n.lo.index(), false));
                }
            }
        }
        let remap = |e: Edge| (index_of[&e.index()] << 1) | e.is_complement() as u32;
        let nodes = order
            .iter()
            .map(|&i| {
                let n = self.nodes[i];
                (n.level, remap(n.lo), remap(n.hi))
            })
            .collect();
        let roots = roots.iter().map(|&r| remap(r)).collect();
        (nodes, roots)
    }

    /// Rebuilds nodes produced by [`Manager::export`]. Returns the root edges.
    pub fn import(&mut self, nodes: &[(Level, u32, u32)], roots: &[u32]) -> Result<Vec<Edge>, ImportError> {
        let mut edges: Vec<Edge> = vec![Edge::ONE];
        let resolve = |edges: &Vec<Edge>, raw: u32| -> Result<Edge, ImportError> {
            let i = (raw >> 1) as usize;
            edges
                .get(i)
                .map(|e| e.flip_if(raw & 1 == 1))
                .ok_or(ImportError::DanglingReference(raw))
        };
        for &(level, lo, hi) in nodes {
            let lo = resolve(&edges, lo)?;
            let hi = resolve(&edges, hi)?;
            let v = self.var(level).map_err(|_| ImportError::NodeLimit)?;
            let e = self.ite(v, hi, lo).map_err(|_| ImportError::NodeLimit)?;
            edges.push(e);
        }
        roots.iter().map(|&r| resolve(&edges, r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum ImportError {
    DanglingReference(u32),
    NodeLimit,
}
