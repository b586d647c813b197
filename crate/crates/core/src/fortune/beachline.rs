//! Order-maintenance treap for the beach line.
//!
//! Arcs are never compared by a stored key: their relative order is fixed by
//! where they were inserted, and lookups descend the tree with a caller
//! supplied probe that evaluates breakpoints at the current sweep position.
//! Nodes carry parent links and a doubly linked in-order list, so neighbours
//! are O(1) and insert/remove are expected O(log n).

use std::cmp::Ordering;

pub type NodeId = usize;

const NIL: NodeId = usize::MAX;

#[derive(Debug)]
struct Node<T> {
    value: T,
    priority: u64,
    parent: NodeId,
    left: NodeId,
    right: NodeId,
    prev: NodeId,
    next: NodeId,
}

#[derive(Debug)]
pub struct BeachLine<T> {
    nodes: Vec<Option<Node<T>>>,
    free: Vec<NodeId>,
    root: NodeId,
    head: NodeId,
    len: usize,
    rng: u64,
}

fn opt(id: NodeId) -> Option<NodeId> {
    (id != NIL).then_some(id)
}

impl<T> BeachLine<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            free: Vec::new(),
            root: NIL,
            head: NIL,
            len: 0,
            rng: 0x9E37_79B9_7F4A_7C15,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, id: NodeId) -> &T {
        &self.node(id).value
    }

    pub fn get_mut(&mut self, id: NodeId) -> &mut T {
        &mut self.node_mut(id).value
    }

    pub fn contains(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id), Some(Some(_)))
    }

    pub fn prev(&self, id: NodeId) -> Option<NodeId> {
        opt(self.node(id).prev)
    }

    pub fn next(&self, id: NodeId) -> Option<NodeId> {
        opt(self.node(id).next)
    }

    pub fn first(&self) -> Option<NodeId> {
        opt(self.head)
    }

    /// In-order iteration over node ids.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.first(), move |&id| self.next(id))
    }

    /// Inserts the first node into an empty line.
    pub fn insert_first(&mut self, value: T) -> NodeId {
        assert!(self.is_empty(), "beach line already populated");
        let id = self.alloc(value);
        self.root = id;
        self.head = id;
        id
    }

    /// Descends from the root. `probe` returns `Less` when the target lies
    /// left of the node, `Greater` when right, `Equal` when found.
    pub fn search(&self, mut probe: impl FnMut(NodeId, &T) -> Ordering) -> Option<NodeId> {
        let mut cur = self.root;
        let mut last = NIL;
        while cur != NIL {
            last = cur;
            let n = self.node(cur);
            match probe(cur, &n.value) {
                Ordering::Less => cur = n.left,
                Ordering::Greater => cur = n.right,
                Ordering::Equal => return Some(cur),
            }
        }
        // Inconsistent probes (rounding on vanishing arcs) end at a leaf;
        // the last visited node is the closest candidate.
        opt(last)
    }

    pub fn insert_after(&mut self, anchor: NodeId, value: T) -> NodeId {
        let id = self.alloc(value);
        let right = self.node(anchor).right;
        if right == NIL {
            self.node_mut(anchor).right = id;
            self.node_mut(id).parent = anchor;
        } else {
            let mut m = right;
            while self.node(m).left != NIL {
                m = self.node(m).left;
            }
            self.node_mut(m).left = id;
            self.node_mut(id).parent = m;
        }
        let next = self.node(anchor).next;
        self.node_mut(id).prev = anchor;
        self.node_mut(id).next = next;
        self.node_mut(anchor).next = id;
        if next != NIL {
            self.node_mut(next).prev = id;
        }
        self.sift_up(id);
        id
    }

    pub fn insert_before(&mut self, anchor: NodeId, value: T) -> NodeId {
        match self.prev(anchor) {
            Some(p) => self.insert_after(p, value),
            None => {
                let id = self.alloc(value);
                let mut m = anchor;
                while self.node(m).left != NIL {
                    m = self.node(m).left;
                }
                self.node_mut(m).left = id;
                self.node_mut(id).parent = m;
                self.node_mut(id).next = anchor;
                self.node_mut(anchor).prev = id;
                self.head = id;
                self.sift_up(id);
                id
            }
        }
    }

    pub fn remove(&mut self, id: NodeId) -> T {
        loop {
            let (l, r) = (self.node(id).left, self.node(id).right);
            let child = match (l, r) {
                (NIL, NIL) => break,
                (c, NIL) | (NIL, c) => c,
                (l, r) => {
                    if self.node(l).priority > self.node(r).priority {
                        l
                    } else {
                        r
                    }
                }
            };
            self.rotate_up(child);
        }
        let parent = self.node(id).parent;
        if parent == NIL {
            self.root = NIL;
        } else if self.node(parent).left == id {
            self.node_mut(parent).left = NIL;
        } else {
            self.node_mut(parent).right = NIL;
        }
        let (prev, next) = (self.node(id).prev, self.node(id).next);
        if prev != NIL {
            self.node_mut(prev).next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.node_mut(next).prev = prev;
        }
        self.len -= 1;
        self.free.push(id);
        self.nodes[id].take().expect("live node").value
    }

    /// Height of the tree; used by tests to check balance.
    pub fn depth(&self) -> usize {
        fn go<T>(t: &BeachLine<T>, id: NodeId) -> usize {
            if id == NIL {
                0
            } else {
                let n = t.node(id);
                1 + go(t, n.left).max(go(t, n.right))
            }
        }
        go(self, self.root)
    }

    fn node(&self, id: NodeId) -> &Node<T> {
        self.nodes[id].as_ref().expect("stale beach line node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node<T> {
        self.nodes[id].as_mut().expect("stale beach line node")
    }

    fn next_priority(&mut self) -> u64 {
        // xorshift64*, fixed seed so builds are reproducible.
        self.rng ^= self.rng >> 12;
        self.rng ^= self.rng << 25;
        self.rng ^= self.rng >> 27;
        self.rng.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    fn alloc(&mut self, value: T) -> NodeId {
        let node = Node {
            value,
            priority: self.next_priority(),
            parent: NIL,
            left: NIL,
            right: NIL,
            prev: NIL,
            next: NIL,
        };
        self.len += 1;
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        }
    }

    fn sift_up(&mut self, id: NodeId) {
        while let Some(p) = opt(self.node(id).parent) {
            if self.node(p).priority >= self.node(id).priority {
                break;
            }
            self.rotate_up(id);
        }
    }

    fn rotate_up(&mut self, x: NodeId) {
        let p = self.node(x).parent;
        let g = self.node(p).parent;
        if self.node(p).left == x {
            let b = self.node(x).right;
            self.node_mut(p).left = b;
            if b != NIL {
                self.node_mut(b).parent = p;
            }
            self.node_mut(x).right = p;
        } else {
            let b = self.node(x).left;
            self.node_mut(p).right = b;
            if b != NIL {
                self.node_mut(b).parent = p;
            }
            self.node_mut(x).left = p;
        }
        self.node_mut(p).parent = x;
        self.node_mut(x).parent = g;
        if g == NIL {
            self.root = x;
        } else if self.node(g).left == p {
            self.node_mut(g).left = x;
        } else {
            self.node_mut(g).right = x;
        }
    }
}

impl<T> Default for BeachLine<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_order<T: Copy>(t: &BeachLine<T>) -> Vec<T> {
        t.iter().map(|id| *t.get(id)).collect()
    }

    /// Tree in-order must match the linked list.
    fn tree_order<T: Copy>(t: &BeachLine<T>) -> Vec<T> {
        fn go<T: Copy>(t: &BeachLine<T>, id: NodeId, out: &mut Vec<T>) {
            if id == NIL {
                return;
            }
            go(t, t.node(id).left, out);
            out.push(t.node(id).value);
            go(t, t.node(id).right, out);
        }
        let mut out = Vec::new();
        go(t, t.root, &mut out);
        out
    }

    #[test]
    fn positional_inserts_and_removals_keep_order() {
        let mut t = BeachLine::new();
        let a = t.insert_first(10);
        let c = t.insert_after(a, 30);
        t.insert_before(c, 20);
        let z = t.insert_before(a, 0);
        assert_eq!(in_order(&t), vec![0, 10, 20, 30]);
        assert_eq!(tree_order(&t), vec![0, 10, 20, 30]);
        assert_eq!(t.remove(a), 10);
        assert_eq!(in_order(&t), vec![0, 20, 30]);
        assert_eq!(tree_order(&t), vec![0, 20, 30]);
        assert_eq!(t.first(), Some(z));
        t.remove(z);
        assert_eq!(in_order(&t), vec![20, 30]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn search_finds_by_probe_and_stays_shallow() {
        let mut t = BeachLine::new();
        let mut last = t.insert_first(0i64);
        for v in 1..4096 {
            last = t.insert_after(last, v);
        }
        assert!(t.depth() < 60, "depth {}", t.depth());
        for target in [0i64, 17, 2048, 4095] {
            let id = t.search(|_, v| target.cmp(v)).unwrap();
            assert_eq!(*t.get(id), target);
        }
        // Remove every other node and check order again.
        let ids: Vec<_> = t.iter().collect();
        for id in ids.into_iter().step_by(2) {
            t.remove(id);
        }
        let vals = in_order(&t);
        assert_eq!(vals, tree_order(&t));
        assert!(vals.iter().all(|v| v % 2 == 1));
    }
}
