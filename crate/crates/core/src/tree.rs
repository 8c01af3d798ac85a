//! Lazily grown leafless tree.
//!
//! Vertices are created on first entry and addressed by dense ids in
//! discovery order. Each vertex gets its child count once, when it is
//! discovered; child slots are materialized on demand. The prefix of vertices
//! discovered before a regeneration point can be dropped with
//! [`LazyTree::prune_below`].

use crate::error::{Error, Result};

pub type VertexId = u64;

const NO_VERTEX: VertexId = VertexId::MAX;

#[derive(Debug, Clone, Copy)]
struct Vertex {
    parent: VertexId,
    depth: u64,
    first_slot: u64,
    children: u32,
}

#[derive(Debug, Clone)]
pub struct LazyTree {
    first_id: VertexId,
    vertices: Vec<Vertex>,
    first_slot: u64,
    slots: Vec<VertexId>,
    capacity: usize,
}

impl LazyTree {
    pub const ROOT: VertexId = 0;

    pub fn with_root(children: u32, capacity: usize) -> Self {
        assert!(children >= 1, "leafless tree");
        let mut tree = Self {
            first_id: 0,
            vertices: Vec::new(),
            first_slot: 0,
            slots: Vec::new(),
            capacity: capacity.max(1),
        };
        tree.push_vertex(NO_VERTEX, 0, children);
        tree
    }

    fn push_vertex(&mut self, parent: VertexId, depth: u64, children: u32) -> VertexId {
        let id = self.first_id + self.vertices.len() as u64;
        let first_slot = self.first_slot + self.slots.len() as u64;
        self.slots
            .extend(std::iter::repeat_n(NO_VERTEX, children as usize));
        self.vertices.push(Vertex {
            parent,
            depth,
            first_slot,
            children,
        });
        id
    }

    #[inline]
    fn get(&self, v: VertexId) -> Option<&Vertex> {
        v.checked_sub(self.first_id)
            .and_then(|i| self.vertices.get(i as usize))
    }

    pub fn is_live(&self, v: VertexId) -> bool {
        self.get(v).is_some()
    }

    pub fn children(&self, v: VertexId) -> Option<u32> {
        self.get(v).map(|x| x.children)
    }

    pub fn depth(&self, v: VertexId) -> Option<u64> {
        self.get(v).map(|x| x.depth)
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.get(v)
            .and_then(|x| (x.parent != NO_VERTEX).then_some(x.parent))
    }

    /// The `i`-th child (1-based) if it has been entered already.
    pub fn child(&self, v: VertexId, i: u32) -> Option<VertexId> {
        let x = self.get(v)?;
        if i == 0 || i > x.children {
            return None;
        }
        let slot = (x.first_slot + u64::from(i - 1)).checked_sub(self.first_slot)?;
        let id = self.slots[slot as usize];
        (id != NO_VERTEX).then_some(id)
    }

    /// Returns the `i`-th child of `v`, discovering it with `draw()` children
    /// if it does not exist yet. The flag is `true` on discovery.
    pub fn child_or_insert(
        &mut self,
        v: VertexId,
        i: u32,
        draw: impl FnOnce() -> u32,
    ) -> Result<(VertexId, bool)> {
        let x = *self
            .get(v)
            .ok_or_else(|| Error::Capacity(format!("vertex {v} is not live")))?;
        assert!(i >= 1 && i <= x.children, "child index {i} out of range");
        let slot = (x.first_slot + u64::from(i - 1) - self.first_slot) as usize;
        let existing = self.slots[slot];
        if existing != NO_VERTEX {
            return Ok((existing, false));
        }
        if self.vertices.len() >= self.capacity {
            return Err(Error::Capacity(format!(
                "tree holds {} live vertices",
                self.vertices.len()
            )));
        }
        let children = draw();
        let id = self.push_vertex(v, x.depth + 1, children);
        self.slots[slot] = id;
        Ok((id, true))
    }

    /// Forgets every vertex discovered before `v`.
    pub fn prune_below(&mut self, v: VertexId) {
        let Some(x) = self.get(v).copied() else {
            return;
        };
        let drop_vertices = (v - self.first_id) as usize;
        let drop_slots = (x.first_slot - self.first_slot) as usize;
        self.vertices.drain(..drop_vertices);
        self.slots.drain(..drop_slots);
        self.first_id = v;
        self.first_slot = x.first_slot;
    }

    pub fn live_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Total vertices discovered so far, pruned ones included.
    pub fn discovered(&self) -> u64 {
        self.first_id + self.vertices.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discovery_assigns_children_once() {
        let mut t = LazyTree::with_root(2, 100);
        let mut draws = 0;
        let (a, new_a) = t
            .child_or_insert(LazyTree::ROOT, 2, || {
                draws += 1;
                3
            })
            .unwrap();
        assert!(new_a);
        let (a2, again) = t
            .child_or_insert(LazyTree::ROOT, 2, || unreachable!())
            .unwrap();
        assert_eq!((a2, again), (a, false));
        assert_eq!(draws, 1);
        assert_eq!(t.children(a), Some(3));
        assert_eq!(t.depth(a), Some(1));
        assert_eq!(t.parent(a), Some(LazyTree::ROOT));
        assert_eq!(t.parent(LazyTree::ROOT), None);
        assert_eq!(t.child(LazyTree::ROOT, 1), None);
        assert_eq!(t.child(LazyTree::ROOT, 2), Some(a));
    }

    #[test]
    fn prune_keeps_suffix_addressable() {
        let mut t = LazyTree::with_root(1, 100);
        let mut v = LazyTree::ROOT;
        let mut path = vec![v];
        for _ in 0..10 {
            v = t.child_or_insert(v, 1, || 2).unwrap().0;
            path.push(v);
        }
        let cut = path[6];
        t.prune_below(cut);
        assert!(!t.is_live(path[5]));
        assert_eq!(t.depth(cut), Some(6));
        assert_eq!(t.child(path[7], 1), Some(path[8]));
        assert_eq!(t.live_vertices(), 5);
        let (w, fresh) = t.child_or_insert(path[10], 2, || 1).unwrap();
        assert!(fresh);
        assert_eq!(t.depth(w), Some(11));
        assert_eq!(t.discovered(), 12);
    }

    #[test]
    fn capacity_is_explicit() {
        let mut t = LazyTree::with_root(1, 3);
        let a = t.child_or_insert(0, 1, || 1).unwrap().0;
        let b = t.child_or_insert(a, 1, || 1).unwrap().0;
        assert!(matches!(
            t.child_or_insert(b, 1, || 1),
            Err(Error::Capacity(_))
        ));
    }
}
