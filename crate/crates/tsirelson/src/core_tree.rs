//! The core tree: a finite parameter tree shared by all constructed
//! tree-analyses.
//!
//! Each node carries a weight rank m; the number of children in the
//! truncation is its period M. Nodes are enumerated in lexicographic
//! (depth-first preorder) order starting from the root, and all derived
//! quantities — ancestor weight sums, branch scales, level tail sets — are
//! recomputed from the tree rather than stored.

use crate::ratio::{q_one, Q};
use crate::space::SpaceSpec;
use crate::theta::Round;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Nested wire form: {"m": int, "children": [...]}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedCore {
    pub m: u32,
    #[serde(default)]
    pub children: Vec<NestedCore>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CoreNode {
    path: Vec<u32>,
    m: u32,
    parent: Option<usize>,
    children: Vec<usize>,
}

/// Finite truncation of a core tree; node ids are lexicographic indices
/// (id 0 is the root).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreTree {
    nodes: Vec<CoreNode>,
}

impl CoreTree {
    pub fn from_nested(root: &NestedCore) -> Self {
        let mut nodes = Vec::new();
        fn visit(
            n: &NestedCore,
            path: Vec<u32>,
            parent: Option<usize>,
            nodes: &mut Vec<CoreNode>,
        ) -> usize {
            let id = nodes.len();
            nodes.push(CoreNode { path: path.clone(), m: n.m, parent, children: Vec::new() });
            for (i, c) in n.children.iter().enumerate() {
                let mut p = path.clone();
                p.push(i as u32 + 1);
                let cid = visit(c, p, Some(id), nodes);
                nodes[id].children.push(cid);
            }
            id
        }
        visit(root, Vec::new(), None, &mut nodes);
        CoreTree { nodes }
    }

    /// Depth-1 tree: a root with the given child ranks.
    pub fn flat(root_m: u32, child_ms: &[u32]) -> Self {
        CoreTree::from_nested(&NestedCore {
            m: root_m,
            children: child_ms.iter().map(|&m| NestedCore { m, children: Vec::new() }).collect(),
        })
    }

    pub fn to_nested(&self) -> NestedCore {
        fn build(tree: &CoreTree, id: usize) -> NestedCore {
            NestedCore {
                m: tree.nodes[id].m,
                children: tree.nodes[id].children.iter().map(|&c| build(tree, c)).collect(),
            }
        }
        build(self, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a core tree always has its root
    }

    pub fn m(&self, id: usize) -> u32 {
        self.nodes[id].m
    }

    /// Number of children in the truncation (the period M).
    pub fn period(&self, id: usize) -> u32 {
        self.nodes[id].children.len() as u32
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn level(&self, id: usize) -> usize {
        self.nodes[id].path.len()
    }

    pub fn path(&self, id: usize) -> &[u32] {
        &self.nodes[id].path
    }

    pub fn node_by_path(&self, path: &[u32]) -> Option<usize> {
        self.nodes.iter().position(|n| n.path == path)
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.path.len()).max().unwrap_or(0)
    }

    pub fn ids_at_level(&self, level: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.level(i) == level).collect()
    }

    /// Sum of weight ranks over proper ancestors (0 at the root).
    pub fn ord(&self, id: usize) -> u32 {
        let mut total = 0;
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            total += self.nodes[p].m;
            cur = self.nodes[p].parent;
        }
        total
    }

    /// Product of θ_{m} over proper ancestors (1 at the root); the factor
    /// scaling a node's functional inside the root functional.
    pub fn scale(&self, id: usize, space: &SpaceSpec, round: Round) -> Q {
        let mut acc = q_one();
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            acc *= space.theta(self.nodes[p].m, round);
            cur = self.nodes[p].parent;
        }
        acc
    }

    /// The level tail set of node j: same-level nodes after j in
    /// lexicographic order, plus the children of same-level nodes before
    /// j. Recomputed on every call.
    pub fn tail_set(&self, j: usize) -> Vec<usize> {
        assert!(j > 0, "tail set is defined for non-root nodes");
        let l = self.level(j);
        let mut out = Vec::new();
        for id in 0..self.nodes.len() {
            if self.level(id) == l && id > j {
                out.push(id);
            }
            if self.level(id) == l && id < j {
                out.extend(self.nodes[id].children.iter().copied());
            }
        }
        out.sort_unstable();
        out
    }

    pub fn tail_count(&self, j: usize) -> usize {
        self.tail_set(j).len()
    }

    /// Weight ranks present at a level of the truncation.
    pub fn ranks_at_level(&self, level: usize) -> BTreeSet<u32> {
        self.ids_at_level(level).into_iter().map(|id| self.m(id)).collect()
    }

    /// Branch scales strictly decrease iff every ancestor weight is
    /// certifiably below 1.
    pub fn check_scales_decreasing(&self, space: &SpaceSpec) -> bool {
        (0..self.nodes.len()).all(|id| {
            self.nodes[id].children.is_empty() || {
                let (_, hi) = space.theta_bounds(self.nodes[id].m);
                hi < q_one() || {
                    let (lo, hi) = space.theta_bounds(self.nodes[id].m);
                    lo == hi && hi < q_one()
                }
            }
        })
    }
}

impl Serialize for CoreTree {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.to_nested().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for CoreTree {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        Ok(CoreTree::from_nested(&NestedCore::deserialize(de)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::q;

    fn sample() -> CoreTree {
        // root -> (1), (2), (3); (1) -> (1,1), (1,2)
        CoreTree::from_nested(&NestedCore {
            m: 1,
            children: vec![
                NestedCore {
                    m: 2,
                    children: vec![
                        NestedCore { m: 3, children: vec![] },
                        NestedCore { m: 4, children: vec![] },
                    ],
                },
                NestedCore { m: 5, children: vec![] },
                NestedCore { m: 6, children: vec![] },
            ],
        })
    }

    #[test]
    fn lex_enumeration_is_preorder() {
        let t = sample();
        let paths: Vec<&[u32]> = (0..t.len()).map(|i| t.path(i)).collect();
        assert_eq!(
            paths,
            vec![
                &[][..],
                &[1][..],
                &[1, 1][..],
                &[1, 2][..],
                &[2][..],
                &[3][..]
            ]
        );
        assert_eq!(t.period(0), 3);
        assert_eq!(t.period(1), 2);
    }

    #[test]
    fn ord_and_scale() {
        let t = sample();
        let sp = crate::space::SpaceSpec::schreier_reciprocal();
        assert_eq!(t.ord(0), 0);
        assert_eq!(t.ord(1), 1);
        assert_eq!(t.ord(2), 3); // m_root + m_(1) = 1 + 2
        assert_eq!(t.scale(0, &sp, Round::Down), q(1, 1));
        assert_eq!(t.scale(2, &sp, Round::Down), q(1, 6)); // θ_1 θ_2 = 1/2 · 1/3
    }

    #[test]
    fn tail_sets() {
        let t = sample();
        // Node 1 = (1): after it at level 1 are (2), (3).
        assert_eq!(t.tail_set(1), vec![4, 5]);
        assert_eq!(t.tail_count(1), 2);
        // Node 4 = (2): after it is (3); before it (1) contributes its
        // children (1,1), (1,2).
        assert_eq!(t.tail_set(4), vec![2, 3, 5]);
        assert_eq!(t.tail_count(4), 3);
    }

    #[test]
    fn nested_round_trip() {
        let t = sample();
        let s = serde_json::to_string(&t).unwrap();
        let u: CoreTree = serde_json::from_str(&s).unwrap();
        assert_eq!(t, u);
    }

    #[test]
    fn ranks_at_levels() {
        let t = sample();
        assert_eq!(t.ranks_at_level(0).into_iter().collect::<Vec<_>>(), vec![1]);
        assert_eq!(t.ranks_at_level(1).into_iter().collect::<Vec<_>>(), vec![2, 5, 6]);
    }
}
