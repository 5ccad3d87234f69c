//! Rooted tree over the state space.
//!
//! States are dense ids `0..len()`, with `0` the root. Descendant sets are
//! stored as contiguous intervals of a depth-first preorder, so membership of
//! `j` in the subtree `T(k)` is a range test.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("parent chain of node {node} never reaches the root")]
    CycleDetected { node: usize },
    #[error("node {node} has parent {parent}, outside 0..={max}")]
    DanglingParent { node: usize, parent: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    level: Vec<usize>,
    levels: Vec<Vec<usize>>,
    preorder: Vec<usize>,
    // position of each node in `preorder`, and one past the end of its subtree
    enter: Vec<usize>,
    exit: Vec<usize>,
}

impl Tree {
    /// Builds a tree from `parents`, where `parents[k]` is the parent of node `k + 1`.
    pub fn from_parents(parents: &[usize]) -> Result<Self, TreeError> {
        let n = parents.len() + 1;
        let mut parent = vec![None; n];
        for (k, &p) in parents.iter().enumerate() {
            let node = k + 1;
            if p >= n {
                return Err(TreeError::DanglingParent { node, parent: p, max: n - 1 });
            }
            parent[node] = Some(p);
        }

        // Resolve levels by walking each chain; a chain longer than n has a cycle.
        const UNKNOWN: usize = usize::MAX;
        let mut level = vec![UNKNOWN; n];
        level[0] = 0;
        let mut chain = Vec::new();
        for start in 1..n {
            if level[start] != UNKNOWN {
                continue;
            }
            chain.clear();
            let mut cur = start;
            while level[cur] == UNKNOWN {
                if chain.len() >= n {
                    return Err(TreeError::CycleDetected { node: start });
                }
                chain.push(cur);
                cur = parent[cur].expect("only the root lacks a parent");
            }
            let mut lv = level[cur];
            for &node in chain.iter().rev() {
                lv += 1;
                level[node] = lv;
            }
        }

        let mut children = vec![Vec::new(); n];
        for node in 1..n {
            children[parent[node].unwrap()].push(node);
        }
        let depth = level.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); depth + 1];
        for node in 0..n {
            levels[level[node]].push(node);
        }

        let mut preorder = Vec::with_capacity(n);
        let mut enter = vec![0; n];
        let mut exit = vec![0; n];
        let mut stack = vec![(0usize, false)];
        while let Some((node, done)) = stack.pop() {
            if done {
                exit[node] = preorder.len();
                continue;
            }
            enter[node] = preorder.len();
            preorder.push(node);
            stack.push((node, true));
            for &c in children[node].iter().rev() {
                stack.push((c, false));
            }
        }

        Ok(Self { parent, children, level, levels, preorder, enter, exit })
    }

    /// A linear chain `0 - 1 - ... - m`.
    pub fn chain(m: usize) -> Self {
        let parents: Vec<usize> = (0..m).collect();
        Self::from_parents(&parents).expect("chain is a valid tree")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Parent list in the format accepted by [`Tree::from_parents`].
    pub fn parent_list(&self) -> Vec<usize> {
        self.parent[1..].iter().map(|p| p.unwrap()).collect()
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn level(&self, node: usize) -> usize {
        self.level[node]
    }

    /// Index `M` of the deepest level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn level_set(&self, m: usize) -> &[usize] {
        &self.levels[m]
    }

    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    /// Nodes of the subtree `T(k)` in preorder, `k` first.
    pub fn subtree(&self, k: usize) -> &[usize] {
        &self.preorder[self.enter[k]..self.exit[k]]
    }

    /// Descendants `D(k)` in preorder.
    pub fn descendants(&self, k: usize) -> &[usize] {
        &self.preorder[self.enter[k] + 1..self.exit[k]]
    }

    /// `j ∈ T(k)`.
    #[inline]
    pub fn in_subtree(&self, j: usize, k: usize) -> bool {
        let e = self.enter[j];
        self.enter[k] <= e && e < self.exit[k]
    }

    /// `j ∈ D(k)`.
    #[inline]
    pub fn is_descendant(&self, j: usize, k: usize) -> bool {
        j != k && self.in_subtree(j, k)
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn terminals(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_terminal(i)).collect()
    }

    /// True when every node has at most one child.
    pub fn is_chain(&self) -> bool {
        self.children.iter().all(|c| c.len() <= 1)
    }

    /// The path `Δ(i, j)`: nodes after `i` on the way down to `j`, ending at `j`.
    /// `None` unless `j ∈ D(i)`.
    pub fn path(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        if !self.is_descendant(j, i) {
            return None;
        }
        let mut path = Vec::with_capacity(self.level[j] - self.level[i]);
        let mut cur = j;
        while cur != i {
            path.push(cur);
            cur = self.parent[cur].unwrap();
        }
        path.reverse();
        Some(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_branching_tree() {
        let t = Tree::from_parents(&[0, 0, 1]).unwrap();
        assert_eq!(t.levels(), &[vec![0], vec![1, 2], vec![3]]);
        assert_eq!(t.descendants(1), &[3]);
        assert_eq!(t.descendants(0).len(), 3);
        assert_eq!(t.subtree(1), &[1, 3]);
        assert!(t.is_terminal(2) && t.is_terminal(3) && !t.is_terminal(1));
        assert_eq!(t.depth(), 2);
        assert_eq!(t.children(0), &[1, 2]);
    }

    #[test]
    fn chain_paths() {
        let t = Tree::from_parents(&[0, 1, 2]).unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.path(0, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(t.path(1, 3).unwrap(), vec![2, 3]);
        assert!(t.path(3, 1).is_none());
        assert!(t.path(2, 2).is_none());
        assert!(t.is_chain());
        assert_eq!(t, Tree::chain(3));
    }

    #[test]
    fn two_cycle_is_rejected() {
        // nodes 1 and 2 point at each other
        let err = Tree::from_parents(&[2, 1]).unwrap_err();
        assert!(matches!(err, TreeError::CycleDetected { .. }));
        assert!(matches!(Tree::from_parents(&[1]).unwrap_err(), TreeError::CycleDetected { node: 1 }));
    }

    #[test]
    fn dangling_parent() {
        assert_eq!(
            Tree::from_parents(&[0, 7]).unwrap_err(),
            TreeError::DanglingParent { node: 2, parent: 7, max: 2 }
        );
    }

    #[test]
    fn parent_list_round_trip() {
        let parents = [0, 0, 1, 1, 2, 5];
        let t = Tree::from_parents(&parents).unwrap();
        assert_eq!(t.parent_list(), parents);
        assert_eq!(t.terminals(), vec![3, 4, 6]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        // Random trees: node k+1 picks any earlier node as parent.
        fn arb_parents() -> impl Strategy<Value = Vec<usize>> {
            (1usize..30).prop_flat_map(|n| {
                (0..n).map(|k| 0..=k).collect::<Vec<_>>()
            })
        }

        proptest! {
            #[test]
            fn structural_invariants(parents in arb_parents()) {
                let t = Tree::from_parents(&parents).unwrap();
                for j in 1..t.len() {
                    let p = t.parent(j).unwrap();
                    prop_assert_eq!(t.level(j), t.level(p) + 1);
                    let path = t.path(0, j).unwrap();
                    prop_assert_eq!(path.len(), t.level(j));
                    prop_assert_eq!(*path.last().unwrap(), j);
                    for w in path.windows(2) {
                        prop_assert_eq!(t.parent(w[1]), Some(w[0]));
                    }
                }
                prop_assert_eq!(t.descendants(0).len(), t.len() - 1);
                for k in 0..t.len() {
                    // interval membership agrees with walking the parent chain
                    for j in 0..t.len() {
                        let mut cur = Some(j);
                        let mut hit = false;
                        while let Some(c) = cur {
                            if c == k { hit = true; break; }
                            cur = t.parent(c);
                        }
                        prop_assert_eq!(t.in_subtree(j, k), hit);
                    }
                }
            }
        }
    }
}
