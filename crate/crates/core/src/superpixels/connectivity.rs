//! Connectivity enforcement: split disconnected label regions into their
//! face-connected components and absorb undersized components into their
//! largest adjacent neighbor.

use std::collections::{BinaryHeap, HashSet};

use crate::tensor::{relabel_contiguous, LabelMap};

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Unions two roots, keeping the smaller id as the new root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (root, child) = if a < b { (a, b) } else { (b, a) };
        self.parent[child] = root;
        root
    }
}

/// Labels face-connected components in scan order of their first pixel.
/// Returns (component id per pixel, component count).
fn connected_components(map: &LabelMap) -> (Vec<usize>, usize) {
    let shape = map.shape();
    let pixels = map.pixel_count();
    let mut comp = vec![usize::MAX; pixels];
    let mut next = 0usize;
    let mut stack = Vec::new();
    for start in 0..pixels {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = next;
        next += 1;
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let coords = shape.coords(i);
            for a in 0..shape.ndim() {
                for dir in [-1isize, 1] {
                    let c = coords[a] as isize + dir;
                    if c < 0 || c as usize >= shape.dims()[a] {
                        continue;
                    }
                    let mut ncoords = coords.clone();
                    ncoords[a] = c as usize;
                    let n = shape.flat_index(&ncoords);
                    if comp[n] == usize::MAX && map.labels()[n] == map.labels()[i] {
                        comp[n] = id;
                        stack.push(n);
                    }
                }
            }
        }
    }
    (comp, next)
}

/// Splits each label into face-connected components, then merges every
/// component smaller than `min_region` into its largest face-adjacent
/// neighbor (ties toward the smaller component id). The result is
/// relabeled contiguous in scan order.
pub fn enforce_connectivity(map: &LabelMap, min_region: usize) -> LabelMap {
    let (comp, n_comps) = connected_components(map);

    let mut sizes = vec![0usize; n_comps];
    for &c in &comp {
        sizes[c] += 1;
    }

    let mut neighbors: Vec<HashSet<usize>> = vec![HashSet::new(); n_comps];
    let shape = map.shape();
    for i in 0..map.pixel_count() {
        let coords = shape.coords(i);
        for a in 0..shape.ndim() {
            if coords[a] + 1 >= shape.dims()[a] {
                continue;
            }
            let mut ncoords = coords.clone();
            ncoords[a] += 1;
            let n = shape.flat_index(&ncoords);
            if comp[i] != comp[n] {
                neighbors[comp[i]].insert(comp[n]);
                neighbors[comp[n]].insert(comp[i]);
            }
        }
    }

    let mut sets = DisjointSets::new(n_comps);
    // Smallest components first; heap entries go stale after merges and are
    // re-validated on pop.
    let mut heap: BinaryHeap<std::cmp::Reverse<(usize, usize)>> = (0..n_comps)
        .map(|id| std::cmp::Reverse((sizes[id], id)))
        .collect();

    while let Some(std::cmp::Reverse((size, id))) = heap.pop() {
        if sets.find(id) != id || sizes[id] != size {
            continue;
        }
        if size >= min_region {
            continue;
        }
        // Largest neighbor, ties toward the smaller root id.
        let mut best: Option<(usize, usize)> = None;
        for &n in &neighbors[id] {
            let root = sets.find(n);
            if root == id {
                continue;
            }
            let candidate = (sizes[root], root);
            best = Some(match best {
                None => candidate,
                Some((bs, bi)) => {
                    if candidate.0 > bs || (candidate.0 == bs && candidate.1 < bi) {
                        candidate
                    } else {
                        (bs, bi)
                    }
                }
            });
        }
        let Some((_, target)) = best else {
            continue; // whole grid is one component
        };
        let (small, large) = if neighbors[id].len() <= neighbors[target].len() {
            (id, target)
        } else {
            (target, id)
        };
        let root = sets.union(id, target);
        sizes[root] = sizes[id] + sizes[target];
        let moved = std::mem::take(&mut neighbors[small]);
        neighbors[large].extend(moved);
        if large != root {
            neighbors[root] = std::mem::take(&mut neighbors[large]);
        }
        heap.push(std::cmp::Reverse((sizes[root], root)));
    }

    let raw: Vec<i32> = comp.iter().map(|&c| sets.find(c) as i32).collect();
    relabel_contiguous(&raw, shape.clone()).expect("component relabeling preserves coverage")
}
