//! Depression delineation: steepest-descent labeling with deterministic flat
//! routing, zone adjacency extraction, and the optional shallow-zone merge.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use crate::terrain::DtmRaster;

const NONE: usize = usize::MAX;

/// Steepest-descent receiver of every valid cell, with flats drained toward
/// their outlets by breadth-first distance. Cells left without a receiver
/// belong to closed plateaus or pits: the local minima.
pub(crate) fn receivers(dtm: &DtmRaster) -> Vec<usize> {
    let n = dtm.len();
    let mut recv = vec![NONE; n];
    let (nc, z) = (dtm.ncols, &dtm.elevation);
    for i in 0..n {
        if !dtm.is_valid(i) {
            continue;
        }
        let mut best = 0.0;
        for j in dtm.neighbors8(i) {
            if !dtm.is_valid(j) || z[j] >= z[i] {
                continue;
            }
            let diagonal = (i % nc) != (j % nc) && (i / nc) != (j / nc);
            let slope = (z[i] - z[j]) / if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
            if slope > best {
                best = slope;
                recv[i] = j;
            }
        }
    }
    // Drain flats: breadth-first from cells that already descend.
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| recv[i] != NONE).collect();
    while let Some(c) = queue.pop_front() {
        for j in dtm.neighbors8(c) {
            if dtm.is_valid(j) && recv[j] == NONE && z[j] == z[c] {
                recv[j] = c;
                queue.push_back(j);
            }
        }
    }
    recv
}

/// Labels every valid cell with the index of the local minimum it drains to.
/// Returns the labels and the number of minima. Minima are numbered in order
/// of their lowest cell index.
pub(crate) fn label_minima(dtm: &DtmRaster, recv: &[usize]) -> (Vec<usize>, usize) {
    let n = dtm.len();
    let mut label = vec![NONE; n];
    let mut count = 0;
    // Closed plateaus: equal-elevation components of receiver-less cells.
    for seed in 0..n {
        if !dtm.is_valid(seed) || recv[seed] != NONE || label[seed] != NONE {
            continue;
        }
        label[seed] = count;
        let mut stack = vec![seed];
        while let Some(c) = stack.pop() {
            for j in dtm.neighbors8(c) {
                if dtm.is_valid(j) && recv[j] == NONE && label[j] == NONE && dtm.elevation[j] == dtm.elevation[c] {
                    label[j] = count;
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    let mut path = Vec::new();
    for i in 0..n {
        if !dtm.is_valid(i) || label[i] != NONE {
            continue;
        }
        let mut c = i;
        while label[c] == NONE {
            path.push(c);
            c = recv[c];
        }
        let l = label[c];
        for p in path.drain(..) {
            label[p] = l;
        }
    }
    (label, count)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EdgeAcc {
    pub crest: f64,
    pub shared_edges: usize,
}

/// Zone pairs sharing at least one cell edge, keyed `(low id, high id)`.
/// Crest is the minimum over shared cell pairs of the higher of the two cells.
pub(crate) fn zone_adjacency(dtm: &DtmRaster, label: &[usize]) -> BTreeMap<(usize, usize), EdgeAcc> {
    let mut edges: BTreeMap<(usize, usize), EdgeAcc> = BTreeMap::new();
    let (nc, nr) = (dtm.ncols, dtm.nrows);
    let mut visit = |i: usize, j: usize| {
        if !dtm.is_valid(i) || !dtm.is_valid(j) || label[i] == label[j] {
            return;
        }
        let key = (label[i].min(label[j]), label[i].max(label[j]));
        let crest = dtm.elevation[i].max(dtm.elevation[j]);
        edges
            .entry(key)
            .and_modify(|e| {
                e.crest = e.crest.min(crest);
                e.shared_edges += 1;
            })
            .or_insert(EdgeAcc { crest, shared_edges: 1 });
    };
    for r in 0..nr {
        for c in 0..nc {
            let i = r * nc + c;
            if c + 1 < nc {
                visit(i, i + 1);
            }
            if r + 1 < nr {
                visit(i, i + nc);
            }
        }
    }
    edges
}

#[derive(Clone, Copy, PartialEq)]
struct Pending {
    depth: f64,
    zone: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (depth, zone)
        other
            .depth
            .total_cmp(&self.depth)
            .then_with(|| other.zone.cmp(&self.zone))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Merges zones shallower than `epsilon` (spill minus bottom) into the
/// neighbor across their lowest crest, shallowest first. Returns a map from
/// old zone index to surviving zone index.
pub(crate) fn merge_shallow(
    count: usize,
    z_min: &[f64],
    edges: &BTreeMap<(usize, usize), EdgeAcc>,
    epsilon: f64,
) -> Vec<usize> {
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
    for (&(a, b), e) in edges {
        adj[a].insert(b, e.crest);
        adj[b].insert(a, e.crest);
    }
    let mut bottom = z_min.to_vec();
    let mut parent: Vec<usize> = (0..count).collect();
    let spill_depth = |adj: &BTreeMap<usize, f64>, bottom: f64| -> Option<f64> {
        adj.values().copied().min_by(f64::total_cmp).map(|c| c - bottom)
    };
    let mut heap = BinaryHeap::new();
    for k in 0..count {
        if let Some(depth) = spill_depth(&adj[k], bottom[k]) {
            heap.push(Pending { depth, zone: k });
        }
    }
    while let Some(Pending { depth, zone }) = heap.pop() {
        if depth >= epsilon {
            break;
        }
        if parent[zone] != zone || spill_depth(&adj[zone], bottom[zone]) != Some(depth) {
            continue;
        }
        let (&target, _) = adj[zone]
            .iter()
            .min_by(|x, y| x.1.total_cmp(y.1).then(x.0.cmp(y.0)))
            .expect("zone with a spill depth has a neighbor");
        let moved = std::mem::take(&mut adj[zone]);
        for (n, crest) in moved {
            adj[n].remove(&zone);
            if n == target {
                continue;
            }
            let e = adj[target].entry(n).or_insert(crest);
            *e = e.min(crest);
            let c = adj[target][&n];
            adj[n].insert(target, c);
        }
        parent[zone] = target;
        bottom[target] = bottom[target].min(bottom[zone]);
        if let Some(d) = spill_depth(&adj[target], bottom[target]) {
            heap.push(Pending {
                depth: d,
                zone: target,
            });
        }
    }
    (0..count)
        .map(|mut k| {
            while parent[k] != k {
                k = parent[k];
            }
            k
        })
        .collect()
}
