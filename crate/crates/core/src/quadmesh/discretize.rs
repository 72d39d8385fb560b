//! Division counts for layout edges and the nodes placed along them.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::QuadMeshError;
use crate::conformal::CrossField;
use crate::geom::Vec2;
use crate::layout::QuadLayout;

/// Maximal run of layout edges between nodes that are a corner of some patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// `(layout edge, traversed forward)` in order.
    pub edges: Vec<(usize, bool)>,
    pub nodes: [usize; 2],
    pub points: Vec<Vec2>,
    /// `∫ e^{-H} dl` along the chain.
    pub weight: f64,
    pub ideal: usize,
}

/// A patch side as a chain, possibly traversed backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideRef {
    pub chain: usize,
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub chains: Vec<Chain>,
    /// Final division count per chain.
    pub counts: Vec<usize>,
    /// Chord class per chain.
    pub class: Vec<usize>,
    /// Sides of each patch.
    pub sides: Vec<[SideRef; 4]>,
}

fn corner_nodes(layout: &QuadLayout) -> BTreeSet<usize> {
    let mut s: BTreeSet<usize> = layout.patches.iter().flat_map(|p| p.corners.iter().copied()).collect();
    s.extend((0..layout.nodes.len()).filter(|&i| layout.nodes[i].is_singular()));
    s
}

pub fn build_chains(layout: &QuadLayout) -> Result<Vec<Chain>, QuadMeshError> {
    let breaks = corner_nodes(layout);
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (e, edge) in layout.edges.iter().enumerate() {
        incident.entry(edge.nodes[0]).or_default().push(e);
        incident.entry(edge.nodes[1]).or_default().push(e);
    }
    let mut used = vec![false; layout.edges.len()];
    let mut chains = Vec::new();
    for start in 0..layout.edges.len() {
        if used[start] {
            continue;
        }
        // walk backwards to the beginning of the run, then forwards along it
        let (mut e, mut fwd) = (start, true);
        loop {
            let n = if fwd { layout.edges[e].nodes[0] } else { layout.edges[e].nodes[1] };
            if breaks.contains(&n) {
                break;
            }
            let inc = &incident[&n];
            if inc.len() != 2 {
                return Err(QuadMeshError::Chain { node: n });
            }
            let o = if inc[0] == e { inc[1] } else { inc[0] };
            if o == start {
                break;
            }
            fwd = layout.edges[o].nodes[1] == n;
            e = o;
        }
        let first = if fwd { layout.edges[e].nodes[0] } else { layout.edges[e].nodes[1] };
        let mut edges = Vec::new();
        loop {
            used[e] = true;
            edges.push((e, fwd));
            let n = if fwd { layout.edges[e].nodes[1] } else { layout.edges[e].nodes[0] };
            if breaks.contains(&n) || n == first {
                break;
            }
            let inc = &incident[&n];
            if inc.len() != 2 {
                return Err(QuadMeshError::Chain { node: n });
            }
            let o = if inc[0] == e { inc[1] } else { inc[0] };
            if used[o] {
                break;
            }
            fwd = layout.edges[o].nodes[0] == n;
            e = o;
        }
        let last = {
            let &(e, f) = edges.last().unwrap();
            if f {
                layout.edges[e].nodes[1]
            } else {
                layout.edges[e].nodes[0]
            }
        };
        let mut points: Vec<Vec2> = Vec::new();
        for &(e, f) in &edges {
            let mut pts = layout.edges[e].points.clone();
            if !f {
                pts.reverse();
            }
            let skip = usize::from(!points.is_empty());
            points.extend_from_slice(&pts[skip..]);
        }
        chains.push(Chain { edges, nodes: [first, last], points, weight: 0.0, ideal: 0 });
    }
    Ok(chains)
}

fn h_at(cross: &CrossField, p: Vec2) -> f64 {
    match cross.mesh.locate(p) {
        Ok(loc) => cross.h_at(&loc),
        Err(_) => cross.h.values[cross.mesh.nearest_vertex(p)],
    }
}

/// Cumulative `∫ e^{-H} dl` at each chain point, with H sampled at segment midpoints.
pub fn weighted_arc(cross: &CrossField, points: &[Vec2]) -> Vec<f64> {
    let mut s = vec![0.0];
    for w in points.windows(2) {
        let m = w[0].lerp(w[1], 0.5);
        s.push(s.last().unwrap() + w[0].dist(w[1]) * (-h_at(cross, m)).exp());
    }
    s
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Ideal counts from the size map, made equal on opposite sides of every
/// patch by averaging over chord classes.
pub fn discretize_edges(cross: &CrossField, layout: &QuadLayout, target_size: f64) -> Result<Discretization, QuadMeshError> {
    if !(target_size > 0.0) {
        return Err(QuadMeshError::TargetSize(target_size));
    }
    let mut chains = build_chains(layout)?;
    for c in &mut chains {
        c.weight = *weighted_arc(cross, &c.points).last().unwrap();
        c.ideal = ((c.weight / target_size).round() as usize).max(1);
    }
    let mut of_edge: HashMap<usize, usize> = HashMap::new();
    for (k, c) in chains.iter().enumerate() {
        for &(e, _) in &c.edges {
            of_edge.insert(e, k);
        }
    }
    let mut sides = Vec::with_capacity(layout.patches.len());
    for (p, patch) in layout.patches.iter().enumerate() {
        if !patch.is_quad() {
            return Err(QuadMeshError::NotQuad { patch: p });
        }
        let mut refs = [SideRef { chain: 0, reversed: false }; 4];
        for (k, side) in patch.sides.iter().enumerate() {
            let chain = of_edge[&(side[0] / 2)];
            let c = &chains[chain];
            let edges: BTreeSet<usize> = side.iter().map(|h| h / 2).collect();
            if edges.len() != c.edges.len() || c.edges.iter().any(|(e, _)| !edges.contains(e)) {
                return Err(QuadMeshError::Contradiction { patch: p });
            }
            let from = layout.half_edge_from(side[0]);
            refs[k] = SideRef { chain, reversed: from != c.nodes[0] };
        }
        sides.push(refs);
    }
    let mut uf = UnionFind((0..chains.len()).collect());
    for s in &sides {
        uf.union(s[0].chain, s[2].chain);
        uf.union(s[1].chain, s[3].chain);
    }
    let class: Vec<usize> = (0..chains.len()).map(|k| uf.find(k)).collect();
    let mut sum: HashMap<usize, (usize, usize)> = HashMap::new();
    for (k, c) in chains.iter().enumerate() {
        let e = sum.entry(class[k]).or_insert((0, 0));
        e.0 += c.ideal;
        e.1 += 1;
    }
    let counts: Vec<usize> = class
        .iter()
        .map(|r| {
            let (s, n) = sum[r];
            ((s as f64 / n as f64).round() as usize).max(1)
        })
        .collect();
    for (p, s) in sides.iter().enumerate() {
        if counts[s[0].chain] != counts[s[2].chain] || counts[s[1].chain] != counts[s[3].chain] {
            return Err(QuadMeshError::Contradiction { patch: p });
        }
    }
    Ok(Discretization { chains, counts, class, sides })
}

/// `count - 1` interior points splitting the chain into equal size-map weight.
pub fn chain_nodes(cross: &CrossField, chain: &Chain, count: usize) -> Vec<Vec2> {
    let s = weighted_arc(cross, &chain.points);
    let total = *s.last().unwrap();
    let mut out = Vec::with_capacity(count.saturating_sub(1));
    let mut j = 0;
    for k in 1..count {
        let target = total * k as f64 / count as f64;
        while j + 2 < s.len() && s[j + 1] < target {
            j += 1;
        }
        let span = s[j + 1] - s[j];
        let f = if span > 0.0 { ((target - s[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(chain.points[j].lerp(chain.points[j + 1], f));
    }
    out
}
