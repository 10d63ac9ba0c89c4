use std::collections::BTreeMap;

use super::{CandidatePair, PersonCluster};
use crate::data::DetectionRef;

/// Disjoint sets over `0..n` with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false when `x` and `y` were already joined.
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let (mut rx, mut ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        if self.size[rx] < self.size[ry] {
            std::mem::swap(&mut rx, &mut ry);
        }
        self.parent[ry] = rx;
        self.size[rx] += self.size[ry];
        true
    }
}

/// Connected components of the accepted matches over `refs`.
///
/// Every reference in `refs` (and every match endpoint) lands in exactly one
/// cluster; clusters come out sorted by their smallest member.
pub fn cluster_detections(refs: &[DetectionRef], matches: &[CandidatePair]) -> Vec<PersonCluster> {
    let mut index: BTreeMap<&DetectionRef, usize> = BTreeMap::new();
    for r in refs.iter().chain(matches.iter().flat_map(|m| [&m.a, &m.b])) {
        let next = index.len();
        index.entry(r).or_insert(next);
    }
    let mut uf = UnionFind::new(index.len());
    let mut worst: BTreeMap<&DetectionRef, f64> = BTreeMap::new();
    for m in matches {
        uf.union(index[&m.a], index[&m.b]);
        let cost = m.pa_cost.unwrap_or(0.0);
        for r in [&m.a, &m.b] {
            let e = worst.entry(r).or_insert(cost);
            *e = e.max(cost);
        }
    }
    let mut groups: BTreeMap<usize, PersonCluster> = BTreeMap::new();
    for (r, &i) in &index {
        let c = groups.entry(uf.find(i)).or_default();
        c.members.insert((*r).clone());
        if let Some(&cost) = worst.get(r) {
            c.member_costs.insert((*r).clone(), cost);
        }
    }
    let mut clusters: Vec<PersonCluster> = groups.into_values().collect();
    clusters.sort_by(|x, y| x.members.first().cmp(&y.members.first()));
    clusters
}

/// Removes same-view duplicates (worst recorded cost first, larger id on
/// ties) until every cluster has at most one member per view, then drops
/// clusters with fewer than `k_min` members.
pub fn resolve_conflicts(clusters: &[PersonCluster], k_min: usize) -> Vec<PersonCluster> {
    clusters
        .iter()
        .map(|c| {
            let mut c = c.clone();
            while let Some(victim) = conflict_victim(&c) {
                c.members.remove(&victim);
                c.member_costs.remove(&victim);
            }
            c
        })
        .filter(|c| c.len() >= k_min)
        .collect()
}

fn conflict_victim(c: &PersonCluster) -> Option<DetectionRef> {
    let mut by_view: BTreeMap<&str, Vec<&DetectionRef>> = BTreeMap::new();
    for m in &c.members {
        by_view.entry(&m.view_id).or_default().push(m);
    }
    let crowded = by_view.into_values().find(|v| v.len() > 1)?;
    let cost = |r: &DetectionRef| c.member_costs.get(r).copied().unwrap_or(0.0);
    crowded
        .into_iter()
        .max_by(|x, y| cost(x).total_cmp(&cost(y)).then(x.detection_id.cmp(&y.detection_id)))
        .cloned()
}
