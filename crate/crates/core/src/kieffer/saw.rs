//! Trees of self-avoiding walks for the hardcore model.
//!
//! A walk that returns to a vertex `x` already on it ends in a pinned
//! leaf. With `w` the vertex following `x` on the walk and `u` the vertex
//! closing the cycle, the leaf is occupied when `u > w` and empty
//! otherwise (vertex-index order at `x`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple undirected graph; neighbour lists sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl SimpleGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!("edge ({u}, {v}) leaves the vertex set")));
            }
            if u == v {
                return Err(Error::InvalidArgument("self-loops are not allowed in hardcore graphs".into()));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        Ok(SimpleGraph { adj })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GraphJson = serde_json::from_str(s)?;
        let edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e[0], e[1])).collect();
        SimpleGraph::new(g.n, &edges).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, l) in self.adj.iter().enumerate() {
            for &v in l {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PinState {
    Free,
    Occupied,
    Empty,
}

#[derive(Clone, Debug, Serialize)]
pub struct SawNode {
    pub vertex: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub pin: PinState,
    pub activity: f64,
}

/// Node 0 is the root.
#[derive(Clone, Debug, Serialize)]
pub struct SawTree {
    pub nodes: Vec<SawNode>,
}

/// Graph pins reduced to deletions: empty pins are removed, occupied pins
/// are removed with their neighbours. Returns the surviving flags.
fn apply_pins(g: &SimpleGraph, pins: &[Option<bool>]) -> Result<Vec<bool>> {
    if pins.len() != g.len() {
        return Err(Error::InvalidArgument("pin vector length differs from graph size".into()));
    }
    for (u, p) in pins.iter().enumerate() {
        if *p == Some(true) && g.neighbors(u).iter().any(|&v| pins[v] == Some(true)) {
            return Err(Error::InconsistentPins(format!("adjacent occupied pins at vertex {u}")));
        }
    }
    let mut alive: Vec<bool> = pins.iter().map(|p| p.is_none()).collect();
    for (u, p) in pins.iter().enumerate() {
        if *p == Some(true) {
            for &v in g.neighbors(u) {
                alive[v] = false;
            }
        }
    }
    Ok(alive)
}

pub fn build_saw_tree(g: &SimpleGraph, activity: &[f64], root: usize, pins: &[Option<bool>]) -> Result<SawTree> {
    if root >= g.len() || activity.len() != g.len() {
        return Err(Error::InvalidArgument("root or activity vector out of range".into()));
    }
    let alive = apply_pins(g, pins)?;
    let mut nodes = vec![SawNode {
        vertex: root,
        parent: None,
        children: Vec::new(),
        pin: match pins[root] {
            Some(true) => PinState::Occupied,
            Some(false) => PinState::Empty,
            None if !alive[root] => PinState::Empty,
            None => PinState::Free,
        },
        activity: activity[root],
    }];
    if nodes[0].pin != PinState::Free {
        return Ok(SawTree { nodes });
    }
    let mut walk = vec![root];
    let mut pos = vec![usize::MAX; g.len()];
    pos[root] = 0;
    grow(g, activity, &alive, &mut walk, &mut pos, 0, &mut nodes);
    Ok(SawTree { nodes })
}

fn closing_pin(walk: &[usize], pos: &[usize], x: usize, u: usize) -> PinState {
    let w = walk[pos[x] + 1];
    if u > w {
        PinState::Occupied
    } else {
        PinState::Empty
    }
}

fn grow(
    g: &SimpleGraph,
    activity: &[f64],
    alive: &[bool],
    walk: &mut Vec<usize>,
    pos: &mut Vec<usize>,
    node: usize,
    nodes: &mut Vec<SawNode>,
) {
    let u = *walk.last().expect("nonempty walk");
    let prev = if walk.len() >= 2 { Some(walk[walk.len() - 2]) } else { None };
    for &x in g.neighbors(u) {
        if !alive[x] || Some(x) == prev {
            continue;
        }
        let id = nodes.len();
        if pos[x] != usize::MAX {
            let pin = closing_pin(walk, pos, x, u);
            nodes.push(SawNode { vertex: x, parent: Some(node), children: Vec::new(), pin, activity: activity[x] });
            nodes[node].children.push(id);
            continue;
        }
        nodes.push(SawNode { vertex: x, parent: Some(node), children: Vec::new(), pin: PinState::Free, activity: activity[x] });
        nodes[node].children.push(id);
        pos[x] = walk.len();
        walk.push(x);
        grow(g, activity, alive, walk, pos, id, nodes);
        walk.pop();
        pos[x] = usize::MAX;
    }
}

/// `R_v = λ_v ∏_c 1/(1 + R_c)` bottom-up; returns `R_root / (1 + R_root)`.
pub fn root_occupation(tree: &SawTree) -> f64 {
    fn ratio(t: &SawTree, i: usize) -> f64 {
        let n = &t.nodes[i];
        match n.pin {
            PinState::Occupied => f64::INFINITY,
            PinState::Empty => 0.0,
            PinState::Free => {
                let mut r = n.activity;
                for &c in &n.children {
                    let rc = ratio(t, c);
                    if rc.is_infinite() {
                        return 0.0;
                    }
                    r /= 1.0 + rc;
                }
                r
            }
        }
    }
    let r = ratio(tree, 0);
    if r.is_infinite() {
        1.0
    } else {
        r / (1.0 + r)
    }
}

/// The same recursion evaluated along the walks without storing the tree.
fn ratio_direct(
    g: &SimpleGraph,
    activity: &[f64],
    alive: &[bool],
    walk: &mut Vec<usize>,
    pos: &mut Vec<usize>,
    budget: &mut u64,
) -> Option<f64> {
    *budget = budget.checked_sub(1)?;
    let u = *walk.last().expect("nonempty walk");
    let prev = if walk.len() >= 2 { Some(walk[walk.len() - 2]) } else { None };
    let mut r = activity[u];
    for &x in g.neighbors(u) {
        if !alive[x] || Some(x) == prev {
            continue;
        }
        if pos[x] != usize::MAX {
            if closing_pin(walk, pos, x, u) == PinState::Occupied {
                return Some(0.0);
            }
            continue;
        }
        pos[x] = walk.len();
        walk.push(x);
        let rc = ratio_direct(g, activity, alive, walk, pos, budget);
        walk.pop();
        pos[x] = usize::MAX;
        r /= 1.0 + rc?;
    }
    Some(r)
}

/// Hardcore occupation probability of `v` given `pins`, through the
/// self-avoiding-walk tree.
pub fn hardcore_marginal_via_saw(g: &SimpleGraph, v: usize, activity: &[f64], pins: &[Option<bool>]) -> Result<f64> {
    hardcore_marginal_via_saw_budget(g, v, activity, pins, u64::MAX)
}

/// As [`hardcore_marginal_via_saw`], giving up after `budget` tree nodes.
pub fn hardcore_marginal_via_saw_budget(
    g: &SimpleGraph,
    v: usize,
    activity: &[f64],
    pins: &[Option<bool>],
    budget: u64,
) -> Result<f64> {
    if v >= g.len() || activity.len() != g.len() {
        return Err(Error::InvalidArgument("vertex or activity vector out of range".into()));
    }
    let alive = apply_pins(g, pins)?;
    match pins[v] {
        Some(true) => return Ok(1.0),
        Some(false) => return Ok(0.0),
        None if !alive[v] => return Ok(0.0),
        None => {}
    }
    let mut walk = vec![v];
    let mut pos = vec![usize::MAX; g.len()];
    pos[v] = 0;
    let mut left = budget;
    let r = ratio_direct(g, activity, &alive, &mut walk, &mut pos, &mut left)
        .ok_or_else(|| Error::BudgetExceeded(format!("self-avoiding walk tree exceeds {budget} nodes")))?;
    Ok(r / (1.0 + r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(g: &SimpleGraph, v: usize, act: &[f64], pins: &[Option<bool>]) -> f64 {
        let n = g.len();
        let (mut z, mut zv) = (0.0, 0.0);
        'sets: for s in 0u32..(1 << n) {
            for (u, p) in pins.iter().enumerate() {
                if let Some(b) = p {
                    if ((s >> u) & 1 == 1) != *b {
                        continue 'sets;
                    }
                }
            }
            for (a, b) in g.edges() {
                if (s >> a) & 1 == 1 && (s >> b) & 1 == 1 {
                    continue 'sets;
                }
            }
            let w: f64 = (0..n).filter(|&u| (s >> u) & 1 == 1).map(|u| act[u]).product();
            z += w;
            if (s >> v) & 1 == 1 {
                zv += w;
            }
        }
        zv / z
    }

    fn cycle(n: usize) -> SimpleGraph {
        let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        SimpleGraph::new(n, &e).unwrap()
    }

    #[test]
    fn small_trees() {
        let g = SimpleGraph::new(1, &[]).unwrap();
        let t = build_saw_tree(&g, &[2.0], 0, &[None]).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!((root_occupation(&t) - 2.0 / 3.0).abs() < 1e-15);
        let p2 = SimpleGraph::new(2, &[(0, 1)]).unwrap();
        let t = build_saw_tree(&p2, &[1.5, 1.5], 0, &[None, None]).unwrap();
        assert_eq!(t.nodes.len(), 2);
        // independent sets {∅, {0}, {1}}
        assert!((root_occupation(&t) - 1.5 / 4.0).abs() < 1e-15);
        let t = build_saw_tree(&p2, &[0.0, 0.0], 0, &[None, None]).unwrap();
        assert_eq!(root_occupation(&t), 0.0);
    }

    #[test]
    fn triangle_has_pinned_leaves_at_depth_two() {
        let t = build_saw_tree(&cycle(3), &[1.0; 3], 0, &[None; 3]).unwrap();
        assert_eq!(t.nodes.len(), 7);
        let pinned: Vec<_> = t.nodes.iter().filter(|n| n.pin != PinState::Free).collect();
        assert_eq!(pinned.len(), 2);
        // each closing leaf hangs below a depth-2 node
        for n in pinned {
            let p = n.parent.unwrap();
            let q = t.nodes[p].parent.unwrap();
            assert_eq!(t.nodes[q].parent, Some(0));
        }
        assert!((root_occupation(&t) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cycle_marginals() {
        assert!((hardcore_marginal_via_saw(&cycle(4), 2, &[1.0; 4], &[None; 4]).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!((hardcore_marginal_via_saw(&cycle(3), 1, &[1.0; 3], &[None; 3]).unwrap() - 0.25).abs() < 1e-15);
        let e = SimpleGraph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(hardcore_marginal_via_saw(&e, 0, &[1.0; 2], &[None, Some(true)]).unwrap(), 0.0);
        assert!(matches!(
            hardcore_marginal_via_saw(&e, 0, &[1.0; 2], &[Some(true), Some(true)]),
            Err(Error::InconsistentPins(_))
        ));
    }

    #[test]
    fn tree_and_direct_recursions_agree_with_brute_force() {
        let g = SimpleGraph::new(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 4)]).unwrap();
        let act = [0.5, 1.0, 2.0, 1.5, 0.7, 1.2];
        let pins = [None, None, None, None, Some(false), None];
        for v in 0..6 {
            let t = build_saw_tree(&g, &act, v, &pins).unwrap();
            let b = brute(&g, v, &act, &pins);
            assert!((root_occupation(&t) - b).abs() < 1e-12);
            assert!((hardcore_marginal_via_saw(&g, v, &act, &pins).unwrap() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_json() {
        let g = SimpleGraph::from_json(r#"{"n":3,"edges":[[0,1],[1,2]]}"#).unwrap();
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(SimpleGraph::from_json(r#"{"n":2,"edges":[[0,5]]}"#).is_err());
    }
}
