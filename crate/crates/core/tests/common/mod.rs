//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, RngCore};
use stitchstab::seam::{SeamGraph, INF, LARGE};

/// Passable edges of `g`, read straight from the edge arrays.
fn adjacency(g: &SeamGraph) -> Vec<Vec<(usize, u64)>> {
    let (w, h) = (g.width, g.height);
    let id = |x: usize, y: usize| y * (w + 1) + x;
    let mut adj = vec![Vec::new(); (w + 1) * (h + 1)];
    for y in 0..=h {
        for x in 0..w {
            let c = g.h_edges[y * w + x];
            if c != INF {
                adj[id(x, y)].push((id(x + 1, y), c as u64));
                if !g.monotone_x {
                    adj[id(x + 1, y)].push((id(x, y), c as u64));
                }
            }
        }
    }
    for y in 0..h {
        for x in 0..=w {
            let c = g.v_edges[y * (w + 1) + x];
            if c != INF {
                adj[id(x, y)].push((id(x, y + 1), c as u64));
                adj[id(x, y + 1)].push((id(x, y), c as u64));
            }
        }
    }
    for list in &mut adj {
        list.sort_by_key(|&(_, c)| c);
    }
    adj
}

/// Minimum seam cost by enumerating every simple path from a start node to
/// an end node. Branches whose partial cost already reaches the best complete
/// path are cut, which cannot hide a cheaper path since costs are
/// non-negative.
pub fn brute_force_seam(g: &SeamGraph) -> Option<u64> {
    let adj = adjacency(g);
    let mut is_end = vec![false; adj.len()];
    for &e in &g.end {
        is_end[e] = true;
    }
    let mut best: Option<u64> = None;
    let mut visited = vec![false; adj.len()];

    fn dfs(u: usize, cost: u64, adj: &[Vec<(usize, u64)>], is_end: &[bool], visited: &mut [bool], best: &mut Option<u64>) {
        if best.is_some_and(|b| cost >= b) {
            return;
        }
        if is_end[u] {
            *best = Some(cost);
            return;
        }
        visited[u] = true;
        for &(v, c) in &adj[u] {
            if !visited[v] {
                dfs(v, cost + c, adj, is_end, visited, best);
            }
        }
        visited[u] = false;
    }

    for &s in &g.start {
        dfs(s, 0, &adj, &is_end, &mut visited, &mut best);
    }
    best
}

/// Column sweep over an x-monotone graph whose start nodes sit in the first
/// node column and end nodes in the last: each column takes the best entry
/// from its left neighbor, then relaxes up and down.
pub fn dp_sweep(g: &SeamGraph) -> Option<u64> {
    let (w, h) = (g.width, g.height);
    assert!(g.monotone_x, "the sweep only models left-to-right seams");
    assert!(g.start.iter().all(|&s| s % (w + 1) == 0), "starts must be in column 0");
    assert!(g.end.iter().all(|&e| e % (w + 1) == w), "ends must be in the last column");
    let add = |a: u64, c: u32| if a == u64::MAX || c == INF { u64::MAX } else { a + c as u64 };
    let relax = |col: &mut Vec<u64>, x: usize| {
        for y in 1..=h {
            col[y] = col[y].min(add(col[y - 1], g.v_edges[(y - 1) * (w + 1) + x]));
        }
        for y in (0..h).rev() {
            col[y] = col[y].min(add(col[y + 1], g.v_edges[y * (w + 1) + x]));
        }
    };
    let mut col = vec![u64::MAX; h + 1];
    for &s in &g.start {
        col[s / (w + 1)] = 0;
    }
    relax(&mut col, 0);
    for x in 1..=w {
        col = (0..=h).map(|y| add(col[y], g.h_edges[y * w + x - 1])).collect();
        relax(&mut col, x);
    }
    let best = g.end.iter().map(|&e| col[e / (w + 1)]).min()?;
    (best != u64::MAX).then_some(best)
}

fn random_cost(rng: &mut impl RngCore, wall_p: f64) -> u32 {
    let r: f64 = rng.random();
    if r < wall_p {
        INF
    } else if r < wall_p + 0.2 {
        rng.random_range(0..3)
    } else {
        rng.random_range(0..=LARGE)
    }
}

/// Perimeter nodes of a `w x h` pixel raster, clockwise from the top-left.
pub fn perimeter_nodes(w: usize, h: usize) -> Vec<usize> {
    let id = |x: usize, y: usize| y * (w + 1) + x;
    let mut out: Vec<usize> = (0..w).map(|x| id(x, 0)).collect();
    out.extend((0..h).map(|y| id(w, y)));
    out.extend((1..=w).rev().map(|x| id(x, h)));
    out.extend((1..=h).rev().map(|y| id(0, y)));
    out
}

/// Random graph of at most `max` x `max` pixels with walls, near-ties and
/// up to three start and end nodes on the perimeter.
pub fn random_graph(rng: &mut impl RngCore, max: usize) -> SeamGraph {
    let (w, h) = (rng.random_range(1..=max), rng.random_range(1..=max));
    let mut g = SeamGraph::new(w, h);
    let wall_p = rng.random_range(0.0..0.3);
    g.h_edges.iter_mut().for_each(|c| *c = random_cost(rng, wall_p));
    g.v_edges.iter_mut().for_each(|c| *c = random_cost(rng, wall_p));
    let per = perimeter_nodes(w, h);
    let pick = |rng: &mut dyn RngCore| -> Vec<usize> {
        let k = rng.random_range(1..=3);
        (0..k).map(|_| per[rng.random_range(0..per.len())]).collect()
    };
    g.start = pick(rng);
    g.end = pick(rng);
    g
}

/// Random x-monotone graph running from the left column to the right one.
pub fn random_type_i_graph(rng: &mut impl RngCore, max_w: usize, max_h: usize) -> SeamGraph {
    let (w, h) = (rng.random_range(1..=max_w), rng.random_range(1..=max_h));
    let mut g = SeamGraph::new(w, h);
    let wall_p = rng.random_range(0.0..0.2);
    g.h_edges.iter_mut().for_each(|c| *c = random_cost(rng, wall_p));
    g.v_edges.iter_mut().for_each(|c| *c = random_cost(rng, wall_p));
    g.monotone_x = true;
    let y0 = rng.random_range(0..=h);
    let y1 = rng.random_range(y0..=h);
    g.start = (y0..=y1).map(|y| y * (w + 1)).collect();
    let y0 = rng.random_range(0..=h);
    let y1 = rng.random_range(y0..=h);
    g.end = (y0..=y1).map(|y| y * (w + 1) + w).collect();
    g
}
