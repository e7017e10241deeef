use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ChartData, ChartSpec};

const ITERATIONS: usize = 200;

/// Fills in missing node positions with a seeded Fruchterman-Reingold
/// layout. Nodes that already have a position stay pinned. Positions are
/// normalized into [0.05, 0.95]^2.
pub fn layout_network(spec: &ChartSpec, seed: u64) -> ChartSpec {
    let mut out = spec.clone();
    let ChartData::Network(net) = &mut out.data else {
        return out;
    };
    if net.nodes.iter().all(|n| n.position.is_some()) {
        return out;
    }
    let n = net.nodes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64)> = net
        .nodes
        .iter()
        .map(|node| node.position.unwrap_or_else(|| (rng.gen::<f64>(), rng.gen::<f64>())))
        .collect();
    let pinned: Vec<bool> = net.nodes.iter().map(|node| node.position.is_some()).collect();
    let index = |id: &str| net.nodes.iter().position(|node| node.id == id);
    let edges: Vec<(usize, usize)> = net
        .edges
        .iter()
        .filter_map(|e| Some((index(&e.source)?, index(&e.target)?)))
        .collect();

    let k = (1.0 / n.max(1) as f64).sqrt();
    for iter in 0..ITERATIONS {
        let temperature = 0.1 * (1.0 - iter as f64 / ITERATIONS as f64);
        let mut disp = vec![(0.0f64, 0.0f64); n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-6);
                let f = k * k / d;
                disp[i].0 += dx / d * f;
                disp[i].1 += dy / d * f;
            }
        }
        for &(a, b) in &edges {
            let (dx, dy) = (pos[a].0 - pos[b].0, pos[a].1 - pos[b].1);
            let d = (dx * dx + dy * dy).sqrt().max(1e-6);
            let f = d * d / k;
            disp[a].0 -= dx / d * f;
            disp[a].1 -= dy / d * f;
            disp[b].0 += dx / d * f;
            disp[b].1 += dy / d * f;
        }
        for i in 0..n {
            if pinned[i] {
                continue;
            }
            let (dx, dy) = disp[i];
            let len = (dx * dx + dy * dy).sqrt().max(1e-9);
            let step = len.min(temperature);
            pos[i].0 += dx / len * step;
            pos[i].1 += dy / len * step;
        }
    }

    let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &i in &free {
        x0 = x0.min(pos[i].0);
        y0 = y0.min(pos[i].1);
        x1 = x1.max(pos[i].0);
        y1 = y1.max(pos[i].1);
    }
    let norm = |v: f64, lo: f64, hi: f64| if hi - lo < 1e-9 { 0.5 } else { 0.05 + 0.9 * (v - lo) / (hi - lo) };
    for &i in &free {
        net.nodes[i].position = Some((norm(pos[i].0, x0, x1), norm(pos[i].1, y0, y1)));
    }
    out
}
