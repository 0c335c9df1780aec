#![allow(dead_code)]

use rand::Rng;

pub const H: usize = 64;
pub const W: usize = 64;

/// Flood-fill 8-connected labelling: (centroid, pixel count) per component in scan order.
pub fn naive_components(bits: &[bool], h: usize, w: usize) -> Vec<((f64, f64), usize)> {
    let mut seen = vec![false; bits.len()];
    let mut out = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            sx += x as f64;
            sy += y as f64;
            n += 1;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(((sx / n as f64, sy / n as f64), n));
    }
    out
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Best assignment by brute force: most matches, then least total distance.
/// Returns (matches, which predictions matched).
pub fn exhaustive_match(pred: &[(f64, f64)], gt: &[(f64, f64)], thr: f64) -> (usize, Vec<bool>) {
    fn rec(
        p: usize,
        pred: &[(f64, f64)],
        gt: &[(f64, f64)],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        best: &mut (usize, f64, Vec<Option<usize>>),
    ) {
        if p == pred.len() {
            let n = cur.iter().flatten().count();
            let d: f64 = cur
                .iter()
                .enumerate()
                .filter_map(|(i, g)| g.map(|g| dist(pred[i], gt[g])))
                .sum();
            if n > best.0 || (n == best.0 && d < best.1) {
                *best = (n, d, cur.clone());
            }
            return;
        }
        cur[p] = None;
        rec(p + 1, pred, gt, thr, used, cur, best);
        for g in 0..gt.len() {
            if !used[g] && dist(pred[p], gt[g]) < thr {
                used[g] = true;
                cur[p] = Some(g);
                rec(p + 1, pred, gt, thr, used, cur, best);
                used[g] = false;
                cur[p] = None;
            }
        }
    }
    let mut best = (0, f64::INFINITY, vec![None; pred.len()]);
    rec(0, pred, gt, thr, &mut vec![false; gt.len()], &mut vec![None; pred.len()], &mut best);
    (best.0, best.2.iter().map(|g| g.is_some()).collect())
}

/// Random instance: up to `max_gt` targets and `max_pred` separated blobs, many near targets.
pub struct Instance {
    pub gt: Vec<(f64, f64)>,
    pub bits: Vec<bool>,
}

const SHAPES: [&[(i64, i64)]; 5] = [
    &[(0, 0)],
    &[(0, 0), (1, 0)],
    &[(0, 0), (0, 1)],
    &[(0, 0), (1, 0), (0, 1), (1, 1)],
    &[(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)],
];

pub fn random_instance(rng: &mut impl Rng, max_gt: usize, max_pred: usize) -> Instance {
    let ng = rng.gen_range(0..=max_gt);
    let gt: Vec<(f64, f64)> = (0..ng)
        .map(|_| (rng.gen_range(4.0..60.0), rng.gen_range(4.0..60.0)))
        .collect();
    let np = rng.gen_range(0..=max_pred);
    let mut bits = vec![false; H * W];
    let mut placed = 0;
    let mut tries = 0;
    while placed < np && tries < 1000 {
        tries += 1;
        let (cx, cy) = if !gt.is_empty() && rng.gen_bool(0.7) {
            let g = gt[rng.gen_range(0..gt.len())];
            (
                (g.0 + rng.gen_range(-4.0..4.0)).round() as i64,
                (g.1 + rng.gen_range(-4.0..4.0)).round() as i64,
            )
        } else {
            (rng.gen_range(2..62), rng.gen_range(2..62))
        };
        let shape = SHAPES[rng.gen_range(0..SHAPES.len())];
        let px: Vec<(i64, i64)> = shape.iter().map(|(dx, dy)| (cx + dx, cy + dy)).collect();
        let inside = px.iter().all(|(x, y)| *x >= 0 && *y >= 0 && *x < W as i64 && *y < H as i64);
        // keep blobs from touching so each one stays its own component
        let clear = inside
            && px.iter().all(|(x, y)| {
                (-1..=1).all(|dy| {
                    (-1..=1).all(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx < 0 || ny < 0 || nx >= W as i64 || ny >= H as i64 || !bits[ny as usize * W + nx as usize]
                    })
                })
            });
        if clear {
            for (x, y) in px {
                bits[y as usize * W + x as usize] = true;
            }
            placed += 1;
        }
    }
    Instance { gt, bits }
}

/// No prediction or target has a second candidate within `thr + 1` of it.
pub fn unambiguous(pred: &[(f64, f64)], gt: &[(f64, f64)], thr: f64) -> bool {
    let near = |a: (f64, f64), b: (f64, f64)| dist(a, b) < thr + 1.0;
    pred.iter().all(|p| gt.iter().filter(|g| near(*p, **g)).count() <= 1)
        && gt.iter().all(|g| pred.iter().filter(|p| near(**p, *g)).count() <= 1)
}
