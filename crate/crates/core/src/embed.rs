//! Self-intersection and self-approach checks for sampled planar curves.
//!
//! Two segments count as nonadjacent when the arc length separating them is at
//! least 1.5 times their Euclidean distance. Nearby pairs along a smooth curve
//! never qualify, while a crossing or a neck where two far-apart parts of the
//! curve come close always does.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

const ARC_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// Smallest distance over nonadjacent segment pairs within reach; None if no pair is closer than the cell size.
    pub min_distance: Option<f64>,
    pub worst_pair: Option<(usize, usize)>,
    /// A located crossing, if any.
    pub crossing: Option<[f64; 2]>,
    pub pass: bool,
    pub segments: usize,
}

struct Polyline<'a> {
    pts: &'a [[f64; 2]],
    closed: bool,
    /// arc length at each vertex
    cum: Vec<f64>,
    total: f64,
}

impl<'a> Polyline<'a> {
    fn new(pts: &'a [[f64; 2]], closed: bool) -> Self {
        let mut cum = vec![0.0; pts.len()];
        for i in 1..pts.len() {
            cum[i] = cum[i - 1] + dist(pts[i - 1], pts[i]);
        }
        let total = if closed { cum[pts.len() - 1] + dist(pts[pts.len() - 1], pts[0]) } else { cum[pts.len() - 1] };
        Self { pts, closed, cum, total }
    }

    fn count(&self) -> usize {
        if self.closed {
            self.pts.len()
        } else {
            self.pts.len() - 1
        }
    }

    fn seg(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        (self.pts[i], self.pts[(i + 1) % self.pts.len()])
    }

    fn seg_len(&self, i: usize) -> f64 {
        let (a, b) = self.seg(i);
        dist(a, b)
    }

    fn shares_vertex(&self, i: usize, j: usize) -> bool {
        let m = self.count();
        let d = i.abs_diff(j);
        d <= 1 || (self.closed && d == m - 1)
    }

    /// Arc length between the nearest endpoints of segments i and j.
    fn gap(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let direct = self.cum[hi] - self.cum[lo] - self.seg_len(lo);
        if self.closed {
            let around = self.total - (self.cum[hi] - self.cum[lo]) - self.seg_len(hi);
            direct.min(around)
        } else {
            direct
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn point_seg(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Intersection point of two segments if they properly cross or touch.
fn intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> Option<[f64; 2]> {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        let t = d1 / (d1 - d2);
        return Some([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    None
}

fn seg_seg(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> (f64, Option<[f64; 2]>) {
    if let Some(x) = intersect(a, b, c, d) {
        return (0.0, Some(x));
    }
    let m = point_seg(a, c, d).min(point_seg(b, c, d)).min(point_seg(c, a, b)).min(point_seg(d, a, b));
    (m, None)
}

struct Acc {
    best: Option<(f64, usize, usize)>,
    crossing: Option<[f64; 2]>,
}

impl Acc {
    fn visit(&mut self, poly: &Polyline, i: usize, j: usize, cutoff: f64) {
        if poly.shares_vertex(i, j) {
            return;
        }
        let (a, b) = poly.seg(i);
        let (c, d) = poly.seg(j);
        let (dd, x) = seg_seg(a, b, c, d);
        if dd >= cutoff || poly.gap(i, j) < ARC_FACTOR * dd {
            return;
        }
        if x.is_some() && self.crossing.is_none() {
            self.crossing = x;
        }
        if self.best.map_or(true, |(m, _, _)| dd < m) {
            self.best = Some((dd, i, j));
        }
    }

    fn finish(self, poly: &Polyline, frac: f64) -> EmbeddingReport {
        let pass = match self.best {
            None => true,
            Some((d, i, j)) => d > frac * 0.5 * (poly.seg_len(i) + poly.seg_len(j)),
        };
        EmbeddingReport {
            min_distance: self.best.map(|b| b.0),
            worst_pair: self.best.map(|b| (b.1, b.2)),
            crossing: self.crossing,
            pass: pass && self.crossing.is_none(),
            segments: poly.count(),
        }
    }
}

/// Spatial-hash check at cell size `cell`; PASS iff every nonadjacent pair is
/// farther apart than `frac` times their local spacing.
pub fn check_embedded(pts: &[[f64; 2]], closed: bool, cell: f64, frac: f64) -> EmbeddingReport {
    assert!(pts.len() >= 4, "need at least 4 samples");
    let poly = Polyline::new(pts, closed);
    let key = |p: f64| (p / cell).floor() as i64;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..poly.count() {
        let (a, b) = poly.seg(i);
        for cx in key(a[0].min(b[0]))..=key(a[0].max(b[0])) {
            for cy in key(a[1].min(b[1]))..=key(a[1].max(b[1])) {
                grid.entry((cx, cy)).or_default().push(i);
            }
        }
    }
    let mut acc = Acc { best: None, crossing: None };
    let mut keys: Vec<&(i64, i64)> = grid.keys().collect();
    keys.sort();
    for &(cx, cy) in keys {
        let here = &grid[&(cx, cy)];
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(there) = grid.get(&(cx + dx, cy + dy)) {
                    for &i in here {
                        for &j in there {
                            if i < j {
                                acc.visit(&poly, i, j, cell);
                            }
                        }
                    }
                }
            }
        }
    }
    acc.finish(&poly, frac)
}

/// All-pairs reference implementation of `check_embedded`.
pub fn check_embedded_brute(pts: &[[f64; 2]], closed: bool, cell: f64, frac: f64) -> EmbeddingReport {
    let poly = Polyline::new(pts, closed);
    let mut acc = Acc { best: None, crossing: None };
    for i in 0..poly.count() {
        for j in i + 1..poly.count() {
            acc.visit(&poly, i, j, cell);
        }
    }
    acc.finish(&poly, frac)
}
