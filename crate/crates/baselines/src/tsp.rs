//! Open travelling-salesman tours: nearest-neighbor construction followed by
//! 2-opt reversals and Or-opt segment moves until neither improves.

/// Symmetric travel costs between `len()` nodes.
pub trait TspWeights {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight(&self, a: usize, b: usize) -> f64;

    /// Secondary key for nearest-neighbor ties, e.g. the straight-line
    /// distance when many nodes share a saturated weight.
    fn tie_break(&self, _a: usize, _b: usize) -> f64 {
        0.0
    }

    /// 2-opt partners of `a` for large instances, nearest first.
    fn candidates(&self, a: usize) -> Vec<usize> {
        let mut c: Vec<usize> = (0..self.len()).filter(|b| *b != a).collect();
        c.sort_by(|x, y| self.weight(a, *x).total_cmp(&self.weight(a, *y)).then(x.cmp(y)));
        c.truncate(CANDIDATES);
        c
    }
}

/// Full pairwise matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights {
    n: usize,
    w: Vec<f64>,
}

impl DenseWeights {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut w = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                w[a * n + b] = if a == b { 0.0 } else { f(a.min(b), a.max(b)) };
            }
        }
        Self { n, w }
    }

    /// Euclidean distances between points.
    pub fn euclidean(points: &[(f64, f64)]) -> Self {
        Self::from_fn(points.len(), |a, b| (points[a].0 - points[b].0).hypot(points[a].1 - points[b].1))
    }
}

impl TspWeights for DenseWeights {
    fn len(&self) -> usize {
        self.n
    }

    fn weight(&self, a: usize, b: usize) -> f64 {
        self.w[a * self.n + b]
    }
}

/// Instances up to this size run exhaustive 2-opt and Or-opt passes; larger
/// ones use 2-opt over candidate lists.
pub const FULL_TWO_OPT_LIMIT: usize = 800;
pub const CANDIDATES: usize = 12;
const EPS: f64 = 1e-9;

pub fn tour_cost<W: TspWeights + ?Sized>(w: &W, order: &[usize]) -> f64 {
    order.windows(2).map(|p| w.weight(p[0], p[1])).sum()
}

/// Visiting order over all nodes, starting at `start`, not returning.
pub fn tsp_plan<W: TspWeights + ?Sized>(w: &W, start: usize) -> Vec<usize> {
    let n = w.len();
    assert!(start < n, "start node out of range");
    let mut tour = nearest_neighbor(w, start);
    if n <= FULL_TWO_OPT_LIMIT {
        loop {
            two_opt_full(w, &mut tour);
            if !or_opt(w, &mut tour) {
                break;
            }
        }
    } else {
        two_opt_candidates(w, &mut tour);
    }
    tour
}

fn nearest_neighbor<W: TspWeights + ?Sized>(w: &W, start: usize) -> Vec<usize> {
    let n = w.len();
    let mut used = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    used[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut best: Option<(f64, f64, usize)> = None;
        for b in (0..n).filter(|b| !used[*b]) {
            let key = (w.weight(cur, b), w.tie_break(cur, b), b);
            let better = match best {
                None => true,
                Some(k) => key.0.total_cmp(&k.0).then(key.1.total_cmp(&k.1)).then(key.2.cmp(&k.2)).is_lt(),
            };
            if better {
                best = Some(key);
            }
        }
        cur = best.expect("an unvisited node remains").2;
        used[cur] = true;
        tour.push(cur);
    }
    tour
}

/// Cost change of reversing `tour[p+1..=q]`, which replaces the edges
/// (t[p], t[p+1]) and (t[q], t[q+1]) by (t[p], t[q]) and (t[p+1], t[q+1]).
/// The second edge is absent when `q` is the last position.
fn reversal_delta<W: TspWeights + ?Sized>(w: &W, t: &[usize], p: usize, q: usize) -> f64 {
    let (a, b, c) = (t[p], t[p + 1], t[q]);
    let mut delta = w.weight(a, c) - w.weight(a, b);
    if let Some(&d) = t.get(q + 1) {
        delta += w.weight(b, d) - w.weight(c, d);
    }
    delta
}

fn two_opt_full<W: TspWeights + ?Sized>(w: &W, tour: &mut [usize]) {
    let n = tour.len();
    loop {
        let mut improved = false;
        for p in 0..n.saturating_sub(2) {
            for q in p + 2..n {
                if reversal_delta(w, tour, p, q) < -EPS {
                    tour[p + 1..=q].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Moves one segment of up to three nodes, possibly reversed, to its best
/// position elsewhere in the tour. The start node never moves. Returns
/// whether the tour improved.
fn or_opt<W: TspWeights + ?Sized>(w: &W, tour: &mut Vec<usize>) -> bool {
    let n = tour.len();
    let mut improved = false;
    for len in 1..=3 {
        let mut s = 1;
        while s + len <= n {
            let (first, last) = (tour[s], tour[s + len - 1]);
            let prev = tour[s - 1];
            let next = tour.get(s + len).copied();
            let gain = w.weight(prev, first) + next.map_or(0.0, |d| w.weight(last, d) - w.weight(prev, d));
            let mut best: Option<(f64, usize, bool)> = None;
            for k in (0..n).filter(|k| *k + 1 < s || *k >= s + len) {
                let x = tour[k];
                let y = tour.get(k + 1).copied();
                for reversed in [false, true] {
                    let (a, b) = if reversed { (last, first) } else { (first, last) };
                    let add = w.weight(x, a) + y.map_or(0.0, |y| w.weight(b, y) - w.weight(x, y));
                    if gain - add > EPS && best.is_none_or(|(g, _, _)| gain - add > g) {
                        best = Some((gain - add, k, reversed));
                    }
                }
            }
            if let Some((_, k, reversed)) = best {
                let mut seg: Vec<usize> = tour.drain(s..s + len).collect();
                if reversed {
                    seg.reverse();
                }
                let at = if k < s { k + 1 } else { k + 1 - len };
                tour.splice(at..at, seg);
                improved = true;
            } else {
                s += 1;
            }
        }
    }
    improved
}

fn two_opt_candidates<W: TspWeights + ?Sized>(w: &W, tour: &mut [usize]) {
    let n = tour.len();
    let cands: Vec<Vec<usize>> = (0..n).map(|a| w.candidates(a)).collect();
    let mut pos = vec![0; n];
    for (k, v) in tour.iter().enumerate() {
        pos[*v] = k;
    }
    loop {
        let mut improved = false;
        for a in 0..n {
            for &c in &cands[a] {
                let (i, j) = (pos[a], pos[c]);
                let (lo, hi) = (i.min(j), i.max(j));
                // the new edge (a, c) appears either as the first or the
                // second edge of a reversal
                for (p, q) in [(lo, hi), (lo.wrapping_sub(1), hi.wrapping_sub(1))] {
                    if p == usize::MAX || q < p + 2 {
                        continue;
                    }
                    if reversal_delta(w, tour, p, q) < -EPS {
                        tour[p + 1..=q].reverse();
                        for (k, v) in tour.iter().enumerate().take(q + 1).skip(p + 1) {
                            pos[*v] = k;
                        }
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
}
