use crate::cloud::{PointCloud, Position};

const LEAF_SIZE: usize = 8;

/// Balanced kd-tree over integer voxel positions.
///
/// Queries return the point minimising squared Euclidean distance, with ties
/// resolved toward the smallest point index.
#[derive(Debug, Clone)]
pub struct NnIndex {
    // Points reordered so that every subtree occupies a contiguous range and
    // its splitting point sits at the range midpoint.
    points: Vec<[i64; 3]>,
    ids: Vec<u32>,
    axes: Vec<u8>,
}

impl NnIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_positions(cloud.positions())
    }

    pub fn from_positions(positions: &[Position]) -> Self {
        assert!(!positions.is_empty(), "cannot index an empty point set");
        assert!(positions.len() <= u32::MAX as usize);
        let mut items: Vec<([i64; 3], u32)> = positions
            .iter()
            .enumerate()
            .map(|(i, p)| ([p[0] as i64, p[1] as i64, p[2] as i64], i as u32))
            .collect();
        let mut axes = vec![0u8; items.len()];
        build(&mut items, &mut axes);
        let (points, ids) = items.into_iter().unzip();
        NnIndex { points, ids, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point to `p`.
    pub fn query(&self, p: Position) -> usize {
        self.nearest(p).0
    }

    /// Nearest point index and its squared distance.
    pub fn nearest(&self, p: Position) -> (usize, u64) {
        let q = [p[0] as i64, p[1] as i64, p[2] as i64];
        let mut best = (u64::MAX, u32::MAX);
        self.search(0, self.points.len(), &q, &mut best);
        (best.1 as usize, best.0)
    }

    fn search(&self, lo: usize, hi: usize, q: &[i64; 3], best: &mut (u64, u32)) {
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                let cand = (dist2(&self.points[i], q), self.ids[i]);
                if cand < *best {
                    *best = cand;
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = self.axes[mid] as usize;
        let cand = (dist2(&self.points[mid], q), self.ids[mid]);
        if cand < *best {
            *best = cand;
        }
        let diff = q[axis] - self.points[mid][axis];
        let (near, far) = if diff < 0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        // `<=` keeps equidistant points on the far side reachable for the
        // smallest-index tie rule.
        if ((diff * diff) as u64) <= best.0 {
            self.search(far.0, far.1, q, best);
        }
    }
}

#[inline]
fn dist2(a: &[i64; 3], b: &[i64; 3]) -> u64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx) as u64 + (dy * dy) as u64 + (dz * dz) as u64
}

fn build(items: &mut [([i64; 3], u32)], axes: &mut [u8]) {
    if items.len() <= LEAF_SIZE {
        return;
    }
    let axis = widest_axis(items);
    let mid = items.len() / 2;
    items.select_nth_unstable_by_key(mid, |(p, id)| (p[axis], *id));
    axes[mid] = axis as u8;
    let (left, rest) = items.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(left, left_axes);
    build(&mut rest[1..], &mut rest_axes[1..]);
}

fn widest_axis(items: &[([i64; 3], u32)]) -> usize {
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for (p, _) in items {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..3).max_by_key(|&a| (hi[a] - lo[a], std::cmp::Reverse(a))).unwrap()
}
