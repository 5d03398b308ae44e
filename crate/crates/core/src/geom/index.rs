use super::{point_in_polygon, segment_distance_sq, BBox, Point, Polygon};

pub const DEFAULT_FANOUT: usize = 16;

/// Geometry that can be stored in a [`SpatialIndex`].
pub trait Spatial {
    fn bbox(&self) -> BBox;

    /// Exact test: does the geometry share at least one point with the closed disk?
    fn intersects_disk(&self, center: Point, radius: f64) -> bool;
}

impl Spatial for Polygon {
    fn bbox(&self) -> BBox {
        Polygon::bbox(self)
    }

    fn intersects_disk(&self, center: Point, radius: f64) -> bool {
        if !Polygon::bbox(self).intersects_disk(center, radius) {
            return false;
        }
        if point_in_polygon(center, self) {
            return true;
        }
        let r_sq = radius * radius;
        std::iter::once(self.exterior())
            .chain(self.holes().iter().map(Vec::as_slice))
            .flat_map(|ring| ring.windows(2))
            .any(|w| segment_distance_sq(center, w[0], w[1]) <= r_sq)
    }
}

pub(crate) fn polyline_intersects_disk(path: &[Point], center: Point, radius: f64) -> bool {
    let r_sq = radius * radius;
    match path {
        [single] => single.distance_sq(&center) <= r_sq,
        _ => path
            .windows(2)
            .any(|w| segment_distance_sq(center, w[0], w[1]) <= r_sq),
    }
}

/// Anything that can answer "which geometries touch this disk?".
pub trait DiskQuery {
    /// Ids (positions in the indexed slice) in ascending order.
    fn query_disk(&self, center: Point, radius: f64) -> Vec<usize>;
}

/// Brute-force scan over every geometry.
pub struct LinearScan<'a, T> {
    items: &'a [T],
}

impl<'a, T: Spatial> LinearScan<'a, T> {
    pub fn new(items: &'a [T]) -> Self {
        LinearScan { items }
    }
}

impl<T: Spatial> DiskQuery for LinearScan<'_, T> {
    fn query_disk(&self, center: Point, radius: f64) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, g)| g.intersects_disk(center, radius))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bbox: BBox,
    start: usize,
    len: usize,
}

/// Bulk-loaded bounding-box tree using sort-tile-recursive packing.
///
/// Immutable after construction. Level 0 holds leaves whose children are
/// ranges of `item_order`; level `k > 0` nodes reference ranges of level `k - 1`.
pub struct SpatialIndex<'a, T> {
    items: &'a [T],
    fanout: usize,
    item_order: Vec<usize>,
    item_boxes: Vec<BBox>,
    levels: Vec<Vec<Node>>,
}

/// STR ordering of a set of boxes: vertical slices by centre x, each sorted by centre y.
fn str_order(boxes: &[BBox], fanout: usize) -> Vec<usize> {
    let n = boxes.len();
    let leaves = n.div_ceil(fanout);
    let slices = (leaves as f64).sqrt().ceil().max(1.0) as usize;
    let per_slice = slices * fanout;
    let mut order: Vec<usize> = (0..n).collect();
    let cx = |i: usize| boxes[i].min_x + boxes[i].max_x;
    let cy = |i: usize| boxes[i].min_y + boxes[i].max_y;
    order.sort_by(|&a, &b| cx(a).total_cmp(&cx(b)).then(a.cmp(&b)));
    for chunk in order.chunks_mut(per_slice) {
        chunk.sort_by(|&a, &b| cy(a).total_cmp(&cy(b)).then(a.cmp(&b)));
    }
    order
}

fn pack(boxes: &[BBox], fanout: usize) -> Vec<Node> {
    (0..boxes.len())
        .step_by(fanout)
        .map(|start| {
            let len = fanout.min(boxes.len() - start);
            let bbox = boxes[start..start + len]
                .iter()
                .fold(BBox::EMPTY, |acc, b| acc.union(*b));
            Node { bbox, start, len }
        })
        .collect()
}

impl<'a, T: Spatial> SpatialIndex<'a, T> {
    pub fn build(items: &'a [T]) -> Self {
        Self::with_fanout(items, DEFAULT_FANOUT)
    }

    /// # Panics
    /// If `fanout < 2`.
    pub fn with_fanout(items: &'a [T], fanout: usize) -> Self {
        assert!(fanout >= 2, "spatial index fan-out must be at least 2");
        let boxes: Vec<BBox> = items.iter().map(Spatial::bbox).collect();
        let item_order = str_order(&boxes, fanout);
        let item_boxes: Vec<BBox> = item_order.iter().map(|&i| boxes[i]).collect();

        let mut levels = Vec::new();
        if !items.is_empty() {
            levels.push(pack(&item_boxes, fanout));
            while levels.last().map_or(false, |l: &Vec<Node>| l.len() > 1) {
                let level = levels.pop().unwrap();
                let node_boxes: Vec<BBox> = level.iter().map(|n| n.bbox).collect();
                let order = str_order(&node_boxes, fanout);
                let reordered: Vec<Node> = order.iter().map(|&i| level[i]).collect();
                let reordered_boxes: Vec<BBox> = reordered.iter().map(|n| n.bbox).collect();
                let parents = pack(&reordered_boxes, fanout);
                levels.push(reordered);
                levels.push(parents);
            }
        }
        SpatialIndex {
            items,
            fanout,
            item_order,
            item_boxes,
            levels,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn items(&self) -> &'a [T] {
        self.items
    }
}

impl<T: Spatial> DiskQuery for SpatialIndex<'_, T> {
    fn query_disk(&self, center: Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let Some(top) = self.levels.len().checked_sub(1) else {
            return out;
        };
        let r_sq = radius * radius;
        let mut stack: Vec<(usize, usize)> = (0..self.levels[top].len()).map(|i| (top, i)).collect();
        while let Some((level, idx)) = stack.pop() {
            let node = self.levels[level][idx];
            if node.bbox.distance_sq_to(center) > r_sq {
                continue;
            }
            let children = node.start..node.start + node.len;
            if level == 0 {
                for slot in children {
                    let id = self.item_order[slot];
                    if self.item_boxes[slot].distance_sq_to(center) <= r_sq
                        && self.items[id].intersects_disk(center, radius)
                    {
                        out.push(id);
                    }
                }
            } else {
                stack.extend(children.map(|c| (level - 1, c)));
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rects(n: usize, seed: u64) -> Vec<Polygon> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = rng.random_range(0.0..5000.0);
                let y = rng.random_range(0.0..5000.0);
                let w = rng.random_range(1.0..80.0);
                let h = rng.random_range(1.0..80.0);
                Polygon::rect(Point::new(x, y), Point::new(x + w, y + h)).unwrap()
            })
            .collect()
    }

    #[test]
    fn empty_index_returns_nothing() {
        let items: Vec<Polygon> = Vec::new();
        let idx = SpatialIndex::build(&items);
        assert!(idx.query_disk(Point::new(0.0, 0.0), 1e9).is_empty());
    }

    #[test]
    fn everything_inside_radius() {
        let items = random_rects(300, 1);
        let idx = SpatialIndex::build(&items);
        let ids = idx.query_disk(Point::new(2500.0, 2500.0), 1e5);
        assert_eq!(ids, (0..300).collect::<Vec<_>>());
    }

    #[test]
    fn matches_linear_scan_on_random_rectangles() {
        let items = random_rects(1000, 2);
        let idx = SpatialIndex::build(&items);
        let scan = LinearScan::new(&items);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let c = Point::new(rng.random_range(-200.0..5200.0), rng.random_range(-200.0..5200.0));
            let r = rng.random_range(1.0..600.0);
            assert_eq!(idx.query_disk(c, r), scan.query_disk(c, r));
        }
    }

    #[test]
    fn small_fanout_builds_deeper_tree() {
        let items = random_rects(500, 4);
        let idx = SpatialIndex::with_fanout(&items, 2);
        assert!(idx.depth() >= 8);
        let scan = LinearScan::new(&items);
        let c = Point::new(1000.0, 1000.0);
        assert_eq!(idx.query_disk(c, 700.0), scan.query_disk(c, 700.0));
    }

    #[test]
    fn exact_test_rejects_bbox_only_hits() {
        // Thin diagonal triangle whose bbox contains the query centre.
        let tri = vec![Polygon::from_exterior(vec![
            Point::new(0.0, 0.0),
            Point::new(100.0, 100.0),
            Point::new(100.0, 99.0),
        ])
        .unwrap()];
        let idx = SpatialIndex::build(&tri);
        assert!(idx.query_disk(Point::new(90.0, 10.0), 5.0).is_empty());
        assert_eq!(idx.query_disk(Point::new(50.0, 50.0), 1.0), vec![0]);
    }

    #[test]
    fn disk_inside_polygon_counts() {
        let big = vec![Polygon::rect(Point::new(0.0, 0.0), Point::new(100.0, 100.0)).unwrap()];
        let idx = SpatialIndex::build(&big);
        assert_eq!(idx.query_disk(Point::new(50.0, 50.0), 1.0), vec![0]);
    }

    #[test]
    fn polyline_disk_test() {
        let path = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        assert!(polyline_intersects_disk(&path, Point::new(5.0, 2.0), 2.0));
        assert!(!polyline_intersects_disk(&path, Point::new(5.0, 2.1), 2.0));
    }
}
