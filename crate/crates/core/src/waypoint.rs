//! Waypoint detection without a prior map.
//!
//! The revealed traversable space is thinned to a one-cell skeleton, junction
//! cells of that skeleton are clustered with DBSCAN and the cluster centres
//! become candidate goals. Four fixed offsets around the robot are added so
//! that there is always somewhere to go, then candidates too close or too far
//! are discarded and one is picked by the forward-cone rule.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, Pose};
use crate::gridworld::{Cell, CostMap, GridFrame};

/// Candidates closer than this are dropped, meters.
pub const MIN_WAYPOINT_DISTANCE: f64 = 1.0;
/// Candidates further than this are dropped, meters.
pub const MAX_WAYPOINT_DISTANCE: f64 = 50.0;
/// Offset of the front/back/left/right fallback candidates, meters.
pub const FALLBACK_OFFSET: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WaypointError {
    #[error("no waypoint candidates survive filtering")]
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonMask {
    pub frame: GridFrame,
    pub cells: Vec<bool>,
    pub source_revision: u64,
}

impl SkeletonMask {
    pub fn get(&self, cell: Cell) -> bool {
        self.cells[self.frame.index(cell)]
    }

    fn at(&self, col: i64, row: i64) -> bool {
        self.frame
            .checked_cell(col, row)
            .is_some_and(|c| self.cells[self.frame.index(c)])
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .map(|(i, _)| self.frame.cell_at(i))
    }

    /// Neighbourhood ring in the order N, NE, E, SE, S, SW, W, NW.
    fn ring(&self, cell: Cell) -> [bool; 8] {
        let (c, r) = (cell.col as i64, cell.row as i64);
        [
            self.at(c, r + 1),
            self.at(c + 1, r + 1),
            self.at(c + 1, r),
            self.at(c + 1, r - 1),
            self.at(c, r - 1),
            self.at(c - 1, r - 1),
            self.at(c - 1, r),
            self.at(c - 1, r + 1),
        ]
    }

    /// True when some 2x2 block is entirely skeleton.
    pub fn has_thick_block(&self) -> bool {
        self.first_thick_block().is_some()
    }

    fn first_thick_block(&self) -> Option<[Cell; 4]> {
        let f = self.frame;
        for row in 0..f.height.saturating_sub(1) {
            for col in 0..f.width.saturating_sub(1) {
                let block = [
                    Cell::new(col, row),
                    Cell::new(col + 1, row),
                    Cell::new(col, row + 1),
                    Cell::new(col + 1, row + 1),
                ];
                if block.iter().all(|c| self.get(*c)) {
                    return Some(block);
                }
            }
        }
        None
    }
}

fn neighbor_count(ring: &[bool; 8]) -> usize {
    ring.iter().filter(|b| **b).count()
}

/// Number of off-to-on transitions walking once around the ring.
fn crossing_number(ring: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !ring[k] && ring[(k + 1) % 8]).count()
}

/// Yokoi connectivity number for 8-connected foreground. A pixel whose
/// removal keeps the local topology unchanged has value 1.
fn yokoi8(ring: &[bool; 8]) -> i32 {
    let bg = |k: usize| i32::from(!ring[k % 8]);
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| bg(k) - bg(k) * bg(k + 1) * bg(k + 2))
        .sum()
}

fn is_simple(ring: &[bool; 8]) -> bool {
    yokoi8(ring) == 1
}

/// Thins the traversable cells (free with cost below lethal) to a
/// one-cell-wide, 8-connected skeleton.
///
/// Two-subcycle parallel thinning marks candidates; each mark is re-checked
/// against the current image before deletion so that a component can never
/// vanish or split. A final pass breaks any remaining 2x2 blocks.
pub fn skeletonize(costmap: &CostMap) -> SkeletonMask {
    let frame = costmap.frame;
    let mut mask = SkeletonMask {
        frame,
        cells: costmap.cells().iter().map(|c| c.is_traversable()).collect(),
        source_revision: costmap.revision(),
    };

    loop {
        let mut deleted = false;
        for sub in 0..2 {
            let marked: Vec<Cell> = mask
                .iter_cells()
                .filter(|&cell| {
                    let p = mask.ring(cell);
                    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
                    let b = neighbor_count(&p);
                    let ok_side = if sub == 0 {
                        !(n && e && s) && !(e && s && w)
                    } else {
                        !(n && e && w) && !(n && s && w)
                    };
                    (2..=6).contains(&b) && crossing_number(&p) == 1 && ok_side
                })
                .collect();
            for cell in marked {
                let p = mask.ring(cell);
                if neighbor_count(&p) >= 2 && crossing_number(&p) == 1 && is_simple(&p) {
                    let i = frame.index(cell);
                    mask.cells[i] = false;
                    deleted = true;
                }
            }
        }
        if !deleted {
            break;
        }
    }

    while let Some(block) = mask.first_thick_block() {
        let victim = block
            .iter()
            .copied()
            .find(|&c| {
                let p = mask.ring(c);
                neighbor_count(&p) >= 2 && is_simple(&p)
            })
            .unwrap_or(block[0]);
        let i = frame.index(victim);
        mask.cells[i] = false;
    }
    mask
}

/// Skeleton cells where three or more branches meet: walking around the
/// 8-neighbourhood enters the skeleton at least three times. Row-major order.
pub fn branch_points(skel: &SkeletonMask) -> Vec<Cell> {
    skel.iter_cells()
        .filter(|&c| crossing_number(&skel.ring(c)) >= 3)
        .collect()
}

const RING_OFFSETS: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

/// Largest turn, in degrees between the two arms, still counted as a corner.
pub const CORNER_MAX_ANGLE_DEG: f64 = 100.0;

/// Skeleton cells where a path turns by roughly a right angle or more.
///
/// A candidate has exactly two branches leaving it. Each branch is followed
/// for `reach` cells and its direction is taken from the far half of that
/// stretch, which ignores the staircase a digital corner leaves behind. The
/// cell is a corner when the two directions are at most
/// [`CORNER_MAX_ANGLE_DEG`] apart.
pub fn corner_points(skel: &SkeletonMask, reach: usize) -> Vec<Cell> {
    let cos_max = CORNER_MAX_ANGLE_DEG.to_radians().cos();
    skel.iter_cells()
        .filter(|&cell| {
            let p = skel.ring(cell);
            if crossing_number(&p) != 2 {
                return false;
            }
            let runs = ring_runs(&p);
            let mut dirs = Vec::with_capacity(2);
            for (k, run) in runs.iter().enumerate() {
                let blocked: Vec<Cell> = runs[1 - k]
                    .iter()
                    .filter_map(|&i| offset_cell(skel, cell, i))
                    .collect();
                match arm_direction(skel, cell, run, &blocked, reach) {
                    Some(d) => dirs.push(d),
                    None => return false,
                }
            }
            let (a, b) = (dirs[0], dirs[1]);
            (a.0 * b.0 + a.1 * b.1) / (a.0.hypot(a.1) * b.0.hypot(b.1)) >= cos_max - 1e-9
        })
        .collect()
}

fn offset_cell(skel: &SkeletonMask, cell: Cell, k: usize) -> Option<Cell> {
    let (dc, dr) = RING_OFFSETS[k];
    skel.frame.checked_cell(cell.col as i64 + dc, cell.row as i64 + dr)
}

/// Maximal runs of consecutive set ring positions, cyclically.
fn ring_runs(p: &[bool; 8]) -> Vec<Vec<usize>> {
    let Some(start) = (0..8).find(|&k| !p[k]) else {
        return vec![(0..8).collect()];
    };
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for step in 1..=8 {
        let k = (start + step) % 8;
        if p[k] {
            current.push(k);
        } else if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}

/// Direction of the branch that leaves `cell` through the ring positions in
/// `run`: breadth-first along the skeleton away from `cell` and `blocked`,
/// from the mean of the cells at depth `reach / 2` to the mean at the deepest
/// level reached (at most `reach`). `None` if the branch is too short.
fn arm_direction(
    skel: &SkeletonMask,
    cell: Cell,
    run: &[usize],
    blocked: &[Cell],
    reach: usize,
) -> Option<(f64, f64)> {
    let mut seen: Vec<Cell> = vec![cell];
    seen.extend_from_slice(blocked);
    let mut level: Vec<Cell> = run.iter().filter_map(|&i| offset_cell(skel, cell, i)).collect();
    seen.extend_from_slice(&level);
    let mut levels = vec![level.clone()];
    while levels.len() < reach {
        let mut next = Vec::new();
        for c in &level {
            for n in skel.frame.neighbors8(*c) {
                if skel.get(n) && !seen.contains(&n) {
                    seen.push(n);
                    next.push(n);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        levels.push(next.clone());
        level = next;
    }
    let mid = reach / 2;
    if levels.len() <= mid || levels.len() < 2 {
        return None;
    }
    let mean = |cells: &[Cell]| {
        let n = cells.len() as f64;
        (
            cells.iter().map(|c| c.col as f64).sum::<f64>() / n,
            cells.iter().map(|c| c.row as f64).sum::<f64>() / n,
        )
    };
    let near = mean(&levels[mid.saturating_sub(1)]);
    let far = mean(levels.last().unwrap());
    let d = (far.0 - near.0, far.1 - near.1);
    (d.0.hypot(d.1) > 0.5).then_some(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            min_pts: 1,
        }
    }
}

impl ClusterParams {
    pub fn is_valid(&self) -> bool {
        self.eps > 0.0 && self.min_pts >= 1
    }
}

/// DBSCAN labels: `Some(cluster)` or `None` for noise. Clusters are numbered
/// in order of their first core point.
pub fn dbscan(points: &[Point], params: &ClusterParams) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| points[i].distance(&points[j]) <= params.eps)
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < params.min_pts {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = Some(cluster);
        let mut queue = seeds;
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let more = neighbors(j);
            if more.len() >= params.min_pts {
                queue.extend(more);
            }
        }
    }
    labels
}

fn group_by_label(points: &[Point], labels: &[Option<usize>]) -> Vec<Vec<Point>> {
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); count];
    for (p, l) in points.iter().zip(labels) {
        if let Some(l) = l {
            groups[*l].push(*p);
        }
    }
    groups
}

fn mean(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

fn cmp_xy(a: &Point, b: &Point) -> Ordering {
    a.x.total_cmp(&b.x).then_with(|| a.y.total_cmp(&b.y))
}

/// Mean of each DBSCAN cluster, sorted by `(x, y)`. Noise is discarded.
pub fn cluster_centers(points: &[Point], params: &ClusterParams) -> Vec<Point> {
    let labels = dbscan(points, params);
    let mut centers: Vec<Point> = group_by_label(points, &labels)
        .iter()
        .map(|g| mean(g))
        .collect();
    centers.sort_by(cmp_xy);
    centers
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WaypointSource {
    SkeletonIntersection,
    FallbackFront,
    FallbackBack,
    FallbackLeft,
    FallbackRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point,
    pub source: WaypointSource,
    pub distance: f64,
    pub bearing_current: f64,
    pub bearing_initial: f64,
}

impl Waypoint {
    pub fn new(position: Point, source: WaypointSource, pose: &Pose, initial_heading: f64) -> Self {
        let distance = pose.position().distance(&position);
        let absolute = pose.position().angle_to(&position);
        Self {
            position,
            source,
            distance,
            bearing_current: crate::normalize_angle(absolute - pose.heading),
            bearing_initial: crate::normalize_angle(absolute - initial_heading),
        }
    }
}

/// Points 3 m in front, behind, left and right of the robot that land on
/// revealed traversable cells, in that order.
pub fn fallback_candidates(costmap: &CostMap, pose: &Pose, initial_heading: f64) -> Vec<Waypoint> {
    [
        (0.0, WaypointSource::FallbackFront),
        (std::f64::consts::PI, WaypointSource::FallbackBack),
        (FRAC_PI_2, WaypointSource::FallbackLeft),
        (-FRAC_PI_2, WaypointSource::FallbackRight),
    ]
    .into_iter()
    .map(|(offset, source)| (pose.project(offset, FALLBACK_OFFSET), source))
    .filter(|(p, _)| costmap.is_traversable_point(p))
    .map(|(p, source)| Waypoint::new(p, source, pose, initial_heading))
    .collect()
}

/// Keeps candidates between 1 m and 50 m (inclusive) from `pose`, in order.
pub fn filter_candidates(cands: Vec<Waypoint>, pose: &Pose) -> Vec<Waypoint> {
    let here = pose.position();
    cands
        .into_iter()
        .filter(|w| {
            let d = here.distance(&w.position);
            (MIN_WAYPOINT_DISTANCE..=MAX_WAYPOINT_DISTANCE).contains(&d)
        })
        .collect()
}

/// Junction cells of a skeleton: branch points plus right-angle corners.
pub fn junction_cells(skel: &SkeletonMask) -> Vec<Cell> {
    let reach = ((1.0 / skel.frame.resolution).ceil() as usize).max(4);
    let mut cells = branch_points(skel);
    cells.extend(corner_points(skel, reach));
    cells.sort();
    cells.dedup();
    cells
}

/// Full detection pipeline: skeleton junctions clustered into centres,
/// then fallbacks (front, back, left, right), then the distance filter.
///
/// A cluster mean that lands off the traversable set is replaced by the
/// cluster member closest to it.
pub fn detect_waypoints(
    costmap: &CostMap,
    pose: &Pose,
    initial_heading: f64,
    params: &ClusterParams,
) -> Result<Vec<Waypoint>, WaypointError> {
    let skel = skeletonize(costmap);
    let frame = costmap.frame;
    let points: Vec<Point> = junction_cells(&skel)
        .into_iter()
        .map(|c| frame.center(c))
        .collect();
    let labels = dbscan(&points, params);
    let mut centers: Vec<Point> = group_by_label(&points, &labels)
        .iter()
        .map(|members| {
            let m = mean(members);
            if costmap.is_traversable_point(&m) {
                m
            } else {
                *members
                    .iter()
                    .min_by(|a, b| a.distance(&m).total_cmp(&b.distance(&m)))
                    .expect("clusters are non-empty")
            }
        })
        .collect();
    centers.sort_by(cmp_xy);

    let mut cands: Vec<Waypoint> = centers
        .into_iter()
        .map(|p| Waypoint::new(p, WaypointSource::SkeletonIntersection, pose, initial_heading))
        .collect();
    cands.extend(fallback_candidates(costmap, pose, initial_heading));
    let kept = filter_candidates(cands, pose);
    if kept.is_empty() {
        Err(WaypointError::NoCandidates)
    } else {
        Ok(kept)
    }
}

/// Knobs of the automatic goal choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    /// Half-angle of the cone around the initial heading, radians.
    pub forward_cone: f64,
    /// Candidates this close to a visited point are used only as a last resort.
    pub visited_radius: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            forward_cone: 45f64.to_radians(),
            visited_radius: 1.0,
        }
    }
}

fn tie_chain(angle_a: f64, a: &Waypoint, angle_b: f64, b: &Waypoint) -> Ordering {
    angle_a
        .abs()
        .total_cmp(&angle_b.abs())
        .then_with(|| b.distance.total_cmp(&a.distance))
        .then_with(|| cmp_xy(&a.position, &b.position))
        .then_with(|| a.source.cmp(&b.source))
}

/// Picks the next goal.
///
/// Candidates near a visited point are set aside unless nothing else is
/// left. If any remaining candidate lies inside the forward cone around the
/// initial heading, the one with the smallest |bearing to initial heading|
/// wins; otherwise the smallest |bearing to current heading|. Ties go to the
/// farther candidate, then to the smaller `(x, y)`, then to the source in
/// declaration order.
pub fn select_waypoint(
    cands: &[Waypoint],
    visited: &[Point],
    policy: &SelectionPolicy,
) -> Option<Waypoint> {
    let fresh: Vec<&Waypoint> = cands
        .iter()
        .filter(|w| {
            visited
                .iter()
                .all(|v| v.distance(&w.position) > policy.visited_radius)
        })
        .collect();
    let pool: Vec<&Waypoint> = if fresh.is_empty() {
        cands.iter().collect()
    } else {
        fresh
    };

    let in_cone = pool
        .iter()
        .filter(|w| w.bearing_initial.abs() <= policy.forward_cone)
        .min_by(|a, b| tie_chain(a.bearing_initial, a, b.bearing_initial, b));
    in_cone
        .or_else(|| {
            pool.iter()
                .min_by(|a, b| tie_chain(a.bearing_current, a, b.bearing_current, b))
        })
        .map(|w| **w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{load_world, CostCell};

    fn costmap(map: &str) -> CostMap {
        load_world(map, "").unwrap().revealed_costmap()
    }

    fn skeleton_cells(map: &str) -> Vec<Cell> {
        skeletonize(&costmap(map)).iter_cells().collect()
    }

    #[test]
    fn all_occupied_gives_empty_skeleton() {
        let mut cm = costmap("res=1\n###\n#S#\n###\n");
        cm.set(Cell::new(1, 1), CostCell::Occupied);
        assert_eq!(skeletonize(&cm).count(), 0);
    }

    #[test]
    fn one_wide_corridor_is_its_own_skeleton() {
        let map = "res=1\n##########\n#S.......#\n##########\n";
        let cells = skeleton_cells(map);
        assert_eq!(cells, (1..9).map(|c| Cell::new(c, 1)).collect::<Vec<_>>());
    }

    #[test]
    fn three_wide_corridor_thins_to_centerline() {
        let wall = "#".repeat(22);
        let body = format!("#{}#", ".".repeat(20));
        let start = format!("#S{}#", ".".repeat(19));
        let map = format!("res=1\n{wall}\n{body}\n{start}\n{body}\n{wall}\n");
        let cells = skeleton_cells(&map);
        assert!(cells.iter().all(|c| c.row == 2), "{cells:?}");
        let cols: Vec<usize> = cells.iter().map(|c| c.col).collect();
        assert!(cols.windows(2).all(|w| w[1] == w[0] + 1), "{cols:?}");
        assert!(cols[0] <= 2 && *cols.last().unwrap() >= 18, "{cols:?}");
    }

    #[test]
    fn square_block_keeps_a_cell() {
        // Plain parallel thinning erases an isolated 2x2 block entirely.
        let cells = skeleton_cells("res=1\n####\n#S.#\n#..#\n####\n");
        assert!(!cells.is_empty());
    }

    fn mask_from(rows: &[&str]) -> SkeletonMask {
        let h = rows.len();
        let w = rows[0].len();
        let frame = GridFrame {
            width: w,
            height: h,
            resolution: 1.0,
            origin: Point::new(0.0, 0.0),
        };
        let mut cells = vec![false; w * h];
        for (tr, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                cells[(h - 1 - tr) * w + c] = ch == '#';
            }
        }
        SkeletonMask {
            frame,
            cells,
            source_revision: 0,
        }
    }

    #[test]
    fn plus_has_one_branch_point() {
        let m = mask_from(&["..#..", "..#..", "#####", "..#..", "..#.."]);
        assert_eq!(branch_points(&m), vec![Cell::new(2, 2)]);
    }

    #[test]
    fn straight_line_has_none() {
        let m = mask_from(&["......", "######", "......"]);
        assert!(branch_points(&m).is_empty());
        assert!(corner_points(&m, 2).is_empty());
    }

    #[test]
    fn t_junction_has_one_branch_point() {
        let m = mask_from(&["#####", "..#..", "..#..", "..#.."]);
        assert_eq!(branch_points(&m), vec![Cell::new(2, 3)]);
    }

    #[test]
    fn right_angle_is_a_corner_but_diagonal_staircase_is_not() {
        let l = mask_from(&["#....", "#....", "#....", "#####"]);
        let corners = corner_points(&l, 3);
        assert!(corners.contains(&Cell::new(0, 0)));
        assert!(corners.iter().all(|c| c.col <= 1 && c.row <= 1), "{corners:?}");
        let stair = mask_from(&["....##", "..##..", "##...."]);
        assert!(corner_points(&stair, 3).is_empty());
    }

    #[test]
    fn cluster_examples() {
        let p = ClusterParams::default();
        assert!(cluster_centers(&[], &p).is_empty());
        let c = cluster_centers(&[Point::new(0.0, 0.0), Point::new(0.1, 0.0)], &p);
        assert_eq!(c.len(), 1);
        assert!((c[0].x - 0.05).abs() < 1e-12 && c[0].y.abs() < 1e-12);
    }

    #[test]
    fn min_pts_discards_noise() {
        let p = ClusterParams {
            eps: 0.5,
            min_pts: 2,
        };
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(0.2, 0.0),
            Point::new(5.0, 5.0),
        ];
        let c = cluster_centers(&pts, &p);
        assert_eq!(c.len(), 1);
        assert!((c[0].x - 0.1).abs() < 1e-12);
    }

    fn open_costmap(size: usize, res: f64) -> (CostMap, Pose) {
        let mut rows = vec![".".repeat(size); size];
        let mid = size / 2;
        rows[mid].replace_range(mid..mid + 1, "S");
        let w = load_world(&format!("res={res}\n{}\n", rows.join("\n")), "").unwrap();
        (w.revealed_costmap(), w.start_pose)
    }

    #[test]
    fn fallbacks_in_open_space() {
        let (cm, _) = open_costmap(21, 1.0);
        let pose = Pose::new(10.0, 10.0, 0.0);
        let f = fallback_candidates(&cm, &pose, 0.0);
        let got: Vec<(WaypointSource, f64, f64)> = f
            .iter()
            .map(|w| (w.source, w.position.x - 10.0, w.position.y - 10.0))
            .collect();
        let want = [
            (WaypointSource::FallbackFront, 3.0, 0.0),
            (WaypointSource::FallbackBack, -3.0, 0.0),
            (WaypointSource::FallbackLeft, 0.0, 3.0),
            (WaypointSource::FallbackRight, 0.0, -3.0),
        ];
        for (g, w) in got.iter().zip(want.iter()) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-9 && (g.2 - w.2).abs() < 1e-9, "{g:?}");
        }
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn fallback_into_wall_is_dropped() {
        let map = "res=1\n.......\n.......\n.......\n...S###\n.......\n.......\n.......\n";
        let cm = costmap(map);
        let pose = Pose::new(3.0, 3.0, 0.0);
        let f = fallback_candidates(&cm, &pose, 0.0);
        assert_eq!(f.len(), 3);
        assert!(f.iter().all(|w| w.source != WaypointSource::FallbackFront));
    }

    #[test]
    fn enclosed_cell_has_no_fallbacks_and_no_candidates() {
        let cm = costmap("res=1\n###\n#S#\n###\n");
        let pose = Pose::new(1.0, 1.0, 0.0);
        assert!(fallback_candidates(&cm, &pose, 0.0).is_empty());
        assert_eq!(
            detect_waypoints(&cm, &pose, 0.0, &ClusterParams::default()),
            Err(WaypointError::NoCandidates)
        );
    }

    #[test]
    fn distance_filter_bounds() {
        let pose = Pose::new(0.0, 0.0, 0.0);
        let mk = |x: f64| Waypoint::new(Point::new(x, 0.0), WaypointSource::FallbackFront, &pose, 0.0);
        let kept = filter_candidates(vec![mk(0.5), mk(60.0), mk(3.0), mk(1.0), mk(50.0)], &pose);
        let xs: Vec<f64> = kept.iter().map(|w| w.position.x).collect();
        assert_eq!(xs, vec![3.0, 1.0, 50.0]);
    }

    fn wp(bi_deg: f64, bc_deg: f64, dist: f64, x: f64) -> Waypoint {
        Waypoint {
            position: Point::new(x, 0.0),
            source: WaypointSource::SkeletonIntersection,
            distance: dist,
            bearing_current: bc_deg.to_radians(),
            bearing_initial: bi_deg.to_radians(),
        }
    }

    #[test]
    fn forward_cone_has_priority() {
        let c = [wp(170.0, 0.0, 5.0, 1.0), wp(10.0, 60.0, 5.0, 2.0)];
        let s = select_waypoint(&c, &[], &SelectionPolicy::default()).unwrap();
        assert_eq!(s.position.x, 2.0);
    }

    #[test]
    fn smallest_current_bearing_without_cone() {
        let c = [wp(100.0, 90.0, 5.0, 1.0), wp(-120.0, -30.0, 5.0, 2.0)];
        let s = select_waypoint(&c, &[], &SelectionPolicy::default()).unwrap();
        assert_eq!(s.position.x, 2.0);
    }

    #[test]
    fn tie_prefers_farther() {
        let c = [wp(10.0, 0.0, 4.0, 1.0), wp(10.0, 0.0, 8.0, 2.0)];
        let s = select_waypoint(&c, &[], &SelectionPolicy::default()).unwrap();
        assert_eq!(s.distance, 8.0);
    }

    #[test]
    fn visited_candidates_are_a_last_resort() {
        let c = [wp(0.0, 0.0, 5.0, 1.0), wp(90.0, 90.0, 5.0, 2.0)];
        let policy = SelectionPolicy::default();
        let s = select_waypoint(&c, &[Point::new(0.5, 0.0)], &policy).unwrap();
        assert_eq!(s.position.x, 2.0);
        let s = select_waypoint(&c[..1], &[Point::new(1.2, 0.0)], &policy).unwrap();
        assert_eq!(s.position.x, 1.0);
        assert!(select_waypoint(&[], &[], &policy).is_none());
    }
}
