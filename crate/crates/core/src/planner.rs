//! Grid path planning on the inflated cost map and hold-to-move kinematics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, Pose};
use crate::gridworld::{Cell, CostCell, CostMap, GridFrame};

/// Default stop distance in front of an obstacle, meters.
pub const DEFAULT_STOP_DISTANCE: f64 = 0.7;
/// Default distance at which a goal counts as reached, meters.
pub const DEFAULT_ARRIVAL_TOLERANCE: f64 = 0.3;
pub const MAX_SPEED: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("goal is unknown, blocked or disconnected from the robot")]
    Unreachable,
}

/// Polyline through adjacent cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Point>,
    pub total_length: f64,
    pub goal: Point,
}

impl Path {
    fn from_points(points: Vec<Point>) -> Self {
        let total_length = points.windows(2).map(|w| w[0].distance(&w[1])).sum();
        let goal = *points.last().expect("paths have at least one point");
        Path {
            points,
            total_length,
            goal,
        }
    }

    /// Arc length from `pos` to the goal when heading for `points[next]`.
    pub fn remaining(&self, pos: &Point, next: usize) -> f64 {
        if next >= self.points.len() {
            return pos.distance(&self.goal);
        }
        let mut d = pos.distance(&self.points[next]);
        for w in self.points[next..].windows(2) {
            d += w[0].distance(&w[1]);
        }
        d
    }

    /// True when every point sits on a traversable cell of `costmap`,
    /// ignoring the first (the robot may start inside the lethal band).
    pub fn is_clear(&self, costmap: &CostMap) -> bool {
        self.points
            .iter()
            .skip(1)
            .all(|p| costmap.is_traversable_point(p))
    }
}

/// Cost of entering a cell: its length plus a penalty proportional to its cost.
pub fn step_cost(step_len: f64, cell_cost: u8) -> f64 {
    step_len * (1.0 + f64::from(cell_cost) / 255.0)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on cell index
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Moves allowed from `cell`: 8-connected, diagonals only when both
/// orthogonal cells are traversable. Yields `(neighbour, step length)`.
pub fn moves(costmap: &CostMap, cell: Cell) -> Vec<(Cell, f64)> {
    let f = costmap.frame;
    let open = |c: i64, r: i64| {
        f.checked_cell(c, r)
            .is_some_and(|x| costmap.get(x).is_traversable())
    };
    let (c, r) = (cell.col as i64, cell.row as i64);
    let mut out = Vec::with_capacity(8);
    for dr in -1..=1 {
        for dc in -1..=1 {
            if (dc, dr) == (0, 0) || !open(c + dc, r + dr) {
                continue;
            }
            let diagonal = dc != 0 && dr != 0;
            if diagonal && !(open(c + dc, r) && open(c, r + dr)) {
                continue;
            }
            let len = if diagonal {
                f.resolution * std::f64::consts::SQRT_2
            } else {
                f.resolution
            };
            out.push((
                Cell::new((c + dc) as usize, (r + dr) as usize),
                len,
            ));
        }
    }
    out
}

fn octile(frame: &GridFrame, a: Cell, b: Cell) -> f64 {
    let dx = a.col.abs_diff(b.col) as f64;
    let dy = a.row.abs_diff(b.row) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    frame.resolution * (hi - lo + lo * std::f64::consts::SQRT_2)
}

/// Minimum-cost path over revealed traversable cells (A*, octile heuristic,
/// ties broken by cell index). The start cell only needs to be known free.
pub fn plan_path(costmap: &CostMap, from: &Point, to: &Point) -> Result<Path, PlanError> {
    let frame = costmap.frame;
    let start = frame.cell_of(from).ok_or(PlanError::Unreachable)?;
    let goal = frame.cell_of(to).ok_or(PlanError::Unreachable)?;
    if !matches!(costmap.get(start), CostCell::Free(_)) {
        return Err(PlanError::Unreachable);
    }
    if start == goal {
        return Ok(Path::from_points(vec![frame.center(start)]));
    }
    if !costmap.get(goal).is_traversable() {
        return Err(PlanError::Unreachable);
    }

    let n = frame.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let si = frame.index(start);
    g[si] = 0.0;
    heap.push(Open {
        f: octile(&frame, start, goal),
        index: si,
    });

    while let Some(Open { index, .. }) = heap.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let cell = frame.cell_at(index);
        if cell == goal {
            let mut chain = vec![index];
            let mut cur = index;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                chain.push(cur);
            }
            chain.reverse();
            let points = chain
                .into_iter()
                .map(|i| frame.center(frame.cell_at(i)))
                .collect();
            return Ok(Path::from_points(points));
        }
        for (next, len) in moves(costmap, cell) {
            let ni = frame.index(next);
            if closed[ni] {
                continue;
            }
            let CostCell::Free(cost) = costmap.get(next) else {
                continue;
            };
            let cand = g[index] + step_cost(len, cost);
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = index;
                heap.push(Open {
                    f: cand + octile(&frame, next, goal),
                    index: ni,
                });
            }
        }
    }
    Err(PlanError::Unreachable)
}

/// Total planning cost of a path, as minimised by [`plan_path`].
pub fn path_cost(costmap: &CostMap, path: &Path) -> f64 {
    path.points
        .windows(2)
        .map(|w| {
            let cost = match costmap.at_point(&w[1]) {
                Some(CostCell::Free(c)) => c,
                _ => 255,
            };
            step_cost(w[0].distance(&w[1]), cost)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauseReason {
    ObstacleAhead,
    HandleReleased,
    ConversationActive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionStatus {
    Idle,
    Navigating,
    Paused(PauseReason),
    Arrived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub stop_dist: f64,
    pub arrival_tol: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            stop_dist: DEFAULT_STOP_DISTANCE,
            arrival_tol: DEFAULT_ARRIVAL_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub pose: Pose,
    /// Commanded speed, m/s.
    pub speed: f64,
    /// Whether the user is holding the handle.
    pub hold: bool,
    pub status: MotionStatus,
    /// Index of the path point the robot is heading for.
    pub next_point: usize,
}

impl MotionState {
    pub fn new(pose: Pose, speed: f64) -> Self {
        Self {
            pose,
            speed,
            hold: true,
            status: MotionStatus::Idle,
            next_point: 0,
        }
    }
}

/// Whether an occupied cell lies on the path within `stop_dist` of arc
/// length ahead of `pose`. The robot's own cell is not considered.
pub fn obstacle_ahead(
    costmap: &CostMap,
    pose: &Pose,
    path: &Path,
    next_point: usize,
    stop_dist: f64,
) -> bool {
    let frame = costmap.frame;
    let here = frame.cell_of(&pose.position());
    let mut budget = stop_dist;
    let mut from = pose.position();
    let mut blocked = false;
    for target in path.points.iter().skip(next_point) {
        if budget <= 0.0 {
            break;
        }
        let seg = from.distance(target);
        let to = if seg > budget {
            let t = budget / seg;
            Point::new(from.x + (target.x - from.x) * t, from.y + (target.y - from.y) * t)
        } else {
            *target
        };
        frame.trace(&from, &to, |cell| {
            if Some(cell) != here && costmap.get(cell) == CostCell::Occupied {
                blocked = true;
                return false;
            }
            true
        });
        if blocked {
            return true;
        }
        budget -= seg;
        from = *target;
    }
    false
}

/// Advances the robot one tick along `path`.
pub fn step_motion(
    state: &MotionState,
    path: &Path,
    dt: f64,
    costmap: &CostMap,
    cfg: &MotionConfig,
) -> MotionState {
    let mut next = *state;
    if state.status == MotionStatus::Paused(PauseReason::ConversationActive) {
        return next;
    }
    if !state.hold {
        next.status = MotionStatus::Paused(PauseReason::HandleReleased);
        return next;
    }
    let pos = state.pose.position();
    if path.remaining(&pos, state.next_point) <= cfg.arrival_tol {
        next.status = MotionStatus::Arrived;
        return next;
    }
    if obstacle_ahead(costmap, &state.pose, path, state.next_point, cfg.stop_dist) {
        next.status = MotionStatus::Paused(PauseReason::ObstacleAhead);
        return next;
    }

    let mut budget = state.speed.clamp(0.0, MAX_SPEED) * dt;
    let mut at = pos;
    let mut idx = state.next_point;
    let mut heading = state.pose.heading;
    while budget > 0.0 && idx < path.points.len() {
        let target = path.points[idx];
        let seg = at.distance(&target);
        if seg > 0.0 {
            heading = at.angle_to(&target);
        }
        if seg <= budget {
            budget -= seg;
            at = target;
            idx += 1;
        } else {
            let t = budget / seg;
            at = Point::new(at.x + (target.x - at.x) * t, at.y + (target.y - at.y) * t);
            budget = 0.0;
        }
    }
    next.pose = Pose::new(at.x, at.y, heading);
    next.next_point = idx;
    next.status = if path.remaining(&at, idx) <= cfg.arrival_tol {
        MotionStatus::Arrived
    } else {
        MotionStatus::Navigating
    };
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::load_world;

    fn cm(map: &str) -> CostMap {
        load_world(map, "").unwrap().revealed_costmap()
    }

    #[test]
    fn straight_corridor_path() {
        let map = "res=1\n##########\n#S.......#\n##########\n";
        let p = plan_path(&cm(map), &Point::new(1.0, 1.0), &Point::new(8.0, 1.0)).unwrap();
        assert_eq!(p.points.len(), 8);
        assert!((p.total_length - 7.0).abs() < 1e-12);
        assert_eq!(p.goal, Point::new(8.0, 1.0));
    }

    #[test]
    fn wall_makes_goal_unreachable() {
        let map = "res=1\n#######\n#S.#..#\n#..#..#\n#######\n";
        let c = cm(map);
        assert_eq!(
            plan_path(&c, &Point::new(1.0, 2.0), &Point::new(5.0, 2.0)),
            Err(PlanError::Unreachable)
        );
        // goal on the wall itself
        assert_eq!(
            plan_path(&c, &Point::new(1.0, 2.0), &Point::new(3.0, 2.0)),
            Err(PlanError::Unreachable)
        );
    }

    #[test]
    fn unknown_goal_is_unreachable() {
        let w = load_world("res=1\nS....\n", "").unwrap();
        let mut c = w.unknown_costmap();
        c.set(Cell::new(0, 0), CostCell::Free(0));
        assert_eq!(
            plan_path(&c, &Point::new(0.0, 0.0), &Point::new(3.0, 0.0)),
            Err(PlanError::Unreachable)
        );
    }

    #[test]
    fn diagonal_moves_do_not_cut_corners() {
        let map = "res=1\n...\n.#.\nS..\n";
        let c = cm(map);
        let p = plan_path(&c, &Point::new(0.0, 0.0), &Point::new(2.0, 2.0)).unwrap();
        // must go around the block: 4 unit steps
        assert!((p.total_length - 4.0).abs() < 1e-12, "{p:?}");
    }

    fn straight_path() -> (CostMap, Path) {
        let map = "res=1\n############\n#S.........#\n############\n";
        let c = cm(map);
        let p = plan_path(&c, &Point::new(1.0, 1.0), &Point::new(10.0, 1.0)).unwrap();
        (c, p)
    }

    #[test]
    fn advances_speed_times_dt() {
        let (c, p) = straight_path();
        let s = MotionState::new(Pose::new(1.0, 1.0, 0.0), 0.5);
        let n = step_motion(&s, &p, 0.1, &c, &MotionConfig::default());
        assert_eq!(n.status, MotionStatus::Navigating);
        assert!((n.pose.x - 1.05).abs() < 1e-12);
        assert_eq!(n.pose.y, 1.0);
    }

    #[test]
    fn released_handle_pauses() {
        let (c, p) = straight_path();
        let mut s = MotionState::new(Pose::new(1.0, 1.0, 0.0), 0.5);
        s.hold = false;
        let n = step_motion(&s, &p, 0.1, &c, &MotionConfig::default());
        assert_eq!(n.pose, s.pose);
        assert_eq!(n.status, MotionStatus::Paused(PauseReason::HandleReleased));
    }

    #[test]
    fn arrival_within_tolerance() {
        let (c, p) = straight_path();
        let mut s = MotionState::new(Pose::new(9.8, 1.0, 0.0), 0.5);
        s.next_point = p.points.len() - 1;
        let n = step_motion(&s, &p, 0.1, &c, &MotionConfig::default());
        assert_eq!(n.status, MotionStatus::Arrived);
        assert_eq!(n.pose, s.pose);
    }

    #[test]
    fn obstacle_window() {
        let (mut c, p) = straight_path();
        let pose = Pose::new(1.0, 1.0, 0.0);
        assert!(!obstacle_ahead(&c, &pose, &p, 0, 1.0));
        c.set(Cell::new(3, 1), CostCell::Occupied);
        assert!(!obstacle_ahead(&c, &pose, &p, 0, 1.0));
        let near = Pose::new(2.4, 1.0, 0.0);
        assert!(obstacle_ahead(&c, &near, &p, 2, 1.0));
        let s = MotionState::new(near, 0.5);
        let mut s = s;
        s.next_point = 2;
        let n = step_motion(&s, &p, 0.1, &c, &MotionConfig::default());
        assert_eq!(n.status, MotionStatus::Paused(PauseReason::ObstacleAhead));
        // clearing resumes without replanning
        c.set(Cell::new(3, 1), CostCell::Free(0));
        let n = step_motion(&n, &p, 0.1, &c, &MotionConfig::default());
        assert_eq!(n.status, MotionStatus::Navigating);
    }

    #[test]
    fn motion_turns_corners_and_conserves_arc_length() {
        let map = "res=1\n#####\n#...#\n#.###\n#S###\n#####\n";
        let c = cm(map);
        let p = plan_path(&c, &Point::new(1.0, 1.0), &Point::new(3.0, 3.0)).unwrap();
        let mut s = MotionState::new(Pose::new(1.0, 1.0, 0.0), 0.7);
        let cfg = MotionConfig {
            stop_dist: 0.7,
            arrival_tol: 0.0,
        };
        let mut travelled = 0.0;
        for _ in 0..4 {
            let before = p.remaining(&s.pose.position(), s.next_point);
            s = step_motion(&s, &p, 1.0, &c, &cfg);
            travelled += before - p.remaining(&s.pose.position(), s.next_point);
        }
        assert!((travelled - 2.8).abs() < 1e-9, "{travelled}");
    }
}
