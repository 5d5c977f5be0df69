//! Synthetic world model: ground-truth occupancy, points of interest, a
//! ray-cast range sensor and the robot's online cost map.
//!
//! Cell `(col, row)` has its centre at `origin + (col, row) * resolution`.
//! Row 0 is the bottom of the map, so the first line of a map file is the
//! highest row and `+y` points "up" the page.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, Pose, Side};

/// Resolution used when a map file has no `res=` header.
pub const DEFAULT_RESOLUTION: f64 = 0.1;
/// Default obstacle inflation radius, meters.
pub const DEFAULT_INFLATION_RADIUS: f64 = 0.3;
/// Cost of a cell the robot footprint cannot enter.
pub const LETHAL_COST: u8 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("malformed map at line {line}: {reason}")]
    MalformedMap { line: usize, reason: String },
    #[error("invalid POI record at line {line}: {reason}")]
    InvalidPoi { line: usize, reason: String },
    #[error("POI `{0}` lies outside the map")]
    PoiOutOfBounds(String),
    #[error("duplicate POI id `{0}`")]
    DuplicatePoiId(String),
    #[error("pose ({x:.3}, {y:.3}) is outside the map or not on a free cell")]
    PoseOutOfBounds { x: f64, y: f64 },
}

/// Grid cell index. Ordering is row-major (row first, then column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { row, col }
    }
}

/// Shape and placement of a grid in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point,
}

impl GridFrame {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn checked_cell(&self, col: i64, row: i64) -> Option<Cell> {
        self.contains(col, row)
            .then(|| Cell::new(col as usize, row as usize))
    }

    /// Continuous grid coordinates; cell `c` spans `[c, c + 1)` on each axis.
    fn grid_coords(&self, p: &Point) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.resolution + 0.5,
            (p.y - self.origin.y) / self.resolution + 0.5,
        )
    }

    pub fn cell_of(&self, p: &Point) -> Option<Cell> {
        let (u, v) = self.grid_coords(p);
        if !u.is_finite() || !v.is_finite() {
            return None;
        }
        self.checked_cell(u.floor() as i64, v.floor() as i64)
    }

    pub fn center(&self, cell: Cell) -> Point {
        Point::new(
            self.origin.x + cell.col as f64 * self.resolution,
            self.origin.y + cell.row as f64 * self.resolution,
        )
    }

    /// 8-connected in-bounds neighbours, in a fixed order.
    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const OFFSETS: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        OFFSETS.iter().filter_map(move |(dc, dr)| {
            self.checked_cell(cell.col as i64 + dc, cell.row as i64 + dr)
        })
    }

    /// Walks the cells crossed by the segment `from -> to` (Amanatides-Woo),
    /// starting with the cell containing `from`. Stops when `visit` returns
    /// `false` or the segment leaves the grid.
    pub fn trace(&self, from: &Point, to: &Point, mut visit: impl FnMut(Cell) -> bool) {
        let (u0, v0) = self.grid_coords(from);
        let (u1, v1) = self.grid_coords(to);
        let (du, dv) = (u1 - u0, v1 - v0);
        let (mut gc, mut gr) = (u0.floor() as i64, v0.floor() as i64);

        let axis = |d: f64, start: f64, g: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, ((g + 1) as f64 - start) / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, (start - g as f64) / -d, -1.0 / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_c, mut t_c, dt_c) = axis(du, u0, gc);
        let (step_r, mut t_r, dt_r) = axis(dv, v0, gr);

        loop {
            match self.checked_cell(gc, gr) {
                Some(cell) => {
                    if !visit(cell) {
                        return;
                    }
                }
                None => return,
            }
            if t_c.min(t_r) > 1.0 {
                return;
            }
            if t_c < t_r {
                gc += step_c;
                t_c += dt_c;
            } else {
                gr += step_r;
                t_r += dt_r;
            }
        }
    }
}

/// Ground-truth state of a world cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terrain {
    Free,
    Occupied,
}

/// A named, categorized annotation the narrator and answerer draw on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub name: String,
    pub category: String,
    pub anchor: Point,
    #[serde(default)]
    pub facts: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Deserialize)]
struct PoiRecord {
    id: String,
    name: String,
    category: String,
    anchor: [f64; 2],
    #[serde(default)]
    facts: Vec<String>,
    #[serde(default)]
    tags: Vec<String>,
}

/// Immutable ground truth the simulated sensor observes.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub frame: GridFrame,
    terrain: Vec<Terrain>,
    pub pois: Vec<Poi>,
    pub start_pose: Pose,
}

impl World {
    /// Builds a world from raw parts, checking the same invariants as [`load_world`].
    pub fn new(
        frame: GridFrame,
        terrain: Vec<Terrain>,
        pois: Vec<Poi>,
        start_pose: Pose,
    ) -> Result<Self, WorldError> {
        if frame.is_empty() || terrain.len() != frame.len() || frame.resolution <= 0.0 {
            return Err(WorldError::MalformedMap {
                line: 0,
                reason: "grid must be non-empty with positive resolution".into(),
            });
        }
        let world = World {
            frame,
            terrain,
            pois: Vec::new(),
            start_pose,
        };
        if !world.is_free_point(&start_pose.position()) {
            return Err(WorldError::PoseOutOfBounds {
                x: start_pose.x,
                y: start_pose.y,
            });
        }
        let mut seen = HashSet::new();
        for poi in &pois {
            if !seen.insert(poi.id.clone()) {
                return Err(WorldError::DuplicatePoiId(poi.id.clone()));
            }
            if world.frame.cell_of(&poi.anchor).is_none() {
                return Err(WorldError::PoiOutOfBounds(poi.id.clone()));
            }
        }
        Ok(World { pois, ..world })
    }

    pub fn terrain(&self, cell: Cell) -> Terrain {
        self.terrain[self.frame.index(cell)]
    }

    pub fn is_free_point(&self, p: &Point) -> bool {
        self.frame
            .cell_of(p)
            .is_some_and(|c| self.terrain(c) == Terrain::Free)
    }

    pub fn occupied_count(&self) -> usize {
        self.terrain
            .iter()
            .filter(|t| **t == Terrain::Occupied)
            .count()
    }

    pub fn poi(&self, id: &str) -> Option<&Poi> {
        self.pois.iter().find(|p| p.id == id)
    }

    /// A cost map with nothing revealed yet.
    pub fn unknown_costmap(&self) -> CostMap {
        CostMap::unknown(self.frame)
    }

    /// A cost map with every cell revealed. Handy for fixtures and tools.
    pub fn revealed_costmap(&self) -> CostMap {
        let cells = self
            .terrain
            .iter()
            .map(|t| match t {
                Terrain::Free => CostCell::Free(0),
                Terrain::Occupied => CostCell::Occupied,
            })
            .collect();
        CostMap {
            frame: self.frame,
            cells,
            revision: 1,
        }
    }
}

/// Parses an ASCII map plus a JSON-lines POI document.
///
/// Map: optional header `res=<m> [heading=<deg>]`, then one row per line
/// using `#` (occupied), `.` (free) and a single `S` (start, free).
pub fn load_world(map_text: &str, poi_doc: &str) -> Result<World, WorldError> {
    let mut resolution = DEFAULT_RESOLUTION;
    let mut heading = 0.0;
    let mut rows: Vec<(usize, &str)> = Vec::new();

    for (n, raw) in map_text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !rows.is_empty() {
                // blank lines are only allowed before the grid or at the very end
                rows.push((line_no, ""));
            }
            continue;
        }
        if rows.is_empty() && line.contains('=') {
            for tok in line.split_whitespace() {
                let (key, value) = tok.split_once('=').ok_or_else(|| WorldError::MalformedMap {
                    line: line_no,
                    reason: format!("bad header token `{tok}`"),
                })?;
                let parsed: f64 = value.parse().map_err(|_| WorldError::MalformedMap {
                    line: line_no,
                    reason: format!("`{key}` is not a number"),
                })?;
                match key {
                    "res" if parsed > 0.0 && parsed.is_finite() => resolution = parsed,
                    "res" => {
                        return Err(WorldError::MalformedMap {
                            line: line_no,
                            reason: "resolution must be positive".into(),
                        })
                    }
                    "heading" => heading = parsed.to_radians(),
                    other => {
                        return Err(WorldError::MalformedMap {
                            line: line_no,
                            reason: format!("unknown header key `{other}`"),
                        })
                    }
                }
            }
            continue;
        }
        rows.push((line_no, line));
    }
    while rows.last().is_some_and(|(_, l)| l.is_empty()) {
        rows.pop();
    }
    if rows.is_empty() {
        return Err(WorldError::MalformedMap {
            line: 0,
            reason: "map has no rows".into(),
        });
    }

    let width = rows[0].1.chars().count();
    let height = rows.len();
    let mut terrain = vec![Terrain::Free; width * height];
    let mut start: Option<(usize, usize, usize)> = None;
    for (text_row, (line_no, line)) in rows.iter().enumerate() {
        if line.chars().count() != width {
            return Err(WorldError::MalformedMap {
                line: *line_no,
                reason: format!("row has {} cells, expected {width}", line.chars().count()),
            });
        }
        let row = height - 1 - text_row;
        for (col, ch) in line.chars().enumerate() {
            let t = match ch {
                '#' => Terrain::Occupied,
                '.' => Terrain::Free,
                'S' => {
                    if let Some((_, _, first)) = start {
                        return Err(WorldError::MalformedMap {
                            line: *line_no,
                            reason: format!("second start marker (first on line {first})"),
                        });
                    }
                    start = Some((col, row, *line_no));
                    Terrain::Free
                }
                other => {
                    return Err(WorldError::MalformedMap {
                        line: *line_no,
                        reason: format!("unknown cell character `{other}`"),
                    })
                }
            };
            terrain[row * width + col] = t;
        }
    }
    let (scol, srow, _) = start.ok_or_else(|| WorldError::MalformedMap {
        line: 0,
        reason: "no start marker `S`".into(),
    })?;

    let frame = GridFrame {
        width,
        height,
        resolution,
        origin: Point::new(0.0, 0.0),
    };
    let start_point = frame.center(Cell::new(scol, srow));
    let start_pose = Pose::new(start_point.x, start_point.y, heading);
    let pois = parse_pois(poi_doc)?;
    World::new(frame, terrain, pois, start_pose)
}

/// Parses the POI document: one JSON object per line, `#` comments allowed.
pub fn parse_pois(doc: &str) -> Result<Vec<Poi>, WorldError> {
    let mut pois = Vec::new();
    for (n, line) in doc.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: PoiRecord = serde_json::from_str(line).map_err(|e| WorldError::InvalidPoi {
            line: n + 1,
            reason: e.to_string(),
        })?;
        if rec.name.trim().is_empty() {
            return Err(WorldError::InvalidPoi {
                line: n + 1,
                reason: "name must be non-empty".into(),
            });
        }
        pois.push(Poi {
            id: rec.id,
            name: rec.name,
            category: rec.category,
            anchor: Point::new(rec.anchor[0], rec.anchor[1]),
            facts: rec.facts,
            tags: rec.tags,
        });
    }
    Ok(pois)
}

/// Range sensor abstraction: rays cast every `angular_step` across `fov`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub range: f64,
    pub angular_step: f64,
    pub fov: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range: 10.0,
            angular_step: 1f64.to_radians(),
            fov: 2.0 * PI,
        }
    }
}

impl SensorConfig {
    pub fn is_valid(&self) -> bool {
        self.range > 0.0 && self.angular_step > 0.0 && self.angular_step <= self.fov
    }
}

/// Robot-side knowledge of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostCell {
    Unknown,
    Free(u8),
    Occupied,
}

impl CostCell {
    /// Free and below the lethal cost.
    pub fn is_traversable(self) -> bool {
        matches!(self, CostCell::Free(c) if c < LETHAL_COST)
    }

    pub fn is_known(self) -> bool {
        self != CostCell::Unknown
    }
}

/// The robot's incrementally revealed navigation costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMap {
    pub frame: GridFrame,
    cells: Vec<CostCell>,
    revision: u64,
}

impl CostMap {
    pub fn unknown(frame: GridFrame) -> Self {
        Self {
            frame,
            cells: vec![CostCell::Unknown; frame.len()],
            revision: 0,
        }
    }

    /// Builds a cost map from raw cells, e.g. for tests.
    pub fn from_cells(frame: GridFrame, cells: Vec<CostCell>) -> Self {
        assert_eq!(cells.len(), frame.len(), "cell count must match the frame");
        Self {
            frame,
            cells,
            revision: 0,
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn get(&self, cell: Cell) -> CostCell {
        self.cells[self.frame.index(cell)]
    }

    pub fn at_point(&self, p: &Point) -> Option<CostCell> {
        self.frame.cell_of(p).map(|c| self.get(c))
    }

    pub fn cells(&self) -> &[CostCell] {
        &self.cells
    }

    /// Overwrites one cell; bumps the revision when the value changes.
    pub fn set(&mut self, cell: Cell, value: CostCell) -> bool {
        let i = self.frame.index(cell);
        if self.cells[i] == value {
            return false;
        }
        self.cells[i] = value;
        self.revision += 1;
        true
    }

    /// Forces the revision to at least `rev` (used when a derived map replaces another).
    pub fn bump_revision_past(&mut self, rev: u64) {
        if self.revision <= rev {
            self.revision = rev + 1;
        }
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_known()).count()
    }

    pub fn is_traversable_point(&self, p: &Point) -> bool {
        self.at_point(p).is_some_and(CostCell::is_traversable)
    }
}

/// Casts the sensor from `pose` and reveals what it sees into `costmap`.
///
/// Returns whether any cell changed; the revision grows by one in that case.
pub fn reveal(
    world: &World,
    pose: &Pose,
    sensor: &SensorConfig,
    costmap: &mut CostMap,
) -> Result<bool, WorldError> {
    let origin = pose.position();
    if !world.is_free_point(&origin) {
        return Err(WorldError::PoseOutOfBounds {
            x: pose.x,
            y: pose.y,
        });
    }
    let mut changed = false;
    let full_circle = sensor.fov >= 2.0 * PI - 1e-12;
    let rays = if full_circle {
        ((2.0 * PI) / sensor.angular_step).round().max(1.0) as usize
    } else {
        (sensor.fov / sensor.angular_step).floor() as usize + 1
    };
    let first = if full_circle { 0.0 } else { -sensor.fov / 2.0 };

    for k in 0..rays {
        let angle = pose.heading + first + k as f64 * sensor.angular_step;
        let end = Point::new(
            origin.x + sensor.range * angle.cos(),
            origin.y + sensor.range * angle.sin(),
        );
        world.frame.trace(&origin, &end, |cell| {
            let i = costmap.frame.index(cell);
            match world.terrain(cell) {
                Terrain::Free => {
                    if costmap.cells[i] == CostCell::Unknown {
                        costmap.cells[i] = CostCell::Free(0);
                        changed = true;
                    }
                    true
                }
                Terrain::Occupied => {
                    if costmap.cells[i] == CostCell::Unknown {
                        costmap.cells[i] = CostCell::Occupied;
                        changed = true;
                    }
                    false
                }
            }
        });
    }
    if changed {
        costmap.revision += 1;
    }
    Ok(changed)
}

/// Inflates obstacles by `radius` meters.
///
/// Free cells within half the radius of an occupied cell become lethal;
/// beyond that the cost falls linearly to 1 at `radius`. Costs are
/// combined with `max`, so the operation is idempotent. Unknown cells are
/// left alone.
pub fn inflate(costmap: &CostMap, radius: f64) -> CostMap {
    let mut out = costmap.clone();
    if radius <= 0.0 {
        return out;
    }
    let frame = costmap.frame;
    let r_cells = radius / frame.resolution + 1e-9;
    let lethal_cells = r_cells / 2.0;
    let reach = r_cells.floor() as i64;
    let mut changed = false;

    for (i, c) in costmap.cells.iter().enumerate() {
        if *c != CostCell::Occupied {
            continue;
        }
        let oc = frame.cell_at(i);
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let d = ((dc * dc + dr * dr) as f64).sqrt();
                if d > r_cells || (dc == 0 && dr == 0) {
                    continue;
                }
                let Some(cell) = frame.checked_cell(oc.col as i64 + dc, oc.row as i64 + dr) else {
                    continue;
                };
                let cost = if d <= lethal_cells {
                    LETHAL_COST
                } else {
                    let frac = (r_cells - d) / (r_cells - lethal_cells);
                    (254.0 * frac).round().clamp(1.0, 254.0) as u8
                };
                let j = frame.index(cell);
                if let CostCell::Free(old) = out.cells[j] {
                    if cost > old {
                        out.cells[j] = CostCell::Free(cost);
                        changed = true;
                    }
                }
            }
        }
    }
    if changed {
        out.revision = costmap.revision + 1;
    }
    out
}

/// A point of interest seen from a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSighting {
    pub poi: Poi,
    pub distance: f64,
    pub bearing: f64,
    pub side: Side,
}

/// POIs within sensor range and field of view with an unobstructed line of
/// sight to their anchor, nearest first (ties by id). Anchors usually sit on
/// a wall, so striking an occupied cell next to the anchor cell counts as
/// seeing it.
pub fn visible_pois(world: &World, pose: &Pose, sensor: &SensorConfig) -> Vec<PoiSighting> {
    let origin = pose.position();
    let mut out: Vec<PoiSighting> = world
        .pois
        .iter()
        .filter_map(|poi| {
            let distance = origin.distance(&poi.anchor);
            if distance > sensor.range {
                return None;
            }
            let bearing = pose.bearing_to(&poi.anchor);
            if sensor.fov < 2.0 * PI - 1e-12 && bearing.abs() > sensor.fov / 2.0 {
                return None;
            }
            let target = world.frame.cell_of(&poi.anchor)?;
            let mut clear = true;
            world.frame.trace(&origin, &poi.anchor, |cell| {
                if cell == target {
                    return false;
                }
                if world.terrain(cell) == Terrain::Occupied {
                    let near = cell.row.abs_diff(target.row) <= 1 && cell.col.abs_diff(target.col) <= 1;
                    clear = near;
                    return false;
                }
                true
            });
            clear.then(|| PoiSighting {
                poi: poi.clone(),
                distance,
                bearing,
                side: Side::from_bearing(bearing),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.poi.id.cmp(&b.poi.id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(map: &str) -> World {
        load_world(map, "").unwrap()
    }

    #[test]
    fn loads_tiny_map() {
        let w = world("res=1\n###\n#S#\n###\n");
        assert_eq!(w.frame.width, 3);
        assert_eq!(w.occupied_count(), 8);
        assert_eq!(w.start_pose.position(), Point::new(1.0, 1.0));
    }

    #[test]
    fn rejects_double_start() {
        let err = load_world("res=1\nS.S\n", "").unwrap_err();
        assert!(matches!(err, WorldError::MalformedMap { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_ragged_and_unknown_chars() {
        assert!(matches!(
            load_world("S..\n..\n", ""),
            Err(WorldError::MalformedMap { .. })
        ));
        assert!(matches!(
            load_world("S.x\n", ""),
            Err(WorldError::MalformedMap { .. })
        ));
        assert!(matches!(
            load_world("...\n", ""),
            Err(WorldError::MalformedMap { .. })
        ));
    }

    #[test]
    fn first_text_line_is_top_row() {
        let w = world("res=1\n#..\n..S\n");
        assert_eq!(w.terrain(Cell::new(0, 1)), Terrain::Occupied);
        assert_eq!(w.terrain(Cell::new(0, 0)), Terrain::Free);
        assert_eq!(w.start_pose.position(), Point::new(2.0, 0.0));
    }

    #[test]
    fn poi_errors() {
        let map = "res=1\nS..\n";
        let out = r#"{"id":"a","name":"A","category":"x","anchor":[9,0]}"#;
        assert_eq!(
            load_world(map, out).unwrap_err(),
            WorldError::PoiOutOfBounds("a".into())
        );
        let dup = "{\"id\":\"a\",\"name\":\"A\",\"category\":\"x\",\"anchor\":[0,0]}\n{\"id\":\"a\",\"name\":\"B\",\"category\":\"x\",\"anchor\":[1,0]}";
        assert_eq!(
            load_world(map, dup).unwrap_err(),
            WorldError::DuplicatePoiId("a".into())
        );
        let unnamed = r#"{"id":"a","name":" ","category":"x","anchor":[0,0]}"#;
        assert!(matches!(
            load_world(map, unnamed),
            Err(WorldError::InvalidPoi { .. })
        ));
    }

    #[test]
    fn reveal_open_room_within_range() {
        let mut rows = vec![".".repeat(21); 21];
        rows[10].replace_range(10..11, "S");
        let w = world(&format!("res=1\n{}\n", rows.join("\n")));
        let mut cm = w.unknown_costmap();
        let sensor = SensorConfig::default();
        assert!(reveal(&w, &w.start_pose, &sensor, &mut cm).unwrap());
        assert_eq!(cm.revision(), 1);
        for i in 0..cm.frame.len() {
            let cell = cm.frame.cell_at(i);
            let d = cm.frame.center(cell).distance(&w.start_pose.position());
            if d <= 10.0 {
                assert_eq!(cm.get(cell), CostCell::Free(0), "{cell:?} at {d}");
            }
        }
        // nothing new to see from the same pose
        assert!(!reveal(&w, &w.start_pose, &sensor, &mut cm).unwrap());
        assert_eq!(cm.revision(), 1);
    }

    #[test]
    fn wall_occludes_cells_behind_it() {
        let w = world("res=1\n.......\n.......\nS.#....\n.......\n.......\n");
        let mut cm = w.unknown_costmap();
        let sensor = SensorConfig {
            range: 10.0,
            angular_step: 1f64.to_radians(),
            fov: 20f64.to_radians(),
        };
        reveal(&w, &w.start_pose, &sensor, &mut cm).unwrap();
        assert_eq!(cm.get(Cell::new(2, 2)), CostCell::Occupied);
        assert_eq!(cm.get(Cell::new(1, 2)), CostCell::Free(0));
        assert_eq!(cm.get(Cell::new(3, 2)), CostCell::Unknown);
        assert_eq!(cm.get(Cell::new(6, 2)), CostCell::Unknown);
    }

    #[test]
    fn reveal_rejects_pose_on_wall() {
        let w = world("res=1\nS#\n");
        let mut cm = w.unknown_costmap();
        let err = reveal(
            &w,
            &Pose::new(1.0, 0.0, 0.0),
            &SensorConfig::default(),
            &mut cm,
        );
        assert!(matches!(err, Err(WorldError::PoseOutOfBounds { .. })));
    }

    #[test]
    fn inflate_zero_is_identity_and_free_map_stays_free() {
        let w = world("res=0.1\n.....\n..S..\n.....\n");
        let cm = w.revealed_costmap();
        assert_eq!(inflate(&cm, 0.0), cm);
        assert_eq!(inflate(&cm, 0.3), cm);
    }

    #[test]
    fn inflate_matches_brute_force_distance_oracle() {
        let mut rows = vec![".........".to_string(); 9];
        rows[4] = "....#....".into();
        rows[0] = "S........".into();
        let w = world(&format!("res=0.1\n{}\n", rows.join("\n")));
        let cm = inflate(&w.revealed_costmap(), 0.3);
        let wall = Point::new(0.4, 0.4);
        for i in 0..cm.frame.len() {
            let cell = cm.frame.cell_at(i);
            let p = cm.frame.center(cell);
            if p == wall {
                assert_eq!(cm.get(cell), CostCell::Occupied);
                continue;
            }
            let d = p.distance(&wall);
            match cm.get(cell) {
                CostCell::Free(c) if d <= 0.3 + 1e-9 => assert!(c > 0, "{cell:?} d={d}"),
                CostCell::Free(c) => assert_eq!(c, 0, "{cell:?} d={d}"),
                other => panic!("unexpected {other:?}"),
            }
        }
        // immediate neighbours are lethal, cost falls off with distance
        assert_eq!(cm.get(Cell::new(5, 4)), CostCell::Free(LETHAL_COST));
        let CostCell::Free(c2) = cm.get(Cell::new(6, 4)) else { panic!() };
        let CostCell::Free(c3) = cm.get(Cell::new(7, 4)) else { panic!() };
        assert!(LETHAL_COST > c2 && c2 > c3 && c3 > 0);
    }

    #[test]
    fn inflate_is_idempotent() {
        let w = world("res=0.1\n#...#.....\n....S...#.\n..#.......\n");
        let once = inflate(&w.revealed_costmap(), 0.3);
        let twice = inflate(&once, 0.3);
        assert_eq!(once.cells(), twice.cells());
    }

    fn poi(id: &str, x: f64, y: f64) -> String {
        format!(r#"{{"id":"{id}","name":"{id} name","category":"exhibit","anchor":[{x},{y}]}}"#)
    }

    #[test]
    fn poi_dead_ahead_is_front() {
        let map = format!("res=1\nS{}\n", ".".repeat(9));
        let w = load_world(&map, &poi("a", 5.0, 0.0)).unwrap();
        let s = visible_pois(&w, &w.start_pose, &SensorConfig::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].side, Side::Front);
        assert!(s[0].bearing.abs() < 1e-12);
        assert!((s[0].distance - 5.0).abs() < 1e-12);
    }

    #[test]
    fn poi_behind_wall_is_hidden() {
        let w = load_world("res=1\nS.#..\n", &poi("a", 4.0, 0.0)).unwrap();
        assert!(visible_pois(&w, &w.start_pose, &SensorConfig::default()).is_empty());
    }

    #[test]
    fn left_and_right_pois() {
        let map = "res=1\n.......\n.......\n.......\n...S...\n.......\n.......\n.......\n";
        let doc = format!("{}\n{}", poi("b", 3.0, 0.0), poi("a", 3.0, 6.0));
        let w = load_world(map, &doc).unwrap();
        let s = visible_pois(&w, &w.start_pose, &SensorConfig::default());
        let sides: Vec<_> = s.iter().map(|x| (x.poi.id.as_str(), x.side)).collect();
        assert_eq!(sides, vec![("a", Side::Left), ("b", Side::Right)]);
    }
}
