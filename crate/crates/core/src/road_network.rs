//! Map parsing and decomposition into lanes, bundles, road segments,
//! intersections, the dependency graph and the smallest legal loop.
//!
//! The accepted text format is described in `docs/map-format.md`.

use crate::grid::{Coord, Heading, Orientations};
use petgraph::graphmap::DiGraphMap;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

pub type LaneId = usize;
pub type BundleId = usize;
pub type SegmentId = usize;
pub type IntersectionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellCode {
    Road(Heading),
    Intersection,
    Blocked,
    Light,
}

impl CellCode {
    fn from_char(ch: char) -> Option<CellCode> {
        match ch {
            '+' => Some(CellCode::Intersection),
            '.' => Some(CellCode::Blocked),
            'T' => Some(CellCode::Light),
            c => Heading::from_char(c).map(CellCode::Road),
        }
    }

    fn to_char(self) -> char {
        match self {
            CellCode::Road(h) => h.to_char(),
            CellCode::Intersection => '+',
            CellCode::Blocked => '.',
            CellCode::Light => 'T',
        }
    }
}

/// Per-cell record: coordinate, drivability and the legal orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub coord: Coord,
    pub drivable: bool,
    pub legal_orientations: Orientations,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lane {
    pub id: LaneId,
    pub heading: Heading,
    /// Cells in travel order.
    pub cells: Vec<Coord>,
    pub bundle: BundleId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub id: BundleId,
    pub heading: Heading,
    /// Lanes ordered from the leftmost to the rightmost relative to travel.
    pub lanes: Vec<LaneId>,
    pub segment: SegmentId,
}

/// A bundle cut at intersection boundaries. Lanes never run through an
/// intersection cell, so every bundle already lies between intersections
/// and maps onto exactly one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadSegment {
    pub id: SegmentId,
    pub bundle: BundleId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intersection {
    pub id: IntersectionId,
    pub cells: Vec<Coord>,
    pub min: Coord,
    pub max: Coord,
    pub lights: Vec<Coord>,
}

impl Intersection {
    /// Extent of the cluster in cells (the larger side of its bounding box).
    pub fn width(&self) -> i32 {
        (self.max.row - self.min.row + 1).max(self.max.col - self.min.col + 1)
    }

    /// Chebyshev distance from `c` to the cluster bounding box.
    pub fn distance(&self, c: Coord) -> i32 {
        let dr = (self.min.row - c.row).max(c.row - self.max.row).max(0);
        let dc = (self.min.col - c.col).max(c.col - self.max.col).max(0);
        dr.max(dc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: Vec<SegmentId>,
    pub edges: Vec<(SegmentId, SegmentId)>,
}

impl DependencyGraph {
    fn graph(&self) -> DiGraphMap<SegmentId, ()> {
        let mut g = DiGraphMap::new();
        for &n in &self.nodes {
            g.add_node(n);
        }
        for &(a, b) in &self.edges {
            g.add_edge(a, b, ());
        }
        g
    }

    pub fn is_cyclic(&self) -> bool {
        petgraph::algo::is_cyclic_directed(&self.graph())
    }

    /// A topological order when the graph is a DAG.
    pub fn topological_order(&self) -> Option<Vec<SegmentId>> {
        petgraph::algo::toposort(&self.graph(), None).ok()
    }
}

/// Result of the smallest-loop search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopSize {
    NoLoop,
    Cells(usize),
}

/// A maneuver that crosses an intersection: the swept cells from the
/// approach cell to the first cell past the cluster, and the exit pose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crossing {
    pub path: Vec<Coord>,
    pub exit: Coord,
    pub exit_heading: Heading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub max_bundle_lanes: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { max_bundle_lanes: 2 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line}: expected {expected} cells, found {found}")]
    NonRectangular { line: usize, expected: usize, found: usize },
    #[error("line {line}, cell {cell}: unknown cell code {code:?}")]
    UnknownCode { line: usize, cell: usize, code: String },
    #[error("intersection at {at} has no adjacent light cell")]
    IntersectionWithoutLight { at: Coord },
    #[error("intersection cell {at} has fewer than two legal orientations")]
    DegenerateIntersection { at: Coord },
    #[error("bundle containing {at} has {lanes} lanes (limit {limit})")]
    TooManyLanes { at: Coord, lanes: usize, limit: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("cell {0} is not drivable")]
    NotDrivable(Coord),
    #[error("cell {0} is an intersection cell")]
    InIntersection(Coord),
    #[error("cell {cell} is not in bundle {bundle}")]
    OutsideBundle { cell: Coord, bundle: BundleId },
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    pub rows: i32,
    pub cols: i32,
    codes: Vec<CellCode>,
    orient: Vec<Orientations>,
    lane_idx: Vec<Option<LaneId>>,
    inter_idx: Vec<Option<IntersectionId>>,
    road_rank: Vec<usize>,
    pub lanes: Vec<Lane>,
    pub bundles: Vec<Bundle>,
    pub segments: Vec<RoadSegment>,
    pub intersections: Vec<Intersection>,
    pub sources: Vec<Coord>,
    pub sinks: Vec<Coord>,
}

/// Canonical text of a map: comments and blank lines dropped, cells trimmed
/// and joined by commas, one row per line, trailing newline.
pub fn normalize(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = t.split(',').map(str::trim).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_map(text: &str) -> Result<RoadNetwork, MapError> {
    parse_map_with(text, ParseOptions::default())
}

pub fn parse_map_with(text: &str, opts: ParseOptions) -> Result<RoadNetwork, MapError> {
    let mut grid: Vec<Vec<CellCode>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (i, tok) in t.split(',').enumerate() {
            let tok = tok.trim();
            let mut chars = tok.chars();
            let code = match (chars.next(), chars.next()) {
                (Some(c), None) => CellCode::from_char(c),
                _ => None,
            };
            match code {
                Some(c) => row.push(c),
                None => {
                    return Err(MapError::UnknownCode {
                        line: lineno + 1,
                        cell: i + 1,
                        code: tok.to_string(),
                    })
                }
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(MapError::NonRectangular { line: lineno + 1, expected: w, found: row.len() })
            }
            _ => {}
        }
        grid.push(row);
    }
    let cols = width.ok_or(MapError::Empty)?;
    let rows = grid.len();
    let codes: Vec<CellCode> = grid.into_iter().flatten().collect();
    let mut net = RoadNetwork {
        rows: rows as i32,
        cols: cols as i32,
        orient: vec![Orientations::EMPTY; codes.len()],
        lane_idx: vec![None; codes.len()],
        inter_idx: vec![None; codes.len()],
        road_rank: Vec::new(),
        codes,
        lanes: Vec::new(),
        bundles: Vec::new(),
        segments: Vec::new(),
        intersections: Vec::new(),
        sources: Vec::new(),
        sinks: Vec::new(),
    };
    net.find_intersections()?;
    net.infer_intersection_orientations()?;
    net.build_lanes();
    net.build_bundles(opts.max_bundle_lanes)?;
    net.find_boundaries();
    Ok(net)
}

impl RoadNetwork {
    pub fn in_bounds(&self, c: Coord) -> bool {
        c.row >= 0 && c.col >= 0 && c.row < self.rows && c.col < self.cols
    }

    fn idx(&self, c: Coord) -> usize {
        (c.row * self.cols + c.col) as usize
    }

    pub fn code(&self, c: Coord) -> Option<CellCode> {
        self.in_bounds(c).then(|| self.codes[self.idx(c)])
    }

    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Coord::new(r, c)))
    }

    pub fn grid_point(&self, c: Coord) -> Option<GridPoint> {
        self.in_bounds(c).then(|| GridPoint {
            coord: c,
            drivable: self.is_drivable(c),
            legal_orientations: self.legal(c),
        })
    }

    /// Legal orientations of a cell; empty off the grid and on blocked cells.
    pub fn legal(&self, c: Coord) -> Orientations {
        if self.in_bounds(c) {
            self.orient[self.idx(c)]
        } else {
            Orientations::EMPTY
        }
    }

    pub fn is_drivable(&self, c: Coord) -> bool {
        !self.legal(c).is_empty()
    }

    pub fn allows(&self, c: Coord, h: Heading) -> bool {
        self.legal(c).contains(h)
    }

    pub fn is_intersection(&self, c: Coord) -> bool {
        self.intersection_of(c).is_some()
    }

    pub fn intersection_of(&self, c: Coord) -> Option<IntersectionId> {
        if self.in_bounds(c) {
            self.inter_idx[self.idx(c)]
        } else {
            None
        }
    }

    /// Non-intersection drivable cell with exactly heading `h`.
    pub fn is_road_with(&self, c: Coord, h: Heading) -> bool {
        matches!(self.code(c), Some(CellCode::Road(x)) if x == h)
    }

    pub fn road_heading(&self, c: Coord) -> Option<Heading> {
        match self.code(c) {
            Some(CellCode::Road(h)) => Some(h),
            _ => None,
        }
    }

    pub fn lane_of(&self, c: Coord) -> Result<LaneId, QueryError> {
        if !self.is_drivable(c) {
            return Err(QueryError::NotDrivable(c));
        }
        self.lane_idx[self.idx(c)].ok_or(QueryError::InIntersection(c))
    }

    pub fn bundle_of(&self, c: Coord) -> Result<BundleId, QueryError> {
        self.lane_of(c).map(|l| self.lanes[l].bundle)
    }

    pub fn segment_of(&self, c: Coord) -> Result<SegmentId, QueryError> {
        self.bundle_of(c).map(|b| self.bundles[b].segment)
    }

    /// Integer position of `c` along the travel direction of `bundle`.
    pub fn longitudinal_projection(&self, c: Coord, bundle: BundleId) -> Result<i32, QueryError> {
        if self.bundle_of(c)? != bundle {
            return Err(QueryError::OutsideBundle { cell: c, bundle });
        }
        Ok(self.bundles[bundle].heading.along(c))
    }

    /// True when `c` is the rightmost (or leftmost) lane cell of its bundle,
    /// i.e. no same-heading lane lies beside it on that side.
    pub fn is_outer_lane(&self, c: Coord, h: Heading, side: TurnSide) -> bool {
        let d = match side {
            TurnSide::Right => h.right(),
            TurnSide::Left => h.left(),
        };
        !self.allows(c.step(d, 1), h)
    }

    /// Straight crossing from an approach cell through the cluster ahead.
    pub fn straight_crossing(&self, from: Coord, h: Heading) -> Option<Crossing> {
        if !self.is_road_with(from, h) || !self.is_intersection(from.step(h, 1)) {
            return None;
        }
        let mut path = vec![from];
        let mut c = from.step(h, 1);
        while self.is_intersection(c) {
            if !self.allows(c, h) {
                return None;
            }
            path.push(c);
            c = c.step(h, 1);
        }
        if !self.is_road_with(c, h) {
            return None;
        }
        path.push(c);
        Some(Crossing { path, exit: c, exit_heading: h })
    }

    /// L-shaped turn from an approach cell through the cluster ahead. The
    /// corner is the first cell ahead carrying the new heading from which
    /// the exit lane can be reached; turns leave from the outer lane only.
    pub fn turn_crossing(&self, from: Coord, h: Heading, side: TurnSide) -> Option<Crossing> {
        if !self.is_road_with(from, h) || !self.is_intersection(from.step(h, 1)) {
            return None;
        }
        if !self.is_outer_lane(from, h, side) {
            return None;
        }
        let d = match side {
            TurnSide::Right => h.right(),
            TurnSide::Left => h.left(),
        };
        let mut k = 1;
        loop {
            let q = from.step(h, k);
            if !self.is_intersection(q) || !self.allows(q, h) {
                return None;
            }
            if self.allows(q, d) {
                let mut leg = Vec::new();
                let mut c = q.step(d, 1);
                let mut ok = true;
                while self.is_intersection(c) {
                    if !self.allows(c, d) {
                        ok = false;
                        break;
                    }
                    leg.push(c);
                    c = c.step(d, 1);
                }
                if ok && self.is_road_with(c, d) {
                    let mut path: Vec<Coord> = (0..=k).map(|i| from.step(h, i)).collect();
                    path.extend(leg);
                    path.push(c);
                    return Some(Crossing { path, exit: c, exit_heading: d });
                }
            }
            k += 1;
        }
    }

    pub fn build_dependency_graph(&self) -> DependencyGraph {
        let nodes: Vec<SegmentId> = self.segments.iter().map(|s| s.id).collect();
        let mut edges = BTreeSet::new();
        for (from, h) in self.road_cells() {
            let crossings = [
                self.straight_crossing(from, h),
                self.turn_crossing(from, h, TurnSide::Right),
                self.turn_crossing(from, h, TurnSide::Left),
            ];
            for x in crossings.into_iter().flatten() {
                if let (Ok(a), Ok(b)) = (self.segment_of(from), self.segment_of(x.exit)) {
                    edges.insert((a, b));
                }
            }
        }
        DependencyGraph { nodes, edges: edges.into_iter().collect() }
    }

    /// Successor road cells of a road cell under straight moves and
    /// intersection crossings (lane changes excluded).
    fn loop_successors(&self, c: Coord, h: Heading) -> Vec<Coord> {
        let mut out = Vec::new();
        let n = c.step(h, 1);
        if self.is_road_with(n, h) {
            out.push(n);
        }
        for x in [
            self.straight_crossing(c, h),
            self.turn_crossing(c, h, TurnSide::Right),
            self.turn_crossing(c, h, TurnSide::Left),
        ]
        .into_iter()
        .flatten()
        {
            out.push(x.exit);
        }
        out
    }

    /// Size of the smallest directed legal cycle, counting only
    /// non-intersection cells. Exhaustive BFS from every road cell.
    pub fn smallest_loop_size(&self) -> LoopSize {
        let cells: Vec<(Coord, Heading)> = self.road_cells().collect();
        let succ: Vec<Vec<usize>> = cells
            .iter()
            .map(|&(c, h)| {
                self.loop_successors(c, h)
                    .into_iter()
                    .map(|n| self.road_index(n))
                    .collect()
            })
            .collect();
        let mut best: Option<usize> = None;
        let mut dist = vec![usize::MAX; cells.len()];
        for s in 0..cells.len() {
            dist.iter_mut().for_each(|d| *d = usize::MAX);
            let mut q = VecDeque::new();
            for &n in &succ[s] {
                if dist[n] == usize::MAX {
                    dist[n] = 1;
                    q.push_back(n);
                }
            }
            while let Some(u) = q.pop_front() {
                if u == s {
                    best = Some(best.map_or(dist[u], |b| b.min(dist[u])));
                    break;
                }
                if best.is_some_and(|b| dist[u] >= b) {
                    break;
                }
                for &n in &succ[u] {
                    if dist[n] == usize::MAX {
                        dist[n] = dist[u] + 1;
                        q.push_back(n);
                    }
                }
            }
        }
        best.map_or(LoopSize::NoLoop, LoopSize::Cells)
    }

    /// Indices into `road_cells()` order, which is row-major.
    fn road_index(&self, c: Coord) -> usize {
        self.road_rank[self.idx(c)]
    }

    /// All non-intersection drivable cells with their heading, row-major.
    pub fn road_cells(&self) -> impl Iterator<Item = (Coord, Heading)> + '_ {
        self.cells().filter_map(move |c| self.road_heading(c).map(|h| (c, h)))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| self.codes[self.idx(Coord::new(r, c))].to_char().to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn find_intersections(&mut self) -> Result<(), MapError> {
        let mut seen = vec![false; self.codes.len()];
        for start in self.cells().collect::<Vec<_>>() {
            if self.code(start) != Some(CellCode::Intersection) || seen[self.idx(start)] {
                continue;
            }
            let id = self.intersections.len();
            let mut cells = Vec::new();
            let mut q = VecDeque::from([start]);
            seen[self.idx(start)] = true;
            while let Some(c) = q.pop_front() {
                cells.push(c);
                for h in Heading::ALL {
                    let n = c.step(h, 1);
                    if self.code(n) == Some(CellCode::Intersection) && !seen[self.idx(n)] {
                        seen[self.idx(n)] = true;
                        q.push_back(n);
                    }
                }
            }
            cells.sort();
            let mut lights = BTreeSet::new();
            for &c in &cells {
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let n = c.offset(dr, dc);
                        if self.code(n) == Some(CellCode::Light) {
                            lights.insert(n);
                        }
                    }
                }
            }
            if lights.is_empty() {
                return Err(MapError::IntersectionWithoutLight { at: cells[0] });
            }
            let min = Coord::new(
                cells.iter().map(|c| c.row).min().unwrap(),
                cells.iter().map(|c| c.col).min().unwrap(),
            );
            let max = Coord::new(
                cells.iter().map(|c| c.row).max().unwrap(),
                cells.iter().map(|c| c.col).max().unwrap(),
            );
            for &c in &cells {
                let i = self.idx(c);
                self.inter_idx[i] = Some(id);
            }
            self.intersections.push(Intersection { id, cells, min, max, lights: lights.into_iter().collect() });
        }
        Ok(())
    }

    /// Intersection cells carry the union of the through-lane orientations of
    /// the road cells at both ends of their row and column within the cluster.
    fn infer_intersection_orientations(&mut self) -> Result<(), MapError> {
        for c in self.cells().collect::<Vec<_>>() {
            let i = self.idx(c);
            self.orient[i] = match self.codes[i] {
                CellCode::Road(h) => Orientations::single(h),
                _ => Orientations::EMPTY,
            };
        }
        for k in 0..self.intersections.len() {
            for c in self.intersections[k].cells.clone() {
                let mut o = Orientations::EMPTY;
                for dir in Heading::ALL {
                    let mut n = c.step(dir, 1);
                    while self.intersection_of(n) == Some(k) {
                        n = n.step(dir, 1);
                    }
                    if let Some(h) = self.road_heading(n) {
                        if h.axis() == dir.axis() {
                            o.insert(h);
                        }
                    }
                }
                if o.len() < 2 {
                    return Err(MapError::DegenerateIntersection { at: c });
                }
                let i = self.idx(c);
                self.orient[i] = o;
            }
        }
        Ok(())
    }

    fn build_lanes(&mut self) {
        for h in Heading::ALL {
            let mut visited = vec![false; self.codes.len()];
            for c in self.cells().collect::<Vec<_>>() {
                if !self.is_road_with(c, h) || visited[self.idx(c)] {
                    continue;
                }
                let mut start = c;
                while self.is_road_with(start.step(h, -1), h) {
                    start = start.step(h, -1);
                }
                let mut cells = Vec::new();
                let mut p = start;
                while self.is_road_with(p, h) {
                    visited[self.idx(p)] = true;
                    cells.push(p);
                    p = p.step(h, 1);
                }
                let id = self.lanes.len();
                for &x in &cells {
                    let i = self.idx(x);
                    self.lane_idx[i] = Some(id);
                }
                self.lanes.push(Lane { id, heading: h, cells, bundle: usize::MAX });
            }
        }
        self.road_rank = vec![usize::MAX; self.codes.len()];
        let order: Vec<Coord> = self.road_cells().map(|(c, _)| c).collect();
        for (rank, c) in order.into_iter().enumerate() {
            let i = self.idx(c);
            self.road_rank[i] = rank;
        }
    }

    fn build_bundles(&mut self, limit: usize) -> Result<(), MapError> {
        let n = self.lanes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let nx = p[y];
                p[y] = r;
                y = nx;
            }
            r
        }
        for l in 0..n {
            let h = self.lanes[l].heading;
            for &c in &self.lanes[l].cells.clone() {
                let side = c.step(h.right(), 1);
                if self.is_road_with(side, h) {
                    let m = self.lane_idx[self.idx(side)].unwrap();
                    let (a, b) = (find(&mut parent, l), find(&mut parent, m));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut root_to_bundle = vec![usize::MAX; n];
        for l in 0..n {
            let r = find(&mut parent, l);
            if root_to_bundle[r] == usize::MAX {
                let id = self.bundles.len();
                root_to_bundle[r] = id;
                self.bundles.push(Bundle { id, heading: self.lanes[l].heading, lanes: Vec::new(), segment: id });
                self.segments.push(RoadSegment { id, bundle: id });
            }
            let b = root_to_bundle[r];
            self.lanes[l].bundle = b;
            self.bundles[b].lanes.push(l);
        }
        for b in 0..self.bundles.len() {
            let h = self.bundles[b].heading;
            let mut lanes = std::mem::take(&mut self.bundles[b].lanes);
            lanes.sort_by_key(|&l| (h.across(self.lanes[l].cells[0]), l));
            if lanes.len() > limit {
                return Err(MapError::TooManyLanes {
                    at: self.lanes[lanes[0]].cells[0],
                    lanes: lanes.len(),
                    limit,
                });
            }
            self.bundles[b].lanes = lanes;
        }
        Ok(())
    }

    fn find_boundaries(&mut self) {
        let mut sources = Vec::new();
        let mut sinks = Vec::new();
        for (c, h) in self.road_cells() {
            if !self.in_bounds(c.step(h, -1)) {
                sources.push(c);
            }
            if !self.in_bounds(c.step(h, 1)) {
                sinks.push(c);
            }
        }
        self.sources = sources;
        self.sinks = sinks;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(lines: &[&str]) -> String {
        lines
            .iter()
            .map(|l| l.chars().map(|c| c.to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn three_lane_east_grid() {
        let text = rows(&[">>>>>>>>>>", ">>>>>>>>>>", ">>>>>>>>>>"]);
        let net = parse_map_with(&text, ParseOptions { max_bundle_lanes: 3 }).unwrap();
        assert_eq!(net.lanes.len(), 3);
        assert_eq!(net.bundles.len(), 1);
        assert_eq!(net.segments.len(), 1);
        assert_eq!(net.sources, (0..3).map(|r| Coord::new(r, 0)).collect::<Vec<_>>());
        assert_eq!(net.sinks, (0..3).map(|r| Coord::new(r, 9)).collect::<Vec<_>>());
        assert!(matches!(parse_map(&text), Err(MapError::TooManyLanes { lanes: 3, .. })));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_map(">,>\n>"), Err(MapError::NonRectangular { line: 2, .. })));
        assert!(matches!(parse_map(">,x"), Err(MapError::UnknownCode { code, .. }) if code == "x"));
        assert!(matches!(parse_map(""), Err(MapError::Empty)));
        let no_light = rows(&[".v.", ">+>", ".v."]);
        assert!(matches!(parse_map(&no_light), Err(MapError::IntersectionWithoutLight { .. })));
        let with_light = rows(&["Tv.", ">+>", ".v."]);
        let net = parse_map(&with_light).unwrap();
        assert_eq!(net.legal(Coord::new(1, 1)).len(), 2);
    }

    #[test]
    fn bundles_and_lanes() {
        let text = rows(&["<<<<", ">>>>", ">>>>", "....", "^.^."]);
        let net = parse_map(&text).unwrap();
        let a = net.bundle_of(Coord::new(1, 0)).unwrap();
        assert_eq!(a, net.bundle_of(Coord::new(2, 3)).unwrap());
        assert_ne!(a, net.bundle_of(Coord::new(0, 0)).unwrap());
        let single = net.lane_of(Coord::new(0, 2)).unwrap();
        assert_eq!(net.bundles[net.lanes[single].bundle].lanes, vec![single]);
        let n = net.lane_of(Coord::new(4, 0)).unwrap();
        assert_ne!(n, net.lane_of(Coord::new(4, 2)).unwrap());
        assert_eq!(net.bundle_of(Coord::new(3, 0)), Err(QueryError::NotDrivable(Coord::new(3, 0))));
    }

    #[test]
    fn projections() {
        let text = rows(&[">>>>>>>>", ">>>>>>>>", "........", "^.^.^.^."]);
        let net = parse_map(&text).unwrap();
        let b = net.bundle_of(Coord::new(0, 0)).unwrap();
        assert!(net.longitudinal_projection(Coord::new(0, 3), b).unwrap() < net.longitudinal_projection(Coord::new(0, 7), b).unwrap());
        assert_eq!(
            net.longitudinal_projection(Coord::new(0, 5), b),
            net.longitudinal_projection(Coord::new(1, 5), b)
        );
        let text = rows(&["^", "^", "^", "^", "^", "^", "^", "^", "^", "^"]);
        let net = parse_map(&text).unwrap();
        let nb = net.bundle_of(Coord::new(9, 0)).unwrap();
        assert!(net.longitudinal_projection(Coord::new(9, 0), nb).unwrap() < net.longitudinal_projection(Coord::new(2, 0), nb).unwrap());
        assert!(matches!(
            net.longitudinal_projection(Coord::new(0, 0), nb + 1),
            Err(QueryError::OutsideBundle { .. })
        ));
    }

    #[test]
    fn straight_road_graph_and_loop() {
        let net = parse_map(&rows(&[">>>>>", ">>>>>"])).unwrap();
        let g = net.build_dependency_graph();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
        assert!(!g.is_cyclic());
        assert_eq!(net.smallest_loop_size(), LoopSize::NoLoop);
    }

    #[test]
    fn normalize_round_trip() {
        let text = "# comment\n > , > \n\n>,>\n";
        let net = parse_map(text).unwrap();
        assert_eq!(net.serialize(), normalize(text));
        assert_eq!(normalize(text), ">,>\n>,>\n");
    }
}
