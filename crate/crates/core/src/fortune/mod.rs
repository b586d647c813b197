//! Sweepline construction of the Voronoi diagram.
//!
//! The sweep runs from high to low `y`. The beach line lives in an
//! order-maintenance treap ([`beachline::BeachLine`]) so that locating the
//! arc above a new site costs O(log n). Every bisector traced during the
//! sweep is kept as a raw edge with an anchor point and two optional vertex
//! ends; unbounded ends are clipped to the box when the diagram is finalized.

pub mod beachline;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    circumcenter, clip_to_box, orient, BoundingBox, Edge, Point, Segment, Site, SiteId, EPS_GEOM,
};
use beachline::{BeachLine, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoronoiError {
    #[error("site set is empty")]
    EmptySiteSet,
    #[error("site {0} is not strictly inside the clip box")]
    SiteOutsideBox(SiteId),
    #[error("sites {0} and {1} coincide")]
    DuplicateSite(SiteId, SiteId),
    #[error("site id {0} is used more than once")]
    DuplicateId(SiteId),
    #[error("site {0} has a non-finite coordinate")]
    NonFiniteSite(SiteId),
    #[error("query point ({0}, {1}) is outside the clip box")]
    PointOutsideBox(f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagramStats {
    pub n_sites: usize,
    pub site_events: usize,
    /// Circle events that produced a new Voronoi vertex.
    pub circle_events_processed: usize,
    /// Circle events found stale when popped.
    pub circle_events_discarded: usize,
    /// Cocircular circle events folded into an existing vertex.
    pub circle_events_merged: usize,
    /// Non-degenerate bisector edges before clipping.
    pub pre_clip_edges: usize,
    /// Edges with a non-empty intersection with the clip box.
    pub clipped_edges: usize,
    #[serde(skip)]
    pub build_wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiVertex {
    pub position: Point,
    /// Every site whose circle event landed on this vertex (at least 3).
    pub sites: Vec<SiteId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiEdge {
    pub left: SiteId,
    pub right: SiteId,
    pub segment: Segment,
    /// Vertex index when `segment.a` is a Voronoi vertex rather than a box point.
    pub start_vertex: Option<usize>,
    pub end_vertex: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSide {
    /// Site across this side; `None` on the clip box border.
    pub neighbor: Option<SiteId>,
    /// Index into [`VoronoiDiagram::edges`] for bisector sides.
    pub edge: Option<usize>,
}

/// A clipped cell: counter-clockwise polygon, side `i` runs from
/// `polygon[i]` to `polygon[(i + 1) % len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub site: SiteId,
    pub polygon: Vec<Point>,
    pub sides: Vec<CellSide>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiDiagram {
    pub sites: Vec<Site>,
    pub vertices: Vec<VoronoiVertex>,
    pub edges: Vec<VoronoiEdge>,
    /// One cell per site, in the order of `sites`.
    pub cells: Vec<Cell>,
    pub clip_box: BoundingBox,
    pub stats: DiagramStats,
    #[serde(skip)]
    index_of: HashMap<SiteId, usize>,
    /// Site indices sorted by x, used to pick a walk start.
    #[serde(skip)]
    x_order: Vec<usize>,
}

impl VoronoiDiagram {
    pub fn cell(&self, id: SiteId) -> Option<&Cell> {
        self.index_of.get(&id).map(|&i| &self.cells[i])
    }

    pub fn site(&self, id: SiteId) -> Option<&Site> {
        self.index_of.get(&id).map(|&i| &self.sites[i])
    }

    /// Sites whose cells share a side with `id`'s cell.
    pub fn neighbors(&self, id: SiteId) -> Vec<SiteId> {
        self.cell(id)
            .map(|c| c.sides.iter().filter_map(|s| s.neighbor).collect())
            .unwrap_or_default()
    }

    /// Edges that cross the box interior (those not on the box border).
    pub fn internal_edges(&self) -> impl Iterator<Item = &VoronoiEdge> {
        self.edges.iter()
    }

    /// Point location by walking cell sides toward `q`.
    ///
    /// Each step crosses into a neighbour strictly closer to `q`, so the walk
    /// terminates; ties at the end resolve to the smallest id.
    pub fn locate_cell(&self, q: Point) -> Result<SiteId, VoronoiError> {
        if !q.is_finite() || !self.clip_box.contains(q) {
            return Err(VoronoiError::PointOutsideBox(q.x, q.y));
        }
        let mut cur = self.walk_start(q);
        loop {
            let here = self.sites[cur].position.dist2(q);
            let mut best: Option<(f64, usize)> = None;
            for side in &self.cells[cur].sides {
                let Some(nb) = side.neighbor else { continue };
                let j = self.index_of[&nb];
                let d = self.sites[j].position.dist2(q);
                if d < here && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            match best {
                Some((_, j)) => cur = j,
                None => break,
            }
        }
        let here = self.sites[cur].position.dist2(q);
        let mut id = self.sites[cur].id;
        for side in &self.cells[cur].sides {
            if let Some(nb) = side.neighbor {
                let j = self.index_of[&nb];
                if self.sites[j].position.dist2(q) == here && nb < id {
                    id = nb;
                }
            }
        }
        Ok(id)
    }

    fn walk_start(&self, q: Point) -> usize {
        let k = self
            .x_order
            .partition_point(|&i| self.sites[i].position.x < q.x);
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(self.x_order.len());
        self.x_order[lo..hi]
            .iter()
            .copied()
            .min_by(|&a, &b| {
                self.sites[a]
                    .position
                    .dist2(q)
                    .total_cmp(&self.sites[b].position.dist2(q))
            })
            .unwrap_or(0)
    }

    fn rebuild_lookup(&mut self) {
        self.index_of = self
            .sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id, i))
            .collect();
        let mut order: Vec<usize> = (0..self.sites.len()).collect();
        order.sort_by(|&a, &b| {
            self.sites[a]
                .position
                .x
                .total_cmp(&self.sites[b].position.x)
        });
        self.x_order = order;
    }

    /// Restores the lookup tables after deserialization.
    pub fn reindex(mut self) -> Self {
        self.rebuild_lookup();
        self
    }
}

/// Free-function form of [`VoronoiDiagram::locate_cell`].
pub fn locate_cell(diagram: &VoronoiDiagram, q: Point) -> Result<SiteId, VoronoiError> {
    diagram.locate_cell(q)
}

pub fn build_voronoi(
    sites: &[Site],
    clip_box: BoundingBox,
) -> Result<VoronoiDiagram, VoronoiError> {
    let started = Instant::now();
    validate(sites, &clip_box)?;
    let mut sweep = Sweep::new(sites);
    sweep.run();
    let mut diagram = sweep.finish(clip_box);
    diagram.stats.build_wall_time = started.elapsed();
    Ok(diagram)
}

pub(crate) fn validate(sites: &[Site], clip_box: &BoundingBox) -> Result<(), VoronoiError> {
    if sites.is_empty() {
        return Err(VoronoiError::EmptySiteSet);
    }
    let mut ids = HashSet::with_capacity(sites.len());
    for s in sites {
        if !s.position.is_finite() {
            return Err(VoronoiError::NonFiniteSite(s.id));
        }
        if !ids.insert(s.id) {
            return Err(VoronoiError::DuplicateId(s.id));
        }
        if !clip_box.strictly_contains(s.position) {
            return Err(VoronoiError::SiteOutsideBox(s.id));
        }
    }
    let mut by_x: Vec<&Site> = sites.iter().collect();
    by_x.sort_by(|a, b| a.position.x.total_cmp(&b.position.x));
    for (i, a) in by_x.iter().enumerate() {
        for b in &by_x[i + 1..] {
            if b.position.x - a.position.x >= EPS_GEOM {
                break;
            }
            if a.position.dist(b.position) < EPS_GEOM {
                let (lo, hi) = if a.id < b.id {
                    (a.id, b.id)
                } else {
                    (b.id, a.id)
                };
                return Err(VoronoiError::DuplicateSite(lo, hi));
            }
        }
    }
    Ok(())
}

/// Which end of a raw edge a breakpoint is tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    /// Along `dir(left, right)`.
    Fwd,
    Back,
}

#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    edge: usize,
    end: End,
}

#[derive(Debug)]
struct Arc {
    site: usize,
    /// Breakpoint with the next arc on the beach line.
    right: Option<Breakpoint>,
    /// Pending circle event id.
    circle: Option<u64>,
}

#[derive(Debug)]
struct RawEdge {
    left: usize,
    right: usize,
    anchor: Point,
    fwd: Option<usize>,
    back: Option<usize>,
}

#[derive(Debug)]
struct CircleEvent {
    y: f64,
    x: f64,
    id: u64,
    arc: NodeId,
    center: Point,
}

impl PartialEq for CircleEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CircleEvent {}

impl PartialOrd for CircleEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CircleEvent {
    // Max-heap: higher y first, then smaller x, then older event.
    fn cmp(&self, other: &Self) -> Ordering {
        self.y
            .total_cmp(&other.y)
            .then_with(|| other.x.total_cmp(&self.x))
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Sweep<'a> {
    sites: &'a [Site],
    order: Vec<usize>,
    beach: BeachLine<Arc>,
    circles: BinaryHeap<CircleEvent>,
    next_event: u64,
    edges: Vec<RawEdge>,
    vertices: Vec<VoronoiVertex>,
    stats: DiagramStats,
    sweep_y: f64,
    /// Vertices bucketed by position, for merging cocircular events.
    vertex_grid: HashMap<(i64, i64), Vec<usize>>,
}

const MERGE_CELL: f64 = 4.0 * EPS_GEOM;

fn grid_key(p: Point) -> (i64, i64) {
    (
        (p.x / MERGE_CELL).floor() as i64,
        (p.y / MERGE_CELL).floor() as i64,
    )
}

fn edge_dir(l: Point, r: Point) -> Point {
    Point::new(r.y - l.y, l.x - r.x)
}

/// x of the breakpoint between left arc `p` and right arc `q` for a sweep
/// line at `ly` (below both foci).
fn breakpoint_x(p: Point, q: Point, ly: f64) -> f64 {
    if p.y == ly && q.y == ly {
        return 0.5 * (p.x + q.x);
    }
    if p.y == ly {
        return p.x;
    }
    if q.y == ly {
        return q.x;
    }
    if p.y == q.y {
        return 0.5 * (p.x + q.x);
    }
    let dp = 2.0 * (p.y - ly);
    let dq = 2.0 * (q.y - ly);
    let qx = q.x - p.x;
    let a = 1.0 / dp - 1.0 / dq;
    let b = 2.0 * qx / dq;
    let c = -qx * qx / dq + 0.5 * (p.y - q.y);
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let u = if b > 0.0 {
        2.0 * c / (-b - disc)
    } else if a == 0.0 {
        -c / b
    } else {
        (-b + disc) / (2.0 * a)
    };
    p.x + u
}

fn parabola_y(focus: Point, x: f64, ly: f64) -> f64 {
    let dx = x - focus.x;
    dx * dx / (2.0 * (focus.y - ly)) + 0.5 * (focus.y + ly)
}

impl<'a> Sweep<'a> {
    fn new(sites: &'a [Site]) -> Self {
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (sites[a].position, sites[b].position);
            pb.y.total_cmp(&pa.y)
                .then(pa.x.total_cmp(&pb.x))
                .then(sites[a].id.cmp(&sites[b].id))
        });
        Self {
            sites,
            order,
            beach: BeachLine::new(),
            circles: BinaryHeap::new(),
            next_event: 0,
            edges: Vec::new(),
            vertices: Vec::new(),
            stats: DiagramStats {
                n_sites: sites.len(),
                ..DiagramStats::default()
            },
            sweep_y: f64::INFINITY,
            vertex_grid: HashMap::new(),
        }
    }

    fn pos(&self, site: usize) -> Point {
        self.sites[site].position
    }

    fn run(&mut self) {
        let order = std::mem::take(&mut self.order);
        let mut next_site = order.iter().copied().peekable();
        loop {
            let circle_first = match (next_site.peek(), self.circles.peek()) {
                (None, None) => break,
                (Some(_), None) => false,
                (None, Some(_)) => true,
                (Some(&s), Some(ev)) => {
                    let p = self.pos(s);
                    // Circle events win exact (y, x) ties.
                    ev.y > p.y || (ev.y == p.y && ev.x <= p.x)
                }
            };
            if circle_first {
                let ev = self.circles.pop().expect("peeked");
                self.circle_event(ev);
            } else {
                let s = next_site.next().expect("peeked");
                self.site_event(s);
            }
        }
        self.order = order;
    }

    fn site_event(&mut self, site: usize) {
        self.stats.site_events += 1;
        let p = self.pos(site);
        self.sweep_y = p.y;
        if self.beach.is_empty() {
            self.beach.insert_first(Arc {
                site,
                right: None,
                circle: None,
            });
            return;
        }
        let ly = p.y;
        let found = {
            let beach = &self.beach;
            let sites = self.sites;
            beach
                .search(|id, arc| {
                    let here = sites[arc.site].position;
                    if let Some(prev) = beach.prev(id) {
                        let l = breakpoint_x(sites[beach.get(prev).site].position, here, ly);
                        if p.x < l {
                            return Ordering::Less;
                        }
                    }
                    if let Some(next) = beach.next(id) {
                        let r = breakpoint_x(here, sites[beach.get(next).site].position, ly);
                        if p.x > r {
                            return Ordering::Greater;
                        }
                    }
                    Ordering::Equal
                })
                .expect("beach line not empty")
        };
        let above = self.beach.get(found).site;
        let focus = self.pos(above);
        if focus.y == ly {
            // Only reachable while every processed site shares this y: the
            // arcs are vertical rays and the new site goes to their right.
            debug_assert!(p.x > focus.x);
            let edge = self.push_edge(above, site, Point::new(0.5 * (focus.x + p.x), ly));
            let old_right = self.beach.get(found).right;
            self.cancel_circle(found);
            self.beach.get_mut(found).right = Some(Breakpoint {
                edge,
                end: End::Fwd,
            });
            let new = self.beach.insert_after(
                found,
                Arc {
                    site,
                    right: old_right,
                    circle: None,
                },
            );
            self.check_circle(found);
            self.check_circle(new);
            return;
        }

        let anchor = Point::new(p.x, parabola_y(focus, p.x, ly));
        let edge = self.push_edge(above, site, anchor);
        self.cancel_circle(found);
        let old_right = self.beach.get(found).right;
        self.beach.get_mut(found).right = Some(Breakpoint {
            edge,
            end: End::Fwd,
        });
        let mid = self.beach.insert_after(
            found,
            Arc {
                site,
                right: Some(Breakpoint {
                    edge,
                    end: End::Back,
                }),
                circle: None,
            },
        );
        let tail = self.beach.insert_after(
            mid,
            Arc {
                site: above,
                right: old_right,
                circle: None,
            },
        );
        self.check_circle(found);
        self.check_circle(tail);
    }

    fn circle_event(&mut self, ev: CircleEvent) {
        let live = self.beach.contains(ev.arc) && self.beach.get(ev.arc).circle == Some(ev.id);
        if !live {
            self.stats.circle_events_discarded += 1;
            return;
        }
        self.sweep_y = ev.y;
        let mid = ev.arc;
        let left = self
            .beach
            .prev(mid)
            .expect("circle arc has a left neighbour");
        let right = self
            .beach
            .next(mid)
            .expect("circle arc has a right neighbour");
        let bp_left = self.beach.get(left).right.expect("breakpoint left of arc");
        let bp_mid = self.beach.get(mid).right.expect("breakpoint right of arc");
        let (sa, sb, sc) = (
            self.beach.get(left).site,
            self.beach.get(mid).site,
            self.beach.get(right).site,
        );

        let radius = ev.center.dist(self.pos(sb));
        let reusable = self.find_vertex(ev.center, self.pos(sb), radius);
        let vertex = match reusable {
            Some(v) => {
                self.stats.circle_events_merged += 1;
                for s in [sa, sb, sc] {
                    let id = self.sites[s].id;
                    if !self.vertices[v].sites.contains(&id) {
                        self.vertices[v].sites.push(id);
                    }
                }
                v
            }
            None => {
                self.stats.circle_events_processed += 1;
                self.vertices.push(VoronoiVertex {
                    position: ev.center,
                    sites: vec![self.sites[sa].id, self.sites[sb].id, self.sites[sc].id],
                });
                let v = self.vertices.len() - 1;
                self.vertex_grid
                    .entry(grid_key(ev.center))
                    .or_default()
                    .push(v);
                v
            }
        };
        for bp in [bp_left, bp_mid] {
            let e = &mut self.edges[bp.edge];
            match bp.end {
                End::Fwd => e.fwd = Some(vertex),
                End::Back => e.back = Some(vertex),
            }
        }

        self.beach.remove(mid);
        let edge = self.push_edge(sa, sc, ev.center);
        self.edges[edge].back = Some(vertex);
        self.beach.get_mut(left).right = Some(Breakpoint {
            edge,
            end: End::Fwd,
        });
        self.cancel_circle(left);
        self.cancel_circle(right);
        self.check_circle(left);
        self.check_circle(right);
    }

    /// Existing vertex with the same center and radius within `EPS_GEOM`.
    fn find_vertex(&self, center: Point, on_circle: Point, radius: f64) -> Option<usize> {
        let (kx, ky) = grid_key(center);
        (-1..=1)
            .flat_map(|dx| (-1..=1).map(move |dy| (kx + dx, ky + dy)))
            .filter_map(|k| self.vertex_grid.get(&k))
            .flatten()
            .copied()
            .find(|&v| {
                let pos = self.vertices[v].position;
                pos.dist(center) < EPS_GEOM && (pos.dist(on_circle) - radius).abs() < EPS_GEOM
            })
    }

    fn push_edge(&mut self, left: usize, right: usize, anchor: Point) -> usize {
        self.edges.push(RawEdge {
            left,
            right,
            anchor,
            fwd: None,
            back: None,
        });
        self.edges.len() - 1
    }

    fn cancel_circle(&mut self, arc: NodeId) {
        self.beach.get_mut(arc).circle = None;
    }

    fn check_circle(&mut self, arc: NodeId) {
        let (Some(l), Some(r)) = (self.beach.prev(arc), self.beach.next(arc)) else {
            return;
        };
        let (sl, sm, sr) = (
            self.beach.get(l).site,
            self.beach.get(arc).site,
            self.beach.get(r).site,
        );
        if sl == sr {
            return;
        }
        let (a, b, c) = (self.pos(sl), self.pos(sm), self.pos(sr));
        // The two breakpoints converge only for a clockwise triple.
        if orient(a, b, c) >= 0.0 {
            return;
        }
        let Ok(center) = circumcenter(a, b, c) else {
            return;
        };
        let y = center.y - center.dist(b);
        let id = self.next_event;
        self.next_event += 1;
        self.beach.get_mut(arc).circle = Some(id);
        self.circles.push(CircleEvent {
            y,
            x: center.x,
            id,
            arc,
            center,
        });
    }

    fn finish(self, clip_box: BoundingBox) -> VoronoiDiagram {
        let Sweep {
            sites,
            edges: raw,
            vertices,
            mut stats,
            ..
        } = self;

        let mut edges = Vec::new();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
        let mut edge_of_pair: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &raw {
            if e.fwd.is_some() && e.fwd == e.back {
                // Collapsed onto a merged cocircular vertex.
                continue;
            }
            stats.pre_clip_edges += 1;
            let key = (e.left.min(e.right), e.left.max(e.right));
            neighbors[e.left].push(e.right);
            neighbors[e.right].push(e.left);

            let (l, r) = (sites[e.left].position, sites[e.right].position);
            let d = edge_dir(l, r);
            let vpos = |v: usize| vertices[v].position;
            let unclipped = match (e.back, e.fwd) {
                (Some(a), Some(b)) => Edge::Segment {
                    a: vpos(a),
                    b: vpos(b),
                },
                (Some(a), None) => Edge::Ray {
                    origin: vpos(a),
                    dir: d,
                },
                (None, Some(b)) => Edge::Ray {
                    origin: vpos(b),
                    dir: d * -1.0,
                },
                (None, None) => Edge::Line {
                    point: e.anchor,
                    dir: d,
                },
            };
            let Some(seg) = clip_to_box(unclipped, &clip_box) else {
                continue;
            };
            if seg.length() < EPS_GEOM {
                continue;
            }
            let (start_vertex, end_vertex) = match unclipped {
                Edge::Segment { .. } => (
                    e.back.filter(|&v| vpos(v) == seg.a),
                    e.fwd.filter(|&v| vpos(v) == seg.b),
                ),
                Edge::Ray { origin, .. } => {
                    let v = if e.back.is_some() { e.back } else { e.fwd };
                    (v.filter(|_| origin == seg.a), None)
                }
                Edge::Line { .. } => (None, None),
            };
            edge_of_pair.insert(key, edges.len());
            edges.push(VoronoiEdge {
                left: sites[e.left].id,
                right: sites[e.right].id,
                segment: seg,
                start_vertex,
                end_vertex,
            });
        }
        stats.clipped_edges = edges.len();

        let scale = clip_box.width().hypot(clip_box.height());
        let cells = (0..sites.len())
            .map(|i| {
                let mut nb = std::mem::take(&mut neighbors[i]);
                nb.sort_unstable();
                nb.dedup();
                build_cell(sites, i, &nb, &clip_box, scale, &edge_of_pair)
            })
            .collect();

        let mut diagram = VoronoiDiagram {
            sites: sites.to_vec(),
            vertices,
            edges,
            cells,
            clip_box,
            stats,
            index_of: HashMap::new(),
            x_order: Vec::new(),
        };
        diagram.rebuild_lookup();
        diagram
    }
}

/// Clips the box by the bisector half-planes of `site` against each
/// neighbour, tracking which neighbour produced each polygon side.
fn build_cell(
    sites: &[Site],
    site: usize,
    neighbors: &[usize],
    clip_box: &BoundingBox,
    scale: f64,
    edge_of_pair: &HashMap<(usize, usize), usize>,
) -> Cell {
    let s = sites[site].position;
    let mut poly: Vec<(Point, Option<usize>)> =
        clip_box.corners().into_iter().map(|c| (c, None)).collect();
    for &t in neighbors {
        let tp = sites[t].position;
        let normal = tp - s;
        let offset = 0.5 * (tp.dot(tp) - s.dot(s));
        let side = |p: Point| normal.dot(p) - offset;
        let n = poly.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let (a, label) = poly[i];
            let (b, _) = poly[(i + 1) % n];
            let (fa, fb) = (side(a), side(b));
            let (ina, inb) = (fa <= 0.0, fb <= 0.0);
            if ina {
                out.push((a, label));
            }
            if ina != inb {
                let t_cut = fa / (fa - fb);
                let cut = a + (b - a) * t_cut;
                out.push((cut, if ina { Some(t) } else { label }));
            }
        }
        poly = out;
        if poly.is_empty() {
            break;
        }
    }

    let tol = 1e-12 * scale;
    let mut i = 0;
    while poly.len() > 1 && i < poly.len() {
        let j = (i + 1) % poly.len();
        if poly[i].0.dist(poly[j].0) <= tol {
            poly.remove(i);
        } else {
            i += 1;
        }
    }

    let sides = poly
        .iter()
        .map(|&(_, label)| CellSide {
            neighbor: label.map(|t| sites[t].id),
            edge: label.and_then(|t| edge_of_pair.get(&(site.min(t), site.max(t))).copied()),
        })
        .collect();
    Cell {
        site: sites[site].id,
        polygon: poly.into_iter().map(|(p, _)| p).collect(),
        sides,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{is_convex_ccw, nearest_site_bruteforce, polygon_area};

    fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::from_coords(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn single_site_cell_is_the_box() {
        let b = bbox(0.0, 0.0, 10.0, 10.0);
        let d = build_voronoi(&[Site::new(7, 3.0, 4.0)], b).unwrap();
        assert!(d.vertices.is_empty());
        assert!(d.edges.is_empty());
        assert_eq!(d.cells.len(), 1);
        assert_eq!(d.cells[0].polygon, b.corners().to_vec());
        assert_eq!(d.locate_cell(Point::new(9.0, 1.0)), Ok(7));
    }

    #[test]
    fn two_sites_share_the_bisector() {
        let b = bbox(-20.0, -20.0, 20.0, 20.0);
        let d = build_voronoi(&[Site::new(0, 0.0, 0.0), Site::new(1, 10.0, 0.0)], b).unwrap();
        assert_eq!(d.edges.len(), 1);
        let seg = d.edges[0].segment;
        assert!((seg.a.x - 5.0).abs() < 1e-12 && (seg.b.x - 5.0).abs() < 1e-12);
        assert!((seg.length() - 40.0).abs() < 1e-9);
        assert_eq!(d.locate_cell(Point::new(1.0, 1.0)), Ok(0));
        assert_eq!(d.locate_cell(Point::new(5.0, 0.0)), Ok(0));
    }

    #[test]
    fn right_triangle_has_one_vertex() {
        let b = bbox(-10.0, -10.0, 10.0, 10.0);
        let sites = [
            Site::new(0, 0.0, 0.0),
            Site::new(1, 4.0, 0.0),
            Site::new(2, 0.0, 4.0),
        ];
        let d = build_voronoi(&sites, b).unwrap();
        assert_eq!(d.vertices.len(), 1);
        let v = d.vertices[0].position;
        assert!((v.x - 2.0).abs() < 1e-12 && (v.y - 2.0).abs() < 1e-12);
        assert_eq!(d.stats.circle_events_processed, 1);
        assert_eq!(d.stats.pre_clip_edges, 3);
    }

    #[test]
    fn cocircular_square_merges_into_one_vertex() {
        let b = bbox(-5.0, -5.0, 6.0, 6.0);
        let sites = [
            Site::new(0, 0.0, 0.0),
            Site::new(1, 1.0, 0.0),
            Site::new(2, 0.0, 1.0),
            Site::new(3, 1.0, 1.0),
        ];
        let d = build_voronoi(&sites, b).unwrap();
        assert_eq!(d.vertices.len(), 1);
        assert_eq!(d.vertices[0].sites.len(), 4);
        assert_eq!(d.stats.pre_clip_edges, 4);
        for c in &d.cells {
            assert_eq!(c.polygon.len(), 4, "{c:?}");
        }
    }

    #[test]
    fn diamond_with_site_on_circle_bottom() {
        let b = bbox(-5.0, -5.0, 5.0, 5.0);
        let sites = [
            Site::new(0, 0.0, 1.0),
            Site::new(1, -1.0, 0.0),
            Site::new(2, 1.0, 0.0),
            Site::new(3, 0.0, -1.0),
        ];
        let d = build_voronoi(&sites, b).unwrap();
        assert_eq!(d.vertices.len(), 1);
        assert_eq!(d.stats.pre_clip_edges, 4);
    }

    #[test]
    fn collinear_sites_give_parallel_edges() {
        let b = bbox(-10.0, -10.0, 10.0, 10.0);
        let diag: Vec<Site> = (0..5)
            .map(|i| Site::new(i, i as f64 - 2.0, i as f64 - 2.0))
            .collect();
        let d = build_voronoi(&diag, b).unwrap();
        assert!(d.vertices.is_empty());
        assert_eq!(d.stats.pre_clip_edges, 4);
        let row: Vec<Site> = (0..5)
            .map(|i| Site::new(i, 2.0 * i as f64 - 4.0, 1.0))
            .collect();
        let d = build_voronoi(&row, b).unwrap();
        assert_eq!(d.edges.len(), 4);
        for e in &d.edges {
            assert!((e.segment.a.x - e.segment.b.x).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_errors() {
        let b = bbox(0.0, 0.0, 1.0, 1.0);
        assert_eq!(build_voronoi(&[], b), Err(VoronoiError::EmptySiteSet));
        assert_eq!(
            build_voronoi(&[Site::new(3, 1.0, 0.5)], b),
            Err(VoronoiError::SiteOutsideBox(3))
        );
        assert_eq!(
            build_voronoi(&[Site::new(3, 0.5, 0.5), Site::new(1, 0.5, 0.5)], b),
            Err(VoronoiError::DuplicateSite(1, 3))
        );
        assert_eq!(
            build_voronoi(&[Site::new(3, 0.5, 0.5), Site::new(3, 0.2, 0.5)], b),
            Err(VoronoiError::DuplicateId(3))
        );
        let d = build_voronoi(&[Site::new(0, 0.5, 0.5)], b).unwrap();
        assert!(matches!(
            d.locate_cell(Point::new(2.0, 0.0)),
            Err(VoronoiError::PointOutsideBox(..))
        ));
    }

    #[test]
    fn regular_polygon_and_grid_match_oracle() {
        let b = bbox(-2.0, -2.0, 2.0, 2.0);
        for k in [3usize, 5, 6, 8, 12, 17] {
            let sites: Vec<Site> = (0..k)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / k as f64;
                    Site::new(i as u32, a.cos(), a.sin())
                })
                .collect();
            let d = build_voronoi(&sites, b).unwrap();
            assert_eq!(d.vertices.len(), 1, "k={k}");
            check_oracle(&d, 40);
        }
        let grid: Vec<Site> = (0..25)
            .map(|i| Site::new(i, (i % 5) as f64 * 0.5 - 1.0, (i / 5) as f64 * 0.5 - 1.0))
            .collect();
        let d = build_voronoi(&grid, b).unwrap();
        assert_eq!(d.vertices.len(), 16);
        check_oracle(&d, 60);
    }

    fn check_oracle(d: &VoronoiDiagram, steps: usize) {
        let b = d.clip_box;
        let total: f64 = d.cells.iter().map(|c| polygon_area(&c.polygon)).sum();
        assert!((total - b.area()).abs() < 1e-9 * b.area());
        for c in &d.cells {
            assert!(is_convex_ccw(&c.polygon, 1e-9));
        }
        for i in 0..=steps {
            for j in 0..=steps {
                let q = Point::new(
                    b.min.x + b.width() * (i as f64 + 0.37) / (steps as f64 + 1.0),
                    b.min.y + b.height() * (j as f64 + 0.61) / (steps as f64 + 1.0),
                );
                let want = nearest_site_bruteforce(&d.sites, q).unwrap();
                let got = d.locate_cell(q).unwrap();
                if got != want {
                    let dg = d.site(got).unwrap().position.dist(q);
                    let dw = d.site(want).unwrap().position.dist(q);
                    assert!((dg - dw).abs() < 1e-6, "q={q:?} got {got} want {want}");
                }
            }
        }
    }

    #[test]
    fn breakpoint_matches_equal_distance() {
        let p = Point::new(0.0, 3.0);
        let q = Point::new(4.0, 1.0);
        let ly = -2.0;
        let x = breakpoint_x(p, q, ly);
        let y = parabola_y(p, x, ly);
        assert!((parabola_y(q, x, ly) - y).abs() < 1e-9);
        // left of the breakpoint the left arc is lower
        assert!(parabola_y(p, x - 0.1, ly) < parabola_y(q, x - 0.1, ly));
        let x2 = breakpoint_x(q, p, ly);
        assert!(x2 > x);
        assert!((parabola_y(q, x2, ly) - parabola_y(p, x2, ly)).abs() < 1e-9);
    }
}
