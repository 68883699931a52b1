//! Computational domains, boundary segmentation and coefficient fields.
//!
//! Domains are planar polygons: an outer counterclockwise loop plus any number
//! of clockwise holes. Curved boundaries (the unit disk) are replaced by an
//! inscribed regular polygon so that the divergence theorem holds exactly for
//! the polygonal boundary that the discretization actually sees.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{MmdError, Result};

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn component(self, k: usize) -> f64 {
        match k {
            0 => self.x,
            1 => self.y,
            _ => panic!("component index {k} out of range for a planar point"),
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, rhs: Point) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis-aligned square hole cut out of the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareHole {
    pub center: Point,
    pub side: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    UnitSquare,
    /// Regular polygon inscribed in the unit circle centered at the origin.
    UnitDisk {
        edges: usize,
    },
    PerforatedSquare {
        holes: Vec<SquareHole>,
    },
}

/// A polygonal domain. `loops[0]` is the outer boundary (counterclockwise),
/// the remaining loops are holes (clockwise). Loops are stored open: the last
/// vertex connects back to the first.
#[derive(Clone, Debug)]
pub struct Domain {
    pub kind: DomainKind,
    pub loops: Vec<Vec<Point>>,
    pub measure: f64,
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient =
        |p: Point, q: Point, r: Point| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

impl Domain {
    pub fn unit_square() -> Self {
        let outer = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        Self::from_loops(DomainKind::UnitSquare, vec![outer]).expect("unit square is valid")
    }

    /// Unit disk approximated by a regular polygon with `edges` vertices on the
    /// unit circle. The measure is the polygon area.
    pub fn unit_disk(edges: usize) -> Result<Self> {
        if edges < 3 {
            return Err(MmdError::Config(format!(
                "a polygonal disk needs at least 3 edges, got {edges}"
            )));
        }
        let outer = (0..edges)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / edges as f64;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        Self::from_loops(DomainKind::UnitDisk { edges }, vec![outer])
    }

    /// Unit disk with as many edges as possible while every chord stays at
    /// least `h` long, so the boundary can be segmented at spacing `h`.
    pub fn unit_disk_for_spacing(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 2.0) {
            return Err(MmdError::Config(format!(
                "spacing must lie in (0, 2), got {h}"
            )));
        }
        let edges = (PI / (0.5 * h).asin()).floor() as usize;
        Self::unit_disk(edges.max(3))
    }

    /// Unit square minus two square holes of side 0.2 centered at (0.3, 0.3)
    /// and (0.7, 0.7).
    pub fn perforated_square() -> Self {
        Self::perforated_square_with(vec![
            SquareHole {
                center: Point::new(0.3, 0.3),
                side: 0.2,
            },
            SquareHole {
                center: Point::new(0.7, 0.7),
                side: 0.2,
            },
        ])
        .expect("default perforated square is valid")
    }

    pub fn perforated_square_with(holes: Vec<SquareHole>) -> Result<Self> {
        let mut loops = vec![vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]];
        for h in &holes {
            let r = 0.5 * h.side;
            let (cx, cy) = (h.center.x, h.center.y);
            if h.side <= 0.0 || cx - r <= 0.0 || cy - r <= 0.0 || cx + r >= 1.0 || cy + r >= 1.0 {
                return Err(MmdError::Config(format!(
                    "hole centered at {} with side {} does not fit strictly inside the unit square",
                    h.center, h.side
                )));
            }
            // clockwise
            loops.push(vec![
                Point::new(cx - r, cy - r),
                Point::new(cx - r, cy + r),
                Point::new(cx + r, cy + r),
                Point::new(cx + r, cy - r),
            ]);
        }
        Self::from_loops(DomainKind::PerforatedSquare { holes }, loops)
    }

    fn from_loops(kind: DomainKind, loops: Vec<Vec<Point>>) -> Result<Self> {
        if loops.is_empty() || loops.iter().any(|l| l.len() < 3) {
            return Err(MmdError::Config(
                "every boundary loop needs at least 3 vertices".into(),
            ));
        }
        let outer = signed_area(&loops[0]);
        if outer <= 0.0 {
            return Err(MmdError::Config(
                "outer boundary loop must be counterclockwise".into(),
            ));
        }
        let mut measure = outer;
        for hole in &loops[1..] {
            let a = signed_area(hole);
            if a >= 0.0 {
                return Err(MmdError::Config("hole loops must be clockwise".into()));
            }
            measure += a;
        }
        let domain = Self {
            kind,
            loops,
            measure,
        };
        if !domain.is_simple() {
            return Err(MmdError::Config("boundary polyline self-intersects".into()));
        }
        if measure <= 0.0 {
            return Err(MmdError::Config("domain has non-positive measure".into()));
        }
        Ok(domain)
    }

    /// All boundary edges as (start, end) pairs.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.loops
            .iter()
            .flat_map(|l| (0..l.len()).map(move |i| (l[i], l[(i + 1) % l.len()])))
    }

    fn is_simple(&self) -> bool {
        let edges: Vec<_> = self.edges().collect();
        for i in 0..edges.len() {
            for j in i + 1..edges.len() {
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.loops.iter().flatten() {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let pts: Vec<_> = self.loops.iter().flatten().copied().collect();
        let mut d: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max(pts[i].dist(pts[j]));
            }
        }
        d
    }

    /// Distance from `p` to the boundary polyline.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Strict interior test: points within `tol` of the boundary count as
    /// outside.
    pub fn contains_strict(&self, p: Point, tol: f64) -> bool {
        if self.boundary_distance(p) <= tol {
            return false;
        }
        // even-odd ray casting over all loops
        let mut inside = false;
        for l in &self.loops {
            let n = l.len();
            for i in 0..n {
                let a = l[i];
                let b = l[(i + 1) % n];
                if (a.y > p.y) != (b.y > p.y) {
                    let xc = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                    if p.x < xc {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Index of the loop that contains edge number `edge` in `edges()` order.
    fn loop_of_edge(&self) -> Vec<usize> {
        self.loops
            .iter()
            .enumerate()
            .flat_map(|(li, l)| std::iter::repeat(li).take(l.len()))
            .collect()
    }
}

/// Boundary-condition role of a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BcTag {
    /// Value prescribed (the γ′ part of the boundary).
    Dirichlet,
    /// Normal flux prescribed (the γ part of the boundary).
    Neumann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySegment {
    pub index: usize,
    pub endpoints: (Point, Point),
    pub centroid: Point,
    pub normal: Point,
    pub measure: f64,
    pub bc_tag: Option<BcTag>,
    /// Boundary loop this segment belongs to (0 = outer boundary).
    pub loop_index: usize,
}

impl BoundarySegment {
    pub fn tag(&self) -> BcTag {
        self.bc_tag.expect("boundary segment has not been tagged")
    }
}

/// Splits every polygon edge into `round(len / h_target)` equal segments.
pub fn segment_boundary(domain: &Domain, h_target: f64) -> Result<Vec<BoundarySegment>> {
    if !(h_target > 0.0) {
        return Err(MmdError::Config(format!(
            "segment length must be positive, got {h_target}"
        )));
    }
    let shortest = domain
        .edges()
        .map(|(a, b)| a.dist(b))
        .fold(f64::INFINITY, f64::min);
    if h_target > shortest * (1.0 + 1e-9) {
        return Err(MmdError::Config(format!(
            "segment length {h_target} exceeds the shortest boundary edge {shortest}"
        )));
    }
    let loop_of_edge = domain.loop_of_edge();
    let mut segments = Vec::new();
    for ((a, b), loop_index) in domain.edges().zip(loop_of_edge) {
        let len = a.dist(b);
        let n = ((len / h_target).round() as usize).max(1);
        let dir = (b - a) * (1.0 / len);
        let normal = Point::new(dir.y, -dir.x);
        for k in 0..n {
            let p = a + (b - a) * (k as f64 / n as f64);
            let q = if k + 1 == n {
                b
            } else {
                a + (b - a) * ((k + 1) as f64 / n as f64)
            };
            segments.push(BoundarySegment {
                index: segments.len(),
                endpoints: (p, q),
                centroid: p.midpoint(q),
                normal,
                measure: p.dist(q),
                bc_tag: None,
                loop_index,
            });
        }
    }
    Ok(segments)
}

/// Named parts of the boundary used by boundary-condition specifications.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryPart {
    All,
    /// Outer loop only.
    Outer,
    /// Hole loops only.
    Holes,
    /// Sides of an axis-aligned outer box, identified by outward normal.
    Left,
    Right,
    Bottom,
    Top,
}

impl BoundaryPart {
    fn matches(self, seg: &BoundarySegment) -> bool {
        let n = seg.normal;
        let outer = seg.loop_index == 0;
        match self {
            BoundaryPart::All => true,
            BoundaryPart::Outer => outer,
            BoundaryPart::Holes => !outer,
            BoundaryPart::Left => outer && n.x < -0.5,
            BoundaryPart::Right => outer && n.x > 0.5,
            BoundaryPart::Bottom => outer && n.y < -0.5,
            BoundaryPart::Top => outer && n.y > 0.5,
        }
    }
}

/// A boundary-condition specification: every segment must be matched by
/// exactly one rule.
#[derive(Clone, Debug, Default)]
pub struct BcSpec {
    pub rules: Vec<(BoundaryPart, BcTag)>,
}

impl BcSpec {
    pub fn uniform(tag: BcTag) -> Self {
        Self {
            rules: vec![(BoundaryPart::All, tag)],
        }
    }

    pub fn with(mut self, part: BoundaryPart, tag: BcTag) -> Self {
        self.rules.push((part, tag));
        self
    }
}

pub fn tag_boundary(segments: &mut [BoundarySegment], spec: &BcSpec) -> Result<()> {
    for seg in segments.iter_mut() {
        let mut hits = spec.rules.iter().filter(|(part, _)| part.matches(seg));
        let first = hits.next();
        let second = hits.next();
        match (first, second) {
            (Some(&(_, tag)), None) => seg.bc_tag = Some(tag),
            (None, _) => {
                return Err(MmdError::Config(format!(
                    "boundary segment {} at {} is not tagged by any rule",
                    seg.index, seg.centroid
                )))
            }
            (Some(_), Some(_)) => {
                return Err(MmdError::Config(format!(
                    "boundary segment {} at {} is tagged by more than one rule",
                    seg.index, seg.centroid
                )))
            }
        }
    }
    Ok(())
}

pub type RegionPredicate = Arc<dyn Fn(Point) -> bool + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Piecewise-constant diffusivity plus a velocity field.
#[derive(Clone)]
pub struct CoefficientField {
    pub pieces: Vec<(RegionPredicate, f64)>,
    pub velocity: VectorFn,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let values: Vec<f64> = self.pieces.iter().map(|(_, v)| *v).collect();
        f.debug_struct("CoefficientField")
            .field("piece_values", &values)
            .finish()
    }
}

impl CoefficientField {
    pub fn constant(eps: f64, velocity: Point) -> Self {
        Self {
            pieces: vec![(Arc::new(|_| true), eps)],
            velocity: Arc::new(move |_| velocity),
        }
    }

    pub fn new(pieces: Vec<(RegionPredicate, f64)>, velocity: VectorFn) -> Result<Self> {
        if pieces.is_empty() {
            return Err(MmdError::Config(
                "coefficient field needs at least one piece".into(),
            ));
        }
        if let Some((_, v)) = pieces.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(MmdError::Config(format!(
                "diffusivity must be positive, got {v}"
            )));
        }
        Ok(Self { pieces, velocity })
    }

    /// Diffusivity at `p`; errors unless exactly one piece claims the point.
    pub fn diffusivity(&self, p: Point) -> Result<f64> {
        let mut found = None;
        for (pred, v) in &self.pieces {
            if pred(p) {
                if found.is_some() {
                    return Err(MmdError::Config(format!(
                        "coefficient regions overlap at {p}"
                    )));
                }
                found = Some(*v);
            }
        }
        found.ok_or_else(|| MmdError::Config(format!("no coefficient region contains {p}")))
    }

    pub fn velocity_at(&self, p: Point) -> Point {
        (self.velocity)(p)
    }
}
