//! Point clouds, cloud-quality metrics and the ε-ball graph.
//!
//! Interior points come from a lattice clipped to the domain and perturbed by
//! a seeded SplitMix64 stream; boundary points are the barycenters of the
//! boundary segments. Points are ordered interior first, boundary second, and
//! boundary point `n_interior + s` belongs to segment `s`.

use std::collections::VecDeque;
use std::io::Write;

use rand_core::RngCore;
use rand_xoshiro::SplitMix64;

use crate::error::{MmdError, Result};
use crate::geometry::{BoundarySegment, Domain, Point};

/// Name of the generator recorded in output metadata.
pub const RNG_NAME: &str = "splitmix64";

/// Distance below which a perturbed point counts as lying on the boundary.
const BOUNDARY_TOL: f64 = 1e-12;
const MAX_REDRAWS: usize = 100;

/// How interior lattice points are jittered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PerturbationMode {
    /// Each coordinate shifted by an independent Uniform(−p·h, p·h) draw.
    #[default]
    Componentwise,
    /// Uniform direction, radius Uniform(0, p·h).
    Radial,
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
pub fn unit_f64(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub n_interior: usize,
    pub segments: Vec<BoundarySegment>,
    pub h_target: f64,
    pub fill_distance: f64,
    pub separation: f64,
    pub seed: u64,
}

impl PointCloud {
    /// Assembles a cloud from explicit points. Boundary point `k` must be the
    /// barycenter of `segments[k]`.
    pub fn from_parts(
        interior: Vec<Point>,
        segments: Vec<BoundarySegment>,
        h_target: f64,
        seed: u64,
        domain: &Domain,
    ) -> Result<Self> {
        let n_interior = interior.len();
        let mut points = interior;
        points.extend(segments.iter().map(|s| s.centroid));
        if points.is_empty() {
            return Err(MmdError::Config("point cloud is empty".into()));
        }
        let mut cloud = Self {
            points,
            n_interior,
            segments,
            h_target,
            fill_distance: 0.0,
            separation: 0.0,
            seed,
        };
        cloud.separation = separation_distance(&cloud.points);
        cloud.fill_distance = fill_distance(&cloud, domain);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_boundary(&self) -> usize {
        self.segments.len()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i >= self.n_interior
    }

    /// Boundary segment owned by point `i`, if it is a boundary point.
    pub fn segment_of(&self, i: usize) -> Option<&BoundarySegment> {
        i.checked_sub(self.n_interior).map(|s| &self.segments[s])
    }

    pub fn quasi_uniformity(&self) -> f64 {
        self.fill_distance / self.separation
    }

    /// Writes `id,x,y,kind,segment_id`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "id,x,y,kind,segment_id")?;
        for (i, p) in self.points.iter().enumerate() {
            match self.segment_of(i) {
                Some(s) => writeln!(out, "{i},{:.17e},{:.17e},boundary,{}", p.x, p.y, s.index)?,
                None => writeln!(out, "{i},{:.17e},{:.17e},interior,", p.x, p.y)?,
            }
        }
        Ok(())
    }
}

/// Lattice of spacing `h` clipped to the domain, perturbed, plus one point per
/// boundary segment.
pub fn generate_cloud(
    domain: &Domain,
    segments: &[BoundarySegment],
    h: f64,
    perturbation_fraction: f64,
    mode: PerturbationMode,
    seed: u64,
) -> Result<PointCloud> {
    if !(h > 0.0) {
        return Err(MmdError::Config(format!(
            "lattice spacing must be positive, got {h}"
        )));
    }
    if !(0.0..0.5).contains(&perturbation_fraction) {
        return Err(MmdError::Config(format!(
            "perturbation fraction must lie in [0, 0.5), got {perturbation_fraction}"
        )));
    }
    let (lo, hi) = domain.bounding_box();
    let nx = ((hi.x - lo.x) / h).round() as i64;
    let ny = ((hi.y - lo.y) / h).round() as i64;
    let mut rng = SplitMix64::from_seed_u64(seed);
    let amp = perturbation_fraction * h;
    let mut interior = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let base = Point::new(lo.x + i as f64 * h, lo.y + j as f64 * h);
            if !domain.contains_strict(base, BOUNDARY_TOL) {
                continue;
            }
            if amp == 0.0 {
                interior.push(base);
                continue;
            }
            let mut placed = base;
            for _ in 0..MAX_REDRAWS {
                let delta = match mode {
                    PerturbationMode::Componentwise => {
                        let dx = (2.0 * unit_f64(&mut rng) - 1.0) * amp;
                        let dy = (2.0 * unit_f64(&mut rng) - 1.0) * amp;
                        Point::new(dx, dy)
                    }
                    PerturbationMode::Radial => {
                        let t = 2.0 * std::f64::consts::PI * unit_f64(&mut rng);
                        let r = amp * unit_f64(&mut rng);
                        Point::new(r * t.cos(), r * t.sin())
                    }
                };
                let candidate = base + delta;
                if domain.contains_strict(candidate, BOUNDARY_TOL) {
                    placed = candidate;
                    break;
                }
            }
            interior.push(placed);
        }
    }
    if interior.is_empty() {
        return Err(MmdError::Config(format!(
            "no lattice point of spacing {h} lies inside the domain"
        )));
    }
    PointCloud::from_parts(interior, segments.to_vec(), h, seed, domain)
}

trait FromSeedU64 {
    fn from_seed_u64(seed: u64) -> Self;
}

impl FromSeedU64 for SplitMix64 {
    fn from_seed_u64(seed: u64) -> Self {
        use rand_core::SeedableRng;
        SplitMix64::seed_from_u64(seed)
    }
}

/// Uniform bins for fixed-radius and nearest-point queries.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(points: &[Point], cell: f64) -> Self {
        assert!(cell > 0.0, "bin size must be positive");
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Point::default();
            hi = Point::default();
        }
        // cap the bin count for very small radii
        let span = (hi.x - lo.x).max(hi.y - lo.y);
        let cell = cell.max(span / 4096.0);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut counts = vec![0usize; nx * ny + 1];
        let bin = |p: &Point| {
            let ix = (((p.x - lo.x) / cell).floor() as usize).min(nx - 1);
            let iy = (((p.y - lo.y) / cell).floor() as usize).min(ny - 1);
            iy * nx + ix
        };
        for p in points {
            counts[bin(p) + 1] += 1;
        }
        for k in 0..nx * ny {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let b = bin(p);
            items[fill[b]] = i;
            fill[b] += 1;
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            starts: counts,
            items,
        }
    }

    fn coords(&self, p: Point) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.y - self.origin.y) / self.cell).floor() as i64,
        )
    }

    fn bin_items(&self, ix: i64, iy: i64) -> &[usize] {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return &[];
        }
        let b = iy as usize * self.nx + ix as usize;
        &self.items[self.starts[b]..self.starts[b + 1]]
    }

    /// Calls `f(j)` for every stored point within the bins overlapping the
    /// disk of radius `r` around `p`; callers filter by exact distance.
    pub fn for_each_candidate(&self, p: Point, r: f64, mut f: impl FnMut(usize)) {
        let reach = (r / self.cell).ceil() as i64;
        let (cx, cy) = self.coords(p);
        for iy in cy - reach..=cy + reach {
            for ix in cx - reach..=cx + reach {
                for &j in self.bin_items(ix, iy) {
                    f(j);
                }
            }
        }
    }

    /// Nearest stored point to `p` (excluding index `skip`), with distance.
    pub fn nearest(&self, points: &[Point], p: Point, skip: Option<usize>) -> Option<(usize, f64)> {
        let (cx, cy) = self.coords(p);
        let mut best: Option<(usize, f64)> = None;
        let max_ring = self.nx.max(self.ny) as i64 + 1 + cx.abs().max(cy.abs());
        for ring in 0..=max_ring {
            for iy in cy - ring..=cy + ring {
                for ix in cx - ring..=cx + ring {
                    if (iy - cy).abs() != ring && (ix - cx).abs() != ring {
                        continue;
                    }
                    for &j in self.bin_items(ix, iy) {
                        if Some(j) == skip {
                            continue;
                        }
                        let d = p.dist(points[j]);
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((j, d));
                        }
                    }
                }
            }
            // every unvisited bin is at least `ring * cell` away
            if let Some((_, bd)) = best {
                if bd <= ring as f64 * self.cell {
                    break;
                }
            }
        }
        best
    }
}

/// Half the minimum pairwise distance.
pub fn separation_distance(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return f64::INFINITY;
    }
    let (lo, hi) = points.iter().fold(
        (
            Point::new(f64::INFINITY, f64::INFINITY),
            Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        ),
        |(lo, hi), p| {
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y)),
            )
        },
    );
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
    let cell = span / (points.len() as f64).sqrt().max(1.0);
    let grid = SpatialGrid::new(points, cell);
    let min = points
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| grid.nearest(points, p, Some(i)).map(|(_, d)| d))
        .fold(f64::INFINITY, f64::min);
    0.5 * min
}

/// Estimate of sup over the domain of the distance to the nearest cloud
/// point, sampled on a lattice four times finer than the target spacing
/// (boundary included). This is a lower bound converging to the true fill
/// distance as the sampling lattice is refined.
pub fn fill_distance(cloud: &PointCloud, domain: &Domain) -> f64 {
    let step = cloud.h_target / 4.0;
    let (lo, hi) = domain.bounding_box();
    let nx = ((hi.x - lo.x) / step).ceil() as usize;
    let ny = ((hi.y - lo.y) / step).ceil() as usize;
    let grid = SpatialGrid::new(&cloud.points, cloud.h_target);
    let mut worst: f64 = 0.0;
    for j in 0..=ny {
        for i in 0..=nx {
            let p = Point::new(
                (lo.x + i as f64 * step).min(hi.x),
                (lo.y + j as f64 * step).min(hi.y),
            );
            if !(domain.contains_strict(p, 0.0) || domain.boundary_distance(p) <= 1e-12) {
                continue;
            }
            if let Some((_, d)) = grid.nearest(&cloud.points, p, None) {
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// ε-ball graph of the cloud: the virtual primal mesh.
#[derive(Clone, Debug)]
pub struct CloudGraph {
    pub radius: f64,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    pub adjacency: Vec<Vec<usize>>,
    /// `adjacent_edges[i][k]` is the edge id joining `i` and `adjacency[i][k]`.
    pub adjacent_edges: Vec<Vec<usize>>,
}

impl CloudGraph {
    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    /// Orientation of edge `e` seen from vertex `i`: +1 if `i` is the first
    /// endpoint, −1 otherwise.
    pub fn orientation(&self, e: usize, i: usize) -> f64 {
        if self.edges[e].0 == i {
            1.0
        } else {
            -1.0
        }
    }

    pub fn components(&self) -> usize {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }
}

/// Builds the graph with edges `|x_i − x_j| < radius` by uniform binning with
/// bin size `radius`, and verifies connectivity.
pub fn build_graph(points: &[Point], radius: f64) -> Result<CloudGraph> {
    if !(radius > 0.0) {
        return Err(MmdError::Config(format!(
            "graph radius must be positive, got {radius}"
        )));
    }
    let grid = SpatialGrid::new(points, radius);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (i, &p) in points.iter().enumerate() {
        let nbrs = &mut adjacency[i];
        grid.for_each_candidate(p, radius, |j| {
            if j != i && p.dist(points[j]) < radius {
                nbrs.push(j);
            }
        });
        nbrs.sort_unstable();
    }
    graph_from_adjacency(adjacency, radius)
}

/// O(p²) reference construction.
pub fn build_graph_brute_force(points: &[Point], radius: f64) -> Result<CloudGraph> {
    let n = points.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && points[i].dist(points[j]) < radius {
                adjacency[i].push(j);
            }
        }
    }
    graph_from_adjacency(adjacency, radius)
}

/// Graph with explicitly given undirected edges; `radius` is informational.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)], radius: f64) -> Result<CloudGraph> {
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in edges {
        if i == j || i >= n || j >= n {
            return Err(MmdError::Internal(format!("invalid edge ({i}, {j})")));
        }
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    for a in &mut adjacency {
        a.sort_unstable();
        a.dedup();
    }
    graph_from_adjacency(adjacency, radius)
}

fn graph_from_adjacency(adjacency: Vec<Vec<usize>>, radius: f64) -> Result<CloudGraph> {
    let mut edges = Vec::new();
    for (i, nbrs) in adjacency.iter().enumerate() {
        for &j in nbrs {
            if i < j {
                edges.push((i, j));
            }
        }
    }
    let mut adjacent_edges: Vec<Vec<usize>> = adjacency
        .iter()
        .map(|n| Vec::with_capacity(n.len()))
        .collect();
    // edges are generated in (i, j) lexicographic order already
    for (e, &(i, j)) in edges.iter().enumerate() {
        let k = adjacency[i].binary_search(&j).expect("symmetric adjacency");
        let l = adjacency[j].binary_search(&i).map_err(|_| {
            MmdError::Internal(format!("adjacency is not symmetric between {i} and {j}"))
        })?;
        if adjacent_edges[i].len() <= k {
            adjacent_edges[i].resize(adjacency[i].len(), usize::MAX);
        }
        if adjacent_edges[j].len() <= l {
            adjacent_edges[j].resize(adjacency[j].len(), usize::MAX);
        }
        adjacent_edges[i][k] = e;
        adjacent_edges[j][l] = e;
    }
    for (i, v) in adjacent_edges.iter_mut().enumerate() {
        v.resize(adjacency[i].len(), usize::MAX);
    }
    let graph = CloudGraph {
        radius,
        edges,
        adjacency,
        adjacent_edges,
    };
    let components = graph.components();
    if components != 1 {
        return Err(MmdError::Disconnected { radius, components });
    }
    Ok(graph)
}
