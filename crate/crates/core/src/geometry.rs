//! Surfaces, equal-area patch partitions, bubble placement and inverse-distance sums.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::tangent_frame;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    /// Closed sphere centred at the origin.
    Sphere,
    /// Flat disk in the plane `z = 0`, centred at the origin, normal `+e3`.
    Disk,
}

impl std::str::FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(SurfaceKind::Sphere),
            "disk" => Ok(SurfaceKind::Disk),
            other => Err(Error::Config(format!("unsupported surface kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceDescriptor {
    pub kind: SurfaceKind,
    pub radius: f64,
    pub total_area: f64,
}

pub fn build_surface(kind: SurfaceKind, target_area: f64) -> Result<SurfaceDescriptor> {
    if !(target_area.is_finite() && target_area > 0.0) {
        return Err(Error::Config(format!(
            "surface area must be positive, got {target_area}"
        )));
    }
    let radius = match kind {
        SurfaceKind::Sphere => (target_area / (4.0 * PI)).sqrt(),
        SurfaceKind::Disk => (target_area / PI).sqrt(),
    };
    Ok(SurfaceDescriptor {
        kind,
        radius,
        total_area: target_area,
    })
}

impl SurfaceDescriptor {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Unit normal at a point of the surface (outward for the sphere).
    pub fn normal_at(&self, p: &Vec3) -> Vec3 {
        match self.kind {
            SurfaceKind::Sphere => p.normalize(),
            SurfaceKind::Disk => Vec3::z(),
        }
    }

    /// Euclidean distance from `x` to the surface.
    pub fn distance_to(&self, x: &Vec3) -> f64 {
        match self.kind {
            SurfaceKind::Sphere => (x.norm() - self.radius).abs(),
            SurfaceKind::Disk => {
                let rho = x.x.hypot(x.y);
                if rho <= self.radius {
                    x.z.abs()
                } else {
                    (rho - self.radius).hypot(x.z)
                }
            }
        }
    }
}

/// A patch in parametric form. `(u, v) ∈ [0,1]²` are area-preserving coordinates:
/// equal steps in `u` or `v` sweep equal areas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CellShape {
    Sector {
        r_in: f64,
        r_out: f64,
        phi0: f64,
        phi1: f64,
    },
    SphereCell {
        radius: f64,
        theta0: f64,
        theta1: f64,
        phi0: f64,
        phi1: f64,
    },
}

impl CellShape {
    pub fn area(&self) -> f64 {
        match *self {
            CellShape::Sector {
                r_in,
                r_out,
                phi0,
                phi1,
            } => 0.5 * (phi1 - phi0) * (r_out * r_out - r_in * r_in),
            CellShape::SphereCell {
                radius,
                theta0,
                theta1,
                phi0,
                phi1,
            } => radius * radius * (phi1 - phi0) * (theta0.cos() - theta1.cos()),
        }
    }

    pub fn point_at(&self, u: f64, v: f64) -> Vec3 {
        match *self {
            CellShape::Sector {
                r_in,
                r_out,
                phi0,
                phi1,
            } => {
                let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
                let phi = phi0 + v * (phi1 - phi0);
                Vec3::new(r * phi.cos(), r * phi.sin(), 0.0)
            }
            CellShape::SphereCell {
                radius,
                theta0,
                theta1,
                phi0,
                phi1,
            } => {
                let cos_t = theta0.cos() - u * (theta0.cos() - theta1.cos());
                let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                let phi = phi0 + v * (phi1 - phi0);
                Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t) * radius
            }
        }
    }

    fn is_full_turn(&self) -> bool {
        let (phi0, phi1) = match *self {
            CellShape::Sector { phi0, phi1, .. } | CellShape::SphereCell { phi0, phi1, .. } => (phi0, phi1),
        };
        phi1 - phi0 >= 2.0 * PI - 1e-12
    }

    /// Area centroid of the cell, projected back to the surface.
    pub fn projected_centroid(&self) -> Vec3 {
        match *self {
            CellShape::Sector {
                r_in,
                r_out,
                phi0,
                phi1,
            } => {
                if self.is_full_turn() {
                    return Vec3::zeros();
                }
                let radial = (r_out.powi(3) - r_in.powi(3)) / 3.0;
                let area = self.area();
                Vec3::new(
                    radial * (phi1.sin() - phi0.sin()) / area,
                    radial * (phi0.cos() - phi1.cos()) / area,
                    0.0,
                )
            }
            CellShape::SphereCell {
                radius,
                theta0,
                theta1,
                phi0,
                phi1,
            } => {
                let sin2 = |t: f64| 0.5 * t - 0.25 * (2.0 * t).sin();
                let polar = sin2(theta1) - sin2(theta0);
                let mixed = 0.5 * (theta1.sin().powi(2) - theta0.sin().powi(2));
                let mean = Vec3::new(
                    polar * (phi1.sin() - phi0.sin()),
                    polar * (phi0.cos() - phi1.cos()),
                    mixed * (phi1 - phi0),
                );
                if mean.norm() < 1e-14 {
                    self.point_at(0.5, 0.5)
                } else {
                    mean.normalize() * radius
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Patch {
    pub center: Vec3,
    pub area: f64,
    pub normal: Vec3,
    pub frame: [Vec3; 2],
    pub cell: CellShape,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Patchwork {
    pub surface: SurfaceDescriptor,
    pub patches: Vec<Patch>,
    /// Nominal spacing; patch areas are `total_area / M ≈ d²`.
    pub d: f64,
}

impl Patchwork {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.patches.iter().map(|p| p.area).sum()
    }
}

/// Splits the surface into `M = round(area / d²)` patches of exactly equal area.
///
/// Both surfaces use the same polar scheme: one cap around the pole (two on the
/// sphere) followed by rings/collars whose widths track `d`, each ring cut into
/// equal sectors. Ring boundaries are placed from cumulative cell counts so every
/// patch carries `area / M`.
pub fn partition(surface: &SurfaceDescriptor, d: f64) -> Result<Patchwork> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Resolution(format!("spacing must be positive, got {d}")));
    }
    if d >= surface.diameter() {
        return Err(Error::Resolution(format!(
            "spacing {d} is not below the surface diameter {}",
            surface.diameter()
        )));
    }
    let m = (surface.total_area / (d * d)).round() as usize;
    if m < 4 {
        return Err(Error::Resolution(format!(
            "spacing {d} yields only {m} patches (need at least 4)"
        )));
    }
    let cells = match surface.kind {
        SurfaceKind::Disk => disk_cells(surface.radius, m),
        SurfaceKind::Sphere => sphere_cells(surface.radius, m),
    };
    let patches = cells
        .into_iter()
        .map(|cell| {
            let center = cell.projected_centroid();
            let normal = surface.normal_at(&if center.norm() > 0.0 { center } else { Vec3::z() });
            let (e1, e2) = tangent_frame(&normal);
            Patch {
                center,
                area: cell.area(),
                normal,
                frame: [e1, e2],
                cell,
            }
        })
        .collect();
    Ok(Patchwork {
        surface: *surface,
        patches,
        d,
    })
}

/// Distributes `total` cells over bands with ideal (fractional) sizes, rounding the
/// running sum so the total is exact and every band keeps at least one cell.
fn round_band_counts(ideal: &[f64], total: usize) -> Vec<usize> {
    let mut counts = Vec::with_capacity(ideal.len());
    let mut cumulative = 0.0;
    let mut assigned = 0usize;
    for (i, &x) in ideal.iter().enumerate() {
        cumulative += x;
        let remaining_bands = ideal.len() - i - 1;
        let target = if remaining_bands == 0 {
            total
        } else {
            (cumulative.round() as usize).min(total - remaining_bands)
        };
        let count = target.saturating_sub(assigned).max(1);
        counts.push(count);
        assigned += count;
    }
    counts
}

fn ring_sectors(count: usize, band: usize) -> impl Iterator<Item = (f64, f64)> {
    let width = 2.0 * PI / count as f64;
    let offset = if band % 2 == 1 { 0.5 * width } else { 0.0 };
    (0..count).map(move |j| (offset + j as f64 * width, offset + (j + 1) as f64 * width))
}

fn disk_cells(radius: f64, m: usize) -> Vec<CellShape> {
    let area = PI * radius * radius;
    let cell_area = area / m as f64;
    let cap_radius = (cell_area / PI).sqrt();
    let mut cells = vec![CellShape::Sector {
        r_in: 0.0,
        r_out: cap_radius,
        phi0: 0.0,
        phi1: 2.0 * PI,
    }];
    let rings = (((radius - cap_radius) / cell_area.sqrt()).round() as usize)
        .max(1)
        .min(m - 1);
    let ideal: Vec<f64> = (0..rings)
        .map(|k| {
            let r0 = cap_radius + (radius - cap_radius) * k as f64 / rings as f64;
            let r1 = cap_radius + (radius - cap_radius) * (k + 1) as f64 / rings as f64;
            PI * (r1 * r1 - r0 * r0) / cell_area
        })
        .collect();
    let counts = round_band_counts(&ideal, m - 1);
    let mut below = 1usize;
    let mut r_in = cap_radius;
    for (k, &count) in counts.iter().enumerate() {
        below += count;
        let r_out = if below == m {
            radius
        } else {
            (below as f64 * cell_area / PI).sqrt()
        };
        for (phi0, phi1) in ring_sectors(count, k) {
            cells.push(CellShape::Sector {
                r_in,
                r_out,
                phi0,
                phi1,
            });
        }
        r_in = r_out;
    }
    cells
}

fn sphere_cells(radius: f64, m: usize) -> Vec<CellShape> {
    let cell_area = 4.0 * PI * radius * radius / m as f64;
    let cos_of = |cells_above: usize| 1.0 - cells_above as f64 * cell_area / (2.0 * PI * radius * radius);
    let cap_theta = cos_of(1).clamp(-1.0, 1.0).acos();
    let mut cells = vec![CellShape::SphereCell {
        radius,
        theta0: 0.0,
        theta1: cap_theta,
        phi0: 0.0,
        phi1: 2.0 * PI,
    }];
    let inner = m - 2;
    let ideal_angle = cell_area.sqrt() / radius;
    let collars = (((PI - 2.0 * cap_theta) / ideal_angle).round() as usize)
        .max(1)
        .min(inner);
    let ideal: Vec<f64> = (0..collars)
        .map(|k| {
            let span = (PI - 2.0 * cap_theta) / collars as f64;
            let t0 = cap_theta + k as f64 * span;
            let t1 = t0 + span;
            2.0 * PI * radius * radius * (t0.cos() - t1.cos()) / cell_area
        })
        .collect();
    let counts = round_band_counts(&ideal, inner);
    let mut above = 1usize;
    let mut theta0 = cap_theta;
    for (k, &count) in counts.iter().enumerate() {
        above += count;
        let theta1 = if above == m - 1 {
            PI - cap_theta
        } else {
            cos_of(above).clamp(-1.0, 1.0).acos()
        };
        for (phi0, phi1) in ring_sectors(count, k) {
            cells.push(CellShape::SphereCell {
                radius,
                theta0,
                theta1,
                phi0,
                phi1,
            });
        }
        theta0 = theta1;
    }
    cells.push(CellShape::SphereCell {
        radius,
        theta0: PI - cap_theta,
        theta1: PI,
        phi0: 0.0,
        phi1: 2.0 * PI,
    });
    cells
}

/// Density field `K ≥ 0`; each patch carries `⌊K(center) + 1⌋` bubbles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KFunction {
    Constant {
        value: f64,
    },
    /// `slope * (z + offset)`, with `z` the height coordinate.
    LinearHeight {
        slope: f64,
        offset: f64,
    },
}

impl Default for KFunction {
    fn default() -> Self {
        KFunction::Constant { value: 0.0 }
    }
}

impl KFunction {
    pub fn evaluate(&self, p: &Vec3) -> f64 {
        match *self {
            KFunction::Constant { value } => value,
            KFunction::LinearHeight { slope, offset } => slope * (p.z + offset),
        }
    }

    /// `⌊K(p) + 1⌋`, rejecting negative or non-finite values of `K`.
    pub fn count_at(&self, p: &Vec3) -> Result<usize> {
        let k = self.evaluate(p);
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Parameter(format!(
                "K must be finite and non-negative, got {k} at {p:?}"
            )));
        }
        Ok(k.floor() as usize + 1)
    }

    /// `sup (K + 1)` over the given sample points.
    pub fn sup_plus_one<'a>(&self, samples: impl IntoIterator<Item = &'a Vec3>) -> f64 {
        samples
            .into_iter()
            .map(|p| self.evaluate(p) + 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bubble {
    pub patch_id: usize,
    pub bubble_id: usize,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleCluster {
    /// Bubbles ordered by patch, then by local index.
    pub bubbles: Vec<Bubble>,
    pub counts: Vec<usize>,
    pub eps: f64,
    pub d: f64,
    pub d_min: f64,
}

impl BubbleCluster {
    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.bubbles.iter().map(|b| b.position).collect()
    }

    /// Builds a cluster from explicit positions, one bubble per patch.
    pub fn from_positions(positions: &[Vec3], eps: f64, d: f64) -> Result<Self> {
        let bubbles: Vec<Bubble> = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| Bubble {
                patch_id: i,
                bubble_id: 0,
                position,
            })
            .collect();
        let d_min = minimum_separation(positions)?;
        Ok(Self {
            counts: vec![1; bubbles.len()],
            bubbles,
            eps,
            d,
            d_min,
        })
    }

    const CSV_HEADER: [&'static str; 6] = ["patch_id", "bubble_id", "x", "y", "z", "count"];

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        out.write_record(Self::CSV_HEADER)?;
        for b in &self.bubbles {
            out.serialize(ClusterRow {
                patch_id: b.patch_id,
                bubble_id: b.bubble_id,
                x: b.position.x,
                y: b.position.y,
                z: b.position.z,
                count: self.counts[b.patch_id],
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R, eps: f64, d: f64) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let mut bubbles = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for row in input.deserialize() {
            let row: ClusterRow = row?;
            if row.patch_id >= counts.len() {
                counts.resize(row.patch_id + 1, 0);
            }
            counts[row.patch_id] = row.count;
            bubbles.push(Bubble {
                patch_id: row.patch_id,
                bubble_id: row.bubble_id,
                position: Vec3::new(row.x, row.y, row.z),
            });
        }
        if counts.contains(&0) {
            return Err(Error::Geometry("cluster file skips a patch id".into()));
        }
        let positions: Vec<Vec3> = bubbles.iter().map(|b| b.position).collect();
        let d_min = minimum_separation(&positions)?;
        Ok(Self {
            bubbles,
            counts,
            eps,
            d,
            d_min,
        })
    }

    pub fn import_csv(path: &Path, eps: f64, d: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, eps, d)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterRow {
    patch_id: usize,
    bubble_id: usize,
    x: f64,
    y: f64,
    z: f64,
    count: usize,
}

/// Smallest pairwise distance; infinite for fewer than two points.
pub fn minimum_separation(positions: &[Vec3]) -> Result<f64> {
    let d_min = (0..positions.len())
        .into_par_iter()
        .map(|i| {
            positions[i + 1..]
                .iter()
                .map(|q| (positions[i] - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    if d_min <= 0.0 {
        return Err(Error::Geometry("two bubble centres coincide".into()));
    }
    Ok(d_min)
}

const JITTER: f64 = 0.1;

/// Places `⌊K(center) + 1⌋` bubbles in every patch.
///
/// A lone bubble sits at the patch centre. Several bubbles occupy the cells of a
/// `⌈√n⌉`-column grid in the patch's area coordinates, each shifted by a seeded
/// jitter of at most 10% of a sub-cell, so every centre stays inside its patch
/// and on the surface. Of the two grid orientations the better-separated one is
/// kept.
pub fn place_bubbles(patchwork: &Patchwork, k: &KFunction, eps: f64, seed: u64) -> Result<BubbleCluster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bubbles = Vec::new();
    let mut counts = Vec::with_capacity(patchwork.len());
    for (patch_id, patch) in patchwork.patches.iter().enumerate() {
        let n = k.count_at(&patch.center)?;
        counts.push(n);
        if n == 1 {
            bubbles.push(Bubble {
                patch_id,
                bubble_id: 0,
                position: patch.center,
            });
            continue;
        }
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let jitter: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(-JITTER..=JITTER), rng.gen_range(-JITTER..=JITTER)))
            .collect();
        // lay the grid out both ways round and keep the better-separated one
        let layout = |transpose: bool| -> Vec<Vec3> {
            (0..n)
                .map(|b| {
                    let (i, j) = (b % cols, b / cols);
                    let a = (i as f64 + 0.5 + jitter[b].0) / cols as f64;
                    let c = (j as f64 + 0.5 + jitter[b].1) / rows as f64;
                    if transpose {
                        patch.cell.point_at(c, a)
                    } else {
                        patch.cell.point_at(a, c)
                    }
                })
                .collect()
        };
        let (plain, swapped) = (layout(false), layout(true));
        let chosen = if minimum_separation(&swapped)? > minimum_separation(&plain)? {
            swapped
        } else {
            plain
        };
        for (bubble_id, position) in chosen.into_iter().enumerate() {
            bubbles.push(Bubble {
                patch_id,
                bubble_id,
                position,
            });
        }
    }
    let positions: Vec<Vec3> = bubbles.iter().map(|b| b.position).collect();
    let d_min = minimum_separation(&positions)?;
    let n_max = counts.iter().copied().max().unwrap_or(1);
    let required = 0.3 * patchwork.d / (n_max as f64).sqrt();
    if d_min < required {
        return Err(Error::Geometry(format!(
            "infeasible packing: minimum separation {d_min:.3e} below {required:.3e}"
        )));
    }
    Ok(BubbleCluster {
        bubbles,
        counts,
        eps,
        d: patchwork.d,
        d_min,
    })
}

/// `Σ_{j ≠ anchor} |z_anchor − z_j|^{-k}`.
pub fn inverse_distance_sum(positions: &[Vec3], k: i32, anchor: usize) -> Result<f64> {
    if positions.len() < 2 {
        return Err(Error::Geometry("need at least two bubbles".into()));
    }
    let za = positions
        .get(anchor)
        .ok_or_else(|| Error::Geometry(format!("anchor {anchor} out of range")))?;
    let mut sum = 0.0;
    for (j, zj) in positions.iter().enumerate() {
        if j == anchor {
            continue;
        }
        let r = (za - zj).norm();
        if r <= 0.0 {
            return Err(Error::Geometry(format!("bubbles {anchor} and {j} coincide")));
        }
        sum += r.powi(-k);
    }
    Ok(sum)
}

/// Largest inverse-distance sum over all anchors.
pub fn max_anchor_sum(positions: &[Vec3], k: i32) -> Result<f64> {
    (0..positions.len())
        .into_par_iter()
        .map(|a| inverse_distance_sum(positions, k, a))
        .try_reduce(|| 0.0, |x, y| Ok(x.max(y)))
}

/// Growth law expected for the inverse-distance sums of a `d`-spaced surface cluster.
pub fn counting_bound(d: f64, k: i32) -> f64 {
    match k {
        1 => d.powi(-2),
        2 => d.powi(-2) * (1.0 + d.ln().abs()),
        _ => d.powi(-k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountingRow {
    pub d: f64,
    pub bubbles: usize,
    pub max_sum: f64,
    pub bound: f64,
    pub ratio: f64,
}

pub fn counting_scaling_check(surface: &SurfaceDescriptor, d_list: &[f64], k: i32) -> Result<Vec<CountingRow>> {
    if d_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Usage("spacings must be strictly decreasing".into()));
    }
    d_list
        .iter()
        .map(|&d| {
            let patchwork = partition(surface, d)?;
            let cluster = place_bubbles(&patchwork, &KFunction::default(), d * d, 0)?;
            let max_sum = max_anchor_sum(&cluster.positions(), k)?;
            let bound = counting_bound(d, k);
            Ok(CountingRow {
                d,
                bubbles: cluster.len(),
                max_sum,
                bound,
                ratio: max_sum / bound,
            })
        })
        .collect()
}
