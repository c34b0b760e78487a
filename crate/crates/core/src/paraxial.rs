//! Paraxial propagation in square-law media, used as an independent check
//! of the oscillator picture.
//!
//! The field obeys `(i / k0) du/dz = -(1 / k0^2) (lap_perp + N(x, y)) u`,
//! a Schrodinger equation with `hbar -> 1 / k0`, `t -> z` and mass `1/2`.
//! The medium term is `N = n0 - c r^2 / 2` with `c = n0 alpha k0^2 / 2`,
//! which gives the oscillator quantum `hbar omega = sqrt(n0 alpha) / k0`.
//! The constant `n0` only adds a global phase and is dropped during
//! propagation, so eigenmodes evolve as `exp(-i omega z (n_x + n_y + 1))`.
//!
//! Fields are sampled on a square window of side `extent` centred on the
//! axis; sample `(ix, iy)` sits at `((ix - nx/2) dx, (iy - ny/2) dy)` and is
//! stored row-major, `iy * nx + ix`. Waists follow the field convention
//! `u ~ exp(-r^2 / w^2)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

type C64 = Complex<f64>;

/// Default samples per axis.
pub const DEFAULT_GRID: usize = 512;
/// Default window side in units of the waist.
pub const DEFAULT_WINDOW_WAISTS: f64 = 12.0;
/// Largest potential phase per step at the window corner.
pub const MAX_EDGE_PHASE: f64 = PI / 8.0;
/// Largest intensity, relative to the peak, tolerated in the absorbing rim.
pub const EDGE_INTENSITY_LIMIT: f64 = 1e-6;
/// Fraction of the window width covered by the absorbing rim.
pub const ABSORBER_FRACTION: f64 = 0.05;
/// Magic bytes of the raw field format.
pub const RAW_MAGIC: &[u8; 8] = b"QTFIELD1";

/// Complex field samples on a square window.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    nx: usize,
    ny: usize,
    extent: f64,
    samples: Vec<C64>,
}

impl FieldGrid {
    pub fn zeros(nx: usize, ny: usize, extent: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidDimension { dim: nx.min(ny), min: 4 });
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(invalid("extent", "window must be positive and finite"));
        }
        Ok(Self { nx, ny, extent, samples: vec![C64::new(0.0, 0.0); nx * ny] })
    }

    /// `n x n` window of `window_waists` waists.
    pub fn for_waist(waist: f64, n: usize, window_waists: f64) -> Result<Self> {
        Self::zeros(n, n, waist * window_waists)
    }

    pub fn from_fn(nx: usize, ny: usize, extent: f64, f: impl Fn(f64, f64) -> C64 + Sync) -> Result<Self> {
        let mut g = Self::zeros(nx, ny, extent)?;
        let (dx, dy) = (g.dx(), g.dy());
        g.samples.par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
            let y = (iy as f64 - (ny / 2) as f64) * dy;
            for (ix, v) in row.iter_mut().enumerate() {
                *v = f((ix as f64 - (nx / 2) as f64) * dx, y);
            }
        });
        Ok(g)
    }

    /// Same window, new samples.
    pub fn like(&self, f: impl Fn(f64, f64) -> C64 + Sync) -> Self {
        Self::from_fn(self.nx, self.ny, self.extent, f).expect("geometry already validated")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn dx(&self) -> f64 {
        self.extent / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.extent / self.ny as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.dy()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn get(&self, ix: usize, iy: usize) -> C64 {
        self.samples[iy * self.nx + ix]
    }

    fn same_geometry(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.extent == other.extent
    }

    /// `<self, other> = sum conj(self) other dx dy`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if !self.same_geometry(other) {
            return Err(invalid("field", "fields live on different grids"));
        }
        let s: C64 = self
            .samples
            .par_iter()
            .zip(&other.samples)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * (self.dx() * self.dy()))
    }

    /// Squared L2 norm.
    pub fn power(&self) -> f64 {
        self.samples.par_iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx() * self.dy()
    }

    pub fn peak_intensity(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, z| m.max(z.norm_sqr()))
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `sqrt(<x^2 + y^2>)` about the axis.
    pub fn rms_radius(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for iy in 0..self.ny {
            let y = self.y(iy);
            for ix in 0..self.nx {
                let x = self.x(ix);
                let i = self.get(ix, iy).norm_sqr();
                num += (x * x + y * y) * i;
                den += i;
            }
        }
        (num / den).sqrt()
    }

    fn rim_width(&self) -> (usize, usize) {
        let w = |n: usize| ((ABSORBER_FRACTION * n as f64).ceil() as usize).max(1);
        (w(self.nx), w(self.ny))
    }

    /// Largest intensity in the absorbing rim relative to the peak.
    pub fn edge_ratio(&self) -> f64 {
        let peak = self.peak_intensity();
        if peak == 0.0 {
            return 0.0;
        }
        let (wx, wy) = self.rim_width();
        let mut edge = 0.0f64;
        for iy in 0..self.ny {
            let rim_row = iy < wy || iy >= self.ny - wy;
            for ix in 0..self.nx {
                if rim_row || ix < wx || ix >= self.nx - wx {
                    edge = edge.max(self.get(ix, iy).norm_sqr());
                }
            }
        }
        edge / peak
    }

    pub fn check_window(&self) -> Result<()> {
        let ratio = self.edge_ratio();
        if ratio > EDGE_INTENSITY_LIMIT {
            return Err(Error::Window { ratio, limit: EDGE_INTENSITY_LIMIT });
        }
        Ok(())
    }

    /// 32-byte header (`QTFIELD1`, `nx`, `ny` as u64, `extent` as f64) then
    /// `(re, im)` f64 pairs, all little-endian, row-major.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 16 * self.samples.len());
        buf.extend_from_slice(RAW_MAGIC);
        buf.extend_from_slice(&(self.nx as u64).to_le_bytes());
        buf.extend_from_slice(&(self.ny as u64).to_le_bytes());
        buf.extend_from_slice(&self.extent.to_le_bytes());
        for z in &self.samples {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 32];
        r.read_exact(&mut head)?;
        if &head[..8] != RAW_MAGIC {
            return Err(Error::Io("not a raw field file".into()));
        }
        let word = |k: usize| <[u8; 8]>::try_from(&head[8 * k..8 * k + 8]).expect("8 bytes");
        let nx = u64::from_le_bytes(word(1)) as usize;
        let ny = u64::from_le_bytes(word(2)) as usize;
        let extent = f64::from_le_bytes(word(3));
        let mut g = Self::zeros(nx, ny, extent)?;
        let mut body = vec![0u8; 16 * nx * ny];
        r.read_exact(&mut body)?;
        for (z, b) in g.samples.iter_mut().zip(body.chunks_exact(16)) {
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            *z = C64::new(re, im);
        }
        Ok(g)
    }

    /// Binary PGM of the intensity, scaled so the peak maps to 255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let peak = self.peak_intensity();
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        let mut buf = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        buf.extend(self.samples.iter().map(|z| (z.norm_sqr() * scale).round().clamp(0.0, 255.0) as u8));
        w.write_all(&buf)?;
        Ok(())
    }
}

/// Transverse square-law medium; `alpha_medium = 0` is free space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareLawMedium {
    pub n0: f64,
    pub alpha_medium: f64,
    pub k0: f64,
}

impl SquareLawMedium {
    pub fn new(n0: f64, alpha_medium: f64, k0: f64) -> Result<Self> {
        let m = Self { n0, alpha_medium, k0 };
        m.validate()?;
        Ok(m)
    }

    pub fn free_space(k0: f64) -> Result<Self> {
        Self::new(1.0, 0.0, k0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n0 > 0.0) || !self.n0.is_finite() {
            return Err(invalid("n0", "on-axis index must be positive"));
        }
        if !(self.alpha_medium >= 0.0) || !self.alpha_medium.is_finite() {
            return Err(invalid("alpha_medium", "curvature must be non-negative"));
        }
        if !(self.k0 > 0.0) || !self.k0.is_finite() {
            return Err(invalid("k0", "wavenumber must be positive"));
        }
        Ok(())
    }

    /// `c` in `N = n0 - c r^2 / 2`.
    pub fn curvature(&self) -> f64 {
        0.5 * self.n0 * self.alpha_medium * self.k0 * self.k0
    }

    pub fn index(&self, x: f64, y: f64) -> f64 {
        self.n0 - 0.5 * self.curvature() * (x * x + y * y)
    }

    /// Oscillator angular frequency per unit `z`, `sqrt(n0 alpha)`.
    pub fn omega(&self) -> f64 {
        (self.n0 * self.alpha_medium).sqrt()
    }

    /// `sqrt(n0 alpha) / k0`.
    pub fn hbar_omega(&self) -> f64 {
        self.omega() / self.k0
    }

    /// Waist of the ground eigenmode, `w^2 = 4 / (omega k0)`.
    pub fn matched_waist(&self) -> Result<f64> {
        if self.alpha_medium == 0.0 {
            return Err(invalid("alpha_medium", "free space has no eigenmode waist"));
        }
        Ok((4.0 / (self.omega() * self.k0)).sqrt())
    }

    /// Propagation distance for phase-space angle `alpha`.
    pub fn z_for_angle(&self, alpha: f64) -> Result<f64> {
        if self.alpha_medium == 0.0 {
            return Err(invalid("alpha_medium", "free space does not rotate phase space"));
        }
        Ok(alpha / self.omega())
    }

    /// Fails when the index turns negative inside the window.
    pub fn check_positive_on(&self, grid: &FieldGrid) -> Result<()> {
        let h = 0.5 * grid.extent();
        if self.index(h, h) <= 0.0 {
            return Err(invalid("alpha_medium", "index is not positive over the whole window"));
        }
        Ok(())
    }

    /// Largest step keeping the potential phase at the window corner
    /// within [`MAX_EDGE_PHASE`]; unbounded in free space.
    pub fn max_step(&self, grid: &FieldGrid) -> f64 {
        let h = 0.5 * grid.extent();
        let per_z = 0.5 * self.curvature() * 2.0 * h * h / self.k0;
        if per_z == 0.0 { f64::INFINITY } else { MAX_EDGE_PHASE / per_z }
    }
}

/// Shipped medium: eigenmode waist about 18 and positive index over a
/// 12-waist window.
pub fn default_medium() -> SquareLawMedium {
    SquareLawMedium { n0: 1.5, alpha_medium: 1e-4, k0: 1.0 }
}

fn hermite_functions(order: usize, xi: f64) -> Vec<f64> {
    // orthonormal in xi: psi_0 = pi^{-1/4} e^{-xi^2/2}
    let mut out = Vec::with_capacity(order + 1);
    out.push(PI.powf(-0.25) * (-0.5 * xi * xi).exp());
    if order >= 1 {
        out.push(2f64.sqrt() * xi * out[0]);
    }
    for m in 1..order {
        let next = (2.0 / (m + 1) as f64).sqrt() * xi * out[m] - (m as f64 / (m + 1) as f64).sqrt() * out[m - 1];
        out.push(next);
    }
    out
}

/// Normalized 1D Hermite-Gaussian `u_m(x)` of waist `w`.
pub fn hg_1d(m: usize, waist: f64, x: f64) -> f64 {
    let xi = 2f64.sqrt() * x / waist;
    hermite_functions(m, xi)[m] * (2.0 / (waist * waist)).powf(0.25)
}

fn check_waist(waist: f64) -> Result<()> {
    if !(waist > 0.0) || !waist.is_finite() {
        return Err(invalid("waist", "waist must be positive"));
    }
    Ok(())
}

/// `HG_{m,n}` centred at `center`, sampled on `grid`'s window.
pub fn hg_mode_at(m: usize, n: usize, waist: f64, center: (f64, f64), grid: &FieldGrid) -> Result<FieldGrid> {
    check_waist(waist)?;
    Ok(grid.like(|x, y| C64::new(hg_1d(m, waist, x - center.0) * hg_1d(n, waist, y - center.1), 0.0)))
}

pub fn hg_mode(m: usize, n: usize, waist: f64, grid: &FieldGrid) -> Result<FieldGrid> {
    hg_mode_at(m, n, waist, (0.0, 0.0), grid)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn laguerre(p: usize, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `LG_p^l` with azimuthal factor `exp(i l phi)`, centred at `center`.
pub fn lg_mode_at(l: i64, p: usize, waist: f64, center: (f64, f64), grid: &FieldGrid) -> Result<FieldGrid> {
    check_waist(waist)?;
    let al = l.unsigned_abs() as usize;
    let norm = (0.5 * (ln_factorial(p) - ln_factorial(p + al)) + 0.5 * (2.0 / PI).ln()).exp() / waist;
    Ok(grid.like(|x, y| {
        let (x, y) = (x - center.0, y - center.1);
        let r2 = (x * x + y * y) / (waist * waist);
        let radial = norm * (2.0 * r2).sqrt().powi(al as i32) * laguerre(p, al as f64, 2.0 * r2) * (-r2).exp();
        C64::from_polar(radial, l as f64 * y.atan2(x))
    }))
}

pub fn lg_mode(l: i64, p: usize, waist: f64, grid: &FieldGrid) -> Result<FieldGrid> {
    lg_mode_at(l, p, waist, (0.0, 0.0), grid)
}

/// `M[(m, n)] = <b_m, a_n>`.
pub fn mode_overlap_matrix(family_a: &[FieldGrid], family_b: &[FieldGrid]) -> Result<DMatrix<C64>> {
    let pairs: Vec<(usize, usize)> =
        (0..family_b.len()).flat_map(|m| (0..family_a.len()).map(move |n| (m, n))).collect();
    let vals: Result<Vec<C64>> = pairs.par_iter().map(|&(m, n)| family_b[m].inner(&family_a[n])).collect();
    let vals = vals?;
    Ok(DMatrix::from_fn(family_b.len(), family_a.len(), |m, n| vals[m * family_a.len() + n]))
}

/// `|M|^2` with every column rescaled to unit sum: the statistics of a
/// sorter that only records outcomes inside the family.
pub fn postselected_transitions(overlaps: &DMatrix<C64>) -> Result<DMatrix<f64>> {
    let mut p = overlaps.map(|z| z.norm_sqr());
    for mut col in p.column_iter_mut() {
        let s: f64 = col.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ProcessValidity("input mode has no weight inside the output family".into()));
        }
        col /= s;
    }
    Ok(p)
}

/// Whether the outer rim is damped each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    /// Cosine taper over the outer [`ABSORBER_FRACTION`] of the window.
    #[default]
    Absorbing,
}

struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    fn rows(fft: &Arc<dyn Fft<f64>>, data: &mut [C64], len: usize) {
        data.par_chunks_mut(len).for_each_init(
            || vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    }

    fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
        dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
            for (r, v) in out.iter_mut().enumerate() {
                *v = src[r * cols + c];
            }
        });
    }

    /// Unnormalized transform of both axes; `work` has the same length.
    fn apply(&self, data: &mut [C64], work: &mut [C64], forward: bool) {
        let (rf, cf) = if forward { (&self.row_fwd, &self.col_fwd) } else { (&self.row_inv, &self.col_inv) };
        Self::rows(rf, data, self.nx);
        Self::transpose(data, work, self.ny, self.nx);
        Self::rows(cf, work, self.ny);
        Self::transpose(work, data, self.nx, self.ny);
    }
}

fn wavenumbers(n: usize, extent: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * k / extent
        })
        .collect()
}

fn cosine_taper(n: usize, width: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let d = i.min(n - 1 - i);
            if d >= width {
                1.0
            } else {
                0.5 * (1.0 - (PI * d as f64 / width as f64).cos())
            }
        })
        .collect()
}

/// Symmetric split-step propagator for one medium, step and window.
pub struct SplitStep {
    fft: Fft2,
    half_potential: Vec<C64>,
    full_potential: Vec<C64>,
    kinetic: Vec<C64>,
    taper: Option<Vec<f64>>,
    dz: f64,
}

impl SplitStep {
    pub fn new(medium: &SquareLawMedium, grid: &FieldGrid, dz: f64, boundary: Boundary) -> Result<Self> {
        medium.validate()?;
        if !(dz > 0.0) || !dz.is_finite() {
            return Err(invalid("dz", "step must be positive"));
        }
        if dz > medium.max_step(grid) * (1.0 + 1e-12) {
            return Err(invalid("dz", format!("step exceeds the edge-phase limit {}", medium.max_step(grid))));
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        let c = medium.curvature();
        let phase = |scale: f64| {
            grid.like(|x, y| C64::from_polar(1.0, -scale * 0.5 * c * (x * x + y * y) * dz / medium.k0)).samples
        };
        let kx = wavenumbers(nx, grid.extent());
        let ky = wavenumbers(ny, grid.extent());
        let kinetic = (0..nx * ny)
            .map(|i| {
                let (ix, iy) = (i % nx, i / nx);
                C64::from_polar(1.0, -(kx[ix] * kx[ix] + ky[iy] * ky[iy]) * dz / medium.k0)
            })
            .collect();
        let taper = match boundary {
            Boundary::Periodic => None,
            Boundary::Absorbing => {
                let (wx, wy) = grid.rim_width();
                let tx = cosine_taper(nx, wx);
                let ty = cosine_taper(ny, wy);
                Some((0..nx * ny).map(|i| tx[i % nx] * ty[i / nx]).collect())
            }
        };
        Ok(Self { fft: Fft2::new(nx, ny), half_potential: phase(0.5), full_potential: phase(1.0), kinetic, taper, dz })
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    fn multiply(data: &mut [C64], by: &[C64]) {
        data.par_iter_mut().zip(by).for_each(|(a, b)| *a *= b);
    }

    /// Advances `field` by `steps` steps; the window is checked before and
    /// after.
    pub fn propagate(&self, field: &FieldGrid, steps: usize) -> Result<FieldGrid> {
        field.check_window()?;
        if field.nx() != self.fft.nx || field.ny() != self.fft.ny {
            return Err(invalid("field", "grid does not match the propagator"));
        }
        let mut out = field.clone();
        if steps == 0 {
            return Ok(out);
        }
        let mut work = vec![C64::new(0.0, 0.0); out.samples.len()];
        let norm = 1.0 / (self.fft.nx * self.fft.ny) as f64;
        let data = &mut out.samples;
        Self::multiply(data, &self.half_potential);
        for step in 0..steps {
            self.fft.apply(data, &mut work, true);
            data.par_iter_mut().zip(&self.kinetic).for_each(|(a, k)| *a *= k * norm);
            self.fft.apply(data, &mut work, false);
            let last = step + 1 == steps;
            Self::multiply(data, if last { &self.half_potential } else { &self.full_potential });
            if let Some(t) = &self.taper {
                data.par_iter_mut().zip(t).for_each(|(a, w)| *a *= w);
            }
        }
        out.check_window()?;
        Ok(out)
    }
}

/// `split_step_propagate` with a one-off propagator.
pub fn split_step_propagate(
    field: &FieldGrid,
    medium: &SquareLawMedium,
    dz: f64,
    steps: usize,
) -> Result<FieldGrid> {
    SplitStep::new(medium, field, dz, Boundary::default())?.propagate(field, steps)
}

/// Exact free-space propagation over `z` (one spectral step).
pub fn free_propagate(field: &FieldGrid, k0: f64, z: f64) -> Result<FieldGrid> {
    if z == 0.0 {
        return Ok(field.clone());
    }
    let medium = SquareLawMedium::free_space(k0)?;
    SplitStep::new(&medium, field, z.abs(), Boundary::Periodic).and_then(|s| {
        if z > 0.0 {
            s.propagate(field, 1)
        } else {
            Err(invalid("z", "backward propagation is not supported"))
        }
    })
}

/// Closed-form free-space Gaussian: `u = (w0^2 / q) exp(-r^2 / q)` with
/// `q = w0^2 + 4 i z / k0`, normalized to unit power at `z = 0`.
pub fn gaussian_free_space(w0: f64, k0: f64, z: f64, x: f64, y: f64) -> C64 {
    let q = C64::new(w0 * w0, 4.0 * z / k0);
    let amp = (2.0 / PI).sqrt() / w0;
    (C64::new(w0 * w0, 0.0) / q) * (-(x * x + y * y) / q).exp() * amp
}

/// Waist of the Gaussian reproduced by [`frft_via_lens`] at angle
/// `alpha`, `w^2 = 4 f sin(alpha) / k0`.
pub fn frft_matched_waist(f: f64, alpha: f64, k0: f64) -> Result<f64> {
    let s = alpha.sin();
    if !(s > 0.0) {
        return Err(invalid("alpha", "matched scale needs 0 < alpha < pi"));
    }
    Ok((4.0 * f * s / k0).sqrt())
}

/// Free propagation over `2 f sin^2(alpha / 2)`, thin lens of focal length
/// `f`, free propagation again: a fractional Fourier transform of angle
/// `alpha` at scale `f sin(alpha)`.
pub fn frft_via_lens(field: &FieldGrid, f: f64, alpha: f64, k0: f64) -> Result<FieldGrid> {
    let geom = crate::charfn::frft_geometry(alpha, f)?;
    if geom.z_alpha == 0.0 {
        return Ok(field.clone());
    }
    let first = free_propagate(field, k0, geom.z_alpha)?;
    let lensed = first.like(|_, _| C64::new(0.0, 0.0));
    let mut lensed = lensed;
    let scale = k0 / (4.0 * f);
    for iy in 0..first.ny() {
        let y = first.y(iy);
        for ix in 0..first.nx() {
            let x = first.x(ix);
            let i = iy * first.nx() + ix;
            lensed.samples[i] = first.samples[i] * C64::from_polar(1.0, -scale * (x * x + y * y));
        }
    }
    free_propagate(&lensed, k0, geom.z_alpha)
}

/// Least-squares line through the unwrapped phase of `<u_0, u(z)>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenphaseFit {
    /// `d phase / dz`.
    pub slope: f64,
    pub intercept: f64,
    /// `-slope / omega`, the mode energy in units of `hbar omega`.
    pub energy: f64,
    pub max_residual: f64,
    /// Smallest `|<u_0, u(z)>|` seen, 1 for an exact eigenmode.
    pub min_overlap: f64,
}

/// Propagates `mode` for `blocks * steps_per_block` steps and fits its
/// accumulated phase against `z`.
pub fn eigenphase_regression(
    mode: &FieldGrid,
    medium: &SquareLawMedium,
    dz: f64,
    steps_per_block: usize,
    blocks: usize,
) -> Result<EigenphaseFit> {
    let fits = eigenphase_regression_family(std::slice::from_ref(mode), medium, dz, steps_per_block, blocks)?;
    Ok(fits[0])
}

/// [`eigenphase_regression`] for mutually orthogonal modes at the cost of
/// one propagation: their sum is propagated and projected back onto each.
/// Cross-talk from propagation errors shows up in `min_overlap`.
pub fn eigenphase_regression_family(
    modes: &[FieldGrid],
    medium: &SquareLawMedium,
    dz: f64,
    steps_per_block: usize,
    blocks: usize,
) -> Result<Vec<EigenphaseFit>> {
    if blocks < 2 || steps_per_block == 0 {
        return Err(invalid("blocks", "need at least two samples of positive length"));
    }
    let first = modes.first().ok_or_else(|| invalid("modes", "need at least one mode"))?;
    let powers: Vec<f64> = modes.iter().map(FieldGrid::power).collect();
    for (a, u) in modes.iter().enumerate() {
        for v in &modes[a + 1..] {
            if u.inner(v)?.norm() > 1e-6 * (u.power() * v.power()).sqrt() {
                return Err(invalid("modes", "modes must be mutually orthogonal"));
            }
        }
    }
    let prop = SplitStep::new(medium, first, dz, Boundary::default())?;
    let mut u = first.like(|_, _| C64::new(0.0, 0.0));
    for m in modes {
        for (a, b) in u.samples.iter_mut().zip(&m.samples) {
            *a += b;
        }
    }
    let mut zs = vec![0.0];
    let mut phases = vec![vec![0.0]; modes.len()];
    let mut min_overlap = vec![1.0f64; modes.len()];
    for b in 1..=blocks {
        u = prop.propagate(&u, steps_per_block)?;
        for (k, m) in modes.iter().enumerate() {
            let ov = m.inner(&u)? / powers[k];
            min_overlap[k] = min_overlap[k].min(ov.norm());
            let prev = *phases[k].last().expect("seeded");
            let raw = ov.arg();
            // unwrap against the previous sample
            let turns = ((prev - raw) / (2.0 * PI)).round();
            phases[k].push(raw + 2.0 * PI * turns);
        }
        zs.push((b * steps_per_block) as f64 * dz);
    }
    Ok(phases.iter().zip(min_overlap).map(|(ph, mo)| line_fit(&zs, ph, medium.omega(), mo)).collect())
}

fn line_fit(zs: &[f64], phases: &[f64], omega: f64, min_overlap: f64) -> EigenphaseFit {
    let n = zs.len() as f64;
    let mz = zs.iter().sum::<f64>() / n;
    let mp = phases.iter().sum::<f64>() / n;
    let sxy: f64 = zs.iter().zip(phases).map(|(z, p)| (z - mz) * (p - mp)).sum();
    let sxx: f64 = zs.iter().map(|z| (z - mz) * (z - mz)).sum();
    let slope = sxy / sxx;
    let intercept = mp - slope * mz;
    let max_residual = zs.iter().zip(phases).fold(0.0f64, |m, (z, p)| m.max((p - intercept - slope * z).abs()));
    EigenphaseFit { slope, intercept, energy: -slope / omega, max_residual, min_overlap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(waist: f64, n: usize) -> FieldGrid {
        FieldGrid::for_waist(waist, n, DEFAULT_WINDOW_WAISTS).unwrap()
    }

    #[test]
    fn medium_relations() {
        let m = SquareLawMedium::new(2.0, 0.5, 4.0).unwrap();
        assert_abs_diff_eq!(m.omega(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.hbar_omega(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m.curvature(), 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.index(0.0, 0.0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.matched_waist().unwrap(), 1.0, epsilon = 1e-15);
        assert!(SquareLawMedium::new(1.0, -1.0, 1.0).is_err());
        let d = default_medium();
        d.check_positive_on(&grid(d.matched_waist().unwrap(), 64)).unwrap();
        assert!(m.check_positive_on(&grid(1.0, 64)).is_err());
    }

    #[test]
    fn hermite_mode_orthonormality() {
        let g = grid(1.0, 128);
        let modes: Vec<FieldGrid> = (0..4).map(|m| hg_mode(m, 3 - m, 1.0, &g).unwrap()).collect();
        let gram = mode_overlap_matrix(&modes, &modes).unwrap();
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-8);
    }

    #[test]
    fn laguerre_mode_orthonormality() {
        let g = grid(1.0, 128);
        let a = lg_mode(0, 0, 1.0, &g).unwrap();
        assert_abs_diff_eq!(a.power(), 1.0, epsilon = 1e-10);
        let l10 = lg_mode(1, 0, 1.0, &g).unwrap();
        let l20 = lg_mode(2, 0, 1.0, &g).unwrap();
        assert!(l10.inner(&l20).unwrap().norm() < 1e-8);
        let family: Vec<FieldGrid> = [(-2, 0), (-1, 1), (0, 0), (0, 2), (1, 0), (3, 1)]
            .iter()
            .map(|&(l, p)| lg_mode(l, p, 1.0, &g).unwrap())
            .collect();
        let gram = mode_overlap_matrix(&family, &family).unwrap();
        assert!((gram - DMatrix::identity(6, 6)).norm() < 1e-8);
    }

    #[test]
    fn laguerre_phase_winding() {
        let g = grid(1.0, 128);
        let m = lg_mode(2, 0, 1.0, &g).unwrap();
        // square loop of half-width 20 cells around the centre cell
        let (c, h) = (64usize, 20usize);
        let mut loop_pts = Vec::new();
        for ix in c - h..c + h {
            loop_pts.push((ix, c - h));
        }
        for iy in c - h..c + h {
            loop_pts.push((c + h, iy));
        }
        for ix in (c - h + 1..=c + h).rev() {
            loop_pts.push((ix, c + h));
        }
        for iy in (c - h + 1..=c + h).rev() {
            loop_pts.push((c - h, iy));
        }
        loop_pts.push(loop_pts[0]);
        let total: f64 = loop_pts
            .windows(2)
            .map(|w| (m.get(w[1].0, w[1].1) * m.get(w[0].0, w[0].1).conj()).arg())
            .sum();
        assert_abs_diff_eq!(total, 4.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn free_space_matches_closed_form() {
        let (w0, k0) = (1.0, 8.0);
        let g = grid(w0, 256);
        let u0 = g.like(|x, y| gaussian_free_space(w0, k0, 0.0, x, y));
        let z = k0 * w0 * w0 / 4.0;
        let u = free_propagate(&u0, k0, z).unwrap();
        let want = g.like(|x, y| gaussian_free_space(w0, k0, z, x, y));
        let peak = want.peak_intensity().sqrt();
        let err = u.samples().iter().zip(want.samples()).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err / peak < 1e-6, "{err}");
        // the same through many split steps
        let medium = SquareLawMedium::free_space(k0).unwrap();
        let v = split_step_propagate(&u0, &medium, z / 50.0, 50).unwrap();
        let err = v.samples().iter().zip(want.samples()).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err / peak < 1e-6, "{err}");
    }

    fn small_medium() -> (SquareLawMedium, f64) {
        let m = default_medium();
        (m, m.matched_waist().unwrap())
    }

    #[test]
    fn eigenmode_keeps_intensity_and_norm() {
        let (m, w) = small_medium();
        let g = grid(w, 128);
        let u0 = lg_mode(0, 0, w, &g).unwrap();
        let dz = m.max_step(&g);
        let period = 2.0 * PI / m.omega();
        let steps = (period / dz).ceil() as usize;
        let u = split_step_propagate(&u0, &m, period / steps as f64, steps).unwrap();
        let peak = u0.peak_intensity();
        let diff = u.intensity().iter().zip(u0.intensity()).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(diff / peak < 1e-8, "{}", diff / peak);
        assert!((u.power() - u0.power()).abs() / u0.power() < 1e-10);
    }

    #[test]
    fn eigenphases_follow_oscillator_energies() {
        let (m, w) = small_medium();
        let g = grid(w, 128);
        let dz = m.max_step(&g);
        for n in 0..4 {
            let mode = hg_mode(n, 0, w, &g).unwrap();
            let fit = eigenphase_regression(&mode, &m, dz, 40, 8).unwrap();
            let want = n as f64 + 1.0;
            assert!((fit.energy - want).abs() / want < 1e-2, "n = {n}: {}", fit.energy);
            assert!(fit.min_overlap > 1.0 - 1e-6);
        }
    }

    #[test]
    fn family_fit_matches_single_mode_fits() {
        let (m, w) = small_medium();
        let g = grid(w, 128);
        let dz = m.max_step(&g);
        let modes: Vec<FieldGrid> = (0..4).map(|n| hg_mode(n, 0, w, &g).unwrap()).collect();
        let family = eigenphase_regression_family(&modes, &m, dz, 40, 8).unwrap();
        for (n, f) in family.iter().enumerate() {
            let single = eigenphase_regression(&modes[n], &m, dz, 40, 8).unwrap();
            assert!((f.energy - single.energy).abs() < 1e-6, "n = {n}: {} vs {}", f.energy, single.energy);
            // same-parity cross-talk lowers the projected overlap slightly
            assert!((f.min_overlap - single.min_overlap).abs() < 1e-4, "n = {n}: {} vs {}", f.min_overlap, single.min_overlap);
        }
        let twice = [modes[0].clone(), modes[0].clone()];
        assert!(eigenphase_regression_family(&twice, &m, dz, 40, 8).is_err());
    }

    #[test]
    fn step_halving_is_second_order() {
        let (m, w) = small_medium();
        let g = grid(w, 64);
        let mode = hg_mode(2, 0, w, &g).unwrap();
        let z = m.z_for_angle(PI / 2.0).unwrap();
        let err = |steps: usize| {
            let u = split_step_propagate(&mode, &m, z / steps as f64, steps).unwrap();
            let ov = mode.inner(&u).unwrap();
            let want = -3.0 * PI / 2.0;
            let d = ov.arg() - want;
            (d - 2.0 * PI * (d / (2.0 * PI)).round()).abs()
        };
        let steps = (z / m.max_step(&g)).ceil() as usize;
        let (e1, e2) = (err(steps), err(2 * steps));
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "{e1} {e2} {ratio}");
    }

    #[test]
    fn window_errors() {
        let g = FieldGrid::for_waist(1.0, 64, 3.0).unwrap();
        let wide = hg_mode(0, 0, 1.0, &g).unwrap();
        assert!(matches!(wide.check_window(), Err(Error::Window { .. })));
        let m = SquareLawMedium::new(1.0, 1.0, 1.0).unwrap();
        let ok = grid(2.0, 64);
        assert!(SplitStep::new(&m, &ok, 10.0 * m.max_step(&ok), Boundary::Periodic).is_err());
    }

    #[test]
    fn overlap_oracles() {
        let w = 1.0;
        let g = grid(w, 256);
        let base = lg_mode(0, 0, w, &g).unwrap();
        for d in [0.3, 0.8, 1.5] {
            let shifted = lg_mode_at(0, 0, w, (d, 0.0), &g).unwrap();
            let ov = mode_overlap_matrix(&[base.clone()], &[shifted]).unwrap()[(0, 0)];
            assert_abs_diff_eq!(ov.norm(), (-d * d / (2.0 * w * w)).exp(), epsilon = 1e-10);
        }
        for s in [0.5f64, 1.3, 2.0] {
            let g2 = grid(w * s.max(1.0), 256);
            let a = hg_mode(0, 0, w, &g2).unwrap();
            let b = hg_mode(0, 0, w * s, &g2).unwrap();
            assert_abs_diff_eq!(a.inner(&b).unwrap().norm(), 2.0 * s / (1.0 + s * s), epsilon = 1e-10);
        }
        let same = mode_overlap_matrix(&[base.clone()], &[base.clone()]).unwrap();
        assert_abs_diff_eq!(same[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lens_frft() {
        let (f, k0) = (50.0, 1.0);
        let alpha = PI / 2.0;
        let w = frft_matched_waist(f, alpha, k0).unwrap();
        let g = grid(w, 256);
        let u0 = hg_mode(0, 0, w, &g).unwrap();
        assert_eq!(frft_via_lens(&u0, f, 0.0, k0).unwrap(), u0);
        let out = frft_via_lens(&u0, f, alpha, k0).unwrap();
        let ov = u0.inner(&out).unwrap();
        assert_abs_diff_eq!(ov.norm(), 1.0, epsilon = 1e-6);
        let resid = out.samples().iter().zip(u0.samples()).fold(0.0f64, |m, (a, b)| m.max((a - b * ov).norm()));
        assert!(resid / u0.peak_intensity().sqrt() < 1e-6);
        // relative eigenphases against the oscillator action
        let base = ov.arg();
        for n in 1..4 {
            let mode = hg_mode(n, 0, w, &g).unwrap();
            let got = mode.inner(&frft_via_lens(&mode, f, alpha, k0).unwrap()).unwrap();
            let spectrum: Vec<f64> = (0..=n).map(|k| k as f64 + 0.5).collect();
            let want = crate::charfn::frft_phase_action(&spectrum, alpha)[n] / crate::charfn::frft_phase_action(&spectrum, alpha)[0];
            let d = (got / C64::from_polar(1.0, base)) * want.conj();
            assert!(d.arg().abs() < 0.01 * (n as f64 * alpha), "n = {n}: {}", d.arg());
            assert_abs_diff_eq!(got.norm(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn raw_and_pgm_round_trip() {
        let g = grid(1.0, 16);
        let m = lg_mode(1, 0, 1.0, &g).unwrap();
        let mut buf = Vec::new();
        m.write_raw(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 16 * 256);
        assert_eq!(&buf[..8], RAW_MAGIC);
        assert_eq!(FieldGrid::read_raw(&buf[..]).unwrap(), m);
        assert!(FieldGrid::read_raw(&buf[1..]).is_err());
        let mut pgm = Vec::new();
        m.write_pgm(&mut pgm).unwrap();
        let head = b"P5\n16 16\n255\n";
        assert_eq!(&pgm[..head.len()], head);
        assert_eq!(pgm.len(), head.len() + 256);
        assert_eq!(*pgm[head.len()..].iter().max().unwrap(), 255);
    }

    #[test]
    fn larger_k0_spreads_less() {
        let w_in = 1.0;
        let g = grid(w_in, 128);
        let u0 = hg_mode(0, 0, w_in, &g).unwrap();
        let r0 = u0.rms_radius();
        let growth: Vec<f64> = [4.0, 8.0, 12.0, 16.0]
            .iter()
            .map(|&k0| free_propagate(&u0, k0, 1.0).unwrap().rms_radius() - r0)
            .collect();
        assert!(growth.windows(2).all(|p| p[1] < p[0]), "{growth:?}");
    }
}
