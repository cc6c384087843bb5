//! The heat semigroup `e^{tΔ}` on the periodic box, applied as a Fourier
//! multiplier, plus a direct real-space convolution used as an oracle.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};

const CACHE_LIMIT: usize = 512;

/// Spectral propagator for one grid. Cheap to share across threads.
pub struct Propagator {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `ξ²` for each per-axis FFT index.
    axis_xi2: Vec<f64>,
    /// Per-axis factors `e^{−t ξ²}` keyed by the bit pattern of `t`.
    cache: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator").field("grid", &self.grid).finish()
    }
}

impl Propagator {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let dk = PI / grid.half_width();
        let axis_xi2 = (0..n)
            .map(|i| {
                let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                (k * dk) * (k * dk)
            })
            .collect();
        Self {
            grid,
            forward,
            inverse,
            axis_xi2,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `|ξ|²` for every mode in flat spectral order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.grid.n();
        let dim = self.grid.dim();
        (0..self.grid.len())
            .map(|idx| {
                let mut rest = idx;
                let mut s = 0.0;
                for _ in 0..dim {
                    s += self.axis_xi2[rest % n];
                    rest /= n;
                }
                s
            })
            .collect()
    }

    fn axis_factors(&self, t: f64) -> Arc<Vec<f64>> {
        let key = t.to_bits();
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(f) = cache.get(&key) {
            return Arc::clone(f);
        }
        let f = Arc::new(self.axis_xi2.iter().map(|x| (-t * x).exp()).collect::<Vec<_>>());
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&f));
        f
    }

    /// Multiplier `e^{−t|ξ|²}` per flat mode. Every entry lies in `[0, 1]`.
    pub fn multipliers(&self, t: f64) -> Vec<f64> {
        let f = self.axis_factors(t);
        let n = self.grid.n();
        (0..self.grid.len())
            .map(|idx| {
                let mut rest = idx;
                let mut m = 1.0;
                for _ in 0..self.grid.dim() {
                    m *= f[rest % n];
                    rest /= n;
                }
                m
            })
            .collect()
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let dim = self.grid.dim();
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process(data);
                continue;
            }
            // Gather every line along `axis` contiguously, transform, scatter back.
            let block = stride * n;
            let mut pos = 0;
            for outer in 0..total / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for j in 0..n {
                        line[pos + j] = data[base + j * stride];
                    }
                    pos += n;
                }
            }
            fft.process(&mut line);
            pos = 0;
            for outer in 0..total / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for j in 0..n {
                        data[base + j * stride] = line[pos + j];
                    }
                    pos += n;
                }
            }
        }
    }

    /// Unnormalized forward DFT of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse DFT with the `1/n^N` normalization; returns real parts.
    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    pub fn apply(&self, f: &Field, t: f64) -> Result<Field> {
        self.grid.check_same(f.grid())?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "propagation time {t} must be >= 0"
            )));
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        Field::new(self.grid, self.apply_values(f.values(), t))
    }

    pub(crate) fn apply_values(&self, values: &[f64], t: f64) -> Vec<f64> {
        let mut spec = self.forward(values);
        let m = self.multipliers(t);
        for (c, w) in spec.iter_mut().zip(&m) {
            *c *= *w;
        }
        self.inverse(spec)
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self, f: &Field) -> Result<Field> {
        self.grid.check_same(f.grid())?;
        let mut spec = self.forward(f.values());
        for (c, l) in spec.iter_mut().zip(self.eigenvalues()) {
            *c *= -l;
        }
        Field::new(self.grid, self.inverse(spec))
    }

    /// Whether `‖e^{tΔ} f‖_q ≤ ‖f‖_q (1 + 1e−12)`.
    pub fn verify_contraction(&self, f: &Field, t: f64, q: f64) -> Result<bool> {
        let before = f.lr_norm(q)?;
        let after = self.apply(f, t)?.lr_norm(q)?;
        Ok(after <= before * (1.0 + 1e-12))
    }
}

/// `‖e^{tΔ}φ‖_r · t^{(N/2)(1/q − 1/r)} / ‖φ‖_q`.
pub fn smoothing_ratio(prop: &Propagator, phi: &Field, t: f64, q: f64, r: f64) -> Result<f64> {
    let denom = phi.lr_norm(q)?;
    if denom == 0.0 {
        return Err(Error::ZeroProbe);
    }
    let n = prop.grid().dim() as f64;
    let num = prop.apply(phi, t)?.lr_norm(r)?;
    Ok(num * t.powf(0.5 * n * (1.0 / q - 1.0 / r)) / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    pub q: f64,
    pub r: f64,
    /// `(t, ratio)` for every probe and time.
    pub samples: Vec<(f64, f64)>,
    pub c1hat: f64,
}

/// Empirical smoothing constant: the largest ratio over probes and times.
/// Meaningful on the torus only while `t ≤ (L/8)²`.
pub fn estimate_smoothing_constant(
    prop: &Propagator,
    q: f64,
    r: f64,
    probes: &[Field],
    times: &[f64],
) -> Result<SmoothingReport> {
    if !(q >= 1.0) || !(r >= q) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= q <= r, got q = {q}, r = {r}"
        )));
    }
    let mut samples = Vec::with_capacity(probes.len() * times.len());
    for phi in probes {
        for &t in times {
            samples.push((t, smoothing_ratio(prop, phi, t, q, r)?));
        }
    }
    let c1hat = samples.iter().fold(0.0_f64, |m, s| m.max(s.1));
    Ok(SmoothingReport { q, r, samples, c1hat })
}

/// Direct real-space convolution with the periodized Gaussian kernel.
/// Costs `O(n^{2N})`; intended for small grids.
pub fn oracle_convolve(f: &Field, t: f64) -> Result<Field> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("oracle time {t} must be > 0")));
    }
    let grid = *f.grid();
    let (n, dim, h) = (grid.n(), grid.dim(), grid.spacing());
    let period = 2.0 * grid.half_width();
    let images = ((4.0 * t * 50.0).sqrt() / period).ceil() as i64 + 1;
    let norm = (4.0 * PI * t).powf(-0.5);
    // One-dimensional periodized kernel by index offset, times the cell width.
    let k1: Vec<f64> = (0..n)
        .map(|d| {
            let x = d as f64 * h;
            (-images..=images)
                .map(|m| {
                    let y = x + m as f64 * period;
                    norm * (-y * y / (4.0 * t)).exp()
                })
                .sum::<f64>()
                * h
        })
        .collect();
    let idx = |flat: usize| -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = flat;
        for a in (0..dim).rev() {
            out[a] = rest % n;
            rest /= n;
        }
        out
    };
    let vals = f.values();
    let out = (0..grid.len())
        .map(|i| {
            let ii = idx(i);
            let mut acc = 0.0;
            for (j, v) in vals.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                let jj = idx(j);
                let mut k = 1.0;
                for a in 0..dim {
                    k *= k1[(ii[a] + n - jj[a]) % n];
                }
                acc += k * v;
            }
            acc
        })
        .collect();
    Field::new(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{heat_kernel, make_bump, BumpKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn gaussian_to_gaussian() {
        let g = Grid::new(2, 16.0, 64).unwrap();
        let prop = Propagator::new(g);
        let out = prop.apply(&heat_kernel(&g, 0.5).unwrap(), 1.5).unwrap();
        let want = heat_kernel(&g, 2.0).unwrap();
        let err = out
            .values()
            .iter()
            .zip(want.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / want.sup_norm() < 1e-6, "{err}");
    }

    #[test]
    fn constants_and_identity() {
        let g = Grid::new(1, 4.0, 32).unwrap();
        let prop = Propagator::new(g);
        let c = Field::constant(g, 2.5);
        let out = prop.apply(&c, 3.0).unwrap();
        assert!(out.values().iter().all(|v| (v - 2.5).abs() < 1e-14));
        let f = random_field(g, 1);
        assert_eq!(prop.apply(&f, 0.0).unwrap(), f);
        assert!(prop.apply(&f, -1.0).is_err());
        let other = Field::zeros(Grid::new(1, 4.0, 16).unwrap());
        assert!(matches!(prop.apply(&other, 1.0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn multipliers_in_unit_interval() {
        let g = Grid::new(2, 3.0, 16).unwrap();
        let prop = Propagator::new(g);
        assert!(prop.multipliers(0.0).iter().all(|m| *m == 1.0));
        assert!(prop.multipliers(0.7).iter().all(|m| (0.0..=1.0).contains(m)));
    }

    #[test]
    fn semigroup_law() {
        let g = Grid::new(2, 4.0, 32).unwrap();
        let prop = Propagator::new(g);
        let f = random_field(g, 7);
        let two = prop.apply(&prop.apply(&f, 0.3).unwrap(), 0.45).unwrap();
        let one = prop.apply(&f, 0.75).unwrap();
        for (a, b) in two.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_cases() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let prop = Propagator::new(g);
        let gauss = heat_kernel(&g, 0.4).unwrap();
        for t in [0.0, 0.1, 1.0, 10.0] {
            assert!(prop.verify_contraction(&gauss, t, 1.0).unwrap());
        }
        let signed = Field::from_fn(g, |x| x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
        assert!(prop.verify_contraction(&signed, 0.5, f64::INFINITY).unwrap());
    }

    #[test]
    fn oracle_agrees_with_spectral() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let prop = Propagator::new(g);
        let f = random_field(g, 3);
        let a = prop.apply(&f, 0.1).unwrap();
        let b = oracle_convolve(&f, 0.1).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        let g2 = Grid::new(2, 1.0, 16).unwrap();
        let f2 = random_field(g2, 4);
        let a = Propagator::new(g2).apply(&f2, 0.05).unwrap();
        let b = oracle_convolve(&f2, 0.05).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-10);
        }
        let z = oracle_convolve(&Field::zeros(g), 0.1).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        assert!(oracle_convolve(&f, 0.0).is_err());
    }

    #[test]
    fn point_mass_gives_kernel() {
        let g = Grid::new(1, 2.0, 16).unwrap();
        let h = g.spacing();
        let mut v = vec![0.0; 16];
        v[8] = 1.0 / h;
        let delta = Field::new(g, v).unwrap();
        let out = oracle_convolve(&delta, 0.2).unwrap();
        for i in 0..16 {
            let x = g.axis_coord(i);
            let want: f64 = (-5..=5)
                .map(|m| {
                    let y = x + 4.0 * m as f64;
                    (4.0 * PI * 0.2f64).powf(-0.5) * (-y * y / 0.8).exp()
                })
                .sum();
            assert!((out.values()[i] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn smoothing_ratio_equal_indices_at_most_one() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let prop = Propagator::new(g);
        let probes = vec![
            make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 0.5, 1.0).unwrap(),
            make_bump(&g, BumpKind::CompactBump, &[1.0, 0.0], 1.0, -2.0).unwrap(),
        ];
        for q in [1.0, 2.0, f64::INFINITY] {
            let rep = estimate_smoothing_constant(&prop, q, q, &probes, &[0.1, 0.5, 1.0]).unwrap();
            // The truncated spectral kernel is not exactly positive, so L^1 can grow by ~1e-9.
            assert!(rep.c1hat <= 1.0 + 1e-8, "q = {q}: {}", rep.c1hat);
        }
        assert!(estimate_smoothing_constant(&prop, 2.0, 1.0, &probes, &[0.1]).is_err());
        let zero = [Field::zeros(g)];
        assert_eq!(
            estimate_smoothing_constant(&prop, 1.0, 2.0, &zero, &[0.1]),
            Err(Error::ZeroProbe)
        );
    }

    #[test]
    fn spectral_laplacian_of_gaussian() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let prop = Propagator::new(g);
        let f = make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 1.0, 1.0).unwrap();
        let lap = prop.laplacian(&f).unwrap();
        // Δ e^{−r²/2} = (r² − 2) e^{−r²/2} in two dimensions
        for i in (0..g.len()).step_by(37) {
            let x = g.point(i);
            let r2 = x[0] * x[0] + x[1] * x[1];
            let want = (r2 - 2.0) * (-r2 / 2.0).exp();
            assert!((lap.values()[i] - want).abs() < 1e-10);
        }
    }
}
