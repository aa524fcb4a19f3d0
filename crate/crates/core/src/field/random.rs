use std::f64::consts::PI;

use rand::Rng;

use super::{Field1D, Field2D, Grid1D, Grid2D};

/// Random trigonometric polynomial with integer modes `1 ≤ |m| ≤ kmax`.
///
/// Each mode gets a uniform coefficient in `[-1, 1]` and a uniform phase; the
/// sum is scaled by `amplitude / sqrt(#modes)`. The mean is zero.
pub fn random_band_limited_2d<R: Rng + ?Sized>(
    grid: Grid2D,
    kmax: u32,
    amplitude: f64,
    rng: &mut R,
) -> Field2D {
    let kmax = kmax as i64;
    let mut modes = Vec::new();
    for mx in 0..=kmax {
        for my in -kmax..=kmax {
            if mx == 0 && my <= 0 {
                continue;
            }
            let coeff: f64 = rng.gen_range(-1.0..=1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            modes.push((mx as f64 * 2.0 * PI / grid.lx, my as f64 * 2.0 * PI / grid.ly, coeff, phase));
        }
    }
    let scale = amplitude / (modes.len().max(1) as f64).sqrt();
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        let y = grid.y(j);
        for i in 0..grid.nx {
            let x = grid.x(i);
            let mut v = 0.0;
            for &(kx, ky, c, p) in &modes {
                v += c * (kx * x + ky * y + p).cos();
            }
            values.push(scale * v);
        }
    }
    Field2D::from_raw(grid, values)
}

/// One-dimensional analogue of [`random_band_limited_2d`].
pub fn random_band_limited_1d<R: Rng + ?Sized>(
    grid: Grid1D,
    kmax: u32,
    amplitude: f64,
    rng: &mut R,
) -> Field1D {
    let modes: Vec<(f64, f64, f64)> = (1..=kmax)
        .map(|m| {
            let coeff: f64 = rng.gen_range(-1.0..=1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            (m as f64 * 2.0 * PI / grid.l, coeff, phase)
        })
        .collect();
    let scale = amplitude / (modes.len().max(1) as f64).sqrt();
    let values = (0..grid.n)
        .map(|i| {
            let x = grid.x(i);
            scale * modes.iter().map(|&(k, c, p)| c * (k * x + p).cos()).sum::<f64>()
        })
        .collect();
    Field1D::from_raw(grid, values)
}
