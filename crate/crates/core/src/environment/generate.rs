use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::{lattice_nodes, Generator, PotentialField, Window, FORMAT_VERSION};
use crate::error::{invalid, Error, Result};
use crate::numerics::stream_rng;

/// Driving process `L` for the mollified generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    Poisson,
    Wiener,
}

/// Sub-grid refinement for the Wiener convolution.
const WIENER_REFINE: usize = 10;

/// Stream id for unit cell `k`; independent of the window so that any two
/// windows see the same realization where they overlap.
fn cell_stream(k: i64) -> u64 {
    k as u64
}

/// `V(x) = int f(x - y) g(L_y - L_{y-1}) dy` with `g(a) = (a v 0) ^ 1`.
///
/// For the Poisson process `g(L_y - L_{y-1})` is the indicator of
/// `y in U [p, p + 1)` over the points `p`, so the convolution is evaluated
/// exactly through the kernel CDF. For the Wiener process (`L = scale * W`)
/// the clipped increments are sampled on a sub-grid ten times finer than
/// `grid_step` and convolved by quadrature with weights normalized to one.
pub fn generate_mollified(
    seed: u64,
    process: Process,
    rate_or_scale: f64,
    kernel: KernelSpec,
    window: Window,
    grid_step: f64,
) -> Result<PotentialField> {
    kernel.validate()?;
    if grid_step > kernel.radius / 2.0 {
        return Err(Error::Undersampled {
            grid_step,
            radius: kernel.radius,
        });
    }
    if !(rate_or_scale >= 0.0 && rate_or_scale.is_finite()) {
        return Err(invalid(format!(
            "rate/scale must be finite and nonnegative, got {rate_or_scale}"
        )));
    }
    let (first_index, n) = lattice_nodes(window, grid_step)?;
    let nodes: Vec<f64> = (0..n)
        .map(|i| (first_index + i as i64) as f64 * grid_step)
        .collect();
    let (values, derivative_values, generator) = match process {
        Process::Poisson => {
            let (v, d) = poisson_field(seed, rate_or_scale, &kernel, &nodes);
            (
                v,
                d,
                Generator::PoissonMollified {
                    rate: rate_or_scale,
                    kernel,
                },
            )
        }
        Process::Wiener => {
            let (v, d) = wiener_field(seed, rate_or_scale, &kernel, first_index, n, grid_step)?;
            (
                v,
                d,
                Generator::WienerMollified {
                    scale: rate_or_scale,
                    kernel,
                },
            )
        }
    };
    let field = PotentialField {
        format_version: FORMAT_VERSION,
        generator,
        seed,
        grid_step,
        first_index,
        values,
        derivative_values,
    };
    field.validate()?;
    Ok(field)
}

/// Points of a rate-`rate` Poisson process in unit cells `k_lo..=k_hi`.
fn poisson_points(seed: u64, rate: f64, k_lo: i64, k_hi: i64) -> Vec<f64> {
    let mut points = Vec::new();
    if rate == 0.0 {
        return points;
    }
    let dist = Poisson::new(rate).expect("positive finite rate");
    for k in k_lo..=k_hi {
        let mut rng = stream_rng(seed, cell_stream(k));
        let count: f64 = dist.sample(&mut rng);
        let start = points.len();
        for _ in 0..count as usize {
            points.push(k as f64 + rng.random::<f64>());
        }
        points[start..].sort_by(f64::total_cmp);
    }
    points
}

/// Union of `[p, p + 1)` over sorted points, as disjoint sorted intervals.
fn merge_unit_intervals(points: &[f64]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        match out.last_mut() {
            Some(last) if p <= last.1 => last.1 = last.1.max(p + 1.0),
            _ => out.push((p, p + 1.0)),
        }
    }
    out
}

fn poisson_field(seed: u64, rate: f64, kernel: &KernelSpec, nodes: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let r = kernel.radius;
    let lo = nodes[0];
    let hi = nodes[nodes.len() - 1];
    let k_lo = (lo - r - 1.0).floor() as i64 - 1;
    let k_hi = (hi + r).ceil() as i64 + 1;
    let intervals = merge_unit_intervals(&poisson_points(seed, rate, k_lo, k_hi));
    let mut values = Vec::with_capacity(nodes.len());
    let mut derivs = Vec::with_capacity(nodes.len());
    // Intervals are sorted and disjoint; only those meeting (x - r, x + r)
    // contribute, and wholly covering intervals contribute exactly 1.
    let mut first = 0usize;
    for &x in nodes {
        while first < intervals.len() && intervals[first].1 <= x - r {
            first += 1;
        }
        let mut v = 0.0;
        let mut d = 0.0;
        for &(a, b) in intervals[first..].iter().take_while(|(a, _)| *a < x + r) {
            v += kernel.cdf(x - a) - kernel.cdf(x - b);
            d += kernel.density(x - a) - kernel.density(x - b);
        }
        values.push(v.clamp(0.0, 1.0));
        derivs.push(d);
    }
    (values, derivs)
}

fn wiener_field(
    seed: u64,
    scale: f64,
    kernel: &KernelSpec,
    first_index: i64,
    n: usize,
    grid_step: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let per_unit_f = WIENER_REFINE as f64 / grid_step;
    let per_unit = per_unit_f.round() as i64;
    if (per_unit_f - per_unit as f64).abs() > 1e-9 * per_unit_f {
        return Err(invalid(format!(
            "wiener generator needs 1/grid_step to be an integer, got grid_step {grid_step}"
        )));
    }
    let sub = 1.0 / per_unit as f64;
    let refine = WIENER_REFINE as i64;
    // Kernel offsets z_j = j * sub, |z_j| <= r.
    let half = (kernel.radius / sub).floor() as i64;
    let mut w: Vec<f64> = (-half..=half)
        .map(|j| kernel.density(j as f64 * sub))
        .collect();
    let mut wd: Vec<f64> = (-half..=half)
        .map(|j| kernel.density_derivative(j as f64 * sub))
        .collect();
    // Dividing by the discrete mass makes the weights sum to one, which keeps
    // values in [0, 1]; the derivative weights share the same normalization.
    let mass: f64 = w.iter().sum();
    for x in w.iter_mut().chain(wd.iter_mut()) {
        *x /= mass;
    }

    // Sub-grid index m refers to y_m = m * sub. G(y_m) uses increments of
    // sub-intervals m - per_unit .. m - 1, i.e. (y_m - 1, y_m].
    let m_lo = first_index * refine - half;
    let m_hi = (first_index + n as i64 - 1) * refine + half;
    let cell_lo = (m_lo - per_unit).div_euclid(per_unit);
    let cell_hi = m_hi.div_euclid(per_unit);
    // prefix[c][j] = sum of the first j increments of unit cell c.
    let prefix: Vec<Vec<f64>> = (cell_lo..=cell_hi)
        .map(|c| {
            let mut rng = stream_rng(seed, cell_stream(c));
            let sd = sub.sqrt();
            let mut acc = 0.0;
            let mut p = Vec::with_capacity(per_unit as usize + 1);
            p.push(0.0);
            for _ in 0..per_unit {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += sd * z;
                p.push(acc);
            }
            p
        })
        .collect();
    let g: Vec<f64> = (m_lo..=m_hi)
        .map(|m| {
            let c = m.div_euclid(per_unit);
            let j = m.rem_euclid(per_unit) as usize;
            let tail = &prefix[(c - 1 - cell_lo) as usize];
            let head = &prefix[(c - cell_lo) as usize];
            let inc = (tail[per_unit as usize] - tail[j]) + head[j];
            (scale * inc).clamp(0.0, 1.0)
        })
        .collect();

    let mut values = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    for i in 0..n as i64 {
        // x_i = (first_index + i) * grid_step = m_x * sub with m_x below.
        let m_x = (first_index + i) * refine;
        let mut v = 0.0;
        let mut d = 0.0;
        for (k, j) in (-half..=half).enumerate() {
            let gi = g[(m_x - j - m_lo) as usize];
            v += w[k] * gi;
            d += wd[k] * gi;
        }
        values.push(v.clamp(0.0, 1.0));
        derivs.push(d);
    }
    Ok((values, derivs))
}

/// `V(x) = (1 - cos(2 pi x / period)) / 2`.
pub fn generate_periodic(period: f64, window: Window, grid_step: f64) -> Result<PotentialField> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(invalid(format!("period must be positive, got {period}")));
    }
    let (first_index, n) = lattice_nodes(window, grid_step)?;
    let k = 2.0 * std::f64::consts::PI / period;
    let nodes = (0..n).map(|i| (first_index + i as i64) as f64 * grid_step);
    let (values, derivative_values) = nodes
        .map(|x| (0.5 * (1.0 - (k * x).cos()), 0.5 * k * (k * x).sin()))
        .unzip();
    let field = PotentialField {
        format_version: FORMAT_VERSION,
        generator: Generator::Periodic { period },
        seed: 0,
        grid_step,
        first_index,
        values,
        derivative_values,
    };
    field.validate()?;
    Ok(field)
}

/// `V = level` everywhere. Tagged so that the assumption audit reports the
/// missing valleys and hills.
pub fn generate_constant(level: f64, window: Window, grid_step: f64) -> Result<PotentialField> {
    if !(0.0..=1.0).contains(&level) {
        return Err(invalid(format!("level must lie in [0, 1], got {level}")));
    }
    let (first_index, n) = lattice_nodes(window, grid_step)?;
    Ok(PotentialField {
        format_version: FORMAT_VERSION,
        generator: Generator::Constant { level },
        seed: 0,
        grid_step,
        first_index,
        values: vec![level; n],
        derivative_values: vec![0.0; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_intervals_are_disjoint() {
        let m = merge_unit_intervals(&[0.0, 0.5, 2.0, 2.9, 5.0]);
        assert_eq!(m, vec![(0.0, 1.5), (2.0, 3.9), (5.0, 6.0)]);
    }

    #[test]
    fn zero_rate_gives_zero_field() {
        let f = generate_mollified(
            3,
            Process::Poisson,
            0.0,
            KernelSpec::biweight(1.0),
            Window::new(-10.0, 10.0),
            0.1,
        )
        .unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!(f.derivative_values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wiener_requires_integer_cells() {
        let r = generate_mollified(
            3,
            Process::Wiener,
            1.0,
            KernelSpec::biweight(1.0),
            Window::new(0.0, 0.9),
            0.3,
        );
        assert!(r.is_err());
    }

    #[test]
    fn wiener_field_in_range() {
        let f = generate_mollified(
            9,
            Process::Wiener,
            1.0,
            KernelSpec::biweight(1.0),
            Window::new(-20.0, 20.0),
            0.1,
        )
        .unwrap();
        assert!(f.min_value() >= 0.0 && f.max_value() <= 1.0);
        assert!(f.max_value() > 0.3);
    }
}
