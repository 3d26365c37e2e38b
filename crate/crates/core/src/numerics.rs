//! Quadrature, finite differences, sampling sequences and deterministic reductions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::Vector;

/// Chunk length for parallel reductions. Fixed so sums never depend on the thread count.
pub const REDUCTION_CHUNK: usize = 256;

/// Σ f(i) for i in 0..len, evaluated in parallel over fixed chunks and combined in index order.
pub fn det_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partials: Vec<f64> = (0..len.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(len);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partials.into_iter().sum()
}

/// Fallible variant of [`det_sum`]; the first error in index order wins.
pub fn try_det_sum<F>(len: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let partials: Vec<Result<f64>> = (0..len.div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(len);
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total)
}

/// Composite Simpson weights for `intervals` equal panels on [0, 1].
pub fn simpson_weights(intervals: usize) -> Result<Vec<f64>> {
    if intervals < 2 || intervals % 2 != 0 {
        return Err(Error::invalid(format!(
            "Simpson's rule needs an even interval count, got {intervals}"
        )));
    }
    let h = 1.0 / intervals as f64;
    Ok((0..=intervals)
        .map(|k| {
            let c = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect())
}

/// Fourth-order central difference of a vector-valued function of one real variable at 0.
pub fn central_diff4<F>(h: f64, mut f: F) -> Result<Vector>
where
    F: FnMut(f64) -> Result<Vector>,
{
    let fp2 = f(2.0 * h)?;
    let fp1 = f(h)?;
    let fm1 = f(-h)?;
    let fm2 = f(-2.0 * h)?;
    Ok((fm2 - fp2 + (fp1 - fm1) * 8.0) / (12.0 * h))
}

/// Axis-aligned box `[lo, hi]` in ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::invalid("box lower corner exceeds upper corner"));
        }
        Ok(BoxRegion { lo, hi })
    }

    pub fn cube(d: usize, half_width: f64) -> Self {
        BoxRegion {
            lo: vec![-half_width; d],
            hi: vec![half_width; d],
        }
    }

    /// Smallest box containing all points.
    pub fn bounding(points: &[&Vector]) -> Self {
        let d = points[0].len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        BoxRegion { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &Vector, slack: f64) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|k| x[k] >= self.lo[k] - slack && x[k] <= self.hi[k] + slack)
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|k| self.lo[k] + u[k] * (self.hi[k] - self.lo[k])),
        )
    }

    pub fn corners(&self) -> Vec<Vector> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                Vector::from_iterator(
                    d,
                    (0..d).map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] }),
                )
            })
            .collect()
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// The `index`-th point of the Halton sequence in [0,1)^d. Prefixes are nested.
pub fn halton(index: u64, d: usize) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Least-squares slope of log(err) against log(h): the observed convergence order.
pub fn observed_order(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        let w = simpson_weights(8).unwrap();
        let integral: f64 = w
            .iter()
            .enumerate()
            .map(|(k, wk)| {
                let t = k as f64 / 8.0;
                wk * (1.0 + 2.0 * t - 3.0 * t * t + 4.0 * t * t * t)
            })
            .sum();
        assert!((integral - 2.0).abs() < 1e-14);
        assert!(simpson_weights(7).is_err());
    }

    #[test]
    fn det_sum_is_thread_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3;
        let a = det_sum(10_000, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| det_sum(10_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn halton_prefix_points() {
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, 1), vec![0.25]);
    }

    #[test]
    fn central_difference_order() {
        let d = central_diff4(1e-2, |t| Ok(Vector::from_vec(vec![(1.0 + t).exp()]))).unwrap();
        assert!((d[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn order_of_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v| 3.0 * v * v).collect();
        assert!((observed_order(&h, &e) - 2.0).abs() < 1e-12);
    }
}
