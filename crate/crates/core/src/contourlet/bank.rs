//! Frequency-domain masks for the non-subsampled pyramid (radial) and
//! directional (angular) filter banks.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Radial lowpass/bandpass pairs plus angular wedges, sampled on the DFT grid
/// of an `height × width` image. All masks are real, in `[0, 1]`, and
/// invariant under point reflection of the frequency plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub levels: usize,
    pub direction_exponent: u32,
    pub height: usize,
    pub width: usize,
    pub lowpass: Vec<Vec<f64>>,
    pub bandpass: Vec<Vec<f64>>,
    /// `wedges[level][direction][bin]`.
    pub wedges: Vec<Vec<Vec<f64>>>,
}

impl FilterBank {
    pub fn directions(&self) -> usize {
        1 << self.direction_exponent
    }

    /// Number of subbands produced: one lowpass plus `levels · 2^j` wedges.
    pub fn subband_count(&self) -> usize {
        1 + self.levels * self.directions()
    }

    /// Lowpass cutoff of level `i` (0-based) in radians per sample.
    pub fn cutoff(level: usize) -> f64 {
        PI / (1u64 << (level + 1)) as f64
    }

    /// Width of the raised-cosine transition around the level-`i` cutoff.
    pub fn transition(level: usize) -> f64 {
        PI / (1u64 << (level + 2)) as f64
    }
}

/// Signed angular frequency of DFT bin `k` of an `n`-point transform. The
/// Nyquist bin of an even length is ambiguous between `+π` and `-π`; both
/// readings are returned so masks can be symmetrized there.
fn bin_frequencies(k: usize, n: usize) -> ([f64; 2], usize) {
    let step = 2.0 * PI / n as f64;
    if n % 2 == 0 && k == n / 2 {
        ([PI, -PI], 2)
    } else if k <= n / 2 {
        ([k as f64 * step, 0.0], 1)
    } else {
        ([(k as f64 - n as f64) * step, 0.0], 1)
    }
}

fn raised_cosine_lowpass(r: f64, cutoff: f64, width: f64) -> f64 {
    let start = cutoff - width / 2.0;
    let stop = cutoff + width / 2.0;
    if r <= start {
        1.0
    } else if r >= stop {
        0.0
    } else {
        0.5 * (1.0 + (PI * (r - start) / width).cos())
    }
}

/// Smooth step from 0 to 1 across `[-tau/2, tau/2]` with `e(x) + e(-x) = 1`.
fn edge(x: f64, tau: f64) -> f64 {
    if x <= -tau / 2.0 {
        0.0
    } else if x >= tau / 2.0 {
        1.0
    } else {
        0.5 * (1.0 + (PI * x / tau).sin())
    }
}

/// Adds the partition-of-unity weights of orientation `theta` (mod π) over
/// `n` sectors into `acc`, scaled by `scale`.
fn accumulate_wedges(theta: f64, n: usize, scale: f64, acc: &mut [f64]) {
    let sector = PI / n as f64;
    let tau = sector / 2.0;
    let phi = theta.rem_euclid(PI);
    let s = ((phi / sector) as usize).min(n - 1);
    let a = phi - s as f64 * sector;
    let b = sector - a;
    if a < tau / 2.0 {
        let w = edge(a, tau);
        acc[s] += scale * w;
        acc[(s + n - 1) % n] += scale * (1.0 - w);
    } else if b < tau / 2.0 {
        let w = edge(b, tau);
        acc[s] += scale * w;
        acc[(s + 1) % n] += scale * (1.0 - w);
    } else {
        acc[s] += scale;
    }
}

/// Builds the masks for an `L`-level, `2^j`-direction decomposition.
pub fn build_filter_bank(levels: usize, direction_exponent: u32, height: usize, width: usize) -> Result<FilterBank> {
    if levels == 0 {
        return Err(Error::InvalidArgument("at least one level required".into()));
    }
    if direction_exponent == 0 || direction_exponent > 6 {
        return Err(Error::InvalidArgument(format!(
            "direction exponent {direction_exponent} must lie in 1..=6"
        )));
    }
    if height < 8 || width < 8 {
        return Err(Error::InvalidArgument(format!("image {height}x{width} smaller than 8x8")));
    }
    // The coarsest cutoff must stay at or above one frequency bin.
    let bin = 2.0 * PI / height.min(width) as f64;
    if FilterBank::cutoff(levels - 1) < bin - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "{levels} levels need at least {}x{} pixels, got {height}x{width}",
            1usize << (levels + 1),
            1usize << (levels + 1)
        )));
    }

    let n_dir = 1usize << direction_exponent;
    let bins = height * width;
    let mut radius = vec![0.0; bins];
    let mut wedge = vec![vec![0.0; bins]; n_dir];
    let mut weights = vec![0.0; n_dir];
    for ky in 0..height {
        let (wy, ny) = bin_frequencies(ky, height);
        for kx in 0..width {
            let (wx, nx) = bin_frequencies(kx, width);
            let idx = ky * width + kx;
            radius[idx] = (wy[0] * wy[0] + wx[0] * wx[0]).sqrt();
            if ky == 0 && kx == 0 {
                continue;
            }
            weights.iter_mut().for_each(|w| *w = 0.0);
            let scale = 1.0 / (ny * nx) as f64;
            for &fy in &wy[..ny] {
                for &fx in &wx[..nx] {
                    accumulate_wedges(fy.atan2(fx), n_dir, scale, &mut weights);
                }
            }
            for (d, w) in weights.iter().enumerate() {
                wedge[d][idx] = *w;
            }
        }
    }

    let mut lowpass = Vec::with_capacity(levels);
    let mut bandpass = Vec::with_capacity(levels);
    for i in 0..levels {
        let (c, w) = (FilterBank::cutoff(i), FilterBank::transition(i));
        let low: Vec<f64> = radius.iter().map(|&r| raised_cosine_lowpass(r, c, w)).collect();
        bandpass.push(low.iter().map(|l| 1.0 - l).collect());
        lowpass.push(low);
    }

    Ok(FilterBank {
        levels,
        direction_exponent,
        height,
        width,
        lowpass,
        bandpass,
        wedges: vec![wedge; levels],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(bank: &FilterBank) {
        let (h, w) = (bank.height, bank.width);
        for i in 0..bank.levels {
            for b in 0..h * w {
                let lo = bank.lowpass[i][b];
                let bp = bank.bandpass[i][b];
                assert!((lo + bp - 1.0).abs() <= 1e-12);
                assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&bp));
                let sum: f64 = bank.wedges[i].iter().map(|m| m[b]).sum();
                assert!((bp * (sum - 1.0)).abs() <= 1e-12, "level {i} bin {b}: sum {sum}");
                for m in &bank.wedges[i] {
                    assert!((0.0..=1.0 + 1e-15).contains(&m[b]));
                }
            }
            // Point symmetry: bin (ky, kx) and (-ky, -kx).
            for ky in 0..h {
                for kx in 0..w {
                    let a = ky * w + kx;
                    let r = ((h - ky) % h) * w + (w - kx) % w;
                    assert!((bank.lowpass[i][a] - bank.lowpass[i][r]).abs() <= 1e-12);
                    for m in &bank.wedges[i] {
                        assert!((m[a] - m[r]).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn one_level_two_directions_partition() {
        let bank = build_filter_bank(1, 1, 16, 16).unwrap();
        assert_eq!(bank.wedges[0].len(), 2);
        for b in 1..256 {
            let s: f64 = bank.wedges[0].iter().map(|m| m[b]).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
        check_invariants(&bank);
    }

    #[test]
    fn three_levels_eight_directions_on_64() {
        let bank = build_filter_bank(3, 3, 64, 64).unwrap();
        assert_eq!(bank.lowpass.len(), 3);
        assert_eq!(bank.wedges.iter().map(|l| l.len()).sum::<usize>(), 24);
        assert_eq!(bank.subband_count(), 25);
        check_invariants(&bank);
    }

    #[test]
    fn odd_and_rectangular_grids_keep_invariants() {
        check_invariants(&build_filter_bank(2, 2, 31, 20).unwrap());
        check_invariants(&build_filter_bank(2, 3, 33, 33).unwrap());
    }

    #[test]
    fn dc_bin_is_pure_lowpass() {
        let bank = build_filter_bank(3, 3, 64, 64).unwrap();
        for i in 0..3 {
            assert_eq!(bank.lowpass[i][0], 1.0);
            assert_eq!(bank.bandpass[i][0], 0.0);
        }
    }

    #[test]
    fn too_many_levels_for_image_is_rejected() {
        assert!(build_filter_bank(3, 3, 8, 8).is_err());
        assert!(build_filter_bank(2, 3, 8, 8).is_ok());
        assert!(build_filter_bank(3, 3, 16, 16).is_ok());
        assert!(build_filter_bank(0, 3, 16, 16).is_err());
    }
}
