//! Per-voxel fused state and its update rules.

/// Fused distance, observation count, color and running sum of squared
/// deviations for one voxel.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Voxel {
    /// Running mean of truncated signed distances (m).
    pub tsdf: f64,
    /// Number of fused observations.
    pub weight: u32,
    /// Running mean color, RGB in [0, 1].
    pub color: [f32; 3],
    /// Sum of squared deviations of the fused distances (m²).
    pub s2: f64,
}

impl Voxel {
    pub const EMPTY: Voxel = Voxel {
        tsdf: 0.0,
        weight: 0,
        color: [0.0; 3],
        s2: 0.0,
    };

    #[inline]
    pub fn is_observed(&self) -> bool {
        self.weight > 0
    }

    /// Population variance `s2 / W`; zero for unobserved voxels.
    #[inline]
    pub fn variance(&self) -> f64 {
        if self.weight == 0 {
            0.0
        } else {
            self.s2 / self.weight as f64
        }
    }

    /// Fuses one clipped observation with unit weight.
    ///
    /// The mean is updated first, then `s2` using the old and new mean
    /// (Welford), then the weight is incremented.
    #[inline]
    pub fn update(&mut self, sdf: f64, rgb: Option<[f32; 3]>) {
        let w = self.weight as f64;
        let old = self.tsdf;
        let new = (w * old + sdf) / (w + 1.0);
        self.s2 += (sdf - old) * (sdf - new);
        self.tsdf = new;
        if let Some(c) = rgb {
            let wf = self.weight as f32;
            for (acc, v) in self.color.iter_mut().zip(c) {
                *acc = (wf * *acc + v) / (wf + 1.0);
            }
        }
        self.weight += 1;
    }

    /// [`update`](Self::update) with an optional weight cap. At the cap the
    /// history is rescaled to `cap - 1` observations, keeping its variance.
    #[inline]
    pub fn update_capped(&mut self, sdf: f64, rgb: Option<[f32; 3]>, cap: Option<u32>) {
        if let Some(cap) = cap {
            if cap >= 1 && self.weight >= cap {
                let keep = cap - 1;
                self.s2 *= keep as f64 / self.weight as f64;
                self.weight = keep;
            }
        }
        self.update(sdf, rgb);
    }

    /// Pairwise combination of two disjoint observation sets (Chan et al.).
    pub fn combine(&self, other: &Voxel) -> Voxel {
        if other.weight == 0 {
            return *self;
        }
        if self.weight == 0 {
            return *other;
        }
        let na = self.weight as f64;
        let nb = other.weight as f64;
        let n = na + nb;
        let delta = other.tsdf - self.tsdf;
        let tsdf = self.tsdf + delta * nb / n;
        let s2 = self.s2 + other.s2 + delta * delta * na * nb / n;
        let mut color = [0.0f32; 3];
        for (i, c) in color.iter_mut().enumerate() {
            *c = ((na * self.color[i] as f64 + nb * other.color[i] as f64) / n) as f32;
        }
        Voxel {
            tsdf,
            weight: self.weight + other.weight,
            color,
            s2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn first_and_second_observation() {
        let mut v = Voxel::EMPTY;
        v.update(0.05, None);
        assert_eq!(v.weight, 1);
        assert!((v.tsdf - 0.05).abs() < 1e-15);
        assert_eq!(v.variance(), 0.0);
        v.update(0.07, None);
        assert_eq!(v.weight, 2);
        assert!((v.tsdf - 0.06).abs() < 1e-15);
        assert!((v.s2 - 0.0002).abs() < 1e-15);
        assert!((v.variance() - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn color_is_running_mean() {
        let mut v = Voxel::EMPTY;
        v.update(0.0, Some([1.0, 0.0, 0.5]));
        v.update(0.0, Some([0.0, 0.0, 0.5]));
        assert_eq!(v.color, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn combine_matches_concatenated_stream() {
        let a: Vec<f64> = (0..7).map(|i| 0.01 * i as f64 - 0.02).collect();
        let b: Vec<f64> = (0..4).map(|i| 0.03 - 0.005 * i as f64).collect();
        let fuse = |xs: &[f64]| {
            let mut v = Voxel::EMPTY;
            xs.iter().for_each(|&x| v.update(x, None));
            v
        };
        let merged = fuse(&a).combine(&fuse(&b));
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (mean, var) = two_pass(&all);
        assert_eq!(merged.weight, 11);
        assert!((merged.tsdf - mean).abs() < 1e-15);
        assert!((merged.variance() - var).abs() < 1e-15);
    }

    #[test]
    fn combine_with_empty_is_identity() {
        let mut v = Voxel::EMPTY;
        v.update(0.02, Some([0.2, 0.3, 0.4]));
        assert_eq!(v.combine(&Voxel::EMPTY), v);
        assert_eq!(Voxel::EMPTY.combine(&v), v);
    }
}
