//! Seeded 2-D gradient noise.

use crate::rng::SplitMix64;

const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
    (-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
];

/// Classic lattice gradient noise with a shuffled permutation table.
/// Output lies roughly in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GradientNoise {
    perm: [u8; 512],
}

impl GradientNoise {
    pub fn new(rng: &mut SplitMix64) -> Self {
        let mut table: Vec<u8> = (0..=255).collect();
        rng.shuffle(&mut table);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = table[i & 255];
        }
        Self { perm }
    }

    fn gradient(&self, xi: i64, yi: i64) -> (f64, f64) {
        let a = self.perm[(xi & 255) as usize] as usize;
        let h = self.perm[a + (yi & 255) as usize] as usize;
        GRADIENTS[h & 7]
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);
        let dot = |gx: i64, gy: i64, dx: f64, dy: f64| {
            let (u, v) = self.gradient(gx, gy);
            u * dx + v * dy
        };
        let n00 = dot(xi, yi, fx, fy);
        let n10 = dot(xi + 1, yi, fx - 1.0, fy);
        let n01 = dot(xi, yi + 1, fx, fy - 1.0);
        let n11 = dot(xi + 1, yi + 1, fx - 1.0, fy - 1.0);
        let (u, v) = (fade(fx), fade(fy));
        let a = n00 + u * (n10 - n00);
        let b = n01 + u * (n11 - n01);
        // Scale so typical extremes approach +-1.
        (a + v * (b - a)) * std::f64::consts::SQRT_2
    }

    /// Weighted sum over `(size, weight)` octaves, normalized by total weight.
    pub fn layered(&self, x: f64, y: f64, octaves: &[(f64, f64)]) -> f64 {
        let total: f64 = octaves.iter().map(|(_, w)| w).sum();
        octaves
            .iter()
            .map(|(size, w)| w * self.sample(x / size, y / size))
            .sum::<f64>()
            / total
    }
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}
