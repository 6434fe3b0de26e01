use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Infinite plane `normal . x = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Solid value-noise texture summed over octaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub seed: u64,
    /// Lattice frequency of the coarsest octave, cycles per meter.
    pub base_frequency: f64,
    pub octaves: u32,
    /// Amplitude ratio between successive octaves.
    pub gain: f64,
}

impl Default for Texture {
    fn default() -> Self {
        Self {
            seed: 7,
            base_frequency: 0.5,
            octaves: 5,
            gain: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub planes: Vec<Plane>,
    pub spheres: Vec<Sphere>,
    pub texture: Texture,
}

/// Nearest ray-surface hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter: the hit is `origin + t * dir`.
    pub t: f64,
    pub point: Vector3<f64>,
}

const MIN_T: f64 = 1e-9;

impl SyntheticScene {
    /// Closest intersection with positive ray parameter.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best = f64::INFINITY;
        for p in &self.planes {
            let n = Vector3::from(p.normal);
            let denom = n.dot(dir);
            if denom.abs() < 1e-15 {
                continue;
            }
            let t = (p.offset - n.dot(origin)) / denom;
            if t > MIN_T && t < best {
                best = t;
            }
        }
        for s in &self.spheres {
            let c = Vector3::from(s.center);
            let oc = origin - c;
            let a = dir.dot(dir);
            let b = oc.dot(dir);
            let cc = oc.dot(&oc) - s.radius * s.radius;
            let disc = b * b - a * cc;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            // numerically stable roots
            let q = if b > 0.0 { -(b + sq) } else { -b + sq };
            let (r1, r2) = (q / a, if q != 0.0 { cc / q } else { f64::INFINITY });
            for t in [r1.min(r2), r1.max(r2)] {
                if t > MIN_T && t < best {
                    best = t;
                    break;
                }
            }
        }
        best.is_finite().then(|| Hit {
            t: best,
            point: origin + dir * best,
        })
    }

    /// True when the segment from `from` to `point` is unobstructed.
    pub fn visible_from(&self, from: &Vector3<f64>, point: &Vector3<f64>) -> bool {
        let dir = point - from;
        match self.intersect(from, &dir) {
            Some(hit) => hit.t > 1.0 - 1e-6,
            None => true,
        }
    }

    /// Texture intensity in [0, 255] at a world point.
    pub fn intensity(&self, p: &Vector3<f64>) -> f32 {
        let tex = &self.texture;
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = tex.base_frequency;
        for octave in 0..tex.octaves {
            sum += amp * value_noise(p * freq, tex.seed.wrapping_add(octave as u64 * 0x9E37));
            norm += amp;
            amp *= tex.gain;
            freq *= 2.0;
        }
        let v = sum / norm;
        // value noise sums concentrate around 0.5; stretch the contrast
        (128.0 + 400.0 * (v - 0.5)).clamp(0.0, 255.0) as f32
    }
}

fn hash3(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x51_7C_C1_B7_27_22_0A_95;
    for v in [x, y, z] {
        h ^= v as u64;
        h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 31;
    }
    // splitmix finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(p: Vector3<f64>, seed: u64) -> f64 {
    let base = p.map(f64::floor);
    let frac = p - base;
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let (sx, sy, sz) = (smooth(frac.x), smooth(frac.y), smooth(frac.z));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let corner = |dx: i64, dy: i64, dz: i64| hash3(ix + dx, iy + dy, iz + dz, seed);
    let x00 = lerp(corner(0, 0, 0), corner(1, 0, 0), sx);
    let x10 = lerp(corner(0, 1, 0), corner(1, 1, 0), sx);
    let x01 = lerp(corner(0, 0, 1), corner(1, 0, 1), sx);
    let x11 = lerp(corner(0, 1, 1), corner(1, 1, 1), sx);
    lerp(lerp(x00, x10, sy), lerp(x01, x11, sy), sz)
}
