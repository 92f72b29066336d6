//! Counter-based random number generation.
//!
//! Every 64-bit output word is a pure function of (seed, stream, counter),
//! computed by composing the SplitMix64 finalizer three times. Streams are
//! assigned one per path, so sampling is reproducible bit-for-bit regardless
//! of how paths are distributed over threads.

/// SplitMix64 state advance + output finalizer (Steele, Lea & Flood 2014).
#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// The raw output word at position `counter` of stream `stream`.
#[inline]
pub fn word(seed: u64, stream: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed).wrapping_add(stream)).wrapping_add(counter))
}

/// A stateful view over one (seed, stream) substream.
///
/// Cheap to construct; holds only the counter and a cached second normal
/// from the Box-Muller pair.
#[derive(Debug, Clone)]
pub struct Stream {
    seed: u64,
    stream: u64,
    counter: u64,
    cached_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Stream { seed, stream, counter: 0, cached_normal: None }
    }

    #[inline]
    fn next_word(&mut self) -> u64 {
        let w = word(self.seed, self.stream, self.counter);
        self.counter += 1;
        w
    }

    /// Uniform in the open interval (0, 1): ((w >> 11) + 0.5) · 2⁻⁵³.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_word() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller; pairs are cached so consecutive
    /// calls consume two uniforms per two normals.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        let (sin, cos) = theta.sin_cos();
        self.cached_normal = Some(r * sin);
        r * cos
    }

    /// Fill `out` with independent standard normals.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}
