//! Reproducible random streams and space-filling designs.
//!
//! Every consumer of randomness receives an [`RngStream`], a `(seed, stream_id)`
//! pair that deterministically selects a ChaCha8 keystream. Streams can be
//! split into child streams, so parallel workers each own an independent
//! generator without sharing state.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::BoxDomain;

/// The concrete generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Identifies one independent pseudo-random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream `index` of this stream.
    ///
    /// Children of one parent share a derived key and differ in the ChaCha
    /// stream counter, so they never overlap. The derived key mixes both the
    /// parent's seed and stream id.
    pub fn substream(&self, index: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5DEE_CE66)));
        RngStream {
            seed: key,
            stream_id: index,
        }
    }
}

/// Plain Latin hypercube design of `m` points in `[0,1]^n`.
///
/// Each column is cut into `m` equal strata and receives exactly one point per
/// stratum, jittered uniformly inside it. Rows are returned as points.
pub fn latin_hypercube<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "latin hypercube needs m >= 1 and n >= 1 (got m={m}, n={n})"
        )));
    }
    let mut points = vec![vec![0.0; n]; m];
    let mut perm: Vec<usize> = (0..m).collect();
    let width = 1.0 / m as f64;
    for j in 0..n {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            // stays below the stratum's upper edge for u < 1
            points[i][j] = ((stratum as f64 + u) * width).min(1.0);
        }
    }
    Ok(points)
}

/// Affine map of unit-cube points onto `domain`.
pub fn scale_to_box(unit: &[Vec<f64>], domain: &BoxDomain) -> Result<Vec<Vec<f64>>> {
    unit.iter()
        .map(|u| {
            if u.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    what: "unit-cube point vs domain",
                    expected: domain.dim(),
                    got: u.len(),
                });
            }
            Ok(domain.from_unit(u))
        })
        .collect()
}
