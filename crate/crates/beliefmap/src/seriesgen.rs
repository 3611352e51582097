//! Piecewise-stationary integer series, prompt strings and token positions.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; Gaussian
//! draws use `rand_distr::Normal`. Series are reproducible within this crate,
//! not across implementations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{DistSpec, MAX_VALUE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(flatten)]
    pub dist: DistSpec,
    pub length: usize,
}

impl Segment {
    pub fn new(mu: f64, sigma: f64, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("segment length must be positive"));
        }
        Ok(Segment { dist: DistSpec::new(mu, sigma)?, length })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedSeries {
    pub segments: Vec<Segment>,
    pub seed: u64,
    pub values: Vec<u32>,
}

impl SegmentedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Generating distribution of the value at index `t`.
    pub fn dist_at(&self, t: usize) -> Option<DistSpec> {
        let mut end = 0;
        for s in &self.segments {
            end += s.length;
            if t < end {
                return Some(s.dist);
            }
        }
        None
    }
}

/// Rounds half away from zero, then clamps to the token range.
pub fn round_clamp(x: f64) -> u32 {
    x.round().clamp(0.0, MAX_VALUE) as u32
}

pub fn gen_series(segments: &[Segment], seed: u64) -> Result<SegmentedSeries> {
    if segments.is_empty() {
        return Err(Error::invalid("empty segments"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(segments.iter().map(|s| s.length).sum());
    for s in segments {
        s.dist.validate()?;
        if s.length == 0 {
            return Err(Error::invalid("segment length must be positive"));
        }
        let normal = Normal::new(s.dist.mu, s.dist.sigma).map_err(|e| Error::invalid(e.to_string()))?;
        values.extend((0..s.length).map(|_| round_clamp(normal.sample(&mut rng))));
    }
    Ok(SegmentedSeries { segments: segments.to_vec(), seed, values })
}

/// Alternating A, B, A, ... segments, `m_switches` of them.
pub fn gen_meta_series(
    m_switches: usize,
    len_per_segment: usize,
    dist_a: DistSpec,
    dist_b: DistSpec,
    seed: u64,
) -> Result<SegmentedSeries> {
    if m_switches < 2 {
        return Err(Error::invalid("meta series needs at least 2 segments"));
    }
    if len_per_segment == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    let segments: Vec<Segment> = (0..m_switches)
        .map(|i| Segment { dist: if i % 2 == 0 { dist_a } else { dist_b }, length: len_per_segment })
        .collect();
    gen_series(&segments, seed)
}

pub fn format_prompt(series: &SegmentedSeries) -> String {
    format_values(&series.values)
}

pub fn format_values(values: &[u32]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Global position of the comma token that predicts number `t + 1`, counting
/// the begin-of-text token at position 0.
pub fn com2num_index(t: i64) -> Result<i64> {
    if t < 0 {
        return Err(Error::invalid(format!("number index must be non-negative, got {t}")));
    }
    Ok(2 * t + 2)
}

/// Position of the number token `t` itself (the num2com position).
pub fn num2com_index(t: i64) -> Result<i64> {
    if t < 0 {
        return Err(Error::invalid(format!("number index must be non-negative, got {t}")));
    }
    Ok(2 * t + 1)
}

/// Token count of a prompt of `n` numbers with one token per number and per
/// comma, plus the begin token.
pub fn prompt_token_count(n: usize) -> usize {
    if n == 0 {
        1
    } else {
        2 * n
    }
}

/// Parses `mu:sigma:length` triples separated by commas.
pub fn parse_segments(spec: &str) -> Result<Vec<Segment>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let f: Vec<&str> = part.trim().split(':').collect();
            if f.len() != 3 {
                return Err(Error::invalid(format!("segment '{part}' must be mu:sigma:length")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad number '{s}'")));
            let len = f[2].parse::<usize>().map_err(|_| Error::invalid(format!("bad length '{}'", f[2])))?;
            Segment::new(num(f[0])?, num(f[1])?, len)
        })
        .collect()
}
