//! Seeded synthetic data streams: realizable regression inside the
//! norm-bounded hypothesis class, and a fixed 2-d nonlinear toy target.
//!
//! Labels always lie in [-1, 1] (clamped after noise), and train/test splits
//! are disjoint because they draw from sub-streams derived with distinct role
//! tags from the same seed.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{Coefficients, Hypothesis};
use crate::feature_space::{Example, FeatureFamily};
use crate::rng::RngStream;

/// Which split of an experiment a stream feeds. Streams with the same seed
/// but different roles are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Train,
    Test,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Train => 0x7261,
            StreamRole::Test => 0x7465,
        }
    }
}

enum Source {
    /// Ground-truth hypothesis with additive gaussian label noise.
    Realizable { truth: Hypothesis, noise_sd: f64 },
    /// cos(3 |x|^2) exp(-|x|^2) on [-1,1]^2 with additive gaussian noise.
    Toy2d { noise_sd: f64 },
    /// A fixed, finite sequence (e.g. loaded from a file).
    Fixed { pairs: Vec<(Example, f64)> },
}

/// A seeded generator of (example, label) pairs.
pub struct DataStream {
    source: Source,
    rng: RngStream,
    emitted: usize,
    input_dim: usize,
}

impl DataStream {
    /// Emit the next pair. Generated sources never exhaust; fixed sequences
    /// error once consumed.
    pub fn next_pair(&mut self) -> Result<(Example, f64)> {
        let pair = match &self.source {
            Source::Realizable { truth, noise_sd } => {
                let x = uniform_cube(&mut self.rng, self.input_dim);
                let mut y = truth.exact_value(&x)?;
                if *noise_sd > 0.0 {
                    y += noise_sd * self.rng.normal();
                }
                (x, y.clamp(-1.0, 1.0))
            }
            Source::Toy2d { noise_sd } => {
                let x = uniform_cube(&mut self.rng, 2);
                let mut y = toy2d_target(x.features());
                if *noise_sd > 0.0 {
                    y += noise_sd * self.rng.normal();
                }
                (x, y.clamp(-1.0, 1.0))
            }
            Source::Fixed { pairs } => {
                if self.emitted >= pairs.len() {
                    return Err(Error::StreamExhausted {
                        emitted: self.emitted,
                        needed: self.emitted + 1,
                    });
                }
                pairs[self.emitted].clone()
            }
        };
        self.emitted += 1;
        debug_assert!(pair.1.abs() <= 1.0);
        Ok(pair)
    }

    pub fn take_pairs(&mut self, n: usize) -> Result<Vec<(Example, f64)>> {
        (0..n).map(|_| self.next_pair()).collect()
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Ground-truth hypothesis, for realizable streams.
    pub fn ground_truth(&self) -> Option<&Hypothesis> {
        match &self.source {
            Source::Realizable { truth, .. } => Some(truth),
            _ => None,
        }
    }

    /// Write `count` pairs as a flat columnar text file:
    /// a `dim count` header line, then one `x_1 .. x_d y` row per pair.
    pub fn materialize(&mut self, count: usize, path: &Path) -> Result<()> {
        let mut body = String::new();
        body.push_str(&format!("{} {}\n", self.input_dim, count));
        for _ in 0..count {
            let (x, y) = self.next_pair()?;
            for v in x.features() {
                body.push_str(&format!("{v} "));
            }
            body.push_str(&format!("{y}\n"));
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(body.as_bytes())?;
        Ok(())
    }
}

/// The fixed nonlinear 2-d target: `cos(3 |x|^2) exp(-|x|^2)`, bounded by 1.
pub fn toy2d_target(x: &[f64]) -> f64 {
    let r2 = x.iter().map(|v| v * v).sum::<f64>();
    (3.0 * r2).cos() * (-r2).exp()
}

fn uniform_cube(rng: &mut RngStream, dim: usize) -> Example {
    Example::new((0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).expect("dim >= 1")
}

/// Draw a ground-truth hypothesis with the requested RKHS norm: `support_size`
/// points uniform on the cube, gaussian coefficients rescaled so that
/// `sqrt(alpha' K alpha)` equals `target_norm`.
///
/// A degenerate draw (nearly zero quadratic form) is retried with a fresh
/// sub-seed, at most 5 times.
pub fn realizable_target(
    family: &FeatureFamily,
    support_size: usize,
    target_norm: f64,
    seed: u64,
) -> Result<Hypothesis> {
    if !family.has_exact_kernel() {
        return Err(Error::KernelUnavailable {
            family: family.id().into(),
        });
    }
    if support_size == 0 {
        return Err(Error::InvalidParameter("support_size must be >= 1".into()));
    }
    if !(target_norm >= 0.0) {
        return Err(Error::InvalidParameter("target_norm must be >= 0".into()));
    }
    let dim = family.input_dim();
    let max_attempts = 5;
    for attempt in 0..max_attempts {
        let mut rng = RngStream::derive(seed, &[0xf5, attempt as u64]);
        let support: Vec<Example> = (0..support_size).map(|_| uniform_cube(&mut rng, dim)).collect();
        let mut alpha = rng.normal_vec(support_size);
        // Quadratic form alpha' K alpha through the exact kernel.
        let mut quad = 0.0;
        for (i, xi) in support.iter().enumerate() {
            for (j, xj) in support.iter().enumerate() {
                quad += alpha[i] * alpha[j] * family.require_exact_kernel(xi, xj)?;
            }
        }
        if target_norm == 0.0 {
            let coeffs = Coefficients::from_parts(vec![0.0; support_size], 1.0)?;
            return Hypothesis::from_parts(family.clone(), support, coeffs);
        }
        if quad <= 1e-12 {
            continue; // degenerate draw, retry with the next sub-seed
        }
        let scale = target_norm / quad.sqrt();
        for a in &mut alpha {
            *a *= scale;
        }
        let coeffs = Coefficients::from_parts(alpha, 1.0)?;
        return Hypothesis::from_parts(family.clone(), support, coeffs);
    }
    Err(Error::DegenerateKernel {
        attempts: max_attempts,
    })
}

/// Stream of pairs realizable by a norm-bounded hypothesis:
/// `x ~ Unif[-1,1]^d`, `y = clamp(f*(x) + noise)`.
pub fn realizable_stream(
    family: &FeatureFamily,
    support_size: usize,
    target_norm: f64,
    noise_sd: f64,
    seed: u64,
    role: StreamRole,
) -> Result<DataStream> {
    let truth = realizable_target(family, support_size, target_norm, seed)?;
    Ok(realizable_stream_for(truth, noise_sd, seed, role))
}

/// Stream for an already-drawn ground truth (shared across train/test).
pub fn realizable_stream_for(truth: Hypothesis, noise_sd: f64, seed: u64, role: StreamRole) -> DataStream {
    let input_dim = truth.family().input_dim();
    DataStream {
        source: Source::Realizable { truth, noise_sd },
        rng: RngStream::derive(seed, &[role.tag()]),
        emitted: 0,
        input_dim,
    }
}

/// The 2-d toy regression stream.
pub fn toy2d_stream(noise_sd: f64, seed: u64, role: StreamRole) -> DataStream {
    DataStream {
        source: Source::Toy2d { noise_sd },
        rng: RngStream::derive(seed, &[0x70, role.tag()]),
        emitted: 0,
        input_dim: 2,
    }
}

/// Fixed stream over an explicit list of pairs.
pub fn fixed_stream(pairs: Vec<(Example, f64)>) -> Result<DataStream> {
    let input_dim = pairs
        .first()
        .map(|(x, _)| x.dim())
        .ok_or_else(|| Error::InvalidParameter("fixed stream needs at least one pair".into()))?;
    for (x, y) in &pairs {
        if x.dim() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: x.dim(),
            });
        }
        if !(y.is_finite() && y.abs() <= 1.0) {
            return Err(Error::LabelOutOfRange { value: *y });
        }
    }
    Ok(DataStream {
        source: Source::Fixed { pairs },
        rng: RngStream::from_seed(0),
        emitted: 0,
        input_dim,
    })
}

/// Load a stream materialized by [`DataStream::materialize`].
pub fn load_fixed(path: &Path) -> Result<DataStream> {
    let body = std::fs::read_to_string(path)?;
    let mut lines = body.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty stream file".into()))?;
    let mut parts = header.split_whitespace();
    let dim: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config("bad stream header: missing dim".into()))?;
    let count: usize = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config("bad stream header: missing count".into()))?;
    let mut pairs = Vec::with_capacity(count);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let values = values.map_err(|e| Error::Config(format!("line {}: {e}", lineno + 2)))?;
        if values.len() != dim + 1 {
            return Err(Error::Config(format!(
                "line {}: expected {} columns, got {}",
                lineno + 2,
                dim + 1,
                values.len()
            )));
        }
        let (y, x) = values.split_last().unwrap();
        pairs.push((Example::new(x.to_vec())?, *y));
    }
    if pairs.len() != count {
        return Err(Error::Config(format!(
            "stream file declares {count} rows but has {}",
            pairs.len()
        )));
    }
    fixed_stream(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_space::FamilySpec;

    fn cosine(dim: usize, sigma: f64) -> FeatureFamily {
        FeatureFamily::from_spec(&FamilySpec {
            id: "cosine-rff".into(),
            dim,
            sigma: Some(sigma),
        })
        .unwrap()
    }

    #[test]
    fn toy_target_at_origin_is_one() {
        assert_eq!(toy2d_target(&[0.0, 0.0]), 1.0);
        let mut stream = toy2d_stream(0.0, 1, StreamRole::Train);
        let (_, y) = stream.next_pair().unwrap();
        assert!(y.abs() <= 1.0);
    }

    #[test]
    fn toy_stream_is_deterministic_and_bounded() {
        let mut a = toy2d_stream(0.3, 9, StreamRole::Train);
        let mut b = toy2d_stream(0.3, 9, StreamRole::Train);
        for _ in 0..10_000 {
            let (xa, ya) = a.next_pair().unwrap();
            let (xb, yb) = b.next_pair().unwrap();
            assert_eq!(xa, xb);
            assert_eq!(ya.to_bits(), yb.to_bits());
            assert!(ya.abs() <= 1.0);
        }
    }

    #[test]
    fn train_and_test_roles_are_disjoint() {
        let mut train = toy2d_stream(0.0, 5, StreamRole::Train);
        let mut test = toy2d_stream(0.0, 5, StreamRole::Test);
        let (xa, _) = train.next_pair().unwrap();
        let (xb, _) = test.next_pair().unwrap();
        assert_ne!(xa, xb);
    }

    #[test]
    fn noiseless_realizable_labels_equal_truth_at_support() {
        let family = cosine(2, 1.0);
        let truth = realizable_target(&family, 10, 0.8, 3).unwrap();
        // Querying a support point reproduces the clamped truth value.
        let x = truth.support()[4].clone();
        let expected = truth.exact_value(&x).unwrap().clamp(-1.0, 1.0);
        let stream = realizable_stream_for(truth, 0.0, 3, StreamRole::Train);
        let got = stream.ground_truth().unwrap().exact_value(&x).unwrap().clamp(-1.0, 1.0);
        assert_eq!(got.to_bits(), expected.to_bits());
    }

    #[test]
    fn target_norm_is_hit_exactly() {
        let family = cosine(2, 0.7);
        for norm in [0.5, 1.0, 1.7] {
            let truth = realizable_target(&family, 15, norm, 11).unwrap();
            let mut quad = 0.0;
            for (i, xi) in truth.support().iter().enumerate() {
                for (j, xj) in truth.support().iter().enumerate() {
                    quad += truth.coeffs().effective(i)
                        * truth.coeffs().effective(j)
                        * family.require_exact_kernel(xi, xj).unwrap();
                }
            }
            assert!((quad.sqrt() - norm).abs() < 1e-9, "norm {} vs {}", quad.sqrt(), norm);
        }
    }

    #[test]
    fn zero_target_norm_gives_zero_labels() {
        let family = cosine(2, 1.0);
        let mut stream = realizable_stream(&family, 8, 0.0, 0.0, 17, StreamRole::Train).unwrap();
        for _ in 0..100 {
            let (_, y) = stream.next_pair().unwrap();
            assert_eq!(y, 0.0);
        }
    }

    #[test]
    fn realizable_labels_are_clamped_under_noise() {
        let family = cosine(2, 1.0);
        let mut stream = realizable_stream(&family, 10, 1.5, 0.5, 23, StreamRole::Train).unwrap();
        let mut saw_edge = false;
        for _ in 0..5000 {
            let (_, y) = stream.next_pair().unwrap();
            assert!(y.abs() <= 1.0);
            saw_edge |= y.abs() == 1.0;
        }
        assert!(saw_edge, "heavy noise should clip at least once");
    }

    #[test]
    fn tanh_family_cannot_generate_realizable_streams() {
        let family = FeatureFamily::TanhNeuron { dim: 2 };
        assert!(matches!(
            realizable_target(&family, 5, 1.0, 0),
            Err(Error::KernelUnavailable { .. })
        ));
    }

    #[test]
    fn materialize_and_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.txt");
        let mut stream = toy2d_stream(0.1, 31, StreamRole::Train);
        stream.materialize(64, &path).unwrap();

        let mut replay = toy2d_stream(0.1, 31, StreamRole::Train);
        let mut loaded = load_fixed(&path).unwrap();
        assert_eq!(loaded.input_dim(), 2);
        for _ in 0..64 {
            let (xa, ya) = replay.next_pair().unwrap();
            let (xb, yb) = loaded.next_pair().unwrap();
            assert_eq!(xa, xb);
            assert_eq!(ya.to_bits(), yb.to_bits());
        }
        assert!(matches!(
            loaded.next_pair(),
            Err(Error::StreamExhausted { .. })
        ));
    }

    #[test]
    fn fixed_stream_rejects_bad_labels() {
        let pairs = vec![(Example::new(vec![0.0]).unwrap(), 1.5)];
        assert!(matches!(fixed_stream(pairs), Err(Error::LabelOutOfRange { .. })));
    }
}
