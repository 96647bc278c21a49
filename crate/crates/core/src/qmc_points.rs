//! Randomly shifted rank-1 lattice rules.
//!
//! Points are indexed `i = 1..=N` and given by `frac(i z / N + Δ)`. The last
//! point of an unshifted rule is the origin; every unit coordinate is clamped
//! into `[ε_u, 1 - ε_u]` with `ε_u = eps/2` of the scalar type (2^-53 for
//! `f64`) so that the Gaussian map never produces infinities.
//!
//! For `N = 2^m` the rule with `N/2` points is the subset of even indices of
//! the `N`-point rule, which is what makes sample recycling possible when an
//! estimator doubles its point count.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::special::inv_normal_cdf;
use crate::{Error, Real, Result};

/// Integer generating vector of a rank-1 lattice rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratingVector {
    z: Vec<u64>,
    n_points: u64,
}

impl GeneratingVector {
    pub fn new(z: Vec<u64>, n_points: u64) -> Result<Self> {
        if n_points < 1 {
            return Err(Error::config("lattice needs at least one point"));
        }
        if z.is_empty() {
            return Err(Error::config("generating vector is empty"));
        }
        if n_points > 1 {
            if let Some((j, &zj)) = z.iter().enumerate().find(|(_, &zj)| zj < 1 || zj >= n_points) {
                return Err(Error::config(format!(
                    "component {} = {zj} outside [1, {}]",
                    j + 1,
                    n_points - 1
                )));
            }
        }
        Ok(Self { z, n_points })
    }

    /// Maximum dimension `s_max` the vector supports.
    pub fn dimension(&self) -> usize {
        self.z.len()
    }

    /// Point count the vector was constructed or published for.
    pub fn n_points(&self) -> u64 {
        self.n_points
    }

    pub fn components(&self) -> &[u64] {
        &self.z
    }

    /// Largest `m` with `2^m ≤ n_points`.
    pub fn max_log2_points(&self) -> u32 {
        63 - self.n_points.leading_zeros()
    }

    fn check_dimension(&self, s: usize) -> Result<()> {
        if s > self.z.len() {
            return Err(Error::config(format!(
                "dimension {s} exceeds generating vector length {}",
                self.z.len()
            )));
        }
        Ok(())
    }

    /// Reads whitespace separated integer columns, one line per dimension.
    ///
    /// The last column of line `j` is `z_j`. Lines starting with `#` are
    /// comments; a comment of the form `# n_points = N` fixes the point
    /// count. Otherwise the count is taken from a file name of the form
    /// `lattice-<id>-<nmin>-<nmax>.<s>.txt`, and failing that, the smallest
    /// power of two exceeding every component.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// The embedded 9125-dimensional vector for up to 2^20 points shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_VECTOR, Path::new(BUNDLED_VECTOR_NAME)).expect("bundled vector parses")
    }

    /// Parses the text format of [`GeneratingVector::load`]; `path` names the
    /// source in errors and supplies the file-name fallback for the point count.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut z = Vec::new();
        let mut header_points = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(value) = comment.trim().strip_prefix("n_points") {
                    let value = value.trim().trim_start_matches('=').trim();
                    header_points = Some(value.parse::<u64>().map_err(|e| Error::Parse {
                        path: path.to_owned(),
                        line: lineno,
                        msg: format!("bad n_points header: {e}"),
                    })?);
                }
                continue;
            }
            let mut last = None;
            for token in trimmed.split_whitespace() {
                last = Some(token.parse::<u64>().map_err(|_| Error::Parse {
                    path: path.to_owned(),
                    line: lineno,
                    msg: format!("non-integer token {token:?}"),
                })?);
            }
            let zj = last.expect("non-empty line has a token");
            if zj == 0 {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: lineno,
                    msg: "generating vector component must be positive".into(),
                });
            }
            z.push(zj);
        }
        if z.is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 0,
                msg: "empty generating vector file".into(),
            });
        }
        let n_points = header_points
            .or_else(|| n_points_from_file_name(path))
            .unwrap_or_else(|| (z.iter().max().unwrap() + 1).next_power_of_two());
        Self::new(z, n_points).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: e.to_string(),
        })
    }

    /// Writes the vector in the format [`GeneratingVector::load`] reads.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "# n_points = {}", self.n_points)?;
        for (j, zj) in self.z.iter().enumerate() {
            writeln!(out, "{} {}", j + 1, zj)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn n_points_from_file_name(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_prefix("lattice-")?;
    let head = stem.split('.').next()?;
    let nmax = head.split('-').nth(2)?;
    nmax.parse().ok()
}

const BUNDLED_VECTOR_NAME: &str = "lattice-33002-1024-1048576.9125.txt";
const BUNDLED_VECTOR: &str = include_str!("../data/lattice-33002-1024-1048576.9125.txt");

/// Random shift Δ ∈ [0,1)^s.
#[derive(Clone, Debug, PartialEq)]
pub struct Shift<T> {
    pub delta: Vec<T>,
    /// Stream identifier of the generator that produced the shift.
    pub seed_id: u64,
}

/// Point in the open unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitPoint<T> {
    pub coords: Vec<T>,
}

/// Point in ℝ^s obtained through the componentwise inverse normal CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussPoint<T> {
    pub coords: Vec<T>,
}

/// Lower clamp for unit coordinates, `eps/2` of the scalar type.
#[inline]
pub fn unit_clamp<T: Real>() -> T {
    T::epsilon() * T::lit(0.5)
}

#[inline]
fn clamp_unit<T: Real>(u: T) -> T {
    let lo = unit_clamp::<T>();
    let hi = T::one() - lo;
    u.max(lo).min(hi)
}

/// Coordinate `frac(i z / N + δ)` computed with an exact integer residue.
#[inline]
fn coordinate<T: Real>(i: u64, zj: u64, n: u64, delta: T) -> T {
    let residue = ((i as u128 * zj as u128) % n as u128) as f64 / n as f64;
    let v = T::lit(residue) + delta;
    let v = v - v.floor();
    clamp_unit(v)
}

/// `i`-th point (1-based) of the `n`-point shifted lattice rule in `s` dimensions.
pub fn lattice_point<T: Real>(
    i: u64,
    z: &GeneratingVector,
    n: u64,
    delta: &Shift<T>,
    s: usize,
) -> Result<UnitPoint<T>> {
    z.check_dimension(s)?;
    if n < 1 || i < 1 || i > n {
        return Err(Error::config(format!("point index {i} outside 1..={n}")));
    }
    if delta.delta.len() < s {
        return Err(Error::config("shift shorter than requested dimension"));
    }
    let coords = (0..s)
        .map(|j| coordinate(i, z.z[j], n, delta.delta[j]))
        .collect();
    Ok(UnitPoint { coords })
}

/// Writes Φ⁻¹ of the `i`-th lattice point into `out` without allocating.
///
/// `out.len()` is the dimension; the caller guarantees `out.len() ≤ z.dimension()`
/// and `delta.len() ≥ out.len()`.
pub fn gaussian_lattice_point_into(i: u64, z: &GeneratingVector, n: u64, delta: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let u = coordinate(i, z.z[j], n, delta[j]);
        *o = inv_normal_cdf(u).expect("clamped coordinate lies inside (0,1)");
    }
}

/// Componentwise inverse standard normal CDF.
pub fn map_to_gaussian<T: Real>(p: &UnitPoint<T>) -> Result<GaussPoint<T>> {
    let coords = p
        .coords
        .iter()
        .map(|&u| inv_normal_cdf(u.as_f64()).map(T::lit))
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussPoint { coords })
}

/// Full shifted lattice with `N = 2^m` points in index order `i = 1..=N`.
pub fn embedded_point_set<T: Real>(
    z: &GeneratingVector,
    m: u32,
    delta: &Shift<T>,
    s: usize,
) -> Result<Vec<UnitPoint<T>>> {
    if m > z.max_log2_points() {
        return Err(Error::config(format!(
            "2^{m} points exceeds the published range of {} points",
            z.n_points()
        )));
    }
    let n = 1u64 << m;
    (1..=n).map(|i| lattice_point(i, z, n, delta, s)).collect()
}

/// Stream identifier for a (level, shift index) pair.
#[inline]
pub fn shift_stream(level: usize, shift_index: usize) -> u64 {
    ((level as u64) << 32) | (shift_index as u64 & 0xffff_ffff)
}

/// Deterministic uniform shift for (seed, level, shift index).
///
/// Each pair selects its own ChaCha20 stream under a key derived from `seed`,
/// so shifts for distinct pairs are independent and need no shared state.
pub fn draw_shift<T: Real>(seed: u64, level: usize, shift_index: usize, s: usize) -> Shift<T> {
    let stream = shift_stream(level, shift_index);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let below_one = T::one() - unit_clamp::<T>();
    let delta = (0..s)
        .map(|_| {
            let u: f64 = rng.random();
            T::lit(u).min(below_one)
        })
        .collect();
    Shift {
        delta,
        seed_id: stream,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift(d: &[f64]) -> Shift<f64> {
        Shift {
            delta: d.to_vec(),
            seed_id: 0,
        }
    }

    #[test]
    fn lattice_point_examples() {
        let z1 = GeneratingVector::new(vec![1], 4).unwrap();
        let p = lattice_point(1, &z1, 4, &shift(&[0.0]), 1).unwrap();
        assert_eq!(p.coords, vec![0.25]);

        let z3 = GeneratingVector::new(vec![3], 4).unwrap();
        let p = lattice_point(3, &z3, 4, &shift(&[0.5]), 1).unwrap();
        assert_eq!(p.coords, vec![0.75]);

        let z13 = GeneratingVector::new(vec![1, 3], 4).unwrap();
        let p = lattice_point(2, &z13, 4, &shift(&[0.9, 0.9]), 2).unwrap();
        assert!((p.coords[0] - 0.4).abs() < 1e-15);
        assert!((p.coords[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn dimension_beyond_vector_is_error() {
        let z = GeneratingVector::new(vec![1], 4).unwrap();
        assert!(matches!(
            lattice_point(1, &z, 4, &shift(&[0.0, 0.0]), 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn last_point_is_clamped() {
        let z = GeneratingVector::new(vec![1], 4).unwrap();
        let pts = embedded_point_set(&z, 2, &shift(&[0.0]), 1).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| p.coords[0]).collect();
        assert_eq!(&xs[..3], &[0.25, 0.5, 0.75]);
        assert_eq!(xs[3], 2f64.powi(-53));
        let g = map_to_gaussian(&pts[3]).unwrap();
        assert!(g.coords[0].is_finite());
    }

    #[test]
    fn one_point_rule_is_the_shift() {
        let z = GeneratingVector::new(vec![1, 5], 8).unwrap();
        let pts = embedded_point_set(&z, 0, &shift(&[0.3, 0.7]), 2).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].coords[0] - 0.3).abs() < 1e-15);
        assert!((pts[0].coords[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn embedded_rules_nest() {
        let z = GeneratingVector::new(vec![1, 3, 5], 16).unwrap();
        let d = shift(&[0.11, 0.52, 0.93]);
        let small = embedded_point_set(&z, 2, &d, 3).unwrap();
        let big = embedded_point_set(&z, 3, &d, 3).unwrap();
        for (i, p) in small.iter().enumerate() {
            assert_eq!(p, &big[2 * i + 1]);
        }
        assert!(embedded_point_set(&z, 5, &d, 3).is_err());
    }

    #[test]
    fn gaussian_map_of_median() {
        let g = map_to_gaussian(&UnitPoint { coords: vec![0.5f64] }).unwrap();
        assert_eq!(g.coords, vec![0.0]);
        let g32 = map_to_gaussian(&UnitPoint { coords: vec![0.975f32] }).unwrap();
        assert!((g32.coords[0] - 1.959_964).abs() < 1e-5);
    }

    #[test]
    fn f32_points_stay_inside_unit_interval() {
        let z = GeneratingVector::new(vec![1], 8).unwrap();
        let d = Shift {
            delta: vec![0.0f32],
            seed_id: 0,
        };
        let p = lattice_point(8, &z, 8, &d, 1).unwrap();
        assert!(p.coords[0] > 0.0 && p.coords[0] < 1.0);
    }

    #[test]
    fn shifts_are_deterministic_and_stream_separated() {
        let a: Shift<f64> = draw_shift(7, 0, 1, 5);
        let b: Shift<f64> = draw_shift(7, 0, 1, 5);
        let c: Shift<f64> = draw_shift(7, 1, 1, 5);
        assert_eq!(a, b);
        assert_ne!(a.delta, c.delta);
        assert!(a.delta.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn shift_components_have_uniform_mean() {
        let n = 100_000;
        let s = 3;
        let mut sums = vec![0.0; s];
        for k in 0..n {
            let sh: Shift<f64> = draw_shift(42, 2, k, s);
            for (acc, v) in sums.iter_mut().zip(&sh.delta) {
                *acc += v;
            }
        }
        for acc in sums {
            assert!((acc / n as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn load_parses_last_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        fs::write(&path, "1 1\n2 182667\n").unwrap();
        let z = GeneratingVector::load(&path).unwrap();
        assert_eq!(z.components(), &[1, 182667]);
        assert_eq!(z.dimension(), 2);
        assert!(z.n_points() > 182667);
    }

    #[test]
    fn load_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.txt");
        fs::write(&empty, "").unwrap();
        assert!(matches!(GeneratingVector::load(&empty), Err(Error::Parse { .. })));

        let bad = dir.path().join("bad.txt");
        fs::write(&bad, "1 1\n2 x7\n").unwrap();
        match GeneratingVector::load(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        let z = GeneratingVector::new(vec![1, 7, 11], 32).unwrap();
        z.save(&path).unwrap();
        assert_eq!(GeneratingVector::load(&path).unwrap(), z);
    }
}
