//! Equal-probability-cell grouping of unit-interval samples.
//!
//! Raw data are mapped through the hypothesized cdf (probability integral
//! transform), so testing the original distribution reduces to testing
//! uniformity on `[0, 1]`; the sample is then counted into `N` equal cells.

use crate::error::{Error, Result};

/// Partition of `[0, 1]` into cells; construction keeps widths equal to `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    boundaries: Vec<f64>,
}

impl CellPartition {
    pub fn n_cells(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }
}

/// Occupancy counts `(η_1, …, η_N)` of a sample of size `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupedCounts {
    counts: Vec<u64>,
    n: u64,
}

impl GroupedCounts {
    /// Wraps raw counts; `n` is their sum.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    /// Expected count per cell under uniformity, `λ = n/N`.
    pub fn lambda(&self) -> f64 {
        self.n as f64 / self.counts.len() as f64
    }

    /// An empty sample is accepted but tagged; statistics refuse it.
    pub fn is_degenerate(&self) -> bool {
        self.n == 0
    }
}

/// Builds the equal-probability partition with boundaries `m/N`.
pub fn make_equal_cells(n_cells: usize) -> Result<CellPartition> {
    if n_cells == 0 {
        return Err(Error::EmptyPartition);
    }
    let boundaries = (0..=n_cells).map(|m| m as f64 / n_cells as f64).collect();
    Ok(CellPartition { boundaries })
}

/// Applies a hypothesized cdf to each raw observation.
///
/// Outputs outside `[0, 1]` signal an invalid cdf and abort the transform.
pub fn transform_sample<F: Fn(f64) -> f64>(raw: &[f64], cdf: F) -> Result<Vec<f64>> {
    raw.iter()
        .map(|&x| {
            let u = cdf(x);
            if !(0.0..=1.0).contains(&u) {
                Err(Error::InvalidCdf { input: x, value: u })
            } else {
                Ok(u)
            }
        })
        .collect()
}

/// Counts sample points into cells.
///
/// Cells are half-open `[a, b)`: an interior boundary belongs to the cell on
/// its right, and the value `1.0` is assigned to the last cell.
pub fn count_occupancy(sample: &[f64], partition: &CellPartition) -> Result<GroupedCounts> {
    let n_cells = partition.n_cells();
    let bounds = partition.boundaries();
    let mut counts = vec![0u64; n_cells];
    for (index, &x) in sample.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::SampleOutOfRange { index, value: x });
        }
        // number of boundaries <= x, minus one; 1.0 lands past the end
        let cell = bounds.partition_point(|&b| b <= x).saturating_sub(1);
        counts[cell.min(n_cells - 1)] += 1;
    }
    Ok(GroupedCounts {
        counts,
        n: sample.len() as u64,
    })
}

/// Parses a newline-delimited decimal text file body into a sample vector.
///
/// Blank lines are skipped; this is the ingestion format the CLI accepts.
pub fn parse_sample_text(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(index, l)| {
            l.parse::<f64>().map_err(|_| Error::SampleOutOfRange {
                index,
                value: f64::NAN,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_cells_boundaries() {
        assert_eq!(make_equal_cells(1).unwrap().boundaries(), &[0.0, 1.0]);
        assert_eq!(
            make_equal_cells(4).unwrap().boundaries(),
            &[0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(make_equal_cells(2).unwrap().boundaries(), &[0.0, 0.5, 1.0]);
        assert!(matches!(make_equal_cells(0), Err(Error::EmptyPartition)));
    }

    #[test]
    fn equal_cells_have_equal_widths() {
        for n in [1usize, 2, 7, 64, 1000] {
            let p = make_equal_cells(n).unwrap();
            let b = p.boundaries();
            for w in b.windows(2) {
                assert!((w[1] - w[0] - 1.0 / n as f64).abs() < 1e-15);
                assert!(w[1] > w[0]);
            }
        }
    }

    #[test]
    fn transform_identity_and_square() {
        assert_eq!(transform_sample(&[0.3], |x| x).unwrap(), vec![0.3]);
        assert_eq!(
            transform_sample(&[0.0, 1.0], |x| x).unwrap(),
            vec![0.0, 1.0]
        );
        assert_eq!(transform_sample(&[0.5], |x| x * x).unwrap(), vec![0.25]);
        assert!(matches!(
            transform_sample(&[2.0], |x| x),
            Err(Error::InvalidCdf { .. })
        ));
    }

    #[test]
    fn occupancy_counting() {
        let p2 = make_equal_cells(2).unwrap();
        let g = count_occupancy(&[0.1, 0.6, 0.9], &p2).unwrap();
        assert_eq!(g.counts(), &[1, 2]);
        assert_eq!(g.n(), 3);

        let p3 = make_equal_cells(3).unwrap();
        let empty = count_occupancy(&[], &p3).unwrap();
        assert_eq!(empty.counts(), &[0, 0, 0]);
        assert!(empty.is_degenerate());

        // boundary value goes to the right cell, 1.0 to the last cell
        let g = count_occupancy(&[0.5], &p2).unwrap();
        assert_eq!(g.counts(), &[0, 1]);
        let g = count_occupancy(&[1.0], &p2).unwrap();
        assert_eq!(g.counts(), &[0, 1]);
        let g = count_occupancy(&[0.0], &p2).unwrap();
        assert_eq!(g.counts(), &[1, 0]);
    }

    #[test]
    fn out_of_range_reports_index() {
        let p = make_equal_cells(2).unwrap();
        match count_occupancy(&[0.5, 1.5], &p) {
            Err(Error::SampleOutOfRange { index, value }) => {
                assert_eq!(index, 1);
                assert_eq!(value, 1.5);
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn counts_sum_and_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = make_equal_cells(7).unwrap();
        let sample: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let g1 = count_occupancy(&sample, &p).unwrap();
        assert_eq!(g1.counts().iter().sum::<u64>(), sample.len() as u64);

        let mut reversed = sample.clone();
        reversed.reverse();
        let g2 = count_occupancy(&reversed, &p).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn uniform_input_counts_have_expected_mean() {
        // mean of each count over replicates vs n/N at 4σ
        let n = 100usize;
        let n_cells = 4usize;
        let reps = 10_000usize;
        let p = make_equal_cells(n_cells).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut sums = vec![0u64; n_cells];
        for _ in 0..reps {
            let sample: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let g = count_occupancy(&sample, &p).unwrap();
            for (s, &c) in sums.iter_mut().zip(g.counts()) {
                *s += c;
            }
        }
        let expect = n as f64 / n_cells as f64;
        let var = n as f64 * (1.0 / n_cells as f64) * (1.0 - 1.0 / n_cells as f64);
        let sigma_mean = (var / reps as f64).sqrt();
        for &s in &sums {
            let mean = s as f64 / reps as f64;
            assert!(
                (mean - expect).abs() < 4.0 * sigma_mean,
                "mean {mean} vs {expect} ± {}",
                4.0 * sigma_mean
            );
        }
    }

    #[test]
    fn parse_sample_text_skips_blanks() {
        let v = parse_sample_text("0.25\n\n0.5\n0.75\n").unwrap();
        assert_eq!(v, vec![0.25, 0.5, 0.75]);
        assert!(parse_sample_text("0.25\nnot a number\n").is_err());
    }
}
