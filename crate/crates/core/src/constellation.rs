//! Digital modulation alphabets.
//!
//! Every scheme is normalized to unit average symbol energy, so a transmitted
//! sequence has expected power 1 and the channel SNR depends only on the
//! noise variance.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Bpsk,
    /// Square QAM with `side` amplitude levels per I/Q axis.
    SquareQam { side: usize },
    /// Arbitrary user-supplied points.
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationScheme {
    kind: SchemeKind,
    points: Vec<Complex64>,
    labels: Vec<u32>,
    bits_per_symbol: usize,
}

fn gray(v: usize) -> u32 {
    (v ^ (v >> 1)) as u32
}

impl ConstellationScheme {
    pub fn bpsk() -> Self {
        Self {
            kind: SchemeKind::Bpsk,
            points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            labels: vec![0, 1],
            bits_per_symbol: 1,
        }
    }

    /// Square M-QAM for M in {4, 16, 64}.
    ///
    /// Point `m` sits at in-phase level `m / side` and quadrature level
    /// `m % side`; per-axis amplitudes are `(2a - side + 1) * c` with `c`
    /// chosen for unit average power. The label is the Gray code of the
    /// in-phase level followed by the Gray code of the quadrature level.
    pub fn square_qam(order: usize) -> Result<Self> {
        let side: usize = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            _ => return Err(Error::UnsupportedOrder(order)),
        };
        let axis_bits = side.trailing_zeros() as usize;
        // mean of squared odd levels {±1, ±3, ..} is (side² - 1) / 3 per axis
        let scale = (1.5 / (side * side - 1) as f64).sqrt();
        let level = |a: usize| (2.0 * a as f64 - (side as f64 - 1.0)) * scale;

        let mut points = Vec::with_capacity(order);
        let mut labels = Vec::with_capacity(order);
        for i in 0..side {
            for q in 0..side {
                points.push(Complex64::new(level(i), level(q)));
                labels.push((gray(i) << axis_bits) | gray(q));
            }
        }
        Ok(Self {
            kind: SchemeKind::SquareQam { side },
            points,
            labels,
            bits_per_symbol: 2 * axis_bits,
        })
    }

    /// Builds a scheme for the supported orders: 2 gives BPSK, 4/16/64 square QAM.
    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::bpsk()),
            _ => Self::square_qam(order),
        }
    }

    /// An arbitrary alphabet, rescaled to unit average power.
    ///
    /// Labels are the natural binary indices.
    pub fn custom(points: &[Complex64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConstellation("no points".into()));
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::InvalidConstellation("non-finite point".into()));
        }
        for (a, pa) in points.iter().enumerate() {
            if points[a + 1..].iter().any(|pb| pb == pa) {
                return Err(Error::InvalidConstellation(format!("duplicate point {pa}")));
            }
        }
        let power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        if power <= 0.0 {
            return Err(Error::InvalidConstellation("zero average power".into()));
        }
        let scale = power.sqrt().recip();
        let bits = (usize::BITS - (points.len() - 1).leading_zeros()) as usize;
        Ok(Self {
            kind: SchemeKind::Custom,
            points: points.iter().map(|p| p * scale).collect(),
            labels: (0..points.len() as u32).collect(),
            bits_per_symbol: bits,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    /// The label of point `index` as a string of '0'/'1', MSB first.
    pub fn bits(&self, index: usize) -> String {
        let label = self.labels[index];
        (0..self.bits_per_symbol)
            .rev()
            .map(|b| if (label >> b) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn avg_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order() as f64
    }

    /// Per-axis amplitude levels of a square QAM scheme, ascending.
    pub fn axis_levels(&self) -> Option<Vec<f64>> {
        match self.kind {
            SchemeKind::SquareQam { side } => {
                Some((0..side).map(|a| self.points[a * side].re).collect())
            }
            _ => None,
        }
    }

    /// Index of the square-QAM point with the given in-phase/quadrature level indices.
    pub fn index_of_levels(&self, i_level: usize, q_level: usize) -> Option<usize> {
        match self.kind {
            SchemeKind::SquareQam { side } if i_level < side && q_level < side => {
                Some(i_level * side + q_level)
            }
            _ => None,
        }
    }

    /// Index of the Euclidean-nearest point; ties go to the lowest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (m, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = m;
                best_d = d;
            }
        }
        best
    }

    pub fn random_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.order())).collect()
    }

    /// Writes the `index,re,im,bits` table.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "re", "im", "bits"])?;
        for (m, p) in self.points.iter().enumerate() {
            w.write_record([m.to_string(), p.re.to_string(), p.im.to_string(), self.bits(m)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A block of `n` complex channel symbols.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolSequence(Vec<Complex64>);

impl SymbolSequence {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    /// Like [`SymbolSequence::new`] but rejects NaN or infinite entries.
    pub fn try_new(values: Vec<Complex64>) -> Result<Self> {
        let seq = Self(values);
        if !seq.is_finite() {
            return Err(Error::InvalidParameter("non-finite symbol".into()));
        }
        Ok(seq)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// The interleaved `(re, im, re, im, ..)` view of length `2n`.
    pub fn to_reals(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| [v.re, v.im]).collect()
    }

    pub fn from_reals(reals: &[f64]) -> Result<Self> {
        if !reals.len().is_multiple_of(2) {
            return Err(Error::OddDimension(reals.len()));
        }
        Ok(Self(reals.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()))
    }

    /// Euclidean norm over all `2n` real coordinates.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl From<Vec<Complex64>> for SymbolSequence {
    fn from(values: Vec<Complex64>) -> Self {
        Self(values)
    }
}

/// Maps symbol indices to constellation points.
pub fn modulate(indices: &[usize], scheme: &ConstellationScheme) -> Result<SymbolSequence> {
    indices
        .iter()
        .map(|&index| {
            scheme.points.get(index).copied().ok_or(Error::IndexOutOfRange {
                index,
                order: scheme.order(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(SymbolSequence)
}

/// Minimum-distance decisions, lowest index on ties.
pub fn demodulate_hard(seq: &SymbolSequence, scheme: &ConstellationScheme) -> Vec<usize> {
    seq.values().iter().map(|&z| scheme.nearest(z)).collect()
}
