//! Mixed-radix flat indexing, least-significant position first.

use crate::error::{Error, Result};

/// Bijection between `∏ [0, radices[k])` and `[0, ∏ radices)`.
///
/// `index = Σ_k values[k] · ∏_{j<k} radices[j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedRadixCodec {
    radices: Vec<usize>,
    strides: Vec<u128>,
    size: u128,
}

impl MixedRadixCodec {
    pub fn new(radices: Vec<usize>) -> Result<Self> {
        let mut strides = Vec::with_capacity(radices.len());
        let mut size: u128 = 1;
        for (k, &r) in radices.iter().enumerate() {
            if r == 0 {
                return Err(Error::InvalidParameter(format!("radix {k} is zero")));
            }
            strides.push(size);
            size = size.checked_mul(r as u128).ok_or(Error::IndexOverflow)?;
        }
        Ok(MixedRadixCodec {
            radices,
            strides,
            size,
        })
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn len(&self) -> usize {
        self.radices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radices.is_empty()
    }

    /// Number of distinct indices.
    pub fn size(&self) -> u128 {
        self.size
    }

    pub fn encode(&self, values: &[usize]) -> Result<u128> {
        if values.len() != self.radices.len() {
            return Err(Error::ShapeMismatch(format!(
                "codec has {} positions, got {} values",
                self.radices.len(),
                values.len()
            )));
        }
        for (position, (&value, &radix)) in values.iter().zip(&self.radices).enumerate() {
            if value >= radix {
                return Err(Error::ValueOutOfRange {
                    position,
                    value,
                    radix,
                });
            }
        }
        Ok(self.encode_unchecked(values))
    }

    /// Encodes without bounds checks; callers guarantee validity.
    #[inline]
    pub fn encode_unchecked(&self, values: &[usize]) -> u128 {
        values
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| v as u128 * s)
            .sum()
    }

    /// Encodes an iterator of values; callers guarantee validity.
    #[inline]
    pub fn encode_iter(&self, values: impl IntoIterator<Item = usize>) -> u128 {
        values
            .into_iter()
            .zip(&self.strides)
            .map(|(v, &s)| v as u128 * s)
            .sum()
    }

    pub fn decode(&self, index: u128) -> Result<Vec<usize>> {
        let mut out = vec![0; self.radices.len()];
        self.decode_into(index, &mut out)?;
        Ok(out)
    }

    pub fn decode_into(&self, mut index: u128, out: &mut [usize]) -> Result<()> {
        if index >= self.size {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.size,
            });
        }
        if out.len() != self.radices.len() {
            return Err(Error::ShapeMismatch(format!(
                "decode buffer has {} slots, codec has {}",
                out.len(),
                self.radices.len()
            )));
        }
        for (slot, &r) in out.iter_mut().zip(&self.radices) {
            let r = r as u128;
            *slot = (index % r) as usize;
            index /= r;
        }
        Ok(())
    }
}
