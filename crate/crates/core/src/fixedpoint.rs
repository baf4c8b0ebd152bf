//! Decimal fixed-point encoding of model parameters into `Z_order`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, Signed, Zero};

use crate::error::{Error, Result};

/// Six digits after the decimal point.
pub const DEFAULT_PRECISION: u32 = 6;

/// Largest supported precision; keeps `scale` inside an `i64`.
pub const MAX_PRECISION: u32 = 15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPointCodec {
    precision_digits: u32,
    scale: i64,
    order: BigUint,
}

impl FixedPointCodec {
    pub fn new(precision_digits: u32, order: BigUint) -> Result<Self> {
        if precision_digits > MAX_PRECISION {
            return Err(Error::Argument(format!(
                "precision {precision_digits} exceeds the supported maximum of {MAX_PRECISION}"
            )));
        }
        if order < BigUint::from(3u32) {
            return Err(Error::Argument("order too small for a signed encoding".into()));
        }
        Ok(Self { precision_digits, scale: 10i64.pow(precision_digits), order })
    }

    pub fn precision_digits(&self) -> u32 {
        self.precision_digits
    }

    pub fn scale(&self) -> i64 {
        self.scale
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    /// Largest per-coordinate dlog magnitude produced by summing
    /// `responders` encodings of values with `|v| <= max_magnitude`.
    pub fn required_dlog_bound(&self, max_magnitude: f64, responders: u64) -> u64 {
        (max_magnitude * self.scale as f64 * responders as f64).ceil() as u64
    }

    fn encode_one(&self, real: f64) -> Result<BigUint> {
        if !real.is_finite() {
            return Err(Error::Encoding(format!("non-finite value {real}")));
        }
        // f64::round is half-away-from-zero
        let scaled = (real * self.scale as f64).round();
        let v = BigInt::from_f64(scaled)
            .ok_or_else(|| Error::Encoding(format!("cannot represent {real}")))?;
        let half = BigInt::from_biguint(Sign::Plus, &self.order >> 1);
        if v.abs() >= half {
            return Err(Error::Encoding(format!(
                "|{real}| * 10^{} overflows half the group order",
                self.precision_digits
            )));
        }
        Ok(match v.sign() {
            Sign::Minus => &self.order - v.magnitude(),
            _ => v.magnitude().clone(),
        })
    }

    pub fn encode_vector(&self, reals: &[f64]) -> Result<EncodedVector> {
        let coords = reals.iter().map(|&r| self.encode_one(r)).collect::<Result<_>>()?;
        Ok(EncodedVector { coords, codec: self.clone() })
    }

    /// Divides decrypted per-coordinate sums by `responder_count * scale`.
    pub fn decode_average(&self, sums: &[i64], responder_count: usize) -> Result<Vec<f64>> {
        if responder_count == 0 {
            return Err(Error::Argument("responder_count must be at least 1".into()));
        }
        let denom = responder_count as f64 * self.scale as f64;
        Ok(sums.iter().map(|&s| s as f64 / denom).collect())
    }

    /// Decodes one signed fixed-point integer.
    pub fn decode_one(&self, v: i64) -> f64 {
        v as f64 / self.scale as f64
    }
}

/// Same as [`FixedPointCodec::encode_vector`].
pub fn encode_vector(codec: &FixedPointCodec, reals: &[f64]) -> Result<EncodedVector> {
    codec.encode_vector(reals)
}

/// Same as [`FixedPointCodec::decode_average`].
pub fn decode_average(sums: &[i64], responder_count: usize, codec: &FixedPointCodec) -> Result<Vec<f64>> {
    codec.decode_average(sums, responder_count)
}

/// Fixed-point images of a model vector, each reduced into `[0, order)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedVector {
    coords: Vec<BigUint>,
    codec: FixedPointCodec,
}

impl EncodedVector {
    /// Wraps raw residues; each must already lie in `[0, order)`.
    pub fn from_coords(coords: Vec<BigUint>, codec: &FixedPointCodec) -> Result<Self> {
        if let Some(bad) = coords.iter().position(|c| c >= &codec.order) {
            return Err(Error::Encoding(format!("coordinate {bad} is not reduced mod the order")));
        }
        Ok(Self { coords, codec: codec.clone() })
    }

    /// Encodes already-scaled signed integers.
    pub fn from_signed(values: &[i64], codec: &FixedPointCodec) -> Result<Self> {
        let coords = values
            .iter()
            .map(|&v| {
                let m = BigUint::from(v.unsigned_abs());
                if m >= &codec.order >> 1 {
                    Err(Error::Encoding(format!("{v} overflows half the group order")))
                } else if v < 0 {
                    Ok(&codec.order - m)
                } else {
                    Ok(m)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { coords, codec: codec.clone() })
    }

    pub fn coords(&self) -> &[BigUint] {
        &self.coords
    }

    pub fn codec(&self) -> &FixedPointCodec {
        &self.codec
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Centered lift of every coordinate.
    pub fn to_signed(&self) -> Vec<BigInt> {
        let half = &self.codec.order >> 1;
        self.coords
            .iter()
            .map(|c| {
                if c > &half {
                    BigInt::from_biguint(Sign::Minus, &self.codec.order - c)
                } else if c.is_zero() {
                    BigInt::zero()
                } else {
                    BigInt::from_biguint(Sign::Plus, c.clone())
                }
            })
            .collect()
    }
}
