//! Byte encoding shared by keys and ciphertexts: every big integer is a
//! `u32` big-endian length followed by its big-endian magnitude.

use num_bigint::BigUint;

use crate::error::{Error, Result};

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_be_bytes());
}

pub(crate) fn put_uint(buf: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    put_u32(buf, bytes.len() as u32);
    buf.extend_from_slice(&bytes);
}

pub(crate) fn uint_len(v: &BigUint) -> usize {
    4 + (v.bits().div_ceil(8) as usize).max(1)
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Wire(format!("need {n} bytes, {} left", self.buf.len())));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn uint(&mut self) -> Result<BigUint> {
        let n = self.u32()? as usize;
        Ok(BigUint::from_bytes_be(self.take(n)?))
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Wire(format!("{} trailing bytes", self.buf.len())))
        }
    }
}
