//! `L{layer}.0_P{pct}.0_N{sigma}` condition labels, sigma with one decimal.
//!
//! The parser also accepts the bare integer forms `L8_P80_N1.9`.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConditionKey {
    pub layer: u32,
    pub pct: u32,
    pub sigma_tenths: u32,
}

pub fn format(layer: u32, pct: u32, sigma_tenths: u32) -> String {
    format!("L{layer}.0_P{pct}.0_N{}.{}", sigma_tenths / 10, sigma_tenths % 10)
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { offset: self.pos, message: message.into() })
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn digits(&mut self) -> Result<u32> {
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected digits");
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse { offset: start, message: "number too large".into() })
    }

    /// An integer, optionally followed by `.0`.
    fn integral(&mut self) -> Result<u32> {
        let v = self.digits()?;
        if self.s.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            if self.s.get(self.pos) != Some(&b'0') {
                return self.err("expected an integral value ending in .0");
            }
            self.pos += 1;
        }
        Ok(v)
    }
}

pub fn parse(text: &str) -> Result<ConditionKey> {
    let mut c = Cursor { s: text.as_bytes(), pos: 0 };
    c.expect(b'L')?;
    let layer = c.integral()?;
    c.expect(b'_')?;
    c.expect(b'P')?;
    let pct = c.integral()?;
    c.expect(b'_')?;
    c.expect(b'N')?;
    let units_at = c.pos;
    let units = c.digits()?;
    c.expect(b'.')?;
    let tenth_at = c.pos;
    match c.s.get(c.pos) {
        Some(d) if d.is_ascii_digit() => c.pos += 1,
        _ => return c.err("expected one decimal digit for sigma"),
    }
    let tenth = (c.s[tenth_at] - b'0') as u32;
    if c.pos != c.s.len() {
        return c.err("trailing characters");
    }
    let sigma_tenths = units
        .checked_mul(10)
        .and_then(|v| v.checked_add(tenth))
        .ok_or(Error::Parse { offset: units_at, message: "sigma too large".into() })?;
    Ok(ConditionKey { layer, pct, sigma_tenths })
}
