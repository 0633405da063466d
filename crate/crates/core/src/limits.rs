//! Global size caps. Defaults can be overridden through the
//! `SOFICLAB_CAPS` environment variable, e.g.
//! `SOFICLAB_CAPS="exact_bits=26,gibbs_bits=20,ball=2000000"`.

use crate::error::{Error, Result};

pub const CAPS_ENV: &str = "SOFICLAB_CAPS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Caps {
    /// `log₂` of the largest configuration space `|A|^n` enumerated for `Z_n`.
    pub exact_bits: u32,
    /// Same for full derived Gibbs tables.
    pub gibbs_bits: u32,
    pub ball: usize,
    pub vertices: usize,
    /// Largest intermediate table in exact ball inference.
    pub table: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            exact_bits: 24,
            gibbs_bits: 20,
            ball: crate::cayley::DEFAULT_BALL_CAP,
            vertices: crate::sofic::DEFAULT_VERTEX_CAP,
            table: crate::field::DEFAULT_TABLE_CAP,
        }
    }
}

impl Caps {
    pub fn parse(s: &str) -> Result<Self> {
        let mut caps = Caps::default();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("cap entry {item:?} is not key=value")))?;
            let bad = |e: std::num::ParseIntError| Error::Schema(format!("cap {k}: {e}"));
            match k.trim() {
                "exact_bits" => caps.exact_bits = v.trim().parse().map_err(bad)?,
                "gibbs_bits" => caps.gibbs_bits = v.trim().parse().map_err(bad)?,
                "ball" => caps.ball = v.trim().parse().map_err(bad)?,
                "vertices" => caps.vertices = v.trim().parse().map_err(bad)?,
                "table" => caps.table = v.trim().parse().map_err(bad)?,
                other => return Err(Error::Schema(format!("unknown cap {other:?}"))),
            }
        }
        Ok(caps)
    }

    /// Defaults overridden by the environment, if set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(CAPS_ENV) {
            Ok(s) => Caps::parse(&s),
            Err(_) => Ok(Caps::default()),
        }
    }

    /// Checks `alphabet^n ≤ 2^bits`.
    pub fn check_states(what: &'static str, alphabet: usize, n: usize, bits: u32) -> Result<()> {
        let log2 = n as f64 * (alphabet as f64).log2();
        if log2 > bits as f64 + 1e-9 {
            let requested = if log2 < 63.0 { 2f64.powf(log2).round() as usize } else { usize::MAX };
            return Err(Error::CapExceeded { what, requested, cap: 1usize << bits.min(63) });
        }
        Ok(())
    }
}
