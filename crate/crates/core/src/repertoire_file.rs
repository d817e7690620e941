//! Binary repertoire container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "MFEPREP\0" | version u32
//! config      u64 length + UTF-8 config text
//! weights     n_r u64, n_o u64, nnz u64, nnz x (row u32, col u32, val f64),
//!             n_o * n_r readout f64
//! signals     count u64, len u64, values f64
//! map         flag u8 [n u64, d u64, eps f64, n * d f64]
//! filters     flag u8 [count u64, d u64, eps f64,
//!                      count x (label len u64 + bytes, d f64)]
//! sha256 of everything above (32 bytes)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::canvas::write_file;
use crate::chaining::ClassFilterSet;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kohonen::KohonenMap;
use crate::learner::Repertoire;
use crate::motor::MotorSystem;
use crate::reservoir::{ReservoirWeights, SparseMatrix};

pub const MAGIC: &[u8; 8] = b"MFEPREP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RepertoireFile {
    pub config: RunConfig,
    pub weights: ReservoirWeights,
    pub signals: Vec<Vec<f64>>,
    pub map: Option<KohonenMap>,
    pub filters: Option<ClassFilterSet>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("length {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // bound the allocation by what is actually left
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        self.take(n)
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Format(format!("bad section flag {v}"))),
        }
    }
}

fn text(b: &[u8]) -> Result<&str> {
    std::str::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8 string".into()))
}

impl RepertoireFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.bytes(self.config.to_text().as_bytes());

        let rec = &self.weights.recurrent;
        w.u64(rec.dim());
        w.u64(self.weights.n_o);
        w.u64(rec.nnz());
        for (r, c, v) in rec.triplets() {
            w.u32(r as u32);
            w.u32(c as u32);
            w.f64(v);
        }
        w.f64s(&self.weights.readout);

        w.u64(self.signals.len());
        w.u64(self.signals.first().map_or(0, Vec::len));
        for s in &self.signals {
            w.f64s(s);
        }

        match &self.map {
            None => w.u8(0),
            Some(m) => {
                w.u8(1);
                w.u64(m.n());
                w.u64(m.d());
                w.f64(m.eps());
                w.f64s(m.weights());
            }
        }
        match &self.filters {
            None => w.u8(0),
            Some(f) => {
                w.u8(1);
                w.u64(f.len());
                w.u64(f.dim());
                w.f64(f.eps());
                for (label, filt) in f.labels().iter().zip(f.filters()) {
                    w.bytes(label.as_bytes());
                    w.f64s(filt);
                }
            }
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() + 4 + 32 || &buf[..8] != MAGIC {
            return Err(Error::Format("not a repertoire file".into()));
        }
        let (body, sum) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let config = RunConfig::parse(text(r.bytes()?)?, Path::new("<repertoire config>"))?;

        let n_r = r.u64()?;
        let n_o = r.u64()?;
        let nnz = r.u64()?;
        if nnz > n_r.saturating_mul(n_r) {
            return Err(Error::Format(format!(
                "{nnz} non-zeros in a {n_r}x{n_r} matrix"
            )));
        }
        let mut trip = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let row = r.u32()? as usize;
            let col = r.u32()? as usize;
            trip.push((row, col, r.f64()?));
        }
        let recurrent = SparseMatrix::from_triplets(n_r, &trip)?;
        let readout = r.f64s(n_o.saturating_mul(n_r))?;
        let weights = ReservoirWeights::from_parts(recurrent, readout, n_o)?;

        let count = r.u64()?;
        let len = r.u64()?;
        let signals = (0..count)
            .map(|_| r.f64s(len))
            .collect::<Result<Vec<_>>>()?;

        let map = if r.flag()? {
            let n = r.u64()?;
            let d = r.u64()?;
            let eps = r.f64()?;
            Some(KohonenMap::from_weights(
                n,
                d,
                eps,
                r.f64s(n.saturating_mul(d))?,
            )?)
        } else {
            None
        };
        let filters = if r.flag()? {
            let count = r.u64()?;
            let d = r.u64()?;
            let eps = r.f64()?;
            let mut labels = Vec::new();
            let mut filts = Vec::new();
            for _ in 0..count {
                labels.push(text(r.bytes()?)?.to_string());
                filts.push(r.f64s(d)?);
            }
            Some(ClassFilterSet::new(labels, filts, eps)?)
        } else {
            None
        };
        if r.pos != body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes before checksum",
                body.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            weights,
            signals,
            map,
            filters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    pub fn motor(&self) -> Result<MotorSystem> {
        Ok(MotorSystem::with_weights(
            self.config.reservoir_config(),
            self.weights.clone(),
            self.config.arm_config()?,
        ))
    }

    pub fn repertoire(&self) -> Result<Repertoire> {
        Ok(Repertoire {
            signals: self.signals.clone(),
            reservoir: self.config.reservoir_config(),
            arm: self.config.arm_config()?,
            seed: self.config.seed,
        })
    }

    /// Human-readable listing of every stored value.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version {VERSION}");
        let _ = writeln!(s, "config_hash {}", self.config.hash());
        s.push_str("[config]\n");
        s.push_str(&self.config.to_text());
        let rec = &self.weights.recurrent;
        let _ = writeln!(
            s,
            "[recurrent] n_r={} nnz={} max_abs_row_sum={}",
            rec.dim(),
            rec.nnz(),
            rec.max_abs_row_sum()
        );
        for (r, c, v) in rec.triplets() {
            let _ = writeln!(s, "{r} {c} {v}");
        }
        let _ = writeln!(s, "[readout] n_o={}", self.weights.n_o);
        for row in self.weights.readout.chunks(rec.dim().max(1)) {
            let _ = writeln!(s, "{}", join(row));
        }
        let _ = writeln!(s, "[signals] count={}", self.signals.len());
        for (k, x) in self.signals.iter().enumerate() {
            let _ = writeln!(s, "{k}: {}", join(x));
        }
        match &self.map {
            None => s.push_str("[map] none\n"),
            Some(m) => {
                let _ = writeln!(s, "[map] n={} d={} eps={}", m.n(), m.d(), m.eps());
                for (i, f) in m.filters().enumerate() {
                    let mass: f64 = f.iter().sum();
                    let _ = writeln!(s, "unit {i}: mass={mass}");
                }
            }
        }
        match &self.filters {
            None => s.push_str("[filters] none\n"),
            Some(f) => {
                let _ = writeln!(
                    s,
                    "[filters] count={} d={} eps={}",
                    f.len(),
                    f.dim(),
                    f.eps()
                );
                for (i, l) in f.labels().iter().enumerate() {
                    let mass: f64 = f.filter(i).iter().sum();
                    let _ = writeln!(s, "{l}: mass={mass} entropy={}", f.entropies()[i]);
                }
            }
        }
        s
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::init_weights;
    use rand::SeedableRng;

    fn sample(with_optional: bool) -> RepertoireFile {
        let config = RunConfig {
            seed: 4,
            n: 3,
            ..Default::default()
        };
        let weights = init_weights(&config.reservoir_config()).unwrap();
        let rep = Repertoire::random(
            3,
            &config.reservoir_config(),
            &config.arm_config().unwrap(),
            4,
        )
        .unwrap();
        let (map, filters) = if with_optional {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            let map = KohonenMap::random(3, 16, 1e-3, &mut rng).unwrap();
            let filters = ClassFilterSet::new(
                vec!["c".into(), "s".into()],
                vec![vec![0.25; 16], vec![0.0; 16]],
                1e-3,
            )
            .unwrap();
            (Some(map), Some(filters))
        } else {
            (None, None)
        };
        RepertoireFile {
            config,
            weights,
            signals: rep.signals,
            map,
            filters,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        for opt in [false, true] {
            let f = sample(opt);
            let bytes = f.to_bytes();
            let back = RepertoireFile::from_bytes(&bytes).unwrap();
            assert_eq!(back, f);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample(true).to_bytes();
        for pos in [3, 12, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x40;
            assert!(matches!(
                RepertoireFile::from_bytes(&bad),
                Err(Error::Format(_))
            ));
        }
        assert!(RepertoireFile::from_bytes(&bytes[..bytes.len() - 5]).is_err());
        assert!(RepertoireFile::from_bytes(b"").is_err());
    }

    #[test]
    fn dump_mentions_everything() {
        let d = sample(true).dump();
        for needle in [
            "version 1",
            "[config]",
            "train.n=3",
            "[signals] count=3",
            "[map] n=3",
            "c: mass=",
        ] {
            assert!(d.contains(needle), "missing {needle}");
        }
    }
}
