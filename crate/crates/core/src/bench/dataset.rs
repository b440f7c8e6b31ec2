//! Labeled record generation and the binary dataset file.
//!
//! File layout, little-endian. Header (32 bytes): magic `DLC1`, version
//! `u32`, `L u32`, `N u32`, record count `u64`, flags `u32`, rays `u32`.
//! Each record: SNR dB `f64`, label `3 x f64`, `L x N` complex samples as
//! interleaved `f64`, then when the truth flag is set: attenuations and
//! delays (`R x L`, receiver by receiver), source spectrum (`N` complex) and
//! noise variance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CartesianPosition, Scene};
use crate::propagation::{
    sample_attenuations, synthesize, AttenuationMatrix, NoiseRecording, NoiseSource, PerturbSpec, RayDelaySet,
    SignalRecord, SynthesisInput, Truth, THREE_RAYS,
};

use super::config::{ExperimentConfig, PriorBox};

const MAGIC: &[u8; 4] = b"DLC1";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 32;

pub const FLAG_DYNAMIC: u32 = 1;
pub const FLAG_RECORDED_NOISE: u32 = 2;
pub const FLAG_TRUTH: u32 = 4;

/// Seed of trial `trial` at SNR index `snr_index`.
pub fn trial_seed(master: u64, snr_index: u64, trial: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ snr_index) ^ trial)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Produces the record of any `(snr index, trial)` independently.
#[derive(Debug, Clone)]
pub struct TrialGenerator {
    pub scene: Scene,
    pub prior: PriorBox,
    pub dynamic: Option<PerturbSpec>,
    pub noise: Option<NoiseRecording>,
    pub seed: u64,
    /// Trials per SNR level; fixes where each record reads recorded noise.
    pub per_snr: usize,
}

impl TrialGenerator {
    pub fn from_config(cfg: &ExperimentConfig, per_snr: usize) -> Result<Self> {
        cfg.validate()?;
        let noise = cfg.noise_file.as_deref().map(NoiseRecording::load).transpose()?;
        Ok(Self {
            scene: cfg.scene()?,
            prior: cfg.prior,
            dynamic: cfg.dynamic(),
            noise,
            seed: cfg.seed,
            per_snr,
        })
    }

    /// Draw order: position, attenuations, then the synthesizer's draws.
    pub fn record(&self, snr_index: usize, snr_db: f64, trial: usize) -> Result<SignalRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(self.seed, snr_index as u64, trial as u64));
        let position = self.prior.sample(&mut rng);
        let b = sample_attenuations(THREE_RAYS, self.scene.array.len(), &mut rng);
        let input = SynthesisInput {
            position,
            array: &self.scene.array,
            env: &self.scene.env,
            attenuations: &b,
            snr_db,
            dynamic: self.dynamic,
        };
        match &self.noise {
            None => synthesize(&input, &mut rng, NoiseSource::White),
            Some(rec) => {
                let block = self.scene.array.len() * self.scene.env.n;
                let mut cursor = rec.cursor((snr_index * self.per_snr + trial) * block);
                synthesize(&input, &mut rng, NoiseSource::Recorded(&mut cursor))
            }
        }
    }
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub snr_db: f64,
    pub record: SignalRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub receivers: usize,
    pub samples: usize,
    pub flags: u32,
    pub records: Vec<LabeledRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_truth(&self) -> bool {
        self.flags & FLAG_TRUTH != 0
    }

    /// Bytes of one record in the file.
    pub fn record_bytes(receivers: usize, samples: usize, flags: u32) -> usize {
        let base = 8 + 24 + receivers * samples * 16;
        if flags & FLAG_TRUTH != 0 {
            base + THREE_RAYS * receivers * (16 + 8) + samples * 16 + 8
        } else {
            base
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.receivers as u32).to_le_bytes())?;
        w.write_all(&(self.samples as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&self.flags.to_le_bytes())?;
        w.write_all(&(THREE_RAYS as u32).to_le_bytes())?;
        for item in &self.records {
            let rec = &item.record;
            if rec.receivers() != self.receivers || rec.len() != self.samples {
                return Err(Error::Shape("record shape differs from dataset header".into()));
            }
            put_f64(&mut w, item.snr_db)?;
            for v in rec.label.to_array() {
                put_f64(&mut w, v)?;
            }
            for x in &rec.samples {
                put_complex(&mut w, x)?;
            }
            if self.has_truth() {
                let t = rec.truth()?;
                let b = t.attenuations.matrix();
                let tau = t.delays.matrix();
                if b.shape() != (THREE_RAYS, self.receivers) || tau.shape() != (THREE_RAYS, self.receivers) {
                    return Err(Error::Shape("truth shape differs from dataset header".into()));
                }
                put_complex(&mut w, b.as_slice())?;
                for v in tau.as_slice() {
                    put_f64(&mut w, *v)?;
                }
                put_complex(&mut w, &t.source)?;
                put_f64(&mut w, t.noise_var)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("dataset", "bad magic"));
        }
        let version = get_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(Error::format("dataset", format!("unsupported version {version}")));
        }
        let receivers = get_u32(&mut r)? as usize;
        let samples = get_u32(&mut r)? as usize;
        let count = get_u64(&mut r)? as usize;
        let flags = get_u32(&mut r)?;
        let rays = get_u32(&mut r)? as usize;
        if receivers < 1 || samples < 1 || rays != THREE_RAYS {
            return Err(Error::format("dataset", "inconsistent header"));
        }
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let snr_db = get_f64(&mut r)?;
            let label = CartesianPosition::new(get_f64(&mut r)?, get_f64(&mut r)?, get_f64(&mut r)?);
            let data = (0..receivers)
                .map(|_| get_complex(&mut r, samples))
                .collect::<Result<Vec<_>>>()?;
            let mut record = SignalRecord::new(data, label).map_err(|e| Error::format("dataset", e.to_string()))?;
            if flags & FLAG_TRUTH != 0 {
                let b = get_complex(&mut r, rays * receivers)?;
                let tau = (0..rays * receivers).map(|_| get_f64(&mut r)).collect::<Result<Vec<_>>>()?;
                let source = get_complex(&mut r, samples)?;
                let noise_var = get_f64(&mut r)?;
                let attenuations = AttenuationMatrix::from_matrix(DMatrix::from_vec(rays, receivers, b))
                    .map_err(|e| Error::format("dataset", e.to_string()))?;
                let delays = RayDelaySet::from_matrix(DMatrix::from_vec(rays, receivers, tau))
                    .map_err(|e| Error::format("dataset", e.to_string()))?;
                record.truth = Some(Truth {
                    attenuations,
                    delays,
                    source,
                    noise_var,
                });
            }
            records.push(LabeledRecord { snr_db, record });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::format("dataset", "trailing bytes"));
        }
        Ok(Self {
            receivers,
            samples,
            flags,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

/// `records_per_snr` records at every configured SNR, in (SNR, trial) order.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let per_snr = cfg.dataset.records_per_snr;
    let generator = TrialGenerator::from_config(cfg, per_snr)?;
    let jobs: Vec<(usize, f64, usize)> = cfg
        .snr_db
        .iter()
        .enumerate()
        .flat_map(|(s, &snr)| (0..per_snr).map(move |t| (s, snr, t)))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|&(s, snr_db, t)| generator.record(s, snr_db, t).map(|record| LabeledRecord { snr_db, record }))
        .collect::<Result<Vec<_>>>()?;
    let mut flags = 0;
    if cfg.dynamic().is_some() {
        flags |= FLAG_DYNAMIC;
    }
    if cfg.noise_file.is_some() {
        flags |= FLAG_RECORDED_NOISE;
    }
    if cfg.dataset.include_truth {
        flags |= FLAG_TRUTH;
    } else {
        records.iter_mut().for_each(|r| r.record.truth = None);
    }
    Ok(Dataset {
        receivers: generator.scene.array.len(),
        samples: generator.scene.env.n,
        flags,
        records,
    })
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_complex<W: Write>(w: &mut W, v: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 16);
    for c in v {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("dataset", "truncated"),
        _ => Error::Io(e),
    })
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_complex<R: Read>(r: &mut R, n: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; n * 16];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect())
}
