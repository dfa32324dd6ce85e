//! Binary checkpoints: magic + version header, grid geometry, a 64-bit hash
//! of the run parameters, the current state, and (if present) the one extra
//! history level the two-step scheme needs. All numeric payloads are f64 /
//! integer little-endian, so a checkpoint written and read on the same
//! machine reproduces the state bit-exactly.

use crate::dynamics::{FlowMode, SimState, StepConfig};
use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"VFCP";
pub const VERSION: u32 = 1;

/// What a checkpoint holds: the state, the optional previous state for the
/// two-step scheme, and the parameter hash recorded at save time.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: SimState,
    pub prev: Option<SimState>,
    pub params_hash: u64,
}

/// Result of loading: the checkpoint plus a warning when the stored
/// parameter hash disagrees with the caller's but the policy is lenient.
#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub checkpoint: Checkpoint,
    pub hash_warning: Option<String>,
}

/// FNV-1a over a canonical byte serialization of everything that shapes a
/// trajectory: grid geometry, model parameters, step configuration, and the
/// flow mode.
pub fn params_hash(grid: &Grid, p: &ModelParams, cfg: &StepConfig, mode: FlowMode) -> u64 {
    let mut h = Fnv::new();
    h.write_u64(grid.dimension() as u64);
    for &n in grid.resolution() {
        h.write_u64(n as u64);
    }
    for &l in grid.box_length() {
        h.write_f64(l);
    }
    for v in [
        p.epsilon,
        p.bending_rigidity,
        p.mobility,
        p.viscosity,
        p.volume_penalty,
        p.area_penalty,
        p.volume_target,
        p.area_target,
    ] {
        h.write_f64(v);
    }
    h.write_f64(cfg.dt);
    h.write_u64(match cfg.scheme {
        crate::dynamics::TimeScheme::ImexEuler => 1,
        crate::dynamics::TimeScheme::ImexBdf2 => 2,
    });
    h.write_u64(cfg.dealias as u64);
    h.write_u64(cfg.negate_elastic_force as u64);
    h.write_u64(match mode {
        FlowMode::Coupled => 1,
        FlowMode::GradientFlow => 2,
    });
    h.finish()
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Fnv {
        Fnv(0xcbf29ce484222325)
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }
    fn write_f64(&mut self, v: f64) {
        self.write(&v.to_bits().to_le_bytes());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

fn write_f64_slice(out: &mut impl Write, values: &[f64]) -> Result<()> {
    for &v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_state(out: &mut impl Write, s: &SimState) -> Result<()> {
    out.write_all(&s.t.to_le_bytes())?;
    write_f64_slice(out, s.phi.values())?;
    for c in s.u.components() {
        write_f64_slice(out, c.values())?;
    }
    Ok(())
}

/// Write a checkpoint for `state` (plus the previous state when the caller
/// integrates with the two-step scheme).
pub fn save(
    path: &Path,
    state: &SimState,
    prev: Option<&SimState>,
    params_hash: u64,
) -> Result<()> {
    if let Some(p) = prev {
        state
            .grid()
            .check_same(p.grid(), "checkpoint history level")?;
    }
    let grid = state.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(grid.dimension() as u32).to_le_bytes())?;
    for &n in grid.resolution() {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for &l in grid.box_length() {
        out.write_all(&l.to_le_bytes())?;
    }
    out.write_all(&params_hash.to_le_bytes())?;
    out.write_all(&[prev.is_some() as u8])?;
    write_state(&mut out, state)?;
    if let Some(p) = prev {
        write_state(&mut out, p)?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint(format!("truncated while reading {what}")))?;
        Ok(buf)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }
    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64(what)?);
        }
        Ok(out)
    }
}

fn read_state(r: &mut Reader<impl Read>, grid: &Grid) -> Result<SimState> {
    let t = r.f64("state time")?;
    if !t.is_finite() {
        return Err(Error::Checkpoint(format!("stored time {t} is not finite")));
    }
    let phi = ScalarField::from_values(grid.clone(), r.f64_vec(grid.len(), "phase field")?)?;
    let mut comps = Vec::with_capacity(grid.dimension());
    for _ in 0..grid.dimension() {
        comps.push(ScalarField::from_values(
            grid.clone(),
            r.f64_vec(grid.len(), "velocity component")?,
        )?);
    }
    let u = VectorField::from_components(comps)?;
    SimState::new(u, phi, t)
}

/// Read a checkpoint back. When `expected_hash` is given and disagrees with
/// the stored hash, `strict` decides between a hard error and a returned
/// warning.
pub fn load(path: &Path, expected_hash: Option<u64>, strict: bool) -> Result<LoadOutcome> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader {
        inner: std::io::BufReader::new(file),
    };
    let magic: [u8; 4] = r.bytes("magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let dim = r.u32("dimension")? as usize;
    if dim != 2 && dim != 3 {
        return Err(Error::Checkpoint(format!("bad dimension {dim}")));
    }
    let mut resolution = Vec::with_capacity(dim);
    for _ in 0..dim {
        resolution.push(r.u64("resolution")? as usize);
    }
    let mut box_length = Vec::with_capacity(dim);
    for _ in 0..dim {
        box_length.push(r.f64("box length")?);
    }
    let grid = Grid::new(&resolution, &box_length)
        .map_err(|e| Error::Checkpoint(format!("stored grid is invalid: {e}")))?;
    let stored_hash = r.u64("params hash")?;
    let has_prev = r.bytes::<1>("history flag")?[0];
    if has_prev > 1 {
        return Err(Error::Checkpoint(format!(
            "bad history flag {has_prev}, expected 0 or 1"
        )));
    }
    let state = read_state(&mut r, &grid)?;
    let prev = if has_prev == 1 {
        Some(read_state(&mut r, &grid)?)
    } else {
        None
    };
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }

    let hash_warning = match expected_hash {
        Some(h) if h != stored_hash => {
            let msg = format!(
                "parameter hash mismatch: checkpoint has {stored_hash:#018x}, run configured {h:#018x}"
            );
            if strict {
                return Err(Error::Checkpoint(msg));
            }
            Some(msg)
        }
        _ => None,
    };
    Ok(LoadOutcome {
        checkpoint: Checkpoint {
            state,
            prev,
            params_hash: stored_hash,
        },
        hash_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::{random_band_limited, random_solenoidal};

    fn sample_state(seed: u64) -> SimState {
        let grid = Grid::unit(2, 16).unwrap();
        let phi = random_band_limited(&grid, seed, 3, 0.5).unwrap();
        let u = random_solenoidal(&grid, seed + 1, 3, 0.25).unwrap();
        SimState::new(u, phi, 0.625).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_with_history() {
        let state = sample_state(11);
        let mut prev = sample_state(12);
        prev.t = 0.5;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.vfcp");
        save(&path, &state, Some(&prev), 0xDEADBEEF).unwrap();
        let out = load(&path, Some(0xDEADBEEF), true).unwrap();
        assert!(out.hash_warning.is_none());
        assert_eq!(out.checkpoint.state, state);
        assert_eq!(out.checkpoint.prev.as_ref(), Some(&prev));
        assert_eq!(out.checkpoint.params_hash, 0xDEADBEEF);
    }

    #[test]
    fn hash_mismatch_warns_or_fails_per_policy() {
        let state = sample_state(21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.vfcp");
        save(&path, &state, None, 1).unwrap();
        let lenient = load(&path, Some(2), false).unwrap();
        assert!(lenient.hash_warning.is_some());
        let strict = load(&path, Some(2), true);
        assert!(matches!(strict, Err(Error::Checkpoint(_))));
        // absent expectation: no warning either way
        let agnostic = load(&path, None, true).unwrap();
        assert!(agnostic.hash_warning.is_none());
    }

    #[test]
    fn corrupted_header_and_truncation_are_named() {
        let state = sample_state(31);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.vfcp");
        save(&path, &state, None, 7).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        match load(&path, None, true) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }

        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        std::fs::write(&path, &bad_version).unwrap();
        match load(&path, None, true) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }

        let truncated = &bytes[..bytes.len() - 9];
        std::fs::write(&path, truncated).unwrap();
        match load(&path, None, true) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }

        let mut extended = bytes.clone();
        extended.push(0);
        std::fs::write(&path, &extended).unwrap();
        match load(&path, None, true) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("trailing"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_separates_every_parameter_field() {
        let grid = Grid::unit(2, 16).unwrap();
        let p = ModelParams::default();
        let cfg = StepConfig::default();
        let base = params_hash(&grid, &p, &cfg, FlowMode::Coupled);
        let mut p2 = p;
        p2.mobility *= 2.0;
        assert_ne!(base, params_hash(&grid, &p2, &cfg, FlowMode::Coupled));
        let mut cfg2 = cfg;
        cfg2.dt *= 0.5;
        assert_ne!(base, params_hash(&grid, &p, &cfg2, FlowMode::Coupled));
        assert_ne!(base, params_hash(&grid, &p, &cfg, FlowMode::GradientFlow));
        let grid2 = Grid::unit(2, 32).unwrap();
        assert_ne!(base, params_hash(&grid2, &p, &cfg, FlowMode::Coupled));
    }
}
