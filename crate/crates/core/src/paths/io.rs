//! Columnar bundle files.
//!
//! `<name>` holds little-endian binary columns; `<name>.json` holds the
//! metadata needed to interpret them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_grid, JumpMark, PathBundle, PathError};
use crate::levy::LevyBaseMeasure;

const MAGIC: &[u8; 8] = b"BSDJPB01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSidecar {
    pub format_version: u32,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub measure_tag: String,
    pub base: LevyBaseMeasure,
    pub compensators: Vec<LevyBaseMeasure>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(e: std::io::Error) -> PathError {
    PathError::Io(e.to_string())
}

pub fn write_bundle(bundle: &PathBundle, path: &Path) -> Result<(), PathError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(bundle.n_paths as u64).to_le_bytes());
    buf.extend_from_slice(&(bundle.n_steps() as u64).to_le_bytes());
    let put = |buf: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    put(&mut buf, &bundle.grid);
    put(&mut buf, &bundle.values);
    put(&mut buf, &bundle.cont_increments);
    put(&mut buf, &bundle.qv_density);
    for i in &bundle.compensator_index {
        buf.extend_from_slice(&i.to_le_bytes());
    }
    for js in &bundle.jumps {
        buf.extend_from_slice(&(js.len() as u64).to_le_bytes());
    }
    for j in bundle.jumps.iter().flatten() {
        buf.extend_from_slice(&j.time.to_le_bytes());
        buf.extend_from_slice(&j.size.to_le_bytes());
        buf.extend_from_slice(&j.step.to_le_bytes());
        buf.extend_from_slice(&j.atom.to_le_bytes());
    }
    let sidecar = BundleSidecar {
        format_version: FORMAT_VERSION,
        n_paths: bundle.n_paths,
        n_steps: bundle.n_steps(),
        seed: bundle.seed,
        measure_tag: bundle.measure_tag.clone(),
        base: bundle.base.clone(),
        compensators: bundle.compensators.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| PathError::Format(e.to_string()))?;
    fs::write(path, buf).map_err(io_err)?;
    fs::write(sidecar_path(path), json).map_err(io_err)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], PathError> {
        let end = self.pos + N;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| PathError::Format("truncated file".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("slice has length N"))
    }

    fn u64(&mut self) -> Result<u64, PathError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, PathError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, PathError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PathError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_bundle(path: &Path) -> Result<PathBundle, PathError> {
    let bytes = fs::read(path).map_err(io_err)?;
    let text = fs::read_to_string(sidecar_path(path)).map_err(io_err)?;
    let meta: BundleSidecar = serde_json::from_str(&text).map_err(|e| PathError::Format(e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(PathError::Format(format!("unsupported format version {}", meta.format_version)));
    }
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if &r.take::<8>()? != MAGIC {
        return Err(PathError::Format("bad magic".into()));
    }
    let n_paths = r.u64()? as usize;
    let n = r.u64()? as usize;
    if n_paths != meta.n_paths || n != meta.n_steps {
        return Err(PathError::Format("sidecar dimensions disagree with data".into()));
    }
    let grid = r.f64s(n + 1)?;
    check_grid(&grid)?;
    let values = r.f64s(n_paths * (n + 1))?;
    let cont_increments = r.f64s(n_paths * n)?;
    let qv_density = r.f64s(n_paths * n)?;
    let compensator_index = (0..n_paths * n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    if compensator_index.iter().any(|&i| i as usize >= meta.compensators.len()) {
        return Err(PathError::Format("compensator index out of range".into()));
    }
    let counts = (0..n_paths).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
    let mut jumps = Vec::with_capacity(n_paths);
    for c in counts {
        let js = (0..c)
            .map(|_| Ok(JumpMark { time: r.f64()?, size: r.f64()?, step: r.u32()?, atom: r.u32()? }))
            .collect::<Result<Vec<_>, PathError>>()?;
        jumps.push(js);
    }
    if r.pos != bytes.len() {
        return Err(PathError::Format("trailing bytes".into()));
    }
    Ok(PathBundle {
        grid,
        n_paths,
        values,
        cont_increments,
        jumps,
        qv_density,
        compensators: meta.compensators,
        compensator_index,
        base: meta.base,
        seed: meta.seed,
        measure_tag: meta.measure_tag,
    })
}

/// Per grid time: path mean, path variance, mean volatility density of the
/// following step and jump rate of the following step. `header` is copied
/// verbatim in front of the column names.
pub fn summary_csv(bundle: &PathBundle, header: &str) -> String {
    use std::fmt::Write as _;
    let mut out = String::from(header);
    let n = bundle.n_steps();
    out.push_str("t,mean,var,qv_mean,jump_rate\n");
    for k in 0..=n {
        let e = bundle.mean_at(k);
        let s = k.min(n - 1);
        let qv: Vec<f64> = (0..bundle.n_paths).map(|p| bundle.qv_density(p, s)).collect();
        let jumps: usize = (0..bundle.n_paths).map(|p| bundle.jumps_in_step(p, s).len()).sum();
        let rate = jumps as f64 / (bundle.n_paths as f64 * bundle.dt(s));
        let _ = writeln!(out, "{},{},{},{},{}", bundle.grid[k], e.mean, e.variance(), crate::stats::mean(&qv), rate);
    }
    out
}

pub fn write_summary_csv(bundle: &PathBundle, path: &Path, config_hash: &str) -> Result<(), PathError> {
    let header = format!("# config_hash={config_hash}\n# seed={}\n", bundle.seed);
    fs::write(path, summary_csv(bundle, &header)).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{make_base_measure, Alpha, ControlSpec, JumpMap};
    use crate::paths::{apply_control, simulate_reference, uniform_grid};

    #[test]
    fn bundle_round_trips() {
        let f = make_base_measure(&[(0.3, 2.0), (-0.7, 1.0)]).unwrap().with_label("two");
        let b = simulate_reference(&f, 40, &uniform_grid(0.75, 12), 5).unwrap();
        let c = ControlSpec::constant(0.75, Alpha::Scalar(0.3), JumpMap::linear(1.1));
        let x = apply_control(&b, &c, &f).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_bundle(&x, &p).unwrap();
        assert_eq!(read_bundle(&p).unwrap(), x);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 3, &uniform_grid(1.0, 4), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        write_bundle(&b, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_bundle(&p), Err(PathError::Format(_))));
    }

    #[test]
    fn summary_has_header_and_rows() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 3, &uniform_grid(1.0, 4), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_summary_csv(&b, &p, "abc").unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# config_hash=abc\n# seed=5\nt,mean,var,qv_mean,jump_rate\n"));
        assert_eq!(text.lines().count(), 3 + 5);
    }
}
