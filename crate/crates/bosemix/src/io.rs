//! File formats.
//!
//! All binary files are little-endian and start with a four-byte magic tag,
//! a `u32` format version (currently 1) and a metadata string stored as a
//! `u64` byte length followed by UTF-8 text (the command-line tool puts its
//! provenance JSON there; it may be empty). Integers are `u64` unless stated
//! otherwise and reals are IEEE-754 `f64`.
//!
//! **Tensor** (`BMXT`): `dims[4]: u64`, then `dims[0]·dims[1]·dims[2]·dims[3]`
//! entries `V[m][n][p][q]` with `q` varying fastest.
//!
//! **Interaction tensor** (`BMXI`): three tensor records (each with its own
//! `BMXT` header) for `V¹`, `V²`, `V¹²` in that order.
//!
//! **State vector** (`BMXS`):
//!
//! | field | type |
//! |---|---|
//! | basis kind | `u8`: 0 sector, 1 excitations with per-species caps, 2 excitations with a total cap |
//! | `d₁`, `d₂` | `u64` |
//! | kind parameters | `u64 × 2`: `(N₁, N₂)`, `(cap₁, cap₂)` or `(Q, 0)` |
//! | dimension `D` | `u64` |
//! | enumeration | `D × (d₁ + d₂)` bytes, the occupations of every basis state in index order |
//! | coefficients | `D × f64` |
//!
//! The reader rebuilds the basis from the kind parameters and rejects the file
//! if the stored enumeration differs, so a vector is never silently paired
//! with a differently ordered basis.
//!
//! **Husimi ensemble** (`BMXH`): `seed`, `d₁`, `d₂`, `N₁`, `N₂`, sample count
//! `S`, then `S` records of `u` (`d₁` complex numbers as `re, im` pairs), `v`
//! (`d₂` pairs) and the weight.
//!
//! Radial potentials are read from two-column CSV `r,V` with an optional
//! header row, on a uniform grid starting at `r = 0` and ending where `V`
//! vanishes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::bogoliubov::{InteractionTensor, Tensor4};
use crate::definetti::{HusimiEnsemble, HusimiSample};
use crate::error::{Error, Result};
use crate::fock::{BasisKind, ExcitationCap, FockBasis, ManyBodyVector, DEFAULT_DIMENSION_CAP};
use crate::scattering::RadialPotential;

const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn header(&mut self, magic: &[u8; 4], meta: &str) -> Result<()> {
        self.0.write_all(magic)?;
        self.0.write_all(&VERSION.to_le_bytes())?;
        self.u64(meta.len())?;
        self.0.write_all(meta.as_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: usize) -> Result<()> {
        self.0.write_all(&(v as u64).to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<String> {
        let tag = self.bytes::<4>()?;
        if &tag != magic {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&tag)
            )));
        }
        let version = u32::from_le_bytes(self.bytes()?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let len = self.u64()?;
        let mut meta = Vec::new();
        (&mut self.0).take(len as u64).read_to_end(&mut meta)?;
        if meta.len() != len {
            return Err(Error::Format("truncated metadata".into()));
        }
        String::from_utf8(meta).map_err(|_| Error::Format("metadata is not UTF-8".into()))
    }
    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.bytes()?)).map_err(|_| Error::Format("integer overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn end(&mut self) -> Result<()> {
        let mut rest = Vec::new();
        self.0.read_to_end(&mut rest)?;
        if rest.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", rest.len())))
        }
    }
}

fn write_tensor_record<W: Write>(w: &mut Writer<W>, t: &Tensor4, meta: &str) -> Result<()> {
    t.validate()?;
    w.header(b"BMXT", meta)?;
    for d in t.dims {
        w.u64(d)?;
    }
    for &x in &t.data {
        w.f64(x)?;
    }
    Ok(())
}

fn read_tensor_record<R: Read>(r: &mut Reader<R>) -> Result<Tensor4> {
    r.header(b"BMXT")?;
    let dims = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
    let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let t = Tensor4 { dims, data };
    t.validate()?;
    Ok(t)
}

pub fn write_tensor(t: &Tensor4, meta: &str, out: impl Write) -> Result<()> {
    let mut w = Writer(out);
    write_tensor_record(&mut w, t, meta)
}

pub fn read_tensor(input: impl Read) -> Result<Tensor4> {
    let mut r = Reader(input);
    let t = read_tensor_record(&mut r)?;
    r.end()?;
    Ok(t)
}

pub fn write_interaction(t: &InteractionTensor, meta: &str, out: impl Write) -> Result<()> {
    let mut w = Writer(out);
    w.header(b"BMXI", meta)?;
    write_tensor_record(&mut w, &t.v1, "")?;
    write_tensor_record(&mut w, &t.v2, "")?;
    write_tensor_record(&mut w, &t.v12, "")
}

pub fn read_interaction(input: impl Read) -> Result<InteractionTensor> {
    let mut r = Reader(input);
    r.header(b"BMXI")?;
    let v1 = read_tensor_record(&mut r)?;
    let v2 = read_tensor_record(&mut r)?;
    let v12 = read_tensor_record(&mut r)?;
    r.end()?;
    Ok(InteractionTensor { v1, v2, v12 })
}

pub fn write_state(psi: &ManyBodyVector, meta: &str, out: impl Write) -> Result<()> {
    let mut w = Writer(out);
    w.header(b"BMXS", meta)?;
    let basis = psi.basis();
    let (tag, a, b) = match basis.kind() {
        BasisKind::Sector { n1, n2 } => (0u8, n1, n2),
        BasisKind::Excitations(ExcitationCap::PerSpecies(a, b)) => (1, a, b),
        BasisKind::Excitations(ExcitationCap::Total(q)) => (2, q, 0),
    };
    let [d1, d2] = basis.modes();
    w.0.write_all(&[tag])?;
    for v in [d1, d2, a, b, basis.len()] {
        w.u64(v)?;
    }
    for i in 0..basis.len() {
        w.0.write_all(basis.state(i))?;
    }
    for &c in psi.coefficients() {
        w.f64(c)?;
    }
    Ok(())
}

pub fn read_state(input: impl Read) -> Result<ManyBodyVector> {
    let mut r = Reader(input);
    r.header(b"BMXS")?;
    let [tag] = r.bytes::<1>()?;
    let (d1, d2, a, b, dim) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let basis = match tag {
        0 => FockBasis::sector_capped(d1, d2, a, b, DEFAULT_DIMENSION_CAP)?,
        1 => FockBasis::excitations_capped([d1, d2], ExcitationCap::PerSpecies(a, b), DEFAULT_DIMENSION_CAP)?,
        2 => FockBasis::excitations_capped([d1, d2], ExcitationCap::Total(a), DEFAULT_DIMENSION_CAP)?,
        t => return Err(Error::Format(format!("unknown basis kind {t}"))),
    };
    if basis.len() != dim {
        return Err(Error::Format(format!(
            "header dimension {dim} but the basis has {} states",
            basis.len()
        )));
    }
    let mut occ = vec![0u8; d1 + d2];
    for i in 0..dim {
        r.0.read_exact(&mut occ)
            .map_err(|e| Error::Format(format!("truncated enumeration: {e}")))?;
        if basis.state(i) != occ.as_slice() {
            return Err(Error::Format(format!("basis state {i} differs from the stored enumeration")));
        }
    }
    let coeffs = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.end()?;
    ManyBodyVector::new(Arc::new(basis), coeffs)
}

pub fn write_ensemble(e: &HusimiEnsemble, meta: &str, out: impl Write) -> Result<()> {
    let mut w = Writer(out);
    w.header(b"BMXH", meta)?;
    w.0.write_all(&e.seed.to_le_bytes())?;
    for v in [e.modes[0], e.modes[1], e.particles[0], e.particles[1], e.samples.len()] {
        w.u64(v)?;
    }
    for s in &e.samples {
        for z in s.u.iter().chain(&s.v) {
            w.f64(z.re)?;
            w.f64(z.im)?;
        }
        w.f64(s.weight)?;
    }
    Ok(())
}

pub fn read_ensemble(input: impl Read) -> Result<HusimiEnsemble> {
    let mut r = Reader(input);
    r.header(b"BMXH")?;
    let seed = u64::from_le_bytes(r.bytes()?);
    let (d1, d2, n1, n2, count) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let complex = |n: usize, r: &mut Reader<_>| -> Result<Vec<Complex64>> {
        (0..n).map(|_| Ok(Complex64::new(r.f64()?, r.f64()?))).collect()
    };
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let u = complex(d1, &mut r)?;
        let v = complex(d2, &mut r)?;
        let weight = r.f64()?;
        if !(weight >= 0.0) {
            return Err(Error::Format(format!("negative sample weight {weight}")));
        }
        samples.push(HusimiSample { u, v, weight });
    }
    r.end()?;
    Ok(HusimiEnsemble {
        modes: [d1, d2],
        particles: [n1, n2],
        seed,
        samples,
    })
}

/// Metadata string of any of the binary formats above.
pub fn read_metadata(input: impl Read) -> Result<String> {
    let mut r = Reader(input);
    let tag = r.bytes::<4>()?;
    if !matches!(&tag, b"BMXT" | b"BMXI" | b"BMXS" | b"BMXH") {
        return Err(Error::Format("not a bosemix binary file".into()));
    }
    Reader(Cursor::new(tag).chain(r.0)).header(&tag)
}

/// Writes `value` to `path` through one of the writers above.
pub fn save<T: ?Sized>(
    path: &Path,
    value: &T,
    meta: &str,
    write: impl FnOnce(&T, &str, &mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write(value, meta, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load<T>(path: &Path, read: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    read(BufReader::new(File::open(path)?))
}

/// Parses a two-column `r,V` CSV into a [`RadialPotential`].
pub fn read_radial_csv(input: impl Read) -> Result<RadialPotential> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("CSV: {e}")))?;
        if record.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "CSV row {} has {} columns, expected 2",
                line + 1,
                record.len()
            )));
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(p) => rows.push((p[0], p[1])),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::InvalidInput(format!("CSV row {}: {e}", line + 1))),
        }
    }
    if rows.len() < 3 {
        return Err(Error::InvalidInput("a radial potential needs at least 3 rows".into()));
    }
    if rows[0].0 != 0.0 {
        return Err(Error::InvalidInput("the first radius must be 0".into()));
    }
    let radius = rows.last().unwrap().0;
    let step = radius / (rows.len() - 1) as f64;
    for (i, &(r, _)) in rows.iter().enumerate() {
        if (r - i as f64 * step).abs() > 1e-9 * radius {
            return Err(Error::InvalidInput(format!("radius {r} in row {} is off the uniform grid", i + 1)));
        }
    }
    RadialPotential::new(rows.into_iter().map(|(_, v)| v).collect(), radius)
}

pub fn load_radial_csv(path: &Path) -> Result<RadialPotential> {
    read_radial_csv(BufReader::new(File::open(path)?))
}
