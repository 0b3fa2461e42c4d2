//! Binary classifier files: magic `TMAP`, a version byte, then tagged,
//! length-prefixed sections. All integers are u64 and all reals f64,
//! little-endian.
//!
//! ```text
//! TMAP v
//! 'H' len  p C L S_1..S_C
//! 'W' len  (per class)
//!   'D' len  (per cell)
//!     'P' len  rows cols data          (per layer)
//!     'M' len  M in out sigma2 nu w aux alpha
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::deep::{CdmmaModel, ClassifierModel, WideCdmmaModel};
use crate::error::{Error, Result};
use crate::mm::{KernelParams, MembershipMappingModel};

pub const MAGIC: &[u8; 4] = b"TMAP";
pub const FORMAT_VERSION: u8 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn matrix_data(&mut self, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }

    fn section(&mut self, tag: u8, body: impl FnOnce(&mut Writer)) {
        self.buf.push(tag);
        let at = self.buf.len();
        self.u64(0);
        body(self);
        let len = (self.buf.len() - at - 8) as u64;
        self.buf[at..at + 8].copy_from_slice(&len.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Schema(format!("corrupt model file: {}", msg.into()))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(corrupt("unexpected end of data"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| corrupt("size out of range"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let n = rows.checked_mul(cols).filter(|n| n.saturating_mul(8) <= self.data.len() - self.pos);
        let n = n.ok_or_else(|| corrupt("matrix larger than its section"))?;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            vals.push(self.f64()?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }

    fn section(&mut self, tag: u8) -> Result<Reader<'a>> {
        let found = self.take(1)?[0];
        if found != tag {
            return Err(corrupt(format!("expected section {:?}, found {:?}", tag as char, found as char)));
        }
        let len = self.u64()?;
        Ok(Reader {
            data: self.take(len)?,
            pos: 0,
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(())
    }
}

fn write_mm(w: &mut Writer, mm: &MembershipMappingModel) {
    w.section(b'M', |w| {
        let k = mm.kernel();
        w.u64(mm.m());
        w.u64(mm.input_dim());
        w.u64(mm.output_dim());
        w.f64(k.sigma2);
        w.f64(k.nu);
        for &v in &k.w {
            w.f64(v);
        }
        w.matrix_data(mm.aux_points());
        w.matrix_data(mm.alpha());
    });
}

fn read_mm(r: &mut Reader<'_>) -> Result<MembershipMappingModel> {
    let mut s = r.section(b'M')?;
    let (m, input, output) = (s.u64()?, s.u64()?, s.u64()?);
    let sigma2 = s.f64()?;
    let nu = s.f64()?;
    let w = (0..input).map(|_| s.f64()).collect::<Result<Vec<_>>>()?;
    let aux = s.matrix(m, input)?;
    let alpha = s.matrix(m, output)?;
    s.finish()?;
    MembershipMappingModel::from_parts(alpha, aux, KernelParams::new(sigma2, w, nu)?)
}

pub fn encode_classifier(model: &ClassifierModel) -> Vec<u8> {
    let mut w = Writer { buf: MAGIC.to_vec() };
    w.buf.push(FORMAT_VERSION);
    let layers = model.per_class()[0].members()[0].num_layers();
    w.section(b'H', |w| {
        w.u64(model.dim());
        w.u64(model.num_classes());
        w.u64(layers);
        for class in model.per_class() {
            w.u64(class.members().len());
        }
    });
    for class in model.per_class() {
        w.section(b'W', |w| {
            for member in class.members() {
                w.section(b'D', |w| {
                    for (mm, proj) in member.layers().iter().zip(member.projections()) {
                        w.section(b'P', |w| {
                            w.u64(proj.nrows());
                            w.u64(proj.ncols());
                            w.matrix_data(proj);
                        });
                        write_mm(w, mm);
                    }
                });
            }
        });
    }
    w.buf
}

pub fn decode_classifier(bytes: &[u8]) -> Result<ClassifierModel> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing TMAP magic"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::Version {
            found: bytes[4],
            expected: FORMAT_VERSION,
        });
    }
    let mut r = Reader { data: bytes, pos: 5 };
    let mut h = r.section(b'H')?;
    let (p, c, layers) = (h.u64()?, h.u64()?, h.u64()?);
    let cells = (0..c).map(|_| h.u64()).collect::<Result<Vec<_>>>()?;
    h.finish()?;
    let mut per_class = Vec::with_capacity(c);
    for &s in &cells {
        let mut wr = r.section(b'W')?;
        let mut members = Vec::with_capacity(s.min(1 << 16));
        for _ in 0..s {
            let mut d = wr.section(b'D')?;
            let mut mms = Vec::new();
            let mut projs = Vec::new();
            for _ in 0..layers {
                let mut ps = d.section(b'P')?;
                let (rows, cols) = (ps.u64()?, ps.u64()?);
                projs.push(ps.matrix(rows, cols)?);
                ps.finish()?;
                mms.push(read_mm(&mut d)?);
            }
            d.finish()?;
            members.push(CdmmaModel::from_parts(mms, projs)?);
        }
        wr.finish()?;
        per_class.push(WideCdmmaModel::from_members(members)?);
    }
    r.finish()?;
    let model = ClassifierModel::from_classes(per_class)?;
    if model.dim() != p {
        return Err(corrupt("header dimension disagrees with the stored layers"));
    }
    Ok(model)
}

pub fn save_classifier(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_classifier(model))?;
    Ok(())
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    decode_classifier(&fs::read(path)?)
}
