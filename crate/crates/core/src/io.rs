//! Artifact formats: coefficient CSV tables and the binary layout for
//! parabolic fields.
//!
//! Binary layout (all little endian):
//!
//! ```text
//! magic   b"DFCH"
//! version u32 = 1
//! m, steps, N, K, rows   u64 each (rows = stored time levels)
//! times   rows × f64
//! then for each α of the degree-major index set up to N over K variables:
//!         rows × m f64, row-major [time][grid point]
//! ```

use std::io::{Read, Write};

use crate::chaos::{ChaosExpansion, Truncation};
use crate::error::{Error, Result};
use crate::multiindex::{enumerate, Multiindex};
use crate::sde::TimeSeries;
use crate::spde_parabolic::ParabolicSolution;

pub const MAGIC: &[u8; 4] = b"DFCH";
pub const VERSION: u32 = 1;

/// Shortest round-trip decimal, exponent form for extreme magnitudes.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

/// `multiindex,coefficient` rows in index order; with `orthonormal` a
/// third column u_α√(α!).
pub fn write_expansion_csv<W: Write>(out: W, u: &ChaosExpansion<f64>, orthonormal: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if orthonormal {
        w.write_record(["multiindex", "coefficient", "orthonormal"])?;
    } else {
        w.write_record(["multiindex", "coefficient"])?;
    }
    for (a, c) in u.iter() {
        let mut rec = vec![a.to_string(), format_f64(*c)];
        if orthonormal {
            rec.push(format_f64(c * a.factorial()?.sqrt()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the first two columns of [`write_expansion_csv`] output.
pub fn read_expansion_csv<R: Read>(input: R, truncation: Truncation) -> Result<ChaosExpansion<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut u = ChaosExpansion::new(truncation);
    for rec in r.records() {
        let rec = rec?;
        let (Some(a), Some(c)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Io("short csv record".into()));
        };
        let c: f64 = c.parse().map_err(|_| Error::Io(format!("bad coefficient `{c}`")))?;
        u.insert(a.parse()?, c)?;
    }
    Ok(u)
}

/// `t,multiindex,coefficient` rows, time-major.
pub fn write_series_csv<W: Write>(out: W, s: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "multiindex", "coefficient"])?;
    let names: Vec<String> = s.index().iter().map(|a| a.to_string()).collect();
    let rows: Vec<&[f64]> = s.rows().map(|(_, v)| v).collect();
    for (i, t) in s.times().iter().enumerate() {
        let t = format_f64(*t);
        for (name, v) in names.iter().zip(&rows) {
            w.write_record([t.as_str(), name.as_str(), format_f64(v[i]).as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the binary layout described in the module docs.
pub fn write_parabolic<W: Write>(mut out: W, u: &ParabolicSolution, steps: usize) -> Result<()> {
    let t = u.truncation();
    let index = enumerate(t.vars, t.degree);
    let rows = u.times().len();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for x in [u.points(), steps, t.degree, t.vars, rows] {
        out.write_all(&(x as u64).to_le_bytes())?;
    }
    for x in u.times() {
        out.write_all(&x.to_le_bytes())?;
    }
    let zero = vec![0.0; u.points()];
    for a in &index {
        let block = u.coefficient(a);
        for i in 0..rows {
            let row = block.map(|b| b[i].as_slice()).unwrap_or(&zero);
            for x in row {
                out.write_all(&x.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Header of the binary layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParabolicHeader {
    pub points: usize,
    pub steps: usize,
    pub degree: usize,
    pub vars: usize,
    pub rows: usize,
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_parabolic<R: Read>(mut input: R) -> Result<(ParabolicHeader, ParabolicSolution)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not a parabolic field file".into()));
    }
    let mut v = [0u8; 4];
    input.read_exact(&mut v)?;
    if u32::from_le_bytes(v) != VERSION {
        return Err(Error::Io(format!("unsupported version {}", u32::from_le_bytes(v))));
    }
    let mut h = [0usize; 5];
    for x in h.iter_mut() {
        *x = usize::try_from(read_u64(&mut input)?).map_err(|_| Error::Io("header field too large".into()))?;
    }
    let header = ParabolicHeader { points: h[0], steps: h[1], degree: h[2], vars: h[3], rows: h[4] };
    let times = (0..header.rows).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?;
    let index: Vec<Multiindex> = enumerate(header.vars, header.degree);
    let mut values = Vec::with_capacity(index.len());
    for _ in &index {
        let block = (0..header.rows)
            .map(|_| (0..header.points).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        values.push(block);
    }
    let truncation = Truncation::new(header.vars, header.degree);
    Ok((header, ParabolicSolution::from_parts(truncation, header.points, times, index, values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_space::{HElement, NoiseSpace};
    use crate::sde::{propagate, SdeProblem};
    use crate::spde_parabolic::{grid_points, propagate_parabolic, ParabolicProblem};

    #[test]
    fn expansion_csv_round_trip() {
        let t = Truncation::new(2, 3);
        let u = ChaosExpansion::from_coefficients(
            t,
            [(Multiindex::zero(), 1.5), (Multiindex::from_dense(&[1, 2]), -0.1), (Multiindex::unit(2), 1e-300)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_expansion_csv(&mut buf, &u, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("multiindex,coefficient,orthonormal\n[],1.5,1.5\n"));
        // Commas inside the multiindex force quoting.
        assert!(text.contains("\"[[2,1]]\",1e-300"));
        let v = read_expansion_csv(buf.as_slice(), t).unwrap();
        assert_eq!(v.max_abs_diff(&u), 0.0);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn series_csv_layout() {
        let space = NoiseSpace::new(1.0, 1, 1).unwrap();
        let t = Truncation::new(1, 1);
        let p = SdeProblem::new(space, HElement::unit(1, 1), ChaosExpansion::constant(t, 1.0), 1).with_steps(4, 2);
        let s = propagate(&p).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,multiindex,coefficient");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines[1], "0.0,[],1.0");
        assert_eq!(lines[2], "0.0,\"[[1,1]]\",0.0");
    }

    #[test]
    fn binary_round_trip() {
        let space = NoiseSpace::new(1.0, 1, 2).unwrap();
        let m = 8;
        let w0: Vec<f64> = grid_points(m).iter().map(|x| x.sin()).collect();
        let t = Truncation::new(2, 2);
        let w = ChaosExpansion::from_coefficients(t, [(Multiindex::zero(), w0)]).unwrap();
        let p = ParabolicProblem::new(vec![0.5; m], vec![0.0; m], space, HElement::unit(2, 1), w, 2, 8).with_output_every(4);
        let u = propagate_parabolic(&p).unwrap();
        let mut buf = Vec::new();
        write_parabolic(&mut buf, &u, 8).unwrap();
        assert_eq!(&buf[..4], b"DFCH");
        assert_eq!(buf.len(), 8 + 5 * 8 + 3 * 8 + 6 * 3 * m * 8);
        let (h, v) = read_parabolic(buf.as_slice()).unwrap();
        assert_eq!(h, ParabolicHeader { points: m, steps: 8, degree: 2, vars: 2, rows: 3 });
        assert_eq!(v.max_abs_diff(&u).unwrap(), 0.0);
        assert!(read_parabolic(&b"XXXX"[..]).is_err());
    }
}
