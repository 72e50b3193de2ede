use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::evalsynth::DsmRaster;
use crate::geocam::UtmZone;
use crate::raster::Raster;
use crate::{Error, Result};

/// Writes a 1- or 3-channel raster as little-endian PFM (rows stored bottom
/// to top, as the format requires).
pub fn write_pfm(path: &Path, raster: &Raster) -> Result<()> {
    let tag = match raster.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Data(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    let (w, h, c) = (raster.width(), raster.height(), raster.channels());
    let mut buf = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    buf.reserve(w * h * c * 4);
    for row in (0..h).rev() {
        for v in &raster.data()[row * w * c..(row + 1) * w * c] {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn header_token(r: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)
            .map_err(|e| Error::io(format!("reading PFM header of {}", path.display()), e))?;
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(byte[0] as char);
    }
}

pub fn read_pfm(path: &Path) -> Result<Raster> {
    let f = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut r = BufReader::new(f);
    let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
    let channels = match header_token(&mut r, path)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        t => return Err(bad(&format!("unknown PFM tag {t:?}"))),
    };
    let w: usize = header_token(&mut r, path)?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = header_token(&mut r, path)?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = header_token(&mut r, path)?.parse().map_err(|_| bad("bad scale"))?;
    let mut raw = vec![0u8; w * h * channels * 4];
    r.read_exact(&mut raw)
        .map_err(|e| Error::io(format!("reading PFM data of {}", path.display()), e))?;
    let decode = |b: &[u8]| {
        let a = [b[0], b[1], b[2], b[3]];
        if scale < 0.0 {
            f32::from_le_bytes(a)
        } else {
            f32::from_be_bytes(a)
        }
    };
    let mut out = Raster::new(w, h, channels);
    let row_len = w * channels;
    for (k, chunk) in raw.chunks_exact(row_len * 4).enumerate() {
        let row = h - 1 - k;
        for (j, b) in chunk.chunks_exact(4).enumerate() {
            out.data_mut()[row * row_len + j] = decode(b) as f64;
        }
    }
    Ok(out)
}

/// Path of the georeferencing sidecar of a DSM file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

/// Writes `dsm` as PFM plus a `key value` sidecar with GSD, origin and zone.
pub fn write_dsm(path: &Path, dsm: &DsmRaster) -> Result<()> {
    write_pfm(path, &dsm.values)?;
    let text = format!(
        "gsd {}\norigin_easting {}\norigin_northing {}\nzone {}\nhemisphere {}\nnodata nan\n",
        dsm.gsd,
        dsm.origin[0],
        dsm.origin[1],
        dsm.zone.number,
        if dsm.zone.north { "N" } else { "S" }
    );
    let side = sidecar_path(path);
    fs::write(&side, text).map_err(|e| Error::io(format!("writing {}", side.display()), e))
}

pub fn read_dsm(path: &Path) -> Result<DsmRaster> {
    let values = read_pfm(path)?;
    if values.channels() != 1 {
        return Err(Error::Data(format!("{}: DSM must have one band", path.display())));
    }
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(format!("reading {}", side.display()), e))?;
    let get = |key: &str| -> Result<String> {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .map(|v| v.trim().to_owned())
            .ok_or_else(|| Error::Data(format!("{}: missing key {key}", side.display())))
    };
    let num = |s: String| -> Result<f64> { s.parse().map_err(|_| Error::Data(format!("{}: bad number {s:?}", side.display()))) };
    let gsd = num(get("gsd")?)?;
    let origin = [num(get("origin_easting")?)?, num(get("origin_northing")?)?];
    let number = num(get("zone")?)? as u8;
    let north = get("hemisphere")? != "S";
    if !(gsd > 0.0) {
        return Err(Error::Data(format!("{}: GSD must be positive", side.display())));
    }
    Ok(DsmRaster {
        values,
        gsd,
        origin,
        zone: UtmZone { number, north },
    })
}
