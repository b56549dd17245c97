//! Representation files: a `repr v1` text header (k, env_id, seed, config
//! hash, encoding), the `φ` and `μ` model files, the noise source, and a
//! trailing CRC32 line over everything before it.

use std::fs;
use std::io::{BufRead, Cursor, Write};
use std::path::Path;

use crate::approx::{read_model, write_model};
use crate::binio::{keyed_line as line, read_f64s, seal, unseal, write_f64s};
use crate::encoding::SpaceEncoding;
use crate::error::{Error, Result};

use super::{DynamicsRepresentation, NoiseSource, ReprMetadata};

fn body(repr: &DynamicsRepresentation) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "repr v1")?;
    writeln!(buf, "k {}", repr.k)?;
    writeln!(buf, "env_id {}", repr.metadata.env_id)?;
    writeln!(buf, "seed {}", repr.metadata.seed)?;
    writeln!(buf, "config_hash {:016x}", repr.metadata.config_hash)?;
    writeln!(buf, "encoding {}", repr.encoding.describe())?;
    write_model(&mut buf, &repr.phi)?;
    write_model(&mut buf, &repr.mu)?;
    match &repr.noise {
        NoiseSource::Atoms { states, weights } => {
            let dim = states[0].len();
            writeln!(buf, "noise atoms {} {dim}", states.len())?;
            write_f64s(&mut buf, weights)?;
            for s in states {
                write_f64s(&mut buf, s)?;
            }
        }
        NoiseSource::UniformBox { low, high } => {
            writeln!(buf, "noise box {}", low.len())?;
            write_f64s(&mut buf, low)?;
            write_f64s(&mut buf, high)?;
        }
    }
    Ok(buf)
}

pub fn write_representation<W: Write>(mut w: W, repr: &DynamicsRepresentation) -> Result<()> {
    w.write_all(&seal(body(repr)?))?;
    Ok(())
}

pub fn save_representation(repr: &DynamicsRepresentation, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_representation(&mut buf, repr)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Verifies the trailing checksum, then parses.
pub fn read_representation(bytes: &[u8]) -> Result<DynamicsRepresentation> {
    let data = unseal(bytes)?;
    let mut r = Cursor::new(data);
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    let magic = magic.trim_end();
    if magic != "repr v1" {
        return Err(if magic.starts_with("repr ") {
            Error::Version(magic.to_string())
        } else {
            Error::parse(format!("not a representation file: `{magic}`"))
        });
    }
    let k: usize = line(&mut r, "k")?.parse().map_err(|_| Error::parse("bad k"))?;
    let env_id = line(&mut r, "env_id")?;
    let seed = line(&mut r, "seed")?.parse().map_err(|_| Error::parse("bad seed"))?;
    let config_hash =
        u64::from_str_radix(&line(&mut r, "config_hash")?, 16).map_err(|_| Error::parse("bad config hash"))?;
    let encoding = SpaceEncoding::parse(&line(&mut r, "encoding")?)?;
    let phi = read_model(&mut r)?;
    let mu = read_model(&mut r)?;
    let noise_line = line(&mut r, "noise")?;
    let fields: Vec<&str> = noise_line.split(' ').collect();
    let parse_n = |s: &str| s.parse::<usize>().map_err(|_| Error::parse("bad noise header"));
    let noise = match fields[..] {
        ["atoms", n, dim] => {
            let (n, dim) = (parse_n(n)?, parse_n(dim)?);
            let weights = read_f64s(&mut r, n)?;
            let flat = read_f64s(&mut r, n * dim)?;
            NoiseSource::atoms(flat.chunks(dim.max(1)).map(|c| c.to_vec()).collect(), weights)?
        }
        ["box", dim] => {
            let dim = parse_n(dim)?;
            let low = read_f64s(&mut r, dim)?;
            let high = read_f64s(&mut r, dim)?;
            NoiseSource::uniform_box(low, high)?
        }
        _ => return Err(Error::parse(format!("bad noise header `{noise_line}`"))),
    };
    if (r.position() as usize) != data.len() {
        return Err(Error::parse("trailing bytes in representation file"));
    }
    let repr = DynamicsRepresentation::new(
        phi,
        mu,
        encoding,
        noise,
        ReprMetadata {
            env_id,
            seed,
            config_hash,
        },
    )?;
    repr.expect_k(k)?;
    Ok(repr)
}

pub fn load_representation(path: &Path) -> Result<DynamicsRepresentation> {
    read_representation(&fs::read(path)?)
}
