//! Binary model files: a `model v1` text header, the spec line, a block
//! table, then raw little-endian `f64` values.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::{Block, Model, ModelSpec, ParamVector};

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<()> {
    writeln!(w, "model v1")?;
    writeln!(w, "{}", model.spec())?;
    let layout = model.params().layout();
    writeln!(w, "blocks {}", layout.len())?;
    for b in layout {
        writeln!(w, "{} {} {}", b.name, b.offset, b.len)?;
    }
    for v in model.params().values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::parse("unexpected end of model file"));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

pub fn read_model<R: BufRead>(mut r: R) -> Result<Model> {
    let magic = header_line(&mut r)?;
    if magic != "model v1" {
        return Err(if magic.starts_with("model ") {
            Error::Version(magic)
        } else {
            Error::parse(format!("not a model file: `{magic}`"))
        });
    }
    let spec = ModelSpec::parse(&header_line(&mut r)?)?;
    let count_line = header_line(&mut r)?;
    let count: usize = count_line
        .strip_prefix("blocks ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::parse(format!("bad block count line `{count_line}`")))?;
    let mut layout = Vec::with_capacity(count);
    for _ in 0..count {
        let line = header_line(&mut r)?;
        let fields: Vec<&str> = line.split(' ').collect();
        let [name, offset, len] = fields[..] else {
            return Err(Error::parse(format!("bad block line `{line}`")));
        };
        layout.push(Block {
            name: name.to_string(),
            offset: offset.parse().map_err(|_| Error::parse("bad block offset"))?,
            len: len.parse().map_err(|_| Error::parse("bad block length"))?,
        });
    }
    let total: usize = layout.iter().map(|b| b.len).sum();
    let mut bytes = vec![0u8; total * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::parse("model file truncated in parameter data"))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Model::new(spec, ParamVector::with_layout(layout, values)?)
}
