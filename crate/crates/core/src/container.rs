//! Binary tensor container: one JSON manifest line followed by row-major
//! little-endian rows. The frozen embedding table uses `f32` rows; model
//! checkpoints use the same layout with `f64` rows to preserve exact values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ContainerHeader {
    format: String,
    dim: usize,
    count: usize,
    dtype: String,
}

pub fn write_f32(path: &Path, rows: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = ContainerHeader {
        format: "emb-v1".to_string(),
        dim: rows.ncols(),
        count: rows.nrows(),
        dtype: "f32".to_string(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in rows.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_f64(path: &Path, rows: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = ContainerHeader {
        format: "emb-v1".to_string(),
        dim: rows.ncols(),
        count: rows.nrows(),
        dtype: "f64".to_string(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in rows.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a container of either dtype; values widen to `f64`.
pub fn read(path: &Path) -> Result<Matrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(parse_err(path, 1, "missing container header"));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
        if header_line.len() > 4096 {
            return Err(parse_err(path, 1, "container header too long"));
        }
    }
    let header: ContainerHeader = serde_json::from_slice(&header_line)
        .map_err(|e| parse_err(path, 1, &format!("bad container header: {e}")))?;
    if header.format != "emb-v1" {
        return Err(parse_err(
            path,
            1,
            &format!("unsupported container format {:?}", header.format),
        ));
    }
    let total = header.count * header.dim;
    let mut values = Vec::with_capacity(total);
    match header.dtype.as_str() {
        "f32" => {
            let mut buf = vec![0u8; total * 4];
            r.read_exact(&mut buf)
                .map_err(|_| parse_err(path, 2, "truncated f32 payload"))?;
            for chunk in buf.chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        "f64" => {
            let mut buf = vec![0u8; total * 8];
            r.read_exact(&mut buf)
                .map_err(|_| parse_err(path, 2, "truncated f64 payload"))?;
            for chunk in buf.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        other => {
            return Err(parse_err(path, 1, &format!("unsupported dtype {other:?}")));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(parse_err(path, 2, "trailing bytes after payload"));
    }
    Matrix::from_shape_vec((header.count, header.dim), values)
        .map_err(|e| parse_err(path, 2, &format!("shape error: {e}")))
}

fn parse_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let m = Matrix::from_shape_fn((3, 5), |(i, j)| (i as f64 * 7.3).sin() + j as f64);
        write_f64(&path, &m).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn f32_round_trip_rounds_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let m = Matrix::from_shape_fn((2, 3), |(i, j)| 0.1 + i as f64 + j as f64);
        write_f32(&path, &m).unwrap();
        let back = read(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn truncated_payload_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let m = Matrix::zeros((4, 4));
        write_f32(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read(&path), Err(Error::Parse { .. })));
    }
}
