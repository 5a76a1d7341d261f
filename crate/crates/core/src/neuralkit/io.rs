//! Parameter file: a short text manifest followed by the raw weights.
//!
//! ```text
//! neuralkit-params v1
//! layers = 2
//! layer0 = 864 64 tanh
//! layer1 = 64 32 softplus_tail:16
//! payload = f64le 57376
//! <57376 little-endian f64: layer0 weight (row-major [out × in]), layer0 bias, layer1 ...>
//! ```

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, MlpParams};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &str = "neuralkit-params v1";

pub fn write_params<W: Write + ?Sized>(w: &mut W, p: &MlpParams) -> Result<()> {
    writeln!(w, "{PARAMS_MAGIC}")?;
    writeln!(w, "layers = {}", p.layers().len())?;
    for (i, l) in p.layers().iter().enumerate() {
        writeln!(w, "layer{i} = {} {} {}", l.input_dim(), l.output_dim(), l.activation.tag())?;
    }
    writeln!(w, "payload = f64le {}", p.param_count())?;
    let mut buf = Vec::with_capacity(8 * p.param_count());
    for l in p.layers() {
        for x in l.weight.iter().chain(l.bias.iter()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_header_line<R: BufRead + ?Sized>(r: &mut R) -> Result<String> {
    // bytes, so a binary or truncated file still reaches the manifest checks
    let mut line = Vec::new();
    let n = r.read_until(b'\n', &mut line)?;
    if n == 0 {
        return Err(Error::Manifest("unexpected end of file in manifest".into()));
    }
    Ok(String::from_utf8_lossy(&line).trim_end_matches(['\n', '\r']).to_string())
}

pub(crate) fn expect_entry<R: BufRead + ?Sized>(r: &mut R, key: &str) -> Result<String> {
    let line = read_header_line(r)?;
    match line.split_once('=') {
        Some((k, v)) if k.trim() == key => Ok(v.trim().to_string()),
        _ => Err(Error::Manifest(format!("expected `{key} = ...`, found `{line}`"))),
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Manifest(msg.into())
}

pub fn read_params<R: BufRead + ?Sized>(r: &mut R) -> Result<MlpParams> {
    let magic = read_header_line(r)?;
    if magic != PARAMS_MAGIC {
        return Err(bad(format!(
            "unsupported parameter manifest version `{magic}` (expected `{PARAMS_MAGIC}`)"
        )));
    }
    let n_layers: usize = expect_entry(r, "layers")?
        .parse()
        .map_err(|_| bad("layer count is not an integer"))?;
    if n_layers == 0 || n_layers > 64 {
        return Err(bad(format!("implausible layer count {n_layers}")));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let spec = expect_entry(r, &format!("layer{i}"))?;
        let parts: Vec<&str> = spec.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(format!("layer{i}: expected `in out activation`, found `{spec}`")));
        }
        let input: usize = parts[0].parse().map_err(|_| bad(format!("layer{i}: bad input size")))?;
        let output: usize = parts[1].parse().map_err(|_| bad(format!("layer{i}: bad output size")))?;
        let act = Activation::from_tag(parts[2]).ok_or_else(|| bad(format!("layer{i}: unknown activation `{}`", parts[2])))?;
        shapes.push((input, output, act));
    }
    let payload = expect_entry(r, "payload")?;
    let count: usize = payload
        .strip_prefix("f64le ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad(format!("payload must be `f64le <count>`, found `{payload}`")))?;
    let expected: usize = shapes.iter().map(|(i, o, _)| i * o + o).sum();
    if count != expected {
        return Err(bad(format!("payload declares {count} values, layer shapes need {expected}")));
    }

    let mut bytes = vec![0u8; 8 * count];
    r.read_exact(&mut bytes)
        .map_err(|_| bad("payload truncated"))?;
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut layers = Vec::with_capacity(n_layers);
    for (input, output, activation) in shapes {
        let weight = Array2::from_shape_fn((output, input), |_| values.next().expect("counted"));
        let bias = Array1::from_iter((0..output).map(|_| values.next().expect("counted")));
        layers.push(Dense {
            weight,
            bias,
            activation,
        });
    }
    MlpParams::new(layers).map_err(|e| bad(e.to_string()))
}
