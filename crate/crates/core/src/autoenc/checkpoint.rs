//! Versioned plain-text checkpoint format.
//!
//! ```text
//! latentmv-autoencoder 1
//! activations <hidden> <output>
//! code_layer <index>
//! layers <count>
//! layer <index> <inputs> <outputs>
//! <inputs lines of comma-separated weights>
//! <one line of comma-separated biases>
//! ...
//! ```
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is lossless.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use super::network::{Activation, AutoencoderParams, Layer};
use crate::{Error, Result};

const MAGIC: &str = "latentmv-autoencoder";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &AutoencoderParams, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(
        w,
        "activations {} {}",
        params.hidden_activation.name(),
        params.output_activation.name()
    )?;
    writeln!(w, "code_layer {}", params.code_layer)?;
    writeln!(w, "layers {}", params.layers.len())?;
    let join = |it: &mut dyn Iterator<Item = &f64>| it.map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    for (i, layer) in params.layers.iter().enumerate() {
        writeln!(w, "layer {i} {} {}", layer.weights.nrows(), layer.weights.ncols())?;
        for row in layer.weights.row_iter() {
            writeln!(w, "{}", join(&mut row.iter()))?;
        }
        writeln!(w, "{}", join(&mut layer.bias.iter()))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<AutoencoderParams> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut next = |what: &str| -> Result<(u64, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i as u64 + 1, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of checkpoint, expected {what}"),
            }),
        }
    };
    let bad = |line: u64, message: String| Error::Parse { line, message };

    let (ln, header) = next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(bad(ln, "not an autoencoder checkpoint".into()));
    }
    let version: u32 = parts.next().and_then(|v| v.parse().ok()).unwrap_or(0);
    if version != VERSION {
        return Err(bad(ln, format!("unsupported checkpoint version {version}")));
    }
    let (ln, acts) = next("activations")?;
    let acts: Vec<&str> = acts.split_whitespace().collect();
    let (hidden, output) = match acts.as_slice() {
        ["activations", h, o] => (
            Activation::parse(h).ok_or_else(|| bad(ln, format!("unknown activation {h}")))?,
            Activation::parse(o).ok_or_else(|| bad(ln, format!("unknown activation {o}")))?,
        ),
        _ => return Err(bad(ln, "malformed activations line".into())),
    };
    let mut keyed = |key: &str| -> Result<usize> {
        let (ln, l) = next(key)?;
        l.strip_prefix(key)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| bad(ln, format!("expected '{key} <n>'")))
    };
    let code_layer = keyed("code_layer")?;
    let n_layers = keyed("layers")?;

    let parse_row = |ln: u64, l: &str, len: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = if l.is_empty() {
            Vec::new()
        } else {
            l.split(',')
                .map(|s| s.parse::<f64>().map_err(|_| bad(ln, format!("invalid number '{s}'"))))
                .collect::<Result<_>>()?
        };
        if v.len() != len {
            return Err(bad(ln, format!("expected {len} values, found {}", v.len())));
        }
        Ok(v)
    };
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let (ln, l) = next("layer header")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        let (rows, cols) = match f.as_slice() {
            ["layer", idx, r, c] if idx.parse::<usize>().ok() == Some(i) => (
                r.parse::<usize>().map_err(|_| bad(ln, "bad row count".into()))?,
                c.parse::<usize>().map_err(|_| bad(ln, "bad column count".into()))?,
            ),
            _ => return Err(bad(ln, format!("expected header of layer {i}"))),
        };
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, l) = next("weight row")?;
            values.extend(parse_row(ln, &l, cols)?);
        }
        let (ln, l) = next("bias row")?;
        let bias = parse_row(ln, &l, cols)?;
        layers.push(Layer {
            weights: DMatrix::from_row_slice(rows, cols, &values),
            bias: DVector::from_vec(bias),
        });
    }
    if layers.is_empty() || code_layer >= layers.len() {
        return Err(Error::Parse {
            line: 0,
            message: "checkpoint has no layers or an invalid code layer".into(),
        });
    }
    if layers.windows(2).any(|w| w[0].weights.ncols() != w[1].weights.nrows()) {
        return Err(Error::Shape("checkpoint layer shapes do not chain".into()));
    }
    Ok(AutoencoderParams {
        layers,
        hidden_activation: hidden,
        output_activation: output,
        code_layer,
    })
}
