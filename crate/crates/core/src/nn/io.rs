//! Flat key-value text format for network parameters.
//!
//! Layout: a header line `dims: N0 N1 ... Nk`, an `activation:` line, then
//! one line per parameter tensor (`A0:`, `b0:`, `A1:`, ...) in row-major
//! order with 17 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::{MlpNetwork, OutputActivation};

/// Formats an `f64` with 17 significant digits (exact round trip).
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn activation_str(act: OutputActivation) -> String {
    match act {
        OutputActivation::Identity => "identity".into(),
        OutputActivation::Softplus => "softplus".into(),
        OutputActivation::Clip(xi) => format!("clip {}", fmt_f64(xi)),
        OutputActivation::ClipSymmetric(b) => format!("clip_symmetric {}", fmt_f64(b)),
        OutputActivation::SoftplusClip(xi) => format!("softplus_clip {}", fmt_f64(xi)),
    }
}

fn parse_activation(s: &str, path: &str) -> Result<OutputActivation> {
    let mut it = s.split_whitespace();
    let kind = it.next().unwrap_or("");
    let level = |it: &mut dyn Iterator<Item = &str>| -> Result<f64> {
        it.next()
            .ok_or_else(|| Error::ModelFormat {
                path: path.into(),
                msg: "missing activation level".into(),
            })?
            .parse()
            .map_err(|_| Error::ModelFormat {
                path: path.into(),
                msg: "bad activation level".into(),
            })
    };
    match kind {
        "identity" => Ok(OutputActivation::Identity),
        "softplus" => Ok(OutputActivation::Softplus),
        "clip" => Ok(OutputActivation::Clip(level(&mut it)?)),
        "clip_symmetric" => Ok(OutputActivation::ClipSymmetric(level(&mut it)?)),
        "softplus_clip" => Ok(OutputActivation::SoftplusClip(level(&mut it)?)),
        other => Err(Error::ModelFormat {
            path: path.into(),
            msg: format!("unknown activation `{other}`"),
        }),
    }
}

pub fn write_network<W: Write>(w: &mut W, net: &MlpNetwork) -> Result<()> {
    let dims: Vec<String> = net.layer_dims.iter().map(|d| d.to_string()).collect();
    writeln!(w, "dims: {}", dims.join(" "))?;
    writeln!(w, "activation: {}", activation_str(net.output_activation))?;
    for l in 0..net.weights.len() {
        let vals: Vec<String> = net.weights[l].iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "A{l}: {}", vals.join(" "))?;
        let vals: Vec<String> = net.biases[l].iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "b{l}: {}", vals.join(" "))?;
    }
    Ok(())
}

/// Reads a network from `lines`, consuming exactly the lines it needs.
/// `path` is used for error messages only.
pub fn read_network<I>(lines: &mut I, path: &str) -> Result<MlpNetwork>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let bad = |msg: String| Error::ModelFormat {
        path: path.into(),
        msg,
    };
    let mut next_line = |what: &str| -> Result<String> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::Io(e)),
            None => Err(Error::ModelFormat {
                path: path.into(),
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };

    let dims_line = next_line("dims")?;
    let dims_body = dims_line
        .strip_prefix("dims:")
        .ok_or_else(|| bad(format!("expected `dims:` header, got `{dims_line}`")))?;
    let layer_dims: Vec<usize> = dims_body
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("bad dims header".into()))?;

    let act_line = next_line("activation")?;
    let act_body = act_line
        .strip_prefix("activation:")
        .ok_or_else(|| bad(format!("expected `activation:`, got `{act_line}`")))?;
    let activation = parse_activation(act_body.trim(), path)?;

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..layer_dims.len().saturating_sub(1) {
        let (rows, cols) = (layer_dims[l + 1], layer_dims[l]);
        let w_line = next_line("weight tensor")?;
        let w_body = w_line
            .strip_prefix(&format!("A{l}:"))
            .ok_or_else(|| bad(format!("expected `A{l}:`")))?;
        let vals = parse_values(w_body, rows * cols, path)?;
        weights.push(
            Array2::from_shape_vec((rows, cols), vals)
                .map_err(|e| bad(format!("weight shape: {e}")))?,
        );
        let b_line = next_line("bias tensor")?;
        let b_body = b_line
            .strip_prefix(&format!("b{l}:"))
            .ok_or_else(|| bad(format!("expected `b{l}:`")))?;
        biases.push(Array1::from_vec(parse_values(b_body, rows, path)?));
    }
    MlpNetwork::from_parts(layer_dims, weights, biases, activation)
}

fn parse_values(body: &str, expected: usize, path: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = body
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::ModelFormat {
            path: path.into(),
            msg: "bad parameter value".into(),
        })?;
    if vals.len() != expected {
        return Err(Error::ModelFormat {
            path: path.into(),
            msg: format!("expected {expected} values, got {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn save_network(path: &Path, net: &MlpNetwork) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(&mut w, net)
}

pub fn load_network(path: &Path) -> Result<MlpNetwork> {
    let reader = BufReader::new(File::open(path)?);
    read_network(&mut reader.lines(), &path.display().to_string())
}
