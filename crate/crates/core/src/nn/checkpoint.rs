//! Text checkpoint format for networks and optimizer state.
//!
//! Layout (version `v1`):
//!
//! ```text
//! densenet v1
//! sizes <in> <h1> ... <out>
//! activations <relu|sigmoid|linear> ...
//! layer <i>
//! w <row-major weights, 17 significant digits>
//! b <biases>
//! ...
//! end
//! ```
//!
//! Adam state uses the same scalar encoding:
//!
//! ```text
//! adam v1
//! lr <lr> steps <t>
//! layer <i>
//! mw <...> / mb <...> / vw <...> / vb <...>
//! end
//! ```

use super::{Activation, Adam, DenseNet, Gradients, Layer, NnError};
use ndarray::{Array1, Array2};
use std::io::{BufRead, Write};

fn fmt_floats(out: &mut String, values: impl Iterator<Item = f64>) {
    for v in values {
        out.push(' ');
        out.push_str(&format!("{v:.16e}"));
    }
}

fn parse_floats(rest: &str, expected: usize) -> Result<Vec<f64>, NnError> {
    let vals: Result<Vec<f64>, _> = rest.split_whitespace().map(str::parse).collect();
    let vals = vals.map_err(|e| NnError::Checkpoint(format!("bad float: {e}")))?;
    if vals.len() != expected {
        return Err(NnError::Checkpoint(format!(
            "expected {expected} values, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Sigmoid => "sigmoid",
        Activation::Linear => "linear",
    }
}

fn activation_from(name: &str) -> Result<Activation, NnError> {
    match name {
        "relu" => Ok(Activation::Relu),
        "sigmoid" => Ok(Activation::Sigmoid),
        "linear" => Ok(Activation::Linear),
        other => Err(NnError::Checkpoint(format!("unknown activation {other:?}"))),
    }
}

pub fn write_net<W: Write>(w: &mut W, net: &DenseNet) -> Result<(), NnError> {
    writeln!(w, "densenet v1")?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "sizes {}", sizes.join(" "))?;
    let acts: Vec<&str> = net.layers().iter().map(|l| activation_name(l.activation)).collect();
    writeln!(w, "activations {}", acts.join(" "))?;
    for (i, layer) in net.layers().iter().enumerate() {
        writeln!(w, "layer {i}")?;
        let mut line = String::from("w");
        fmt_floats(&mut line, layer.weights.iter().cloned());
        writeln!(w, "{line}")?;
        let mut line = String::from("b");
        fmt_floats(&mut line, layer.bias.iter().cloned());
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

struct LineReader<R> {
    inner: R,
}

impl<R: BufRead> LineReader<R> {
    fn next(&mut self) -> Result<String, NnError> {
        let mut line = String::new();
        let n = self.inner.read_line(&mut line)?;
        if n == 0 {
            return Err(NnError::Checkpoint("unexpected end of file".into()));
        }
        Ok(line.trim_end().to_string())
    }

    fn expect_prefix(&mut self, prefix: &str) -> Result<String, NnError> {
        let line = self.next()?;
        line.strip_prefix(prefix)
            .map(str::to_string)
            .ok_or_else(|| NnError::Checkpoint(format!("expected {prefix:?}, got {line:?}")))
    }
}

pub fn read_net<R: BufRead>(r: R) -> Result<DenseNet, NnError> {
    let mut lr = LineReader { inner: r };
    let header = lr.next()?;
    if header != "densenet v1" {
        return Err(NnError::Checkpoint(format!("bad header {header:?}")));
    }
    let sizes_line = lr.expect_prefix("sizes ")?;
    let sizes: Result<Vec<usize>, _> = sizes_line.split_whitespace().map(str::parse).collect();
    let sizes = sizes.map_err(|e| NnError::Checkpoint(format!("bad size: {e}")))?;
    if sizes.len() < 2 {
        return Err(NnError::Checkpoint("need at least two layer sizes".into()));
    }
    let acts_line = lr.expect_prefix("activations ")?;
    let acts: Result<Vec<Activation>, _> =
        acts_line.split_whitespace().map(activation_from).collect();
    let acts = acts?;
    if acts.len() != sizes.len() - 1 {
        return Err(NnError::Checkpoint("activation count mismatch".into()));
    }
    let mut layers = Vec::with_capacity(acts.len());
    for (i, &activation) in acts.iter().enumerate() {
        let tag = lr.expect_prefix("layer ")?;
        if tag.trim() != i.to_string() {
            return Err(NnError::Checkpoint(format!("expected layer {i}, got {tag}")));
        }
        let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
        let w_vals = parse_floats(&lr.expect_prefix("w")?, fan_in * fan_out)?;
        let weights = Array2::from_shape_vec((fan_out, fan_in), w_vals)
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let b_vals = parse_floats(&lr.expect_prefix("b")?, fan_out)?;
        layers.push(Layer {
            weights,
            bias: Array1::from_vec(b_vals),
            activation,
        });
    }
    let end = lr.next()?;
    if end != "end" {
        return Err(NnError::Checkpoint(format!("expected end, got {end:?}")));
    }
    Ok(DenseNet::from_layers(layers))
}

pub fn write_adam<W: Write>(w: &mut W, adam: &Adam, net: &DenseNet) -> Result<(), NnError> {
    writeln!(w, "adam v1")?;
    writeln!(w, "lr {:.16e} steps {}", adam.lr, adam.step_count)?;
    let (m, v) = adam.moments();
    for i in 0..net.layers().len() {
        writeln!(w, "layer {i}")?;
        for (tag, arr2, arr1) in [("m", &m.weights[i], &m.bias[i]), ("v", &v.weights[i], &v.bias[i])]
        {
            let mut line = format!("{tag}w");
            fmt_floats(&mut line, arr2.iter().cloned());
            writeln!(w, "{line}")?;
            let mut line = format!("{tag}b");
            fmt_floats(&mut line, arr1.iter().cloned());
            writeln!(w, "{line}")?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn read_adam<R: BufRead>(r: R, net: &DenseNet) -> Result<Adam, NnError> {
    let mut lr = LineReader { inner: r };
    let header = lr.next()?;
    if header != "adam v1" {
        return Err(NnError::Checkpoint(format!("bad header {header:?}")));
    }
    let meta = lr.expect_prefix("lr ")?;
    let mut parts = meta.split_whitespace();
    let rate: f64 = parts
        .next()
        .ok_or_else(|| NnError::Checkpoint("missing lr".into()))?
        .parse()
        .map_err(|e| NnError::Checkpoint(format!("bad lr: {e}")))?;
    if parts.next() != Some("steps") {
        return Err(NnError::Checkpoint("missing steps".into()));
    }
    let steps: u64 = parts
        .next()
        .ok_or_else(|| NnError::Checkpoint("missing step count".into()))?
        .parse()
        .map_err(|e| NnError::Checkpoint(format!("bad step count: {e}")))?;
    let mut m = Gradients::zeros_like(net);
    let mut v = Gradients::zeros_like(net);
    for i in 0..net.layers().len() {
        lr.expect_prefix("layer ")?;
        let (fan_out, fan_in) = (net.layers()[i].weights.nrows(), net.layers()[i].weights.ncols());
        let mw = parse_floats(&lr.expect_prefix("mw")?, fan_in * fan_out)?;
        m.weights[i] = Array2::from_shape_vec((fan_out, fan_in), mw).unwrap();
        let mb = parse_floats(&lr.expect_prefix("mb")?, fan_out)?;
        m.bias[i] = Array1::from_vec(mb);
        let vw = parse_floats(&lr.expect_prefix("vw")?, fan_in * fan_out)?;
        v.weights[i] = Array2::from_shape_vec((fan_out, fan_in), vw).unwrap();
        let vb = parse_floats(&lr.expect_prefix("vb")?, fan_out)?;
        v.bias[i] = Array1::from_vec(vb);
    }
    let end = lr.next()?;
    if end != "end" {
        return Err(NnError::Checkpoint(format!("expected end, got {end:?}")));
    }
    Ok(Adam::restore(net, rate, steps, m, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, STREAM_INIT};
    use std::io::Cursor;

    #[test]
    fn net_round_trip_is_exact() {
        let mut rng = stream_rng(11, STREAM_INIT);
        let net = DenseNet::xavier(
            &[5, 7, 3],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let mut buf = Vec::new();
        write_net(&mut buf, &net).unwrap();
        let back = read_net(Cursor::new(&buf)).unwrap();
        for (a, b) in net.layers().iter().zip(back.layers()) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
            assert_eq!(a.activation, b.activation);
        }
    }

    #[test]
    fn adam_round_trip_is_exact() {
        let mut rng = stream_rng(12, STREAM_INIT);
        let mut net = DenseNet::xavier(&[2, 3], &[Activation::Linear], &mut rng);
        let mut adam = Adam::new(&net, 5e-4);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][[0, 0]] = 0.123;
        grads.bias[0][1] = -4.2;
        adam.step(&mut net, &grads).unwrap();
        adam.step(&mut net, &grads).unwrap();

        let mut buf = Vec::new();
        write_adam(&mut buf, &adam, &net).unwrap();
        let back = read_adam(Cursor::new(&buf), &net).unwrap();
        assert_eq!(back.step_count, adam.step_count);
        assert_eq!(back.lr, adam.lr);
        let (m1, v1) = adam.moments();
        let (m2, v2) = back.moments();
        assert_eq!(m1.weights[0], m2.weights[0]);
        assert_eq!(v1.bias[0], v2.bias[0]);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(read_net(Cursor::new(b"not a checkpoint\n".as_slice())).is_err());
    }
}
