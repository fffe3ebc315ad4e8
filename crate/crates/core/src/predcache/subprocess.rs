//! Line-oriented stdin/stdout protocol for external models.
//!
//! ```text
//! client: HELLO 1
//! server: READY 1
//! client: PREDICT <n> <h> <w> <c>      followed by n raw TTAIMG01 records
//! server: PROBS <n> <k>                followed by n*k little-endian f32
//! ```
//!
//! A server that cannot answer replies `ERROR <message>` instead. One request
//! is in flight at a time.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{Classifier, PredictionMatrix, ROW_SUM_TOLERANCE};
use crate::error::{Error, Result};
use crate::imageops::{read_raw_from, write_raw_to, ImageBuffer};

pub const PROTOCOL_VERSION: u32 = 1;

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Client side: a model served by a child process.
pub struct SubprocessClassifier {
    command: String,
    channel: Mutex<Channel>,
}

fn read_line<R: BufRead>(r: &mut R) -> Result<Option<String>> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim_end_matches(['\n', '\r']).to_string()))
}

impl SubprocessClassifier {
    /// Start `command` through `sh -c` and perform the version handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        let fail = |m: String| Error::adapter(None, format!("`{command}`: {m}"));
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(format!("cannot start: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        writeln!(stdin, "HELLO {PROTOCOL_VERSION}")
            .and_then(|_| stdin.flush())
            .map_err(|e| fail(format!("handshake write failed: {e}")))?;
        let reply = read_line(&mut stdout).map_err(|e| fail(format!("handshake read failed: {e}")))?;
        let expected = format!("READY {PROTOCOL_VERSION}");
        if reply.as_deref() != Some(expected.as_str()) {
            let _ = child.kill();
            let _ = child.wait();
            return Err(fail(format!("expected `{expected}`, got {reply:?}")));
        }
        Ok(Self {
            command: command.to_string(),
            channel: Mutex::new(Channel { child, stdin, stdout }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Classifier for SubprocessClassifier {
    fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
        let Some(first) = images.first() else {
            return Err(Error::adapter(None, "empty prediction request"));
        };
        let (h, w, c) = first.dims();
        if images.iter().any(|im| im.dims() != (h, w, c)) {
            return Err(Error::adapter(None, "images in one request must share their shape"));
        }
        let mut ch = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        let io_err = |e: Error| Error::adapter(None, format!("protocol i/o: {e}"));
        let mut request = format!("PREDICT {} {h} {w} {c}\n", images.len()).into_bytes();
        for im in images {
            write_raw_to(im, &mut request)?;
        }
        ch.stdin
            .write_all(&request)
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| io_err(e.into()))?;
        let header = read_line(&mut ch.stdout)
            .map_err(io_err)?
            .ok_or_else(|| Error::adapter(None, "model process closed its output"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (n, k) = match parts.as_slice() {
            ["PROBS", n, k] => match (n.parse::<usize>(), k.parse::<usize>()) {
                (Ok(n), Ok(k)) => (n, k),
                _ => return Err(Error::adapter(None, format!("malformed reply `{header}`"))),
            },
            _ => return Err(Error::adapter(None, format!("unexpected reply `{header}`"))),
        };
        if n != images.len() {
            return Err(Error::adapter(
                None,
                format!("{n} rows returned for {} images", images.len()),
            ));
        }
        let mut payload = vec![0u8; n * k * 4];
        ch.stdout.read_exact(&mut payload).map_err(|e| io_err(e.into()))?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let tol = ROW_SUM_TOLERANCE + k as f64 * f32::EPSILON as f64;
        PredictionMatrix::from_flat_with_tolerance(n, k, data, tol).map_err(|e| Error::adapter(None, e.to_string()))
    }
}

impl Drop for SubprocessClassifier {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

/// Server side: answer requests from `input` with `clf` until end of input.
pub fn serve<R: BufRead, W: Write, C: Classifier + ?Sized>(mut input: R, mut output: W, clf: &C) -> Result<()> {
    while let Some(line) = read_line(&mut input)? {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => continue,
            ["HELLO", v] if v.parse() == Ok(PROTOCOL_VERSION) => writeln!(output, "READY {PROTOCOL_VERSION}")?,
            ["HELLO", v] => writeln!(output, "ERROR unsupported protocol version {v}")?,
            ["PREDICT", n, _h, _w, _c] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Format(format!("bad image count in `{line}`")))?;
                let images = (0..n).map(|_| read_raw_from(&mut input)).collect::<Result<Vec<_>>>()?;
                match clf.predict_batch(&images) {
                    Ok(m) => {
                        writeln!(output, "PROBS {} {}", m.n_objects(), m.n_classes())?;
                        let mut buf = Vec::with_capacity(m.as_flat().len() * 4);
                        for &p in m.as_flat() {
                            buf.extend_from_slice(&(p as f32).to_le_bytes());
                        }
                        output.write_all(&buf)?;
                    }
                    Err(e) => writeln!(output, "ERROR {e}")?,
                }
            }
            _ => writeln!(output, "ERROR unknown request `{line}`")?,
        }
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;

    impl Classifier for Fixed {
        fn predict_batch(&self, images: &[ImageBuffer]) -> Result<PredictionMatrix<f64>> {
            let rows: Vec<Vec<f64>> = images
                .iter()
                .map(|im| {
                    let p = im.get(0, 0, 0) as f64 / 255.0;
                    vec![p, 1.0 - p]
                })
                .collect();
            PredictionMatrix::from_rows(&rows)
        }
    }

    #[test]
    fn server_answers_handshake_and_predict() {
        let img = ImageBuffer::filled(2, 2, 3, &[51, 0, 0]).unwrap();
        let mut req = b"HELLO 1\nPREDICT 2 2 2 3\n".to_vec();
        write_raw_to(&img, &mut req).unwrap();
        write_raw_to(&img, &mut req).unwrap();
        req.extend_from_slice(b"HELLO 7\nBOGUS\n");
        let mut out = Vec::new();
        serve(&req[..], &mut out, &Fixed).unwrap();
        let text_end = out.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&out[..text_end], b"READY 1");
        let rest = &out[text_end + 1..];
        let probs_end = rest.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&rest[..probs_end], b"PROBS 2 2");
        let payload = &rest[probs_end + 1..probs_end + 1 + 16];
        let first = f32::from_le_bytes(payload[..4].try_into().unwrap());
        assert_eq!(first, 0.2f32);
        let tail = String::from_utf8_lossy(&rest[probs_end + 17..]);
        assert!(tail.starts_with("ERROR unsupported protocol version 7\nERROR unknown request"));
    }

    #[test]
    fn spawn_fails_without_handshake() {
        let err = SubprocessClassifier::spawn("echo NOPE").err().unwrap();
        assert!(err.is_adapter());
    }
}
