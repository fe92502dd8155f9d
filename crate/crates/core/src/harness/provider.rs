//! Client and server ends of the line-delimited JSON gradient protocol.
//!
//! The provider speaks first with a `hello` naming its classes and input
//! shape. Each `grad` request carries a base64 image of little-endian `f32`
//! values in H×W×3 order and is answered by a `grad_result` or an `error`
//! with the same id.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::model::{loss_ce, GradFn, Logits, LossGrad};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Largest allowed |reported loss − cross-entropy of the reported logits|.
pub const LOSS_TOLERANCE: f64 = 1e-4;

const STDERR_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        classes: Vec<String>,
        input_shape: [usize; 3],
    },
    Grad {
        id: u64,
        image: String,
        label: usize,
    },
    GradResult {
        id: u64,
        loss: f64,
        logits: Vec<f64>,
        grad: String,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

impl Message {
    fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Grad { .. } => "grad",
            Message::GradResult { .. } => "grad_result",
            Message::Error { .. } => "error",
        }
    }
}

pub fn encode_f32<T: Scalar>(values: &[T]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32<T: Scalar>(text: &str) -> Result<Vec<T>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::provider(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::provider(format!(
            "payload of {} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

/// How to launch a provider and what to expect from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Checked against the hello when set.
    #[serde(default)]
    pub input_shape: Option<[usize; 3]>,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    30.0
}

impl ProviderSpec {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            input_shape: None,
            class_names: None,
            timeout_secs: default_timeout(),
        }
    }
}

struct Conn {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    stderr_thread: Option<JoinHandle<()>>,
    next_id: u64,
    closed: Option<String>,
}

/// A spawned provider process, usable as a [`GradFn`].
///
/// Requests are serialized over the one pipe.
pub struct Provider {
    conn: Mutex<Conn>,
    stderr: Arc<Mutex<String>>,
    classes: Vec<String>,
    dims: [usize; 3],
    timeout: Duration,
}

pub fn provider_connect(spec: &ProviderSpec) -> Result<Provider> {
    Provider::connect(spec)
}

impl Provider {
    pub fn connect(spec: &ProviderSpec) -> Result<Self> {
        let (program, args) = spec
            .command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("provider command is empty".into()))?;
        if !(spec.timeout_secs.is_finite() && spec.timeout_secs > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "provider timeout must be positive, got {}",
                spec.timeout_secs
            )));
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::provider(format!("cannot spawn {program:?}: {e}")))?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stderr = Arc::new(Mutex::new(String::new()));
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let sink = Arc::clone(&stderr);
        let stderr_thread = thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap_or_else(|p| p.into_inner());
                if s.len() < STDERR_LIMIT {
                    s.push_str(&String::from_utf8_lossy(&buf[..n]));
                }
            }
        });

        let stdin = child.stdin.take();
        let mut provider = Provider {
            conn: Mutex::new(Conn {
                child,
                stdin,
                lines,
                stderr_thread: Some(stderr_thread),
                next_id: 1,
                closed: None,
            }),
            stderr,
            classes: Vec::new(),
            dims: [0; 3],
            timeout: Duration::from_secs_f64(spec.timeout_secs),
        };
        let hello = {
            let conn = provider.conn.get_mut().unwrap_or_else(|p| p.into_inner());
            recv(conn, &provider.stderr, provider.timeout, "hello")?
        };
        let (classes, shape) = match hello {
            Message::Hello {
                classes,
                input_shape,
            } => (classes, input_shape),
            other => {
                return Err(provider.fail(format!(
                    "expected hello as the first message, got {}",
                    other.kind()
                )))
            }
        };
        if shape[2] != 3 || shape[0] == 0 || shape[1] == 0 || classes.is_empty() {
            return Err(provider.fail(format!(
                "hello declares unusable shape {shape:?} with {} classes",
                classes.len()
            )));
        }
        if let Some(want) = spec.input_shape {
            if want != shape {
                return Err(provider.fail(format!(
                    "input shape {shape:?} does not match expected {want:?}"
                )));
            }
        }
        if let Some(want) = &spec.class_names {
            if *want != classes {
                return Err(provider.fail(format!(
                    "classes {classes:?} do not match expected {want:?}"
                )));
            }
        }
        provider.classes = classes;
        provider.dims = shape;
        Ok(provider)
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    /// Everything the provider wrote to stderr so far (capped).
    pub fn stderr(&self) -> String {
        self.stderr
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    fn fail(&self, message: String) -> Error {
        Error::Provider {
            message,
            stderr: self.stderr(),
        }
    }

    fn request<T: Scalar>(
        &self,
        image: &ImageBuf<T>,
        label: usize,
    ) -> Result<(f64, Vec<f64>, Vec<T>)> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(why) = &conn.closed {
            return Err(self.fail(format!("connection closed: {why}")));
        }
        let id = conn.next_id;
        conn.next_id += 1;
        let line = serde_json::to_string(&Message::Grad {
            id,
            image: encode_f32(image.data()),
            label,
        })?;
        let result = send(&mut conn, &line)
            .map_err(|e| self.fail(format!("cannot write request {id}: {e}")))
            .and_then(|_| recv(&mut conn, &self.stderr, self.timeout, "grad_result"));
        let msg = match result {
            Ok(m) => m,
            Err(e) => {
                conn.closed = Some(e.to_string());
                let _ = conn.child.kill();
                return Err(e);
            }
        };
        match msg {
            Message::GradResult {
                id: got,
                loss,
                logits,
                grad,
            } => {
                if got != id {
                    return Err(self.fail(format!("response id {got} does not match request {id}")));
                }
                let grad: Vec<T> = decode_f32(&grad).map_err(|e| self.fail(e.to_string()))?;
                Ok((loss, logits, grad))
            }
            Message::Error { id: got, message } => {
                Err(self.fail(format!("request {} failed: {message}", got.unwrap_or(id))))
            }
            other => Err(self.fail(format!("expected grad_result, got {}", other.kind()))),
        }
    }
}

fn send(conn: &mut Conn, line: &str) -> std::io::Result<()> {
    let stdin = conn
        .stdin
        .as_mut()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "stdin closed"))?;
    stdin.write_all(line.as_bytes())?;
    stdin.write_all(b"\n")?;
    stdin.flush()
}

fn recv(
    conn: &mut Conn,
    stderr: &Mutex<String>,
    timeout: Duration,
    waiting_for: &str,
) -> Result<Message> {
    let captured = |conn: &mut Conn| {
        if let Some(h) = conn.stderr_thread.take() {
            // The pipe closes when the child exits; don't wait forever on a
            // grandchild that inherited it.
            let deadline = Instant::now() + Duration::from_millis(500);
            while !h.is_finished() && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(5));
            }
            if h.is_finished() {
                let _ = h.join();
            }
        }
        stderr.lock().unwrap_or_else(|p| p.into_inner()).clone()
    };
    match conn.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => serde_json::from_str(&line).map_err(|e| Error::Provider {
            message: format!("malformed message while waiting for {waiting_for}: {e}"),
            stderr: stderr.lock().unwrap_or_else(|p| p.into_inner()).clone(),
        }),
        Ok(Err(e)) => Err(Error::Provider {
            message: format!("cannot read from provider: {e}"),
            stderr: captured(conn),
        }),
        Err(RecvTimeoutError::Timeout) => Err(Error::Provider {
            message: format!(
                "timed out after {:.1}s waiting for {waiting_for}",
                timeout.as_secs_f64()
            ),
            stderr: stderr.lock().unwrap_or_else(|p| p.into_inner()).clone(),
        }),
        Err(RecvTimeoutError::Disconnected) => {
            let deadline = Instant::now() + Duration::from_millis(500);
            let status = loop {
                match conn.child.try_wait() {
                    Ok(Some(s)) => break Some(s),
                    Ok(None) if Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(5))
                    }
                    _ => break None,
                }
            };
            let how = status.map_or_else(
                || "closed its output".to_string(),
                |s| format!("exited ({s})"),
            );
            Err(Error::Provider {
                message: format!("provider {how} while waiting for {waiting_for}"),
                stderr: captured(conn),
            })
        }
    }
}

impl Drop for Provider {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        conn.stdin.take();
        let deadline = Instant::now() + Duration::from_millis(200);
        loop {
            match conn.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(2)),
                _ => break,
            }
        }
        let _ = conn.child.kill();
        let _ = conn.child.wait();
    }
}

impl<T: Scalar> GradFn<T> for Provider {
    fn input_dims(&self) -> [usize; 3] {
        self.dims
    }

    fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn loss_grad(&self, image: &ImageBuf<T>, label: usize) -> Result<LossGrad<T>> {
        self.check_input(image, label)?;
        let (loss, logits, grad) = self.request(image, label)?;
        let expected = image.data().len();
        if grad.len() != expected {
            return Err(self.fail(format!(
                "gradient has {} values, expected {expected}",
                grad.len()
            )));
        }
        if logits.len() != self.classes.len() {
            return Err(self.fail(format!(
                "logits have {} values, expected {}",
                logits.len(),
                self.classes.len()
            )));
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(self.fail("non-finite loss or gradient".into()));
        }
        let logits = Logits::new(logits).map_err(|e| self.fail(e.to_string()))?;
        let ce = loss_ce(&logits, label)?;
        if (loss - ce).abs() > LOSS_TOLERANCE {
            return Err(self.fail(format!(
                "inconsistent loss: reported {loss}, cross-entropy of logits is {ce}"
            )));
        }
        Ok(LossGrad {
            loss: T::of(loss),
            grad: Tensor::from_vec(&self.dims, grad)?,
            logits: Logits(logits.0.into_iter().map(T::of).collect()),
        })
    }
}

/// Answers one request with `gradfn`; anything but `grad` gets an error reply.
pub fn handle_request<G: GradFn<f64> + ?Sized>(gradfn: &G, msg: &Message) -> Message {
    let Message::Grad { id, image, label } = msg else {
        return Message::Error {
            id: None,
            message: format!("unexpected {} message", msg.kind()),
        };
    };
    let run = || -> Result<Message> {
        let [h, w, _] = gradfn.input_dims();
        let img = ImageBuf::from_vec(h, w, decode_f32::<f64>(image)?)?;
        let lg = gradfn.loss_grad(&img, *label)?;
        Ok(Message::GradResult {
            id: *id,
            loss: lg.loss,
            logits: lg.logits.0,
            grad: encode_f32(lg.grad.data()),
        })
    };
    run().unwrap_or_else(|e| Message::Error {
        id: Some(*id),
        message: e.to_string(),
    })
}

/// Runs the provider side of the protocol until `input` ends.
pub fn serve<G, R, W>(gradfn: &G, class_names: &[String], input: R, mut output: W) -> Result<()>
where
    G: GradFn<f64> + ?Sized,
    R: BufRead,
    W: Write,
{
    let io_err = |e| Error::io("<provider stdio>", e);
    let hello = Message::Hello {
        classes: class_names.to_vec(),
        input_shape: gradfn.input_dims(),
    };
    writeln!(output, "{}", serde_json::to_string(&hello)?).map_err(io_err)?;
    output.flush().map_err(io_err)?;
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Message>(&line) {
            Ok(msg) => handle_request(gradfn, &msg),
            Err(e) => Message::Error {
                id: None,
                message: format!("malformed request: {e}"),
            },
        };
        writeln!(output, "{}", serde_json::to_string(&reply)?).map_err(io_err)?;
        output.flush().map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearScorer;

    #[test]
    fn f32_codec_round_trip() {
        let v = vec![0.0f64, 1.0, -2.5, 0.1];
        let back: Vec<f64> = decode_f32(&encode_f32(&v)).unwrap();
        assert_eq!(back[..3], v[..3]);
        assert_eq!(back[3], 0.1f32 as f64);
        // Little-endian 1.0f32 is 00 00 80 3f.
        assert_eq!(encode_f32(&[1.0f64]), STANDARD.encode([0, 0, 0x80, 0x3f]));
        assert!(decode_f32::<f64>("AAA=").is_err());
    }

    #[test]
    fn message_wire_format() {
        let m = Message::Hello {
            classes: vec!["a".into()],
            input_shape: [2, 2, 3],
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"type":"hello","classes":["a"],"input_shape":[2,2,3]}"#
        );
        let r: Message = serde_json::from_str(
            r#"{"type":"grad_result","id":3,"loss":0.5,"logits":[1.0],"grad":""}"#,
        )
        .unwrap();
        assert!(matches!(r, Message::GradResult { id: 3, .. }));
    }

    #[test]
    fn serve_answers_requests() {
        let model = LinearScorer::<f64>::random([2, 2, 3], 3, 1).unwrap();
        let img = crate::codec::test_image::noise_image(2, 2, 5);
        let req = serde_json::to_string(&Message::Grad {
            id: 7,
            image: encode_f32(img.data()),
            label: 2,
        })
        .unwrap();
        let input = format!("{req}\nnot json\n");
        let mut out = Vec::new();
        let names = ["a", "b", "c"].map(String::from);
        serve(&model, &names, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<Message> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert!(matches!(lines[0], Message::Hello { .. }));
        match &lines[1] {
            Message::GradResult {
                id, loss, logits, ..
            } => {
                assert_eq!(*id, 7);
                let ce = loss_ce(&Logits(logits.clone()), 2).unwrap();
                assert!((loss - ce).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(lines[2], Message::Error { id: None, .. }));
    }

    #[test]
    fn empty_command_rejected() {
        assert!(provider_connect(&ProviderSpec::new(vec![])).is_err());
    }
}
