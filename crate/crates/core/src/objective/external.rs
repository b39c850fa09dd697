//! Child-process objective speaking line-delimited JSON on stdin/stdout.
//!
//! The child prints `{"protocol": "bilevel-bo/1"}` once at startup. Each
//! request is one line `{"id": N, "params": {...}}`; each response is one line
//! `{"id": N, "status": "ok", "train_loss": x, "val_metric": y, "aux": {...}}`
//! or `{"id": N, "status": "error", "message": "..."}`, in request order.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::{Map, Value};

use super::{Evaluation, Objective, ObjectiveError};
use crate::space::{Configuration, ParamValue, SearchSpace};

pub const HANDSHAKE_PROTOCOL: &str = "bilevel-bo/1";

/// Compact JSON with a single space after `:` and `,`.
struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first { Ok(()) } else { writer.write_all(b", ") }
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first { Ok(()) } else { writer.write_all(b", ") }
    }
}

fn to_line(value: &Value) -> String {
    use serde::Serialize;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SpacedFormatter);
    value.serialize(&mut ser).expect("serializing a JSON value cannot fail");
    let mut line = String::from_utf8(buf).expect("serde_json emits UTF-8");
    line.push('\n');
    line
}

/// Renders a request line (including the trailing newline). Params follow
/// space order; names not in the space are appended in key order.
pub fn format_request(id: u64, space: &SearchSpace, config: &Configuration) -> String {
    let mut params = Map::new();
    let mut put = |name: &str, value: &ParamValue| {
        let v = match value {
            ParamValue::Int(i) => Value::from(*i),
            ParamValue::Real(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            ParamValue::Text(s) => Value::from(s.as_str()),
        };
        params.insert(name.to_owned(), v);
    };
    for p in space.params() {
        if let Some(v) = config.get(&p.name) {
            put(&p.name, v);
        }
    }
    for (name, v) in config.iter() {
        if space.param(name).is_none() {
            put(name, v);
        }
    }
    let mut request = Map::new();
    request.insert("id".into(), Value::from(id));
    request.insert("params".into(), Value::Object(params));
    to_line(&Value::Object(request))
}

fn parse_response(line: &str, expected_id: u64) -> Result<Evaluation, ObjectiveError> {
    let protocol = |msg: String| ObjectiveError::Protocol(msg);
    let value: Value = serde_json::from_str(line).map_err(|e| protocol(format!("malformed response line: {e}")))?;
    let obj = value.as_object().ok_or_else(|| protocol("response is not a JSON object".into()))?;
    let id = obj.get("id").and_then(Value::as_u64).ok_or_else(|| protocol("response lacks integer `id`".into()))?;
    if id != expected_id {
        return Err(protocol(format!("response id {id} does not match request id {expected_id}")));
    }
    match obj.get("status").and_then(Value::as_str) {
        Some("ok") => {
            let number = |key: &str| {
                obj.get(key)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| protocol(format!("ok response lacks numeric `{key}`")))
            };
            let mut eval = Evaluation::new(number("train_loss")?, number("val_metric")?);
            if let Some(aux) = obj.get("aux") {
                let aux = aux.as_object().ok_or_else(|| protocol("`aux` must be an object".into()))?;
                for (k, v) in aux {
                    let x = v.as_f64().ok_or_else(|| protocol(format!("aux entry `{k}` is not a number")))?;
                    eval.aux.insert(k.clone(), x);
                }
            }
            Ok(eval)
        }
        Some("error") => {
            let message = obj.get("message").and_then(Value::as_str).unwrap_or("unspecified error");
            Err(ObjectiveError::Reported(message.to_owned()))
        }
        Some(other) => Err(protocol(format!("unknown status `{other}`"))),
        None => Err(protocol("response lacks `status`".into())),
    }
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
}

impl Session {
    fn spawn(command: &[String], timeout: Duration) -> Result<Self, ObjectiveError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(ObjectiveError::Spawn)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        // Detached: it ends at EOF or once the receiver is gone. Joining could
        // block on a grandchild that inherited the pipe.
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut session = Self { child, stdin: Some(stdin), lines: rx };
        let hello = session.read_line(timeout)?;
        let handshake: Value = serde_json::from_str(&hello)
            .map_err(|_| ObjectiveError::Protocol(format!("expected handshake line, got `{hello}`")))?;
        if handshake.get("protocol").and_then(Value::as_str) != Some(HANDSHAKE_PROTOCOL) {
            return Err(ObjectiveError::Protocol(format!("unsupported handshake `{hello}`")));
        }
        Ok(session)
    }

    fn read_line(&mut self, timeout: Duration) -> Result<String, ObjectiveError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ObjectiveError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(ObjectiveError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.wait()?;
                if status.success() {
                    Err(ObjectiveError::Protocol("objective process closed its output".into()))
                } else {
                    Err(ObjectiveError::ChildExit(status.to_string()))
                }
            }
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        // Closing stdin first lets children and their helpers see EOF.
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One child per objective; requests are strictly serialized. After a
/// timeout, protocol violation or child exit the child is discarded and a
/// fresh one is started on the next call.
pub struct ExternalObjective {
    command: Vec<String>,
    space: SearchSpace,
    timeout: Duration,
    next_id: u64,
    session: Option<Session>,
}

impl ExternalObjective {
    pub fn new(command: Vec<String>, space: SearchSpace, timeout: Duration) -> Self {
        Self { command, space, timeout, next_id: 1, session: None }
    }

    fn round_trip(&mut self, config: &Configuration) -> Result<Evaluation, ObjectiveError> {
        if self.session.is_none() {
            self.session = Some(Session::spawn(&self.command, self.timeout)?);
        }
        let session = self.session.as_mut().expect("session started");
        let id = self.next_id;
        self.next_id += 1;
        let line = format_request(id, &self.space, config);
        let stdin = session.stdin.as_mut().expect("stdin open while the session lives");
        stdin.write_all(line.as_bytes())?;
        stdin.flush()?;
        let response = session.read_line(self.timeout)?;
        parse_response(&response, id)
    }
}

impl Objective for ExternalObjective {
    fn evaluate(&mut self, config: &Configuration) -> Result<Evaluation, ObjectiveError> {
        let result = self.round_trip(config);
        match &result {
            Ok(_) | Err(ObjectiveError::Reported(_)) => {}
            Err(_) => self.session = None,
        }
        result
    }
}
