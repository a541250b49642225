//! JSON request/response transport for external adapters.
//!
//! Two transports are supported:
//!
//! * a long-lived subprocess that reads one JSON object per line on stdin and
//!   answers with one JSON object per line on stdout;
//! * an HTTP endpoint that accepts a JSON `POST` body and returns JSON.
//!
//! An endpoint string starting with `http://` or `https://` selects HTTP;
//! anything else is split on whitespace and spawned as a command.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

const STDERR_TAIL: usize = 4096;

pub enum Transport {
    Subprocess(Subprocess),
    Http(Http),
}

impl Transport {
    pub fn connect(endpoint: &str) -> Result<Self> {
        let endpoint = endpoint.trim();
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            Ok(Transport::Http(Http::new(endpoint)))
        } else {
            let mut parts = endpoint.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| Error::Adapter("empty adapter endpoint".into()))?;
            Ok(Transport::Subprocess(Subprocess::spawn(program, parts)?))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Transport::Subprocess(p) => format!("subprocess `{}`", p.command),
            Transport::Http(h) => format!("http {}", h.url),
        }
    }

    pub fn call(&self, request: &Value) -> Result<Value> {
        match self {
            Transport::Subprocess(p) => p.call(request),
            Transport::Http(h) => h.call(request),
        }
    }
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct Subprocess {
    command: String,
    io: Mutex<ChildIo>,
    stderr: Arc<Mutex<Vec<u8>>>,
}

impl Subprocess {
    pub fn spawn<'a>(program: &str, args: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let args: Vec<&str> = args.into_iter().collect();
        let command = std::iter::once(program)
            .chain(args.iter().copied())
            .collect::<Vec<_>>()
            .join(" ");
        let mut child = Command::new(program)
            .args(&args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Adapter(format!("cannot spawn `{command}`: {e}")))?;

        let stderr = Arc::new(Mutex::new(Vec::new()));
        if let Some(mut pipe) = child.stderr.take() {
            let sink = Arc::clone(&stderr);
            thread::spawn(move || {
                let mut buf = [0u8; 1024];
                while let Ok(n) = pipe.read(&mut buf) {
                    if n == 0 {
                        break;
                    }
                    let mut tail = sink.lock().unwrap_or_else(|e| e.into_inner());
                    tail.extend_from_slice(&buf[..n]);
                    if tail.len() > STDERR_TAIL {
                        let cut = tail.len() - STDERR_TAIL;
                        tail.drain(..cut);
                    }
                }
            });
        }
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        Ok(Subprocess {
            command,
            io: Mutex::new(ChildIo {
                child,
                stdin,
                stdout,
            }),
            stderr,
        })
    }

    fn fail(&self, what: String) -> Error {
        // Give the stderr reader a moment to collect the child's last words.
        thread::sleep(Duration::from_millis(20));
        let tail = self.stderr.lock().unwrap_or_else(|e| e.into_inner());
        let tail = String::from_utf8_lossy(&tail);
        let tail = tail.trim();
        if tail.is_empty() {
            Error::Adapter(format!("`{}`: {what}", self.command))
        } else {
            Error::Adapter(format!("`{}`: {what}; stderr: {tail}", self.command))
        }
    }

    pub fn call(&self, request: &Value) -> Result<Value> {
        let mut io = self.io.lock().unwrap_or_else(|e| e.into_inner());
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        if let Err(e) = io.stdin.write_all(line.as_bytes()).and_then(|_| io.stdin.flush()) {
            return Err(self.fail(format!("write failed: {e}")));
        }
        let mut reply = String::new();
        match io.stdout.read_line(&mut reply) {
            Ok(0) => Err(self.fail("adapter closed its output".into())),
            Ok(_) => serde_json::from_str(&reply)
                .map_err(|e| self.fail(format!("invalid JSON reply ({e}): {}", reply.trim()))),
            Err(e) => Err(self.fail(format!("read failed: {e}"))),
        }
    }
}

impl Drop for Subprocess {
    fn drop(&mut self) {
        let io = self.io.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = io.child.kill();
        let _ = io.child.wait();
    }
}

pub struct Http {
    url: String,
    agent: ureq::Agent,
}

impl Http {
    pub fn new(url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Http {
            url: url.to_string(),
            agent,
        }
    }

    pub fn call(&self, request: &Value) -> Result<Value> {
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| Error::Adapter(format!("POST {}: {e}", self.url)))?;
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::Adapter(format!("POST {}: invalid JSON reply: {e}", self.url)))
    }
}

/// Pulls `key` out of a reply as an array, with a diagnostic on mismatch.
pub(crate) fn reply_array<'a>(reply: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    if let Some(err) = reply.get("error") {
        return Err(Error::Adapter(format!("adapter reported error: {err}")));
    }
    reply
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Adapter(format!("reply lacks `{key}` array: {reply}")))
}
