use std::io::{BufReader, BufWriter, Read};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{read_response, write_request, PROTOCOL_VERSION};
use super::Denoiser;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

fn default_timeout() -> f64 {
    60.0
}

fn default_version() -> u32 {
    PROTOCOL_VERSION
}

/// How to launch an external denoiser process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Seconds to wait for each response before the process is killed.
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_version")]
    pub protocol_version: u32,
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            timeout_secs: default_timeout(),
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

struct Session {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    requests: Sender<(usize, usize)>,
    responses: Receiver<Result<ImageGrid>>,
    stderr_log: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
    failed: Option<String>,
}

impl Session {
    fn stderr_text(&mut self) -> String {
        if let Some(h) = self.stderr_thread.take() {
            let _ = h.join();
        }
        self.stderr_log.lock().map(|s| s.clone()).unwrap_or_default()
    }

    fn shut_down(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    // Kills the process and converts `err` into an adapter error carrying its stderr.
    fn fail(&mut self, err: PnpError) -> PnpError {
        if let PnpError::Numeric(_) = err {
            self.failed = Some(err.to_string());
            self.shut_down();
            return err;
        }
        let exited = self.child.try_wait().ok().flatten();
        self.shut_down();
        let mut message = err.to_string();
        if let Some(status) = exited {
            message.push_str(&format!(" (process exited: {status})"));
        }
        self.failed = Some(message.clone());
        PnpError::Adapter {
            message,
            stderr: self.stderr_text(),
        }
    }
}

/// A denoiser running in a persistent subprocess, spoken to over stdin/stdout.
///
/// Calls are serialized through one process; build several adapters for
/// parallel use.
pub struct ExternalDenoiser {
    command: ExternalCommand,
    epsilon: f64,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalDenoiser")
            .field("command", &self.command)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

impl ExternalDenoiser {
    pub fn spawn(command: ExternalCommand, epsilon: f64) -> Result<Self> {
        if command.protocol_version != PROTOCOL_VERSION {
            return Err(PnpError::Config(format!(
                "unsupported protocol version {}",
                command.protocol_version
            )));
        }
        if !(command.timeout_secs > 0.0 && command.timeout_secs.is_finite()) {
            return Err(PnpError::Config("external timeout must be > 0".into()));
        }
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| PnpError::Adapter {
                message: format!("failed to launch {:?}: {e}", command.program),
                stderr: String::new(),
            })?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");

        let stderr_log = Arc::new(Mutex::new(String::new()));
        let log = Arc::clone(&stderr_log);
        let stderr_thread = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            if let Ok(mut s) = log.lock() {
                s.push_str(&String::from_utf8_lossy(&buf));
            }
        });

        let (req_tx, req_rx) = mpsc::channel::<(usize, usize)>();
        let (resp_tx, resp_rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            for shape in req_rx {
                let result = read_response(&mut reader, shape);
                let stop = result.is_err();
                if resp_tx.send(result).is_err() || stop {
                    break;
                }
            }
        });

        Ok(Self {
            command,
            epsilon,
            session: Mutex::new(Session {
                child,
                stdin,
                requests: req_tx,
                responses: resp_rx,
                stderr_log,
                stderr_thread: Some(stderr_thread),
                failed: None,
            }),
        })
    }

    pub fn command(&self) -> &ExternalCommand {
        &self.command
    }

    /// Sends `x` with an explicit noise level and waits for the reply.
    pub fn denoise_with_epsilon(&self, x: &ImageGrid, epsilon: f64) -> Result<ImageGrid> {
        let mut s = self.session.lock().map_err(|_| PnpError::Adapter {
            message: "adapter lock poisoned".into(),
            stderr: String::new(),
        })?;
        if let Some(msg) = &s.failed {
            return Err(PnpError::Adapter {
                message: format!("adapter unusable after earlier failure: {msg}"),
                stderr: String::new(),
            });
        }
        if s.requests.send(x.shape()).is_err() {
            let e = PnpError::Protocol("response reader stopped".into());
            return Err(s.fail(e));
        }
        let written = match s.stdin.as_mut() {
            Some(w) => write_request(w, x, epsilon),
            None => Err(PnpError::Protocol("stdin closed".into())),
        };
        if let Err(e) = written {
            return Err(s.fail(e));
        }
        let timeout = Duration::from_secs_f64(self.command.timeout_secs);
        match s.responses.recv_timeout(timeout) {
            Ok(Ok(y)) => Ok(y),
            Ok(Err(e)) => Err(s.fail(e)),
            Err(RecvTimeoutError::Timeout) => {
                let e = PnpError::Protocol(format!("no response within {}s", self.command.timeout_secs));
                Err(s.fail(e))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let e = PnpError::Protocol("response reader stopped".into());
                Err(s.fail(e))
            }
        }
    }
}

impl Denoiser for ExternalDenoiser {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.denoise_with_epsilon(x, self.epsilon)
    }

    fn name(&self) -> String {
        format!("external({})", self.command.program)
    }
}

impl Drop for ExternalDenoiser {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            s.shut_down();
        }
    }
}
