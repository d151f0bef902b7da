use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use super::client::{LineClient, Transport};
use super::AdapterError;

/// Child-process transport: requests go to the child's stdin, responses are
/// read from its stdout on a background thread.
pub struct ChildTransport {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    reader: Option<JoinHandle<()>>,
}

impl ChildTransport {
    /// Launches `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, AdapterError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| AdapterError::Spawn {
                command: command.to_owned(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_owned(),
            child,
            stdin,
            lines: rx,
            reader: Some(reader),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn exit_status(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => status.to_string(),
            Ok(None) => "stdout closed".into(),
            Err(e) => e.to_string(),
        }
    }
}

impl Transport for ChildTransport {
    fn send_line(&mut self, line: &str) -> Result<(), AdapterError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| {
            AdapterError::Io(std::io::Error::new(std::io::ErrorKind::BrokenPipe, "sidecar stdin closed"))
        })?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()?;
        Ok(())
    }

    fn recv_line(&mut self, timeout: Duration, id: u64) -> Result<Option<String>, AdapterError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(Some(line)),
            Ok(Err(e)) => Err(AdapterError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                // Give the child a moment to be reaped so the status is useful.
                std::thread::sleep(Duration::from_millis(20));
                Err(AdapterError::SidecarExited {
                    id,
                    status: self.exit_status(),
                })
            }
        }
    }

    fn close(&mut self) -> Result<(), AdapterError> {
        drop(self.stdin.take());
        let status = self.child.wait()?;
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
        if status.success() {
            Ok(())
        } else {
            Err(AdapterError::SidecarExited {
                id: 0,
                status: status.to_string(),
            })
        }
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            drop(self.stdin.take());
            if matches!(self.child.try_wait(), Ok(None)) {
                let _ = self.child.kill();
            }
            let _ = self.child.wait();
        }
    }
}

/// Starts a sidecar and wraps it in a protocol client.
pub fn spawn_sidecar(command: &str) -> Result<LineClient<ChildTransport>, AdapterError> {
    Ok(LineClient::new(ChildTransport::spawn(command)?))
}
