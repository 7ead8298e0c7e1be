//! Shell command execution with hard timeouts.
//!
//! Commands run through `sh -c` in their own process group so that a timeout
//! reliably reaps the whole tree — including grandchildren such as wrapped
//! measurement commands — with SIGKILL to the group.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::Result;

#[derive(Debug)]
pub struct ExecOutcome {
    /// Process exited on its own with status 0.
    pub exit_ok: bool,
    /// Killed because the deadline passed.
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
    pub wall_s: f64,
}

/// Runs `cmd` under `sh -c` in `dir`, killing the whole process group once
/// `timeout_s` elapses. Output is drained concurrently so a chatty child can
/// never deadlock on a full pipe.
pub fn run_shell(cmd: &str, dir: &Path, timeout_s: f64) -> Result<ExecOutcome> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;

    let start = Instant::now();
    let deadline = Duration::from_secs_f64(timeout_s.max(0.0));

    let mut out_pipe = child.stdout.take().expect("stdout was piped");
    let mut err_pipe = child.stderr.take().expect("stderr was piped");
    let out_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let pid = child.id() as i32;
    let (status, timed_out) = loop {
        if let Some(status) = child.try_wait()? {
            break (Some(status), false);
        }
        if start.elapsed() >= deadline {
            // The child is the leader of its own group (process_group(0)).
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
            let _ = child.wait();
            break (None, true);
        }
        std::thread::sleep(Duration::from_millis(2));
    };

    let stdout = String::from_utf8_lossy(&out_thread.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_thread.join().unwrap_or_default()).into_owned();

    Ok(ExecOutcome {
        exit_ok: status.map(|s| s.success()).unwrap_or(false),
        timed_out,
        stdout,
        stderr,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn here() -> std::path::PathBuf {
        std::env::temp_dir()
    }

    #[test]
    fn captures_output_and_exit_status() {
        let ok = run_shell("echo front; echo back >&2", &here(), 5.0).unwrap();
        assert!(ok.exit_ok && !ok.timed_out);
        assert_eq!(ok.stdout, "front\n");
        assert_eq!(ok.stderr, "back\n");

        let bad = run_shell("exit 3", &here(), 5.0).unwrap();
        assert!(!bad.exit_ok && !bad.timed_out);
    }

    #[test]
    fn kills_sleepers_at_the_deadline() {
        let t0 = Instant::now();
        let out = run_shell("sleep 30", &here(), 0.2).unwrap();
        assert!(out.timed_out);
        assert!(!out.exit_ok);
        assert!(t0.elapsed().as_secs_f64() < 1.2, "timeout was not enforced promptly");
    }

    #[test]
    fn kills_whole_process_groups() {
        // The inner sleep is a grandchild; group kill must take it down too,
        // otherwise the pipe stays open and this would hang well past 0.3 s.
        let t0 = Instant::now();
        let out = run_shell("(sleep 30; echo late) & wait", &here(), 0.3).unwrap();
        assert!(out.timed_out);
        assert!(!out.stdout.contains("late"));
        assert!(t0.elapsed().as_secs_f64() < 2.0);
    }
}
