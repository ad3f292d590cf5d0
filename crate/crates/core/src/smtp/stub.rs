//! In-process SMTP server that replays a fixed reply script and records
//! what the client sent.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::dot_unstuff_line;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Session {
    /// Command lines without their CRLF, DATA content excluded.
    pub commands: Vec<String>,
    /// Every byte the client sent.
    pub raw: Vec<u8>,
    /// DATA content as transmitted, terminator included.
    pub data_raw: Vec<u8>,
    /// DATA content with dot-stuffing removed and the terminator dropped.
    pub body: Vec<u8>,
    /// The client closed the connection or the script ran out.
    pub finished: bool,
}

pub struct StubServer {
    addr: SocketAddr,
    sessions: Arc<Mutex<Vec<Session>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds `127.0.0.1:0` and serves connections one at a time. Each
    /// session replays `script` from the start: the first entry is the
    /// greeting, then one entry per command (or per DATA section). Entries
    /// may hold several CRLF-separated lines. When the script runs out the
    /// connection is closed.
    pub fn start(script: Vec<String>) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let sessions = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let sessions = Arc::clone(&sessions);
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let slot = {
                        let mut s = sessions.lock().expect("stub lock");
                        s.push(Session::default());
                        s.len() - 1
                    };
                    if let Err(e) = serve(stream, &script, &sessions, slot) {
                        log::debug!("stub session ended: {e}");
                    }
                    sessions.lock().expect("stub lock")[slot].finished = true;
                }
            })
        };
        Ok(StubServer { addr, sessions, stop, handle: Some(handle) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn sessions(&self) -> Vec<Session> {
        self.sessions.lock().expect("stub lock").clone()
    }

    /// Waits up to ten seconds for `n` finished sessions and returns all
    /// sessions seen so far.
    pub fn wait_for_sessions(&self, n: usize) -> Vec<Session> {
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            let s = self.sessions();
            if s.iter().filter(|x| x.finished).count() >= n || Instant::now() > deadline {
                return s;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(
    stream: TcpStream,
    script: &[String],
    sessions: &Mutex<Vec<Session>>,
    slot: usize,
) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let record = |f: &mut dyn FnMut(&mut Session)| f(&mut sessions.lock().expect("stub lock")[slot]);
    let mut replies = script.iter();
    let mut reply = |w: &mut TcpStream| -> io::Result<Option<u16>> {
        match replies.next() {
            Some(r) => {
                w.write_all(format!("{r}\r\n").as_bytes())?;
                w.flush()?;
                Ok(r.get(..3).and_then(|c| c.parse().ok()))
            }
            None => Ok(None),
        }
    };
    if reply(&mut writer)?.is_none() {
        return Ok(());
    }
    let mut in_data = false;
    loop {
        let mut line = Vec::new();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        let text = String::from_utf8_lossy(&line).trim_end_matches(['\r', '\n']).to_owned();
        if in_data {
            let terminator = line == b".\r\n";
            record(&mut |s| {
                s.raw.extend_from_slice(&line);
                s.data_raw.extend_from_slice(&line);
                if !terminator {
                    s.body.extend_from_slice(dot_unstuff_line(&text).as_bytes());
                    s.body.extend_from_slice(b"\r\n");
                }
            });
            if terminator {
                in_data = false;
                if reply(&mut writer)?.is_none() {
                    return Ok(());
                }
            }
            continue;
        }
        record(&mut |s| {
            s.raw.extend_from_slice(&line);
            s.commands.push(text.clone());
        });
        match reply(&mut writer)? {
            None => return Ok(()),
            Some(354) if text.eq_ignore_ascii_case("DATA") => in_data = true,
            Some(221) => return Ok(()),
            Some(_) => {}
        }
    }
}
