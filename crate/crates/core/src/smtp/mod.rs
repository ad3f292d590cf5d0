//! Blocking SMTP submission of alert emails, plus a scripted stub server for
//! tests. Plain text only: no TLS, no AUTH.

pub mod stub;

use std::fmt;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use crate::alert::AlertEvent;
use crate::classify::EmotionLabel;

/// Dialogue step, used to say where a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Connect,
    Greeting,
    Hello,
    MailFrom,
    RcptTo,
    Data,
    Body,
    Quit,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Connect => "connect",
            Phase::Greeting => "greeting",
            Phase::Hello => "ehlo",
            Phase::MailFrom => "mail",
            Phase::RcptTo => "rcpt",
            Phase::Data => "data",
            Phase::Body => "body",
            Phase::Quit => "quit",
        })
    }
}

#[derive(Debug, Error)]
pub enum SmtpError {
    #[error("invalid smtp configuration: {0}")]
    InvalidConfig(String),
    #[error("connect to {target} failed: {source}")]
    ConnectFailed { target: String, source: io::Error },
    #[error("timed out during {phase}")]
    Timeout { phase: Phase },
    #[error("server rejected {phase}: {code} {text}")]
    ProtocolError { phase: Phase, code: u16, text: String },
    #[error("i/o error during {phase}: {source}")]
    Io { phase: Phase, source: io::Error },
}

impl SmtpError {
    pub fn phase(&self) -> Phase {
        match self {
            SmtpError::InvalidConfig(_) | SmtpError::ConnectFailed { .. } => Phase::Connect,
            SmtpError::Timeout { phase }
            | SmtpError::ProtocolError { phase, .. }
            | SmtpError::Io { phase, .. } => *phase,
        }
    }
}

pub type Result<T> = std::result::Result<T, SmtpError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtpConfig {
    pub host: String,
    pub port: u16,
    pub from: String,
    pub to: Vec<String>,
    pub hello_name: String,
    pub timeout: Duration,
    /// Appended to alert bodies after a blank line.
    pub signature: Option<String>,
}

impl SmtpConfig {
    pub const DEFAULT_PORT: u16 = 25;
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn new(host: impl Into<String>, from: impl Into<String>, to: Vec<String>) -> Self {
        SmtpConfig {
            host: host.into(),
            port: Self::DEFAULT_PORT,
            from: from.into(),
            to,
            hello_name: "localhost".into(),
            timeout: Self::DEFAULT_TIMEOUT,
            signature: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.host.is_empty() {
            return Err(SmtpError::InvalidConfig("host is empty".into()));
        }
        if self.to.is_empty() {
            return Err(SmtpError::InvalidConfig("no recipients".into()));
        }
        if self.timeout.is_zero() {
            return Err(SmtpError::InvalidConfig("timeout must be positive".into()));
        }
        let bad = |s: &str| s.is_empty() || s.contains(['\r', '\n', '<', '>']);
        if bad(&self.from) || self.to.iter().any(|r| bad(r)) || bad(&self.hello_name) {
            return Err(SmtpError::InvalidConfig("address or hello name is malformed".into()));
        }
        Ok(())
    }
}

/// One server reply; continuation lines are joined with `\n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub code: u16,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReceipt {
    /// The reply to the end-of-data marker was 250.
    pub accepted: bool,
    pub transcript: Vec<Reply>,
    pub message_id: String,
}

/// Headers and body lines of one outgoing message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub subject: String,
    pub date: String,
    pub message_id: String,
    pub body: Vec<String>,
}

impl Message {
    pub fn for_alert(event: &AlertEvent, config: &SmtpConfig) -> Self {
        let scores = EmotionLabel::ALL
            .iter()
            .map(|&l| format!("{}={:.2}%", l, 100.0 * event.scores.get(l)))
            .collect::<Vec<_>>()
            .join(" ");
        let mut body = vec![
            format!("label: {}", event.label),
            format!("frame: {}", event.frame_index),
            format!("count: {}", event.counter_value),
            format!("scores: {scores}"),
        ];
        if let Some(sig) = &config.signature {
            body.push(String::new());
            body.extend(sig.lines().map(str::to_owned));
        }
        Message {
            subject: format!("EMONET ALERT: {}", event.label),
            date: event.wall_time.to_rfc2822(),
            message_id: format!(
                "<emonet.{}.{}.{}@{}>",
                event.frame_index,
                event.label,
                event.wall_time.timestamp(),
                config.hello_name
            ),
            body,
        }
    }

    /// Header block and dot-stuffed body, CRLF-framed, ending in the
    /// `.` terminator line.
    pub fn data_section(&self, from: &str, to: &[String]) -> Vec<u8> {
        let mut out = String::new();
        for (name, value) in [
            ("From", from.to_owned()),
            ("To", to.join(", ")),
            ("Subject", self.subject.clone()),
            ("Date", self.date.clone()),
            ("Message-ID", self.message_id.clone()),
        ] {
            out.push_str(&format!("{name}: {value}\r\n"));
        }
        out.push_str("\r\n");
        for line in &self.body {
            out.push_str(&dot_stuff_line(line));
            out.push_str("\r\n");
        }
        out.push_str(".\r\n");
        out.into_bytes()
    }
}

pub fn dot_stuff_line(line: &str) -> String {
    if line.starts_with('.') {
        format!(".{line}")
    } else {
        line.to_owned()
    }
}

pub fn dot_unstuff_line(line: &str) -> &str {
    line.strip_prefix('.').unwrap_or(line)
}

fn classify_io(phase: Phase, e: io::Error) -> SmtpError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => SmtpError::Timeout { phase },
        _ => SmtpError::Io { phase, source: e },
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    transcript: Vec<Reply>,
}

impl Connection {
    fn open(config: &SmtpConfig) -> Result<Self> {
        let target = format!("{}:{}", config.host, config.port);
        let attempt = || -> io::Result<TcpStream> {
            let addrs: Vec<SocketAddr> = (config.host.as_str(), config.port).to_socket_addrs()?.collect();
            let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses resolved");
            for addr in addrs {
                match TcpStream::connect_timeout(&addr, config.timeout) {
                    Ok(s) => return Ok(s),
                    Err(e) => last = e,
                }
            }
            Err(last)
        };
        let stream = match attempt() {
            Ok(s) => s,
            Err(first) => {
                log::warn!("smtp connect to {target} failed ({first}); retrying once");
                attempt().map_err(|source| SmtpError::ConnectFailed { target, source })?
            }
        };
        let io = |e| SmtpError::Io { phase: Phase::Connect, source: e };
        stream.set_read_timeout(Some(config.timeout)).map_err(io)?;
        stream.set_write_timeout(Some(config.timeout)).map_err(io)?;
        stream.set_nodelay(true).map_err(io)?;
        let writer = stream.try_clone().map_err(io)?;
        Ok(Connection { reader: BufReader::new(stream), writer, transcript: Vec::new() })
    }

    fn read_reply(&mut self, phase: Phase) -> Result<Reply> {
        let mut lines = Vec::new();
        loop {
            let mut raw = String::new();
            let n = self.reader.read_line(&mut raw).map_err(|e| classify_io(phase, e))?;
            if n == 0 {
                return Err(SmtpError::Io {
                    phase,
                    source: io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed"),
                });
            }
            let line = raw.trim_end_matches(['\r', '\n']);
            let malformed = || SmtpError::ProtocolError { phase, code: 0, text: line.to_owned() };
            if line.len() < 3 || !line.as_bytes()[..3].iter().all(u8::is_ascii_digit) {
                return Err(malformed());
            }
            let code: u16 = line[..3].parse().map_err(|_| malformed())?;
            let sep = line.as_bytes().get(3).copied();
            lines.push((code, line.get(4..).unwrap_or("").to_owned()));
            match sep {
                Some(b'-') => continue,
                None | Some(b' ') => break,
                _ => return Err(malformed()),
            }
        }
        let code = lines.last().expect("at least one line").0;
        let text = lines.into_iter().map(|(_, t)| t).collect::<Vec<_>>().join("\n");
        let reply = Reply { code, text };
        self.transcript.push(reply.clone());
        Ok(reply)
    }

    fn send(&mut self, phase: Phase, bytes: &[u8]) -> Result<()> {
        self.writer.write_all(bytes).map_err(|e| classify_io(phase, e))?;
        self.writer.flush().map_err(|e| classify_io(phase, e))
    }

    /// Sends one command line and reads its reply, requiring `expect`'s
    /// first digit.
    fn command(&mut self, phase: Phase, line: &str, expect: u16) -> Result<Reply> {
        self.send(phase, format!("{line}\r\n").as_bytes())?;
        let reply = self.read_reply(phase)?;
        check(phase, &reply, expect)?;
        Ok(reply)
    }

    fn quit(&mut self) {
        if self.send(Phase::Quit, b"QUIT\r\n").is_ok() {
            let _ = self.read_reply(Phase::Quit);
        }
        let _ = self.writer.shutdown(std::net::Shutdown::Both);
    }
}

fn check(phase: Phase, reply: &Reply, expect: u16) -> Result<()> {
    if reply.code / 100 == expect / 100 {
        Ok(())
    } else {
        Err(SmtpError::ProtocolError { phase, code: reply.code, text: reply.text.clone() })
    }
}

fn dialogue(conn: &mut Connection, config: &SmtpConfig, message: &Message) -> Result<bool> {
    let greeting = conn.read_reply(Phase::Greeting)?;
    check(Phase::Greeting, &greeting, 220)?;
    conn.send(Phase::Hello, format!("EHLO {}\r\n", config.hello_name).as_bytes())?;
    let hello = conn.read_reply(Phase::Hello)?;
    if hello.code / 100 == 5 {
        conn.command(Phase::Hello, &format!("HELO {}", config.hello_name), 250)?;
    } else {
        check(Phase::Hello, &hello, 250)?;
    }
    conn.command(Phase::MailFrom, &format!("MAIL FROM:<{}>", config.from), 250)?;
    for rcpt in &config.to {
        conn.command(Phase::RcptTo, &format!("RCPT TO:<{rcpt}>"), 250)?;
    }
    conn.command(Phase::Data, "DATA", 354)?;
    conn.send(Phase::Body, &message.data_section(&config.from, &config.to))?;
    let done = conn.read_reply(Phase::Body)?;
    check(Phase::Body, &done, 250)?;
    Ok(done.code == 250)
}

/// Runs one full submission dialogue. On any failure after connecting, QUIT
/// is attempted and the socket is closed before the error is returned.
pub fn send_message(config: &SmtpConfig, message: &Message) -> Result<DeliveryReceipt> {
    config.validate()?;
    let mut conn = Connection::open(config)?;
    let outcome = dialogue(&mut conn, config, message);
    conn.quit();
    let accepted = outcome?;
    Ok(DeliveryReceipt {
        accepted,
        transcript: conn.transcript,
        message_id: message.message_id.clone(),
    })
}

pub fn send_alert(config: &SmtpConfig, event: &AlertEvent) -> Result<DeliveryReceipt> {
    send_message(config, &Message::for_alert(event, config))
}

#[cfg(test)]
mod tests {
    use super::stub::StubServer;
    use super::*;
    use crate::alert::AlertEvent;
    use crate::classify::EmotionScores;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    const HAPPY: [&str; 7] = [
        "220 stub ready",
        "250 hello",
        "250 sender ok",
        "250 recipient ok",
        "354 go ahead",
        "250 queued",
        "221 bye",
    ];

    fn event() -> AlertEvent {
        let mut p = [0.02; 7];
        p[4] = 0.88;
        AlertEvent {
            label: EmotionLabel::Sad,
            frame_index: 6,
            counter_value: 6,
            scores: EmotionScores::new(&p).unwrap(),
            wall_time: Utc.with_ymd_and_hms(2024, 5, 6, 7, 8, 9).unwrap(),
        }
    }

    fn config(server: &StubServer, to: &[&str]) -> SmtpConfig {
        let mut c = SmtpConfig::new("127.0.0.1", "monitor@example.org", to.iter().map(|s| s.to_string()).collect());
        c.port = server.addr().port();
        c.timeout = Duration::from_secs(5);
        c
    }

    fn script(lines: &[&str]) -> Vec<String> {
        lines.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn happy_path() {
        let server = StubServer::start(script(&HAPPY)).unwrap();
        let cfg = config(&server, &["doctor@example.org"]);
        let receipt = send_alert(&cfg, &event()).unwrap();
        assert!(receipt.accepted);
        assert_eq!(receipt.transcript.len(), 7);
        let codes: Vec<u16> = receipt.transcript.iter().map(|r| r.code).collect();
        assert_eq!(codes, vec![220, 250, 250, 250, 354, 250, 221]);
        let session = server.wait_for_sessions(1).remove(0);
        assert_eq!(session.commands[0], "EHLO localhost");
        assert_eq!(session.commands[1], "MAIL FROM:<monitor@example.org>");
        assert_eq!(session.commands.last().unwrap(), "QUIT");
        assert!(session.data_raw.ends_with(b"\r\n.\r\n"));
        let body = String::from_utf8(session.body.clone()).unwrap();
        assert!(body.contains("Subject: EMONET ALERT: sad\r\n"));
        assert!(body.contains("\r\nlabel: sad\r\nframe: 6\r\ncount: 6\r\nscores: angry=2.00%"));
        assert!(body.contains("sad=88.00%"));
        assert_eq!(receipt.message_id, "<emonet.6.sad.1714979289@localhost>");
    }

    #[test]
    fn every_client_line_ends_in_crlf() {
        let server = StubServer::start(script(&HAPPY)).unwrap();
        send_alert(&config(&server, &["a@x"]), &event()).unwrap();
        let raw = server.wait_for_sessions(1).remove(0).raw;
        assert!(raw.ends_with(b"\r\n"));
        for (i, &b) in raw.iter().enumerate() {
            if b == b'\n' {
                assert_eq!(raw[i - 1], b'\r');
            }
        }
    }

    #[test]
    fn two_recipients_in_order() {
        let mut lines = HAPPY.to_vec();
        lines.insert(4, "250 second ok");
        let server = StubServer::start(script(&lines)).unwrap();
        let receipt = send_alert(&config(&server, &["a@x", "b@x"]), &event()).unwrap();
        assert!(receipt.accepted);
        let rcpts: Vec<String> = server.wait_for_sessions(1)[0]
            .commands
            .iter()
            .filter(|c| c.starts_with("RCPT TO"))
            .cloned()
            .collect();
        assert_eq!(rcpts, vec!["RCPT TO:<a@x>", "RCPT TO:<b@x>"]);
    }

    #[test]
    fn rejection_at_rcpt() {
        let server = StubServer::start(script(&["220 hi", "250 hi", "250 ok", "550 no such user", "221 bye"])).unwrap();
        let err = send_alert(&config(&server, &["nobody@x"]), &event()).unwrap_err();
        match &err {
            SmtpError::ProtocolError { phase, code, .. } => {
                assert_eq!(*phase, Phase::RcptTo);
                assert_eq!(*code, 550);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("rcpt"));
        let session = server.wait_for_sessions(1).remove(0);
        assert_eq!(session.commands.last().unwrap(), "QUIT");
        assert!(!session.commands.iter().any(|c| c == "DATA"));
    }

    #[test]
    fn multiline_ehlo_and_helo_fallback() {
        let server = StubServer::start(script(&[
            "220-first\r\n220 second",
            "502 ehlo not supported",
            "250 helo ok",
            "250 ok",
            "250 ok",
            "354 go",
            "250 done",
            "221 bye",
        ]))
        .unwrap();
        let receipt = send_alert(&config(&server, &["a@x"]), &event()).unwrap();
        assert!(receipt.accepted);
        assert_eq!(receipt.transcript[0].text, "first\nsecond");
        let cmds = &server.wait_for_sessions(1)[0].commands;
        assert_eq!(cmds[0], "EHLO localhost");
        assert_eq!(cmds[1], "HELO localhost");

        let server = StubServer::start(script(&[
            "220 hi",
            "250-stub\r\n250-SIZE 1000\r\n250 8BITMIME",
            "250 ok",
            "250 ok",
            "354 go",
            "250 done",
            "221 bye",
        ]))
        .unwrap();
        let receipt = send_alert(&config(&server, &["a@x"]), &event()).unwrap();
        assert_eq!(receipt.transcript[1].text, "stub\nSIZE 1000\n8BITMIME");
    }

    #[test]
    fn dot_stuffing_round_trip() {
        let server = StubServer::start(script(&HAPPY)).unwrap();
        let mut cfg = config(&server, &["a@x"]);
        cfg.signature = Some(".\n..double\nplain".into());
        send_alert(&cfg, &event()).unwrap();
        let s = server.wait_for_sessions(1).remove(0);
        let raw = String::from_utf8(s.data_raw).unwrap();
        assert!(raw.contains("\r\n..\r\n...double\r\nplain\r\n.\r\n"));
        let body = String::from_utf8(s.body).unwrap();
        assert!(body.ends_with("\r\n.\r\n..double\r\nplain\r\n"));
    }

    #[test]
    fn connection_refused() {
        let port = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let mut cfg = SmtpConfig::new("127.0.0.1", "a@x", vec!["b@x".into()]);
        cfg.port = port;
        cfg.timeout = Duration::from_secs(1);
        assert!(matches!(send_alert(&cfg, &event()), Err(SmtpError::ConnectFailed { .. })));
    }

    #[test]
    fn silent_server_times_out() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let mut cfg = SmtpConfig::new("127.0.0.1", "a@x", vec!["b@x".into()]);
        cfg.port = listener.local_addr().unwrap().port();
        cfg.timeout = Duration::from_millis(200);
        let err = send_alert(&cfg, &event()).unwrap_err();
        assert!(matches!(err, SmtpError::Timeout { phase: Phase::Greeting }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = SmtpConfig::new("h", "a@x", vec![]);
        assert!(cfg.validate().is_err());
        cfg.to.push("b@x".into());
        assert!(cfg.validate().is_ok());
        cfg.from = "a@x>\r\nRSET".into();
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn stuffing_is_a_bijection(line in "[.a-z ]{0,12}") {
            let stuffed = dot_stuff_line(&line);
            prop_assert_eq!(dot_unstuff_line(&stuffed), line.as_str());
            prop_assert!(dot_stuff_line(&line) != ".");
        }
    }
}
