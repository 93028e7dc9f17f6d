//! Authority from an out-of-process model over newline-delimited JSON.
//!
//! Request, one line per tick:
//! `{"tick":12,"safety":{"d_min":..,"iou":..,"curvature":..,"bifurcation_dist":..},
//!   "intent":[{"f":..,"df":..,"sigma":..},{..}],"goal_dist":..}`
//!
//! Reply, one line: `{"chunk":[[alpha_left,alpha_right],...]}` with every
//! value in `[0, 0.9]`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::policy::{policy_fixed, AuthorityPolicy, PolicyInput};
use super::{AuthorityChunk, ControlError};

/// Authority used whenever the adapter fails.
pub const FALLBACK_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalParams {
    /// `host:port`, or `unix:/path/to.sock`.
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    50
}

impl ExternalParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.endpoint.trim().is_empty() {
            return Err(ControlError::InvalidParams("adapter endpoint is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ControlError::InvalidParams("adapter timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyWire {
    pub d_min: f64,
    pub iou: f64,
    pub curvature: f64,
    pub bifurcation_dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentWire {
    pub f: f64,
    pub df: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub tick: u64,
    pub safety: SafetyWire,
    pub intent: [IntentWire; 2],
    pub goal_dist: f64,
}

impl From<&PolicyInput> for AdapterRequest {
    fn from(i: &PolicyInput) -> Self {
        let intent = |k: usize| IntentWire {
            f: i.intent[k].force,
            df: i.intent[k].d_force,
            sigma: i.intent[k].sigma,
        };
        Self {
            tick: i.tick,
            safety: SafetyWire {
                d_min: i.safety.min_wall_dist,
                iou: i.safety.occlusion_iou,
                curvature: i.safety.curvature,
                bifurcation_dist: i.safety.bifurcation_dist,
            },
            intent: [intent(0), intent(1)],
            goal_dist: i.goal_dist,
        }
    }
}

#[derive(Debug, Deserialize)]
struct AdapterReply {
    chunk: Vec<[f64; 2]>,
}

enum Conn {
    Tcp(BufReader<TcpStream>),
    #[cfg(unix)]
    Unix(BufReader<std::os::unix::net::UnixStream>),
}

impl Conn {
    fn open(endpoint: &str, timeout: Duration) -> Result<Self, ControlError> {
        #[cfg(unix)]
        if let Some(path) = endpoint.strip_prefix("unix:") {
            let s = std::os::unix::net::UnixStream::connect(path)?;
            s.set_read_timeout(Some(timeout))?;
            s.set_write_timeout(Some(timeout))?;
            return Ok(Conn::Unix(BufReader::new(s)));
        }
        let addr = endpoint
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| ControlError::InvalidParams(format!("cannot resolve {endpoint}")))?;
        let s = TcpStream::connect_timeout(&addr, timeout)?;
        s.set_nodelay(true)?;
        s.set_read_timeout(Some(timeout))?;
        s.set_write_timeout(Some(timeout))?;
        Ok(Conn::Tcp(BufReader::new(s)))
    }

    fn exchange(&mut self, line: &[u8], reply: &mut String) -> std::io::Result<usize> {
        match self {
            Conn::Tcp(r) => {
                r.get_mut().write_all(line)?;
                r.read_line(reply)
            }
            #[cfg(unix)]
            Conn::Unix(r) => {
                r.get_mut().write_all(line)?;
                r.read_line(reply)
            }
        }
    }
}

/// Policy that asks an external adapter for each chunk and falls back to the
/// fixed level on timeout or bad replies, reconnecting on the next tick.
pub struct ExternalPolicy {
    params: ExternalParams,
    chunk_size: usize,
    conn: Option<Conn>,
    warnings: Vec<String>,
}

impl ExternalPolicy {
    pub fn new(params: ExternalParams, chunk_size: usize) -> Self {
        Self {
            params,
            chunk_size,
            conn: None,
            warnings: Vec::new(),
        }
    }

    /// One request/reply round trip without fallback.
    pub fn request(&mut self, input: &PolicyInput) -> Result<AuthorityChunk, ControlError> {
        let timeout = Duration::from_millis(self.params.timeout_ms);
        let started = Instant::now();
        if self.conn.is_none() {
            self.conn = Some(Conn::open(&self.params.endpoint, timeout)?);
        }
        let mut line = serde_json::to_vec(&AdapterRequest::from(input))
            .map_err(|e| ControlError::InvalidParams(e.to_string()))?;
        line.push(b'\n');
        let mut reply = String::new();
        let conn = self.conn.as_mut().expect("connected above");
        match conn.exchange(&line, &mut reply) {
            Ok(0) => {
                return Err(ControlError::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "adapter closed the connection",
                )))
            }
            Ok(_) => {}
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                return Err(ControlError::AdapterTimeout(self.params.timeout_ms))
            }
            Err(e) => return Err(e.into()),
        }
        if started.elapsed() > timeout {
            return Err(ControlError::AdapterTimeout(self.params.timeout_ms));
        }
        let parsed: AdapterReply =
            serde_json::from_str(reply.trim_end()).map_err(|e| ControlError::MalformedReply(e.to_string()))?;
        AuthorityChunk::new(parsed.chunk, input.tick).map_err(|e| ControlError::MalformedReply(e.to_string()))
    }
}

impl AuthorityPolicy for ExternalPolicy {
    fn name(&self) -> &'static str {
        "external"
    }

    fn step(&mut self, input: &PolicyInput) -> AuthorityChunk {
        match self.request(input) {
            Ok(c) => c,
            Err(e) => {
                // a late reply would desynchronize the stream
                self.conn = None;
                let msg = format!("policy adapter fallback at tick {}: {e}", input.tick);
                log::warn!("{msg}");
                self.warnings.push(msg);
                policy_fixed(self.chunk_size, input.tick)
            }
        }
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::IntentSignal;
    use crate::phantom::SafetySnapshot;
    use std::net::TcpListener;

    fn input(tick: u64) -> PolicyInput {
        PolicyInput {
            tick,
            safety: SafetySnapshot::default(),
            intent: [IntentSignal::default(); 2],
            goal_dist: 3.0,
        }
    }

    /// Serves each connection by answering every request line with `reply`.
    fn adapter(reply: &'static str, delay: Duration) -> String {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap().to_string();
        std::thread::spawn(move || {
            for s in l.incoming() {
                let Ok(s) = s else { break };
                std::thread::spawn(move || {
                    let mut w = s.try_clone().unwrap();
                    let mut r = BufReader::new(s);
                    let mut line = String::new();
                    while r.read_line(&mut line).map(|n| n > 0).unwrap_or(false) {
                        let _: AdapterRequest = serde_json::from_str(line.trim()).unwrap();
                        std::thread::sleep(delay);
                        if w.write_all(reply.as_bytes()).is_err() {
                            break;
                        }
                        line.clear();
                    }
                });
            }
        });
        addr
    }

    fn params(endpoint: String, timeout_ms: u64) -> ExternalParams {
        ExternalParams { endpoint, timeout_ms }
    }

    #[test]
    fn echo_constant() {
        let ep = adapter("{\"chunk\":[[0.3,0.3],[0.3,0.3]]}\n", Duration::ZERO);
        let mut p = ExternalPolicy::new(params(ep, 2000), 2);
        for t in 0..3 {
            let c = p.step(&input(t));
            assert_eq!(c.values, vec![[0.3, 0.3]; 2]);
            assert_eq!(c.issued_at, t);
        }
        assert!(p.take_warnings().is_empty());
    }

    #[test]
    fn out_of_range_is_malformed() {
        let ep = adapter("{\"chunk\":[[1.2,0.3]]}\n", Duration::ZERO);
        let mut p = ExternalPolicy::new(params(ep, 2000), 1);
        assert!(matches!(p.request(&input(0)), Err(ControlError::MalformedReply(_))));
        let c = p.step(&input(1));
        assert_eq!(c.values, vec![[0.5, 0.5]]);
        assert_eq!(p.take_warnings().len(), 1);
    }

    #[test]
    fn silent_adapter_falls_back() {
        let ep = adapter("{\"chunk\":[[0.3,0.3]]}\n", Duration::from_millis(400));
        let mut p = ExternalPolicy::new(params(ep, 30), 3);
        let c = p.step(&input(5));
        assert_eq!(c.values, vec![[0.5, 0.5]; 3]);
        let w = p.take_warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("tick 5"));
    }

    #[test]
    fn unreachable_adapter_falls_back() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let ep = l.local_addr().unwrap().to_string();
        drop(l);
        let mut p = ExternalPolicy::new(params(ep, 50), 2);
        assert_eq!(p.step(&input(0)).values, vec![[0.5, 0.5]; 2]);
        assert_eq!(p.take_warnings().len(), 1);
    }
}
