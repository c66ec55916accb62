//! A scripted chat-completions server on a local port, for tests and demos.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
    pub delay: Option<Duration>,
}

impl MockResponse {
    /// A successful completion with a usage block.
    pub fn completion(text: &str, prompt_tokens: u64, completion_tokens: u64) -> Self {
        let body = json!({
            "id": "mock-1",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
                "total_tokens": prompt_tokens + completion_tokens,
            },
        });
        Self::raw(200, body.to_string())
    }

    /// A successful completion with no usage block.
    pub fn without_usage(text: &str) -> Self {
        let body = json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
        });
        Self::raw(200, body.to_string())
    }

    pub fn error(status: u16, message: &str) -> Self {
        Self::raw(status, json!({"error": {"message": message}}).to_string())
    }

    pub fn raw(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
            delay: None,
        }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

/// Serves scripted responses in order; the last one repeats.
pub struct MockChatServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    in_flight_peak: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl MockChatServer {
    pub fn start(script: Vec<MockResponse>) -> std::io::Result<Self> {
        assert!(!script.is_empty(), "mock server needs at least one response");
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let in_flight_peak = Arc::new(AtomicUsize::new(0));
        let shared = Arc::new(Shared {
            script,
            next: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: in_flight_peak.clone(),
            requests: requests.clone(),
        });
        let stop_flag = stop.clone();
        let handle = thread::spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let shared = shared.clone();
                thread::spawn(move || {
                    if let Err(e) = shared.serve(stream) {
                        log::debug!("mock connection error: {e}");
                    }
                });
            }
        });
        Ok(Self {
            addr,
            stop,
            requests,
            in_flight_peak,
            handle: Some(handle),
        })
    }

    /// Base URL, without the `/v1/chat/completions` suffix.
    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }

    /// Largest number of requests the server was handling at once.
    pub fn peak_in_flight(&self) -> usize {
        self.in_flight_peak.load(Ordering::SeqCst)
    }
}

impl Drop for MockChatServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

struct Shared {
    script: Vec<MockResponse>,
    next: AtomicUsize,
    in_flight: AtomicUsize,
    peak: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
}

impl Shared {
    fn serve(&self, stream: TcpStream) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(());
        }
        let mut parts = request_line.split_whitespace();
        let method = parts.next().unwrap_or_default().to_string();
        let path = parts.next().unwrap_or_default().to_string();
        let mut content_length = 0;
        let mut authorization = None;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((name, value)) = line.split_once(':') {
                match name.trim().to_ascii_lowercase().as_str() {
                    "content-length" => content_length = value.trim().parse().unwrap_or(0),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
        }
        let mut body = vec![0; content_length];
        reader.read_exact(&mut body)?;

        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.requests.lock().unwrap().push(RecordedRequest {
            method,
            path,
            authorization,
            body: serde_json::from_slice(&body).unwrap_or(Value::Null),
        });
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        let response = &self.script[i.min(self.script.len() - 1)];
        if let Some(d) = response.delay {
            thread::sleep(d);
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);

        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            response.status,
            reason(response.status),
            response.body.len(),
            response.body
        )?;
        stream.flush()
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
