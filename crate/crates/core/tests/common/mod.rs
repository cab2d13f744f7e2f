//! Minimal HTTP/1.1 server for exercising the service clients.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

/// What the handler wants sent back. `Drop` closes the socket without a reply.
pub enum Reply {
    Json(u16, String),
    Drop,
}

type Handler = dyn Fn(&Request, usize) -> Reply + Send + Sync;

pub struct Stub {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Request>>>,
    pub max_in_flight: Arc<AtomicUsize>,
}

impl Stub {
    pub fn calls(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }

    pub fn count(&self, path: &str) -> usize {
        self.calls().iter().filter(|r| r.path == path).count()
    }
}

/// Serve forever on an ephemeral port; `handler` gets each request and its
/// zero-based arrival index.
pub fn spawn(handler: impl Fn(&Request, usize) -> Reply + Send + Sync + 'static) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let in_flight = Arc::new(AtomicUsize::new(0));
    let max_in_flight = Arc::new(AtomicUsize::new(0));
    let handler: Arc<Handler> = Arc::new(handler);
    {
        let requests = requests.clone();
        let max_in_flight = max_in_flight.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = handler.clone();
                let requests = requests.clone();
                let in_flight = in_flight.clone();
                let max_in_flight = max_in_flight.clone();
                thread::spawn(move || {
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    max_in_flight.fetch_max(now, Ordering::SeqCst);
                    serve(stream, &*handler, &requests);
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
    }
    Stub {
        url,
        requests,
        max_in_flight,
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Request>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).unwrap();
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let request = Request {
        method,
        path,
        body: String::from_utf8(body).unwrap(),
    };
    let index = {
        let mut log = log.lock().unwrap();
        log.push(request.clone());
        log.len() - 1
    };
    match handler(&request, index) {
        Reply::Drop => {}
        Reply::Json(status, text) => {
            let mut stream = stream;
            let head = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                text.len()
            );
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(text.as_bytes());
            let _ = stream.flush();
        }
    }
}

/// Implements the wire protocol with the reference scorer and a fixed
/// translation table (unmapped texts pass through).
pub fn reference_service(table: Vec<(&'static str, &'static str)>) -> Stub {
    spawn(move |req, _| match req.path.as_str() {
        "/v1/health" => Reply::Json(200, r#"{"status":"ok"}"#.into()),
        "/v1/score" => {
            let v: serde_json::Value = serde_json::from_str(&req.body).unwrap();
            let items: Vec<serde_json::Value> = v["items"]
                .as_array()
                .unwrap()
                .iter()
                .map(|item| {
                    let q = xlrank::tokenize(item["question"].as_str().unwrap());
                    let z = xlrank::tokenize(item["passage"].as_str().unwrap());
                    match xlrank::likelihood::score(&q, &z) {
                        Ok(s) => serde_json::json!({"avg_log_likelihood": s.avg_log_likelihood, "num_tokens": s.num_tokens}),
                        Err(_) => serde_json::Value::Null,
                    }
                })
                .collect();
            if items.iter().any(|i| i.is_null()) {
                return Reply::Json(400, r#"{"error":"empty text"}"#.into());
            }
            Reply::Json(200, serde_json::json!({ "items": items }).to_string())
        }
        "/v1/translate" => {
            let v: serde_json::Value = serde_json::from_str(&req.body).unwrap();
            let text = v["text"].as_str().unwrap();
            let out = table.iter().find(|(k, _)| *k == text).map(|(_, t)| *t).unwrap_or(text);
            Reply::Json(200, serde_json::json!({ "text": out }).to_string())
        }
        _ => Reply::Json(404, r#"{"error":"not found"}"#.into()),
    })
}
