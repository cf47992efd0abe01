//! Scripted single-threaded HTTP mock for chat-completions tests.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

/// One scripted HTTP response.
#[derive(Clone, Debug)]
pub struct Scripted {
    pub status: u16,
    pub body: String,
}

impl Scripted {
    pub fn ok(body: &str) -> Self {
        Scripted {
            status: 200,
            body: body.to_string(),
        }
    }

    /// A well-formed completion envelope wrapping `content`.
    pub fn completion(content: &str) -> Self {
        let body = serde_json::json!({
            "choices": [{"message": {"content": content}}]
        })
        .to_string();
        Scripted::ok(&body)
    }

    pub fn status(status: u16, body: &str) -> Self {
        Scripted {
            status,
            body: body.to_string(),
        }
    }
}

pub struct MockServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    /// Serves the scripted responses in order; the last one repeats once
    /// the script is exhausted.
    pub fn start(script: Vec<Scripted>) -> MockServer {
        assert!(!script.is_empty(), "mock needs at least one response");
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));

        let seen = Arc::clone(&requests);
        std::thread::spawn(move || {
            let mut queue: VecDeque<Scripted> = script.into();
            let fallback = queue.back().cloned().expect("non-empty script");
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let response = queue.pop_front().unwrap_or_else(|| fallback.clone());
                if let Some(body) = handle(stream, &response) {
                    seen.lock().unwrap().push(body);
                }
            }
        });

        MockServer { base_url, requests }
    }

    /// Request bodies received so far, in arrival order.
    pub fn request_bodies(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

fn handle(mut stream: TcpStream, response: &Scripted) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some(rest) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .map(str::to_string)
        {
            content_length = rest.parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;

    let reply = format!(
        "HTTP/1.1 {} MOCK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
        response.status,
        response.body.len(),
        response.body
    );
    stream.write_all(reply.as_bytes()).ok()?;
    stream.flush().ok()?;
    String::from_utf8(body).ok()
}
