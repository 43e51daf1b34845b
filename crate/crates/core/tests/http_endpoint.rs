use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use anchorneg::llm::{completion_body, ChatClient, ChatMessage, EndpointConfig, LlmError};

/// Serves one canned HTTP response per entry, returning the request bodies seen.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            bodies.push(String::from_utf8(request).unwrap());
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

fn config(url: String) -> EndpointConfig {
    EndpointConfig { base_url: url, backoff_ms: 1, timeout_secs: 5.0, max_retries: 2, ..Default::default() }
}

#[test]
fn completes_over_http_after_a_server_error() {
    let (url, server) = serve(vec![(503, "{}".into()), (200, completion_body("I can do $2,150."))]);
    let client = ChatClient::http(config(url));
    let reply = client.chat_complete(&[ChatMessage::user("We can offer $1,900 for this load.")]).unwrap();
    assert_eq!(reply, "I can do $2,150.");
    let bodies = server.join().unwrap();
    assert_eq!(bodies.len(), 2);
    let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(sent["messages"][0]["content"], "We can offer $1,900 for this load.");
    assert_eq!(sent["model"], "gpt-oss:20b");
}

#[test]
fn client_error_is_not_retried() {
    let (url, server) = serve(vec![(400, "{\"error\":\"bad model\"}".into())]);
    let err = ChatClient::http(config(url)).chat_complete(&[ChatMessage::user("hi")]).unwrap_err();
    assert!(matches!(err, LlmError::Status { code: 400, .. }), "{err}");
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = ChatClient::http(config(format!("http://127.0.0.1:{port}/v1")))
        .chat_complete(&[ChatMessage::user("hi")])
        .unwrap_err();
    assert!(matches!(err, LlmError::RetriesExhausted { attempts: 3, .. }), "{err}");
}

#[test]
fn garbage_body_is_malformed() {
    let (url, server) = serve(vec![(200, "{\"choices\": []}".into())]);
    let err = ChatClient::http(config(url)).chat_complete(&[ChatMessage::user("hi")]).unwrap_err();
    assert!(matches!(err, LlmError::MalformedResponse(_)), "{err}");
    server.join().unwrap();
}
