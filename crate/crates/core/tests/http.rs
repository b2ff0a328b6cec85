//! Wire-protocol checks for the HTTP embedding provider and generation
//! endpoint, against a minimal local server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use trajeval_core::embedding::{embed, EmbedOptions, EmbeddingError, HttpEmbeddingProvider};
use trajeval_core::genharness::{
    generate, GenerateOptions, GenerationTask, HttpTextEndpoint, Prompt, SamplingParams,
};
use trajeval_core::streams::SubmissionRef;

/// Serve one canned (status, body) response per expected request, then stop.
/// Returns the base URL and the captured request bodies.
fn serve(
    responses: Vec<(u16, String)>,
) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind local port");
    let addr = listener.local_addr().unwrap();
    let handle = thread::spawn(move || {
        let mut captured = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let header_end = loop {
                let n = stream.read(&mut chunk).expect("read request");
                buffer.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_header_end(&buffer) {
                    break pos;
                }
                if n == 0 {
                    break buffer.len();
                }
            };
            let headers = String::from_utf8_lossy(&buffer[..header_end]).to_string();
            let content_length = headers
                .lines()
                .find_map(|line| {
                    let (name, value) = line.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse::<usize>().ok())?
                })
                .unwrap_or(0);
            let mut body_bytes = buffer[header_end..].to_vec();
            while body_bytes.len() < content_length {
                let n = stream.read(&mut chunk).expect("read body");
                if n == 0 {
                    break;
                }
                body_bytes.extend_from_slice(&chunk[..n]);
            }
            captured.push(String::from_utf8_lossy(&body_bytes).to_string());

            let reason = match status {
                200 => "OK",
                401 => "Unauthorized",
                _ => "Error",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).expect("write response");
        }
        captured
    });
    (format!("http://{addr}/api"), handle)
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .map(|p| p + 4)
}

fn refs(n: usize) -> Vec<SubmissionRef> {
    (0..n)
        .map(|i| SubmissionRef {
            student_id: format!("s{i}"),
            problem_id: "p".to_string(),
            attempt_index: 0,
        })
        .collect()
}

#[test]
fn embedding_provider_posts_texts_and_reads_vectors() {
    let body = serde_json::json!({ "vectors": [[1.0, 0.0], [0.0, 1.0]] }).to_string();
    let (url, server) = serve(vec![(200, body)]);

    let provider = HttpEmbeddingProvider::new(&url, "test-http", 2, Some("token-abc".into()));
    let set = embed(
        refs(2),
        &["x = 1", "y = 2"],
        &provider,
        &EmbedOptions::default(),
    )
    .unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.row(0), &[1.0, 0.0]);

    let requests = server.join().unwrap();
    let request: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(request["texts"][0], "x = 1");
    assert_eq!(request["texts"][1], "y = 2");
}

#[test]
fn embedding_provider_retries_transient_failures() {
    let good = serde_json::json!({ "vectors": [[0.5, 0.5]] }).to_string();
    let (url, server) = serve(vec![
        (500, "{\"error\": \"busy\"}".to_string()),
        (200, good),
    ]);
    let provider = HttpEmbeddingProvider::new(&url, "test-http", 2, None);
    let set = embed(refs(1), &["x = 1"], &provider, &EmbedOptions::default()).unwrap();
    assert_eq!(set.row(0), &[0.5, 0.5]);
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn embedding_provider_treats_auth_failure_as_fatal() {
    let (url, server) = serve(vec![(401, "{}".to_string())]);
    let provider = HttpEmbeddingProvider::new(&url, "test-http", 2, None);
    let err = embed(refs(1), &["x = 1"], &provider, &EmbedOptions::default()).unwrap_err();
    assert!(matches!(err, EmbeddingError::AuthFailure(_)), "{err}");
    // Exactly one request: no retries after a fatal status.
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn text_endpoint_sends_chat_shape_and_extracts_content() {
    let body = serde_json::json!({
        "choices": [{"message": {"content": "<code>\nx = 1\n</code>"}}]
    })
    .to_string();
    let (url, server) = serve(vec![(200, body)]);

    let endpoint = HttpTextEndpoint::new(&url, "test-model", Some("key".into()));
    let tasks = vec![GenerationTask {
        target_ref: SubmissionRef {
            student_id: "s1".to_string(),
            problem_id: "p1".to_string(),
            attempt_index: 0,
        },
        stage: None,
        template_id: "t".to_string(),
        prompt: Prompt {
            system: "system text".to_string(),
            user: "user text".to_string(),
        },
    }];
    let records = generate(
        &tasks,
        &endpoint,
        &SamplingParams::default(),
        &GenerateOptions {
            requests_per_second: 1000.0,
            ..GenerateOptions::default()
        },
    )
    .unwrap();
    assert_eq!(records[0].extracted_code.as_deref(), Some("x = 1"));

    let requests = server.join().unwrap();
    let request: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(request["model"], "test-model");
    assert_eq!(request["messages"][0]["role"], "system");
    assert_eq!(request["messages"][1]["content"], "user text");
    assert_eq!(request["temperature"], 0.7);
    assert_eq!(request["top_p"], 0.8);
    assert_eq!(request["top_k"], 20);
}
