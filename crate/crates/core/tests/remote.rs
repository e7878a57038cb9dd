use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use glime::explain::{explain, ExplainRequest, MethodSpec};
use glime::feature_space::{Reference, Segmentation};
use glime::models::ModelSpec;
use glime::Error;
use ndarray::array;
use serde_json::{json, Value};

#[derive(Clone, Copy)]
enum Mode {
    /// Replies with row sums.
    Sum,
    /// Drops the last value.
    Short,
    Status500,
    /// 503 on the first request, then row sums.
    FailOnce,
    Slow,
}

struct Server {
    url: String,
    requests: Arc<AtomicUsize>,
    batch_sizes: Arc<std::sync::Mutex<Vec<usize>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Value> {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    serde_json::from_slice(&body).ok()
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let reply = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(reply.as_bytes());
}

fn serve(mode: Mode) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/predict", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let batch_sizes = Arc::new(std::sync::Mutex::new(Vec::new()));
    let (count, sizes) = (requests.clone(), batch_sizes.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(request) = read_request(&mut stream) else { continue };
            let seen = count.fetch_add(1, Ordering::SeqCst);
            let rows = request["points"].as_array().cloned().unwrap_or_default();
            sizes.lock().unwrap().push(rows.len());
            let mut sums: Vec<f64> = rows
                .iter()
                .map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum())
                .collect();
            match mode {
                Mode::Sum => respond(&mut stream, "200 OK", &json!({ "values": sums }).to_string()),
                Mode::Short => {
                    sums.pop();
                    respond(&mut stream, "200 OK", &json!({ "values": sums }).to_string())
                }
                Mode::Status500 => respond(&mut stream, "500 Internal Server Error", "{}"),
                Mode::FailOnce if seen == 0 => respond(&mut stream, "503 Service Unavailable", "{}"),
                Mode::FailOnce => respond(&mut stream, "200 OK", &json!({ "values": sums }).to_string()),
                Mode::Slow => {
                    thread::sleep(Duration::from_millis(600));
                    respond(&mut stream, "200 OK", &json!({ "values": sums }).to_string())
                }
            }
        }
    });
    Server {
        url,
        requests,
        batch_sizes,
    }
}

fn remote(url: &str, extra: Value) -> ModelSpec {
    let mut spec = json!({ "kind": "remote", "endpoint": url, "timeout_ms": 2000 });
    for (k, v) in extra.as_object().unwrap() {
        spec[k] = v.clone();
    }
    ModelSpec::from_json(&spec.to_string()).unwrap()
}

#[test]
fn values_come_back_in_row_order_across_batches() {
    let server = serve(Mode::Sum);
    let model = remote(&server.url, json!({ "batch_size": 2 }));
    let points = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0], [9.0, 10.0]];
    let out = model.evaluate(points.view()).unwrap();
    assert_eq!(out.to_vec(), vec![3.0, 7.0, 11.0, 15.0, 19.0]);
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
    assert_eq!(*server.batch_sizes.lock().unwrap(), vec![2, 2, 1]);
}

#[test]
fn short_response_is_malformed() {
    let server = serve(Mode::Short);
    let model = remote(&server.url, json!({}));
    let err = model.evaluate(array![[1.0], [2.0]].view()).unwrap_err();
    assert!(matches!(err, Error::RemoteMalformed { expected: 2, actual: 1 }), "{err}");
}

#[test]
fn http_errors_are_unavailable_and_not_retried_by_default() {
    let server = serve(Mode::Status500);
    let model = remote(&server.url, json!({}));
    let err = model.evaluate(array![[1.0]].view()).unwrap_err();
    assert!(matches!(err, Error::RemoteUnavailable(_)), "{err}");
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_recover_from_a_transient_failure() {
    let server = serve(Mode::FailOnce);
    let model = remote(&server.url, json!({ "retries": 1 }));
    let out = model.evaluate(array![[1.0, 1.0]].view()).unwrap();
    assert_eq!(out.to_vec(), vec![2.0]);
    assert_eq!(server.requests.load(Ordering::SeqCst), 2);
}

#[test]
fn timeout_is_unavailable() {
    let server = serve(Mode::Slow);
    let model = remote(&server.url, json!({ "timeout_ms": 100 }));
    let err = model.evaluate(array![[1.0]].view()).unwrap_err();
    assert!(matches!(err, Error::RemoteUnavailable(_)), "{err}");
}

#[test]
fn refused_connection_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let model = remote(&format!("http://127.0.0.1:{port}/"), json!({}));
    let err = model.evaluate(array![[1.0]].view()).unwrap_err();
    assert!(matches!(err, Error::RemoteUnavailable(_)), "{err}");
}

#[test]
fn declared_dimension_is_enforced() {
    let model = remote("http://127.0.0.1:9/", json!({ "input_dim": 3 }));
    let err = model.evaluate(array![[1.0]].view()).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 3, actual: 1 }));
}

#[test]
fn gradients_are_unsupported() {
    let model = remote("http://127.0.0.1:9/", json!({}));
    assert!(matches!(model.gradient(&[0.0]), Err(Error::UnsupportedModel(_))));
}

#[test]
fn explains_a_remote_model() {
    // the server computes the row sum, a linear model with unit coefficients
    let server = serve(Mode::Sum);
    let model = remote(&server.url, json!({ "batch_size": 64 }));
    let seg = Segmentation::singleton(3).unwrap();
    let reference = Reference::constant(3, 0.0).unwrap();
    let e = explain(&ExplainRequest {
        model: &model,
        x: &[1.0, 2.0, 3.0],
        segmentation: &seg,
        reference: Some(&reference),
        method: MethodSpec::KernelShap { exact: true },
        n: 1,
        lambda: 0.0,
        seed: 0,
    })
    .unwrap();
    for (a, b) in e.w.iter().zip([1.0, 2.0, 3.0]) {
        assert!((a - b).abs() < 1e-10, "{:?}", e.w);
    }
}
