use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use foveal_core::detection::{load_detections, BridgeClient, DetectionSource, Frame, GroundTruth};
use foveal_core::explore::{explore, ExplorationConfig, Scene};
use foveal_core::foveation::Image;
use foveal_core::geometry::{DistanceBinning, GazeState, Point};
use foveal_core::observation::ObservationModel;
use foveal_core::Error;

/// Serves `responses` in order, one per connection, and sends back each raw
/// request it received.
fn fake_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Vec<u8>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = Vec::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.extend_from_slice(line.as_bytes());
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body_in = vec![0; length];
            reader.read_exact(&mut body_in).unwrap();
            head.extend_from_slice(&body_in);
            tx.send(head).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

const RECORD: &str = r#"{"image_id":"img","fixation":[10,20],"boxes":[[1,2,30,40],[5,5,9,9]],"scores":[[0.1,0.7,0.2],[0.5,0.25,0.25]]}"#;

fn image() -> Image {
    Image::filled(48, 32, 3, 90).unwrap()
}

#[test]
fn canned_response_is_parsed_and_request_is_multipart() {
    let (endpoint, rx) = fake_server(vec![(200, RECORD.into())]);
    let client = BridgeClient::new(&endpoint, 2).with_server_foveation(true);
    let dets = client.detect_image(&image(), Point::new(10.0, 20.0)).unwrap();
    assert_eq!(dets.len(), 2);
    assert_eq!(dets[0].scores.argmax(), 1);
    assert_eq!(dets[1].bbox.x_max, 9.0);

    let req = String::from_utf8_lossy(&rx.recv().unwrap()).into_owned();
    assert!(req.starts_with("POST /detect "));
    assert!(req.contains("multipart/form-data; boundary="));
    assert!(req.contains("name=\"image\""));
    assert!(req.contains("\u{FFFD}PNG") || req.contains("PNG"));
    assert!(req.contains(r#""fixation":[10.0,20.0]"#));
    assert!(req.contains(r#""foveate":true"#));
}

#[test]
fn response_is_a_valid_detections_file_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    std::fs::write(&path, format!("{RECORD}\n")).unwrap();
    let store = load_detections(&path).unwrap();
    assert_eq!(store.values().next().unwrap().len(), 2);
}

#[test]
fn wrong_class_count_is_schema_error() {
    let (endpoint, _rx) = fake_server(vec![(200, RECORD.into())]);
    let err = BridgeClient::new(&endpoint, 1)
        .detect_image(&image(), Point::new(1.0, 1.0))
        .unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err:?}");
}

#[test]
fn status_codes_map_to_error_kinds() {
    let (endpoint, _rx) = fake_server(vec![
        (500, r#"{"error":"model crashed"}"#.into()),
        (422, r#"{"error":"bad dims"}"#.into()),
        (200, "not json".into()),
    ]);
    let client = BridgeClient::new(&endpoint, 2);
    let p = Point::new(1.0, 1.0);
    assert!(matches!(
        client.detect_image(&image(), p),
        Err(Error::DetectorFailure { status: 500, .. })
    ));
    assert!(matches!(client.detect_image(&image(), p), Err(Error::Schema(_))));
    assert!(matches!(client.detect_image(&image(), p), Err(Error::Schema(_))));
}

#[test]
fn unreachable_endpoint_is_network_error() {
    // bind then drop to get a port nobody listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = BridgeClient::new(format!("http://127.0.0.1:{port}"), 2)
        .with_timeout(Duration::from_secs(2))
        .detect_image(&image(), Point::new(1.0, 1.0))
        .unwrap_err();
    assert!(matches!(err, Error::Network { .. }), "{err:?}");
    assert!(!err.is_validation());
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hold = thread::spawn(move || {
        let conn = listener.accept();
        thread::sleep(Duration::from_millis(1500));
        drop(conn);
    });
    let err = BridgeClient::new(format!("http://{addr}"), 2)
        .with_timeout(Duration::from_millis(300))
        .detect_image(&image(), Point::new(1.0, 1.0))
        .unwrap_err();
    assert!(matches!(err, Error::Timeout { .. }), "{err:?}");
    hold.join().unwrap();
}

#[test]
fn frame_without_pixels_is_contract_error() {
    let gt = GroundTruth {
        image_id: "img".into(),
        width: 48,
        height: 32,
        objects: vec![],
    };
    let mut client = BridgeClient::new("http://127.0.0.1:9", 2);
    assert!(client.needs_image());
    let frame = Frame {
        ground_truth: &gt,
        gaze: GazeState::at(Point::new(1.0, 1.0)),
        image: None,
    };
    assert!(matches!(client.detect(&frame), Err(Error::Contract(_))));
}

#[test]
fn exploration_over_the_bridge_runs_three_iterations() {
    let (endpoint, rx) = fake_server(vec![(200, RECORD.into()); 3]);
    let gt = GroundTruth {
        image_id: "img".into(),
        width: 48,
        height: 32,
        objects: vec![],
    };
    let model = ObservationModel::uniform(2, DistanceBinning::uniform(3, 30.0));
    let config = ExplorationConfig {
        num_iterations: 3,
        cell_size: 8,
        stride_cells: 2,
        ..Default::default()
    };
    let mut client = BridgeClient::new(&endpoint, 2);
    let trace = explore(&Scene::new(gt, Some(image())), &config, &model, &mut client, None).unwrap();
    assert!(trace.error.is_none());
    assert_eq!(trace.records.len(), 3);
    assert!(trace.records.iter().all(|r| r.num_detections == 2));
    assert_eq!(rx.iter().take(3).count(), 3);
}

#[test]
fn bridge_failure_truncates_the_trace() {
    let (endpoint, _rx) = fake_server(vec![(200, RECORD.into()), (503, "{}".into())]);
    let gt = GroundTruth {
        image_id: "img".into(),
        width: 48,
        height: 32,
        objects: vec![],
    };
    let model = ObservationModel::uniform(2, DistanceBinning::uniform(3, 30.0));
    let config = ExplorationConfig {
        num_iterations: 5,
        cell_size: 8,
        stride_cells: 2,
        ..Default::default()
    };
    let mut client = BridgeClient::new(&endpoint, 2);
    let trace = explore(&Scene::new(gt, Some(image())), &config, &model, &mut client, None).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert!(trace.error.as_deref().unwrap().contains("503"));
}
