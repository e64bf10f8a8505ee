//! HTTP client for an external detector service.
//!
//! `POST {endpoint}/detect` with a multipart body holding the frame as PNG
//! (`image`) and a JSON part (`meta`) `{"fixation":[x,y],"foveate":bool}`.
//! The response is one detections record.

use std::io::Read;
use std::time::Duration;

use super::{Detection, DetectionRecord, DetectionSource, Frame};
use crate::error::{Error, Result};
use crate::foveation::Image;
use crate::geometry::Point;

pub const DEFAULT_BRIDGE_TIMEOUT: Duration = Duration::from_secs(30);

const BOUNDARY: &str = "----foveal-bridge-7d1c0a5e";

#[derive(Debug, Clone)]
pub struct BridgeClient {
    endpoint: String,
    num_classes: usize,
    timeout: Duration,
    /// Ask the service to foveate instead of sending an already foveated frame.
    server_foveation: bool,
}

impl BridgeClient {
    pub fn new(endpoint: impl Into<String>, num_classes: usize) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            num_classes,
            timeout: DEFAULT_BRIDGE_TIMEOUT,
            server_foveation: false,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_server_foveation(mut self, on: bool) -> Self {
        self.server_foveation = on;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn url(&self) -> String {
        format!("{}/detect", self.endpoint)
    }

    pub fn detect_image(&self, image: &Image, fixation: Point) -> Result<Vec<Detection>> {
        let png = image.encode_png()?;
        let meta = serde_json::json!({
            "fixation": [fixation.x, fixation.y],
            "foveate": self.server_foveation,
        })
        .to_string();
        let body = multipart_body(&png, &meta);

        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let response = agent
            .post(&self.url())
            .set(
                "Content-Type",
                &format!("multipart/form-data; boundary={BOUNDARY}"),
            )
            .send_bytes(&body);

        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, resp)) => {
                let message = resp.into_string().unwrap_or_default();
                return Err(if code >= 500 {
                    Error::DetectorFailure {
                        status: code,
                        message,
                    }
                } else {
                    Error::Schema(format!("bridge rejected request with {code}: {message}"))
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(self.transport_error(t)),
        };

        let mut text = String::new();
        response
            .into_reader()
            .read_to_string(&mut text)
            .map_err(|e| self.io_error(e))?;
        self.parse_response(&text)
    }

    fn parse_response(&self, text: &str) -> Result<Vec<Detection>> {
        let record: DetectionRecord =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let expected = self.num_classes + 1;
        if let Some(bad) = record.scores.iter().find(|s| s.len() != expected) {
            return Err(Error::Schema(format!(
                "score vector of length {} (classes 0..={} expected)",
                bad.len(),
                self.num_classes
            )));
        }
        let (_, detections) = record
            .into_detections()
            .map_err(|e| Error::Schema(e.to_string()))?;
        Ok(detections)
    }

    fn transport_error(&self, t: ureq::Transport) -> Error {
        let timed_out = std::error::Error::source(&t)
            .and_then(|s| s.downcast_ref::<std::io::Error>())
            .map(|e| {
                matches!(
                    e.kind(),
                    std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
                )
            })
            .unwrap_or(false)
            || t.to_string().contains("timed out");
        if timed_out {
            Error::Timeout {
                endpoint: self.endpoint.clone(),
            }
        } else {
            Error::Network {
                endpoint: self.endpoint.clone(),
                message: t.to_string(),
            }
        }
    }

    fn io_error(&self, e: std::io::Error) -> Error {
        if matches!(
            e.kind(),
            std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
        ) {
            Error::Timeout {
                endpoint: self.endpoint.clone(),
            }
        } else {
            Error::Network {
                endpoint: self.endpoint.clone(),
                message: e.to_string(),
            }
        }
    }
}

fn multipart_body(png: &[u8], meta: &str) -> Vec<u8> {
    let mut body = Vec::with_capacity(png.len() + meta.len() + 512);
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"frame.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(png);
    body.extend_from_slice(
        format!(
            "\r\n--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"meta\"\r\nContent-Type: application/json\r\n\r\n{meta}\r\n--{BOUNDARY}--\r\n"
        )
        .as_bytes(),
    );
    body
}

impl DetectionSource for BridgeClient {
    fn needs_image(&self) -> bool {
        true
    }

    fn detect(&mut self, frame: &Frame<'_>) -> Result<Vec<Detection>> {
        let image = frame
            .image
            .ok_or_else(|| Error::Contract("bridge detector needs the frame pixels".into()))?;
        self.detect_image(image, frame.gaze.fixation)
    }
}
