//! JSON-over-HTTP backends.
//!
//! OCR: `POST <endpoint>/ocr` with
//! `{"image": <base64 PNG>, "dpi": int, "params": {"beam_width": int, "max_tokens": int}}`,
//! answered by `{"text": string, "confidence": number}`.
//!
//! Sentiment: `POST <endpoint>/sentiment` with `{"text": string}`, answered by
//! `{"negative": number, "neutral": number, "positive": number}`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{
    BackendDescriptor, BackendError, OcrEngine, OcrPage, OcrParams, RawTranscription,
    SentimentEngine, SENTIMENT_CHUNK_CHARS,
};

/// Requests allowed in flight per backend unless configured otherwise.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct OcrRequest {
    pub image: String,
    pub dpi: u32,
    pub params: OcrParams,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct OcrResponse {
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SentimentRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SentimentResponse {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

struct Client {
    descriptor: BackendDescriptor,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl Client {
    fn new(descriptor: BackendDescriptor, max_in_flight: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(descriptor.timeout_ms.max(1))))
            .http_status_as_error(true)
            .build()
            .into();
        Client {
            descriptor,
            agent,
            in_flight: InFlight::new(max_in_flight),
        }
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.descriptor.endpoint.trim_end_matches('/'))
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &B,
    ) -> Result<R, BackendError> {
        let unavailable = |reason: String| BackendError::Unavailable {
            backend_id: self.descriptor.backend_id.clone(),
            reason,
        };
        let _permit = self.in_flight.acquire();
        let response = self
            .agent
            .post(&self.url(route))
            .send_json(body)
            .map_err(|e| unavailable(e.to_string()))?;
        response
            .into_body()
            .read_json::<R>()
            .map_err(|e| unavailable(format!("malformed response: {e}")))
    }
}

pub struct HttpOcr {
    client: Client,
}

impl HttpOcr {
    pub fn new(descriptor: BackendDescriptor, max_in_flight: usize) -> Self {
        HttpOcr {
            client: Client::new(descriptor, max_in_flight),
        }
    }
}

/// Request body for one page; the image is the ink mask as a 0/255 PNG.
pub fn ocr_request(page: &OcrPage<'_>, params: &OcrParams) -> Result<OcrRequest, String> {
    let png = page.image.to_png().map_err(|e| e.to_string())?;
    Ok(OcrRequest {
        image: base64::engine::general_purpose::STANDARD.encode(png),
        dpi: page.dpi,
        params: *params,
    })
}

impl OcrEngine for HttpOcr {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.client.descriptor
    }

    fn transcribe(
        &self,
        page: &OcrPage<'_>,
        params: &OcrParams,
    ) -> Result<RawTranscription, BackendError> {
        let body = ocr_request(page, params).map_err(|reason| BackendError::Protocol {
            backend_id: self.client.descriptor.backend_id.clone(),
            reason,
        })?;
        let resp: OcrResponse = self.client.post("ocr", &body)?;
        Ok(RawTranscription {
            text: resp.text,
            confidence: resp.confidence,
        })
    }
}

pub struct HttpSentiment {
    client: Client,
}

impl HttpSentiment {
    pub fn new(descriptor: BackendDescriptor, max_in_flight: usize) -> Self {
        HttpSentiment {
            client: Client::new(descriptor, max_in_flight),
        }
    }
}

impl SentimentEngine for HttpSentiment {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.client.descriptor
    }

    fn max_chars(&self) -> Option<usize> {
        Some(SENTIMENT_CHUNK_CHARS)
    }

    fn score(&self, text: &str) -> Result<[f64; 3], BackendError> {
        let resp: SentimentResponse = self.client.post(
            "sentiment",
            &SentimentRequest {
                text: text.to_string(),
            },
        )?;
        Ok([resp.negative, resp.neutral, resp.positive])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::BinaryImage;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn request_body_layout() {
        let img = BinaryImage::new(2, 1, vec![true, false]).unwrap();
        let page = OcrPage {
            label: "s_page_1",
            dpi: 300,
            image: &img,
        };
        let req = ocr_request(&page, &OcrParams::default()).unwrap();
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["dpi"], 300);
        assert_eq!(v["params"]["beam_width"], 4);
        assert_eq!(v["params"]["max_tokens"], 256);
        let png = base64::engine::general_purpose::STANDARD
            .decode(v["image"].as_str().unwrap())
            .unwrap();
        let decoded = image::load_from_memory(&png).unwrap().into_luma8();
        assert_eq!(decoded.into_raw(), vec![0, 255]);
    }

    #[test]
    fn in_flight_limit_holds() {
        let gate = Arc::new(InFlight::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (gate, active, peak) = (gate.clone(), active.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = gate.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
