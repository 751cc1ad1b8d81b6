//! Protocol conformance checks for an embedding server.
//!
//! The fixtures under `tests/fixtures/protocol` are compiled in so an
//! external server can be checked from the CLI or from tests alike.

use std::time::Duration;

use reqwest::blocking::Client;
use serde::Serialize;

use super::wire::{EmbedRequest, EmbedResponse, Health};

pub const EMBED_REQUEST: &str = include_str!("../../tests/fixtures/protocol/embed_request.json");
pub const EMBED_RESPONSE: &str = include_str!("../../tests/fixtures/protocol/embed_response.json");
pub const COMPLETE_REQUEST: &str = include_str!("../../tests/fixtures/protocol/complete_request.json");
pub const COMPLETE_RESPONSE: &str =
    include_str!("../../tests/fixtures/protocol/complete_response.json");
pub const HEALTH: &str = include_str!("../../tests/fixtures/protocol/health.json");
pub const CONFORMANCE_TEXTS: &str =
    include_str!("../../tests/fixtures/protocol/conformance_texts.json");
pub const MALFORMED_EMBED: &str = include_str!("../../tests/fixtures/protocol/malformed_embed.txt");

pub const NORM_TOLERANCE: f64 = 1e-5;
pub const DETERMINISM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub endpoint: String,
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &'static str, result: Result<(), String>) -> Check {
    match result {
        Ok(()) => Check { name, passed: true, detail: String::new() },
        Err(detail) => Check { name, passed: false, detail },
    }
}

struct Probe {
    client: Client,
    base: String,
    model: String,
}

impl Probe {
    fn embed(&self, texts: &[String]) -> Result<EmbedResponse, String> {
        let body = EmbedRequest { model: self.model.clone(), texts: texts.to_vec() };
        let resp = self
            .client
            .post(format!("{}/embed", self.base))
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("status {status}: {text}"));
        }
        let parsed: EmbedResponse = serde_json::from_str(&text).map_err(|e| format!("{e}: {text}"))?;
        if parsed.vectors.len() != texts.len() {
            return Err(format!("{} vectors for {} texts", parsed.vectors.len(), texts.len()));
        }
        Ok(parsed)
    }
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return Err(format!("lengths differ: {} vs {}", x.len(), y.len()));
        }
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    }
    Ok(worst)
}

/// Runs every check against `endpoint`; network failures fail the check
/// rather than aborting the run.
pub fn run_conformance(endpoint: &str, model: &str, timeout_ms: u64) -> ConformanceReport {
    let base = endpoint.trim_end_matches('/').to_string();
    let client = match Client::builder().timeout(Duration::from_millis(timeout_ms)).build() {
        Ok(c) => c,
        Err(e) => {
            return ConformanceReport {
                endpoint: base,
                checks: vec![check("client", Err(e.to_string()))],
            }
        }
    };
    let probe = Probe { client, base: base.clone(), model: model.to_string() };
    let texts: Vec<String> =
        serde_json::from_str(CONFORMANCE_TEXTS).expect("conformance texts fixture is valid JSON");
    let mut checks = Vec::new();

    checks.push(check("health", (|| {
        let resp = probe.client.get(format!("{base}/health")).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let h: Health = resp.json().map_err(|e| e.to_string())?;
        if !status.is_success() || h.status != "ok" {
            return Err(format!("status {status}, body status {:?}", h.status));
        }
        Ok(())
    })()));

    let first = probe.embed(&texts);
    checks.push(check("dims", match &first {
        Ok(r) => match r.vectors.iter().position(|v| v.len() != r.dims) {
            Some(i) => Err(format!("vector {i} has {} values, dims is {}", r.vectors[i].len(), r.dims)),
            None if r.dims == 0 => Err("dims is 0".into()),
            None => Ok(()),
        },
        Err(e) => Err(e.clone()),
    }));

    checks.push(check("unit_norm", match &first {
        Ok(r) => r
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.iter().map(|x| x * x).sum::<f64>().sqrt()))
            .find(|(_, n)| (n - 1.0).abs() > NORM_TOLERANCE)
            .map_or(Ok(()), |(i, n)| Err(format!("vector {i} has norm {n}"))),
        Err(e) => Err(e.clone()),
    }));

    checks.push(check("determinism", (|| {
        let a = first.as_ref().map_err(Clone::clone)?;
        let b = probe.embed(&texts)?;
        let d = max_abs_diff(&a.vectors, &b.vectors)?;
        if d > DETERMINISM_TOLERANCE {
            return Err(format!("repeat differs by {d}"));
        }
        Ok(())
    })()));

    checks.push(check("order", (|| {
        let a = first.as_ref().map_err(Clone::clone)?;
        let reversed: Vec<String> = texts.iter().rev().cloned().collect();
        let mut b = probe.embed(&reversed)?.vectors;
        b.reverse();
        let d = max_abs_diff(&a.vectors, &b)?;
        if d > DETERMINISM_TOLERANCE {
            return Err(format!("reordered batch differs by {d}"));
        }
        Ok(())
    })()));

    checks.push(check("batch_independence", (|| {
        let a = first.as_ref().map_err(Clone::clone)?;
        for (i, t) in texts.iter().enumerate() {
            let single = probe.embed(std::slice::from_ref(t))?;
            let d = max_abs_diff(&a.vectors[i..=i], &single.vectors)?;
            if d > DETERMINISM_TOLERANCE {
                return Err(format!("text {i} alone differs by {d}"));
            }
        }
        Ok(())
    })()));

    checks.push(check("malformed_json", (|| {
        let resp = probe
            .client
            .post(format!("{base}/embed"))
            .header("content-type", "application/json")
            .body(MALFORMED_EMBED)
            .send()
            .map_err(|e| e.to_string())?;
        if resp.status().as_u16() != 400 {
            return Err(format!("expected 400, got {}", resp.status()));
        }
        Ok(())
    })()));

    ConformanceReport { endpoint: base, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::wire::{CompleteRequest, CompleteResponse};

    #[test]
    fn fixtures_parse_as_wire_types() {
        let req: EmbedRequest = serde_json::from_str(EMBED_REQUEST).unwrap();
        assert_eq!(req.texts.len(), 2);
        let resp: EmbedResponse = serde_json::from_str(EMBED_RESPONSE).unwrap();
        assert!(resp.vectors.iter().all(|v| v.len() == resp.dims));
        for v in &resp.vectors {
            assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < NORM_TOLERANCE);
        }
        let c: CompleteRequest = serde_json::from_str(COMPLETE_REQUEST).unwrap();
        assert_eq!(c.temperature, 0.0);
        let r: CompleteResponse = serde_json::from_str(COMPLETE_RESPONSE).unwrap();
        assert_eq!(r.latency_ms, None);
        let h: Health = serde_json::from_str(HEALTH).unwrap();
        assert_eq!(h.status, "ok");
        assert!(serde_json::from_str::<EmbedRequest>(MALFORMED_EMBED).is_err());
        let texts: Vec<String> = serde_json::from_str(CONFORMANCE_TEXTS).unwrap();
        assert!(texts.len() >= 3);
    }

    #[test]
    fn unreachable_server_fails_every_check() {
        let r = run_conformance("http://127.0.0.1:1", "m", 500);
        assert!(!r.passed());
        assert!(r.checks.iter().all(|c| !c.passed));
    }
}
