//! Server-sent-event decoding for streamed chat completions.

use serde_json::Value;

use super::{ChatResponse, FinishReason, Usage};

#[derive(Debug, Clone, PartialEq)]
pub enum SseItem {
    Delta(String),
    Finish(FinishReason),
    Usage(Usage),
    Done,
    Bad(String),
}

/// Incremental decoder: feed arbitrary byte chunks, get decoded items.
#[derive(Debug, Default)]
pub struct SseDecoder {
    buf: Vec<u8>,
    data: Vec<String>,
}

impl SseDecoder {
    pub fn new() -> SseDecoder {
        SseDecoder::default()
    }

    pub fn feed(&mut self, chunk: &[u8]) -> Vec<SseItem> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        while let Some(pos) = self.buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.buf.drain(..=pos).collect();
            let line = String::from_utf8_lossy(&line);
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                self.dispatch(&mut out);
            } else if let Some(rest) = line.strip_prefix("data:") {
                self.data.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
            }
        }
        out
    }

    /// Flush a trailing event not terminated by a blank line.
    pub fn finish(&mut self) -> Vec<SseItem> {
        let mut out = Vec::new();
        if !self.buf.is_empty() {
            let rest = std::mem::take(&mut self.buf);
            out.extend(self.feed(&rest));
            let tail = String::from_utf8_lossy(&self.buf).to_string();
            self.buf.clear();
            if let Some(d) = tail.trim_end().strip_prefix("data:") {
                self.data.push(d.trim_start().to_string());
            }
        }
        self.dispatch(&mut out);
        out
    }

    fn dispatch(&mut self, out: &mut Vec<SseItem>) {
        if self.data.is_empty() {
            return;
        }
        let payload = self.data.join("\n");
        self.data.clear();
        if payload.trim() == "[DONE]" {
            out.push(SseItem::Done);
            return;
        }
        let v: Value = match serde_json::from_str(&payload) {
            Ok(v) => v,
            Err(e) => {
                out.push(SseItem::Bad(e.to_string()));
                return;
            }
        };
        if let Some(choice) = v.get("choices").and_then(|c| c.get(0)) {
            if let Some(text) = choice.pointer("/delta/content").and_then(Value::as_str) {
                if !text.is_empty() {
                    out.push(SseItem::Delta(text.to_string()));
                }
            }
            if let Some(fr) = choice.get("finish_reason").and_then(Value::as_str) {
                out.push(SseItem::Finish(super::http::map_finish_reason(fr)));
            }
        }
        if let Some(u) = v.get("usage").filter(|u| !u.is_null()) {
            out.push(SseItem::Usage(super::http::parse_usage(u)));
        }
    }
}

/// Fold decoded items into deltas and a terminal response. A stream that
/// ends without a finish reason or `[DONE]` counts as a disconnect.
pub fn fold_items(items: impl IntoIterator<Item = SseItem>) -> (Vec<String>, ChatResponse) {
    let mut deltas = Vec::new();
    let mut finish = None;
    let mut usage = Usage::default();
    let mut done = false;
    for item in items {
        match item {
            SseItem::Delta(d) => deltas.push(d),
            SseItem::Finish(f) => finish = Some(f),
            SseItem::Usage(u) => usage = u,
            SseItem::Done => done = true,
            SseItem::Bad(_) => finish = Some(FinishReason::Error),
        }
    }
    let content = deltas.concat();
    let finish_reason = match finish {
        Some(f) if !(f == FinishReason::Stop && content.is_empty()) => f,
        None if done && !content.is_empty() => FinishReason::Stop,
        _ => FinishReason::Error,
    };
    (deltas, ChatResponse { content, finish_reason, usage })
}

/// Decode a complete SSE body.
pub fn parse_sse_body(body: &str) -> (Vec<String>, ChatResponse) {
    let mut d = SseDecoder::new();
    let mut items = d.feed(body.as_bytes());
    items.extend(d.finish());
    fold_items(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(text: &str) -> String {
        format!("data: {{\"choices\":[{{\"delta\":{{\"content\":{}}}}}]}}\n\n", serde_json::to_string(text).unwrap())
    }

    #[test]
    fn split_across_reads() {
        let body = format!(
            "{}{}data: {{\"choices\":[{{\"delta\":{{}},\"finish_reason\":\"stop\"}}]}}\n\ndata: [DONE]\n\n",
            chunk("Hel"),
            chunk("lo")
        );
        let mut d = SseDecoder::new();
        let mut items = Vec::new();
        for b in body.as_bytes().chunks(3) {
            items.extend(d.feed(b));
        }
        items.extend(d.finish());
        let (deltas, resp) = fold_items(items);
        assert_eq!(deltas, vec!["Hel", "lo"]);
        assert_eq!(resp.content, "Hello");
        assert_eq!(resp.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn disconnect_keeps_partial() {
        let (_, resp) = parse_sse_body(&format!("{}{}", chunk("par"), chunk("tial")));
        assert_eq!(resp.content, "partial");
        assert_eq!(resp.finish_reason, FinishReason::Error);
    }

    #[test]
    fn empty_stream_is_error() {
        let (deltas, resp) = parse_sse_body("data: [DONE]\n\n");
        assert!(deltas.is_empty());
        assert_eq!(resp.content, "");
        assert_eq!(resp.finish_reason, FinishReason::Error);
    }
}
