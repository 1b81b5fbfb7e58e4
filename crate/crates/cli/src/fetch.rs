//! Stack Exchange tag-wiki client.
//!
//! Every request goes through [`Transport`] and every pause through
//! [`Sleeper`], so tests can run without a network or a clock. Successful
//! responses are cached on disk, one file per tag, and the cache is always
//! consulted first.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use defhyper::corpus::RawRecord;
use defhyper::postag::fallback_tag;
use serde::Deserialize;

pub const API_ROOT: &str = "https://api.stackexchange.com/2.3";

/// A fetched HTTP response; non-2xx statuses are not errors at this level.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport {
    fn get(&mut self, url: &str) -> Result<HttpResponse>;
}

pub trait Sleeper {
    fn sleep(&mut self, duration: Duration);
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        UreqTransport {
            agent: config.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&mut self, url: &str) -> Result<HttpResponse> {
        let mut response = self.agent.get(url).call()?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string()?;
        Ok(HttpResponse { status, body })
    }
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&mut self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

#[derive(Debug, Deserialize)]
struct WikiResponse {
    #[serde(default)]
    items: Vec<WikiItem>,
    backoff: Option<u64>,
    quota_remaining: Option<u64>,
    error_id: Option<u64>,
    error_name: Option<String>,
    error_message: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WikiItem {
    excerpt: Option<String>,
}

/// Tag groups from a tag-list file: one group per line, whitespace
/// separated, `#` starts a comment. Returns the tags in first-seen order
/// with their co-listed partners.
pub fn parse_tag_list(text: &str) -> Vec<(String, Vec<String>)> {
    let mut order: Vec<String> = Vec::new();
    let mut partners: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        let group: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
        for tag in &group {
            let entry = partners.entry(tag.clone()).or_insert_with(|| {
                order.push(tag.clone());
                Vec::new()
            });
            for other in &group {
                if other != tag && !entry.contains(other) {
                    entry.push(other.clone());
                }
            }
        }
    }
    order
        .into_iter()
        .map(|t| {
            let p = partners.remove(&t).unwrap_or_default();
            (t, p)
        })
        .collect()
}

fn percent_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn wiki_url(tag: &str) -> String {
    format!("{API_ROOT}/tags/{}/wikis?site=stackoverflow", percent_encode(tag))
}

/// Cache file for a tag; the name is percent-encoded so tags such as `c#`
/// or `.net` stay valid file names.
pub fn cache_path(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("{}.json", percent_encode(tag).replace('.', "%2E")))
}

/// Splits an excerpt on whitespace and peels leading and trailing
/// punctuation into their own tokens, so "language." gives "language", ".".
pub fn tokenize_excerpt(text: &str) -> Vec<String> {
    const LEAD: &[char] = &['(', '[', '"', '\'', '“', '‘'];
    const TRAIL: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '"', '\'', '”', '’'];
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        if !word.chars().any(char::is_alphanumeric) {
            out.push(word.to_string());
            continue;
        }
        let mut rest = word;
        while let Some(c) = rest.chars().next().filter(|c| LEAD.contains(c) && rest.len() > c.len_utf8()) {
            out.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        }
        let mut tail = Vec::new();
        while let Some(c) = rest.chars().last().filter(|c| TRAIL.contains(c) && rest.len() > c.len_utf8()) {
            tail.push(c.to_string());
            rest = &rest[..rest.len() - c.len_utf8()];
        }
        out.push(rest.to_string());
        out.extend(tail.into_iter().rev());
    }
    out
}

/// Heuristic gold for human review: the first noun after "is/are a/an/the".
pub fn annotate_pattern(tokens: &[String]) -> Option<String> {
    let tags = fallback_tag(tokens);
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let start = lower
        .windows(2)
        .position(|w| matches!(w[0].as_str(), "is" | "are") && matches!(w[1].as_str(), "a" | "an" | "the"))?;
    (start + 2..tokens.len())
        .find(|&k| tags[k] == "NN")
        .map(|k| tokens[k].clone())
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub cache_dir: PathBuf,
    pub offline: bool,
    pub annotate: bool,
}

#[derive(Debug, Default)]
pub struct FetchReport {
    pub records: Vec<RawRecord>,
    pub warnings: Vec<String>,
    /// Set when the API quota ran out before every tag was fetched.
    pub quota_exhausted: bool,
}

enum Lookup {
    /// Response body, and whether it came from the network.
    Body(String, bool),
    Skip(String),
    Quota(String),
}

/// Fetches tag wikis one tag at a time, in order.
pub fn fetch_tags(
    tags: &[(String, Vec<String>)],
    options: &FetchOptions,
    transport: &mut dyn Transport,
    sleeper: &mut dyn Sleeper,
) -> Result<FetchReport> {
    if !options.offline {
        fs::create_dir_all(&options.cache_dir)
            .with_context(|| format!("creating cache directory {}", options.cache_dir.display()))?;
    }
    let mut report = FetchReport::default();
    let mut pending_backoff: Option<u64> = None;
    for (k, (tag, partners)) in tags.iter().enumerate() {
        let cached = cache_path(&options.cache_dir, tag);
        let lookup = if cached.exists() {
            let body = fs::read_to_string(&cached).with_context(|| format!("reading {}", cached.display()))?;
            Lookup::Body(body, false)
        } else if options.offline {
            Lookup::Skip(format!("{tag}: not cached and --offline is set"))
        } else {
            if let Some(secs) = pending_backoff.take() {
                sleeper.sleep(Duration::from_secs(secs));
            }
            request(tag, &cached, transport, &mut pending_backoff)?
        };
        let (body, fresh) = match lookup {
            Lookup::Body(b, fresh) => (b, fresh),
            Lookup::Skip(w) => {
                report.warnings.push(w);
                continue;
            }
            Lookup::Quota(w) => {
                report.warnings.push(w);
                report.warnings.push(format!("stopped with {} tag(s) not fetched", tags.len() - k));
                report.quota_exhausted = true;
                break;
            }
        };
        let parsed: WikiResponse =
            serde_json::from_str(&body).with_context(|| format!("parsing cached response for {tag}"))?;
        let excerpt = parsed
            .items
            .iter()
            .find_map(|i| i.excerpt.as_deref())
            .map(|e| html_escape::decode_html_entities(e).into_owned())
            .filter(|e| !e.trim().is_empty());
        match excerpt {
            Some(excerpt) => {
                let tokens = tokenize_excerpt(&excerpt);
                let hypernym = if options.annotate {
                    annotate_pattern(&tokens)
                } else {
                    None
                };
                report.records.push(RawRecord {
                    term: tag.clone(),
                    tokens,
                    pos: None,
                    hypernym,
                    hypernym_index: None,
                    tag_partners: (!partners.is_empty()).then(|| partners.clone()),
                });
            }
            None => report.warnings.push(format!("{tag}: no tag wiki excerpt")),
        }
        if fresh && parsed.quota_remaining == Some(0) && k + 1 < tags.len() {
            report.warnings.push(format!(
                "API quota exhausted after {tag}; stopped with {} tag(s) not fetched",
                tags.len() - k - 1
            ));
            report.quota_exhausted = true;
            break;
        }
    }
    Ok(report)
}

fn request(
    tag: &str,
    cached: &Path,
    transport: &mut dyn Transport,
    pending_backoff: &mut Option<u64>,
) -> Result<Lookup> {
    let response = match transport.get(&wiki_url(tag)) {
        Ok(r) => r,
        Err(e) => return Ok(Lookup::Skip(format!("{tag}: request failed: {e:#}"))),
    };
    let parsed: Option<WikiResponse> = serde_json::from_str(&response.body).ok();
    if let Some(b) = parsed.as_ref().and_then(|p| p.backoff) {
        *pending_backoff = Some(b);
    }
    let Some(parsed) = parsed else {
        return Ok(Lookup::Skip(format!("{tag}: HTTP {} with unreadable body", response.status)));
    };
    if let Some(id) = parsed.error_id {
        let name = parsed.error_name.unwrap_or_default();
        let message = parsed.error_message.unwrap_or_default();
        let text = format!("{tag}: API error {id} {name}: {message}");
        // 502 is the throttle violation the API uses once the quota is gone
        return Ok(if id == 502 || name == "throttle_violation" {
            Lookup::Quota(text)
        } else {
            Lookup::Skip(text)
        });
    }
    if !(200..300).contains(&response.status) {
        return Ok(Lookup::Skip(format!("{tag}: HTTP {}", response.status)));
    }
    fs::write(cached, &response.body).with_context(|| format!("writing {}", cached.display()))?;
    Ok(Lookup::Body(response.body, true))
}
