use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;

use super::{PersonaError, RenderedPrompt, Strategy};
use crate::cache::ContentStore;
use crate::harness::MockBehavior;
use crate::hashing::FieldDigest;
use crate::http::{CallError, Delivered, JsonClient, PostError, RetryPolicy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// Chat-completion style HTTP JSON endpoint.
    #[default]
    OpenaiCompatible,
    /// Offline stub replying with a function of the prompt hash.
    Stub,
    /// Offline behavioral mock with configurable biases.
    Mock,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    RetryPolicy::default().max_retries
}

/// A configured model. Temperature and output length have no defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub model_id: String,
    #[serde(default)]
    pub provider: Provider,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Zero or negative means unlimited.
    #[serde(default)]
    pub requests_per_second: f64,
    #[serde(default)]
    pub mock: Option<MockBehavior>,
}

impl ModelEndpoint {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            ..RetryPolicy::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub user_id: String,
    pub model_id: String,
    pub strategy: Strategy,
    pub parent_id: String,
    pub prompt_hash: String,
    /// Verbatim model output; `None` when generation failed.
    pub reply_text: Option<String>,
    pub failure: Option<String>,
    pub latency_ms: u64,
    pub retries: u32,
    pub cache_hit: bool,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenerationRecord {
    pub fn is_failed(&self) -> bool {
        self.reply_text.is_none()
    }
}

pub trait Generator: Send + Sync {
    fn endpoint(&self) -> &ModelEndpoint;
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Delivered<String>, PostError>;
}

/// Cache key over model, strategy, decoding parameters and prompt bytes.
pub fn generation_cache_key(endpoint: &ModelEndpoint, strategy: Strategy, prompt: &RenderedPrompt) -> String {
    let mut d = FieldDigest::new("generation");
    d.push_str("model_id", &endpoint.model_id)
        .push_str("strategy", strategy.id())
        .push_f64("temperature", endpoint.temperature)
        .push_u64("max_tokens", endpoint.max_tokens as u64)
        .push_str("prompt", &prompt.bytes);
    d.finish()
}

/// Returns the cached record for this prompt, or calls the model and caches
/// the verbatim reply. Exhausted retries give a failed record that is not
/// cached; non-retryable errors abort.
pub fn generate_reply(
    generator: &dyn Generator,
    cache: &ContentStore,
    user_id: &str,
    parent_id: &str,
    prompt: &RenderedPrompt,
) -> Result<GenerationRecord, PersonaError> {
    let endpoint = generator.endpoint();
    let key = generation_cache_key(endpoint, prompt.template_id, prompt);
    if let Some(mut rec) = cache.get::<GenerationRecord>(&key)? {
        rec.cache_hit = true;
        rec.user_id = user_id.to_string();
        rec.parent_id = parent_id.to_string();
        return Ok(rec);
    }
    let mut rec = GenerationRecord {
        user_id: user_id.to_string(),
        model_id: endpoint.model_id.clone(),
        strategy: prompt.template_id,
        parent_id: parent_id.to_string(),
        prompt_hash: prompt.content_hash.clone(),
        reply_text: None,
        failure: None,
        latency_ms: 0,
        retries: 0,
        cache_hit: false,
        temperature: endpoint.temperature,
        max_tokens: endpoint.max_tokens,
    };
    let started = Instant::now();
    let outcome = generator.complete(prompt);
    rec.latency_ms = started.elapsed().as_millis() as u64;
    match outcome {
        Ok(d) => {
            rec.reply_text = Some(d.value);
            rec.retries = d.retries;
            cache.put(&key, &rec)?;
            Ok(rec)
        }
        Err(PostError::Exhausted { attempts, last }) => {
            warn!(model = %endpoint.model_id, user_id, parent_id, error = %last, "generation failed");
            rec.retries = attempts.saturating_sub(1);
            rec.failure = Some(last.to_string());
            Ok(rec)
        }
        Err(fatal @ PostError::Fatal(_)) => Err(PersonaError::Fatal {
            model_id: endpoint.model_id.clone(),
            source: fatal,
        }),
    }
}

/// Chat-completion client: `{model, messages, temperature, max_tokens}` in,
/// `{text}` or `choices[0].message.content` out.
#[derive(Debug)]
pub struct HttpChatGenerator {
    endpoint: ModelEndpoint,
    url: String,
    client: JsonClient,
}

impl HttpChatGenerator {
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, PersonaError> {
        let url = endpoint.base_url.clone().ok_or_else(|| PersonaError::Endpoint {
            model_id: endpoint.model_id.clone(),
            reason: "base_url is required".into(),
        })?;
        let mut client = JsonClient::new(
            Duration::from_secs_f64(endpoint.timeout_secs.max(0.001)),
            endpoint.requests_per_second,
            endpoint.retry_policy(),
        );
        if let Some(var) = &endpoint.api_key_env {
            let key = std::env::var(var).map_err(|_| PersonaError::Endpoint {
                model_id: endpoint.model_id.clone(),
                reason: format!("environment variable {var} is not set"),
            })?;
            client = client.with_header("Authorization", format!("Bearer {key}"));
        }
        Ok(Self { endpoint, url, client })
    }
}

fn extract_text(v: &Value) -> Option<String> {
    if let Some(t) = v.get("text").and_then(Value::as_str) {
        return Some(t.to_string());
    }
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl Generator for HttpChatGenerator {
    fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<Delivered<String>, PostError> {
        let body = json!({
            "model": self.endpoint.model_id,
            "messages": [{"role": "user", "content": prompt.bytes}],
            "temperature": self.endpoint.temperature,
            "max_tokens": self.endpoint.max_tokens,
        });
        let d = self.client.post_json::<Value>(&self.url, &body)?;
        let text = extract_text(&d.value)
            .ok_or_else(|| PostError::Fatal(CallError::Decode("response has no reply text".into())))?;
        Ok(Delivered {
            value: text,
            retries: d.retries,
        })
    }
}

/// Offline stub whose reply is a fixed function of the prompt hash.
#[derive(Debug, Clone)]
pub struct EchoStub {
    endpoint: ModelEndpoint,
}

impl EchoStub {
    pub fn new(endpoint: ModelEndpoint) -> Self {
        Self { endpoint }
    }

    pub fn reply_for(prompt_hash: &str) -> String {
        format!("stub reply {}", &prompt_hash[..prompt_hash.len().min(16)])
    }
}

impl Generator for EchoStub {
    fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<Delivered<String>, PostError> {
        Ok(Delivered {
            value: Self::reply_for(&prompt.content_hash),
            retries: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::sha256_hex;
    use std::sync::atomic::{AtomicU32, Ordering};

    pub(crate) fn endpoint(model: &str) -> ModelEndpoint {
        ModelEndpoint {
            model_id: model.into(),
            provider: Provider::Stub,
            base_url: None,
            api_key_env: None,
            temperature: 0.7,
            max_tokens: 64,
            timeout_secs: 5.0,
            max_retries: 2,
            requests_per_second: 0.0,
            mock: None,
        }
    }

    fn prompt(text: &str) -> RenderedPrompt {
        RenderedPrompt {
            bytes: text.into(),
            template_id: Strategy::ZeroShot,
            thread_rendering: String::new(),
            content_hash: sha256_hex(text),
        }
    }

    struct Counting {
        ep: ModelEndpoint,
        calls: AtomicU32,
        reply: Result<String, PostError>,
    }

    impl Generator for Counting {
        fn endpoint(&self) -> &ModelEndpoint {
            &self.ep
        }
        fn complete(&self, _: &RenderedPrompt) -> Result<Delivered<String>, PostError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.reply.clone().map(|value| Delivered { value, retries: 1 })
        }
    }

    #[test]
    fn second_call_hits_cache_without_calling_model() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentStore::open(dir.path()).unwrap();
        let g = Counting {
            ep: endpoint("m"),
            calls: AtomicU32::new(0),
            reply: Ok("hello".into()),
        };
        let p = prompt("hi");
        let a = generate_reply(&g, &cache, "u", "p", &p).unwrap();
        let b = generate_reply(&g, &cache, "u", "p", &p).unwrap();
        assert!(!a.cache_hit && b.cache_hit);
        assert_eq!(a.reply_text, b.reply_text);
        assert_eq!(g.calls.load(Ordering::SeqCst), 1);
        assert_eq!(a.retries, 1);
        assert_eq!((b.temperature, b.max_tokens), (0.7, 64));
    }

    #[test]
    fn stub_reply_is_function_of_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentStore::open(dir.path()).unwrap();
        let g = EchoStub::new(endpoint("stub"));
        let p = prompt("some prompt");
        let rec = generate_reply(&g, &cache, "u", "p", &p).unwrap();
        assert_eq!(rec.reply_text.unwrap(), format!("stub reply {}", &sha256_hex("some prompt")[..16]));
    }

    #[test]
    fn long_replies_are_kept_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentStore::open(dir.path()).unwrap();
        let long = "x".repeat(350);
        let g = Counting {
            ep: endpoint("m"),
            calls: AtomicU32::new(0),
            reply: Ok(long.clone()),
        };
        let rec = generate_reply(&g, &cache, "u", "p", &prompt("q")).unwrap();
        assert_eq!(rec.reply_text.as_deref(), Some(long.as_str()));
    }

    #[test]
    fn exhausted_is_failed_record_and_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentStore::open(dir.path()).unwrap();
        let g = Counting {
            ep: endpoint("m"),
            calls: AtomicU32::new(0),
            reply: Err(PostError::Exhausted {
                attempts: 3,
                last: CallError::Transport("reset".into()),
            }),
        };
        let rec = generate_reply(&g, &cache, "u", "p", &prompt("q")).unwrap();
        assert!(rec.is_failed());
        assert_eq!(rec.retries, 2);
        assert!(cache.is_empty().unwrap());
    }

    #[test]
    fn fatal_errors_abort() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentStore::open(dir.path()).unwrap();
        let g = Counting {
            ep: endpoint("m"),
            calls: AtomicU32::new(0),
            reply: Err(PostError::Fatal(CallError::Rejected {
                status: 401,
                body: "bad key".into(),
            })),
        };
        assert!(matches!(
            generate_reply(&g, &cache, "u", "p", &prompt("q")),
            Err(PersonaError::Fatal { .. })
        ));
    }

    #[test]
    fn cache_key_depends_on_decoding_params() {
        let p = prompt("q");
        let a = endpoint("m");
        let mut b = a.clone();
        b.temperature = 0.0;
        let mut c = a.clone();
        c.max_tokens = 65;
        let ka = generation_cache_key(&a, Strategy::ZeroShot, &p);
        assert_ne!(ka, generation_cache_key(&b, Strategy::ZeroShot, &p));
        assert_ne!(ka, generation_cache_key(&c, Strategy::ZeroShot, &p));
        assert_ne!(ka, generation_cache_key(&a, Strategy::FewShot, &p));
        assert_eq!(ka, generation_cache_key(&a.clone(), Strategy::ZeroShot, &p));
    }

    #[test]
    fn endpoint_requires_decoding_params() {
        let missing = r#"model_id = "m"
temperature = 0.5"#;
        assert!(toml::from_str::<ModelEndpoint>(missing).is_err());
        let ok = r#"model_id = "m"
temperature = 0.5
max_tokens = 100
provider = "stub""#;
        let ep: ModelEndpoint = toml::from_str(ok).unwrap();
        assert_eq!(ep.provider, Provider::Stub);
        assert_eq!(ep.max_retries, 4);
    }

    #[test]
    fn reply_text_extraction() {
        assert_eq!(extract_text(&json!({"text": "a"})).as_deref(), Some("a"));
        assert_eq!(
            extract_text(&json!({"choices": [{"message": {"content": "b"}}]})).as_deref(),
            Some("b")
        );
        assert_eq!(extract_text(&json!({"other": 1})), None);
    }
}
