//! Chat-completion providers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4-turbo-preview";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("chat provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("chat provider rejected credentials: {0}")]
    AuthError(String),
    #[error("unexpected chat response: {0}")]
    BadResponse(String),
}

impl ChatError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ChatError::ProviderUnavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: &str) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.to_string(),
        }
    }

    pub fn user(content: &str) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.to_string(),
        }
    }

    pub fn assistant(content: &str) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.to_string(),
        }
    }
}

/// A chat-completion endpoint, always sampled at temperature 0.
pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        (**self).complete(messages)
    }
}

impl<T: ChatProvider + ?Sized> ChatProvider for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        (**self).complete(messages)
    }
}

/// Offline provider whose replies are a pure function of the conversation.
///
/// Precedent prompts get "relevant"/"not relevant" (and, for about one in
/// twenty conversations, an unparseable hedge); rule prompts get a keep/remove
/// or 1..=5 verdict depending on which the system prompt asks for.
#[derive(Debug, Clone)]
pub struct FakeChat {
    model_id: String,
}

impl Default for FakeChat {
    fn default() -> Self {
        FakeChat {
            model_id: "fake-chat".into(),
        }
    }
}

impl FakeChat {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ChatProvider for FakeChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        let mut h = Sha256::new();
        for m in messages {
            h.update(serde_json::to_vec(m).expect("message serializes"));
        }
        let digest = h.finalize();
        let n = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let last = messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let system = messages.first().map(|m| m.content.as_str()).unwrap_or("");
        let reply = if last.contains("Answer with \"relevant\"") {
            match n % 20 {
                0 => "It depends on how strictly the community reads its own norms.".to_string(),
                x if x % 2 == 1 => "The two share the key aspect.\n\nrelevant".to_string(),
                _ => "A critical aspect differs.\n\nnot relevant".to_string(),
            }
        } else if system.contains("\"keep\" or \"remove\"") {
            let d = if n % 2 == 0 { "keep" } else { "remove" };
            format!("Checked each rule against the comment.\n\nFinal decision: {d}")
        } else {
            format!("Checked each indicator against the content.\n\nRating: {}", n % 5 + 1)
        };
        Ok(reply)
    }
}

/// Provider backed by a closure, for tests and canned transcripts.
pub struct ScriptedChat<F> {
    reply: F,
}

impl<F> ScriptedChat<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, ChatError> + Send + Sync,
{
    pub fn new(reply: F) -> Self {
        ScriptedChat { reply }
    }
}

impl<F> ChatProvider for ScriptedChat<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, ChatError> + Send + Sync,
{
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        (self.reply)(messages)
    }
}

#[cfg(feature = "http")]
pub use openai::OpenAiChat;

#[cfg(feature = "http")]
mod openai {
    use std::time::Duration;

    use reqwest::blocking::Client;
    use reqwest::StatusCode;
    use serde::{Deserialize, Serialize};

    use super::{ChatError, ChatMessage, ChatProvider};

    /// Client for OpenAI-compatible `/chat/completions` endpoints.
    pub struct OpenAiChat {
        client: Client,
        base_url: String,
        api_key: String,
        model_id: String,
    }

    #[derive(Serialize)]
    struct Request<'a> {
        model: &'a str,
        messages: &'a [ChatMessage],
        temperature: f64,
    }

    #[derive(Deserialize)]
    struct Response {
        choices: Vec<Choice>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: Content,
    }

    #[derive(Deserialize)]
    struct Content {
        content: Option<String>,
    }

    impl OpenAiChat {
        pub fn new(model_id: &str, api_key: String, base_url: Option<&str>) -> Self {
            OpenAiChat {
                client: Client::builder()
                    .timeout(Duration::from_secs(300))
                    .build()
                    .expect("http client"),
                base_url: base_url
                    .unwrap_or(crate::embedding::OPENAI_BASE_URL)
                    .trim_end_matches('/')
                    .to_string(),
                api_key,
                model_id: model_id.to_string(),
            }
        }

        pub fn from_env(model_id: &str, base_url: Option<&str>) -> Result<Self, ChatError> {
            let var = crate::embedding::OPENAI_API_KEY_ENV;
            let key = std::env::var(var).map_err(|_| ChatError::AuthError(format!("{var} is not set")))?;
            Ok(Self::new(model_id, key, base_url))
        }
    }

    impl ChatProvider for OpenAiChat {
        fn model_id(&self) -> &str {
            &self.model_id
        }

        fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
            let resp = self
                .client
                .post(format!("{}/chat/completions", self.base_url))
                .bearer_auth(&self.api_key)
                .json(&Request {
                    model: &self.model_id,
                    messages,
                    temperature: 0.0,
                })
                .send()
                .map_err(|e| ChatError::ProviderUnavailable(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                let body = resp.text().unwrap_or_default();
                return Err(
                    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                        ChatError::AuthError(body)
                    } else if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                        ChatError::ProviderUnavailable(format!("{status}: {body}"))
                    } else {
                        ChatError::BadResponse(format!("{status}: {body}"))
                    },
                );
            }
            let body: Response = resp
                .json()
                .map_err(|e| ChatError::BadResponse(e.to_string()))?;
            body.choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| ChatError::BadResponse("no choices".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fake_chat_is_deterministic() {
        let m = vec![ChatMessage::system("s"), ChatMessage::user("Answer with \"relevant\" ...")];
        let c = FakeChat::new();
        assert_eq!(c.complete(&m).unwrap(), c.complete(&m).unwrap());
    }
}
