//! HTTP clients for the model adapter service.
//!
//! Endpoints (all JSON over POST, plus `GET /health`):
//!
//! - `/transmute`: `{words, mask_indices, num_candidates}` → `{candidates: [{replaced: {index: word}, score}]}`
//! - `/generate`: `{prompt, seed}` → `{image_ref}`
//! - `/classify`: `{image_ref, group_texts}` → `{scores}`
//! - `/sample_group`: `{prompt, num_samples, base_seed, group_texts}` → `{labels, scores}`
//!
//! Transport failures and 5xx/429 responses are retried with exponential
//! backoff; other 4xx responses and malformed bodies are protocol errors.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wordsway_core::sampler::argmax_group;
use wordsway_core::transmute::{check_mask, sanitize_candidates};
use wordsway_core::{
    Error, GroupDraw, GroupSampler, GroupSpace, Prompt, TransmutationCandidate, Transmuter,
    TransmuterConfig, WordSet,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransmuteRequest {
    pub words: Vec<String>,
    pub mask_indices: Vec<usize>,
    pub num_candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransmuteResponse {
    pub candidates: Vec<WireCandidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WireCandidate {
    pub replaced: BTreeMap<usize, String>,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateRequest {
    pub prompt: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateResponse {
    pub image_ref: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassifyRequest {
    pub image_ref: String,
    pub group_texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassifyResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleGroupRequest {
    pub prompt: String,
    pub num_samples: u32,
    pub base_seed: u64,
    pub group_texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleGroupResponse {
    pub labels: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
enum Endpoint {
    Transmute,
    Generate,
    Classify,
    SampleGroup,
}

impl Endpoint {
    fn path(self) -> &'static str {
        match self {
            Endpoint::Transmute => "/transmute",
            Endpoint::Generate => "/generate",
            Endpoint::Classify => "/classify",
            Endpoint::SampleGroup => "/sample_group",
        }
    }

    fn unavailable(self, msg: String) -> Error {
        match self {
            Endpoint::Transmute => Error::TransmuterUnavailable(msg),
            Endpoint::Generate | Endpoint::SampleGroup => Error::GeneratorUnavailable(msg),
            Endpoint::Classify => Error::ClassifierUnavailable(msg),
        }
    }
}

/// Blocking client for one adapter base URL. Cheap to clone; safe to share
/// across threads.
#[derive(Clone)]
pub struct AdapterClient {
    base_url: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl AdapterClient {
    pub fn new(base_url: &str, timeout: Duration, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        AdapterClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            retries,
            backoff: Duration::from_millis(50),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        endpoint: Endpoint,
        body: &B,
    ) -> Result<R, Error> {
        let url = format!("{}{}", self.base_url, endpoint.path());
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let mut resp = match self.agent.post(&url).send_json(body) {
                Ok(r) => r,
                Err(e) => {
                    last = format!("{url}: {e}");
                    continue;
                }
            };
            let status = resp.status().as_u16();
            if status >= 500 || status == 429 {
                last = format!("{url}: HTTP {status}");
                continue;
            }
            if status >= 400 {
                let detail = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(Error::Protocol(format!("{url}: HTTP {status} {detail}")));
            }
            return resp
                .body_mut()
                .read_json::<R>()
                .map_err(|e| Error::Protocol(format!("{url}: bad response body: {e}")));
        }
        Err(endpoint.unavailable(format!("{last} (after {} attempts)", self.retries + 1)))
    }

    pub fn health(&self) -> Result<serde_json::Value, Error> {
        let url = format!("{}/health", self.base_url);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| Error::GeneratorUnavailable(format!("{url}: {e}")))?;
        resp.body_mut()
            .read_json()
            .map_err(|e| Error::Protocol(format!("{url}: {e}")))
    }

    pub fn transmute(&self, req: &TransmuteRequest) -> Result<TransmuteResponse, Error> {
        self.post(Endpoint::Transmute, req)
    }

    pub fn generate(&self, prompt: &str, seed: u64) -> Result<String, Error> {
        let resp: GenerateResponse = self.post(
            Endpoint::Generate,
            &GenerateRequest {
                prompt: prompt.to_string(),
                seed,
            },
        )?;
        Ok(resp.image_ref)
    }

    pub fn classify(&self, image_ref: &str, group_texts: &[String]) -> Result<Vec<f64>, Error> {
        let resp: ClassifyResponse = self.post(
            Endpoint::Classify,
            &ClassifyRequest {
                image_ref: image_ref.to_string(),
                group_texts: group_texts.to_vec(),
            },
        )?;
        Ok(resp.scores)
    }

    /// Composed generate-and-classify batch on the adapter side.
    pub fn sample_group(
        &self,
        prompt: &str,
        num_samples: u32,
        base_seed: u64,
        group_space: &GroupSpace,
    ) -> Result<Vec<(String, Vec<f64>)>, Error> {
        let resp: SampleGroupResponse = self.post(
            Endpoint::SampleGroup,
            &SampleGroupRequest {
                prompt: prompt.to_string(),
                num_samples,
                base_seed,
                group_texts: group_space.texts().to_vec(),
            },
        )?;
        if resp.labels.len() != num_samples as usize || resp.scores.len() != resp.labels.len() {
            return Err(Error::Protocol(format!(
                "asked for {num_samples} samples, got {} labels and {} score rows",
                resp.labels.len(),
                resp.scores.len()
            )));
        }
        resp.labels
            .into_iter()
            .zip(resp.scores)
            .map(|(label, scores)| {
                if group_space.index_of(&label).is_none() || scores.len() != group_space.len() {
                    return Err(Error::Protocol(format!(
                        "bad sample {label:?} with {} scores",
                        scores.len()
                    )));
                }
                Ok((label, scores))
            })
            .collect()
    }
}

/// Classifies a stored image: the label is the argmax of the returned scores,
/// ties resolved by group order.
pub fn classify_remote(
    client: &AdapterClient,
    image_ref: &str,
    group_space: &GroupSpace,
) -> Result<(String, Vec<f64>), Error> {
    let scores = client.classify(image_ref, group_space.texts())?;
    let g = argmax_group(&scores, group_space)?;
    Ok((group_space.label(g).to_string(), scores))
}

/// Masked-LM transmuter behind `/transmute`.
pub struct RemoteTransmuter {
    client: AdapterClient,
}

impl RemoteTransmuter {
    pub fn new(client: AdapterClient) -> Self {
        RemoteTransmuter { client }
    }
}

impl Transmuter for RemoteTransmuter {
    fn backend_id(&self) -> String {
        format!("remote:{}", self.client.base_url())
    }

    fn propose(
        &self,
        prompt: &Prompt,
        mask: &WordSet,
        config: &TransmuterConfig,
    ) -> Result<Vec<TransmutationCandidate>, Error> {
        config.validate()?;
        check_mask(prompt, mask)?;
        let resp = self.client.transmute(&TransmuteRequest {
            words: prompt.words().to_vec(),
            mask_indices: mask.indices().to_vec(),
            num_candidates: config.num_candidates,
        })?;
        let candidates = resp
            .candidates
            .into_iter()
            .map(|c| {
                let replaced = c
                    .replaced
                    .into_iter()
                    .map(|(i, w)| (i, w.to_lowercase()))
                    .collect();
                TransmutationCandidate::new(prompt.id(), replaced, c.score)
            })
            .collect();
        sanitize_candidates(prompt, mask, candidates, config)
    }
}

/// Generator plus classifier behind `/generate` and `/classify`.
pub struct RemoteSampler {
    client: AdapterClient,
    groups: GroupSpace,
}

impl RemoteSampler {
    pub fn new(client: AdapterClient, groups: GroupSpace) -> Self {
        RemoteSampler { client, groups }
    }
}

impl GroupSampler for RemoteSampler {
    fn group_space(&self) -> &GroupSpace {
        &self.groups
    }

    fn backend_id(&self) -> String {
        format!("remote:{}", self.client.base_url())
    }

    fn sample(&self, words: &[String], seed: u64) -> Result<GroupDraw, Error> {
        let image_ref = self.client.generate(&words.join(" "), seed)?;
        let scores = self.client.classify(&image_ref, self.groups.texts())?;
        let group = argmax_group(&scores, &self.groups)?;
        Ok(GroupDraw {
            group,
            scores: Some(scores),
            image_ref: Some(image_ref),
        })
    }
}
