//! JSON-lines adapter for out-of-process model servers.
//!
//! One request object per line, one response object per line. Requests are
//! tagged by `verb` (`score`, `train_mlm`, `train_clf`, `predict`, `encode`,
//! `fit_encoder`) and name the model they act on with a [`ModelRef`]; a
//! server creates the model on first reference. Responses carry `ok` and
//! either a payload field or `error`.
//!
//! ```text
//! > {"verb":"predict","model":{"id":"clf-0","kind":"classifier","seed":7,"num_labels":2},"text":"a [SEP] b"}
//! < {"ok":true,"logits":[0.1,-0.3]}
//! ```
//!
//! [`ModelServer`] implements the server side on top of the toy backend; it is
//! what `pairshot serve-backend` runs and what the protocol tests talk to.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::toy::ToyBackend;
use super::{
    Backend, EmbeddingVector, MaskedScorer, SentenceEncoder, SequenceClassifier, TextPairTarget, TokenScores,
    TrainSchedule,
};
use crate::error::{Error, Result};
use crate::prompting::ClozeInput;

/// Environment variable holding `host:port` of a model server.
pub const BACKEND_ADDR_ENV: &str = "PAIRSHOT_BACKEND_ADDR";

/// Learning rate for large pre-trained networks behind the adapter.
pub const EXTERNAL_DEFAULT_LR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MaskedScorer,
    Classifier,
    Encoder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    pub id: String,
    pub kind: ModelKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_labels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmExample {
    pub cloze: ClozeInput,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftExample {
    pub text: String,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum Request {
    Score {
        model: ModelRef,
        cloze: ClozeInput,
        candidates: Vec<String>,
    },
    TrainMlm {
        model: ModelRef,
        data: Vec<MlmExample>,
        candidates: Vec<String>,
        schedule: TrainSchedule,
        #[serde(default = "one")]
        accumulation_steps: usize,
    },
    TrainClf {
        model: ModelRef,
        examples: Vec<SoftExample>,
        schedule: TrainSchedule,
        #[serde(default = "one")]
        accumulation_steps: usize,
    },
    Predict {
        model: ModelRef,
        text: String,
    },
    Encode {
        model: ModelRef,
        text: String,
    },
    FitEncoder {
        model: ModelRef,
        pairs: Vec<TextPairTarget>,
        schedule: TrainSchedule,
        #[serde(default = "one")]
        accumulation_steps: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Response {
    fn ok() -> Self {
        Self {
            ok: true,
            ..Default::default()
        }
    }

    fn err(e: impl std::fmt::Display) -> Self {
        Self {
            ok: false,
            error: Some(e.to_string()),
            ..Default::default()
        }
    }
}

/// Client-side settings that the protocol does not transmit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub separator: String,
    /// Known vocabulary for bind-time checks; `None` defers to the server.
    pub vocabulary: Option<Vec<String>>,
    pub embedding_dim: usize,
    pub lr: f64,
    /// Gradient accumulation steps per optimizer update, forwarded with each
    /// training request so the effective batch stays at `batch`.
    pub accumulation_steps: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            separator: "[SEP]".into(),
            vocabulary: None,
            embedding_dim: 1024,
            lr: EXTERNAL_DEFAULT_LR,
            accumulation_steps: 1,
        }
    }
}

trait Channel: Send {
    fn round_trip(&mut self, line: &str) -> std::io::Result<String>;
}

struct LineChannel<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead + Send, W: Write + Send> Channel for LineChannel<R, W> {
    fn round_trip(&mut self, line: &str) -> std::io::Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "model server closed the connection",
            ));
        }
        Ok(reply)
    }
}

struct ChildChannel {
    inner: LineChannel<BufReader<ChildStdout>, ChildStdin>,
    child: Child,
}

impl Channel for ChildChannel {
    fn round_trip(&mut self, line: &str) -> std::io::Result<String> {
        self.inner.round_trip(line)
    }
}

impl Drop for ChildChannel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Clone)]
struct Connection {
    channel: Arc<Mutex<Box<dyn Channel>>>,
}

impl Connection {
    fn call(&self, req: &Request) -> Result<Response> {
        let line = serde_json::to_string(req)?;
        let reply = {
            let mut ch = self
                .channel
                .lock()
                .map_err(|_| Error::Backend("channel poisoned".into()))?;
            ch.round_trip(&line)?
        };
        let resp: Response = serde_json::from_str(reply.trim_end())?;
        if !resp.ok {
            return Err(Error::Backend(
                resp.error.unwrap_or_else(|| "unspecified server error".into()),
            ));
        }
        Ok(resp)
    }
}

pub struct ExternalBackend {
    conn: Connection,
    config: ExternalConfig,
    next_id: AtomicU64,
    label: String,
}

impl ExternalBackend {
    pub fn connect_tcp(addr: impl ToSocketAddrs + std::fmt::Debug, config: ExternalConfig) -> Result<Self> {
        let label = format!("external:{addr:?}");
        let stream = TcpStream::connect(addr)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self::with_channel(
            Box::new(LineChannel { reader, writer: stream }),
            config,
            label,
        ))
    }

    /// Connect to the address in `PAIRSHOT_BACKEND_ADDR`.
    pub fn from_env(config: ExternalConfig) -> Result<Self> {
        let addr =
            std::env::var(BACKEND_ADDR_ENV).map_err(|_| Error::Backend(format!("{BACKEND_ADDR_ENV} is not set")))?;
        Self::connect_tcp(addr.as_str(), config)
    }

    /// Spawn `program args..` and talk to it over stdin/stdout.
    pub fn spawn(program: &str, args: &[String], config: ExternalConfig) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| Error::Backend("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| Error::Backend("no stdout".into()))?;
        let channel = ChildChannel {
            inner: LineChannel {
                reader: BufReader::new(stdout),
                writer: stdin,
            },
            child,
        };
        Ok(Self::with_channel(
            Box::new(channel),
            config,
            format!("external:{program}"),
        ))
    }

    fn with_channel(channel: Box<dyn Channel>, config: ExternalConfig, label: String) -> Self {
        Self {
            conn: Connection {
                channel: Arc::new(Mutex::new(channel)),
            },
            config,
            next_id: AtomicU64::new(0),
            label,
        }
    }

    fn model_ref(&self, kind: ModelKind, seed: u64, num_labels: Option<usize>) -> ModelRef {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let prefix = match kind {
            ModelKind::MaskedScorer => "mlm",
            ModelKind::Classifier => "clf",
            ModelKind::Encoder => "enc",
        };
        ModelRef {
            id: format!("{prefix}-{n}"),
            kind,
            seed,
            num_labels,
        }
    }
}

impl Backend for ExternalBackend {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn separator(&self) -> &str {
        &self.config.separator
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn default_lr(&self) -> f64 {
        self.config.lr
    }

    fn vocabulary_contains(&self, token: &str) -> bool {
        self.config
            .vocabulary
            .as_ref()
            .is_none_or(|v| v.iter().any(|t| t == token))
    }

    fn masked_scorer(&self, seed: u64) -> Result<Box<dyn MaskedScorer>> {
        Ok(Box::new(RemoteModel {
            conn: self.conn.clone(),
            model: self.model_ref(ModelKind::MaskedScorer, seed, None),
            accumulation_steps: self.config.accumulation_steps,
            dim: self.config.embedding_dim,
        }))
    }

    fn classifier(&self, num_labels: usize, seed: u64) -> Result<Box<dyn SequenceClassifier>> {
        Ok(Box::new(RemoteModel {
            conn: self.conn.clone(),
            model: self.model_ref(ModelKind::Classifier, seed, Some(num_labels)),
            accumulation_steps: self.config.accumulation_steps,
            dim: self.config.embedding_dim,
        }))
    }

    fn encoder(&self, seed: u64) -> Result<Box<dyn SentenceEncoder>> {
        Ok(Box::new(RemoteModel {
            conn: self.conn.clone(),
            model: self.model_ref(ModelKind::Encoder, seed, None),
            accumulation_steps: self.config.accumulation_steps,
            dim: self.config.embedding_dim,
        }))
    }
}

struct RemoteModel {
    conn: Connection,
    model: ModelRef,
    accumulation_steps: usize,
    dim: usize,
}

impl RemoteModel {
    fn reference(&self) -> serde_json::Value {
        serde_json::json!({ "external": self.model })
    }
}

impl MaskedScorer for RemoteModel {
    fn masked_score(&self, cloze: &ClozeInput, candidates: &[String]) -> Result<TokenScores> {
        let resp = self.conn.call(&Request::Score {
            model: self.model.clone(),
            cloze: cloze.clone(),
            candidates: candidates.to_vec(),
        })?;
        let scores = resp
            .scores
            .ok_or_else(|| Error::Backend("score reply without scores".into()))?;
        let out = TokenScores(scores);
        let ordered = out.ordered(candidates)?;
        if ordered.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("server returned a non-finite score".into()));
        }
        Ok(out)
    }

    fn train_mlm(
        &mut self,
        data: &[(ClozeInput, String)],
        candidates: &[String],
        schedule: &TrainSchedule,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::NoData);
        }
        self.conn.call(&Request::TrainMlm {
            model: self.model.clone(),
            data: data
                .iter()
                .map(|(c, t)| MlmExample {
                    cloze: c.clone(),
                    target: t.clone(),
                })
                .collect(),
            candidates: candidates.to_vec(),
            schedule: *schedule,
            accumulation_steps: self.accumulation_steps,
        })?;
        Ok(())
    }
}

impl SequenceClassifier for RemoteModel {
    fn num_labels(&self) -> usize {
        self.model.num_labels.unwrap_or(0)
    }

    fn classify_train(&mut self, examples: &[(String, Vec<f64>)], schedule: &TrainSchedule) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::NoData);
        }
        let n = self.num_labels();
        for (_, t) in examples {
            if t.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: t.len(),
                });
            }
            crate::data::check_distribution(t)?;
        }
        self.conn.call(&Request::TrainClf {
            model: self.model.clone(),
            examples: examples
                .iter()
                .map(|(text, target)| SoftExample {
                    text: text.clone(),
                    target: target.clone(),
                })
                .collect(),
            schedule: *schedule,
            accumulation_steps: self.accumulation_steps,
        })?;
        Ok(())
    }

    fn classify_predict(&self, text: &str) -> Result<Vec<f64>> {
        let resp = self.conn.call(&Request::Predict {
            model: self.model.clone(),
            text: text.to_string(),
        })?;
        let logits = resp
            .logits
            .ok_or_else(|| Error::Backend("predict reply without logits".into()))?;
        if logits.len() != self.num_labels() {
            return Err(Error::Shape {
                expected: self.num_labels(),
                got: logits.len(),
            });
        }
        Ok(logits)
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        Ok(self.reference())
    }
}

impl SentenceEncoder for RemoteModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        let resp = self.conn.call(&Request::Encode {
            model: self.model.clone(),
            text: text.to_string(),
        })?;
        let e = resp
            .embedding
            .ok_or_else(|| Error::Backend("encode reply without embedding".into()))?;
        if e.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: e.len(),
            });
        }
        Ok(e)
    }

    fn encoder_fit(&mut self, pairs: &[TextPairTarget], schedule: &TrainSchedule) -> Result<()> {
        if schedule.steps == 0 {
            return Ok(());
        }
        self.conn.call(&Request::FitEncoder {
            model: self.model.clone(),
            pairs: pairs.to_vec(),
            schedule: *schedule,
            accumulation_steps: self.accumulation_steps,
        })?;
        Ok(())
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        Ok(self.reference())
    }
}

enum ServerModel {
    Scorer(Box<dyn MaskedScorer>),
    Classifier(Box<dyn SequenceClassifier>),
    Encoder(Box<dyn SentenceEncoder>),
}

/// Server side of the protocol, backed by any in-process [`Backend`].
pub struct ModelServer {
    backend: Box<dyn Backend>,
    models: HashMap<String, ServerModel>,
}

impl ModelServer {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Self {
            backend,
            models: HashMap::new(),
        }
    }

    pub fn toy() -> Self {
        Self::new(Box::new(ToyBackend::default()))
    }

    fn model(&mut self, r: &ModelRef) -> Result<&mut ServerModel> {
        if !self.models.contains_key(&r.id) {
            let m = match r.kind {
                ModelKind::MaskedScorer => ServerModel::Scorer(self.backend.masked_scorer(r.seed)?),
                ModelKind::Classifier => {
                    let n = r
                        .num_labels
                        .ok_or_else(|| Error::Backend("classifier reference without num_labels".into()))?;
                    ServerModel::Classifier(self.backend.classifier(n, r.seed)?)
                }
                ModelKind::Encoder => ServerModel::Encoder(self.backend.encoder(r.seed)?),
            };
            self.models.insert(r.id.clone(), m);
        }
        Ok(self.models.get_mut(&r.id).expect("inserted"))
    }

    fn kind_error(r: &ModelRef) -> Error {
        Error::Backend(format!("model {} is not usable for this verb ({:?})", r.id, r.kind))
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match self.dispatch(req) {
            Ok(r) => r,
            Err(e) => Response::err(e),
        }
    }

    fn dispatch(&mut self, req: Request) -> Result<Response> {
        match req {
            Request::Score {
                model,
                cloze,
                candidates,
            } => match self.model(&model)? {
                ServerModel::Scorer(s) => Ok(Response {
                    scores: Some(s.masked_score(&cloze, &candidates)?.0),
                    ..Response::ok()
                }),
                _ => Err(Self::kind_error(&model)),
            },
            Request::TrainMlm {
                model,
                data,
                candidates,
                schedule,
                ..
            } => match self.model(&model)? {
                ServerModel::Scorer(s) => {
                    let data: Vec<(ClozeInput, String)> = data.into_iter().map(|e| (e.cloze, e.target)).collect();
                    s.train_mlm(&data, &candidates, &schedule)?;
                    Ok(Response::ok())
                }
                _ => Err(Self::kind_error(&model)),
            },
            Request::TrainClf {
                model,
                examples,
                schedule,
                ..
            } => match self.model(&model)? {
                ServerModel::Classifier(c) => {
                    let ex: Vec<(String, Vec<f64>)> = examples.into_iter().map(|e| (e.text, e.target)).collect();
                    c.classify_train(&ex, &schedule)?;
                    Ok(Response::ok())
                }
                _ => Err(Self::kind_error(&model)),
            },
            Request::Predict { model, text } => match self.model(&model)? {
                ServerModel::Classifier(c) => Ok(Response {
                    logits: Some(c.classify_predict(&text)?),
                    ..Response::ok()
                }),
                _ => Err(Self::kind_error(&model)),
            },
            Request::Encode { model, text } => match self.model(&model)? {
                ServerModel::Encoder(e) => Ok(Response {
                    embedding: Some(e.encode(&text)?),
                    ..Response::ok()
                }),
                _ => Err(Self::kind_error(&model)),
            },
            Request::FitEncoder {
                model, pairs, schedule, ..
            } => match self.model(&model)? {
                ServerModel::Encoder(e) => {
                    e.encoder_fit(&pairs, &schedule)?;
                    Ok(Response::ok())
                }
                _ => Err(Self::kind_error(&model)),
            },
        }
    }

    /// Serve one line-delimited stream until EOF.
    pub fn serve<R: BufRead, W: Write>(&mut self, reader: R, mut writer: W) -> std::io::Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let resp = match serde_json::from_str::<Request>(&line) {
                Ok(req) => self.handle(req),
                Err(e) => Response::err(format!("bad request: {e}")),
            };
            serde_json::to_writer(&mut writer, &resp)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(())
    }
}

/// Accept connections forever, one thread per connection, sharing models.
pub fn serve_tcp(listener: TcpListener, server: ModelServer) -> std::io::Result<()> {
    let shared = Arc::new(Mutex::new(server));
    for stream in listener.incoming() {
        let stream = stream?;
        let shared = shared.clone();
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => {
                    log::warn!("connection setup failed: {e}");
                    return;
                }
            };
            let mut writer = stream;
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let resp = match serde_json::from_str::<Request>(&line) {
                    Ok(req) => match shared.lock() {
                        Ok(mut s) => s.handle(req),
                        Err(_) => Response::err("server state poisoned"),
                    },
                    Err(e) => Response::err(format!("bad request: {e}")),
                };
                let mut out = match serde_json::to_vec(&resp) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                out.push(b'\n');
                if writer.write_all(&out).and_then(|_| writer.flush()).is_err() {
                    break;
                }
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_shape() {
        let r = Request::Predict {
            model: ModelRef {
                id: "clf-0".into(),
                kind: ModelKind::Classifier,
                seed: 7,
                num_labels: Some(2),
            },
            text: "a [SEP] b".into(),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"verb":"predict","model":{"id":"clf-0","kind":"classifier","seed":7,"num_labels":2},"text":"a [SEP] b"}"#
        );
    }

    #[test]
    fn server_reports_errors_in_band() {
        let mut s = ModelServer::toy();
        let mut out = Vec::new();
        s.serve("not json\n".as_bytes(), &mut out).unwrap();
        let resp: Response = serde_json::from_slice(&out).unwrap();
        assert!(!resp.ok);
        assert!(resp.error.unwrap().starts_with("bad request"));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let mut s = ModelServer::toy();
        let model = ModelRef {
            id: "e".into(),
            kind: ModelKind::Encoder,
            seed: 0,
            num_labels: None,
        };
        let resp = s.handle(Request::Predict {
            model,
            text: "x".into(),
        });
        assert!(!resp.ok);
    }
}
