//! Line-delimited JSON protocol. One request object per line, one response
//! object per line.
//!
//! ```text
//! {"cmd":"reset","env":"function","seed":1}
//! {"session_id":"s1","task_id":"function:1","observation":"...","reward":0.0,"done":false,"turn":0,"remaining_budget":15}
//! {"cmd":"step","choice":"search","content":"test input"}
//! {"observation":"test input: 1 2 3 4","reward":0.0,"done":false,"turn":1,"remaining_budget":14}
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::env::{EnvKind, EnvSuite};
use crate::mdp::{ActionKind, ActionRecord, Episode, Trajectory};
use crate::shaping::{shape, ShapingConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub cmd: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetResponse {
    pub session_id: String,
    pub task_id: String,
    pub observation: String,
    pub reward: f64,
    pub done: bool,
    pub turn: usize,
    pub remaining_budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub observation: String,
    pub reward: f64,
    pub done: bool,
    pub turn: usize,
    pub remaining_budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NoSession,
    EpisodeDone,
    ParseError,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::NoSession => "no_session",
            ErrorCode::EpisodeDone => "episode_done",
            ErrorCode::ParseError => "parse_error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorCode,
    pub message: String,
}

/// Any response line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Reset(ResetResponse),
    Step(StepResponse),
    Error(ErrorResponse),
}

impl Response {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses serialize")
    }

    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Response::Error(ErrorResponse { error: code, message: message.into() })
    }
}

/// Append-only trajectory log shared by all sessions; flushed per line.
pub struct TrajectoryLog {
    out: Mutex<BufWriter<File>>,
}

impl TrajectoryLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: Mutex::new(BufWriter::new(file)) })
    }

    pub fn append(&self, traj: &Trajectory) -> std::io::Result<()> {
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(out, "{}", traj.to_json_line())?;
        out.flush()
    }
}

/// State shared by every connection of one server.
pub struct ServerContext {
    pub suite: EnvSuite,
    pub shaping: ShapingConfig,
    pub log: Option<TrajectoryLog>,
    next_session: AtomicU64,
}

impl ServerContext {
    pub fn new(suite: EnvSuite, shaping: ShapingConfig, log: Option<TrajectoryLog>) -> Arc<Self> {
        Arc::new(Self { suite, shaping, log, next_session: AtomicU64::new(1) })
    }
}

/// One connection's protocol state: at most one live episode.
pub struct Session {
    ctx: Arc<ServerContext>,
    id: Option<String>,
    episode: Option<Episode>,
    logged: bool,
}

impl Session {
    pub fn new(ctx: Arc<ServerContext>) -> Self {
        Self { ctx, id: None, episode: None, logged: false }
    }

    pub fn session_id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    /// Handles one request line and returns the response line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Response::error(ErrorCode::ParseError, e.to_string()),
        };
        response.to_line()
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match req.cmd.as_str() {
            "reset" => self.reset(req),
            "step" => self.step(req),
            "close" => self.close(),
            other => Response::error(ErrorCode::BadRequest, format!("unknown cmd `{other}` (reset|step|close)")),
        }
    }

    fn reset(&mut self, req: Request) -> Response {
        let task_id = match (&req.task_id, &req.env, req.seed) {
            (Some(t), _, _) => t.clone(),
            (None, Some(env), Some(seed)) => match env.parse::<EnvKind>() {
                Ok(kind) => kind.task_id(seed),
                Err(e) => return Response::error(ErrorCode::BadRequest, e),
            },
            _ => return Response::error(ErrorCode::BadRequest, "reset needs task_id, or env and seed"),
        };
        let env = match self.ctx.suite.from_task_id(&task_id) {
            Ok(env) => env,
            Err(e) => return Response::error(ErrorCode::BadRequest, e.to_string()),
        };
        let budget = req.budget.unwrap_or(env.default_budget());
        if budget == 0 {
            return Response::error(ErrorCode::BadRequest, "budget must be positive");
        }
        self.finish();
        let id = format!("s{}", self.ctx.next_session.fetch_add(1, Ordering::Relaxed));
        let episode = Episode::new(env, budget);
        let response = ResetResponse {
            session_id: id.clone(),
            task_id,
            observation: episode.intro().to_string(),
            reward: 0.0,
            done: false,
            turn: 0,
            remaining_budget: budget,
        };
        self.id = Some(id);
        self.episode = Some(episode);
        self.logged = false;
        Response::Reset(response)
    }

    fn step(&mut self, req: Request) -> Response {
        let Some(episode) = self.episode.as_mut() else {
            return Response::error(ErrorCode::NoSession, "send reset first");
        };
        let Some(choice) = req.choice.as_deref() else {
            return Response::error(ErrorCode::BadRequest, "step needs choice (action|answer|search)");
        };
        let Some(kind) = ActionKind::from_choice(choice) else {
            return Response::error(ErrorCode::BadRequest, format!("unknown choice `{choice}` (action|answer|search)"));
        };
        if episode.is_done() {
            return Response::error(ErrorCode::EpisodeDone, "episode is finished; reset to start another");
        }
        let turn = episode.step(ActionRecord::new(kind, req.content.unwrap_or_default())).expect("checked not done");
        let (observation, reward, index) = (turn.observation.clone(), turn.raw_reward, turn.index);
        let response = StepResponse {
            observation,
            reward,
            done: episode.is_done(),
            turn: index,
            remaining_budget: episode.remaining(),
        };
        if episode.is_done() {
            self.log_current();
        }
        Response::Step(response)
    }

    fn close(&mut self) -> Response {
        let Some(episode) = self.episode.as_mut() else {
            return Response::error(ErrorCode::NoSession, "no open session");
        };
        episode.stop();
        let response = StepResponse {
            observation: "closed".into(),
            reward: 0.0,
            done: true,
            turn: episode.turn(),
            remaining_budget: episode.remaining(),
        };
        self.finish();
        self.id = None;
        Response::Step(response)
    }

    fn log_current(&mut self) {
        if self.logged {
            return;
        }
        let (Some(log), Some(episode)) = (self.ctx.log.as_ref(), self.episode.as_ref()) else { return };
        if episode.turns().is_empty() {
            return;
        }
        let traj = episode.snapshot();
        let budget = traj.budget;
        if let Err(e) = log.append(&shape(traj, &self.ctx.shaping, budget)) {
            eprintln!("trajectory log write failed: {e}");
        }
        self.logged = true;
    }

    /// Logs the open episode (stopping it if still running) and drops it.
    pub fn finish(&mut self) {
        if let Some(episode) = self.episode.as_mut() {
            episode.stop();
            self.log_current();
        }
        self.episode = None;
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.finish();
    }
}
