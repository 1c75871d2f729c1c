//! WebSocket game server.
//!
//! Participants connect to `/ws` and send `join`. The lobby (one mutex
//! around the matchmaker) pairs them; each game then runs on its own task,
//! which serialises that game's inputs, makes every accepted event durable
//! and only then emits the resulting frames. Games share no mutable state
//! except the log store and the lobby.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use photobook::gameset::GameSetFile;
use photobook::protocol::{codes, ClientFrame, Outbound, ServerFrame, Session};
use photobook::{GameRef, LogStore, MatchConfig, MatchResult, Matchmaker, Player, Variant};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub seed: u64,
    pub match_config: MatchConfig,
    pub images_dir: Option<PathBuf>,
    /// How often the lobby retries matching (for patience timeouts).
    pub match_interval: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            seed: 0,
            match_config: MatchConfig::default(),
            images_dir: None,
            match_interval: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("game set catalogue is empty")]
    EmptyCatalog,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

enum Outgoing {
    Text(String),
    Close,
}

enum GameInput {
    Frame(Player, String),
    Disconnect(Player),
}

struct Assignment {
    role: Player,
    inbox: mpsc::UnboundedSender<GameInput>,
}

struct Waiting {
    assign: oneshot::Sender<Assignment>,
    out: mpsc::UnboundedSender<Outgoing>,
}

struct Lobby {
    matchmaker: Matchmaker,
    waiting: HashMap<String, Waiting>,
    playing: HashSet<String>,
    games_started: u64,
}

pub struct AppState {
    config: ServerConfig,
    catalog: GameSetFile,
    lobby: Mutex<Lobby>,
    store: Mutex<LogStore>,
}

impl AppState {
    pub fn new(catalog: GameSetFile, store: LogStore, config: ServerConfig) -> Result<Arc<Self>, ServerError> {
        if catalog.sets.is_empty() {
            return Err(ServerError::EmptyCatalog);
        }
        let refs: Vec<GameRef> = catalog
            .sets
            .iter()
            .flat_map(|s| Variant::BOTH.map(|v| GameRef::new(s.set_id, v)))
            .collect();
        Ok(Arc::new(AppState {
            lobby: Mutex::new(Lobby {
                matchmaker: Matchmaker::new(refs, config.match_config),
                waiting: HashMap::new(),
                playing: HashSet::new(),
                games_started: 0,
            }),
            catalog,
            store: Mutex::new(store),
            config,
        }))
    }

    /// Games started since launch.
    pub fn games_started(&self) -> u64 {
        self.lobby.lock().unwrap().games_started
    }

    /// Pairs as many queued workers as possible and starts their games.
    fn try_match(self: &Arc<Self>) {
        let mut lobby = self.lobby.lock().unwrap();
        while let Some(m) = lobby.matchmaker.match_pair(now_ms()) {
            let (Some(a), Some(b)) = (lobby.waiting.remove(&m.worker_a), lobby.waiting.remove(&m.worker_b)) else {
                tracing::error!(?m, "matched worker without a connection");
                continue;
            };
            lobby.games_started += 1;
            let counter = lobby.games_started;
            let index = [&m.worker_a, &m.worker_b].map(|w| {
                lobby.matchmaker.profile(w).map_or(0, |p| p.games_completed) + 1
            });
            lobby.playing.insert(m.worker_a.clone());
            lobby.playing.insert(m.worker_b.clone());
            let app = Arc::clone(self);
            tokio::spawn(async move { app.run_game(m, counter, index, [a, b]).await });
        }
    }

    async fn run_game(self: Arc<Self>, m: MatchResult, counter: u64, index: [u32; 2], conns: [Waiting; 2]) {
        let set = self.catalog.set(m.game.set_id).expect("catalogue holds every matched set");
        let mut spec = set.variant(m.game.variant).shuffled(self.config.seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        spec.game_id = format!("{}-{counter:06}", m.game);
        if m.warmup {
            spec = spec.with_warmup();
        }
        let game_id = spec.game_id.clone();
        let uris: BTreeMap<_, _> = set.images.iter().map(|i| (i.image_id, i.display_uri.clone())).collect();
        let started = now_ms();
        if let Err(e) = self.store.lock().unwrap().create_game(&spec, [&m.worker_a, &m.worker_b], started) {
            tracing::error!(%game_id, error = %e, "cannot open game log");
        }
        let mut session = Session::new(spec, uris, index, started);
        let (inbox_tx, mut inbox) = mpsc::unbounded_channel();
        let [a, b] = conns;
        let outs = [a.out, b.out];
        for (role, assign) in [(Player::A, a.assign), (Player::B, b.assign)] {
            if assign.send(Assignment { role, inbox: inbox_tx.clone() }).is_err() {
                let _ = inbox_tx.send(GameInput::Disconnect(role));
            }
        }
        drop(inbox_tx);
        let tokens = [(); 2].map(|_| format!("{:016x}", rand::random::<u64>()));
        let send = |outbound: Vec<(Player, Outbound)>| {
            for (p, o) in outbound {
                let _ = outs[p.index()].send(Outgoing::Text(o.to_json()));
            }
        };
        send(session.open(tokens));
        tracing::info!(%game_id, a = %m.worker_a, b = %m.worker_b, "game started");
        loop {
            let routed = match inbox.recv().await {
                Some(GameInput::Frame(p, text)) => session.route(p, &text, now_ms()),
                Some(GameInput::Disconnect(p)) => session.disconnect(p, now_ms()),
                None => session.disconnect(Player::A, now_ms()),
            };
            if let Some(event) = &routed.event {
                if let Err(e) = self.store.lock().unwrap().append_event(&game_id, event) {
                    tracing::error!(%game_id, error = %e, "event not persisted");
                }
            }
            send(routed.outbound);
            if routed.finished {
                break;
            }
        }
        let completed = session.state().phase == photobook::Phase::Done;
        if let Err(e) = self.store.lock().unwrap().close_game(&game_id) {
            tracing::error!(%game_id, error = %e, "cannot close game log");
        }
        {
            let mut lobby = self.lobby.lock().unwrap();
            for w in [&m.worker_a, &m.worker_b] {
                lobby.playing.remove(w.as_str());
                if completed {
                    lobby.matchmaker.record_completion(w);
                }
            }
        }
        for out in &outs {
            let _ = out.send(Outgoing::Close);
        }
        tracing::info!(%game_id, completed, score = session.state().score(), "game finished");
    }
}

fn lobby_frame(frame: ServerFrame) -> Outgoing {
    Outgoing::Text(Outbound { seq: 0, frame }.to_json())
}

async fn handle_socket(socket: WebSocket, app: Arc<AppState>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Outgoing>();
    let writer = tokio::spawn(async move {
        while let Some(o) = out_rx.recv().await {
            match o {
                Outgoing::Text(t) => {
                    if sink.send(Message::Text(t.into())).await.is_err() {
                        break;
                    }
                }
                Outgoing::Close => {
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
            }
        }
    });

    // Lobby: the only accepted frame is `join`.
    let worker = loop {
        let Some(Ok(msg)) = stream.next().await else { return };
        let Message::Text(text) = msg else {
            if matches!(msg, Message::Close(_)) {
                return;
            }
            continue;
        };
        match serde_json::from_str::<ClientFrame>(&text) {
            Ok(ClientFrame::Join { worker_id }) if !worker_id.is_empty() => break worker_id,
            Ok(_) => {
                let _ = out_tx.send(lobby_frame(ServerFrame::error(codes::NOT_IN_GAME, "join first")));
            }
            Err(e) => {
                let _ = out_tx.send(lobby_frame(ServerFrame::error(codes::BAD_FRAME, e.to_string())));
            }
        }
    };
    let (assign_tx, mut assign_rx) = oneshot::channel();
    let eligible = {
        let mut lobby = app.lobby.lock().unwrap();
        let ok = !lobby.playing.contains(&worker) && lobby.matchmaker.join(&worker, now_ms());
        if ok {
            lobby.waiting.insert(worker.clone(), Waiting { assign: assign_tx, out: out_tx.clone() });
        }
        ok
    };
    if !eligible {
        let _ = out_tx.send(lobby_frame(ServerFrame::error(
            codes::NOT_ELIGIBLE,
            "game limit reached, already queued or already playing",
        )));
        let _ = out_tx.send(Outgoing::Close);
        let _ = writer.await;
        return;
    }
    let _ = out_tx.send(lobby_frame(ServerFrame::Queued));
    app.try_match();

    let assignment = loop {
        tokio::select! {
            a = &mut assign_rx => match a {
                Ok(a) => break Some(a),
                Err(_) => break None,
            },
            msg = stream.next() => match msg {
                Some(Ok(Message::Text(_))) => {
                    let _ = out_tx.send(lobby_frame(ServerFrame::error(codes::NOT_IN_GAME, "waiting for a partner")));
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break None,
                Some(Ok(_)) => {}
            },
        }
    };
    let Some(Assignment { role, inbox }) = assignment else {
        let mut lobby = app.lobby.lock().unwrap();
        lobby.matchmaker.leave(&worker);
        lobby.waiting.remove(&worker);
        return;
    };
    drop(out_tx);
    while let Some(msg) = stream.next().await {
        match msg {
            Ok(Message::Text(text)) => {
                if inbox.send(GameInput::Frame(role, text.to_string())).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let _ = inbox.send(GameInput::Disconnect(role));
    let _ = writer.await;
}

async fn ws_route(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| handle_socket(socket, app))
}

async fn image_route(Path(name): Path<String>, State(app): State<Arc<AppState>>) -> Response {
    let Some(dir) = &app.config.images_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    if name.contains('/') || name.contains('\\') || name.starts_with('.') {
        return StatusCode::BAD_REQUEST.into_response();
    }
    match tokio::fs::read(dir.join(&name)).await {
        Ok(bytes) => {
            let mime = match name.rsplit('.').next() {
                Some("png") => "image/png",
                Some("jpg") | Some("jpeg") => "image/jpeg",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, mime)], bytes).into_response()
        }
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/ws", get(ws_route))
        .route("/images/{name}", get(image_route))
        .route("/health", get(|| async { "ok" }))
        .with_state(app)
}

/// Serves until the listener fails. A background task retries matching
/// so that patience timeouts take effect without new arrivals.
pub async fn serve(listener: TcpListener, app: Arc<AppState>) -> Result<(), ServerError> {
    let ticker = Arc::clone(&app);
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(ticker.config.match_interval);
        loop {
            interval.tick().await;
            ticker.try_match();
        }
    });
    axum::serve(listener, router(app)).await?;
    Ok(())
}
