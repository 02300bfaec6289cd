//! Live session endpoint: the closed-loop simulator ticking in real time,
//! streaming `Telemetry` to one WebSocket client and taking its
//! `HumanCommand`s through a zero-order-hold command cell.
//!
//! Threads: one tick loop and one network I/O handler. They share only
//! the [`CommandCell`] (client → simulator), the bounded [`Outbox`]
//! (simulator → client) and a control channel for `SessionControl`.
//! The outbox drops the oldest telemetry when full so the tick loop never
//! waits on a slow client. While no client is connected the command cell
//! is empty and the simulator runs on the network alone (sigma = 0).

use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use steer_core::pa::{CommandCell, Simulator, PROJECTION_WINDOW};
use steer_core::wire::{SessionAction, Telemetry, WireMessage, WIRE_VERSION};
use steer_core::{FusionConfig, Network, Track};
use tungstenite::{Message, WebSocket};

use crate::commands::SessionSettings;
use crate::error::{CliError, CliResult};

pub const DEFAULT_TICK_HZ: f64 = 20.0;
pub const DEFAULT_QUEUE: usize = 64;
const POLL: Duration = Duration::from_millis(5);

/// Bounded FIFO of encoded messages with a drop-oldest policy.
#[derive(Debug)]
pub struct Outbox {
    queue: Mutex<VecDeque<String>>,
    capacity: usize,
    dropped: AtomicU64,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: Mutex::new(VecDeque::with_capacity(capacity)),
            capacity: capacity.max(1),
            dropped: AtomicU64::new(0),
        }
    }

    pub fn push(&self, msg: String) {
        let mut q = self.queue.lock().expect("outbox lock");
        if q.len() == self.capacity {
            q.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(msg);
    }

    pub fn drain(&self) -> Vec<String> {
        self.queue.lock().expect("outbox lock").drain(..).collect()
    }

    pub fn clear(&self) {
        self.queue.lock().expect("outbox lock").clear();
    }

    /// Messages discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// `SessionControl` as seen by the tick loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Control {
    pub action: SessionAction,
    pub kappa: Option<f64>,
    pub tick_hz: Option<f64>,
}

/// The tick engine without any I/O: deterministic given its inputs.
pub struct Session<'a> {
    pub sim: Simulator<'a>,
    pub running: bool,
    pub tick_hz: f64,
}

impl<'a> Session<'a> {
    pub fn new(net: &'a Network, track: &'a Track, settings: &SessionSettings, tick_hz: f64) -> CliResult<Self> {
        let sim = Simulator::new(
            net,
            track,
            settings.fusion,
            settings.mc,
            settings.sim,
            net.camera.clone(),
        )?;
        Ok(Self {
            sim,
            running: true,
            tick_hz,
        })
    }

    pub fn apply(&mut self, c: &Control) -> CliResult<()> {
        if let Some(k) = c.kappa {
            let fusion = FusionConfig {
                gain: k,
                ..self.sim.fusion
            };
            fusion.validate()?;
            self.sim.fusion = fusion;
        }
        if let Some(hz) = c.tick_hz {
            self.tick_hz = hz;
        }
        match c.action {
            SessionAction::Start => self.running = true,
            SessionAction::Stop => self.running = false,
            SessionAction::Reset => self.sim.reset(),
        }
        Ok(())
    }

    /// One tick using the held human command. Leaving the corridor or
    /// reaching the end of the track restarts the vehicle at the track
    /// origin before the tick.
    pub fn tick(&mut self, cell: &CommandCell) -> CliResult<Telemetry> {
        let off = self.sim.track.project(self.sim.state.x, self.sim.state.y, self.sim.state.s, PROJECTION_WINDOW);
        if self.sim.near_track_end() || off.lateral.abs() > self.sim.sim.corridor {
            let tick = self.sim.tick;
            self.sim.reset();
            self.sim.tick = tick;
        }
        let rec = self.sim.step(cell.get())?;
        Ok(Telemetry::from(&rec))
    }
}

#[derive(Clone, Debug)]
pub struct ServeOpts {
    pub bind: String,
    pub tick_hz: f64,
    pub queue: usize,
    /// Stop after this many ticks (unbounded when `None`).
    pub max_ticks: Option<u64>,
}

impl Default for ServeOpts {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            tick_hz: DEFAULT_TICK_HZ,
            queue: DEFAULT_QUEUE,
            max_ticks: None,
        }
    }
}

/// A running endpoint.
pub struct Server {
    pub addr: SocketAddr,
    pub outbox: Arc<Outbox>,
    stop: Arc<AtomicBool>,
    sim_thread: Option<JoinHandle<CliResult<()>>>,
    io_thread: Option<JoinHandle<()>>,
}

impl Server {
    /// Binds, then starts the tick loop and the I/O handler.
    pub fn spawn(net: Network, settings: SessionSettings, opts: &ServeOpts) -> CliResult<Self> {
        if !(opts.tick_hz > 0.0 && opts.tick_hz <= 1000.0) {
            return Err(CliError::Config("tick rate must be in (0, 1000] Hz".into()));
        }
        let track = settings.build_track()?;
        // Fail fast on a bad session configuration.
        Session::new(&net, &track, &settings, opts.tick_hz)?;

        let listener = TcpListener::bind(&opts.bind).map_err(|e| CliError::io(&opts.bind, e))?;
        let addr = listener.local_addr().map_err(|e| CliError::io(&opts.bind, e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| CliError::io(&opts.bind, e))?;

        let stop = Arc::new(AtomicBool::new(false));
        let cell = Arc::new(CommandCell::new());
        let outbox = Arc::new(Outbox::new(opts.queue));
        let (ctl_tx, ctl_rx) = mpsc::channel();

        let hello = WireMessage::Hello {
            version: WIRE_VERSION,
            tick_hz: opts.tick_hz,
            kappa_max: settings.sim.kappa_max,
        };
        let io = IoHandler {
            listener,
            stop: stop.clone(),
            cell: cell.clone(),
            outbox: outbox.clone(),
            control: ctl_tx,
            hello,
            kappa_max: settings.sim.kappa_max,
        };
        let io_thread = thread::spawn(move || io.run());

        let (stop2, outbox2, tick_hz, max_ticks) = (stop.clone(), outbox.clone(), opts.tick_hz, opts.max_ticks);
        let sim_thread = thread::spawn(move || {
            let result = tick_loop(&net, &track, &settings, tick_hz, max_ticks, &stop2, &cell, &outbox2, ctl_rx);
            stop2.store(true, Ordering::Release);
            result
        });
        Ok(Self {
            addr,
            outbox,
            stop,
            sim_thread: Some(sim_thread),
            io_thread: Some(io_thread),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    /// Blocks until the tick loop ends (tick limit or error).
    pub fn wait(mut self) -> CliResult<()> {
        self.join()
    }

    pub fn shutdown(mut self) -> CliResult<()> {
        self.stop.store(true, Ordering::Release);
        self.join()
    }

    fn join(&mut self) -> CliResult<()> {
        let result = match self.sim_thread.take() {
            Some(h) => h.join().expect("tick loop panicked"),
            None => Ok(()),
        };
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.io_thread.take() {
            h.join().expect("I/O handler panicked");
        }
        result
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        let _ = self.join();
    }
}

#[allow(clippy::too_many_arguments)]
fn tick_loop(
    net: &Network,
    track: &Track,
    settings: &SessionSettings,
    tick_hz: f64,
    max_ticks: Option<u64>,
    stop: &AtomicBool,
    cell: &CommandCell,
    outbox: &Outbox,
    control: Receiver<Control>,
) -> CliResult<()> {
    let mut session = Session::new(net, track, settings, tick_hz)?;
    let mut next = Instant::now();
    let mut done = 0u64;
    while !stop.load(Ordering::Acquire) && max_ticks.is_none_or(|m| done < m) {
        for c in control.try_iter() {
            if let Err(e) = session.apply(&c) {
                outbox.push(WireMessage::Error { message: e.to_string() }.encode());
            }
        }
        if session.running {
            let t = session.tick(cell)?;
            outbox.push(WireMessage::Telemetry(t).encode());
            done += 1;
        }
        next += Duration::from_secs_f64(1.0 / session.tick_hz);
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    Ok(())
}

struct IoHandler {
    listener: TcpListener,
    stop: Arc<AtomicBool>,
    cell: Arc<CommandCell>,
    outbox: Arc<Outbox>,
    control: Sender<Control>,
    hello: WireMessage,
    kappa_max: f64,
}

impl IoHandler {
    /// Serves one client at a time until stopped.
    fn run(self) {
        while !self.stop.load(Ordering::Acquire) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    self.session(stream);
                    self.cell.clear();
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(_) => thread::sleep(POLL),
            }
        }
    }

    fn session(&self, stream: TcpStream) {
        if stream.set_nonblocking(false).is_err() {
            return;
        }
        let Ok(mut ws) = tungstenite::accept(stream) else {
            return;
        };
        if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
            return;
        }
        self.outbox.clear();
        if ws.send(Message::text(self.hello.encode())).is_err() {
            return;
        }
        while !self.stop.load(Ordering::Acquire) {
            match ws.read() {
                Ok(Message::Text(text)) => {
                    if let Some(reply) = self.handle(&text) {
                        self.outbox.push(reply.encode());
                    }
                }
                Ok(Message::Binary(_)) => {
                    self.outbox.push(
                        WireMessage::Error {
                            message: "binary frames are not part of the schema".into(),
                        }
                        .encode(),
                    );
                }
                Ok(Message::Close(_)) => break,
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(_) => break,
            }
            if !flush(&mut ws, self.outbox.drain()) {
                break;
            }
        }
        let _ = ws.close(None);
        let _ = ws.flush();
    }

    /// Applies one client message; returns an error reply if it is
    /// malformed or not allowed.
    fn handle(&self, text: &str) -> Option<WireMessage> {
        let err = |message: String| Some(WireMessage::Error { message });
        let msg = match WireMessage::decode(text) {
            Ok(m) => m,
            Err(e) => return err(e.to_string()),
        };
        if let Err(e) = msg.validate(self.kappa_max) {
            return err(e.to_string());
        }
        match msg {
            WireMessage::HumanCommand { u_h } => {
                self.cell.set(u_h);
                None
            }
            WireMessage::SessionControl { action, kappa, tick_hz } => {
                let _ = self.control.send(Control { action, kappa, tick_hz });
                None
            }
            other => err(format!("clients may not send {}", type_name(&other))),
        }
    }
}

fn type_name(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::Hello { .. } => "Hello",
        WireMessage::Telemetry(_) => "Telemetry",
        WireMessage::HumanCommand { .. } => "HumanCommand",
        WireMessage::SessionControl { .. } => "SessionControl",
        WireMessage::Error { .. } => "Error",
    }
}

fn flush(ws: &mut WebSocket<TcpStream>, msgs: Vec<String>) -> bool {
    for m in msgs {
        if ws.send(Message::text(m)).is_err() {
            return false;
        }
    }
    true
}
