use std::net::TcpStream;
use std::time::{Duration, Instant};

use steer_cli::commands::SessionSettings;
use steer_cli::serve::{Control, Outbox, ServeOpts, Server, Session};
use steer_core::kv::KvMap;
use steer_core::pa::CommandCell;
use steer_core::wire::{SessionAction, Telemetry, WireMessage, WIRE_VERSION};
use steer_core::{ImageConfig, Network, NetworkConfig};
use tungstenite::{Message, WebSocket};

fn tiny_net() -> Network {
    let cfg = NetworkConfig {
        input: [1, 17, 25],
        conv_channels: vec![2, 3],
        conv_strides: vec![2, 1],
        fc_widths: vec![6, 1],
        ..NetworkConfig::default()
    };
    let mut net = Network::build(cfg, 1).unwrap();
    net.camera = ImageConfig {
        height: 17,
        width: 25,
        ..ImageConfig::default()
    };
    net
}

fn settings() -> SessionSettings {
    let mut kv = KvMap::new();
    kv.set("passes", 4);
    kv.set("seed", 3);
    kv.set("kappa", 50);
    SessionSettings::from_kv(&kv).unwrap()
}

fn start() -> Server {
    let opts = ServeOpts {
        bind: "127.0.0.1:0".into(),
        tick_hz: 50.0,
        ..ServeOpts::default()
    };
    Server::spawn(tiny_net(), settings(), &opts).unwrap()
}

type Client = WebSocket<TcpStream>;

fn connect(server: &Server) -> Client {
    let stream = TcpStream::connect(server.addr).unwrap();
    let (ws, _) = tungstenite::client::client(format!("ws://{}/", server.addr), stream).unwrap();
    ws.get_ref().set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    ws
}

fn next(ws: &mut Client) -> WireMessage {
    loop {
        match ws.read().unwrap() {
            Message::Text(t) => return WireMessage::decode(&t).unwrap(),
            _ => continue,
        }
    }
}

fn next_telemetry(ws: &mut Client) -> Telemetry {
    loop {
        if let WireMessage::Telemetry(t) = next(ws) {
            return t;
        }
    }
}

fn send(ws: &mut Client, msg: &WireMessage) {
    ws.send(Message::text(msg.encode())).unwrap();
}

#[test]
fn handshake_then_network_only_telemetry() {
    let server = start();
    let mut ws = connect(&server);
    match next(&mut ws) {
        WireMessage::Hello { version, tick_hz, kappa_max } => {
            assert_eq!(version, WIRE_VERSION);
            assert_eq!(tick_hz, 50.0);
            assert_eq!(kappa_max, 0.2);
        }
        other => panic!("expected Hello, got {other:?}"),
    }
    for _ in 0..5 {
        let t = next_telemetry(&mut ws);
        assert_eq!(t.u_h, None);
        assert_eq!(t.sigma, 0.0);
        assert_eq!(t.u_pa, t.u_n);
        WireMessage::Telemetry(t).validate(0.2).unwrap();
    }
    server.shutdown().unwrap();
}

#[test]
fn human_command_appears_within_one_tick() {
    let server = start();
    let mut ws = connect(&server);
    let sent_after = next_telemetry(&mut ws).tick;
    send(&mut ws, &WireMessage::HumanCommand { u_h: 0.05 });
    let t = loop {
        let t = next_telemetry(&mut ws);
        if t.u_h.is_some() {
            break t;
        }
        assert!(t.tick <= sent_after + 2, "tick {} still without u_H", t.tick);
    };
    assert_eq!(t.u_h, Some(0.05));
    assert!(t.sigma > 0.0 && t.sigma <= 1.0);
    WireMessage::Telemetry(t).validate(0.2).unwrap();
    // Zero-order hold: later ticks keep the command.
    for _ in 0..3 {
        assert_eq!(next_telemetry(&mut ws).u_h, Some(0.05));
    }
    server.shutdown().unwrap();
}

#[test]
fn malformed_messages_get_error_replies() {
    let server = start();
    let mut ws = connect(&server);
    for bad in [
        "not json".to_string(),
        r#"{"type":"HumanCommand"}"#.to_string(),
        WireMessage::HumanCommand { u_h: 0.9 }.encode(),
        WireMessage::Hello {
            version: 1,
            tick_hz: 1.0,
            kappa_max: 0.1,
        }
        .encode(),
    ] {
        ws.send(Message::text(bad)).unwrap();
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            assert!(Instant::now() < deadline);
            if let WireMessage::Error { .. } = next(&mut ws) {
                break;
            }
        }
    }
    // Session survives and the bad command was not applied.
    let t = next_telemetry(&mut ws);
    assert_eq!(t.u_h, None);
    server.shutdown().unwrap();
}

#[test]
fn disconnect_forces_network_only() {
    let server = start();
    let mut ws = connect(&server);
    next_telemetry(&mut ws);
    send(&mut ws, &WireMessage::HumanCommand { u_h: -0.1 });
    while next_telemetry(&mut ws).u_h.is_none() {}
    ws.close(None).unwrap();
    drop(ws);
    std::thread::sleep(Duration::from_millis(100));
    let mut ws = connect(&server);
    assert!(matches!(next(&mut ws), WireMessage::Hello { .. }));
    for _ in 0..3 {
        let t = next_telemetry(&mut ws);
        assert_eq!((t.u_h, t.sigma), (None, 0.0));
    }
    server.shutdown().unwrap();
}

#[test]
fn session_control_stops_and_resets() {
    let server = start();
    let mut ws = connect(&server);
    let before = next_telemetry(&mut ws).tick;
    let stop = WireMessage::SessionControl {
        action: SessionAction::Stop,
        kappa: None,
        tick_hz: None,
    };
    send(&mut ws, &stop);
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    // Drain whatever was queued before the stop, then expect silence.
    let mut quiet = false;
    for _ in 0..50 {
        match ws.read() {
            Ok(_) => continue,
            Err(_) => {
                quiet = true;
                break;
            }
        }
    }
    assert!(quiet, "telemetry kept flowing after stop");
    ws.get_ref().set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    send(
        &mut ws,
        &WireMessage::SessionControl {
            action: SessionAction::Reset,
            kappa: Some(2.0),
            tick_hz: None,
        },
    );
    send(
        &mut ws,
        &WireMessage::SessionControl {
            action: SessionAction::Start,
            kappa: None,
            tick_hz: None,
        },
    );
    let t = next_telemetry(&mut ws);
    assert!(t.tick <= before + 1, "reset should restart the tick counter");
    assert_eq!((t.pose.x, t.pose.y), (0.0, 0.0));
    server.shutdown().unwrap();
}

#[test]
fn tick_limit_ends_the_session() {
    let opts = ServeOpts {
        bind: "127.0.0.1:0".into(),
        tick_hz: 200.0,
        max_ticks: Some(10),
        ..ServeOpts::default()
    };
    let server = Server::spawn(tiny_net(), settings(), &opts).unwrap();
    server.wait().unwrap();
}

#[test]
fn sessions_replay_identically() {
    let net = tiny_net();
    let s = settings();
    let track = s.build_track().unwrap();
    let script = |tick: u64| match tick {
        10 => Some(Some(0.08)),
        25 => Some(None),
        30 => Some(Some(-0.02)),
        _ => None,
    };
    let run = || {
        let mut session = Session::new(&net, &track, &s, 20.0).unwrap();
        let cell = CommandCell::new();
        let mut out = Vec::new();
        for tick in 0..40 {
            match script(tick) {
                Some(Some(u)) => cell.set(u),
                Some(None) => cell.clear(),
                None => {}
            }
            if tick == 35 {
                session
                    .apply(&Control {
                        action: SessionAction::Start,
                        kappa: Some(3.0),
                        tick_hz: None,
                    })
                    .unwrap();
            }
            out.push(WireMessage::Telemetry(session.tick(&cell).unwrap()).encode());
        }
        out
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a[12].contains("\"u_H\":0.08"));
    assert!(a[27].contains("\"u_H\":null"));
}

#[test]
fn outbox_drops_oldest() {
    let q = Outbox::new(3);
    for i in 0..5 {
        q.push(i.to_string());
    }
    assert_eq!(q.drain(), vec!["2", "3", "4"]);
    assert_eq!(q.dropped(), 2);
    assert!(q.drain().is_empty());
}
