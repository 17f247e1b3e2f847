//! Starts a headless server in-process and drives one trial over TCP.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use optwin::experiments::default_delivery_scenario;
use optwin::session::server::{Server, ServerConfig};
use optwin::session::{ClientMessage, ServerMessage};
use optwin::teleop::Device;
use optwin::Vec3;

fn main() -> optwin::Result<()> {
    let cfg = ServerConfig {
        scenarios: vec![default_delivery_scenario()],
        headless: true,
        log_dir: None,
    };
    let addr = Server::bind("127.0.0.1:0", cfg)?.spawn()?;
    let stream = TcpStream::connect(addr).expect("connect");
    let mut out = stream.try_clone().expect("clone");
    let v = Vec3::new(0.6, 0.0, 0.0);
    let mut lines = String::new();
    lines += &ClientMessage::start().to_line();
    lines += &ClientMessage::hand(Device::Left, v, 0.0).to_line();
    lines += &ClientMessage::hand(Device::Right, v, 0.0).to_line();
    // In headless mode time advances only up to the latest input.
    lines += &ClientMessage::hand(Device::Left, v, 5.0).to_line();
    out.write_all(lines.as_bytes()).expect("send");
    let mut states = 0;
    for line in BufReader::new(stream).lines() {
        let line = line.expect("read");
        let msg: ServerMessage = serde_json::from_str(&line)?;
        match msg {
            ServerMessage::State { record, .. } => {
                states += 1;
                if states % 20 == 0 {
                    println!(
                        "t {:.3} payload x {:.2} contact {:.3} pN",
                        record.t, record.payload.x, record.contact_force_metric
                    );
                }
            }
            ServerMessage::Result { outcome } => {
                println!(
                    "{states} states, result {} at {:.3} s",
                    outcome.reason.as_str(),
                    outcome.duration
                );
                break;
            }
        }
    }
    Ok(())
}
