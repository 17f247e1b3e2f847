//! Runs a scripted session, writes its JSON-lines log and replays it.

use optwin::experiments::default_delivery_scenario;
use optwin::session::{
    replay, run_session, ClientMessage, ScriptedOperator, TrialLog, VirtualClock,
};
use optwin::teleop::Device;
use optwin::Vec3;

fn main() -> optwin::Result<()> {
    let sc = default_delivery_scenario();
    let push = Vec3::new(0.4, 0.0, 0.0);
    let script = vec![
        (0, ClientMessage::hand(Device::Left, push, 0.0)),
        (0, ClientMessage::hand(Device::Right, push, 0.0)),
        (1500, ClientMessage::abort()),
    ];
    let log = run_session(
        sc.clone(),
        &mut ScriptedOperator::new(script),
        &mut VirtualClock,
    )?;
    println!(
        "{} records, outcome {} after {:.3} s",
        log.records.len(),
        log.outcome.reason.as_str(),
        log.outcome.duration
    );
    let text = log.to_jsonl();
    let parsed = TrialLog::from_jsonl(&text)?;
    let again = replay(&parsed, &sc)?;
    println!("replay identical: {}", again.to_jsonl() == text);
    Ok(())
}
