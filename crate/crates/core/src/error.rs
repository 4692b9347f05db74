use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("event scheduled in the past: event time {event_ns} ns < clock {clock_ns} ns")]
    ScheduleInPast { event_ns: u64, clock_ns: u64 },

    #[error("deadlock detected at {clock_ns} ns: no forwarding progress with {in_flight} packets in flight")]
    Deadlock { clock_ns: u64, in_flight: u64 },

    #[error("model invariant violated: {0}")]
    InvariantViolation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
