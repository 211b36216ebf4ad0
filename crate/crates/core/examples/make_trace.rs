//! Regenerates the bundled trace:
//! `cargo run -p microcam-core --example make_trace > crates/core/data/five_placements.trace`
use microcam_core::imu::{format_trace, PlacementScript};
fn main() {
    let s = PlacementScript { rate_hz: 10.0, segments: vec![(5.0, 40.0); 5], tail_motion: 3.0, seed: 5 };
    print!("{}", format_trace(&s.generate()));
}
