//! `P(x1 | s)` three ways: closed form, null space of the fast generator on
//! the level set, and CSSA occupancy.

use slowvar::conditional::{closed_form_cs2, cssa_conditional, fast_subsystem_conditional, level_states, total_variation};
use slowvar::network::{builtin_cs2_with, VolumeScaling};
use slowvar::simulate::RngStream;

fn main() -> slowvar::Result<()> {
    let (net, dom) = builtin_cs2_with(VolumeScaling::Table);
    let w = net.slow_weights().expect("built-in").to_vec();
    for s in [7.0, 60.0, 150.0] {
        let closed = closed_form_cs2(&net, s, Some(&dom))?;
        let states = level_states(&w, s, Some(&dom));
        let null = fast_subsystem_conditional(&net, s, &states, &[4, 5])?;
        let mut rng = RngStream::new(11, s as u64);
        let sampled = cssa_conditional(&net, s, 20_000, &dom, &mut rng)?;
        println!(
            "s = {s}: {} states, TV(closed, null space) = {:.1e}, TV(closed, CSSA) = {:.4}",
            states.len(),
            total_variation(&closed, &null),
            total_variation(&closed, &sampled)
        );
        if s == 7.0 {
            println!("  P(x1 | 7) = {:?} on x1 = {:?}", closed.probs, closed.support.iter().map(|x| x[0]).collect::<Vec<_>>());
        }
    }
    Ok(())
}
