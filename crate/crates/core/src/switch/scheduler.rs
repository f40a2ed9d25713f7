//! Output scheduling: minimum-backlog choice over the one-hot permitted map
//! of the enabled stage, with multicast fan-out.

/// Chooses output queues for a packet given the permitted one-hot `map`.
/// Unicast picks the permitted queue with the smallest backlog (ties go to
/// the lowest port index); multicast copies into every permitted queue.
/// Queues of draining or deactivating stages must already be masked out of
/// `map` by the caller. Returns an empty vec when the map is empty.
pub fn choose_outputs(map: u64, multicast: bool, backlog: impl Fn(usize) -> usize) -> Vec<usize> {
    if map == 0 {
        return Vec::new();
    }
    if multicast {
        return (0..64).filter(|i| map & (1 << i) != 0).collect();
    }
    let mut best: Option<(usize, usize)> = None;
    for i in 0..64 {
        if map & (1u64 << i) == 0 {
            continue;
        }
        let depth = backlog(i);
        match best {
            Some((_, d)) if d <= depth => {}
            _ => best = Some((i, depth)),
        }
    }
    vec![best.unwrap().0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_minimum_backlog() {
        let depths = [0usize, 0, 10, 4];
        let out = choose_outputs(0b1100, false, |i| depths[i]);
        assert_eq!(out, vec![3]);
    }

    #[test]
    fn tie_breaks_to_lowest_index() {
        let out = choose_outputs(0b1100, false, |_| 7);
        assert_eq!(out, vec![2]);
    }

    #[test]
    fn multicast_copies_to_all() {
        let out = choose_outputs(0b10110, true, |_| 0);
        assert_eq!(out, vec![1, 2, 4]);
    }

    #[test]
    fn empty_map_yields_nothing() {
        assert!(choose_outputs(0, false, |_| 0).is_empty());
    }
}
