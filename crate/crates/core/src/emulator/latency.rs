use std::collections::VecDeque;

/// Slack on `visible_at <= now` comparisons; tick times are multiples of
/// the tick period and accumulate rounding.
const TIME_EPS: f64 = 1e-9;

/// FIFO delay line. Values pushed at `now` become visible at `now + delay`.
#[derive(Debug, Clone)]
pub struct LatencyQueue<T> {
    delay: f64,
    entries: VecDeque<(f64, T)>,
}

impl<T> LatencyQueue<T> {
    pub fn new(delay: f64) -> Self {
        Self {
            delay,
            entries: VecDeque::new(),
        }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, now: f64, value: T) {
        let visible_at = now + self.delay;
        debug_assert!(
            self.entries.back().is_none_or(|(t, _)| *t <= visible_at),
            "latency queue pushed out of order"
        );
        self.entries.push_back((visible_at, value));
    }

    /// Removes every entry visible at `now` and returns the newest of them.
    pub fn pop_visible(&mut self, now: f64) -> Option<T> {
        let mut latest = None;
        while let Some((visible_at, _)) = self.entries.front() {
            if *visible_at > now + TIME_EPS {
                break;
            }
            latest = self.entries.pop_front().map(|(_, v)| v);
        }
        latest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_appear_after_delay() {
        let mut q = LatencyQueue::new(0.25);
        q.push(0.0, 'a');
        q.push(0.1, 'b');
        assert_eq!(q.pop_visible(0.2), None);
        assert_eq!(q.pop_visible(0.25), Some('a'));
        assert_eq!(q.pop_visible(0.34), None);
        assert_eq!(q.pop_visible(1.0), Some('b'));
        assert!(q.is_empty());
    }

    #[test]
    fn newest_visible_wins() {
        let mut q = LatencyQueue::new(0.0);
        q.push(0.0, 1);
        q.push(0.0, 2);
        q.push(0.5, 3);
        assert_eq!(q.pop_visible(0.1), Some(2));
        assert_eq!(q.len(), 1);
    }
}
