//! Bounded inter-stage queue with a configurable overflow policy.

use crossbeam_channel::{bounded, Receiver, SendError, Sender, TrySendError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueuePolicy {
    /// A full queue blocks the producer.
    Block,
    /// A full queue discards its oldest item to make room.
    DropOldest,
}

pub struct BoundedQueue<T> {
    tx: Sender<T>,
    rx: Receiver<T>,
    policy: QueuePolicy,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize, policy: QueuePolicy) -> Self {
        let (tx, rx) = bounded(capacity);
        Self { tx, rx, policy }
    }

    pub fn sender(&self) -> QueueSender<T> {
        QueueSender { tx: self.tx.clone(), rx: self.rx.clone(), policy: self.policy }
    }

    pub fn receiver(&self) -> Receiver<T> {
        self.rx.clone()
    }

    pub fn capacity(&self) -> usize {
        self.tx.capacity().unwrap_or(0)
    }
}

pub struct QueueSender<T> {
    tx: Sender<T>,
    rx: Receiver<T>,
    policy: QueuePolicy,
}

impl<T> QueueSender<T> {
    /// Enqueues `item`; returns how many old items were discarded. Fails
    /// once every receiver is gone.
    pub fn push(&self, item: T) -> Result<u64, SendError<T>> {
        match self.policy {
            QueuePolicy::Block => self.tx.send(item).map(|_| 0),
            QueuePolicy::DropOldest => {
                let mut item = item;
                let mut dropped = 0;
                loop {
                    match self.tx.try_send(item) {
                        Ok(()) => return Ok(dropped),
                        Err(TrySendError::Disconnected(v)) => return Err(SendError(v)),
                        Err(TrySendError::Full(v)) => {
                            item = v;
                            if self.rx.try_recv().is_ok() {
                                dropped += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_oldest_keeps_the_newest_items_and_bounds_length() {
        let q = BoundedQueue::new(4, QueuePolicy::DropOldest);
        let tx = q.sender();
        let mut dropped = 0;
        for i in 0..100 {
            dropped += tx.push(i).unwrap();
            assert!(q.receiver().len() <= 4);
        }
        assert_eq!(dropped, 96);
        let rx = q.receiver();
        let got: Vec<i32> = rx.try_iter().collect();
        assert_eq!(got, vec![96, 97, 98, 99]);
    }

    #[test]
    fn block_policy_delivers_everything_in_order() {
        let q = BoundedQueue::new(2, QueuePolicy::Block);
        let tx = q.sender();
        let rx = q.receiver();
        drop(q);
        let h = std::thread::spawn(move || {
            for i in 0..50 {
                tx.push(i).unwrap();
            }
        });
        let got: Vec<i32> = rx.iter().collect();
        h.join().unwrap();
        assert_eq!(got, (0..50).collect::<Vec<_>>());
    }
}
