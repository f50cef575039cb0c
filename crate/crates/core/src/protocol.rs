//! Two-way IEEE 1588 exchange and receiver-only (PBS) overhearing.
//!
//! One exchange between a master M and a slave S is four messages:
//!
//! 1. `Sync` from M, stamped on transmission as T1 (M's clock). S stamps its
//!    arrival as T2_S, every listener X stamps it as T2_X.
//! 2. `FollowUp` from M carrying T1.
//! 3. `DelayRequest` from S, stamped on transmission as T3 (S's clock). M stamps
//!    the arrival as T4_M and every listener as T4_X.
//! 4. `DelayResponse` from M carrying T4_M.
//!
//! The slave estimates its offset with the usual two-way formula. A listener
//! takes its offset to M directly as `T4_X - T4_M`, assuming the request
//! reaches M and X at the same instant, and never transmits.
//!
//! All offsets are "follower minus master"; a follower corrects by subtracting.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clock::LocalTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Sync,
    FollowUp,
    DelayRequest,
    DelayResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] = [
        MessageKind::Sync,
        MessageKind::FollowUp,
        MessageKind::DelayRequest,
        MessageKind::DelayResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Sync => "sync",
            MessageKind::FollowUp => "follow_up",
            MessageKind::DelayRequest => "delay_request",
            MessageKind::DelayResponse => "delay_response",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        MessageKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// A timing message. `master`/`slave` name the exchange it belongs to;
/// `origin` is whichever of the two sent it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncMessage {
    kind: MessageKind,
    origin: NodeId,
    master: NodeId,
    slave: NodeId,
    exchange_id: u64,
    carried: Option<LocalTime>,
}

impl SyncMessage {
    pub fn sync(master: NodeId, slave: NodeId, exchange_id: u64) -> Self {
        SyncMessage {
            kind: MessageKind::Sync,
            origin: master,
            master,
            slave,
            exchange_id,
            carried: None,
        }
    }

    pub fn follow_up(master: NodeId, slave: NodeId, exchange_id: u64, t1: LocalTime) -> Self {
        SyncMessage {
            kind: MessageKind::FollowUp,
            origin: master,
            master,
            slave,
            exchange_id,
            carried: Some(t1),
        }
    }

    pub fn delay_request(master: NodeId, slave: NodeId, exchange_id: u64) -> Self {
        SyncMessage {
            kind: MessageKind::DelayRequest,
            origin: slave,
            master,
            slave,
            exchange_id,
            carried: None,
        }
    }

    pub fn delay_response(master: NodeId, slave: NodeId, exchange_id: u64, t4: LocalTime) -> Self {
        SyncMessage {
            kind: MessageKind::DelayResponse,
            origin: master,
            master,
            slave,
            exchange_id,
            carried: Some(t4),
        }
    }

    pub fn kind(&self) -> MessageKind {
        self.kind
    }

    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn master(&self) -> NodeId {
        self.master
    }

    pub fn slave(&self) -> NodeId {
        self.slave
    }

    pub fn exchange_id(&self) -> u64 {
        self.exchange_id
    }

    pub fn carried_timestamp(&self) -> Option<LocalTime> {
        self.carried
    }
}

/// The six timestamps of one exchange. A slave fills the first four, a
/// listener fills T1, T2_X, T4_X and T4_M.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeRecord {
    pub exchange_id: u64,
    pub t1_m: Option<LocalTime>,
    pub t2_s: Option<LocalTime>,
    pub t3_s: Option<LocalTime>,
    pub t4_m: Option<LocalTime>,
    pub t2_x: Option<LocalTime>,
    pub t4_x: Option<LocalTime>,
}

impl ExchangeRecord {
    pub fn new(exchange_id: u64) -> Self {
        ExchangeRecord {
            exchange_id,
            ..Default::default()
        }
    }

    pub fn is_slave_complete(&self) -> bool {
        self.t1_m.is_some() && self.t2_s.is_some() && self.t3_s.is_some() && self.t4_m.is_some()
    }

    pub fn is_pbs_complete(&self) -> bool {
        self.t1_m.is_some() && self.t2_x.is_some() && self.t4_m.is_some() && self.t4_x.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    TwoWay1588,
    Pbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncEstimate {
    pub exchange_id: u64,
    pub method: Method,
    /// Follower clock minus master clock, nanoseconds.
    pub delta_hat: i64,
    /// Propagation delay estimate, nanoseconds.
    pub d_hat: i64,
    /// Remainder of the halving in the two-way offset formula (-1, 0 or 1):
    /// `2 * delta_hat + offset_remainder` is the exact numerator.
    pub offset_remainder: i64,
}

impl SyncEstimate {
    /// Negative delay estimates can only come from noise or path asymmetry.
    pub fn negative_delay(&self) -> bool {
        self.d_hat < 0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("exchange {0} is missing timestamps for a two-way estimate")]
    NotSlaveComplete(u64),
    #[error("exchange {0} is missing timestamps for a PBS estimate")]
    NotPbsComplete(u64),
}

/// Two-way estimate; both halvings round toward zero.
pub fn estimate_twoway(rec: &ExchangeRecord) -> Result<SyncEstimate, ProtocolError> {
    let (Some(t1), Some(t2), Some(t3), Some(t4)) = (rec.t1_m, rec.t2_s, rec.t3_s, rec.t4_m) else {
        return Err(ProtocolError::NotSlaveComplete(rec.exchange_id));
    };
    let forward = t2 - t1;
    let backward = t4 - t3;
    let num = forward - backward;
    Ok(SyncEstimate {
        exchange_id: rec.exchange_id,
        method: Method::TwoWay1588,
        delta_hat: num / 2,
        d_hat: (forward + backward) / 2,
        offset_remainder: num % 2,
    })
}

/// Listener offset to the master: `T4_X - T4_M`.
pub fn pbs_offset(t4_x: LocalTime, t4_m: LocalTime) -> i64 {
    t4_x - t4_m
}

/// Master-to-listener delay: `T2_X - T1_M - delta_xm`.
pub fn pbs_delay(t2_x: LocalTime, t1_m: LocalTime, delta_xm: i64) -> i64 {
    (t2_x - t1_m) - delta_xm
}

/// `delta_xm = delta_xs + delta_sm`.
pub fn compose_offsets(delta_xs: i64, delta_sm: i64) -> i64 {
    delta_xs + delta_sm
}

/// `(T4_X - T4_M) - delta_xm`. With exact stamps this is `d_SX - d_SM`, the
/// amount by which the request reached the listener later than the master.
pub fn asymmetry_residual(rec: &ExchangeRecord, delta_xm: i64) -> Result<i64, ProtocolError> {
    match (rec.t4_x, rec.t4_m) {
        (Some(t4_x), Some(t4_m)) if rec.is_pbs_complete() => Ok(pbs_offset(t4_x, t4_m) - delta_xm),
        _ => Err(ProtocolError::NotPbsComplete(rec.exchange_id)),
    }
}

pub fn estimate_pbs(rec: &ExchangeRecord) -> Result<SyncEstimate, ProtocolError> {
    let (Some(t1), Some(t2_x), Some(t4_m), Some(t4_x)) = (rec.t1_m, rec.t2_x, rec.t4_m, rec.t4_x)
    else {
        return Err(ProtocolError::NotPbsComplete(rec.exchange_id));
    };
    let delta = pbs_offset(t4_x, t4_m);
    Ok(SyncEstimate {
        exchange_id: rec.exchange_id,
        method: Method::Pbs,
        delta_hat: delta,
        d_hat: pbs_delay(t2_x, t1, delta),
        offset_remainder: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Master,
    Slave1588 { master: NodeId },
    PbsListener { master: NodeId, paired_slave: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingExchange {
    exchange_id: u64,
    t4: Option<LocalTime>,
}

/// Master side: one pending exchange per slave.
#[derive(Debug, Clone)]
pub struct MasterState {
    id: NodeId,
    next_exchange_id: u64,
    pending: BTreeMap<NodeId, PendingExchange>,
    aborted: u64,
    completed: u64,
}

impl MasterState {
    pub fn new(id: NodeId) -> Self {
        MasterState {
            id,
            next_exchange_id: 0,
            pending: BTreeMap::new(),
            aborted: 0,
            completed: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    /// Exchanges dropped because a new one started before they finished.
    pub fn aborted(&self) -> u64 {
        self.aborted
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn is_pending(&self, slave: NodeId) -> bool {
        self.pending.contains_key(&slave)
    }

    /// Begins a new exchange with `slave`. `t1` is the physical-layer stamp of
    /// the Sync transmission; the returned FollowUp carries it.
    pub fn start_exchange(&mut self, slave: NodeId, t1: LocalTime) -> [SyncMessage; 2] {
        let exchange_id = self.next_exchange_id;
        self.next_exchange_id += 1;
        if self
            .pending
            .insert(slave, PendingExchange { exchange_id, t4: None })
            .is_some()
        {
            self.aborted += 1;
        }
        [
            SyncMessage::sync(self.id, slave, exchange_id),
            SyncMessage::follow_up(self.id, slave, exchange_id, t1),
        ]
    }

    /// Records T4 for a request belonging to the current exchange. Stale or
    /// foreign requests are ignored.
    pub fn on_delay_request(&mut self, msg: &SyncMessage, rx: LocalTime) -> bool {
        if msg.kind != MessageKind::DelayRequest || msg.master != self.id {
            return false;
        }
        match self.pending.get_mut(&msg.slave) {
            Some(p) if p.exchange_id == msg.exchange_id && p.t4.is_none() => {
                p.t4 = Some(rx);
                true
            }
            _ => false,
        }
    }

    /// Slaves whose request has arrived and is waiting for a response.
    pub fn responses_due(&self) -> Vec<NodeId> {
        self.pending
            .iter()
            .filter(|(_, p)| p.t4.is_some())
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn take_delay_response(&mut self, slave: NodeId) -> Option<SyncMessage> {
        let p = *self.pending.get(&slave)?;
        let t4 = p.t4?;
        self.pending.remove(&slave);
        self.completed += 1;
        Some(SyncMessage::delay_response(self.id, slave, p.exchange_id, t4))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlaveAction {
    None,
    /// FollowUp received: a DelayRequest is owed for this exchange.
    SendDelayRequest { exchange_id: u64 },
    Estimate(SyncEstimate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlaveStage {
    Idle,
    GotSync,
    GotFollowUp,
    RequestSent,
}

/// Follower running the two-way exchange with its master.
#[derive(Debug, Clone)]
pub struct SlaveState {
    id: NodeId,
    master: NodeId,
    record: ExchangeRecord,
    stage: SlaveStage,
    timeout_ns: i64,
    lost: u64,
}

impl SlaveState {
    /// `timeout_ns` bounds how long (on the local clock) an exchange may stay
    /// open between Sync arrival and DelayResponse arrival.
    pub fn new(id: NodeId, master: NodeId, timeout_ns: i64) -> Self {
        SlaveState {
            id,
            master,
            record: ExchangeRecord::default(),
            stage: SlaveStage::Idle,
            timeout_ns,
            lost: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn master(&self) -> NodeId {
        self.master
    }

    /// Exchanges discarded because a message was missing or out of order.
    pub fn lost(&self) -> u64 {
        self.lost
    }

    fn discard(&mut self) {
        if self.stage != SlaveStage::Idle {
            self.lost += 1;
        }
        self.stage = SlaveStage::Idle;
        self.record = ExchangeRecord::default();
    }

    pub fn on_message(&mut self, msg: &SyncMessage, rx: LocalTime) -> SlaveAction {
        if msg.master != self.master || msg.slave != self.id || msg.origin != self.master {
            return SlaveAction::None;
        }
        let same = msg.exchange_id == self.record.exchange_id;
        match (msg.kind, self.stage) {
            (MessageKind::Sync, _) => {
                self.discard();
                self.record = ExchangeRecord::new(msg.exchange_id);
                self.record.t2_s = Some(rx);
                self.stage = SlaveStage::GotSync;
                SlaveAction::None
            }
            (MessageKind::FollowUp, SlaveStage::GotSync) if same => {
                self.record.t1_m = msg.carried;
                self.stage = SlaveStage::GotFollowUp;
                SlaveAction::SendDelayRequest {
                    exchange_id: msg.exchange_id,
                }
            }
            (MessageKind::DelayResponse, SlaveStage::RequestSent) if same => {
                let t2 = self.record.t2_s.expect("sync stamp present");
                if rx - t2 > self.timeout_ns {
                    self.discard();
                    return SlaveAction::None;
                }
                self.record.t4_m = msg.carried;
                let est = estimate_twoway(&self.record).expect("record complete");
                self.stage = SlaveStage::Idle;
                SlaveAction::Estimate(est)
            }
            _ => {
                self.discard();
                SlaveAction::None
            }
        }
    }

    /// Called at the DelayRequest's physical transmission with its stamp T3.
    /// Returns `None` if the exchange has since been discarded.
    pub fn delay_request_sent(&mut self, exchange_id: u64, t3: LocalTime) -> Option<SyncMessage> {
        if self.stage != SlaveStage::GotFollowUp || self.record.exchange_id != exchange_id {
            return None;
        }
        self.record.t3_s = Some(t3);
        self.stage = SlaveStage::RequestSent;
        Some(SyncMessage::delay_request(self.master, self.id, exchange_id))
    }

    pub fn record(&self) -> &ExchangeRecord {
        &self.record
    }
}

/// Receiver-only follower. Has no transmit path.
#[derive(Debug, Clone)]
pub struct ListenerState {
    id: NodeId,
    master: NodeId,
    paired_slave: NodeId,
    record: ExchangeRecord,
    next: Option<MessageKind>,
    timeout_ns: i64,
    lost: u64,
    last_complete: Option<ExchangeRecord>,
}

impl ListenerState {
    pub fn new(id: NodeId, master: NodeId, paired_slave: NodeId, timeout_ns: i64) -> Self {
        ListenerState {
            id,
            master,
            paired_slave,
            record: ExchangeRecord::default(),
            next: None,
            timeout_ns,
            lost: 0,
            last_complete: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn master(&self) -> NodeId {
        self.master
    }

    pub fn paired_slave(&self) -> NodeId {
        self.paired_slave
    }

    pub fn lost(&self) -> u64 {
        self.lost
    }

    /// The most recent pbs-complete record.
    pub fn last_complete(&self) -> Option<&ExchangeRecord> {
        self.last_complete.as_ref()
    }

    /// Whether this listener overhears `msg` (it belongs to the watched pair).
    pub fn watches(&self, msg: &SyncMessage) -> bool {
        msg.master == self.master && msg.slave == self.paired_slave
    }

    fn discard(&mut self) {
        if self.next.is_some() {
            self.lost += 1;
        }
        self.next = None;
        self.record = ExchangeRecord::default();
    }

    pub fn on_message(&mut self, msg: &SyncMessage, rx: LocalTime) -> Option<SyncEstimate> {
        if !self.watches(msg) {
            return None;
        }
        let same = msg.exchange_id == self.record.exchange_id;
        match msg.kind {
            MessageKind::Sync => {
                self.discard();
                self.record = ExchangeRecord::new(msg.exchange_id);
                self.record.t2_x = Some(rx);
                self.next = Some(MessageKind::FollowUp);
                None
            }
            kind if same && self.next == Some(kind) => match kind {
                MessageKind::FollowUp => {
                    self.record.t1_m = msg.carried;
                    self.next = Some(MessageKind::DelayRequest);
                    None
                }
                MessageKind::DelayRequest => {
                    self.record.t4_x = Some(rx);
                    self.next = Some(MessageKind::DelayResponse);
                    None
                }
                MessageKind::DelayResponse => {
                    let t2 = self.record.t2_x.expect("sync stamp present");
                    if rx - t2 > self.timeout_ns {
                        self.discard();
                        return None;
                    }
                    self.record.t4_m = msg.carried;
                    let est = estimate_pbs(&self.record).expect("record complete");
                    self.last_complete = Some(self.record);
                    self.next = None;
                    Some(est)
                }
                MessageKind::Sync => unreachable!(),
            },
            _ => {
                self.discard();
                None
            }
        }
    }
}
