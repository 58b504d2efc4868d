use crate::engine::{Charger, Engine};
use crate::error::EngineError;
use crate::grid::ProcId;
use crate::ledger::CostLedger;
use crate::machine::{MachineParams, MemoryPolicy};

/// A word-counted message between processors.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: ProcId,
    pub to: ProcId,
    pub payload: Vec<f64>,
}

impl Message {
    pub fn words(&self) -> u64 {
        self.payload.len() as u64
    }
}

/// Messages delivered to one processor at the start of a superstep. A
/// processor can only ever see messages addressed to it; cross-reading is
/// unrepresentable.
pub struct Inbox<'a> {
    msgs: &'a [Message],
}

impl<'a> Inbox<'a> {
    pub fn messages(&self) -> &'a [Message] {
        self.msgs
    }

    pub fn from(&self, src: ProcId) -> impl Iterator<Item = &'a Message> {
        self.msgs.iter().filter(move |m| m.from == src)
    }

    pub fn total_words(&self) -> u64 {
        self.msgs.iter().map(Message::words).sum()
    }
}

/// Staging area for a processor's outgoing messages within a local step.
pub struct Outbox {
    from: ProcId,
    p: usize,
    msgs: Vec<Message>,
}

impl Outbox {
    pub fn send(&mut self, to: ProcId, payload: Vec<f64>) -> Result<(), EngineError> {
        if to >= self.p {
            return Err(EngineError::AddressOutOfRange {
                from: self.from,
                to,
                p: self.p,
            });
        }
        self.msgs.push(Message {
            from: self.from,
            to,
            payload,
        });
        Ok(())
    }
}

/// One superstep of a program: every processor's pure local step, reading
/// its own state and inbox, writing its state and outbox, charging costs.
pub type LocalStep<S> =
    dyn Fn(ProcId, &mut S, &Inbox<'_>, &mut Outbox, &mut Charger<'_>) -> Result<(), EngineError>;

/// Execute a superstep-structured program: per superstep, all local steps
/// run, then one exchange delivers every message for the next superstep.
/// Local steps touch disjoint state, so evaluation order within a superstep
/// cannot influence results; processors are evaluated in id order.
pub fn run_program<S>(
    machine: MachineParams,
    policy: MemoryPolicy,
    states: Vec<S>,
    program: &[Box<LocalStep<S>>],
) -> Result<(Vec<S>, CostLedger), EngineError> {
    let p = machine.p;
    if states.len() != p {
        return Err(EngineError::Invalid {
            ctx: "one initial state per processor required",
        });
    }
    let mut eng = Engine::new(machine, policy);
    let mut states = states;
    let mut inboxes: Vec<Vec<Message>> = (0..p).map(|_| Vec::new()).collect();

    for step in program {
        let mut outgoing: Vec<Message> = Vec::new();
        for proc in 0..p {
            let mut outbox = Outbox {
                from: proc,
                p,
                msgs: Vec::new(),
            };
            let inbox = Inbox {
                msgs: &inboxes[proc],
            };
            let mut charger = eng.charger(proc);
            step(proc, &mut states[proc], &inbox, &mut outbox, &mut charger)?;
            outgoing.extend(outbox.msgs);
        }
        // Deliver: inboxes for the next superstep, ordered by sender then
        // submission order for determinism.
        eng.exchange_counts(outgoing.iter().map(|m| (m.from, m.to, m.words())))?;
        let mut next: Vec<Vec<Message>> = (0..p).map(|_| Vec::new()).collect();
        let mut ordered = outgoing;
        ordered.sort_by_key(|m| m.from);
        for m in ordered {
            next[m.to].push(m);
        }
        inboxes = next;
    }
    Ok((states, eng.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(p: usize) -> MachineParams {
        MachineParams::new(p, 1 << 20, 1 << 10, 1.0, 10.0, 2.0, 1000.0).unwrap()
    }

    #[test]
    fn empty_program_is_free() {
        let (_, ledger) =
            run_program::<u8>(machine(4), MemoryPolicy::Warn, vec![0; 4], &[]).unwrap();
        assert_eq!(ledger.totals.f, 0);
        assert_eq!(ledger.totals.w, 0);
        assert_eq!(ledger.totals.q, 0);
        assert_eq!(ledger.totals.s, 0);
    }

    #[test]
    fn neighbor_exchange_program() {
        // Superstep 1: everyone sends 10 words around a ring. Superstep 2:
        // everyone sums what it received.
        let program: Vec<Box<LocalStep<f64>>> = vec![
            Box::new(|proc, _state, _inbox, outbox, _ch| {
                outbox.send((proc + 1) % 4, vec![proc as f64; 10])
            }),
            Box::new(|_proc, state, inbox, _outbox, ch| {
                *state = inbox.messages().iter().flat_map(|m| &m.payload).sum();
                ch.charge(10, 0);
                Ok(())
            }),
        ];
        let (states, ledger) =
            run_program(machine(4), MemoryPolicy::Warn, vec![0.0; 4], &program).unwrap();
        assert_eq!(ledger.totals.s, 2);
        // Step 1 W: every processor sends 10 and receives 10.
        assert_eq!(ledger.steps[0].w.iter().max(), Some(&20));
        assert_eq!(states[1], 0.0 * 10.0);
        assert_eq!(states[0], 3.0 * 10.0);
    }

    #[test]
    fn misaddressed_message_errors() {
        let program: Vec<Box<LocalStep<()>>> = vec![Box::new(|proc, _, _, outbox, _| {
            if proc == 0 {
                outbox.send(9, vec![1.0])
            } else {
                Ok(())
            }
        })];
        let err =
            run_program(machine(2), MemoryPolicy::Warn, vec![(), ()], &program).unwrap_err();
        assert!(matches!(err, EngineError::AddressOutOfRange { to: 9, .. }));
    }

    #[test]
    fn two_runs_are_identical() {
        let program: Vec<Box<LocalStep<f64>>> = vec![
            Box::new(|proc, state, _, outbox, ch| {
                *state += (proc * proc) as f64;
                ch.charge(3, 1);
                outbox.send(0, vec![*state])
            }),
            Box::new(|_, state, inbox, _, _| {
                *state += inbox.total_words() as f64;
                Ok(())
            }),
        ];
        let a = run_program(machine(3), MemoryPolicy::Warn, vec![0.0; 3], &program).unwrap();
        let b = run_program(machine(3), MemoryPolicy::Warn, vec![0.0; 3], &program).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
