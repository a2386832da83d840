//! Deterministic discrete-event core.
//!
//! The engine owns simulated time, the registered resources, the live
//! activities and a queue of timed events. Rates are recomputed from scratch
//! with [`solve_maxmin`] whenever the set of live activities changed since
//! the previous step. Callers drive it with [`Engine::advance`] and react to
//! the returned [`Step`] by spawning activities or scheduling events.

mod queue;
mod solver;

pub use queue::{EventKind, EventQueue};
pub use solver::{consumption, solve_maxmin, Demand};

use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceId(pub usize);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "resource#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivityId(pub u64);

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "activity#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResourceKind {
    Cpu,
    Link,
    DiskRead,
    DiskWrite,
}

/// A shared hardware capacity: FLOP/s for CPU pools, bytes/s otherwise.
#[derive(Clone, Debug)]
pub struct Resource {
    pub id: ResourceId,
    pub name: String,
    pub capacity: f64,
    pub kind: ResourceKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivityKind {
    Compute,
    Transfer,
    DiskIo,
}

/// Everything needed to spawn an activity.
#[derive(Clone, Debug)]
pub struct ActivitySpec {
    pub kind: ActivityKind,
    pub footprint: Vec<(ResourceId, f64)>,
    /// FLOP or bytes.
    pub work: f64,
    pub scaling_factor: f64,
    pub bound: Option<f64>,
    /// Delay before the activity starts consuming resources.
    pub latency: f64,
}

impl ActivitySpec {
    pub fn new(kind: ActivityKind, footprint: Vec<(ResourceId, f64)>, work: f64) -> Self {
        Self { kind, footprint, work, scaling_factor: 1.0, bound: None, latency: 0.0 }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn with_latency(mut self, latency: f64) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_scaling(mut self, scaling_factor: f64) -> Self {
        self.scaling_factor = scaling_factor;
        self
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("activity {0} has an empty footprint")]
    EmptyFootprint(usize),
    #[error("unknown {0}")]
    UnknownResource(ResourceId),
    #[error("invalid activity: {0}")]
    InvalidActivity(String),
    #[error("resource '{name}' must have positive capacity, got {capacity}")]
    InvalidCapacity { name: String, capacity: f64 },
    #[error("event scheduled at t={at} before the current clock t={clock}")]
    EventInPast { at: f64, clock: f64 },
    #[error("deadlock at t={clock}: activities {starved:?} have zero rate and no event is pending")]
    Deadlock { clock: f64, starved: Vec<ActivityId> },
}

#[derive(Debug)]
struct Activity<T> {
    id: ActivityId,
    kind: ActivityKind,
    footprint: Vec<(ResourceId, f64)>,
    work: f64,
    remaining: f64,
    progressed: f64,
    scaling_factor: f64,
    bound: Option<f64>,
    rate: f64,
    spawned_at: f64,
    owner: T,
}

/// A finished activity, handed back to the caller.
#[derive(Clone, Debug)]
pub struct Completion<T> {
    pub id: ActivityId,
    pub kind: ActivityKind,
    pub owner: T,
    pub work: f64,
    /// Σ rate·Δt accumulated over the activity's lifetime.
    pub progressed: f64,
    pub spawned_at: f64,
    pub finished_at: f64,
}

/// Outcome of one [`Engine::advance`] call.
#[derive(Debug)]
pub struct Step<T> {
    pub clock: f64,
    pub completed: Vec<Completion<T>>,
    pub fired: Vec<(EventKind, T)>,
}

enum Pending<T> {
    User(T),
    Activate(ActivityId),
}

/// Counters describing the work done by an engine.
#[derive(Clone, Copy, Debug, Default)]
pub struct EngineStats {
    pub solves: u64,
    pub steps: u64,
    pub activities_spawned: u64,
    pub peak_queue_len: usize,
    pub peak_live_activities: usize,
    /// Largest observed `Σ consumption / capacity − 1` over all solves.
    pub max_overload: f64,
}

pub struct Engine<T> {
    clock: f64,
    resources: Vec<Resource>,
    active: Vec<Activity<T>>,
    latent: Vec<Activity<T>>,
    done_now: Vec<Activity<T>>,
    queue: EventQueue<Pending<T>>,
    next_id: u64,
    dirty: bool,
    stats: EngineStats,
}

impl<T> Default for Engine<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Engine<T> {
    pub fn new() -> Self {
        Self {
            clock: 0.0,
            resources: Vec::new(),
            active: Vec::new(),
            latent: Vec::new(),
            done_now: Vec::new(),
            queue: EventQueue::default(),
            next_id: 0,
            dirty: false,
            stats: EngineStats { max_overload: f64::NEG_INFINITY, ..Default::default() },
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats { peak_queue_len: self.queue.peak_len(), ..self.stats }
    }

    pub fn add_resource(
        &mut self,
        name: impl Into<String>,
        kind: ResourceKind,
        capacity: f64,
    ) -> Result<ResourceId, EngineError> {
        let name = name.into();
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(EngineError::InvalidCapacity { name, capacity });
        }
        let id = ResourceId(self.resources.len());
        self.resources.push(Resource { id, name, capacity, kind });
        Ok(id)
    }

    /// Number of activities that have been spawned but not yet completed.
    pub fn live_activities(&self) -> usize {
        self.active.len() + self.latent.len() + self.done_now.len()
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.live_activities() == 0 && self.queue.is_empty()
    }

    /// Current rate of an active activity (after the most recent solve).
    pub fn rate(&self, id: ActivityId) -> Option<f64> {
        self.active.iter().find(|a| a.id == id).map(|a| a.rate)
    }

    pub fn remaining_work(&self, id: ActivityId) -> Option<f64> {
        self.active
            .iter()
            .chain(&self.latent)
            .chain(&self.done_now)
            .find(|a| a.id == id)
            .map(|a| a.remaining)
    }

    pub fn footprint(&self, id: ActivityId) -> Option<&[(ResourceId, f64)]> {
        self.active
            .iter()
            .chain(&self.latent)
            .chain(&self.done_now)
            .find(|a| a.id == id)
            .map(|a| a.footprint.as_slice())
    }

    pub fn spawn(&mut self, spec: ActivitySpec, owner: T) -> Result<ActivityId, EngineError> {
        if spec.footprint.is_empty() {
            return Err(EngineError::EmptyFootprint(self.next_id as usize));
        }
        for &(rid, w) in &spec.footprint {
            if rid.0 >= self.resources.len() {
                return Err(EngineError::UnknownResource(rid));
            }
            if !(w > 0.0) {
                return Err(EngineError::InvalidActivity(format!("footprint weight {w} on {rid}")));
            }
        }
        if !(spec.work >= 0.0) || !spec.work.is_finite() {
            return Err(EngineError::InvalidActivity(format!("work {}", spec.work)));
        }
        if !(spec.scaling_factor > 0.0) {
            return Err(EngineError::InvalidActivity(format!("scaling factor {}", spec.scaling_factor)));
        }
        if matches!(spec.bound, Some(b) if !(b > 0.0)) {
            return Err(EngineError::InvalidActivity(format!("bound {:?}", spec.bound)));
        }
        if !(spec.latency >= 0.0) {
            return Err(EngineError::InvalidActivity(format!("latency {}", spec.latency)));
        }
        let id = ActivityId(self.next_id);
        self.next_id += 1;
        self.stats.activities_spawned += 1;
        let activity = Activity {
            id,
            kind: spec.kind,
            footprint: spec.footprint,
            work: spec.work,
            remaining: spec.work,
            progressed: 0.0,
            scaling_factor: spec.scaling_factor,
            bound: spec.bound,
            rate: 0.0,
            spawned_at: self.clock,
            owner,
        };
        if spec.latency > 0.0 {
            self.latent.push(activity);
            self.queue.push(self.clock + spec.latency, EventKind::Timer, Pending::Activate(id));
        } else {
            self.place(activity);
        }
        Ok(id)
    }

    fn place(&mut self, activity: Activity<T>) {
        if activity.work == 0.0 {
            self.done_now.push(activity);
        } else {
            self.active.push(activity);
            self.dirty = true;
            self.stats.peak_live_activities = self.stats.peak_live_activities.max(self.active.len());
        }
    }

    pub fn schedule(&mut self, at: f64, kind: EventKind, payload: T) -> Result<(), EngineError> {
        if !(at >= self.clock) {
            return Err(EngineError::EventInPast { at, clock: self.clock });
        }
        self.queue.push(at, kind, Pending::User(payload));
        Ok(())
    }

    fn solve(&mut self) -> Result<(), EngineError> {
        self.stats.solves += 1;
        let demands: Vec<Demand<'_>> = self
            .active
            .iter()
            .map(|a| Demand { footprint: &a.footprint, scaling_factor: a.scaling_factor, bound: a.bound })
            .collect();
        let rates = solve_maxmin(&self.resources, &demands)?;
        let used = consumption(self.resources.len(), &demands, &rates);
        for (r, u) in self.resources.iter().zip(&used) {
            if *u > 0.0 {
                self.stats.max_overload = self.stats.max_overload.max(u / r.capacity - 1.0);
            }
        }
        for (a, rate) in self.active.iter_mut().zip(rates) {
            a.rate = rate;
        }
        self.dirty = false;
        Ok(())
    }

    /// Re-solves rates now if the live set changed since the last solve.
    pub fn refresh_rates(&mut self) -> Result<(), EngineError> {
        if self.dirty {
            self.solve()?;
        }
        Ok(())
    }

    /// Moves the clock to the next completion or event and reports what happened.
    ///
    /// Returns `Ok(None)` once there is nothing left to simulate.
    pub fn advance(&mut self) -> Result<Option<Step<T>>, EngineError> {
        if !self.done_now.is_empty() {
            self.stats.steps += 1;
            let clock = self.clock;
            let completed = self.done_now.drain(..).map(|a| finish(a, clock)).collect();
            return Ok(Some(Step { clock, completed, fired: Vec::new() }));
        }
        if self.dirty {
            self.solve()?;
        }

        let next_completion = self
            .active
            .iter()
            .filter(|a| a.rate > 0.0)
            .map(|a| self.clock + a.remaining / a.rate)
            .min_by(f64::total_cmp);
        let next_event = self.queue.peek_time();
        let t = match (next_completion, next_event) {
            (None, None) => {
                if self.active.is_empty() {
                    return Ok(None);
                }
                return Err(EngineError::Deadlock {
                    clock: self.clock,
                    starved: self.active.iter().map(|a| a.id).collect(),
                });
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (Some(a), Some(b)) => a.min(b),
        }
        .max(self.clock);

        self.stats.steps += 1;
        let dt = t - self.clock;
        let mut completed = Vec::new();
        let mut kept = Vec::with_capacity(self.active.len());
        for mut a in self.active.drain(..) {
            let done = a.rate > 0.0 && {
                let finish_at = self.clock + a.remaining / a.rate;
                if finish_at <= t {
                    true
                } else {
                    let step = a.rate * dt;
                    a.progressed += step;
                    a.remaining -= step;
                    a.remaining <= a.work * 1e-12
                }
            };
            if done {
                a.progressed += a.remaining;
                a.remaining = 0.0;
                completed.push(finish(a, t));
            } else {
                kept.push(a);
            }
        }
        self.active = kept;
        self.clock = t;
        if !completed.is_empty() {
            self.dirty = true;
        }

        let mut fired = Vec::new();
        while let Some((kind, pending)) = self.queue.pop_at(t) {
            match pending {
                Pending::User(p) => fired.push((kind, p)),
                Pending::Activate(id) => {
                    if let Some(pos) = self.latent.iter().position(|a| a.id == id) {
                        let a = self.latent.remove(pos);
                        if a.work == 0.0 {
                            completed.push(finish(a, t));
                        } else {
                            self.place(a);
                        }
                    }
                }
            }
        }
        Ok(Some(Step { clock: t, completed, fired }))
    }

    /// Advances until idle, handing every step to `handler`.
    pub fn run_until_idle<F>(&mut self, mut handler: F) -> Result<f64, EngineError>
    where
        F: FnMut(&mut Self, Step<T>),
    {
        while let Some(step) = self.advance()? {
            handler(self, step);
        }
        Ok(self.clock)
    }
}

fn finish<T>(a: Activity<T>, at: f64) -> Completion<T> {
    Completion {
        id: a.id,
        kind: a.kind,
        owner: a.owner,
        work: a.work,
        progressed: if a.work == 0.0 { 0.0 } else { a.progressed },
        spawned_at: a.spawned_at,
        finished_at: at,
    }
}
