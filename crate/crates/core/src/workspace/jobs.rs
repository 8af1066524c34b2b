use serde::{Deserialize, Serialize};

use crate::archive_node::Tier;
use crate::query::{ExecLimits, IntoTarget};

/// Reruns may double a job's quota at most this many times (8x base).
pub const MAX_DOUBLINGS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
    QuotaExceeded,
}

impl JobState {
    pub const ALL: [JobState; 6] = [
        JobState::Queued,
        JobState::Running,
        JobState::Succeeded,
        JobState::Failed,
        JobState::Cancelled,
        JobState::QuotaExceeded,
    ];

    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Cancelled) | (Running, Succeeded) | (Running, Failed) | (Running, QuotaExceeded)
        )
    }

    pub fn is_terminal(self) -> bool {
        !matches!(self, JobState::Queued | JobState::Running)
    }

    pub fn name(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Succeeded => "succeeded",
            JobState::Failed => "failed",
            JobState::Cancelled => "cancelled",
            JobState::QuotaExceeded => "quota_exceeded",
        }
    }

    pub fn parse(s: &str) -> Option<JobState> {
        JobState::ALL.into_iter().find(|st| st.name() == s)
    }
}

impl std::fmt::Display for JobState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobQuota {
    pub elapsed_s: u64,
    pub row_cap: u64,
}

impl JobQuota {
    /// Tier base quota scaled by 2^doublings.
    pub fn for_tier(tier: Tier, doublings: u32) -> JobQuota {
        JobQuota::scaled(tier.limits(), doublings)
    }

    /// `base` scaled by 2^doublings. Quotas are whole seconds, so a
    /// fractional base rounds up.
    pub fn scaled(base: ExecLimits, doublings: u32) -> JobQuota {
        let k = 1u64 << doublings;
        let secs = base.elapsed.as_secs().saturating_add(u64::from(base.elapsed.subsec_nanos() > 0));
        JobQuota {
            elapsed_s: secs.saturating_mul(k),
            row_cap: base.row_cap.saturating_mul(k),
        }
    }

    pub fn limits(self) -> ExecLimits {
        ExecLimits { elapsed: std::time::Duration::from_secs(self.elapsed_s), row_cap: self.row_cap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: JobState,
    pub to: JobState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: u64,
    pub owner: String,
    /// Canonical text of the query.
    pub query: String,
    pub tier: Tier,
    pub quota: JobQuota,
    pub doublings_used: u32,
    pub state: JobState,
    /// Milliseconds since the Unix epoch.
    pub submitted: u64,
    pub started: Option<u64>,
    pub finished: Option<u64>,
    pub target: Option<IntoTarget>,
    pub error: Option<String>,
    pub rows: Option<u64>,
    #[serde(default)]
    pub truncated: bool,
    /// The quota-exceeded job this one reruns.
    pub rerun_of: Option<u64>,
}

impl JobRecord {
    /// Moves to `next` at time `at`, stamping started/finished.
    pub fn transition(&mut self, next: JobState, at: u64) -> Result<(), IllegalTransition> {
        if !self.state.can_become(next) {
            return Err(IllegalTransition { from: self.state, to: next });
        }
        match next {
            JobState::Running => self.started = Some(at.max(self.submitted)),
            _ => self.finished = Some(at.max(self.started.unwrap_or(self.submitted))),
        }
        self.state = next;
        Ok(())
    }

    pub fn limits(&self) -> ExecLimits {
        self.quota.limits()
    }

    /// Elapsed run time in milliseconds, once started.
    pub fn elapsed_ms(&self, now: u64) -> Option<u64> {
        self.started.map(|s| self.finished.unwrap_or(now).saturating_sub(s))
    }
}
