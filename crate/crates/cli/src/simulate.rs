//! Drives a synthetic population against a service.

use futures::stream::{self, StreamExt, TryStreamExt};
use pausepoint_client::{Artifacts, Client};
use pausepoint_core::api::SubmitMetadata;
use pausepoint_core::{ExerciseId, MediaType, ResponseId, Role, UserId};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::sim::{plan_population, SimProfile, SimTarget, StudentPlan};

/// What one simulated student ended up submitting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulated {
    pub index: usize,
    pub student_id: UserId,
    pub student_name: String,
    pub response_id: ResponseId,
    pub duration_ms: u64,
}

/// The generator target for an exercise, read from its recording descriptor.
pub async fn target(client: &Client, exercise: ExerciseId) -> Result<SimTarget> {
    let descriptor = client.preview(exercise).await?;
    SimTarget::from_descriptor(&descriptor)
        .ok_or_else(|| CliError::new("internal", format!("exercise {exercise} enables no capture device")))
}

async fn run_student(teacher: &Client, exercise: ExerciseId, plan: StudentPlan) -> Result<Simulated> {
    let enrolled = teacher.enroll(Role::Student, &plan.display_name).await?;
    let student = teacher.as_user(enrolled.token);
    let session = student.start_session(exercise).await?.session;
    let meta = SubmitMetadata {
        session: session.session_id,
        declared_duration_ms: plan.declared_duration_ms,
        ratings: plan.ratings,
    };
    let artifacts = Artifacts {
        ink: plan.ink,
        audio: plan.audio,
        video: plan.video,
        poster: plan.poster.map(|p| (p, MediaType::Png)),
    };
    let submitted = student.submit(exercise, &meta, artifacts).await?;
    Ok(Simulated {
        index: plan.index,
        student_id: enrolled.principal.user_id,
        student_name: plan.display_name,
        response_id: submitted.response_id,
        duration_ms: submitted.duration_ms,
    })
}

/// Enroll `profile.n_students` students with `teacher` and submit one
/// generated response each, at most `parallelism` at a time. Results are in
/// student-index order.
pub async fn simulate(teacher: &Client, exercise: ExerciseId, profile: &SimProfile, parallelism: usize) -> Result<Vec<Simulated>> {
    profile
        .validate()
        .map_err(|e| CliError::new("invalid-profile", e.to_string()))?;
    let target = target(teacher, exercise).await?;
    let plans = plan_population(profile, &target);
    let mut done: Vec<Simulated> = stream::iter(plans)
        .map(|plan| run_student(teacher, exercise, plan))
        .buffer_unordered(parallelism.max(1))
        .try_collect()
        .await?;
    done.sort_by_key(|s| s.index);
    Ok(done)
}
