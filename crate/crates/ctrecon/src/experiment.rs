//! Experiment orchestration (placeholder during bring-up).
