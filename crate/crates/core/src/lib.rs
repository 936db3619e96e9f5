//! Continuous-authentication toolkit for touchscreen behavioural biometrics.
//!
//! The crate covers the full offline pipeline: parsing raw multitouch
//! kernel-event logs into per-contact metric rows, cleaning and z-score
//! standardization, kinematic feature extraction over strokes, from-scratch
//! k-NN / random-forest / SVC classifiers with per-class scores, and the
//! evaluation layer (confusion matrices, precision/recall/F1/accuracy,
//! FAR/FRR, ROC/AUC).
//!
//! Everything here is deterministic: model fits take explicit seeds, ties are
//! broken by fixed rules, and refitting with equal inputs reproduces equal
//! models and predictions.

pub mod classifiers;
pub mod evaluation;
pub mod ingest;
pub mod kinematics;
pub mod matrix;
pub mod preprocess;
