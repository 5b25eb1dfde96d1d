//! Flat role-based access control over a self-contained relational store, with
//! deny-overrides resolution, column-hiding enforcement and permission-filtered
//! interface descriptors.
//!
//! The typical flow for one request: look the user up in a [`Store`] snapshot,
//! resolve their [`EffectiveMatrix`], then read or write through the [`gate`] or build
//! a [`Descriptor`]. [`UserView`] bundles those steps.

pub mod auth;
pub mod catalog;
pub mod descriptor;
pub mod gate;
pub mod policy;
pub mod schema;
mod seed;
pub mod store;
pub mod view;

pub use catalog::{CatalogMutation, ControlKind, UiCatalog};
pub use descriptor::{Descriptor, DescriptorKind};
pub use gate::GateError;
pub use policy::{
    Action, EffectiveMatrix, ObjectScope, Permission, PolicyError, Sign, UserAssignment,
};
pub use schema::{DataType, SchemaModel, Value};
pub use store::{AuthError, PolicyMutation, SharedStore, Store, StoreError};
pub use view::{EffectiveReport, UserView, WriteError};
