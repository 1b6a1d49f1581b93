pub mod linalg;
pub mod fp_model;
pub mod entropy;
pub mod hypo_cert;
pub mod kinetic_cert;
pub mod simulate;
pub mod perturbed;
