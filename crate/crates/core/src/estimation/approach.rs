/// Which signals and knowledge are at hand for closed-loop identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ApproachFlags {
    pub have_control_signal: bool,
    pub have_response: bool,
    pub have_reference: bool,
    pub know_controller: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    Direct,
    Indirect,
    JointIO,
}

/// First matching row in priority order direct, indirect, joint input-output.
pub fn select_approach(f: ApproachFlags) -> Option<Approach> {
    if f.have_control_signal && f.have_response {
        Some(Approach::Direct)
    } else if f.have_response && f.have_reference && f.know_controller {
        Some(Approach::Indirect)
    } else if f.have_control_signal && f.have_response && f.have_reference {
        Some(Approach::JointIO)
    } else {
        None
    }
}
