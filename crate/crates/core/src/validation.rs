use std::fmt;

/// Machine-readable violation codes.
pub trait ViolationCode: Copy + fmt::Debug + PartialEq {
    fn code(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation<C> {
    pub code: C,
    pub message: String,
}

/// Outcome of a structural check. An empty report means the checked object
/// satisfies every invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<C> {
    violations: Vec<Violation<C>>,
}

impl<C: ViolationCode> ValidationReport<C> {
    pub fn new() -> Self {
        Self {
            violations: Vec::new(),
        }
    }

    pub fn push(&mut self, code: C, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn violations(&self) -> &[Violation<C>] {
        &self.violations
    }

    pub fn contains(&self, code: C) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.code.code()).collect()
    }
}

impl<C: ViolationCode> Default for ValidationReport<C> {
    fn default() -> Self {
        Self::new()
    }
}

impl<C: ViolationCode> fmt::Display for ValidationReport<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.code.code(), v.message)?;
        }
        Ok(())
    }
}
