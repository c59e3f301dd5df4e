//! R / PR / DI register banks.

use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::pose::JointPose;

pub const R_COUNT: u16 = 200;
pub const PR_COUNT: u16 = 100;
pub const DI_COUNT: u16 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bank {
    R,
    Pr,
    Di,
}

impl Bank {
    pub fn len(self) -> u16 {
        match self {
            Bank::R => R_COUNT,
            Bank::Pr => PR_COUNT,
            Bank::Di => DI_COUNT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{bank:?}[{index}] is outside 1..={max}", max = bank.len())]
pub struct BadIndex {
    pub bank: Bank,
    pub index: u16,
}

fn slot(bank: Bank, index: u16) -> Result<usize, BadIndex> {
    if index == 0 || index > bank.len() {
        return Err(BadIndex { bank, index });
    }
    Ok(index as usize - 1)
}

/// Register banks, 1-based. Every index in range is always readable;
/// unwritten registers hold zero, the zero pose, or `false`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterFile {
    r: Vec<i32>,
    pr: Vec<JointPose>,
    di: Vec<bool>,
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self {
            r: vec![0; R_COUNT as usize],
            pr: vec![JointPose::ZERO; PR_COUNT as usize],
            di: vec![false; DI_COUNT as usize],
        }
    }
}

impl RegisterFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn r(&self, index: u16) -> Result<i32, BadIndex> {
        Ok(self.r[slot(Bank::R, index)?])
    }

    pub fn set_r(&mut self, index: u16, value: i32) -> Result<(), BadIndex> {
        self.r[slot(Bank::R, index)?] = value;
        Ok(())
    }

    pub fn pr(&self, index: u16) -> Result<JointPose, BadIndex> {
        Ok(self.pr[slot(Bank::Pr, index)?])
    }

    pub fn set_pr(&mut self, index: u16, pose: JointPose) -> Result<(), BadIndex> {
        self.pr[slot(Bank::Pr, index)?] = pose;
        Ok(())
    }

    pub fn di(&self, index: u16) -> Result<bool, BadIndex> {
        Ok(self.di[slot(Bank::Di, index)?])
    }

    pub fn set_di(&mut self, index: u16, value: bool) -> Result<(), BadIndex> {
        self.di[slot(Bank::Di, index)?] = value;
        Ok(())
    }
}

/// Register file shared between the protocol server and the motion loop.
/// Each access locks once, so single register reads and writes never tear.
#[derive(Debug, Clone, Default)]
pub struct SharedRegisters(Arc<Mutex<RegisterFile>>);

impl SharedRegisters {
    pub fn new(file: RegisterFile) -> Self {
        Self(Arc::new(Mutex::new(file)))
    }

    pub fn lock(&self) -> MutexGuard<'_, RegisterFile> {
        // a panicking holder cannot leave a register half-written
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> RegisterFile {
        self.lock().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banks_are_total_and_zeroed() {
        let regs = RegisterFile::new();
        for i in 1..=R_COUNT {
            assert_eq!(regs.r(i), Ok(0));
            assert_eq!(regs.di(i), Ok(false));
        }
        for i in 1..=PR_COUNT {
            assert_eq!(regs.pr(i), Ok(JointPose::ZERO));
        }
    }

    #[test]
    fn index_bounds() {
        let mut regs = RegisterFile::new();
        assert_eq!(regs.r(0), Err(BadIndex { bank: Bank::R, index: 0 }));
        assert!(regs.set_r(201, 1).is_err());
        assert!(regs.set_r(200, 1).is_ok());
        assert!(regs.pr(101).is_err());
        assert!(regs.set_pr(100, JointPose::ZERO).is_ok());
        assert!(regs.set_di(0, true).is_err());
    }

    #[test]
    fn write_then_read() {
        let shared = SharedRegisters::default();
        let pose = JointPose::new([1.0, -2.0, 3.5, 0.0, 90.0, -180.0]).unwrap();
        shared.lock().set_pr(1, pose).unwrap();
        shared.lock().set_r(1, -7).unwrap();
        let snap = shared.snapshot();
        assert_eq!(snap.pr(1), Ok(pose));
        assert_eq!(snap.r(1), Ok(-7));
    }
}
