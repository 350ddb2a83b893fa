use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Ping = 0x00,
    Open = 0x01,
    Close = 0x02,
    Freeze = 0x03,
    Unfreeze = 0x04,
    Get = 0x05,
    Read = 0x06,
    Write = 0x07,
    Set = 0x08,
    Execute = 0x09,
    SubmitAsync = 0x0A,
    PollCompletion = 0x0B,
    DelayedEnqueue = 0x0C,
    DelayedFlush = 0x0D,
    TriggerRegister = 0x0E,
    TriggerUnregister = 0x0F,
    Metrics = 0x10,
    Append = 0x11,
    CreateContainer = 0x12,
    Delete = 0x13,
    CompletionNotify = 0x14,
}

impl MsgType {
    pub const ALL: [MsgType; 21] = [
        MsgType::Ping,
        MsgType::Open,
        MsgType::Close,
        MsgType::Freeze,
        MsgType::Unfreeze,
        MsgType::Get,
        MsgType::Read,
        MsgType::Write,
        MsgType::Set,
        MsgType::Execute,
        MsgType::SubmitAsync,
        MsgType::PollCompletion,
        MsgType::DelayedEnqueue,
        MsgType::DelayedFlush,
        MsgType::TriggerRegister,
        MsgType::TriggerUnregister,
        MsgType::Metrics,
        MsgType::Append,
        MsgType::CreateContainer,
        MsgType::Delete,
        MsgType::CompletionNotify,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    /// Message types that carry a device request (a verb that gets a seq).
    pub fn is_verb(self) -> bool {
        matches!(
            self,
            MsgType::Freeze
                | MsgType::Unfreeze
                | MsgType::Get
                | MsgType::Read
                | MsgType::Write
                | MsgType::Set
                | MsgType::Execute
                | MsgType::Append
                | MsgType::Delete
        )
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
