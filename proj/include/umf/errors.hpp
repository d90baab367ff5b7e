#pragma once

#include <stdexcept>
#include <string>

namespace umf {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidState : public Error { public: using Error::Error; };
class UnknownDenoiser : public Error { public: using Error::Error; };
class NoMaskedPositions : public Error { public: using Error::Error; };
class RemoteProtocolError : public Error { public: using Error::Error; };
class InvalidRatioPair : public Error { public: using Error::Error; };
class FullyUnmasked : public Error { public: using Error::Error; };
class ScheduleError : public Error { public: using Error::Error; };
class TreeExhausted : public Error { public: using Error::Error; };
class NoUntriedActions : public Error { public: using Error::Error; };
class BudgetTooSmall : public Error { public: using Error::Error; };
class NotTerminal : public Error { public: using Error::Error; };
class CommandFailed : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class CodecMismatch : public Error { public: using Error::Error; };
class UndeclaredSpecialToken : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class MissingResults : public Error { public: using Error::Error; };

}  // namespace umf
