#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace apdlh {

// Root of every error thrown by the library. Each subclass names one
// contract breach so callers can catch exactly what they handle.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define APDLH_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                    \
    public:                                                        \
        explicit Name(const std::string& what) : Error(what) {}    \
    }

APDLH_DEFINE_ERROR(MalformedCorpus);
APDLH_DEFINE_ERROR(NotAFailure);
APDLH_DEFINE_ERROR(InvalidScript);
APDLH_DEFINE_ERROR(GatewayUnavailable);
APDLH_DEFINE_ERROR(AuthMissing);
APDLH_DEFINE_ERROR(ReplayMiss);
APDLH_DEFINE_ERROR(UnknownTool);
APDLH_DEFINE_ERROR(SchemaViolation);
APDLH_DEFINE_ERROR(BudgetInfeasible);
APDLH_DEFINE_ERROR(CorruptCheckpoint);
APDLH_DEFINE_ERROR(InternalInvariantViolation);
APDLH_DEFINE_ERROR(IncompleteTrace);
APDLH_DEFINE_ERROR(EmptySample);
APDLH_DEFINE_ERROR(SampleTooLargeForExact);
APDLH_DEFINE_ERROR(DegenerateMarginals);
APDLH_DEFINE_ERROR(UnevenRepeats);
APDLH_DEFINE_ERROR(ConfigError);
APDLH_DEFINE_ERROR(RunInterrupted);

#undef APDLH_DEFINE_ERROR

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace apdlh
