#pragma once

#include "apdlh/fault.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace apdlh {

struct ApdlCommand {
    std::string name;               // uppercase, matches ^[A-Z][A-Z0-9]*$
    std::vector<std::string> args;  // scalar tokens, verbatim apart from trimming
    std::size_t line_no = 0;        // 1-based source line

    // Command equality ignores line numbers.
    bool same_command(const ApdlCommand& other) const {
        return name == other.name && args == other.args;
    }
    // Case-insensitive argument test; false when the index is out of range.
    bool arg_is(std::size_t index, std::string_view value) const;
};

struct ApdlScript {
    std::vector<ApdlCommand> commands;
    std::string source_text;

    // Builds a script from commands, renumbering lines and re-rendering the
    // source text.
    static ApdlScript from_commands(std::vector<ApdlCommand> commands);

    bool empty() const noexcept { return commands.empty(); }
    bool command_equal(const ApdlScript& other) const;
    std::size_t count(std::string_view name) const;
};

// One command per non-comment, non-blank line. '!' starts a comment (whole
// line or trailing). Throws ParseError with the offending line number.
ApdlScript parse_script(std::string_view text);

// "NAME,arg,arg" per line, newline-terminated; empty script renders as "".
std::string render_script(const ApdlScript& script);

ApdlCommand make_command(std::string name, std::vector<std::string> args = {});

// Integral values render without a decimal point ("4"), others in shortest
// round-trip form ("2.5").
std::string format_number(double v);
std::optional<double> parse_number(std::string_view token);

enum class ExitStatus { Success, Failure };

struct SolverLog {
    std::vector<std::string> lines;
    ExitStatus exit_status = ExitStatus::Success;

    std::string text() const;
    bool operator==(const SolverLog&) const = default;
};

inline constexpr std::string_view kErrorSentinel = "*** ERROR *** ";
inline constexpr std::string_view kSolutionComplete = "SOLUTION COMPLETE";
inline constexpr std::string_view kImageWritten = "IMAGE WRITTEN: ";

struct FailureSignature {
    FaultClass fault_class = FaultClass::Unknown;
    std::string message;                   // the full error line
    std::optional<std::size_t> command_ref;  // script line the error points at

    bool operator==(const FailureSignature&) const = default;
};

// Grammar class of a single log line; nullopt for lines that are not error
// lines, Unknown for error lines no class phrase matches.
std::optional<FaultClass> classify_error_line(std::string_view line);

// Every class pattern that matches `line` (used to check mutual exclusivity).
std::vector<FaultClass> matching_patterns(std::string_view line);

// Signature of the first error line. Throws NotAFailure on a success log.
FailureSignature extract_failure(const SolverLog& log);

}  // namespace apdlh
