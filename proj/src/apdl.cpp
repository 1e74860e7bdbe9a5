#include "apdlh/apdl.hpp"

#include "apdlh/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>

namespace apdlh {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::toupper(static_cast<unsigned char>(x)) == std::toupper(static_cast<unsigned char>(y));
           });
}

bool valid_name(std::string_view name) {
    if (name.empty() || !std::isalpha(static_cast<unsigned char>(name.front()))) return false;
    return std::all_of(name.begin(), name.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
}

struct Pattern {
    FaultClass fault_class;
    std::regex re;
};

const std::array<Pattern, 5>& patterns() {
    static const std::array<Pattern, 5> kPatterns = {{
        {FaultClass::MeshFail, std::regex(R"(^\*\*\* ERROR \*\*\* MESH FAILURE\b)")},
        {FaultClass::ConvFail, std::regex(R"(^\*\*\* ERROR \*\*\* SOLUTION NOT CONVERGED\b)")},
        {FaultClass::ElemTypeFail, std::regex(R"(^\*\*\* ERROR \*\*\* ELEMENT TYPE \S+ IS INVALID FOR\b)")},
        {FaultClass::MissingResults, std::regex(R"(^\*\*\* ERROR \*\*\* NO RESULTS FOR LOAD STEP\b)")},
        {FaultClass::HardGeom, std::regex(R"(^\*\*\* ERROR \*\*\* GEOMETRY DECOMPOSITION FAILED\b)")},
    }};
    return kPatterns;
}

}  // namespace

bool ApdlCommand::arg_is(std::size_t index, std::string_view value) const {
    return index < args.size() && iequals(args[index], value);
}

ApdlScript ApdlScript::from_commands(std::vector<ApdlCommand> commands) {
    ApdlScript s;
    s.commands = std::move(commands);
    for (std::size_t i = 0; i < s.commands.size(); ++i) s.commands[i].line_no = i + 1;
    s.source_text = render_script(s);
    return s;
}

bool ApdlScript::command_equal(const ApdlScript& other) const {
    return std::equal(commands.begin(), commands.end(), other.commands.begin(), other.commands.end(),
                      [](const ApdlCommand& a, const ApdlCommand& b) { return a.same_command(b); });
}

std::size_t ApdlScript::count(std::string_view name) const {
    return static_cast<std::size_t>(
        std::count_if(commands.begin(), commands.end(), [&](const ApdlCommand& c) { return c.name == name; }));
}

ApdlScript parse_script(std::string_view text) {
    ApdlScript script;
    script.source_text = std::string(text);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        ++line_no;
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

        if (const auto bang = raw.find('!'); bang != std::string_view::npos) raw = raw.substr(0, bang);
        const auto line = trim(raw);
        if (line.empty()) continue;

        ApdlCommand cmd;
        cmd.line_no = line_no;
        const auto comma = line.find(',');
        const auto name = trim(line.substr(0, comma));
        if (!valid_name(name)) {
            throw ParseError(line_no, "expected COMMAND[,args], got '" + std::string(line) + "'");
        }
        cmd.name.reserve(name.size());
        for (char c : name) cmd.name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (comma != std::string_view::npos) {
            auto rest = line.substr(comma + 1);
            while (true) {
                const auto next = rest.find(',');
                cmd.args.emplace_back(trim(rest.substr(0, next)));
                if (next == std::string_view::npos) break;
                rest = rest.substr(next + 1);
            }
        }
        script.commands.push_back(std::move(cmd));
    }
    return script;
}

std::string render_script(const ApdlScript& script) {
    std::string out;
    for (const auto& cmd : script.commands) {
        out += cmd.name;
        for (const auto& a : cmd.args) {
            out += ',';
            out += a;
        }
        out += '\n';
    }
    return out;
}

ApdlCommand make_command(std::string name, std::vector<std::string> args) {
    ApdlCommand c;
    c.name = std::move(name);
    c.args = std::move(args);
    return c;
}

std::string format_number(double v) {
    if (std::isfinite(v) && std::abs(v) < 1e15 && v == std::floor(v)) {
        return std::to_string(static_cast<long long>(v));
    }
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::optional<double> parse_number(std::string_view token) {
    token = trim(token);
    if (token.empty()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
    return v;
}

std::string SolverLog::text() const {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

std::optional<FaultClass> classify_error_line(std::string_view line) {
    if (line.substr(0, kErrorSentinel.size()) != kErrorSentinel) return std::nullopt;
    const std::string s(line);
    for (const auto& p : patterns()) {
        if (std::regex_search(s, p.re)) return p.fault_class;
    }
    return FaultClass::Unknown;
}

std::vector<FaultClass> matching_patterns(std::string_view line) {
    std::vector<FaultClass> out;
    const std::string s(line);
    for (const auto& p : patterns()) {
        if (std::regex_search(s, p.re)) out.push_back(p.fault_class);
    }
    return out;
}

FailureSignature extract_failure(const SolverLog& log) {
    if (log.exit_status == ExitStatus::Success) {
        throw NotAFailure("extract_failure called on a successful solver log");
    }
    static const std::regex kLineRef(R"(AT LINE (\d+))");
    for (const auto& line : log.lines) {
        auto cls = classify_error_line(line);
        if (!cls) continue;
        FailureSignature sig;
        sig.fault_class = *cls;
        sig.message = line;
        std::smatch m;
        if (std::regex_search(line, m, kLineRef)) sig.command_ref = std::stoul(m[1].str());
        return sig;
    }
    // A failure log without an error line still classifies, as Unknown.
    FailureSignature sig;
    sig.message = log.lines.empty() ? std::string() : log.lines.back();
    return sig;
}

}  // namespace apdlh
