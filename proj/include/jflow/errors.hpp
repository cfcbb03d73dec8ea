#ifndef JFLOW_ERRORS_HPP
#define JFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace jflow {

enum class ErrorKind {
    InvalidArgument,
    Unbounded,
    EmptyInterior,
    NotDelzant,
    NonPrimitiveNormal,
    NormalMismatch,
    ParseError,
    BoundaryEvaluation,
    NoVertexChart,
    NewtonDivergence,
    FaceMismatch,
    NotConvex,
    StepFailure,
    InsufficientHistory,
    NoRoot,
    Unsupported,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (notably the CLI) can map it to an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace jflow

#endif
