#pragma once

#include <stdexcept>
#include <string>

namespace saplda {

// Every library failure derives from Error so callers (CLI, service) can map
// them to exit codes / HTTP statuses in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SAPLDA_DEFINE_ERROR(Name)                                        \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

SAPLDA_DEFINE_ERROR(EmptyDocument);
SAPLDA_DEFINE_ERROR(InvariantViolation);
SAPLDA_DEFINE_ERROR(InvalidConfig);
SAPLDA_DEFINE_ERROR(ShapeMismatch);
SAPLDA_DEFINE_ERROR(DegenerateInput);
SAPLDA_DEFINE_ERROR(DivergenceDetected);
SAPLDA_DEFINE_ERROR(PerplexityTooLarge);
SAPLDA_DEFINE_ERROR(MismatchedRunSet);
SAPLDA_DEFINE_ERROR(MissingLabels);
SAPLDA_DEFINE_ERROR(ParseError);

#undef SAPLDA_DEFINE_ERROR

}  // namespace saplda
