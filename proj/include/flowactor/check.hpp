#pragma once

#include <stdexcept>
#include <string>

namespace flowactor {

// Broken internal invariant. Unlike assert(), these stay active in optimized
// builds: the test suites lean on them.
struct InvariantError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace flowactor

#define FLOWACTOR_CHECK(cond, msg)                                                       \
    do {                                                                                 \
        if (!(cond))                                                                     \
            throw ::flowactor::InvariantError(std::string(msg) + " (" __FILE__ ":" +    \
                                              std::to_string(__LINE__) + ")");           \
    } while (0)
