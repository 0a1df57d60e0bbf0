#pragma once

#include <iosfwd>

namespace synmem {

/// Fast property checks across all modules. Prints one line per check and
/// returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace synmem
