#pragma once

#include "rwpatch/error.hpp"

namespace rwpatch {

#ifdef RWPATCH_CHECK_INVARIANTS
inline constexpr bool kCheckInvariants = true;
#else
inline constexpr bool kCheckInvariants = false;
#endif

/// Throws InvariantError when `ok` is false in builds with invariant checks.
inline void check_invariant(bool ok, const char* what) {
  if constexpr (kCheckInvariants) {
    if (!ok) throw InvariantError(std::string("invariant violated: ") + what);
  }
}

}  // namespace rwpatch
