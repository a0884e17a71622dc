#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rwpatch::cli {

/// Runs one `rwpatch` invocation in-process. args[0] is the program name.
/// Returns the process exit code: 0 success, 1 internal or numeric failure,
/// 2 usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Keeps large tensor buffers on the heap instead of fresh mmap()s, which
/// otherwise page-fault on every forward pass.
void tune_allocator();

}  // namespace rwpatch::cli
