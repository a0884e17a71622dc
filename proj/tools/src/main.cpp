#include <iostream>

#include "rwpatch_cli/cli.hpp"

int main(int argc, char** argv) {
  rwpatch::cli::tune_allocator();
  return rwpatch::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
